//! aberra - optical aberration simulation and evaluation toolkit.
//!
//! The crate models photographic lenses as physical prescriptions (curvatures,
//! conic constants, aspheric coefficients, glass dispersion), traces rays
//! through them, rasterizes per-field, per-channel point spread functions, and
//! applies the resulting spatially-varying blur to images. On the analysis
//! side it measures the damage: PSNR, SSIM, slanted-edge MTF, and the
//! composite optical-degradation scores used to stratify lenses into a
//! severity-graded benchmark. A small simulated-annealing optimizer closes the
//! loop by improving prescriptions against a ray-trace merit function.
//!
//! The main pipeline stages map onto the top-level modules:
//!
//! 1. [`lens`] - prescriptions, surface sag geometry, glass model, lens files
//! 2. [`trace`] - sequential ray tracing, spot diagrams, paraxial analysis
//! 3. [`psf`] - spectral PSF rasterization and the patch-grid kernel format
//! 4. [`degrade`] - patch-wise convolution, noise, and the optional ISP stage
//! 5. [`metrics`] - PSNR/SSIM/MTF/OIQE and the combined degradation scores
//! 6. [`benchmark`] - checkerboard evaluation, stratification, dataset builds
//! 7. [`design`] - merit function and simulated-annealing + Adam optimizer
//! 8. [`cli`] - the `aberra` command-line front end
//!
//! Every operation is deterministic under a fixed seed, independent of thread
//! count. See the `examples/` directory for one runnable program per stage.

pub mod benchmark;
pub mod cli;
pub mod degrade;
pub mod design;
pub mod lens;
pub mod metrics;
pub mod psf;
pub mod trace;
mod util;

pub use degrade::ImageBuffer;
pub use lens::LensPrescription;
pub use psf::PsfGrid;
