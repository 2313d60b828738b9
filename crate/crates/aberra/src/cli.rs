//! The `aberra` command line: one thin binary multiplexing the library's
//! pipeline stages.
//!
//! Results go to the files named by `--out`; diagnostics go to standard
//! error. Exit code 0 on success, 1 on a user error (bad flags, unreadable
//! or invalid inputs), 2 on an internal failure. Every subcommand that takes
//! a seed is byte-reproducible for a fixed seed, independent of the thread
//! count (`--threads` or the `ABERRA_THREADS` environment variable).

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::benchmark::{
    generate_dataset, manifest_from_json, manifest_to_json, stratify, BenchmarkManifest,
    CheckerTarget, DatasetOptions, EvalConfig, LensScore,
};
use crate::degrade::{
    apply_isp, degrade_image, read_image, write_png16, BayerPattern, IspConfig, NoiseConfig,
};
use crate::design::{merit, optimize, DesignVariables, MeritConfig};
use crate::lens::{parse_lens_with, serialize_lens, LensPrescription, ParseOptions};
use crate::metrics::{
    overall_performance, psnr, slanted_edge_mtf, ssim, ExternalScores, Plane, RoiBox,
};
use crate::psf::{build_grid, GridConfig, PsfGrid, SpectralResponse};
use crate::trace::{field_direction, pupil_rays};
use crate::util::{fnv1a64, mix_seed};

/// Top-level run configuration: global flags plus the subcommand.
#[derive(Debug, Parser)]
#[command(
    name = "aberra",
    version,
    about = "Lens aberration simulation, degradation synthesis, and optical quality scoring"
)]
pub struct RunConfig {
    /// Worker threads (default: available parallelism, or ABERRA_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log verbosity: off, error, warn, info, debug.
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Trace a pupil ray grid to the image plane and write the hits as CSV.
    Trace(TraceArgs),
    /// Build the per-patch RGB PSF grid for a lens.
    Psf(PsfArgs),
    /// Apply a PSF grid (plus noise / ISP) to ground-truth images.
    Degrade(DegradeArgs),
    /// Score degraded/reference image pairs.
    Metrics(MetricsArgs),
    /// Evaluate lenses end to end on the checkerboard target.
    Ode(OdeArgs),
    /// Stratify scored lenses into severity levels.
    Sample(SampleArgs),
    /// Generate the degraded dataset for a manifest.
    Dataset(DatasetArgs),
    /// Optimize a lens against the ray-trace merit function.
    Design(DesignArgs),
}

#[derive(Debug, Args)]
struct TraceArgs {
    #[arg(long)]
    lens: PathBuf,
    /// Field angle in degrees.
    #[arg(long)]
    field: f64,
    /// Wavelength in nanometers.
    #[arg(long, default_value_t = 587.6)]
    wavelength: f64,
    /// Pupil samples per axis.
    #[arg(long, default_value_t = 32)]
    pupil_samples: usize,
    #[arg(long)]
    out: PathBuf,
    /// Skip the design-grid check when loading the lens.
    #[arg(long)]
    no_spec_check: bool,
}

#[derive(Debug, Args)]
struct PsfArgs {
    #[arg(long)]
    lens: PathBuf,
    /// Patch grid as ROWSxCOLS, e.g. 8x8.
    #[arg(long, default_value = "8x8")]
    grid: String,
    /// Kernel support in pixels (odd).
    #[arg(long, default_value_t = 31)]
    kernel_px: usize,
    #[arg(long, default_value_t = 24)]
    pupil_samples: usize,
    /// Camera response CSV (wavelength_nm,r,g,b); default is built in.
    #[arg(long)]
    response: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    no_spec_check: bool,
}

#[derive(Debug, Args)]
struct DegradeArgs {
    /// Ground-truth image or directory of .png/.imgf images.
    #[arg(long)]
    gt: PathBuf,
    /// PSF grid file from the psf subcommand.
    #[arg(long)]
    psf: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Enable the ISP stage (white balance + mosaic/demosaic).
    #[arg(long)]
    isp: bool,
    /// White-balance gain range as LO,HI.
    #[arg(long, default_value = "1.0,1.0")]
    wb: String,
    #[arg(long, default_value = "RGGB")]
    bayer: String,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    /// Degraded image or directory.
    #[arg(long)]
    degraded: PathBuf,
    /// Reference image or directory (paired with degraded by sorted name).
    #[arg(long)]
    reference: PathBuf,
    /// JSON with externally computed {lpips, fid, clipiqa}, either one
    /// object for all pairs or a map keyed by image stem.
    #[arg(long)]
    external_scores: Option<PathBuf>,
    /// JSON list of edge regions [{x,y,w,h},...] for the MTF-based score.
    #[arg(long)]
    rois: Option<PathBuf>,
    /// Write the first region's MTF curve as frequency/modulation CSV.
    #[arg(long)]
    plot_data: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct OdeArgs {
    /// Lens file or directory of *.lens.json files.
    #[arg(long)]
    lens: PathBuf,
    /// Checkerboard target config JSON; defaults are built in.
    #[arg(long)]
    target: Option<PathBuf>,
    #[arg(long, default_value = "8x8")]
    grid: String,
    #[arg(long, default_value_t = 31)]
    kernel_px: usize,
    #[arg(long, default_value_t = 24)]
    pupil_samples: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    no_spec_check: bool,
}

#[derive(Debug, Args)]
struct SampleArgs {
    /// scores.json from the ode subcommand.
    #[arg(long)]
    scores: PathBuf,
    #[arg(long, default_value_t = 5)]
    levels: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DatasetArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory of ground-truth images.
    #[arg(long)]
    gt: PathBuf,
    /// Output directory for degraded images and the updated manifest.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    #[arg(long)]
    isp: bool,
    #[arg(long, default_value = "1.0,1.0")]
    wb: String,
    #[arg(long, default_value = "RGGB")]
    bayer: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "8x8")]
    grid: String,
    #[arg(long, default_value_t = 31)]
    kernel_px: usize,
    #[arg(long, default_value_t = 24)]
    pupil_samples: usize,
}

#[derive(Debug, Args)]
struct DesignArgs {
    /// Starting lens file.
    #[arg(long)]
    start: PathBuf,
    /// Design variables JSON:
    /// {"vars":[{"surface":0,"param":"curvature","lo":-0.05,"hi":0.05}]}.
    #[arg(long)]
    vars: PathBuf,
    /// Merit config JSON; missing fields take defaults.
    #[arg(long)]
    merit: Option<PathBuf>,
    /// Merit evaluation budget.
    #[arg(long)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output lens file.
    #[arg(long)]
    out: PathBuf,
    /// Optimization trace CSV (eval,merit,best_merit,phase).
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    no_spec_check: bool,
}

enum AppError {
    User(String),
    Internal(String),
}

impl AppError {
    fn user(e: impl std::fmt::Display) -> Self {
        AppError::User(e.to_string())
    }
}

type AppResult<T> = Result<T, AppError>;

/// Entry point: parses the command line, runs, and maps errors to exit codes.
pub fn run() -> i32 {
    let cfg = match RunConfig::try_parse() {
        Ok(cfg) => cfg,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    init_logging(&cfg.log_level);
    init_threads(cfg.threads);
    match dispatch(cfg.command) {
        Ok(()) => 0,
        Err(AppError::User(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(AppError::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            2
        }
    }
}

fn init_logging(level: &str) {
    let filter = match level {
        "off" | "error" | "warn" | "info" | "debug" | "trace" => level,
        _ => "warn",
    };
    let _ = env_logger::Builder::new()
        .parse_filters(filter)
        .format_timestamp(None)
        .try_init();
}

fn init_threads(flag: Option<usize>) {
    let n = flag.or_else(|| {
        std::env::var("ABERRA_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

fn dispatch(command: Command) -> AppResult<()> {
    match command {
        Command::Trace(args) => cmd_trace(args),
        Command::Psf(args) => cmd_psf(args),
        Command::Degrade(args) => cmd_degrade(args),
        Command::Metrics(args) => cmd_metrics(args),
        Command::Ode(args) => cmd_ode(args),
        Command::Sample(args) => cmd_sample(args),
        Command::Dataset(args) => cmd_dataset(args),
        Command::Design(args) => cmd_design(args),
    }
}

fn load_lens(path: &Path, no_spec_check: bool) -> AppResult<LensPrescription> {
    let bytes = std::fs::read(path)
        .map_err(|e| AppError::User(format!("cannot read lens {}: {e}", path.display())))?;
    parse_lens_with(
        &bytes,
        ParseOptions {
            check_spec_grid: !no_spec_check,
        },
    )
    .map_err(|e| AppError::User(format!("{}: {e}", path.display())))
}

fn parse_grid_shape(s: &str) -> AppResult<(usize, usize)> {
    let bad = || AppError::User(format!("bad --grid {s:?}; expected ROWSxCOLS like 8x8"));
    let parts: Vec<&str> = s.split('x').collect();
    if parts.len() != 2 {
        return Err(bad());
    }
    let rows = parts[0].parse().map_err(|_| bad())?;
    let cols = parts[1].parse().map_err(|_| bad())?;
    if rows == 0 || cols == 0 {
        return Err(bad());
    }
    Ok((rows, cols))
}

fn parse_wb(s: &str) -> AppResult<(f64, f64)> {
    let bad = || AppError::User(format!("bad --wb {s:?}; expected LO,HI like 0.8,1.2"));
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    if !(lo > 0.0 && lo <= hi) {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn load_response(path: Option<&Path>) -> AppResult<SpectralResponse> {
    match path {
        None => Ok(SpectralResponse::default_rgb()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                AppError::User(format!("cannot read response {}: {e}", p.display()))
            })?;
            SpectralResponse::from_csv(&text).map_err(AppError::user)
        }
    }
}

fn grid_config(kernel_px: usize, pupil_samples: usize, response: SpectralResponse) -> GridConfig {
    GridConfig {
        pupil_samples,
        kernel_px,
        response,
    }
}

fn write_out(path: &Path, contents: &str) -> AppResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| AppError::User(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    std::fs::write(path, contents)
        .map_err(|e| AppError::User(format!("cannot write {}: {e}", path.display())))
}

fn cmd_trace(args: TraceArgs) -> AppResult<()> {
    let lens = load_lens(&args.lens, args.no_spec_check)?;
    if args.pupil_samples < 4 {
        return Err(AppError::User("--pupil-samples must be at least 4".into()));
    }
    let rays = pupil_rays(
        &lens,
        field_direction(args.field),
        args.wavelength,
        args.pupil_samples,
    )
    .map_err(AppError::user)?;
    let mut csv = String::from("x_mm,y_mm,wavelength_nm,alive,note\n");
    for r in &rays {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            r.origin.x,
            r.origin.y,
            r.wavelength_nm,
            r.alive(),
            r.path_note().unwrap_or("")
        );
    }
    write_out(&args.out, &csv)?;
    log::info!("traced {} rays to {}", rays.len(), args.out.display());
    Ok(())
}

fn cmd_psf(args: PsfArgs) -> AppResult<()> {
    let lens = load_lens(&args.lens, args.no_spec_check)?;
    let (rows, cols) = parse_grid_shape(&args.grid)?;
    let response = load_response(args.response.as_deref())?;
    let cfg = grid_config(args.kernel_px, args.pupil_samples, response);
    let grid = build_grid(&lens, rows, cols, &cfg).map_err(AppError::user)?;
    grid.save(&args.out).map_err(AppError::user)?;
    log::info!(
        "psf grid {rows}x{cols} ({}px kernels) -> {}",
        grid.kernel_px,
        args.out.display()
    );
    Ok(())
}

fn image_files(path: &Path) -> AppResult<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|e| AppError::User(format!("cannot list {}: {e}", path.display())))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("png") | Some("imgf")
            )
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(AppError::User(format!(
            "no .png or .imgf images in {}",
            path.display()
        )));
    }
    Ok(files)
}

fn stem_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn cmd_degrade(args: DegradeArgs) -> AppResult<()> {
    let grid = PsfGrid::load(&args.psf).map_err(AppError::user)?;
    let files = image_files(&args.gt)?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| AppError::User(format!("cannot create {}: {e}", args.out.display())))?;
    let (lo, hi) = parse_wb(&args.wb)?;
    let bayer: BayerPattern = args.bayer.parse().map_err(AppError::User)?;
    for path in &files {
        let gt = read_image(path).map_err(AppError::user)?;
        let stem = stem_of(path);
        let noise_seed = mix_seed(args.seed, fnv1a64(stem.as_bytes()), 0);
        let noise = if args.noise_sigma > 0.0 {
            NoiseConfig::gaussian(args.noise_sigma, noise_seed)
        } else {
            NoiseConfig::none()
        };
        let lq = degrade_image(&gt, &grid, &noise).map_err(AppError::user)?;
        if args.isp {
            let isp = IspConfig {
                enabled: true,
                bayer_pattern: bayer,
                wb_gain_range: (lo, hi),
                seed: mix_seed(args.seed, fnv1a64(stem.as_bytes()), 1),
            };
            isp.validate().map_err(AppError::User)?;
            let (lq_isp, gt_isp) = apply_isp(&lq, &gt, &isp);
            write_png16(&lq_isp, &args.out.join(format!("{stem}.png"))).map_err(AppError::user)?;
            write_png16(&gt_isp, &args.out.join(format!("{stem}.gt.png")))
                .map_err(AppError::user)?;
        } else {
            write_png16(&lq, &args.out.join(format!("{stem}.png"))).map_err(AppError::user)?;
        }
        log::info!("degraded {stem}");
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct PairReport {
    name: String,
    psnr_db: f64,
    ssim: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    oiqe: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lpips: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fid: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    clipiqa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    overall_performance: Option<f64>,
}

#[derive(Debug, Serialize)]
struct MetricsReport {
    schema_version: u32,
    mean_psnr_db: f64,
    mean_ssim: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_oiqe: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_overall_performance: Option<f64>,
    pairs: Vec<PairReport>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ExternalScoresFile {
    Single(ExternalScores),
    PerImage(std::collections::BTreeMap<String, ExternalScores>),
}

fn cmd_metrics(args: MetricsArgs) -> AppResult<()> {
    let degraded = image_files(&args.degraded)?;
    let reference = image_files(&args.reference)?;
    if degraded.len() != reference.len() {
        return Err(AppError::User(format!(
            "{} degraded vs {} reference images",
            degraded.len(),
            reference.len()
        )));
    }
    let rois: Option<Vec<RoiBox>> = match &args.rois {
        None => None,
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| AppError::User(format!("cannot read {}: {e}", p.display())))?;
            Some(serde_json::from_str(&text).map_err(AppError::user)?)
        }
    };
    let external: Option<ExternalScoresFile> = match &args.external_scores {
        None => None,
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| AppError::User(format!("cannot read {}: {e}", p.display())))?;
            Some(serde_json::from_str(&text).map_err(AppError::user)?)
        }
    };

    let mut pairs = Vec::new();
    let mut plot_written = false;
    for (d_path, r_path) in degraded.iter().zip(&reference) {
        let d = read_image(d_path).map_err(AppError::user)?;
        let r = read_image(r_path).map_err(AppError::user)?;
        let name = stem_of(d_path);
        let psnr_db = psnr(&d, &r).map_err(AppError::user)?;
        let ssim_v = ssim(&d, &r).map_err(AppError::user)?;
        let oiqe_v = match &rois {
            Some(boxes) => Some(crate::metrics::oiqe(&d, &r, boxes, 5.0).map_err(AppError::user)?),
            None => None,
        };
        if let (Some(plot), Some(boxes)) = (&args.plot_data, &rois) {
            if !plot_written && !boxes.is_empty() {
                let plane = Plane::gray(&d).roi(&boxes[0]);
                let curve = slanted_edge_mtf(&plane, 5.0).map_err(AppError::user)?;
                let mut csv = String::from("frequency_cycles_per_px,modulation\n");
                for (f, m) in curve.frequencies.iter().zip(&curve.modulation) {
                    let _ = writeln!(csv, "{f},{m}");
                }
                write_out(plot, &csv)?;
                plot_written = true;
            }
        }
        let ext = match &external {
            Some(ExternalScoresFile::Single(e)) => Some(*e),
            Some(ExternalScoresFile::PerImage(map)) => map.get(&name).copied(),
            None => None,
        };
        let op = match (oiqe_v, ext) {
            (Some(o), Some(e)) => Some(overall_performance(
                psnr_db, ssim_v, e.lpips, e.fid, o, e.clipiqa,
            )),
            _ => None,
        };
        pairs.push(PairReport {
            name,
            psnr_db,
            ssim: ssim_v,
            oiqe: oiqe_v,
            lpips: ext.map(|e| e.lpips),
            fid: ext.map(|e| e.fid),
            clipiqa: ext.map(|e| e.clipiqa),
            overall_performance: op,
        });
    }
    let n = pairs.len() as f64;
    let mean_of = |f: &dyn Fn(&PairReport) -> Option<f64>| -> Option<f64> {
        let vals: Vec<f64> = pairs.iter().filter_map(f).collect();
        if vals.len() == pairs.len() {
            Some(crate::util::compensated_sum(vals) / n)
        } else {
            None
        }
    };
    let report = MetricsReport {
        schema_version: 1,
        mean_psnr_db: crate::util::compensated_sum(pairs.iter().map(|p| p.psnr_db)) / n,
        mean_ssim: crate::util::compensated_sum(pairs.iter().map(|p| p.ssim)) / n,
        mean_oiqe: mean_of(&|p| p.oiqe),
        mean_overall_performance: mean_of(&|p| p.overall_performance),
        pairs,
    };
    let json =
        serde_json::to_string_pretty(&report).map_err(|e| AppError::Internal(e.to_string()))?;
    write_out(&args.out, &(json + "\n"))
}

#[derive(Debug, Serialize, Deserialize)]
struct ScoresFile {
    schema_version: u32,
    scores: Vec<LensScore>,
}

fn lens_files(path: &Path) -> AppResult<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|e| AppError::User(format!("cannot list {}: {e}", path.display())))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.to_string_lossy().ends_with(".lens.json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(AppError::User(format!(
            "no *.lens.json files in {}",
            path.display()
        )));
    }
    Ok(files)
}

fn cmd_ode(args: OdeArgs) -> AppResult<()> {
    let files = lens_files(&args.lens)?;
    let target = match &args.target {
        None => CheckerTarget::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| AppError::User(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(AppError::user)?
        }
    };
    let (rows, cols) = parse_grid_shape(&args.grid)?;
    let cfg = EvalConfig {
        grid_rows: rows,
        grid_cols: cols,
        grid: grid_config(
            args.kernel_px,
            args.pupil_samples,
            SpectralResponse::default_rgb(),
        ),
    };
    let mut scores = Vec::new();
    for path in &files {
        let lens = load_lens(path, args.no_spec_check)?;
        let mut score = crate::benchmark::evaluate_lens(&lens, &target, &cfg)
            .map_err(|e| AppError::User(format!("{}: {e}", path.display())))?;
        score.file = Some(path.display().to_string());
        log::info!(
            "{}: score {:.4} (oiq {:.4}, u_s {:.4}, u_c {:.4})",
            path.display(),
            score.ode_report.ode,
            score.ode_report.oiq,
            score.ode_report.u_s,
            score.ode_report.u_c
        );
        scores.push(score);
    }
    let file = ScoresFile {
        schema_version: 1,
        scores,
    };
    let json =
        serde_json::to_string_pretty(&file).map_err(|e| AppError::Internal(e.to_string()))?;
    write_out(&args.out, &(json + "\n"))
}

fn cmd_sample(args: SampleArgs) -> AppResult<()> {
    let text = std::fs::read_to_string(&args.scores)
        .map_err(|e| AppError::User(format!("cannot read {}: {e}", args.scores.display())))?;
    let file: ScoresFile = serde_json::from_str(&text).map_err(AppError::user)?;
    let manifest = stratify(&file.scores, args.levels).map_err(AppError::user)?;
    write_out(&args.out, &manifest_to_json(&manifest))
}

fn cmd_dataset(args: DatasetArgs) -> AppResult<()> {
    let bytes = std::fs::read(&args.manifest)
        .map_err(|e| AppError::User(format!("cannot read {}: {e}", args.manifest.display())))?;
    let manifest: BenchmarkManifest = manifest_from_json(&bytes).map_err(AppError::user)?;
    let (rows, cols) = parse_grid_shape(&args.grid)?;
    let (lo, hi) = parse_wb(&args.wb)?;
    let bayer: BayerPattern = args.bayer.parse().map_err(AppError::User)?;
    let isp = if args.isp {
        Some(IspConfig {
            enabled: true,
            bayer_pattern: bayer,
            wb_gain_range: (lo, hi),
            seed: 0, // per-pair seeds are derived downstream
        })
    } else {
        None
    };
    let opts = DatasetOptions {
        noise_sigma: args.noise_sigma,
        isp,
        seed: args.seed,
        eval: EvalConfig {
            grid_rows: rows,
            grid_cols: cols,
            grid: grid_config(
                args.kernel_px,
                args.pupil_samples,
                SpectralResponse::default_rgb(),
            ),
        },
    };
    let updated =
        generate_dataset(&manifest, &args.gt, &args.out, &opts).map_err(AppError::user)?;
    write_out(&args.out.join("manifest.json"), &manifest_to_json(&updated))?;
    log::info!(
        "dataset: {} rows -> {}",
        updated.dataset.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_design(args: DesignArgs) -> AppResult<()> {
    let lens = load_lens(&args.start, args.no_spec_check)?;
    let vars_text = std::fs::read_to_string(&args.vars)
        .map_err(|e| AppError::User(format!("cannot read {}: {e}", args.vars.display())))?;
    let vars: DesignVariables = serde_json::from_str(&vars_text).map_err(AppError::user)?;
    let cfg: MeritConfig = match &args.merit {
        None => MeritConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| AppError::User(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(AppError::user)?
        }
    };
    let outcome = optimize(&lens, &vars, &cfg, args.budget, args.seed).map_err(AppError::user)?;
    if let Some(trace_path) = &args.trace {
        let mut csv = String::from("eval,merit,best_merit,phase\n");
        for row in &outcome.trace {
            let _ = writeln!(
                csv,
                "{},{},{},{}",
                row.eval,
                row.merit,
                row.best_merit,
                row.phase.name()
            );
        }
        write_out(trace_path, &csv)?;
    }
    write_out(&args.out, &serialize_lens(&outcome.lens))?;
    log::info!(
        "merit {:.6} -> {:.6} over {} recorded evaluations; final check {:.6}",
        outcome.initial_merit,
        outcome.best_merit,
        outcome.trace.len(),
        merit(&outcome.lens, &cfg)
    );
    if !outcome.improved {
        log::warn!("no improvement within budget; returning the start design");
    }
    Ok(())
}
