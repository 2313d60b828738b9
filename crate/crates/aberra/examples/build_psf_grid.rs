//! Build the spatially-varying RGB PSF grid of a lens and save it.
//!
//! ```bash
//! cargo run --release -p aberra --example build_psf_grid
//! ```

use aberra::lens::parse_lens;
use aberra::psf::{build_grid, Channel, GridConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/fixtures/cooke_triplet.lens.json"
    );
    let lens = parse_lens(&std::fs::read(path)?)?;

    let cfg = GridConfig::default();
    let grid = build_grid(&lens, 4, 4, &cfg)?;

    println!(
        "grid {}x{} patches, {}px kernels, sensor {}x{}",
        grid.rows, grid.cols, grid.kernel_px, grid.sensor_w, grid.sensor_h
    );
    println!("\nper-patch RMS blur width (pixels), G channel:");
    for row in 0..grid.rows {
        let widths: Vec<String> = (0..grid.cols)
            .map(|col| format!("{:5.2}", grid.patch(row, col).g.rms_width_px()))
            .collect();
        println!("  {}", widths.join("  "));
    }

    // Lateral color: R vs B centroid separation per corner patch.
    println!("\ncorner-patch R-to-B centroid separation (pixels):");
    for (row, col) in [
        (0, 0),
        (0, grid.cols - 1),
        (grid.rows - 1, 0),
        (grid.rows - 1, grid.cols - 1),
    ] {
        let p = grid.patch(row, col);
        let (rx, ry) = p.channel(Channel::R).centroid_px();
        let (bx, by) = p.channel(Channel::B).centroid_px();
        println!("  patch ({row}, {col}): {:.3}", (rx - bx).hypot(ry - by));
    }

    let out = std::env::temp_dir().join("aberra_cooke_4x4.psfg");
    grid.save(&out)?;
    println!("\nsaved {} (hash {})", out.display(), grid.grid_hash());
    Ok(())
}
