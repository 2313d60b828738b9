//! Score a small lens set, stratify it into severity levels, and generate a
//! reproducible degraded/clean dataset.
//!
//! ```bash
//! cargo run --release -p aberra --example stratify_and_dataset
//! ```

use aberra::benchmark::{evaluate_psf_grid, manifest_to_json, stratify, CheckerTarget, LensScore};
use aberra::metrics::OdeWeights;
use aberra::psf::{gaussian_kernel, PsfGrid};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // A synthetic lens family: uniform Gaussian blur of increasing width
    // stands in for lenses of increasing aberration severity.
    let target = CheckerTarget::small(512, 512, 64, 48);
    // Blur widths stay well under the checker square size: much beyond that
    // the slanted-edge measurement loses its isolated edges.
    let mut scores = Vec::new();
    for (i, sigma) in [0.4, 0.7, 1.0, 1.5, 2.0, 2.6, 3.3, 4.0, 5.0, 6.0]
        .iter()
        .enumerate()
    {
        let grid = PsfGrid::uniform(
            4,
            4,
            512,
            512,
            &gaussian_kernel(51, *sigma),
            &format!("blur{i:02}"),
        );
        let (report, _) = evaluate_psf_grid(&grid, &target, &OdeWeights::default())?;
        println!(
            "lens blur{i:02}: sigma {sigma:.1}px -> score {:.4}",
            report.ode
        );
        scores.push(LensScore {
            lens_id: format!("blur{i:02}"),
            file: None,
            ode_report: report,
            rms_radius_d_line_mm: None,
            grid_hash: grid.grid_hash(),
            failed_cells: Vec::new(),
        });
    }

    let manifest = stratify(&scores, 5)?;
    println!("\nseverity levels (1 = mildest):");
    for lens in &manifest.lenses {
        println!(
            "  L{} {} (score {:.4})",
            lens.level, lens.lens_id, lens.score.ode_report.ode
        );
    }
    let out = std::env::temp_dir().join("aberra_manifest.json");
    std::fs::write(&out, manifest_to_json(&manifest))?;
    println!("\nmanifest -> {}", out.display());
    println!("feed it to `aberra dataset --manifest ... --gt <dir> --out <dir>`");
    println!("(dataset rows need lens files; lenses scored from files keep their path)");
    Ok(())
}
