//! Full optical-degradation evaluation of a lens on the checkerboard target.
//!
//! ```bash
//! cargo run --release -p aberra --example evaluate_lens_score
//! ```

use aberra::benchmark::{evaluate_lens, CheckerTarget, EvalConfig};
use aberra::lens::parse_lens;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/fixtures/cooke_triplet.lens.json"
    );
    let lens = parse_lens(&std::fs::read(path)?)?;

    let target = CheckerTarget::default();
    let cfg = EvalConfig {
        grid_rows: 6,
        grid_cols: 6,
        ..EvalConfig::default()
    };
    let score = evaluate_lens(&lens, &target, &cfg)?;
    let r = &score.ode_report;

    println!("lens            {}", score.lens_id);
    println!("composite score {:.4}", r.ode);
    println!("  image quality {:.4}", r.oiq);
    println!("  spatial unif. {:.4}  (cv {:.4})", r.u_s, r.cv_s);
    println!("  channel unif. {:.4}  (cv {:.4})", r.u_c, r.cv_c);
    if let Some(rms) = score.rms_radius_d_line_mm {
        println!("  full-field rms spot {:.1} um", rms * 1e3);
    }
    println!("\nsub-scores (rows: field center -> corner; cols: R, G, B):");
    for row in r.sub_table.values {
        println!("  {:6.4}  {:6.4}  {:6.4}", row[0], row[1], row[2]);
    }
    Ok(())
}
