//! Automatic design at desk scale: recover a detuned triplet by simulated
//! annealing with Adam refinement.
//!
//! ```bash
//! cargo run --release -p aberra --example optimize_lens
//! ```

use aberra::design::{merit, optimize, DesignParam, DesignVariables, MeritConfig, VariableSpec};
use aberra::lens::parse_lens;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/fixtures/cooke_triplet.lens.json"
    );
    let good = parse_lens(&std::fs::read(path)?)?;

    // Detune every curvature by up to 10%.
    let mut start = good.clone();
    let detune = [1.10, 0.92, 1.08, 0.93, 1.0, 1.05, 0.91];
    for (s, f) in start.surfaces.iter_mut().zip(detune) {
        s.c *= f;
    }

    let vars = DesignVariables {
        vars: (0..start.surfaces.len())
            .filter(|&i| i != start.stop_index)
            .map(|i| VariableSpec {
                surface: i,
                param: DesignParam::Curvature,
                lo: start.surfaces[i].c - 0.012,
                hi: start.surfaces[i].c + 0.012,
            })
            .collect(),
    };
    let cfg = MeritConfig {
        fields: vec![(0.0, 1.0), (10.0, 1.0), (17.0, 1.0)],
        target_efl_mm: 48.5,
        efl_weight: 0.001,
        ..MeritConfig::default()
    };

    println!("merit of the good design    {:.6}", merit(&good, &cfg));
    println!("merit of the detuned start  {:.6}", merit(&start, &cfg));

    let outcome = optimize(&start, &vars, &cfg, 2000, 17)?;
    println!(
        "after {} evaluations        {:.6} ({}x better)",
        outcome.trace.len(),
        outcome.best_merit,
        (outcome.initial_merit / outcome.best_merit).round()
    );

    let anneal = outcome
        .trace
        .iter()
        .filter(|r| r.phase.name() == "anneal")
        .count();
    println!(
        "phases: {} anneal proposals, {} adam evaluations",
        anneal,
        outcome.trace.len() - anneal
    );
    let out = std::env::temp_dir().join("aberra_reoptimized.lens.json");
    std::fs::write(&out, aberra::lens::serialize_lens(&outcome.lens))?;
    println!("re-optimized lens -> {}", out.display());
    Ok(())
}
