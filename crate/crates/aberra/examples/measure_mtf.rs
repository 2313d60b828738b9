//! Slanted-edge MTF measurement on synthetic edges.
//!
//! ```bash
//! cargo run --release -p aberra --example measure_mtf
//! ```

use aberra::metrics::{slanted_edge_mtf, Plane};

/// Area-sampled step edge tilted 5 degrees, optionally Gaussian-blurred.
fn edge(w: usize, h: usize, sigma: Option<f64>) -> Plane {
    let slope = 5.0f64.to_radians().tan();
    let edge_x = w as f64 / 2.0;
    let data = (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            let d = x - (edge_x + slope * y);
            match sigma {
                // Point samples of the blurred profile.
                Some(s) => 0.5 * (1.0 + erf(d / (s * std::f64::consts::SQRT_2))),
                // 16x16 area samples of the hard edge.
                None => {
                    let mut acc = 0.0;
                    for sy in 0..16 {
                        for sx in 0..16 {
                            let px = x + (sx as f64 + 0.5) / 16.0 - 0.5;
                            let py = y + (sy as f64 + 0.5) / 16.0 - 0.5;
                            if px > edge_x + slope * py {
                                acc += 1.0;
                            }
                        }
                    }
                    acc / 256.0
                }
            }
        })
        .collect();
    Plane::new(w, h, data)
}

fn erf(x: f64) -> f64 {
    // Abramowitz-Stegun 7.1.26, good to 1.5e-7.
    let sign = x.signum();
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!(
        "{:>22}  {:>8}  {:>9}  {:>10}",
        "edge", "MTF50", "MTF area", "MTF(0.25)"
    );
    let cases: [(&str, Option<f64>); 4] = [
        ("sharp (pixel-limited)", None),
        ("gaussian sigma 0.7px", Some(0.7)),
        ("gaussian sigma 1.0px", Some(1.0)),
        ("gaussian sigma 2.0px", Some(2.0)),
    ];
    for (label, sigma) in cases {
        let plane = edge(96, 96, sigma);
        let curve = slanted_edge_mtf(&plane, 5.0)?;
        println!(
            "{label:>22}  {:8.4}  {:9.4}  {:10.4}",
            curve.mtf50_cycles_per_px(),
            curve.area_norm(),
            curve.at(0.25),
        );
    }
    println!("\nfrequencies are in cycles/pixel; Nyquist is 0.5");
    Ok(())
}
