//! Combine six image-quality metrics into the overall performance score.
//!
//! The per-metric numbers below are published results for a few well-known
//! restoration methods evaluated on aberration-degraded images; the composite
//! weighs fidelity (PSNR, SSIM), optics (OIQE), and perception (LPIPS, FID,
//! ClipIQA).
//!
//! ```bash
//! cargo run --release -p aberra --example overall_performance
//! ```

use aberra::metrics::overall_performance;

fn main() {
    // (method, PSNR dB, SSIM, LPIPS, FID, OIQE, ClipIQA)
    let rows = [
        (
            "Wiener deconvolution",
            19.62,
            0.699,
            0.448,
            122.8,
            0.475,
            0.242,
        ),
        ("NAFNet", 27.78, 0.876, 0.211, 39.19, 0.705, 0.404),
        ("MIMOUNet", 27.36, 0.870, 0.229, 45.05, 0.742, 0.383),
        ("Uformer", 27.95, 0.873, 0.220, 52.81, 0.714, 0.369),
        ("FeMaSR", 26.94, 0.841, 0.136, 34.59, 0.722, 0.520),
        ("DiffBIR", 27.65, 0.812, 0.196, 41.06, 0.711, 0.623),
    ];
    println!(
        "{:>22}  {:>6} {:>6} {:>6} {:>6} {:>6} {:>8}  {:>7}",
        "method", "PSNR", "SSIM", "LPIPS", "FID", "OIQE", "ClipIQA", "O.P."
    );
    let mut scored: Vec<(&str, f64)> = rows
        .iter()
        .map(|&(name, p, s, l, f, o, c)| (name, overall_performance(p, s, l, f, o, c)))
        .collect();
    for (&(name, p, s, l, f, o, c), &(_, op)) in rows.iter().zip(&scored) {
        println!("{name:>22}  {p:6.2} {s:6.3} {l:6.3} {f:6.2} {o:6.3} {c:8.3}  {op:7.3}");
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    println!(
        "\nranking: {}",
        scored.iter().map(|r| r.0).collect::<Vec<_>>().join(" > ")
    );
    println!("note: FID above 100 contributes negatively; nothing is clamped.");
}
