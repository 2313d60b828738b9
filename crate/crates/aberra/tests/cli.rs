//! Black-box tests of the command-line interface: exit codes, file outputs,
//! and flag validation.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aberra"))
}

fn fixture(name: &str) -> String {
    format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn help_exits_zero_with_a_synopsis() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("Usage:"));
    assert!(text.contains("trace"));
    assert!(text.contains("design"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_flag_is_rejected() {
    let out = bin()
        .args([
            "trace", "--lens", "x", "--field", "0", "--out", "y", "--bogus",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_lens_file_is_a_user_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "trace",
            "--lens",
            "/nonexistent/l.lens.json",
            "--field",
            "0",
            "--out",
            dir.path().join("o.csv").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
}

#[test]
fn trace_writes_the_documented_csv_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("spot.csv");
    let out = bin()
        .args([
            "trace",
            "--lens",
            &fixture("singlet.lens.json"),
            "--field",
            "2.0",
            "--wavelength",
            "550",
            "--pupil-samples",
            "8",
            "--out",
            out_path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(&out_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x_mm,y_mm,wavelength_nm,alive,note"));
    let first = lines.next().unwrap();
    assert_eq!(first.split(',').count(), 5);
}

#[test]
fn off_grid_lenses_need_the_escape_hatch() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixture("singlet.lens.json")).unwrap();
    let off_grid = text.replace("\"half_fov_deg\": 20.0", "\"half_fov_deg\": 25.0");
    let lens_path = dir.path().join("odd.lens.json");
    std::fs::write(&lens_path, off_grid).unwrap();
    let csv_path = dir.path().join("o.csv");

    let refused = bin()
        .args([
            "trace",
            "--lens",
            lens_path.to_str().unwrap(),
            "--field",
            "0",
            "--out",
            csv_path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(refused.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&refused.stderr).contains("half_fov_deg"));

    let allowed = bin()
        .args([
            "trace",
            "--lens",
            lens_path.to_str().unwrap(),
            "--field",
            "0",
            "--out",
            csv_path.to_str().unwrap(),
            "--no-spec-check",
        ])
        .output()
        .unwrap();
    assert_eq!(allowed.status.code(), Some(0));
}

#[test]
fn psf_and_degrade_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let grid_path = dir.path().join("g.psfg");
    let status = bin()
        .args([
            "psf",
            "--lens",
            &fixture("singlet.lens.json"),
            "--grid",
            "2x2",
            "--kernel-px",
            "15",
            "--pupil-samples",
            "10",
            "--out",
            grid_path.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());

    // Ground truth at the lens's sensor size.
    let gt_dir = dir.path().join("gt");
    std::fs::create_dir(&gt_dir).unwrap();
    let img = aberra::degrade::ImageBuffer::from_fn(512, 512, |c, x, y| {
        0.2 + 0.5 * (((x / 31) + (y / 23) + c) % 2) as f64
    });
    aberra::degrade::write_png16(&img, &gt_dir.join("scene.png")).unwrap();

    let out_dir = dir.path().join("lq");
    let status = bin()
        .args([
            "degrade",
            "--gt",
            gt_dir.to_str().unwrap(),
            "--psf",
            grid_path.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--noise-sigma",
            "0.005",
            "--seed",
            "9",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out_dir.join("scene.png").exists());

    // Metrics on the degraded/clean pair.
    let report_path = dir.path().join("report.json");
    let status = bin()
        .args([
            "metrics",
            "--degraded",
            out_dir.join("scene.png").to_str().unwrap(),
            "--reference",
            gt_dir.join("scene.png").to_str().unwrap(),
            "--out",
            report_path.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert!(report["pairs"][0]["psnr_db"].as_f64().unwrap() > 10.0);
    assert!(report["pairs"][0]["ssim"].as_f64().unwrap() > 0.2);
}

#[test]
fn metrics_computes_overall_performance_with_rois_and_externals() {
    let dir = tempfile::tempdir().unwrap();
    // A sharp and a blurred edge image pair.
    let clean = edge_image(96, None);
    let soft = edge_image(96, Some(1.2));
    let clean_path = dir.path().join("ref.png");
    let soft_path = dir.path().join("deg.png");
    aberra::degrade::write_png16(&clean, &clean_path).unwrap();
    aberra::degrade::write_png16(&soft, &soft_path).unwrap();
    std::fs::write(
        dir.path().join("rois.json"),
        r#"[{"x": 24, "y": 24, "w": 48, "h": 48}]"#,
    )
    .unwrap();
    std::fs::write(
        dir.path().join("ext.json"),
        r#"{"lpips": 0.2, "fid": 40.0, "clipiqa": 0.5}"#,
    )
    .unwrap();
    let report_path = dir.path().join("report.json");
    let plot_path = dir.path().join("mtf.csv");
    let out = bin()
        .args([
            "metrics",
            "--degraded",
            soft_path.to_str().unwrap(),
            "--reference",
            clean_path.to_str().unwrap(),
            "--rois",
            dir.path().join("rois.json").to_str().unwrap(),
            "--external-scores",
            dir.path().join("ext.json").to_str().unwrap(),
            "--plot-data",
            plot_path.to_str().unwrap(),
            "--out",
            report_path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    let pair = &report["pairs"][0];
    assert!(pair["oiqe"].as_f64().unwrap() > 0.0);
    assert!(pair["overall_performance"].as_f64().is_some());
    let plot = std::fs::read_to_string(&plot_path).unwrap();
    assert!(plot.starts_with("frequency_cycles_per_px,modulation"));
}

fn edge_image(side: usize, sigma: Option<f64>) -> aberra::degrade::ImageBuffer {
    let slope = 5.0f64.to_radians().tan();
    aberra::degrade::ImageBuffer::from_fn(side, side, |_, x, y| {
        let d = x as f64 - (side as f64 / 2.0 + slope * y as f64);
        match sigma {
            Some(s) => 0.5 * (1.0 + erf(d / (s * std::f64::consts::SQRT_2))),
            None => {
                if d > 0.0 {
                    0.9
                } else {
                    0.1
                }
            }
        }
    })
}

fn erf(x: f64) -> f64 {
    let sign = x.signum();
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

#[test]
fn design_writes_lens_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("vars.json"),
        r#"{"vars":[
            {"surface":0,"param":"curvature","lo":-0.04,"hi":0.04},
            {"surface":1,"param":"curvature","lo":-0.04,"hi":0.04}
        ]}"#,
    )
    .unwrap();
    std::fs::write(
        dir.path().join("merit.json"),
        r#"{"fields":[[0.0,1.0],[3.0,1.0]],"wavelengths_nm":[587.6],
            "target_efl_mm":193.5,"efl_weight":0.0001,"pupil_samples":8}"#,
    )
    .unwrap();
    let out_lens = dir.path().join("out.lens.json");
    let trace_csv = dir.path().join("trace.csv");
    let out = bin()
        .args([
            "design",
            "--start",
            &fixture("singlet.lens.json"),
            "--vars",
            dir.path().join("vars.json").to_str().unwrap(),
            "--merit",
            dir.path().join("merit.json").to_str().unwrap(),
            "--budget",
            "150",
            "--seed",
            "4",
            "--out",
            out_lens.to_str().unwrap(),
            "--trace",
            trace_csv.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let lens = aberra::lens::parse_lens(&std::fs::read(&out_lens).unwrap());
    let csv = std::fs::read_to_string(&trace_csv).unwrap();
    assert!(csv.starts_with("eval,merit,best_merit,phase"));
    assert!(csv.lines().count() > 100);
    assert!(lens.is_ok());
}

#[test]
fn no_subcommand_writes_outside_out_paths() {
    // Sanity: a trace run into a scratch directory leaves only its CSV.
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("only.csv");
    let status = bin()
        .args([
            "trace",
            "--lens",
            &fixture("singlet.lens.json"),
            "--field",
            "0",
            "--out",
            out_path.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let entries: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(entries.len(), 1);
}

#[test]
fn seeded_degrade_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let grid_path = dir.path().join("g.psfg");
    assert!(bin()
        .args([
            "psf",
            "--lens",
            &fixture("singlet.lens.json"),
            "--grid",
            "2x2",
            "--kernel-px",
            "11",
            "--pupil-samples",
            "8",
            "--out",
            grid_path.to_str().unwrap(),
        ])
        .status()
        .unwrap()
        .success());
    let gt_dir = dir.path().join("gt");
    std::fs::create_dir(&gt_dir).unwrap();
    let img = aberra::degrade::ImageBuffer::from_fn(512, 512, |c, x, y| {
        0.1 + 0.7 * (((x + 2 * y + 31 * c) % 97) as f64 / 97.0)
    });
    aberra::degrade::write_png16(&img, &gt_dir.join("t.png")).unwrap();
    let run = |out: &Path| {
        assert!(bin()
            .args([
                "degrade",
                "--gt",
                gt_dir.to_str().unwrap(),
                "--psf",
                grid_path.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--noise-sigma",
                "0.01",
                "--seed",
                "77",
                "--isp",
                "--wb",
                "0.9,1.1",
            ])
            .status()
            .unwrap()
            .success());
    };
    run(&dir.path().join("a"));
    run(&dir.path().join("b"));
    for name in ["t.png", "t.gt.png"] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}
