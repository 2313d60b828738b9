//! Read, validate, and write lens prescription files; enumerate the design
//! specification grid.
//!
//! ```bash
//! cargo run --release -p aberra --example lens_files
//! ```

use aberra::design::enumerate_specs;
use aberra::lens::{parse_lens, refractive_index, sag, serialize_lens, Material};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/singlet.lens.json");
    let lens = parse_lens(&std::fs::read(path)?)?;
    println!(
        "{}: {} surfaces, {} piece(s), stop at surface {}",
        path.rsplit('/').next().unwrap(),
        lens.surfaces.len(),
        lens.piece_count(),
        lens.stop_index
    );

    // Surface geometry: sag profile of the front surface.
    let front = &lens.surfaces[0];
    println!("\nfront-surface sag (c = {} /mm):", front.c);
    for r in [0.0f64, 2.0, 4.0, 6.0] {
        println!("  r = {r:3.1} mm -> h = {:8.5} mm", sag(front, r * r)?);
    }

    // Dispersion of the glass model.
    let bk7: &Material = &lens.materials["BK7"];
    println!("\nBK7-like dispersion (nd {}, vd {}):", bk7.nd, bk7.vd);
    for wl in [450.0, 486.1, 550.0, 587.6, 656.3, 700.0] {
        println!("  n({wl:5.1} nm) = {:.6}", refractive_index(bk7, wl)?);
    }

    // Round-trip: the canonical text form is stable.
    let text = serialize_lens(&lens);
    assert_eq!(text.as_bytes(), std::fs::read(path)?.as_slice());
    println!("\ncanonical serialization matches the file byte for byte");

    let specs = enumerate_specs();
    println!(
        "design grid: {} specification cells (pieces 1..6, half FoV 20/30/40, f/2..f/4)",
        specs.len()
    );
    Ok(())
}
