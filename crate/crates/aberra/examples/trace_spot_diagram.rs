//! Trace a lens and print spot diagrams across the field.
//!
//! ```bash
//! cargo run --release -p aberra --example trace_spot_diagram
//! ```

use aberra::lens::{parse_lens, C_LINE_NM, D_LINE_NM, F_LINE_NM};
use aberra::trace::{paraxial, spot_diagram};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/fixtures/cooke_triplet.lens.json"
    );
    let lens = parse_lens(&std::fs::read(path)?)?;

    let par = paraxial(&lens)?;
    println!("EFL            {:8.3} mm", par.efl_mm);
    println!("BFD            {:8.3} mm", par.bfd_mm);
    println!(
        "entrance pupil {:8.3} mm diameter at z = {:.3} mm",
        par.entrance_pupil_diameter_mm, par.entrance_pupil_z_mm
    );
    println!("working f/#    {:8.3}", par.working_f_number);
    println!();

    println!(
        "{:>6}  {:>10}  {:>12}  {:>14}  {:>9}",
        "field", "wavelength", "rms radius", "centroid y", "lost"
    );
    for field_deg in [0.0, 7.0, 14.0, 19.0] {
        for wl in [F_LINE_NM, D_LINE_NM, C_LINE_NM] {
            let spot = spot_diagram(&lens, field_deg, wl, 32)?;
            println!(
                "{:5.1}deg {:7.1}nm  {:9.2} um  {:11.4} mm  {:4}/{:<4}",
                field_deg,
                wl,
                spot.rms_radius_mm * 1e3,
                spot.centroid.1,
                spot.rays_lost,
                spot.rays_traced,
            );
        }
    }
    Ok(())
}
