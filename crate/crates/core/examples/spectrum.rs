//! Resolvent data along the imaginary axis: `F(iω)`, `det M(iω)` and the sign
//! of `Im F`.
//!
//! `cargo run --release --example spectrum`

use solilab::charge::make_admissible_density;
use solilab::grid::Grid3;
use solilab::spectral::{k_matrix, on_axis, r_at_zero};

fn main() -> solilab::Result<()> {
    let grid = Grid3::new(64, 16.0)?;
    let rho = make_admissible_density(&grid, 1.0, 0.01)?;
    let speed = 0.3;
    let k = k_matrix(&rho, speed)?;
    println!("K diagonal {:.6e} {:.6e} {:.6e}", k[(0, 0)], k[(1, 1)], k[(2, 2)]);
    println!("r(0)       {:?}", r_at_zero(&rho, speed)?);
    println!("{:>6} {:>13} {:>13} {:>13} {:>13} {:>11}", "omega", "Re F11", "Im F11", "Re F22", "Im F22", "|det M|");
    for i in 0..=12 {
        let om = -3.0 + 0.5 * i as f64;
        if om == 0.0 {
            continue;
        }
        let (e, _) = on_axis(&rho, speed, om)?;
        println!(
            "{om:>6.2} {:>13.5e} {:>13.5e} {:>13.5e} {:>13.5e} {:>11.4e}",
            e.f[(0, 0)].re,
            e.f[(0, 0)].im,
            e.f[(1, 1)].re,
            e.f[(1, 1)].im,
            e.det_m.norm()
        );
    }
    Ok(())
}
