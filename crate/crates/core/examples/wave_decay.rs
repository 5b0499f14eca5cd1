//! Local decay of the free modified wave group in a weighted norm.
//!
//! `cargo run --release --example wave_decay`

use nalgebra::Vector3;
use solilab::diagnostics::{fit_decay, weighted_field_norm};
use solilab::dynamics::wave_group;
use solilab::grid::Grid3;
use solilab::soliton::FieldPair;

fn main() -> solilab::Result<()> {
    let alpha = 2.25;
    let grid = Grid3::new(96, 48.0)?;
    let v = Vector3::new(0.3, 0.0, 0.0);
    let psi = grid.sample(|x| (-0.5 * x.norm_squared()).exp());
    let f0 = FieldPair::from_real(&grid, &psi, &vec![0.0; grid.len()]);
    let horizon = (0.5 * grid.l() - 7.0) / (1.0 + v.norm());
    let (mut t, mut y) = (Vec::new(), Vec::new());
    for i in 0..=26 {
        let s = 0.5 * i as f64;
        if s > horizon {
            break;
        }
        let n = weighted_field_norm(&grid, &wave_group(&grid, &f0, &v, s), -alpha);
        println!("t = {s:>5.2}  |W(t)F0| = {n:.4e}");
        t.push(s);
        y.push(n);
    }
    let fit = fit_decay(&t, &y, (5.0, horizon))?;
    println!("fitted exponent {:.3} on [5, {horizon:.2}] (residual {:.1e})", fit.exponent, fit.residual);
    Ok(())
}
