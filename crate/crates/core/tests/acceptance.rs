//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test --test acceptance -- 3 5`.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{Matrix6, Vector3};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use solilab::charge::{make_admissible_density, ChargeDensity, MOMENT_TOL, WIENER_FLOOR};
use solilab::diagnostics::{fit_decay, weighted_field_norm};
use solilab::dynamics::{
    linear_energy, linear_energy_sum_of_squares, reverse_momenta, run_linearized_with, run_nonlinear_with, wave_group,
    SimConfig,
};
use solilab::experiment::{self, preset_config, ExperimentPreset, PresetOutcome};
use solilab::grid::Grid3;
use solilab::soliton::{soliton, soliton_residuals, tangent_frame, FieldPair, PhaseState, SolitonParams, Tangent};
use solilab::spectral::{
    f_at_zero, h_diagonal_real_space, inverse_blocks, kh_matrices, on_axis, orthogonality_rhs, phi_eval, r_at_zero,
};
use solilab::symplectic::{check_nondegenerate, omega, omega_matrix, project_linear, project_nonlinear, ProjectionOptions};
use solilab::Result;

type Outcome = Result<(bool, String)>;

const SPEEDS: [f64; 3] = [0.0, 0.3, 0.6];

fn charge() -> Result<ChargeDensity> {
    make_admissible_density(&Grid3::new(64, 16.0)?, 1.0, 0.01)
}

fn axis(s: f64) -> Vector3<f64> {
    Vector3::new(s, 0.0, 0.0)
}

/// A few Gaussian bumps with random centres, widths and signs in both fields,
/// plus random particle components.
fn random_tangent(grid: &Grid3, rng: &mut ChaCha8Rng) -> Tangent {
    let bump = |rng: &mut ChaCha8Rng| {
        let parts: Vec<(Vector3<f64>, f64, f64)> = (0..3)
            .map(|_| {
                let c = Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
                (c, rng.random_range(0.7..1.5), rng.random_range(-1.0..1.0))
            })
            .collect();
        grid.sample(|x| parts.iter().map(|(c, w, a)| a * (-(x - c).norm_squared() / (2.0 * w * w)).exp()).sum())
    };
    let psi = bump(rng);
    let pi = bump(rng);
    let mut z = PhaseState::zeros(grid);
    z.fields = FieldPair::from_real(grid, &psi, &pi);
    for i in 0..3 {
        z.q[i] = rng.random_range(-1.0..1.0);
        z.p[i] = rng.random_range(-1.0..1.0);
    }
    z
}

fn cmax(m: &Matrix6<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn admissibility() -> Outcome {
    let rho = charge()?;
    let w = rho.check_wiener(WIENER_FLOOR);
    let m = rho.check_moments(MOMENT_TOL);
    let ok = w.pass && w.min_ratio > 0.0 && m.max_relative < 1e-8;
    Ok((ok, format!("min |rho_hat| ratio {:.3e}, max relative moment {:.2e}", w.min_ratio, m.max_relative)))
}

fn soliton_equations() -> Outcome {
    let rho = charge()?;
    let (mut ell, mut tr) = (0.0f64, 0.0f64);
    for s in SPEEDS {
        let sigma = SolitonParams::new(Vector3::zeros(), axis(s))?;
        let r = soliton_residuals(&rho, &sigma, &soliton(&rho, &sigma)?);
        ell = ell.max(r.elliptic);
        tr = tr.max(r.transport);
    }
    // the transport relation is built in mode by mode, so only round-off remains
    let ok = ell < 1e-8 && tr < 1e-13;
    Ok((ok, format!("elliptic {ell:.2e}, transport {tr:.2e}")))
}

fn symplectic_suite() -> Outcome {
    let rho = charge()?;
    let grid = rho.grid().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut anti, mut min_det, mut idem, mut annih, mut fixed, mut equiv) = (0.0f64, f64::INFINITY, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let opts = ProjectionOptions::default();
    for s in SPEEDS {
        let v = axis(s);
        let om = omega_matrix(&rho, &v);
        let scale = om.abs().max();
        anti = anti.max((om + om.transpose()).abs().max() / scale);
        let det = check_nondegenerate(&om)?;
        min_det = min_det.min(det.abs() / scale.powi(6));
        let a = random_tangent(&grid, &mut rng);
        let b = random_tangent(&grid, &mut rng);
        let (oab, oba) = (omega(&grid, &a, &b), omega(&grid, &b, &a));
        anti = anti.max((oab + oba).abs() / oab.abs().max(oba.abs()));

        let sigma = SolitonParams::new(Vector3::new(0.3, -0.2, 0.1), v)?;
        let (pz, _) = project_linear(&rho, &sigma, &a)?;
        let (ppz, _) = project_linear(&rho, &sigma, &pz)?;
        idem = idem.max(ppz.difference(&pz).norm(&grid) / pz.norm(&grid));
        for t in &tangent_frame(&rho, &sigma)?.vectors {
            let (pt, _) = project_linear(&rho, &sigma, t)?;
            annih = annih.max(pt.norm(&grid) / t.norm(&grid));
        }

        let y = soliton(&rho, &sigma)?;
        let guess = SolitonParams::new(sigma.b + Vector3::new(0.1, 0.05, -0.05), sigma.v + Vector3::new(0.02, -0.01, 0.0))?;
        let p = project_nonlinear(&rho, &y, &guess, &opts)?;
        let err = p.sigma.as_array().iter().zip(sigma.as_array()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        fixed = fixed.max(err);

        let mut yp = y.clone();
        yp.axpy(1e-3, &a);
        let shift = Vector3::new(0.37, -0.21, 0.11);
        let p0 = project_nonlinear(&rho, &yp, &sigma, &opts)?;
        let p1 = project_nonlinear(&rho, &yp.translated(&grid, &shift), &sigma, &opts)?;
        let db = (p1.sigma.b - p0.sigma.b - shift).amax();
        let dv = (p1.sigma.v - p0.sigma.v).amax();
        equiv = equiv.max(db.max(dv));
    }
    let ok = anti < 1e-10 && min_det > 0.0 && idem < 1e-10 && annih < 1e-10 && fixed < 1e-8 && equiv < 1e-8;
    Ok((
        ok,
        format!(
            "antisymmetry {anti:.1e}, min |det|/scale^6 {min_det:.2e}, idempotence {idem:.1e}, frame {annih:.1e}, fixed point {fixed:.1e}, equivariance {equiv:.1e}"
        ),
    ))
}

fn linearized_suite() -> Outcome {
    let rho = charge()?;
    let grid = rho.grid().clone();
    let v = axis(0.3);
    let sigma = SolitonParams::new(Vector3::zeros(), v)?;
    let fr = tangent_frame(&rho, &sigma)?;
    let cfg = SimConfig { check_horizon: false, snapshot_every: 8, ..SimConfig::for_grid(&grid, 10.0) };
    let (mut kernel, mut secular) = (0.0f64, 0.0f64);
    for j in 0..3 {
        let tj = &fr.vectors[j];
        let scale = tj.norm(&grid);
        run_linearized_with(tj, &rho, &v, &v, &cfg, |_, _, x| {
            kernel = kernel.max(x.difference(tj).norm(&grid) / scale);
            Ok(())
        })?;
        let t3 = &fr.vectors[3 + j];
        run_linearized_with(t3, &rho, &v, &v, &cfg, |_, t, x| {
            let mut expect = t3.clone();
            expect.axpy(t, tj);
            secular = secular.max(x.difference(&expect).norm(&grid) / expect.norm(&grid));
            Ok(())
        })?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut min_h, mut drift, mut forms) = (f64::INFINITY, 0.0f64, 0.0f64);
    for _ in 0..3 {
        let (x0, _) = project_linear(&rho, &sigma, &random_tangent(&grid, &mut rng))?;
        let h0 = linear_energy(&x0, &rho, &v, &v);
        run_linearized_with(&x0, &rho, &v, &v, &cfg, |_, _, x| {
            let h = linear_energy(x, &rho, &v, &v);
            let sq = linear_energy_sum_of_squares(x, &rho, &v);
            min_h = min_h.min(sq);
            forms = forms.max((h - sq).abs() / sq);
            drift = drift.max((h - h0).abs() / h0);
            Ok(())
        })?;
    }
    let ok = kernel < 1e-4 && secular < 1e-4 && min_h >= 0.0 && forms < 1e-10 && drift < 1e-6;
    Ok((
        ok,
        format!("kernel {kernel:.1e}, secular {secular:.1e}, min H {min_h:.3e}, form mismatch {forms:.1e}, H drift {drift:.1e}"),
    ))
}

fn spectral_suite() -> Outcome {
    let rho = charge()?;
    let (mut off, mut routes) = (0.0f64, 0.0f64);
    for s in [0.0, 0.3] {
        for l in [0.5, 1.0, 2.0] {
            let lam = C64::new(l, 0.0);
            let e = kh_matrices(&rho, s, lam)?;
            off = off.max(e.off_diagonal());
            let hr = h_diagonal_real_space(&rho, s, lam)?;
            for j in 0..3 {
                routes = routes.max((e.h[(j, j)] - hr[j]).norm() / hr[j].norm());
            }
        }
    }
    let mut at_zero = 0.0f64;
    let mut r0_neg = true;
    for s in [0.0, 0.3] {
        let k = solilab::spectral::k_matrix(&rho, s)?;
        let (f0, f1) = f_at_zero(&rho, s, 1e-3)?;
        for j in 0..3 {
            at_zero = at_zero.max(f0[j].abs().max(f1[j].abs()) / k[(j, j)]);
        }
        r0_neg &= r_at_zero(&rho, s)?.iter().all(|r| *r < 0.0);
    }
    let (mut sign_ok, mut min_det, mut det_form, mut inverse) = (true, f64::INFINITY, 0.0f64, 0.0f64);
    for s in [0.0, 0.3] {
        for om in [-3.0, -1.0, -0.5, 0.5, 1.0, 3.0] {
            let (e, _) = on_axis(&rho, s, om)?;
            sign_ok &= (0..3).all(|j| om.signum() * e.f[(j, j)].im < 0.0);
            min_det = min_det.min(e.det_m.norm());
            det_form = det_form.max((e.det_m - e.det_closed_form()).norm() / e.det_m.norm());
            let inv = inverse_blocks(&e)?;
            inverse = inverse.max(cmax(&(inv.l * e.m - Matrix6::identity())));
        }
    }
    // ωL(ω) drift between doublings; a ratio near 2 means the drift is O(1/ω)
    let omega_l = |om: f64| -> Result<Matrix6<C64>> {
        let (e, _) = on_axis(&rho, 0.3, om)?;
        Ok(inverse_blocks(&e)?.l * C64::new(om, 0.0))
    };
    let (a, b, c) = (omega_l(20.0)?, omega_l(40.0)?, omega_l(80.0)?);
    let (d1, d2) = (cmax(&(b - a)), cmax(&(c - b)));
    let ratio = d1 / d2;
    let ok = off < 1e-10
        && routes < 1e-4
        && at_zero < 1e-6
        && sign_ok
        && min_det > 0.0
        && det_form < 1e-8
        && inverse < 1e-8
        && r0_neg
        && (1.5..=2.5).contains(&ratio);
    Ok((
        ok,
        format!(
            "off-diagonal {off:.1e}, two routes {routes:.1e}, F and F' at 0 {at_zero:.1e}, sign {sign_ok}, min |det M| {min_det:.2e}, closed-form det {det_form:.1e}, LM-I {inverse:.1e}, r(0)<0 {r0_neg}, wL drift {d1:.2e} then {d2:.2e} (ratio {ratio:.2})"
        ),
    ))
}

fn pairing_identities() -> Outcome {
    let rho = charge()?;
    let grid = rho.grid().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for k in 0..20 {
        let v = if k % 2 == 0 { axis(0.3) } else { Vector3::new(0.2, -0.1, 0.15) };
        let x0 = random_tangent(&grid, &mut rng);
        let fr = tangent_frame(&rho, &SolitonParams::new(Vector3::zeros(), v)?)?;
        let phi = phi_eval(&rho, &v, &x0.fields.psi, &x0.fields.pi, None)?;
        let rhs = orthogonality_rhs(&phi, &x0.q, &x0.p, &v);
        let lhs: Vec<f64> = fr.vectors.iter().map(|t| omega(&grid, &x0, t)).collect();
        let scale = rhs.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let err = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
        worst = worst.max(err);
    }
    Ok((worst < 1e-6, format!("20 random states, max relative error {worst:.1e}")))
}

fn simulator() -> Outcome {
    let rho = charge()?;
    let grid = rho.grid().clone();
    let b0 = Vector3::new(0.1, -0.2, 0.05);
    let v = axis(0.3);
    let y0 = soliton(&rho, &SolitonParams::new(b0, v)?)?;
    // an unperturbed soliton emits nothing, so the wrap horizon does not apply
    let cfg = SimConfig { check_horizon: false, ..SimConfig::for_grid(&grid, 20.0) };
    let (mut track, mut dist) = (0.0f64, 0.0f64);
    let (y1, traj) = run_nonlinear_with(&y0, &rho, &cfg, |_, t, y| {
        track = track.max((y.q - v * t - b0).norm());
        let exact = soliton(&rho, &SolitonParams::new(b0 + v * t, v)?)?;
        let mut d = y.fields.clone();
        d.axpy(-1.0, &exact.fields);
        dist = dist.max(d.full_norm(&grid));
        Ok(())
    })?;
    let drift = traj.energy_drift();
    let (y2, _) = run_nonlinear_with(&reverse_momenta(&y1), &rho, &cfg, |_, _, _| Ok(()))?;
    let rev = reverse_momenta(&y2).difference(&y0).norm(&grid) / y0.norm(&grid);
    let ok = drift < 1e-6 && track < 1e-4 && dist < 1e-4 && rev < 1e-8;
    Ok((
        ok,
        format!("energy drift {drift:.1e}, tracking {track:.1e}, field distance {dist:.1e}, reversal {rev:.1e}"),
    ))
}

fn perturbed_soliton() -> Outcome {
    let preset = ExperimentPreset::from_config(&preset_config("perturbed-soliton")?)?;
    let dir = tempfile::tempdir()?;
    let PresetOutcome::Run(run) = experiment::run_preset(&preset, dir.path())? else {
        return Ok((false, "preset did not run a simulation".into()));
    };
    let Some(d) = run.decay else {
        return Ok((false, "no decay report".into()));
    };
    let exp = |f: &Option<solilab::diagnostics::DecayFit>| f.map(|f| f.exponent).unwrap_or(f64::NAN);
    let ok = d.passes(-0.8);
    Ok((
        ok,
        format!(
            "d_beta {:.1e}, window [{}, {}], basin {}, modulation ratio bounded {}, Z exponent {:.2}, qdot exponent {:.2}, Cauchy decreasing {}, settled {}{}",
            preset.perturbation_amplitude(),
            d.window.0,
            d.window.1,
            d.in_basin,
            d.modulation_bounded,
            exp(&d.z_fit),
            exp(&d.qdot_fit),
            d.cauchy_decreasing,
            d.settled,
            if d.fit_errors.is_empty() { String::new() } else { format!(", fit errors {:?}", d.fit_errors) }
        ),
    ))
}

fn wave_decay() -> Outcome {
    let alpha = 2.25;
    let grid = Grid3::new(96, 48.0)?;
    let v = axis(0.3);
    // below 1e-10 of the peak outside radius 7
    let r0 = 7.0;
    let psi = grid.sample(|x| (-0.5 * x.norm_squared()).exp());
    let pi = grid.sample(|x| x[1] * (-0.5 * (x - Vector3::new(0.5, 0.0, 0.0)).norm_squared()).exp());
    let f0 = FieldPair::from_real(&grid, &psi, &pi);
    let horizon = (0.5 * grid.l() - r0) / (1.0 + v.norm());
    let mut t = Vec::new();
    let mut y = Vec::new();
    let mut s = 5.0;
    while s <= horizon {
        t.push(s);
        y.push(weighted_field_norm(&grid, &wave_group(&grid, &f0, &v, s), -alpha));
        s += 0.5;
    }
    let fit = fit_decay(&t, &y, (5.0, horizon))?;
    let bound = -(alpha - 1.0) + 0.2;
    Ok((
        fit.exponent <= bound,
        format!("exponent {:.2} (bound {bound:.2}) on [5, {horizon:.2}], residual {:.1e}", fit.exponent, fit.residual),
    ))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "admissibility", admissibility),
        (2, "soliton equations", soliton_equations),
        (3, "symplectic structure", symplectic_suite),
        (4, "linearized flow", linearized_suite),
        (5, "spectral data", spectral_suite),
        (6, "pairing identities", pairing_identities),
        (7, "nonlinear simulator", simulator),
        (8, "perturbed soliton", perturbed_soliton),
        (9, "wave group decay", wave_decay),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (no, name, run) in criteria {
        if !only.is_empty() && !only.contains(&no) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = run().unwrap_or_else(|e| (false, format!("error: {e}")));
        let secs = start.elapsed().as_secs_f64();
        println!("criterion {no} {name}: {} ({detail}; {secs:.1} s)", if ok { "PASS" } else { "FAIL" });
        failed += usize::from(!ok);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
