//! Symplectic form, the symplectic-orthogonal projector and the nonlinear
//! projection onto the soliton manifold.
//!
//! `Ω(Y₁, Y₂) = ∫(ψ₁π₂ - π₁ψ₂) + q₁·p₂ - p₁·q₂`. Every pairing with the frame is
//! evaluated in a single sweep over the modes; the frame itself is never
//! stored unless asked for.

use nalgebra::{Matrix6, Vector3, Vector6};
use num_complex::Complex64;
use serde::Serialize;

use crate::charge::ChargeDensity;
use crate::error::{Error, Result};
use crate::grid::Grid3;
use crate::soliton::{b_inverse, check_box, mode_frame, momentum, tangent_frame, PhaseState, SolitonParams, Tangent};

/// Symplectic form of two tangent vectors (or states).
pub fn omega(grid: &Grid3, a: &Tangent, b: &Tangent) -> f64 {
    grid.inner(&a.fields.psi, &b.fields.pi) - grid.inner(&a.fields.pi, &b.fields.psi) + a.q.dot(&b.p)
        - a.p.dot(&b.q)
}

/// Matrix `Ω_{lj} = Ω(τ_l, τ_j)` of the frame at velocity `v`.
pub fn omega_matrix(rho: &ChargeDensity, v: &Vector3<f64>) -> Matrix6<f64> {
    let grid = rho.grid();
    let rh = rho.rho_hat();
    let mut m = [[0.0; 6]; 6];
    for idx in 0..grid.len() {
        let r = rh[idx].re;
        if r == 0.0 {
            continue;
        }
        let f = mode_frame(&grid.k_vec(idx), r, v);
        for l in 0..6 {
            let (al, bl) = f.tau[l];
            for j in (l + 1)..6 {
                let (aj, bj) = f.tau[j];
                m[l][j] += (al * bj.conj() - bl * aj.conj()).re;
            }
        }
    }
    let dv = grid.mode_volume();
    let binv = b_inverse(v);
    let mut out = Matrix6::zeros();
    for l in 0..6 {
        for j in (l + 1)..6 {
            let mut val = m[l][j] * dv;
            // finite-dimensional part: τ_j has q = e_j (j < 3), τ_{3+j} has p = B⁻¹e_j
            if l < 3 && j >= 3 {
                val += binv[(l, j - 3)];
            }
            out[(l, j)] = val;
            out[(j, l)] = -val;
        }
    }
    out
}

/// Fails when the frame matrix is numerically singular.
pub fn check_nondegenerate(om: &Matrix6<f64>) -> Result<f64> {
    let det = om.determinant();
    let scale = om.abs().max();
    if !(det.abs() > 1e-12 * scale.powi(6)) {
        return Err(Error::Degeneracy(format!("det Ω(v) = {det:e} at scale {scale:e}")));
    }
    Ok(det)
}

/// Pairings `Ω(Z, τ_j(v'))` for `Z = T_{-b} Y - S(0, v)` without forming `Z`,
/// together with the `b`-derivatives `Ω(Z, ∂_{b_m} τ_j)`.
struct Sweep {
    g: [f64; 6],
    db: [[f64; 6]; 3],
}

fn sweep(rho: &ChargeDensity, y: &PhaseState, b: &Vector3<f64>, v: &Vector3<f64>, vt: &Vector3<f64>, with_db: bool) -> Sweep {
    let grid = rho.grid();
    let rh = rho.rho_hat();
    let n = grid.n();
    let [p0, p1, p2] = grid.phase_tables(&(-b));
    let kk = grid.wavenumbers();
    let same = v == vt;
    let mut g = [0.0; 6];
    let mut db = [[0.0; 6]; 3];
    for j0 in 0..n {
        for j1 in 0..n {
            let ph01 = p0[j0] * p1[j1];
            let base = (j0 * n + j1) * n;
            for j2 in 0..n {
                let idx = base + j2;
                let r = rh[idx].re;
                let ph = ph01 * p2[j2];
                let mut zpsi = y.fields.psi[idx] * ph;
                let mut zpi = y.fields.pi[idx] * ph;
                if r == 0.0 {
                    continue;
                }
                let k = Vector3::new(kk[j0], kk[j1], kk[j2]);
                let f = mode_frame(&k, r, v);
                zpsi -= f.psi;
                zpi -= f.pi;
                let ft = if same { f } else { mode_frame(&k, r, vt) };
                for j in 0..6 {
                    let (ta, tb) = ft.tau[j];
                    let c1 = zpsi * tb.conj();
                    let c2 = zpi * ta.conj();
                    g[j] += c1.re - c2.re;
                    if with_db {
                        let im = c1.im - c2.im;
                        db[0][j] += k[0] * im;
                        db[1][j] += k[1] * im;
                        db[2][j] += k[2] * im;
                    }
                }
            }
        }
    }
    let dv = grid.mode_volume();
    let zq = y.q - b;
    let zp = y.p - momentum(v);
    let binv = b_inverse(vt);
    for j in 0..6 {
        g[j] *= dv;
        for row in db.iter_mut() {
            row[j] *= dv;
        }
        // Ω(Z, τ) finite part: Q·p_τ - P·q_τ
        if j < 3 {
            g[j] -= zp[j];
        } else {
            g[j] += zq.dot(&binv.column(j - 3));
        }
    }
    Sweep { g, db }
}

/// Coefficients `c` with `Π_v Z = Σ_j c_j τ_j`.
///
/// They solve `Ω(Z - Σ c_i τ_i, τ_j) = 0`, i.e. `Ωᵀ c = (Ω(Z, τ_j))_j`.
pub fn projector_coefficients(om: &Matrix6<f64>, pairings: &Vector6<f64>) -> Result<Vector6<f64>> {
    om.transpose()
        .lu()
        .solve(pairings)
        .ok_or_else(|| Error::Degeneracy("frame matrix is singular".into()))
}

/// Splits a tangent vector at `σ` into `(P_v Z, Π_v Z)`.
pub fn project_linear(rho: &ChargeDensity, sigma: &SolitonParams, z: &Tangent) -> Result<(Tangent, Tangent)> {
    let grid = rho.grid();
    let frame = tangent_frame(rho, sigma)?;
    let om = omega_matrix(rho, &sigma.v);
    check_nondegenerate(&om)?;
    let g = Vector6::from_iterator(frame.vectors.iter().map(|t| omega(grid, z, t)));
    let c = projector_coefficients(&om, &g)?;
    let mut pi_z = PhaseState::zeros(grid);
    for (cj, t) in c.iter().zip(&frame.vectors) {
        pi_z.axpy(*cj, t);
    }
    let p_z = z.difference(&pi_z);
    Ok((p_z, pi_z))
}

/// Options of the nonlinear projection.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProjectionOptions {
    pub max_iters: usize,
    pub v_cap: f64,
    /// Convergence threshold on the Newton step, relative to `max(1, |σ|)`.
    pub tol: f64,
    /// Finite-difference step for the velocity derivatives of the frame.
    pub fd_step: f64,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        ProjectionOptions { max_iters: 50, v_cap: 0.95, tol: 1e-10, fd_step: 1e-5 }
    }
}

/// Result of the nonlinear projection.
#[derive(Debug, Clone)]
pub struct Projection {
    pub sigma: SolitonParams,
    /// `Z = T_{-b}(Y - S(σ))`, the transversal component in the soliton frame.
    pub z: Tangent,
    pub iterations: usize,
    /// Largest `|Ω(Z, τ_j)|` at the solution.
    pub residual: f64,
}

/// Finds `σ` with `Ω(Y - S(σ), τ_j(σ)) = 0` by Newton iteration from `guess`.
pub fn project_nonlinear(
    rho: &ChargeDensity,
    y: &PhaseState,
    guess: &SolitonParams,
    opts: &ProjectionOptions,
) -> Result<Projection> {
    check_box(rho)?;
    let grid = rho.grid();
    let mut s = guess.as_array();
    for it in 1..=opts.max_iters {
        let sig = SolitonParams::from_array(&s);
        if !(sig.v.norm() < opts.v_cap) {
            return Err(Error::Basin(format!("|v| = {} reached the cap {}", sig.v.norm(), opts.v_cap)));
        }
        let base = sweep(rho, y, &sig.b, &sig.v, &sig.v, true);
        let om = omega_matrix(rho, &sig.v);
        check_nondegenerate(&om)?;
        let mut jac = Matrix6::zeros();
        for m in 0..6 {
            for j in 0..6 {
                jac[(j, m)] = -om[(m, j)];
            }
        }
        for m in 0..3 {
            for j in 0..6 {
                jac[(j, m)] += base.db[m][j];
            }
            let mut vp = sig.v;
            let mut vm = sig.v;
            vp[m] += opts.fd_step;
            vm[m] -= opts.fd_step;
            let gp = sweep(rho, y, &sig.b, &sig.v, &vp, false).g;
            let gm = sweep(rho, y, &sig.b, &sig.v, &vm, false).g;
            for j in 0..6 {
                jac[(j, 3 + m)] += (gp[j] - gm[j]) / (2.0 * opts.fd_step);
            }
        }
        let g = Vector6::from_row_slice(&base.g);
        let step = jac
            .lu()
            .solve(&(-g))
            .ok_or_else(|| Error::Basin("singular Newton system".into()))?;
        for i in 0..6 {
            s[i] += step[i];
        }
        if !s.iter().all(|x| x.is_finite()) {
            return Err(Error::Basin("Newton iterate is not finite".into()));
        }
        let size = s.iter().fold(1.0f64, |a, x| a.max(x.abs()));
        if step.amax() <= opts.tol * size {
            let sigma = SolitonParams::from_array(&s);
            if !(sigma.v.norm() < opts.v_cap) {
                return Err(Error::Basin(format!("|v| = {} reached the cap", sigma.v.norm())));
            }
            let fin = sweep(rho, y, &sigma.b, &sigma.v, &sigma.v, false);
            let residual = fin.g.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            let z = transversal_part(grid, rho, y, &sigma)?;
            return Ok(Projection { sigma, z, iterations: it, residual });
        }
    }
    Err(Error::Basin(format!("Newton did not converge in {} iterations", opts.max_iters)))
}

/// `T_{-b}(Y - S(σ))`.
pub fn transversal_part(grid: &Grid3, rho: &ChargeDensity, y: &PhaseState, sigma: &SolitonParams) -> Result<Tangent> {
    let local = y.translated(grid, &(-sigma.b));
    let s0 = crate::soliton::soliton(rho, &SolitonParams { b: Vector3::zeros(), v: sigma.v })?;
    Ok(local.difference(&s0))
}

/// Pairings `Ω(Z, τ_j(σ))` with `Z` given in the soliton frame (`b = 0`).
pub fn frame_pairings(rho: &ChargeDensity, z: &Tangent, v: &Vector3<f64>) -> Vector6<f64> {
    let grid = rho.grid();
    let rh = rho.rho_hat();
    let mut g = [0.0; 6];
    for idx in 0..grid.len() {
        let r = rh[idx].re;
        if r == 0.0 {
            continue;
        }
        let f = mode_frame(&grid.k_vec(idx), r, v);
        for (j, (ta, tb)) in f.tau.iter().enumerate() {
            g[j] += (z.fields.psi[idx] * tb.conj() - z.fields.pi[idx] * ta.conj()).re;
        }
    }
    let dv = grid.mode_volume();
    let binv = b_inverse(v);
    Vector6::from_fn(|j, _| {
        let mut x = g[j] * dv;
        if j < 3 {
            x -= z.p[j];
        } else {
            x += z.q.dot(&binv.column(j - 3));
        }
        x
    })
}

/// `true` when every mode value is finite.
pub fn is_finite(t: &Tangent) -> bool {
    let ok = |s: &[Complex64]| s.iter().all(|z| z.re.is_finite() && z.im.is_finite());
    ok(&t.fields.psi) && ok(&t.fields.pi) && t.q.iter().all(|x| x.is_finite()) && t.p.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charge::make_admissible_density;
    use crate::soliton::soliton;

    fn setup() -> ChargeDensity {
        let grid = Grid3::new(64, 16.0).unwrap();
        make_admissible_density(&grid, 1.0, 1.0).unwrap()
    }

    #[test]
    fn omega_matrix_matches_frame_pairings() {
        let rho = setup();
        let grid = rho.grid().clone();
        let s = SolitonParams::new(Vector3::new(0.2, 0.0, -0.1), Vector3::new(0.3, 0.1, 0.0)).unwrap();
        let fr = tangent_frame(&rho, &s).unwrap();
        let om = omega_matrix(&rho, &s.v);
        for l in 0..6 {
            for j in 0..6 {
                let direct = omega(&grid, &fr.vectors[l], &fr.vectors[j]);
                assert!((direct - om[(l, j)]).abs() < 1e-10 * om.abs().max(), "{l}{j}");
            }
        }
        assert!(check_nondegenerate(&om).is_ok());
    }

    #[test]
    fn fused_sweep_agrees_with_explicit_difference() {
        let rho = setup();
        let grid = rho.grid().clone();
        let s = SolitonParams::new(Vector3::new(0.5, -0.3, 0.1), Vector3::new(0.2, 0.0, 0.1)).unwrap();
        let mut y = soliton(&rho, &s).unwrap();
        y.fields.psi.iter_mut().enumerate().for_each(|(i, z)| *z *= 1.0 + 1e-3 * ((i % 7) as f64));
        y.q += Vector3::new(0.01, 0.0, 0.02);
        let sw = sweep(&rho, &y, &s.b, &s.v, &s.v, false);
        let z = transversal_part(&grid, &rho, &y, &s).unwrap();
        let direct = frame_pairings(&rho, &z, &s.v);
        for j in 0..6 {
            assert!((sw.g[j] - direct[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn soliton_is_a_fixed_point() {
        let rho = setup();
        let s = SolitonParams::new(Vector3::new(0.3, 0.2, -0.4), Vector3::new(0.3, 0.0, 0.1)).unwrap();
        let y = soliton(&rho, &s).unwrap();
        let guess = SolitonParams::new(s.b + Vector3::new(0.1, -0.05, 0.0), s.v + Vector3::new(0.02, 0.0, 0.0)).unwrap();
        let p = project_nonlinear(&rho, &y, &guess, &ProjectionOptions::default()).unwrap();
        for (a, b) in p.sigma.as_array().iter().zip(s.as_array()) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
