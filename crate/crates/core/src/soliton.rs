//! Phase-space states, travelling solitons and their tangent frames.
//!
//! A soliton with parameters `σ = (b, v)` is `S(σ) = (ψ_v(x - b), π_v(x - b), b, p_v)`
//! with `Λ_v ψ_v = -ρ`, `Λ_v = -Δ + (v·∇)²`, `π_v = -v·∇ψ_v` and `p_v = γ v`.
//! In Fourier space `ψ̂_v = -ρ̂ / (|k|² - (k·v)²)`.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::charge::ChargeDensity;
use crate::error::{Error, Result};
use crate::grid::{Grid3, Spectrum};

/// Largest admissible speed for soliton parameters.
pub const SPEED_LIMIT: f64 = 1.0 - 1e-12;

/// Field pair `(ψ, π)`, stored as spectra on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPair {
    pub psi: Spectrum,
    pub pi: Spectrum,
}

impl FieldPair {
    pub fn zeros(grid: &Grid3) -> Self {
        FieldPair { psi: grid.zeros(), pi: grid.zeros() }
    }

    pub fn from_real(grid: &Grid3, psi: &[f64], pi: &[f64]) -> Self {
        FieldPair { psi: grid.forward(psi), pi: grid.forward(pi) }
    }

    pub fn axpy(&mut self, a: f64, other: &FieldPair) {
        for (x, y) in self.psi.iter_mut().zip(&other.psi) {
            *x += y * a;
        }
        for (x, y) in self.pi.iter_mut().zip(&other.pi) {
            *x += y * a;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.psi.iter_mut().for_each(|x| *x *= a);
        self.pi.iter_mut().for_each(|x| *x *= a);
    }

    pub fn translate(&mut self, grid: &Grid3, a: &Vector3<f64>) {
        let [p0, p1, p2] = grid.phase_tables(a);
        let n = grid.n();
        for j0 in 0..n {
            for j1 in 0..n {
                let ph = p0[j0] * p1[j1];
                let base = (j0 * n + j1) * n;
                for j2 in 0..n {
                    let e = ph * p2[j2];
                    self.psi[base + j2] *= e;
                    self.pi[base + j2] *= e;
                }
            }
        }
    }

    /// Energy-space norm `(‖∇ψ‖² + ‖π‖²)^{1/2}`.
    pub fn energy_norm(&self, grid: &Grid3) -> f64 {
        (grid.gradient_norm(&self.psi).powi(2) + grid.l2_norm(&self.pi).powi(2)).sqrt()
    }

    /// Norm `(‖ψ‖² + ‖∇ψ‖² + ‖π‖²)^{1/2}`.
    pub fn full_norm(&self, grid: &Grid3) -> f64 {
        (grid.l2_norm(&self.psi).powi(2) + self.energy_norm(grid).powi(2)).sqrt()
    }
}

/// Full state `(ψ, π, q, p)`; the same layout holds tangent vectors `(Ψ, Π, Q, P)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub fields: FieldPair,
    pub q: Vector3<f64>,
    pub p: Vector3<f64>,
}

/// Tangent vector of the phase space.
pub type Tangent = PhaseState;

impl PhaseState {
    pub fn zeros(grid: &Grid3) -> Self {
        PhaseState { fields: FieldPair::zeros(grid), q: Vector3::zeros(), p: Vector3::zeros() }
    }

    pub fn axpy(&mut self, a: f64, other: &PhaseState) {
        self.fields.axpy(a, &other.fields);
        self.q += a * other.q;
        self.p += a * other.p;
    }

    pub fn scaled(&self, a: f64) -> PhaseState {
        let mut out = self.clone();
        out.fields.scale(a);
        out.q *= a;
        out.p *= a;
        out
    }

    pub fn difference(&self, other: &PhaseState) -> PhaseState {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Group action `T_a`: fields shifted by `a`, `q ↦ q + a`.
    pub fn translated(&self, grid: &Grid3, a: &Vector3<f64>) -> PhaseState {
        let mut out = self.clone();
        out.fields.translate(grid, a);
        out.q += a;
        out
    }

    /// Shifts only the field part, which is how translations act on tangent vectors.
    pub fn shifted_tangent(&self, grid: &Grid3, a: &Vector3<f64>) -> Tangent {
        let mut out = self.clone();
        out.fields.translate(grid, a);
        out
    }

    /// Norm `‖ψ‖ + ‖∇ψ‖ + ‖π‖ + |q| + |p|` used to compare states.
    pub fn norm(&self, grid: &Grid3) -> f64 {
        grid.l2_norm(&self.fields.psi)
            + grid.gradient_norm(&self.fields.psi)
            + grid.l2_norm(&self.fields.pi)
            + self.q.norm()
            + self.p.norm()
    }
}

/// Soliton parameters `σ = (b, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolitonParams {
    pub b: Vector3<f64>,
    pub v: Vector3<f64>,
}

impl SolitonParams {
    pub fn new(b: Vector3<f64>, v: Vector3<f64>) -> Result<Self> {
        check_speed(&v)?;
        Ok(SolitonParams { b, v })
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.b[0], self.b[1], self.b[2], self.v[0], self.v[1], self.v[2]]
    }

    pub fn from_array(s: &[f64; 6]) -> Self {
        SolitonParams { b: Vector3::new(s[0], s[1], s[2]), v: Vector3::new(s[3], s[4], s[5]) }
    }
}

fn check_speed(v: &Vector3<f64>) -> Result<()> {
    let s = v.norm();
    if !(s < SPEED_LIMIT) {
        return Err(Error::Domain(format!("speed |v| = {s} must be below 1")));
    }
    Ok(())
}

/// Lorentz factor `γ = (1 - v²)^{-1/2}`.
pub fn gamma(v: &Vector3<f64>) -> f64 {
    1.0 / (1.0 - v.norm_squared()).sqrt()
}

/// `ν = (1 - v²)^{1/2}`.
pub fn nu(v: &Vector3<f64>) -> f64 {
    (1.0 - v.norm_squared()).sqrt()
}

/// Mechanical momentum `p_v = γ v`.
pub fn momentum(v: &Vector3<f64>) -> Vector3<f64> {
    gamma(v) * v
}

/// Velocity of momentum `p`, `p / (1 + p²)^{1/2}`.
pub fn velocity_of(p: &Vector3<f64>) -> Vector3<f64> {
    p / (1.0 + p.norm_squared()).sqrt()
}

/// `B_v = ν (I - v ⊗ v)`, the Jacobian of `p ↦ velocity_of(p)` at `p_v`.
pub fn b_matrix(v: &Vector3<f64>) -> Matrix3<f64> {
    nu(v) * (Matrix3::identity() - v * v.transpose())
}

/// `B_v^{-1} = γ (I + γ² v ⊗ v)`, the Jacobian of `v ↦ p_v`.
pub fn b_inverse(v: &Vector3<f64>) -> Matrix3<f64> {
    let g = gamma(v);
    g * (Matrix3::identity() + g * g * v * v.transpose())
}

/// Per-mode soliton data at `b = 0`.
#[derive(Debug, Clone, Copy)]
pub struct ModeFrame {
    pub psi: Complex64,
    pub pi: Complex64,
    /// Field parts of `τ_1..τ_6` as `(Ψ̂, Π̂)`.
    pub tau: [(Complex64, Complex64); 6],
}

/// Soliton and frame coefficients of a single mode with wavevector `k` and `ρ̂ = r`.
#[inline]
pub fn mode_frame(k: &Vector3<f64>, r: f64, v: &Vector3<f64>) -> ModeFrame {
    let zero = Complex64::new(0.0, 0.0);
    let k2 = k.norm_squared();
    if k2 == 0.0 || r == 0.0 {
        return ModeFrame { psi: zero, pi: zero, tau: [(zero, zero); 6] };
    }
    let kv = k.dot(v);
    let d = k2 - kv * kv;
    let psi = Complex64::new(-r / d, 0.0);
    let pi = Complex64::new(0.0, kv) * psi;
    let mut tau = [(zero, zero); 6];
    for j in 0..3 {
        let ik = Complex64::new(0.0, k[j]);
        tau[j] = (ik * psi, ik * pi);
        let dpsi = Complex64::new(-r * 2.0 * kv * k[j] / (d * d), 0.0);
        let dpi = ik * psi + Complex64::new(0.0, kv) * dpsi;
        tau[3 + j] = (dpsi, dpi);
    }
    ModeFrame { psi, pi, tau }
}

/// Soliton fields `(ψ_v, π_v)` centred at the origin.
pub fn soliton_profile(rho: &ChargeDensity, v: &Vector3<f64>) -> Result<FieldPair> {
    check_speed(v)?;
    let grid = rho.grid();
    let rh = rho.rho_hat();
    let mut psi = grid.zeros();
    let mut pi = grid.zeros();
    for idx in 0..grid.len() {
        let m = mode_frame(&grid.k_vec(idx), rh[idx].re, v);
        psi[idx] = m.psi;
        pi[idx] = m.pi;
    }
    Ok(FieldPair { psi, pi })
}

/// Checks the box is large enough to hold the charge without overlap with its images.
pub fn check_box(rho: &ChargeDensity) -> Result<()> {
    let r = rho.effective_radius();
    let l = rho.grid().l();
    if l <= 2.0 * r {
        return Err(Error::Domain(format!(
            "box length {l} must exceed twice the effective radius {r}"
        )));
    }
    Ok(())
}

/// Soliton state `S(σ)`.
pub fn soliton(rho: &ChargeDensity, sigma: &SolitonParams) -> Result<PhaseState> {
    check_box(rho)?;
    let mut fields = soliton_profile(rho, &sigma.v)?;
    fields.translate(rho.grid(), &sigma.b);
    Ok(PhaseState { fields, q: sigma.b, p: momentum(&sigma.v) })
}

/// Relative residuals of the two soliton equations, evaluated in real space
/// against the sampled density.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SolitonResiduals {
    /// `‖Λ_v ψ + ρ‖ / ‖ρ‖`.
    pub elliptic: f64,
    /// `‖π + v·∇ψ‖ / max(‖π‖, ‖∇ψ‖)`.
    pub transport: f64,
    /// `|∫ ψ ∇ρ| / (‖ψ‖ ‖∇ρ‖)`, the force on the particle.
    pub force: f64,
}

pub fn soliton_residuals(rho: &ChargeDensity, sigma: &SolitonParams, state: &PhaseState) -> SolitonResiduals {
    let grid = rho.grid();
    let v = sigma.v;
    let mut local = state.fields.clone();
    local.translate(grid, &(-sigma.b));
    let mut lam = grid.zeros();
    let mut adv = grid.zeros();
    for idx in 0..grid.len() {
        let k = grid.k_vec(idx);
        let kv = k.dot(&v);
        lam[idx] = local.psi[idx] * (k.norm_squared() - kv * kv);
        adv[idx] = local.pi[idx] - Complex64::new(0.0, kv) * local.psi[idx];
    }
    let lam_real = grid.inverse(&lam);
    let num: f64 = lam_real.iter().zip(rho.samples()).map(|(a, b)| (a + b).powi(2)).sum();
    let den: f64 = rho.samples().iter().map(|b| b * b).sum();
    let elliptic = (num / den).sqrt();
    let scale = grid.l2_norm(&local.pi).max(grid.gradient_norm(&local.psi));
    let transport = grid.l2_norm(&adv) / scale;
    let mut force: f64 = 0.0;
    let mut grad_norm = 0.0;
    for j in 0..3 {
        let drho = grid.derivative(rho.rho_hat(), j);
        force = force.max(grid.inner(&local.psi, &drho).abs());
        grad_norm += grid.l2_norm(&drho).powi(2);
    }
    let force = force / (grid.l2_norm(&local.psi) * grad_norm.sqrt());
    SolitonResiduals { elliptic, transport, force }
}

/// The six tangent vectors `τ_j = ∂_{σ_j} S(σ)`.
#[derive(Debug, Clone)]
pub struct TangentFrame {
    pub sigma: SolitonParams,
    pub vectors: Vec<Tangent>,
}

/// Tangent frame at `σ`: `τ_j = (-∂_jψ_v, -∂_jπ_v, e_j, 0)` and
/// `τ_{3+j} = (∂_{v_j}ψ_v, ∂_{v_j}π_v, 0, ∂_{v_j}p_v)`, all shifted by `b`.
pub fn tangent_frame(rho: &ChargeDensity, sigma: &SolitonParams) -> Result<TangentFrame> {
    check_speed(&sigma.v)?;
    let grid = rho.grid();
    let rh = rho.rho_hat();
    let mut vectors: Vec<Tangent> = (0..6).map(|_| PhaseState::zeros(grid)).collect();
    for idx in 0..grid.len() {
        let m = mode_frame(&grid.k_vec(idx), rh[idx].re, &sigma.v);
        for (t, (a, b)) in vectors.iter_mut().zip(m.tau) {
            t.fields.psi[idx] = a;
            t.fields.pi[idx] = b;
        }
    }
    let binv = b_inverse(&sigma.v);
    for j in 0..3 {
        vectors[j].q[j] = 1.0;
        vectors[3 + j].p = binv.column(j).into();
    }
    for t in vectors.iter_mut() {
        t.fields.translate(grid, &sigma.b);
    }
    Ok(TangentFrame { sigma: *sigma, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charge::make_admissible_density;

    fn setup() -> ChargeDensity {
        let grid = Grid3::new(64, 16.0).unwrap();
        make_admissible_density(&grid, 1.0, 1.0).unwrap()
    }

    #[test]
    fn velocity_quantities_at_three_fifths() {
        let v = Vector3::new(0.6, 0.0, 0.0);
        assert!((gamma(&v) - 1.25).abs() < 1e-15);
        assert!((nu(&v) - 0.8).abs() < 1e-15);
        assert!((momentum(&v) - Vector3::new(0.75, 0.0, 0.0)).norm() < 1e-15);
        let b = b_matrix(&v);
        let expected = Matrix3::from_diagonal(&Vector3::new(0.512, 0.8, 0.8));
        assert!((b - expected).norm() < 1e-15);
        assert!((b * b_inverse(&v) - Matrix3::identity()).norm() < 1e-14);
    }

    #[test]
    fn b_inverse_is_momentum_jacobian() {
        let v = Vector3::new(0.2, -0.3, 0.4);
        let e = 1e-6;
        let binv = b_inverse(&v);
        for j in 0..3 {
            let mut vp = v;
            let mut vm = v;
            vp[j] += e;
            vm[j] -= e;
            let col = (momentum(&vp) - momentum(&vm)) / (2.0 * e);
            assert!((col - binv.column(j)).norm() < 1e-8);
        }
        let p = momentum(&v);
        assert!((velocity_of(&p) - v).norm() < 1e-15);
    }

    #[test]
    fn rejects_luminal_speed() {
        let rho = setup();
        let s = SolitonParams { b: Vector3::zeros(), v: Vector3::new(1.0, 0.0, 0.0) };
        assert!(matches!(soliton(&rho, &s), Err(Error::Domain(_))));
    }

    #[test]
    fn residuals_are_small() {
        let rho = setup();
        for v in [Vector3::zeros(), Vector3::new(0.3, 0.0, 0.0), Vector3::new(0.2, 0.3, -0.1)] {
            let s = SolitonParams::new(Vector3::new(0.4, -0.2, 0.1), v).unwrap();
            let st = soliton(&rho, &s).unwrap();
            let r = soliton_residuals(&rho, &s, &st);
            assert!(r.elliptic < 1e-8, "{r:?}");
            assert!(r.transport < 1e-12, "{r:?}");
            assert!(r.force < 1e-12, "{r:?}");
        }
    }

    #[test]
    fn static_soliton_matches_newtonian_potential() {
        let rho = setup();
        let grid = rho.grid().clone();
        let st = soliton_profile(&rho, &Vector3::zeros()).unwrap();
        let psi = grid.inverse(&st.psi);
        let prof = rho.profile().clone();
        let quad = crate::quad::GaussLegendre::new(200);
        let rmax = prof.radius(1e-18);
        let potential = |r: f64| {
            let inner = if r > 0.0 {
                quad.integrate(0.0, r, |s| prof.value(s) * s * s) / r
            } else {
                0.0
            };
            let outer = quad.integrate(r, rmax.max(r), |s| prof.value(s) * s);
            -(inner + outer)
        };
        let peak = psi.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for idx in [grid.index(32, 32, 32), grid.index(33, 32, 32), grid.index(36, 39, 30), grid.index(40, 28, 32)] {
            let r = grid.position(idx).norm();
            assert!((psi[idx] - potential(r)).abs() < 1e-4 * peak, "{idx}");
        }
    }

    #[test]
    fn transport_identity_at_rest_derivative() {
        // ∂_{v_j} π_v at v = 0 equals -∂_j ψ_0.
        let rho = setup();
        let grid = rho.grid().clone();
        let s = SolitonParams::new(Vector3::zeros(), Vector3::zeros()).unwrap();
        let fr = tangent_frame(&rho, &s).unwrap();
        let psi0 = soliton_profile(&rho, &Vector3::zeros()).unwrap().psi;
        for j in 0..3 {
            let mut expect = grid.derivative(&psi0, j);
            expect.iter_mut().for_each(|z| *z = -*z);
            let err: f64 = fr.vectors[3 + j]
                .fields
                .pi
                .iter()
                .zip(&expect)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-14);
        }
    }

    #[test]
    fn frame_matches_finite_differences() {
        let rho = setup();
        let grid = rho.grid().clone();
        let s = SolitonParams::new(Vector3::new(0.3, 0.1, -0.2), Vector3::new(0.3, -0.1, 0.2)).unwrap();
        let fr = tangent_frame(&rho, &s).unwrap();
        let e = 1e-6;
        for j in 0..6 {
            let mut a = s.as_array();
            let mut b = s.as_array();
            a[j] += e;
            b[j] -= e;
            let sp = soliton(&rho, &SolitonParams::from_array(&a)).unwrap();
            let sm = soliton(&rho, &SolitonParams::from_array(&b)).unwrap();
            let mut fd = sp.difference(&sm);
            fd = fd.scaled(0.5 / e);
            let err = fd.difference(&fr.vectors[j]).norm(&grid) / fr.vectors[j].norm(&grid);
            assert!(err < 1e-7, "{j} {err}");
        }
    }
}
