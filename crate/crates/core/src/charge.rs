//! Radial charge densities of the form `ρ = P(Δ) G` with `G` a Gaussian.
//!
//! With `G(x) = A e^{-|x|²/(2w²)}` the transform is `Ĝ(k) = A w³ e^{-w²|k|²/2}`
//! and `ρ̂(k) = P(-|k|²) Ĝ(k)`. The admissible family uses `P(Δ) = Δ³`, which
//! makes every moment of order up to five vanish and keeps `ρ̂` nonzero away
//! from the origin.

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Grid3, Spectrum};

/// Relative level below which a spectral coefficient counts as unresolved.
pub const ALIAS_TOL: f64 = 1e-12;
/// Relative level defining the effective radius of a density.
pub const RADIUS_TOL: f64 = 1e-8;
/// Default relative floor for the Wiener check.
pub const WIENER_FLOOR: f64 = 1e-12;
/// Default moment tolerance relative to `‖ρ‖_{L¹}`.
pub const MOMENT_TOL: f64 = 1e-8;

/// Polynomial in one variable, lowest degree first.
pub type Poly = Vec<f64>;

fn poly_eval(p: &[f64], x: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

fn poly_deriv(p: &[f64]) -> Poly {
    p.iter().enumerate().skip(1).map(|(i, &c)| i as f64 * c).collect()
}

fn poly_add_scaled(acc: &mut Poly, p: &[f64], s: f64) {
    if acc.len() < p.len() {
        acc.resize(p.len(), 0.0);
    }
    for (a, &c) in acc.iter_mut().zip(p) {
        *a += s * c;
    }
}

pub(crate) fn poly_mul(a: &[f64], b: &[f64]) -> Poly {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Maps `Q` to `Q̃` with `Δ[Q(s) e^{-s}] = Q̃(s) e^{-s} / w²`, where `s = r²/(2w²)`.
fn laplace_step(q: &[f64]) -> Poly {
    let d1 = poly_deriv(q);
    let d2 = poly_deriv(&d1);
    // 2s (Q'' - 2Q' + Q) + 3 (Q' - Q)
    let mut inner = q.to_vec();
    poly_add_scaled(&mut inner, &d1, -2.0);
    poly_add_scaled(&mut inner, &d2, 1.0);
    let mut out: Poly = std::iter::once(0.0).chain(inner.iter().map(|c| 2.0 * c)).collect();
    poly_add_scaled(&mut out, &d1, 3.0);
    poly_add_scaled(&mut out, q, -3.0);
    out
}

/// Radial function `Σ_m c_m Δ^m [A e^{-r²/(2w²)}]` in closed form.
///
/// Stored as `A e^{-s} R(s)` with `s = r²/(2w²)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussPoly {
    pub amplitude: f64,
    pub width: f64,
    /// Coefficients `c_m` of the operator polynomial `P(Δ)`.
    pub operator: Poly,
    /// `R(s)` in the representation above.
    pub radial: Poly,
}

impl GaussPoly {
    pub fn new(amplitude: f64, width: f64, operator: Poly) -> Self {
        let mut radial = Vec::new();
        let mut q: Poly = vec![1.0];
        for (m, &c) in operator.iter().enumerate() {
            if m > 0 {
                q = laplace_step(&q);
            }
            poly_add_scaled(&mut radial, &q, c / width.powi(2 * m as i32));
        }
        GaussPoly { amplitude, width, operator, radial }
    }

    fn s(&self, r: f64) -> f64 {
        r * r / (2.0 * self.width * self.width)
    }

    pub fn value(&self, r: f64) -> f64 {
        let s = self.s(r);
        self.amplitude * (-s).exp() * poly_eval(&self.radial, s)
    }

    /// Radial derivative `d/dr`.
    pub fn radial_derivative(&self, r: f64) -> f64 {
        let s = self.s(r);
        let d = poly_deriv(&self.radial);
        self.amplitude * (-s).exp() * (poly_eval(&d, s) - poly_eval(&self.radial, s)) * r
            / (self.width * self.width)
    }

    /// `∂_i ∂_j` of the radial function at `x`.
    pub fn hessian(&self, x: &Vector3<f64>, i: usize, j: usize) -> f64 {
        let w2 = self.width * self.width;
        let s = x.norm_squared() / (2.0 * w2);
        let d1 = poly_deriv(&self.radial);
        let d2 = poly_deriv(&d1);
        let r0 = poly_eval(&self.radial, s);
        let r1 = poly_eval(&d1, s);
        let r2 = poly_eval(&d2, s);
        let u1 = r1 - r0;
        let u2 = r2 - 2.0 * r1 + r0;
        let delta = if i == j { 1.0 } else { 0.0 };
        self.amplitude * (-s).exp() * (u2 * x[i] * x[j] / (w2 * w2) + u1 * delta / w2)
    }

    /// Symbol `P(-|k|²)`.
    pub fn symbol(&self, k: f64) -> f64 {
        let s = -k * k;
        self.operator.iter().rev().fold(0.0, |acc, &c| acc * s + c)
    }

    /// Transform of the radial function at `|k| = k`.
    pub fn hat(&self, k: f64) -> f64 {
        let w = self.width;
        self.symbol(k) * self.amplitude * w.powi(3) * (-0.5 * w * w * k * k).exp()
    }

    /// Largest `|ρ̂|` along a ray, by dense sampling.
    pub fn hat_max(&self) -> f64 {
        let kmax = 40.0 / self.width;
        (0..=8000)
            .map(|i| self.hat(kmax * i as f64 / 8000.0).abs())
            .fold(0.0, f64::max)
    }

    /// Radius beyond which `|value|` stays below `tol · max|value|`.
    pub fn radius(&self, tol: f64) -> f64 {
        let steps = 8000;
        let rmax = 60.0 * self.width;
        let vals: Vec<f64> = (0..=steps)
            .map(|i| self.value(rmax * i as f64 / steps as f64).abs())
            .collect();
        let peak = vals.iter().cloned().fold(0.0, f64::max);
        let last = vals.iter().rposition(|&v| v >= tol * peak).unwrap_or(0);
        rmax * (last + 1) as f64 / steps as f64
    }

    /// Autocorrelation `∫ f(y + z) f(y) dy` of this radial function.
    ///
    /// The result is again of the form `P²(Δ)` applied to a Gaussian of width `√2 w`.
    pub fn autocorrelation(&self) -> GaussPoly {
        let w = self.width;
        let amp = self.amplitude.powi(2) * (std::f64::consts::PI * w * w).powf(1.5);
        GaussPoly::new(amp, w * std::f64::consts::SQRT_2, poly_mul(&self.operator, &self.operator))
    }
}

/// Report of the Wiener check.
#[derive(Debug, Clone, Serialize)]
pub struct WienerReport {
    pub pass: bool,
    /// Smallest normalised symbol magnitude over the resolved band.
    pub min_ratio: f64,
    /// Wavevector where the symbol is smallest, or where it changes sign.
    pub worst_k: [f64; 3],
}

/// Report of the moment check.
#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub pass: bool,
    /// Largest `|∫ x^α ρ| / ∫ |x^α| |ρ|` over `|α| ≤ 4`.
    pub max_relative: f64,
    pub moments: Vec<([u32; 3], f64)>,
}

/// A sampled radial charge density on a grid.
#[derive(Debug, Clone)]
pub struct ChargeDensity {
    grid: Grid3,
    profile: GaussPoly,
    samples: Vec<f64>,
    rho_hat: Spectrum,
    effective_radius: f64,
}

/// Builds `ρ = Δ³ ρ₂` with `ρ₂(x) = amplitude · e^{-|x|²/(2 w²)}`.
pub fn make_admissible_density(grid: &Grid3, base_width: f64, amplitude: f64) -> Result<ChargeDensity> {
    if !(base_width > 0.0 && base_width < grid.l() / 8.0) {
        return Err(Error::Argument(format!(
            "base width {base_width} must lie in (0, L/8) = (0, {})",
            grid.l() / 8.0
        )));
    }
    if grid.h() > base_width / 4.0 + 1e-12 {
        return Err(Error::Resolution(format!(
            "spacing {} exceeds base_width/4 = {}",
            grid.h(),
            base_width / 4.0
        )));
    }
    ChargeDensity::from_profile(grid, GaussPoly::new(amplitude, base_width, vec![0.0, 0.0, 0.0, 1.0]))
}

impl ChargeDensity {
    /// Samples an arbitrary profile, checking that the grid resolves it.
    pub fn from_profile(grid: &Grid3, profile: GaussPoly) -> Result<ChargeDensity> {
        let peak = profile.hat_max();
        if peak > 0.0 {
            let tail = profile.hat(grid.k_nyquist()).abs();
            if tail > ALIAS_TOL * peak {
                return Err(Error::Resolution(format!(
                    "|rho_hat| at the Nyquist wavenumber is {:.3e} of its maximum",
                    tail / peak
                )));
            }
        }
        let samples = grid.sample(|x| profile.value(x.norm()));
        let rho_hat = grid.sample_spectrum(|k| Complex64::new(profile.hat(k.norm()), 0.0));
        let effective_radius = profile.radius(RADIUS_TOL);
        Ok(ChargeDensity {
            grid: grid.clone(),
            profile,
            samples,
            rho_hat,
            effective_radius,
        })
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn profile(&self) -> &GaussPoly {
        &self.profile
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Closed-form spectrum on the grid lattice.
    pub fn rho_hat(&self) -> &Spectrum {
        &self.rho_hat
    }

    /// Transform of the radial profile at `|k|`.
    pub fn hat(&self, k: f64) -> f64 {
        self.profile.hat(k)
    }

    /// Radius outside which `|ρ|` is below `RADIUS_TOL` of its peak.
    pub fn effective_radius(&self) -> f64 {
        self.effective_radius
    }

    pub fn l1_norm(&self) -> f64 {
        self.samples.iter().map(|v| v.abs()).sum::<f64>() * self.grid.cell_volume()
    }

    /// Checks that `ρ̂` has no zero away from the origin.
    ///
    /// The symbol `P(-|k|²)` is normalised by its order of vanishing at the
    /// origin and its growth at infinity, so the Gaussian factor (which never
    /// vanishes) does not hide genuine zeros. A sign change along a ray is a
    /// zero even when no lattice mode sits on it.
    pub fn check_wiener(&self, floor: f64) -> WienerReport {
        let op = &self.profile.operator;
        let v0 = op.iter().position(|&c| c != 0.0).unwrap_or(op.len());
        if v0 == op.len() {
            return WienerReport { pass: false, min_ratio: 0.0, worst_k: [0.0; 3] };
        }
        let deg = op.len() - 1;
        let norm = |k: f64| {
            let s = k * k;
            self.profile.symbol(k) / (s.powi(v0 as i32) * (1.0 + s).powi((deg - v0) as i32))
        };
        let kmax = self.grid.k_nyquist() * 3f64.sqrt();
        let steps = 20000;
        let kmin = self.grid.dk() * 0.5;
        let ray: Vec<(f64, f64)> = (0..=steps)
            .map(|i| {
                let k = kmin + (kmax - kmin) * i as f64 / steps as f64;
                (k, norm(k))
            })
            .collect();
        let scale = ray.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max);
        for w in ray.windows(2) {
            if w[0].1.signum() != w[1].1.signum() || w[1].1 == 0.0 {
                let (mut a, mut b) = (w[0].0, w[1].0);
                let fa = w[0].1;
                for _ in 0..80 {
                    let m = 0.5 * (a + b);
                    if norm(m).signum() == fa.signum() {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                return WienerReport { pass: false, min_ratio: 0.0, worst_k: [0.5 * (a + b), 0.0, 0.0] };
            }
        }
        let mut best = (f64::INFINITY, Vector3::zeros());
        let g = &self.grid;
        let n = g.n();
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if (a, b, c) == (0, 0, 0) || g.is_nyquist(a, b, c) {
                        continue;
                    }
                    let k = g.k_vec(g.index(a, b, c));
                    let r = norm(k.norm()).abs() / scale;
                    if r < best.0 {
                        best = (r, k);
                    }
                }
            }
        }
        WienerReport {
            pass: best.0 >= floor,
            min_ratio: best.0,
            worst_k: [best.1[0], best.1[1], best.1[2]],
        }
    }

    /// Grid quadrature of all moments `∫ x^α ρ` with `|α| ≤ 4`, each relative
    /// to `∫ |x^α| |ρ|`.
    pub fn check_moments(&self, tol: f64) -> MomentReport {
        let g = &self.grid;
        let mut moments = Vec::new();
        let mut worst: f64 = 0.0;
        for order in 0..=4u32 {
            for a in 0..=order {
                for b in 0..=(order - a) {
                    let c = order - a - b;
                    let (mut acc, mut scale) = (0.0, 0.0);
                    for (idx, &v) in self.samples.iter().enumerate() {
                        let x = g.position(idx);
                        let m = x[0].powi(a as i32) * x[1].powi(b as i32) * x[2].powi(c as i32);
                        acc += v * m;
                        scale += (v * m).abs();
                    }
                    acc *= g.cell_volume();
                    scale *= g.cell_volume();
                    let rel = if scale > 0.0 { acc.abs() / scale } else { 0.0 };
                    worst = worst.max(rel);
                    moments.push(([a, b, c], acc));
                }
            }
        }
        MomentReport { pass: worst < tol, max_relative: worst, moments }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplacian_polynomials_match_hand_computation() {
        let g = GaussPoly::new(1.0, 1.0, vec![0.0, 0.0, 0.0, 1.0]);
        let expected = [-105.0, 210.0, -84.0, 8.0];
        for (a, b) in g.radial.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn laplacian_matches_finite_differences() {
        let base = GaussPoly::new(0.7, 1.3, vec![1.0]);
        let lap = GaussPoly::new(0.7, 1.3, vec![0.0, 1.0]);
        let r = 0.9;
        let e = 1e-4;
        let f = |r: f64| base.value(r);
        let second = (f(r + e) - 2.0 * f(r) + f(r - e)) / (e * e);
        let first = (f(r + e) - f(r - e)) / (2.0 * e);
        assert!((second + 2.0 * first / r - lap.value(r)).abs() < 1e-6);
    }

    #[test]
    fn hessian_trace_is_laplacian() {
        let base = GaussPoly::new(1.1, 0.8, vec![0.0, 0.0, 1.0]);
        let lap = GaussPoly::new(1.1, 0.8, vec![0.0, 0.0, 0.0, 1.0]);
        let x = Vector3::new(0.3, -0.4, 0.5);
        let tr: f64 = (0..3).map(|i| base.hessian(&x, i, i)).sum();
        assert!((tr - lap.value(x.norm())).abs() < 1e-9 * lap.value(x.norm()).abs().max(1.0));
    }

    #[test]
    fn closed_form_transform_matches_discrete_transform() {
        let grid = Grid3::new(64, 16.0).unwrap();
        let rho = make_admissible_density(&grid, 1.0, 1.0).unwrap();
        let discrete = grid.forward(rho.samples());
        let scale = rho.rho_hat().iter().map(|z| z.norm()).fold(0.0, f64::max);
        let err = discrete
            .iter()
            .zip(rho.rho_hat())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err / scale < 1e-6, "{}", err / scale);
        assert_eq!(rho.rho_hat()[0].norm(), 0.0);
    }

    #[test]
    fn zero_density_fails_wiener() {
        let grid = Grid3::new(16, 16.0).unwrap();
        let rho = ChargeDensity::from_profile(&grid, GaussPoly::new(0.0, 2.0, vec![0.0])).unwrap();
        assert!(!rho.check_wiener(WIENER_FLOOR).pass);
    }

    #[test]
    fn sphere_zero_is_detected() {
        let grid = Grid3::new(32, 16.0).unwrap();
        // ρ̂ ∝ (|k|² - 1) |k|⁶ e^{-w²|k|²/2}
        let rho = ChargeDensity::from_profile(&grid, GaussPoly::new(1.0, 2.0, vec![0.0, 0.0, 0.0, 1.0, 1.0]))
            .unwrap();
        let rep = rho.check_wiener(WIENER_FLOOR);
        assert!(!rep.pass);
        assert!((Vector3::from(rep.worst_k).norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let grid = Grid3::new(16, 16.0).unwrap();
        assert!(matches!(make_admissible_density(&grid, 1.5, 1.0), Err(Error::Resolution(_))));
        assert!(matches!(make_admissible_density(&grid, 3.0, 1.0), Err(Error::Argument(_))));
    }

    #[test]
    fn autocorrelation_transform_is_squared_symbol() {
        let p = GaussPoly::new(0.8, 1.1, vec![0.0, 0.0, 0.0, 1.0]);
        let c = p.autocorrelation();
        let k = 1.7;
        let expected = (2.0 * std::f64::consts::PI).powf(1.5) * p.hat(k).powi(2);
        assert!((c.hat(k) - expected).abs() < 1e-10 * expected.abs());
    }
}
