//! Laplace-domain objects of the linearised flow: `D̂`, `g_λ`, the matrices
//! `K`, `H(λ)`, `F = H - K`, the 6×6 matrix `M(λ)`, its determinant and
//! inverse blocks on the imaginary axis, and the functional `Φ(λ)`.
//!
//! Every matrix is evaluated in coordinates where `v = (|v|, 0, 0)`. Since `ρ`
//! is radial, rotating back is the caller's job and only matters for
//! non-axial velocities.
//!
//! `K` and `H` come from a quadrature in `(|k|, cos θ, φ)` on the closed-form
//! radial transform of `ρ`; `Φ` uses lattice sums on the simulation grid so
//! that it pairs exactly with the discrete symplectic form.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Matrix6, Vector3};
use num_complex::Complex64;
use serde::Serialize;

use crate::charge::{ChargeDensity, GaussPoly};
use crate::error::{Error, Result};
use crate::grid::Spectrum;
use crate::quad::{graded_breaks, GaussLegendre};
use crate::soliton::{b_inverse, gamma, nu, FieldPair};

type C64 = Complex64;

const I: C64 = C64::new(0.0, 1.0);

/// Tolerance for the refinement check of the `K`, `H` quadrature.
pub const REFINE_TOL: f64 = 1e-3;

/// Resolution of the momentum-space quadrature.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SpectralQuad {
    /// Gauss-Legendre order on every radial panel.
    pub radial_order: usize,
    /// Radial panel width in units of `1/w`.
    pub panel: f64,
    pub polar_nodes: usize,
    pub azimuth_nodes: usize,
}

impl Default for SpectralQuad {
    fn default() -> Self {
        SpectralQuad { radial_order: 16, panel: 0.5, polar_nodes: 48, azimuth_nodes: 8 }
    }
}

impl SpectralQuad {
    pub fn refined(&self) -> Self {
        SpectralQuad {
            radial_order: self.radial_order + 8,
            panel: 0.5 * self.panel,
            polar_nodes: 2 * self.polar_nodes,
            azimuth_nodes: self.azimuth_nodes,
        }
    }
}

/// `D̂(λ, k) = |k|² + (i|v|k₁ + λ)²`.
pub fn d_hat(lambda: C64, k: &Vector3<f64>, speed: f64) -> C64 {
    let a = I * (speed * k[0]) + lambda;
    k.norm_squared() + a * a
}

/// Fundamental solution of `-Δ + (-v·∇ + λ)²` for `v = (|v|, 0, 0)`:
/// `γ e^{-κ|ỹ| - κ₁ỹ₁} / (4π|ỹ|)` with `ỹ = (γy₁, y₂, y₃)`, `κ = γλ`, `κ₁ = γ|v|λ`.
///
/// The factor `γ` is the Jacobian of the stretch `y₁ ↦ γy₁`.
pub fn g_lambda(lambda: C64, y: &Vector3<f64>, speed: f64) -> Result<C64> {
    if !(lambda.re > 0.0) {
        return Err(Error::Domain(format!("Re λ = {} must be positive", lambda.re)));
    }
    if !(speed.abs() < 1.0) {
        return Err(Error::Domain("|v| must be below 1".into()));
    }
    let g = 1.0 / (1.0 - speed * speed).sqrt();
    let yt = Vector3::new(g * y[0], y[1], y[2]);
    let r = yt.norm();
    if r == 0.0 {
        return Err(Error::Singularity("g_λ is singular at y = 0".into()));
    }
    let (kappa, kappa1) = kappas(lambda, speed);
    Ok(g * (-kappa * r - kappa1 * yt[0]).exp() / (4.0 * PI * r))
}

/// `(κ, κ₁) = (γλ, γ|v|λ)`.
pub fn kappas(lambda: C64, speed: f64) -> (C64, C64) {
    let g = 1.0 / (1.0 - speed * speed).sqrt();
    (lambda * g, lambda * (g * speed))
}

/// Radial cutoff beyond which `ρ̂²` is negligible.
fn k_cutoff(p: &GaussPoly) -> f64 {
    let peak = p.hat_max();
    let w = p.width;
    let mut k = 40.0 / w;
    let step = 0.05 / w;
    while k > step && p.hat(k).abs() < 1e-17 * peak {
        k -= step;
    }
    k + 4.0 * step
}

fn uniform_breaks(a: f64, b: f64, width: f64) -> Vec<f64> {
    let m = ((b - a) / width).ceil().max(1.0) as usize;
    (0..=m).map(|i| a + (b - a) * i as f64 / m as f64).collect()
}

fn merge(mut a: Vec<f64>, b: Vec<f64>) -> Vec<f64> {
    a.extend(b);
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    a.dedup_by(|x, y| (*x - *y).abs() < 1e-14);
    a
}

/// Positive root `κ*(c)` of `|k|² - (|v|k₁ + ω)² = 0` along the ray of direction cosine `c`.
fn resonant_radius(omega: f64, u: f64) -> f64 {
    if omega > 0.0 {
        omega / (1.0 - u)
    } else {
        -omega / (1.0 + u)
    }
}

/// Momentum-space integrator for `∫ k_i k_j ρ̂(|k|)² W(|k|, c) dk`.
struct TensorQuad<'a> {
    profile: &'a GaussPoly,
    kmax: f64,
    q: SpectralQuad,
}

impl<'a> TensorQuad<'a> {
    fn new(profile: &'a GaussPoly, q: SpectralQuad) -> Self {
        TensorQuad { profile, kmax: k_cutoff(profile), q }
    }

    /// Angular tensor `∫ n̂ n̂ᵀ dφ` at direction cosine `c`, by trapezoid in `φ`.
    fn angular(&self, c: f64) -> Matrix3<f64> {
        let s = (1.0 - c * c).max(0.0).sqrt();
        let m = self.q.azimuth_nodes;
        let mut t = Matrix3::zeros();
        for i in 0..m {
            let phi = 2.0 * PI * i as f64 / m as f64;
            let n = Vector3::new(c, s * phi.cos(), s * phi.sin());
            t += n * n.transpose();
        }
        t * (2.0 * PI / m as f64)
    }

    /// Full tensor; `focus(c)` optionally returns a radius and width to refine towards.
    fn tensor<W, G>(&self, weight: W, focus: G) -> Matrix3<C64>
    where
        W: Fn(f64, f64) -> C64,
        G: Fn(f64) -> Option<(f64, f64)>,
    {
        let polar = GaussLegendre::new(self.q.polar_nodes);
        let radial = GaussLegendre::new(self.q.radial_order);
        let base = uniform_breaks(0.0, self.kmax, self.q.panel / self.profile.width);
        let mut out = Matrix3::<C64>::zeros();
        for (c, wc) in polar.mapped(-1.0, 1.0) {
            let breaks = match focus(c) {
                Some((k0, eps)) if k0 < self.kmax => merge(base.clone(), graded_breaks(0.0, self.kmax, k0, eps)),
                _ => base.clone(),
            };
            let mut s = C64::new(0.0, 0.0);
            for win in breaks.windows(2) {
                for (k, wk) in radial.mapped(win[0], win[1]) {
                    let r = self.profile.hat(k);
                    s += weight(k, c) * (wk * k.powi(4) * r * r);
                }
            }
            let t = self.angular(c);
            out += t.map(|x| C64::new(x, 0.0)) * (s * wc);
        }
        out
    }
}

fn focus_for(lambda: C64, speed: f64, width: f64) -> impl Fn(f64) -> Option<(f64, f64)> {
    move |c| {
        if lambda.im.abs() > lambda.re && lambda.re < 0.5 / width {
            let k0 = resonant_radius(lambda.im, speed * c);
            Some((k0, (0.25 * lambda.re).max(1e-8)))
        } else {
            None
        }
    }
}

fn k_with(tq: &TensorQuad, speed: f64) -> Matrix3<f64> {
    tq.tensor(|k, c| C64::new(1.0 / (k * k * (1.0 - speed * speed * c * c)), 0.0), |_| None)
        .map(|z| z.re)
}

/// Evaluation of the Laplace-domain matrices at one `λ`.
#[derive(Debug, Clone)]
pub struct SpectralEval {
    pub speed: f64,
    pub lambda: C64,
    pub k: Matrix3<f64>,
    pub h: Matrix3<C64>,
    pub f: Matrix3<C64>,
    pub m: Matrix6<C64>,
    pub det_m: C64,
}

impl SpectralEval {
    fn assemble(speed: f64, lambda: C64, k: Matrix3<f64>, h: Matrix3<C64>) -> Self {
        let f = h - k.map(|x| C64::new(x, 0.0));
        let m = m_matrix(speed, lambda, &f);
        let det_m = m.determinant();
        SpectralEval { speed, lambda, k, h, f, m, det_m }
    }

    /// Largest off-diagonal magnitude of `H` and `K` relative to their diagonals.
    pub fn off_diagonal(&self) -> f64 {
        let mut off = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    off = off.max(self.h[(i, j)].norm() / self.h[(0, 0)].norm());
                    off = off.max(self.k[(i, j)].abs() / self.k[(0, 0)]);
                }
            }
        }
        off
    }

    /// `-(ω² + ν³f₁)(ω² + νf)²` with `f₁ = F₁₁(iω)`, `f = F₂₂(iω)`.
    pub fn det_closed_form(&self) -> C64 {
        let w2 = -self.lambda * self.lambda;
        let n = (1.0 - self.speed * self.speed).sqrt();
        let a = w2 + self.f[(0, 0)] * n.powi(3);
        let b = w2 + self.f[(1, 1)] * n;
        -a * b * b
    }
}

/// `B_v` for `v = (|v|, 0, 0)`.
fn b_axis(speed: f64) -> Matrix3<f64> {
    let v = Vector3::new(speed, 0.0, 0.0);
    crate::soliton::b_matrix(&v)
}

/// `M(λ) = ((λI, -B_v), (-F(λ), λI))`.
pub fn m_matrix(speed: f64, lambda: C64, f: &Matrix3<C64>) -> Matrix6<C64> {
    let b = b_axis(speed);
    let mut m = Matrix6::<C64>::zeros();
    for i in 0..3 {
        m[(i, i)] = lambda;
        m[(3 + i, 3 + i)] = lambda;
        for j in 0..3 {
            m[(i, 3 + j)] = C64::new(-b[(i, j)], 0.0);
            m[(3 + i, j)] = -f[(i, j)];
        }
    }
    m
}

fn check_speed(speed: f64) -> Result<()> {
    if !(speed.abs() < 1.0) {
        return Err(Error::Domain(format!("|v| = {speed} must be below 1")));
    }
    Ok(())
}

/// `K_ij = ∫ k_i k_j |ρ̂|² / (|k|² - (|v|k₁)²) dk`.
pub fn k_matrix(rho: &ChargeDensity, speed: f64) -> Result<Matrix3<f64>> {
    check_speed(speed)?;
    Ok(k_with(&TensorQuad::new(rho.profile(), SpectralQuad::default()), speed))
}

fn kh_once(p: &GaussPoly, speed: f64, lambda: C64, q: SpectralQuad) -> SpectralEval {
    let tq = TensorQuad::new(p, q);
    let k = k_with(&tq, speed);
    let h = tq.tensor(
        |kk, c| {
            let a = I * (speed * kk * c) + lambda;
            1.0 / (kk * kk * (1.0 - c * c) + kk * kk * c * c + a * a)
        },
        focus_for(lambda, speed, p.width),
    );
    SpectralEval::assemble(speed, lambda, k, h)
}

/// `K`, `H(λ)`, `F` and `M(λ)` for `Re λ > 0`, checked against a refined quadrature.
pub fn kh_matrices(rho: &ChargeDensity, speed: f64, lambda: C64) -> Result<SpectralEval> {
    kh_matrices_with(rho, speed, lambda, SpectralQuad::default())
}

pub fn kh_matrices_with(rho: &ChargeDensity, speed: f64, lambda: C64, q: SpectralQuad) -> Result<SpectralEval> {
    check_speed(speed)?;
    if !(lambda.re > 0.0) {
        return Err(Error::Domain(format!("Re λ = {} must be positive", lambda.re)));
    }
    let p = rho.profile();
    let a = kh_once(p, speed, lambda, q);
    let b = kh_once(p, speed, lambda, q.refined());
    let scale = b.h.iter().map(|z| z.norm()).fold(0.0, f64::max).max(b.k[(0, 0)]);
    let change = (a.h - b.h).iter().map(|z| z.norm()).fold(0.0, f64::max) / scale;
    if change > REFINE_TOL {
        return Err(Error::Accuracy(format!("H changed by {change:e} under refinement")));
    }
    Ok(b)
}

/// `H(λ)` by the real-space pairing `⟨g_λ * ∂_jρ, ∂_jρ⟩ = ∫ g_λ(y) A_j(y) dy`,
/// where `A_j = -∂_j²(ρ ⋆ ρ)` is the autocorrelation of `∂_jρ`.
pub fn h_diagonal_real_space(rho: &ChargeDensity, speed: f64, lambda: C64) -> Result<[C64; 3]> {
    check_speed(speed)?;
    if !(lambda.re > 0.0) {
        return Err(Error::Domain(format!("Re λ = {} must be positive", lambda.re)));
    }
    let auto = rho.profile().autocorrelation();
    let g = gamma(&Vector3::new(speed, 0.0, 0.0));
    let (kappa, kappa1) = kappas(lambda, speed);
    let w = auto.width;
    let rmax = g * auto.radius(1e-18) + w;
    let radial = GaussLegendre::new(16);
    let polar = GaussLegendre::new(48);
    let m = 8;
    let mut out = [C64::new(0.0, 0.0); 3];
    for win in uniform_breaks(0.0, rmax, 0.25 * w).windows(2) {
        for (r, wr) in radial.mapped(win[0], win[1]) {
            for (c, wc) in polar.mapped(-1.0, 1.0) {
                let s = (1.0 - c * c).sqrt();
                // r² dr dΩ · e^{-κr-κ₁r c}/(4πr); the Jacobian 1/γ cancels the factor γ of g_λ
                let kern = (-kappa * r - kappa1 * (r * c)).exp() * (r / (4.0 * PI) * wr * wc * 2.0 * PI / m as f64);
                for i in 0..m {
                    let phi = 2.0 * PI * i as f64 / m as f64;
                    let y = Vector3::new(r * c / g, r * s * phi.cos(), r * s * phi.sin());
                    for (j, o) in out.iter_mut().enumerate() {
                        *o -= kern * auto.hessian(&y, j, j);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Sokhotsky-Plemelj pieces of `H_jj(iω + 0)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OnAxisParts {
    /// Principal values (real parts).
    pub re: [f64; 3],
    /// Imaginary parts from the surface integral over `T_ω`.
    pub im: [f64; 3],
}

/// Imaginary parts `-sign(ω) π ∫_{T_ω} k_j² |ρ̂|² / |∇D̂| dS` over the ellipsoid
/// `T_ω = {(νk₁ - |v|ω/ν)² + k₂² + k₃² = ω²/ν²}`.
pub fn im_h_surface(p: &GaussPoly, speed: f64, omega: f64, nodes: usize) -> [f64; 3] {
    let n = (1.0 - speed * speed).sqrt();
    let a = omega.abs();
    let gl = GaussLegendre::new(nodes);
    let mut acc = [0.0; 3];
    for (t, wt) in gl.mapped(0.0, PI) {
        let (st, ct) = t.sin_cos();
        let k1 = (speed * omega + a * ct) / (n * n);
        let kp = a * st / n;
        let dk1 = -a * st / (n * n);
        let dkp = a * ct / n;
        let ds = 2.0 * PI * kp * (dk1 * dk1 + dkp * dkp).sqrt();
        let grad = 2.0 * ((k1 - speed * (speed * k1 + omega)).powi(2) + kp * kp).sqrt();
        let r = p.hat((k1 * k1 + kp * kp).sqrt());
        let base = wt * ds * r * r / grad;
        acc[0] += base * k1 * k1;
        acc[1] += base * 0.5 * kp * kp;
    }
    acc[2] = acc[1];
    let s = -omega.signum() * PI;
    acc.map(|x| s * x)
}

/// Same imaginary parts written as a radial delta `δ(κ - κ*(c)) / |∂_κ D̂|`.
pub fn im_h_radial(p: &GaussPoly, speed: f64, omega: f64, nodes: usize) -> [f64; 3] {
    let gl = GaussLegendre::new(nodes);
    let mut acc = [0.0; 3];
    for (c, wc) in gl.mapped(-1.0, 1.0) {
        let u = speed * c;
        let k0 = resonant_radius(omega, u);
        let dr = if omega > 0.0 { 2.0 * k0 * (1.0 - u) } else { 2.0 * k0 * (1.0 + u) };
        let r = p.hat(k0);
        let base = wc * k0.powi(4) * r * r / dr;
        acc[0] += base * 2.0 * PI * c * c;
        acc[1] += base * PI * (1.0 - c * c);
    }
    acc[2] = acc[1];
    let s = -omega.signum() * PI;
    acc.map(|x| s * x)
}

/// Principal values `PV ∫ k_j² |ρ̂|² / D̂(iω, k) dk` by symmetric intervals around `κ*(c)`.
pub fn re_h_principal(p: &GaussPoly, speed: f64, omega: f64, q: SpectralQuad) -> [f64; 3] {
    let kmax = k_cutoff(p);
    let polar = GaussLegendre::new(q.polar_nodes);
    let radial = GaussLegendre::new(q.radial_order);
    let width = q.panel / p.width;
    let mut acc = [0.0; 3];
    for (c, wc) in polar.mapped(-1.0, 1.0) {
        let u = speed * c;
        let k0 = resonant_radius(omega, u);
        let km = -omega / (1.0 + u);
        let km = if omega > 0.0 { km } else { omega / (1.0 - u) };
        let f = |k: f64| {
            let r = p.hat(k);
            k.powi(4) * r * r
        };
        // D̂(iω) = (1 - u²)(κ - κ*)(κ - κ₋) along the ray
        let dfull = |k: f64| k * k - (u * k + omega).powi(2);
        let g = |k: f64| f(k) / ((1.0 - u * u) * (k - km));
        let mut s = 0.0;
        let regular = |a: f64, b: f64| -> f64 {
            let mut t = 0.0;
            for win in uniform_breaks(a, b, width).windows(2) {
                for (k, wk) in radial.mapped(win[0], win[1]) {
                    t += wk * f(k) / dfull(k);
                }
            }
            t
        };
        if k0 >= kmax {
            s += regular(0.0, kmax);
        } else {
            let d = (0.5 * k0).min(kmax - k0);
            if k0 - d > 0.0 {
                s += regular(0.0, k0 - d);
            }
            s += regular(k0 + d, kmax);
            let gc = g(k0);
            for win in uniform_breaks(0.0, d, width).windows(2) {
                for (x, wx) in radial.mapped(win[0], win[1]) {
                    s += wx * (g(k0 + x) - g(k0 - x)) / x;
                }
            }
            let _ = gc;
        }
        acc[0] += wc * s * 2.0 * PI * c * c;
        acc[1] += wc * s * PI * (1.0 - c * c);
    }
    acc[2] = acc[1];
    acc
}

/// `H(iω + 0)`, `F`, `M(iω)` and `det M(iω)` on the imaginary axis.
pub fn on_axis(rho: &ChargeDensity, speed: f64, omega: f64) -> Result<(SpectralEval, OnAxisParts)> {
    on_axis_with(rho, speed, omega, SpectralQuad::default())
}

pub fn on_axis_with(rho: &ChargeDensity, speed: f64, omega: f64, q: SpectralQuad) -> Result<(SpectralEval, OnAxisParts)> {
    check_speed(speed)?;
    if omega == 0.0 || !omega.is_finite() {
        return Err(Error::Domain("ω must be finite and nonzero".into()));
    }
    let p = rho.profile();
    let re_a = re_h_principal(p, speed, omega, q);
    let re = re_h_principal(p, speed, omega, q.refined());
    let im = im_h_surface(p, speed, omega, 2 * q.polar_nodes);
    let scale = re.iter().chain(&im).fold(0.0f64, |a, x| a.max(x.abs()));
    let change = re.iter().zip(&re_a).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    if scale > 0.0 && change > REFINE_TOL * scale {
        return Err(Error::Accuracy(format!("principal value changed by {:e} under refinement", change / scale)));
    }
    let k = k_with(&TensorQuad::new(p, q.refined()), speed);
    let mut h = Matrix3::<C64>::zeros();
    for j in 0..3 {
        h[(j, j)] = C64::new(re[j], im[j]);
    }
    Ok((SpectralEval::assemble(speed, C64::new(0.0, omega), k, h), OnAxisParts { re, im }))
}

/// `r_j(0) = -∫ k_j² |ρ̂|² (|k|² + 3(|v|k₁)²) / (|k|² - (|v|k₁)²)³ dk`.
pub fn r_at_zero(rho: &ChargeDensity, speed: f64) -> Result<[f64; 3]> {
    check_speed(speed)?;
    let tq = TensorQuad::new(rho.profile(), SpectralQuad::default().refined());
    let t = tq.tensor(
        |k, c| {
            let a2 = (speed * k * c).powi(2);
            let d = k * k - a2;
            C64::new(-(k * k + 3.0 * a2) / (d * d * d), 0.0)
        },
        |_| None,
    );
    Ok([t[(0, 0)].re, t[(1, 1)].re, t[(2, 2)].re])
}

/// Inverse `L(ω) = M(iω)^{-1}` in closed form.
#[derive(Debug, Clone)]
pub struct InverseBlocks {
    pub omega: f64,
    /// `r_j(ω) = -F_jj(iω)/ω²`.
    pub r: [C64; 3],
    /// Scaled blocks `𝓛₁₁`, `𝓛₁₂`, `𝓛₂₁` with `L₁₁ = 𝓛₁₁/ω`, `L₁₂ = 𝓛₁₂/ω²`, `L₂₁ = 𝓛₂₁`, `L₂₂ = 𝓛₁₁/ω`.
    pub l11: Matrix3<C64>,
    pub l12: Matrix3<C64>,
    pub l21: Matrix3<C64>,
    /// Assembled `L(ω)`.
    pub l: Matrix6<C64>,
}

/// Closed-form inverse blocks at `ω ≠ 0` from an on-axis evaluation.
pub fn inverse_blocks(se: &SpectralEval) -> Result<InverseBlocks> {
    let omega = se.lambda.im;
    if omega == 0.0 || se.lambda.re != 0.0 {
        return Err(Error::Domain("inverse blocks need λ = iω with ω ≠ 0".into()));
    }
    let n = (1.0 - se.speed * se.speed).sqrt();
    let b = [n * n * n, n, n];
    let w2 = omega * omega;
    let mut r = [C64::new(0.0, 0.0); 3];
    let mut l11 = Matrix3::<C64>::zeros();
    let mut l12 = Matrix3::<C64>::zeros();
    let mut l21 = Matrix3::<C64>::zeros();
    for j in 0..3 {
        r[j] = -se.f[(j, j)] / w2;
        let den = 1.0 - r[j] * b[j];
        if den.norm() < 1e-14 {
            return Err(Error::Pole(format!("1 - b_j r_j(ω) vanishes at ω = {omega}")));
        }
        l11[(j, j)] = -I / den;
        l12[(j, j)] = -b[j] / den;
        // L₂₁ = f_j / (-ω²(1 - b_j r_j)) = r_j / (1 - b_j r_j)
        l21[(j, j)] = r[j] / den;
    }
    let mut l = Matrix6::<C64>::zeros();
    for i in 0..3 {
        for j in 0..3 {
            l[(i, j)] = l11[(i, j)] / omega;
            l[(i, 3 + j)] = l12[(i, j)] / w2;
            l[(3 + i, j)] = l21[(i, j)];
            l[(3 + i, 3 + j)] = l11[(i, j)] / omega;
        }
    }
    Ok(InverseBlocks { omega, r, l11, l12, l21, l })
}

/// `F(0)` and `F'(0)` along real `λ → 0⁺`: polynomial extrapolation for the value,
/// complex-step differentiation for the slope.
pub fn f_at_zero(rho: &ChargeDensity, speed: f64, x: f64) -> Result<([f64; 3], [f64; 3])> {
    let p = rho.profile();
    let q = SpectralQuad::default().refined();
    let diag = |l: C64| {
        let e = kh_once(p, speed, l, q);
        [e.f[(0, 0)], e.f[(1, 1)], e.f[(2, 2)]]
    };
    let v: Vec<[C64; 3]> = (1..=4).map(|m| diag(C64::new(m as f64 * x, 0.0))).collect();
    // Im F at real λ is pure roundoff, so the step must stay well above it
    let h = 1e-6;
    let d1 = diag(C64::new(x, h));
    let d2 = diag(C64::new(2.0 * x, h));
    let d3 = diag(C64::new(3.0 * x, h));
    let mut f0 = [0.0; 3];
    let mut f1 = [0.0; 3];
    for j in 0..3 {
        // cubic through x, 2x, 3x, 4x evaluated at 0
        f0[j] = 4.0 * v[0][j].re - 6.0 * v[1][j].re + 4.0 * v[2][j].re - v[3][j].re;
        let s1 = d1[j].im / h;
        let s2 = d2[j].im / h;
        let s3 = d3[j].im / h;
        // quadratic through x, 2x, 3x evaluated at 0
        f1[j] = 3.0 * s1 - 3.0 * s2 + s3;
    }
    Ok((f0, f1))
}

/// `Φ(λ)` and its Taylor data at zero for an initial field perturbation.
#[derive(Debug, Clone, Serialize)]
pub struct PhiEval {
    pub lambda: Option<C64>,
    /// `Φ(λ)`, when `λ` was given.
    pub phi: Option<[C64; 3]>,
    pub phi0: [f64; 3],
    pub phi_prime0: [f64; 3],
}

/// Lattice evaluation of `Φ_j(λ) = i ∫ ((i k·v + λ)Ψ̂₀ + Π̂₀) k_j ρ̂ / D̂ dk`
/// together with `Φ(0)` and `Φ'(0)`.
pub fn phi_eval(rho: &ChargeDensity, v: &Vector3<f64>, psi0: &Spectrum, pi0: &Spectrum, lambda: Option<C64>) -> Result<PhiEval> {
    if !(v.norm() < 1.0) {
        return Err(Error::Domain("|v| must be below 1".into()));
    }
    if let Some(l) = lambda {
        if !(l.re > 0.0) {
            return Err(Error::Domain("Re λ must be positive".into()));
        }
    }
    let grid = rho.grid();
    let rh = rho.rho_hat();
    let mut phi = [C64::new(0.0, 0.0); 3];
    let mut phi0 = [C64::new(0.0, 0.0); 3];
    let mut phi1 = [C64::new(0.0, 0.0); 3];
    for i in 0..grid.len() {
        let r = rh[i].re;
        if r == 0.0 {
            continue;
        }
        let k = grid.k_vec(i);
        let al = k.dot(v);
        let k2 = k.norm_squared();
        let d0 = k2 - al * al;
        let (a, b) = (psi0[i], pi0[i]);
        let z0 = I * ((I * al) * a + b) / d0;
        let z1 = (I * (k2 + al * al) * a + 2.0 * al * b) / (d0 * d0);
        let zl = lambda.map(|l| {
            let m = I * al + l;
            I * (m * a + b) / (k2 + m * m)
        });
        for j in 0..3 {
            phi0[j] += z0 * (k[j] * r);
            phi1[j] += z1 * (k[j] * r);
            if let Some(z) = zl {
                phi[j] += z * (k[j] * r);
            }
        }
    }
    let dv = grid.mode_volume();
    Ok(PhiEval {
        lambda,
        phi: lambda.map(|_| phi.map(|z| z * dv)),
        phi0: phi0.map(|z| z.re * dv),
        phi_prime0: phi1.map(|z| z.re * dv),
    })
}

/// `Φ(λ)` as the Laplace transform of `⟨[W(t)F₀]_ψ, ∇ρ⟩` over `[0, t_max]`.
pub fn phi_time_domain(rho: &ChargeDensity, v: &Vector3<f64>, f0: &FieldPair, lambda: f64, t_max: f64, panels: usize) -> Vector3<f64> {
    let grid = rho.grid();
    let rh = rho.rho_hat();
    let peak = rh.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
    let active: Vec<usize> = (0..grid.len()).filter(|&i| rh[i].re.abs() > 1e-16 * peak).collect();
    let gl = GaussLegendre::new(20);
    let mut acc = Vector3::zeros();
    for win in uniform_breaks(0.0, t_max, t_max / panels as f64).windows(2) {
        for (t, wt) in gl.mapped(win[0], win[1]) {
            let mut s = Vector3::zeros();
            for &i in &active {
                let k = grid.k_vec(i);
                let om = k.norm();
                let e = C64::from_polar(1.0, -k.dot(v) * t);
                let (sn, cs) = (om * t).sin_cos();
                let psi = e * (f0.psi[i] * cs + f0.pi[i] * (sn / om));
                // ⟨ψ, ∂_jρ⟩ = Σ ψ̂ (i k_j) ρ̂
                let z = -psi.im * rh[i].re;
                s += k * z;
            }
            acc += s * (wt * (-lambda * t).exp());
        }
    }
    acc * grid.mode_volume()
}

/// `(Ω(X₀, τ_j), -Φ_j(0) - P₀_j)` and `(Ω(X₀, τ_{3+j}), Φ'_j(0) + (B_v^{-1}Q₀)_j)` right-hand sides.
pub fn orthogonality_rhs(phi: &PhiEval, q0: &Vector3<f64>, p0: &Vector3<f64>, v: &Vector3<f64>) -> [f64; 6] {
    let bq = b_inverse(v) * q0;
    let mut out = [0.0; 6];
    for j in 0..3 {
        out[j] = -phi.phi0[j] - p0[j];
        out[3 + j] = phi.phi_prime0[j] + bq[j];
    }
    out
}

/// `ν` for an axial speed.
pub fn nu_of(speed: f64) -> f64 {
    nu(&Vector3::new(speed, 0.0, 0.0))
}
