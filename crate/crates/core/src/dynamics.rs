//! Time integration of the coupled system, its linearisation at a soliton and
//! the free wave groups.
//!
//! The nonlinear flow is split into the particle drift `q̇ = p/(1+p²)^{1/2}`
//! and the field flow with `q` frozen. The field flow is linear with a
//! constant source, so every Fourier mode is advanced exactly and the
//! momentum kick `∫ψ∇ρ(x-q)` is integrated in closed form over the step.
//! Both pieces are exact Hamiltonian flows, which makes the composed step
//! symplectic and time reversible.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::charge::ChargeDensity;
use crate::error::{Error, Result};
use crate::grid::Grid3;
use crate::soliton::{b_matrix, velocity_of, FieldPair, PhaseState, Tangent};

/// Composition scheme built from the symmetric split step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Second-order symmetric splitting.
    Strang,
    /// Fourth-order triple-jump composition of the symmetric step.
    Yoshida4,
}

impl Scheme {
    /// Alternating drift/field coefficients `a_0 b_0 a_1 b_1 ... a_m`.
    fn coefficients(self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Scheme::Strang => (vec![0.5, 0.5], vec![1.0]),
            Scheme::Yoshida4 => {
                let c = 2f64.powf(1.0 / 3.0);
                let w1 = 1.0 / (2.0 - c);
                let w0 = -c / (2.0 - c);
                (vec![0.5 * w1, 0.5 * (w0 + w1), 0.5 * (w0 + w1), 0.5 * w1], vec![w1, w0, w1])
            }
        }
    }

    pub fn order(self) -> u32 {
        match self {
            Scheme::Strang => 2,
            Scheme::Yoshida4 => 4,
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strang" => Ok(Scheme::Strang),
            "yoshida4" => Ok(Scheme::Yoshida4),
            _ => Err(Error::Config(format!("unknown scheme {s}"))),
        }
    }
}

/// Integration settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Steps between recorded snapshots.
    pub snapshot_every: usize,
    pub scheme: Scheme,
    /// Largest tolerated relative energy drift.
    pub drift_tol: f64,
    /// Speed at which a run is declared blown up.
    pub v_cap: f64,
    /// Stop when outgoing waves could re-enter the box through the periodic boundary.
    pub check_horizon: bool,
}

impl SimConfig {
    /// Defaults: `dt = h/4`, fourth-order splitting, drift tolerance `1e-6`.
    pub fn for_grid(grid: &Grid3, t_end: f64) -> Self {
        SimConfig {
            dt: 0.25 * grid.h(),
            t_end,
            snapshot_every: 4,
            scheme: Scheme::Yoshida4,
            drift_tol: 1e-6,
            v_cap: 0.95,
            check_horizon: true,
        }
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.t_end >= 0.0 && self.snapshot_every > 0) {
            return Err(Error::Argument("dt, t_end and snapshot_every must be positive".into()));
        }
        let n = self.t_end / self.dt;
        if (n - n.round()).abs() > 1e-9 * n.max(1.0) {
            return Err(Error::Argument(format!("t_end {} is not a multiple of dt {}", self.t_end, self.dt)));
        }
        Ok(())
    }
}

/// Latest time before waves leaving the charge can wrap around the box.
pub fn wrap_horizon(rho: &ChargeDensity, q: &Vector3<f64>) -> f64 {
    let l = rho.grid().l();
    let qm = q.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    0.5 * l - rho.effective_radius() - qm
}

/// Hamiltonian `½∫(π² + |∇ψ|²) + ∫ψρ(x-q) + (1+p²)^{1/2}`.
pub fn hamiltonian(state: &PhaseState, rho: &ChargeDensity) -> f64 {
    let grid = rho.grid();
    let k2 = grid.k2();
    let rh = rho.rho_hat();
    let [p0, p1, p2] = grid.phase_tables(&state.q);
    let n = grid.n();
    let (psi, pi) = (&state.fields.psi, &state.fields.pi);
    let mut kin = 0.0;
    let mut inter = 0.0;
    for j0 in 0..n {
        for j1 in 0..n {
            let ph01 = p0[j0] * p1[j1];
            let base = (j0 * n + j1) * n;
            for j2 in 0..n {
                let i = base + j2;
                kin += pi[i].norm_sqr() + k2[i] * psi[i].norm_sqr();
                let r = rh[i].re;
                if r != 0.0 {
                    let s = ph01 * p2[j2] * r;
                    inter += (psi[i] * s.conj()).re;
                }
            }
        }
    }
    let dv = grid.mode_volume();
    0.5 * kin * dv + inter * dv + (1.0 + state.p.norm_squared()).sqrt()
}

/// Lower bound `½⟨ρ, Δ⁻¹ρ⟩ = -½ Σ |ρ̂|²/|k|²` of the Hamiltonian.
pub fn energy_lower_bound(rho: &ChargeDensity) -> f64 {
    let grid = rho.grid();
    let s: f64 = rho
        .rho_hat()
        .iter()
        .zip(grid.k2())
        .filter(|(_, &k2)| k2 > 0.0)
        .map(|(r, &k2)| r.norm_sqr() / k2)
        .sum();
    -0.5 * s * grid.mode_volume() + 1.0
}

/// Per-mode propagator tables for one field sub-step of length `tau`.
struct WaveTables {
    cos: Vec<f64>,
    sinc: Vec<f64>,
    omc: Vec<f64>,
    inv_k2: Vec<f64>,
    tau: f64,
}

impl WaveTables {
    fn new(grid: &Grid3, tau: f64) -> Self {
        let k2 = grid.k2();
        let mut cos = Vec::with_capacity(k2.len());
        let mut sinc = Vec::with_capacity(k2.len());
        let mut omc = Vec::with_capacity(k2.len());
        let mut inv_k2 = Vec::with_capacity(k2.len());
        for &kk in k2 {
            let w = kk.sqrt();
            if w == 0.0 {
                cos.push(1.0);
                sinc.push(tau);
                omc.push(0.5 * tau * tau);
                inv_k2.push(0.0);
            } else {
                let (s, c) = (w * tau).sin_cos();
                cos.push(c);
                sinc.push(s / w);
                // (1 - cos ωτ)/ω², written to avoid cancellation
                let h = (0.5 * w * tau).sin();
                omc.push(2.0 * h * h / kk);
                inv_k2.push(1.0 / kk);
            }
        }
        WaveTables { cos, sinc, omc, inv_k2, tau }
    }
}

/// Exact field flow over `tab.tau` with frozen `q`, returning the momentum kick.
fn field_step(state: &mut PhaseState, rho: &ChargeDensity, tab: &WaveTables) -> Vector3<f64> {
    let grid = rho.grid();
    let kk = grid.wavenumbers();
    let rh = rho.rho_hat();
    let [p0, p1, p2] = grid.phase_tables(&state.q);
    let n = grid.n();
    let FieldPair { psi, pi } = &mut state.fields;
    let mut kick = [0.0f64; 3];
    for j0 in 0..n {
        for j1 in 0..n {
            let ph01 = p0[j0] * p1[j1];
            let base = (j0 * n + j1) * n;
            for j2 in 0..n {
                let i = base + j2;
                let r = rh[i].re;
                let c = tab.cos[i];
                let sk = tab.sinc[i];
                if r == 0.0 {
                    let p_old = pi[i];
                    let u = psi[i];
                    let w2 = 1.0 / tab.inv_k2[i].max(f64::MIN_POSITIVE);
                    if tab.inv_k2[i] == 0.0 {
                        psi[i] = u + p_old * tab.tau;
                    } else {
                        psi[i] = u * c + p_old * sk;
                        pi[i] = -u * (w2 * sk) + p_old * c;
                    }
                    continue;
                }
                let s = ph01 * p2[j2] * r;
                let ip = tab.inv_k2[i];
                let psi_p = -s * ip;
                let u = psi[i] - psi_p;
                let p_old = pi[i];
                let integral = psi_p * tab.tau + u * sk + p_old * tab.omc[i];
                psi[i] = psi_p + u * c + p_old * sk;
                pi[i] = -u * (sk / ip) + p_old * c;
                // Δp = Σ i k conj(s) ∫ψ̂ dt
                let w = s.conj() * integral;
                let im = -w.im;
                kick[0] += kk[j0] * im;
                kick[1] += kk[j1] * im;
                kick[2] += kk[j2] * im;
            }
        }
    }
    Vector3::from(kick) * grid.mode_volume()
}

/// One time series of a simulation.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub q: Vec<Vector3<f64>>,
    pub p: Vec<Vector3<f64>>,
    pub qdot: Vec<Vector3<f64>>,
    pub energy: Vec<f64>,
}

impl Trajectory {
    fn record(&mut self, t: f64, s: &PhaseState, e: f64) {
        self.t.push(t);
        self.q.push(s.q);
        self.p.push(s.p);
        self.qdot.push(velocity_of(&s.p));
        self.energy.push(e);
    }

    /// Largest `|H(t) - H(0)| / |H(0)|`.
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.energy.first().copied().unwrap_or(0.0);
        self.energy.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max) / e0.abs().max(f64::MIN_POSITIVE)
    }
}

/// Integrates the nonlinear system, calling `observe(step, t, state)` at every snapshot
/// (including the initial state).
pub fn run_nonlinear_with<F>(
    y0: &PhaseState,
    rho: &ChargeDensity,
    cfg: &SimConfig,
    mut observe: F,
) -> Result<(PhaseState, Trajectory)>
where
    F: FnMut(usize, f64, &PhaseState) -> Result<()>,
{
    cfg.validate()?;
    let grid = rho.grid();
    let rh = rho.rho_hat();
    let peak = rh.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if rh[0].norm() > 1e-10 * peak {
        return Err(Error::Argument(format!("charge has nonzero total charge: |ρ̂(0)| = {:e}", rh[0].norm())));
    }
    let steps = cfg.steps();
    if cfg.check_horizon {
        let hz = wrap_horizon(rho, &y0.q);
        if cfg.t_end >= hz {
            return Err(Error::Wrap(format!("t_end {} is beyond the wrap horizon {hz:.3}", cfg.t_end)));
        }
    }
    let (a, b) = cfg.scheme.coefficients();
    let mut tables: Vec<WaveTables> = Vec::new();
    for &bi in &b {
        if !tables.iter().any(|t| t.tau == bi * cfg.dt) {
            tables.push(WaveTables::new(grid, bi * cfg.dt));
        }
    }
    let mut y = y0.clone();
    let e0 = hamiltonian(&y, rho);
    let mut traj = Trajectory::default();
    traj.record(0.0, &y, e0);
    observe(0, 0.0, &y)?;
    for step in 1..=steps {
        for (i, &ai) in a.iter().enumerate() {
            y.q += ai * cfg.dt * velocity_of(&y.p);
            if i < b.len() {
                let tab = tables.iter().find(|t| t.tau == b[i] * cfg.dt).unwrap();
                let kick = field_step(&mut y, rho, tab);
                y.p += kick;
            }
        }
        let speed = velocity_of(&y.p).norm();
        if !(speed < cfg.v_cap) {
            return Err(Error::BlowUp(format!("|q̇| = {speed} at step {step}")));
        }
        if step % cfg.snapshot_every == 0 || step == steps {
            let t = step as f64 * cfg.dt;
            let e = hamiltonian(&y, rho);
            traj.record(t, &y, e);
            let drift = (e - e0).abs() / e0.abs();
            if drift > cfg.drift_tol {
                return Err(Error::Integrator(format!("energy drift {drift:e} at t = {t}")));
            }
            if cfg.check_horizon && t >= wrap_horizon(rho, &y.q) {
                return Err(Error::Wrap(format!("wave front reached the box boundary at t = {t}")));
            }
            observe(step, t, &y)?;
        }
    }
    Ok((y, traj))
}

/// Integrates the nonlinear system and keeps every snapshot.
pub fn run_nonlinear(
    y0: &PhaseState,
    rho: &ChargeDensity,
    cfg: &SimConfig,
) -> Result<(Trajectory, Vec<(f64, PhaseState)>)> {
    let mut snaps = Vec::new();
    let (_, traj) = run_nonlinear_with(y0, rho, cfg, |_, t, s| {
        snaps.push((t, s.clone()));
        Ok(())
    })?;
    Ok((traj, snaps))
}

/// Reverses momenta: `(ψ, π, q, p) ↦ (ψ, -π, q, -p)`.
pub fn reverse_momenta(state: &PhaseState) -> PhaseState {
    let mut out = state.clone();
    out.fields.pi.iter_mut().for_each(|z| *z = -*z);
    out.p = -out.p;
    out
}

/// Matrix `C_ij = ⟨∂_iψ_v, ∂_jρ⟩` so that `⟨∇ψ_v, Q·∇ρ⟩ = C Q`.
pub fn coupling_matrix(rho: &ChargeDensity, v: &Vector3<f64>) -> Matrix3<f64> {
    let grid = rho.grid();
    let mut c = Matrix3::zeros();
    for (i, r) in rho.rho_hat().iter().enumerate() {
        let r = r.re;
        if r == 0.0 {
            continue;
        }
        let k = grid.k_vec(i);
        let kv = k.dot(v);
        let d = k.norm_squared() - kv * kv;
        // (-i k_i ψ̂_v) conj(-i k_j ρ̂) = k_i k_j ψ̂_v ρ̂
        let w = -r * r / d;
        c += k * k.transpose() * w;
    }
    c * grid.mode_volume()
}

/// Quadratic form `H_{v,w}` of the linearised flow.
pub fn linear_energy(x: &Tangent, rho: &ChargeDensity, v: &Vector3<f64>, w: &Vector3<f64>) -> f64 {
    let grid = rho.grid();
    let k2 = grid.k2();
    let rh = rho.rho_hat();
    let (psi, pi) = (&x.fields.psi, &x.fields.pi);
    let mut quad = 0.0;
    let mut cross = 0.0;
    let mut src = 0.0;
    for i in 0..grid.len() {
        let k = grid.k_vec(i);
        quad += pi[i].norm_sqr() + k2[i] * psi[i].norm_sqr();
        // ∫Π w·∇Ψ = Σ Π̂ conj(-i(k·w)Ψ̂)
        cross += (pi[i] * Complex64::new(0.0, k.dot(w)) * psi[i].conj()).re;
        // ∫ρ Q·∇Ψ = Σ ρ̂ conj(-i(k·Q)Ψ̂)
        src += (Complex64::new(0.0, k.dot(&x.q) * rh[i].re) * psi[i].conj()).re;
    }
    let dv = grid.mode_volume();
    let c = coupling_matrix(rho, v);
    0.5 * quad * dv + cross * dv + src * dv + 0.5 * x.p.dot(&(b_matrix(v) * x.p)) - 0.5 * x.q.dot(&(c * x.q))
}

/// Manifestly nonnegative form of `H_{v,v}`:
/// `½∫(|Π + v·∇Ψ|² + |Λ_v^{1/2}Ψ - Λ_v^{-1/2} Q·∇ρ|²) + ½ P·B_v P`.
pub fn linear_energy_sum_of_squares(x: &Tangent, rho: &ChargeDensity, v: &Vector3<f64>) -> f64 {
    let grid = rho.grid();
    let rh = rho.rho_hat();
    let mut acc = 0.0;
    for i in 0..grid.len() {
        let k = grid.k_vec(i);
        let kv = k.dot(v);
        let lam = k.norm_squared() - kv * kv;
        let a = x.fields.pi[i] - Complex64::new(0.0, kv) * x.fields.psi[i];
        acc += a.norm_sqr();
        if lam > 0.0 {
            let g = Complex64::new(0.0, -k.dot(&x.q) * rh[i].re);
            acc += (x.fields.psi[i] * lam.sqrt() - g / lam.sqrt()).norm_sqr();
        }
    }
    0.5 * acc * grid.mode_volume() + 0.5 * x.p.dot(&(b_matrix(v) * x.p))
}

/// Per-mode propagator of the drifting wave equation with constant source.
struct DriftTables {
    tau: f64,
    /// `e^{-iατ} cos ωτ`, `e^{-iατ} sin ωτ / ω`, `e^{-iατ} ω sin ωτ`.
    c: Vec<Complex64>,
    s: Vec<Complex64>,
    ws: Vec<Complex64>,
    /// `∫₀^τ e^{-iαt} cos ωt dt` and `∫₀^τ e^{-iαt} sin ωt / ω dt`.
    ic: Vec<Complex64>,
    is: Vec<Complex64>,
    /// `1/(|k|² - α²)`.
    inv_d: Vec<f64>,
    alpha: Vec<f64>,
}

fn expint(beta: f64, tau: f64) -> Complex64 {
    // ∫₀^τ e^{iβt} dt
    if (beta * tau).abs() < 1e-6 {
        let x = beta * tau;
        Complex64::new(tau * (1.0 - x * x / 6.0), tau * (0.5 * x - x * x * x / 24.0))
    } else {
        (Complex64::from_polar(1.0, beta * tau) - 1.0) / Complex64::new(0.0, beta)
    }
}

impl DriftTables {
    fn new(grid: &Grid3, w: &Vector3<f64>, tau: f64) -> Self {
        let len = grid.len();
        let mut t = DriftTables {
            tau,
            c: Vec::with_capacity(len),
            s: Vec::with_capacity(len),
            ws: Vec::with_capacity(len),
            ic: Vec::with_capacity(len),
            is: Vec::with_capacity(len),
            inv_d: Vec::with_capacity(len),
            alpha: Vec::with_capacity(len),
        };
        for i in 0..len {
            let k = grid.k_vec(i);
            let om = k.norm();
            let al = k.dot(w);
            let e = Complex64::from_polar(1.0, -al * tau);
            t.alpha.push(al);
            if om == 0.0 {
                t.c.push(e);
                t.s.push(e * tau);
                t.ws.push(Complex64::new(0.0, 0.0));
                t.ic.push(expint(-al, tau));
                t.is.push(Complex64::new(0.5 * tau * tau, 0.0));
                t.inv_d.push(0.0);
                continue;
            }
            let (sn, cs) = (om * tau).sin_cos();
            t.c.push(e * cs);
            t.s.push(e * (sn / om));
            t.ws.push(e * (om * sn));
            let ep = expint(om - al, tau);
            let em = expint(-(om + al), tau);
            t.ic.push((ep + em) * 0.5);
            t.is.push((ep - em) / Complex64::new(0.0, 2.0 * om));
            t.inv_d.push(1.0 / (om * om - al * al));
        }
        t
    }
}

/// Field part of the linearised flow with `Q` frozen; returns the `P` increment.
fn linear_field_step(x: &mut Tangent, rho: &ChargeDensity, c: &Matrix3<f64>, tab: &DriftTables) -> Vector3<f64> {
    let grid = rho.grid();
    let kk = grid.wavenumbers();
    let rh = rho.rho_hat();
    let n = grid.n();
    let qv = x.q;
    let mut kick = [0.0f64; 3];
    for j0 in 0..n {
        for j1 in 0..n {
            let base = (j0 * n + j1) * n;
            for j2 in 0..n {
                let i = base + j2;
                let r = rh[i].re;
                let kq = kk[j0] * qv[0] + kk[j1] * qv[1] + kk[j2] * qv[2];
                // stationary solution of the forced mode: Ψ_p = -i(k·Q)ρ̂/(k²-α²), Π_p = iα Ψ_p
                let psi_p = Complex64::new(0.0, -kq * r * tab.inv_d[i]);
                let pi_p = Complex64::new(0.0, tab.alpha[i]) * psi_p;
                let u = x.fields.psi[i] - psi_p;
                let w = x.fields.pi[i] - pi_p;
                x.fields.psi[i] = psi_p + tab.c[i] * u + tab.s[i] * w;
                x.fields.pi[i] = pi_p - tab.ws[i] * u + tab.c[i] * w;
                if r != 0.0 {
                    let integral = psi_p * tab.tau + tab.ic[i] * u + tab.is[i] * w;
                    // ⟨Ψ, ∂_jρ⟩ = Σ Ψ̂ (i k_j) ρ̂
                    let im = -(integral.im) * r;
                    kick[0] += kk[j0] * im;
                    kick[1] += kk[j1] * im;
                    kick[2] += kk[j2] * im;
                }
            }
        }
    }
    Vector3::from(kick) * grid.mode_volume() + tab.tau * (c * qv)
}

/// Integrates the linearised flow `A_{v,w}`; snapshots as in [`run_nonlinear_with`].
pub fn run_linearized_with<F>(
    x0: &Tangent,
    rho: &ChargeDensity,
    v: &Vector3<f64>,
    w: &Vector3<f64>,
    cfg: &SimConfig,
    mut observe: F,
) -> Result<Tangent>
where
    F: FnMut(usize, f64, &Tangent) -> Result<()>,
{
    cfg.validate()?;
    if !(v.norm() < 1.0 && w.norm() < 1.0) {
        return Err(Error::Domain("velocities must be subluminal".into()));
    }
    let grid = rho.grid();
    let (a, b) = cfg.scheme.coefficients();
    let mut tables: Vec<DriftTables> = Vec::new();
    for &bi in &b {
        if !tables.iter().any(|t| t.tau == bi * cfg.dt) {
            tables.push(DriftTables::new(grid, w, bi * cfg.dt));
        }
    }
    let c = coupling_matrix(rho, v);
    let bm = b_matrix(v);
    let mut x = x0.clone();
    observe(0, 0.0, &x)?;
    let steps = cfg.steps();
    for step in 1..=steps {
        for (i, &ai) in a.iter().enumerate() {
            x.q += ai * cfg.dt * (bm * x.p);
            if i < b.len() {
                let tab = tables.iter().find(|t| t.tau == b[i] * cfg.dt).unwrap();
                let kick = linear_field_step(&mut x, rho, &c, tab);
                x.p += kick;
            }
        }
        if step % cfg.snapshot_every == 0 || step == steps {
            observe(step, step as f64 * cfg.dt, &x)?;
        }
    }
    Ok(x)
}

/// Integrates the linearised flow and keeps every snapshot.
pub fn run_linearized(
    x0: &Tangent,
    rho: &ChargeDensity,
    v: &Vector3<f64>,
    w: &Vector3<f64>,
    cfg: &SimConfig,
) -> Result<Vec<(f64, Tangent)>> {
    let mut out = Vec::new();
    run_linearized_with(x0, rho, v, w, cfg, |_, t, x| {
        out.push((t, x.clone()));
        Ok(())
    })?;
    Ok(out)
}

/// Free group `W(t)` of `Ḟ = [[v·∇, 1], [Δ, v·∇]] F`, applied exactly per mode.
pub fn wave_group(grid: &Grid3, f0: &FieldPair, v: &Vector3<f64>, t: f64) -> FieldPair {
    let mut out = f0.clone();
    for i in 0..grid.len() {
        let k = grid.k_vec(i);
        let om = k.norm();
        let e = Complex64::from_polar(1.0, -k.dot(v) * t);
        let (a, b) = (f0.psi[i], f0.pi[i]);
        if om == 0.0 {
            out.psi[i] = e * (a + b * t);
            out.pi[i] = e * b;
        } else {
            let (s, c) = (om * t).sin_cos();
            out.psi[i] = e * (a * c + b * (s / om));
            out.pi[i] = e * (-a * (om * s) + b * c);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charge::make_admissible_density;
    use crate::soliton::{soliton, SolitonParams};

    fn setup() -> ChargeDensity {
        let grid = Grid3::new(64, 16.0).unwrap();
        make_admissible_density(&grid, 1.0, 0.05).unwrap()
    }

    #[test]
    fn static_soliton_is_stationary() {
        let rho = setup();
        let s = SolitonParams::new(Vector3::zeros(), Vector3::zeros()).unwrap();
        let y0 = soliton(&rho, &s).unwrap();
        let mut cfg = SimConfig::for_grid(rho.grid(), 1.0);
        cfg.check_horizon = false;
        let (traj, snaps) = run_nonlinear(&y0, &rho, &cfg).unwrap();
        let last = &snaps.last().unwrap().1;
        assert!(last.difference(&y0).norm(rho.grid()) < 1e-12 * y0.norm(rho.grid()));
        assert!(traj.energy_drift() < 1e-14);
    }

    #[test]
    fn energy_is_above_lower_bound() {
        let rho = setup();
        let s = SolitonParams::new(Vector3::zeros(), Vector3::zeros()).unwrap();
        let y0 = soliton(&rho, &s).unwrap();
        let h = hamiltonian(&y0, &rho);
        let lb = energy_lower_bound(&rho);
        // the static soliton attains the bound
        assert!((h - lb).abs() < 1e-12 * h.abs());
        let v = SolitonParams::new(Vector3::zeros(), Vector3::new(0.3, 0.0, 0.0)).unwrap();
        assert!(hamiltonian(&soliton(&rho, &v).unwrap(), &rho) > lb);
    }

    #[test]
    fn wave_group_shift_identity() {
        let grid = Grid3::new(32, 16.0).unwrap();
        let f0 = FieldPair::from_real(
            &grid,
            &grid.sample(|x| (-x.norm_squared()).exp()),
            &grid.sample(|x| x[1] * (-x.norm_squared()).exp()),
        );
        let v = Vector3::new(0.3, -0.2, 0.1);
        let t = 1.7;
        let a = wave_group(&grid, &f0, &v, t);
        let mut b = wave_group(&grid, &f0, &Vector3::zeros(), t);
        b.translate(&grid, &(-v * t));
        let err: f64 = a.psi.iter().zip(&b.psi).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-14);
        let back = wave_group(&grid, &a, &v, -t);
        let err: f64 = back.pi.iter().zip(&f0.pi).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-14);
    }

    #[test]
    fn energy_forms_agree() {
        let rho = setup();
        let grid = rho.grid().clone();
        let v = Vector3::new(0.3, 0.1, 0.0);
        let mut x = PhaseState::zeros(&grid);
        x.fields = FieldPair::from_real(
            &grid,
            &grid.sample(|y| (-(y - Vector3::new(0.5, 0.0, 0.0)).norm_squared()).exp()),
            &grid.sample(|y| y[2] * (-y.norm_squared()).exp()),
        );
        x.q = Vector3::new(0.1, -0.2, 0.3);
        x.p = Vector3::new(-0.1, 0.05, 0.2);
        let a = linear_energy(&x, &rho, &v, &v);
        let b = linear_energy_sum_of_squares(&x, &rho, &v);
        assert!(b >= 0.0);
        assert!((a - b).abs() < 1e-12 * b, "{a} {b}");
    }
}
