//! Observables of a perturbed-soliton run: weighted norms, the modulation
//! track `σ(t)` with its transversal residue `Z(t)`, decay fits, the
//! majorant, and the scattering state of the radiated field.

use nalgebra::Vector3;
use serde::Serialize;

use crate::charge::ChargeDensity;
use crate::dynamics::wave_group;
use crate::error::{Error, Result};
use crate::grid::Grid3;
use crate::soliton::{soliton, tangent_frame, velocity_of, FieldPair, PhaseState, SolitonParams, Tangent};
use crate::symplectic::{project_nonlinear, Projection, ProjectionOptions};

/// Default `δ`.
pub const DELTA: f64 = 0.25;
/// Default `β = 4 + δ`.
pub const BETA: f64 = 4.0 + DELTA;
/// Minimum number of samples in a decay fit.
pub const MIN_FIT_SAMPLES: usize = 10;

/// `‖(1+|x|)^a f‖` for a spectrum, with the weight centred at the box centre.
fn weighted_l2(grid: &Grid3, spec: &[num_complex::Complex64], a: f64) -> f64 {
    let f = grid.inverse(spec);
    let h3 = grid.cell_volume();
    let s: f64 = f
        .iter()
        .enumerate()
        .map(|(i, v)| (1.0 + grid.position(i).norm()).powf(2.0 * a) * v * v)
        .sum();
    (s * h3).sqrt()
}

/// `‖ψ‖_α + ‖∇ψ‖_α + ‖π‖_{α+1}` with `‖f‖_α = ‖(1+|x|)^α f‖`.
pub fn weighted_field_norm(grid: &Grid3, f: &FieldPair, alpha: f64) -> f64 {
    let mut grad = 0.0;
    for axis in 0..3 {
        grad += weighted_l2(grid, &grid.derivative(&f.psi, axis), alpha).powi(2);
    }
    weighted_l2(grid, &f.psi, alpha) + grad.sqrt() + weighted_l2(grid, &f.pi, alpha + 1.0)
}

/// `‖Y‖_α = ‖ψ‖_{1,α} + ‖π‖_{α+1} + |q| + |p|`.
pub fn weighted_norm(grid: &Grid3, y: &PhaseState, alpha: f64) -> f64 {
    weighted_field_norm(grid, &y.fields, alpha) + y.q.norm() + y.p.norm()
}

/// Modulation parameters and transversal residue along a run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ModulationTrack {
    pub t: Vec<f64>,
    pub sigma: Vec<SolitonParams>,
    /// `c(t) = b(t) - ∫₀ᵗ v`.
    pub c: Vec<Vector3<f64>>,
    /// `‖Z(t)‖_{-β}`.
    pub z_norm: Vec<f64>,
    pub residual: Vec<f64>,
    pub iterations: Vec<usize>,
    pub c_dot: Vec<Vector3<f64>>,
    pub v_dot: Vec<Vector3<f64>>,
    /// `‖T(t)‖_β` with `T = -Σ(ċ_l τ_l + v̇_l τ_{3+l})`.
    pub t_norm: Vec<f64>,
    pub beta: f64,
    /// Snapshot index and message of a projection failure.
    pub failure: Option<(usize, String)>,
}

impl ModulationTrack {
    /// `(|ċ| + |v̇|) / ‖Z‖²_{-β}` per snapshot.
    pub fn modulation_ratio(&self) -> Vec<f64> {
        (0..self.t.len())
            .map(|i| (self.c_dot[i].norm() + self.v_dot[i].norm()) / self.z_norm[i].powi(2))
            .collect()
    }

    /// `‖T‖_β / ‖Z‖²_{-β}` per snapshot.
    pub fn t_ratio(&self) -> Vec<f64> {
        (0..self.t.len()).map(|i| self.t_norm[i] / self.z_norm[i].powi(2)).collect()
    }

    pub fn complete(&self) -> bool {
        self.failure.is_none()
    }
}

/// Derivative of sampled data: centred inside, one-sided at the ends.
fn differentiate(t: &[f64], y: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    let n = t.len();
    (0..n)
        .map(|i| {
            if n < 2 {
                Vector3::zeros()
            } else if i == 0 {
                (y[1] - y[0]) / (t[1] - t[0])
            } else if i == n - 1 {
                (y[n - 1] - y[n - 2]) / (t[n - 1] - t[n - 2])
            } else {
                (y[i + 1] - y[i - 1]) / (t[i + 1] - t[i - 1])
            }
        })
        .collect()
}

/// Incremental projection of snapshots onto the solitary manifold.
pub struct ModulationTracker<'a> {
    rho: &'a ChargeDensity,
    opts: ProjectionOptions,
    guess: SolitonParams,
    track: ModulationTrack,
    keep: bool,
    residues: Vec<Tangent>,
}

impl<'a> ModulationTracker<'a> {
    pub fn new(rho: &'a ChargeDensity, guess: SolitonParams, opts: ProjectionOptions, beta: f64) -> Self {
        ModulationTracker {
            rho,
            opts,
            guess,
            track: ModulationTrack { beta, ..Default::default() },
            keep: false,
            residues: Vec::new(),
        }
    }

    /// Keeps every residue `Z(t)` in memory.
    pub fn keep_residues(mut self) -> Self {
        self.keep = true;
        self
    }

    /// Projects one snapshot; after a failure further snapshots are ignored.
    pub fn push(&mut self, t: f64, y: &PhaseState) -> Option<Projection> {
        if self.track.failure.is_some() {
            return None;
        }
        match project_nonlinear(self.rho, y, &self.guess, &self.opts) {
            Ok(p) => {
                let tr = &mut self.track;
                tr.t.push(t);
                tr.sigma.push(p.sigma);
                tr.z_norm.push(weighted_norm(self.rho.grid(), &p.z, -tr.beta));
                tr.residual.push(p.residual);
                tr.iterations.push(p.iterations);
                self.guess = p.sigma;
                if self.keep {
                    self.residues.push(p.z.clone());
                }
                Some(p)
            }
            Err(e) => {
                self.track.failure = Some((self.track.t.len(), e.to_string()));
                None
            }
        }
    }

    /// Completes derivatives, `c(t)` and `‖T(t)‖_β`.
    pub fn finish(mut self) -> Result<(ModulationTrack, Vec<Tangent>)> {
        let tr = &mut self.track;
        let b: Vec<Vector3<f64>> = tr.sigma.iter().map(|s| s.b).collect();
        let v: Vec<Vector3<f64>> = tr.sigma.iter().map(|s| s.v).collect();
        let mut acc = Vector3::zeros();
        tr.c.clear();
        for i in 0..tr.t.len() {
            if i > 0 {
                acc += 0.5 * (v[i] + v[i - 1]) * (tr.t[i] - tr.t[i - 1]);
            }
            tr.c.push(b[i] - acc);
        }
        tr.c_dot = differentiate(&tr.t, &tr.c);
        tr.v_dot = differentiate(&tr.t, &v);
        tr.t_norm.clear();
        let grid = self.rho.grid();
        for i in 0..tr.t.len() {
            let frame = tangent_frame(self.rho, &SolitonParams { b: Vector3::zeros(), v: v[i] })?;
            let mut t = PhaseState::zeros(grid);
            for l in 0..3 {
                t.axpy(-tr.c_dot[i][l], &frame.vectors[l]);
                t.axpy(-tr.v_dot[i][l], &frame.vectors[3 + l]);
            }
            tr.t_norm.push(weighted_norm(grid, &t, tr.beta));
        }
        Ok((self.track, self.residues))
    }
}

/// Projects a stored list of snapshots.
pub fn extract_modulation(
    rho: &ChargeDensity,
    snapshots: &[(f64, PhaseState)],
    guess: &SolitonParams,
    opts: &ProjectionOptions,
    beta: f64,
) -> Result<ModulationTrack> {
    let mut tk = ModulationTracker::new(rho, *guess, *opts, beta);
    for (t, y) in snapshots {
        tk.push(*t, y);
    }
    Ok(tk.finish()?.0)
}

/// Least-squares power law `y ≈ A t^p`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecayFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub window: (f64, f64),
    /// RMS residual of the log-log fit.
    pub residual: f64,
    pub samples: usize,
}

/// Fits `log y = log A + p log t` over samples with `t` in `window`.
pub fn fit_decay(t: &[f64], y: &[f64], window: (f64, f64)) -> Result<DecayFit> {
    if t.len() != y.len() {
        return Err(Error::Argument("time and value series differ in length".into()));
    }
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(&s, _)| s >= window.0 && s <= window.1)
        .map(|(&s, &v)| (s, v))
        .collect();
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(Error::Argument(format!("{} samples in window, need {MIN_FIT_SAMPLES}", pts.len())));
    }
    if pts.iter().any(|&(s, v)| !(v > 0.0) || !(s > 0.0)) {
        return Err(Error::Argument("decay fits need positive times and values".into()));
    }
    let n = pts.len() as f64;
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let p = sxy / sxx;
    let a = my - p * mx;
    let res = (xs.iter().zip(&ys).map(|(x, y)| (y - a - p * x).powi(2)).sum::<f64>() / n).sqrt();
    Ok(DecayFit { exponent: p, prefactor: a.exp(), window, residual: res, samples: pts.len() })
}

/// Majorant `m(t)` and drift `d₁(t)`.
#[derive(Debug, Clone, Serialize)]
pub struct Majorant {
    pub t: Vec<f64>,
    /// `sup_{s≤t} (1+s)^{1+δ} ‖Z(s)‖_{-β}`.
    pub m: Vec<f64>,
    /// `d₁(t) = ∫_{t₁}^{t} (ḃ(s) - v(t₁)) ds = b(t) - b(t₁) - v(t₁)(t - t₁)`.
    pub d1: Vec<Vector3<f64>>,
    pub t1: f64,
}

impl Majorant {
    /// `max_{t≤t₁} |d₁(t)| / m(t₁)²`.
    pub fn drift_ratio(&self) -> f64 {
        let i1 = self.t.iter().rposition(|&s| s <= self.t1).unwrap_or(0);
        let m1 = self.m[i1];
        let d = self.d1[..=i1].iter().map(|x| x.norm()).fold(0.0, f64::max);
        if d == 0.0 {
            0.0
        } else {
            d / (m1 * m1)
        }
    }
}

/// Running majorant and drift up to `t₁`.
pub fn majorant_and_drift(track: &ModulationTrack, delta: f64, t1: f64) -> Majorant {
    let mut m = Vec::with_capacity(track.t.len());
    let mut run = 0.0f64;
    for (t, z) in track.t.iter().zip(&track.z_norm) {
        run = run.max((1.0 + t).powf(1.0 + delta) * z);
        m.push(run);
    }
    let i1 = track.t.iter().rposition(|&s| s <= t1).unwrap_or(0);
    let (b1, v1, s1) = match track.sigma.get(i1) {
        Some(s) => (s.b, s.v, track.t[i1]),
        None => (Vector3::zeros(), Vector3::zeros(), 0.0),
    };
    let d1 = track.sigma.iter().zip(&track.t).map(|(s, &t)| s.b - b1 - v1 * (t - s1)).collect();
    Majorant { t: track.t.clone(), m, d1, t1 }
}

/// Scattering data of the radiated field.
#[derive(Debug, Clone, Serialize)]
pub struct Scattering {
    pub t: Vec<f64>,
    pub qdot: Vec<Vector3<f64>>,
    /// `‖Ψ(t_i) - Ψ(t_{i-1})‖_𝓕` for `Ψ(t) = W₀(-t)Z(t)`, first entry at the second snapshot.
    pub cauchy: Vec<f64>,
    /// `‖Ψ(t_i) - Ψ(t_last)‖_𝓕` for every snapshot before the last.
    pub to_final: Vec<f64>,
    pub v_plus: Vector3<f64>,
    pub a_plus: Vector3<f64>,
    /// `max |q̇ - v₊|` over the last quarter relative to the overall swing of `q̇`.
    pub settle: f64,
    pub settled: bool,
    #[serde(skip)]
    pub psi_plus: Option<FieldPair>,
    pub psi_plus_norm: f64,
}

/// Incremental scattering-state extraction from snapshots.
pub struct ScatteringTracker<'a> {
    rho: &'a ChargeDensity,
    t: Vec<f64>,
    q: Vec<Vector3<f64>>,
    qdot: Vec<Vector3<f64>>,
    cauchy: Vec<f64>,
    history: Vec<FieldPair>,
}

impl Scattering {
    /// First time of the late quarter used for `v₊`.
    pub fn late_start(&self) -> f64 {
        let n = self.t.len();
        self.t.get(n - n / 4).copied().unwrap_or(f64::INFINITY)
    }
}

impl<'a> ScatteringTracker<'a> {
    pub fn new(rho: &'a ChargeDensity) -> Self {
        ScatteringTracker { rho, t: Vec::new(), q: Vec::new(), qdot: Vec::new(), cauchy: Vec::new(), history: Vec::new() }
    }

    pub fn push(&mut self, t: f64, y: &PhaseState) -> Result<()> {
        let grid = self.rho.grid();
        let v = velocity_of(&y.p);
        let acc = soliton(self.rho, &SolitonParams::new(y.q, v)?)?;
        let mut z = y.fields.clone();
        z.axpy(-1.0, &acc.fields);
        let psi = wave_group(grid, &z, &Vector3::zeros(), -t);
        if let Some(prev) = self.history.last() {
            let mut d = psi.clone();
            d.axpy(-1.0, prev);
            self.cauchy.push(d.full_norm(grid));
        }
        self.history.push(psi);
        self.t.push(t);
        self.q.push(y.q);
        self.qdot.push(v);
        Ok(())
    }

    pub fn finish(mut self) -> Result<Scattering> {
        let n = self.t.len();
        if n < 4 {
            return Err(Error::Argument("scattering needs at least four snapshots".into()));
        }
        let start = n - n / 4;
        let late = &self.qdot[start..];
        let v_plus = late.iter().sum::<Vector3<f64>>() / late.len() as f64;
        let a_plus = (start..n).map(|i| self.q[i] - v_plus * self.t[i]).sum::<Vector3<f64>>() / (n - start) as f64;
        let swing = self.qdot.iter().map(|v| (v - v_plus).norm()).fold(0.0, f64::max).max(v_plus.norm());
        let dev = late.iter().map(|v| (v - v_plus).norm()).fold(0.0, f64::max);
        let settle = if swing > 0.0 { dev / swing } else { 0.0 };
        let grid = self.rho.grid();
        let last = self.history.pop();
        let psi_plus_norm = last.as_ref().map(|f| f.full_norm(grid)).unwrap_or(0.0);
        let to_final = match &last {
            Some(fin) => self
                .history
                .iter()
                .map(|f| {
                    let mut d = f.clone();
                    d.axpy(-1.0, fin);
                    d.full_norm(grid)
                })
                .collect(),
            None => Vec::new(),
        };
        Ok(Scattering {
            t: self.t,
            qdot: self.qdot,
            cauchy: self.cauchy,
            to_final,
            v_plus,
            a_plus,
            settle,
            settled: settle <= 0.1,
            psi_plus: last,
            psi_plus_norm,
        })
    }
}

/// Scattering state from stored snapshots.
pub fn scattering_state(rho: &ChargeDensity, snapshots: &[(f64, PhaseState)]) -> Result<Scattering> {
    let mut tk = ScatteringTracker::new(rho);
    for (t, y) in snapshots {
        tk.push(*t, y)?;
    }
    tk.finish()
}

/// `true` when every difference is at most `1 + noise` times its predecessor.
pub fn decreasing_within(values: &[f64], noise: f64) -> bool {
    values.windows(2).all(|w| w[1] <= (1.0 + noise) * w[0])
}

/// Largest tolerated growth of a ratio between the two halves of a fit window.
pub const RATIO_GROWTH: f64 = 10.0;
/// Relative noise allowed in the monotone decrease of the Cauchy sequence.
pub const CAUCHY_NOISE: f64 = 0.1;

/// `true` when the ratio stays within `RATIO_GROWTH` of its first-half maximum.
fn ratio_bounded(t: &[f64], r: &[f64], window: (f64, f64)) -> (f64, bool) {
    let mid = 0.5 * (window.0 + window.1);
    let (mut early, mut late) = (0.0f64, 0.0f64);
    for (&s, &x) in t.iter().zip(r) {
        if s < window.0 || s > window.1 {
            continue;
        }
        if s <= mid {
            early = early.max(x);
        } else {
            late = late.max(x);
        }
    }
    let max = early.max(late);
    (max, max.is_finite() && late <= RATIO_GROWTH * early)
}

/// Summary of a perturbed run over the window `[t₀, horizon]`.
#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub delta: f64,
    pub beta: f64,
    pub window: (f64, f64),
    /// Fit of `‖Z(t)‖_{-β}`.
    pub z_fit: Option<DecayFit>,
    /// Fit of `|q̇(t) - v₊|` before the late quarter used for `v₊`.
    pub qdot_fit: Option<DecayFit>,
    pub fit_errors: Vec<String>,
    /// Largest `(|ċ| + |v̇|) / ‖Z‖²_{-β}` in the window.
    pub modulation_ratio: f64,
    pub modulation_bounded: bool,
    /// Largest `‖T‖_β / ‖Z‖²_{-β}` in the window.
    pub t_ratio: f64,
    pub t_bounded: bool,
    /// `max |d₁| / m(t₁)²` with `t₁` at the end of the window.
    pub drift_ratio: f64,
    pub in_basin: bool,
    pub cauchy_decreasing: bool,
    pub settled: bool,
}

impl DecayReport {
    pub fn build(
        track: &ModulationTrack,
        scattering: &Scattering,
        delta: f64,
        window: (f64, f64),
    ) -> DecayReport {
        let mut fit_errors = Vec::new();
        let z_fit = fit_decay(&track.t, &track.z_norm, window)
            .map_err(|e| fit_errors.push(format!("z: {e}")))
            .ok();
        let dev: Vec<f64> = scattering.qdot.iter().map(|q| (q - scattering.v_plus).norm()).collect();
        let late_start = scattering.late_start();
        let qdot_fit = fit_decay(&scattering.t, &dev, (window.0, late_start))
            .map_err(|e| fit_errors.push(format!("qdot: {e}")))
            .ok();
        let (modulation_ratio, modulation_bounded) = ratio_bounded(&track.t, &track.modulation_ratio(), window);
        let (t_ratio, t_bounded) = ratio_bounded(&track.t, &track.t_ratio(), window);
        let drift_ratio = majorant_and_drift(track, delta, window.1).drift_ratio();
        DecayReport {
            delta,
            beta: track.beta,
            window,
            z_fit,
            qdot_fit,
            fit_errors,
            modulation_ratio,
            modulation_bounded,
            t_ratio,
            t_bounded,
            drift_ratio,
            in_basin: track.complete(),
            cauchy_decreasing: decreasing_within(&scattering.to_final, CAUCHY_NOISE),
            settled: scattering.settled,
        }
    }

    /// Checks of the perturbed-soliton experiment against an exponent bound.
    pub fn passes(&self, max_exponent: f64) -> bool {
        let fit_ok = |f: &Option<DecayFit>| f.map(|f| f.exponent <= max_exponent).unwrap_or(false);
        self.in_basin
            && self.modulation_bounded
            && fit_ok(&self.z_fit)
            && fit_ok(&self.qdot_fit)
            && self.cauchy_decreasing
            && self.settled
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charge::make_admissible_density;

    #[test]
    fn fit_recovers_power_law() {
        let t: Vec<f64> = (1..=40).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = t.iter().map(|s| 3.0 * s.powf(-1.5)).collect();
        let f = fit_decay(&t, &y, (1.0, 20.0)).unwrap();
        assert!((f.exponent + 1.5).abs() < 1e-12 && (f.prefactor - 3.0).abs() < 1e-10);
        let c = vec![2.0; t.len()];
        assert!(fit_decay(&t, &c, (1.0, 20.0)).unwrap().exponent.abs() < 1e-14);
        let mut bad = y.clone();
        bad[10] = 0.0;
        assert!(matches!(fit_decay(&t, &bad, (1.0, 20.0)), Err(Error::Argument(_))));
        assert!(matches!(fit_decay(&t, &y, (1.0, 3.0)), Err(Error::Argument(_))));
    }

    #[test]
    fn weighted_norm_at_zero_weight() {
        let grid = Grid3::new(32, 12.0).unwrap();
        let f = FieldPair::from_real(
            &grid,
            &grid.sample(|x| (-x.norm_squared()).exp()),
            &grid.sample(|x| x[0] * (-x.norm_squared()).exp()),
        );
        // π carries one extra power, so only ψ reduces to plain norms at α = 0
        let a = weighted_field_norm(&grid, &f, 0.0);
        let b = grid.l2_norm(&f.psi) + grid.gradient_norm(&f.psi) + weighted_l2(&grid, &f.pi, 1.0);
        assert!((a - b).abs() < 1e-12 * a);
        let c = weighted_field_norm(&grid, &f, -1.0);
        let d = grid.l2_norm(&f.psi) + grid.gradient_norm(&f.psi) + grid.l2_norm(&f.pi);
        assert!(weighted_l2(&grid, &f.pi, 0.0) - grid.l2_norm(&f.pi) < 1e-12);
        assert!(c < d);
    }

    #[test]
    fn soliton_track_is_exact() {
        let grid = Grid3::new(64, 16.0).unwrap();
        let rho = make_admissible_density(&grid, 1.0, 0.01).unwrap();
        let s = SolitonParams::new(Vector3::new(0.2, 0.0, 0.0), Vector3::new(0.3, 0.0, 0.0)).unwrap();
        let snaps: Vec<(f64, PhaseState)> = (0..3)
            .map(|i| {
                let t = i as f64;
                let si = SolitonParams::new(s.b + s.v * t, s.v).unwrap();
                (t, soliton(&rho, &si).unwrap())
            })
            .collect();
        let tr = extract_modulation(&rho, &snaps, &s, &ProjectionOptions::default(), BETA).unwrap();
        assert!(tr.complete());
        assert!(tr.z_norm.iter().all(|z| *z < 1e-6));
        assert!(tr.c.iter().all(|c| (c - s.b).norm() < 1e-8));
        let m = majorant_and_drift(&tr, DELTA, 2.0);
        assert!(m.m.windows(2).all(|w| w[1] >= w[0]));
        assert!(m.d1.iter().all(|d| d.norm() < 1e-8));
        assert!(scattering_state(&rho, &snaps).is_err());
    }
}
