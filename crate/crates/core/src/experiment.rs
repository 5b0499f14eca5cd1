//! Experiment orchestration: presets, validated run settings and the
//! pipelines behind the command-line subcommands. Every pipeline writes its
//! resolved configuration to `config.txt` and a `meta.json` summary; a failed
//! run keeps its partial outputs next to a `FAILED` marker.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::charge::{make_admissible_density, ChargeDensity, MOMENT_TOL, RADIUS_TOL, WIENER_FLOOR};
use crate::config::Config;
use crate::diagnostics::{
    weighted_norm, DecayReport, ModulationTrack, ModulationTracker, Scattering, ScatteringTracker, BETA,
    CAUCHY_NOISE, DELTA, MIN_FIT_SAMPLES, RATIO_GROWTH,
};
use crate::dynamics::{
    hamiltonian, linear_energy_sum_of_squares, run_linearized_with, run_nonlinear_with, wrap_horizon, Scheme,
    SimConfig,
};
use crate::error::{Error, Result};
use crate::grid::Grid3;
use crate::output::{cols3, load_state, push3, save_state, write_json, write_slice, Table};
use crate::soliton::{
    momentum, soliton, soliton_residuals, tangent_frame, FieldPair, PhaseState, SolitonParams, SolitonResiduals,
};
use crate::spectral::{k_matrix, on_axis, r_at_zero, REFINE_TOL};
use crate::symplectic::{omega, project_linear, ProjectionOptions};

/// Names of the built-in presets.
pub const PRESETS: [&str; 3] = ["soliton-persistence", "perturbed-soliton", "spectrum-scan"];

/// Settings used when no preset is named.
pub const DEFAULT_CONFIG: &str = "\
seed = 7
kind = simulation

[grid]
n = 64
length = 16

[charge]
width = 1
amplitude = 0.01

[soliton]
b = 0, 0, 0
v = 0.3, 0, 0

# an unperturbed soliton radiates nothing, so the wrap horizon of this
# small box does not apply; enable it for perturbed data
[run]
t_end = 20
snapshot_every = 4
check_horizon = false

[spectrum]
speed = 0.3
omega_min = -3
omega_max = 3
count = 60

[linearize]
mode = random
t_end = 10
";

const PERTURBED: &str = "\
seed = 7
kind = simulation

[grid]
n = 96
length = 96

[charge]
width = 4
amplitude = 2.56

[soliton]
b = 0, 0, 0
v = 0, 0, 0

[perturbation]
amplitude = 0.01
bumps = 3
width = 4
field_weight = 0
kick_weight = 1

[run]
t_end = 19
snapshot_every = 2
slices = false

[analysis]
enabled = true
window_start = 5
";

const SPECTRUM: &str = "\
seed = 7
kind = spectrum

[grid]
n = 64
length = 16

[charge]
width = 1
amplitude = 0.01

[spectrum]
speed = 0.3
omega_min = -3
omega_max = 3
count = 60
";

const KEYS: &[(&str, &str)] = &[
    ("", "seed"),
    ("", "kind"),
    ("grid", "n"),
    ("grid", "length"),
    ("charge", "width"),
    ("charge", "amplitude"),
    ("soliton", "b"),
    ("soliton", "v"),
    ("perturbation", "amplitude"),
    ("perturbation", "bumps"),
    ("perturbation", "width"),
    ("perturbation", "field_weight"),
    ("perturbation", "kick_weight"),
    ("perturbation", "file"),
    ("run", "t_end"),
    ("run", "dt"),
    ("run", "scheme"),
    ("run", "snapshot_every"),
    ("run", "drift_tol"),
    ("run", "v_cap"),
    ("run", "check_horizon"),
    ("run", "slices"),
    ("run", "store_states"),
    ("analysis", "enabled"),
    ("analysis", "delta"),
    ("analysis", "window_start"),
    ("spectrum", "speed"),
    ("spectrum", "omega_min"),
    ("spectrum", "omega_max"),
    ("spectrum", "count"),
    ("linearize", "mode"),
    ("linearize", "index"),
    ("linearize", "t_end"),
];

/// Configuration of a built-in preset.
pub fn preset_config(name: &str) -> Result<Config> {
    let text = match name {
        "soliton-persistence" => {
            let mut c = Config::parse(PERTURBED)?;
            c.set("perturbation", "amplitude", "0");
            return Ok(c);
        }
        "perturbed-soliton" => PERTURBED,
        "spectrum-scan" => SPECTRUM,
        _ => return Err(Error::Config(format!("unknown preset `{name}`; known: {}", PRESETS.join(", ")))),
    };
    Config::parse(text)
}

/// What a preset computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Simulation,
    Spectrum,
}

/// Seeded random perturbation `Z₀` added to the initial soliton.
#[derive(Debug, Clone, Serialize)]
pub struct Perturbation {
    /// Target `d_β = ‖Z₀‖_β`.
    pub amplitude: f64,
    /// Number of Gaussian bumps in `ψ` and `π`.
    pub bumps: usize,
    pub width: f64,
    pub field_weight: f64,
    pub kick_weight: f64,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialCondition {
    Soliton,
    Perturbed(Perturbation),
    File(PathBuf),
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSpec {
    pub t_end: f64,
    pub dt: Option<f64>,
    pub scheme: Scheme,
    pub snapshot_every: usize,
    pub drift_tol: f64,
    pub v_cap: f64,
    pub check_horizon: bool,
    pub slices: bool,
    pub store_states: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisSpec {
    pub enabled: bool,
    pub delta: f64,
    pub window_start: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumSpec {
    pub speed: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub count: usize,
}

/// Initial data of a linearised run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearMode {
    /// `X₀ = τ_j`.
    Kernel,
    /// `X₀ = τ_{3+j}`.
    Secular,
    /// Seeded random data projected onto the transversal subspace.
    Random,
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearizeSpec {
    pub mode: LinearMode,
    pub index: usize,
    pub t_end: f64,
}

/// Validated experiment settings.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentPreset {
    pub kind: Kind,
    pub seed: u64,
    pub n: usize,
    pub length: f64,
    pub charge_width: f64,
    pub charge_amplitude: f64,
    pub sigma0: SolitonParams,
    pub initial: InitialCondition,
    pub run: RunSpec,
    pub analysis: AnalysisSpec,
    pub spectrum: SpectrumSpec,
    pub linearize: LinearizeSpec,
    #[serde(skip)]
    pub config: Config,
}

fn positive(name: &str, x: f64) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Config(format!("{name} must be positive, got {x}")))
    }
}

impl ExperimentPreset {
    /// Reads and validates every setting; unset keys take the defaults.
    pub fn from_config(user: &Config) -> Result<ExperimentPreset> {
        user.check_keys(KEYS)?;
        let mut cfg = Config::parse(DEFAULT_CONFIG)?;
        cfg.merge(user);
        let c = &cfg;
        let kind = match c.raw("", "kind").unwrap_or("simulation") {
            "simulation" => Kind::Simulation,
            "spectrum" => Kind::Spectrum,
            k => return Err(Error::Config(format!("unknown kind `{k}`"))),
        };
        let seed = c.get_or("", "seed", 7u64)?;
        let n = c.get_or("grid", "n", 64usize)?;
        let length = positive("grid.length", c.get_or("grid", "length", 16.0)?)?;
        let charge_width = positive("charge.width", c.get_or("charge", "width", 1.0)?)?;
        let charge_amplitude = positive("charge.amplitude", c.get_or("charge", "amplitude", 0.01)?)?;
        let b = c.get_vec3("soliton", "b")?.unwrap_or_else(Vector3::zeros);
        let v = c.get_vec3("soliton", "v")?.unwrap_or_else(Vector3::zeros);
        let sigma0 = SolitonParams::new(b, v).map_err(|e| Error::Config(format!("soliton: {e}")))?;

        let pert_amp = c.get_or("perturbation", "amplitude", 0.0)?;
        let initial = if let Some(f) = c.raw("perturbation", "file") {
            InitialCondition::File(PathBuf::from(f))
        } else if pert_amp != 0.0 {
            let p = Perturbation {
                amplitude: positive("perturbation.amplitude", pert_amp)?,
                bumps: c.get_or("perturbation", "bumps", 3usize)?,
                width: positive("perturbation.width", c.get_or("perturbation", "width", charge_width)?)?,
                field_weight: c.get_or("perturbation", "field_weight", 0.0)?,
                kick_weight: c.get_or("perturbation", "kick_weight", 1.0)?,
            };
            if !(p.field_weight >= 0.0 && p.kick_weight >= 0.0 && p.field_weight + p.kick_weight > 0.0) {
                return Err(Error::Config("perturbation weights must be nonnegative and not both zero".into()));
            }
            InitialCondition::Perturbed(p)
        } else {
            InitialCondition::Soliton
        };

        let scheme: Scheme = c.get_or("run", "scheme", Scheme::Yoshida4)?;
        let run = RunSpec {
            t_end: c.get_or("run", "t_end", 20.0)?,
            dt: c.get("run", "dt")?,
            scheme,
            snapshot_every: c.get_or("run", "snapshot_every", 4usize)?,
            drift_tol: positive("run.drift_tol", c.get_or("run", "drift_tol", 1e-6)?)?,
            v_cap: c.get_or("run", "v_cap", 0.95)?,
            check_horizon: c.get_or("run", "check_horizon", true)?,
            slices: c.get_or("run", "slices", true)?,
            store_states: c.get_or("run", "store_states", false)?,
        };
        if !(run.t_end >= 0.0) || run.snapshot_every == 0 || !(run.v_cap > 0.0 && run.v_cap < 1.0) {
            return Err(Error::Config("run: need t_end >= 0, snapshot_every >= 1 and 0 < v_cap < 1".into()));
        }
        if let Some(dt) = run.dt {
            positive("run.dt", dt)?;
        }
        let analysis = AnalysisSpec {
            enabled: c.get_or("analysis", "enabled", false)?,
            delta: c.get_or("analysis", "delta", DELTA)?,
            window_start: c.get_or("analysis", "window_start", 5.0)?,
        };
        if !(analysis.delta > 0.0 && analysis.delta < 0.5) {
            return Err(Error::Config(format!("analysis.delta = {} must lie in (0, 1/2)", analysis.delta)));
        }
        let spectrum = SpectrumSpec {
            speed: c.get_or("spectrum", "speed", 0.0)?,
            omega_min: c.get_or("spectrum", "omega_min", -3.0)?,
            omega_max: c.get_or("spectrum", "omega_max", 3.0)?,
            count: c.get_or("spectrum", "count", 60usize)?,
        };
        if !(spectrum.speed.abs() < 1.0) || spectrum.count == 0 || !(spectrum.omega_max >= spectrum.omega_min) {
            return Err(Error::Config("spectrum: need |speed| < 1, count >= 1, omega_min <= omega_max".into()));
        }
        let mode = match c.raw("linearize", "mode").unwrap_or("random") {
            "kernel" => LinearMode::Kernel,
            "secular" => LinearMode::Secular,
            "random" => LinearMode::Random,
            m => return Err(Error::Config(format!("unknown linearize.mode `{m}`"))),
        };
        let linearize = LinearizeSpec {
            mode,
            index: c.get_or("linearize", "index", 0usize)?,
            t_end: c.get_or("linearize", "t_end", 10.0)?,
        };
        if linearize.index > 2 || !(linearize.t_end >= 0.0) {
            return Err(Error::Config("linearize: index must be 0, 1 or 2 and t_end >= 0".into()));
        }
        let preset = ExperimentPreset {
            kind,
            seed,
            n,
            length,
            charge_width,
            charge_amplitude,
            sigma0,
            initial,
            run,
            analysis,
            spectrum,
            linearize,
            config: cfg,
        };
        // grid and charge checks are cheap and catch resolution problems early
        preset.charge()?;
        Ok(preset)
    }

    pub fn grid(&self) -> Result<Grid3> {
        Grid3::new(self.n, self.length)
    }

    pub fn charge(&self) -> Result<ChargeDensity> {
        make_admissible_density(&self.grid()?, self.charge_width, self.charge_amplitude)
    }

    pub fn sim_config(&self, grid: &Grid3) -> SimConfig {
        let mut s = SimConfig::for_grid(grid, self.run.t_end);
        if let Some(dt) = self.run.dt {
            s.dt = dt;
        }
        s.scheme = self.run.scheme;
        s.snapshot_every = self.run.snapshot_every;
        s.drift_tol = self.run.drift_tol;
        s.v_cap = self.run.v_cap;
        s.check_horizon = self.run.check_horizon;
        s
    }

    /// Perturbation amplitude, zero for unperturbed soliton data.
    pub fn perturbation_amplitude(&self) -> f64 {
        match &self.initial {
            InitialCondition::Perturbed(p) => p.amplitude,
            _ => 0.0,
        }
    }

    /// Initial state of the nonlinear run.
    pub fn initial_state(&self, rho: &ChargeDensity) -> Result<PhaseState> {
        let grid = rho.grid();
        match &self.initial {
            InitialCondition::Soliton => soliton(rho, &self.sigma0),
            InitialCondition::Perturbed(p) => {
                let mut y = soliton(rho, &self.sigma0)?;
                let z = perturbation(grid, p, &self.sigma0.b, self.seed);
                y.axpy(1.0, &z);
                Ok(y)
            }
            InitialCondition::File(path) => Ok(load_state(path, grid)?.1),
        }
    }
}

/// Random bumps and momentum kick centred at `b`, scaled to `‖Z₀‖_β = d_β`
/// measured in the soliton frame.
pub fn perturbation(grid: &Grid3, p: &Perturbation, b: &Vector3<f64>, seed: u64) -> PhaseState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut psi = vec![0.0; grid.len()];
    let mut pi = vec![0.0; grid.len()];
    let w = p.width;
    let unit = |rng: &mut ChaCha8Rng| -> f64 { rng.random_range(-1.0..1.0) };
    for _ in 0..p.bumps {
        let c = Vector3::new(unit(&mut rng), unit(&mut rng), unit(&mut rng)) * w;
        let (a1, a2) = (unit(&mut rng), unit(&mut rng));
        for i in 0..grid.len() {
            let g = (-(grid.position(i) - c).norm_squared() / (2.0 * w * w)).exp();
            psi[i] += a1 * g;
            pi[i] += a2 * g / w;
        }
    }
    let mut z = PhaseState::zeros(grid);
    z.fields = FieldPair::from_real(grid, &psi, &pi);
    z.fields.scale(p.field_weight);
    z.p = Vector3::new(unit(&mut rng), unit(&mut rng), unit(&mut rng)) * p.kick_weight;
    let norm = weighted_norm(grid, &z, BETA);
    let mut z = z.scaled(p.amplitude / norm);
    z.fields.translate(grid, b);
    z
}

/// Tolerances recorded in every `meta.json`.
#[derive(Debug, Clone, Serialize)]
struct Tolerances {
    radius_tol: f64,
    moment_tol: f64,
    wiener_floor: f64,
    spectral_refine_tol: f64,
    projection: ProjectionOptions,
    min_fit_samples: usize,
    ratio_growth: f64,
    cauchy_noise: f64,
    beta: f64,
}

fn tolerances() -> Tolerances {
    Tolerances {
        radius_tol: RADIUS_TOL,
        moment_tol: MOMENT_TOL,
        wiener_floor: WIENER_FLOOR,
        spectral_refine_tol: REFINE_TOL,
        projection: ProjectionOptions::default(),
        min_fit_samples: MIN_FIT_SAMPLES,
        ratio_growth: RATIO_GROWTH,
        cauchy_noise: CAUCHY_NOISE,
        beta: BETA,
    }
}

#[derive(Debug, Serialize)]
struct Meta<'a, S: Serialize> {
    package: &'static str,
    version: &'static str,
    command: &'a str,
    status: &'a str,
    error: Option<String>,
    seed: u64,
    rng: &'static str,
    config: String,
    preset: &'a ExperimentPreset,
    tolerances: Tolerances,
    summary: Option<S>,
}

/// Runs `body` in `out`, writing `config.txt`, `meta.json` and a `FAILED` marker on error.
fn in_run_dir<S, F>(command: &str, preset: &ExperimentPreset, out: &Path, body: F) -> Result<S>
where
    S: Serialize,
    F: FnOnce(&Path) -> Result<S>,
{
    fs::create_dir_all(out)?;
    let failed = out.join("FAILED");
    if failed.exists() {
        fs::remove_file(&failed)?;
    }
    fs::write(out.join("config.txt"), preset.config.to_text())?;
    let result = body(out);
    let (status, error, summary) = match &result {
        Ok(s) => ("ok", None, Some(s)),
        Err(e) => ("failed", Some(format!("{}: {e}", e.kind())), None),
    };
    let meta = Meta {
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        status,
        error: error.clone(),
        seed: preset.seed,
        rng: "ChaCha8Rng",
        config: preset.config.to_text(),
        preset,
        tolerances: tolerances(),
        summary,
    };
    write_json(&out.join("meta.json"), &meta)?;
    if let Some(e) = error {
        fs::write(&failed, format!("{command}: {e}\n"))?;
    }
    result
}

/// Summary of `check-rho`.
#[derive(Debug, Clone, Serialize)]
pub struct ChargeSummary {
    pub pass: bool,
    pub profile: crate::charge::GaussPoly,
    pub wiener: crate::charge::WienerReport,
    pub moments: crate::charge::MomentReport,
    pub effective_radius: f64,
    pub l1_norm: f64,
    pub wrap_horizon: f64,
}

pub fn check_rho(preset: &ExperimentPreset, out: &Path) -> Result<ChargeSummary> {
    in_run_dir("check-rho", preset, out, |out| {
        let rho = preset.charge()?;
        let wiener = rho.check_wiener(WIENER_FLOOR);
        let moments = rho.check_moments(MOMENT_TOL);
        let s = ChargeSummary {
            pass: wiener.pass && moments.pass,
            profile: rho.profile().clone(),
            wiener,
            moments,
            effective_radius: rho.effective_radius(),
            l1_norm: rho.l1_norm(),
            wrap_horizon: wrap_horizon(&rho, &preset.sigma0.b),
        };
        write_json(&out.join("charge.json"), &s)?;
        Ok(s)
    })
}

/// Summary of `soliton`.
#[derive(Debug, Clone, Serialize)]
pub struct SolitonSummary {
    pub sigma: SolitonParams,
    pub residuals: SolitonResiduals,
    pub energy: f64,
    pub momentum: Vector3<f64>,
}

pub fn soliton_report(preset: &ExperimentPreset, out: &Path) -> Result<SolitonSummary> {
    in_run_dir("soliton", preset, out, |out| {
        let rho = preset.charge()?;
        let y = soliton(&rho, &preset.sigma0)?;
        write_slice(&out.join("soliton_slice.csv"), rho.grid(), &y.fields)?;
        let s = SolitonSummary {
            sigma: preset.sigma0,
            residuals: soliton_residuals(&rho, &preset.sigma0, &y),
            energy: hamiltonian(&y, &rho),
            momentum: momentum(&preset.sigma0.v),
        };
        write_json(&out.join("soliton.json"), &s)?;
        Ok(s)
    })
}

/// Summary of a spectrum scan.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumSummary {
    pub speed: f64,
    pub k_diagonal: [f64; 3],
    pub r_at_zero: [f64; 3],
    pub points: usize,
    pub all_sign_ok: bool,
    pub min_abs_det: f64,
}

pub fn spectrum_scan(preset: &ExperimentPreset, out: &Path) -> Result<SpectrumSummary> {
    in_run_dir("spectrum", preset, out, |out| {
        let rho = preset.charge()?;
        let sp = &preset.spectrum;
        let mut table = Table::create(
            &out.join("spectrum.csv"),
            &["omega", "f1_re", "f1_im", "f_re", "f_im", "detM_re", "detM_im", "imF_sign_ok"],
        )?;
        let mut all_ok = true;
        let mut min_det = f64::INFINITY;
        let mut points = 0;
        for i in 0..sp.count {
            let om = if sp.count == 1 {
                sp.omega_min
            } else {
                sp.omega_min + (sp.omega_max - sp.omega_min) * i as f64 / (sp.count - 1) as f64
            };
            if om == 0.0 {
                // F(0) = 0 there and M is singular; the limit is reported by r_at_zero
                continue;
            }
            let (e, _) = on_axis(&rho, sp.speed, om)?;
            let ok = (0..3).all(|j| om.signum() * e.f[(j, j)].im < 0.0);
            all_ok &= ok;
            min_det = min_det.min(e.det_m.norm());
            points += 1;
            let (f1, f): (Complex64, Complex64) = (e.f[(0, 0)], e.f[(1, 1)]);
            table.row_with(&[om, f1.re, f1.im, f.re, f.im, e.det_m.re, e.det_m.im], if ok { "true" } else { "false" })?;
        }
        table.flush()?;
        let k = k_matrix(&rho, sp.speed)?;
        let s = SpectrumSummary {
            speed: sp.speed,
            k_diagonal: [k[(0, 0)], k[(1, 1)], k[(2, 2)]],
            r_at_zero: r_at_zero(&rho, sp.speed)?,
            points,
            all_sign_ok: all_ok,
            min_abs_det: min_det,
        };
        write_json(&out.join("spectrum.json"), &s)?;
        Ok(s)
    })
}

/// Summary of a nonlinear run.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub steps: usize,
    pub dt: f64,
    pub t_end: f64,
    pub snapshots: usize,
    pub wrap_horizon: f64,
    pub energy_drift: f64,
    pub final_q: Vector3<f64>,
    pub final_qdot: Vector3<f64>,
    pub decay: Option<DecayReport>,
}

fn write_modulation(path: &Path, track: &ModulationTrack) -> Result<()> {
    let mut head: Vec<String> = vec!["t".into()];
    for p in ["b", "v", "c", "c_dot", "v_dot"] {
        head.extend(cols3(p));
    }
    head.extend(["z_norm", "t_norm", "modulation_ratio", "t_ratio", "residual", "iterations"].map(String::from));
    let head: Vec<&str> = head.iter().map(String::as_str).collect();
    let mut t = Table::create(path, &head)?;
    let mr = track.modulation_ratio();
    let tr = track.t_ratio();
    for i in 0..track.t.len() {
        let mut row = vec![track.t[i]];
        push3(&mut row, &track.sigma[i].b);
        push3(&mut row, &track.sigma[i].v);
        push3(&mut row, &track.c[i]);
        push3(&mut row, &track.c_dot[i]);
        push3(&mut row, &track.v_dot[i]);
        row.extend([track.z_norm[i], track.t_norm[i], mr[i], tr[i], track.residual[i], track.iterations[i] as f64]);
        t.row(&row)?;
    }
    t.flush()
}

#[derive(Debug, Serialize)]
struct ScatteringOut<'a> {
    #[serde(flatten)]
    scattering: &'a Scattering,
    failure: Option<&'a (usize, String)>,
}

/// Writes `modulation.csv`, `scattering.json` and, when asked, `decay.json`.
fn write_analysis(
    out: &Path,
    track: &ModulationTrack,
    scattering: &Scattering,
    delta: f64,
    window: (f64, f64),
    with_decay: bool,
) -> Result<Option<DecayReport>> {
    write_modulation(&out.join("modulation.csv"), track)?;
    write_json(&out.join("scattering.json"), &ScatteringOut { scattering, failure: track.failure.as_ref() })?;
    if !with_decay {
        return Ok(None);
    }
    let report = DecayReport::build(track, scattering, delta, window);
    write_json(&out.join("decay.json"), &report)?;
    Ok(Some(report))
}

/// Runs the nonlinear system with the preset's initial data and writes the artifacts.
pub fn simulate(preset: &ExperimentPreset, out: &Path) -> Result<RunSummary> {
    in_run_dir("simulate", preset, out, |out| simulate_in(preset, out))
}

fn simulate_in(preset: &ExperimentPreset, out: &Path) -> Result<RunSummary> {
    let rho = preset.charge()?;
    let grid = rho.grid().clone();
    let cfg = preset.sim_config(&grid);
    let y0 = preset.initial_state(&rho)?;
    let horizon = wrap_horizon(&rho, &y0.q);

    let mut head: Vec<String> = vec!["t".into()];
    for p in ["q", "p", "qdot"] {
        head.extend(cols3(p));
    }
    let head: Vec<&str> = head.iter().map(String::as_str).collect();
    let mut particle = Table::create(&out.join("particle.csv"), &head)?;
    let mut energy = Table::create(&out.join("energy.csv"), &["t", "energy", "relative_drift"])?;
    if preset.run.slices {
        fs::create_dir_all(out.join("snapshots"))?;
    }
    if preset.run.store_states {
        fs::create_dir_all(out.join("states"))?;
    }
    let mut modulation = preset
        .analysis
        .enabled
        .then(|| ModulationTracker::new(&rho, preset.sigma0, ProjectionOptions::default(), BETA));
    let mut scattering = preset.analysis.enabled.then(|| ScatteringTracker::new(&rho));
    let mut e0 = None;
    let mut snapshots = 0;
    let result = run_nonlinear_with(&y0, &rho, &cfg, |step, t, y| {
        let mut row = vec![t];
        push3(&mut row, &y.q);
        push3(&mut row, &y.p);
        push3(&mut row, &crate::soliton::velocity_of(&y.p));
        particle.row(&row)?;
        let e = hamiltonian(y, &rho);
        let e0 = *e0.get_or_insert(e);
        energy.row(&[t, e, (e - e0).abs() / e0.abs()])?;
        if preset.run.slices {
            write_slice(&out.join(format!("snapshots/slice_{step:06}.csv")), &grid, &y.fields)?;
        }
        if preset.run.store_states {
            save_state(&out.join(format!("states/state_{step:06}.bin")), &grid, t, y)?;
        }
        if let Some(m) = modulation.as_mut() {
            m.push(t, y);
        }
        if let Some(s) = scattering.as_mut() {
            s.push(t, y)?;
        }
        snapshots += 1;
        Ok(())
    });
    particle.flush()?;
    energy.flush()?;
    let (y, traj) = result?;
    let decay = match (modulation, scattering) {
        (Some(m), Some(s)) => {
            let (track, _) = m.finish()?;
            let sc = s.finish()?;
            let window = (preset.analysis.window_start, cfg.t_end);
            write_analysis(out, &track, &sc, preset.analysis.delta, window, preset.perturbation_amplitude() > 0.0)?
        }
        _ => None,
    };
    Ok(RunSummary {
        steps: cfg.steps(),
        dt: cfg.dt,
        t_end: cfg.t_end,
        snapshots,
        wrap_horizon: horizon,
        energy_drift: traj.energy_drift(),
        final_q: y.q,
        final_qdot: crate::soliton::velocity_of(&y.p),
        decay,
    })
}

/// Re-analyses the stored states of a `simulate` run directory.
pub fn analyze(run_dir: &Path, delta: Option<f64>, out: &Path) -> Result<DecayReport> {
    let mut cfg = Config::from_file(&run_dir.join("config.txt"))?;
    if let Some(d) = delta {
        cfg.set("analysis", "delta", d);
    }
    let preset = ExperimentPreset::from_config(&cfg)?;
    in_run_dir("analyze", &preset, out, |out| {
        let rho = preset.charge()?;
        let mut files: Vec<PathBuf> = fs::read_dir(run_dir.join("states"))
            .map_err(|e| Error::Argument(format!("{}: no stored states ({e})", run_dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "bin"))
            .collect();
        files.sort();
        let mut m = ModulationTracker::new(&rho, preset.sigma0, ProjectionOptions::default(), BETA);
        let mut s = ScatteringTracker::new(&rho);
        let mut t_last = 0.0;
        for f in &files {
            let (t, y) = load_state(f, rho.grid())?;
            m.push(t, &y);
            s.push(t, &y)?;
            t_last = t;
        }
        let (track, _) = m.finish()?;
        let sc = s.finish()?;
        let window = (preset.analysis.window_start, t_last);
        let r = write_analysis(out, &track, &sc, preset.analysis.delta, window, true)?;
        r.ok_or_else(|| Error::Argument("no decay report".into()))
    })
}

/// Summary of a linearised run.
#[derive(Debug, Clone, Serialize)]
pub struct LinearSummary {
    pub mode: LinearMode,
    pub index: usize,
    pub t_end: f64,
    /// Largest relative deviation from the exact solution (kernel and secular modes).
    pub exact_error: Option<f64>,
    pub energy_drift: f64,
    pub min_energy: f64,
    /// Largest `|Ω(X(t), τ_j)| / ‖X(t)‖` along the run.
    pub max_pairing: f64,
}

pub fn linearize(preset: &ExperimentPreset, out: &Path) -> Result<LinearSummary> {
    in_run_dir("linearize", preset, out, |out| {
        let rho = preset.charge()?;
        let grid = rho.grid().clone();
        let v = preset.sigma0.v;
        let sig = SolitonParams { b: Vector3::zeros(), v };
        let frame = tangent_frame(&rho, &sig)?;
        let spec = &preset.linearize;
        let j = spec.index;
        let x0 = match spec.mode {
            LinearMode::Kernel => frame.vectors[j].clone(),
            LinearMode::Secular => frame.vectors[3 + j].clone(),
            LinearMode::Random => {
                let p = Perturbation { amplitude: 1.0, bumps: 3, width: preset.charge_width, field_weight: 1.0, kick_weight: 1.0 };
                let mut raw = perturbation(&grid, &p, &Vector3::zeros(), preset.seed);
                let mut rng = ChaCha8Rng::seed_from_u64(preset.seed.wrapping_add(1));
                raw.q = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                    * raw.p.norm();
                project_linear(&rho, &sig, &raw)?.0
            }
        };
        let mut cfg = preset.sim_config(&grid);
        cfg.t_end = spec.t_end;
        let mut head: Vec<String> = vec!["t".into()];
        head.extend(cols3("Q"));
        head.extend(cols3("P"));
        head.extend(["energy", "max_pairing", "exact_error"].map(String::from));
        let head: Vec<&str> = head.iter().map(String::as_str).collect();
        let mut table = Table::create(&out.join("linear.csv"), &head)?;
        let mut e0 = None;
        let (mut drift, mut min_e, mut max_pair) = (0.0f64, f64::INFINITY, 0.0f64);
        let mut exact: Option<f64> = None;
        let result = run_linearized_with(&x0, &rho, &v, &v, &cfg, |_, t, x| {
            let e = linear_energy_sum_of_squares(x, &rho, &v);
            let e0 = *e0.get_or_insert(e);
            drift = drift.max((e - e0).abs() / e0.abs().max(f64::MIN_POSITIVE));
            min_e = min_e.min(e);
            let xn = x.norm(&grid);
            let pair = frame.vectors.iter().map(|tau| omega(&grid, x, tau).abs()).fold(0.0, f64::max) / xn;
            max_pair = max_pair.max(pair);
            let err = match spec.mode {
                LinearMode::Kernel => Some(x.difference(&frame.vectors[j]).norm(&grid) / frame.vectors[j].norm(&grid)),
                LinearMode::Secular => {
                    let mut expect = frame.vectors[3 + j].clone();
                    expect.axpy(t, &frame.vectors[j]);
                    Some(x.difference(&expect).norm(&grid) / expect.norm(&grid))
                }
                LinearMode::Random => None,
            };
            if let Some(e) = err {
                exact = Some(exact.unwrap_or(0.0).max(e));
            }
            let mut row = vec![t];
            push3(&mut row, &x.q);
            push3(&mut row, &x.p);
            row.extend([e, pair, err.unwrap_or(f64::NAN)]);
            table.row(&row)
        });
        table.flush()?;
        result?;
        let s = LinearSummary {
            mode: spec.mode,
            index: j,
            t_end: spec.t_end,
            exact_error: exact,
            energy_drift: drift,
            min_energy: min_e,
            max_pairing: max_pair,
        };
        write_json(&out.join("linear.json"), &s)?;
        Ok(s)
    })
}

/// Outcome of `run-preset`.
#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum PresetOutcome {
    Run(RunSummary),
    Spectrum(SpectrumSummary),
}

/// Runs a preset end to end: charge, soliton, simulation and analysis, or a spectrum scan.
pub fn run_preset(preset: &ExperimentPreset, out: &Path) -> Result<PresetOutcome> {
    match preset.kind {
        Kind::Simulation => simulate(preset, out).map(PresetOutcome::Run),
        Kind::Spectrum => spectrum_scan(preset, out).map(PresetOutcome::Spectrum),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_validate() {
        for name in PRESETS {
            let p = ExperimentPreset::from_config(&preset_config(name).unwrap()).unwrap();
            assert_eq!(p.kind == Kind::Spectrum, name == "spectrum-scan");
        }
        assert!(preset_config("nope").is_err());
        let persistence = ExperimentPreset::from_config(&preset_config("soliton-persistence").unwrap()).unwrap();
        assert!(matches!(persistence.initial, InitialCondition::Soliton));
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let bad = |text: &str| ExperimentPreset::from_config(&Config::parse(text).unwrap()).is_err();
        assert!(bad("[grid]\nn = 33"));
        assert!(bad("[grid]\nn = 32"));
        assert!(bad("[soliton]\nv = 1.2, 0, 0"));
        assert!(bad("[run]\nsnapshot_every = 0"));
        assert!(bad("[analysis]\ndelta = 0.7"));
        assert!(bad("[bogus]\nkey = 1"));
        assert!(bad("[run]\nscheme = euler"));
    }

    #[test]
    fn perturbation_has_requested_weighted_norm() {
        let grid = Grid3::new(32, 16.0).unwrap();
        let p = Perturbation { amplitude: 1e-2, bumps: 2, width: 1.0, field_weight: 1.0, kick_weight: 1.0 };
        let z = perturbation(&grid, &p, &Vector3::zeros(), 3);
        assert!((weighted_norm(&grid, &z, BETA) - 1e-2).abs() < 1e-14);
        let again = perturbation(&grid, &p, &Vector3::zeros(), 3);
        assert_eq!(z, again);
    }
}
