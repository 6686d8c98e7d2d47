//! Config-driven experiment runner: TOML scenario configs, deterministic
//! CSV emission for each analysis output, parameter sweeps, and a
//! persistent eigenbasis cache.
//!
//! All frequencies in configs are cycle frequencies in GHz (values divided
//! by 2π), times are in ns. Emitted CSV files are fully deterministic:
//! rerunning a scenario reproduces them byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dressed::{
    coherent_ladder_amps, fidelity_bare_coherent, fidelity_dressed_coherent, husimi_q_amps,
    ladder_moments, make_dressed_coherent, quadrature_variance_amps, shear_to_squeeze,
    squeezed_ladder_amps, QGrid, ShearedParams, SqueezeOptical,
};
use crate::entangle::{best_product_infidelity, entanglement_of_formation, product_approx};
use crate::error::{Error, Result};
use crate::leakage::{self, LeakagePrediction};
use crate::model::{DriveEnvelope, Hamiltonian, SystemParams, N_TR, TWO_PI};
use crate::propagate::{self, Trajectory};
use crate::reduced::{evolve_reduced, DriveMode, ReducedState};
use crate::spectrum::{params_hash, resonant_drive_frequency, DressedBasis};

/// Drive envelope as configured: amplitude in GHz, optional phase in rad.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvelopeConfig {
    Constant {
        eps: f64,
        #[serde(default)]
        phase: f64,
    },
    Ramp {
        eps: f64,
        ramp_ns: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl EnvelopeConfig {
    pub fn to_envelope(&self) -> DriveEnvelope {
        match *self {
            EnvelopeConfig::Constant { eps, phase } => {
                DriveEnvelope::Constant { eps: C64::from_polar(eps, phase) }
            }
            EnvelopeConfig::Ramp { eps, ramp_ns, phase } => {
                DriveEnvelope::LinearRamp { eps: C64::from_polar(eps, phase), ramp_ns }
            }
        }
    }

    pub fn peak(&self) -> f64 {
        match *self {
            EnvelopeConfig::Constant { eps, .. } | EnvelopeConfig::Ramp { eps, .. } => eps.abs(),
        }
    }

    fn set_eps(&mut self, value: f64) {
        match self {
            EnvelopeConfig::Constant { eps, .. } | EnvelopeConfig::Ramp { eps, .. } => {
                *eps = value;
            }
        }
    }
}

/// Starting state of a run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, Default, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    /// Bare joint ground state |0,0⟩.
    #[default]
    Bare,
    /// Eigenstate bar|0,k⟩ of the drive-free Hamiltonian.
    Eigen { ladder: usize },
}

impl InitialState {
    /// Eigenladder the run is expected to stay in.
    pub fn ladder(&self) -> usize {
        match *self {
            InitialState::Bare => 0,
            InitialState::Eigen { ladder } => ladder,
        }
    }
}

/// How the drive frequency is chosen.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, Default, PartialEq)]
#[serde(tag = "tuning", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriveTuning {
    /// ω_d equals the n=0 transition frequency of the initial eigenladder,
    /// so the rotating-frame ladder frequency vanishes at n=0.
    #[default]
    Resonant,
    /// Fixed drive frequency in GHz.
    Explicit { f_d: f64 },
}

/// Integration window and tolerance.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    /// End time in ns; 0 runs only the static analyses.
    pub t_end: f64,
    /// Snapshot spacing in ns.
    #[serde(default = "default_dt_out")]
    pub dt_out: f64,
    /// Adaptive integrator tolerance.
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_dt_out() -> f64 {
    0.5
}

fn default_tol() -> f64 {
    1e-10
}

/// Analyses a run can emit, one CSV file each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    /// t_ns, norm, top_pop, nbar, p_stray.
    Trajectory,
    /// Coherent-state infidelity split: bare fit, dressed fit, within-ladder.
    Coherence,
    /// Per-ladder stray populations with the steady-state model overlay.
    Leakage,
    /// Windowed oscillation frequency of the target-ladder population
    /// against the eigenvalue detuning.
    Frequency,
    /// Quadrature-variance extrema and fitted squeeze magnitude.
    Squeeze,
    /// Husimi Q snapshots on a centered grid.
    Husimi,
    /// Ladder frequency profiles ω_r^(k)(n) − ω_r (static).
    Profile,
    /// Reduced-model trajectory (β, K, W → r, θ).
    Reduced,
    /// Full-model vs reduced-model infidelity families.
    Comparison,
    /// Product-approximation infidelity and entanglement scan (static).
    Entangle,
}

impl OutputKind {
    fn needs_trajectory(&self) -> bool {
        !matches!(self, OutputKind::Profile | OutputKind::Entangle)
    }

    fn file_tag(&self) -> &'static str {
        match self {
            OutputKind::Trajectory => "trajectory",
            OutputKind::Coherence => "coherence",
            OutputKind::Leakage => "leakage",
            OutputKind::Frequency => "frequency",
            OutputKind::Squeeze => "squeeze",
            OutputKind::Husimi => "husimi",
            OutputKind::Profile => "profile",
            OutputKind::Reduced => "reduced",
            OutputKind::Comparison => "comparison",
            OutputKind::Entangle => "entangle",
        }
    }
}

/// Settings for the leakage and frequency outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeakageSettings {
    /// Eigenladders whose population is reported.
    pub ladders: Vec<usize>,
}

/// Settings for the frequency output.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencySettings {
    #[serde(default = "default_ppw")]
    pub periods_per_window: usize,
}

fn default_ppw() -> usize {
    6
}

/// Settings for the Husimi output.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HusimiSettings {
    /// Snapshot spacing in ns (multiples from t=0).
    pub every_ns: f64,
    #[serde(default = "default_grid_n")]
    pub grid_n: usize,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
}

fn default_grid_n() -> usize {
    81
}

fn default_half_width() -> f64 {
    4.0
}

/// Settings for the static entanglement scan.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntangleSettings {
    pub nbar_min: f64,
    pub nbar_max: f64,
    pub points: usize,
    /// Log-spaced grid when true (default), linear otherwise.
    #[serde(default = "default_log_spacing")]
    pub log_spacing: bool,
}

fn default_log_spacing() -> bool {
    true
}

/// One scenario: physical parameters, drive, initial state, window, and the
/// list of analyses to emit. Fully deterministic (no seeds anywhere).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub params: SystemParams,
    pub envelope: EnvelopeConfig,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default)]
    pub drive: DriveTuning,
    pub run: RunSettings,
    #[serde(default)]
    pub outputs: Vec<OutputKind>,
    #[serde(default)]
    pub leakage: Option<LeakageSettings>,
    #[serde(default)]
    pub frequency: Option<FrequencySettings>,
    #[serde(default)]
    pub husimi: Option<HusimiSettings>,
    #[serde(default)]
    pub entangle: Option<EntangleSettings>,
}

impl ExperimentConfig {
    /// Parameters with the drive frequency resolved per the tuning mode.
    pub fn resolved_params(&self) -> Result<SystemParams> {
        let mut p = self.params;
        match self.drive {
            DriveTuning::Resonant => {
                // validate against a provisional in-range f_d first
                p.f_d = p.f_r;
                p.validate()?;
                p.f_d = resonant_drive_frequency(&p, self.initial.ladder())?;
            }
            DriveTuning::Explicit { f_d } => {
                p.f_d = f_d;
            }
        }
        Ok(p)
    }

    /// Ladders reported by the leakage/frequency outputs: configured list,
    /// or the upper neighbor of the initial ladder.
    pub fn target_ladders(&self) -> Vec<usize> {
        match &self.leakage {
            Some(s) => s.ladders.clone(),
            None => vec![self.initial.ladder() + 1],
        }
    }

    /// Collect every configuration problem; empty means runnable.
    pub fn problems(&self) -> Vec<String> {
        let mut errs = Vec::new();
        match self.resolved_params() {
            Ok(p) => {
                if let Err(Error::InvalidParam(m)) = p.validate() {
                    errs.push(format!("params: {m}"));
                }
            }
            Err(e) => errs.push(format!("params: {e}")),
        }
        let peak = self.envelope.peak();
        if !(peak.is_finite() && peak >= 0.0) {
            errs.push(format!("envelope: need finite eps >= 0, got {peak}"));
        }
        if let EnvelopeConfig::Ramp { ramp_ns, .. } = self.envelope {
            if !(ramp_ns > 0.0) {
                errs.push(format!("envelope: need ramp_ns > 0, got {ramp_ns}"));
            }
        }
        if !(self.run.t_end >= 0.0 && self.run.t_end.is_finite()) {
            errs.push(format!("run: need finite t_end >= 0, got {}", self.run.t_end));
        }
        if self.run.t_end > 0.0 && !(self.run.dt_out > 0.0 && self.run.dt_out <= self.run.t_end) {
            errs.push(format!("run: need 0 < dt_out <= t_end, got dt_out={}", self.run.dt_out));
        }
        if !(self.run.tol >= 1e-14 && self.run.tol <= 1e-2) {
            errs.push(format!("run: tol must be in [1e-14, 1e-2], got {}", self.run.tol));
        }
        // Truncation headroom: resonant ring-up reaches n̄ ≈ (ε_w t)²; demand
        // room for that plus a 6σ photon-number tail and the top-level guard.
        let nbar_peak = (peak * TWO_PI * self.run.t_end).powi(2);
        let needed = nbar_peak + 6.0 * nbar_peak.sqrt() + 8.0;
        if (self.params.n_res as f64) < needed {
            errs.push(format!(
                "run: truncation headroom too small: N = {} but expected peak nbar = {:.1} \
                 needs N >= {:.0}",
                self.params.n_res, nbar_peak, needed.ceil()
            ));
        }
        let k0 = self.initial.ladder();
        if k0 >= N_TR {
            errs.push(format!("initial: ladder {k0} out of 0..{N_TR}"));
        }
        if self.drive == DriveTuning::Resonant && k0 + 1 >= N_TR {
            errs.push(format!("drive: resonant tuning needs ladder + 1 < {N_TR}, got {k0}"));
        }
        for &l in &self.target_ladders() {
            if l >= N_TR {
                errs.push(format!("leakage: ladder {l} out of 0..{N_TR}"));
            } else if l == k0 {
                errs.push(format!("leakage: target ladder {l} equals the initial ladder"));
            }
        }
        if let Some(h) = &self.husimi {
            if !(h.every_ns > 0.0) {
                errs.push(format!("husimi: need every_ns > 0, got {}", h.every_ns));
            }
            if h.grid_n < 2 {
                errs.push(format!("husimi: need grid_n >= 2, got {}", h.grid_n));
            }
            if !(h.half_width > 0.0) {
                errs.push(format!("husimi: need half_width > 0, got {}", h.half_width));
            }
        }
        if self.outputs.contains(&OutputKind::Husimi) && self.husimi.is_none() {
            errs.push("husimi: output requested but [husimi] section missing".into());
        }
        if let Some(e) = &self.entangle {
            if !(e.nbar_min > 0.0 && e.nbar_max > e.nbar_min) {
                errs.push(format!(
                    "entangle: need 0 < nbar_min < nbar_max, got {} and {}",
                    e.nbar_min, e.nbar_max
                ));
            }
            if e.points < 2 {
                errs.push(format!("entangle: need points >= 2, got {}", e.points));
            }
            if e.nbar_max >= self.params.n_res as f64 / 2.0 {
                errs.push(format!(
                    "entangle: nbar_max = {} exceeds coherent-state headroom N/2 = {}",
                    e.nbar_max,
                    self.params.n_res / 2
                ));
            }
        }
        if self.outputs.contains(&OutputKind::Entangle) && self.entangle.is_none() {
            errs.push("entangle: output requested but [entangle] section missing".into());
        }
        if self.run.t_end == 0.0 {
            for o in &self.outputs {
                if o.needs_trajectory() {
                    errs.push(format!("outputs: {} needs t_end > 0", o.file_tag()));
                }
            }
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.problems();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }
}

/// Read a scenario config from a TOML file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Hex digest of the physical parameters; keys cache entries and manifests.
pub fn params_hash_hex(params: &SystemParams) -> String {
    params_hash(params).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn cache_file(cache_dir: &Path, params: &SystemParams) -> PathBuf {
    cache_dir.join(format!("basis-{}.bin", &params_hash_hex(params)[..32]))
}

/// Diagonalize, preferring an exact cached basis when one exists.
pub fn load_or_build_basis(params: &SystemParams, cache_dir: Option<&Path>) -> Result<DressedBasis> {
    if let Some(dir) = cache_dir {
        let path = cache_file(dir, params);
        if path.exists() {
            if let Ok(b) = DressedBasis::load(&path, params) {
                return Ok(b);
            }
        }
    }
    DressedBasis::diagonalize(params)
}

/// Diagonalize and persist the basis for later runs; returns the file path.
pub fn cache_build(params: &SystemParams, cache_dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(cache_dir)?;
    let basis = DressedBasis::diagonalize(params)?;
    let path = cache_file(cache_dir, params);
    basis.save(&path)?;
    Ok(path)
}

/// Remove every cached basis file; returns how many were deleted.
pub fn cache_clear(cache_dir: &Path) -> Result<usize> {
    let mut removed = 0;
    if cache_dir.is_dir() {
        for entry in fs::read_dir(cache_dir)? {
            let p = entry?.path();
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if name.starts_with("basis-") && name.ends_with(".bin") {
                fs::remove_file(&p)?;
                removed += 1;
            }
        }
    }
    Ok(removed)
}

/// Confirm the output directory exists (creating it) and is writable.
pub fn check_outdir(outdir: &Path) -> Result<()> {
    fs::create_dir_all(outdir)?;
    let probe = outdir.join(".write-probe");
    fs::write(&probe, b"ok")?;
    fs::remove_file(&probe)?;
    Ok(())
}

/// Record of a completed run.
#[derive(Debug)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub manifest: PathBuf,
    pub wall_ms: u128,
    pub n_steps: u64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    name: &'a str,
    version: &'a str,
    params_hash: String,
    wall_ms: u64,
    n_steps: u64,
    files: Vec<String>,
}

// Deterministic float formatting shared by every CSV cell.
fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.12e}")
    }
}

struct Csv {
    buf: String,
}

impl Csv {
    fn new(scenario: &str, hash_hex: &str, header: &str) -> Self {
        let mut buf = String::new();
        let _ = writeln!(buf, "# schema=1");
        let _ = writeln!(buf, "# scenario={scenario}");
        let _ = writeln!(buf, "# params={hash_hex}");
        let _ = writeln!(buf, "# units: frequencies GHz, times ns");
        let _ = writeln!(buf, "{header}");
        Self { buf }
    }

    fn row(&mut self, vals: &[f64]) {
        let mut first = true;
        for v in vals {
            if !first {
                self.buf.push(',');
            }
            self.buf.push_str(&fmt_f(*v));
            first = false;
        }
        self.buf.push('\n');
    }

    fn finish(self, path: &Path) -> Result<PathBuf> {
        fs::write(path, self.buf.as_bytes())?;
        Ok(path.to_path_buf())
    }
}

/// Per-snapshot view of the correct-ladder content of a state.
struct LadderView {
    nbar: f64,
    p_stray: f64,
    /// Renormalized ladder amplitudes.
    c_norm: Vec<C64>,
}

fn ladder_view(basis: &DressedBasis, psi: &[C64], k: usize) -> LadderView {
    let mut c = basis.ladder_coeffs(psi, k);
    let in_k: f64 = c.iter().map(|z| z.norm_sqr()).sum();
    let total: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    let p_stray = (total - in_k).max(0.0);
    if in_k > 0.0 {
        let s = in_k.sqrt().recip();
        for z in c.iter_mut() {
            *z *= s;
        }
    }
    LadderView { nbar: propagate::photon_number(basis, psi), p_stray, c_norm: c }
}

fn ladder_population(basis: &DressedBasis, psi: &[C64], k: usize) -> f64 {
    basis.ladder_coeffs(psi, k).iter().map(|z| z.norm_sqr()).sum()
}

// 1 − |⟨coherent(α)|c⟩|² for normalized ladder amplitudes c.
fn infid_vs_coherent(c_norm: &[C64], alpha: C64) -> f64 {
    match coherent_ladder_amps(alpha, c_norm.len()) {
        Ok(a) => {
            let ov: C64 = a.iter().zip(c_norm).map(|(x, y)| x.conj() * y).sum();
            (1.0 - ov.norm_sqr()).max(0.0)
        }
        Err(_) => f64::NAN,
    }
}

// 1 − |⟨β,ξ|c⟩|² for normalized ladder amplitudes c.
fn infid_vs_squeezed(c_norm: &[C64], opt: &SqueezeOptical) -> f64 {
    match squeezed_ladder_amps(opt, c_norm.len()) {
        Ok(s) => {
            let ov: C64 = s.iter().zip(c_norm).map(|(x, y)| x.conj() * y).sum();
            (1.0 - ov.norm_sqr()).max(0.0)
        }
        Err(_) => f64::NAN,
    }
}

// Quadrature-variance extrema of normalized ladder amplitudes by dense
// angle scan (the variance is sinusoidal in 2φ; 1440 samples keep the
// extremum error far below every stated tolerance).
fn variance_extrema(c_norm: &[C64]) -> (f64, f64, f64) {
    let steps = 1440;
    let mut vmin = f64::INFINITY;
    let mut vmax = f64::NEG_INFINITY;
    let mut phi_min = 0.0;
    for i in 0..steps {
        let phi = std::f64::consts::PI * i as f64 / steps as f64;
        let v = quadrature_variance_amps(c_norm, phi);
        if v < vmin {
            vmin = v;
            phi_min = phi;
        }
        if v > vmax {
            vmax = v;
        }
    }
    (vmin, vmax, phi_min)
}

/// Steady-state leakage prediction for the pair (initial ladder → target).
fn pair_model(
    params: &SystemParams,
    basis: &DressedBasis,
    k0: usize,
    target: usize,
    eps_w: f64,
    nbar: f64,
) -> Result<LeakagePrediction> {
    match (k0, target) {
        (0, 1) => leakage::predict_ground(params, basis, eps_w, nbar),
        (1, 0) => Ok(leakage::predict_excited(params, basis, eps_w, nbar)?.0),
        (1, 2) => Ok(leakage::predict_excited(params, basis, eps_w, nbar)?.1),
        _ => Err(Error::ModelInvalid(format!(
            "no leakage model for the ladder pair {k0} -> {target}"
        ))),
    }
}

/// Run one scenario: propagate (unless static-only) and emit the requested
/// CSV files plus a manifest into `outdir`.
pub fn run(cfg: &ExperimentConfig, outdir: &Path, cache_dir: Option<&Path>) -> Result<RunReport> {
    cfg.validate()?;
    check_outdir(outdir)?;
    let started = Instant::now();

    let params = cfg.resolved_params()?;
    let hash = params_hash_hex(&params);
    let basis = load_or_build_basis(&params, cache_dir)?;
    let envelope = cfg.envelope.to_envelope();

    let traj = if cfg.run.t_end > 0.0 {
        let h = Hamiltonian::build(&params)?;
        let psi0 = match cfg.initial {
            InitialState::Bare => {
                let mut v = vec![C64::ZERO; params.dim()];
                v[0] = C64::ONE;
                v
            }
            InitialState::Eigen { ladder } => basis.state_from_ladder(&[C64::ONE], ladder),
        };
        Some(propagate::evolve(&h, &envelope, &psi0, cfg.run.t_end, cfg.run.dt_out, cfg.run.tol)?)
    } else {
        None
    };

    let mut files = Vec::new();
    for out in &cfg.outputs {
        let path = outdir.join(format!("{}_{}.csv", cfg.name, out.file_tag()));
        let written = match out {
            OutputKind::Trajectory => {
                emit_trajectory(cfg, &basis, traj.as_ref().unwrap(), &hash, &path)?
            }
            OutputKind::Coherence => {
                emit_coherence(cfg, &basis, traj.as_ref().unwrap(), &hash, &path)?
            }
            OutputKind::Leakage => {
                emit_leakage(cfg, &params, &basis, &envelope, traj.as_ref().unwrap(), &hash, &path)?
            }
            OutputKind::Frequency => {
                emit_frequency(cfg, &basis, traj.as_ref().unwrap(), &hash, &path)?
            }
            OutputKind::Squeeze => {
                emit_squeeze(cfg, &basis, traj.as_ref().unwrap(), &hash, &path)?
            }
            OutputKind::Husimi => emit_husimi(cfg, &basis, traj.as_ref().unwrap(), &hash, &path)?,
            OutputKind::Profile => emit_profile(cfg, &params, &basis, &hash, &path)?,
            OutputKind::Reduced => {
                emit_reduced(cfg, &basis, traj.as_ref().unwrap(), &hash, &path)?
            }
            OutputKind::Comparison => {
                emit_comparison(cfg, &params, &basis, &envelope, traj.as_ref().unwrap(), &hash, &path)?
            }
            OutputKind::Entangle => emit_entangle(cfg, &basis, &hash, &path)?,
        };
        files.push(written);
    }

    let manifest_path = outdir.join(format!("{}_manifest.toml", cfg.name));
    let manifest = Manifest {
        name: &cfg.name,
        version: env!("CARGO_PKG_VERSION"),
        params_hash: hash,
        wall_ms: started.elapsed().as_millis() as u64,
        n_steps: traj.as_ref().map_or(0, |t| t.n_steps),
        files: files
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect(),
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(&manifest_path, text)?;

    Ok(RunReport {
        files,
        manifest: manifest_path,
        wall_ms: started.elapsed().as_millis(),
        n_steps: traj.as_ref().map_or(0, |t| t.n_steps),
    })
}

fn emit_trajectory(
    cfg: &ExperimentConfig,
    basis: &DressedBasis,
    traj: &Trajectory,
    hash: &str,
    path: &Path,
) -> Result<PathBuf> {
    let mut csv = Csv::new(&cfg.name, hash, "t_ns,norm,top_pop,nbar,p_stray");
    let k0 = cfg.initial.ladder();
    for i in 0..traj.len() {
        let view = ladder_view(basis, &traj.states[i], k0);
        csv.row(&[traj.times[i], traj.aux[i].norm, traj.aux[i].top_pop, view.nbar, view.p_stray]);
    }
    csv.finish(path)
}

fn emit_coherence(
    cfg: &ExperimentConfig,
    basis: &DressedBasis,
    traj: &Trajectory,
    hash: &str,
    path: &Path,
) -> Result<PathBuf> {
    let mut csv = Csv::new(
        &cfg.name,
        hash,
        "t_ns,nbar,p_stray,infid_bare,infid_dressed,infid_center",
    );
    let k0 = cfg.initial.ladder();
    for i in 0..traj.len() {
        let psi = &traj.states[i];
        let view = ladder_view(basis, psi, k0);
        let fit_d = fidelity_dressed_coherent(psi, k0, basis);
        let fit_b = fidelity_bare_coherent(psi, k0, basis.n_res());
        // F = (1 − P_stray)·F_c with the same fitted center.
        let f_c = if view.p_stray < 1.0 { fit_d.fidelity / (1.0 - view.p_stray) } else { 0.0 };
        csv.row(&[
            traj.times[i],
            view.nbar,
            view.p_stray,
            (1.0 - fit_b.fidelity).max(0.0),
            (1.0 - fit_d.fidelity).max(0.0),
            (1.0 - f_c).max(0.0),
        ]);
    }
    csv.finish(path)
}

fn emit_leakage(
    cfg: &ExperimentConfig,
    params: &SystemParams,
    basis: &DressedBasis,
    envelope: &DriveEnvelope,
    traj: &Trajectory,
    hash: &str,
    path: &Path,
) -> Result<PathBuf> {
    let targets = cfg.target_ladders();
    let k0 = cfg.initial.ladder();
    let mut header = String::from("t_ns,nbar,eps_ghz");
    for &l in &targets {
        let _ = write!(header, ",p_{l},p_ss_{l}");
    }
    let mut csv = Csv::new(&cfg.name, hash, &header);
    for i in 0..traj.len() {
        let t = traj.times[i];
        let psi = &traj.states[i];
        let nbar = propagate::photon_number(basis, psi);
        let eps_w = envelope.at_w(t).norm();
        let mut row = vec![t, nbar, eps_w / TWO_PI];
        for &l in &targets {
            row.push(ladder_population(basis, psi, l));
            let p_ss = pair_model(params, basis, k0, l, eps_w, nbar)
                .map_or(f64::NAN, |p| p.p_ss);
            row.push(p_ss);
        }
        csv.row(&row);
    }
    csv.finish(path)
}

fn emit_frequency(
    cfg: &ExperimentConfig,
    basis: &DressedBasis,
    traj: &Trajectory,
    hash: &str,
    path: &Path,
) -> Result<PathBuf> {
    let ppw = cfg.frequency.map_or_else(default_ppw, |f| f.periods_per_window);
    let target = cfg.target_ladders()[0];
    let k0 = cfg.initial.ladder();
    let p: Vec<f64> =
        traj.states.iter().map(|psi| ladder_population(basis, psi, target)).collect();
    let windows = leakage::oscillation_frequency(&traj.times, &p, ppw)?;
    let mut csv = Csv::new(&cfg.name, hash, "t_ns,nbar,omega_sim_ghz,omega_model_ghz");
    for (t, w) in windows {
        let nbar = propagate::photon_number(basis, &traj.states[traj.index_at(t)]);
        let pair_k = k0.min(target);
        let model = basis.detuning_pair_at(nbar, pair_k)?.abs();
        csv.row(&[t, nbar, w / TWO_PI, model / TWO_PI]);
    }
    csv.finish(path)
}

fn emit_squeeze(
    cfg: &ExperimentConfig,
    basis: &DressedBasis,
    traj: &Trajectory,
    hash: &str,
    path: &Path,
) -> Result<PathBuf> {
    let mut csv = Csv::new(
        &cfg.name,
        hash,
        "t_ns,nbar,p_stray,var_min,var_max,ratio_min,ratio_max,r_fit,phi_min",
    );
    let k0 = cfg.initial.ladder();
    for i in 0..traj.len() {
        let view = ladder_view(basis, &traj.states[i], k0);
        let (vmin, vmax, phi_min) = variance_extrema(&view.c_norm);
        csv.row(&[
            traj.times[i],
            view.nbar,
            view.p_stray,
            vmin,
            vmax,
            vmin / 0.25,
            vmax / 0.25,
            0.25 * (vmax / vmin).ln(),
            phi_min,
        ]);
    }
    csv.finish(path)
}

fn emit_husimi(
    cfg: &ExperimentConfig,
    basis: &DressedBasis,
    traj: &Trajectory,
    hash: &str,
    path: &Path,
) -> Result<PathBuf> {
    let settings = cfg.husimi.expect("validated");
    let k0 = cfg.initial.ladder();
    let mut csv = Csv::new(&cfg.name, hash, "t_ns,re_alpha,im_alpha,q");
    let mut t_snap = 0.0;
    while t_snap <= cfg.run.t_end + 1e-9 {
        let i = traj.index_at(t_snap);
        let view = ladder_view(basis, &traj.states[i], k0);
        let center = ladder_moments(&view.c_norm).abar;
        let grid =
            QGrid { center, half_width: settings.half_width, n: settings.grid_n };
        let q = husimi_q_amps(&view.c_norm, &grid);
        for iy in 0..grid.n {
            for ix in 0..grid.n {
                csv.row(&[
                    traj.times[i],
                    grid.axis(ix, false),
                    grid.axis(iy, true),
                    q[iy * grid.n + ix],
                ]);
            }
        }
        t_snap += settings.every_ns;
    }
    csv.finish(path)
}

fn emit_profile(
    cfg: &ExperimentConfig,
    params: &SystemParams,
    basis: &DressedBasis,
    hash: &str,
    path: &Path,
) -> Result<PathBuf> {
    let p0 = basis.ladder_profile(0);
    let p1 = basis.ladder_profile(1);
    let w_r = params.w_r();
    let mut csv = Csv::new(
        &cfg.name,
        hash,
        "n,domega_r0_ghz,domega_r1_ghz,drive_offset_ghz",
    );
    let n_max = basis.n_res().saturating_sub(10);
    for n in 0..n_max {
        let x = n as f64;
        csv.row(&[
            x,
            (p0.omega_lab_at(x) - w_r) / TWO_PI,
            (p1.omega_lab_at(x) - w_r) / TWO_PI,
            (params.w_d() - w_r) / TWO_PI,
        ]);
    }
    csv.finish(path)
}

// Nearest reduced-model state to time t (fixed-step records).
fn reduced_at(states: &[ReducedState], t: f64) -> &ReducedState {
    let dt = if states.len() > 1 { states[1].t - states[0].t } else { 1.0 };
    let i = ((t - states[0].t) / dt).round() as usize;
    &states[i.min(states.len() - 1)]
}

const REDUCED_DT: f64 = 0.005;

fn emit_reduced(
    cfg: &ExperimentConfig,
    basis: &DressedBasis,
    traj: &Trajectory,
    hash: &str,
    path: &Path,
) -> Result<PathBuf> {
    let k0 = cfg.initial.ladder();
    let profile = basis.ladder_profile(k0);
    let envelope = cfg.envelope.to_envelope();
    let states = evolve_reduced(
        &profile,
        &envelope,
        &DriveMode::Bare,
        &ReducedState::vacuum(k0),
        cfg.run.t_end,
        REDUCED_DT,
    )?;
    let mut csv =
        Csv::new(&cfg.name, hash, "t_ns,re_beta,im_beta,shear_k,width_w,r,theta,nbar");
    for &t in &traj.times {
        let s = reduced_at(&states, t);
        let opt = s.to_squeezed();
        csv.row(&[t, s.beta.re, s.beta.im, s.shear, s.width, opt.r, opt.theta, s.nbar()]);
    }
    csv.finish(path)
}

fn emit_comparison(
    cfg: &ExperimentConfig,
    params: &SystemParams,
    basis: &DressedBasis,
    envelope: &DriveEnvelope,
    traj: &Trajectory,
    hash: &str,
    path: &Path,
) -> Result<PathBuf> {
    let k0 = cfg.initial.ladder();
    let profile = basis.ladder_profile(k0);
    let start = ReducedState::vacuum(k0);
    let bare = evolve_reduced(&profile, envelope, &DriveMode::Bare, &start, cfg.run.t_end, REDUCED_DT)?;
    let eff_mode = DriveMode::analytic(params, k0)?;
    let eff = evolve_reduced(&profile, envelope, &eff_mode, &start, cfg.run.t_end, REDUCED_DT)?;

    let mut csv = Csv::new(
        &cfg.name,
        hash,
        "t_ns,nbar,infid_coh_meas,infid_coh_ode,infid_coh_eff,\
         infid_sq_meas,infid_sq_ode,infid_sq_eff,infid_sq_meas_eff",
    );
    for i in 0..traj.len() {
        let t = traj.times[i];
        let view = ladder_view(basis, &traj.states[i], k0);
        let alpha_meas = ladder_moments(&view.c_norm).abar;
        let sb = reduced_at(&bare, t);
        let se = reduced_at(&eff, t);

        let meas_center = |s: &ReducedState| {
            shear_to_squeeze(&ShearedParams {
                beta: alpha_meas,
                shear: s.shear,
                width: s.width,
                ladder: k0,
            })
        };
        csv.row(&[
            t,
            view.nbar,
            infid_vs_coherent(&view.c_norm, alpha_meas),
            infid_vs_coherent(&view.c_norm, sb.beta),
            infid_vs_coherent(&view.c_norm, se.beta),
            infid_vs_squeezed(&view.c_norm, &meas_center(sb)),
            infid_vs_squeezed(&view.c_norm, &sb.to_squeezed()),
            infid_vs_squeezed(&view.c_norm, &se.to_squeezed()),
            infid_vs_squeezed(&view.c_norm, &meas_center(se)),
        ]);
    }
    csv.finish(path)
}

fn emit_entangle(
    cfg: &ExperimentConfig,
    basis: &DressedBasis,
    hash: &str,
    path: &Path,
) -> Result<PathBuf> {
    let settings = cfg.entangle.expect("validated");
    let k0 = cfg.initial.ladder();
    let mut csv = Csv::new(
        &cfg.name,
        hash,
        "nbar,n_fock,coh_product_infid,coh_ef,fock_product_infid,fock_ef",
    );
    for i in 0..settings.points {
        let f = i as f64 / (settings.points - 1) as f64;
        let x = if settings.log_spacing {
            (settings.nbar_min.ln() + f * (settings.nbar_max.ln() - settings.nbar_min.ln())).exp()
        } else {
            settings.nbar_min + f * (settings.nbar_max - settings.nbar_min)
        };
        let alpha = C64::new(x.sqrt(), 0.0);
        let psi_coh = make_dressed_coherent(basis, alpha, k0)?;
        let c = basis.ladder_coeffs(&psi_coh, k0);
        let pa = product_approx(basis, &c, k0)?;
        let ef_coh = entanglement_of_formation(&psi_coh)?;

        let n = x.round().max(0.0) as usize;
        let mut fock_c = vec![C64::ZERO; n + 1];
        fock_c[n] = C64::ONE;
        let psi_fock = basis.state_from_ladder(&fock_c, k0);
        let bp_fock = best_product_infidelity(&psi_fock)?;
        let ef_fock = entanglement_of_formation(&psi_fock)?;

        csv.row(&[x, n as f64, pa.infidelity, ef_coh, bp_fock, ef_fock]);
    }
    csv.finish(path)
}

/// Apply a sweep axis to a copy of the config. Axes name a physical
/// parameter (f_r, f_q, eta, g, e0), the drive amplitude or ramp (eps,
/// ramp_ns), or the explicit drive frequency (f_d).
pub fn apply_axis(cfg: &ExperimentConfig, axis: &str, value: f64) -> Result<ExperimentConfig> {
    let mut out = cfg.clone();
    match axis {
        "eps" => out.envelope.set_eps(value),
        "ramp_ns" => match &mut out.envelope {
            EnvelopeConfig::Ramp { ramp_ns, .. } => *ramp_ns = value,
            EnvelopeConfig::Constant { .. } => {
                return Err(Error::Config("axis ramp_ns needs a ramp envelope".into()))
            }
        },
        "f_r" => out.params.f_r = value,
        "f_q" => out.params.f_q = value,
        "eta" => out.params.eta = value,
        "g" => out.params.g = value,
        "e0" => out.params.e0 = value,
        "f_d" => out.drive = DriveTuning::Explicit { f_d: value },
        other => return Err(Error::Config(format!("axis not found: {other}"))),
    }
    Ok(out)
}

// Observables extracted from one sweep point.
struct SweepRow {
    value: f64,
    n_c: f64,
    p_ss0: f64,
    p_max_model: f64,
    p_max_sim: f64,
    plateau_model: f64,
    plateau_sim: f64,
    omega0_model: f64,
    omega_sim: f64,
    t_decay_model: f64,
    t_decay_sim: f64,
}

fn sweep_point(cfg: &ExperimentConfig, value: f64) -> Result<SweepRow> {
    cfg.validate()?;
    let params = cfg.resolved_params()?;
    let basis = DressedBasis::diagonalize(&params)?;
    let envelope = cfg.envelope.to_envelope();
    let k0 = cfg.initial.ladder();
    let target = cfg.target_ladders()[0];

    let h = Hamiltonian::build(&params)?;
    let psi0 = match cfg.initial {
        InitialState::Bare => {
            let mut v = vec![C64::ZERO; params.dim()];
            v[0] = C64::ONE;
            v
        }
        InitialState::Eigen { ladder } => basis.state_from_ladder(&[C64::ONE], ladder),
    };
    let traj = propagate::evolve(&h, &envelope, &psi0, cfg.run.t_end, cfg.run.dt_out, cfg.run.tol)?;

    let p: Vec<f64> =
        traj.states.iter().map(|psi| ladder_population(&basis, psi, target)).collect();
    let eps_w = envelope.peak() * TWO_PI;
    let model0 = pair_model(&params, &basis, k0, target, eps_w, 0.0)?;
    let nbar_end = propagate::photon_number(&basis, traj.states.last().unwrap());
    let model_end = pair_model(&params, &basis, k0, target, eps_w, nbar_end)?;

    let p_max_sim = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tail_start = traj.len() - traj.len() / 4;
    let plateau_sim =
        p[tail_start..].iter().sum::<f64>() / (traj.len() - tail_start) as f64;
    let t_decay_sim = leakage::fit_decay_time(&traj.times, &p).unwrap_or(f64::NAN);
    let omega_sim = leakage::oscillation_frequency(&traj.times, &p, default_ppw())
        .ok()
        .and_then(|w| w.first().map(|&(_, o)| o))
        .unwrap_or(f64::NAN);

    Ok(SweepRow {
        value,
        n_c: crate::spectrum::critical_photon_number(&params)?,
        p_ss0: model0.p_ss,
        p_max_model: model0.p_max,
        p_max_sim,
        plateau_model: model0.p_ss + model_end.p_ss,
        plateau_sim,
        omega0_model: model0.omega_osc / TWO_PI,
        omega_sim: omega_sim / TWO_PI,
        t_decay_model: model0.t_decay,
        t_decay_sim,
    })
}

/// Run the scenario once per axis value and emit one aggregated CSV with
/// model and simulation observables, rows in input order.
pub fn sweep(
    cfg: &ExperimentConfig,
    axis: &str,
    values: &[f64],
    outdir: &Path,
) -> Result<PathBuf> {
    if values.is_empty() {
        return Err(Error::InvalidParam("sweep needs at least one value".into()));
    }
    check_outdir(outdir)?;
    // Fail fast on a bad axis name before spawning workers.
    apply_axis(cfg, axis, values[0])?;

    let results: Vec<Result<SweepRow>> = values
        .par_iter()
        .map(|&v| sweep_point(&apply_axis(cfg, axis, v)?, v))
        .collect();

    let hash = params_hash_hex(&cfg.resolved_params()?);
    let mut csv = Csv::new(
        &cfg.name,
        &hash,
        &format!(
            "{axis},n_c,p_ss0,p_max_model,p_max_sim,plateau_model,plateau_sim,\
             omega0_model_ghz,omega_sim_ghz,t_decay_model_ns,t_decay_sim_ns"
        ),
    );
    for r in results {
        let row = r?;
        csv.row(&[
            row.value,
            row.n_c,
            row.p_ss0,
            row.p_max_model,
            row.p_max_sim,
            row.plateau_model,
            row.plateau_sim,
            row.omega0_model,
            row.omega_sim,
            row.t_decay_model,
            row.t_decay_sim,
        ]);
    }
    let path = outdir.join(format!("{}_sweep_{}.csv", cfg.name, axis));
    csv.finish(&path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mini_config(name: &str) -> ExperimentConfig {
        ExperimentConfig {
            name: name.into(),
            params: SystemParams::default_with(40),
            envelope: EnvelopeConfig::Constant { eps: 0.02, phase: 0.0 },
            initial: InitialState::Bare,
            drive: DriveTuning::Resonant,
            run: RunSettings { t_end: 10.0, dt_out: 0.5, tol: 1e-8 },
            outputs: vec![OutputKind::Trajectory],
            leakage: None,
            frequency: None,
            husimi: None,
            entangle: None,
        }
    }

    #[test]
    fn toml_roundtrip_and_defaults() {
        let text = r#"
            name = "demo"
            outputs = ["trajectory", "coherence"]

            [params]
            f_r = 6.0
            f_q = 5.0
            eta = 0.2
            g = 0.1
            f_d = 6.0
            n_res = 60

            [envelope]
            kind = "constant"
            eps = 0.01

            [initial]
            kind = "eigen"
            ladder = 1

            [drive]
            tuning = "resonant"

            [run]
            t_end = 20.0
        "#;
        let cfg: ExperimentConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.initial, InitialState::Eigen { ladder: 1 });
        assert_eq!(cfg.run.dt_out, 0.5);
        assert_eq!(cfg.run.tol, 1e-10);
        cfg.validate().unwrap();
        let p = cfg.resolved_params().unwrap();
        assert!((p.f_d - resonant_drive_frequency(&p, 1).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn validation_collects_all_problems() {
        let mut cfg = mini_config("bad");
        cfg.params.eta = -0.1;
        cfg.params.n_res = 10;
        cfg.envelope = EnvelopeConfig::Constant { eps: 0.06, phase: 0.0 };
        cfg.run.t_end = 50.0;
        let errs = cfg.problems();
        assert!(errs.iter().any(|e| e.contains("eta")), "{errs:?}");
        assert!(errs.iter().any(|e| e.contains("headroom")), "{errs:?}");
        assert!(errs.len() >= 2);
    }

    #[test]
    fn run_is_bit_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = mini_config("mini");
        cfg.outputs = vec![OutputKind::Trajectory, OutputKind::Coherence];
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        run(&cfg, &a, None).unwrap();
        run(&cfg, &b, None).unwrap();
        for tag in ["trajectory", "coherence"] {
            let fa = fs::read(a.join(format!("mini_{tag}.csv"))).unwrap();
            let fb = fs::read(b.join(format!("mini_{tag}.csv"))).unwrap();
            assert_eq!(fa, fb, "{tag} differs between reruns");
            assert!(fa.starts_with(b"# schema=1\n"));
        }
    }

    #[test]
    fn cached_basis_gives_identical_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = mini_config("cached");
        let params = cfg.resolved_params().unwrap();
        let cache = dir.path().join("cache");
        cache_build(&params, &cache).unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        run(&cfg, &a, Some(&cache)).unwrap();
        run(&cfg, &b, None).unwrap();
        let fa = fs::read(a.join("cached_trajectory.csv")).unwrap();
        let fb = fs::read(b.join("cached_trajectory.csv")).unwrap();
        assert_eq!(fa, fb);
        assert_eq!(cache_clear(&cache).unwrap(), 1);
    }

    #[test]
    fn sweep_rows_follow_input_order() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = mini_config("sw");
        cfg.run.dt_out = 0.02;
        cfg.run.t_end = 8.0;
        let path = sweep(&cfg, "eps", &[0.02, 0.01], dir.path()).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
        assert_eq!(rows.len(), 2);
        let first: f64 = rows[0].split(',').next().unwrap().parse().unwrap();
        let second: f64 = rows[1].split(',').next().unwrap().parse().unwrap();
        assert_eq!(first, 0.02);
        assert_eq!(second, 0.01);
        // stronger drive leaks more
        let p_max = |r: &str| r.split(',').nth(4).unwrap().parse::<f64>().unwrap();
        assert!(p_max(rows[0]) > p_max(rows[1]));

        assert!(matches!(sweep(&cfg, "eps", &[], dir.path()), Err(Error::InvalidParam(_))));
        assert!(matches!(sweep(&cfg, "nope", &[0.01], dir.path()), Err(Error::Config(_))));
    }

    #[test]
    fn manifest_hash_tracks_physical_parameters() {
        let cfg = mini_config("h");
        let mut other = cfg.clone();
        other.params.g = 0.11;
        let h1 = params_hash_hex(&cfg.resolved_params().unwrap());
        let h2 = params_hash_hex(&other.resolved_params().unwrap());
        assert_ne!(h1, h2);
        let h3 = params_hash_hex(&cfg.resolved_params().unwrap());
        assert_eq!(h1, h3);
    }

    #[test]
    fn static_outputs_run_without_propagation() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = mini_config("static");
        cfg.params.n_res = 60;
        cfg.run.t_end = 0.0;
        cfg.outputs = vec![OutputKind::Profile, OutputKind::Entangle];
        cfg.entangle =
            Some(EntangleSettings { nbar_min: 1.0, nbar_max: 16.0, points: 3, log_spacing: true });
        let report = run(&cfg, dir.path(), None).unwrap();
        assert_eq!(report.files.len(), 2);
        assert_eq!(report.n_steps, 0);
        let text = fs::read_to_string(&report.files[1]).unwrap();
        let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
        assert_eq!(rows.len(), 3);
        // coherent states stay far less entangled than Fock states
        let last = rows[2].split(',').collect::<Vec<_>>();
        let coh_ef: f64 = last[3].parse().unwrap();
        let fock_ef: f64 = last[5].parse().unwrap();
        assert!(coh_ef < fock_ef / 5.0, "coh {coh_ef} fock {fock_ef}");
    }
}
