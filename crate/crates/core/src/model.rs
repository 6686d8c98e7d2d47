//! Physical parameters, basis indexing, and the rotating-frame Hamiltonian.
//!
//! The joint system is a resonator truncated to `n_res` Fock states and a
//! transmon truncated to 7 levels with quartic anharmonicity. Product states
//! |n,k⟩ are flat-indexed as `n*7 + k`. All config-facing frequencies are
//! ω/2π in GHz; internal arithmetic uses angular frequency in rad/ns with
//! time in ns.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TWO_PI: f64 = std::f64::consts::TAU;

/// Number of transmon levels kept everywhere.
pub const N_TR: usize = 7;

/// System parameters. Frequencies are ω/2π in GHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Resonator frequency ω_r/2π.
    pub f_r: f64,
    /// Qubit (transmon 0→1) frequency ω_q/2π.
    pub f_q: f64,
    /// Anharmonicity η/2π.
    pub eta: f64,
    /// Resonator-transmon coupling g/2π.
    pub g: f64,
    /// Drive frequency ω_d/2π.
    pub f_d: f64,
    /// Resonator truncation (number of Fock states).
    pub n_res: usize,
    /// Transmon levels; must equal 7.
    #[serde(default = "default_n_tr")]
    pub n_tr: usize,
    /// Transmon ground-state energy offset E_0/2π.
    #[serde(default)]
    pub e0: f64,
}

fn default_n_tr() -> usize {
    N_TR
}

impl SystemParams {
    /// Default parameter set used throughout: ω_r/2π = 6 GHz, ω_q/2π = 5 GHz,
    /// η/2π = 200 MHz, g/2π = 100 MHz. The drive starts detuning-free at the
    /// bare resonator frequency; callers usually retune it.
    pub fn default_with(n_res: usize) -> Self {
        Self {
            f_r: 6.0,
            f_q: 5.0,
            eta: 0.2,
            g: 0.1,
            f_d: 6.0,
            n_res,
            n_tr: N_TR,
            e0: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.f_r > self.f_q && self.f_q > 0.0) {
            errs.push(format!("need f_r > f_q > 0, got f_r={}, f_q={}", self.f_r, self.f_q));
        }
        if self.eta <= 0.0 {
            errs.push(format!("need eta > 0, got {}", self.eta));
        }
        if self.g <= 0.0 {
            errs.push(format!("need g > 0, got {}", self.g));
        }
        if self.n_res < 2 {
            errs.push(format!("need n_res >= 2, got {}", self.n_res));
        }
        if self.n_tr != N_TR {
            errs.push(format!("n_tr is fixed at {}, got {}", N_TR, self.n_tr));
        }
        if !self.f_d.is_finite() || self.f_d <= 0.0 {
            errs.push(format!("need finite f_d > 0, got {}", self.f_d));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParam(errs.join("; ")))
        }
    }

    // Angular-frequency accessors, rad/ns.
    pub fn w_r(&self) -> f64 {
        TWO_PI * self.f_r
    }
    pub fn w_q(&self) -> f64 {
        TWO_PI * self.f_q
    }
    pub fn eta_w(&self) -> f64 {
        TWO_PI * self.eta
    }
    pub fn g_w(&self) -> f64 {
        TWO_PI * self.g
    }
    pub fn w_d(&self) -> f64 {
        TWO_PI * self.f_d
    }
    pub fn e0_w(&self) -> f64 {
        TWO_PI * self.e0
    }

    /// Bare detuning Δ = ω_r − ω_q in rad/ns.
    pub fn delta_w(&self) -> f64 {
        self.w_r() - self.w_q()
    }

    /// Full Hilbert-space dimension 7N.
    pub fn dim(&self) -> usize {
        self.n_res * N_TR
    }
}

/// Index of a bare product state |n,k⟩.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BareIndex {
    pub n: usize,
    pub k: usize,
}

impl BareIndex {
    pub fn new(n: usize, k: usize) -> Self {
        Self { n, k }
    }

    pub fn flat(&self) -> usize {
        self.n * N_TR + self.k
    }

    pub fn from_flat(flat: usize) -> Self {
        Self { n: flat / N_TR, k: flat % N_TR }
    }
}

/// Flat index of |n,k⟩.
#[inline]
pub fn flat(n: usize, k: usize) -> usize {
    n * N_TR + k
}

/// Bare transmon energies E_k = E_0 + ω_q k − η k(k−1)/2 in rad/ns, k = 0..6.
pub fn bare_energies(params: &SystemParams) -> [f64; N_TR] {
    let mut e = [0.0; N_TR];
    for (k, ek) in e.iter_mut().enumerate() {
        let kf = k as f64;
        *ek = params.e0_w() + params.w_q() * kf - params.eta_w() * kf * (kf - 1.0) / 2.0;
    }
    e
}

/// Drive envelope ε(t). Amplitude is ε/2π in GHz (complex to carry a phase);
/// `at_w(t)` converts to rad/ns for the propagator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum DriveEnvelope {
    /// ε(t) = eps for t ≥ 0 (sudden constant drive).
    Constant { eps: C64 },
    /// ε(t) = eps·min(t/ramp_ns, 1).
    LinearRamp { eps: C64, ramp_ns: f64 },
    /// Piecewise-linear interpolation of (t_ns, ε) samples; clamped at the ends.
    Tabulated { table: Vec<(f64, C64)> },
}

impl DriveEnvelope {
    pub fn constant_mhz(eps_mhz: f64) -> Self {
        Self::Constant { eps: C64::new(eps_mhz * 1e-3, 0.0) }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Constant { .. } => Ok(()),
            Self::LinearRamp { ramp_ns, .. } => {
                if *ramp_ns > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidParam(format!("ramp_ns must be > 0, got {ramp_ns}")))
                }
            }
            Self::Tabulated { table } => {
                if table.len() < 2 {
                    return Err(Error::InvalidParam("tabulated envelope needs >= 2 samples".into()));
                }
                if table.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::InvalidParam("tabulated envelope times must increase".into()));
                }
                Ok(())
            }
        }
    }

    /// ε(t)/2π in GHz.
    pub fn at(&self, t: f64) -> C64 {
        match self {
            Self::Constant { eps } => *eps,
            Self::LinearRamp { eps, ramp_ns } => *eps * (t / ramp_ns).clamp(0.0, 1.0),
            Self::Tabulated { table } => {
                if t <= table[0].0 {
                    return table[0].1;
                }
                if t >= table[table.len() - 1].0 {
                    return table[table.len() - 1].1;
                }
                let j = table.partition_point(|s| s.0 <= t);
                let (t0, e0) = table[j - 1];
                let (t1, e1) = table[j];
                e0 + (e1 - e0) * ((t - t0) / (t1 - t0))
            }
        }
    }

    /// ε(t) in rad/ns.
    pub fn at_w(&self, t: f64) -> C64 {
        self.at(t) * TWO_PI
    }

    /// Peak |ε|/2π over the envelope, GHz.
    pub fn peak(&self) -> f64 {
        match self {
            Self::Constant { eps } | Self::LinearRamp { eps, .. } => eps.norm(),
            Self::Tabulated { table } => table.iter().map(|s| s.1.norm()).fold(0.0, f64::max),
        }
    }
}

/// Rotating-frame Hamiltonian in banded storage.
///
/// Nonzero structure on flat indices i = n·7 + k:
/// - `diag[i]` = n(ω_r − ω_d) + E_k − kω_d,
/// - `jc[i]` couples i ↔ i−6, i.e. |n,k⟩ ↔ |n−1,k+1⟩, value g√(n(k+1)),
/// - `drv[i]` = √(n+1) couples i → i+7 with weight ε(t); the conjugate
///   direction carries ε*(t).
///
/// The drive-free part (diag + jc) is block-diagonal over RWA strips
/// n + k = const; a matrix-vector product costs O(7N).
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    pub n_res: usize,
    diag: Vec<f64>,
    jc: Vec<f64>,
    drv: Vec<f64>,
}

impl Hamiltonian {
    pub fn build(params: &SystemParams) -> Result<Self> {
        params.validate()?;
        let n_res = params.n_res;
        let dim = params.dim();
        let ek = bare_energies(params);
        let wr_wd = params.w_r() - params.w_d();
        let wd = params.w_d();
        let g = params.g_w();

        let mut diag = vec![0.0; dim];
        let mut jc = vec![0.0; dim];
        let mut drv = vec![0.0; dim];
        for i in 0..dim {
            let BareIndex { n, k } = BareIndex::from_flat(i);
            diag[i] = n as f64 * wr_wd + ek[k] - k as f64 * wd;
            if n >= 1 && k + 1 < N_TR {
                jc[i] = g * ((n * (k + 1)) as f64).sqrt();
            }
            if n + 1 < n_res {
                drv[i] = ((n + 1) as f64).sqrt();
            }
        }
        Ok(Self { n_res, diag, jc, drv })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// out = [H0 + ε·D + ε*·D†]·ψ with ε in rad/ns.
    pub fn apply(&self, eps_w: C64, psi: &[C64], out: &mut [C64]) {
        let dim = self.dim();
        debug_assert_eq!(psi.len(), dim);
        debug_assert_eq!(out.len(), dim);
        let eps_c = eps_w.conj();
        let drive_on = eps_w != C64::ZERO;
        for i in 0..dim {
            let mut acc = psi[i] * self.diag[i];
            let jci = self.jc[i];
            if jci != 0.0 {
                acc += psi[i - 6] * jci;
            }
            if i + 6 < dim && self.jc[i + 6] != 0.0 {
                acc += psi[i + 6] * self.jc[i + 6];
            }
            if drive_on {
                if i >= N_TR {
                    let w = self.drv[i - N_TR];
                    if w != 0.0 {
                        acc += eps_w * w * psi[i - N_TR];
                    }
                }
                let w = self.drv[i];
                if w != 0.0 {
                    acc += eps_c * w * psi[i + N_TR];
                }
            }
            out[i] = acc;
        }
    }

    /// out = −i·H(ε)·ψ, the Schrödinger right-hand side.
    pub fn apply_deriv(&self, eps_w: C64, psi: &[C64], out: &mut [C64]) {
        self.apply(eps_w, psi, out);
        for v in out.iter_mut() {
            *v = C64::new(v.im, -v.re);
        }
    }

    /// Dense drive-free part, real symmetric. Intended for small-N oracles.
    pub fn dense_h0(&self) -> nalgebra::DMatrix<f64> {
        let dim = self.dim();
        let mut m = nalgebra::DMatrix::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = self.diag[i];
            if self.jc[i] != 0.0 {
                m[(i, i - 6)] = self.jc[i];
                m[(i - 6, i)] = self.jc[i];
            }
        }
        m
    }

    /// Dense drive operator D = Σ √(n+1)|n+1,k⟩⟨n,k|.
    pub fn dense_drive(&self) -> nalgebra::DMatrix<f64> {
        let dim = self.dim();
        let mut m = nalgebra::DMatrix::zeros(dim, dim);
        for i in 0..dim {
            if self.drv[i] != 0.0 {
                m[(i + N_TR, i)] = self.drv[i];
            }
        }
        m
    }

    /// Dense full Hamiltonian at drive ε (rad/ns). Small-N oracles only.
    pub fn dense(&self, eps_w: C64) -> nalgebra::DMatrix<C64> {
        let dim = self.dim();
        let h0 = self.dense_h0();
        let d = self.dense_drive();
        let mut m = nalgebra::DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = C64::new(h0[(i, j)], 0.0) + eps_w * d[(i, j)] + eps_w.conj() * d[(j, i)];
            }
        }
        m
    }
}
