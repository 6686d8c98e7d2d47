//! Hybrid phase-Fock evolution of the correct-ladder state: three coupled
//! ODEs for the center β, shear K, and width W, integrated with a fixed
//! RK4 step, plus the conversion of the endpoint into squeeze parameters.

use num_complex::Complex64 as C64;

use crate::dressed::{shear_to_squeeze, ShearedParams, SqueezeOptical};
use crate::error::{Error, Result};
use crate::model::{DriveEnvelope, SystemParams};
use crate::spectrum::{effective_drive_factor_analytic, DressedBasis, LadderProfile};

/// Gaussian-with-quadratic-phase state of one eigenladder at time `t`:
/// center β, shear K, width W.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedState {
    pub beta: C64,
    pub shear: f64,
    pub width: f64,
    pub ladder: usize,
    pub t: f64,
}

impl ReducedState {
    /// Ring-up start: β = 0, no shear, Poissonian width.
    pub fn vacuum(ladder: usize) -> Self {
        Self { beta: C64::ZERO, shear: 0.0, width: 1.0, ladder, t: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0) || !self.width.is_finite() {
            return Err(Error::InvalidParam(format!("width must be > 0, got {}", self.width)));
        }
        if !self.shear.is_finite() || !self.beta.is_finite() {
            return Err(Error::InvalidParam("non-finite reduced state".into()));
        }
        Ok(())
    }

    /// Mean photon number |β|².
    pub fn nbar(&self) -> f64 {
        self.beta.norm_sqr()
    }

    pub fn to_sheared(&self) -> ShearedParams {
        ShearedParams {
            beta: self.beta,
            shear: self.shear,
            width: self.width,
            ladder: self.ladder,
        }
    }

    /// Squeeze parameters (β, r, θ) equivalent to the current (K, W, β).
    pub fn to_squeezed(&self) -> SqueezeOptical {
        shear_to_squeeze(&self.to_sheared())
    }
}

/// Drive amplitude used inside the reduced ODEs.
#[derive(Debug, Clone, Copy)]
pub enum DriveMode<'a> {
    /// Bare-basis ε as it appears in the lab Hamiltonian.
    Bare,
    /// ε scaled by a constant perturbative factor (1 − (g/Δ)²/2 for the
    /// ground ladder and its excited-ladder counterpart).
    Analytic { factor: f64 },
    /// ε scaled by the exact n-dependent eigenbasis matrix element
    /// ⟨bar(n−1,k)|a|bar(n,k)⟩/√n, evaluated at n ≈ |β|².
    MatrixElement { basis: &'a DressedBasis },
}

impl DriveMode<'_> {
    /// Analytic-correction mode for ladder k of `params`.
    pub fn analytic(params: &SystemParams, k: usize) -> Result<DriveMode<'static>> {
        Ok(DriveMode::Analytic { factor: effective_drive_factor_analytic(params, k)? })
    }

    fn factor(&self, nbar: f64, k: usize) -> Result<f64> {
        match self {
            DriveMode::Bare => Ok(1.0),
            DriveMode::Analytic { factor } => Ok(*factor),
            DriveMode::MatrixElement { basis } => {
                let n = (nbar.round() as usize).clamp(1, basis.n_res() - 1);
                Ok(basis.lowering_element(n, k)? / (n as f64).sqrt())
            }
        }
    }
}

/// Re(ε̃/β) with the removable β → 0 singularity handled: a resonant
/// ring-up has β ∝ −iε̃t, for which the ratio is purely imaginary.
fn drive_ratio(eps: C64, beta: C64) -> f64 {
    if beta.norm() < 1e-8 {
        0.0
    } else {
        (eps / beta).re
    }
}

fn deriv(
    profile: &LadderProfile,
    eps: C64,
    beta: C64,
    shear: f64,
    width: f64,
) -> (C64, f64, f64) {
    let nbar = beta.norm_sqr();
    let omega = profile.omega_at(nbar);
    let domega = profile.domega_at(nbar);
    let r = drive_ratio(eps, beta);
    let d_beta = -C64::i() * omega * beta - C64::i() * eps;
    let d_w = 8.0 * shear * width * r;
    let d_k =
        ((1.0 - width * width) / (4.0 * width * width) - 4.0 * shear * shear) * r
            + 0.5 * nbar * domega;
    (d_beta, d_k, d_w)
}

/// Integrate the reduced evolution from `state0` to `t_end` with fixed
/// RK4 steps of (at most) `dt`, recording every step. The drive factor
/// for `mode` is refreshed once per step.
pub fn evolve_reduced(
    profile: &LadderProfile,
    drive: &DriveEnvelope,
    mode: &DriveMode,
    state0: &ReducedState,
    t_end: f64,
    dt: f64,
) -> Result<Vec<ReducedState>> {
    state0.validate()?;
    drive.validate()?;
    if !(dt > 0.0) {
        return Err(Error::InvalidParam(format!("dt must be > 0, got {dt}")));
    }
    if t_end <= state0.t {
        return Err(Error::InvalidParam("t_end must exceed the initial time".into()));
    }
    let steps = ((t_end - state0.t) / dt).ceil() as usize;
    let h = (t_end - state0.t) / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    let mut s = *state0;
    out.push(s);
    for _ in 0..steps {
        let nbar = s.nbar();
        if !profile.in_valid_range(nbar) {
            return Err(Error::IndexRange(format!(
                "|β|² = {nbar:.1} outside the reliable ladder range (N = {})",
                profile.n_res
            )));
        }
        let factor = mode.factor(nbar, s.ladder)?;
        let eps_at = |t: f64| drive.at_w(t) * factor;

        let (b1, k1, w1) = deriv(profile, eps_at(s.t), s.beta, s.shear, s.width);
        let (b2, k2, w2) = deriv(
            profile,
            eps_at(s.t + h / 2.0),
            s.beta + b1 * (h / 2.0),
            s.shear + k1 * h / 2.0,
            s.width + w1 * h / 2.0,
        );
        let (b3, k3, w3) = deriv(
            profile,
            eps_at(s.t + h / 2.0),
            s.beta + b2 * (h / 2.0),
            s.shear + k2 * h / 2.0,
            s.width + w2 * h / 2.0,
        );
        let (b4, k4, w4) = deriv(
            profile,
            eps_at(s.t + h),
            s.beta + b3 * h,
            s.shear + k3 * h,
            s.width + w3 * h,
        );
        s.beta += (b1 + (b2 + b3) * 2.0 + b4) * (h / 6.0);
        s.shear += h / 6.0 * (k1 + 2.0 * (k2 + k3) + k4);
        s.width += h / 6.0 * (w1 + 2.0 * (w2 + w3) + w4);
        s.t += h;
        if !(s.width > 0.0) {
            return Err(Error::ModelInvalid(format!(
                "width collapsed to {} at t = {:.2} ns",
                s.width, s.t
            )));
        }
        out.push(s);
    }
    Ok(out)
}
