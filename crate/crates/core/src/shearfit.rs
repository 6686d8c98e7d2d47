//! Shear-infidelity estimates for the correct-ladder state: the
//! closed-form drive-on expression and the integrated shear accumulated
//! along an arbitrary photon-number history n̄(t).

use crate::error::{Error, Result};
use crate::spectrum::LadderProfile;

/// Accumulated shear q·|β|² and the small-shear infidelity it implies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShearEstimate {
    /// Time in ns.
    pub t: f64,
    /// Signed accumulated shear q·|β|².
    pub q_beta2: f64,
    /// Small-shear estimate 1 − F_c = 3·(q·|β|²)².
    pub infidelity: f64,
}

impl ShearEstimate {
    fn new(t: f64, q_beta2: f64) -> Self {
        Self { t, q_beta2, infidelity: 3.0 * q_beta2 * q_beta2 }
    }
}

/// Closed-form shear infidelity for a resonant constant drive with an
/// n-independent ladder-frequency slope:
/// 1 − F_c = (1/12)·[ε²·t³·dω/dn]².
pub fn infidelity_closed_form(eps_w: f64, t: f64, domega_dn: f64) -> f64 {
    (eps_w * eps_w * t.powi(3) * domega_dn).powi(2) / 12.0
}

/// Integrate d(q|β|²)/dt = (n̄/2)·(dω_r^(k)/dn)|_n̄ along `t_grid` with the
/// supplied photon-number history, by composite trapezoid with one halving
/// refinement per interval.
pub fn integrate_qbeta2<F>(
    profile: &LadderProfile,
    nbar_of_t: F,
    t_grid: &[f64],
) -> Result<Vec<ShearEstimate>>
where
    F: Fn(f64) -> f64,
{
    if t_grid.len() < 2 {
        return Err(Error::InvalidParam("t_grid needs at least two points".into()));
    }
    let rate = |t: f64| -> Result<f64> {
        let nbar = nbar_of_t(t).max(0.0);
        if !profile.in_valid_range(nbar) {
            return Err(Error::IndexRange(format!(
                "n̄ = {nbar:.1} outside the reliable ladder range (N = {})",
                profile.n_res
            )));
        }
        Ok(nbar / 2.0 * profile.domega_at(nbar))
    };
    let mut out = Vec::with_capacity(t_grid.len());
    let mut acc = 0.0;
    let mut prev_t = t_grid[0];
    let mut prev_rate = rate(prev_t)?;
    out.push(ShearEstimate::new(prev_t, acc));
    for &t in &t_grid[1..] {
        if t <= prev_t {
            return Err(Error::InvalidParam("t_grid must be strictly increasing".into()));
        }
        let mid_rate = rate(0.5 * (prev_t + t))?;
        let end_rate = rate(t)?;
        let h = t - prev_t;
        // Richardson-combined trapezoid at h and h/2
        let coarse = h / 2.0 * (prev_rate + end_rate);
        let fine = h / 4.0 * (prev_rate + 2.0 * mid_rate + end_rate);
        acc += fine + (fine - coarse) / 3.0;
        out.push(ShearEstimate::new(t, acc));
        prev_t = t;
        prev_rate = end_rate;
    }
    Ok(out)
}
