//! Analytic model of the stray population that a bare-basis drive leaks
//! into a neighboring eigenladder during ring-up, plus trace-analysis
//! helpers (oscillation frequency, decay time) used to compare the model
//! against full simulations.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::model::{DriveEnvelope, SystemParams};
use crate::spectrum::DressedBasis;

/// Decay-time prefactor calibrated for amplitude decay to 1/3.
pub const DECAY_PREFACTOR: f64 = 1.23;

/// Closed-form description of leakage into one neighboring eigenladder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeakagePrediction {
    /// Steady-state stray population at the requested n̄.
    pub p_ss: f64,
    /// Initial oscillation maximum after a sudden turn-on, 4·p_ss(0).
    pub p_max: f64,
    /// Oscillation frequency Ω_n̄ in rad/ns at the requested n̄.
    pub omega_osc: f64,
    /// Time for the oscillation amplitude to decay to 1/3, in ns.
    pub t_decay: f64,
    /// False when p_ss exceeds 0.01, i.e. when the perturbative ratio
    /// ε·g_eff/|Ω·Δ| exceeds 0.1 and the two-ladder expansion is stressed.
    pub valid: bool,
}

fn pair_prediction(
    eps_w: f64,
    g_eff: f64,
    delta0: f64,
    omega0: f64,
    delta_n: f64,
    omega_n: f64,
    chi: f64,
) -> Result<LeakagePrediction> {
    for (name, v) in [("Δ(0)", delta0), ("Ω(0)", omega0), ("Δ(n̄)", delta_n), ("Ω(n̄)", omega_n)] {
        if v == 0.0 {
            return Err(Error::ModelInvalid(format!(
                "{name} vanishes: drive resonant with the inter-ladder transition"
            )));
        }
    }
    let p_ss = (eps_w * g_eff / (omega_n * delta_n)).powi(2);
    let p_max = 4.0 * (eps_w * g_eff / (omega0 * delta0)).powi(2);
    let t_decay = if chi * eps_w == 0.0 {
        f64::INFINITY
    } else {
        DECAY_PREFACTOR / (chi * eps_w).abs().sqrt()
    };
    Ok(LeakagePrediction { p_ss, p_max, omega_osc: omega_n, t_decay, valid: p_ss <= 0.01 })
}

/// Leakage from the ground eigenladder into ladder 1 for a drive of
/// amplitude `eps_w` (rad/ns), evaluated at mean photon number `nbar`.
///
/// Ω_n̄ = Δ_n̄ + ω_d − ω̄_r reduces to Δ_n̄ − ω_r^(0)(0) in the rotating
/// frame, and to Δ_n̄ alone for a resonant drive.
pub fn predict_ground(
    params: &SystemParams,
    basis: &DressedBasis,
    eps_w: f64,
    nbar: f64,
) -> Result<LeakagePrediction> {
    let off = -basis.omega_r_k(0, 0)?;
    let delta0 = basis.detuning_n(0)?;
    let delta_n = basis.detuning_at(nbar)?;
    pair_prediction(
        eps_w,
        params.g_w(),
        delta0,
        delta0 + off,
        delta_n,
        delta_n + off,
        basis.chi_spectral(),
    )
}

/// Leakage out of eigenladder 1 (initial state bar|0,1⟩) into ladders 0
/// and 2, returned in that order.
///
/// The ladder-0 branch involves the same pair of transmon levels as the
/// ground-state case and reproduces `predict_ground` exactly. The
/// ladder-2 branch replaces g → √2·g, Δ_n → Ē_{n+1,1} − Ē_{n,2}, the
/// drive reference by ω_r^(1)(0), and χ → χ′.
pub fn predict_excited(
    params: &SystemParams,
    basis: &DressedBasis,
    eps_w: f64,
    nbar: f64,
) -> Result<(LeakagePrediction, LeakagePrediction)> {
    let down = predict_ground(params, basis, eps_w, nbar)?;
    let off = -basis.omega_r_k(0, 1)?;
    let delta0 = basis.detuning_pair(0, 1)?;
    let delta_n = basis.detuning_pair_at(nbar, 1)?;
    let up = pair_prediction(
        eps_w,
        params.g_w() * 2.0f64.sqrt(),
        delta0,
        delta0 + off,
        delta_n,
        delta_n + off,
        basis.two_chi_prime() / 2.0,
    )?;
    Ok((down, up))
}

/// Integrate the two-ladder amplitude model
/// ċ = i·ε(t)·g/Δ_n̄(t) + i·Ω_n̄(t)·c, c(t₀) = 0,
/// on `t_grid`, with n̄(t) supplied by the caller. |c(t)|² approximates
/// P_stray(t) including both the oscillation and the drift of its center.
pub fn integrate_c<F>(
    params: &SystemParams,
    basis: &DressedBasis,
    drive: &DriveEnvelope,
    nbar_of_t: F,
    t_grid: &[f64],
) -> Result<Vec<C64>>
where
    F: Fn(f64) -> f64,
{
    if t_grid.len() < 2 {
        return Err(Error::InvalidParam("t_grid needs at least two points".into()));
    }
    let off = -basis.omega_r_k(0, 0)?;
    let g = params.g_w();
    let deriv = |t: f64, c: C64| -> Result<C64> {
        let delta = basis.detuning_at(nbar_of_t(t).max(0.0))?;
        let eps = drive.at_w(t);
        Ok(C64::i() * (eps * g / delta) + C64::i() * (delta + off) * c)
    };
    let mut out = Vec::with_capacity(t_grid.len());
    let mut c = C64::ZERO;
    out.push(c);
    for w in t_grid.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        if t1 <= t0 {
            return Err(Error::InvalidParam("t_grid must be strictly increasing".into()));
        }
        let steps = ((t1 - t0) / 0.005).ceil().max(1.0) as usize;
        let h = (t1 - t0) / steps as f64;
        for s in 0..steps {
            let t = t0 + s as f64 * h;
            let k1 = deriv(t, c)?;
            let k2 = deriv(t + 0.5 * h, c + k1 * (0.5 * h))?;
            let k3 = deriv(t + 0.5 * h, c + k2 * (0.5 * h))?;
            let k4 = deriv(t + h, c + k3 * h)?;
            c += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        }
        out.push(c);
    }
    Ok(out)
}

fn local_maxima(p: &[f64]) -> Vec<usize> {
    let mut idx = Vec::new();
    for i in 1..p.len() - 1 {
        if p[i] > p[i - 1] && p[i] >= p[i + 1] {
            idx.push(i);
        }
    }
    idx
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Dominant oscillation period from the median spacing of local maxima.
/// Errors unless the trace holds at least five full periods.
pub fn oscillation_period(t: &[f64], p: &[f64]) -> Result<f64> {
    if t.len() != p.len() || t.len() < 8 {
        return Err(Error::InvalidParam("trace too short for period extraction".into()));
    }
    let maxima = local_maxima(p);
    if maxima.len() < 6 {
        return Err(Error::InsufficientOscillations(format!(
            "need >= 5 periods (6 maxima), found {} maxima",
            maxima.len()
        )));
    }
    let mut gaps: Vec<f64> = maxima.windows(2).map(|w| t[w[1]] - t[w[0]]).collect();
    Ok(median(&mut gaps))
}

/// Moving average of `p` over a centered window of width `width` in time,
/// clamped at the trace edges.
fn running_center(t: &[f64], p: &[f64], width: f64) -> Vec<f64> {
    let n = t.len();
    let mut out = vec![0.0; n];
    let (mut lo, mut hi) = (0usize, 0usize);
    let mut sum = 0.0;
    for i in 0..n {
        while hi < n && t[hi] <= t[i] + width / 2.0 {
            sum += p[hi];
            hi += 1;
        }
        while t[lo] < t[i] - width / 2.0 {
            sum -= p[lo];
            lo += 1;
        }
        out[i] = sum / (hi - lo) as f64;
    }
    out
}

/// Time for the oscillation amplitude of `p` around its running center to
/// decay to 1/3 of its initial value, measured from t[0].
///
/// The amplitude envelope is the per-period maximum of
/// |p − running center|; the 1/3 crossing is linearly interpolated
/// between period bins. Errors when fewer than five periods are present
/// or when the envelope never falls below 1/3.
pub fn fit_decay_time(t: &[f64], p: &[f64]) -> Result<f64> {
    let period = oscillation_period(t, p)?;
    let center = running_center(t, p, period);
    // per-period envelope bins
    let mut amps: Vec<(f64, f64)> = Vec::new();
    let mut j = 0usize;
    let mut bin = 0usize;
    while j < t.len() {
        let t_end = t[0] + (bin + 1) as f64 * period;
        let mut amp: f64 = 0.0;
        let mut any = false;
        while j < t.len() && t[j] < t_end {
            amp = amp.max((p[j] - center[j]).abs());
            any = true;
            j += 1;
        }
        if any {
            amp = amp.max(1e-300);
            amps.push((t[0] + (bin as f64 + 0.5) * period, amp));
        }
        bin += 1;
    }
    let a0 = amps[0].1;
    let target = a0 / 3.0;
    for w in amps.windows(2) {
        let ((t_prev, a_prev), (t_next, a_next)) = (w[0], w[1]);
        if a_prev > target && a_next <= target {
            let frac = (a_prev - target) / (a_prev - a_next);
            return Ok(t_prev + frac * (t_next - t_prev) - t[0]);
        }
    }
    Err(Error::InsufficientOscillations(format!(
        "amplitude never decays to 1/3 of initial {a0:.3e}"
    )))
}

/// Instantaneous oscillation frequency of `p` along the trace, from
/// zero crossings of the signal detrended by its running center.
///
/// Crossings are grouped into windows of `periods_per_window` periods;
/// each window yields (window center time, ω in rad/ns).
pub fn oscillation_frequency(
    t: &[f64],
    p: &[f64],
    periods_per_window: usize,
) -> Result<Vec<(f64, f64)>> {
    let period = oscillation_period(t, p)?;
    let center = running_center(t, p, period);
    let d: Vec<f64> = p.iter().zip(&center).map(|(a, b)| a - b).collect();
    // interpolated zero-crossing times
    let mut crossings = Vec::new();
    for i in 1..d.len() {
        if d[i - 1] == 0.0 {
            continue;
        }
        if d[i - 1].signum() != d[i].signum() && d[i] != 0.0 {
            let frac = d[i - 1] / (d[i - 1] - d[i]);
            crossings.push(t[i - 1] + frac * (t[i] - t[i - 1]));
        }
    }
    let per_window = 2 * periods_per_window.max(1);
    if crossings.len() < per_window + 1 {
        return Err(Error::InsufficientOscillations(format!(
            "need {} zero crossings for one window, found {}",
            per_window + 1,
            crossings.len()
        )));
    }
    let mut out = Vec::new();
    let mut k = 0usize;
    while k + per_window < crossings.len() {
        let span = crossings[k + per_window] - crossings[k];
        let omega = std::f64::consts::PI * per_window as f64 / span;
        out.push((0.5 * (crossings[k] + crossings[k + per_window]), omega));
        k += per_window / 2;
    }
    Ok(out)
}
