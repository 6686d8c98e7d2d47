//! Time-dependent Schrödinger propagation in the rotating frame.
//!
//! iψ̇ = [H0 + ε(t)D + ε*(t)D†]ψ integrated with an adaptive embedded
//! Dormand-Prince 5(4) pair. The norm is never renormalized; its drift is the
//! integration-quality diagnostic. Snapshots land exactly on the requested
//! output grid by clamping the step.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::model::{DriveEnvelope, Hamiltonian, N_TR};
use crate::spectrum::DressedBasis;

/// Complex state over the flat bare basis at one instant.
#[derive(Debug, Clone)]
pub struct StateVector {
    pub amps: Vec<C64>,
    pub t: f64,
}

impl StateVector {
    pub fn norm(&self) -> f64 {
        norm(&self.amps)
    }
}

/// Per-snapshot diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct SnapshotAux {
    pub norm: f64,
    /// Population in the top 5 resonator levels (truncation headroom probe).
    pub top_pop: f64,
}

/// Recorded evolution: snapshot times, states, diagnostics.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<C64>>,
    pub aux: Vec<SnapshotAux>,
    /// Accepted integrator steps (diagnostic).
    pub n_steps: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> StateVector {
        StateVector { amps: self.states[i].clone(), t: self.times[i] }
    }

    /// Index of the snapshot closest to time `t`.
    pub fn index_at(&self, t: f64) -> usize {
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for (i, &ti) in self.times.iter().enumerate() {
            let d = (ti - t).abs();
            if d < dist {
                dist = d;
                best = i;
            }
        }
        best
    }
}

pub fn norm(psi: &[C64]) -> f64 {
    psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

/// Population in the top `levels` resonator Fock states.
pub fn top_resonator_population(psi: &[C64], n_res: usize, levels: usize) -> f64 {
    let lo = n_res.saturating_sub(levels) * N_TR;
    psi[lo..].iter().map(|a| a.norm_sqr()).sum()
}

/// ⟨ψ|op|ψ⟩ for a dense operator; test and small-system utility.
pub fn expectation_dense(op: &nalgebra::DMatrix<C64>, psi: &[C64]) -> Result<C64> {
    if op.nrows() != psi.len() || op.ncols() != psi.len() {
        return Err(Error::DimensionMismatch { expected: psi.len(), got: op.nrows() });
    }
    let mut acc = C64::ZERO;
    for i in 0..psi.len() {
        let mut row = C64::ZERO;
        for j in 0..psi.len() {
            row += op[(i, j)] * psi[j];
        }
        acc += psi[i].conj() * row;
    }
    Ok(acc)
}

/// Dressed excitation number ⟨ā†ā⟩ = Σ n |⟨bar(n,k)|ψ⟩|².
pub fn photon_number(basis: &DressedBasis, psi: &[C64]) -> f64 {
    let coeff = basis.to_eigen(psi);
    let mut acc = 0.0;
    for n in 0..basis.n_res() {
        for k in 0..N_TR {
            acc += n as f64 * coeff[n * N_TR + k].norm_sqr();
        }
    }
    acc
}

/// ⟨ā⟩ of the dressed lowering operator, summed over all ladders.
pub fn dressed_abar(basis: &DressedBasis, psi: &[C64]) -> C64 {
    let coeff = basis.to_eigen(psi);
    let mut acc = C64::ZERO;
    for n in 0..basis.n_res() - 1 {
        for k in 0..N_TR {
            acc += coeff[n * N_TR + k].conj()
                * coeff[(n + 1) * N_TR + k]
                * ((n + 1) as f64).sqrt();
        }
    }
    acc
}

// Dormand-Prince 5(4) tableau.
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] =
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0];
const B: [f64; 6] =
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
// b − b̂: weights of the embedded error estimate
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];

const SAFETY: f64 = 0.9;
const MIN_SCALE: f64 = 0.2;
const MAX_SCALE: f64 = 2.5;
const MAX_STEPS: u64 = 1_000_000_000;

/// Adaptive Dormand-Prince driver over a complex state vector. `deriv`
/// writes dψ/dt into its third argument. Snapshots are taken at
/// `t0 + j·dt_out` and at `t_end`. If `fixed_dt` is set, adaptivity is
/// disabled and that step is used verbatim (still clamped to snapshots).
pub fn integrate_adaptive<F>(
    deriv: F,
    psi0: &[C64],
    t0: f64,
    t_end: f64,
    dt_out: f64,
    tol: f64,
    fixed_dt: Option<f64>,
) -> Result<Trajectory>
where
    F: Fn(f64, &[C64], &mut [C64]),
{
    if !(t_end > t0) {
        return Err(Error::InvalidParam(format!("need t_end > t0, got {t_end} <= {t0}")));
    }
    if !(dt_out > 0.0) {
        return Err(Error::InvalidParam(format!("need dt_out > 0, got {dt_out}")));
    }
    if fixed_dt.is_none() && !(1e-12..=1e-6).contains(&tol) {
        return Err(Error::InvalidParam(format!("tol must lie in [1e-12, 1e-6], got {tol:.3e}")));
    }
    let dim = psi0.len();
    let mut y = psi0.to_vec();
    let mut t = t0;
    let mut k: Vec<Vec<C64>> = (0..7).map(|_| vec![C64::ZERO; dim]).collect();
    let mut ytmp = vec![C64::ZERO; dim];
    let mut y5 = vec![C64::ZERO; dim];

    let mut times = vec![t0];
    let mut states = vec![y.clone()];
    let mut aux = Vec::new();

    let mut h = fixed_dt.unwrap_or_else(|| (dt_out / 8.0).min(1e-3));
    let mut n_steps: u64 = 0;
    let mut just_rejected = false;
    let mut out_idx: usize = 1;
    let mut next_out = (t0 + dt_out).min(t_end);
    deriv(t, &y, &mut k[0]);
    let mut k1_fresh = true;

    loop {
        if t >= t_end {
            break;
        }
        n_steps += 1;
        if n_steps > MAX_STEPS {
            return Err(Error::ModelInvalid(format!("integrator exceeded {MAX_STEPS} steps")));
        }
        let mut h_try = h.min(next_out - t);
        let clamped = h_try < h;
        if h_try < 1e-12 * (t_end - t0) {
            // degenerate clamp: snap to the output point
            t = next_out;
            h_try = 0.0;
        }
        if h_try > 0.0 {
            if !k1_fresh {
                deriv(t, &y, &mut k[0]);
                k1_fresh = true;
            }
            // stages 2..7
            #[allow(clippy::needless_range_loop)]
            for s in 1..7 {
                let arow: &[f64] = match s {
                    1 => &A2,
                    2 => &A3,
                    3 => &A4,
                    4 => &A5,
                    5 => &A6,
                    _ => &B,
                };
                for i in 0..dim {
                    let mut acc = C64::ZERO;
                    for (j, &a) in arow.iter().enumerate() {
                        if a != 0.0 {
                            acc += k[j][i] * a;
                        }
                    }
                    ytmp[i] = y[i] + acc * h_try;
                }
                let (head, tail) = k.split_at_mut(s);
                let _ = head;
                deriv(t + C[s] * h_try, &ytmp, &mut tail[0]);
            }
            // 5th-order solution is the last stage input (FSAL)
            y5.copy_from_slice(&ytmp);

            if fixed_dt.is_none() {
                // scaled max-norm error estimate; max (not RMS) so sparse
                // states aren't diluted by the empty part of the basis
                let mut err = 0.0f64;
                for i in 0..dim {
                    let mut e = C64::ZERO;
                    for (j, &w) in E.iter().enumerate() {
                        if w != 0.0 {
                            e += k[j][i] * w;
                        }
                    }
                    let sc = tol + tol * y[i].norm().max(y5[i].norm());
                    err = err.max(e.norm() * h_try / sc);
                }
                if err > 1.0 {
                    // reject; k1 still valid at (t, y)
                    h = h_try * (SAFETY * err.powf(-0.2)).max(MIN_SCALE);
                    just_rejected = true;
                    continue;
                }
                let max_scale = if just_rejected { 1.0 } else { MAX_SCALE };
                let scale = if err > 0.0 {
                    (SAFETY * err.powf(-0.2)).clamp(MIN_SCALE, max_scale)
                } else {
                    max_scale
                };
                just_rejected = false;
                let h_next = h_try * scale;
                t += h_try;
                y.copy_from_slice(&y5);
                k.swap(0, 6); // FSAL: k7 = f(t+h, y5)
                k1_fresh = true;
                if !clamped {
                    h = h_next;
                }
            } else {
                t += h_try;
                y.copy_from_slice(&y5);
                k.swap(0, 6);
                k1_fresh = true;
            }
        }
        if t >= next_out - 1e-12 * (t_end - t0) {
            t = next_out;
            times.push(t);
            states.push(y.clone());
            out_idx += 1;
            next_out = (t0 + out_idx as f64 * dt_out).min(t_end);
            if (next_out - t).abs() < 1e-12 * (t_end - t0) && t >= t_end {
                break;
            }
        }
    }

    for s in &states {
        aux.push(SnapshotAux { norm: norm(s), top_pop: 0.0 });
    }
    Ok(Trajectory { times, states, aux, n_steps })
}

/// Integrate the rotating-frame Schrödinger equation. Aborts with a
/// truncation-breach error if the top 5 resonator levels ever hold more than
/// 1e-6 population at a snapshot.
pub fn evolve(
    h: &Hamiltonian,
    envelope: &DriveEnvelope,
    psi0: &[C64],
    t_end: f64,
    dt_out: f64,
    tol: f64,
) -> Result<Trajectory> {
    if psi0.len() != h.dim() {
        return Err(Error::DimensionMismatch { expected: h.dim(), got: psi0.len() });
    }
    envelope.validate()?;
    let n_res = h.n_res;
    let deriv = |t: f64, psi: &[C64], out: &mut [C64]| {
        h.apply_deriv(envelope.at_w(t), psi, out);
    };
    let mut traj = integrate_adaptive(deriv, psi0, 0.0, t_end, dt_out, tol, None)?;
    for (i, s) in traj.states.iter().enumerate() {
        let top = top_resonator_population(s, n_res, 5);
        traj.aux[i].top_pop = top;
        if top > 1e-6 {
            return Err(Error::TruncationBreach { pop: top, levels: 5, t_ns: traj.times[i] });
        }
    }
    Ok(traj)
}

/// Fixed-step variant of `evolve` (same scheme, no error control); serves
/// step-halving convergence checks.
pub fn evolve_fixed(
    h: &Hamiltonian,
    envelope: &DriveEnvelope,
    psi0: &[C64],
    t_end: f64,
    dt_out: f64,
    dt: f64,
) -> Result<Trajectory> {
    if psi0.len() != h.dim() {
        return Err(Error::DimensionMismatch { expected: h.dim(), got: psi0.len() });
    }
    let deriv = |t: f64, psi: &[C64], out: &mut [C64]| {
        h.apply_deriv(envelope.at_w(t), psi, out);
    };
    integrate_adaptive(deriv, psi0, 0.0, t_end, dt_out, 1e-10, Some(dt))
}
