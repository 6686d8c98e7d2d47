//! Direct-product structure and entanglement of single-ladder states.
//!
//! A state assembled on one eigenladder, Σ_n c_n bar|n,k⟩, is built from
//! eigenstates that each mix several transmon levels, yet for a smooth,
//! wide amplitude profile it factorizes to high accuracy: the resonator
//! keeps the c_n and the transmon absorbs the averaged level weights with
//! phases φ_l = arg(Σ_n c_n* c_{n+l}). This module constructs that
//! factorization, measures its error against the exact state, and computes
//! exact entanglement quantities from the transmon reduced density operator.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::model::{flat, N_TR};
use crate::spectrum::DressedBasis;

/// Bare-level weights of the eigenstate bar|n,k⟩, indexed by transmon level
/// k+l, so entry j is the amplitude on the bare state |n+k−j, j⟩. Levels cut
/// off by the strip (resonator index out of range) carry weight zero; the
/// surviving weights still sum to one in square because each strip is
/// diagonalized on exactly the in-range bare states.
pub fn eigen_coeffs(basis: &DressedBasis, n: usize, k: usize) -> Result<[f64; N_TR]> {
    if n >= basis.n_res() || k >= N_TR {
        return Err(Error::IndexRange(format!(
            "eigenstate ({n},{k}) outside truncation {}x{}",
            basis.n_res(),
            N_TR
        )));
    }
    let mut d = [0.0; N_TR];
    for (j, dj) in d.iter_mut().enumerate() {
        *dj = basis.coeff_d(n, k, j as isize - k as isize);
    }
    Ok(d)
}

/// Overlap sum Σ_n c_n* c_{n+l} between an amplitude profile and its
/// l-shifted copy. Its modulus near one for all |l| ≤ 6 is the condition for
/// the ladder state to be close to a product state; its argument is the
/// phase the transmon factor absorbs.
pub fn condition_sum(c: &[C64], l: isize) -> C64 {
    let len = c.len() as isize;
    let mut s = C64::ZERO;
    for n in 0..len {
        let m = n + l;
        if m >= 0 && m < len {
            s += c[n as usize].conj() * c[m as usize];
        }
    }
    s
}

/// Product (resonator ⊗ transmon) approximation of a single-ladder state.
#[derive(Debug, Clone)]
pub struct ProductApprox {
    /// Nominal eigenladder index k.
    pub ladder: usize,
    /// Normalized resonator factor c_n.
    pub resonator_amps: Vec<C64>,
    /// Normalized transmon factor e^{iφ_l} d̄_l on levels 0..7 (l = level − k).
    pub transmon_amps: [C64; N_TR],
    /// 1 − |⟨product|exact⟩|² against the exact ladder state.
    pub infidelity: f64,
}

/// Build the product approximation of Σ_n c_n bar|n,k⟩ from its ladder
/// coefficients. The transmon weights are the eigenstate level weights
/// averaged over the state's photon distribution, and each level k+l gets
/// the phase of the l-shifted overlap sum. The infidelity is evaluated
/// against the exact state, including the n-dependence the factorized form
/// discards.
pub fn product_approx(basis: &DressedBasis, c: &[C64], k: usize) -> Result<ProductApprox> {
    if k >= N_TR {
        return Err(Error::IndexRange(format!("ladder {k} out of 0..{N_TR}")));
    }
    if c.len() > basis.n_res() {
        return Err(Error::DimensionMismatch { expected: basis.n_res(), got: c.len() });
    }
    let norm2: f64 = c.iter().map(|z| z.norm_sqr()).sum();
    if norm2 <= 0.0 {
        return Err(Error::ModelInvalid("zero ladder state".into()));
    }
    let scale = norm2.sqrt().recip();
    let cn: Vec<C64> = c.iter().map(|z| z * scale).collect();

    // Level weights averaged over the photon distribution, then phased.
    let mut tau = [C64::ZERO; N_TR];
    for (j, tj) in tau.iter_mut().enumerate() {
        let l = j as isize - k as isize;
        let mut avg = 0.0;
        for (n, z) in cn.iter().enumerate() {
            let w = z.norm_sqr();
            if w > 0.0 {
                avg += w * basis.coeff_d(n, k, l);
            }
        }
        let s = condition_sum(&cn, l);
        let phase = if s.norm_sqr() > 0.0 { C64::from_polar(1.0, s.arg()) } else { C64::ONE };
        *tj = phase * avg;
    }
    let tnorm2: f64 = tau.iter().map(|z| z.norm_sqr()).sum();
    if tnorm2 <= 0.0 {
        return Err(Error::ModelInvalid("transmon factor vanished".into()));
    }
    let tscale = tnorm2.sqrt().recip();
    for tj in tau.iter_mut() {
        *tj *= tscale;
    }

    // Overlap of the product with the exact ladder state.
    let psi = basis.state_from_ladder(&cn, k);
    let mut ov = C64::ZERO;
    for (n, z) in cn.iter().enumerate() {
        for (j, tj) in tau.iter().enumerate() {
            ov += (z * tj).conj() * psi[flat(n, j)];
        }
    }
    Ok(ProductApprox {
        ladder: k,
        resonator_amps: cn,
        transmon_amps: tau,
        infidelity: (1.0 - ov.norm_sqr()).max(0.0),
    })
}

/// Transmon reduced density operator of a joint bare-basis state: 7×7,
/// Hermitian, unit trace for normalized input. Partial trace over the
/// resonator index by direct summation.
pub fn transmon_reduced(psi: &[C64]) -> Result<DMatrix<C64>> {
    if psi.is_empty() || !psi.len().is_multiple_of(N_TR) {
        return Err(Error::DimensionMismatch {
            expected: N_TR * (psi.len() / N_TR).max(1),
            got: psi.len(),
        });
    }
    let n_res = psi.len() / N_TR;
    let mut rho = DMatrix::<C64>::zeros(N_TR, N_TR);
    for n in 0..n_res {
        for ka in 0..N_TR {
            let a = psi[flat(n, ka)];
            if a == C64::ZERO {
                continue;
            }
            for kb in 0..N_TR {
                rho[(ka, kb)] += a * psi[flat(n, kb)].conj();
            }
        }
    }
    Ok(rho)
}

/// Eigenvalues of a Hermitian operator, descending. Uses the real symmetric
/// embedding [[X, −Y], [Y, X]] of X + iY, whose spectrum is the target
/// spectrum doubled; adjacent pairs of the sorted result are averaged back.
pub fn hermitian_eigenvalues(rho: &DMatrix<C64>) -> Vec<f64> {
    let m = rho.nrows();
    assert_eq!(rho.ncols(), m, "square matrix required");
    let mut emb = DMatrix::<f64>::zeros(2 * m, 2 * m);
    for i in 0..m {
        for j in 0..m {
            let z = rho[(i, j)];
            emb[(i, j)] = z.re;
            emb[(i, j + m)] = -z.im;
            emb[(i + m, j)] = z.im;
            emb[(i + m, j + m)] = z.re;
        }
    }
    let mut ev: Vec<f64> = nalgebra::SymmetricEigen::new(emb).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
    (0..m).map(|i| 0.5 * (ev[2 * i] + ev[2 * i + 1])).collect()
}

/// Entanglement of formation of a pure joint state, in bits: the von
/// Neumann entropy of the transmon reduced operator. Ranges over
/// [0, log₂ 7].
pub fn entanglement_of_formation(psi: &[C64]) -> Result<f64> {
    let rho = transmon_reduced(psi)?;
    let s: f64 = hermitian_eigenvalues(&rho)
        .iter()
        .map(|&l| if l > 0.0 { -l * l.log2() } else { 0.0 })
        .sum();
    Ok(s.clamp(0.0, (N_TR as f64).log2()))
}

/// Infidelity of the best product approximation with both factors free:
/// 1 − λ_max of the transmon reduced operator (the largest Schmidt weight).
/// For an eigenstate this reduces to one minus its largest squared bare
/// level weight.
pub fn best_product_infidelity(psi: &[C64]) -> Result<f64> {
    let rho = transmon_reduced(psi)?;
    let lmax = hermitian_eigenvalues(&rho)[0];
    Ok((1.0 - lmax).max(0.0))
}

/// Transmon factor of a product approximation at lab-frame time t: level
/// k+l rotates as e^{−i l ω_r t}, so the factor is periodic with 2π/ω_r and
/// stays phase-locked to the resonator rotation e^{−iω_r t} of the
/// amplitude profile's center. `w_r` is the lab resonator frequency in
/// rad/ns.
pub fn transmon_lab_frame_state(product: &ProductApprox, w_r: f64, t: f64) -> [C64; N_TR] {
    let mut out = product.transmon_amps;
    for (j, amp) in out.iter_mut().enumerate() {
        let l = j as f64 - product.ladder as f64;
        *amp *= C64::from_polar(1.0, -l * w_r * t);
    }
    out
}
