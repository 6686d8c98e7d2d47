//! Dressed coherent, sheared-Gaussian, and squeezed states on a single
//! eigenladder, plus the fidelity, quadrature, and Husimi-Q analysis built
//! on them.
//!
//! Within one ladder the eigenindex n behaves exactly like a harmonic Fock
//! index (the dressed lowering operator ā has elements √(n+1)), so state
//! construction happens on ladder amplitudes and is mapped through the basis
//! at the end.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::spectrum::DressedBasis;

/// Sheared-Gaussian parameters: center `beta`, shear K = q|β|² (`shear`),
/// relative number variance W = σ_n²/|β|² (`width`), ladder index.
#[derive(Debug, Clone, Copy)]
pub struct ShearedParams {
    pub beta: C64,
    pub shear: f64,
    pub width: f64,
    pub ladder: usize,
}

impl ShearedParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0) {
            return Err(Error::InvalidParam(format!("width W must be > 0, got {}", self.width)));
        }
        if self.beta.norm_sqr() < 1e-9 {
            return Err(Error::InvalidParam("sheared form needs |beta|^2 > 0".into()));
        }
        Ok(())
    }

    /// Normalization of the closed-form amplitudes holds to 1e-5 above this.
    pub fn normalization_guaranteed(&self) -> bool {
        self.beta.norm_sqr() > (20.0 * self.width).max(1.0 / self.width)
    }
}

/// Squeezed state in the standard optical convention: displacement `beta`,
/// squeeze magnitude `r` >= 0 and angle `theta` (ξ = r·e^{iθ}). The minimum
/// quadrature variance e^{−2r}/4 sits at quadrature angle θ/2.
#[derive(Debug, Clone, Copy)]
pub struct SqueezeOptical {
    pub beta: C64,
    pub r: f64,
    pub theta: f64,
}

/// Wrap an angle to (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut x = a.rem_euclid(std::f64::consts::TAU);
    if x > std::f64::consts::PI {
        x -= std::f64::consts::TAU;
    }
    x
}

/// Map sheared-Gaussian parameters to the equivalent minimum-uncertainty
/// squeezed state: S = 8K²W + (W + 1/W − 2)/2, r = arccosh(S+1)/2, and the
/// squeeze angle from the quadrature-variance extremum.
pub fn shear_to_squeeze(params: &ShearedParams) -> SqueezeOptical {
    let k = params.shear;
    let w = params.width;
    let s = 8.0 * k * k * w + (w + 1.0 / w - 2.0) / 2.0;
    let sp1 = s + 1.0;
    let r = 0.5 * (sp1 + (sp1 * sp1 - 1.0).max(0.0).sqrt()).ln();
    let theta = wrap_angle(
        2.0 * params.beta.arg() + f64::atan2(8.0 * k * w, 16.0 * k * k * w - w + 1.0 / w),
    );
    SqueezeOptical { beta: params.beta, r, theta }
}

/// Coherent ladder amplitudes e^{−|α|²/2} αⁿ/√n!.
pub fn coherent_ladder_amps(alpha: C64, n_res: usize) -> Result<Vec<C64>> {
    let a0 = (-alpha.norm_sqr() / 2.0).exp();
    if a0 == 0.0 {
        return Err(Error::InvalidParam(format!(
            "coherent amplitude underflow at |alpha|^2 = {:.1}",
            alpha.norm_sqr()
        )));
    }
    let mut c = vec![C64::ZERO; n_res];
    c[0] = C64::new(a0, 0.0);
    for n in 0..n_res - 1 {
        c[n + 1] = c[n] * alpha / ((n + 1) as f64).sqrt();
    }
    Ok(c)
}

/// Dressed coherent state |α⟩_k over the full bare basis.
pub fn make_dressed_coherent(basis: &DressedBasis, alpha: C64, k: usize) -> Result<Vec<C64>> {
    let n_res = basis.n_res();
    if alpha.norm_sqr() >= n_res as f64 / 2.0 {
        return Err(Error::InvalidParam(format!(
            "|alpha|^2 = {:.1} exceeds truncation headroom N/2 = {}",
            alpha.norm_sqr(),
            n_res / 2
        )));
    }
    let mut c = coherent_ladder_amps(alpha, n_res)?;
    let norm2: f64 = c.iter().map(|a| a.norm_sqr()).sum();
    let scale = 1.0 / norm2.sqrt();
    for a in &mut c {
        *a *= scale;
    }
    Ok(basis.state_from_ladder(&c, k))
}

/// Sheared-Gaussian ladder amplitudes: Gaussian in n of variance W|β|²
/// centered at |β|², linear phase n·arg β, quadratic phase −K(n−|β|²)²/|β|².
pub fn sheared_ladder_amps(params: &ShearedParams, n_res: usize) -> Result<Vec<C64>> {
    params.validate()?;
    let nbar = params.beta.norm_sqr();
    let w = params.width;
    // keep a 7σ tail inside the basis
    if nbar + 7.0 * (w * nbar).sqrt() > (n_res - 1) as f64 {
        return Err(Error::InvalidParam(format!(
            "sheared Gaussian at |beta|^2 = {nbar:.1}, W = {w} does not fit N = {n_res}"
        )));
    }
    let argb = params.beta.arg();
    let pref = 1.0 / (std::f64::consts::TAU * w * nbar).powf(0.25);
    let mut c = vec![C64::ZERO; n_res];
    for (n, cn) in c.iter_mut().enumerate() {
        let d = n as f64 - nbar;
        let mag = pref * (-d * d / (4.0 * w * nbar)).exp();
        let phase = n as f64 * argb - params.shear * d * d / nbar;
        *cn = C64::from_polar(mag, phase);
    }
    if !params.normalization_guaranteed() {
        let norm2: f64 = c.iter().map(|a| a.norm_sqr()).sum();
        let scale = 1.0 / norm2.sqrt();
        for a in &mut c {
            *a *= scale;
        }
    }
    Ok(c)
}

/// Dressed sheared-Gaussian state over the full bare basis.
pub fn make_sheared_gaussian(basis: &DressedBasis, params: &ShearedParams) -> Result<Vec<C64>> {
    let c = sheared_ladder_amps(params, basis.n_res())?;
    Ok(basis.state_from_ladder(&c, params.ladder))
}

/// Squeezed-coherent ladder amplitudes from the closed Hermite-polynomial
/// form, evaluated by a scaled recurrence that stays finite for r → 0:
/// h_{n+1} = [2(γ/2cosh r)·h_n − 2√n (e^{iθ}tanh r/2)·h_{n−1}]/√(n+1).
pub fn squeezed_ladder_amps(opt: &SqueezeOptical, n_res: usize) -> Result<Vec<C64>> {
    if opt.r < 0.0 {
        return Err(Error::InvalidParam(format!("squeeze magnitude r must be >= 0, got {}", opt.r)));
    }
    let load = opt.beta.norm_sqr() + opt.r.sinh().powi(2);
    // keep a stretched 7σ tail inside the basis
    if load + 7.0 * opt.r.exp() * (load + 1.0).sqrt() > (n_res - 1) as f64 {
        return Err(Error::InvalidParam(format!(
            "squeezed state at |beta|^2 + sinh^2 r = {load:.1} does not fit N = {n_res}"
        )));
    }
    let eith = C64::from_polar(1.0, opt.theta);
    let s2 = 0.5 * opt.r.tanh() * eith;
    let sz = (opt.beta * opt.r.cosh() + opt.beta.conj() * opt.r.sinh() * eith)
        / (2.0 * opt.r.cosh());
    let expo = -0.5 * (C64::new(opt.beta.norm_sqr(), 0.0)
        + opt.beta.conj() * opt.beta.conj() * opt.r.tanh() * eith);
    if expo.re < -700.0 {
        return Err(Error::InvalidParam("squeezed amplitude underflow; reduce |beta|".into()));
    }
    let c0 = expo.exp() / opt.r.cosh().sqrt();
    let mut c = vec![C64::ZERO; n_res];
    c[0] = c0;
    if n_res > 1 {
        c[1] = 2.0 * sz * c[0];
    }
    for n in 1..n_res - 1 {
        c[n + 1] = (2.0 * sz * c[n] - 2.0 * (n as f64).sqrt() * s2 * c[n - 1])
            / ((n + 1) as f64).sqrt();
    }
    let norm2: f64 = c.iter().map(|a| a.norm_sqr()).sum();
    if !(norm2 > 0.0) || !norm2.is_finite() {
        return Err(Error::ModelInvalid(format!("squeezed amplitudes degenerate, norm^2 = {norm2}")));
    }
    let scale = 1.0 / norm2.sqrt();
    for a in &mut c {
        *a *= scale;
    }
    Ok(c)
}

/// Dressed squeezed state over the full bare basis.
pub fn make_dressed_squeezed(
    basis: &DressedBasis,
    opt: &SqueezeOptical,
    k: usize,
) -> Result<Vec<C64>> {
    let c = squeezed_ladder_amps(opt, basis.n_res())?;
    Ok(basis.state_from_ladder(&c, k))
}

/// First and second moments of the ladder lowering operator on amplitudes c:
/// norm², ⟨n⟩, ⟨n²⟩, ⟨ā⟩, ⟨ā²⟩ (moments normalized by norm²).
#[derive(Debug, Clone, Copy)]
pub struct LadderMoments {
    pub norm2: f64,
    pub n1: f64,
    pub n2: f64,
    pub abar: C64,
    pub a2: C64,
}

pub fn ladder_moments(c: &[C64]) -> LadderMoments {
    let mut norm2 = 0.0;
    let mut n1 = 0.0;
    let mut n2 = 0.0;
    let mut abar = C64::ZERO;
    let mut a2 = C64::ZERO;
    for (n, cn) in c.iter().enumerate() {
        let p = cn.norm_sqr();
        norm2 += p;
        n1 += n as f64 * p;
        n2 += (n * n) as f64 * p;
        if n + 1 < c.len() {
            abar += cn.conj() * c[n + 1] * ((n + 1) as f64).sqrt();
        }
        if n + 2 < c.len() {
            a2 += cn.conj() * c[n + 2] * (((n + 1) * (n + 2)) as f64).sqrt();
        }
    }
    if norm2 > 0.0 {
        n1 /= norm2;
        n2 /= norm2;
        abar /= norm2;
        a2 /= norm2;
    }
    LadderMoments { norm2, n1, n2, abar, a2 }
}

/// Quadrature variance of ladder amplitudes at angle φ for
/// X_φ = (ā e^{−iφ} + ā† e^{iφ})/2.
pub fn quadrature_variance_amps(c: &[C64], phi: f64) -> f64 {
    let m = ladder_moments(c);
    let rot = C64::from_polar(1.0, -phi);
    0.25 + 0.5 * m.n1 + 0.5 * (m.a2 * rot * rot).re - (m.abar * rot).re.powi(2)
}

/// Quadrature variance of the ladder-k component of a full state.
pub fn quadrature_variance(psi: &[C64], phi: f64, basis: &DressedBasis, k: usize) -> f64 {
    let mut c = basis.ladder_coeffs(psi, k);
    let norm2: f64 = c.iter().map(|a| a.norm_sqr()).sum();
    if norm2 > 0.0 {
        let s = 1.0 / norm2.sqrt();
        for a in &mut c {
            *a *= s;
        }
    }
    quadrature_variance_amps(&c, phi)
}

/// Split a state into its ladder-k part and the orthogonal rest:
/// psi = √(1−P_stray)·psi_k + √P_stray·psi_perp with both parts normalized.
pub fn split_state(psi: &[C64], k: usize, basis: &DressedBasis) -> (f64, Vec<C64>, Vec<C64>) {
    let c = basis.ladder_coeffs(psi, k);
    let psi_k_raw = basis.state_from_ladder(&c, k);
    let in_k: f64 = psi_k_raw.iter().map(|a| a.norm_sqr()).sum();
    let total: f64 = psi.iter().map(|a| a.norm_sqr()).sum();
    let p_stray = (total - in_k).max(0.0);
    let mut psi_k = psi_k_raw.clone();
    if in_k > 0.0 {
        let s = 1.0 / in_k.sqrt();
        for a in &mut psi_k {
            *a *= s;
        }
    }
    let mut psi_perp: Vec<C64> = psi.iter().zip(&psi_k_raw).map(|(a, b)| a - b).collect();
    let perp_norm2: f64 = psi_perp.iter().map(|a| a.norm_sqr()).sum();
    if perp_norm2 > 1e-300 {
        let s = 1.0 / perp_norm2.sqrt();
        for a in &mut psi_perp {
            *a *= s;
        }
    } else {
        psi_perp.fill(C64::ZERO);
    }
    (p_stray, psi_k, psi_perp)
}

/// Result of a coherent-state fit: fidelity, optimal α, optimizer status.
#[derive(Debug, Clone, Copy)]
pub struct CoherentFit {
    pub fidelity: f64,
    pub alpha: C64,
    pub converged: bool,
}

// |⟨α|c⟩|² against coherent amplitudes, without renormalizing c.
fn coherent_overlap2(c: &[C64], alpha: C64) -> f64 {
    match coherent_ladder_amps(alpha, c.len()) {
        Ok(a) => {
            let ov: C64 = a.iter().zip(c).map(|(x, y)| x.conj() * y).sum();
            ov.norm_sqr()
        }
        Err(_) => 0.0,
    }
}

/// Derivative-free 2-D Nelder-Mead minimizer. Returns best point, value,
/// and whether the simplex spread met `ftol` within `max_eval` calls.
fn nelder_mead_2d<F: FnMut(f64, f64) -> f64>(
    mut f: F,
    x0: f64,
    y0: f64,
    scale: f64,
    max_eval: usize,
    ftol: f64,
) -> (f64, f64, f64, bool) {
    let mut pts = [[x0, y0], [x0 + scale, y0], [x0, y0 + scale]];
    let mut vals = [f(pts[0][0], pts[0][1]), f(pts[1][0], pts[1][1]), f(pts[2][0], pts[2][1])];
    let mut evals = 3;
    let mut converged = false;
    while evals < max_eval {
        let mut order = [0, 1, 2];
        order.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap());
        let (b, m, w) = (order[0], order[1], order[2]);
        if (vals[w] - vals[b]).abs() < ftol {
            converged = true;
            break;
        }
        let cx = (pts[b][0] + pts[m][0]) / 2.0;
        let cy = (pts[b][1] + pts[m][1]) / 2.0;
        let rx = cx + (cx - pts[w][0]);
        let ry = cy + (cy - pts[w][1]);
        let fr = f(rx, ry);
        evals += 1;
        if fr < vals[b] {
            let ex = cx + 2.0 * (cx - pts[w][0]);
            let ey = cy + 2.0 * (cy - pts[w][1]);
            let fe = f(ex, ey);
            evals += 1;
            if fe < fr {
                pts[w] = [ex, ey];
                vals[w] = fe;
            } else {
                pts[w] = [rx, ry];
                vals[w] = fr;
            }
        } else if fr < vals[m] {
            pts[w] = [rx, ry];
            vals[w] = fr;
        } else {
            let (sx, sy, fs) = if fr < vals[w] {
                let x = cx + 0.5 * (rx - cx);
                let y = cy + 0.5 * (ry - cy);
                let v = f(x, y);
                (x, y, v)
            } else {
                let x = cx + 0.5 * (pts[w][0] - cx);
                let y = cy + 0.5 * (pts[w][1] - cy);
                let v = f(x, y);
                (x, y, v)
            };
            evals += 1;
            if fs < vals[w].min(fr) {
                pts[w] = [sx, sy];
                vals[w] = fs;
            } else {
                // shrink toward best
                for i in [m, w] {
                    pts[i] = [
                        pts[b][0] + 0.5 * (pts[i][0] - pts[b][0]),
                        pts[b][1] + 0.5 * (pts[i][1] - pts[b][1]),
                    ];
                    vals[i] = f(pts[i][0], pts[i][1]);
                    evals += 1;
                }
            }
        }
    }
    let mut best = 0;
    for i in 1..3 {
        if vals[i] < vals[best] {
            best = i;
        }
    }
    (pts[best][0], pts[best][1], vals[best], converged)
}

fn polish_coherent_fit(c: &[C64], seed: C64) -> CoherentFit {
    let f_seed = coherent_overlap2(c, seed);
    let scale = (0.05 * seed.norm()).max(0.25);
    let (x, y, neg_f, converged) = nelder_mead_2d(
        |x, y| -coherent_overlap2(c, C64::new(x, y)),
        seed.re,
        seed.im,
        scale,
        200,
        1e-10,
    );
    let f_opt = -neg_f;
    if f_opt >= f_seed {
        CoherentFit { fidelity: f_opt, alpha: C64::new(x, y), converged }
    } else {
        CoherentFit { fidelity: f_seed, alpha: seed, converged: false }
    }
}

/// Best dressed-coherent-state description of the full state: maximizes
/// F = |⟨ψ|α⟩_k|² over α starting from the ⟨ā⟩ seed. Stray population
/// outside ladder k counts as infidelity.
pub fn fidelity_dressed_coherent(psi: &[C64], k: usize, basis: &DressedBasis) -> CoherentFit {
    let c = basis.ladder_coeffs(psi, k);
    // The weight of the ladder component scales F but not the optimal α,
    // so the normalized first moment is the right seed at any weight.
    let m = ladder_moments(&c);
    polish_coherent_fit(&c, m.abar)
}

/// Best bare-basis coherent-state description at fixed bare transmon index k.
pub fn fidelity_bare_coherent(psi: &[C64], k: usize, n_res: usize) -> CoherentFit {
    let c: Vec<C64> = (0..n_res).map(|n| psi[crate::model::flat(n, k)]).collect();
    let m = ladder_moments(&c);
    polish_coherent_fit(&c, m.abar)
}

/// |⟨β,ξ|ψ⟩_k|² against the constructed dressed squeezed state.
pub fn fidelity_dressed_squeezed(
    psi: &[C64],
    opt: &SqueezeOptical,
    k: usize,
    basis: &DressedBasis,
) -> Result<f64> {
    let c = basis.ladder_coeffs(psi, k);
    let s = squeezed_ladder_amps(opt, basis.n_res())?;
    let ov: C64 = s.iter().zip(&c).map(|(x, y)| x.conj() * y).sum();
    Ok(ov.norm_sqr())
}

/// Square grid in the α plane for Q-function evaluation, row-major with the
/// real axis fastest.
#[derive(Debug, Clone, Copy)]
pub struct QGrid {
    pub center: C64,
    pub half_width: f64,
    pub n: usize,
}

impl QGrid {
    pub fn axis(&self, idx: usize, imag: bool) -> f64 {
        let c = if imag { self.center.im } else { self.center.re };
        if self.n < 2 {
            return c;
        }
        c - self.half_width + 2.0 * self.half_width * idx as f64 / (self.n - 1) as f64
    }

    pub fn cell_area(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let d = 2.0 * self.half_width / (self.n - 1) as f64;
        d * d
    }
}

/// Default window: centered on ⟨ā⟩ with half-width growing with the squeeze.
pub fn default_qgrid(center: C64, r: f64) -> QGrid {
    QGrid { center, half_width: 4.0 + 4.0 * f64::max(1.0, r.exp()) / 2.0, n: 201 }
}

/// Contour levels used for Q-function plots: 0.1/π … 0.8/π.
pub fn q_contour_levels() -> Vec<f64> {
    (1..=8).map(|i| i as f64 * 0.1 / std::f64::consts::PI).collect()
}

/// Husimi Q(α) = |⟨α|ψ⟩_k|²/π over the grid (row-major, re fastest).
pub fn husimi_q(psi: &[C64], k: usize, basis: &DressedBasis, grid: &QGrid) -> Vec<f64> {
    let c = basis.ladder_coeffs(psi, k);
    husimi_q_amps(&c, grid)
}

/// Q-function directly on ladder amplitudes.
pub fn husimi_q_amps(c: &[C64], grid: &QGrid) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.n * grid.n);
    for iy in 0..grid.n {
        let im = grid.axis(iy, true);
        for ix in 0..grid.n {
            let re = grid.axis(ix, false);
            let alpha = C64::new(re, im);
            out.push(coherent_overlap2(c, alpha) / std::f64::consts::PI);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{flat, SystemParams};
    use crate::spectrum::resonant_drive_frequency;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn test_basis(n_res: usize) -> DressedBasis {
        let mut p = SystemParams::default_with(n_res);
        p.f_d = resonant_drive_frequency(&p, 0).unwrap();
        DressedBasis::diagonalize(&p).unwrap()
    }

    #[test]
    fn coherent_alpha_zero_is_ladder_ground() {
        let b = test_basis(10);
        let psi = make_dressed_coherent(&b, C64::ZERO, 2).unwrap();
        let coeff = b.to_eigen(&psi);
        assert!((coeff[flat(0, 2)].norm() - 1.0).abs() < 1e-12);
        let rest: f64 = coeff
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != flat(0, 2))
            .map(|(_, a)| a.norm_sqr())
            .sum();
        assert!(rest < 1e-20);
    }

    #[test]
    fn coherent_is_lowering_eigenvector() {
        let b = test_basis(40);
        let alpha = C64::new(1.5, -0.8);
        let psi = make_dressed_coherent(&b, alpha, 0).unwrap();
        let c = b.ladder_coeffs(&psi, 0);
        // (ā c)_n = √(n+1) c_{n+1}
        let mut resid = 0.0;
        for n in 0..c.len() - 1 {
            resid += (((n + 1) as f64).sqrt() * c[n + 1] - alpha * c[n]).norm_sqr();
        }
        assert!(resid.sqrt() < 1e-10, "lowering residual {resid:.3e}");
        let m = ladder_moments(&c);
        assert!((m.abar - alpha).norm() < 1e-10);
        let var = m.n2 - m.n1 * m.n1;
        assert!((var - alpha.norm_sqr()).abs() < 1e-8, "Poisson variance {var}");
    }

    #[test]
    fn coherent_headroom_is_enforced() {
        let b = test_basis(10);
        assert!(make_dressed_coherent(&b, C64::new(2.3, 0.0), 0).is_err());
    }

    #[test]
    fn sheared_unit_width_matches_coherent() {
        let n_res = 180;
        let beta = C64::new(10.0, 0.0);
        let p = ShearedParams { beta, shear: 0.0, width: 1.0, ladder: 0 };
        let c = sheared_ladder_amps(&p, n_res).unwrap();
        let a = coherent_ladder_amps(beta, n_res).unwrap();
        let ov: C64 = a.iter().zip(&c).map(|(x, y)| x.conj() * y).sum();
        assert!(ov.norm_sqr() > 0.999, "overlap² = {}", ov.norm_sqr());
    }

    #[test]
    fn sheared_number_variance_is_w_nbar() {
        let p = ShearedParams { beta: C64::new(20.0, 0.0), shear: 0.3, width: 0.8, ladder: 0 };
        let c = sheared_ladder_amps(&p, 560).unwrap();
        let m = ladder_moments(&c);
        let var = m.n2 - m.n1 * m.n1;
        assert!((var / (0.8 * 400.0) - 1.0).abs() < 1e-3, "variance {var}");
        assert!((m.n1 / 400.0 - 1.0).abs() < 1e-4, "mean {}", m.n1);
    }

    #[test]
    fn sheared_norm_deficit_small_when_guaranteed() {
        let p = ShearedParams {
            beta: C64::from_polar(10.0, 0.7),
            shear: 0.4,
            width: 1.3,
            ladder: 0,
        };
        assert!(p.normalization_guaranteed());
        let c = sheared_ladder_amps(&p, 200).unwrap();
        let norm2: f64 = c.iter().map(|a| a.norm_sqr()).sum();
        assert!((norm2 - 1.0).abs() < 1e-5, "deficit {:.2e}", (norm2 - 1.0).abs());
    }

    #[test]
    fn sheared_amp_ratio_phase() {
        let nbar = 225.0f64;
        let argb = 0.35;
        let kk = 0.4;
        let p = ShearedParams {
            beta: C64::from_polar(nbar.sqrt(), argb),
            shear: kk,
            width: 1.0,
            ladder: 0,
        };
        let c = sheared_ladder_amps(&p, 340).unwrap();
        let n = 225usize;
        let ratio = c[n + 1] / c[n];
        assert!((ratio.arg() - (argb - kk / nbar)).abs() < 1e-12);
        // quadratic phase: slope of the correction doubles per step offset
        let m = 5usize;
        let ratio_m = c[n + m + 1] / c[n + m];
        let want = argb - kk * (2.0 * m as f64 + 1.0) / nbar;
        assert!((ratio_m.arg() - want).abs() < 1e-12);
    }

    #[test]
    fn sheared_moments_match_expansion() {
        let nbar = 400.0f64;
        let (kk, w) = (0.2, 0.8);
        let beta = C64::from_polar(nbar.sqrt(), -0.3);
        let p = ShearedParams { beta, shear: kk, width: w, ladder: 0 };
        let c = sheared_ladder_amps(&p, 560).unwrap();
        let m = ladder_moments(&c);
        let tol = 2.0 / nbar.sqrt();
        let abar_want = beta + (2.0 - w - 1.0 / w) / (8.0 * beta.conj())
            - C64::i() * kk * w / beta.conj()
            - 2.0 * kk * kk * w / beta.conj();
        assert!(
            (m.abar - abar_want).norm() / beta.norm() < tol,
            "⟨ā⟩ = {} vs {}",
            m.abar,
            abar_want
        );
        let a2_want = beta * beta
            * (C64::ONE
                + C64::new(0.5 - 0.5 / w - 8.0 * kk * kk * w, -4.0 * kk * w) / nbar);
        assert!(
            (m.a2 - a2_want).norm() / nbar < tol,
            "⟨ā²⟩ = {} vs {}",
            m.a2,
            a2_want
        );
    }

    #[test]
    fn quadrature_sinusoid_extrema_and_area() {
        let p = ShearedParams {
            beta: C64::from_polar(15.0, 0.4),
            shear: 0.25,
            width: 0.7,
            ladder: 0,
        };
        let c = sheared_ladder_amps(&p, 340).unwrap();
        let sq = shear_to_squeeze(&p);
        // period π
        for phi in [0.13, 1.1, 2.7] {
            let d = quadrature_variance_amps(&c, phi + std::f64::consts::PI)
                - quadrature_variance_amps(&c, phi);
            assert!(d.abs() < 1e-12);
        }
        // numeric minimum sits at θ/2 (mod π), up to O(1/|β|) corrections
        // beyond leading order (measured offset ~2e-3 at |β| = 15)
        let mut best_phi = 0.0;
        let mut best = f64::INFINITY;
        let grid = 20000;
        for i in 0..grid {
            let phi = std::f64::consts::PI * i as f64 / grid as f64;
            let v = quadrature_variance_amps(&c, phi);
            if v < best {
                best = v;
                best_phi = phi;
            }
        }
        let want = (sq.theta / 2.0).rem_euclid(std::f64::consts::PI);
        let d = (best_phi - want).rem_euclid(std::f64::consts::PI);
        let diff = d.min(std::f64::consts::PI - d);
        assert!(diff < 6e-3, "min at {best_phi}, conversion says {want}");
        // min·max ≈ 1/16 up to 1/|β| corrections
        let vmax = quadrature_variance_amps(&c, best_phi + std::f64::consts::PI / 2.0);
        assert!((16.0 * best * vmax - 1.0).abs() < 0.05, "area {}", 16.0 * best * vmax);
        // and the converted r reproduces the variance ratio
        assert!((best / 0.25 - (-2.0 * sq.r).exp()).abs() < 0.02);
    }

    #[test]
    fn shear_to_squeeze_anchors() {
        let id = ShearedParams { beta: C64::new(9.0, 3.0), shear: 0.0, width: 1.0, ladder: 0 };
        let s = shear_to_squeeze(&id);
        assert!(s.r.abs() < 1e-12);
        let amp = ShearedParams { beta: C64::from_polar(8.0, 0.6), shear: 0.0, width: 0.8, ladder: 0 };
        let s = shear_to_squeeze(&amp);
        assert!((wrap_angle(s.theta - 2.0 * 0.6)).abs() < 1e-12, "theta {}", s.theta);
        // r = 0.550 corresponds to variance ratios 0.333 and 3.00
        let r = 0.550f64;
        assert!(((-2.0 * r).exp() - 0.333).abs() < 1e-3);
        assert!(((2.0 * r).exp() - 3.00).abs() < 5e-3);
    }

    #[test]
    fn squeezed_r0_is_coherent() {
        let beta = C64::new(2.0, -1.0);
        let sq = squeezed_ladder_amps(&SqueezeOptical { beta, r: 0.0, theta: 0.4 }, 60).unwrap();
        let co = coherent_ladder_amps(beta, 60).unwrap();
        for (a, b) in sq.iter().zip(&co) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn squeezed_vacuum_parity() {
        let sq =
            squeezed_ladder_amps(&SqueezeOptical { beta: C64::ZERO, r: 0.6, theta: -0.9 }, 40)
                .unwrap();
        for n in (1..40).step_by(2) {
            assert!(sq[n].norm() < 1e-15, "odd amplitude {n} = {}", sq[n]);
        }
        assert!(sq[2].norm() > 0.1);
    }

    #[test]
    fn squeezed_quadrature_variances() {
        let (r, theta) = (0.45, 0.9);
        let opt = SqueezeOptical { beta: C64::from_polar(3.0, -0.2), r, theta };
        let c = squeezed_ladder_amps(&opt, 80).unwrap();
        let vmin = quadrature_variance_amps(&c, theta / 2.0);
        let vmax = quadrature_variance_amps(&c, theta / 2.0 + std::f64::consts::PI / 2.0);
        assert!((vmin - 0.25 * (-2.0 * r).exp()).abs() < 1e-8, "σ²min {vmin}");
        assert!((vmax - 0.25 * (2.0 * r).exp()).abs() < 1e-8, "σ²max {vmax}");
        let m = ladder_moments(&c);
        assert!((m.n1 - (9.0 + r.sinh().powi(2))).abs() < 1e-8);
    }

    // e^A·v by scaling and squaring with a Taylor inner loop; oracle only.
    fn expm_vec(a: &DMatrix<C64>, v: &DVector<C64>) -> DVector<C64> {
        let norm1 = a
            .column_iter()
            .map(|col| col.iter().map(|x| x.norm()).sum::<f64>())
            .fold(0.0, f64::max);
        let s = norm1.log2().ceil().max(0.0) as u32;
        let m = 2u64.pow(s);
        let b = a.map(|x| x / m as f64);
        let mut out = v.clone();
        for _ in 0..m {
            let mut term = out.clone();
            let mut acc = out.clone();
            for j in 1..200 {
                term = (&b * &term) / C64::new(j as f64, 0.0);
                acc += &term;
                if term.norm() < 1e-18 * acc.norm() {
                    break;
                }
            }
            out = acc;
        }
        out
    }

    #[test]
    fn squeezed_matches_operator_oracle() {
        let n = 60;
        let beta = C64::new(2.0, 1.0);
        let (r, theta) = (0.5, -0.7);
        let xi = C64::from_polar(r, theta);
        let mut low = DMatrix::<C64>::zeros(n, n);
        for m in 1..n {
            low[(m - 1, m)] = C64::new((m as f64).sqrt(), 0.0);
        }
        let raise = low.adjoint();
        let disp = &raise * beta - &low * beta.conj();
        let sq = (&low * &low) * (xi.conj() / 2.0) - (&raise * &raise) * (xi / 2.0);
        let mut v = DVector::<C64>::zeros(n);
        v[0] = C64::ONE;
        let v = expm_vec(&sq, &v);
        let v = expm_vec(&disp, &v);
        let amps = squeezed_ladder_amps(&SqueezeOptical { beta, r, theta }, n).unwrap();
        // absolute agreement everywhere; relative agreement away from the
        // far tail, where the forward recurrence loses relative precision
        // (populations there are ~1e-13, so ~1e-7 absolute is benign)
        for i in 0..n {
            let d = (v[i] - amps[i]).norm();
            assert!(d < 5e-7, "component {i}: oracle {} vs closed form {}", v[i], amps[i]);
            if amps[i].norm() > 1e-3 {
                assert!(d / amps[i].norm() < 1e-9, "relative error at {i}: {d:.2e}");
            }
        }
        let ov: C64 = v.iter().zip(&amps).map(|(x, y)| x.conj() * y).sum();
        assert!(ov.norm_sqr() > 1.0 - 1e-12, "oracle overlap {}", ov.norm_sqr());
    }

    fn roundtrip_infidelity(nbar: f64, shear: f64, width: f64, n_res: usize) -> f64 {
        let p = ShearedParams {
            beta: C64::from_polar(nbar.sqrt(), 0.3),
            shear,
            width,
            ladder: 0,
        };
        let sheared = sheared_ladder_amps(&p, n_res).unwrap();
        let sq = shear_to_squeeze(&p);
        let squeezed = squeezed_ladder_amps(&sq, n_res).unwrap();
        let ov: C64 = squeezed.iter().zip(&sheared).map(|(x, y)| x.conj() * y).sum();
        1.0 - ov.norm_sqr()
    }

    #[test]
    fn roundtrip_shear_squeeze_fidelity() {
        // the conversion keeps β while the sheared state's true center is
        // displaced by O(KW/|β|), so the residual infidelity scales like
        // C·K²/n̄ with C ≈ 5; the 1e-3 bound needs |K/β|√W well below 0.05
        assert!(0.1 / 10.0 * 0.8f64.sqrt() < 0.05);
        let tight = roundtrip_infidelity(100.0, 0.1, 0.8, 240);
        assert!(tight < 1e-3, "round-trip infidelity {tight}");
        // nearer the |K/β|√W = 0.05 onset the agreement degrades gracefully
        let edge = roundtrip_infidelity(100.0, 0.3, 0.8, 260);
        assert!(edge < 1e-2, "edge infidelity {edge}");
        assert!(edge > tight);
    }

    #[test]
    fn split_state_reconstructs() {
        let b = test_basis(20);
        let pure = make_dressed_coherent(&b, C64::new(1.2, 0.4), 1).unwrap();
        let (p0, _, _) = split_state(&pure, 1, &b);
        assert!(p0 < 1e-14);
        // equal two-ladder superposition
        let alpha = C64::new(1.0, 0.0);
        let a = make_dressed_coherent(&b, alpha, 0).unwrap();
        let bst = make_dressed_coherent(&b, alpha, 3).unwrap();
        let psi: Vec<C64> = a
            .iter()
            .zip(&bst)
            .map(|(x, y)| (x + y) / C64::new(2f64.sqrt(), 0.0))
            .collect();
        let (p, psi_k, psi_perp) = split_state(&psi, 0, &b);
        assert!((p - 0.5).abs() < 1e-12);
        for i in 0..psi.len() {
            let rec = psi_k[i] * C64::new((1.0 - p).sqrt(), 0.0)
                + psi_perp[i] * C64::new(p.sqrt(), 0.0);
            assert!((rec - psi[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn fidelity_coherent_self_is_one() {
        let b = test_basis(40);
        let alpha = C64::new(2.0, 1.0);
        let psi = make_dressed_coherent(&b, alpha, 0).unwrap();
        let fit = fidelity_dressed_coherent(&psi, 0, &b);
        assert!(fit.fidelity > 1.0 - 1e-10, "F = {}", fit.fidelity);
        assert!((fit.alpha - alpha).norm() < 1e-4);
    }

    #[test]
    fn fidelity_fock_interior_optimum() {
        let b = test_basis(30);
        let mut coeff = vec![C64::ZERO; b.dim()];
        coeff[flat(4, 0)] = C64::ONE;
        let psi = b.from_eigen(&coeff);
        // 1-D oracle scan over |α| (phase is irrelevant for a Fock state)
        let mut best = 0.0f64;
        for i in 1..4000 {
            let a = 4.0 * i as f64 / 4000.0;
            let c = coherent_ladder_amps(C64::new(a, 0.0), 30).unwrap();
            let f = c[4].norm_sqr();
            best = best.max(f);
        }
        let want = (4.0f64.powi(4) * (-4.0f64).exp() / 24.0).min(1.0);
        assert!((best - want).abs() < 1e-4, "scan {best} vs analytic {want}");
        let fit = fidelity_dressed_coherent(&psi, 0, &b);
        assert!(
            (fit.fidelity - want).abs() < 1e-3,
            "optimizer found {} vs {}",
            fit.fidelity,
            want
        );
    }

    #[test]
    fn fidelity_squeezed_self_and_r0() {
        let b = test_basis(40);
        let opt = SqueezeOptical { beta: C64::new(1.5, -0.5), r: 0.3, theta: 0.8 };
        let psi = make_dressed_squeezed(&b, &opt, 1).unwrap();
        let f = fidelity_dressed_squeezed(&psi, &opt, 1, &b).unwrap();
        assert!(f > 1.0 - 1e-10);
        let co = SqueezeOptical { beta: C64::new(1.5, -0.5), r: 0.0, theta: 0.0 };
        let psi_c = make_dressed_coherent(&b, co.beta, 1).unwrap();
        let f2 = fidelity_dressed_squeezed(&psi_c, &co, 1, &b).unwrap();
        let fit = fidelity_dressed_coherent(&psi_c, 1, &b);
        assert!((f2 - fit.fidelity).abs() < 1e-9);
    }

    #[test]
    fn husimi_gaussian_for_coherent() {
        let b = test_basis(40);
        let beta = C64::new(1.2, 0.7);
        let psi = make_dressed_coherent(&b, beta, 0).unwrap();
        let grid = QGrid { center: beta, half_width: 5.0, n: 101 };
        let q = husimi_q(&psi, 0, &b, &grid);
        let inv_pi = 1.0 / std::f64::consts::PI;
        let mut total = 0.0;
        for iy in 0..grid.n {
            for ix in 0..grid.n {
                let alpha = C64::new(grid.axis(ix, false), grid.axis(iy, true));
                let v = q[iy * grid.n + ix];
                let want = (-(alpha - beta).norm_sqr()).exp() * inv_pi;
                assert!((v - want).abs() < 1e-8);
                assert!(v <= inv_pi + 1e-12);
                total += v;
            }
        }
        total *= grid.cell_area();
        assert!((total - 1.0).abs() < 0.01, "∫Q = {total}");
    }

    proptest! {
        #[test]
        fn conversion_r_nonnegative_and_theta_is_minimum(
            kk in -2.0f64..2.0,
            w in 0.05f64..5.0,
            argb in -3.0f64..3.0,
        ) {
            let p = ShearedParams {
                beta: C64::from_polar(12.0, argb),
                shear: kk,
                width: w,
                ladder: 0,
            };
            let s = shear_to_squeeze(&p);
            prop_assert!(s.r >= 0.0 && s.r.is_finite());
            prop_assert!(s.theta > -std::f64::consts::PI - 1e-12);
            prop_assert!(s.theta <= std::f64::consts::PI + 1e-12);
            // analytic variance at θ/2 must be the minimum of the sinusoid
            let var = |phi: f64| {
                (w + 1.0 / w) / 8.0
                    + 2.0 * kk * kk * w
                    + kk * w * (2.0 * argb - 2.0 * phi).sin()
                    + ((w - 1.0 / w) / 8.0 - 2.0 * kk * kk * w) * (2.0 * argb - 2.0 * phi).cos()
            };
            let vmin = var(s.theta / 2.0);
            for i in 0..64 {
                let phi = std::f64::consts::PI * i as f64 / 64.0;
                prop_assert!(var(phi) >= vmin - 1e-9);
            }
            // analytic min·max product is exactly 1/16
            let vmax = var(s.theta / 2.0 + std::f64::consts::PI / 2.0);
            prop_assert!((16.0 * vmin * vmax - 1.0).abs() < 1e-9);
            // r matches the conversion: vmin = e^{−2r}/4
            prop_assert!((vmin - 0.25 * (-2.0 * s.r).exp()).abs() < 1e-9);
        }
    }
}
