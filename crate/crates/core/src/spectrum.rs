//! Drive-free spectrum organized into RWA strips and eigenladders.
//!
//! The drive-free rotating-frame Hamiltonian conserves n + k, so it splits
//! into strips of dimension ≤ 7 that are tridiagonal in the transmon index.
//! Within a strip the bare energies are strictly decreasing in k for
//! ω_r > ω_q, and the eigenvalue order matches the bare order, which turns
//! eigenvalue rank directly into the (n,k) label. Eigenvector signs are fixed
//! so the dominant bare amplitude of each ladder start is positive and the
//! overlap of consecutive ladder members stays positive.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{bare_energies, flat, SystemParams, N_TR, TWO_PI};

/// Per-eigenstate strip components. `comps[j]` is the amplitude on bare state
/// |n_Σ − k', k'⟩ with k' = kmin + j.
#[derive(Debug, Clone, Copy)]
struct StripVec {
    comps: [f64; N_TR],
}

/// Eigenladder bookkeeping for one SystemParams set.
///
/// `energies` are rotating-frame eigenvalues Ē_{n,k} indexed by flat = n·7+k;
/// the basis-change matrix U (columns = eigenvectors over the bare basis) is
/// kept in per-strip compressed form and can be materialized densely for
/// small truncations.
#[derive(Debug, Clone)]
pub struct DressedBasis {
    pub params: SystemParams,
    energies: Vec<f64>,
    vecs: Vec<StripVec>,
}

/// Strip coverage: range of transmon indices k' present in strip n_Σ.
pub fn strip_krange(n_sigma: usize, n_res: usize) -> (usize, usize) {
    let kmin = n_sigma.saturating_sub(n_res - 1);
    let kmax = n_sigma.min(N_TR - 1);
    (kmin, kmax)
}

/// Critical photon number n_c = (ω_r − ω_q)²/(4g²).
pub fn critical_photon_number(params: &SystemParams) -> Result<f64> {
    let delta = params.f_r - params.f_q;
    if delta == 0.0 {
        return Err(Error::InvalidParam("zero detuning: n_c undefined".into()));
    }
    Ok(delta * delta / (4.0 * params.g * params.g))
}

/// Dispersive-shift approximation χ ≈ −(ω_r/ω_q)·g²η/(Δ(Δ+η)), rad/ns.
pub fn chi_approx(params: &SystemParams) -> Result<f64> {
    let delta = params.delta_w();
    let eta = params.eta_w();
    if delta == 0.0 || delta + eta == 0.0 {
        return Err(Error::InvalidParam("singular denominator in chi approximation".into()));
    }
    let g = params.g_w();
    Ok(-(params.w_r() / params.w_q()) * g * g * eta / (delta * (delta + eta)))
}

/// Effective-drive correction factor for the analytic dispersive expansion:
/// 1 − ½(g/Δ)² on the ground ladder, 1 + ½(g/Δ)² − ½(√2g/(Δ+η))² on the
/// excited one. Only k = 0, 1 have a closed form here.
pub fn effective_drive_factor_analytic(params: &SystemParams, k: usize) -> Result<f64> {
    let gd = params.g_w() / params.delta_w();
    match k {
        0 => Ok(1.0 - 0.5 * gd * gd),
        1 => {
            let gd2 = 2f64.sqrt() * params.g_w() / (params.delta_w() + params.eta_w());
            Ok(1.0 + 0.5 * gd * gd - 0.5 * gd2 * gd2)
        }
        _ => Err(Error::InvalidParam(format!("no analytic drive factor for ladder k={k}"))),
    }
}

/// Tridiagonal strip block of the drive-free Hamiltonian in the bare strip
/// basis (k' ascending), with explicit drive frequency `w_d` in rad/ns.
fn strip_block(params: &SystemParams, n_sigma: usize, w_d: f64) -> DMatrix<f64> {
    let (kmin, kmax) = strip_krange(n_sigma, params.n_res);
    let dim = kmax - kmin + 1;
    let ek = bare_energies(params);
    let wr = params.w_r();
    let g = params.g_w();
    let mut m = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let kp = kmin + j;
        let n = n_sigma - kp;
        m[(j, j)] = n as f64 * (wr - w_d) + ek[kp] - kp as f64 * w_d;
        if j + 1 < dim {
            // couples |n_Σ−k', k'⟩ ↔ |n_Σ−k'−1, k'+1⟩
            let c = g * ((n * (kp + 1)) as f64).sqrt();
            m[(j, j + 1)] = c;
            m[(j + 1, j)] = c;
        }
    }
    m
}

/// Eigen-decompose one strip and identify each eigenpair with its (n,k)
/// label. Returns (k, energy, components) triples. Exposed shape also serves
/// the permutation-stability test: identification only relies on eigenvalue
/// order, not on solver output order.
fn identify_strip(
    n_sigma: usize,
    n_res: usize,
    evals: &[f64],
    evecs: &[Vec<f64>],
) -> Result<Vec<(usize, f64, StripVec)>> {
    let (kmin, kmax) = strip_krange(n_sigma, n_res);
    let dim = kmax - kmin + 1;
    debug_assert_eq!(evals.len(), dim);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| evals[a].total_cmp(&evals[b]));
    // degeneracy guard; avoided crossings keep strips non-degenerate for g > 0
    let scale = evals.iter().fold(1.0f64, |m, e| m.max(e.abs()));
    for w in order.windows(2) {
        let gap = evals[w[1]] - evals[w[0]];
        if gap.abs() < 1e-12 * scale {
            return Err(Error::DegenerateStrip(gap));
        }
    }
    // bare energies decrease with k inside a strip, so ascending eigenvalues
    // run from k = kmax down to k = kmin
    let mut out = Vec::with_capacity(dim);
    for (rank, &idx) in order.iter().enumerate() {
        let k = kmax - rank;
        let mut comps = [0.0; N_TR];
        comps[..dim].copy_from_slice(&evecs[idx]);
        out.push((k, evals[idx], StripVec { comps }));
    }
    Ok(out)
}

impl DressedBasis {
    /// Diagonalize every strip and assemble the eigenladder bookkeeping.
    pub fn diagonalize(params: &SystemParams) -> Result<Self> {
        params.validate()?;
        let n_res = params.n_res;
        let dim = params.dim();
        let mut energies = vec![0.0; dim];
        let mut vecs = vec![StripVec { comps: [0.0; N_TR] }; dim];
        for n_sigma in 0..=(n_res - 1 + N_TR - 1) {
            let (kmin, kmax) = strip_krange(n_sigma, n_res);
            let block = strip_block(params, n_sigma, params.w_d());
            let sdim = kmax - kmin + 1;
            let (evals, evecs) = if sdim == 1 {
                (vec![block[(0, 0)]], vec![vec![1.0]])
            } else {
                let se = block.symmetric_eigen();
                let evals: Vec<f64> = se.eigenvalues.iter().copied().collect();
                let evecs: Vec<Vec<f64>> =
                    (0..sdim).map(|c| se.eigenvectors.column(c).iter().copied().collect()).collect();
                (evals, evecs)
            };
            for (k, energy, mut sv) in identify_strip(n_sigma, n_res, &evals, &evecs)? {
                let n = n_sigma - k;
                // sign convention: ladder start has positive dominant bare
                // amplitude; later members keep positive overlap with their
                // predecessor so the sign does not flip along the ladder
                let sign_ref = if n == 0 {
                    sv.comps[k - kmin]
                } else {
                    let prev = &vecs[flat(n - 1, k)];
                    let (pkmin, pkmax) = strip_krange(n_sigma - 1, n_res);
                    let lo = pkmin.max(kmin);
                    let hi = pkmax.min(kmax);
                    let mut ov = 0.0;
                    for kp in lo..=hi {
                        ov += prev.comps[kp - pkmin] * sv.comps[kp - kmin];
                    }
                    if ov != 0.0 {
                        ov
                    } else {
                        sv.comps[k - kmin]
                    }
                };
                if sign_ref < 0.0 {
                    for c in sv.comps.iter_mut() {
                        *c = -*c;
                    }
                }
                energies[flat(n, k)] = energy;
                vecs[flat(n, k)] = sv;
            }
        }
        Ok(Self { params: *params, energies, vecs })
    }

    pub fn n_res(&self) -> usize {
        self.params.n_res
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// Rotating-frame eigenvalue Ē_{n,k} in rad/ns.
    pub fn energy(&self, n: usize, k: usize) -> f64 {
        self.energies[flat(n, k)]
    }

    /// Lab-frame eigenvalue: the rotating frame shifts strip n_Σ by −n_Σ·ω_d.
    pub fn energy_lab(&self, n: usize, k: usize) -> f64 {
        self.energy(n, k) + (n + k) as f64 * self.params.w_d()
    }

    /// Bare components of eigenstate bar|n,k⟩ over its strip; entry j is the
    /// amplitude on |n+k−k', k'⟩ with k' = kmin + j.
    pub fn components(&self, n: usize, k: usize) -> (usize, &[f64]) {
        let (kmin, kmax) = strip_krange(n + k, self.n_res());
        (kmin, &self.vecs[flat(n, k)].comps[..kmax - kmin + 1])
    }

    /// Expansion coefficient d_l of bar|n,k⟩ on the bare state |n−l, k+l⟩.
    pub fn coeff_d(&self, n: usize, k: usize, l: isize) -> f64 {
        let kp = k as isize + l;
        if kp < 0 || kp >= N_TR as isize {
            return 0.0;
        }
        let (kmin, comps) = self.components(n, k);
        let j = kp as usize;
        if j < kmin || j - kmin >= comps.len() {
            0.0
        } else {
            comps[j - kmin]
        }
    }

    /// Project a bare-basis state onto the eigenbasis: coefficient per flat
    /// eigen index (n,k). Costs O(7·dim).
    pub fn to_eigen(&self, psi: &[C64]) -> Vec<C64> {
        assert_eq!(psi.len(), self.dim());
        let n_res = self.n_res();
        let mut out = vec![C64::ZERO; self.dim()];
        for n in 0..n_res {
            for k in 0..N_TR {
                let n_sigma = n + k;
                let (kmin, comps) = self.components(n, k);
                let mut acc = C64::ZERO;
                for (j, &v) in comps.iter().enumerate() {
                    let kp = kmin + j;
                    let nb = n_sigma - kp;
                    if nb < n_res {
                        acc += v * psi[flat(nb, kp)];
                    }
                }
                out[flat(n, k)] = acc;
            }
        }
        out
    }

    /// Inverse of `to_eigen`: synthesize a bare-basis state from eigen
    /// coefficients.
    pub fn from_eigen(&self, coeff: &[C64]) -> Vec<C64> {
        assert_eq!(coeff.len(), self.dim());
        let n_res = self.n_res();
        let mut out = vec![C64::ZERO; self.dim()];
        for n in 0..n_res {
            for k in 0..N_TR {
                let c = coeff[flat(n, k)];
                if c == C64::ZERO {
                    continue;
                }
                let n_sigma = n + k;
                let (kmin, comps) = self.components(n, k);
                for (j, &v) in comps.iter().enumerate() {
                    let kp = kmin + j;
                    let nb = n_sigma - kp;
                    if nb < n_res {
                        out[flat(nb, kp)] += c * v;
                    }
                }
            }
        }
        out
    }

    /// Ladder-k coefficients c_n = ⟨bar(n,k)|ψ⟩ of a bare-basis state.
    pub fn ladder_coeffs(&self, psi: &[C64], k: usize) -> Vec<C64> {
        let n_res = self.n_res();
        let mut out = vec![C64::ZERO; n_res];
        for (n, cn) in out.iter_mut().enumerate() {
            let n_sigma = n + k;
            let (kmin, comps) = self.components(n, k);
            let mut acc = C64::ZERO;
            for (j, &v) in comps.iter().enumerate() {
                let kp = kmin + j;
                let nb = n_sigma - kp;
                if nb < n_res {
                    acc += v * psi[flat(nb, kp)];
                }
            }
            *cn = acc;
        }
        out
    }

    /// Bare-basis state Σ_n c_n bar|n,k⟩ from ladder-k coefficients.
    pub fn state_from_ladder(&self, c: &[C64], k: usize) -> Vec<C64> {
        let n_res = self.n_res();
        assert!(c.len() <= n_res);
        let mut out = vec![C64::ZERO; self.dim()];
        for (n, &cn) in c.iter().enumerate() {
            if cn == C64::ZERO {
                continue;
            }
            let n_sigma = n + k;
            let (kmin, comps) = self.components(n, k);
            for (j, &v) in comps.iter().enumerate() {
                let kp = kmin + j;
                let nb = n_sigma - kp;
                if nb < n_res {
                    out[flat(nb, kp)] += cn * v;
                }
            }
        }
        out
    }

    /// Dense basis-change matrix U with columns = eigenvectors ordered by
    /// flat (n,k). Small truncations only; everything else uses the
    /// compressed form.
    pub fn u_dense(&self) -> DMatrix<f64> {
        let dim = self.dim();
        let n_res = self.n_res();
        let mut u = DMatrix::zeros(dim, dim);
        for n in 0..n_res {
            for k in 0..N_TR {
                let col = flat(n, k);
                let n_sigma = n + k;
                let (kmin, comps) = self.components(n, k);
                for (j, &v) in comps.iter().enumerate() {
                    let kp = kmin + j;
                    let nb = n_sigma - kp;
                    if nb < n_res {
                        u[(flat(nb, kp), col)] = v;
                    }
                }
            }
        }
        u
    }

    /// Rotating-frame eigenladder transition frequency
    /// ω_r^(k)(n) = Ē_{n+1,k} − Ē_{n,k}.
    pub fn omega_r_k(&self, n: usize, k: usize) -> Result<f64> {
        if n + 1 >= self.n_res() {
            return Err(Error::IndexRange(format!("omega_r_k needs n+1 < N, got n={n}")));
        }
        Ok(self.energy(n + 1, k) - self.energy(n, k))
    }

    /// Inter-ladder detuning Δ_n = Ē_{n+1,0} − Ē_{n,1}. Both states live in
    /// strip n+1, so the frame shift cancels and the value is frame
    /// independent.
    pub fn detuning_n(&self, n: usize) -> Result<f64> {
        self.detuning_pair(n, 0)
    }

    /// Detuning between neighboring ladders k and k+1:
    /// Δ_n^(k) = Ē_{n+1,k} − Ē_{n,k+1}, frame independent.
    pub fn detuning_pair(&self, n: usize, k: usize) -> Result<f64> {
        if n + 1 >= self.n_res() {
            return Err(Error::IndexRange(format!("detuning_pair needs n+1 < N, got n={n}")));
        }
        if k + 1 >= crate::model::N_TR {
            return Err(Error::IndexRange(format!("detuning_pair needs k+1 < {}", crate::model::N_TR)));
        }
        Ok(self.energy(n + 1, k) - self.energy(n, k + 1))
    }

    /// Δ_n̄ at non-integer n̄ by nearest-integer lookup.
    pub fn detuning_at(&self, nbar: f64) -> Result<f64> {
        self.detuning_pair_at(nbar, 0)
    }

    /// Δ_n̄^(k) at non-integer n̄ by nearest-integer lookup.
    pub fn detuning_pair_at(&self, nbar: f64, k: usize) -> Result<f64> {
        let n = nbar.round().max(0.0) as usize;
        self.detuning_pair(n.min(self.n_res() - 2), k)
    }

    /// Δ_n̄ averaged over a photon-number distribution (weights over n).
    pub fn detuning_weighted(&self, weights: &[f64]) -> Result<f64> {
        let mut acc = 0.0;
        let mut tot = 0.0;
        for (n, &w) in weights.iter().enumerate() {
            if w == 0.0 || n + 1 >= self.n_res() {
                continue;
            }
            acc += w * self.detuning_n(n)?;
            tot += w;
        }
        if tot <= 0.0 {
            return Err(Error::InvalidParam("empty weight distribution".into()));
        }
        Ok(acc / tot)
    }

    /// Spectral dispersive shift χ = [ω_r^(1)(0) − ω_r^(0)(0)]/2,
    /// frame independent.
    pub fn chi_spectral(&self) -> f64 {
        (self.omega_r_k(0, 1).unwrap() - self.omega_r_k(0, 0).unwrap()) / 2.0
    }

    /// Excited-ladder shift 2χ' = ω_r^(2)(0) − ω_r^(1)(0).
    pub fn two_chi_prime(&self) -> f64 {
        self.omega_r_k(0, 2).unwrap() - self.omega_r_k(0, 1).unwrap()
    }

    /// Matrix element ⟨bar(n−1,k)| a |bar(n,k)⟩ of the bare lowering
    /// operator between neighboring eigenstates of one ladder.
    pub fn lowering_element(&self, n: usize, k: usize) -> Result<f64> {
        if n == 0 || n >= self.n_res() {
            return Err(Error::IndexRange(format!("lowering element needs 1 <= n < N, got {n}")));
        }
        let n_sigma = n + k;
        let (kmin_a, comps_a) = self.components(n - 1, k);
        let (kmin_b, comps_b) = self.components(n, k);
        // a|n_Σ−k', k'⟩ = √(n_Σ−k') |n_Σ−1−k', k'⟩
        let mut acc = 0.0;
        for (j, &vb) in comps_b.iter().enumerate() {
            let kp = kmin_b + j;
            if kp < kmin_a || kp - kmin_a >= comps_a.len() {
                continue;
            }
            let va = comps_a[kp - kmin_a];
            acc += va * vb * ((n_sigma - kp) as f64).sqrt();
        }
        Ok(acc)
    }

    /// Effective drive amplitude ε̃(n,k) = (⟨bar(n−1,k)|a|bar(n,k)⟩/√n)·ε.
    pub fn effective_drive(&self, n: usize, k: usize, eps_w: C64) -> Result<C64> {
        Ok(eps_w * (self.lowering_element(n, k)? / (n as f64).sqrt()))
    }

    /// Ladder profile: transition frequencies and their finite-difference
    /// n-derivative for one eigenladder.
    pub fn ladder_profile(&self, k: usize) -> LadderProfile {
        let n_res = self.n_res();
        let omega: Vec<f64> = (0..n_res - 1).map(|n| self.omega_r_k(n, k).unwrap()).collect();
        // forward difference at n = 0, central elsewhere
        let mut domega = vec![0.0; n_res - 2];
        if !domega.is_empty() {
            domega[0] = omega[1] - omega[0];
            for n in 1..n_res - 2 {
                domega[n] = (omega[n + 1] - omega[n - 1]) / 2.0;
            }
        }
        LadderProfile { k, omega_r_k: omega, domega_dn: domega, w_d: self.params.w_d(), n_res }
    }
}

/// Transition-frequency profile of one eigenladder. `omega_r_k[n]` is the
/// rotating-frame ω_r^(k)(n) (add `w_d` for the lab frame); `domega_dn[n]`
/// is frame independent.
#[derive(Debug, Clone)]
pub struct LadderProfile {
    pub k: usize,
    pub omega_r_k: Vec<f64>,
    pub domega_dn: Vec<f64>,
    pub w_d: f64,
    pub n_res: usize,
}

impl LadderProfile {
    fn interp(arr: &[f64], x: f64) -> f64 {
        match arr.len() {
            0 => 0.0,
            1 => arr[0],
            len => {
                let x = x.clamp(0.0, (len - 1) as f64);
                let i = (x.floor() as usize).min(len - 2);
                let frac = x - i as f64;
                arr[i] * (1.0 - frac) + arr[i + 1] * frac
            }
        }
    }

    /// Rotating-frame ω_r^(k) at continuous n̄, linear interpolation.
    pub fn omega_at(&self, nbar: f64) -> f64 {
        Self::interp(&self.omega_r_k, nbar)
    }

    /// Lab-frame transition frequency at continuous n̄.
    pub fn omega_lab_at(&self, nbar: f64) -> f64 {
        self.omega_at(nbar) + self.w_d
    }

    /// dω_r^(k)/dn at continuous n̄, linear interpolation.
    pub fn domega_at(&self, nbar: f64) -> f64 {
        Self::interp(&self.domega_dn, nbar)
    }

    /// Truncation-edge guard: ladder quantities within 10 states of the top
    /// are considered unreliable.
    pub fn in_valid_range(&self, nbar: f64) -> bool {
        nbar >= 0.0 && nbar <= (self.n_res.saturating_sub(10)) as f64
    }
}

/// Lab-frame resonant drive frequency for ladder k: f_d such that the
/// rotating-frame ladder frequency at n = 0 vanishes,
/// ω_d = Ē_lab(1,k) − Ē_lab(0,k). Independent of the f_d stored in `params`.
pub fn resonant_drive_frequency(params: &SystemParams, k: usize) -> Result<f64> {
    if k + 1 >= N_TR {
        return Err(Error::IndexRange(format!("resonant tuning needs k+1 < 7, got k={k}")));
    }
    params.validate()?;
    // lab-frame strip blocks: w_d = 0
    let e_0k = strip_lab_energy(params, 0, k)?;
    let e_1k = strip_lab_energy(params, 1, k)?;
    Ok((e_1k - e_0k) / TWO_PI)
}

/// Lab-frame eigenvalue Ē_lab(n,k) from a single strip diagonalization.
fn strip_lab_energy(params: &SystemParams, n: usize, k: usize) -> Result<f64> {
    let n_sigma = n + k;
    let (kmin, kmax) = strip_krange(n_sigma, params.n_res);
    let dim = kmax - kmin + 1;
    let block = strip_block(params, n_sigma, 0.0);
    if dim == 1 {
        return Ok(block[(0, 0)]);
    }
    let se = block.symmetric_eigen();
    let mut evals: Vec<f64> = se.eigenvalues.iter().copied().collect();
    evals.sort_by(f64::total_cmp);
    // ascending eigenvalues run k = kmax..kmin
    let rank = kmax - k;
    Ok(evals[rank])
}

/// SHA-256 over the canonical parameter encoding; keys the basis cache.
pub fn params_hash(params: &SystemParams) -> [u8; 32] {
    let mut h = Sha256::new();
    for v in [params.f_r, params.f_q, params.eta, params.g, params.f_d, params.e0] {
        h.update(v.to_le_bytes());
    }
    h.update((params.n_res as u64).to_le_bytes());
    h.update((params.n_tr as u64).to_le_bytes());
    h.finalize().into()
}

const CACHE_MAGIC: &[u8; 8] = b"RINGUPB1";

impl DressedBasis {
    /// Serialize to the binary cache format: magic, params hash, params,
    /// then little-endian f64 arrays.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write;
        let mut buf: Vec<u8> = Vec::with_capacity(16 + self.dim() * 64);
        buf.extend_from_slice(CACHE_MAGIC);
        buf.extend_from_slice(&params_hash(&self.params));
        for v in [
            self.params.f_r,
            self.params.f_q,
            self.params.eta,
            self.params.g,
            self.params.f_d,
            self.params.e0,
        ] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&(self.params.n_res as u64).to_le_bytes());
        for e in &self.energies {
            buf.extend_from_slice(&e.to_le_bytes());
        }
        for v in &self.vecs {
            for c in &v.comps {
                buf.extend_from_slice(&c.to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(&buf)?;
        Ok(())
    }

    /// Load a cached basis; the stored hash must match `params`.
    pub fn load(path: &std::path::Path, params: &SystemParams) -> Result<Self> {
        let data = std::fs::read(path)?;
        let need = 8 + 32 + 7 * 8;
        if data.len() < need || &data[..8] != CACHE_MAGIC {
            return Err(Error::Cache(format!("{}: not a basis cache file", path.display())));
        }
        let hash = params_hash(params);
        if data[8..40] != hash {
            return Err(Error::Cache(format!("{}: parameter hash mismatch", path.display())));
        }
        let dim = params.dim();
        let payload = 40 + 7 * 8;
        let expect = payload + dim * 8 + dim * N_TR * 8;
        if data.len() != expect {
            return Err(Error::Cache(format!(
                "{}: truncated cache (got {} bytes, want {expect})",
                path.display(),
                data.len()
            )));
        }
        let f64_at = |off: usize| {
            let mut b = [0u8; 8];
            b.copy_from_slice(&data[off..off + 8]);
            f64::from_le_bytes(b)
        };
        let mut energies = vec![0.0; dim];
        for (i, e) in energies.iter_mut().enumerate() {
            *e = f64_at(payload + i * 8);
        }
        let base = payload + dim * 8;
        let mut vecs = vec![StripVec { comps: [0.0; N_TR] }; dim];
        for (i, v) in vecs.iter_mut().enumerate() {
            for j in 0..N_TR {
                v.comps[j] = f64_at(base + (i * N_TR + j) * 8);
            }
        }
        Ok(Self { params: *params, energies, vecs })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Hamiltonian;
    use approx::assert_abs_diff_eq;

    fn default_params(n_res: usize) -> SystemParams {
        let mut p = SystemParams::default_with(n_res);
        p.f_d = resonant_drive_frequency(&p, 0).unwrap();
        p
    }

    #[test]
    fn resonant_frequency_closed_form() {
        let p = SystemParams::default_with(8);
        // two-level avoided crossing: ω_d = (ω_r+ω_q)/2 + √(Δ²/4 + g²)
        let want = (6.0 + 5.0) / 2.0 + (0.25f64 + 0.01).sqrt();
        assert_abs_diff_eq!(resonant_drive_frequency(&p, 0).unwrap(), want, epsilon = 1e-12);
    }

    #[test]
    fn strip0_energy_zero() {
        let b = DressedBasis::diagonalize(&default_params(8)).unwrap();
        assert_abs_diff_eq!(b.energy(0, 0), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn strip1_two_level_splitting() {
        let p = default_params(8);
        let b = DressedBasis::diagonalize(&p).unwrap();
        let mean = (p.w_r() + p.w_q()) / 2.0;
        let split = (p.delta_w() * p.delta_w() / 4.0 + p.g_w() * p.g_w()).sqrt();
        assert_abs_diff_eq!(b.energy_lab(1, 0), mean + split, epsilon = 1e-9);
        assert_abs_diff_eq!(b.energy_lab(0, 1), mean - split, epsilon = 1e-9);
    }

    #[test]
    fn dense_oracle_small_truncation() {
        // strip-by-strip eigenvalues against brute-force dense diagonalization
        let p = default_params(20);
        let b = DressedBasis::diagonalize(&p).unwrap();
        let h = Hamiltonian::build(&p).unwrap();
        let dense = h.dense_h0();
        let se = dense.symmetric_eigen();
        let mut want: Vec<f64> = se.eigenvalues.iter().copied().collect();
        want.sort_by(f64::total_cmp);
        let mut got: Vec<f64> = b.energies.clone();
        got.sort_by(f64::total_cmp);
        let scale = want.iter().fold(1.0f64, |m, e| m.max(e.abs()));
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-10 * scale, "eigenvalue mismatch: {g} vs {w}");
        }
    }

    #[test]
    fn eigen_residuals() {
        let p = default_params(20);
        let b = DressedBasis::diagonalize(&p).unwrap();
        let h = Hamiltonian::build(&p).unwrap();
        let dim = b.dim();
        let hnorm = {
            let m = h.dense_h0();
            (0..dim).map(|i| (0..dim).map(|j| m[(i, j)].abs()).sum::<f64>()).fold(0.0, f64::max)
        };
        let mut out = vec![C64::ZERO; dim];
        for n in 0..p.n_res {
            for k in 0..N_TR {
                let mut coeff = vec![C64::ZERO; dim];
                coeff[flat(n, k)] = C64::ONE;
                let v = b.from_eigen(&coeff);
                h.apply(C64::ZERO, &v, &mut out);
                let e = b.energy(n, k);
                let resid: f64 =
                    out.iter().zip(&v).map(|(hv, vv)| (hv - vv * e).norm_sqr()).sum::<f64>().sqrt();
                assert!(resid < 1e-9 * hnorm, "residual {resid:.3e} at ({n},{k})");
            }
        }
    }

    #[test]
    fn u_is_unitary() {
        let b = DressedBasis::diagonalize(&default_params(12)).unwrap();
        let u = b.u_dense();
        let id = u.transpose() * &u;
        let dim = b.dim();
        let mut max_err = 0.0f64;
        for i in 0..dim {
            for j in 0..dim {
                let want = if i == j { 1.0 } else { 0.0 };
                max_err = max_err.max((id[(i, j)] - want).abs());
            }
        }
        assert!(max_err < 1e-10, "U†U deviates from identity by {max_err:.2e}");
    }

    #[test]
    fn eigen_round_trip() {
        let b = DressedBasis::diagonalize(&default_params(12)).unwrap();
        let dim = b.dim();
        let psi: Vec<C64> = (0..dim)
            .map(|i| C64::new(((i * 29 + 3) % 83) as f64 - 41.0, ((i * 53 + 7) % 89) as f64 - 44.0))
            .collect();
        let back = b.from_eigen(&b.to_eigen(&psi));
        for (a, c) in psi.iter().zip(&back) {
            assert!((a - c).norm() < 1e-10 * (1.0 + a.norm()));
        }
    }

    #[test]
    fn critical_photon_number_values() {
        let mut p = SystemParams::default_with(4);
        assert_abs_diff_eq!(critical_photon_number(&p).unwrap(), 25.0, epsilon = 1e-12);
        p.g = 0.1414;
        assert!((critical_photon_number(&p).unwrap() - 12.5).abs() < 0.1);
        p.g = 0.05;
        assert_abs_diff_eq!(critical_photon_number(&p).unwrap(), 100.0, epsilon = 1e-9);
    }

    #[test]
    fn chi_approx_values() {
        let mut p = SystemParams::default_with(4);
        assert_abs_diff_eq!(chi_approx(&p).unwrap() / TWO_PI, -0.002, epsilon = 1e-12);
        p.eta = 1e-9;
        assert!(chi_approx(&p).unwrap().abs() < 1e-8);
    }

    #[test]
    fn detuning_limits_and_linear_model() {
        // g → 0 limit: Δ_0 → Δ
        let mut p = default_params(60);
        p.g = 1e-5;
        let b = DressedBasis::diagonalize(&p).unwrap();
        assert_abs_diff_eq!(b.detuning_n(0).unwrap() / TWO_PI, 1.0, epsilon = 1e-6);

        // linear dispersive model Δ − 2χn within 10% for n ≤ 2n_c
        let p = default_params(80);
        let b = DressedBasis::diagonalize(&p).unwrap();
        let chi = chi_approx(&p).unwrap();
        let delta = p.delta_w();
        let mut prev = b.detuning_n(0).unwrap();
        for n in 0..=50 {
            let dn = b.detuning_n(n).unwrap();
            let model = delta - 2.0 * chi * n as f64;
            assert!(
                (dn - model).abs() < 0.10 * model.abs(),
                "Δ_n vs linear model at n={n}: {dn:.5} vs {model:.5}"
            );
            if n > 0 {
                // monotone growth for χ < 0
                assert!(dn > prev);
                prev = dn;
            }
        }
    }

    #[test]
    fn ladder_slope_structure() {
        let p = default_params(60);
        let b = DressedBasis::diagonalize(&p).unwrap();
        let l0 = b.ladder_profile(0);
        let l1 = b.ladder_profile(1);
        // ground-ladder pulling is stronger at small n
        assert!(l0.domega_dn[2].abs() > l1.domega_dn[2].abs());
        // excited-ladder slope changes sign in n ∈ [10, 35]
        let mut sign_change = false;
        for n in 10..35 {
            if l1.domega_dn[n] * l1.domega_dn[n + 1] < 0.0 {
                sign_change = true;
                break;
            }
        }
        assert!(sign_change, "no slope sign change of omega_r_1 in [10,35]");
    }

    #[test]
    fn identification_is_permutation_stable() {
        let p = default_params(10);
        for n_sigma in [1usize, 3, 6, 9] {
            let block = strip_block(&p, n_sigma, p.w_d());
            let dim = block.nrows();
            let se = block.symmetric_eigen();
            let evals: Vec<f64> = se.eigenvalues.iter().copied().collect();
            let evecs: Vec<Vec<f64>> =
                (0..dim).map(|c| se.eigenvectors.column(c).iter().copied().collect()).collect();
            let a = identify_strip(n_sigma, p.n_res, &evals, &evecs).unwrap();
            // rotate the pair order; identification must not care
            let perm: Vec<usize> = (0..dim).map(|i| (i + 1) % dim).collect();
            let evals_p: Vec<f64> = perm.iter().map(|&i| evals[i]).collect();
            let evecs_p: Vec<Vec<f64>> = perm.iter().map(|&i| evecs[i].clone()).collect();
            let b = identify_strip(n_sigma, p.n_res, &evals_p, &evecs_p).unwrap();
            for ((ka, ea, va), (kb, eb, vb)) in a.iter().zip(&b) {
                assert_eq!(ka, kb);
                assert_abs_diff_eq!(ea, eb, epsilon = 1e-14);
                for j in 0..N_TR {
                    assert_abs_diff_eq!(va.comps[j], vb.comps[j], epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn e0_shifts_eigenvalues_only() {
        let p0 = default_params(10);
        let mut p1 = p0;
        p1.e0 = 0.3;
        let b0 = DressedBasis::diagonalize(&p0).unwrap();
        let b1 = DressedBasis::diagonalize(&p1).unwrap();
        for n in 0..p0.n_res {
            for k in 0..N_TR {
                assert_abs_diff_eq!(
                    b1.energy(n, k) - b0.energy(n, k),
                    TWO_PI * 0.3,
                    epsilon = 1e-9
                );
                let (_, ca) = b0.components(n, k);
                let (_, cb) = b1.components(n, k);
                for (x, y) in ca.iter().zip(cb) {
                    assert_abs_diff_eq!(x, y, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn lowering_element_and_analytic_drive_factor() {
        let p = default_params(40);
        let b = DressedBasis::diagonalize(&p).unwrap();
        for k in [0usize, 1] {
            let fac = b.lowering_element(5, k).unwrap() / 5f64.sqrt();
            let analytic = effective_drive_factor_analytic(&p, k).unwrap();
            assert!(
                (fac - analytic).abs() < 1e-3 * analytic.abs(),
                "drive factor k={k}: {fac} vs {analytic}"
            );
        }
        assert_abs_diff_eq!(
            effective_drive_factor_analytic(&p, 0).unwrap(),
            0.995,
            epsilon = 1e-6
        );
        assert!(effective_drive_factor_analytic(&p, 2).is_err());
    }

    #[test]
    fn ladder_profile_interpolation() {
        let p = default_params(30);
        let b = DressedBasis::diagonalize(&p).unwrap();
        let l = b.ladder_profile(0);
        assert_eq!(l.omega_r_k.len(), p.n_res - 1);
        assert_eq!(l.domega_dn.len(), p.n_res - 2);
        assert_abs_diff_eq!(l.omega_at(3.0), l.omega_r_k[3], epsilon = 1e-14);
        let mid = (l.omega_r_k[3] + l.omega_r_k[4]) / 2.0;
        assert_abs_diff_eq!(l.omega_at(3.5), mid, epsilon = 1e-14);
        assert!(l.in_valid_range(19.0));
        assert!(!l.in_valid_range(21.0));
        assert_abs_diff_eq!(l.omega_lab_at(0.0) - l.omega_at(0.0), p.w_d(), epsilon = 1e-12);
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("basis.bin");
        let p = default_params(12);
        let b = DressedBasis::diagonalize(&p).unwrap();
        b.save(&path).unwrap();
        let l = DressedBasis::load(&path, &p).unwrap();
        for i in 0..b.dim() {
            assert_abs_diff_eq!(b.energies[i], l.energies[i], epsilon = 0.0);
            for j in 0..N_TR {
                assert_abs_diff_eq!(b.vecs[i].comps[j], l.vecs[i].comps[j], epsilon = 0.0);
            }
        }
        let mut other = p;
        other.g = 0.11;
        assert!(DressedBasis::load(&path, &other).is_err());
    }
}
