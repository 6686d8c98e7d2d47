//! Python bindings for the ring-up simulator. Thin wrappers over the core
//! crate that accept plain keyword arguments (frequencies in GHz, drive
//! amplitudes in MHz, times in ns) and return dicts of Python floats/lists.

use num_complex::Complex64 as C64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ringup::dressed::{fidelity_bare_coherent, fidelity_dressed_coherent, make_dressed_coherent};
use ringup::entangle::{best_product_infidelity, entanglement_of_formation, product_approx};
use ringup::leakage::predict_ground;
use ringup::model::{DriveEnvelope, Hamiltonian, SystemParams, TWO_PI};
use ringup::propagate::evolve;
use ringup::reduced::{evolve_reduced, DriveMode, ReducedState};
use ringup::spectrum::{self, DressedBasis};

fn err(e: ringup::error::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Assemble parameters; `f_d = None` means drive on the ladder resonance.
fn make_params(
    n_res: usize,
    f_r: f64,
    f_q: f64,
    eta: f64,
    g: f64,
    f_d: Option<f64>,
) -> PyResult<SystemParams> {
    let mut p = SystemParams::default_with(n_res);
    p.f_r = f_r;
    p.f_q = f_q;
    p.eta = eta;
    p.g = g;
    p.f_d = f_d.unwrap_or(f_r);
    p.validate().map_err(err)?;
    if f_d.is_none() {
        p.f_d = spectrum::resonant_drive_frequency(&p, 0).map_err(err)?;
    }
    Ok(p)
}

/// Photon number where the dressed ladder bends over, (f_r - f_q)^2 / (4 g^2).
#[pyfunction]
#[pyo3(signature = (f_r = 6.0, f_q = 5.0, eta = 0.2, g = 0.1))]
fn critical_photon_number(f_r: f64, f_q: f64, eta: f64, g: f64) -> PyResult<f64> {
    let p = make_params(8, f_r, f_q, eta, g, Some(f_r))?;
    spectrum::critical_photon_number(&p).map_err(err)
}

/// Drive frequency (GHz) resonant with the bottom of eigenladder `ladder`.
#[pyfunction]
#[pyo3(signature = (ladder = 0, n_res = 40, f_r = 6.0, f_q = 5.0, eta = 0.2, g = 0.1))]
fn resonant_drive_frequency(
    ladder: usize,
    n_res: usize,
    f_r: f64,
    f_q: f64,
    eta: f64,
    g: f64,
) -> PyResult<f64> {
    let p = make_params(n_res, f_r, f_q, eta, g, Some(f_r))?;
    spectrum::resonant_drive_frequency(&p, ladder).map_err(err)
}

/// Rotating-frame ladder transition frequency (GHz) at photon number
/// `round(nbar)`: zero at `nbar = 0` when the drive is resonant, negative
/// once the ladder softens.
#[pyfunction]
#[pyo3(signature = (nbar = 0.0, n_res = 60, f_r = 6.0, f_q = 5.0, eta = 0.2, g = 0.1, f_d = None))]
fn drive_detuning_ghz(
    nbar: f64,
    n_res: usize,
    f_r: f64,
    f_q: f64,
    eta: f64,
    g: f64,
    f_d: Option<f64>,
) -> PyResult<f64> {
    let p = make_params(n_res, f_r, f_q, eta, g, f_d)?;
    let basis = DressedBasis::diagonalize(&p).map_err(err)?;
    let n = (nbar.round().max(0.0) as usize).min(n_res - 2);
    Ok(basis.omega_r_k(n, 0).map_err(err)? / TWO_PI)
}

/// Perturbative leakage figures for a constant drive from the ground
/// ladder: steady-state stray population, first oscillation maximum,
/// oscillation frequency, and envelope decay time.
#[pyfunction]
#[pyo3(signature = (eps_mhz, nbar = 0.0, n_res = 40, f_r = 6.0, f_q = 5.0, eta = 0.2, g = 0.1, f_d = None))]
#[allow(clippy::too_many_arguments)]
fn leakage_prediction<'py>(
    py: Python<'py>,
    eps_mhz: f64,
    nbar: f64,
    n_res: usize,
    f_r: f64,
    f_q: f64,
    eta: f64,
    g: f64,
    f_d: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let p = make_params(n_res, f_r, f_q, eta, g, f_d)?;
    let basis = DressedBasis::diagonalize(&p).map_err(err)?;
    let pred = predict_ground(&p, &basis, eps_mhz * 1e-3 * TWO_PI, nbar).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("p_ss", pred.p_ss)?;
    d.set_item("p_max", pred.p_max)?;
    d.set_item("frequency_ghz", pred.omega_osc / TWO_PI)?;
    d.set_item("t_decay_ns", pred.t_decay)?;
    Ok(d)
}

/// Ring up the resonator from the joint ground state with a constant drive
/// and summarize each snapshot: time, state norm, mean photon number,
/// population outside the driven eigenladder, and the infidelities of the
/// best coherent-state fit in the bare and in the dressed basis.
#[pyfunction]
#[pyo3(signature = (eps_mhz, t_end, n_res, dt_out = 0.5, tol = 1e-8, f_r = 6.0, f_q = 5.0, eta = 0.2, g = 0.1, f_d = None))]
#[allow(clippy::too_many_arguments)]
fn ring_up<'py>(
    py: Python<'py>,
    eps_mhz: f64,
    t_end: f64,
    n_res: usize,
    dt_out: f64,
    tol: f64,
    f_r: f64,
    f_q: f64,
    eta: f64,
    g: f64,
    f_d: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let p = make_params(n_res, f_r, f_q, eta, g, f_d)?;
    let basis = DressedBasis::diagonalize(&p).map_err(err)?;
    let h = Hamiltonian::build(&p).map_err(err)?;
    let mut psi0 = vec![C64::ZERO; p.dim()];
    psi0[0] = C64::ONE;
    let env = DriveEnvelope::constant_mhz(eps_mhz);
    let traj = evolve(&h, &env, &psi0, t_end, dt_out, tol).map_err(err)?;

    let n = traj.len();
    let mut nbar = Vec::with_capacity(n);
    let mut p_stray = Vec::with_capacity(n);
    let mut infid_b = Vec::with_capacity(n);
    let mut infid_d = Vec::with_capacity(n);
    for psi in &traj.states {
        let in_ladder: f64 =
            basis.ladder_coeffs(psi, 0).iter().map(|z| z.norm_sqr()).sum();
        let total: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        nbar.push(ringup::propagate::photon_number(&basis, psi));
        p_stray.push((total - in_ladder).max(0.0));
        infid_b.push((1.0 - fidelity_bare_coherent(psi, 0, n_res).fidelity).max(0.0));
        infid_d.push((1.0 - fidelity_dressed_coherent(psi, 0, &basis).fidelity).max(0.0));
    }
    let d = PyDict::new(py);
    d.set_item("t", &traj.times)?;
    d.set_item("norm", traj.aux.iter().map(|a| a.norm).collect::<Vec<_>>())?;
    d.set_item("nbar", nbar)?;
    d.set_item("p_stray", p_stray)?;
    d.set_item("infidelity_bare", infid_b)?;
    d.set_item("infidelity_dressed", infid_d)?;
    Ok(d)
}

/// Integrate the five-parameter reduced model (coherent amplitude, shear,
/// width) for a constant drive and return the trace plus the final squeeze
/// parameters. `mode` selects the drive matrix elements: "bare" or
/// "analytic" (large-n asymptotics).
#[pyfunction]
#[pyo3(signature = (eps_mhz, t_end, dt = 0.01, mode = "bare", ladder = 0, f_r = 6.0, f_q = 5.0, eta = 0.2, g = 0.1, f_d = None, n_res = None))]
#[allow(clippy::too_many_arguments)]
fn reduced_ringup<'py>(
    py: Python<'py>,
    eps_mhz: f64,
    t_end: f64,
    dt: f64,
    mode: &str,
    ladder: usize,
    f_r: f64,
    f_q: f64,
    eta: f64,
    g: f64,
    f_d: Option<f64>,
    n_res: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    // default truncation: classical endpoint amplitude plus headroom
    let n_res = n_res.unwrap_or_else(|| {
        let nbar_end = (eps_mhz * 1e-3 * TWO_PI * t_end).powi(2);
        (1.3 * nbar_end) as usize + 40
    });
    let p = make_params(n_res, f_r, f_q, eta, g, f_d)?;
    let basis = DressedBasis::diagonalize(&p).map_err(err)?;
    let profile = basis.ladder_profile(ladder);
    let drive_mode = match mode {
        "bare" => DriveMode::Bare,
        "analytic" => DriveMode::analytic(&p, ladder).map_err(err)?,
        other => {
            return Err(PyValueError::new_err(format!(
                "mode must be \"bare\" or \"analytic\", got {other:?}"
            )))
        }
    };
    let env = DriveEnvelope::constant_mhz(eps_mhz);
    let states =
        evolve_reduced(&profile, &env, &drive_mode, &ReducedState::vacuum(ladder), t_end, dt)
            .map_err(err)?;

    let d = PyDict::new(py);
    d.set_item("t", states.iter().map(|s| s.t).collect::<Vec<_>>())?;
    d.set_item("nbar", states.iter().map(|s| s.beta.norm_sqr()).collect::<Vec<_>>())?;
    let last = states.last().expect("nonempty trace");
    let sq = last.to_squeezed();
    d.set_item("beta_re", last.beta.re)?;
    d.set_item("beta_im", last.beta.im)?;
    d.set_item("shear", last.shear)?;
    d.set_item("width", last.width)?;
    d.set_item("r", sq.r)?;
    d.set_item("theta", sq.theta)?;
    Ok(d)
}

/// Entanglement diagnostics at mean photon number `nbar`: the best-product
/// infidelity and the entanglement of formation (bits) for a coherent state
/// on eigenladder `ladder`, and the same for the single dressed Fock state
/// at `round(nbar)`.
#[pyfunction]
#[pyo3(signature = (nbar, n_res = 120, ladder = 0, f_r = 6.0, f_q = 5.0, eta = 0.2, g = 0.1, f_d = None))]
#[allow(clippy::too_many_arguments)]
fn entanglement_measures<'py>(
    py: Python<'py>,
    nbar: f64,
    n_res: usize,
    ladder: usize,
    f_r: f64,
    f_q: f64,
    eta: f64,
    g: f64,
    f_d: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let p = make_params(n_res, f_r, f_q, eta, g, f_d)?;
    let basis = DressedBasis::diagonalize(&p).map_err(err)?;

    let psi_coh =
        make_dressed_coherent(&basis, C64::new(nbar.sqrt(), 0.0), ladder).map_err(err)?;
    let c = basis.ladder_coeffs(&psi_coh, ladder);
    let pa = product_approx(&basis, &c, ladder).map_err(err)?;
    let ef_coh = entanglement_of_formation(&psi_coh).map_err(err)?;

    let n = nbar.round() as usize;
    if n + 1 > n_res {
        return Err(PyValueError::new_err(format!(
            "Fock level {n} needs n_res > {n}, got {n_res}"
        )));
    }
    let mut fock_c = vec![C64::ZERO; n + 1];
    fock_c[n] = C64::ONE;
    let psi_fock = basis.state_from_ladder(&fock_c, ladder);
    let bp = best_product_infidelity(&psi_fock).map_err(err)?;
    let ef_fock = entanglement_of_formation(&psi_fock).map_err(err)?;

    let d = PyDict::new(py);
    d.set_item("coherent_product_infidelity", pa.infidelity)?;
    d.set_item("coherent_entanglement", ef_coh)?;
    d.set_item("fock_product_infidelity", bp)?;
    d.set_item("fock_entanglement", ef_fock)?;
    Ok(d)
}

/// Readout-resonator ring-up toolkit: dressed-ladder spectrum quantities,
/// full Schrodinger ring-up summaries, perturbative leakage estimates, the
/// reduced squeezing model, and entanglement measures.
#[pymodule]
fn ringup_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("N_TRANSMON", ringup::model::N_TR)?;
    m.add_function(wrap_pyfunction!(critical_photon_number, m)?)?;
    m.add_function(wrap_pyfunction!(resonant_drive_frequency, m)?)?;
    m.add_function(wrap_pyfunction!(drive_detuning_ghz, m)?)?;
    m.add_function(wrap_pyfunction!(leakage_prediction, m)?)?;
    m.add_function(wrap_pyfunction!(ring_up, m)?)?;
    m.add_function(wrap_pyfunction!(reduced_ringup, m)?)?;
    m.add_function(wrap_pyfunction!(entanglement_measures, m)?)?;
    Ok(())
}
