use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use cpo_core as core;
use cpo_core::{FitOptions, ModelSpec, ScanOptions, SteadyStateOptions, SweepOptions, Tier};

fn to_py(e: core::Error) -> PyErr {
    if e.is_config_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn tier(name: &str) -> PyResult<Tier> {
    name.parse().map_err(to_py)
}

/// Physical parameters. Give the drive as `Omega`, as `Omega1` and
/// `Omega2`, or as a saturation parameter `S`.
#[pyclass(name = "SystemParams", module = "cpo", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySystemParams {
    inner: core::SystemParams,
}

#[pymethods]
impl PySystemParams {
    #[new]
    #[pyo3(signature = (gamma=1.0, epsilon=0.0, Gamma=10.0, omega0=0.0, omega1=0.0, omega2=0.0,
                        Omega=None, Omega1=None, Omega2=None, S=None, n1_eq=1.0, n0_eq=0.0))]
    #[allow(non_snake_case, clippy::too_many_arguments)]
    fn new(
        gamma: f64,
        epsilon: f64,
        Gamma: f64,
        omega0: f64,
        omega1: f64,
        omega2: f64,
        Omega: Option<f64>,
        Omega1: Option<f64>,
        Omega2: Option<f64>,
        S: Option<f64>,
        n1_eq: f64,
        n0_eq: f64,
    ) -> PyResult<Self> {
        let cfg = core::ParamsConfig {
            gamma,
            epsilon,
            gamma_coh: Gamma,
            omega0,
            omega1,
            omega2,
            rabi: Omega,
            rabi1: Omega1,
            rabi2: Omega2,
            saturation: S,
            n1_eq,
            n0_eq,
        };
        Ok(Self {
            inner: cfg.try_into().map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: core::SystemParams::from_json(text).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma()
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon()
    }

    #[getter]
    fn beat(&self) -> f64 {
        self.inner.beat()
    }

    fn saturation(&self) -> PyResult<f64> {
        self.inner.saturation_parameter().map_err(to_py)
    }

    fn with_beat(&self, delta: f64) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.with_beat(delta).map_err(to_py)?,
        })
    }

    fn with_saturation(&self, s: f64) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.with_saturation(s).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("SystemParams({})", self.inner.to_json())
    }
}

#[pyclass(name = "ResonanceShape", module = "cpo", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyResonanceShape {
    background: f64,
    a0: f64,
    a1: f64,
    w0: f64,
    w1: f64,
    source: String,
}

impl From<core::ResonanceShape> for PyResonanceShape {
    fn from(s: core::ResonanceShape) -> Self {
        Self {
            background: s.background,
            a0: s.a0,
            a1: s.a1,
            w0: s.w0,
            w1: s.w1,
            source: format!("{:?}", s.source).to_lowercase(),
        }
    }
}

#[pymethods]
impl PyResonanceShape {
    fn __repr__(&self) -> String {
        format!(
            "ResonanceShape(B={:.6e}, A0={:.6}, A1={:.6}, w0={:.6e}, w1={:.6e})",
            self.background, self.a0, self.a1, self.w0, self.w1
        )
    }
}

#[pyclass(name = "DressedFrame", module = "cpo", frozen, get_all)]
struct PyDressedFrame {
    lambda0: f64,
    lambda1: f64,
    theta: f64,
    n_bar: (f64, f64),
    eta_bar: (f64, f64),
}

#[pyclass(name = "FitResult", module = "cpo", frozen, skip_from_py_object)]
struct PyFitResult {
    inner: core::CompositeFit,
}

#[pymethods]
impl PyFitResult {
    /// `(amplitude, half_width)` pairs sorted by width.
    #[getter]
    fn components(&self) -> Vec<(f64, f64)> {
        self.inner
            .sorted_components()
            .iter()
            .map(|c| (c.amplitude, c.half_width))
            .collect()
    }

    #[getter]
    fn center(&self) -> f64 {
        self.inner.center
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn status(&self) -> String {
        self.inner.status.clone()
    }

    #[getter]
    fn residual_norm(&self) -> f64 {
        self.inner.residual_norm
    }

    #[getter]
    fn identifiability_warning(&self) -> Option<String> {
        self.inner.identifiability_warning.clone()
    }

    /// Normalized two-component form, if the model has one.
    fn resonance(&self) -> Option<PyResonanceShape> {
        self.inner.to_resonance_shape().ok().map(Into::into)
    }

    fn __call__(&self, delta: f64) -> f64 {
        self.inner.eval(delta)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }
}

/// Closed-form background, amplitudes and widths.
#[pyfunction]
fn resonance_shape(params: &PySystemParams) -> PyResult<PyResonanceShape> {
    let reduced = params.inner.with_beat(0.0).and_then(|p| p.reduced()).map_err(to_py)?;
    Ok(core::resonance_shape(&reduced).map_err(to_py)?.into())
}

/// Closed-form lineshape at beat detuning `delta`.
#[pyfunction]
fn fluorescence_signal(params: &PySystemParams, delta: f64) -> PyResult<f64> {
    let reduced = params.inner.with_beat(0.0).and_then(|p| p.reduced()).map_err(to_py)?;
    core::fluorescence_signal(delta, &reduced).map_err(to_py)
}

#[pyfunction]
fn eigen_frame(params: &PySystemParams) -> PyResult<PyDressedFrame> {
    let reduced = params.inner.reduced().map_err(to_py)?;
    let f = core::eigen_frame(&reduced).map_err(to_py)?;
    Ok(PyDressedFrame {
        lambda0: f.lambda0,
        lambda1: f.lambda1,
        theta: f.theta,
        n_bar: (f.n_bar.n1, f.n_bar.n0),
        eta_bar: (f.eta_bar[0], f.eta_bar[1]),
    })
}

/// Period-averaged `n1 - n0` at the configured beat, for one tier.
#[pyfunction]
#[pyo3(signature = (params, tier="harmonic"))]
fn steady_difference(py: Python<'_>, params: &PySystemParams, tier: &str) -> PyResult<f64> {
    let t = self::tier(tier)?;
    let p = params.inner;
    py.detach(|| core::scan::signal_at(&p, p.beat(), t, &ScanOptions::default()))
        .map_err(to_py)
}

/// Fourier coefficients `(k, n1(k), n0(k))` of the periodic solution.
#[pyfunction]
#[pyo3(signature = (params, order=None))]
fn harmonic_balance(params: &PySystemParams, order: Option<usize>) -> PyResult<Vec<(i64, (f64, f64), (f64, f64))>> {
    let n = match order {
        Some(n) => n,
        None => core::auto_truncation(&params.inner, 1e-10).map_err(to_py)?,
    };
    let sol = core::solve_harmonic_balance(&params.inner, n).map_err(to_py)?;
    let n = sol.order as i64;
    Ok((-n..=n)
        .map(|k| {
            let (a, b) = (sol.n1(k), sol.n0(k));
            (k, (a.re, a.im), (b.re, b.im))
        })
        .collect())
}

/// δ-scan; returns the signal values in grid order.
#[pyfunction]
#[pyo3(signature = (params, deltas, tier="analytic"))]
fn scan(py: Python<'_>, params: &PySystemParams, deltas: Vec<f64>, tier: &str) -> PyResult<Vec<f64>> {
    let t = self::tier(tier)?;
    let p = params.inner;
    let spectrum = py
        .detach(|| core::scan_delta(&p, &deltas, t, &ScanOptions::default()))
        .map_err(to_py)?;
    Ok(spectrum.signal().to_vec())
}

/// Resonance parameters per saturation value; `None` marks a failed row.
#[pyfunction]
#[pyo3(signature = (params, s_values, tier="analytic"))]
fn sweep(py: Python<'_>, params: &PySystemParams, s_values: Vec<f64>, tier: &str) -> PyResult<Vec<Option<PyResonanceShape>>> {
    let t = self::tier(tier)?;
    let p = params.inner;
    let rows = py
        .detach(|| core::sweep_power(&p, &s_values, t, &SweepOptions::default()))
        .map_err(to_py)?;
    Ok(rows.into_iter().map(|r| r.shape.map(Into::into)).collect())
}

/// Composite Lorentzian fit. `model` is "theory", "hole" or "experimental";
/// `guess` may be the JSON of an earlier fit.
#[pyfunction]
#[pyo3(signature = (deltas, signal, model="theory", guess=None))]
fn fit(
    py: Python<'_>,
    deltas: Vec<f64>,
    signal: Vec<f64>,
    model: &str,
    guess: Option<&str>,
) -> PyResult<PyFitResult> {
    let spec = match model {
        "theory" => ModelSpec::theory(),
        "hole" => ModelSpec::theory_with_hole(),
        "experimental" => ModelSpec::experimental(),
        other => return Err(PyValueError::new_err(format!("unknown model `{other}`"))),
    };
    let spectrum = core::Spectrum::new(deltas, signal, Tier::Imported, core::SpectrumSource::Synthetic).map_err(to_py)?;
    let init = match guess {
        Some(text) => serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => core::auto_initial_guess(&spectrum, &spec).map_err(to_py)?,
    };
    let inner = py
        .detach(|| core::fit_composite(&spectrum, &init, &FitOptions::default()))
        .map_err(to_py)?;
    Ok(PyFitResult { inner })
}

/// Default steady-state settings, for reference from Python.
#[pyfunction]
fn steady_state_defaults() -> (f64, usize, f64, f64) {
    let o = SteadyStateOptions::default();
    (o.tol, o.samples_per_period, o.rel_change, o.max_time_gamma)
}

#[pymodule]
fn cpo(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystemParams>()?;
    m.add_class::<PyResonanceShape>()?;
    m.add_class::<PyDressedFrame>()?;
    m.add_class::<PyFitResult>()?;
    m.add_function(wrap_pyfunction!(resonance_shape, m)?)?;
    m.add_function(wrap_pyfunction!(fluorescence_signal, m)?)?;
    m.add_function(wrap_pyfunction!(eigen_frame, m)?)?;
    m.add_function(wrap_pyfunction!(steady_difference, m)?)?;
    m.add_function(wrap_pyfunction!(harmonic_balance, m)?)?;
    m.add_function(wrap_pyfunction!(scan, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(steady_state_defaults, m)?)?;
    Ok(())
}
