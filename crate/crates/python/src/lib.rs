//! Python module `qab`.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use qab_core::circuit::{conversion_ratio as ratio, Port, QabConfig};
use qab_core::config::{load_config, parse_config, to_toml};
use qab_core::harmonic_balance::PowerReport;
use qab_core::powerflow::{power_dispatch, solve_phase_shifts, PowerFlowError, PowerFlowProblem};
use qab_core::timedomain::{simulate_cycles_with, steady_state};
use qab_core::zvs::{zvs_check, zvs_check_timedomain};
use qab_core::{assemble_matrices, QabError};

create_exception!(qab, ConfigError, PyValueError);
create_exception!(qab, NonConvergenceError, PyRuntimeError);

fn to_py(e: QabError) -> PyErr {
    match e {
        QabError::Config(_)
        | QabError::ConfigFile(_)
        | QabError::InvalidArgument(_)
        | QabError::DivisionByZero(_)
        | QabError::SingularInductanceMatrix { .. } => ConfigError::new_err(e.to_string()),
        QabError::File { .. } | QabError::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn flow_to_py(e: PowerFlowError) -> PyErr {
    match e {
        PowerFlowError::Model(inner) => to_py(inner),
        PowerFlowError::InvalidProblem(_) => ConfigError::new_err(e.to_string()),
        _ => NonConvergenceError::new_err(e.to_string()),
    }
}

fn port(n: usize) -> PyResult<Port> {
    Port::from_number(n).ok_or_else(|| PyValueError::new_err(format!("port must be 1..4, got {n}")))
}

/// Converter description. Voltages in V, inductances in H, resistances in ohm,
/// frequency in Hz; all transformer values referred to the primary side.
#[pyclass(name = "Config", module = "qab", skip_from_py_object)]
#[derive(Clone)]
struct Config {
    inner: QabConfig,
}

#[pymethods]
impl Config {
    /// Table I hardware with 1 mH magnetizing inductance.
    #[staticmethod]
    fn table_one() -> Self {
        Config {
            inner: QabConfig::table_one(),
        }
    }

    /// Table I transformer at the 30.86/26.07/30.72/27.3 V low-power test point.
    #[staticmethod]
    fn low_power_experiment() -> Self {
        Config {
            inner: QabConfig::low_power_experiment(),
        }
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        Ok(Config {
            inner: load_config(path).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Config {
            inner: parse_config(text).map_err(to_py)?,
        })
    }

    fn to_toml(&self) -> String {
        to_toml(&self.inner)
    }

    /// Raises `ConfigError` listing every violated constraint.
    fn validate(&self) -> PyResult<()> {
        self.inner.check().map_err(|e| to_py(e.into()))
    }

    fn conversion_ratio(&self, port_number: usize) -> PyResult<f64> {
        ratio(&self.inner, port(port_number)?).map_err(to_py)
    }

    #[getter]
    fn v_dc(&self) -> [f64; 4] {
        self.inner.v_dc
    }

    #[setter]
    fn set_v_dc(&mut self, v: [f64; 4]) {
        self.inner.v_dc = v;
    }

    #[getter]
    fn delta(&self) -> [f64; 4] {
        self.inner.delta
    }

    #[setter]
    fn set_delta(&mut self, d: [f64; 4]) {
        self.inner.delta = d;
    }

    #[getter]
    fn l_leak(&self) -> [[f64; 2]; 4] {
        self.inner.l_leak
    }

    #[setter]
    fn set_l_leak(&mut self, l: [[f64; 2]; 4]) {
        self.inner.l_leak = l;
    }

    #[getter]
    fn l_mag(&self) -> [f64; 4] {
        self.inner.l_mag
    }

    #[setter]
    fn set_l_mag(&mut self, l: [f64; 4]) {
        self.inner.l_mag = l;
    }

    #[getter]
    fn r_wind(&self) -> [[f64; 2]; 4] {
        self.inner.r_wind
    }

    #[setter]
    fn set_r_wind(&mut self, r: [[f64; 2]; 4]) {
        self.inner.r_wind = r;
    }

    #[getter]
    fn turns(&self) -> [f64; 4] {
        self.inner.turns
    }

    #[setter]
    fn set_turns(&mut self, n: [f64; 4]) {
        self.inner.turns = n;
    }

    #[getter]
    fn f_sw(&self) -> f64 {
        self.inner.f_sw
    }

    #[setter]
    fn set_f_sw(&mut self, f: f64) {
        self.inner.f_sw = f;
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(v_dc={:?}, delta={:?}, f_sw={})",
            self.inner.v_dc, self.inner.delta, self.inner.f_sw
        )
    }
}

fn report_dict<'py>(py: Python<'py>, r: &PowerReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("p", r.p)?;
    d.set_item("q", r.q)?;
    d.set_item("p13", r.p13)?;
    d.set_item("p_copper", r.p_copper)?;
    d.set_item("i_peak", r.i_peak)?;
    Ok(d)
}

/// Harmonic-balance port powers at the configured phase shifts.
#[pyfunction]
fn dispatch<'py>(py: Python<'py>, cfg: PyRef<'py, Config>) -> PyResult<Bound<'py, PyDict>> {
    let r = power_dispatch(&cfg.inner).map_err(to_py)?;
    report_dict(py, &r)
}

/// Phase shifts making ports 2 and 4 absorb `p2` and `p4` watts.
#[pyfunction]
#[pyo3(signature = (cfg, p2, p4, p13_target = 0.0))]
fn solve<'py>(
    py: Python<'py>,
    cfg: PyRef<'py, Config>,
    p2: f64,
    p4: f64,
    p13_target: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let mut problem = PowerFlowProblem::new(cfg.inner.clone(), p2, p4);
    problem.p13_target = p13_target;
    let sol = py
        .detach(|| solve_phase_shifts(&problem))
        .map_err(flow_to_py)?;
    let d = PyDict::new(py);
    d.set_item("delta", sol.delta)?;
    d.set_item("iterations", sol.iterations)?;
    d.set_item("residual", sol.residual_norm)?;
    d.set_item("report", report_dict(py, &sol.report)?)?;
    d.set_item(
        "config",
        Config {
            inner: sol.config(&cfg.inner),
        },
    )?;
    Ok(d)
}

/// Switching-instant currents and ZVS verdicts.
#[pyfunction]
#[pyo3(signature = (cfg, timedomain = false))]
fn zvs<'py>(
    py: Python<'py>,
    cfg: PyRef<'py, Config>,
    timedomain: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let inner = cfg.inner.clone();
    let r = py
        .detach(|| {
            if timedomain {
                zvs_check_timedomain(&inner)
            } else {
                zvs_check(&inner)
            }
        })
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("i_sw", r.i_sw)?;
    d.set_item("zvs", r.zvs)?;
    d.set_item("margin", r.margin)?;
    d.set_item("q", r.q)?;
    Ok(d)
}

/// Periodic steady-state waveforms: `t`, `v` and `i` (four lists each), `i5`, `vac`.
#[pyfunction]
#[pyo3(signature = (cfg, cycles = 1, samples_per_cycle = 512))]
fn simulate<'py>(
    py: Python<'py>,
    cfg: PyRef<'py, Config>,
    cycles: usize,
    samples_per_cycle: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let inner = cfg.inner.clone();
    inner.check().map_err(|e| to_py(e.into()))?;
    let rec = py
        .detach(|| {
            let mats = assemble_matrices(&inner)?;
            let x0 = steady_state(&inner, &mats)?;
            simulate_cycles_with(&inner, &mats, x0, cycles, samples_per_cycle)
        })
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("t", &rec.t)?;
    d.set_item("v", Port::ALL.map(|p| rec.voltage(p)))?;
    d.set_item("i", Port::ALL.map(|p| rec.current(p)))?;
    d.set_item("i5", &rec.i5)?;
    d.set_item("vac", &rec.v_ac)?;
    d.set_item("average_power", rec.average_power())?;
    Ok(d)
}

#[pymodule]
fn qab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Config>()?;
    m.add("ConfigError", m.py().get_type::<ConfigError>())?;
    m.add(
        "NonConvergenceError",
        m.py().get_type::<NonConvergenceError>(),
    )?;
    m.add_function(wrap_pyfunction!(dispatch, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(zvs, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
