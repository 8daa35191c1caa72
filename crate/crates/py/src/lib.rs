//! Python bindings. Fields cross the boundary as flat row-major lists of
//! length `n * n` (x fastest), on the grid `[-half_width, half_width)²`.

use std::collections::HashMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use nullwave::decay::{self, DecayFit};
use nullwave::energies::EnergyReport;
use nullwave::error::Error;
use nullwave::evolve::{self, DataProfile, DiagnosticToggles, GridSpec, SimConfig};
use nullwave::experiments::{self, SeriesSet};
use nullwave::grid::{Field2D, Grid2D, Scheme};
use nullwave::identities::{self, CheckKind};
use nullwave::linear::{self, PropagatorKind};
use nullwave::nullforms::{self, Couplings, Jet1};
use nullwave::picard::{self, PicardConfig};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::ConfigRejected(m) => PyValueError::new_err(m),
        Error::InvalidGrid(_) | Error::InvalidField(_) | Error::GridMismatch | Error::OutOfDomain(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn couplings_named(name: &str) -> PyResult<Couplings> {
    match name {
        "generic" => Ok(Couplings::generic()),
        "zero" => Ok(Couplings::zero()),
        _ => Err(PyValueError::new_err(format!("unknown couplings '{name}' (generic, zero)"))),
    }
}

fn profile_named(name: &str) -> PyResult<DataProfile> {
    match name {
        "gaussian-bump" => Ok(DataProfile::GaussianBump),
        "ring" => Ok(DataProfile::Ring),
        "two-bump" => Ok(DataProfile::TwoBump),
        _ => Err(PyValueError::new_err(format!("unknown profile '{name}'"))),
    }
}

fn field(n: usize, half_width: f64, values: Vec<f64>) -> PyResult<Field2D> {
    let g = Grid2D::centered(n, half_width).map_err(to_py)?;
    Field2D::from_values(g, values).map_err(to_py)
}

/// Evolution settings; see the command-line config for the meaning of each.
#[pyclass(name = "SimConfig", module = "nullwave_py")]
#[derive(Clone)]
pub struct PySimConfig {
    pub inner: SimConfig,
}

#[pymethods]
impl PySimConfig {
    #[new]
    #[pyo3(signature = (n, half_width, epsilon, t_end, *, cfl=0.5, output_every=1.0, couplings="generic",
        profile="gaussian-bump", scheme="spectral", delta=0.1, energies=true, ghost=true,
        gamma_energies=true, gamma_stride=1))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        n: usize,
        half_width: f64,
        epsilon: f64,
        t_end: f64,
        cfl: f64,
        output_every: f64,
        couplings: &str,
        profile: &str,
        scheme: &str,
        delta: f64,
        energies: bool,
        ghost: bool,
        gamma_energies: bool,
        gamma_stride: usize,
    ) -> PyResult<Self> {
        let mut c = SimConfig::new(GridSpec { n, half_width }, epsilon, t_end);
        c.cfl = cfl;
        c.output_every = output_every;
        c.couplings = couplings_named(couplings)?;
        c.profile = profile_named(profile)?;
        c.scheme = match scheme {
            "spectral" => Scheme::Spectral,
            "fd4" => Scheme::Fd4,
            _ => return Err(PyValueError::new_err(format!("unknown scheme '{scheme}'"))),
        };
        c.delta = delta;
        c.diagnostics = DiagnosticToggles { energies, ghost, gamma_energies, gamma_stride };
        c.validate().map_err(to_py)?;
        Ok(Self { inner: c })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.grid.n
    }
    #[getter]
    fn half_width(&self) -> f64 {
        self.inner.grid.half_width
    }
    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon
    }
    #[getter]
    fn t_end(&self) -> f64 {
        self.inner.t_end
    }

    /// `(snapshots, steps per snapshot, dt)`
    fn time_plan(&self) -> (usize, usize, f64) {
        self.inner.time_plan()
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "SimConfig(n={}, half_width={}, epsilon={}, t_end={}, cfl={})",
            c.grid.n, c.grid.half_width, c.epsilon, c.t_end, c.cfl
        )
    }
}

#[pyclass(name = "DecayFit", module = "nullwave_py", get_all)]
#[derive(Clone)]
pub struct PyDecayFit {
    pub series_id: String,
    pub exponent: f64,
    pub amplitude: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub rsq: f64,
}

impl From<DecayFit> for PyDecayFit {
    fn from(f: DecayFit) -> Self {
        Self { series_id: f.series_id, exponent: f.exponent, amplitude: f.amplitude, t_lo: f.t_lo, t_hi: f.t_hi, rsq: f.rsq }
    }
}

#[pymethods]
impl PyDecayFit {
    fn __repr__(&self) -> String {
        format!("DecayFit({}, exponent={:.4}, rsq={:.5}, window=[{}, {}])", self.series_id, self.exponent, self.rsq, self.t_lo, self.t_hi)
    }
}

/// Diagnostics of one evolution.
#[pyclass(name = "RunResult", module = "nullwave_py", get_all)]
pub struct PyRunResult {
    pub steps: usize,
    pub dt: f64,
    /// `(t, max|u|, max|v|)` after every step
    pub sup_history: Vec<(f64, f64, f64)>,
    pub energy_columns: Vec<String>,
    /// one row per snapshot, in `energy_columns` order
    pub energies: Vec<Vec<f64>>,
    /// standard weighted sup series, `(t, value)` per snapshot
    pub series: HashMap<String, Vec<(f64, f64)>>,
    /// final `(u, u_t, v, v_t)`
    pub final_state: (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>),
}

#[pymethods]
impl PyRunResult {
    /// Fits of the unweighted series; the window defaults to `[T/4, T]`.
    #[pyo3(signature = (window=None))]
    fn fits(&self, window: Option<(f64, f64)>) -> PyResult<Vec<PyDecayFit>> {
        let t_end = self.sup_history.last().map_or(0.0, |h| h.0);
        let w = window.unwrap_or_else(|| decay::default_window(t_end));
        let mut ids: Vec<&String> = self.series.keys().filter(|k| !k.contains("weighted")).collect();
        ids.sort();
        ids.into_iter()
            .map(|id| decay::fit_power_law(&self.series[id], w, id).map(Into::into).map_err(to_py))
            .collect()
    }
}

/// Evolve `config` to its end time. The GIL is released while running.
#[pyfunction]
fn simulate(py: Python<'_>, config: &PySimConfig) -> PyResult<PyRunResult> {
    let cfg = config.inner;
    py.allow_threads(move || {
        let mut set = SeriesSet::standard();
        let mut energies = Vec::new();
        let mut last = None;
        let summary = evolve::run(&cfg, &mut |s| {
            set.observe(s, cfg.scheme)?;
            if let Some(r) = &s.report {
                energies.push(r.csv_row().to_vec());
            }
            last = Some(s.state.clone());
            Ok(())
        })?;
        let st = last.ok_or(Error::InsufficientTimeLevels { needed: 1, got: 0 })?;
        let series = set.specs.iter().map(|s| s.id.clone()).zip(set.values).collect();
        Ok(PyRunResult {
            steps: summary.steps,
            dt: summary.dt,
            sup_history: summary.sup_history,
            energy_columns: EnergyReport::CSV_HEADER.iter().map(|s| s.to_string()).collect(),
            energies,
            series,
            final_state: (st.u.values().to_vec(), st.ut.values().to_vec(), st.v.values().to_vec(), st.vt.values().to_vec()),
        })
    })
    .map_err(to_py)
}

/// Least-squares fit of `value ≈ amplitude · t^exponent` on `[t_lo, t_hi]`.
#[pyfunction]
#[pyo3(signature = (t, values, t_lo, t_hi, series_id="series"))]
fn fit_power_law(t: Vec<f64>, values: Vec<f64>, t_lo: f64, t_hi: f64, series_id: &str) -> PyResult<PyDecayFit> {
    if t.len() != values.len() {
        return Err(PyValueError::new_err("t and values differ in length"));
    }
    let s: Vec<(f64, f64)> = t.into_iter().zip(values).collect();
    decay::fit_power_law(&s, (t_lo, t_hi), series_id).map(Into::into).map_err(to_py)
}

/// Free evolution of `(-□ + mass²) w = 0` to time `t`; returns `(w, w_t)`.
#[pyfunction]
fn propagate_free(
    mass: f64,
    n: usize,
    half_width: f64,
    w0: Vec<f64>,
    w1: Vec<f64>,
    t: f64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    if !(mass >= 0.0 && mass.is_finite()) {
        return Err(PyValueError::new_err("mass must be finite and >= 0"));
    }
    let (a, b) = (field(n, half_width, w0)?, field(n, half_width, w1)?);
    let (w, wt) = linear::propagate_free(PropagatorKind::new(mass), &a, &b, t).map_err(to_py)?;
    Ok((w.values().to_vec(), wt.values().to_vec()))
}

/// Free wave with zero position and velocity `w1`, at `(t, x, y)`, by
/// quadrature of the disc integral.
#[pyfunction]
fn representation_oracle(n: usize, half_width: f64, w1: Vec<f64>, t: f64, x: f64, y: f64) -> PyResult<f64> {
    linear::representation_oracle(&field(n, half_width, w1)?, t, (x, y)).map_err(to_py)
}

/// Node coordinates of the grid along one axis.
#[pyfunction]
fn grid_axis(n: usize, half_width: f64) -> PyResult<Vec<f64>> {
    let g = Grid2D::centered(n, half_width).map_err(to_py)?;
    Ok((0..g.nx).map(|i| g.x(i)).collect())
}

fn jet(j: (f64, f64, f64, f64)) -> PyResult<Jet1> {
    Jet1::new(j.0, j.1, j.2, j.3).map_err(to_py)
}

/// `Q_0(u, v)` from first jets `(w, w_t, w_x1, w_x2)`.
#[pyfunction]
fn q0(ju: (f64, f64, f64, f64), jv: (f64, f64, f64, f64)) -> PyResult<f64> {
    Ok(nullforms::q0(&jet(ju)?, &jet(jv)?))
}

/// `Q_αβ(u, v)`, indices 0 = t, 1 = x1, 2 = x2.
#[pyfunction]
fn q_ab(alpha: usize, beta: usize, ju: (f64, f64, f64, f64), jv: (f64, f64, f64, f64)) -> PyResult<f64> {
    if alpha > 2 || beta > 2 {
        return Err(PyValueError::new_err("indices must be 0, 1 or 2"));
    }
    Ok(nullforms::q_ab(alpha, beta, &jet(ju)?, &jet(jv)?))
}

/// The identity corpus as `(name, kind, value, passed)` rows.
#[pyfunction]
fn identity_corpus(py: Python<'_>) -> PyResult<Vec<(String, String, f64, bool)>> {
    let checks = py.allow_threads(identities::run_corpus).map_err(to_py)?;
    Ok(checks
        .into_iter()
        .map(|c| {
            let kind = match c.kind {
                CheckKind::Exact => "exact",
                CheckKind::Order => "order",
            };
            (c.name, kind.to_string(), c.value, c.passed)
        })
        .collect())
}

/// Picard iteration from the zero pair; returns a dict with the iteration
/// records, convergence flag and the contraction ratio against zero.
#[pyfunction]
#[pyo3(signature = (n, half_width, epsilon, t_end, *, dt=0.25, delta=0.5, max_iter=12, tol=1e-9,
    xnorm_stride=2, couplings="generic", profile="gaussian-bump"))]
#[allow(clippy::too_many_arguments)]
fn picard_iterate<'py>(
    py: Python<'py>,
    n: usize,
    half_width: f64,
    epsilon: f64,
    t_end: f64,
    dt: f64,
    delta: f64,
    max_iter: usize,
    tol: f64,
    xnorm_stride: usize,
    couplings: &str,
    profile: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = PicardConfig {
        grid: GridSpec { n, half_width },
        couplings: couplings_named(couplings)?,
        epsilon,
        profile: profile_named(profile)?,
        t_end,
        dt,
        delta,
        max_iter,
        tol,
        xnorm_stride,
    };
    let out = py.allow_threads(|| picard::picard_iterate(&cfg, &mut |_| {})).map_err(to_py)?;
    let d = PyDict::new_bound(py);
    let records: Vec<(usize, f64, f64, Option<f64>, f64)> =
        out.records.iter().map(|r| (r.iter, r.x_norm_value, r.diff_norm, r.ratio, r.wall_time_s)).collect();
    d.set_item("records", records)?;
    d.set_item("converged", out.converged)?;
    d.set_item("contraction_vs_zero", out.contraction_vs_zero)?;
    d.set_item("final_sups", out.last.final_sups())?;
    Ok(d)
}

/// `(largest relative propagator/oracle difference at 10 nodes,
/// free vs zero-source Duhamel difference)` at time `t`.
#[pyfunction]
#[pyo3(signature = (t=6.0))]
fn oracle_equivalence(py: Python<'_>, t: f64) -> PyResult<(f64, f64)> {
    let r = py.allow_threads(|| experiments::oracle_equivalence(t)).map_err(to_py)?;
    Ok((r.max_rel_quadrature, r.free_vs_sourced))
}

/// Temporal self-convergence order of the nonlinear integrator.
#[pyfunction]
fn self_convergence(py: Python<'_>, config: &PySimConfig) -> PyResult<f64> {
    let cfg = config.inner;
    py.allow_threads(|| experiments::self_convergence(&cfg)).map(|r| r.order).map_err(to_py)
}

#[pymodule]
fn nullwave_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySimConfig>()?;
    m.add_class::<PyRunResult>()?;
    m.add_class::<PyDecayFit>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(fit_power_law, m)?)?;
    m.add_function(wrap_pyfunction!(propagate_free, m)?)?;
    m.add_function(wrap_pyfunction!(representation_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(grid_axis, m)?)?;
    m.add_function(wrap_pyfunction!(q0, m)?)?;
    m.add_function(wrap_pyfunction!(q_ab, m)?)?;
    m.add_function(wrap_pyfunction!(identity_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(picard_iterate, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_equivalence, m)?)?;
    m.add_function(wrap_pyfunction!(self_convergence, m)?)?;
    Ok(())
}
