use std::collections::BTreeMap;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use paneljump::critical::{critical_values, CriticalMethod, Sidedness};
use paneljump::dgp::{gen_dgp, DgpConfig, GammaScheme};
use paneljump::inference::{self, Center, TestConfig, ThresholdSearchResult, ThresholdSpec};
use paneljump::io::{render_report, render_tables, search_result_tables, PanelSchema, ReportFormat};
use paneljump::{BandwidthPolicy, Error, ErrorClass, Kernel, PanelData, Unit};

fn to_py(e: Error) -> PyErr {
    match (&e, e.class()) {
        (Error::Io { .. }, _) => PyOSError::new_err(e.to_string()),
        (_, ErrorClass::Numerical) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Long-format panel of (y, x) series keyed by unit id.
#[pyclass(name = "Panel", module = "paneljump_py", frozen)]
struct PyPanel {
    inner: PanelData,
}

#[pymethods]
impl PyPanel {
    /// `units` maps each unit id to a pair `(y, x)` of equal-length sequences.
    #[new]
    fn new(units: BTreeMap<String, (Vec<f64>, Vec<f64>)>) -> PyResult<Self> {
        let inner = units
            .into_iter()
            .map(|(id, (y, x))| Unit::new(id, y, x))
            .collect::<paneljump::Result<PanelData>>()
            .map_err(to_py)?;
        Ok(PyPanel { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (path, schema = "unit,time,y,x", delimiter = ","))]
    fn from_csv(path: &str, schema: &str, delimiter: &str) -> PyResult<Self> {
        let mut s: PanelSchema = schema.parse().map_err(to_py)?;
        s.delimiter = match delimiter.as_bytes() {
            [d] => *d,
            _ => return Err(PyValueError::new_err("delimiter must be one byte")),
        };
        let inner = paneljump::io::read_panel_csv(path.as_ref(), &s).map_err(to_py)?;
        Ok(PyPanel { inner })
    }

    #[getter]
    fn n_units(&self) -> usize {
        self.inner.n_units()
    }

    #[getter]
    fn unit_ids(&self) -> Vec<String> {
        self.inner.iter().map(|u| u.id.clone()).collect()
    }

    fn unit(&self, id: &str) -> PyResult<(Vec<f64>, Vec<f64>)> {
        self.inner
            .unit(id)
            .map(|u| (u.y.clone(), u.x.clone()))
            .ok_or_else(|| PyValueError::new_err(format!("no unit `{id}`")))
    }

    fn demeaned(&self) -> Self {
        let mut inner = self.inner.clone();
        inner.demean_units();
        PyPanel { inner }
    }

    fn __len__(&self) -> usize {
        self.inner.n_units()
    }

    fn __repr__(&self) -> String {
        format!("Panel(n_units={})", self.inner.n_units())
    }
}

/// Outcome of a max-type test.
#[pyclass(name = "TestResult", module = "paneljump_py", frozen)]
struct PyTestResult {
    inner: inference::TestResult,
}

#[pymethods]
impl PyTestResult {
    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind.name()
    }

    #[getter]
    fn statistic(&self) -> f64 {
        self.inner.statistic
    }

    #[getter]
    fn alphas(&self) -> Vec<f64> {
        self.inner.alphas.clone()
    }

    #[getter]
    fn critical_values(&self) -> Vec<f64> {
        self.inner.critical_values.clone()
    }

    #[getter]
    fn reject(&self) -> Vec<bool> {
        self.inner.reject.clone()
    }

    #[getter]
    fn n_effective(&self) -> usize {
        self.inner.n_effective()
    }

    #[getter]
    fn n_comparisons(&self) -> usize {
        self.inner.n_comparisons
    }

    #[getter]
    fn skipped(&self) -> Vec<(String, String)> {
        self.inner
            .skipped
            .iter()
            .map(|s| (s.unit_id.clone(), s.reason.clone()))
            .collect()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.clone()
    }

    /// Per-unit rows as dictionaries.
    fn per_unit<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner
            .per_unit
            .iter()
            .map(|u| {
                let d = PyDict::new(py);
                d.set_item("unit", &u.unit_id)?;
                d.set_item("threshold", u.threshold)?;
                d.set_item("bandwidth", u.bandwidth)?;
                d.set_item("gamma_hat", u.gamma_hat)?;
                d.set_item("deviation", u.deviation)?;
                d.set_item("std_err", u.std_err)?;
                d.set_item("stat", u.stat)?;
                d.set_item("scale", u.scale)?;
                d.set_item("obs", u.n_obs)?;
                d.set_item("eff_obs", u.eff_obs)?;
                Ok(d)
            })
            .collect()
    }

    fn rejects(&self, alpha: f64) -> PyResult<bool> {
        self.inner
            .rejects(alpha)
            .ok_or_else(|| PyValueError::new_err(format!("alpha {alpha} was not evaluated")))
    }

    #[pyo3(signature = (format = "csv"))]
    fn report(&self, format: &str) -> PyResult<String> {
        let f: ReportFormat = format.parse().map_err(to_py)?;
        render_report(&self.inner, f).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "TestResult(kind={}, statistic={}, n_effective={})",
            self.inner.kind.name(),
            self.inner.statistic,
            self.inner.n_effective()
        )
    }
}

/// Grid search over candidate thresholds.
#[pyclass(name = "SearchResult", module = "paneljump_py", frozen)]
struct PySearchResult {
    inner: ThresholdSearchResult,
}

#[pymethods]
impl PySearchResult {
    #[getter]
    fn statistic(&self) -> f64 {
        self.inner.statistic
    }

    #[getter]
    fn grid(&self) -> Vec<f64> {
        self.inner.grid.clone()
    }

    #[getter]
    fn c_hats(&self) -> Vec<(String, f64)> {
        self.inner.c_hats()
    }

    #[getter]
    fn critical_values(&self) -> Vec<f64> {
        self.inner.critical_values.clone()
    }

    #[getter]
    fn reject(&self) -> Vec<bool> {
        self.inner.reject.clone()
    }

    #[getter]
    fn n_comparisons(&self) -> usize {
        self.inner.n_comparisons
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.clone()
    }

    /// Signed statistic profile of one unit; `None` where a grid point has no fit.
    fn profile(&self, unit: &str) -> PyResult<Vec<Option<f64>>> {
        let u = self
            .inner
            .units
            .iter()
            .find(|u| u.unit_id == unit)
            .ok_or_else(|| PyValueError::new_err(format!("no unit `{unit}`")))?;
        Ok(u.points.iter().map(|p| p.as_ref().map(|p| p.stat)).collect())
    }

    fn to_test_result(&self) -> PyTestResult {
        PyTestResult {
            inner: self.inner.to_test_result(),
        }
    }

    #[pyo3(signature = (format = "csv"))]
    fn report(&self, format: &str) -> PyResult<String> {
        let f: ReportFormat = format.parse().map_err(to_py)?;
        render_tables(&search_result_tables(&self.inner), f).map_err(to_py)
    }
}

fn config(
    kernel: &str,
    bandwidth: &str,
    sided: &str,
    alphas: Vec<f64>,
    simulate: Option<(usize, u64)>,
) -> PyResult<TestConfig> {
    let cfg = TestConfig {
        kernel: kernel.parse::<Kernel>().map_err(to_py)?,
        bandwidth: bandwidth.parse::<BandwidthPolicy>().map_err(to_py)?,
        sidedness: sided.parse::<Sidedness>().map_err(to_py)?,
        alphas,
        critical: match simulate {
            Some((reps, seed)) => CriticalMethod::Simulated { reps, seed },
            None => CriticalMethod::Analytic,
        },
        ..TestConfig::default()
    };
    Ok(cfg)
}

fn threshold(t: Option<Bound<'_, PyAny>>) -> PyResult<ThresholdSpec> {
    match t {
        None => Ok(ThresholdSpec::Common(0.0)),
        Some(v) => match v.extract::<f64>() {
            Ok(c) => Ok(ThresholdSpec::Common(c)),
            Err(_) => Ok(ThresholdSpec::PerUnit(v.extract::<BTreeMap<String, f64>>()?)),
        },
    }
}

/// Existence test at known thresholds: a common float or a dict of per-unit values.
#[pyfunction]
#[pyo3(signature = (panel, threshold = None, bandwidth = "auto", kernel = "uniform", sided = "two",
    alphas = vec![0.10, 0.05, 0.01], reps = None, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn test_existence(
    panel: &PyPanel,
    threshold: Option<Bound<'_, PyAny>>,
    bandwidth: &str,
    kernel: &str,
    sided: &str,
    alphas: Vec<f64>,
    reps: Option<usize>,
    seed: u64,
) -> PyResult<PyTestResult> {
    let mut cfg = config(kernel, bandwidth, sided, alphas, reps.map(|r| (r, seed)))?;
    cfg.threshold = self::threshold(threshold)?;
    let inner = inference::test_existence(&panel.inner, &cfg).map_err(to_py)?;
    Ok(PyTestResult { inner })
}

/// Test that all units share one jump size.
#[pyfunction]
#[pyo3(signature = (panel, threshold = None, center = "mean", bandwidth = "auto", kernel = "uniform",
    sided = "two", alphas = vec![0.10, 0.05, 0.01], reps = None, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn test_homogeneity(
    panel: &PyPanel,
    threshold: Option<Bound<'_, PyAny>>,
    center: &str,
    bandwidth: &str,
    kernel: &str,
    sided: &str,
    alphas: Vec<f64>,
    reps: Option<usize>,
    seed: u64,
) -> PyResult<PyTestResult> {
    let mut cfg = config(kernel, bandwidth, sided, alphas, reps.map(|r| (r, seed)))?;
    cfg.threshold = self::threshold(threshold)?;
    cfg.center = center.parse::<Center>().map_err(to_py)?;
    let inner = inference::test_homogeneity(&panel.inner, &cfg).map_err(to_py)?;
    Ok(PyTestResult { inner })
}

/// Unknown-threshold existence test over a strictly increasing grid.
#[pyfunction]
#[pyo3(signature = (panel, grid, bandwidth = "auto", kernel = "uniform", sided = "two",
    alphas = vec![0.10, 0.05, 0.01]))]
fn search_thresholds(
    panel: &PyPanel,
    grid: Vec<f64>,
    bandwidth: &str,
    kernel: &str,
    sided: &str,
    alphas: Vec<f64>,
) -> PyResult<PySearchResult> {
    let cfg = config(kernel, bandwidth, sided, alphas, None)?;
    let inner = inference::search_thresholds(&panel.inner, &grid, &cfg).map_err(to_py)?;
    Ok(PySearchResult { inner })
}

/// Jump estimate `mu(c+) - mu(c-)` for one series.
#[pyfunction]
#[pyo3(signature = (y, x, c, b, kernel = "uniform"))]
fn estimate_jump(y: Vec<f64>, x: Vec<f64>, c: f64, b: f64, kernel: &str) -> PyResult<f64> {
    let k: Kernel = kernel.parse().map_err(to_py)?;
    let fit = paneljump::estimate_jump("", &y, &x, c, b, k).map_err(to_py)?;
    Ok(fit.gamma_hat)
}

/// Critical value of the maximum of `n` independent standard normals.
#[pyfunction]
#[pyo3(signature = (n, alpha = 0.05, sided = "two"))]
fn critical_value(n: usize, alpha: f64, sided: &str) -> PyResult<f64> {
    let s: Sidedness = sided.parse().map_err(to_py)?;
    let q = critical_values(n, &[alpha], s, CriticalMethod::Analytic, None).map_err(to_py)?;
    Ok(q[0])
}

/// Synthetic panel from design `dgp` (1 to 6). Returns the panel and true jumps.
#[pyfunction]
#[pyo3(signature = (dgp, n, t, seed = 0, fraction = 0.0, scale = 1.0))]
fn simulate_panel(
    dgp: u8,
    n: usize,
    t: usize,
    seed: u64,
    fraction: f64,
    scale: f64,
) -> PyResult<(PyPanel, Vec<f64>)> {
    let gamma_scheme = if fraction > 0.0 {
        GammaScheme::SparsePower { fraction, scale }
    } else {
        GammaScheme::Null
    };
    let cfg = DgpConfig {
        gamma_scheme,
        ..DgpConfig::new(dgp, n, t, seed)
    };
    let sim = gen_dgp(&cfg).map_err(to_py)?;
    Ok((PyPanel { inner: sim.panel }, sim.gammas))
}

#[pymodule]
fn paneljump_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPanel>()?;
    m.add_class::<PyTestResult>()?;
    m.add_class::<PySearchResult>()?;
    m.add_function(wrap_pyfunction!(test_existence, m)?)?;
    m.add_function(wrap_pyfunction!(test_homogeneity, m)?)?;
    m.add_function(wrap_pyfunction!(search_thresholds, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_jump, m)?)?;
    m.add_function(wrap_pyfunction!(critical_value, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_panel, m)?)?;
    Ok(())
}
