use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use deductive_core::baseline::{km_complete_case as km_c, km_stratified as km_s, BaselineResult, DEFAULT_BOOTSTRAP};
use deductive_core::data::{write_csv, ColumnSpec};
use deductive_core::engine::DEFAULT_EPSILON;
use deductive_core::sim::pepfar::{cohort_columns, default_cohort};
use deductive_core::sim::{self, EstimatorKind, GenerativeModel, HarnessConfig};
use deductive_core::{build_support, DeductiveEstimator, EstimationResult, EstimatorConfig, FitOptions, SelectionFormula, Variant};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn model(gm: u8) -> PyResult<GenerativeModel> {
    GenerativeModel::from_number(gm).ok_or_else(|| PyValueError::new_err(format!("gm must be 1 or 2, got {gm}")))
}

/// Observed double-sampling data in canonical order.
#[pyclass(frozen, module = "deductive")]
struct Dataset {
    inner: deductive_core::Dataset,
    columns: ColumnSpec,
}

#[pymethods]
impl Dataset {
    /// Reads a CSV with columns c, r_obs, the z and w columns, s, x, delta.
    #[staticmethod]
    #[pyo3(signature = (path, z_cols, w_cols))]
    fn from_csv(path: &str, z_cols: Vec<String>, w_cols: Vec<String>) -> PyResult<Self> {
        let columns = ColumnSpec {
            z: z_cols,
            w: w_cols,
            ..ColumnSpec::default()
        };
        let inner = deductive_core::parse_csv(path, &columns).map_err(|e| match e {
            deductive_core::DataError::Io(_) => PyIOError::new_err(e.to_string()),
            other => value_err(other),
        })?;
        Ok(Self { inner, columns })
    }

    /// A simulated dataset from generative model 1 or 2.
    #[staticmethod]
    #[pyo3(signature = (gm, n, seed = 1, stream = 0))]
    fn simulate(gm: u8, n: usize, seed: u64, stream: u64) -> PyResult<Self> {
        if n == 0 {
            return Err(PyValueError::new_err("n must be positive"));
        }
        Ok(Self {
            inner: sim::generate(model(gm)?, n, seed, stream),
            columns: ColumnSpec::with_covariates(&["z"], &["l"]),
        })
    }

    /// The bundled synthetic cohort (age, cd4; dropout_time).
    #[staticmethod]
    fn cohort() -> Self {
        Self {
            inner: default_cohort(),
            columns: cohort_columns(),
        }
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    /// Observed dropouts.
    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    /// Double-sampled dropouts.
    #[getter]
    fn m1(&self) -> usize {
        self.inner.m1()
    }

    #[getter]
    fn z_cols(&self) -> Vec<String> {
        self.columns.z.clone()
    }

    #[getter]
    fn w_cols(&self) -> Vec<String> {
        self.columns.w.clone()
    }

    /// Masks double-samples whose dropout was more than `gamma` before `c`.
    #[pyo3(signature = (gamma, column = None))]
    fn restrict(&self, gamma: f64, column: Option<&str>) -> PyResult<Self> {
        let index = match column {
            Some(name) => self
                .columns
                .w
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| PyValueError::new_err(format!("'{name}' is not a w column")))?,
            None => 0,
        };
        let inner = sim::apply_gamma_restriction(&self.inner, gamma, index).map_err(value_err)?;
        Ok(Self {
            inner,
            columns: self.columns.clone(),
        })
    }

    /// The dataset as CSV text.
    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        write_csv(&self.inner, &self.columns, &mut buf).map_err(value_err)?;
        String::from_utf8(buf).map_err(value_err)
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(n={}, m={}, m1={})", self.inner.n(), self.inner.m(), self.inner.m1())
    }
}

/// A point estimate of `P(T > t)` with its 95% interval.
#[pyclass(frozen, get_all, module = "deductive")]
struct Estimate {
    t: f64,
    tau: f64,
    se: f64,
    ci_lo: f64,
    ci_hi: f64,
    /// `None` for the Kaplan-Meier estimators.
    alpha: Option<f64>,
    /// Per-subject Gateaux derivatives in dataset order (empty for Kaplan-Meier).
    gateaux: Vec<f64>,
}

#[pymethods]
impl Estimate {
    #[getter]
    fn mortality(&self) -> f64 {
        1.0 - self.tau
    }

    fn __repr__(&self) -> String {
        let alpha = self.alpha.map_or_else(String::new, |a| format!(", alpha={a:.4}"));
        format!(
            "Estimate(t={}, tau={:.4}, se={:.4}, ci=({:.4}, {:.4}){alpha})",
            self.t, self.tau, self.se, self.ci_lo, self.ci_hi
        )
    }
}

impl From<EstimationResult> for Estimate {
    fn from(r: EstimationResult) -> Self {
        Self {
            t: r.t,
            tau: r.tau_hat,
            se: r.se,
            ci_lo: r.ci_lo,
            ci_hi: r.ci_hi,
            alpha: Some(r.alpha_hat),
            gateaux: r.gateaux_values,
        }
    }
}

impl From<BaselineResult> for Estimate {
    fn from(r: BaselineResult) -> Self {
        Self {
            t: r.t,
            tau: r.estimate,
            se: r.se,
            ci_lo: r.ci_lo,
            ci_hi: r.ci_hi,
            alpha: None,
            gateaux: Vec::new(),
        }
    }
}

/// Deductive estimates of `P(T > t)` at each time point, sharing one fit.
#[pyfunction]
#[pyo3(signature = (data, times, variant = "cox", epsilon = DEFAULT_EPSILON, alpha_zero = false, wrong_s = false, w_in_observed = false))]
#[allow(clippy::too_many_arguments)]
fn estimate(
    py: Python<'_>,
    data: &Dataset,
    times: Vec<f64>,
    variant: &str,
    epsilon: f64,
    alpha_zero: bool,
    wrong_s: bool,
    w_in_observed: bool,
) -> PyResult<Vec<Estimate>> {
    let variant: Variant = variant.parse().map_err(value_err)?;
    let config = EstimatorConfig {
        fit: FitOptions {
            variant,
            selection: if wrong_s {
                SelectionFormula::InterceptOnly
            } else {
                SelectionFormula::Full
            },
            w_in_observed,
        },
        epsilon,
        alpha_zero,
    };
    let inner = &data.inner;
    py.detach(|| {
        let support = build_support(inner);
        let est = DeductiveEstimator::new(inner, &support, config)?;
        times.iter().map(|&t| est.estimate(t).map(Estimate::from)).collect::<Result<Vec<_>, _>>()
    })
    .map_err(value_err)
}

/// Complete-case Kaplan-Meier with a Greenwood interval.
#[pyfunction]
fn km_complete_case(data: &Dataset, t: f64) -> PyResult<Estimate> {
    km_c(&data.inner, t).map(Estimate::from).map_err(value_err)
}

/// Kaplan-Meier stratified by `r_obs`, with a percentile bootstrap interval.
#[pyfunction]
#[pyo3(signature = (data, t, n_boot = DEFAULT_BOOTSTRAP, seed = 1))]
fn km_stratified(py: Python<'_>, data: &Dataset, t: f64, n_boot: usize, seed: u64) -> PyResult<Estimate> {
    let inner = &data.inner;
    py.detach(|| km_s(inner, t, n_boot, seed)).map(Estimate::from).map_err(value_err)
}

/// Exact `P(T > t)` under generative model 1 or 2.
#[pyfunction]
#[pyo3(signature = (gm, t = sim::gm::DEFAULT_T))]
fn true_tau(gm: u8, t: f64) -> PyResult<f64> {
    Ok(sim::true_tau(model(gm)?, t))
}

/// Descriptive statistics of a generative model from `n_mc` draws.
#[pyfunction]
#[pyo3(signature = (gm, n_mc = 1_000_000, seed = 1))]
fn descriptive_stats<'py>(py: Python<'py>, gm: u8, n_mc: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let gm = model(gm)?;
    if n_mc < 2 {
        return Err(PyValueError::new_err("n_mc must be at least 2"));
    }
    let r = py.detach(|| sim::descriptive_stats(gm, n_mc, seed));
    let d = PyDict::new(py);
    d.set_item("gm", r.gm)?;
    d.set_item("n", r.n)?;
    d.set_item("tau", r.tau)?;
    d.set_item("p_robs0", r.p_robs0)?;
    d.set_item("p_s1_given_robs0", r.p_s1_given_robs0)?;
    d.set_item("selection_deciles", r.selection_deciles)?;
    d.set_item("p_delta1", r.p_delta1)?;
    d.set_item("x_deciles", r.x_deciles)?;
    d.set_item("pcorr_t_c_given_z_robs", r.pcorr_t_c_given_z_robs)?;
    d.set_item("pcorr_t_c_given_z_l_dropout", r.pcorr_t_c_given_z_l_dropout)?;
    Ok(d)
}

/// Bias (points), coverage (%) and SD (points) of each estimator over
/// `reps` replicates.
#[pyfunction]
#[pyo3(signature = (gm, n, estimators, reps, seed = 1, t = sim::gm::DEFAULT_T, epsilon = DEFAULT_EPSILON, n_boot = DEFAULT_BOOTSTRAP))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    gm: u8,
    n: usize,
    estimators: Vec<String>,
    reps: usize,
    seed: u64,
    t: f64,
    epsilon: f64,
    n_boot: usize,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let gm = model(gm)?;
    if reps == 0 || n == 0 {
        return Err(PyValueError::new_err("n and reps must be positive"));
    }
    let kinds = estimators
        .iter()
        .map(|s| s.parse::<EstimatorKind>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(PyValueError::new_err)?;
    let cfg = HarnessConfig { t, epsilon, n_boot };
    let rows = py.detach(|| sim::run_replicates(gm, n, &kinds, reps, seed, &cfg));
    rows.into_iter()
        .map(|s| {
            let d = PyDict::new(py);
            d.set_item("estimator", s.estimator)?;
            d.set_item("bias", s.bias)?;
            d.set_item("cp", s.cp)?;
            d.set_item("sd", s.sd)?;
            d.set_item("n_replicates", s.n_replicates)?;
            d.set_item("n_failures", s.n_failures)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn deductive(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Dataset>()?;
    m.add_class::<Estimate>()?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(km_complete_case, m)?)?;
    m.add_function(wrap_pyfunction!(km_stratified, m)?)?;
    m.add_function(wrap_pyfunction!(true_tau, m)?)?;
    m.add_function(wrap_pyfunction!(descriptive_stats, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
