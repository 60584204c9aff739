//! Python bindings: sources, weights, the numerical solvers and the Gaussian
//! closed forms. Library errors surface as `ValueError`.

use gray_wyner::ba_core::{kt_check, BaConfig};
use gray_wyner::gaussian::{self, GaussianSpec};
use gray_wyner::model::{self as m, DistortionSpec, JointPmf, Multipliers, RateTriple, ReproductionPrior, Validate};
use gray_wyner::rd_solver::{self, OuterConfig, SweepAxis};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use std::collections::BTreeMap;

fn err(e: gray_wyner::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Joint pmf with its two distortion matrices.
#[pyclass(module = "gray_wyner_py", skip_from_py_object)]
#[derive(Clone)]
pub struct Source {
    pmf: JointPmf,
    dist: DistortionSpec,
}

#[pymethods]
impl Source {
    /// `probs` is the n1 x n2 joint pmf; distortions default to Hamming.
    #[new]
    #[pyo3(signature = (probs, d1=None, d2=None))]
    fn new(probs: Vec<Vec<f64>>, d1: Option<Vec<Vec<f64>>>, d2: Option<Vec<Vec<f64>>>) -> PyResult<Self> {
        let pmf = JointPmf::from_rows(&probs).map_err(err)?;
        pmf.validate().map_err(|v| PyValueError::new_err(v.to_string()))?;
        let dist = match (d1, d2) {
            (None, None) => DistortionSpec::hamming(pmf.n1(), pmf.n2()),
            (Some(a), Some(b)) => DistortionSpec::from_rows(&a, &b).map_err(err)?,
            _ => return Err(PyValueError::new_err("give both d1 and d2, or neither")),
        };
        dist.validate().map_err(|v| PyValueError::new_err(v.to_string()))?;
        dist.check_source(&pmf).map_err(err)?;
        Ok(Self { pmf, dist })
    }

    /// Doubly symmetric binary source with Hamming distortion.
    #[staticmethod]
    fn dsbs(px: f64) -> PyResult<Self> {
        let pmf = JointPmf::dsbs(px).map_err(err)?;
        Ok(Self { pmf, dist: DistortionSpec::hamming(2, 2) })
    }

    /// Unit-variance Gaussian pair on a uniform grid with squared error.
    #[staticmethod]
    #[pyo3(signature = (rho, half_width=4.0, points=33))]
    fn discretized_gaussian(rho: f64, half_width: f64, points: usize) -> PyResult<Self> {
        let (pmf, dist) = m::discretize_gaussian(rho, half_width, points).map_err(err)?;
        Ok(Self { pmf, dist })
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.pmf.n1(), self.pmf.n2())
    }

    #[getter]
    fn probs(&self) -> Vec<Vec<f64>> {
        self.pmf.probs().chunks(self.pmf.n2()).map(<[f64]>::to_vec).collect()
    }

    /// Distortions reachable with no rate: the best constant reproductions.
    fn d_max(&self) -> PyResult<(f64, f64)> {
        m::d_max(&self.pmf, &self.dist).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Source({}x{})", self.pmf.n1(), self.pmf.n2())
    }
}

#[pyclass(module = "gray_wyner_py", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
pub struct Weights {
    inner: m::Weights,
}

#[pymethods]
impl Weights {
    #[new]
    fn new(a0: f64, a1: f64, a2: f64) -> PyResult<Self> {
        Ok(Self { inner: m::Weights::new(a0, a1, a2).map_err(err)? })
    }

    #[getter]
    fn values(&self) -> (f64, f64, f64) {
        (self.inner.a0, self.inner.a1, self.inner.a2)
    }

    fn __repr__(&self) -> String {
        format!("Weights({}, {}, {})", self.inner.a0, self.inner.a1, self.inner.a2)
    }
}

fn rates(r: &RateTriple) -> (f64, f64, f64) {
    (r.r0, r.r1, r.r2)
}

/// Outcome of a numerical solve.
#[pyclass(module = "gray_wyner_py")]
pub struct RdResult {
    #[pyo3(get)]
    rd_value: f64,
    #[pyo3(get)]
    rates: (f64, f64, f64),
    #[pyo3(get)]
    achieved: (f64, f64),
    #[pyo3(get)]
    multipliers: (f64, f64),
    #[pyo3(get)]
    lagrangian: f64,
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    outer_iterations: usize,
    #[pyo3(get)]
    inner_iterations: usize,
    #[pyo3(get)]
    trace: Vec<f64>,
    #[pyo3(get)]
    notes: Vec<String>,
    source: Source,
    weights: m::Weights,
    prior: ReproductionPrior,
}

#[pymethods]
impl RdResult {
    /// Optimality check of the final prior; returns the largest value of
    /// each optimality function and the verdict at `tol`.
    #[pyo3(signature = (tol=1e-3))]
    fn kt_check(&self, tol: f64) -> PyResult<BTreeMap<&'static str, f64>> {
        let b = Multipliers::new(self.multipliers.0, self.multipliers.1).map_err(err)?;
        let k = kt_check(&self.source.pmf, &self.prior, &self.source.dist, &self.weights, &b, tol).map_err(err)?;
        Ok(BTreeMap::from([
            ("max_upsilon0", k.max_upsilon0),
            ("max_upsilon1", k.max_upsilon1),
            ("max_upsilon2", k.max_upsilon2),
            ("pass", if k.pass { 1.0 } else { 0.0 }),
        ]))
    }

    fn __repr__(&self) -> String {
        format!("RdResult(rd_value={}, converged={})", self.rd_value, self.converged)
    }
}

impl RdResult {
    fn from(r: rd_solver::RdResult, source: &Source, w: m::Weights) -> Self {
        Self {
            rd_value: r.rd_value,
            rates: rates(&r.rate_triple),
            achieved: r.achieved,
            multipliers: (r.multipliers.b1, r.multipliers.b2),
            lagrangian: r.lagrangian,
            converged: r.converged && r.inner_converged,
            outer_iterations: r.outer_iterations,
            inner_iterations: r.inner_iterations,
            trace: r.trace,
            notes: r.notes,
            source: source.clone(),
            weights: w,
            prior: r.prior,
        }
    }
}

fn inner_config(epsilon: f64, max_iterations: usize, u_size: Option<usize>, seed: u64, restarts: usize) -> BaConfig {
    BaConfig { epsilon, max_iterations, u_size, seed, restarts, ..BaConfig::default() }
}

/// Weighted rate at target distortions.
#[pyfunction]
#[pyo3(signature = (source, weights, targets, epsilon=1e-4, epsilon_d=1e-4, max_iterations=500, max_outer=100, u_size=None, seed=0, restarts=1))]
#[allow(clippy::too_many_arguments)]
fn solve_rd(
    py: Python<'_>,
    source: &Source,
    weights: &Weights,
    targets: (f64, f64),
    epsilon: f64,
    epsilon_d: f64,
    max_iterations: usize,
    max_outer: usize,
    u_size: Option<usize>,
    seed: u64,
    restarts: usize,
) -> PyResult<RdResult> {
    let cfg = OuterConfig {
        epsilon_d,
        max_outer,
        inner: inner_config(epsilon, max_iterations, u_size, seed, restarts),
        ..OuterConfig::default()
    };
    let w = weights.inner;
    let r = py.detach(|| rd_solver::solve_rd(&source.pmf, &source.dist, &w, targets, &cfg)).map_err(err)?;
    Ok(RdResult::from(r, source, w))
}

/// One inner minimization at fixed multipliers.
#[pyfunction]
#[pyo3(signature = (source, weights, multipliers, epsilon=1e-4, max_iterations=500, u_size=None, seed=0, restarts=1))]
#[allow(clippy::too_many_arguments)]
fn rd_from_multipliers(
    py: Python<'_>,
    source: &Source,
    weights: &Weights,
    multipliers: (f64, f64),
    epsilon: f64,
    max_iterations: usize,
    u_size: Option<usize>,
    seed: u64,
    restarts: usize,
) -> PyResult<RdResult> {
    let b = Multipliers::new(multipliers.0, multipliers.1).map_err(err)?;
    let cfg = inner_config(epsilon, max_iterations, u_size, seed, restarts);
    let w = weights.inner;
    let r = py.detach(|| rd_solver::rd_from_multipliers(&source.pmf, &source.dist, &w, &b, &cfg)).map_err(err)?;
    Ok(RdResult::from(r, source, w))
}

/// Closed-form solution for a unit-variance Gaussian pair.
#[pyclass(module = "gray_wyner_py", frozen)]
pub struct GaussianSolution {
    #[pyo3(get)]
    region: String,
    /// (m1, m2, sigma0sq), None for the special cases.
    #[pyo3(get)]
    params: Option<(f64, f64, f64)>,
    #[pyo3(get)]
    rd_value: f64,
    #[pyo3(get)]
    rates: (f64, f64, f64),
    #[pyo3(get)]
    multipliers: Option<(f64, f64)>,
    #[pyo3(get)]
    boundary_root: bool,
}

#[pymethods]
impl GaussianSolution {
    fn __repr__(&self) -> String {
        format!("GaussianSolution(region={}, rd_value={})", self.region, self.rd_value)
    }
}

#[pyfunction]
fn solve_gaussian_rd(rho: f64, weights: &Weights, targets: (f64, f64)) -> PyResult<GaussianSolution> {
    let spec = GaussianSpec::new(rho).map_err(err)?;
    let s = gaussian::solve_gaussian_rd(&weights.inner, targets, &spec).map_err(err)?;
    Ok(GaussianSolution {
        region: s.region.to_string(),
        params: s.params,
        rd_value: s.rd_value,
        rates: rates(&s.rate_triple),
        multipliers: s.certificate.map(|c| (c.beta1, c.beta2)),
        boundary_root: s.boundary_root,
    })
}

/// Lossy Wyner common information in nats and the formula branch used.
#[pyfunction]
fn wyner_ci(rho: f64, targets: (f64, f64)) -> PyResult<(f64, String)> {
    let spec = GaussianSpec::new(rho).map_err(err)?;
    let (v, case) = gaussian::wyner_ci(targets, &spec).map_err(err)?;
    Ok((v, case.to_string()))
}

fn axis(name: &str) -> PyResult<SweepAxis> {
    match name {
        "d1" => Ok(SweepAxis::D1),
        "d2" => Ok(SweepAxis::D2),
        "alpha_ray" => Ok(SweepAxis::AlphaRay),
        other => Err(PyValueError::new_err(format!("unknown axis \"{}\"; use d1, d2 or alpha_ray", other))),
    }
}

/// Closed-form Gaussian sweep; one dict per grid value, in grid order.
#[pyfunction]
fn sweep_gaussian(
    rho: f64,
    weights: &Weights,
    targets: (f64, f64),
    axis_name: &str,
    grid: Vec<f64>,
) -> PyResult<Vec<BTreeMap<&'static str, f64>>> {
    let spec = GaussianSpec::new(rho).map_err(err)?;
    let rows = rd_solver::sweep_gaussian(&spec, &weights.inner, targets, axis(axis_name)?, &grid).map_err(err)?;
    Ok(rows
        .iter()
        .map(|r| {
            BTreeMap::from([
                ("axis_value", r.axis_value),
                ("rd_nats", r.rd_nats),
                ("R0_nats", r.r0_nats),
                ("R1_nats", r.r1_nats),
                ("R2_nats", r.r2_nats),
                ("D1", r.d1),
                ("D2", r.d2),
            ])
        })
        .collect())
}

#[pymodule]
fn gray_wyner_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Source>()?;
    m.add_class::<Weights>()?;
    m.add_class::<RdResult>()?;
    m.add_class::<GaussianSolution>()?;
    m.add_function(wrap_pyfunction!(solve_rd, m)?)?;
    m.add_function(wrap_pyfunction!(rd_from_multipliers, m)?)?;
    m.add_function(wrap_pyfunction!(solve_gaussian_rd, m)?)?;
    m.add_function(wrap_pyfunction!(wyner_ci, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_gaussian, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_names_map_to_sweep_axes() {
        assert_eq!(axis("d2").unwrap(), SweepAxis::D2);
        assert_eq!(axis("alpha_ray").unwrap(), SweepAxis::AlphaRay);
    }

    #[test]
    fn inner_config_keeps_the_remaining_defaults() {
        let c = inner_config(1e-6, 10, Some(3), 4, 2);
        assert_eq!((c.epsilon, c.max_iterations, c.u_size, c.seed, c.restarts), (1e-6, 10, Some(3), 4, 2));
        assert!(!c.tamper && c.init.is_none());
    }
}
