//! Python bindings: grids, worlds, fusion, planning, gating, and the
//! scenario harness, driven in-process from Python.
//!
//! The module mirrors the core API closely; every fallible operation
//! raises ValueError carrying the core error text.

use std::path::Path;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use travgate_core::gating::{
    build_queue, hierarchical_route, lazy_gating_with, GatingConfig, GraphPathCost,
    PathCostPlanner, PrimitivePathCost,
};
use travgate_core::harness::{route_weights, RouterSource};
use travgate_core::planner::generate_primitives;
use travgate_core::{
    default_roster, fuse_batch, generate_world, graph_plan, run_scenario_file,
    verify_propositions, DomainTag, FanSpec, GridDims, PlannerConfig, PlannerMode, RunReport,
    VerifyConfig, VerifyReport,
};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn grid_from_rows(rows: &[Vec<f64>]) -> PyResult<(GridDims, Vec<f64>)> {
    let height = rows.len();
    let width = rows.first().map(|r| r.len()).unwrap_or(0);
    if rows.iter().any(|r| r.len() != width) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    let dims = GridDims::new(height, width).map_err(value_err)?;
    Ok((dims, rows.concat()))
}

fn rows_from_grid(dims: GridDims, values: &[f64]) -> Vec<Vec<f64>> {
    values.chunks(dims.width()).map(|c| c.to_vec()).collect()
}

/// Per-cell traversability in [0, 1].
#[pyclass(name = "TravMap", from_py_object)]
#[derive(Clone)]
struct PyTravMap {
    inner: travgate_core::TravMap,
}

#[pymethods]
impl PyTravMap {
    /// Build from nested lists, row major.
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let (dims, values) = grid_from_rows(&rows)?;
        let inner = travgate_core::TravMap::new(dims, values).map_err(value_err)?;
        Ok(PyTravMap { inner })
    }

    /// A height x width map holding one value everywhere.
    #[staticmethod]
    fn constant(height: usize, width: usize, value: f64) -> PyResult<Self> {
        let dims = GridDims::new(height, width).map_err(value_err)?;
        let inner = travgate_core::TravMap::constant(dims, value).map_err(value_err)?;
        Ok(PyTravMap { inner })
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.dims().height()
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.dims().width()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        rows_from_grid(self.inner.dims(), self.inner.values())
    }

    fn get(&self, row: usize, col: usize) -> PyResult<f64> {
        let dims = self.inner.dims();
        if !dims.contains(row, col) {
            return Err(PyValueError::new_err(format!(
                "cell ({row}, {col}) outside {}x{}",
                dims.height(),
                dims.width()
            )));
        }
        Ok(self.inner.values()[dims.index(row, col)])
    }

    /// Mean squared difference against another map of the same shape.
    fn mse(&self, other: &PyTravMap) -> PyResult<f64> {
        travgate_core::grid::mse(&self.inner, &other.inner).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "TravMap({}x{})",
            self.inner.dims().height(),
            self.inner.dims().width()
        )
    }
}

/// Per-cell fusion weight, non-negative.
#[pyclass(name = "WeightMap", from_py_object)]
#[derive(Clone)]
struct PyWeightMap {
    inner: travgate_core::WeightMap,
}

#[pymethods]
impl PyWeightMap {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let (dims, values) = grid_from_rows(&rows)?;
        let inner = travgate_core::WeightMap::new(dims, values).map_err(value_err)?;
        Ok(PyWeightMap { inner })
    }

    #[staticmethod]
    fn constant(height: usize, width: usize, value: f64) -> PyResult<Self> {
        let dims = GridDims::new(height, width).map_err(value_err)?;
        let inner = travgate_core::WeightMap::constant(dims, value).map_err(value_err)?;
        Ok(PyWeightMap { inner })
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.dims().height()
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.dims().width()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        rows_from_grid(self.inner.dims(), self.inner.values())
    }

    fn __repr__(&self) -> String {
        format!(
            "WeightMap({}x{})",
            self.inner.dims().height(),
            self.inner.dims().width()
        )
    }
}

/// A synthetic environment: elevation, semantics, ground truth, endpoints.
#[pyclass(name = "World")]
struct PyWorld {
    inner: travgate_core::World,
}

#[pymethods]
impl PyWorld {
    /// Procedurally generate a world for a domain
    /// (indoor, structured_outdoor, or unstructured_outdoor).
    #[staticmethod]
    #[pyo3(signature = (seed, domain, height=16, width=16))]
    fn generate(seed: u64, domain: &str, height: usize, width: usize) -> PyResult<Self> {
        let tag = parse_domain(domain)?;
        let dims = GridDims::new(height, width).map_err(value_err)?;
        let inner = generate_world(seed, tag, dims).map_err(value_err)?;
        Ok(PyWorld { inner })
    }

    /// Read a stored world file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let inner = travgate_core::World::load(Path::new(path)).map_err(value_err)?;
        Ok(PyWorld { inner })
    }

    /// Write the world as a text file that `load` accepts.
    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(Path::new(path)).map_err(value_err)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn domain(&self) -> String {
        self.inner.domain.name().to_string()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.dims().height()
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.dims().width()
    }

    #[getter]
    fn cell_size(&self) -> f64 {
        self.inner.cell_size()
    }

    /// Start pose as (x, y, z, yaw).
    fn start(&self) -> (f64, f64, f64, f64) {
        let p = self.inner.start;
        (p.x, p.y, p.z, p.yaw)
    }

    /// Goal point as (x, y, z).
    fn goal(&self) -> (f64, f64, f64) {
        let [x, y, z] = self.inner.goal;
        (x, y, z)
    }

    fn ground_truth(&self) -> PyTravMap {
        PyTravMap {
            inner: self.inner.gt_trav.clone(),
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "World(seed={}, domain={}, {}x{})",
            self.inner.seed,
            self.inner.domain.name(),
            self.inner.dims().height(),
            self.inner.dims().width()
        )
    }
}

fn parse_domain(name: &str) -> PyResult<DomainTag> {
    DomainTag::from_name(name).ok_or_else(|| {
        PyValueError::new_err(format!(
            "unknown domain '{name}' (expected indoor, structured_outdoor, or unstructured_outdoor)"
        ))
    })
}

/// Mean squared difference between two maps.
#[pyfunction]
fn mse(a: &PyTravMap, b: &PyTravMap) -> PyResult<f64> {
    travgate_core::grid::mse(&a.inner, &b.inner).map_err(value_err)
}

/// Weighted blend of expert maps in one shot.
#[pyfunction(name = "fuse_batch")]
fn py_fuse_batch(maps: Vec<PyTravMap>, weights: Vec<PyWeightMap>) -> PyResult<PyTravMap> {
    let maps: Vec<_> = maps.into_iter().map(|m| m.inner).collect();
    let weights: Vec<_> = weights.into_iter().map(|w| w.inner).collect();
    let inner = fuse_batch(&maps, &weights).map_err(value_err)?;
    Ok(PyTravMap { inner })
}

/// Cheapest admitted 4-connected path. Returns (cost, path); an infeasible
/// query yields (inf, []).
#[pyfunction(name = "graph_plan")]
#[pyo3(signature = (map, src, dst, theta=0.25, aux_step_cost=0.01))]
fn py_graph_plan(
    map: &PyTravMap,
    src: (usize, usize),
    dst: (usize, usize),
    theta: f64,
    aux_step_cost: f64,
) -> PyResult<(f64, Vec<(usize, usize)>)> {
    let config = PlannerConfig {
        theta,
        aux_step_cost,
        ..PlannerConfig::default()
    };
    let plan = graph_plan(&map.inner, src, dst, &config).map_err(value_err)?;
    let cells = plan.path.map(|p| p.cells).unwrap_or_default();
    Ok((plan.cost, cells))
}

/// What one gated estimation run did.
#[pyclass(name = "GateResult")]
struct PyGateResult {
    #[pyo3(get)]
    experts_activated: usize,
    #[pyo3(get)]
    queue_len: usize,
    #[pyo3(get)]
    flops_used: f64,
    #[pyo3(get)]
    flops_full: f64,
    #[pyo3(get)]
    terminated_early: bool,
    #[pyo3(get)]
    deltas: Vec<f64>,
    fused: travgate_core::TravMap,
}

#[pymethods]
impl PyGateResult {
    fn fused(&self) -> PyTravMap {
        PyTravMap {
            inner: self.fused.clone(),
        }
    }

    #[getter]
    fn savings_fraction(&self) -> f64 {
        1.0 - self.flops_used / self.flops_full
    }

    fn __repr__(&self) -> String {
        format!(
            "GateResult(activated={}/{}, savings={:.4})",
            self.experts_activated,
            self.queue_len,
            self.savings_fraction()
        )
    }
}

/// Run lazily gated fusion on a world: route the expert roster, evaluate
/// experts cheapest-first, and stop once the plan-cost bracket is within
/// `epsilon`.
#[pyfunction]
#[pyo3(signature = (world, epsilon=0.05, informed=true, planner="primitive"))]
fn gate(world: &PyWorld, epsilon: f64, informed: bool, planner: &str) -> PyResult<PyGateResult> {
    let mode = PlannerMode::from_name(planner)
        .ok_or_else(|| PyValueError::new_err(format!("unknown planner '{planner}'")))?;
    let source = if informed {
        RouterSource::GtTable { confidence: 0.97 }
    } else {
        RouterSource::Uniform
    };
    let roster = default_roster();
    let router = route_weights(&source, &world.inner, &roster).map_err(value_err)?;
    let config = GatingConfig::new(epsilon, 1e-6, 0.02).map_err(value_err)?;
    let effective = hierarchical_route(&roster, &router, &config).map_err(value_err)?;
    let queue = build_queue(effective).map_err(value_err)?;

    let inputs = world.inner.inputs();
    let frame = world.inner.frame();
    let horizon = world.inner.domain.default_horizon();
    let planner_config = PlannerConfig::default()
        .with_horizon(horizon)
        .map_err(value_err)?;
    let fan = FanSpec::symmetric(7, 1.0, frame.cell_size()).map_err(value_err)?;
    let prims = generate_primitives(&world.inner.start, horizon, &fan).map_err(value_err)?;
    let backend: Box<dyn PathCostPlanner + '_> = match mode {
        PlannerMode::Primitive => Box::new(PrimitivePathCost {
            prims: &prims,
            frame: &frame,
            robot: world.inner.start.position(),
            goal: world.inner.goal,
            config: &planner_config,
        }),
        PlannerMode::Graph => Box::new(GraphPathCost {
            src: world.inner.start_cell(),
            dst: world.inner.goal_cell(),
            config: &planner_config,
        }),
    };
    let (fused, trace) =
        lazy_gating_with(&queue, &inputs, backend.as_ref(), &config).map_err(value_err)?;
    Ok(PyGateResult {
        experts_activated: trace.experts_activated(),
        queue_len: trace.queue_len,
        flops_used: trace.flops_used(),
        flops_full: queue.total_flops(),
        terminated_early: trace.terminated_early,
        deltas: trace.records.iter().map(|r| r.delta).collect(),
        fused,
    })
}

/// Scenario batch results with CSV emission.
#[pyclass(name = "RunReport")]
struct PyRunReport {
    inner: RunReport,
}

#[pymethods]
impl PyRunReport {
    #[getter]
    fn scenarios(&self) -> usize {
        self.inner.aggregates.scenarios
    }

    #[getter]
    fn mean_e_p(&self) -> f64 {
        self.inner.aggregates.mean_e_p
    }

    #[getter]
    fn mean_e_m(&self) -> f64 {
        self.inner.aggregates.mean_e_m
    }

    #[getter]
    fn mean_q_p(&self) -> f64 {
        self.inner.aggregates.mean_q_p
    }

    #[getter]
    fn mean_savings(&self) -> f64 {
        self.inner.aggregates.mean_savings
    }

    fn violations(&self) -> usize {
        self.inner.propositions.violations()
    }

    fn failures(&self) -> Vec<(String, String)> {
        self.inner
            .failures
            .iter()
            .map(|f| (f.scenario_id.clone(), f.message.clone()))
            .collect()
    }

    fn metrics_csv(&self) -> String {
        self.inner.metrics_csv()
    }

    fn trace_csv(&self) -> String {
        self.inner.trace_csv()
    }

    /// Write metrics.csv and trace.csv into a directory.
    fn write_csv(&self, dir: &str) -> PyResult<()> {
        self.inner.write_csv(Path::new(dir)).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "RunReport(scenarios={}, failures={}, violations={})",
            self.inner.aggregates.scenarios,
            self.inner.failures.len(),
            self.inner.propositions.violations()
        )
    }
}

/// Execute every scenario in a spec file.
#[pyfunction(name = "run_scenario_file")]
fn py_run_scenario_file(path: &str) -> PyResult<PyRunReport> {
    let inner = run_scenario_file(Path::new(path)).map_err(value_err)?;
    Ok(PyRunReport { inner })
}

/// Randomized sweep checking the termination certificate.
#[pyclass(name = "VerifyReport")]
struct PyVerifyReport {
    inner: VerifyReport,
}

#[pymethods]
impl PyVerifyReport {
    #[getter]
    fn trials_run(&self) -> usize {
        self.inner.trials_run
    }

    #[getter]
    fn skipped(&self) -> usize {
        self.inner.skipped
    }

    #[getter]
    fn max_bound_ratio(&self) -> f64 {
        self.inner.max_bound_ratio
    }

    fn violations(&self) -> usize {
        self.inner.violations()
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }

    fn __repr__(&self) -> String {
        format!(
            "VerifyReport(trials={}, violations={})",
            self.inner.trials_run,
            self.inner.violations()
        )
    }
}

/// Run the certificate sweep over randomized worlds and expert stacks.
#[pyfunction]
#[pyo3(signature = (trials=200, seed=7))]
fn verify(trials: usize, seed: u64) -> PyResult<PyVerifyReport> {
    let inner = verify_propositions(&VerifyConfig {
        trials,
        base_seed: seed,
    })
    .map_err(value_err)?;
    Ok(PyVerifyReport { inner })
}

#[pymodule]
fn travgate(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTravMap>()?;
    m.add_class::<PyWeightMap>()?;
    m.add_class::<PyWorld>()?;
    m.add_class::<PyGateResult>()?;
    m.add_class::<PyRunReport>()?;
    m.add_class::<PyVerifyReport>()?;
    m.add_function(wrap_pyfunction!(mse, m)?)?;
    m.add_function(wrap_pyfunction!(py_fuse_batch, m)?)?;
    m.add_function(wrap_pyfunction!(py_graph_plan, m)?)?;
    m.add_function(wrap_pyfunction!(gate, m)?)?;
    m.add_function(wrap_pyfunction!(py_run_scenario_file, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
