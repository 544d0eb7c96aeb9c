//! Lazy expert gating: run experts one at a time, cheapest useful first, and
//! stop as soon as the remaining experts provably cannot change the plan.
//!
//! The pieces, in pipeline order:
//!
//! * [`hierarchical_route`] turns domain-level and terrain-level router
//!   weights into one flat effective weight map per expert, pruning domains
//!   the router is confident are irrelevant,
//! * [`build_queue`] orders experts by a priority that prefers high routed
//!   weight and low compute cost,
//! * [`lazy_gating_with`] fuses experts in queue order; after each step it
//!   calls [`check_termination`], which plans on the envelope maps from
//!   [`crate::fusion::FusionState`]. The plan cost on the lower expectation
//!   map bounds the final plan cost from above, the cost on the upper
//!   expectation map bounds it from below (planners are monotone in the
//!   map), so their difference `delta` bounds how far the current plan cost
//!   can still move. Evaluation stops once `delta <= epsilon`.
//!
//! `delta` at step `k` also bounds `|C(T_k) - C(T_K)|`, the gap between the
//! plan cost now and the plan cost after all `K` experts, and it never
//! increases from one step to the next because the envelopes only tighten.

use std::fmt;

use crate::experts::{ExpertError, ExpertInputs, ExpertSpec};
use crate::fusion::{FusionError, FusionState};
use crate::grid::{check_same_shape, GridError, TravMap, WeightMap};
use crate::planner::{
    graph_plan, plan, GridFrame, PlanError, PlanResult, PlannerConfig, Point3, PrimitiveSet,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GatingConfig {
    /// Termination tolerance on the plan cost bracket. May be infinite,
    /// which stops after the first expert.
    pub epsilon: f64,
    /// Floor applied to every effective expert weight, keeping fusion
    /// denominators positive everywhere.
    pub omega_min: f64,
    /// Domains routed below this weight are dropped before queueing.
    pub domain_floor: f64,
}

impl GatingConfig {
    pub fn new(epsilon: f64, omega_min: f64, domain_floor: f64) -> Result<GatingConfig, GatingError> {
        if epsilon.is_nan() || epsilon < 0.0 {
            return Err(GatingError::BadConfig {
                param: "epsilon",
                value: epsilon,
            });
        }
        if !(omega_min.is_finite() && omega_min > 0.0) {
            return Err(GatingError::BadConfig {
                param: "omega_min",
                value: omega_min,
            });
        }
        if !(domain_floor.is_finite() && (0.0..1.0).contains(&domain_floor)) {
            return Err(GatingError::BadConfig {
                param: "domain_floor",
                value: domain_floor,
            });
        }
        Ok(GatingConfig {
            epsilon,
            omega_min,
            domain_floor,
        })
    }
}

impl Default for GatingConfig {
    fn default() -> Self {
        GatingConfig {
            epsilon: 0.05,
            omega_min: 1e-6,
            domain_floor: 0.02,
        }
    }
}

#[derive(Debug, Clone)]
pub enum GatingError {
    BadConfig { param: &'static str, value: f64 },
    EmptyRoster,
    EmptyDomain { domain: usize },
    EmptyQueue,
    DuplicateExpertName { name: String },
    WrongDomainIndex { expert: String, expected: usize, got: usize },
    DomainCountMismatch { roster: usize, router: usize },
    TerrainCountMismatch { domain: usize, roster: usize, router: usize },
    WeightSumNotOne { sum: f64 },
    BadDomainWeight { domain: usize, value: f64 },
    AllDomainsPruned,
    DegenerateMass,
    ExpertFailed {
        expert: String,
        source: ExpertError,
        partial: Vec<TraceRecord>,
    },
    Fusion(FusionError),
    Plan(PlanError),
    Grid(GridError),
}

impl fmt::Display for GatingError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GatingError::BadConfig { param, value } => {
                write!(f, "gating parameter {param} has invalid value {value}")
            }
            GatingError::EmptyRoster => write!(f, "roster has no domains"),
            GatingError::EmptyDomain { domain } => {
                write!(f, "roster domain {domain} has no experts")
            }
            GatingError::EmptyQueue => write!(f, "expert queue is empty"),
            GatingError::DuplicateExpertName { name } => {
                write!(f, "expert name {name} appears more than once")
            }
            GatingError::WrongDomainIndex {
                expert,
                expected,
                got,
            } => write!(
                f,
                "expert {expert} declares domain index {got} but sits in domain {expected}"
            ),
            GatingError::DomainCountMismatch { roster, router } => {
                write!(f, "roster has {roster} domains but router provides {router}")
            }
            GatingError::TerrainCountMismatch {
                domain,
                roster,
                router,
            } => write!(
                f,
                "domain {domain} has {roster} experts but router provides {router} weight maps"
            ),
            GatingError::WeightSumNotOne { sum } => {
                write!(f, "domain weights must sum to 1, got {sum}")
            }
            GatingError::BadDomainWeight { domain, value } => {
                write!(f, "domain {domain} weight {value} is not a finite non-negative number")
            }
            GatingError::AllDomainsPruned => {
                write!(f, "every domain fell below the routing floor")
            }
            GatingError::DegenerateMass => {
                write!(f, "total routed weight mass is zero")
            }
            GatingError::ExpertFailed {
                expert, source, ..
            } => write!(f, "expert {expert} failed: {source}"),
            GatingError::Fusion(e) => write!(f, "{e}"),
            GatingError::Plan(e) => write!(f, "{e}"),
            GatingError::Grid(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for GatingError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            GatingError::ExpertFailed { source, .. } => Some(source),
            GatingError::Fusion(e) => Some(e),
            GatingError::Plan(e) => Some(e),
            GatingError::Grid(e) => Some(e),
            _ => None,
        }
    }
}

impl From<FusionError> for GatingError {
    fn from(e: FusionError) -> Self {
        GatingError::Fusion(e)
    }
}

impl From<PlanError> for GatingError {
    fn from(e: PlanError) -> Self {
        GatingError::Plan(e)
    }
}

impl From<GridError> for GatingError {
    fn from(e: GridError) -> Self {
        GatingError::Grid(e)
    }
}

/// Experts grouped by domain. Group `m` holds the experts whose id declares
/// `domain_index == m + 1`; names are unique across the whole roster.
#[derive(Debug, Clone)]
pub struct HierarchicalRoster {
    domains: Vec<Vec<ExpertSpec>>,
}

impl HierarchicalRoster {
    pub fn new(domains: Vec<Vec<ExpertSpec>>) -> Result<HierarchicalRoster, GatingError> {
        if domains.is_empty() {
            return Err(GatingError::EmptyRoster);
        }
        let mut seen = std::collections::BTreeSet::new();
        for (m, domain) in domains.iter().enumerate() {
            if domain.is_empty() {
                return Err(GatingError::EmptyDomain { domain: m + 1 });
            }
            for spec in domain {
                if spec.id().domain_index() != m + 1 {
                    return Err(GatingError::WrongDomainIndex {
                        expert: spec.id().name().to_string(),
                        expected: m + 1,
                        got: spec.id().domain_index(),
                    });
                }
                if !seen.insert(spec.id().name().to_string()) {
                    return Err(GatingError::DuplicateExpertName {
                        name: spec.id().name().to_string(),
                    });
                }
            }
        }
        Ok(HierarchicalRoster { domains })
    }

    pub fn domains(&self) -> &[Vec<ExpertSpec>] {
        &self.domains
    }

    pub fn flattened(&self) -> impl Iterator<Item = &ExpertSpec> {
        self.domains.iter().flatten()
    }
}

/// Router state: one weight per domain (summing to 1) and one weight map per
/// expert. Domain weights gate whole groups; terrain maps modulate cells.
#[derive(Debug, Clone)]
pub struct RouterOutput {
    domain_weights: Vec<f64>,
    terrain_weights: Vec<Vec<WeightMap>>,
}

impl RouterOutput {
    pub fn new(
        domain_weights: Vec<f64>,
        terrain_weights: Vec<Vec<WeightMap>>,
    ) -> Result<RouterOutput, GatingError> {
        if domain_weights.len() != terrain_weights.len() {
            return Err(GatingError::DomainCountMismatch {
                roster: terrain_weights.len(),
                router: domain_weights.len(),
            });
        }
        let mut sum = 0.0;
        for (m, &w) in domain_weights.iter().enumerate() {
            if !(w.is_finite() && w >= 0.0) {
                return Err(GatingError::BadDomainWeight {
                    domain: m + 1,
                    value: w,
                });
            }
            sum += w;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(GatingError::WeightSumNotOne { sum });
        }
        let mut dims = None;
        for maps in &terrain_weights {
            for map in maps {
                match dims {
                    None => dims = Some(map.dims()),
                    Some(d) => check_same_shape(d, map.dims())?,
                }
            }
        }
        Ok(RouterOutput {
            domain_weights,
            terrain_weights,
        })
    }

    pub fn domain_weights(&self) -> &[f64] {
        &self.domain_weights
    }

    pub fn terrain_weights(&self) -> &[Vec<WeightMap>] {
        &self.terrain_weights
    }
}

/// Flatten the two routing levels into effective per-expert weights:
/// `domain_weight * terrain_weight` per cell, floored at `omega_min`.
/// Domains under `domain_floor` are pruned entirely; their experts never
/// reach the queue and their compute is never spent.
pub fn hierarchical_route(
    roster: &HierarchicalRoster,
    router: &RouterOutput,
    config: &GatingConfig,
) -> Result<Vec<(ExpertSpec, WeightMap)>, GatingError> {
    if roster.domains.len() != router.domain_weights.len() {
        return Err(GatingError::DomainCountMismatch {
            roster: roster.domains.len(),
            router: router.domain_weights.len(),
        });
    }
    let mut out = Vec::new();
    for (m, domain) in roster.domains.iter().enumerate() {
        if domain.len() != router.terrain_weights[m].len() {
            return Err(GatingError::TerrainCountMismatch {
                domain: m + 1,
                roster: domain.len(),
                router: router.terrain_weights[m].len(),
            });
        }
        let dw = router.domain_weights[m];
        if dw < config.domain_floor {
            continue;
        }
        for (spec, tw) in domain.iter().zip(&router.terrain_weights[m]) {
            let values: Vec<f64> = tw
                .values()
                .iter()
                .map(|&v| (dw * v).max(config.omega_min))
                .collect();
            let weight = WeightMap::new(tw.dims(), values)?;
            out.push((spec.clone(), weight));
        }
    }
    if out.is_empty() {
        return Err(GatingError::AllDomainsPruned);
    }
    Ok(out)
}

/// Evaluation priority: `(1 - mass_fraction) * flop_cost`, ascending.
/// An expert the router leans on (large weight mass) or a cheap one comes
/// early; a costly expert with little routed weight comes last.
pub fn phi_score(
    spec: &ExpertSpec,
    weight: &WeightMap,
    total_mass: f64,
) -> Result<f64, GatingError> {
    if !(total_mass.is_finite() && total_mass > 0.0) {
        return Err(GatingError::DegenerateMass);
    }
    let fraction = weight.mass() / total_mass;
    Ok((1.0 - fraction) * spec.flop_cost())
}

#[derive(Debug, Clone)]
pub struct QueueEntry {
    pub spec: ExpertSpec,
    pub weight: WeightMap,
    pub phi: f64,
}

/// Experts in evaluation order.
#[derive(Debug, Clone)]
pub struct ExpertQueue {
    entries: Vec<QueueEntry>,
}

impl ExpertQueue {
    pub fn entries(&self) -> &[QueueEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Weight maps in queue order, the sequence a [`FusionState`] is built on.
    pub fn weights_in_order(&self) -> Vec<WeightMap> {
        self.entries.iter().map(|e| e.weight.clone()).collect()
    }

    /// Sum of flop costs over the whole queue.
    pub fn total_flops(&self) -> f64 {
        self.entries.iter().map(|e| e.spec.flop_cost()).sum()
    }
}

/// Order experts by ascending priority score. The sort is stable, so equal
/// scores keep their routing order.
pub fn build_queue(effective: Vec<(ExpertSpec, WeightMap)>) -> Result<ExpertQueue, GatingError> {
    if effective.is_empty() {
        return Err(GatingError::EmptyQueue);
    }
    let dims = effective[0].1.dims();
    let mut seen = std::collections::BTreeSet::new();
    for (spec, weight) in &effective {
        check_same_shape(dims, weight.dims())?;
        if !seen.insert(spec.id().name().to_string()) {
            return Err(GatingError::DuplicateExpertName {
                name: spec.id().name().to_string(),
            });
        }
    }
    let total_mass: f64 = effective.iter().map(|(_, w)| w.mass()).sum();
    let mut entries = Vec::with_capacity(effective.len());
    for (spec, weight) in effective {
        let phi = phi_score(&spec, &weight, total_mass)?;
        entries.push(QueueEntry { spec, weight, phi });
    }
    entries.sort_by(|a, b| a.phi.total_cmp(&b.phi));
    Ok(ExpertQueue { entries })
}

/// Anything that reduces a traversability map to a single plan cost, with
/// `+inf` meaning no feasible plan. Implementations must be monotone: a map
/// that is at least as traversable everywhere never yields a higher cost.
pub trait PathCostPlanner {
    fn path_cost(&self, map: &TravMap) -> Result<f64, PlanError>;
}

/// Plan cost of the best arc primitive.
pub struct PrimitivePathCost<'a> {
    pub prims: &'a PrimitiveSet,
    pub frame: &'a GridFrame,
    pub robot: Point3,
    pub goal: Point3,
    pub config: &'a PlannerConfig,
}

impl PathCostPlanner for PrimitivePathCost<'_> {
    fn path_cost(&self, map: &TravMap) -> Result<f64, PlanError> {
        plan(map, self.prims, self.frame, self.robot, self.goal, self.config).map(|r| r.cost)
    }
}

/// Plan cost of the cheapest admitted grid path.
pub struct GraphPathCost<'a> {
    pub src: (usize, usize),
    pub dst: (usize, usize),
    pub config: &'a PlannerConfig,
}

impl PathCostPlanner for GraphPathCost<'_> {
    fn path_cost(&self, map: &TravMap) -> Result<f64, PlanError> {
        graph_plan(map, self.src, self.dst, self.config).map(|g| g.cost)
    }
}

/// Gap between two plan costs. Two infeasible plans are the same plan, so
/// the gap is zero; finite versus infinite is an infinite gap.
pub fn cost_gap(a: f64, b: f64) -> f64 {
    if a.is_infinite() && b.is_infinite() && a.signum() == b.signum() {
        0.0
    } else {
        (a - b).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminationCheck {
    pub done: bool,
    /// Width of the plan cost bracket; infinite while the pessimistic map
    /// admits no plan at all.
    pub delta: f64,
    /// Plan cost on the lower expectation map: an upper bound on the final
    /// plan cost.
    pub cost_upper_bound: f64,
    /// Plan cost on the upper expectation map: a lower bound on the final
    /// plan cost.
    pub cost_lower_bound: f64,
}

/// Bracket the final plan cost from the current fusion state.
///
/// The planner runs on both envelope maps. Monotonicity turns the map
/// ordering `lower <= final fusion <= upper` into the cost ordering
/// `cost(upper map) <= C(T_K) <= cost(lower map)`. When the pessimistic
/// bound is infinite the bracket is vacuous and `delta` stays infinite:
/// a step that cannot rule anything out never claims termination on its own;
/// only an infinite `epsilon` accepts it.
pub fn check_termination(
    state: &FusionState,
    planner: &dyn PathCostPlanner,
    config: &GatingConfig,
) -> Result<TerminationCheck, GatingError> {
    let lower_map = state.lower_expectation()?;
    let upper_map = state.upper_expectation()?;
    let cost_upper_bound = planner.path_cost(&lower_map)?;
    let cost_lower_bound = planner.path_cost(&upper_map)?;
    let delta = if cost_upper_bound.is_infinite() {
        f64::INFINITY
    } else {
        (cost_upper_bound - cost_lower_bound).max(0.0)
    };
    Ok(TerminationCheck {
        done: delta <= config.epsilon,
        delta,
        cost_upper_bound,
        cost_lower_bound,
    })
}

/// One evaluated expert in a gating run.
#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub expert: String,
    pub domain_index: usize,
    pub terrain_index: usize,
    /// Fusion snapshot after this expert landed.
    pub fused: TravMap,
    /// Plan cost bracket width after this step.
    pub delta: f64,
    /// Plan cost on the fused map after this step.
    pub cost: f64,
    /// Flop cost spent so far, this expert included.
    pub flops_cumulative: f64,
    /// True on exactly the record where evaluation stopped.
    pub stopped: bool,
}

/// Full evaluation record of one gating run.
#[derive(Debug, Clone)]
pub struct GatingTrace {
    pub records: Vec<TraceRecord>,
    /// 1-based step index where evaluation stopped; equals `records.len()`.
    pub termination_step: usize,
    /// True when at least one queued expert was skipped.
    pub terminated_early: bool,
    /// Length of the full queue, skipped experts included.
    pub queue_len: usize,
}

impl GatingTrace {
    pub fn flops_used(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.flops_cumulative)
    }

    pub fn experts_activated(&self) -> usize {
        self.records.len()
    }
}

/// Run the gating loop with any plan cost backend.
///
/// Experts are evaluated in queue order. After each fusion step the
/// termination check runs; when it passes, the remaining experts are
/// skipped. The returned map is the fusion of the evaluated prefix, and the
/// trace holds one record per evaluated expert. An expert evaluation failure
/// aborts the run and carries the partial trace in the error.
pub fn lazy_gating_with(
    queue: &ExpertQueue,
    inputs: &ExpertInputs,
    planner: &dyn PathCostPlanner,
    config: &GatingConfig,
) -> Result<(TravMap, GatingTrace), GatingError> {
    if queue.is_empty() {
        return Err(GatingError::EmptyQueue);
    }
    let weights = queue.weights_in_order();
    let mut state = FusionState::new(&weights)?;
    let mut records: Vec<TraceRecord> = Vec::new();
    let mut flops = 0.0;
    for entry in queue.entries() {
        let t_hat = match entry.spec.evaluate(inputs) {
            Ok(map) => map,
            Err(source) => {
                return Err(GatingError::ExpertFailed {
                    expert: entry.spec.id().name().to_string(),
                    source,
                    partial: records,
                })
            }
        };
        state = state.fuse_step(&t_hat, &entry.weight)?;
        flops += entry.spec.flop_cost();
        let check = check_termination(&state, planner, config)?;
        let fused = state.fused().expect("at least one step done");
        let cost = planner.path_cost(fused)?;
        records.push(TraceRecord {
            expert: entry.spec.id().name().to_string(),
            domain_index: entry.spec.id().domain_index(),
            terrain_index: entry.spec.id().terrain_index(),
            fused: fused.clone(),
            delta: check.delta,
            cost,
            flops_cumulative: flops,
            stopped: false,
        });
        if check.done {
            break;
        }
    }
    if let Some(last) = records.last_mut() {
        last.stopped = true;
    }
    let termination_step = records.len();
    let fused = state.fused().expect("queue is non-empty").clone();
    let trace = GatingTrace {
        termination_step,
        terminated_early: termination_step < queue.len(),
        queue_len: queue.len(),
        records,
    };
    Ok((fused, trace))
}

/// Outcome of a primitive-planner gating run: the fused map, the plan found
/// on it, and the evaluation trace.
#[derive(Debug, Clone)]
pub struct LazyGatingOutcome {
    pub fused: TravMap,
    pub plan: PlanResult,
    pub trace: GatingTrace,
}

/// Gating loop driven by the arc primitive planner, followed by a final plan
/// on the fused map.
#[allow(clippy::too_many_arguments)]
pub fn lazy_gating(
    queue: &ExpertQueue,
    inputs: &ExpertInputs,
    prims: &PrimitiveSet,
    frame: &GridFrame,
    robot: Point3,
    goal: Point3,
    planner_config: &PlannerConfig,
    config: &GatingConfig,
) -> Result<LazyGatingOutcome, GatingError> {
    let backend = PrimitivePathCost {
        prims,
        frame,
        robot,
        goal,
        config: planner_config,
    };
    let (fused, trace) = lazy_gating_with(queue, inputs, &backend, config)?;
    let plan = plan(&fused, prims, frame, robot, goal, planner_config)?;
    Ok(LazyGatingOutcome { fused, plan, trace })
}

/// Per-cell supervision from a bank of expert maps: each cell selects the
/// expert whose estimate is closest to ground truth (squared error, lowest
/// index on ties).
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisionLabels {
    /// Winning expert index per cell, row-major.
    pub selector: Vec<usize>,
    /// The winning estimates themselves.
    pub label_map: TravMap,
}

pub fn supervision_labels(
    maps: &[TravMap],
    gt: &TravMap,
) -> Result<SupervisionLabels, GatingError> {
    if maps.is_empty() {
        return Err(GatingError::EmptyQueue);
    }
    let dims = gt.dims();
    for m in maps {
        check_same_shape(dims, m.dims())?;
    }
    let mut selector = Vec::with_capacity(dims.len());
    let mut values = Vec::with_capacity(dims.len());
    for i in 0..dims.len() {
        let target = gt.values()[i];
        let mut best_k = 0;
        let mut best_err = f64::INFINITY;
        for (k, m) in maps.iter().enumerate() {
            let e = (m.values()[i] - target) * (m.values()[i] - target);
            if e < best_err {
                best_err = e;
                best_k = k;
            }
        }
        selector.push(best_k);
        values.push(maps[best_k].values()[i]);
    }
    Ok(SupervisionLabels {
        selector,
        label_map: TravMap::new(dims, values)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experts::{ExpertId, ExpertKind, GeoParams, TravCostTable};
    use crate::grid::{ElevationGrid, GridDims, SemanticClass, SemanticGrid};
    use crate::planner::{generate_primitives, FanSpec, Pose3};

    fn dims(h: usize, w: usize) -> GridDims {
        GridDims::new(h, w).unwrap()
    }

    fn c_weight(d: GridDims, v: f64) -> WeightMap {
        WeightMap::constant(d, v).unwrap()
    }

    fn expert(m: usize, n: usize, name: &str, kind: ExpertKind, flops: f64) -> ExpertSpec {
        ExpertSpec::new(ExpertId::new(m, n, name).unwrap(), kind, flops).unwrap()
    }

    fn const_expert(m: usize, n: usize, name: &str, value: f64, flops: f64) -> ExpertSpec {
        expert(m, n, name, ExpertKind::constant(value).unwrap(), flops)
    }

    /// Plan cost stub: mean untraversability. Monotone in the map.
    struct MeanCost;

    impl PathCostPlanner for MeanCost {
        fn path_cost(&self, map: &TravMap) -> Result<f64, PlanError> {
            let n = map.dims().len() as f64;
            Ok(map.values().iter().map(|v| 1.0 - v).sum::<f64>() / n)
        }
    }

    /// Plan cost stub that is infeasible until the map mean clears 0.5.
    struct GatedMeanCost;

    impl PathCostPlanner for GatedMeanCost {
        fn path_cost(&self, map: &TravMap) -> Result<f64, PlanError> {
            let n = map.dims().len() as f64;
            let mean = map.values().iter().sum::<f64>() / n;
            if mean < 0.5 {
                Ok(f64::INFINITY)
            } else {
                Ok(1.0 - mean)
            }
        }
    }

    #[test]
    fn config_validation_and_defaults() {
        let c = GatingConfig::default();
        assert_eq!((c.epsilon, c.omega_min, c.domain_floor), (0.05, 1e-6, 0.02));
        assert!(GatingConfig::new(-0.1, 1e-6, 0.02).is_err());
        assert!(GatingConfig::new(0.05, 0.0, 0.02).is_err());
        assert!(GatingConfig::new(0.05, 1e-6, 1.0).is_err());
        // Infinite epsilon is a legal way to say "trust the first expert".
        assert!(GatingConfig::new(f64::INFINITY, 1e-6, 0.02).is_ok());
    }

    #[test]
    fn phi_hand_values() {
        // Two experts with equal weight mass, flop costs 1 and 10:
        // each has mass fraction 1/2, so phi = 0.5 and 5.
        let d = dims(2, 2);
        let a = const_expert(1, 1, "cheap", 0.5, 1.0);
        let b = const_expert(1, 2, "costly", 0.5, 10.0);
        let w = c_weight(d, 1.0);
        let total = 2.0 * w.mass();
        assert_eq!(phi_score(&a, &w, total).unwrap(), 0.5);
        assert_eq!(phi_score(&b, &w, total).unwrap(), 5.0);
        assert!(phi_score(&a, &w, 0.0).is_err());
    }

    #[test]
    fn queue_orders_by_weight_then_cost() {
        let d = dims(2, 2);
        // Equal flops: the heavily routed expert goes first.
        let queue = build_queue(vec![
            (const_expert(1, 1, "light", 0.5, 1.0), c_weight(d, 0.1)),
            (const_expert(1, 2, "heavy", 0.5, 1.0), c_weight(d, 0.9)),
        ])
        .unwrap();
        let names: Vec<_> = queue.entries().iter().map(|e| e.spec.id().name()).collect();
        assert_eq!(names, ["heavy", "light"]);

        // Equal masses: the cheap expert goes first.
        let queue = build_queue(vec![
            (const_expert(1, 1, "costly", 0.5, 10.0), c_weight(d, 1.0)),
            (const_expert(1, 2, "cheap", 0.5, 1.0), c_weight(d, 1.0)),
        ])
        .unwrap();
        let names: Vec<_> = queue.entries().iter().map(|e| e.spec.id().name()).collect();
        assert_eq!(names, ["cheap", "costly"]);

        // Full tie: declaration order is kept.
        let queue = build_queue(vec![
            (const_expert(1, 1, "first", 0.5, 1.0), c_weight(d, 1.0)),
            (const_expert(1, 2, "second", 0.5, 1.0), c_weight(d, 1.0)),
        ])
        .unwrap();
        let names: Vec<_> = queue.entries().iter().map(|e| e.spec.id().name()).collect();
        assert_eq!(names, ["first", "second"]);
    }

    #[test]
    fn queue_rejects_duplicates_and_empty() {
        let d = dims(1, 1);
        assert!(matches!(build_queue(vec![]), Err(GatingError::EmptyQueue)));
        let dup = build_queue(vec![
            (const_expert(1, 1, "x", 0.5, 1.0), c_weight(d, 1.0)),
            (const_expert(1, 2, "x", 0.5, 1.0), c_weight(d, 1.0)),
        ]);
        assert!(matches!(dup, Err(GatingError::DuplicateExpertName { .. })));
    }

    #[test]
    fn route_multiplies_levels_and_applies_floor() {
        let d = dims(2, 2);
        let roster = HierarchicalRoster::new(vec![
            vec![
                const_expert(1, 1, "a1", 0.5, 1.0),
                const_expert(1, 2, "a2", 0.5, 1.0),
            ],
            vec![
                const_expert(2, 1, "b1", 0.5, 1.0),
                const_expert(2, 2, "b2", 0.5, 1.0),
            ],
            vec![
                const_expert(3, 1, "c1", 0.5, 1.0),
                const_expert(3, 2, "c2", 0.5, 1.0),
            ],
        ])
        .unwrap();
        let router = RouterOutput::new(
            vec![0.5, 0.25, 0.25],
            vec![
                vec![c_weight(d, 0.5), c_weight(d, 0.25)],
                vec![c_weight(d, 1.0), c_weight(d, 0.5)],
                vec![c_weight(d, 0.125), c_weight(d, 1.0)],
            ],
        )
        .unwrap();
        let config = GatingConfig::default();
        let effective = hierarchical_route(&roster, &router, &config).unwrap();
        assert_eq!(effective.len(), 6);
        let by_name: std::collections::BTreeMap<&str, f64> = effective
            .iter()
            .map(|(spec, w)| (spec.id().name(), w.get(0, 0)))
            .collect();
        // Powers of two keep the products exact.
        assert_eq!(by_name["a1"], 0.25);
        assert_eq!(by_name["a2"], 0.125);
        assert_eq!(by_name["b1"], 0.25);
        assert_eq!(by_name["b2"], 0.125);
        assert_eq!(by_name["c1"], 0.03125);
        assert_eq!(by_name["c2"], 0.25);
    }

    #[test]
    fn route_prunes_low_weight_domains() {
        let d = dims(2, 2);
        let roster = HierarchicalRoster::new(vec![
            vec![const_expert(1, 1, "a", 0.5, 1.0)],
            vec![const_expert(2, 1, "b", 0.5, 1.0)],
            vec![const_expert(3, 1, "c", 0.5, 1.0)],
        ])
        .unwrap();
        let router = RouterOutput::new(
            vec![1.0, 0.0, 0.0],
            vec![
                vec![c_weight(d, 1.0)],
                vec![c_weight(d, 1.0)],
                vec![c_weight(d, 1.0)],
            ],
        )
        .unwrap();
        let config = GatingConfig::default();
        let effective = hierarchical_route(&roster, &router, &config).unwrap();
        assert_eq!(effective.len(), 1);
        assert_eq!(effective[0].0.id().name(), "a");

        // A floor of zero keeps every domain, with weights held up by
        // omega_min.
        let keep_all = GatingConfig::new(0.05, 1e-6, 0.0).unwrap();
        let effective = hierarchical_route(&roster, &router, &keep_all).unwrap();
        assert_eq!(effective.len(), 3);
        assert_eq!(effective[1].1.get(0, 0), 1e-6);
    }

    #[test]
    fn route_validates_counts_and_weights() {
        let d = dims(1, 1);
        let roster =
            HierarchicalRoster::new(vec![vec![const_expert(1, 1, "a", 0.5, 1.0)]]).unwrap();
        assert!(matches!(
            RouterOutput::new(vec![0.5, 0.5], vec![vec![c_weight(d, 1.0)]]),
            Err(GatingError::DomainCountMismatch { .. })
        ));
        assert!(matches!(
            RouterOutput::new(vec![0.9], vec![vec![c_weight(d, 1.0)]]),
            Err(GatingError::WeightSumNotOne { .. })
        ));
        let router = RouterOutput::new(
            vec![1.0],
            vec![vec![c_weight(d, 1.0), c_weight(d, 1.0)]],
        )
        .unwrap();
        assert!(matches!(
            hierarchical_route(&roster, &router, &GatingConfig::default()),
            Err(GatingError::TerrainCountMismatch { .. })
        ));
        // All domains pruned.
        let router = RouterOutput::new(vec![1.0], vec![vec![c_weight(d, 1.0)]]).unwrap();
        let high_floor = GatingConfig {
            domain_floor: 0.9999,
            ..GatingConfig::default()
        };
        let roster2 = HierarchicalRoster::new(vec![
            vec![const_expert(1, 1, "a", 0.5, 1.0)],
            vec![const_expert(2, 1, "b", 0.5, 1.0)],
        ])
        .unwrap();
        let router2 = RouterOutput::new(
            vec![0.5, 0.5],
            vec![vec![c_weight(d, 1.0)], vec![c_weight(d, 1.0)]],
        )
        .unwrap();
        assert!(matches!(
            hierarchical_route(&roster2, &router2, &high_floor),
            Err(GatingError::AllDomainsPruned)
        ));
        let _ = (roster, router);
    }

    #[test]
    fn roster_validates_indices_and_names() {
        assert!(matches!(
            HierarchicalRoster::new(vec![]),
            Err(GatingError::EmptyRoster)
        ));
        assert!(matches!(
            HierarchicalRoster::new(vec![vec![]]),
            Err(GatingError::EmptyDomain { domain: 1 })
        ));
        assert!(matches!(
            HierarchicalRoster::new(vec![vec![const_expert(2, 1, "a", 0.5, 1.0)]]),
            Err(GatingError::WrongDomainIndex { .. })
        ));
        assert!(matches!(
            HierarchicalRoster::new(vec![
                vec![const_expert(1, 1, "a", 0.5, 1.0)],
                vec![const_expert(2, 1, "a", 0.5, 1.0)],
            ]),
            Err(GatingError::DuplicateExpertName { .. })
        ));
    }

    #[test]
    fn cost_gap_conventions() {
        assert_eq!(cost_gap(1.5, 1.0), 0.5);
        assert_eq!(cost_gap(f64::INFINITY, f64::INFINITY), 0.0);
        assert!(cost_gap(1.0, f64::INFINITY).is_infinite());
    }

    #[test]
    fn termination_check_brackets_and_collapses() {
        let d = dims(2, 2);
        let w = c_weight(d, 1.0);
        let weights = [w.clone(), w.clone()];
        let t1 = TravMap::constant(d, 0.8).unwrap();
        let t2 = TravMap::constant(d, 0.4).unwrap();
        let config = GatingConfig::default();

        let state = FusionState::new(&weights).unwrap();
        let state = state.fuse_step(&t1, &w).unwrap();
        let check = check_termination(&state, &MeanCost, &config).unwrap();
        // Envelope after step 1 of 2: lower 0.4, upper 0.9 everywhere.
        // MeanCost is 1 - mean, so bounds are 0.6 and 0.1, delta 0.5.
        assert!((check.cost_upper_bound - 0.6).abs() <= 1e-12);
        assert!((check.cost_lower_bound - 0.1).abs() <= 1e-12);
        assert!((check.delta - 0.5).abs() <= 1e-12);
        assert!(!check.done);

        let state = state.fuse_step(&t2, &w).unwrap();
        let check = check_termination(&state, &MeanCost, &config).unwrap();
        // All weight folded: the bracket is exactly zero.
        assert_eq!(check.delta, 0.0);
        assert!(check.done);
    }

    #[test]
    fn termination_infeasible_pessimistic_map_never_claims_done() {
        let d = dims(2, 2);
        let w = c_weight(d, 1.0);
        let weights = [w.clone(), w.clone()];
        let state = FusionState::new(&weights).unwrap();
        // First estimate 0.9, but only half the weight landed: the lower
        // envelope is 0.45, below the stub's feasibility gate.
        let state = state
            .fuse_step(&TravMap::constant(d, 0.9).unwrap(), &w)
            .unwrap();
        let check = check_termination(&state, &GatedMeanCost, &GatingConfig::default()).unwrap();
        assert!(check.delta.is_infinite());
        assert!(!check.done);

        // An infinite tolerance accepts even a vacuous bracket.
        let trusting = GatingConfig::new(f64::INFINITY, 1e-6, 0.02).unwrap();
        let check = check_termination(&state, &GatedMeanCost, &trusting).unwrap();
        assert!(check.done);
    }

    fn demo_inputs(d: GridDims) -> (ElevationGrid, SemanticGrid, TravMap) {
        let elevation = ElevationGrid::new(d, vec![0.0; d.len()], 0.25).unwrap();
        let semantics = SemanticGrid::uniform(d, SemanticClass::Floor);
        let gt = TravMap::constant(d, 0.9).unwrap();
        (elevation, semantics, gt)
    }

    #[test]
    fn dominant_first_expert_stops_after_one_step() {
        // Two experts; the router puts weight 0.999 on the first. After the
        // first step the untouched mass is 0.001 of the total, so the
        // envelope width, and with it delta, stays at the per-mille level,
        // far below epsilon 0.05.
        let d = dims(4, 4);
        let (elevation, semantics, gt) = demo_inputs(d);
        let inputs = ExpertInputs::new(&elevation, &semantics, &gt).unwrap();
        let queue = build_queue(vec![
            (const_expert(1, 1, "trusted", 0.7, 1.0), c_weight(d, 0.999)),
            (const_expert(1, 2, "ignored", 0.1, 50.0), c_weight(d, 0.001)),
        ])
        .unwrap();
        let config = GatingConfig::default();
        let (fused, trace) = lazy_gating_with(&queue, &inputs, &MeanCost, &config).unwrap();

        assert_eq!(trace.termination_step, 1);
        assert!(trace.terminated_early);
        assert_eq!(trace.experts_activated(), 1);
        assert_eq!(trace.flops_used(), 1.0);
        assert_eq!(fused.get(0, 0), 0.7);

        // The recorded delta matches an explicit envelope computation.
        let weights = queue.weights_in_order();
        let state = FusionState::new(&weights).unwrap();
        let state = state
            .fuse_step(&TravMap::constant(d, 0.7).unwrap(), &weights[0])
            .unwrap();
        let c_up = MeanCost
            .path_cost(&state.lower_expectation().unwrap())
            .unwrap();
        let c_lo = MeanCost
            .path_cost(&state.upper_expectation().unwrap())
            .unwrap();
        assert_eq!(trace.records[0].delta, c_up - c_lo);
        assert!(trace.records[0].delta < config.epsilon);
    }

    #[test]
    fn zero_epsilon_runs_the_full_queue_and_stops_exactly_at_the_end() {
        let d = dims(3, 3);
        let (elevation, semantics, gt) = demo_inputs(d);
        let inputs = ExpertInputs::new(&elevation, &semantics, &gt).unwrap();
        let queue = build_queue(vec![
            (const_expert(1, 1, "e1", 0.2, 1.0), c_weight(d, 1.0)),
            (const_expert(1, 2, "e2", 0.8, 1.0), c_weight(d, 1.0)),
            (const_expert(1, 3, "e3", 0.5, 1.0), c_weight(d, 1.0)),
        ])
        .unwrap();
        let config = GatingConfig::new(0.0, 1e-6, 0.02).unwrap();
        let (_, trace) = lazy_gating_with(&queue, &inputs, &MeanCost, &config).unwrap();
        assert_eq!(trace.termination_step, 3);
        assert!(!trace.terminated_early);
        // Exactly one stopped row, the last, and its delta is exactly zero.
        assert_eq!(
            trace.records.iter().filter(|r| r.stopped).count(),
            1
        );
        assert!(trace.records.last().unwrap().stopped);
        assert_eq!(trace.records.last().unwrap().delta, 0.0);
        // Deltas never increase.
        for pair in trace.records.windows(2) {
            assert!(pair[1].delta <= pair[0].delta + 1e-12);
        }
        // Flops accumulate per evaluated expert.
        let flops: Vec<_> = trace.records.iter().map(|r| r.flops_cumulative).collect();
        assert_eq!(flops, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn expert_failure_carries_partial_trace() {
        let d = dims(2, 2);
        let elevation = ElevationGrid::new(d, vec![0.0; 4], 0.25).unwrap();
        let semantics = SemanticGrid::uniform(d, SemanticClass::Snow);
        let gt = TravMap::constant(d, 0.7).unwrap();
        let inputs = ExpertInputs::new(&elevation, &semantics, &gt).unwrap();
        let partial_table = TravCostTable::from_entries([(SemanticClass::Floor, 1.0)]).unwrap();
        let queue = build_queue(vec![
            (const_expert(1, 1, "ok", 0.5, 1.0), c_weight(d, 1.0)),
            (
                expert(1, 2, "broken", ExpertKind::Semantic(partial_table), 1.0),
                c_weight(d, 1.0),
            ),
        ])
        .unwrap();
        let config = GatingConfig::new(0.0, 1e-6, 0.02).unwrap();
        let err = lazy_gating_with(&queue, &inputs, &MeanCost, &config).unwrap_err();
        match err {
            GatingError::ExpertFailed {
                expert, partial, ..
            } => {
                assert_eq!(expert, "broken");
                assert_eq!(partial.len(), 1);
                assert_eq!(partial[0].expert, "ok");
            }
            other => panic!("expected ExpertFailed, got {other:?}"),
        }
    }

    #[test]
    fn primitive_backed_gating_returns_a_plan() {
        let d = dims(8, 8);
        let (elevation, semantics, gt) = demo_inputs(d);
        let inputs = ExpertInputs::new(&elevation, &semantics, &gt).unwrap();
        let queue = build_queue(vec![
            (
                expert(1, 1, "geo", ExpertKind::Geometric(GeoParams::default()), 1.0),
                c_weight(d, 0.9),
            ),
            (
                expert(1, 2, "sem", ExpertKind::Semantic(TravCostTable::default()), 5.0),
                c_weight(d, 0.1),
            ),
        ])
        .unwrap();
        let frame = GridFrame::new(0.0, 0.0, 0.25, d).unwrap();
        let start = Pose3 {
            x: 0.3,
            y: 1.0,
            z: 0.0,
            yaw: 0.0,
        };
        let fan = FanSpec::symmetric(5, 0.8, 0.2).unwrap();
        let planner_config = PlannerConfig::default().with_horizon(1.2).unwrap();
        let prims = generate_primitives(&start, planner_config.horizon, &fan).unwrap();
        let outcome = lazy_gating(
            &queue,
            &inputs,
            &prims,
            &frame,
            start.position(),
            [1.8, 1.0, 0.0],
            &planner_config,
            &GatingConfig::default(),
        )
        .unwrap();
        assert!(outcome.plan.best.is_some());
        assert!(outcome.plan.cost.is_finite());
        assert_eq!(
            outcome.trace.records.last().unwrap().cost,
            outcome.plan.cost
        );
    }

    #[test]
    fn supervision_picks_closest_expert_with_low_index_ties() {
        let d = dims(1, 2);
        let maps = [
            TravMap::new(d, vec![0.2, 0.6]).unwrap(),
            TravMap::new(d, vec![0.8, 0.8]).unwrap(),
        ];
        let gt = TravMap::new(d, vec![0.7, 0.7]).unwrap();
        let labels = supervision_labels(&maps, &gt).unwrap();
        // Cell 0: errors 0.25 vs 0.01 -> expert 1.
        // Cell 1: both 0.01 -> tie -> expert 0.
        assert_eq!(labels.selector, vec![1, 0]);
        assert_eq!(labels.label_map.values(), &[0.8, 0.6]);
        assert!(supervision_labels(&[], &gt).is_err());
    }
}
