//! Scenario harness: describe runs in a small text format, execute the
//! gated pipeline against generated or stored worlds, score it against the
//! ground truth and the ungated baseline, and emit CSV reports.
//!
//! The harness also carries `verify_propositions`, a randomized sweep that
//! hammers the certified-bound claims across worlds, expert mixes, weight
//! fields, and both plan-cost backends. Every check it counts is recomputed
//! from first principles here rather than trusted from the gating loop.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::experts::{
    assigned_family, ExpertError, ExpertFamily, ExpertId, ExpertKind, ExpertSpec, GeoParams,
    TravCostTable,
};
use crate::fusion::{fuse_batch, FusionError, FusionState};
use crate::gating::{
    build_queue, check_termination, cost_gap, hierarchical_route, lazy_gating_with,
    GatingConfig, GatingError, GatingTrace, GraphPathCost, PathCostPlanner, PrimitivePathCost,
    RouterOutput,
};
use crate::grid::{GridDims, GridError, TravMap, WeightMap};
use crate::metrics::{flop_savings, metric_e_m, metric_e_p, metric_q_p, MetricError};
use crate::planner::{generate_primitives, plan, FanSpec, PlanError, PlannerConfig};
use crate::world::{generate_world, DomainTag, World, WorldError};

use crate::gating::HierarchicalRoster;

#[derive(Debug, Clone)]
pub enum HarnessError {
    Io { path: String, message: String },
    Parse { line: usize, message: String },
    DuplicateScenario { name: String },
    NoScenarios,
    World(WorldError),
    Gating(GatingError),
    Metric(MetricError),
    Fusion(FusionError),
    Plan(PlanError),
    Expert(ExpertError),
    Grid(GridError),
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Io { path, message } => write!(f, "{path}: {message}"),
            HarnessError::Parse { line, message } => {
                write!(f, "scenario file line {line}: {message}")
            }
            HarnessError::DuplicateScenario { name } => {
                write!(f, "duplicate scenario name '{name}'")
            }
            HarnessError::NoScenarios => write!(f, "no scenarios to run"),
            HarnessError::World(e) => write!(f, "{e}"),
            HarnessError::Gating(e) => write!(f, "{e}"),
            HarnessError::Metric(e) => write!(f, "{e}"),
            HarnessError::Fusion(e) => write!(f, "{e}"),
            HarnessError::Plan(e) => write!(f, "{e}"),
            HarnessError::Expert(e) => write!(f, "{e}"),
            HarnessError::Grid(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for HarnessError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            HarnessError::World(e) => Some(e),
            HarnessError::Gating(e) => Some(e),
            HarnessError::Metric(e) => Some(e),
            HarnessError::Fusion(e) => Some(e),
            HarnessError::Plan(e) => Some(e),
            HarnessError::Expert(e) => Some(e),
            HarnessError::Grid(e) => Some(e),
            _ => None,
        }
    }
}

macro_rules! from_error {
    ($variant:ident, $source:ty) => {
        impl From<$source> for HarnessError {
            fn from(e: $source) -> Self {
                HarnessError::$variant(e)
            }
        }
    };
}

from_error!(World, WorldError);
from_error!(Gating, GatingError);
from_error!(Metric, MetricError);
from_error!(Fusion, FusionError);
from_error!(Plan, PlanError);
from_error!(Expert, ExpertError);
from_error!(Grid, GridError);

/// Which plan-cost backend drives the termination check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlannerMode {
    /// Best arc of a primitive fan rolled out from the start pose.
    Primitive,
    /// Cheapest admitted grid path from start cell to goal cell.
    Graph,
}

impl PlannerMode {
    pub fn name(&self) -> &'static str {
        match self {
            PlannerMode::Primitive => "primitive",
            PlannerMode::Graph => "graph",
        }
    }

    pub fn from_name(name: &str) -> Option<PlannerMode> {
        match name {
            "primitive" => Some(PlannerMode::Primitive),
            "graph" => Some(PlannerMode::Graph),
            _ => None,
        }
    }
}

/// Where the world for a scenario comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum WorldSource {
    Seeded {
        seed: u64,
        domain: DomainTag,
        height: usize,
        width: usize,
    },
    File(PathBuf),
}

/// How routing weights are produced.
#[derive(Debug, Clone, PartialEq)]
pub enum RouterSource {
    /// Equal domain weights, equal terrain weights.
    Uniform,
    /// Fixed domain weights; terrain weights stay uniform within each domain.
    Scripted { domain_weights: Vec<f64> },
    /// An informed router: `confidence` of the domain mass goes to the
    /// world's own domain, and per cell the expert family matching the true
    /// semantic class shares `confidence` of the terrain mass.
    GtTable { confidence: f64 },
}

/// One runnable scenario description.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub world: WorldSource,
    pub router: RouterSource,
    pub epsilon: f64,
    pub planner: PlannerMode,
    pub reps: usize,
}

impl ScenarioSpec {
    /// Seeded world scenario with the usual defaults: informed router,
    /// epsilon 0.05, primitive backend, one repetition.
    pub fn seeded(name: impl Into<String>, seed: u64, domain: DomainTag, extent: usize) -> Self {
        ScenarioSpec {
            name: name.into(),
            world: WorldSource::Seeded {
                seed,
                domain,
                height: extent,
                width: extent,
            },
            router: RouterSource::GtTable { confidence: 0.97 },
            epsilon: 0.05,
            planner: PlannerMode::Primitive,
            reps: 1,
        }
    }
}

/// Parse the scenario text format:
///
/// ```text
/// travgate-scenarios v1
/// scenario corridor_a
/// world seeded 42 indoor 16 16
/// router gt_table 0.97
/// epsilon 0.05
/// planner primitive
/// reps 3
/// end
/// ```
///
/// `world file <path>` loads a stored world instead. `router` accepts
/// `uniform`, `scripted <w...>`, or `gt_table <confidence>`. `epsilon`,
/// `planner`, and `reps` are optional and default to 0.05, `primitive`,
/// and 1. `epsilon inf` accepts the very first bracket however loose,
/// so exactly one expert runs; `epsilon 0` keeps going until the bracket
/// closes completely.
pub fn parse_scenarios(text: &str) -> Result<Vec<ScenarioSpec>, HarnessError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let parse_err = |line: usize, message: String| HarnessError::Parse { line, message };

    let (line, header) = lines
        .next()
        .ok_or_else(|| parse_err(0, "empty scenario file".into()))?;
    if header != "travgate-scenarios v1" {
        return Err(parse_err(
            line,
            "expected header 'travgate-scenarios v1'".into(),
        ));
    }

    let mut specs: Vec<ScenarioSpec> = Vec::new();
    let mut names = BTreeSet::new();
    while let Some((line, l)) = lines.next() {
        let mut parts = l.split_whitespace();
        let key = parts.next().unwrap_or("");
        if key != "scenario" {
            return Err(parse_err(line, format!("expected 'scenario', got '{key}'")));
        }
        let name = parts
            .next()
            .ok_or_else(|| parse_err(line, "scenario needs a name".into()))?
            .to_string();
        if !names.insert(name.clone()) {
            return Err(HarnessError::DuplicateScenario { name });
        }

        let mut world: Option<WorldSource> = None;
        let mut router = RouterSource::Uniform;
        let mut epsilon = 0.05;
        let mut planner = PlannerMode::Primitive;
        let mut reps = 1usize;
        let mut closed = false;
        for (line, l) in lines.by_ref() {
            let mut parts = l.split_whitespace();
            let key = parts.next().unwrap_or("");
            let rest: Vec<&str> = parts.collect();
            match key {
                "world" => {
                    world = Some(parse_world_source(line, &rest)?);
                }
                "router" => {
                    router = parse_router_source(line, &rest)?;
                }
                "epsilon" => {
                    let v: f64 = parse_num(line, "epsilon", rest.first())?;
                    if v.is_nan() || v < 0.0 {
                        return Err(parse_err(line, "epsilon must be >= 0".into()));
                    }
                    epsilon = v;
                }
                "planner" => {
                    let name = rest
                        .first()
                        .ok_or_else(|| parse_err(line, "planner needs a mode".into()))?;
                    planner = PlannerMode::from_name(name)
                        .ok_or_else(|| parse_err(line, format!("unknown planner '{name}'")))?;
                }
                "reps" => {
                    reps = parse_num(line, "reps", rest.first())?;
                    if reps == 0 {
                        return Err(parse_err(line, "reps must be >= 1".into()));
                    }
                }
                "end" => {
                    closed = true;
                    break;
                }
                other => {
                    return Err(parse_err(line, format!("unexpected field '{other}'")));
                }
            }
        }
        if !closed {
            return Err(parse_err(0, format!("scenario '{name}' missing 'end'")));
        }
        let world = world
            .ok_or_else(|| parse_err(line, format!("scenario '{name}' missing 'world'")))?;
        specs.push(ScenarioSpec {
            name,
            world,
            router,
            epsilon,
            planner,
            reps,
        });
    }
    if specs.is_empty() {
        return Err(HarnessError::NoScenarios);
    }
    Ok(specs)
}

pub fn load_scenarios(path: &Path) -> Result<Vec<ScenarioSpec>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_scenarios(&text)
}

fn parse_world_source(line: usize, rest: &[&str]) -> Result<WorldSource, HarnessError> {
    let parse_err = |message: String| HarnessError::Parse { line, message };
    match rest.first().copied() {
        Some("seeded") => {
            if rest.len() != 5 {
                return Err(parse_err(
                    "world seeded needs: seed domain height width".into(),
                ));
            }
            let domain = DomainTag::from_name(rest[2])
                .ok_or_else(|| parse_err(format!("unknown domain '{}'", rest[2])))?;
            Ok(WorldSource::Seeded {
                seed: parse_num(line, "seed", Some(&rest[1]))?,
                domain,
                height: parse_num(line, "height", Some(&rest[3]))?,
                width: parse_num(line, "width", Some(&rest[4]))?,
            })
        }
        Some("file") => {
            let path = rest
                .get(1)
                .ok_or_else(|| parse_err("world file needs a path".into()))?;
            Ok(WorldSource::File(PathBuf::from(path)))
        }
        _ => Err(parse_err("world must be 'seeded ...' or 'file <path>'".into())),
    }
}

fn parse_router_source(line: usize, rest: &[&str]) -> Result<RouterSource, HarnessError> {
    let parse_err = |message: String| HarnessError::Parse { line, message };
    match rest.first().copied() {
        Some("uniform") => Ok(RouterSource::Uniform),
        Some("scripted") => {
            if rest.len() < 2 {
                return Err(parse_err("router scripted needs domain weights".into()));
            }
            let weights: Result<Vec<f64>, _> = rest[1..]
                .iter()
                .map(|w| parse_num(line, "domain weight", Some(w)))
                .collect();
            Ok(RouterSource::Scripted {
                domain_weights: weights?,
            })
        }
        Some("gt_table") => {
            let confidence: f64 = parse_num(line, "confidence", rest.get(1))?;
            if !(confidence > 0.0 && confidence <= 1.0) {
                return Err(parse_err("confidence must be in (0, 1]".into()));
            }
            Ok(RouterSource::GtTable { confidence })
        }
        _ => Err(parse_err(
            "router must be 'uniform', 'scripted ...', or 'gt_table <c>'".into(),
        )),
    }
}

fn parse_num<T: std::str::FromStr>(
    line: usize,
    what: &str,
    value: Option<&&str>,
) -> Result<T, HarnessError> {
    value
        .ok_or_else(|| HarnessError::Parse {
            line,
            message: format!("{what} needs a value"),
        })?
        .parse()
        .map_err(|_| HarnessError::Parse {
            line,
            message: format!("bad {what} value"),
        })
}

/// The four reference compute costs, relative to the cheapest model.
pub const FLOP_GEOMETRY: f64 = 0.13;
pub const FLOP_SEMANTICS: f64 = 18.69;
pub const FLOP_FAST_FIELD: f64 = 48.3;
pub const FLOP_DEEP_FIELD: f64 = 246.31;

/// The standard roster: one domain per [`DomainTag`], four experts each.
/// Geometry is the model-based expert; the table lookup and the two field
/// estimators stand in for networks of increasing size and accuracy.
pub fn default_roster() -> HierarchicalRoster {
    let mut domains = Vec::with_capacity(DomainTag::ALL.len());
    for (m, domain) in DomainTag::ALL.iter().enumerate() {
        let mk_id = |t: usize, label: &str| {
            ExpertId::new(m + 1, t, format!("{}/{label}", domain.name()))
                .expect("roster ids are valid")
        };
        let specs = vec![
            ExpertSpec::new(
                mk_id(1, "geometry"),
                ExpertKind::Geometric(GeoParams::default()),
                FLOP_GEOMETRY,
            )
            .expect("valid spec"),
            ExpertSpec::new(
                mk_id(2, "semantics"),
                ExpertKind::Semantic(TravCostTable::default()),
                FLOP_SEMANTICS,
            )
            .expect("valid spec"),
            ExpertSpec::new(
                mk_id(3, "fast_field"),
                ExpertKind::noisy_oracle(0.10, 101 + m as u64).expect("valid kind"),
                FLOP_FAST_FIELD,
            )
            .expect("valid spec"),
            ExpertSpec::new(
                mk_id(4, "deep_field"),
                ExpertKind::noisy_oracle(0.03, 201 + m as u64).expect("valid kind"),
                FLOP_DEEP_FIELD,
            )
            .expect("valid spec"),
        ];
        domains.push(specs);
    }
    HierarchicalRoster::new(domains).expect("default roster is valid")
}

/// Materialize router weights for a world.
pub fn route_weights(
    source: &RouterSource,
    world: &World,
    roster: &HierarchicalRoster,
) -> Result<RouterOutput, HarnessError> {
    let dims = world.dims();
    let m = roster.domains().len();
    match source {
        RouterSource::Uniform => {
            let domain_weights = vec![1.0 / m as f64; m];
            let terrain = uniform_terrain(roster, dims)?;
            Ok(RouterOutput::new(domain_weights, terrain)?)
        }
        RouterSource::Scripted { domain_weights } => {
            let terrain = uniform_terrain(roster, dims)?;
            Ok(RouterOutput::new(domain_weights.clone(), terrain)?)
        }
        RouterSource::GtTable { confidence } => {
            let c = *confidence;
            let mut domain_weights = vec![if m > 1 { (1.0 - c) / (m - 1) as f64 } else { 1.0 }; m];
            if m > 1 {
                domain_weights[world.domain.index().min(m - 1)] = c;
            }
            let mut terrain = Vec::with_capacity(m);
            for specs in roster.domains() {
                let families: Vec<ExpertFamily> =
                    specs.iter().map(|s| s.kind().family()).collect();
                let model_based = families
                    .iter()
                    .filter(|f| **f == ExpertFamily::ModelBased)
                    .count();
                let neural = families.len() - model_based;
                let mut maps = Vec::with_capacity(specs.len());
                for family in &families {
                    let values: Vec<f64> = dims
                        .cells()
                        .map(|(r, col)| {
                            let favored = assigned_family(world.semantics.get(r, col));
                            let (n_fav, n_other) = if favored == ExpertFamily::ModelBased {
                                (model_based, neural)
                            } else {
                                (neural, model_based)
                            };
                            // All mass to whichever side exists when the
                            // other is absent from the domain.
                            if n_fav == 0 {
                                return 1.0 / n_other.max(1) as f64;
                            }
                            if n_other == 0 {
                                return 1.0 / n_fav as f64;
                            }
                            if *family == favored {
                                c / n_fav as f64
                            } else {
                                (1.0 - c) / n_other as f64
                            }
                        })
                        .collect();
                    maps.push(WeightMap::new(dims, values)?);
                }
                terrain.push(maps);
            }
            Ok(RouterOutput::new(domain_weights, terrain)?)
        }
    }
}

fn uniform_terrain(
    roster: &HierarchicalRoster,
    dims: GridDims,
) -> Result<Vec<Vec<WeightMap>>, HarnessError> {
    let mut terrain = Vec::with_capacity(roster.domains().len());
    for specs in roster.domains() {
        let w = 1.0 / specs.len() as f64;
        let maps: Result<Vec<WeightMap>, GridError> = specs
            .iter()
            .map(|_| WeightMap::constant(dims, w))
            .collect();
        terrain.push(maps?);
    }
    Ok(terrain)
}

/// One `metrics.csv` row.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRow {
    pub scenario_id: String,
    pub domain: DomainTag,
    pub e_p: f64,
    pub e_m: f64,
    pub q_p: f64,
    pub flops_used: f64,
    pub flops_full: f64,
    pub savings_fraction: f64,
    pub experts_activated: usize,
}

/// One `trace.csv` row: expert `k` (1-based) of a scenario run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub scenario_id: String,
    pub k: usize,
    pub expert: String,
    pub delta: f64,
    pub cost: f64,
    pub flops_cumulative: f64,
    pub terminated: bool,
}

/// Counts of the claims checked during a run. Violations should be zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PropositionCounts {
    /// Per step: the gap between the step cost and the full-fusion cost
    /// stays within that step's bracket width (tolerance 1e-9).
    pub bound_checks: usize,
    pub bound_violations: usize,
    /// Per consecutive step pair: the bracket never widens (tolerance 1e-9).
    pub monotonic_checks: usize,
    pub monotonic_violations: usize,
    /// For exhausted queues: the gated map equals batch fusion within 1e-9
    /// per cell. For budget zero: the gated plan cost equals the batch plan
    /// cost within 1e-9.
    pub batch_equivalence_checks: usize,
    pub batch_equivalence_violations: usize,
}

impl PropositionCounts {
    pub fn violations(&self) -> usize {
        self.bound_violations + self.monotonic_violations + self.batch_equivalence_violations
    }

    fn absorb(&mut self, other: PropositionCounts) {
        self.bound_checks += other.bound_checks;
        self.bound_violations += other.bound_violations;
        self.monotonic_checks += other.monotonic_checks;
        self.monotonic_violations += other.monotonic_violations;
        self.batch_equivalence_checks += other.batch_equivalence_checks;
        self.batch_equivalence_violations += other.batch_equivalence_violations;
    }
}

/// Means over all rows of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregates {
    pub scenarios: usize,
    pub mean_e_p: f64,
    pub mean_e_m: f64,
    pub mean_q_p: f64,
    pub mean_savings: f64,
}

/// A scenario repetition that could not produce a row. The batch keeps
/// going; failures are reported alongside the successful rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub scenario_id: String,
    pub message: String,
}

/// Everything a harness run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub rows: Vec<ScenarioRow>,
    pub traces: Vec<TraceRow>,
    pub failures: Vec<RunFailure>,
    pub propositions: PropositionCounts,
    pub aggregates: Aggregates,
}

fn fmt_float(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".to_string()
    } else if x == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{x}")
    }
}

impl RunReport {
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from(
            "scenario_id,domain,e_p,e_m,q_p,flops_used,flops_full,savings_fraction,experts_activated\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.scenario_id,
                r.domain,
                fmt_float(r.e_p),
                fmt_float(r.e_m),
                fmt_float(r.q_p),
                fmt_float(r.flops_used),
                fmt_float(r.flops_full),
                fmt_float(r.savings_fraction),
                r.experts_activated,
            ));
        }
        out
    }

    pub fn trace_csv(&self) -> String {
        let mut out =
            String::from("scenario_id,k,expert,delta,cost,flops_cumulative,terminated\n");
        for t in &self.traces {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                t.scenario_id,
                t.k,
                t.expert,
                fmt_float(t.delta),
                fmt_float(t.cost),
                fmt_float(t.flops_cumulative),
                t.terminated,
            ));
        }
        out
    }

    /// Write `metrics.csv` and `trace.csv` into a directory.
    pub fn write_csv(&self, dir: &Path) -> Result<(), HarnessError> {
        let io_err = |path: &Path, e: std::io::Error| HarnessError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let metrics = dir.join("metrics.csv");
        std::fs::write(&metrics, self.metrics_csv()).map_err(|e| io_err(&metrics, e))?;
        let trace = dir.join("trace.csv");
        std::fs::write(&trace, self.trace_csv()).map_err(|e| io_err(&trace, e))?;
        Ok(())
    }
}

/// Run every scenario (each repetition separately) and assemble the report.
/// Rows and traces are sorted by scenario id, so a rerun of the same specs
/// produces byte-identical CSV text.
pub fn run_scenarios(specs: &[ScenarioSpec]) -> Result<RunReport, HarnessError> {
    let mut names = BTreeSet::new();
    for spec in specs {
        if !names.insert(spec.name.clone()) {
            return Err(HarnessError::DuplicateScenario {
                name: spec.name.clone(),
            });
        }
    }

    let roster = default_roster();
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    let mut failures = Vec::new();
    let mut propositions = PropositionCounts::default();
    for spec in specs {
        for rep in 0..spec.reps {
            let row_id = if spec.reps == 1 {
                spec.name.clone()
            } else {
                format!("{}#{rep}", spec.name)
            };
            let outcome = (|| -> Result<_, HarnessError> {
                let world = match &spec.world {
                    WorldSource::Seeded {
                        seed,
                        domain,
                        height,
                        width,
                    } => generate_world(
                        seed.wrapping_add(rep as u64),
                        *domain,
                        GridDims::new(*height, *width)?,
                    )?,
                    WorldSource::File(path) => World::load(path)?,
                };
                run_one(&row_id, spec, &world, &roster)
            })();
            match outcome {
                Ok((row, trace_rows, props)) => {
                    rows.push(row);
                    traces.extend(trace_rows);
                    propositions.absorb(props);
                }
                Err(e) => failures.push(RunFailure {
                    scenario_id: row_id,
                    message: e.to_string(),
                }),
            }
        }
    }
    rows.sort_by(|a, b| a.scenario_id.cmp(&b.scenario_id));
    traces.sort_by(|a, b| (&a.scenario_id, a.k).cmp(&(&b.scenario_id, b.k)));
    failures.sort_by(|a, b| a.scenario_id.cmp(&b.scenario_id));

    let n = if rows.is_empty() { 1.0 } else { rows.len() as f64 };
    let aggregates = Aggregates {
        scenarios: rows.len(),
        mean_e_p: rows.iter().map(|r| r.e_p).sum::<f64>() / n,
        mean_e_m: rows.iter().map(|r| r.e_m).sum::<f64>() / n,
        mean_q_p: rows.iter().map(|r| r.q_p).sum::<f64>() / n,
        mean_savings: rows.iter().map(|r| r.savings_fraction).sum::<f64>() / n,
    };
    Ok(RunReport {
        rows,
        traces,
        failures,
        propositions,
        aggregates,
    })
}

/// Run scenarios straight from a scenario file.
pub fn run_scenario_file(path: &Path) -> Result<RunReport, HarnessError> {
    run_scenarios(&load_scenarios(path)?)
}

fn run_one(
    row_id: &str,
    spec: &ScenarioSpec,
    world: &World,
    roster: &HierarchicalRoster,
) -> Result<(ScenarioRow, Vec<TraceRow>, PropositionCounts), HarnessError> {
    let gating = GatingConfig::new(spec.epsilon, 1e-6, 0.02)?;
    let router = route_weights(&spec.router, world, roster)?;
    let effective = hierarchical_route(roster, &router, &gating)?;
    let queue = build_queue(effective)?;

    let inputs = world.inputs();
    let frame = world.frame();
    let horizon = world.domain.default_horizon();
    let planner_config = PlannerConfig::default().with_horizon(horizon)?;
    let fan = FanSpec::symmetric(7, 1.0, frame.cell_size())?;
    let prims = generate_primitives(&world.start, horizon, &fan)?;

    let backend: Box<dyn PathCostPlanner + '_> = match spec.planner {
        PlannerMode::Primitive => Box::new(PrimitivePathCost {
            prims: &prims,
            frame: &frame,
            robot: world.start.position(),
            goal: world.goal,
            config: &planner_config,
        }),
        PlannerMode::Graph => Box::new(GraphPathCost {
            src: world.start_cell(),
            dst: world.goal_cell(),
            config: &planner_config,
        }),
    };

    let (fused, trace) = lazy_gating_with(&queue, &inputs, backend.as_ref(), &gating)?;
    let final_plan = plan(
        &fused,
        &prims,
        &frame,
        world.start.position(),
        world.goal,
        &planner_config,
    )?;

    // Ungated baseline: every queued expert, one batch fusion.
    let mut maps = Vec::with_capacity(queue.len());
    for entry in queue.entries() {
        maps.push(entry.spec.evaluate(&inputs)?);
    }
    let weights = queue.weights_in_order();
    let batch = fuse_batch(&maps, &weights)?;
    let batch_cost = backend.path_cost(&batch)?;

    let props = check_propositions(&trace, &fused, &batch, batch_cost, spec.epsilon);

    let flops_used = trace.flops_used();
    let flops_full = queue.total_flops();
    let row = ScenarioRow {
        scenario_id: row_id.to_string(),
        domain: world.domain,
        e_p: metric_e_p(&fused, &world.gt_trav, &prims, &frame)?,
        e_m: metric_e_m(&fused, &world.gt_trav)?,
        q_p: metric_q_p(
            final_plan.best.as_ref(),
            &world.gt_trav,
            &prims,
            &frame,
            world.start,
            world.goal,
            &planner_config,
        )?,
        flops_used,
        flops_full,
        savings_fraction: flop_savings(flops_used, flops_full)?,
        experts_activated: trace.experts_activated(),
    };
    let trace_rows = trace
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| TraceRow {
            scenario_id: row_id.to_string(),
            k: i + 1,
            expert: r.expert.clone(),
            delta: r.delta,
            cost: r.cost,
            flops_cumulative: r.flops_cumulative,
            terminated: r.stopped,
        })
        .collect();
    Ok((row, trace_rows, props))
}

fn le_with_tol(a: f64, b: f64, tol: f64) -> bool {
    (a.is_infinite() && b.is_infinite() && a.signum() == b.signum()) || a <= b + tol
}

fn check_propositions(
    trace: &GatingTrace,
    fused: &TravMap,
    batch: &TravMap,
    batch_cost: f64,
    epsilon: f64,
) -> PropositionCounts {
    let mut props = PropositionCounts::default();
    for record in &trace.records {
        props.bound_checks += 1;
        if cost_gap(record.cost, batch_cost) > record.delta + 1e-9 {
            props.bound_violations += 1;
        }
    }
    for pair in trace.records.windows(2) {
        props.monotonic_checks += 1;
        if !le_with_tol(pair[1].delta, pair[0].delta, 1e-9) {
            props.monotonic_violations += 1;
        }
    }
    if !trace.terminated_early {
        // Queue exhausted: the running weighted average must agree with the
        // one-shot batch average up to rounding (they divide at different
        // points, so bitwise equality is not on the table).
        props.batch_equivalence_checks += 1;
        let worst = fused
            .values()
            .iter()
            .zip(batch.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if worst > 1e-9 {
            props.batch_equivalence_violations += 1;
        }
    }
    if epsilon == 0.0 {
        // Zero budget: the gated plan cost must match the ungated one.
        props.batch_equivalence_checks += 1;
        let last_cost = trace.records.last().map_or(f64::INFINITY, |r| r.cost);
        if cost_gap(last_cost, batch_cost) > 1e-9 {
            props.batch_equivalence_violations += 1;
        }
    }
    props
}

/// Configuration for the randomized claim sweep.
#[derive(Debug, Clone, Copy)]
pub struct VerifyConfig {
    pub trials: usize,
    pub base_seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            trials: 200,
            base_seed: 7,
        }
    }
}

/// Tally of the randomized sweep. All violation counts should be zero;
/// `max_bound_ratio` is how much of the bracket the worst observed gap
/// actually used (at most 1 when the claim holds and the bracket is real).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VerifyReport {
    pub trials_run: usize,
    pub skipped: usize,
    pub bound_checks: usize,
    pub bound_violations: usize,
    pub monotonic_checks: usize,
    pub monotonic_violations: usize,
    pub order_checks: usize,
    pub order_violations: usize,
    pub feasibility_checks: usize,
    pub feasibility_violations: usize,
    pub max_bound_ratio: f64,
}

impl VerifyReport {
    pub fn violations(&self) -> usize {
        self.bound_violations
            + self.monotonic_violations
            + self.order_violations
            + self.feasibility_violations
    }

    fn absorb(&mut self, other: VerifyReport) {
        self.trials_run += other.trials_run;
        self.skipped += other.skipped;
        self.bound_checks += other.bound_checks;
        self.bound_violations += other.bound_violations;
        self.monotonic_checks += other.monotonic_checks;
        self.monotonic_violations += other.monotonic_violations;
        self.order_checks += other.order_checks;
        self.order_violations += other.order_violations;
        self.feasibility_checks += other.feasibility_checks;
        self.feasibility_violations += other.feasibility_violations;
        self.max_bound_ratio = self.max_bound_ratio.max(other.max_bound_ratio);
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "trials run: {} (skipped {})",
            self.trials_run, self.skipped
        )?;
        writeln!(
            f,
            "bound checks: {} violations: {}",
            self.bound_checks, self.bound_violations
        )?;
        writeln!(
            f,
            "bracket monotonic checks: {} violations: {}",
            self.monotonic_checks, self.monotonic_violations
        )?;
        writeln!(
            f,
            "cost order checks: {} violations: {}",
            self.order_checks, self.order_violations
        )?;
        writeln!(
            f,
            "feasibility nesting checks: {} violations: {}",
            self.feasibility_checks, self.feasibility_violations
        )?;
        write!(f, "max bound ratio: {}", fmt_float(self.max_bound_ratio))
    }
}

/// Randomized sweep of the certified-bound claims.
///
/// Each trial builds a random world and a random expert stack, runs the
/// fusion loop to exhaustion, and recomputes per step: the plan cost on the
/// fused map, the bracket from the envelope maps, the cost ordering, and
/// feasibility nesting. The gap to the final (full-fusion) cost is then
/// checked against every step's bracket. Trials alternate between the arc
/// and graph plan-cost backends and sweep the admission threshold.
pub fn verify_propositions(config: &VerifyConfig) -> Result<VerifyReport, HarnessError> {
    let outcomes: Result<Vec<VerifyReport>, HarnessError> = (0..config.trials)
        .into_par_iter()
        .map(|trial| verify_trial(trial, config.base_seed))
        .collect();
    let mut report = VerifyReport::default();
    for outcome in outcomes? {
        report.absorb(outcome);
    }
    Ok(report)
}

fn verify_trial(trial: usize, base_seed: u64) -> Result<VerifyReport, HarnessError> {
    let seed = base_seed.wrapping_add((trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = VerifyReport::default();

    let domain = DomainTag::ALL[trial % DomainTag::ALL.len()];
    let dims = GridDims::new(rng.random_range(8..=32), rng.random_range(8..=32))?;
    let mut world = None;
    for _ in 0..8 {
        match generate_world(rng.random(), domain, dims) {
            Ok(w) => {
                world = Some(w);
                break;
            }
            Err(WorldError::Placement { .. }) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    let Some(world) = world else {
        report.skipped = 1;
        return Ok(report);
    };
    report.trials_run = 1;

    let stack_len = rng.random_range(2..=6);
    let mut effective = Vec::with_capacity(stack_len);
    for i in 0..stack_len {
        let kind = match rng.random_range(0..4) {
            0 => ExpertKind::Geometric(
                GeoParams::new(rng.random_range(0.3..1.0), rng.random_range(0.1..0.5))
                    .expect("positive thresholds"),
            ),
            1 => ExpertKind::Semantic(TravCostTable::default()),
            2 => ExpertKind::noisy_oracle(rng.random_range(0.0..0.25), rng.random())
                .expect("valid noise"),
            _ => ExpertKind::constant(rng.random_range(0.0..=1.0)).expect("valid constant"),
        };
        let flops = [
            FLOP_GEOMETRY,
            FLOP_SEMANTICS,
            FLOP_FAST_FIELD,
            FLOP_DEEP_FIELD,
        ][rng.random_range(0..4)];
        let spec = ExpertSpec::new(
            ExpertId::new(1, i + 1, format!("probe_{i}")).expect("valid id"),
            kind,
            flops,
        )
        .expect("valid spec");
        let values: Vec<f64> = (0..dims.len())
            .map(|_| rng.random_range(0.01..1.0))
            .collect();
        effective.push((spec, WeightMap::new(dims, values)?));
    }
    let queue = build_queue(effective)?;

    let frame = world.frame();
    let horizon = world.domain.default_horizon();
    let planner_config = PlannerConfig {
        lambda: 1.0,
        horizon,
        theta: [0.0, 0.25, 0.5][(trial / 2) % 3],
        aux_step_cost: [0.0, 0.01, 0.1][(trial / 6) % 3],
    };
    let fan = FanSpec::symmetric(5, 1.0, frame.cell_size())?;
    let prims = generate_primitives(&world.start, horizon, &fan)?;
    let backend: Box<dyn PathCostPlanner + '_> = if trial % 2 == 0 {
        Box::new(PrimitivePathCost {
            prims: &prims,
            frame: &frame,
            robot: world.start.position(),
            goal: world.goal,
            config: &planner_config,
        })
    } else {
        Box::new(GraphPathCost {
            src: world.start_cell(),
            dst: world.goal_cell(),
            config: &planner_config,
        })
    };

    // Run the fusion loop to exhaustion, recomputing every claim directly.
    let gating = GatingConfig::default();
    let inputs = world.inputs();
    let weights = queue.weights_in_order();
    let mut state = FusionState::new(&weights)?;
    let mut steps: Vec<(f64, f64)> = Vec::with_capacity(queue.len());
    for entry in queue.entries() {
        let t_hat = entry.spec.evaluate(&inputs)?;
        state = state.fuse_step(&t_hat, &entry.weight)?;
        let check = check_termination(&state, backend.as_ref(), &gating)?;
        let cost = backend.path_cost(state.fused().expect("step done"))?;

        report.order_checks += 1;
        if !(le_with_tol(check.cost_lower_bound, cost, 1e-9)
            && le_with_tol(cost, check.cost_upper_bound, 1e-9))
        {
            report.order_violations += 1;
        }
        report.feasibility_checks += 1;
        if check.cost_upper_bound.is_finite()
            && !(cost.is_finite() && check.cost_lower_bound.is_finite())
        {
            report.feasibility_violations += 1;
        }
        steps.push((cost, check.delta));
    }
    let final_cost = steps.last().expect("non-empty queue").0;
    for &(cost, delta) in &steps {
        report.bound_checks += 1;
        let gap = cost_gap(cost, final_cost);
        if gap > delta + 1e-9 {
            report.bound_violations += 1;
        }
        if delta > 1e-12 && gap.is_finite() && delta.is_finite() {
            report.max_bound_ratio = report.max_bound_ratio.max(gap / delta);
        }
    }
    for pair in steps.windows(2) {
        report.monotonic_checks += 1;
        if !le_with_tol(pair[1].1, pair[0].1, 1e-9) {
            report.monotonic_violations += 1;
        }
    }
    Ok(report)
}
