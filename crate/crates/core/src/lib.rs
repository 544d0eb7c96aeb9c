//! Traversability estimation for local navigation, built around a lazily
//! gated mixture of terrain experts.
//!
//! The pipeline: a router assigns per-expert confidence weights, experts are
//! evaluated one at a time in order of expected contribution, estimates are
//! fused incrementally, and after each step lower and upper expectation maps
//! bracket the plan cost of the final fusion. Evaluation stops as soon as the
//! bracket width drops below a tolerance, so expensive experts whose opinion
//! cannot change the plan are never run.
//!
//! Module layout:
//!
//! * [`grid`]: dense map layers and elementwise operations,
//! * [`experts`]: terrain expert models and their evaluation,
//! * [`fusion`]: incremental weighted fusion and expectation envelopes,
//! * [`planner`]: arc-primitive scoring and grid graph search,
//! * [`gating`]: routing, expert ordering, and lazy termination,
//! * [`world`]: synthetic world generation and the world file format,
//! * [`metrics`]: estimation and plan quality metrics,
//! * [`harness`]: scenario execution, sweeps, and CSV reports.

pub mod experts;
pub mod fusion;
pub mod gating;
pub mod grid;
pub mod harness;
pub mod metrics;
pub mod planner;
pub mod world;

pub use experts::{ExpertId, ExpertInputs, ExpertKind, ExpertSpec};
pub use fusion::{fuse_batch, FusionState};
pub use gating::{lazy_gating, GatingConfig, GatingTrace};
pub use grid::{ElevationGrid, GridDims, SemanticClass, SemanticGrid, TravMap, WeightMap};
pub use harness::{
    default_roster, load_scenarios, parse_scenarios, run_scenario_file, run_scenarios,
    verify_propositions, PlannerMode, RouterSource, RunFailure, RunReport, ScenarioSpec,
    VerifyConfig, VerifyReport, WorldSource,
};
pub use metrics::{flop_savings, metric_e_m, metric_e_p, metric_q_p};
pub use planner::{graph_plan, plan, FanSpec, GridFrame, PlannerConfig, Pose3};
pub use world::{generate_world, DomainTag, World};
