//! Terrain experts: interchangeable estimators that each map world layers to
//! a traversability map.
//!
//! Four kinds are provided. `Geometric` derives traversability from elevation
//! slope and step height, `Semantic` looks labels up in a cost table,
//! `NoisyOracle` perturbs the ground truth with seeded Gaussian noise (a
//! stand-in for a learned model of known error level), and `Constant` is a
//! degenerate expert for tests. Every expert declares a relative compute cost
//! so the gating layer can account for what it skipped.

use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::grid::{ElevationGrid, GridDims, GridError, SemanticClass, SemanticGrid, TravMap};

/// Cost tier of a semantic class, from most to least traversable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostTier {
    Free,
    Mid1,
    Mid2,
    Mid3,
    Obstacle,
}

/// Which family of expert is the authority for a class: classes with crisp
/// geometric or rule-based signatures go to model-based experts, ambiguous
/// mid-cost terrain goes to learned ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpertFamily {
    ModelBased,
    Neural,
}

/// Tier assignment for every semantic class.
pub fn tier_of(class: SemanticClass) -> CostTier {
    use SemanticClass::*;
    match class {
        Sidewalk | Floor | Crosswalk | BikeLane => CostTier::Free,
        Gravel | Sand | Snow | LowGrass => CostTier::Mid1,
        Road | ParkingArea => CostTier::Mid2,
        TallGrass | Bush | Dirt => CostTier::Mid3,
        Person | Curb | Wall | Obstacle => CostTier::Obstacle,
    }
}

/// Expert family responsible for a class.
pub fn assigned_family(class: SemanticClass) -> ExpertFamily {
    match tier_of(class) {
        CostTier::Free | CostTier::Obstacle => ExpertFamily::ModelBased,
        CostTier::Mid1 | CostTier::Mid2 | CostTier::Mid3 => ExpertFamily::Neural,
    }
}

/// Traversability value per tier. All values must lie in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostTiers {
    pub free: f64,
    pub mid1: f64,
    pub mid2: f64,
    pub mid3: f64,
    pub obstacle: f64,
}

impl Default for CostTiers {
    fn default() -> Self {
        CostTiers {
            free: 1.0,
            mid1: 0.7,
            mid2: 0.6,
            mid3: 0.4,
            obstacle: 0.0,
        }
    }
}

impl CostTiers {
    pub fn value(&self, tier: CostTier) -> f64 {
        match tier {
            CostTier::Free => self.free,
            CostTier::Mid1 => self.mid1,
            CostTier::Mid2 => self.mid2,
            CostTier::Mid3 => self.mid3,
            CostTier::Obstacle => self.obstacle,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExpertError {
    MissingClassCost { class: SemanticClass },
    BadParam { param: &'static str, value: f64 },
    EmptyName,
    BadIndex { what: &'static str, value: usize },
    Grid(GridError),
}

impl fmt::Display for ExpertError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExpertError::MissingClassCost { class } => {
                write!(f, "cost table has no entry for class {class}")
            }
            ExpertError::BadParam { param, value } => {
                write!(f, "expert parameter {param} has invalid value {value}")
            }
            ExpertError::EmptyName => write!(f, "expert name must be non-empty"),
            ExpertError::BadIndex { what, value } => {
                write!(f, "expert {what} must be at least 1, got {value}")
            }
            ExpertError::Grid(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for ExpertError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            ExpertError::Grid(e) => Some(e),
            _ => None,
        }
    }
}

impl From<GridError> for ExpertError {
    fn from(e: GridError) -> Self {
        ExpertError::Grid(e)
    }
}

/// Class-to-traversability lookup. May cover only part of the vocabulary;
/// looking up a missing class is an error at evaluation time.
#[derive(Debug, Clone, PartialEq)]
pub struct TravCostTable {
    entries: BTreeMap<SemanticClass, f64>,
}

impl TravCostTable {
    /// Full-vocabulary table from per-tier values.
    pub fn from_tiers(tiers: &CostTiers) -> Result<TravCostTable, ExpertError> {
        let mut entries = BTreeMap::new();
        for class in SemanticClass::ALL {
            let v = tiers.value(tier_of(class));
            if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
                return Err(ExpertError::BadParam {
                    param: "tier value",
                    value: v,
                });
            }
            entries.insert(class, v);
        }
        Ok(TravCostTable { entries })
    }

    pub fn from_entries<I>(entries: I) -> Result<TravCostTable, ExpertError>
    where
        I: IntoIterator<Item = (SemanticClass, f64)>,
    {
        let mut map = BTreeMap::new();
        for (class, v) in entries {
            if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
                return Err(ExpertError::BadParam {
                    param: "class value",
                    value: v,
                });
            }
            map.insert(class, v);
        }
        Ok(TravCostTable { entries: map })
    }

    pub fn value(&self, class: SemanticClass) -> Option<f64> {
        self.entries.get(&class).copied()
    }
}

impl Default for TravCostTable {
    fn default() -> Self {
        TravCostTable::from_tiers(&CostTiers::default()).expect("default tiers are valid")
    }
}

/// Position of an expert in the hierarchy: `domain_index` selects the domain
/// group, `terrain_index` the expert within it. Both are 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpertId {
    domain_index: usize,
    terrain_index: usize,
    name: String,
}

impl ExpertId {
    pub fn new(
        domain_index: usize,
        terrain_index: usize,
        name: impl Into<String>,
    ) -> Result<ExpertId, ExpertError> {
        let name = name.into();
        if name.is_empty() {
            return Err(ExpertError::EmptyName);
        }
        if domain_index == 0 {
            return Err(ExpertError::BadIndex {
                what: "domain index",
                value: domain_index,
            });
        }
        if terrain_index == 0 {
            return Err(ExpertError::BadIndex {
                what: "terrain index",
                value: terrain_index,
            });
        }
        Ok(ExpertId {
            domain_index,
            terrain_index,
            name,
        })
    }

    pub fn domain_index(&self) -> usize {
        self.domain_index
    }

    pub fn terrain_index(&self) -> usize {
        self.terrain_index
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl fmt::Display for ExpertId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Slope and step thresholds for the geometric expert, in radians and meters.
/// Traversability degrades linearly past each threshold and reaches zero at
/// twice the threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoParams {
    max_slope: f64,
    max_step: f64,
}

impl GeoParams {
    pub fn new(max_slope: f64, max_step: f64) -> Result<GeoParams, ExpertError> {
        if !(max_slope.is_finite() && max_slope > 0.0) {
            return Err(ExpertError::BadParam {
                param: "max_slope",
                value: max_slope,
            });
        }
        if !(max_step.is_finite() && max_step > 0.0) {
            return Err(ExpertError::BadParam {
                param: "max_step",
                value: max_step,
            });
        }
        Ok(GeoParams {
            max_slope,
            max_step,
        })
    }

    pub fn max_slope(&self) -> f64 {
        self.max_slope
    }

    pub fn max_step(&self) -> f64 {
        self.max_step
    }
}

impl Default for GeoParams {
    fn default() -> Self {
        GeoParams {
            max_slope: 0.6,
            max_step: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExpertKind {
    Geometric(GeoParams),
    Semantic(TravCostTable),
    NoisyOracle { noise_std: f64, seed: u64 },
    Constant { value: f64 },
}

impl ExpertKind {
    pub fn noisy_oracle(noise_std: f64, seed: u64) -> Result<ExpertKind, ExpertError> {
        if !(noise_std.is_finite() && noise_std >= 0.0) {
            return Err(ExpertError::BadParam {
                param: "noise_std",
                value: noise_std,
            });
        }
        Ok(ExpertKind::NoisyOracle { noise_std, seed })
    }

    pub fn constant(value: f64) -> Result<ExpertKind, ExpertError> {
        if !(value.is_finite() && (0.0..=1.0).contains(&value)) {
            return Err(ExpertError::BadParam {
                param: "constant value",
                value,
            });
        }
        Ok(ExpertKind::Constant { value })
    }

    /// Family this kind belongs to for routing purposes.
    pub fn family(&self) -> ExpertFamily {
        match self {
            ExpertKind::Geometric(_) | ExpertKind::Constant { .. } => ExpertFamily::ModelBased,
            ExpertKind::Semantic(_) | ExpertKind::NoisyOracle { .. } => ExpertFamily::Neural,
        }
    }
}

/// A concrete expert: identity, estimator, and relative compute cost.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertSpec {
    id: ExpertId,
    kind: ExpertKind,
    flop_cost: f64,
}

impl ExpertSpec {
    pub fn new(id: ExpertId, kind: ExpertKind, flop_cost: f64) -> Result<ExpertSpec, ExpertError> {
        if !(flop_cost.is_finite() && flop_cost > 0.0) {
            return Err(ExpertError::BadParam {
                param: "flop_cost",
                value: flop_cost,
            });
        }
        Ok(ExpertSpec {
            id,
            kind,
            flop_cost,
        })
    }

    /// Unit compute cost.
    pub fn with_default_cost(id: ExpertId, kind: ExpertKind) -> ExpertSpec {
        ExpertSpec {
            id,
            kind,
            flop_cost: 1.0,
        }
    }

    pub fn id(&self) -> &ExpertId {
        &self.id
    }

    pub fn kind(&self) -> &ExpertKind {
        &self.kind
    }

    pub fn flop_cost(&self) -> f64 {
        self.flop_cost
    }

    pub fn evaluate(&self, inputs: &ExpertInputs) -> Result<TravMap, ExpertError> {
        match &self.kind {
            ExpertKind::Geometric(params) => Ok(geometric_estimate(inputs.elevation, params)),
            ExpertKind::Semantic(table) => semantic_estimate(inputs.semantics, table),
            ExpertKind::NoisyOracle { noise_std, seed } => {
                if !(noise_std.is_finite() && *noise_std >= 0.0) {
                    return Err(ExpertError::BadParam {
                        param: "noise_std",
                        value: *noise_std,
                    });
                }
                Ok(noisy_oracle_estimate(inputs.gt_trav, *noise_std, *seed))
            }
            ExpertKind::Constant { value } => {
                TravMap::constant(inputs.gt_trav.dims(), *value).map_err(ExpertError::Grid)
            }
        }
    }
}

/// Shared world layers handed to every expert. All layers have one shape.
#[derive(Debug, Clone, Copy)]
pub struct ExpertInputs<'a> {
    pub elevation: &'a ElevationGrid,
    pub semantics: &'a SemanticGrid,
    pub gt_trav: &'a TravMap,
}

impl<'a> ExpertInputs<'a> {
    pub fn new(
        elevation: &'a ElevationGrid,
        semantics: &'a SemanticGrid,
        gt_trav: &'a TravMap,
    ) -> Result<ExpertInputs<'a>, GridError> {
        crate::grid::check_same_shape(elevation.dims(), semantics.dims())?;
        crate::grid::check_same_shape(elevation.dims(), gt_trav.dims())?;
        Ok(ExpertInputs {
            elevation,
            semantics,
            gt_trav,
        })
    }

    pub fn dims(&self) -> GridDims {
        self.elevation.dims()
    }
}

/// Linear falloff past a threshold: 1 at or below `threshold`, 0 at or above
/// `2 * threshold`.
fn ramp_penalty(x: f64, threshold: f64) -> f64 {
    if x <= threshold {
        1.0
    } else if x >= 2.0 * threshold {
        0.0
    } else {
        (2.0 * threshold - x) / threshold
    }
}

/// Traversability from terrain shape alone.
///
/// Per cell, the slope angle comes from central elevation differences
/// (one-sided at borders) and the step height is the largest absolute height
/// difference to a 4-neighbor. Each is pushed through [`ramp_penalty`] against
/// its threshold and the cell takes the worse of the two.
pub fn geometric_estimate(elevation: &ElevationGrid, params: &GeoParams) -> TravMap {
    let d = elevation.dims();
    let cs = elevation.cell_size();
    let (h, w) = (d.height(), d.width());
    let mut values = Vec::with_capacity(d.len());
    for r in 0..h {
        for c in 0..w {
            let dzdx = if w == 1 {
                0.0
            } else {
                let (c0, c1) = (c.saturating_sub(1), (c + 1).min(w - 1));
                (elevation.get(r, c1) - elevation.get(r, c0)) / ((c1 - c0) as f64 * cs)
            };
            let dzdy = if h == 1 {
                0.0
            } else {
                let (r0, r1) = (r.saturating_sub(1), (r + 1).min(h - 1));
                (elevation.get(r1, c) - elevation.get(r0, c)) / ((r1 - r0) as f64 * cs)
            };
            let slope = dzdx.hypot(dzdy).atan();

            let here = elevation.get(r, c);
            let mut step = 0.0f64;
            if r > 0 {
                step = step.max((elevation.get(r - 1, c) - here).abs());
            }
            if r + 1 < h {
                step = step.max((elevation.get(r + 1, c) - here).abs());
            }
            if c > 0 {
                step = step.max((elevation.get(r, c - 1) - here).abs());
            }
            if c + 1 < w {
                step = step.max((elevation.get(r, c + 1) - here).abs());
            }

            let t = ramp_penalty(slope, params.max_slope).min(ramp_penalty(step, params.max_step));
            values.push(t);
        }
    }
    TravMap::from_raw_clamped(d, values)
}

/// Traversability from semantic labels via a cost table.
pub fn semantic_estimate(
    semantics: &SemanticGrid,
    table: &TravCostTable,
) -> Result<TravMap, ExpertError> {
    let d = semantics.dims();
    let mut values = Vec::with_capacity(d.len());
    for &class in semantics.labels() {
        match table.value(class) {
            Some(v) => values.push(v),
            None => return Err(ExpertError::MissingClassCost { class }),
        }
    }
    TravMap::new(d, values).map_err(ExpertError::Grid)
}

/// Ground truth plus seeded Gaussian noise, clamped back to `[0, 1]`.
/// The same seed always yields the same map.
pub fn noisy_oracle_estimate(gt: &TravMap, noise_std: f64, seed: u64) -> TravMap {
    if noise_std == 0.0 {
        return gt.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise_std).expect("validated noise_std");
    let values: Vec<f64> = gt
        .values()
        .iter()
        .map(|&v| (v + normal.sample(&mut rng)).clamp(0.0, 1.0))
        .collect();
    TravMap::new(gt.dims(), values).expect("clamped values are in range")
}
