//! Synthetic worlds: layered test environments with a known ground truth.
//!
//! A world bundles elevation, semantics, the derived ground-truth
//! traversability, and a start/goal pair that is actually reachable. Three
//! generation profiles cover the domains the stack is meant to span:
//!
//! * `indoor`: flat floor cut by walls with door gaps,
//! * `structured_outdoor`: sidewalk/curb/road bands with a crosswalk,
//! * `unstructured_outdoor`: rolling elevation with vegetation patches.
//!
//! Generation is fully determined by `(seed, profile, dims)`. Worlds
//! round-trip through a line-oriented text format; ground truth is not
//! stored but re-derived from the layers on load.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::experts::{
    geometric_estimate, semantic_estimate, ExpertError, ExpertInputs, GeoParams, TravCostTable,
};
use crate::grid::{
    ElevationGrid, GridDims, GridError, SemanticClass, SemanticGrid, TravMap,
};
use crate::planner::{graph_plan, GridFrame, PlanError, PlannerConfig, Point3, Pose3};

/// Environment family a world belongs to. Drives generation and the default
/// planning horizon and resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainTag {
    Indoor,
    StructuredOutdoor,
    UnstructuredOutdoor,
}

impl DomainTag {
    pub const ALL: [DomainTag; 3] = [
        DomainTag::Indoor,
        DomainTag::StructuredOutdoor,
        DomainTag::UnstructuredOutdoor,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DomainTag::Indoor => "indoor",
            DomainTag::StructuredOutdoor => "structured_outdoor",
            DomainTag::UnstructuredOutdoor => "unstructured_outdoor",
        }
    }

    pub fn from_name(name: &str) -> Option<DomainTag> {
        DomainTag::ALL.iter().copied().find(|d| d.name() == name)
    }

    /// Position in [`DomainTag::ALL`]; used to index domain weight vectors.
    pub fn index(&self) -> usize {
        match self {
            DomainTag::Indoor => 0,
            DomainTag::StructuredOutdoor => 1,
            DomainTag::UnstructuredOutdoor => 2,
        }
    }

    /// Grid resolution in meters. Indoor spaces are mapped finer.
    pub fn default_cell_size(&self) -> f64 {
        match self {
            DomainTag::Indoor => 0.25,
            DomainTag::StructuredOutdoor | DomainTag::UnstructuredOutdoor => 0.5,
        }
    }

    /// Arc rollout length in meters. Short indoors, long in the open.
    pub fn default_horizon(&self) -> f64 {
        match self {
            DomainTag::Indoor => 2.0,
            DomainTag::StructuredOutdoor | DomainTag::UnstructuredOutdoor => 8.0,
        }
    }
}

impl fmt::Display for DomainTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WorldError {
    TooSmall { height: usize, width: usize, min: usize },
    Placement { domain: DomainTag, seed: u64 },
    Io { path: String, message: String },
    Parse { line: usize, message: String },
    Grid(GridError),
    Expert(ExpertError),
    Plan(PlanError),
}

impl fmt::Display for WorldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WorldError::TooSmall { height, width, min } => {
                write!(f, "world needs at least {min}x{min} cells, got {height}x{width}")
            }
            WorldError::Placement { domain, seed } => write!(
                f,
                "could not place a reachable start/goal pair in {domain} world (seed {seed})"
            ),
            WorldError::Io { path, message } => write!(f, "{path}: {message}"),
            WorldError::Parse { line, message } => {
                write!(f, "world file line {line}: {message}")
            }
            WorldError::Grid(e) => write!(f, "{e}"),
            WorldError::Expert(e) => write!(f, "{e}"),
            WorldError::Plan(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for WorldError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            WorldError::Grid(e) => Some(e),
            WorldError::Expert(e) => Some(e),
            WorldError::Plan(e) => Some(e),
            _ => None,
        }
    }
}

impl From<GridError> for WorldError {
    fn from(e: GridError) -> Self {
        WorldError::Grid(e)
    }
}

impl From<ExpertError> for WorldError {
    fn from(e: ExpertError) -> Self {
        WorldError::Expert(e)
    }
}

impl From<PlanError> for WorldError {
    fn from(e: PlanError) -> Self {
        WorldError::Plan(e)
    }
}

/// A complete synthetic environment. The frame origin is at world (0, 0)
/// and the start/goal pair is graph-reachable on the ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub seed: u64,
    pub domain: DomainTag,
    pub elevation: ElevationGrid,
    pub semantics: SemanticGrid,
    pub gt_trav: TravMap,
    pub start: Pose3,
    pub goal: Point3,
}

impl World {
    pub fn dims(&self) -> GridDims {
        self.elevation.dims()
    }

    pub fn cell_size(&self) -> f64 {
        self.elevation.cell_size()
    }

    pub fn frame(&self) -> GridFrame {
        GridFrame::new(0.0, 0.0, self.cell_size(), self.dims())
            .expect("world cell size is validated")
    }

    pub fn start_cell(&self) -> (usize, usize) {
        self.frame()
            .cell_of(self.start.x, self.start.y)
            .expect("start lies inside the world")
    }

    pub fn goal_cell(&self) -> (usize, usize) {
        self.frame()
            .cell_of(self.goal[0], self.goal[1])
            .expect("goal lies inside the world")
    }

    /// Expert input view over this world's layers.
    pub fn inputs(&self) -> ExpertInputs<'_> {
        ExpertInputs::new(&self.elevation, &self.semantics, &self.gt_trav)
            .expect("world layers share one shape")
    }

    /// Serialize to the world text format.
    pub fn to_text(&self) -> String {
        let d = self.dims();
        let mut out = String::new();
        out.push_str("travgate-world v1\n");
        out.push_str(&format!("seed {}\n", self.seed));
        out.push_str(&format!("domain {}\n", self.domain));
        out.push_str(&format!("dims {} {}\n", d.height(), d.width()));
        out.push_str(&format!("cell_size {}\n", self.cell_size()));
        out.push_str(&format!(
            "start {} {} {} {}\n",
            self.start.x, self.start.y, self.start.z, self.start.yaw
        ));
        out.push_str(&format!(
            "goal {} {} {}\n",
            self.goal[0], self.goal[1], self.goal[2]
        ));
        out.push_str("elevation\n");
        for r in 0..d.height() {
            let row: Vec<String> = (0..d.width())
                .map(|c| format!("{}", self.elevation.get(r, c)))
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out.push_str("semantics\n");
        for r in 0..d.height() {
            let row: Vec<String> = (0..d.width())
                .map(|c| self.semantics.get(r, c).name().to_string())
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out.push_str("end\n");
        out
    }

    /// Parse the world text format. Ground truth is re-derived from the
    /// layers with the default cost table and geometric thresholds.
    pub fn from_text(text: &str) -> Result<World, WorldError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let parse_err = |line: usize, message: &str| WorldError::Parse {
            line,
            message: message.to_string(),
        };

        let (line, header) = lines
            .next()
            .ok_or_else(|| parse_err(0, "empty world file"))?;
        if header != "travgate-world v1" {
            return Err(parse_err(line, "expected header 'travgate-world v1'"));
        }

        let mut seed: Option<u64> = None;
        let mut domain: Option<DomainTag> = None;
        let mut dims: Option<GridDims> = None;
        let mut cell_size: Option<f64> = None;
        let mut start: Option<Pose3> = None;
        let mut goal: Option<Point3> = None;

        let elevation_line = loop {
            let (line, l) = lines
                .next()
                .ok_or_else(|| parse_err(0, "missing 'elevation' section"))?;
            let mut parts = l.split_whitespace();
            let key = parts.next().unwrap_or("");
            let rest: Vec<&str> = parts.collect();
            match key {
                "seed" => {
                    seed = Some(parse_field(line, "seed", rest.first())?);
                }
                "domain" => {
                    let name = rest
                        .first()
                        .ok_or_else(|| parse_err(line, "domain needs a value"))?;
                    domain = Some(
                        DomainTag::from_name(name)
                            .ok_or_else(|| parse_err(line, "unknown domain tag"))?,
                    );
                }
                "dims" => {
                    if rest.len() != 2 {
                        return Err(parse_err(line, "dims needs height and width"));
                    }
                    let h: usize = parse_field(line, "dims height", Some(&rest[0]))?;
                    let w: usize = parse_field(line, "dims width", Some(&rest[1]))?;
                    dims = Some(GridDims::new(h, w)?);
                }
                "cell_size" => {
                    cell_size = Some(parse_field(line, "cell_size", rest.first())?);
                }
                "start" => {
                    if rest.len() != 4 {
                        return Err(parse_err(line, "start needs x y z yaw"));
                    }
                    start = Some(Pose3 {
                        x: parse_field(line, "start x", Some(&rest[0]))?,
                        y: parse_field(line, "start y", Some(&rest[1]))?,
                        z: parse_field(line, "start z", Some(&rest[2]))?,
                        yaw: parse_field(line, "start yaw", Some(&rest[3]))?,
                    });
                }
                "goal" => {
                    if rest.len() != 3 {
                        return Err(parse_err(line, "goal needs x y z"));
                    }
                    goal = Some([
                        parse_field(line, "goal x", Some(&rest[0]))?,
                        parse_field(line, "goal y", Some(&rest[1]))?,
                        parse_field(line, "goal z", Some(&rest[2]))?,
                    ]);
                }
                "elevation" => break line,
                other => {
                    return Err(parse_err(line, &format!("unexpected field '{other}'")));
                }
            }
        };

        let dims = dims.ok_or_else(|| parse_err(elevation_line, "missing dims"))?;
        let cell_size =
            cell_size.ok_or_else(|| parse_err(elevation_line, "missing cell_size"))?;
        let seed = seed.ok_or_else(|| parse_err(elevation_line, "missing seed"))?;
        let domain = domain.ok_or_else(|| parse_err(elevation_line, "missing domain"))?;
        let start = start.ok_or_else(|| parse_err(elevation_line, "missing start"))?;
        let goal = goal.ok_or_else(|| parse_err(elevation_line, "missing goal"))?;

        let mut heights = Vec::with_capacity(dims.len());
        for _ in 0..dims.height() {
            let (line, l) = lines
                .next()
                .ok_or_else(|| parse_err(0, "elevation rows truncated"))?;
            let row: Result<Vec<f64>, _> = l.split_whitespace().map(str::parse::<f64>).collect();
            let row = row.map_err(|_| parse_err(line, "bad elevation value"))?;
            if row.len() != dims.width() {
                return Err(parse_err(line, "wrong elevation row length"));
            }
            heights.extend(row);
        }
        let elevation = ElevationGrid::new(dims, heights, cell_size)?;

        let (line, l) = lines
            .next()
            .ok_or_else(|| parse_err(0, "missing 'semantics' section"))?;
        if l != "semantics" {
            return Err(parse_err(line, "expected 'semantics' section"));
        }
        let mut labels = Vec::with_capacity(dims.len());
        for _ in 0..dims.height() {
            let (line, l) = lines
                .next()
                .ok_or_else(|| parse_err(0, "semantic rows truncated"))?;
            let row: Vec<&str> = l.split_whitespace().collect();
            if row.len() != dims.width() {
                return Err(parse_err(line, "wrong semantic row length"));
            }
            for name in row {
                labels.push(
                    SemanticClass::from_name(name)
                        .ok_or_else(|| parse_err(line, &format!("unknown class '{name}'")))?,
                );
            }
        }
        let semantics = SemanticGrid::new(dims, labels)?;

        let (line, l) = lines
            .next()
            .ok_or_else(|| parse_err(0, "missing 'end'"))?;
        if l != "end" {
            return Err(parse_err(line, "expected 'end'"));
        }

        let gt_trav = ground_truth_traversability(
            &semantics,
            &elevation,
            &TravCostTable::default(),
            &GeoParams::default(),
        )?;
        let world = World {
            seed,
            domain,
            elevation,
            semantics,
            gt_trav,
            start,
            goal,
        };
        let frame = world.frame();
        if frame.cell_of(world.start.x, world.start.y).is_none() {
            return Err(parse_err(line, "start lies outside the grid"));
        }
        if frame.cell_of(world.goal[0], world.goal[1]).is_none() {
            return Err(parse_err(line, "goal lies outside the grid"));
        }
        Ok(world)
    }

    pub fn save(&self, path: &Path) -> Result<(), WorldError> {
        std::fs::write(path, self.to_text()).map_err(|e| WorldError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<World, WorldError> {
        let text = std::fs::read_to_string(path).map_err(|e| WorldError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        World::from_text(&text)
    }
}

fn parse_field<T: std::str::FromStr>(
    line: usize,
    what: &str,
    value: Option<&&str>,
) -> Result<T, WorldError> {
    value
        .ok_or_else(|| WorldError::Parse {
            line,
            message: format!("{what} needs a value"),
        })?
        .parse()
        .map_err(|_| WorldError::Parse {
            line,
            message: format!("bad {what} value"),
        })
}

/// Ground truth: the pointwise minimum of the semantic table estimate and
/// the geometric estimate. Either signal alone can rule a cell out; a
/// sidewalk atop a tall step is still untraversable.
pub fn ground_truth_traversability(
    semantics: &SemanticGrid,
    elevation: &ElevationGrid,
    table: &TravCostTable,
    geo: &GeoParams,
) -> Result<TravMap, WorldError> {
    let sem = semantic_estimate(semantics, table)?;
    let geo = geometric_estimate(elevation, geo);
    Ok(sem.min_with(&geo)?)
}

const MIN_EXTENT: usize = 8;
const PLACEMENT_ATTEMPTS: usize = 64;

/// Deterministically generate a world. Same `(seed, domain, dims)` always
/// yields the same world; fails if no reachable start/goal pair is found.
pub fn generate_world(seed: u64, domain: DomainTag, dims: GridDims) -> Result<World, WorldError> {
    if dims.height() < MIN_EXTENT || dims.width() < MIN_EXTENT {
        return Err(WorldError::TooSmall {
            height: dims.height(),
            width: dims.width(),
            min: MIN_EXTENT,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cell_size = domain.default_cell_size();
    let (heights, semantics) = match domain {
        DomainTag::Indoor => layout_indoor(&mut rng, dims),
        DomainTag::StructuredOutdoor => layout_structured(&mut rng, dims),
        DomainTag::UnstructuredOutdoor => layout_unstructured(&mut rng, dims),
    };
    let elevation = ElevationGrid::new(dims, heights, cell_size)?;
    let gt_trav = ground_truth_traversability(
        &semantics,
        &elevation,
        &TravCostTable::default(),
        &GeoParams::default(),
    )?;

    let frame = GridFrame::new(0.0, 0.0, cell_size, dims)?;
    let (start_cell, goal_cell) =
        place_endpoints(&mut rng, &gt_trav, &frame, domain, seed)?;
    let (sx, sy) = frame.center_of(start_cell.0, start_cell.1);
    let (gx, gy) = frame.center_of(goal_cell.0, goal_cell.1);
    let start = Pose3 {
        x: sx,
        y: sy,
        z: 0.0,
        yaw: (gy - sy).atan2(gx - sx),
    };
    Ok(World {
        seed,
        domain,
        elevation,
        semantics,
        gt_trav,
        start,
        goal: [gx, gy, 0.0],
    })
}

/// Pick a start/goal pair on traversable ground, 40% of the smaller world
/// extent apart and connected on the ground truth at the default threshold.
fn place_endpoints(
    rng: &mut ChaCha8Rng,
    gt: &TravMap,
    frame: &GridFrame,
    domain: DomainTag,
    seed: u64,
) -> Result<((usize, usize), (usize, usize)), WorldError> {
    let dims = gt.dims();
    let eligible: Vec<(usize, usize)> = dims
        .cells()
        .filter(|&(r, c)| gt.get(r, c) >= 0.35)
        .collect();
    if eligible.len() < 2 {
        return Err(WorldError::Placement { domain, seed });
    }
    let min_extent = dims.height().min(dims.width()) as f64 * frame.cell_size();
    let min_sep = 0.4 * min_extent;
    let config = PlannerConfig::default();
    for _ in 0..PLACEMENT_ATTEMPTS {
        let a = eligible[rng.random_range(0..eligible.len())];
        let b = eligible[rng.random_range(0..eligible.len())];
        let (ax, ay) = frame.center_of(a.0, a.1);
        let (bx, by) = frame.center_of(b.0, b.1);
        if (ax - bx).hypot(ay - by) < min_sep {
            continue;
        }
        if graph_plan(gt, a, b, &config)?.is_feasible() {
            return Ok((a, b));
        }
    }
    Err(WorldError::Placement { domain, seed })
}

/// Flat floor, 1.2 m walls with door gaps, occasional people.
fn layout_indoor(rng: &mut ChaCha8Rng, dims: GridDims) -> (Vec<f64>, SemanticGrid) {
    let (h, w) = (dims.height(), dims.width());
    let mut heights = vec![0.0; dims.len()];
    let mut semantics = SemanticGrid::uniform(dims, SemanticClass::Floor);

    let walls = rng.random_range(1..=3);
    for _ in 0..walls {
        let vertical = rng.random_bool(0.5);
        let extent = if vertical { h } else { w };
        let span = if vertical { w } else { h };
        let pos = rng.random_range(2..span - 2);
        let gaps = rng.random_range(1..=2);
        let mut open = vec![false; extent];
        for _ in 0..gaps {
            let g = rng.random_range(1..extent - 2);
            open[g] = true;
            open[g + 1] = true;
        }
        for i in 0..extent {
            if open[i] {
                continue;
            }
            let (r, c) = if vertical { (i, pos) } else { (pos, i) };
            heights[dims.index(r, c)] = 1.2;
            semantics.set(r, c, SemanticClass::Wall);
        }
    }

    for _ in 0..rng.random_range(0..=2) {
        let r = rng.random_range(0..h);
        let c = rng.random_range(0..w);
        if semantics.get(r, c) == SemanticClass::Floor {
            semantics.set(r, c, SemanticClass::Person);
        }
    }
    (heights, semantics)
}

/// Sidewalk bands along the top and bottom, curb lines, a road in between,
/// a crosswalk cut through, and street furniture.
fn layout_structured(rng: &mut ChaCha8Rng, dims: GridDims) -> (Vec<f64>, SemanticGrid) {
    let (h, w) = (dims.height(), dims.width());
    let mut heights = vec![0.15; dims.len()];
    let mut semantics = SemanticGrid::uniform(dims, SemanticClass::Sidewalk);

    let curb_top = rng.random_range(1..=h / 4);
    let road_rows = rng.random_range(2..=(h / 2).max(2));
    let curb_bottom = (curb_top + 1 + road_rows).min(h - 2);

    for r in curb_top..=curb_bottom {
        for c in 0..w {
            let class = if r == curb_top || r == curb_bottom {
                SemanticClass::Curb
            } else {
                SemanticClass::Road
            };
            semantics.set(r, c, class);
            heights[dims.index(r, c)] = if class == SemanticClass::Curb { 0.15 } else { 0.0 };
        }
    }

    // Crosswalk: a two-cell wide band across the road, curbs included.
    let cw = rng.random_range(1..w - 2);
    for r in curb_top..=curb_bottom {
        for c in [cw, cw + 1] {
            semantics.set(r, c, SemanticClass::Crosswalk);
            heights[dims.index(r, c)] = 0.0;
        }
    }

    // Sometimes a parking strip against the bottom curb.
    if rng.random_bool(0.5) && curb_bottom > curb_top + 2 {
        let from = rng.random_range(0..w / 2);
        let to = rng.random_range(from + 1..w);
        for c in from..=to {
            if semantics.get(curb_bottom - 1, c) == SemanticClass::Road {
                semantics.set(curb_bottom - 1, c, SemanticClass::ParkingArea);
            }
        }
    }

    // Sometimes a bike lane along the top curb.
    if rng.random_bool(0.4) {
        for c in 0..w {
            if semantics.get(curb_top + 1, c) == SemanticClass::Road {
                semantics.set(curb_top + 1, c, SemanticClass::BikeLane);
                heights[dims.index(curb_top + 1, c)] = 0.0;
            }
        }
    }

    for _ in 0..rng.random_range(0..=3) {
        let r = rng.random_range(0..h);
        let c = rng.random_range(0..w);
        if matches!(
            semantics.get(r, c),
            SemanticClass::Sidewalk | SemanticClass::Road
        ) {
            semantics.set(r, c, SemanticClass::Person);
        }
    }
    (heights, semantics)
}

/// Rolling terrain from Gaussian bumps, vegetation patches, scattered rocks.
fn layout_unstructured(rng: &mut ChaCha8Rng, dims: GridDims) -> (Vec<f64>, SemanticGrid) {
    let (h, w) = (dims.height(), dims.width());
    let mut heights = vec![0.0; dims.len()];
    let bumps = rng.random_range(3..=6);
    for _ in 0..bumps {
        let cr = rng.random_range(0..h) as f64;
        let cc = rng.random_range(0..w) as f64;
        let amp = rng.random_range(-1.0..1.0);
        let sigma = rng.random_range(1.5..4.0);
        for r in 0..h {
            for c in 0..w {
                let d2 = (r as f64 - cr).powi(2) + (c as f64 - cc).powi(2);
                heights[dims.index(r, c)] += amp * (-d2 / (2.0 * sigma * sigma)).exp();
            }
        }
    }

    let mut semantics = SemanticGrid::uniform(dims, SemanticClass::LowGrass);
    let patch_classes = [
        SemanticClass::TallGrass,
        SemanticClass::Bush,
        SemanticClass::Dirt,
        SemanticClass::Gravel,
        SemanticClass::Sand,
    ];
    for _ in 0..rng.random_range(4..=8) {
        let class = patch_classes[rng.random_range(0..patch_classes.len())];
        let mut r = rng.random_range(0..h);
        let mut c = rng.random_range(0..w);
        for _ in 0..rng.random_range(5..=15) {
            semantics.set(r, c, class);
            match rng.random_range(0..4) {
                0 => r = r.saturating_sub(1),
                1 => r = (r + 1).min(h - 1),
                2 => c = c.saturating_sub(1),
                _ => c = (c + 1).min(w - 1),
            }
        }
    }
    for _ in 0..rng.random_range(2..=5) {
        let r = rng.random_range(0..h);
        let c = rng.random_range(0..w);
        semantics.set(r, c, SemanticClass::Obstacle);
    }
    (heights, semantics)
}
