//! Dense row-major grid layers shared by the whole stack.
//!
//! Every layer (traversability, fusion weights, elevation, semantics) is a
//! flat `Vec` indexed as `row * width + col`. Constructors validate value
//! ranges once so downstream code can index without re-checking:
//!
//! * [`TravMap`] values are finite and in `[0, 1]`,
//! * [`WeightMap`] values are finite, non-negative, and not all zero,
//! * [`ElevationGrid`] heights are finite and carry a positive cell size,
//! * [`SemanticGrid`] labels come from the closed [`SemanticClass`] vocabulary.

use std::fmt;

/// Grid shape. Both extents are at least 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridDims {
    height: usize,
    width: usize,
}

impl GridDims {
    pub fn new(height: usize, width: usize) -> Result<Self, GridError> {
        if height == 0 || width == 0 {
            return Err(GridError::ZeroDim { height, width });
        }
        Ok(GridDims { height, width })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row < self.height && col < self.width
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(self.contains(row, col));
        row * self.width + col
    }

    /// Iterate all cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        (0..self.len()).map(move |i| (i / w, i % w))
    }
}

impl fmt::Display for GridDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridError {
    ZeroDim { height: usize, width: usize },
    LengthMismatch { expected: usize, got: usize },
    ShapeMismatch { left: GridDims, right: GridDims },
    ValueOutOfRange { row: usize, col: usize, value: f64 },
    NegativeWeight { row: usize, col: usize, value: f64 },
    NonFinite { row: usize, col: usize },
    AllZeroWeights,
    BadCellSize { cell_size: f64 },
}

impl fmt::Display for GridError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridError::ZeroDim { height, width } => {
                write!(f, "grid dimensions must be positive, got {height}x{width}")
            }
            GridError::LengthMismatch { expected, got } => {
                write!(f, "expected {expected} cell values, got {got}")
            }
            GridError::ShapeMismatch { left, right } => {
                write!(f, "grid shapes differ: {left} vs {right}")
            }
            GridError::ValueOutOfRange { row, col, value } => {
                write!(f, "value {value} at ({row}, {col}) is outside [0, 1]")
            }
            GridError::NegativeWeight { row, col, value } => {
                write!(f, "weight {value} at ({row}, {col}) is negative")
            }
            GridError::NonFinite { row, col } => {
                write!(f, "non-finite value at ({row}, {col})")
            }
            GridError::AllZeroWeights => write!(f, "weight map is zero everywhere"),
            GridError::BadCellSize { cell_size } => {
                write!(f, "cell size must be positive and finite, got {cell_size}")
            }
        }
    }
}

impl std::error::Error for GridError {}

/// Per-cell traversability in `[0, 1]`; 1 is free, 0 is untraversable.
#[derive(Debug, Clone, PartialEq)]
pub struct TravMap {
    dims: GridDims,
    values: Vec<f64>,
}

impl TravMap {
    pub fn new(dims: GridDims, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != dims.len() {
            return Err(GridError::LengthMismatch {
                expected: dims.len(),
                got: values.len(),
            });
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(GridError::NonFinite {
                    row: i / dims.width,
                    col: i % dims.width,
                });
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(GridError::ValueOutOfRange {
                    row: i / dims.width,
                    col: i % dims.width,
                    value: v,
                });
            }
        }
        Ok(TravMap { dims, values })
    }

    pub fn constant(dims: GridDims, value: f64) -> Result<Self, GridError> {
        TravMap::new(dims, vec![value; dims.len()])
    }

    /// Internal constructor for arithmetic whose result is in `[0, 1]` up to
    /// rounding noise. Clamps instead of erroring; anything further out than
    /// noise is a bug in the caller.
    pub(crate) fn from_raw_clamped(dims: GridDims, mut values: Vec<f64>) -> TravMap {
        debug_assert_eq!(values.len(), dims.len());
        for v in &mut values {
            debug_assert!(v.is_finite() && *v > -1e-9 && *v < 1.0 + 1e-9);
            *v = v.clamp(0.0, 1.0);
        }
        TravMap { dims, values }
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[self.dims.index(row, col)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Elementwise minimum of two equally shaped maps.
    pub fn min_with(&self, other: &TravMap) -> Result<TravMap, GridError> {
        check_same_shape(self.dims, other.dims)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a.min(b))
            .collect();
        Ok(TravMap {
            dims: self.dims,
            values,
        })
    }
}

/// Per-cell fusion weight. Non-negative, finite, and positive somewhere.
///
/// The all-zero map is rejected by [`WeightMap::new`] because a zero total
/// weight makes every weighted combination degenerate. The explicit
/// [`WeightMap::zero`] constructor exists for accumulators that are about to
/// have real weight added.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    dims: GridDims,
    values: Vec<f64>,
}

impl WeightMap {
    pub fn new(dims: GridDims, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != dims.len() {
            return Err(GridError::LengthMismatch {
                expected: dims.len(),
                got: values.len(),
            });
        }
        let mut any_positive = false;
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(GridError::NonFinite {
                    row: i / dims.width,
                    col: i % dims.width,
                });
            }
            if v < 0.0 {
                return Err(GridError::NegativeWeight {
                    row: i / dims.width,
                    col: i % dims.width,
                    value: v,
                });
            }
            any_positive |= v > 0.0;
        }
        if !any_positive {
            return Err(GridError::AllZeroWeights);
        }
        Ok(WeightMap { dims, values })
    }

    pub fn constant(dims: GridDims, value: f64) -> Result<Self, GridError> {
        WeightMap::new(dims, vec![value; dims.len()])
    }

    /// All-zero accumulator start state.
    pub fn zero(dims: GridDims) -> WeightMap {
        WeightMap {
            dims,
            values: vec![0.0; dims.len()],
        }
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[self.dims.index(row, col)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// L1 mass, the sum of all cell weights.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Heights in meters on a square-cell grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ElevationGrid {
    dims: GridDims,
    heights: Vec<f64>,
    cell_size: f64,
}

impl ElevationGrid {
    pub fn new(dims: GridDims, heights: Vec<f64>, cell_size: f64) -> Result<Self, GridError> {
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(GridError::BadCellSize { cell_size });
        }
        if heights.len() != dims.len() {
            return Err(GridError::LengthMismatch {
                expected: dims.len(),
                got: heights.len(),
            });
        }
        for (i, &h) in heights.iter().enumerate() {
            if !h.is_finite() {
                return Err(GridError::NonFinite {
                    row: i / dims.width,
                    col: i % dims.width,
                });
            }
        }
        Ok(ElevationGrid {
            dims,
            heights,
            cell_size,
        })
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.heights[self.dims.index(row, col)]
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }
}

/// Closed semantic vocabulary. Parsing rejects anything else, which keeps
/// label-to-cost lookups total once a grid is constructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SemanticClass {
    Sidewalk,
    Floor,
    Crosswalk,
    BikeLane,
    Gravel,
    Sand,
    Snow,
    LowGrass,
    Road,
    ParkingArea,
    TallGrass,
    Bush,
    Dirt,
    Person,
    Curb,
    Wall,
    Obstacle,
}

impl SemanticClass {
    pub const ALL: [SemanticClass; 17] = [
        SemanticClass::Sidewalk,
        SemanticClass::Floor,
        SemanticClass::Crosswalk,
        SemanticClass::BikeLane,
        SemanticClass::Gravel,
        SemanticClass::Sand,
        SemanticClass::Snow,
        SemanticClass::LowGrass,
        SemanticClass::Road,
        SemanticClass::ParkingArea,
        SemanticClass::TallGrass,
        SemanticClass::Bush,
        SemanticClass::Dirt,
        SemanticClass::Person,
        SemanticClass::Curb,
        SemanticClass::Wall,
        SemanticClass::Obstacle,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SemanticClass::Sidewalk => "sidewalk",
            SemanticClass::Floor => "floor",
            SemanticClass::Crosswalk => "crosswalk",
            SemanticClass::BikeLane => "bike_lane",
            SemanticClass::Gravel => "gravel",
            SemanticClass::Sand => "sand",
            SemanticClass::Snow => "snow",
            SemanticClass::LowGrass => "low_grass",
            SemanticClass::Road => "road",
            SemanticClass::ParkingArea => "parking_area",
            SemanticClass::TallGrass => "tall_grass",
            SemanticClass::Bush => "bush",
            SemanticClass::Dirt => "dirt",
            SemanticClass::Person => "person",
            SemanticClass::Curb => "curb",
            SemanticClass::Wall => "wall",
            SemanticClass::Obstacle => "obstacle",
        }
    }

    pub fn from_name(name: &str) -> Option<SemanticClass> {
        SemanticClass::ALL.iter().copied().find(|c| c.name() == name)
    }
}

impl fmt::Display for SemanticClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-cell semantic labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticGrid {
    dims: GridDims,
    labels: Vec<SemanticClass>,
}

impl SemanticGrid {
    pub fn new(dims: GridDims, labels: Vec<SemanticClass>) -> Result<Self, GridError> {
        if labels.len() != dims.len() {
            return Err(GridError::LengthMismatch {
                expected: dims.len(),
                got: labels.len(),
            });
        }
        Ok(SemanticGrid { dims, labels })
    }

    pub fn uniform(dims: GridDims, class: SemanticClass) -> SemanticGrid {
        SemanticGrid {
            dims,
            labels: vec![class; dims.len()],
        }
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn get(&self, row: usize, col: usize) -> SemanticClass {
        self.labels[self.dims.index(row, col)]
    }

    pub fn labels(&self) -> &[SemanticClass] {
        &self.labels
    }

    pub(crate) fn set(&mut self, row: usize, col: usize, class: SemanticClass) {
        let i = self.dims.index(row, col);
        self.labels[i] = class;
    }
}

pub(crate) fn check_same_shape(left: GridDims, right: GridDims) -> Result<(), GridError> {
    if left != right {
        return Err(GridError::ShapeMismatch { left, right });
    }
    Ok(())
}

/// Weighted per-cell combination of two maps:
/// `(a * wa + b * wb) / (wa + wb)`.
///
/// Errors on any shape mismatch and on any cell where `wa + wb` is zero.
pub fn blend(
    a: &TravMap,
    wa: &WeightMap,
    b: &TravMap,
    wb: &WeightMap,
) -> Result<TravMap, GridError> {
    check_same_shape(a.dims, b.dims)?;
    check_same_shape(a.dims, wa.dims)?;
    check_same_shape(a.dims, wb.dims)?;
    let mut values = Vec::with_capacity(a.dims.len());
    for i in 0..a.dims.len() {
        let denom = wa.values[i] + wb.values[i];
        if denom <= 0.0 {
            return Err(GridError::AllZeroWeights);
        }
        values.push((a.values[i] * wa.values[i] + b.values[i] * wb.values[i]) / denom);
    }
    Ok(TravMap::from_raw_clamped(a.dims, values))
}

/// Mean squared difference between two equally shaped maps.
pub fn mse(a: &TravMap, b: &TravMap) -> Result<f64, GridError> {
    check_same_shape(a.dims, b.dims)?;
    let sum: f64 = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.dims.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dims(h: usize, w: usize) -> GridDims {
        GridDims::new(h, w).unwrap()
    }

    /// Independent scalar-loop reference for `blend`.
    fn blend_oracle(a: &[f64], wa: &[f64], b: &[f64], wb: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(a.len());
        for i in 0..a.len() {
            out.push((a[i] * wa[i] + b[i] * wb[i]) / (wa[i] + wb[i]));
        }
        out
    }

    #[test]
    fn dims_reject_zero_extents() {
        assert!(GridDims::new(0, 4).is_err());
        assert!(GridDims::new(4, 0).is_err());
        assert_eq!(dims(3, 5).len(), 15);
    }

    #[test]
    fn trav_map_rejects_out_of_range_values() {
        let d = dims(1, 2);
        assert!(matches!(
            TravMap::new(d, vec![0.5, 1.2]),
            Err(GridError::ValueOutOfRange { row: 0, col: 1, .. })
        ));
        assert!(matches!(
            TravMap::new(d, vec![-0.1, 0.0]),
            Err(GridError::ValueOutOfRange { row: 0, col: 0, .. })
        ));
        assert!(matches!(
            TravMap::new(d, vec![f64::NAN, 0.0]),
            Err(GridError::NonFinite { .. })
        ));
        assert!(matches!(
            TravMap::new(d, vec![0.5]),
            Err(GridError::LengthMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn weight_map_rejects_all_zero_but_allows_explicit_zero() {
        let d = dims(2, 2);
        assert!(matches!(
            WeightMap::new(d, vec![0.0; 4]),
            Err(GridError::AllZeroWeights)
        ));
        assert!(matches!(
            WeightMap::new(d, vec![1.0, -0.5, 0.0, 0.0]),
            Err(GridError::NegativeWeight { row: 0, col: 1, .. })
        ));
        let z = WeightMap::zero(d);
        assert_eq!(z.mass(), 0.0);
    }

    #[test]
    fn elevation_requires_positive_cell_size() {
        let d = dims(1, 1);
        assert!(matches!(
            ElevationGrid::new(d, vec![0.0], 0.0),
            Err(GridError::BadCellSize { .. })
        ));
        assert!(ElevationGrid::new(d, vec![0.0], -1.0).is_err());
        assert!(ElevationGrid::new(d, vec![f64::INFINITY], 0.5).is_err());
    }

    #[test]
    fn semantic_names_round_trip() {
        for class in SemanticClass::ALL {
            assert_eq!(SemanticClass::from_name(class.name()), Some(class));
        }
        assert_eq!(SemanticClass::from_name("lava"), None);
    }

    #[test]
    fn row_major_indexing() {
        let d = dims(2, 3);
        let m = TravMap::new(d, vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        assert_eq!(m.get(0, 2), 0.2);
        assert_eq!(m.get(1, 0), 0.3);
        let cells: Vec<_> = d.cells().collect();
        assert_eq!(cells[0], (0, 0));
        assert_eq!(cells[3], (1, 0));
        assert_eq!(cells.len(), 6);
    }

    #[test]
    fn blend_equal_weights_is_midpoint() {
        // Frozen hand value: 0.2 and 0.8 at weight 1 each -> 0.5.
        let d = dims(1, 1);
        let a = TravMap::constant(d, 0.2).unwrap();
        let b = TravMap::constant(d, 0.8).unwrap();
        let w = WeightMap::constant(d, 1.0).unwrap();
        let out = blend(&a, &w, &b, &w).unwrap();
        assert_eq!(out.get(0, 0), 0.5);
    }

    #[test]
    fn blend_matches_scalar_oracle() {
        let d = dims(2, 2);
        let a = TravMap::new(d, vec![0.0, 0.25, 0.5, 1.0]).unwrap();
        let b = TravMap::new(d, vec![1.0, 0.75, 0.5, 0.0]).unwrap();
        let wa = WeightMap::new(d, vec![1.0, 2.0, 3.0, 0.5]).unwrap();
        let wb = WeightMap::new(d, vec![3.0, 2.0, 1.0, 0.25]).unwrap();
        let expect = blend_oracle(a.values(), wa.values(), b.values(), wb.values());
        let out = blend(&a, &wa, &b, &wb).unwrap();
        for (got, want) in out.values().iter().zip(expect) {
            assert!((got - want).abs() <= 1e-15);
        }
    }

    #[test]
    fn blend_rejects_zero_combined_weight_cell() {
        let d = dims(1, 2);
        let a = TravMap::constant(d, 0.2).unwrap();
        let b = TravMap::constant(d, 0.8).unwrap();
        let wa = WeightMap::new(d, vec![1.0, 0.0]).unwrap();
        let wb = WeightMap::new(d, vec![1.0, 0.0]).unwrap();
        assert!(blend(&a, &wa, &b, &wb).is_err());
    }

    #[test]
    fn mse_hand_value() {
        // Frozen hand value: constant 0 vs constant 0.5 -> 0.25.
        let d = dims(4, 4);
        let a = TravMap::constant(d, 0.0).unwrap();
        let b = TravMap::constant(d, 0.5).unwrap();
        assert_eq!(mse(&a, &b).unwrap(), 0.25);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn mse_shape_mismatch_errors() {
        let a = TravMap::constant(dims(2, 2), 0.5).unwrap();
        let b = TravMap::constant(dims(2, 3), 0.5).unwrap();
        assert!(matches!(mse(&a, &b), Err(GridError::ShapeMismatch { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(512))]

        #[test]
        fn blend_stays_in_unit_interval_and_is_symmetric(
            av in proptest::collection::vec(0.0f64..=1.0, 9),
            bv in proptest::collection::vec(0.0f64..=1.0, 9),
            wav in proptest::collection::vec(0.01f64..=10.0, 9),
            wbv in proptest::collection::vec(0.01f64..=10.0, 9),
        ) {
            let d = dims(3, 3);
            let a = TravMap::new(d, av).unwrap();
            let b = TravMap::new(d, bv).unwrap();
            let wa = WeightMap::new(d, wav).unwrap();
            let wb = WeightMap::new(d, wbv).unwrap();
            let ab = blend(&a, &wa, &b, &wb).unwrap();
            let ba = blend(&b, &wb, &a, &wa).unwrap();
            for i in 0..d.len() {
                prop_assert!((0.0..=1.0).contains(&ab.values()[i]));
                prop_assert!((ab.values()[i] - ba.values()[i]).abs() <= 1e-12);
                let lo = a.values()[i].min(b.values()[i]) - 1e-12;
                let hi = a.values()[i].max(b.values()[i]) + 1e-12;
                prop_assert!(ab.values()[i] >= lo && ab.values()[i] <= hi);
            }
        }

        #[test]
        fn mse_is_symmetric_and_bounded(
            av in proptest::collection::vec(0.0f64..=1.0, 16),
            bv in proptest::collection::vec(0.0f64..=1.0, 16),
        ) {
            let d = dims(4, 4);
            let a = TravMap::new(d, av).unwrap();
            let b = TravMap::new(d, bv).unwrap();
            let ab = mse(&a, &b).unwrap();
            let ba = mse(&b, &a).unwrap();
            prop_assert!(ab >= 0.0 && ab <= 1.0);
            prop_assert!((ab - ba).abs() <= 1e-15);
        }
    }
}
