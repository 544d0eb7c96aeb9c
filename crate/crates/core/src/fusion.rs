//! Incremental weighted fusion of expert estimates, with lower and upper
//! expectation envelopes around the partially fused map.
//!
//! A [`FusionState`] is constructed from the full ordered list of weight maps
//! that will eventually be folded in, then advanced one expert at a time with
//! [`FusionState::fuse_step`]. After `k` of `K` steps the state can produce:
//!
//! * a lower expectation map: the final fusion if every remaining expert
//!   reported 0 everywhere, `fused * prior / total`,
//! * an upper expectation map: the final fusion if every remaining expert
//!   reported 1 everywhere, `fused + (1 - fused) * (total - prior) / total`.
//!
//! The final fusion over all `K` experts always lies between the two, which
//! is what makes early termination sound. Both formulas are arranged so the
//! ordering `lower <= fused <= upper` holds exactly in floating point, not
//! just up to tolerance: `prior <= total` holds bitwise because both are
//! prefix sums of the same non-negative addends in the same order, and
//! round-to-nearest keeps single multiplications and divisions monotone.
//! Once all steps are folded, `prior == total` bitwise, both envelopes
//! collapse onto the fused map, and the bracket width is exactly zero.

use std::fmt;

use crate::grid::{check_same_shape, GridError, TravMap, WeightMap};

#[derive(Debug, Clone, PartialEq)]
pub enum FusionError {
    EmptyInput,
    CountMismatch { maps: usize, weights: usize },
    DegenerateWeight { row: usize, col: usize },
    NoSteps,
    StepOverrun { planned: usize },
    PriorExceedsTotal { row: usize, col: usize },
    Grid(GridError),
}

impl fmt::Display for FusionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FusionError::EmptyInput => write!(f, "fusion requires at least one map"),
            FusionError::CountMismatch { maps, weights } => {
                write!(f, "got {maps} maps but {weights} weight maps")
            }
            FusionError::DegenerateWeight { row, col } => {
                write!(f, "combined weight at ({row}, {col}) is zero")
            }
            FusionError::NoSteps => write!(f, "no fusion steps have been applied yet"),
            FusionError::StepOverrun { planned } => {
                write!(f, "all {planned} planned fusion steps were already applied")
            }
            FusionError::PriorExceedsTotal { row, col } => {
                write!(
                    f,
                    "accumulated weight at ({row}, {col}) exceeds the planned total; \
                     steps must use the weights the state was constructed with, in order"
                )
            }
            FusionError::Grid(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for FusionError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            FusionError::Grid(e) => Some(e),
            _ => None,
        }
    }
}

impl From<GridError> for FusionError {
    fn from(e: GridError) -> Self {
        FusionError::Grid(e)
    }
}

/// Running fusion over a fixed, ordered set of `K` weighted estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionState {
    fused: Option<TravMap>,
    weight_prior: WeightMap,
    weight_total: WeightMap,
    steps_done: usize,
    steps_total: usize,
}

impl FusionState {
    /// Start a fusion over estimates whose weights, in evaluation order, are
    /// `weights`. The total is folded here with the same left-to-right
    /// summation the steps will use, so after the last step the accumulated
    /// prior equals the total bit for bit.
    ///
    /// Every cell of the summed total must be positive; a cell no expert has
    /// weight on can never be fused meaningfully.
    pub fn new(weights: &[WeightMap]) -> Result<FusionState, FusionError> {
        let first = weights.first().ok_or(FusionError::EmptyInput)?;
        let dims = first.dims();
        let mut total = WeightMap::zero(dims);
        for w in weights {
            check_same_shape(dims, w.dims())?;
            for (acc, &v) in total.values_mut().iter_mut().zip(w.values()) {
                *acc += v;
            }
        }
        for (i, &v) in total.values().iter().enumerate() {
            if v <= 0.0 {
                return Err(FusionError::DegenerateWeight {
                    row: i / dims.width(),
                    col: i % dims.width(),
                });
            }
        }
        Ok(FusionState {
            fused: None,
            weight_prior: WeightMap::zero(dims),
            weight_total: total,
            steps_done: 0,
            steps_total: weights.len(),
        })
    }

    /// Fold in the next estimate. The weight must be the `steps_done`-th
    /// weight map passed to [`FusionState::new`]; feeding anything heavier is
    /// caught when the accumulated prior overshoots the planned total.
    pub fn fuse_step(&self, t_hat: &TravMap, w: &WeightMap) -> Result<FusionState, FusionError> {
        if self.steps_done == self.steps_total {
            return Err(FusionError::StepOverrun {
                planned: self.steps_total,
            });
        }
        let dims = self.weight_total.dims();
        check_same_shape(dims, t_hat.dims())?;
        check_same_shape(dims, w.dims())?;

        let mut next = self.clone();
        next.steps_done += 1;
        match &self.fused {
            None => {
                for (i, &wv) in w.values().iter().enumerate() {
                    if wv <= 0.0 {
                        return Err(FusionError::DegenerateWeight {
                            row: i / dims.width(),
                            col: i % dims.width(),
                        });
                    }
                }
                next.fused = Some(t_hat.clone());
                next.weight_prior = w.clone();
            }
            Some(fused) => {
                let mut values = Vec::with_capacity(dims.len());
                for i in 0..dims.len() {
                    let prior = self.weight_prior.values()[i];
                    let denom = prior + w.values()[i];
                    if denom <= 0.0 {
                        return Err(FusionError::DegenerateWeight {
                            row: i / dims.width(),
                            col: i % dims.width(),
                        });
                    }
                    values.push(
                        (fused.values()[i] * prior + t_hat.values()[i] * w.values()[i]) / denom,
                    );
                }
                next.fused = Some(TravMap::from_raw_clamped(dims, values));
                for (acc, &v) in next.weight_prior.values_mut().iter_mut().zip(w.values()) {
                    *acc += v;
                }
            }
        }
        for (i, (&p, &t)) in next
            .weight_prior
            .values()
            .iter()
            .zip(next.weight_total.values())
            .enumerate()
        {
            if p > t {
                return Err(FusionError::PriorExceedsTotal {
                    row: i / dims.width(),
                    col: i % dims.width(),
                });
            }
        }
        Ok(next)
    }

    /// Final fusion assuming all pending experts report 0 everywhere.
    /// Elementwise `fused * prior / total`; never above the fused map.
    pub fn lower_expectation(&self) -> Result<TravMap, FusionError> {
        let fused = self.fused.as_ref().ok_or(FusionError::NoSteps)?;
        let dims = fused.dims();
        let mut values = Vec::with_capacity(dims.len());
        for i in 0..dims.len() {
            let ratio = self.weight_prior.values()[i] / self.weight_total.values()[i];
            values.push(fused.values()[i] * ratio);
        }
        Ok(TravMap::from_raw_clamped(dims, values))
    }

    /// Final fusion assuming all pending experts report 1 everywhere.
    /// Elementwise `fused + (1 - fused) * (total - prior) / total`; never
    /// below the fused map, never above 1.
    pub fn upper_expectation(&self) -> Result<TravMap, FusionError> {
        let fused = self.fused.as_ref().ok_or(FusionError::NoSteps)?;
        let dims = fused.dims();
        let mut values = Vec::with_capacity(dims.len());
        for i in 0..dims.len() {
            let total = self.weight_total.values()[i];
            let pending = (total - self.weight_prior.values()[i]) / total;
            let v = fused.values()[i];
            values.push((v + (1.0 - v) * pending).min(1.0));
        }
        Ok(TravMap::from_raw_clamped(dims, values))
    }

    /// Fused map so far; `None` before the first step.
    pub fn fused(&self) -> Option<&TravMap> {
        self.fused.as_ref()
    }

    pub fn weight_prior(&self) -> &WeightMap {
        &self.weight_prior
    }

    pub fn weight_total(&self) -> &WeightMap {
        &self.weight_total
    }

    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    pub fn steps_total(&self) -> usize {
        self.steps_total
    }

    pub fn is_complete(&self) -> bool {
        self.steps_done == self.steps_total
    }
}

/// One-shot weighted fusion of all estimates:
/// `sum(map_k * w_k) / sum(w_k)` per cell.
///
/// Reference semantics for the incremental path; [`FusionState`] folded over
/// the same inputs agrees with this to tight floating-point tolerance.
pub fn fuse_batch(maps: &[TravMap], weights: &[WeightMap]) -> Result<TravMap, FusionError> {
    if maps.is_empty() {
        return Err(FusionError::EmptyInput);
    }
    if maps.len() != weights.len() {
        return Err(FusionError::CountMismatch {
            maps: maps.len(),
            weights: weights.len(),
        });
    }
    let dims = maps[0].dims();
    for m in maps {
        check_same_shape(dims, m.dims())?;
    }
    for w in weights {
        check_same_shape(dims, w.dims())?;
    }
    let mut values = Vec::with_capacity(dims.len());
    for i in 0..dims.len() {
        let mut num = 0.0;
        let mut den = 0.0;
        for (m, w) in maps.iter().zip(weights) {
            num += m.values()[i] * w.values()[i];
            den += w.values()[i];
        }
        if den <= 0.0 {
            return Err(FusionError::DegenerateWeight {
                row: i / dims.width(),
                col: i % dims.width(),
            });
        }
        values.push(num / den);
    }
    Ok(TravMap::from_raw_clamped(dims, values))
}
