//! Shortest-path planning on the traversability grid.
//!
//! Cells are vertices, 4-neighbor moves are edges. Entering a cell costs its
//! untraversability squared plus a constant per-step charge, and the source
//! cell's own cost is paid up front, so the plan cost is
//! `(1 - t(v_1))^2 + sum_{i > 1} ((1 - t(v_i))^2 + aux_step_cost)` along the
//! path. Cells with traversability below `theta` are not admitted at all.
//! All costs are non-negative, so Dijkstra applies.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{Path2D, PlanError, PlannerConfig};
use crate::grid::TravMap;

/// Search outcome. `cost` is `+inf` and `path` is `None` when source and
/// destination are not connected through admitted cells (including when one
/// of them is itself below the threshold).
#[derive(Debug, Clone, PartialEq)]
pub struct GraphPlan {
    pub cost: f64,
    pub path: Option<Path2D>,
}

impl GraphPlan {
    fn infeasible() -> GraphPlan {
        GraphPlan {
            cost: f64::INFINITY,
            path: None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.path.is_some()
    }
}

struct HeapEntry {
    cost: f64,
    idx: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cost == other.cost && self.idx == other.idx
    }
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap pops the largest, we want the cheapest.
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Cheapest admitted path from `src` to `dst` on the map.
pub fn graph_plan(
    t: &TravMap,
    src: (usize, usize),
    dst: (usize, usize),
    config: &PlannerConfig,
) -> Result<GraphPlan, PlanError> {
    let dims = t.dims();
    for (row, col) in [src, dst] {
        if !dims.contains(row, col) {
            return Err(PlanError::CellOutOfBounds { row, col });
        }
    }
    let node_cost = |idx: usize| {
        let v = t.values()[idx];
        (1.0 - v) * (1.0 - v)
    };
    let admitted = |idx: usize| t.values()[idx] >= config.theta;

    let (h, w) = (dims.height(), dims.width());
    let src_idx = dims.index(src.0, src.1);
    let dst_idx = dims.index(dst.0, dst.1);
    if !admitted(src_idx) || !admitted(dst_idx) {
        return Ok(GraphPlan::infeasible());
    }

    let mut dist = vec![f64::INFINITY; dims.len()];
    let mut parent = vec![usize::MAX; dims.len()];
    let mut settled = vec![false; dims.len()];
    let mut heap = BinaryHeap::new();
    dist[src_idx] = node_cost(src_idx);
    heap.push(HeapEntry {
        cost: dist[src_idx],
        idx: src_idx,
    });

    while let Some(HeapEntry { cost, idx }) = heap.pop() {
        if settled[idx] {
            continue;
        }
        settled[idx] = true;
        if idx == dst_idx {
            break;
        }
        let (row, col) = (idx / w, idx % w);
        let mut relax = |nidx: usize| {
            if !settled[nidx] && admitted(nidx) {
                let next = cost + node_cost(nidx) + config.aux_step_cost;
                if next < dist[nidx] {
                    dist[nidx] = next;
                    parent[nidx] = idx;
                    heap.push(HeapEntry {
                        cost: next,
                        idx: nidx,
                    });
                }
            }
        };
        if row > 0 {
            relax(idx - w);
        }
        if row + 1 < h {
            relax(idx + w);
        }
        if col > 0 {
            relax(idx - 1);
        }
        if col + 1 < w {
            relax(idx + 1);
        }
    }

    if dist[dst_idx].is_infinite() {
        return Ok(GraphPlan::infeasible());
    }
    let mut cells = Vec::new();
    let mut at = dst_idx;
    loop {
        cells.push((at / w, at % w));
        if at == src_idx {
            break;
        }
        at = parent[at];
    }
    cells.reverse();
    Ok(GraphPlan {
        cost: dist[dst_idx],
        path: Some(Path2D { cells }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridDims;
    use proptest::prelude::*;

    fn dims(h: usize, w: usize) -> GridDims {
        GridDims::new(h, w).unwrap()
    }

    fn config(theta: f64, aux: f64) -> PlannerConfig {
        PlannerConfig::new(1.0, 2.0, theta, aux).unwrap()
    }

    /// Exhaustive minimum over all simple paths, by depth-first enumeration.
    /// Costs are non-negative so the optimum over walks is attained on a
    /// simple path; feasible only through cells at or above theta.
    fn exhaustive_best(t: &TravMap, src: (usize, usize), dst: (usize, usize), cfg: &PlannerConfig) -> f64 {
        let d = t.dims();
        let (h, w) = (d.height(), d.width());
        assert!(d.len() <= 32, "oracle uses a u32 visited mask");
        let node = |idx: usize| (1.0 - t.values()[idx]) * (1.0 - t.values()[idx]);
        let admitted = |idx: usize| t.values()[idx] >= cfg.theta;
        let src_idx = d.index(src.0, src.1);
        let dst_idx = d.index(dst.0, dst.1);
        if !admitted(src_idx) || !admitted(dst_idx) {
            return f64::INFINITY;
        }
        fn rec(
            idx: usize,
            visited: u32,
            cost: f64,
            best: &mut f64,
            dst_idx: usize,
            h: usize,
            w: usize,
            node: &dyn Fn(usize) -> f64,
            admitted: &dyn Fn(usize) -> bool,
            aux: f64,
        ) {
            if idx == dst_idx {
                if cost < *best {
                    *best = cost;
                }
                return;
            }
            let (row, col) = (idx / w, idx % w);
            let mut neighbors = Vec::with_capacity(4);
            if row > 0 {
                neighbors.push(idx - w);
            }
            if row + 1 < h {
                neighbors.push(idx + w);
            }
            if col > 0 {
                neighbors.push(idx - 1);
            }
            if col + 1 < w {
                neighbors.push(idx + 1);
            }
            for n in neighbors {
                if visited & (1 << n) == 0 && admitted(n) {
                    rec(
                        n,
                        visited | (1 << n),
                        cost + node(n) + aux,
                        best,
                        dst_idx,
                        h,
                        w,
                        node,
                        admitted,
                        aux,
                    );
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(
            src_idx,
            1 << src_idx,
            node(src_idx),
            &mut best,
            dst_idx,
            h,
            w,
            &node,
            &admitted,
            cfg.aux_step_cost,
        );
        best
    }

    #[test]
    fn free_map_cost_is_step_charges_only() {
        // Uniform traversability 1: node costs vanish, a corner-to-corner
        // path on 4x4 takes 6 steps -> cost 6 * aux.
        let d = dims(4, 4);
        let t = TravMap::constant(d, 1.0).unwrap();
        let out = graph_plan(&t, (0, 0), (3, 3), &config(0.25, 0.01)).unwrap();
        assert!((out.cost - 0.06).abs() <= 1e-12);
        assert_eq!(out.path.as_ref().unwrap().cells.len(), 7);
    }

    #[test]
    fn src_equals_dst_costs_own_cell() {
        let d = dims(2, 2);
        let t = TravMap::constant(d, 0.5).unwrap();
        let out = graph_plan(&t, (1, 1), (1, 1), &config(0.25, 0.01)).unwrap();
        assert_eq!(out.cost, 0.25);
        assert_eq!(out.path.unwrap().cells, vec![(1, 1)]);
    }

    #[test]
    fn threshold_blocks_and_detours() {
        // Column 1 is a wall except the bottom cell; the path must dip down.
        let d = dims(3, 3);
        let mut v = vec![1.0; 9];
        v[d.index(0, 1)] = 0.1;
        v[d.index(1, 1)] = 0.1;
        let t = TravMap::new(d, v).unwrap();
        let cfg = config(0.25, 0.01);
        let out = graph_plan(&t, (0, 0), (0, 2), &cfg).unwrap();
        let path = out.path.unwrap();
        assert!(path.cells.contains(&(2, 1)));
        assert!(!path.cells.iter().any(|&(r, c)| c == 1 && r < 2));

        // Sealing the gap makes it infeasible.
        let mut v = t.values().to_vec();
        v[d.index(2, 1)] = 0.1;
        let sealed = TravMap::new(d, v).unwrap();
        let out = graph_plan(&sealed, (0, 0), (0, 2), &cfg).unwrap();
        assert!(!out.is_feasible());
        assert!(out.cost.is_infinite());
    }

    #[test]
    fn below_threshold_endpoints_are_infeasible() {
        let d = dims(2, 2);
        let t = TravMap::new(d, vec![0.1, 1.0, 1.0, 1.0]).unwrap();
        let cfg = config(0.25, 0.01);
        assert!(!graph_plan(&t, (0, 0), (1, 1), &cfg).unwrap().is_feasible());
        assert!(!graph_plan(&t, (1, 1), (0, 0), &cfg).unwrap().is_feasible());
    }

    #[test]
    fn out_of_bounds_endpoints_error() {
        let t = TravMap::constant(dims(2, 2), 1.0).unwrap();
        assert!(matches!(
            graph_plan(&t, (0, 0), (2, 0), &config(0.25, 0.01)),
            Err(PlanError::CellOutOfBounds { row: 2, col: 0 })
        ));
    }

    #[test]
    fn agrees_with_exhaustive_enumeration_on_fixed_map() {
        let d = dims(4, 4);
        let v = vec![
            0.9, 0.2, 0.8, 0.7, //
            0.6, 0.3, 0.9, 0.1, //
            0.8, 0.9, 0.5, 0.9, //
            0.4, 0.7, 0.9, 0.8,
        ];
        let t = TravMap::new(d, v).unwrap();
        for theta in [0.0, 0.25, 0.5] {
            let cfg = config(theta, 0.01);
            let fast = graph_plan(&t, (0, 0), (3, 3), &cfg).unwrap();
            let slow = exhaustive_best(&t, (0, 0), (3, 3), &cfg);
            assert_eq!(fast.cost, slow, "theta {theta}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn agrees_with_exhaustive_enumeration(
            values in proptest::collection::vec(0.0f64..=1.0, 16),
            theta in prop_oneof![Just(0.0), Just(0.25), Just(0.5)],
            aux in prop_oneof![Just(0.0), Just(0.01), Just(0.1)],
        ) {
            let d = dims(4, 4);
            let t = TravMap::new(d, values).unwrap();
            let cfg = config(theta, aux);
            let fast = graph_plan(&t, (0, 0), (3, 3), &cfg).unwrap();
            let slow = exhaustive_best(&t, (0, 0), (3, 3), &cfg);
            if slow.is_infinite() {
                prop_assert!(fast.cost.is_infinite());
            } else {
                prop_assert_eq!(fast.cost, slow);
            }
        }

        #[test]
        fn raising_traversability_never_hurts(
            values in proptest::collection::vec(0.0f64..=1.0, 16),
            bump in 0.0f64..=0.5,
        ) {
            let d = dims(4, 4);
            let t = TravMap::new(d, values.clone()).unwrap();
            let raised = TravMap::new(
                d,
                values.iter().map(|v| (v + bump).min(1.0)).collect(),
            )
            .unwrap();
            let cfg = config(0.25, 0.01);
            let before = graph_plan(&t, (0, 0), (3, 3), &cfg).unwrap();
            let after = graph_plan(&raised, (0, 0), (3, 3), &cfg).unwrap();
            if before.is_feasible() {
                prop_assert!(after.is_feasible());
                prop_assert!(after.cost <= before.cost + 1e-9);
            }
        }
    }
}
