//! Sub-goal candidates and the non-learned proposers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::category::CategoryId;
use crate::error::{Error, Result};
use crate::geometry::{Cell, Dims};
use crate::priors::KeyObjectsMap;
use crate::semantic_map::{bfs_field, DistanceField, SemanticMap};

/// Preferred minimum path length to a frontier sub-goal, in cells; closer
/// frontiers are used only when nothing farther exists.
const FRONTIER_MIN_DIST: u32 = 3;
/// A related object is worth a visit while unswept cells remain within this
/// Chebyshev radius of it (1 m).
pub const RELATED_REACH: i32 = 20;
/// Sub-goals of other agents repel candidates within this Chebyshev radius
/// in the centralized variant.
pub const AVOID_RADIUS: i32 = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubGoal {
    /// Cell the low-level planner drives to.
    pub cell: Cell,
    /// Cell to face on arrival (a key object or an unexplored cell).
    pub focus: Cell,
}

/// What an agent currently believes about the grid, flattened to booleans.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MapView {
    pub dims: Dims,
    pub blocked: Vec<bool>,
    pub explored: Vec<bool>,
    /// Cells needing no further look: blocked, or observed looking both up and down.
    pub swept: Vec<bool>,
    pub key: KeyObjectsMap,
}

impl MapView {
    /// View of a single semantic map.
    pub fn from_map(map: &SemanticMap, targets: &[CategoryId], related: &[CategoryId]) -> MapView {
        let dims = map.dims();
        let mut key = KeyObjectsMap::empty(dims);
        let mut blocked = vec![false; dims.area()];
        let mut explored = vec![false; dims.area()];
        for c in dims.cells() {
            let i = dims.index(c);
            let counts = map.cell_counts(c);
            blocked[i] = map.is_obstacle(c);
            explored[i] = map.explored(c) > 0;
            key.layer_targets[i] = targets.iter().any(|k| counts[k.index()] > 0);
            key.layer_related[i] = related.iter().any(|k| counts[k.index()] > 0);
        }
        MapView {
            dims,
            blocked,
            swept: explored.clone(),
            explored,
            key,
        }
    }
}

/// Reachability analysis of a view from the agent's cell.
pub struct Analysis<'a> {
    pub view: &'a MapView,
    pub agent: Cell,
    /// Path length from the agent over unblocked cells.
    pub dist: DistanceField,
    /// Explored, unblocked, reachable cells in row-major order.
    pub candidates: Vec<Cell>,
    pub frontier: Vec<bool>,
    /// Summed-area table of unswept cells, `(l+1)*(w+1)`.
    unswept_sat: Vec<u32>,
}

impl<'a> Analysis<'a> {
    pub fn new(view: &'a MapView, agent: Cell) -> Analysis<'a> {
        let dims = view.dims;
        let mut blocked = view.blocked.clone();
        blocked[dims.index(agent)] = false;
        let dist = bfs_field(dims, &[agent], &blocked);
        let mut candidates = Vec::new();
        let mut frontier = vec![false; dims.area()];
        for (i, &d) in dist.as_slice().iter().enumerate() {
            let c = dims.cell(i);
            if d == DistanceField::INFINITE || blocked[i] || !(view.explored[i] || c == agent) {
                continue;
            }
            candidates.push(c);
            frontier[i] = c
                .neighbors4()
                .iter()
                .any(|&n| dims.contains(n) && !view.swept[dims.index(n)]);
        }
        let stride = dims.l + 1;
        let mut unswept_sat = vec![0u32; stride * (dims.w + 1)];
        for y in 0..dims.w {
            for x in 0..dims.l {
                let v = !view.swept[y * dims.l + x] as u32;
                unswept_sat[(y + 1) * stride + x + 1] =
                    v + unswept_sat[y * stride + x + 1] + unswept_sat[(y + 1) * stride + x] - unswept_sat[y * stride + x];
            }
        }
        Analysis {
            view,
            agent,
            dist,
            candidates,
            frontier,
            unswept_sat,
        }
    }

    /// Whether any unswept cell lies within Chebyshev radius `r` of `c`.
    pub fn unswept_near(&self, c: Cell, r: i32) -> bool {
        let dims = self.view.dims;
        let x0 = (c.x - r).max(0) as usize;
        let y0 = (c.y - r).max(0) as usize;
        let x1 = ((c.x + r + 1).max(0) as usize).min(dims.l);
        let y1 = ((c.y + r + 1).max(0) as usize).min(dims.w);
        if x0 >= x1 || y0 >= y1 {
            return false;
        }
        let s = dims.l + 1;
        let t = &self.unswept_sat;
        t[y1 * s + x1] + t[y0 * s + x0] > t[y0 * s + x1] + t[y1 * s + x0]
    }

    pub fn is_frontier(&self, c: Cell) -> bool {
        self.frontier[self.view.dims.index(c)]
    }

    /// Candidate nearest to `target` (Euclidean, then smaller x, then smaller y).
    pub fn snap(&self, target: Cell) -> Option<Cell> {
        self.candidates
            .iter()
            .copied()
            .min_by_key(|c| (c.dist2(target), c.x, c.y))
    }

    /// Path length to stand on or next to `c`.
    pub fn access(&self, c: Cell) -> Option<u32> {
        if let Some(d) = self.dist.finite(c) {
            return Some(d);
        }
        c.neighbors4()
            .iter()
            .filter_map(|&n| self.dist.finite(n))
            .min()
            .map(|d| d + 1)
    }

    /// First unswept neighbour of a frontier cell.
    pub fn unexplored_neighbor(&self, c: Cell) -> Cell {
        let dims = self.view.dims;
        c.neighbors4()
            .into_iter()
            .find(|&n| dims.contains(n) && !self.view.swept[dims.index(n)])
            .unwrap_or(c)
    }
}

fn near_any(c: Cell, avoid: &[Cell]) -> bool {
    avoid.iter().any(|a| a.chebyshev(c) <= AVOID_RADIUS)
}

/// Nearest unchecked target cell, else nearest unchecked related cell with
/// unswept space around it, else nearest frontier; ties by smaller x then
/// smaller y. Cells near `avoid` are skipped while any other choice exists.
pub fn propose_greedy(an: &Analysis, checked: &[bool], avoid: &[Cell]) -> Result<SubGoal> {
    let dims = an.view.dims;
    let key_pick = |layer: &[bool], reach: Option<i32>, use_avoid: bool| -> Option<SubGoal> {
        layer
            .iter()
            .enumerate()
            .filter(|&(i, &on)| on && !checked[i])
            .map(|(i, _)| dims.cell(i))
            .filter(|&c| reach.is_none_or(|r| an.unswept_near(c, r)))
            .filter(|&c| !(use_avoid && near_any(c, avoid)))
            .filter_map(|c| an.access(c).map(|d| (d, c.x, c.y, c)))
            .min()
            .and_then(|(_, _, _, k)| {
                Some(SubGoal {
                    cell: an.snap(k)?,
                    focus: k,
                })
            })
    };
    let frontier_pick = |use_avoid: bool| -> Option<SubGoal> {
        an.candidates
            .iter()
            .copied()
            .filter(|&c| an.is_frontier(c) && !checked[dims.index(c)])
            .filter(|&c| !(use_avoid && near_any(c, avoid)))
            .map(|c| {
                let d = an.dist.get(c);
                (d < FRONTIER_MIN_DIST, d, c.x, c.y, c)
            })
            .min()
            .map(|(.., c)| SubGoal {
                cell: c,
                focus: an.unexplored_neighbor(c),
            })
    };
    let passes: &[bool] = if avoid.is_empty() { &[false] } else { &[true, false] };
    for &use_avoid in passes {
        let pick = key_pick(&an.view.key.layer_targets, None, use_avoid)
            .or_else(|| key_pick(&an.view.key.layer_related, Some(RELATED_REACH), use_avoid))
            .or_else(|| frontier_pick(use_avoid));
        if let Some(sg) = pick {
            return Ok(sg);
        }
    }
    Err(Error::NoCandidate)
}

/// Uniform over candidate cells.
pub fn propose_random<R: Rng>(an: &Analysis, rng: &mut R) -> Result<SubGoal> {
    if an.candidates.is_empty() {
        return Err(Error::NoCandidate);
    }
    let c = an.candidates[rng.gen_range(0..an.candidates.len())];
    let focus = if an.is_frontier(c) {
        an.unexplored_neighbor(c)
    } else {
        c
    };
    Ok(SubGoal { cell: c, focus })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn open_view(l: usize, w: usize) -> MapView {
        let dims = Dims::new(l, w);
        MapView {
            dims,
            blocked: vec![false; dims.area()],
            explored: vec![true; dims.area()],
            swept: vec![true; dims.area()],
            key: KeyObjectsMap::empty(dims),
        }
    }

    #[test]
    fn single_target_is_chosen_and_snapped() {
        let mut v = open_view(10, 10);
        let t = Cell::new(7, 2);
        let i = v.dims.index(t);
        v.key.layer_targets[i] = true;
        v.blocked[i] = true;
        let an = Analysis::new(&v, Cell::new(1, 1));
        let sg = propose_greedy(&an, &vec![false; 100], &[]).unwrap();
        assert_eq!(sg.focus, t);
        assert_eq!(sg.cell.manhattan(t), 1);
        assert_eq!(sg.cell, Cell::new(6, 2));
    }

    #[test]
    fn frontier_fixture_is_deterministic() {
        // Columns 0..=5 explored; the frontier is column 5.
        let mut v = open_view(10, 10);
        for c in v.dims.cells() {
            v.explored[v.dims.index(c)] = c.x <= 5;
            v.swept[v.dims.index(c)] = c.x <= 5;
        }
        let an = Analysis::new(&v, Cell::new(1, 4));
        let sg = propose_greedy(&an, &vec![false; 100], &[]).unwrap();
        assert_eq!(sg.cell, Cell::new(5, 4));
        assert_eq!(sg.focus, Cell::new(6, 4));
        let again = propose_greedy(&Analysis::new(&v, Cell::new(1, 4)), &vec![false; 100], &[]).unwrap();
        assert_eq!(sg, again);
    }

    #[test]
    fn fully_explored_without_keys_has_no_candidate() {
        let v = open_view(6, 6);
        let an = Analysis::new(&v, Cell::new(1, 1));
        assert!(matches!(propose_greedy(&an, &vec![false; 36], &[]), Err(Error::NoCandidate)));
    }

    #[test]
    fn avoid_prefers_other_candidates() {
        let mut v = open_view(60, 5);
        for c in [Cell::new(10, 2), Cell::new(50, 2)] {
            let i = v.dims.index(c);
            v.key.layer_targets[i] = true;
        }
        let an = Analysis::new(&v, Cell::new(12, 2));
        let checked = vec![false; 300];
        assert_eq!(propose_greedy(&an, &checked, &[]).unwrap().focus, Cell::new(10, 2));
        assert_eq!(propose_greedy(&an, &checked, &[Cell::new(9, 2)]).unwrap().focus, Cell::new(50, 2));
    }

    #[test]
    fn related_cells_need_unswept_surroundings() {
        let mut v = open_view(60, 5);
        let r = Cell::new(5, 2);
        let i = v.dims.index(r);
        v.key.layer_related[i] = true;
        let checked = vec![false; 300];
        let an = Analysis::new(&v, Cell::new(30, 2));
        // Everything swept: the related object is not worth a visit.
        assert!(matches!(propose_greedy(&an, &checked, &[]), Err(Error::NoCandidate)));
        let far = v.dims.index(Cell::new(25, 0));
        v.swept[far] = false;
        v.explored[far] = false;
        let an = Analysis::new(&v, Cell::new(30, 2));
        assert_eq!(propose_greedy(&an, &checked, &[]).unwrap().focus, r);
        assert!(an.unswept_near(r, 20));
        assert!(!an.unswept_near(r, 19));
    }

    #[test]
    fn random_proposals_are_candidates() {
        let mut v = open_view(10, 10);
        v.blocked[55] = true;
        let an = Analysis::new(&v, Cell::new(0, 0));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let sg = propose_random(&an, &mut rng).unwrap();
            assert!(!v.blocked[v.dims.index(sg.cell)]);
        }
    }
}
