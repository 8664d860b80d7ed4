//! Low-level planner: breadth-first search over (cell, heading) states under
//! the real motion model, where one `MoveAhead` covers up to five cells and
//! stops early at the last free cell.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::geometry::{Cell, Dims, Heading, MOVE_CELLS};
use crate::perception::Pose;
use crate::semantic_map::SemanticMap;

use super::Action;

/// A sub-goal counts as reached from any cell within this Chebyshev
/// distance. Five-cell moves put every free cell within 2 of some stop.
pub const ARRIVE_RADIUS: i32 = 2;

/// Cell reached by `MoveAhead` from `cell`: up to five steps, stopping before
/// the first blocked or out-of-bounds cell.
pub fn move_end(dims: Dims, blocked: &[bool], cell: Cell, heading: Heading) -> Cell {
    let mut c = cell;
    for _ in 0..MOVE_CELLS {
        let n = c.step(heading);
        if !dims.contains(n) || blocked[dims.index(n)] {
            break;
        }
        c = n;
    }
    c
}

/// Applies a primitive action to a pose under an obstacle grid.
pub fn apply(dims: Dims, blocked: &[bool], pose: Pose, action: Action) -> Pose {
    match action {
        Action::MoveAhead => Pose {
            cell: move_end(dims, blocked, pose.cell, pose.heading),
            ..pose
        },
        Action::RotateLeft => Pose {
            heading: pose.heading.left(),
            ..pose
        },
        Action::RotateRight => Pose {
            heading: pose.heading.right(),
            ..pose
        },
        Action::LookUp => Pose {
            pitch: pose.pitch.up(),
            ..pose
        },
        Action::LookDown => Pose {
            pitch: pose.pitch.down(),
            ..pose
        },
        Action::Found | Action::Done => pose,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathPlan {
    pub actions: Vec<Action>,
    /// Cell and heading after each action.
    pub states: Vec<(Cell, Heading)>,
    /// True when the path ends within the arrival radius of the sub-goal;
    /// otherwise it ends at the reachable cell nearest the sub-goal.
    pub reached: bool,
}

impl PathPlan {
    pub fn cost(&self) -> usize {
        self.actions.len()
    }

    pub fn end(&self, start: (Cell, Heading)) -> (Cell, Heading) {
        self.states.last().copied().unwrap_or(start)
    }
}

const EXPANSION: [Action; 3] = [Action::MoveAhead, Action::RotateRight, Action::RotateLeft];

/// Shortest action sequence from `(start, heading)` to any cell within
/// `radius` (Chebyshev) of `goal`. Ties between equally short paths follow
/// the expansion order MoveAhead, RotateRight, RotateLeft. When no such cell
/// is reachable the plan targets the reachable cell nearest `goal`
/// (Euclidean, then smaller x, then smaller y).
pub fn plan_path(
    dims: Dims,
    blocked: &[bool],
    start: Cell,
    heading: Heading,
    goal: Cell,
    radius: i32,
) -> PathPlan {
    let n = dims.area() * 4;
    let sid = |c: Cell, h: Heading| dims.index(c) * 4 + h.index();
    let mut parent = vec![u32::MAX; n];
    let mut via = vec![0u8; n];
    let s0 = sid(start, heading);
    parent[s0] = s0 as u32;
    let is_goal = |c: Cell| c.chebyshev(goal) <= radius;
    let mut found = if is_goal(start) { Some(s0) } else { None };
    let mut order = Vec::new();
    let mut queue = VecDeque::from([s0]);
    'bfs: while let Some(s) = queue.pop_front() {
        if found.is_some() {
            break;
        }
        order.push(s);
        let c = dims.cell(s / 4);
        let h = Heading::ALL[s % 4];
        for (k, a) in EXPANSION.iter().enumerate() {
            let (nc, nh) = match a {
                Action::MoveAhead => {
                    let e = move_end(dims, blocked, c, h);
                    if e == c {
                        continue;
                    }
                    (e, h)
                }
                Action::RotateRight => (c, h.right()),
                _ => (c, h.left()),
            };
            let t = sid(nc, nh);
            if parent[t] != u32::MAX {
                continue;
            }
            parent[t] = s as u32;
            via[t] = k as u8;
            if is_goal(nc) {
                found = Some(t);
                break 'bfs;
            }
            queue.push_back(t);
        }
    }
    let (end, reached) = match found {
        Some(t) => (t, true),
        None => {
            // BFS order makes the first state at the best cell a shortest one.
            let best = order
                .iter()
                .copied()
                .min_by_key(|&s| {
                    let c = dims.cell(s / 4);
                    (c.dist2(goal), c.x, c.y)
                })
                .unwrap_or(s0);
            (best, false)
        }
    };
    let mut actions = Vec::new();
    let mut states = Vec::new();
    let mut s = end;
    while s != s0 {
        actions.push(EXPANSION[via[s] as usize]);
        states.push((dims.cell(s / 4), Heading::ALL[s % 4]));
        s = parent[s] as usize;
    }
    actions.reverse();
    states.reverse();
    PathPlan {
        actions,
        states,
        reached,
    }
}

/// Next primitive action toward `sg` on the map's obstacle grid, or `None`
/// on arrival.
pub fn plan_low_level(map: &SemanticMap, pose: &Pose, sg: Cell) -> Result<Option<Action>> {
    let dims = map.dims();
    for c in [pose.cell, sg] {
        if !dims.contains(c) {
            return Err(Error::OutOfBounds { x: c.x, y: c.y });
        }
    }
    if map.is_obstacle(pose.cell) {
        return Err(Error::AgentCellOccupied);
    }
    let blocked = map.obstacle_grid();
    let plan = plan_path(dims, &blocked, pose.cell, pose.heading, sg, ARRIVE_RADIUS);
    Ok(plan.actions.first().copied())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantic_map::{EXPLORED, OCCUPIED};

    fn empty() -> SemanticMap {
        SemanticMap::new(Dims::new(20, 20))
    }

    #[test]
    fn straight_ahead_moves() {
        let pose = Pose::new(Cell::new(5, 10), Heading::East);
        assert_eq!(plan_low_level(&empty(), &pose, Cell::new(10, 10)).unwrap(), Some(Action::MoveAhead));
    }

    #[test]
    fn behind_rotates_right() {
        let pose = Pose::new(Cell::new(10, 10), Heading::East);
        assert_eq!(plan_low_level(&empty(), &pose, Cell::new(3, 10)).unwrap(), Some(Action::RotateRight));
    }

    #[test]
    fn at_goal_is_arrival() {
        let pose = Pose::new(Cell::new(4, 4), Heading::North);
        assert_eq!(plan_low_level(&empty(), &pose, Cell::new(4, 4)).unwrap(), None);
    }

    #[test]
    fn occupied_agent_cell_is_an_error() {
        let mut map = empty();
        map.add(Cell::new(4, 4), OCCUPIED, 1);
        map.add(Cell::new(4, 4), EXPLORED, 1);
        let pose = Pose::new(Cell::new(4, 4), Heading::North);
        assert!(matches!(plan_low_level(&map, &pose, Cell::new(9, 9)), Err(Error::AgentCellOccupied)));
    }

    #[test]
    fn move_stops_before_obstacles() {
        let dims = Dims::new(10, 3);
        let mut blocked = vec![false; 30];
        blocked[dims.index(Cell::new(4, 1))] = true;
        assert_eq!(move_end(dims, &blocked, Cell::new(0, 1), Heading::East), Cell::new(3, 1));
        assert_eq!(move_end(dims, &blocked, Cell::new(3, 1), Heading::East), Cell::new(3, 1));
        assert_eq!(move_end(dims, &blocked, Cell::new(5, 1), Heading::East), Cell::new(9, 1));
    }

    #[test]
    fn unreachable_goal_targets_nearest_reachable_cell() {
        let dims = Dims::new(12, 5);
        let mut blocked = vec![false; dims.area()];
        for y in 0..5 {
            blocked[dims.index(Cell::new(6, y))] = true;
        }
        let plan = plan_path(dims, &blocked, Cell::new(0, 2), Heading::East, Cell::new(11, 2), 0);
        assert!(!plan.reached);
        assert_eq!(plan.end((Cell::new(0, 2), Heading::East)).0, Cell::new(5, 2));
    }
}
