//! Exact minimum makespan of a task on the true map.
//!
//! Every agent moves in the state space (cell, heading, pitch) under the real
//! motion model. A target counts as found after one `Found` step in a state
//! whose true observation shows it closer than 1.0 m; each agent ends with
//! one `Done`. Per agent, a subset DP over targets gives the cheapest cost to
//! find exactly that subset; the makespan minimises over all assignments of
//! targets to agents the largest agent cost.

use crate::category::CategoryId;
use crate::error::{Error, Result};
use crate::geometry::{Cell, Dims, Heading, Pitch};
use crate::perception::{observe, Pose, SensorParams};
use crate::policy::agent::FOUND_RANGE_M;
use crate::policy::planner::move_end;
use crate::scene::{Scene, TaskSpec};

pub const MAX_ORACLE_TARGETS: usize = 6;
pub const MAX_ORACLE_AGENTS: usize = 5;
const UNREACHED: u32 = u32::MAX;
/// Cells within this Chebyshev distance of an object may see it in range.
const VIEW_REACH: i32 = 21;

/// Per-scene tables shared by all tasks on that scene.
pub struct SceneOracle {
    dims: Dims,
    free: Vec<bool>,
    /// Cell index reached by MoveAhead, per (cell, heading).
    moves: Vec<u32>,
    /// Categories seen in range, per state, as a bitmask.
    vis: Vec<u32>,
}

fn state(dims: Dims, c: Cell, h: Heading, p: Pitch) -> usize {
    (dims.index(c) * 4 + h.index()) * 3 + p.index()
}

impl SceneOracle {
    pub fn new(scene: &Scene, sensor: &SensorParams) -> Result<SceneOracle> {
        let dims = scene.dims();
        let free: Vec<bool> = dims.cells().map(|c| scene.is_free(c)).collect();
        let blocked: Vec<bool> = free.iter().map(|f| !f).collect();
        let mut moves = vec![0u32; dims.area() * 4];
        for c in dims.cells() {
            for h in Heading::ALL {
                moves[dims.index(c) * 4 + h.index()] = dims.index(move_end(dims, &blocked, c, h)) as u32;
            }
        }
        // Only object cells within view reach matter; mark candidate cells.
        let mut near = vec![false; dims.area()];
        for obj in scene.objects() {
            for &fc in &obj.footprint {
                for dy in -VIEW_REACH..=VIEW_REACH {
                    for dx in -VIEW_REACH..=VIEW_REACH {
                        let c = fc.offset(dx, dy);
                        if dims.contains(c) {
                            near[dims.index(c)] = true;
                        }
                    }
                }
            }
        }
        let short = SensorParams {
            max_range_m: FOUND_RANGE_M,
            ..*sensor
        };
        let mut vis = vec![0u32; dims.area() * 12];
        for c in dims.cells() {
            let i = dims.index(c);
            if !free[i] || !near[i] {
                continue;
            }
            for h in Heading::ALL {
                for p in Pitch::ALL {
                    let obs = observe(scene, &Pose { cell: c, heading: h, pitch: p }, &short)?;
                    vis[state(dims, c, h, p)] =
                        obs.categories_within(FOUND_RANGE_M).fold(0, |m, k| m | 1 << k.index());
                }
            }
        }
        Ok(SceneOracle { dims, free, moves, vis })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Categories visible in range from a pose.
    pub fn visible(&self, pose: &Pose) -> u32 {
        self.vis[state(self.dims, pose.cell, pose.heading, pose.pitch)]
    }

    fn successors(&self, s: usize, out: &mut Vec<usize>) {
        out.clear();
        let p = s % 3;
        let h = (s / 3) % 4;
        let ci = s / 12;
        let end = self.moves[ci * 4 + h] as usize;
        if end != ci {
            out.push((end * 4 + h) * 3 + p);
        }
        out.push((ci * 4 + (h + 1) % 4) * 3 + p);
        out.push((ci * 4 + (h + 3) % 4) * 3 + p);
        if p < 2 {
            out.push(s + 1);
        }
        if p > 0 {
            out.push(s - 1);
        }
    }

    /// Unit-cost shortest paths from sources that start at differing costs.
    fn spread(&self, init: &[u32]) -> Vec<u32> {
        let mut dist = init.to_vec();
        let mut buckets: Vec<Vec<usize>> = Vec::new();
        for (s, &d) in init.iter().enumerate() {
            if d != UNREACHED {
                let d = d as usize;
                if buckets.len() <= d {
                    buckets.resize(d + 1, Vec::new());
                }
                buckets[d].push(s);
            }
        }
        let mut next = Vec::with_capacity(5);
        let mut d = 0;
        while d < buckets.len() {
            let bucket = std::mem::take(&mut buckets[d]);
            for s in bucket {
                if dist[s] as usize != d {
                    continue;
                }
                self.successors(s, &mut next);
                for &t in &next {
                    if dist[t] > d as u32 + 1 {
                        dist[t] = d as u32 + 1;
                        if buckets.len() <= d + 1 {
                            buckets.resize(d + 2, Vec::new());
                        }
                        buckets[d + 1].push(t);
                    }
                }
            }
            d += 1;
        }
        dist
    }

    /// Cost for one agent to find exactly each subset of `targets` (bit `j`
    /// for `targets[j]`) and then stop; `None` where impossible.
    pub fn agent_costs(&self, spawn: &Pose, targets: &[CategoryId]) -> Result<Vec<Option<u32>>> {
        if targets.len() > MAX_ORACLE_TARGETS {
            return Err(Error::InstanceTooLarge(format!("{} targets", targets.len())));
        }
        if !self.dims.contains(spawn.cell) || !self.free[self.dims.index(spawn.cell)] {
            return Err(Error::InvalidPose("oracle spawn is not a free cell".into()));
        }
        let m = targets.len();
        let n_states = self.vis.len();
        let mut after: Vec<Option<Vec<u32>>> = vec![None; 1 << m];
        let mut start = vec![UNREACHED; n_states];
        start[state(self.dims, spawn.cell, spawn.heading, spawn.pitch)] = 0;
        after[0] = Some(start);
        let mut costs = vec![None; 1 << m];
        for mask in 0..(1usize << m) {
            let Some(here) = after[mask].take() else {
                continue;
            };
            costs[mask] = here.iter().copied().filter(|&d| d != UNREACHED).min().map(|d| d + 1);
            if mask == (1 << m) - 1 {
                continue;
            }
            let reach = self.spread(&here);
            for (j, k) in targets.iter().enumerate() {
                if mask & 1 << j != 0 {
                    continue;
                }
                let bit = 1u32 << k.index();
                let next = after[mask | 1 << j].get_or_insert_with(|| vec![UNREACHED; n_states]);
                for (s, &d) in reach.iter().enumerate() {
                    if d != UNREACHED && self.vis[s] & bit != 0 && d + 1 < next[s] {
                        next[s] = d + 1;
                    }
                }
            }
        }
        Ok(costs)
    }

    /// Minimum over assignments of the largest per-agent cost; `None` when
    /// some target cannot be found.
    pub fn makespan(&self, spawns: &[Pose], targets: &[CategoryId]) -> Result<Option<u32>> {
        if spawns.is_empty() {
            return Err(Error::EmptyInput);
        }
        if spawns.len() > MAX_ORACLE_AGENTS {
            return Err(Error::InstanceTooLarge(format!("{} agents", spawns.len())));
        }
        let costs: Vec<Vec<Option<u32>>> =
            spawns.iter().map(|p| self.agent_costs(p, targets)).collect::<Result<_>>()?;
        let (n, m) = (spawns.len(), targets.len());
        let mut best: Option<u32> = None;
        let mut assign = vec![0usize; m];
        loop {
            let mut masks = vec![0usize; n];
            for (j, &a) in assign.iter().enumerate() {
                masks[a] |= 1 << j;
            }
            let span = masks
                .iter()
                .zip(&costs)
                .map(|(&mk, c)| c[mk])
                .try_fold(0u32, |acc, c| c.map(|c| acc.max(c)));
            if let Some(s) = span {
                best = Some(best.map_or(s, |b| b.min(s)));
            }
            // Next assignment in base-n counting order.
            let mut j = 0;
            while j < m {
                assign[j] += 1;
                if assign[j] < n {
                    break;
                }
                assign[j] = 0;
                j += 1;
            }
            if j == m {
                break;
            }
        }
        Ok(best)
    }
}

/// Oracle makespan of a task; `None` marks an impossible task.
pub fn oracle_makespan(scene: &Scene, task: &TaskSpec, sensor: &SensorParams) -> Result<Option<u32>> {
    if task.targets.len() > MAX_ORACLE_TARGETS || task.agent_spawns.len() > MAX_ORACLE_AGENTS {
        return Err(Error::InstanceTooLarge(format!(
            "M={} N={}",
            task.targets.len(),
            task.agent_spawns.len()
        )));
    }
    let oracle = SceneOracle::new(scene, sensor)?;
    let spawns: Vec<Pose> = task.agent_spawns.iter().map(|s| Pose::new(s.cell, s.heading)).collect();
    oracle.makespan(&spawns, &task.targets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{AgentSpawn, HeightBand, ObjectInstance};

    fn corridor(len: usize, obj_x: i32) -> (Scene, CategoryId) {
        let dims = Dims::new(len, 3);
        let mut walls = vec![false; dims.area()];
        for c in dims.cells() {
            if c.y != 1 {
                walls[dims.index(c)] = true;
            }
        }
        let k = CategoryId::from_name("Laptop").unwrap();
        let obj = ObjectInstance {
            instance_id: 1,
            category: k,
            footprint: vec![Cell::new(obj_x, 1)],
            height_band: HeightBand::Eye,
        };
        let scene = Scene::new("corridor", dims, walls, vec![obj], vec![Cell::new(0, 1), Cell::new(1, 1)], vec![k]).unwrap();
        (scene, k)
    }

    fn task(scene: &Scene, k: CategoryId, spawns: &[(Cell, Heading)]) -> TaskSpec {
        TaskSpec {
            scene_id: scene.id().to_string(),
            targets: vec![k],
            agent_spawns: spawns.iter().map(|&(cell, heading)| AgentSpawn { cell, heading }).collect(),
            seed: 0,
        }
    }

    #[test]
    fn two_moves_then_found_then_done() {
        // 29 cells ahead: two moves bring it to 19 cells (0.95 m).
        let (scene, k) = corridor(40, 29);
        let t = task(&scene, k, &[(Cell::new(0, 1), Heading::East)]);
        assert_eq!(oracle_makespan(&scene, &t, &SensorParams::default()).unwrap(), Some(4));
    }

    #[test]
    fn visible_at_spawn_costs_two() {
        let (scene, k) = corridor(40, 10);
        let t = task(&scene, k, &[(Cell::new(0, 1), Heading::East)]);
        assert_eq!(oracle_makespan(&scene, &t, &SensorParams::default()).unwrap(), Some(2));
    }

    #[test]
    fn facing_away_adds_rotations() {
        let (scene, k) = corridor(40, 10);
        let t = task(&scene, k, &[(Cell::new(0, 1), Heading::West)]);
        assert_eq!(oracle_makespan(&scene, &t, &SensorParams::default()).unwrap(), Some(4));
    }

    #[test]
    fn unreachable_target_is_none() {
        let (scene, _) = corridor(40, 10);
        let other = CategoryId::from_name("Apple").unwrap();
        let oracle = SceneOracle::new(&scene, &SensorParams::default()).unwrap();
        let pose = Pose::new(Cell::new(0, 1), Heading::East);
        assert_eq!(oracle.makespan(&[pose], &[other]).unwrap(), None);
    }

    #[test]
    fn second_agent_never_hurts() {
        let (scene, k) = corridor(40, 29);
        let oracle = SceneOracle::new(&scene, &SensorParams::default()).unwrap();
        let a = Pose::new(Cell::new(0, 1), Heading::West);
        let b = Pose::new(Cell::new(1, 1), Heading::East);
        let one = oracle.makespan(&[a], &[k]).unwrap().unwrap();
        let two = oracle.makespan(&[a, b], &[k]).unwrap().unwrap();
        assert!(two <= one);
        assert!(matches!(oracle.makespan(&[a; 6], &[k]), Err(Error::InstanceTooLarge(_))));
    }
}
