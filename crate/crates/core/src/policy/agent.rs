//! Per-agent controller: map upkeep, Found/Done arbitration, sub-goal
//! decisions every `d` steps or on arrival, the arrival scan and path
//! following.

use std::collections::{BTreeSet, VecDeque};

use rand::Rng;

use crate::category::CategoryId;
use crate::comms::{Codec, Message, MessageKind, Presence, EXP_BIT, OCC_BIT};
use crate::error::{Error, Result};
use crate::geometry::{direction, Cell, Dims, Heading, Pitch, RayTraversal, CELL_SIZE};
use crate::perception::{Observation, Pose};
use crate::semantic_map::{DistanceField, SemanticMap, EXPLORED, OCCUPIED};

use super::features::{block_features, key_field, Blocks, BLOCK_FEATURES};
use super::learner::{flat_rows, Decision, LinearPolicy, FLAT_X};
use super::planner::{move_end, plan_path, ARRIVE_RADIUS};
use super::reward::subgoal_reward;
use super::subgoal::{propose_greedy, propose_random, Analysis, MapView, SubGoal};
use super::{Action, Hyper, PolicyKind, Variant};

/// Found is valid for a target seen closer than this.
pub const FOUND_RANGE_M: f64 = 1.0;
/// Key cells of one blob are marked checked up to this Chebyshev radius.
const BLOB_RADIUS: i32 = 20;
/// Down and Up: Level coverage comes with ordinary exploration.
const SWEPT: u8 = 0b101;

/// Everything an agent (or, centrally, the team) knows.
#[derive(Clone, Debug)]
pub struct Knowledge {
    /// Own observations only; this is what gets encoded and sent.
    pub map: SemanticMap,
    /// Latest decoded map from each sender.
    pub received: Vec<Option<Presence>>,
    pub found: BTreeSet<CategoryId>,
    /// Key and frontier cells already visited and scanned.
    pub checked: Vec<bool>,
    /// Pitches each cell has been observed at, one bit per pitch.
    pub seen: Vec<u8>,
}

impl Knowledge {
    pub fn new(dims: Dims, agents: usize) -> Knowledge {
        Knowledge {
            map: SemanticMap::new(dims),
            received: vec![None; agents],
            found: BTreeSet::new(),
            checked: vec![false; dims.area()],
            seen: vec![0; dims.area()],
        }
    }

    /// Own observation: map evidence plus the pitch coverage of every cell
    /// a ray reached.
    pub fn observe(&mut self, obs: &Observation) -> Result<()> {
        self.map.project(obs)?;
        let dims = self.dims();
        let bit = 1u8 << obs.pose.pitch.index();
        let max_t = obs.max_range_m / CELL_SIZE;
        self.seen[dims.index(obs.pose.cell)] |= bit;
        for ray in &obs.rays {
            let dir = direction(obs.pose.heading.degrees() as f64 + ray.bearing);
            let t_hit = ray.depth.map(|d| d / CELL_SIZE);
            for step in RayTraversal::new(dims, obs.pose.cell, dir, t_hit.map_or(max_t, |t| t + 1.0)) {
                if t_hit.is_none() && step.t_mid() > max_t {
                    break;
                }
                self.seen[dims.index(step.cell)] |= bit;
                if t_hit.is_some_and(|t| step.t_exit + 1e-9 >= t) {
                    break;
                }
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> Dims {
        self.map.dims()
    }

    /// Applies an inbox: map vectors replace the sender's previous map,
    /// notices extend the found set.
    pub fn absorb(&mut self, codec: &Codec, inbox: &[Message]) -> Result<()> {
        for m in inbox {
            match m.kind {
                MessageKind::MapVector => {
                    let p = codec.decode_presence(&m.payload)?;
                    if m.sender >= self.received.len() {
                        self.received.resize(m.sender + 1, None);
                    }
                    self.received[m.sender] = Some(p);
                }
                MessageKind::FoundNotice => {
                    if let Some(c) = m.found_category() {
                        self.found.insert(c);
                    }
                }
            }
        }
        Ok(())
    }

    fn received_mask(&self, i: usize) -> u32 {
        self.received.iter().flatten().fold(0, |m, p| m | p.masks()[i])
    }

    /// Own evidence decides where it exists; received maps fill the rest.
    pub fn blocked_at(&self, c: Cell) -> bool {
        let own = self.map.cell_counts(c);
        if own[OCCUPIED] > 0 {
            return true;
        }
        own[EXPLORED] == 0 && self.received_mask(self.dims().index(c)) & OCC_BIT != 0
    }

    pub fn view(&self, agent: Cell, targets: &[CategoryId], related: &[CategoryId]) -> MapView {
        let dims = self.dims();
        let tmask = targets.iter().fold(0u32, |m, k| m | 1 << k.index());
        let rmask = related.iter().fold(0u32, |m, k| m | 1 << k.index());
        let mut view = MapView {
            dims,
            blocked: vec![false; dims.area()],
            explored: vec![false; dims.area()],
            swept: vec![false; dims.area()],
            key: crate::priors::KeyObjectsMap::empty(dims),
        };
        for i in 0..dims.area() {
            let own = self.map.cell_counts(dims.cell(i));
            let received = self.received_mask(i);
            let own_exp = own[EXPLORED] > 0;
            view.blocked[i] = own[OCCUPIED] > 0 || (!own_exp && received & OCC_BIT != 0);
            view.explored[i] = own_exp || received & EXP_BIT != 0;
            view.swept[i] = view.blocked[i] || self.seen[i] & SWEPT == SWEPT;
            let own_mask = own
                .iter()
                .take(crate::category::K_TOTAL)
                .enumerate()
                .filter(|(_, &v)| v > 0)
                .fold(0u32, |m, (k, _)| m | 1 << k);
            view.key.layer_targets[i] = (own_mask | received) & tmask != 0;
            // Related objects a teammate reported have usually been checked
            // by that teammate already.
            view.key.layer_related[i] = own_mask & rmask != 0;
        }
        view.blocked[dims.index(agent)] = false;
        view
    }
}

/// Per-step inputs shared by all agents of an episode.
pub struct AgentCtx<'a> {
    pub targets: &'a [CategoryId],
    /// Prior-related categories; empty when priors are off.
    pub related: &'a [CategoryId],
    pub variant: Variant,
    pub hyper: &'a Hyper,
    pub model: Option<&'a LinearPolicy>,
    /// Current sub-goals of teammates (central variant only).
    pub avoid: &'a [Cell],
}

/// Controller state of one agent.
#[derive(Clone, Debug, Default)]
pub struct AgentState {
    pub subgoal: Option<SubGoal>,
    since_decision: usize,
    scan: VecDeque<Action>,
    path: VecDeque<(Action, Cell, Heading)>,
    /// Start and expected end of the last MoveAhead.
    moving: Option<(Cell, Cell)>,
    pub last_action: Option<Action>,
    prev_sg: Option<Cell>,
    /// Decisions of a learned policy, with their rewards.
    pub decisions: Vec<Decision>,
    /// Sum of sub-goal rewards over the episode.
    pub subgoal_return: f64,
    /// Sub-goals in decision order.
    pub subgoal_log: Vec<SubGoal>,
}

impl AgentState {
    pub fn new() -> AgentState {
        AgentState::default()
    }

    /// Next action from the current observation. The caller executes it and
    /// reports valid Found events into `kn.found`.
    pub fn step<R: Rng>(
        &mut self,
        kn: &mut Knowledge,
        ctx: &AgentCtx,
        obs: &Observation,
        rng: &mut R,
    ) -> Result<Action> {
        let a = self.decide(kn, ctx, obs, rng)?;
        self.last_action = Some(a);
        Ok(a)
    }

    fn decide<R: Rng>(
        &mut self,
        kn: &mut Knowledge,
        ctx: &AgentCtx,
        obs: &Observation,
        rng: &mut R,
    ) -> Result<Action> {
        let pose = obs.pose;
        if ctx.variant.kind == PolicyKind::Random {
            kn.observe(obs)?;
            return Ok(Action::ALL[rng.gen_range(0..Action::ALL.len())]);
        }
        self.check_bump(kn, &pose);
        kn.observe(obs)?;

        let remaining: Vec<CategoryId> = ctx.targets.iter().copied().filter(|k| !kn.found.contains(k)).collect();
        if obs.categories_within(FOUND_RANGE_M).any(|k| remaining.contains(&k)) {
            return Ok(Action::Found);
        }
        if remaining.is_empty() {
            return Ok(Action::Done);
        }
        if ctx.variant.flat {
            return self.flat_step(kn, ctx, &remaining, &pose, rng);
        }
        if let Some(a) = self.scan.pop_front() {
            return Ok(a);
        }

        let mut view = None;
        if self.subgoal.is_none() || self.since_decision >= ctx.hyper.d {
            let v = kn.view(pose.cell, &remaining, ctx.related);
            self.make_decision(kn, ctx, &v, &pose, rng)?;
            view = Some(v);
        }
        let sg = self.subgoal.expect("decision sets a sub-goal");

        if let Some(a) = self.follow(kn, &pose) {
            self.since_decision += 1;
            return Ok(self.emit(a, kn, &pose));
        }
        let v = match view {
            Some(v) => v,
            None => kn.view(pose.cell, &remaining, ctx.related),
        };
        let plan = plan_path(v.dims, &v.blocked, pose.cell, pose.heading, sg.cell, ARRIVE_RADIUS);
        if plan.actions.is_empty() {
            self.arrive(kn, &v, &pose, sg);
            return Ok(self.scan.pop_front().unwrap_or(Action::LookDown));
        }
        self.path = plan.actions.iter().copied().zip(plan.states.iter().copied()).map(|(a, (c, h))| (a, c, h)).collect();
        let (a, ..) = self.path.pop_front().expect("non-empty plan");
        self.since_decision += 1;
        Ok(self.emit(a, kn, &pose))
    }

    fn emit(&mut self, a: Action, kn: &Knowledge, pose: &Pose) -> Action {
        if a == Action::MoveAhead {
            let end = move_end_known(kn, pose.cell, pose.heading);
            self.moving = Some((pose.cell, end));
        }
        a
    }

    /// A MoveAhead that stopped short revealed an obstacle the map missed.
    fn check_bump(&mut self, kn: &mut Knowledge, pose: &Pose) {
        let Some((from, expected)) = self.moving.take() else {
            return;
        };
        if pose.cell == expected {
            return;
        }
        self.path.clear();
        if pose.cell.manhattan(from) < expected.manhattan(from) {
            let c = pose.cell.step(pose.heading);
            if kn.dims().contains(c) && kn.map.occupied(c) == 0 {
                kn.map.add(c, OCCUPIED, 1);
                kn.map.add(c, EXPLORED, 1);
            }
        }
    }

    /// Next cached action if the path is still consistent with the map.
    fn follow(&mut self, kn: &Knowledge, pose: &Pose) -> Option<Action> {
        let &(a, cell, heading) = self.path.front()?;
        let ok = match a {
            Action::MoveAhead => heading == pose.heading && move_end_known(kn, pose.cell, pose.heading) == cell && cell != pose.cell,
            Action::RotateLeft => cell == pose.cell && heading == pose.heading.left(),
            Action::RotateRight => cell == pose.cell && heading == pose.heading.right(),
            _ => false,
        };
        if ok {
            self.path.pop_front();
            Some(a)
        } else {
            self.path.clear();
            None
        }
    }

    fn make_decision<R: Rng>(
        &mut self,
        kn: &mut Knowledge,
        ctx: &AgentCtx,
        view: &MapView,
        pose: &Pose,
        rng: &mut R,
    ) -> Result<()> {
        let an = Analysis::new(view, pose.cell);
        let fields = RewardFields::new(view);
        let prev = self.prev_sg.unwrap_or(pose.cell);
        let mut pending = None;
        let sg = match ctx.variant.kind {
            PolicyKind::Greedy => match propose_greedy(&an, &kn.checked, ctx.avoid) {
                Err(Error::NoCandidate) => {
                    // Everything has been visited once. Revisiting the nearest
                    // spot would loop, so wander and start another sweep.
                    kn.checked.iter_mut().for_each(|c| *c = false);
                    propose_random(&an, rng)
                }
                r => r,
            },
            PolicyKind::RandomSubgoal => propose_random(&an, rng),
            PolicyKind::Learned => {
                let zero;
                let model = match ctx.model {
                    Some(m) => m,
                    None => {
                        zero = LinearPolicy::new(super::learner::Shape::SubGoal);
                        &zero
                    }
                };
                let (rows, mask) = block_features(&an, &kn.checked, ctx.hyper.p);
                if !mask.iter().any(|&m| m) {
                    Err(Error::NoCandidate)
                } else {
                    let (b, logp) = model.sample(&rows, &mask, rng)?;
                    let potential = fields.potential(prev, ctx.hyper, view.dims);
                    let critic_in = subgoal_critic_input(&rows, &mask, pose, self.last_action, potential, view.dims);
                    let value = model.value(&critic_in);
                    pending = Some(Decision {
                        rows,
                        mask,
                        chosen: b,
                        logp,
                        critic_in,
                        value,
                        reward: 0.0,
                    });
                    Ok(block_subgoal(&an, &kn.checked, b, ctx.hyper.p))
                }
            }
            PolicyKind::Random => unreachable!("random agents take no sub-goal decisions"),
        };
        let sg = match sg {
            Ok(sg) => sg,
            Err(Error::NoCandidate) => SubGoal {
                cell: pose.cell,
                focus: pose.cell,
            },
            Err(e) => return Err(e),
        };
        let r = fields.reward(sg.cell, prev, ctx.hyper);
        self.subgoal_return += r;
        if let Some(mut d) = pending {
            d.reward = r;
            self.decisions.push(d);
        }
        self.prev_sg = Some(sg.cell);
        self.subgoal = Some(sg);
        self.subgoal_log.push(sg);
        self.since_decision = 0;
        self.path.clear();
        Ok(())
    }

    fn arrive(&mut self, kn: &mut Knowledge, view: &MapView, pose: &Pose, sg: SubGoal) {
        mark_checked(kn, view, sg);
        self.subgoal = None;
        self.path.clear();
        let d = (sg.focus.x - pose.cell.x, sg.focus.y - pose.cell.y);
        if let Some(want) = Heading::toward(d.0, d.1) {
            if want == pose.heading.right() {
                self.scan.push_back(Action::RotateRight);
            } else if want == pose.heading.left() {
                self.scan.push_back(Action::RotateLeft);
            } else if want != pose.heading {
                self.scan.extend([Action::RotateRight, Action::RotateRight]);
            }
        }
        self.scan.extend(match pose.pitch {
            Pitch::Level => &[Action::LookDown, Action::LookUp, Action::LookUp, Action::LookDown][..],
            Pitch::Down => &[Action::LookUp, Action::LookUp, Action::LookDown][..],
            Pitch::Up => &[Action::LookDown, Action::LookDown, Action::LookUp][..],
        });
    }

    fn flat_step<R: Rng>(
        &mut self,
        kn: &mut Knowledge,
        ctx: &AgentCtx,
        remaining: &[CategoryId],
        pose: &Pose,
        rng: &mut R,
    ) -> Result<Action> {
        let view = kn.view(pose.cell, remaining, ctx.related);
        let an = Analysis::new(&view, pose.cell);
        let goal = propose_greedy(&an, &kn.checked, &[]).ok();
        let x = flat_input(kn, &view, pose, goal.map(|g| g.focus));
        let zero;
        let model = match ctx.model {
            Some(m) => m,
            None => {
                zero = LinearPolicy::new(super::learner::Shape::Flat);
                &zero
            }
        };
        let rows = flat_rows(&x);
        let mask = [true; 5];
        let (j, logp) = model.sample(&rows, &mask, rng)?;
        let mut critic_in = x.clone();
        let mut onehot = [0.0; 7];
        if let Some(a) = self.last_action {
            onehot[a.index()] = 1.0;
        }
        critic_in.extend_from_slice(&onehot);
        let value = model.value(&critic_in);
        // Progress of the agent itself stands in for sub-goal progress.
        let prev = self.prev_sg.unwrap_or(pose.cell);
        let r = RewardFields::new(&view).reward(pose.cell, prev, ctx.hyper);
        if let Some(last) = self.decisions.last_mut() {
            last.reward = r;
        }
        self.subgoal_return += r;
        self.prev_sg = Some(pose.cell);
        self.decisions.push(Decision {
            rows,
            mask: mask.to_vec(),
            chosen: j,
            logp,
            critic_in,
            value,
            reward: 0.0,
        });
        // Frontier arrivals count as visited so the goal direction moves on.
        if let Some(g) = goal {
            if g.cell.chebyshev(pose.cell) <= ARRIVE_RADIUS && !view.key.layer_targets[view.dims.index(g.focus)] {
                mark_checked_area(&mut kn.checked, view.dims, g.cell);
            }
        }
        let a = Action::MOTION[j];
        Ok(self.emit(a, kn, pose))
    }
}

fn move_end_known(kn: &Knowledge, cell: Cell, heading: Heading) -> Cell {
    let dims = kn.dims();
    let mut c = cell;
    for _ in 0..crate::geometry::MOVE_CELLS {
        let n = c.step(heading);
        if !dims.contains(n) || kn.blocked_at(n) {
            break;
        }
        c = n;
    }
    c
}

fn mark_checked_area(checked: &mut [bool], dims: Dims, center: Cell) {
    for dy in -ARRIVE_RADIUS..=ARRIVE_RADIUS {
        for dx in -ARRIVE_RADIUS..=ARRIVE_RADIUS {
            let c = center.offset(dx, dy);
            if dims.contains(c) {
                checked[dims.index(c)] = true;
            }
        }
    }
}

/// Marks the arrival neighbourhood and, for a key-object focus, the whole
/// 8-connected blob of that layer around it.
fn mark_checked(kn: &mut Knowledge, view: &MapView, sg: SubGoal) {
    let dims = view.dims;
    mark_checked_area(&mut kn.checked, dims, sg.cell);
    let f = sg.focus;
    for layer in [&view.key.layer_targets, &view.key.layer_related] {
        if !layer[dims.index(f)] {
            continue;
        }
        let mut stack = vec![f];
        kn.checked[dims.index(f)] = true;
        let mut seen = vec![false; dims.area()];
        seen[dims.index(f)] = true;
        while let Some(c) = stack.pop() {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let n = c.offset(dx, dy);
                    if !dims.contains(n) || n.chebyshev(f) > BLOB_RADIUS {
                        continue;
                    }
                    let i = dims.index(n);
                    if layer[i] && !seen[i] {
                        seen[i] = true;
                        kn.checked[i] = true;
                        stack.push(n);
                    }
                }
            }
        }
    }
}

/// Sub-goal reward on the agent's current view.
/// Reward distance fields of a view.
struct RewardFields {
    to: Option<DistanceField>,
    ko: Option<DistanceField>,
}

impl RewardFields {
    fn new(view: &MapView) -> RewardFields {
        RewardFields {
            to: key_field(view, &view.key.layer_targets),
            ko: key_field(view, &view.key.layer_related),
        }
    }

    fn reward(&self, sg_new: Cell, sg_prev: Cell, hyper: &Hyper) -> f64 {
        subgoal_reward(sg_new, sg_prev, self.to.as_ref(), self.ko.as_ref(), hyper.alpha, hyper.beta)
    }

    /// Weighted distance of `c` to the key cells, normalised by the map size.
    fn potential(&self, c: Cell, hyper: &Hyper, dims: Dims) -> f64 {
        let norm = (dims.l + dims.w) as f64;
        let d = |f: &Option<DistanceField>| f.as_ref().and_then(|f| f.finite(c)).map_or(0.0, |d| d as f64 / norm);
        hyper.alpha * d(&self.to) + hyper.beta * d(&self.ko)
    }
}

/// Candidate of block `b` nearest its centre; the focus is the block's best
/// key cell, else its first frontier's unexplored neighbour.
fn block_subgoal(an: &Analysis, checked: &[bool], b: usize, p: usize) -> SubGoal {
    let dims = an.view.dims;
    let blocks = Blocks::new(dims, p);
    let center = blocks.center(b);
    let cell = an
        .candidates
        .iter()
        .copied()
        .filter(|&c| blocks.of(c) == b)
        .min_by_key(|c| (c.dist2(center), c.x, c.y))
        .unwrap_or(an.agent);
    let key = |layer: &[bool]| {
        dims.cells()
            .filter(|&c| blocks.of(c) == b && layer[dims.index(c)] && !checked[dims.index(c)])
            .min_by_key(|&c| (an.access(c).unwrap_or(u32::MAX), c.x, c.y))
    };
    let focus = key(&an.view.key.layer_targets)
        .or_else(|| key(&an.view.key.layer_related))
        .unwrap_or_else(|| if an.is_frontier(cell) { an.unexplored_neighbor(cell) } else { cell });
    let cell = match an.view.key.layer_targets[dims.index(focus)] || an.view.key.layer_related[dims.index(focus)] {
        true => an.snap(focus).unwrap_or(cell),
        false => cell,
    };
    SubGoal { cell, focus }
}

/// Mean valid-block features, pose, last action, the previous sub-goal's
/// weighted key distance and a bias.
fn subgoal_critic_input(
    rows: &[f64],
    mask: &[bool],
    pose: &Pose,
    last: Option<Action>,
    potential: f64,
    dims: Dims,
) -> Vec<f64> {
    let mut x = vec![0.0; BLOCK_FEATURES];
    let n = mask.iter().filter(|&&m| m).count().max(1) as f64;
    for (j, &ok) in mask.iter().enumerate() {
        if ok {
            for f in 0..BLOCK_FEATURES {
                x[f] += rows[j * BLOCK_FEATURES + f] / n;
            }
        }
    }
    x.extend(pose_features(pose, dims));
    let mut onehot = [0.0; 7];
    if let Some(a) = last {
        onehot[a.index()] = 1.0;
    }
    x.extend_from_slice(&onehot);
    x.push(potential);
    x.push(1.0);
    x
}

fn pose_features(pose: &Pose, dims: Dims) -> [f64; 4] {
    [
        pose.cell.x as f64 / dims.l as f64,
        pose.cell.y as f64 / dims.w as f64,
        pose.heading.degrees() as f64 / 360.0,
        pose.pitch.index() as f64,
    ]
}

/// Step summary for the flat policy: bias, free run ahead, whether a target
/// is known, goal bearing relative to the heading (ahead, right, behind,
/// left), pitch one-hot and normalised goal distance.
fn flat_input(kn: &Knowledge, view: &MapView, pose: &Pose, goal: Option<Cell>) -> Vec<f64> {
    let mut x = vec![0.0; FLAT_X];
    x[0] = 1.0;
    let end = move_end(view.dims, &view.blocked, pose.cell, pose.heading);
    x[1] = end.manhattan(pose.cell) as f64 / crate::geometry::MOVE_CELLS as f64;
    x[2] = if view.key.layer_targets.iter().zip(&kn.checked).any(|(&t, &c)| t && !c) { 1.0 } else { 0.0 };
    if let Some(g) = goal {
        if let Some(h) = Heading::toward(g.x - pose.cell.x, g.y - pose.cell.y) {
            let rel = (h.index() + 4 - pose.heading.index()) % 4;
            x[3 + rel] = 1.0;
        }
        x[10] = (g.dist2(pose.cell) as f64).sqrt() / (view.dims.l + view.dims.w) as f64;
    }
    x[7 + pose.pitch.index()] = 1.0;
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::category::CategoryId;
    use crate::perception::{HitKind, RayHit};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn obs_with(pose: Pose, cat: Option<(CategoryId, f64)>) -> Observation {
        let rays = match cat {
            Some((k, d)) => vec![RayHit {
                bearing: 0.0,
                depth: Some(d),
                kind: HitKind::Object,
                category: Some(k),
                instance: Some(1),
            }],
            None => vec![RayHit {
                bearing: 0.0,
                depth: None,
                kind: HitKind::None,
                category: None,
                instance: None,
            }],
        };
        Observation {
            pose,
            max_range_m: 5.0,
            rays,
        }
    }

    fn run(cat: Option<(CategoryId, f64)>, found: &[CategoryId]) -> Action {
        let dims = Dims::new(40, 40);
        let mut kn = Knowledge::new(dims, 1);
        kn.found.extend(found.iter().copied());
        let hyper = Hyper::default();
        let targets = [CategoryId(3)];
        let ctx = AgentCtx {
            targets: &targets,
            related: &[],
            variant: Variant::new(PolicyKind::Greedy),
            hyper: &hyper,
            model: None,
            avoid: &[],
        };
        let pose = Pose::new(Cell::new(5, 20), Heading::East);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        AgentState::new().step(&mut kn, &ctx, &obs_with(pose, cat), &mut rng).unwrap()
    }

    #[test]
    fn found_rule() {
        assert_eq!(run(Some((CategoryId(3), 0.8)), &[]), Action::Found);
        assert_ne!(run(Some((CategoryId(3), 1.2)), &[]), Action::Found);
        assert_ne!(run(Some((CategoryId(4), 0.5)), &[]), Action::Found);
    }

    #[test]
    fn done_once_everything_is_found() {
        assert_eq!(run(None, &[CategoryId(3)]), Action::Done);
    }

    #[test]
    fn own_evidence_overrides_received_obstacles() {
        let dims = Dims::new(6, 6);
        let mut kn = Knowledge::new(dims, 2);
        let c = Cell::new(2, 2);
        let mut other = SemanticMap::new(dims);
        other.add(c, OCCUPIED, 1);
        other.add(c, EXPLORED, 1);
        kn.received[1] = Some(Presence::from_map(&other));
        assert!(kn.blocked_at(c));
        kn.map.add(c, EXPLORED, 1);
        assert!(!kn.blocked_at(c));
        let v = kn.view(Cell::new(0, 0), &[], &[]);
        assert!(!v.blocked[dims.index(c)] && v.explored[dims.index(c)]);
    }
}
