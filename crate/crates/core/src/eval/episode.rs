//! The round-synchronised episode loop.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::category::CategoryId;
use crate::comms::{exchange, Codec, Ledger, Outbox};
use crate::error::{Error, Result};
use crate::geometry::Cell;
use crate::perception::{corrupt_segmentation, observe, NoiseParams, Pose, SensorParams};
use crate::policy::agent::{AgentCtx, AgentState, Knowledge, FOUND_RANGE_M};
use crate::policy::learner::{Decision, LinearPolicy};
use crate::policy::planner::apply;
use crate::policy::{Action, Hyper, Variant};
use crate::priors::{related_categories, PriorGraph};
use crate::scene::{Scene, TaskSpec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub max_steps: usize,
    pub sensor: SensorParams,
    pub noise: NoiseParams,
    pub variant: Variant,
    pub hyper: Hyper,
    /// Per-round cap on map values sent by the whole team.
    pub bandwidth_cap: Option<u64>,
    /// Keep per-round frames for replay.
    pub record_trace: bool,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            max_steps: 500,
            sensor: SensorParams::default(),
            noise: NoiseParams::default(),
            variant: Variant::new(crate::policy::PolicyKind::Greedy),
            hyper: Hyper::default(),
            bandwidth_cap: None,
            record_trace: false,
        }
    }
}

/// Shared read-only inputs beyond the scene and task.
#[derive(Clone, Copy)]
pub struct Policies<'a> {
    pub graph: &'a PriorGraph,
    /// Required when communication is on and more than one agent runs.
    pub codec: Option<&'a Codec>,
    pub model: Option<&'a LinearPolicy>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoundEvent {
    pub category: CategoryId,
    pub agent: usize,
    pub step: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bandwidth {
    pub total_values: u64,
    pub map_msgs: u64,
    pub found_msgs: u64,
    pub dropped_msgs: u64,
}

impl From<&Ledger> for Bandwidth {
    fn from(l: &Ledger) -> Self {
        Bandwidth {
            total_values: l.total_values,
            map_msgs: l.map_msgs,
            found_msgs: l.found_msgs,
            dropped_msgs: l.dropped_msgs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub task_id: String,
    pub scene_id: String,
    pub variant: String,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub success: bool,
    pub per_agent_steps: Vec<usize>,
    /// Rounds until the last agent stopped.
    pub d: usize,
    /// Oracle makespan, filled in by the benchmark.
    pub l: Option<u32>,
    pub found_events: Vec<FoundEvent>,
    pub bandwidth: Bandwidth,
    /// Per-agent sum of sub-goal rewards.
    pub subgoal_returns: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub round: usize,
    pub poses: Vec<Pose>,
    /// Action taken in this round; `None` before the first round and for
    /// stopped agents.
    pub actions: Vec<Option<Action>>,
    pub subgoals: Vec<Option<Cell>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub frames: Vec<Frame>,
}

#[derive(Clone, Debug)]
pub struct EpisodeOutput {
    pub result: EpisodeResult,
    pub trace: Option<EpisodeTrace>,
    /// Learned decisions per agent, with rewards.
    pub decisions: Vec<Vec<Decision>>,
}

pub fn task_label(task: &TaskSpec, index: usize) -> String {
    format!("{}-t{:03}", task.scene_id, index)
}

/// Independent stream per agent.
fn agent_rng(seed: u64, agent: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(agent as u64 + 1);
    rng
}

/// Runs one episode. Each round every active agent observes, decides and
/// acts in id order; messages are exchanged at the end of the round.
pub fn run_episode(
    scene: &Scene,
    task: &TaskSpec,
    task_id: &str,
    policies: Policies,
    cfg: &EpisodeConfig,
    seed: u64,
) -> Result<EpisodeOutput> {
    if task.scene_id != scene.id() {
        return Err(Error::ConfigInconsistency(format!(
            "task is for scene {} but scene {} was given",
            task.scene_id,
            scene.id()
        )));
    }
    task.validate(scene)?;
    cfg.sensor.validate()?;
    cfg.noise.validate()?;
    cfg.hyper.validate()?;
    let n = task.agent_spawns.len();
    let variant = cfg.variant;
    let talk = variant.comms && !variant.central && n > 1;
    let codec = match (talk, policies.codec) {
        (true, Some(c)) => {
            if c.dims() != scene.dims() {
                return Err(Error::ConfigInconsistency("codec dims differ from the scene".into()));
            }
            Some(c)
        }
        (true, None) => return Err(Error::ConfigInconsistency("communication needs a codec".into())),
        (false, _) => None,
    };
    let needs_model = variant.kind == crate::policy::PolicyKind::Learned;
    if needs_model {
        if let Some(m) = policies.model {
            let want = if variant.flat {
                crate::policy::learner::Shape::Flat
            } else {
                crate::policy::learner::Shape::SubGoal
            };
            if m.shape != want {
                return Err(Error::ConfigInconsistency("checkpoint shape does not match the variant".into()));
            }
        }
    }

    let related: Vec<CategoryId> = if variant.priors {
        related_categories(policies.graph, &task.targets).into_iter().collect()
    } else {
        Vec::new()
    };
    let dims = scene.dims();
    let walls: Vec<bool> = dims.cells().map(|c| !scene.is_free(c)).collect();
    let slots = if variant.central { 1 } else { n };
    let mut know: Vec<Knowledge> = (0..slots).map(|_| Knowledge::new(dims, n)).collect();
    let mut agents: Vec<AgentState> = (0..n).map(|_| AgentState::new()).collect();
    let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|i| agent_rng(seed, i)).collect();
    let mut poses: Vec<Pose> = task.agent_spawns.iter().map(|s| Pose::new(s.cell, s.heading)).collect();
    let mut active = vec![true; n];
    let mut steps = vec![0usize; n];
    let mut found_all: BTreeSet<CategoryId> = BTreeSet::new();
    let mut events = Vec::new();
    let mut ledger = Ledger::new(n);
    let mut trace = cfg.record_trace.then(|| EpisodeTrace {
        frames: vec![Frame {
            round: 0,
            poses: poses.clone(),
            actions: vec![None; n],
            subgoals: vec![None; n],
        }],
    });

    let mut round = 0;
    let mut hit_limit = false;
    while active.iter().any(|&a| a) && !hit_limit {
        round += 1;
        let mut actions = vec![None; n];
        let mut notices: Vec<Vec<(CategoryId, u32)>> = vec![Vec::new(); n];
        for i in 0..n {
            if !active[i] {
                continue;
            }
            let truth = observe(scene, &poses[i], &cfg.sensor)?;
            let seen = if cfg.noise == NoiseParams::NONE {
                truth.clone()
            } else {
                corrupt_segmentation(&truth, &cfg.noise, &mut rngs[i])
            };
            let avoid: Vec<Cell> = if variant.central {
                (0..n)
                    .filter(|&j| j != i && active[j])
                    .filter_map(|j| agents[j].subgoal.map(|s| s.cell))
                    .collect()
            } else {
                Vec::new()
            };
            let ctx = AgentCtx {
                targets: &task.targets,
                related: &related,
                variant,
                hyper: &cfg.hyper,
                model: policies.model,
                avoid: &avoid,
            };
            let slot = if variant.central { 0 } else { i };
            let a = agents[i].step(&mut know[slot], &ctx, &seen, &mut rngs[i])?;
            steps[i] += 1;
            actions[i] = Some(a);
            match a {
                Action::Found => {
                    let kn = &mut know[slot];
                    let valid = truth
                        .categories_within(FOUND_RANGE_M)
                        .filter(|k| task.targets.contains(k) && !kn.found.contains(k))
                        .min();
                    if let Some(k) = valid {
                        kn.found.insert(k);
                        if found_all.insert(k) {
                            events.push(FoundEvent {
                                category: k,
                                agent: i,
                                step: steps[i],
                            });
                        }
                        if talk {
                            notices[i].push((k, round as u32));
                        }
                    }
                }
                Action::Done => active[i] = false,
                other => poses[i] = apply(dims, &walls, poses[i], other),
            }
            if steps[i] >= cfg.max_steps && active[i] {
                hit_limit = true;
            }
        }
        if let Some(codec) = codec {
            let mut outboxes = Vec::with_capacity(n);
            for i in 0..n {
                outboxes.push(Outbox {
                    map_vector: if active[i] { Some(codec.encode(&know[i].map)?) } else { None },
                    found: std::mem::take(&mut notices[i]),
                });
            }
            let inboxes = exchange(&outboxes, &poses, &active, &cfg.sensor, cfg.bandwidth_cap, &mut ledger);
            for (i, inbox) in inboxes.iter().enumerate() {
                know[i].absorb(codec, inbox)?;
            }
        }
        if let Some(t) = trace.as_mut() {
            t.frames.push(Frame {
                round,
                poses: poses.clone(),
                actions,
                subgoals: agents.iter().map(|a| a.subgoal.map(|s| s.cell)).collect(),
            });
        }
    }

    let success = active.iter().all(|&a| !a) && task.targets.iter().all(|k| found_all.contains(k));
    let result = EpisodeResult {
        task_id: task_id.to_string(),
        scene_id: scene.id().to_string(),
        variant: variant.label(),
        n,
        m: task.targets.len(),
        seed,
        success,
        d: steps.iter().copied().max().unwrap_or(0),
        per_agent_steps: steps,
        l: None,
        found_events: events,
        bandwidth: Bandwidth::from(&ledger),
        subgoal_returns: agents.iter().map(|a| a.subgoal_return).collect(),
    };
    Ok(EpisodeOutput {
        result,
        trace,
        decisions: agents.into_iter().map(|a| a.decisions).collect(),
    })
}
