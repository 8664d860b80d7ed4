//! PPO training of the high-level (or flat) policy over sampled episodes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::category::CategoryId;
use crate::comms::Codec;
use crate::geometry::{Heading, Pitch};
use crate::perception::{observe, Pose, SensorParams};
use crate::semantic_map::SemanticMap;
use crate::error::{Error, Result};
use crate::eval::episode::{run_episode, EpisodeConfig, Policies};
use crate::priors::PriorGraph;
use crate::scene::{sample_task_from, Scene};

use super::checkpoint::{Checkpoint, EpochStats};
use super::learner::{normalize_advantages, ppo_update, returns_and_advantages, Sample, Shape};
use super::{PolicyKind, Variant};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSettings {
    pub epochs: u32,
    pub episodes_per_epoch: usize,
    /// Agents per training episode.
    pub agents: usize,
    /// Targets per training task.
    pub targets: usize,
    pub seed: u64,
    /// Target categories the sampler may draw from.
    pub allowed_targets: Option<Vec<CategoryId>>,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            epochs: 20,
            episodes_per_epoch: 8,
            agents: 1,
            targets: 1,
            seed: 0,
            allowed_targets: None,
        }
    }
}

/// Stream for one epoch; depends only on the seed and the epoch number so a
/// resumed run replays exactly what an uninterrupted one would.
fn epoch_rng(seed: u64, epoch: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

/// Runs `settings.epochs` more epochs on `ckpt`, appending one trace row per
/// epoch. On divergence the checkpoint keeps the rows completed so far.
pub fn train_high_level(
    ckpt: &mut Checkpoint,
    scenes: &[Scene],
    graph: &PriorGraph,
    codec: Option<&Codec>,
    episode: &EpisodeConfig,
    settings: &TrainSettings,
) -> Result<()> {
    if settings.epochs > 0 && scenes.is_empty() {
        return Err(Error::EmptySceneList);
    }
    if settings.episodes_per_epoch == 0 {
        return Err(Error::validation("train.episodes_per_epoch", "must be positive"));
    }
    let mut cfg = *episode;
    cfg.hyper = ckpt.hyper;
    cfg.record_trace = false;
    let mut variant = Variant {
        kind: PolicyKind::Learned,
        ..episode.variant
    };
    variant.flat = ckpt.policy.shape == Shape::Flat;
    cfg.variant = variant;

    for _ in 0..settings.epochs {
        let epoch = ckpt.epochs_done;
        let mut rng = epoch_rng(settings.seed, epoch);
        let mut samples = Vec::new();
        let mut returns = 0.0;
        let mut successes = 0usize;
        for _ in 0..settings.episodes_per_epoch {
            let scene = &scenes[rng.gen_range(0..scenes.len())];
            let task = sample_task_from(
                scene,
                settings.targets,
                settings.agents,
                rng.gen(),
                settings.allowed_targets.as_deref(),
            )?;
            let policies = Policies {
                graph,
                codec,
                model: Some(&ckpt.policy),
            };
            let out = run_episode(scene, &task, "train", policies, &cfg, rng.gen())?;
            successes += out.result.success as usize;
            let n = out.result.subgoal_returns.len().max(1) as f64;
            returns += out.result.subgoal_returns.iter().sum::<f64>() / n;
            for decisions in out.decisions {
                let rewards: Vec<f64> = decisions.iter().map(|d| d.reward).collect();
                let values: Vec<f64> = decisions.iter().map(|d| d.value).collect();
                let (ret, adv) = returns_and_advantages(&rewards, &values, ckpt.hyper.gamma);
                for ((decision, ret), adv) in decisions.into_iter().zip(ret).zip(adv) {
                    samples.push(Sample { decision, ret, adv });
                }
            }
        }
        normalize_advantages(&mut samples);
        let loss = if samples.is_empty() {
            0.0
        } else {
            let hyper = ckpt.hyper;
            ppo_update(
                &mut ckpt.policy,
                &mut ckpt.adam_actor,
                &mut ckpt.adam_critic,
                &samples,
                &hyper,
                &mut rng,
            )?
        };
        let episodes = settings.episodes_per_epoch as f64;
        ckpt.trace.push(EpochStats {
            epoch,
            episodes: settings.episodes_per_epoch as u32,
            mean_return: returns / episodes,
            success_rate: successes as f64 / episodes,
            loss,
        });
        ckpt.epochs_done += 1;
    }
    Ok(())
}

/// Partial maps for fitting a learned codec: each one accumulates full
/// turns at a few random spawn cells of a scene, scenes taken in turn.
pub fn exploration_maps(scenes: &[Scene], count: usize, sensor: &SensorParams, seed: u64) -> Result<Vec<SemanticMap>> {
    if count > 0 && scenes.is_empty() {
        return Err(Error::EmptySceneList);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut maps = Vec::with_capacity(count);
    for i in 0..count {
        let scene = &scenes[i % scenes.len()];
        let mut map = SemanticMap::new(scene.dims());
        let stops = rng.gen_range(1..=4);
        for _ in 0..stops {
            let cell = scene.spawn_cells()[rng.gen_range(0..scene.spawn_cells().len())];
            for heading in [Heading::East, Heading::South, Heading::West, Heading::North] {
                for pitch in [Pitch::Down, Pitch::Level, Pitch::Up] {
                    let pose = Pose { pitch, ..Pose::new(cell, heading) };
                    map.project(&observe(scene, &pose, sensor)?)?;
                }
            }
        }
        maps.push(map);
    }
    Ok(maps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Dims;
    use crate::policy::Hyper;
    use crate::priors::derive_prior_graph;
    use crate::scene::{generate_scene, GenParams};

    fn one_room() -> Vec<Scene> {
        let params = GenParams {
            dims: Dims::new(40, 40),
            rooms: 1,
            ..GenParams::default()
        };
        (0..2).map(|s| generate_scene(50 + s, &params).unwrap()).collect()
    }

    fn settings(epochs: u32) -> TrainSettings {
        TrainSettings {
            epochs,
            episodes_per_epoch: 2,
            seed: 3,
            ..TrainSettings::default()
        }
    }

    fn quick() -> EpisodeConfig {
        EpisodeConfig {
            max_steps: 60,
            ..EpisodeConfig::default()
        }
    }

    #[test]
    fn trace_has_one_row_per_epoch_and_zero_epochs_is_identity() {
        let scenes = one_room();
        let graph = derive_prior_graph(&scenes, 0.2).unwrap();
        let init = Checkpoint::init(Shape::SubGoal, Hyper::default());
        let mut ck = init.clone();
        train_high_level(&mut ck, &scenes, &graph, None, &quick(), &settings(0)).unwrap();
        assert_eq!(ck, init);
        train_high_level(&mut ck, &scenes, &graph, None, &quick(), &settings(3)).unwrap();
        assert_eq!(ck.trace.len(), 3);
        assert_eq!(ck.trace.iter().map(|r| r.epoch).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let scenes = one_room();
        let graph = derive_prior_graph(&scenes, 0.2).unwrap();
        let mut whole = Checkpoint::init(Shape::SubGoal, Hyper::default());
        train_high_level(&mut whole, &scenes, &graph, None, &quick(), &settings(3)).unwrap();
        let mut split = Checkpoint::init(Shape::SubGoal, Hyper::default());
        train_high_level(&mut split, &scenes, &graph, None, &quick(), &settings(1)).unwrap();
        let bytes = split.to_bytes();
        let mut resumed = Checkpoint::from_bytes(&bytes).unwrap();
        train_high_level(&mut resumed, &scenes, &graph, None, &quick(), &settings(2)).unwrap();
        assert_eq!(resumed.to_bytes(), whole.to_bytes());
    }

    #[test]
    fn flat_shape_trains_too() {
        let scenes = one_room();
        let graph = derive_prior_graph(&scenes, 0.2).unwrap();
        let mut ck = Checkpoint::init(Shape::Flat, Hyper::default());
        train_high_level(&mut ck, &scenes, &graph, None, &quick(), &settings(1)).unwrap();
        assert_eq!(ck.epochs_done, 1);
        assert!(ck.policy.actor.iter().any(|&w| w != 0.0));
    }
}
