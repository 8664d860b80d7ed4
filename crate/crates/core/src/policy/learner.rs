//! Log-linear actor, linear critic, Adam and the clipped-surrogate update.
//!
//! A decision offers `n` choices, each described by a row of features; the
//! actor scores a row with a shared coefficient vector and samples from the
//! masked softmax. The critic is linear in its own input vector.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::features::BLOCK_FEATURES;
use super::{Action, Hyper};

/// Inputs of the flat policy's per-step summary.
pub const FLAT_X: usize = 11;
/// Critic input: mean block features, pose, last action, bias.
pub const SUBGOAL_CRITIC: usize = BLOCK_FEATURES + 4 + 7 + 2;
/// Critic input: step summary, last action.
pub const FLAT_CRITIC: usize = FLAT_X + 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    SubGoal,
    Flat,
}

impl Shape {
    pub fn actor_len(self) -> usize {
        match self {
            Shape::SubGoal => BLOCK_FEATURES,
            Shape::Flat => Action::MOTION.len() * FLAT_X,
        }
    }

    pub fn critic_len(self) -> usize {
        match self {
            Shape::SubGoal => SUBGOAL_CRITIC,
            Shape::Flat => FLAT_CRITIC,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Shape::SubGoal => 0,
            Shape::Flat => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Shape> {
        match code {
            0 => Some(Shape::SubGoal),
            1 => Some(Shape::Flat),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearPolicy {
    pub shape: Shape,
    pub actor: Vec<f64>,
    pub critic: Vec<f64>,
}

/// Expands a step summary into one row per motion action (one-hot outer
/// product), so a single coefficient vector holds a table per action.
pub fn flat_rows(x: &[f64]) -> Vec<f64> {
    let n = Action::MOTION.len();
    let mut rows = vec![0.0; n * n * FLAT_X];
    for a in 0..n {
        let base = a * n * FLAT_X + a * FLAT_X;
        rows[base..base + FLAT_X].copy_from_slice(x);
    }
    rows
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl LinearPolicy {
    /// All-zero coefficients: the actor starts uniform over valid choices.
    pub fn new(shape: Shape) -> LinearPolicy {
        LinearPolicy {
            shape,
            actor: vec![0.0; shape.actor_len()],
            critic: vec![0.0; shape.critic_len()],
        }
    }

    pub fn logits(&self, rows: &[f64], mask: &[bool]) -> Vec<f64> {
        let d = self.actor.len();
        mask.iter()
            .enumerate()
            .map(|(j, &ok)| {
                if ok {
                    dot(&self.actor, &rows[j * d..(j + 1) * d])
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect()
    }

    pub fn probs(&self, rows: &[f64], mask: &[bool]) -> Vec<f64> {
        softmax(&self.logits(rows, mask))
    }

    /// Samples a choice; returns it with its log-probability.
    pub fn sample<R: Rng>(&self, rows: &[f64], mask: &[bool], rng: &mut R) -> Result<(usize, f64)> {
        let p = self.probs(rows, mask);
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence("non-finite action probabilities".into()));
        }
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last = None;
        for (j, &pj) in p.iter().enumerate() {
            if pj <= 0.0 {
                continue;
            }
            last = Some(j);
            acc += pj;
            if u < acc {
                return Ok((j, pj.ln()));
            }
        }
        // Rounding left a sliver above the cumulative sum.
        last.map(|j| (j, p[j].ln())).ok_or(Error::NoCandidate)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        dot(&self.critic, x)
    }
}

/// Softmax that tolerates `-inf` entries; all-masked input gives all zeros.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return vec![0.0; logits.len()];
    }
    let e: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// One recorded decision of a learned agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub rows: Vec<f64>,
    pub mask: Vec<bool>,
    pub chosen: usize,
    pub logp: f64,
    pub critic_in: Vec<f64>,
    pub value: f64,
    pub reward: f64,
}

/// Discounted returns `G_t` and advantages `G_t - V_t` of one trajectory.
pub fn returns_and_advantages(rewards: &[f64], values: &[f64], gamma: f64) -> (Vec<f64>, Vec<f64>) {
    let mut g = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        g[t] = acc;
    }
    let adv = g.iter().zip(values).map(|(g, v)| g - v).collect();
    (g, adv)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    pub fn new(n: usize) -> Adam {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Descent step along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let b1t = 1.0 - BETA1.powi(self.t as i32);
        let b2t = 1.0 - BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * grad[i];
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * grad[i] * grad[i];
            let mh = self.m[i] / b1t;
            let vh = self.v[i] / b2t;
            params[i] -= lr * mh / (vh.sqrt() + ADAM_EPS);
        }
    }
}

/// Training sample: a decision with its return and advantage.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub decision: Decision,
    pub ret: f64,
    pub adv: f64,
}

/// Gradients of the clipped surrogate (to be maximised, returned negated for
/// descent) and of the squared critic error over a batch.
pub fn ppo_gradients(policy: &LinearPolicy, batch: &[&Sample], clip: f64) -> (Vec<f64>, Vec<f64>, f64) {
    let da = policy.actor.len();
    let mut ga = vec![0.0; da];
    let mut gc = vec![0.0; policy.critic.len()];
    let mut loss = 0.0;
    let n = batch.len().max(1) as f64;
    for s in batch {
        let d = &s.decision;
        let p = policy.probs(&d.rows, &d.mask);
        let logp = p[d.chosen].ln();
        let ratio = (logp - d.logp).exp();
        let unclipped = ratio * s.adv;
        let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * s.adv;
        loss -= unclipped.min(clipped);
        // The gradient vanishes where the clipped branch is the active minimum.
        if unclipped <= clipped {
            // d logp / d theta = phi_chosen - E_p[phi]
            let row = |j: usize| &d.rows[j * da..(j + 1) * da];
            let coef = s.adv * ratio;
            for (i, g) in ga.iter_mut().enumerate() {
                let mut e = 0.0;
                for (j, &pj) in p.iter().enumerate() {
                    if pj > 0.0 {
                        e += pj * row(j)[i];
                    }
                }
                *g -= coef * (row(d.chosen)[i] - e) / n;
            }
        }
        let err = policy.value(&d.critic_in) - s.ret;
        loss += err * err;
        for (g, x) in gc.iter_mut().zip(&d.critic_in) {
            *g += 2.0 * err * x / n;
        }
    }
    (ga, gc, loss / n)
}

/// Advantages shifted and scaled to zero mean and unit spread; a constant
/// batch becomes all zeros.
pub fn normalize_advantages(samples: &mut [Sample]) {
    if samples.is_empty() {
        return;
    }
    let n = samples.len() as f64;
    let mean = samples.iter().map(|s| s.adv).sum::<f64>() / n;
    let var = samples.iter().map(|s| (s.adv - mean).powi(2)).sum::<f64>() / n;
    let scale = if var > 1e-12 { var.sqrt() } else { 1.0 };
    for s in samples {
        s.adv = (s.adv - mean) / scale;
    }
}

/// Several epochs of shuffled minibatch updates.
pub fn ppo_update<R: Rng>(
    policy: &mut LinearPolicy,
    adam_actor: &mut Adam,
    adam_critic: &mut Adam,
    samples: &[Sample],
    hyper: &Hyper,
    rng: &mut R,
) -> Result<f64> {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut last = 0.0;
    for _ in 0..hyper.update_epochs {
        order.shuffle(rng);
        for chunk in order.chunks(hyper.minibatch) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &samples[i]).collect();
            let (ga, gc, loss) = ppo_gradients(policy, &batch, hyper.clip);
            if !loss.is_finite() || ga.iter().chain(&gc).any(|g| !g.is_finite()) {
                return Err(Error::Divergence(format!("non-finite surrogate loss {loss}")));
            }
            adam_actor.step(&mut policy.actor, &ga, hyper.lr);
            adam_critic.step(&mut policy.critic, &gc, hyper.lr);
            last = loss;
        }
    }
    Ok(last)
}
