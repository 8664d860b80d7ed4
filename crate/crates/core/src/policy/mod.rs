//! Feature fusion, sub-goal selection, low-level planning and the per-agent
//! controller, plus policy-gradient training of the learned variants.

pub mod agent;
pub mod checkpoint;
pub mod features;
pub mod learner;
pub mod planner;
pub mod reward;
pub mod subgoal;
pub mod train;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    MoveAhead,
    RotateLeft,
    RotateRight,
    LookUp,
    LookDown,
    Found,
    Done,
}

impl Action {
    pub const ALL: [Action; 7] = [
        Action::MoveAhead,
        Action::RotateLeft,
        Action::RotateRight,
        Action::LookUp,
        Action::LookDown,
        Action::Found,
        Action::Done,
    ];

    /// Movement and view actions, the choice set of the flat policy.
    pub const MOTION: [Action; 5] = [
        Action::MoveAhead,
        Action::RotateLeft,
        Action::RotateRight,
        Action::LookUp,
        Action::LookDown,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::MoveAhead => "MoveAhead",
            Action::RotateLeft => "RotateLeft",
            Action::RotateRight => "RotateRight",
            Action::LookUp => "LookUp",
            Action::LookDown => "LookDown",
            Action::Found => "Found",
            Action::Done => "Done",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How sub-goals (or, for `Random`, primitive actions) are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Learned,
    Greedy,
    /// Uniform over the seven primitive actions.
    Random,
    /// Uniform over reachable explored cells as sub-goals.
    RandomSubgoal,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Learned => "learned",
            PolicyKind::Greedy => "greedy",
            PolicyKind::Random => "random",
            PolicyKind::RandomSubgoal => "random-subgoal",
        }
    }

    pub fn parse(s: &str) -> Result<PolicyKind> {
        match s {
            "learned" => Ok(PolicyKind::Learned),
            "greedy" => Ok(PolicyKind::Greedy),
            "random" => Ok(PolicyKind::Random),
            "random-subgoal" => Ok(PolicyKind::RandomSubgoal),
            other => Err(Error::validation("policy.variant", format!("unknown policy `{other}`"))),
        }
    }
}

/// A policy plus the ablation switches it runs under.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Variant {
    pub kind: PolicyKind,
    pub central: bool,
    pub comms: bool,
    pub priors: bool,
    /// Learned policy emits primitive actions directly, without sub-goals.
    pub flat: bool,
}

impl Variant {
    pub fn new(kind: PolicyKind) -> Variant {
        Variant {
            kind,
            central: false,
            comms: true,
            priors: true,
            flat: false,
        }
    }

    pub fn central(self) -> Variant {
        Variant { central: true, ..self }
    }

    pub fn no_comm(self) -> Variant {
        Variant { comms: false, ..self }
    }

    pub fn no_priors(self) -> Variant {
        Variant { priors: false, ..self }
    }

    pub fn flat(self) -> Variant {
        Variant { flat: true, ..self }
    }

    /// Short label such as `greedy`, `central-greedy` or `learned/no-comm`.
    pub fn label(&self) -> String {
        let mut s = String::new();
        if self.central {
            s.push_str("central-");
        }
        s.push_str(self.kind.name());
        if !self.comms && !self.central {
            s.push_str("/no-comm");
        }
        if !self.priors {
            s.push_str("/no-priors");
        }
        if self.flat {
            s.push_str("/flat");
        }
        s
    }

    pub fn parse(label: &str) -> Result<Variant> {
        let (central, rest) = match label.strip_prefix("central-") {
            Some(r) => (true, r),
            None => (false, label),
        };
        let mut parts = rest.split('/');
        let mut v = Variant::new(PolicyKind::parse(parts.next().unwrap_or(""))?);
        v.central = central;
        for p in parts {
            match p {
                "no-comm" => v.comms = false,
                "no-priors" => v.priors = false,
                "flat" => v.flat = true,
                other => {
                    return Err(Error::validation("variant", format!("unknown modifier `{other}`")))
                }
            }
        }
        if v.flat && v.kind != PolicyKind::Learned {
            return Err(Error::validation("variant", "flat applies to the learned policy only"));
        }
        Ok(v)
    }

    pub fn hierarchical(&self) -> bool {
        !self.flat && self.kind != PolicyKind::Random
    }
}

/// Hyperparameters of the decision stack.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyper {
    /// Pooling resolution of the sub-goal grid.
    pub p: usize,
    /// Low-level steps between sub-goal decisions.
    pub d: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lr: f64,
    pub clip: f64,
    pub update_epochs: usize,
    pub minibatch: usize,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            p: 16,
            d: 10,
            alpha: 0.7,
            beta: 0.3,
            gamma: 0.99,
            lr: 1e-4,
            clip: 0.2,
            update_epochs: 10,
            minibatch: 8,
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::validation("policy.p", "must be at least 1"));
        }
        if self.d == 0 {
            return Err(Error::validation("policy.d", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::validation("policy.gamma", "must be in [0, 1]"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::validation("policy.lr", "must be positive"));
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(Error::validation("policy.clip", "must be in (0, 1)"));
        }
        if !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(Error::validation("policy.alpha", "weights must be finite"));
        }
        if self.minibatch == 0 {
            return Err(Error::validation("policy.minibatch", "must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip() {
        for label in [
            "greedy",
            "central-greedy",
            "greedy/no-comm",
            "greedy/no-priors",
            "learned/flat",
            "random",
            "random-subgoal",
        ] {
            assert_eq!(Variant::parse(label).unwrap().label(), label);
        }
        assert!(Variant::parse("greedy/flat").is_err());
        assert!(Variant::parse("smart").is_err());
    }
}
