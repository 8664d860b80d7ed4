//! Run configuration: one document covering paths, simulation, comms,
//! policy, suite, training and scene generation. TOML or JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::comms::CodecVariant;
use crate::error::{Error, Result};
use crate::eval::benchmark::{TargetSplit, MAX_AGENTS};
use crate::eval::episode::EpisodeConfig;
use crate::perception::{NoiseParams, SensorParams};
use crate::policy::{Hyper, PolicyKind, Variant};
use crate::scene::GenParams;

/// Environment variable that replaces `seed`.
pub const SEED_ENV: &str = "SEMNAV_SEED";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub simulation: SimulationConfig,
    pub comms: CommsConfig,
    pub policy: PolicyConfig,
    pub suite: SuiteConfig,
    pub train: TrainConfig,
    pub scenes: GenParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub scenes_dir: PathBuf,
    /// Scenes used by `train` and for deriving the prior graph; defaults to `scenes_dir`.
    pub train_scenes_dir: Option<PathBuf>,
    /// Prior graph file; derived from the training scenes when absent.
    pub prior_graph: Option<PathBuf>,
    /// Checkpoint read by `eval` and written by `train`.
    pub checkpoint: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            scenes_dir: "scenes".into(),
            train_scenes_dir: None,
            prior_graph: None,
            checkpoint: None,
            output_dir: "out".into(),
        }
    }
}

impl PathsConfig {
    pub fn train_scenes(&self) -> &Path {
        self.train_scenes_dir.as_deref().unwrap_or(&self.scenes_dir)
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.output_dir.join("checkpoint.bin"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub max_steps: usize,
    pub sensor: SensorParams,
    pub noise: NoiseParams,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            max_steps: 500,
            sensor: SensorParams::default(),
            noise: NoiseParams::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommsConfig {
    pub enabled: bool,
    pub codec: CodecVariant,
    /// Values per map message.
    pub budget: usize,
    /// Per-round cap on map values sent by the whole team.
    pub bandwidth_cap: Option<u64>,
    /// Pooling factor of the learned codec.
    pub pool: usize,
    pub codec_epochs: usize,
    pub codec_lr: f64,
    /// Maps collected from the training scenes to fit the learned codec.
    pub codec_maps: usize,
}

impl Default for CommsConfig {
    fn default() -> Self {
        CommsConfig {
            enabled: true,
            codec: CodecVariant::Quantized,
            budget: 256,
            bandwidth_cap: None,
            pool: 8,
            codec_epochs: 500,
            codec_lr: 0.1,
            codec_maps: 64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub variant: PolicyKind,
    pub central: bool,
    pub priors: bool,
    /// Learned policy emits primitive actions, no sub-goals.
    pub flat: bool,
    #[serde(flatten)]
    pub hyper: Hyper,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            variant: PolicyKind::Greedy,
            central: false,
            priors: true,
            flat: false,
            hyper: Hyper::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub n: Vec<usize>,
    pub m: Vec<usize>,
    pub seeds: Vec<u64>,
    pub tasks_per_scene: usize,
    pub split: TargetSplit,
    /// Variant labels such as `greedy` or `central-greedy`; empty means the
    /// one described by `[policy]` and `[comms]`.
    pub variants: Vec<String>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            n: vec![1, 2, 3],
            m: vec![1, 2, 3],
            seeds: vec![0],
            tasks_per_scene: 10,
            split: TargetSplit::All,
            variants: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: u32,
    pub episodes_per_epoch: usize,
    pub agents: usize,
    pub targets: usize,
    /// Draw training targets from the known split only.
    pub known_targets_only: bool,
    /// Edge threshold when the prior graph is derived from scenes.
    pub prior_min_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            episodes_per_epoch: 8,
            agents: 1,
            targets: 1,
            known_targets_only: true,
            prior_min_weight: 0.25,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Toml,
    Json,
}

impl Format {
    /// JSON for `.json`, TOML otherwise.
    pub fn of(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Toml,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, format: Format) -> Result<RunConfig> {
        match format {
            Format::Json => serde_json::from_str(text).map_err(|e| Error::json("config", &e)),
            Format::Toml => toml::from_str(text).map_err(|e| {
                let (line, column) = e
                    .span()
                    .map(|s| line_col(text, s.start))
                    .unwrap_or((0, 0));
                Error::Parse {
                    context: "config".into(),
                    line,
                    column,
                    message: e.message().to_string(),
                }
            }),
        }
    }

    /// Reads a config file, applies `SEMNAV_SEED` and validates.
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::parse(&text, Format::of(path))?;
        cfg.apply_env()?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults plus `SEMNAV_SEED`, validated.
    pub fn from_defaults() -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        cfg.apply_env()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::validation(SEED_ENV, format!("`{v}` is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn dump(&self, format: Format) -> String {
        match format {
            Format::Toml => self.to_toml(),
            Format::Json => self.to_json(),
        }
    }

    /// Range checks, each error naming its field, plus existence of the
    /// prior graph file when one is given.
    pub fn validate(&self) -> Result<()> {
        let sim = &self.simulation;
        if sim.max_steps == 0 {
            return Err(Error::validation("simulation.max_steps", "must be at least 1"));
        }
        sim.sensor.validate()?;
        sim.noise.validate()?;
        let c = &self.comms;
        if c.budget == 0 {
            return Err(Error::validation("comms.budget", "must be positive"));
        }
        if c.pool == 0 {
            return Err(Error::validation("comms.pool", "must be positive"));
        }
        if !(c.codec_lr > 0.0 && c.codec_lr.is_finite()) {
            return Err(Error::validation("comms.codec_lr", "must be positive"));
        }
        self.policy.hyper.validate()?;
        if self.policy.flat && self.policy.variant != PolicyKind::Learned {
            return Err(Error::validation("policy.flat", "applies to the learned policy only"));
        }
        let s = &self.suite;
        if s.n.is_empty() || s.n.iter().any(|n| !(1..=MAX_AGENTS).contains(n)) {
            return Err(Error::validation("suite.n", "values must be in 1..=5"));
        }
        if s.m.is_empty() || s.m.iter().any(|m| !(1..=5).contains(m)) {
            return Err(Error::validation("suite.m", "values must be in 1..=5"));
        }
        if s.seeds.is_empty() {
            return Err(Error::validation("suite.seeds", "at least one seed is required"));
        }
        for label in &s.variants {
            Variant::parse(label).map_err(|e| match e {
                Error::Validation { message, .. } => Error::validation("suite.variants", message),
                other => other,
            })?;
        }
        let t = &self.train;
        if t.episodes_per_epoch == 0 {
            return Err(Error::validation("train.episodes_per_epoch", "must be positive"));
        }
        if !(1..=MAX_AGENTS).contains(&t.agents) {
            return Err(Error::validation("train.agents", "must be in 1..=5"));
        }
        if !(1..=5).contains(&t.targets) {
            return Err(Error::validation("train.targets", "must be in 1..=5"));
        }
        if !(0.0..=1.0).contains(&t.prior_min_weight) {
            return Err(Error::validation("train.prior_min_weight", "must be in [0, 1]"));
        }
        self.scenes.validate().map_err(|e| match e {
            Error::Validation { field, message } => Error::validation(&format!("scenes.{field}"), message),
            other => other,
        })?;
        if let Some(p) = &self.paths.prior_graph {
            if !p.is_file() {
                return Err(Error::validation(
                    "paths.prior_graph",
                    format!("{} does not exist", p.display()),
                ));
            }
        }
        Ok(())
    }

    /// The variant described by the policy and comms sections.
    pub fn variant(&self) -> Variant {
        let p = &self.policy;
        Variant {
            kind: p.variant,
            central: p.central,
            comms: self.comms.enabled,
            priors: p.priors,
            flat: p.flat,
        }
    }

    /// Variants the suite evaluates.
    pub fn suite_variants(&self) -> Result<Vec<Variant>> {
        if self.suite.variants.is_empty() {
            return Ok(vec![self.variant()]);
        }
        self.suite.variants.iter().map(|l| Variant::parse(l)).collect()
    }

    pub fn episode(&self) -> EpisodeConfig {
        EpisodeConfig {
            max_steps: self.simulation.max_steps,
            sensor: self.simulation.sensor,
            noise: self.simulation.noise,
            variant: self.variant(),
            hyper: self.policy.hyper,
            bandwidth_cap: self.comms.bandwidth_cap,
            record_trace: false,
        }
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map(|p| p + 1).unwrap_or(0) + 1;
    (line, col)
}
