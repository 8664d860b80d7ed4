//! The `semnav` command line: `gen-scenes`, `train`, `eval` and `replay`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::category::known_target_categories;
use crate::comms::{train_learned_codec, Codec, CodecVariant};
use crate::config::{Format, RunConfig};
use crate::error::{Error, Result};
use crate::eval::benchmark::{format_summary, record_name, run_benchmark, Models, Report, SceneSource, Suite};
use crate::policy::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CodecState};
use crate::policy::learner::Shape;
use crate::policy::train::{exploration_maps, train_high_level, TrainSettings};
use crate::policy::PolicyKind;
use crate::priors::{derive_prior_graph, load_prior_graph, save_prior_graph, PriorGraph};
use crate::replay::{svg_frames, text_frames, EpisodeRecord};
use crate::scene::{generate_scene, load_scene, save_scene, Scene};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Name of the scene manifest written next to generated scenes.
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "semnav", version, about = "Multi-agent semantic navigation simulator")]
pub struct Cli {
    /// Run configuration (TOML, or JSON by extension).
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed and SEMNAV_SEED.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate scene files and print their manifest.
    GenScenes(GenArgs),
    /// Train the learned policy (and the learned codec when selected).
    Train(TrainArgs),
    /// Run the benchmark suite and print SR/SPL/EI per variant and team size.
    Eval(EvalArgs),
    /// Render an episode record as text or SVG frames.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub count: usize,
    /// Directory for the scene files; defaults to `paths.scenes_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub rooms: Option<usize>,
    #[arg(long)]
    pub density: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct Ablations {
    /// Policy: learned, greedy, random or random-subgoal.
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long)]
    pub no_comm: bool,
    #[arg(long)]
    pub no_priors: bool,
    /// Learned policy picks primitive actions directly.
    #[arg(long)]
    pub flat_policy: bool,
    /// One shared map and planner for the whole team.
    #[arg(long)]
    pub central: bool,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

impl Ablations {
    fn any(&self) -> bool {
        self.policy.is_some() || self.no_comm || self.no_priors || self.flat_policy || self.central
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub ablations: Ablations,
    #[arg(long)]
    pub epochs: Option<u32>,
    /// Continue from the existing checkpoint.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub ablations: Ablations,
    #[arg(long)]
    pub scenes_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Write one replay record per episode into this directory.
    #[arg(long)]
    pub record_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReplayFormat {
    Text,
    Svg,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub record: PathBuf,
    #[arg(long, value_enum, default_value_t = ReplayFormat::Text)]
    pub format: ReplayFormat,
    /// Text: output file (stdout when absent). SVG: output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenScenes(a) => {
            let cfg = effective_config(cli, |cfg| {
                if let Some(l) = a.length {
                    cfg.scenes.dims.l = l;
                }
                if let Some(w) = a.width {
                    cfg.scenes.dims.w = w;
                }
                if let Some(r) = a.rooms {
                    cfg.scenes.rooms = r;
                }
                if let Some(d) = a.density {
                    cfg.scenes.object_density = d;
                }
                if let Some(o) = &a.out {
                    cfg.paths.scenes_dir = o.clone();
                }
                Ok(())
            })?;
            let manifest = gen_scenes(&cfg, a.count)?;
            say(&format!("{}\n", serde_json::to_string_pretty(&manifest).expect("manifest serializes")));
            Ok(())
        }
        Command::Train(a) => {
            let cfg = effective_config(cli, |cfg| {
                apply_ablations(cfg, &a.ablations)?;
                if let Some(e) = a.epochs {
                    cfg.train.epochs = e;
                }
                Ok(())
            })?;
            let ck = train(&cfg, a.resume)?;
            if let Some(last) = ck.trace.last() {
                say(&format!(
                    "epoch {}: mean return {:.3}, success {:.3}\n",
                    last.epoch, last.mean_return, last.success_rate
                ));
            }
            say(&format!("checkpoint: {}\n", cfg.paths.checkpoint_path().display()));
            Ok(())
        }
        Command::Eval(a) => {
            let cfg = effective_config(cli, |cfg| {
                apply_ablations(cfg, &a.ablations)?;
                if let Some(d) = &a.scenes_dir {
                    cfg.paths.scenes_dir = d.clone();
                }
                Ok(())
            })?;
            let report = eval(&cfg, a.workers, a.record_dir.as_deref())?;
            say(&format_summary(&report.summary()));
            Ok(())
        }
        Command::Replay(a) => {
            let frames = replay(&a.record, a.format, a.out.as_deref())?;
            if a.out.is_some() {
                say(&format!("{frames} frames\n"));
            }
            Ok(())
        }
    }
}

/// Config file (or defaults), then `SEMNAV_SEED`, then flags; validated.
fn effective_config(cli: &Cli, tweak: impl FnOnce(&mut RunConfig) -> Result<()>) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::from_defaults()?,
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.output_dir {
        cfg.paths.output_dir = o.clone();
    }
    tweak(&mut cfg)?;
    cfg.validate()?;
    Ok(cfg)
}

fn apply_ablations(cfg: &mut RunConfig, a: &Ablations) -> Result<()> {
    if a.any() {
        cfg.suite.variants.clear();
    }
    if let Some(p) = &a.policy {
        cfg.policy.variant = PolicyKind::parse(p)?;
    }
    if a.no_comm {
        cfg.comms.enabled = false;
    }
    if a.no_priors {
        cfg.policy.priors = false;
    }
    if a.flat_policy {
        cfg.policy.flat = true;
        if a.policy.is_none() {
            cfg.policy.variant = PolicyKind::Learned;
        }
    }
    if a.central {
        cfg.policy.central = true;
    }
    if let Some(c) = &a.checkpoint {
        cfg.paths.checkpoint = Some(c.clone());
    }
    Ok(())
}

/// Prints to stdout; a closed pipe is not an error.
fn say(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes the effective config next to the outputs it produced.
fn dump_config(cfg: &RunConfig) -> Result<()> {
    create_dir(&cfg.paths.output_dir)?;
    write(&cfg.paths.output_dir.join("effective_config.toml"), cfg.dump(Format::Toml))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub id: String,
    pub seed: u64,
    pub dims: [usize; 2],
    pub objects: usize,
    pub categories: usize,
}

/// Seed for scene `i` of a batch.
fn scene_seed(seed: u64, i: usize, attempt: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((i as u64) << 8)
        .wrapping_add(attempt)
}

/// Writes `scene_<seed>_<i>.json` for `i < count` plus the manifest.
pub fn gen_scenes(cfg: &RunConfig, count: usize) -> Result<Vec<ManifestEntry>> {
    let dir = &cfg.paths.scenes_dir;
    create_dir(dir)?;
    let mut manifest = Vec::with_capacity(count);
    for i in 0..count {
        let mut last = None;
        let mut made = None;
        for attempt in 0..8 {
            let s = scene_seed(cfg.seed, i, attempt);
            match generate_scene(s, &cfg.scenes) {
                Ok(scene) => {
                    made = Some((s, scene));
                    break;
                }
                Err(e @ Error::GenerationFailure(_)) => last = Some(e),
                Err(e) => return Err(e),
            }
        }
        let Some((s, scene)) = made else {
            return Err(last.expect("at least one attempt"));
        };
        let id = format!("scene_{}_{}", cfg.seed, i);
        let scene = scene.with_id(id.clone());
        let file = format!("{id}.json");
        save_scene(&scene, dir.join(&file))?;
        manifest.push(ManifestEntry {
            file,
            id,
            seed: s,
            dims: [scene.dims().l, scene.dims().w],
            objects: scene.objects().len(),
            categories: scene.categories().len(),
        });
    }
    write(
        &dir.join(MANIFEST),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    Ok(manifest)
}

/// Scene files of a directory in name order, the manifest excluded.
pub fn scene_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::validation("paths.scenes_dir", format!("{} is not a directory", dir.display())));
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_json = path.extension().is_some_and(|e| e == "json");
        if is_json && path.file_name().is_some_and(|n| n != MANIFEST) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn load_scenes(dir: &Path) -> Result<Vec<Scene>> {
    scene_files(dir)?.iter().map(load_scene).collect()
}

/// The prior graph file when configured, else one derived from the training scenes.
pub fn prior_graph(cfg: &RunConfig) -> Result<PriorGraph> {
    match &cfg.paths.prior_graph {
        Some(p) => load_prior_graph(p),
        None => {
            let scenes = load_scenes(cfg.paths.train_scenes())?;
            if scenes.is_empty() {
                return Ok(PriorGraph::empty());
            }
            derive_prior_graph(&scenes, cfg.train.prior_min_weight)
        }
    }
}

/// Trains (or resumes) the policy and, for the learned codec, the codec.
/// Writes the checkpoint, `train_trace.csv`, `codec_trace.csv` and the prior graph.
pub fn train(cfg: &RunConfig, resume: bool) -> Result<Checkpoint> {
    let scenes = load_scenes(cfg.paths.train_scenes())?;
    if scenes.is_empty() {
        return Err(Error::validation(
            "paths.train_scenes_dir",
            format!("no scene files in {}", cfg.paths.train_scenes().display()),
        ));
    }
    let ck_path = cfg.paths.checkpoint_path();
    let shape = if cfg.policy.flat { Shape::Flat } else { Shape::SubGoal };
    let mut ck = if resume {
        if !ck_path.is_file() {
            return Err(Error::validation(
                "paths.checkpoint",
                format!("cannot resume: {} does not exist", ck_path.display()),
            ));
        }
        let ck = load_checkpoint(&ck_path)?;
        if ck.policy.shape != shape {
            return Err(Error::ConfigInconsistency("checkpoint shape does not match policy.flat".into()));
        }
        ck
    } else {
        Checkpoint::init(shape, cfg.policy.hyper)
    };
    create_dir(&cfg.paths.output_dir)?;
    let graph = prior_graph(cfg)?;
    save_prior_graph(&graph, cfg.paths.output_dir.join("prior_graph.json"))?;

    let dims = scenes[0].dims();
    if cfg.comms.codec == CodecVariant::Learned && ck.codec.is_none() {
        let init = Codec::learned(dims, cfg.comms.budget, cfg.comms.pool, cfg.seed)?;
        let same: Vec<Scene> = scenes.iter().filter(|s| s.dims() == dims).cloned().collect();
        let maps = exploration_maps(&same, cfg.comms.codec_maps, &cfg.simulation.sensor, cfg.seed)?;
        let fit = train_learned_codec(&init, &maps, cfg.comms.codec_epochs, cfg.comms.codec_lr)?;
        ck.codec = Some(CodecState {
            dims,
            params: fit.codec.learned_params().expect("learned codec").clone(),
            loss_trace: fit.loss_trace,
        });
    }
    let codec = match (&ck.codec, cfg.comms.codec) {
        (Some(state), CodecVariant::Learned) => Some(state.codec()?),
        _ => Some(Codec::quantized(dims, cfg.comms.budget)?),
    };
    let settings = TrainSettings {
        epochs: cfg.train.epochs,
        episodes_per_epoch: cfg.train.episodes_per_epoch,
        agents: cfg.train.agents,
        targets: cfg.train.targets,
        seed: cfg.seed,
        allowed_targets: cfg.train.known_targets_only.then(known_target_categories),
    };
    let codec = codec.filter(|_| cfg.train.agents > 1);
    let result = train_high_level(&mut ck, &scenes, &graph, codec.as_ref(), &cfg.episode(), &settings);
    // Keep completed epochs even when a later one diverged.
    save_checkpoint(&ck, &ck_path)?;
    write_traces(cfg, &ck)?;
    dump_config(cfg)?;
    result?;
    Ok(ck)
}

fn write_traces(cfg: &RunConfig, ck: &Checkpoint) -> Result<()> {
    let mut s = String::from("epoch,episodes,mean_return,success_rate,loss\n");
    for r in &ck.trace {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch, r.episodes, r.mean_return, r.success_rate, r.loss
        ));
    }
    write(&cfg.paths.output_dir.join("train_trace.csv"), s)?;
    if let Some(c) = &ck.codec {
        let mut s = String::from("epoch,loss\n");
        for (i, l) in c.loss_trace.iter().enumerate() {
            s.push_str(&format!("{i},{l}\n"));
        }
        write(&cfg.paths.output_dir.join("codec_trace.csv"), s)?;
    }
    Ok(())
}

/// Runs the configured suite; writes `report.csv`, `summary.txt` and,
/// with `record_dir`, one replay record per episode.
pub fn eval(cfg: &RunConfig, workers: usize, record_dir: Option<&Path>) -> Result<Report> {
    let files = scene_files(&cfg.paths.scenes_dir)?;
    if files.is_empty() {
        return Err(Error::validation(
            "paths.scenes_dir",
            format!("no scene files in {}", cfg.paths.scenes_dir.display()),
        ));
    }
    let variants = cfg.suite_variants()?;
    let needs_model = variants.iter().any(|v| v.kind == PolicyKind::Learned);
    let needs_codec = variants.iter().any(|v| v.comms && !v.central) && cfg.suite.n.iter().any(|&n| n > 1);
    let ck_path = cfg.paths.checkpoint_path();
    let ck = if needs_model || (needs_codec && cfg.comms.codec == CodecVariant::Learned) {
        if !ck_path.is_file() {
            return Err(Error::validation(
                "paths.checkpoint",
                format!(
                    "{} does not exist; the learned policy and codec need one (run `semnav train` or set paths.checkpoint)",
                    ck_path.display()
                ),
            ));
        }
        Some(load_checkpoint(&ck_path)?)
    } else {
        None
    };
    let codec = if !needs_codec {
        None
    } else if cfg.comms.codec == CodecVariant::Learned {
        let state = ck.as_ref().and_then(|c| c.codec.as_ref()).ok_or_else(|| {
            Error::validation("comms.codec", "checkpoint has no learned codec; train with comms.codec = \"learned\"")
        })?;
        Some(state.codec()?)
    } else {
        let first = load_scene(&files[0])?;
        Some(Codec::quantized(first.dims(), cfg.comms.budget)?)
    };
    let graph = prior_graph(cfg)?;
    let mut episode = cfg.episode();
    episode.record_trace = record_dir.is_some();
    let suite = Suite {
        scenes: files.into_iter().map(SceneSource::File).collect(),
        tasks_per_scene: cfg.suite.tasks_per_scene,
        m_values: cfg.suite.m.clone(),
        n_values: cfg.suite.n.clone(),
        variants,
        seeds: cfg.suite.seeds.clone(),
        task_seed: cfg.seed,
        split: cfg.suite.split,
        episode,
    };
    let models = Models {
        graph: &graph,
        codec: codec.as_ref(),
        model: ck.as_ref().map(|c| &c.policy),
    };
    let report = run_benchmark(&suite, models, workers)?;
    create_dir(&cfg.paths.output_dir)?;
    write(&cfg.paths.output_dir.join("report.csv"), report.to_csv()?)?;
    write(&cfg.paths.output_dir.join("summary.txt"), format_summary(&report.summary()))?;
    dump_config(cfg)?;
    if let Some(dir) = record_dir {
        create_dir(dir)?;
        for rec in &report.records {
            write(&dir.join(record_name(rec)), rec.to_json())?;
        }
    }
    Ok(report)
}

/// Renders a record; returns the number of frames.
pub fn replay(record: &Path, format: ReplayFormat, out: Option<&Path>) -> Result<usize> {
    let rec = EpisodeRecord::load(record)?;
    match format {
        ReplayFormat::Text => {
            let frames = text_frames(&rec)?;
            let text = frames.join("\n");
            match out {
                Some(p) => write(p, text)?,
                None => say(&text),
            }
            Ok(frames.len())
        }
        ReplayFormat::Svg => {
            let dir = out.ok_or_else(|| Error::validation("--out", "SVG replay needs an output directory"))?;
            create_dir(dir)?;
            let frames = svg_frames(&rec)?;
            for (i, svg) in frames.iter().enumerate() {
                write(&dir.join(format!("frame_{i:04}.svg")), svg)?;
            }
            Ok(frames.len())
        }
    }
}
