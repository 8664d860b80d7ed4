//! Benchmark suites: task generation with oracle makespans, parallel episode
//! runs, the report CSV and the per-(variant, N) summary.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::category::{known_target_categories, CategoryId};
use crate::comms::{Codec, CodecVariant};
use crate::error::{Error, Result};
use crate::perception::Pose;
use crate::policy::learner::LinearPolicy;
use crate::policy::Variant;
use crate::priors::PriorGraph;
use crate::replay::EpisodeRecord;
use crate::scene::{load_scene, sample_task_from, Scene, TaskSpec};

use super::episode::{run_episode, task_label, EpisodeConfig, EpisodeResult, Policies};
use super::metrics::{ei_term, spl_term};
use super::oracle::SceneOracle;

/// Largest team the report has step columns for.
pub const MAX_AGENTS: usize = 5;
/// Attempts per task slot before giving up on finding a solvable task.
const TASK_ATTEMPTS: u64 = 20;

/// Which target categories a suite draws from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetSplit {
    #[default]
    All,
    /// Categories used as training targets.
    Known,
    /// Categories never used as training targets.
    Unknown,
}

/// The (known, unknown) partition of the vocabulary.
pub fn split_categories() -> (Vec<CategoryId>, Vec<CategoryId>) {
    let known = known_target_categories();
    let unknown = CategoryId::all().filter(|c| !known.contains(c)).collect();
    (known, unknown)
}

#[derive(Clone, Debug)]
pub enum SceneSource {
    Loaded(Scene),
    File(PathBuf),
}

impl SceneSource {
    fn label(&self) -> String {
        match self {
            SceneSource::Loaded(s) => s.id().to_string(),
            SceneSource::File(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string()),
        }
    }

    fn load(&self) -> Result<Scene> {
        match self {
            SceneSource::Loaded(s) => Ok(s.clone()),
            SceneSource::File(p) => load_scene(p),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Suite {
    pub scenes: Vec<SceneSource>,
    pub tasks_per_scene: usize,
    /// Target counts, cycled over the task slots of a scene.
    pub m_values: Vec<usize>,
    pub n_values: Vec<usize>,
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    pub task_seed: u64,
    pub split: TargetSplit,
    pub episode: EpisodeConfig,
}

impl Suite {
    pub fn validate(&self) -> Result<()> {
        if self.m_values.is_empty() || self.m_values.iter().any(|m| !(1..=5).contains(m)) {
            return Err(Error::validation("suite.m", "values must be in 1..=5"));
        }
        if self.n_values.is_empty() || self.n_values.iter().any(|n| !(1..=MAX_AGENTS).contains(n)) {
            return Err(Error::validation("suite.n", "values must be in 1..=5"));
        }
        if self.variants.is_empty() {
            return Err(Error::validation("suite.variants", "at least one variant is required"));
        }
        if self.seeds.is_empty() {
            return Err(Error::validation("suite.seeds", "at least one seed is required"));
        }
        Ok(())
    }
}

/// Read-only models shared by every episode.
#[derive(Clone, Copy)]
pub struct Models<'a> {
    pub graph: &'a PriorGraph,
    pub codec: Option<&'a Codec>,
    pub model: Option<&'a LinearPolicy>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub result: EpisodeResult,
    pub spl_term: Option<f64>,
    pub ei_term: Option<f64>,
    /// Diagnostic for a cell that could not be run.
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    /// Replay records, when the suite asked for traces.
    pub records: Vec<EpisodeRecord>,
}

/// File name for a replay record: task, variant, team size and seed.
pub fn record_name(rec: &EpisodeRecord) -> String {
    let r = &rec.result;
    let variant: String = r
        .variant
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect();
    format!("{}__{}__n{}__s{}.json", r.task_id, variant, r.n, r.seed)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryLine {
    pub variant: String,
    pub n: usize,
    pub episodes: usize,
    pub sr: f64,
    pub spl: f64,
    pub ei: Option<f64>,
}

/// A generated task with its oracle makespan for each team size.
struct PreparedTask {
    id: String,
    task: TaskSpec,
    makespans: BTreeMap<usize, Option<u32>>,
}

struct PreparedScene {
    scene: Scene,
    tasks: Vec<PreparedTask>,
}

fn prepare_scene(source: &SceneSource, index: usize, suite: &Suite, allowed: Option<&[CategoryId]>) -> Result<PreparedScene> {
    let scene = source.load()?;
    let oracle = SceneOracle::new(&scene, &suite.episode.sensor)?;
    let n_max = suite.n_values.iter().copied().max().unwrap_or(1);
    let mut tasks = Vec::new();
    for t in 0..suite.tasks_per_scene {
        let m = suite.m_values[t % suite.m_values.len()];
        let mut found = None;
        for attempt in 0..TASK_ATTEMPTS {
            let seed = suite
                .task_seed
                .wrapping_mul(1_000_003)
                .wrapping_add((index as u64) << 32)
                .wrapping_add(t as u64 * TASK_ATTEMPTS + attempt);
            let task = sample_task_from(&scene, m, n_max, seed, allowed)?;
            let mut makespans = BTreeMap::new();
            let mut solvable = true;
            for &n in &suite.n_values {
                let spawns: Vec<_> = task.with_agents(n).agent_spawns.iter().map(|s| Pose::new(s.cell, s.heading)).collect();
                let l = oracle.makespan(&spawns, &task.targets)?;
                solvable &= l.is_some();
                makespans.insert(n, l);
            }
            if !suite.n_values.contains(&1) {
                let l = oracle.makespan(&[Pose::new(task.agent_spawns[0].cell, task.agent_spawns[0].heading)], &task.targets)?;
                solvable &= l.is_some();
            }
            if solvable {
                found = Some(PreparedTask {
                    id: task_label(&task, t),
                    task,
                    makespans,
                });
                break;
            }
        }
        match found {
            Some(p) => tasks.push(p),
            None => {
                return Err(Error::GenerationFailure(format!(
                    "no solvable task for slot {t} of scene {} after {TASK_ATTEMPTS} attempts",
                    scene.id()
                )))
            }
        }
    }
    Ok(PreparedScene { scene, tasks })
}

/// Runs `jobs` closures on `workers` threads; results come back in job order.
fn parallel_map<T: Send, F: Fn(usize) -> T + Sync>(count: usize, workers: usize, f: F) -> Vec<T> {
    let workers = workers.clamp(1, count.max(1));
    if workers == 1 {
        return (0..count).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let out: Mutex<Vec<Option<T>>> = Mutex::new((0..count).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let r = f(i);
                out.lock().expect("worker panicked")[i] = Some(r);
            });
        }
    });
    out.into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

struct Job<'a> {
    scene: &'a Scene,
    prepared: &'a PreparedTask,
    variant: Variant,
    n: usize,
    seed: u64,
    /// Paired single-agent run that is not itself a report row.
    hidden: bool,
}

fn failed_row(task_id: &str, scene_id: &str, variant: &Variant, n: usize, m: usize, seed: u64, err: &Error) -> ReportRow {
    ReportRow {
        result: EpisodeResult {
            task_id: task_id.to_string(),
            scene_id: scene_id.to_string(),
            variant: variant.label(),
            n,
            m,
            seed,
            success: false,
            per_agent_steps: Vec::new(),
            d: 0,
            l: None,
            found_events: Vec::new(),
            bandwidth: Default::default(),
            subgoal_returns: Vec::new(),
        },
        spl_term: None,
        ei_term: None,
        error: Some(err.to_string()),
    }
}

/// Runs every (task, variant, N, seed) cell plus the single-agent runs EI
/// pairs against. Per-cell failures become rows carrying a diagnostic.
pub fn run_benchmark(suite: &Suite, models: Models, workers: usize) -> Result<Report> {
    suite.validate()?;
    let (known, unknown) = split_categories();
    let allowed: Option<&[CategoryId]> = match suite.split {
        TargetSplit::All => None,
        TargetSplit::Known => Some(&known),
        TargetSplit::Unknown => Some(&unknown),
    };
    let prepared: Vec<Result<PreparedScene>> = parallel_map(suite.scenes.len(), workers, |i| {
        prepare_scene(&suite.scenes[i], i, suite, allowed)
    });

    let mut rows = Vec::new();
    let mut records = Vec::new();
    let mut jobs = Vec::new();
    for (source, prep) in suite.scenes.iter().zip(&prepared) {
        let prep = match prep {
            Ok(p) => p,
            Err(e) => {
                let label = source.label();
                for variant in &suite.variants {
                    for &n in &suite.n_values {
                        for &seed in &suite.seeds {
                            rows.push(failed_row(&label, &label, variant, n, 0, seed, e));
                        }
                    }
                }
                continue;
            }
        };
        for pt in &prep.tasks {
            for &variant in &suite.variants {
                let mut ns = suite.n_values.clone();
                let hidden_single = !ns.contains(&1);
                if hidden_single {
                    ns.insert(0, 1);
                }
                for n in ns {
                    for &seed in &suite.seeds {
                        jobs.push(Job {
                            scene: &prep.scene,
                            prepared: pt,
                            variant,
                            n,
                            seed,
                            hidden: hidden_single && n == 1,
                        });
                    }
                }
            }
        }
    }

    let results: Vec<std::result::Result<(EpisodeResult, Option<EpisodeRecord>), Error>> =
        parallel_map(jobs.len(), workers, |i| {
            let job = &jobs[i];
            let mut cfg = suite.episode;
            cfg.variant = job.variant;
            cfg.record_trace = suite.episode.record_trace && !job.hidden;
            // A quantized codec is rebuilt for scenes of other sizes.
            let resized;
            let codec = match models.codec {
                Some(c) if c.dims() != job.scene.dims() && c.variant() == CodecVariant::Quantized => {
                    resized = Codec::quantized(job.scene.dims(), c.budget())?;
                    Some(&resized)
                }
                other => other,
            };
            let policies = Policies {
                graph: models.graph,
                codec,
                model: models.model,
            };
            let task = job.prepared.task.with_agents(job.n);
            let mut out = run_episode(job.scene, &task, &job.prepared.id, policies, &cfg, job.seed)?;
            out.result.l = job.prepared.makespans.get(&job.n).copied().flatten();
            let record = out
                .trace
                .as_ref()
                .map(|t| EpisodeRecord::new(job.scene, &task, &out.result, t));
            Ok((out.result, record))
        });

    let mut singles: BTreeMap<(String, String, u64), EpisodeResult> = BTreeMap::new();
    for (job, r) in jobs.iter().zip(&results) {
        if let (1, Ok((r, _))) = (job.n, r) {
            singles.insert((r.task_id.clone(), r.variant.clone(), r.seed), r.clone());
        }
    }
    for (job, r) in jobs.iter().zip(results) {
        if job.hidden {
            continue;
        }
        match r {
            Ok((result, record)) => {
                if let Some(rec) = record {
                    records.push(rec);
                }
                let spl = match spl_term(&result) {
                    Ok(v) => Some(v),
                    Err(_) => None,
                };
                let ei = if result.n > 1 {
                    singles
                        .get(&(result.task_id.clone(), result.variant.clone(), result.seed))
                        .and_then(|s| ei_term(&result, s))
                } else {
                    None
                };
                rows.push(ReportRow {
                    result,
                    spl_term: spl,
                    ei_term: ei,
                    error: None,
                });
            }
            Err(e) => rows.push(failed_row(
                &job.prepared.id,
                job.scene.id(),
                &job.variant,
                job.n,
                job.prepared.task.targets.len(),
                job.seed,
                &e,
            )),
        }
    }
    records.sort_by(|a, b| record_name(a).cmp(&record_name(b)));
    rows.sort_by(|a, b| {
        let ka = (&a.result.task_id, &a.result.variant, a.result.n, a.result.seed);
        let kb = (&b.result.task_id, &b.result.variant, b.result.n, b.result.seed);
        ka.cmp(&kb)
    });
    Ok(Report { rows, records })
}

pub const CSV_HEADER: [&str; 19] = [
    "task_id",
    "scene_id",
    "variant",
    "N",
    "M",
    "seed",
    "success",
    "D",
    "L",
    "spl_term",
    "ei_term",
    "steps_agent_0",
    "steps_agent_1",
    "steps_agent_2",
    "steps_agent_3",
    "steps_agent_4",
    "bandwidth_total",
    "msgs_dropped",
    "error",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl Report {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::InvariantViolation(format!("csv: {e}"));
        w.write_record(CSV_HEADER).map_err(csv_err)?;
        for row in &self.rows {
            let r = &row.result;
            let mut rec = vec![
                r.task_id.clone(),
                r.scene_id.clone(),
                r.variant.clone(),
                r.n.to_string(),
                r.m.to_string(),
                r.seed.to_string(),
                (r.success as u8).to_string(),
                if row.error.is_some() { String::new() } else { r.d.to_string() },
                opt(r.l),
                opt(row.spl_term),
                opt(row.ei_term),
            ];
            for a in 0..MAX_AGENTS {
                rec.push(opt(r.per_agent_steps.get(a)));
            }
            rec.push(r.bandwidth.total_values.to_string());
            rec.push(r.bandwidth.dropped_msgs.to_string());
            rec.push(row.error.clone().unwrap_or_default());
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvariantViolation(format!("csv: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::InvariantViolation(e.to_string()))
    }

    /// SR, SPL and EI per (variant, N), in sorted order. Rows that failed to
    /// run count as failures.
    pub fn summary(&self) -> Vec<SummaryLine> {
        let mut groups: BTreeMap<(String, usize), Vec<&ReportRow>> = BTreeMap::new();
        for row in &self.rows {
            groups.entry((row.result.variant.clone(), row.result.n)).or_default().push(row);
        }
        groups
            .into_iter()
            .map(|((variant, n), rows)| {
                let k = rows.len() as f64;
                let sr = rows.iter().filter(|r| r.result.success).count() as f64 / k;
                let spl = rows.iter().map(|r| r.spl_term.unwrap_or(0.0)).sum::<f64>() / k;
                let terms: Vec<f64> = rows.iter().filter_map(|r| r.ei_term).collect();
                let ei = (n > 1 && !terms.is_empty()).then(|| terms.iter().sum::<f64>() / terms.len() as f64);
                SummaryLine {
                    variant,
                    n,
                    episodes: rows.len(),
                    sr,
                    spl,
                    ei,
                }
            })
            .collect()
    }
}

pub fn format_summary(lines: &[SummaryLine]) -> String {
    let mut s = format!("{:<28} {:>2} {:>6} {:>7} {:>7} {:>7}\n", "variant", "N", "runs", "SR", "SPL", "EI");
    for l in lines {
        let ei = l.ei.map(|e| format!("{:.3}", e)).unwrap_or_else(|| "-".into());
        s.push_str(&format!(
            "{:<28} {:>2} {:>6} {:>7.3} {:>7.3} {:>7}\n",
            l.variant, l.n, l.episodes, l.sr, l.spl, ei
        ));
    }
    s
}
