//! C ABI for the semnav simulator.
//!
//! Objects cross the boundary as opaque handles created by `*_generate`,
//! `*_load` or `*_derive` and released by the matching `*_free`. Every call
//! returns a [`SemnavStatus`]; on failure [`semnav_last_error`] describes it.
//! Panics never unwind into C.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use semnav::comms::Codec;
use semnav::eval::episode::{run_episode, EpisodeConfig, Policies};
use semnav::eval::oracle::oracle_makespan;
use semnav::geometry::{Cell, Dims};
use semnav::policy::Variant;
use semnav::priors::{derive_prior_graph, load_prior_graph, PriorGraph};
use semnav::scene::{generate_scene, load_scene, sample_task, save_scene, GenParams, Scene};
use semnav::Error;

/// Result of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SemnavStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Io = 4,
    Runtime = 5,
    Panic = 6,
}

/// Opaque scene handle.
pub struct SemnavScene(Scene);

/// Opaque prior graph handle.
pub struct SemnavPriorGraph(PriorGraph);

/// Outcome of one episode.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SemnavEpisodeSummary {
    pub success: bool,
    pub agents: u32,
    pub targets: u32,
    /// Rounds until the last agent stopped.
    pub makespan: u32,
    /// Oracle optimum, or -1 when no agent can finish the task.
    pub oracle_makespan: i64,
    pub found_events: u32,
    pub bandwidth_total: u64,
    pub msgs_dropped: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(SemnavStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Parse { .. } => SemnavStatus::Parse,
            Error::Io { .. } => SemnavStatus::Io,
            e if e.is_validation() => SemnavStatus::InvalidArgument,
            _ => SemnavStatus::Runtime,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SemnavStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(SemnavStatus::InvalidArgument, msg.into())
}

/// Runs `f`, recording the error message and containing panics.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SemnavStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SemnavStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            SemnavStatus::Panic
        }
    }
}

/// # Safety
/// `p` is null or a valid NUL-terminated string.
unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not UTF-8")))
}

/// # Safety
/// `p` is null or points to a live handle.
unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

/// # Safety
/// `out` is null or writable.
unsafe fn put<T>(out: *mut T, v: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn semnav_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn semnav_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Generates a scene of `length`×`width` cells with `rooms` rooms.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semnav_scene_generate(
    seed: u64,
    length: usize,
    width: usize,
    rooms: usize,
    object_density: f64,
    out: *mut *mut SemnavScene,
) -> SemnavStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let params = GenParams {
            dims: Dims::new(length, width),
            rooms,
            object_density,
            ..GenParams::default()
        };
        let scene = generate_scene(seed, &params)?;
        put(out, Box::into_raw(Box::new(SemnavScene(scene))), "out")
    })
}

/// # Safety
/// `path` is a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semnav_scene_load(path: *const c_char, out: *mut *mut SemnavScene) -> SemnavStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let scene = load_scene(path)?;
        put(out, Box::into_raw(Box::new(SemnavScene(scene))), "out")
    })
}

/// # Safety
/// `scene` is a live handle; `path` is a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn semnav_scene_save(scene: *const SemnavScene, path: *const c_char) -> SemnavStatus {
    guard(|| {
        let scene = handle(scene, "scene")?;
        let path = str_arg(path, "path")?;
        save_scene(&scene.0, path)?;
        Ok(())
    })
}

/// Releases a scene. Null is ignored.
///
/// # Safety
/// `scene` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn semnav_scene_free(scene: *mut SemnavScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// # Safety
/// `scene` is a live handle; `length` and `width` are writable.
#[no_mangle]
pub unsafe extern "C" fn semnav_scene_dims(
    scene: *const SemnavScene,
    length: *mut usize,
    width: *mut usize,
) -> SemnavStatus {
    guard(|| {
        let dims = handle(scene, "scene")?.0.dims();
        put(length, dims.l, "length")?;
        put(width, dims.w, "width")
    })
}

/// Whether cell (x, y) is traversable. Out-of-bounds cells are not.
///
/// # Safety
/// `scene` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn semnav_scene_is_free(scene: *const SemnavScene, x: i32, y: i32, out: *mut bool) -> SemnavStatus {
    guard(|| {
        let scene = handle(scene, "scene")?;
        put(out, scene.0.is_free(Cell::new(x, y)), "out")
    })
}

/// # Safety
/// `scene` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn semnav_scene_object_count(scene: *const SemnavScene, out: *mut usize) -> SemnavStatus {
    guard(|| {
        let scene = handle(scene, "scene")?;
        put(out, scene.0.objects().len(), "out")
    })
}

/// # Safety
/// `path` is a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semnav_prior_graph_load(path: *const c_char, out: *mut *mut SemnavPriorGraph) -> SemnavStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let g = load_prior_graph(path)?;
        put(out, Box::into_raw(Box::new(SemnavPriorGraph(g))), "out")
    })
}

/// Co-occurrence graph of `count` scenes, keeping edges of weight at least `min_weight`.
///
/// # Safety
/// `scenes` points to `count` live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semnav_prior_graph_derive(
    scenes: *const *const SemnavScene,
    count: usize,
    min_weight: f64,
    out: *mut *mut SemnavPriorGraph,
) -> SemnavStatus {
    guard(|| {
        if scenes.is_null() {
            return Err(null("scenes"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let handles = std::slice::from_raw_parts(scenes, count);
        let mut owned = Vec::with_capacity(count);
        for &h in handles {
            owned.push(handle(h, "scene")?.0.clone());
        }
        let g = derive_prior_graph(&owned, min_weight)?;
        put(out, Box::into_raw(Box::new(SemnavPriorGraph(g))), "out")
    })
}

/// # Safety
/// `graph` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn semnav_prior_graph_edge_count(graph: *const SemnavPriorGraph, out: *mut usize) -> SemnavStatus {
    guard(|| {
        let g = handle(graph, "graph")?;
        put(out, g.0.edges().len(), "out")
    })
}

/// Releases a prior graph. Null is ignored.
///
/// # Safety
/// `graph` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn semnav_prior_graph_free(graph: *mut SemnavPriorGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Samples a task of `targets` categories and `agents` spawns from
/// `task_seed`, runs it under `variant` (e.g. "greedy", "central-greedy",
/// "random/no-comm") and reports the outcome. `graph` may be null, meaning
/// no scene priors. Map messages use the 256-value quantized codec.
///
/// # Safety
/// `scene` is a live handle, `graph` null or live, `variant` a
/// NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn semnav_run_episode(
    scene: *const SemnavScene,
    graph: *const SemnavPriorGraph,
    variant: *const c_char,
    targets: usize,
    agents: usize,
    task_seed: u64,
    seed: u64,
    max_steps: usize,
    out: *mut SemnavEpisodeSummary,
) -> SemnavStatus {
    guard(|| {
        let scene = &handle(scene, "scene")?.0;
        let empty = PriorGraph::empty();
        let graph = graph.as_ref().map_or(&empty, |g| &g.0);
        let variant = Variant::parse(str_arg(variant, "variant")?)?;
        if out.is_null() {
            return Err(null("out"));
        }
        if max_steps == 0 {
            return Err(invalid("max_steps must be positive"));
        }
        let task = sample_task(scene, targets, agents, task_seed)?;
        let codec = Codec::quantized(scene.dims(), 256)?;
        let cfg = EpisodeConfig {
            max_steps,
            variant,
            ..EpisodeConfig::default()
        };
        if variant.kind == semnav::policy::PolicyKind::Learned {
            return Err(invalid("the learned policy needs a checkpoint; use the semnav CLI"));
        }
        let policies = Policies {
            graph,
            codec: Some(&codec),
            model: None,
        };
        let res = run_episode(scene, &task, "ffi", policies, &cfg, seed)?.result;
        let l = oracle_makespan(scene, &task, &cfg.sensor)?;
        put(
            out,
            SemnavEpisodeSummary {
                success: res.success,
                agents: res.n as u32,
                targets: res.m as u32,
                makespan: res.d as u32,
                oracle_makespan: l.map_or(-1, i64::from),
                found_events: res.found_events.len() as u32,
                bandwidth_total: res.bandwidth.total_values,
                msgs_dropped: res.bandwidth.dropped_msgs,
            },
            "out",
        )
    })
}
