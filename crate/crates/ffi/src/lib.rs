//! C ABI over the simulator: opaque handles, integer status codes and a
//! thread-local last-error message.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use savnce::agents::{AgentConfig, AgentKind};
use savnce::dataset::{read_dataset, Dataset, SplitName};
use savnce::descriptor::propagate_estimate;
use savnce::env::{Condition, EnvConfig, Environment, ObservationBundle, Termination};
use savnce::geometry::ActionKind;
use savnce::metrics::build_reports;
use savnce::runner::{episode_seed, run_batch, EvalConfig};
use savnce::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SavnceStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Dataset = 4,
    EpisodeDone = 5,
    BufferTooSmall = 6,
    Internal = 7,
}

/// How an episode ended; `Running` while it is not over.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SavnceTermination {
    Running = 0,
    Success = 1,
    StoppedWrongPlace = 2,
    StoppedAtDistractor = 3,
    Timeout = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SavnceStepResult {
    pub reward: f64,
    pub done: bool,
    pub termination: SavnceTermination,
    /// Geodesic distance to the goal after the step, meters.
    pub distance_to_goal: f64,
}

/// A loaded dataset.
pub struct SavnceDataset {
    inner: Dataset,
}

/// One running episode and its latest observation.
pub struct SavnceEnv {
    env: Environment,
    obs: ObservationBundle,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> SavnceStatus {
    match e {
        Error::Io { .. } => SavnceStatus::Io,
        Error::Dataset { .. } | Error::SplitOverlap(_) | Error::Json(_) => SavnceStatus::Dataset,
        Error::EpisodeDone => SavnceStatus::EpisodeDone,
        _ => SavnceStatus::InvalidArgument,
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (SavnceStatus, String)>) -> SavnceStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SavnceStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SavnceStatus::Internal
        }
    }
}

fn lib(e: Error) -> (SavnceStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (SavnceStatus, String) {
    (SavnceStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (SavnceStatus, String) {
    (SavnceStatus::InvalidArgument, msg.into())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (SavnceStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not UTF-8")))
}

fn split_arg(split: u32) -> Result<SplitName, (SavnceStatus, String)> {
    SplitName::ALL
        .get(split as usize)
        .copied()
        .ok_or_else(|| invalid(format!("split index {split} (0 train, 1 val, 2 test)")))
}

fn condition_arg(c: u32) -> Result<Condition, (SavnceStatus, String)> {
    match c {
        0 => Ok(Condition::Clean),
        1 => Ok(Condition::Distracted),
        _ => Err(invalid(format!("condition {c} (0 clean, 1 distracted)"))),
    }
}

fn termination_code(t: Termination) -> SavnceTermination {
    match t {
        Termination::Running => SavnceTermination::Running,
        Termination::Success => SavnceTermination::Success,
        Termination::StoppedWrongPlace => SavnceTermination::StoppedWrongPlace,
        Termination::StoppedAtDistractor => SavnceTermination::StoppedAtDistractor,
        Termination::Timeout => SavnceTermination::Timeout,
    }
}

/// Copies the last error message (NUL-terminated, truncated to `capacity`)
/// and returns the full message length in bytes, excluding the NUL.
///
/// # Safety
/// `buf` must be null or point to `capacity` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn savnce_last_error(buf: *mut c_char, capacity: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && capacity > 0 {
            let n = msg.len().min(capacity - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn savnce_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads and validates a dataset directory.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn savnce_dataset_open(
    path: *const c_char,
    out: *mut *mut SavnceDataset,
) -> SavnceStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let inner = read_dataset(Path::new(path), &SplitName::ALL).map_err(lib)?;
        *out = Box::into_raw(Box::new(SavnceDataset { inner }));
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle from `savnce_dataset_open` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn savnce_dataset_free(ds: *mut SavnceDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Number of episodes in a split (0 train, 1 val, 2 test).
///
/// # Safety
/// `ds` must be a live dataset handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn savnce_dataset_episode_count(
    ds: *const SavnceDataset,
    split: u32,
    out: *mut usize,
) -> SavnceStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("dataset"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = ds.inner.split(split_arg(split)?).len();
        Ok(())
    })
}

/// Starts episode `index` of `split` under `condition` (0 clean, 1
/// distracted). Audio is rendered with the default room model.
///
/// # Safety
/// `ds` must be a live dataset handle; `out` must be writable. The
/// environment does not borrow the dataset.
#[no_mangle]
pub unsafe extern "C" fn savnce_env_reset(
    ds: *const SavnceDataset,
    split: u32,
    index: usize,
    condition: u32,
    seed: u64,
    out: *mut *mut SavnceEnv,
) -> SavnceStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let ds = &ds.as_ref().ok_or_else(|| null("dataset"))?.inner;
        let spec = ds
            .split(split_arg(split)?)
            .get(index)
            .ok_or_else(|| invalid(format!("episode index {index} out of range")))?;
        let scene = ds.scene(&spec.scene_id).map_err(lib)?.clone();
        let (env, obs) = Environment::reset(
            scene,
            spec,
            ds.manifest.bank,
            condition_arg(condition)?,
            EnvConfig::default(),
            seed,
        )
        .map_err(lib)?;
        *out = Box::into_raw(Box::new(SavnceEnv { env, obs }));
        Ok(())
    })
}

/// # Safety
/// `env` must be null or a handle from `savnce_env_reset` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn savnce_env_free(env: *mut SavnceEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Applies an action (0 stop, 1 forward, 2 turn left, 3 turn right).
///
/// # Safety
/// `env` must be a live environment handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn savnce_env_step(
    env: *mut SavnceEnv,
    action: u32,
    out: *mut SavnceStepResult,
) -> SavnceStatus {
    guard(|| {
        let h = env.as_mut().ok_or_else(|| null("env"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let action = ActionKind::from_index(action as usize)
            .ok_or_else(|| invalid(format!("action {action} (0..=3)")))?;
        let (obs, o) = h.env.step(action).map_err(lib)?;
        h.obs = obs;
        *out = SavnceStepResult {
            reward: o.reward,
            done: o.done,
            termination: termination_code(o.termination),
            distance_to_goal: o.dtg,
        };
        Ok(())
    })
}

/// Copies the latest binaural frame. Each buffer must hold `len` samples;
/// `len` must be at least the frame length, which is written to `written`.
///
/// # Safety
/// `left` and `right` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn savnce_env_audio(
    env: *const SavnceEnv,
    left: *mut f64,
    right: *mut f64,
    len: usize,
    written: *mut usize,
) -> SavnceStatus {
    guard(|| {
        let h = env.as_ref().ok_or_else(|| null("env"))?;
        if left.is_null() || right.is_null() {
            return Err(null("audio buffer"));
        }
        let f = &h.obs.binaural;
        let n = f.left.len();
        if let Some(w) = written.as_mut() {
            *w = n;
        }
        if len < n {
            return Err((
                SavnceStatus::BufferTooSmall,
                format!("audio buffers hold {len} samples, need {n}"),
            ));
        }
        ptr::copy_nonoverlapping(f.left.as_ptr(), left, n);
        ptr::copy_nonoverlapping(f.right.as_ptr(), right, n);
        Ok(())
    })
}

/// World pose `[x, y, heading]` of the agent.
///
/// # Safety
/// `env` must be a live environment handle; `out` must hold 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn savnce_env_pose(env: *const SavnceEnv, out: *mut f64) -> SavnceStatus {
    guard(|| {
        let h = env.as_ref().ok_or_else(|| null("env"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let p = h.env.pose();
        ptr::copy_nonoverlapping([p.x, p.y, p.theta()].as_ptr(), out, 3);
        Ok(())
    })
}

/// Dead-reckons a relative goal estimate through one action.
///
/// # Safety
/// `out_azimuth` and `out_distance` must be writable.
#[no_mangle]
pub unsafe extern "C" fn savnce_propagate_estimate(
    azimuth: f64,
    distance: f64,
    action: u32,
    moved: f64,
    out_azimuth: *mut f64,
    out_distance: *mut f64,
) -> SavnceStatus {
    guard(|| {
        let oa = out_azimuth.as_mut().ok_or_else(|| null("out_azimuth"))?;
        let od = out_distance.as_mut().ok_or_else(|| null("out_distance"))?;
        let action = ActionKind::from_index(action as usize)
            .ok_or_else(|| invalid(format!("action {action} (0..=3)")))?;
        let (a, d) = propagate_estimate(azimuth, distance, action, moved).map_err(lib)?;
        *oa = a;
        *od = d;
        Ok(())
    })
}

/// Evaluates an agent ("random", "oracle1", "oracle2", "tracker") on the
/// first `limit` episodes of a split (0 for all) and writes the JSON metric
/// report to `buf`. `needed` receives the report length plus one.
///
/// # Safety
/// `ds` must be a live dataset handle, `agent` a NUL-terminated string and
/// `buf` null or `capacity` writable bytes.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn savnce_evaluate(
    ds: *const SavnceDataset,
    split: u32,
    agent: *const c_char,
    condition: u32,
    seed: u64,
    workers: usize,
    limit: usize,
    buf: *mut c_char,
    capacity: usize,
    needed: *mut usize,
) -> SavnceStatus {
    guard(|| {
        let ds = &ds.as_ref().ok_or_else(|| null("dataset"))?.inner;
        let kind: AgentKind = str_arg(agent, "agent")?.parse().map_err(lib)?;
        let mut agent = AgentConfig::new(kind);
        agent.random_distribution = ds.manifest.random_action_distribution;
        let mut cfg = EvalConfig::new(agent, condition_arg(condition)?, seed);
        cfg.workers = workers.max(1);
        let episodes = ds.split(split_arg(split)?);
        let n = if limit == 0 {
            episodes.len()
        } else {
            limit.min(episodes.len())
        };
        let traces = run_batch(ds, &episodes[..n], &cfg).map_err(lib)?;
        let text = serde_json::to_string(&build_reports(&traces).map_err(lib)?)
            .map_err(|e| lib(e.into()))?;
        if let Some(w) = needed.as_mut() {
            *w = text.len() + 1;
        }
        if buf.is_null() || capacity < text.len() + 1 {
            return Err((
                SavnceStatus::BufferTooSmall,
                format!("report needs {} bytes", text.len() + 1),
            ));
        }
        ptr::copy_nonoverlapping(text.as_ptr(), buf.cast::<u8>(), text.len());
        *buf.add(text.len()) = 0;
        Ok(())
    })
}

/// Per-episode seed used by the evaluator, for reproducing single episodes.
///
/// # Safety
/// `episode_id` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn savnce_episode_seed(
    master: u64,
    episode_id: *const c_char,
    run: usize,
    out: *mut u64,
) -> SavnceStatus {
    guard(|| {
        let id = str_arg(episode_id, "episode_id")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = episode_seed(master, id, run);
        Ok(())
    })
}
