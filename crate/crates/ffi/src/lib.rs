//! C ABI over the dyn4d pipeline.
//!
//! Every fallible call returns a [`Dyn4dStatus`]. On failure the message is
//! kept per thread and read back with [`dyn4d_last_error`]. Objects cross the
//! boundary as opaque handles that the caller releases with the matching
//! `*_free` function. Strings returned through out-pointers are owned by the
//! caller and released with [`dyn4d_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use dyn4d::curator::motion_magnitude;
use dyn4d::diffusion::{cfg_combine_slices, GuidanceWeights};
use dyn4d::pipeline::{run_e2e, run_stage, PipelineConfig, RunOptions, Stage, StageOutcome, Workspace};
use dyn4d::scene::io::read_video;
use dyn4d::scene::OrbitalVideo;
use dyn4d::Error;

/// Rerun stages whose markers are already valid.
pub const DYN4D_FLAG_FORCE: u32 = 1;
/// Report the plan without writing to the workspace.
pub const DYN4D_FLAG_DRY_RUN: u32 = 2;

/// Result of every fallible call. Values 2 to 7 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dyn4dStatus {
    Ok = 0,
    InvalidArgument = 2,
    Precondition = 3,
    Io = 4,
    NonFinite = 5,
    InvalidState = 6,
    Locked = 7,
    NullPointer = 8,
    Panic = 9,
}

/// Pipeline stages, in execution order.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dyn4dStage {
    GenDataset = 0,
    Curate = 1,
    Train = 2,
    Sample = 3,
    Reconstruct = 4,
    Eval = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dyn4dOutcome {
    Ran = 0,
    Skipped = 1,
    Planned = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Dyn4dVideoInfo {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub is_static: bool,
}

/// Opaque pipeline configuration.
pub struct Dyn4dConfig {
    inner: PipelineConfig,
}

/// Opaque workspace root.
pub struct Dyn4dWorkspace {
    inner: Workspace,
}

/// Opaque orbital video loaded from disk.
pub struct Dyn4dVideo {
    inner: OrbitalVideo,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure {
    status: Dyn4dStatus,
    message: String,
}

impl Failure {
    fn null(what: &str) -> Self {
        Failure {
            status: Dyn4dStatus::NullPointer,
            message: format!("{what} is null"),
        }
    }

    fn invalid(message: impl Into<String>) -> Self {
        Failure {
            status: Dyn4dStatus::InvalidArgument,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e.exit_code() {
            2 => Dyn4dStatus::InvalidArgument,
            3 => Dyn4dStatus::Precondition,
            4 => Dyn4dStatus::Io,
            5 => Dyn4dStatus::NonFinite,
            6 => Dyn4dStatus::InvalidState,
            7 => Dyn4dStatus::Locked,
            _ => Dyn4dStatus::InvalidState,
        };
        Failure {
            status,
            message: e.to_string(),
        }
    }
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> Dyn4dStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => Dyn4dStatus::Ok,
        Ok(Err(fail)) => {
            set_last_error(fail.message);
            fail.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_last_error(format!("panic: {msg}"));
            Dyn4dStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn obj<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::null(what));
    }
    out.write(value);
    Ok(())
}

fn owned_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure::invalid("string contains an interior NUL"))
}

fn options(flags: u32) -> Result<RunOptions, Failure> {
    if flags & !(DYN4D_FLAG_FORCE | DYN4D_FLAG_DRY_RUN) != 0 {
        return Err(Failure::invalid(format!("unknown flag bits {flags:#x}")));
    }
    Ok(RunOptions {
        force: flags & DYN4D_FLAG_FORCE != 0,
        dry_run: flags & DYN4D_FLAG_DRY_RUN != 0,
    })
}

fn stage_from(raw: i32) -> Result<Stage, Failure> {
    usize::try_from(raw)
        .ok()
        .and_then(|i| Stage::ALL.get(i).copied())
        .ok_or_else(|| Failure::invalid(format!("unknown stage {raw}")))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dyn4d_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL after a success.
/// Valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn dyn4d_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dyn4d_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dyn4d_config_default(out: *mut *mut Dyn4dConfig) -> Dyn4dStatus {
    guard(|| {
        let cfg = Box::new(Dyn4dConfig {
            inner: PipelineConfig::default(),
        });
        put(out, Box::into_raw(cfg), "out")
    })
}

/// Loads and validates a JSON config file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dyn4d_config_load(path: *const c_char, out: *mut *mut Dyn4dConfig) -> Dyn4dStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        let inner = PipelineConfig::load(&path)?;
        put(out, Box::into_raw(Box::new(Dyn4dConfig { inner })), "out")
    })
}

/// # Safety
/// `json` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dyn4d_config_from_json(json: *const c_char, out: *mut *mut Dyn4dConfig) -> Dyn4dStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let inner: PipelineConfig = serde_json::from_str(text).map_err(|e| Failure::invalid(format!("config json: {e}")))?;
        inner.validate()?;
        put(out, Box::into_raw(Box::new(Dyn4dConfig { inner })), "out")
    })
}

/// Pretty JSON of the config; free with [`dyn4d_string_free`].
///
/// # Safety
/// `cfg` must be a live config handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dyn4d_config_to_json(cfg: *const Dyn4dConfig, out: *mut *mut c_char) -> Dyn4dStatus {
    guard(|| {
        let json = obj(cfg, "cfg")?.inner.to_json()?;
        put(out, owned_string(json)?, "out")
    })
}

/// Hex sha256 of the config; free with [`dyn4d_string_free`].
///
/// # Safety
/// `cfg` must be a live config handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dyn4d_config_hash(cfg: *const Dyn4dConfig, out: *mut *mut c_char) -> Dyn4dStatus {
    guard(|| {
        let hash = obj(cfg, "cfg")?.inner.hash();
        put(out, owned_string(hash)?, "out")
    })
}

/// # Safety
/// `cfg` must be a live config handle.
#[no_mangle]
pub unsafe extern "C" fn dyn4d_config_set_seed(cfg: *mut Dyn4dConfig, seed: u64) -> Dyn4dStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| Failure::null("cfg"))?;
        cfg.inner.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dyn4d_config_free(cfg: *mut Dyn4dConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Opens a workspace rooted at `path`. Nothing is created until a stage runs.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dyn4d_workspace_open(path: *const c_char, out: *mut *mut Dyn4dWorkspace) -> Dyn4dStatus {
    guard(|| {
        let inner = Workspace::new(str_arg(path, "path")?);
        put(out, Box::into_raw(Box::new(Dyn4dWorkspace { inner })), "out")
    })
}

/// # Safety
/// `ws` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dyn4d_workspace_free(ws: *mut Dyn4dWorkspace) {
    if !ws.is_null() {
        drop(Box::from_raw(ws));
    }
}

/// Runs one stage. `stage` is a [`Dyn4dStage`] value, `flags` a bitwise OR
/// of the `DYN4D_FLAG_*` constants. `outcome` may be NULL.
///
/// # Safety
/// `ws` and `cfg` must be live handles; `outcome` NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dyn4d_run_stage(
    ws: *const Dyn4dWorkspace,
    cfg: *const Dyn4dConfig,
    stage: i32,
    flags: u32,
    outcome: *mut Dyn4dOutcome,
) -> Dyn4dStatus {
    guard(|| {
        let ws = obj(ws, "ws")?;
        let cfg = obj(cfg, "cfg")?;
        let stage = stage_from(stage)?;
        let done = run_stage(&ws.inner, &cfg.inner, stage, options(flags)?, &mut std::io::sink())?;
        if !outcome.is_null() {
            outcome.write(match done {
                StageOutcome::Ran => Dyn4dOutcome::Ran,
                StageOutcome::Skipped => Dyn4dOutcome::Skipped,
                StageOutcome::Planned => Dyn4dOutcome::Planned,
            });
        }
        Ok(())
    })
}

/// Runs every stage. On success `report_hash` (if not NULL) receives the hex
/// sha256 of the final metric report, or NULL for a dry run; free it with
/// [`dyn4d_string_free`].
///
/// # Safety
/// `ws` and `cfg` must be live handles; `report_hash` NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dyn4d_run_e2e(
    ws: *const Dyn4dWorkspace,
    cfg: *const Dyn4dConfig,
    flags: u32,
    report_hash: *mut *mut c_char,
) -> Dyn4dStatus {
    guard(|| {
        let ws = obj(ws, "ws")?;
        let cfg = obj(cfg, "cfg")?;
        let summary = run_e2e(&ws.inner, &cfg.inner, options(flags)?, &mut std::io::sink())?;
        if !report_hash.is_null() {
            let s = match summary.report_hash {
                Some(h) => owned_string(h)?,
                None => ptr::null_mut(),
            };
            report_hash.write(s);
        }
        Ok(())
    })
}

/// Reads an `.orb4d` video and its JSON sidecar.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dyn4d_video_read(path: *const c_char, out: *mut *mut Dyn4dVideo) -> Dyn4dStatus {
    guard(|| {
        let (inner, _) = read_video(&PathBuf::from(str_arg(path, "path")?))?;
        put(out, Box::into_raw(Box::new(Dyn4dVideo { inner })), "out")
    })
}

/// # Safety
/// `video` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dyn4d_video_info(video: *const Dyn4dVideo, out: *mut Dyn4dVideoInfo) -> Dyn4dStatus {
    guard(|| {
        let v = &obj(video, "video")?.inner;
        let first = v.frames.first();
        let info = Dyn4dVideoInfo {
            frames: v.len(),
            width: first.map_or(0, |f| f.width),
            height: first.map_or(0, |f| f.height),
            is_static: v.is_static,
        };
        put(out, info, "out")
    })
}

/// Copies frame `index` as `height * width * 3` row-major RGB floats into
/// `rgb`, which must hold exactly that many values.
///
/// # Safety
/// `video` must be a live handle and `rgb` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn dyn4d_video_frame_rgb(
    video: *const Dyn4dVideo,
    index: usize,
    rgb: *mut f32,
    len: usize,
) -> Dyn4dStatus {
    guard(|| {
        let v = &obj(video, "video")?.inner;
        let frame = v
            .frames
            .get(index)
            .ok_or_else(|| Failure::invalid(format!("frame {index} out of range ({} frames)", v.len())))?;
        if len != frame.rgb.len() {
            return Err(Failure::invalid(format!("buffer holds {len} values, frame needs {}", frame.rgb.len())));
        }
        if rgb.is_null() {
            return Err(Failure::null("rgb"));
        }
        let dst = std::slice::from_raw_parts_mut(rgb, len);
        for (d, s) in dst.iter_mut().zip(&frame.rgb) {
            *d = *s as f32;
        }
        Ok(())
    })
}

/// # Safety
/// `video` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dyn4d_video_free(video: *mut Dyn4dVideo) {
    if !video.is_null() {
        drop(Box::from_raw(video));
    }
}

/// Mean squared RGB difference between a dynamic video and its static
/// counterpart on the same orbit.
///
/// # Safety
/// `dynamic` and `static_video` must be live handles and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dyn4d_motion_magnitude(
    dynamic: *const Dyn4dVideo,
    static_video: *const Dyn4dVideo,
    out: *mut f64,
) -> Dyn4dStatus {
    guard(|| {
        let m = motion_magnitude(&obj(dynamic, "dynamic")?.inner, &obj(static_video, "static_video")?.inner)?;
        put(out, m, "out")
    })
}

/// Three-term guidance `(1 + w1 + w2) c - w1 u - w2 s`, elementwise over
/// `len` values. `out` may alias any input.
///
/// # Safety
/// All four buffers must be valid for `len` elements.
#[no_mangle]
pub unsafe extern "C" fn dyn4d_cfg_combine(
    cond: *const f64,
    uncond: *const f64,
    static3d: *const f64,
    len: usize,
    w1: f64,
    w2: f64,
    out: *mut f64,
) -> Dyn4dStatus {
    guard(|| {
        if cond.is_null() || uncond.is_null() || static3d.is_null() || out.is_null() {
            return Err(Failure::null("buffer"));
        }
        let w = GuidanceWeights { w1, w2 };
        w.validate()?;
        for i in 0..len {
            let v = cfg_combine_slices(cond.add(i).read(), uncond.add(i).read(), static3d.add(i).read(), &w);
            out.add(i).write(v);
        }
        Ok(())
    })
}
