//! C interface to the fusion engine.
//!
//! Every fallible call returns an [`FrnfStatus`]; on failure the message is
//! kept per thread and can be read with [`frnf_last_error`]. Sessions are
//! opaque handles created by [`frnf_session_new`] and released with
//! [`frnf_session_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use frnf::mapper::{MapperConfig, Session};
use frnf::renderer::{render_view, ViewImage, ViewMode};
use frnf::scene_field::{save_checkpoint, FieldConfig};
use frnf::semantics::{evaluate_field, load_click_script, script_order, ClickSpec};
use frnf::simio::{generate_sequence, standard_fixture, Dataset, CLICKS_FILE};
use frnf::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrnfStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    NotFound = 5,
    State = 6,
    Capacity = 7,
    Numeric = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrnfRenderMode {
    /// Expected depth in metres, one float per pixel.
    Depth = 0,
    /// Class id per pixel as a float; -1 where void.
    Semantic = 1,
}

/// Progress counters of a session.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct FrnfSessionInfo {
    pub frames_ingested: u32,
    pub n_frames: u32,
    pub n_keyframes: u32,
    pub n_active_classes: u32,
    pub step: u64,
    pub finished: bool,
}

/// Opaque training session.
pub struct FrnfSession {
    session: Session,
    clicks: Vec<ClickSpec>,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> FrnfStatus {
    match e {
        Error::Dimension(_) | Error::Config(_) | Error::Input(_) => FrnfStatus::InvalidArgument,
        Error::Format { .. } | Error::Json(_) => FrnfStatus::Format,
        Error::Io { .. } => FrnfStatus::Io,
        Error::Lookup(_) => FrnfStatus::NotFound,
        Error::State(_) => FrnfStatus::State,
        Error::Capacity(_) => FrnfStatus::Capacity,
        Error::Numeric { .. } | Error::Evaluation(_) => FrnfStatus::Numeric,
    }
}

struct Fail(FrnfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FrnfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FrnfStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            FrnfStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(FrnfStatus::NullArgument, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(FrnfStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn mut_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn frnf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `cap > 0`). Returns the full message length.
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn frnf_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Writes a named synthetic fixture to `out_dir`.
///
/// # Safety
/// `fixture` and `out_dir` must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn frnf_generate_dataset(fixture: *const c_char, seed: u64, out_dir: *const c_char) -> FrnfStatus {
    guard(|| {
        let fixture = str_arg(fixture, "fixture")?;
        let out = str_arg(out_dir, "out_dir")?;
        let (scene, spec) = standard_fixture(fixture, seed)?;
        generate_sequence(&spec, &scene, Path::new(out))?;
        Ok(())
    })
}

/// Opens a dataset directory and prepares a session over it. The dataset's
/// click script is replayed when present. `hidden` 0 keeps the default width.
///
/// # Safety
/// `dataset_dir` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn frnf_session_new(
    dataset_dir: *const c_char,
    hidden: u32,
    steps_per_frame: u32,
    seed: u64,
    out: *mut *mut FrnfSession,
) -> FrnfStatus {
    guard(|| {
        let out = mut_arg(out, "out")?;
        *out = std::ptr::null_mut();
        let dir = PathBuf::from(str_arg(dataset_dir, "dataset_dir")?);
        let ds = Dataset::open(&dir)?;
        let script = dir.join(CLICKS_FILE);
        let clicks = if script.exists() {
            script_order(load_click_script(&script)?)
        } else {
            Vec::new()
        };
        let mut field_cfg = FieldConfig {
            feature_dim: ds.manifest.feature_dim,
            ..FieldConfig::default()
        };
        if hidden > 0 {
            field_cfg = field_cfg.with_hidden(hidden as usize);
        }
        let cfg = MapperConfig {
            steps_per_frame: steps_per_frame as usize,
            seed,
            ..MapperConfig::default()
        };
        let session = Session::new(ds, field_cfg, cfg, clicks.clone())?;
        *out = Box::into_raw(Box::new(FrnfSession { session, clicks }));
        Ok(())
    })
}

/// Releases a session; null is ignored.
///
/// # Safety
/// `s` must be null or a handle from [`frnf_session_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn frnf_session_free(s: *mut FrnfSession) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Ingests the next frame or runs one optimisation step.
///
/// # Safety
/// `s` must be a live handle; `finished` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn frnf_session_advance(s: *mut FrnfSession, finished: *mut bool) -> FrnfStatus {
    guard(|| {
        let h = mut_arg(s, "session")?;
        if h.session.is_finished() {
            return Err(Fail(FrnfStatus::State, "session has finished".into()));
        }
        h.session.advance(&mut std::io::sink())?;
        if let Some(f) = finished.as_mut() {
            *f = h.session.is_finished();
        }
        Ok(())
    })
}

/// Runs the session to the end of its dataset.
///
/// # Safety
/// `s` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn frnf_session_run(s: *mut FrnfSession) -> FrnfStatus {
    guard(|| {
        let h = mut_arg(s, "session")?;
        h.session.run(&mut std::io::sink())?;
        Ok(())
    })
}

/// # Safety
/// `s` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn frnf_session_info(s: *const FrnfSession, out: *mut FrnfSessionInfo) -> FrnfStatus {
    guard(|| {
        let h = ref_arg(s, "session")?;
        let out = mut_arg(out, "out")?;
        let st = &h.session.state;
        *out = FrnfSessionInfo {
            frames_ingested: h.session.next_frame() as u32,
            n_frames: h.session.dataset().len() as u32,
            n_keyframes: st.keyframes.len() as u32,
            n_active_classes: st.registry.n_active_classes() as u32,
            step: st.step,
            finished: h.session.is_finished(),
        };
        Ok(())
    })
}

/// Adds a click on keyframe `keyframe_id` and returns the new class id.
///
/// # Safety
/// `s` must be a live handle, `name` null or NUL-terminated, `class_id`
/// null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn frnf_session_add_click(
    s: *mut FrnfSession,
    keyframe_id: u32,
    u: u32,
    v: u32,
    name: *const c_char,
    class_id: *mut u16,
) -> FrnfStatus {
    guard(|| {
        let h = mut_arg(s, "session")?;
        let name = if name.is_null() { "" } else { str_arg(name, "name")? };
        let id = h.session.state.add_click(keyframe_id, u, v, name)?;
        if let Some(c) = class_id.as_mut() {
            *c = id;
        }
        Ok(())
    })
}

/// Renders the view of dataset frame `frame_index` at `stride` into `buf`.
///
/// `width` and `height` always receive the image size, so a call with
/// `cap` 0 returns `BUFFER_TOO_SMALL` and tells the caller what to allocate.
///
/// # Safety
/// `s` must be a live handle, `buf` valid for `cap` floats, `width` and
/// `height` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn frnf_session_render(
    s: *const FrnfSession,
    frame_index: u32,
    mode: FrnfRenderMode,
    stride: u32,
    buf: *mut f32,
    cap: usize,
    width: *mut u32,
    height: *mut u32,
) -> FrnfStatus {
    guard(|| {
        let h = ref_arg(s, "session")?;
        let width = mut_arg(width, "width")?;
        let height = mut_arg(height, "height")?;
        if stride == 0 {
            return Err(Fail(FrnfStatus::InvalidArgument, "stride must be at least 1".into()));
        }
        let st = &h.session.state;
        let (w, ht) = (st.cam.width.div_ceil(stride as usize), st.cam.height.div_ceil(stride as usize));
        *width = w as u32;
        *height = ht as u32;
        if cap < w * ht {
            return Err(Fail(FrnfStatus::BufferTooSmall, format!("need {} floats, got {cap}", w * ht)));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        let pose = h.session.dataset().pose(frame_index as usize)?;
        let view_mode = match mode {
            FrnfRenderMode::Depth => ViewMode::Depth,
            FrnfRenderMode::Semantic => ViewMode::SemanticArgmax {
                n_active: st.registry.n_active_classes(),
            },
        };
        let field = st.field()?;
        let img = render_view(&field, &st.cam, &pose, view_mode, stride as usize, st.cfg.n_bins)?;
        let out = std::slice::from_raw_parts_mut(buf, w * ht);
        match img {
            ViewImage::Values(r) => out.copy_from_slice(&r.data[..w * ht]),
            ViewImage::Labels(r) => {
                for (o, &l) in out.iter_mut().zip(&r.data) {
                    *o = if l == frnf::renderer::VOID_LABEL { -1.0 } else { l as f32 };
                }
            }
        }
        Ok(())
    })
}

/// Mean IoU of the session's field against the dataset labels.
///
/// # Safety
/// `s` must be a live handle and `miou` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn frnf_session_evaluate(s: *const FrnfSession, stride: u32, miou: *mut f64) -> FrnfStatus {
    guard(|| {
        let h = ref_arg(s, "session")?;
        let miou = mut_arg(miou, "miou")?;
        let st = &h.session.state;
        let field = st.field()?;
        let r = evaluate_field(&field, h.session.dataset(), &h.clicks, stride as usize, st.cfg.n_bins)?;
        *miou = r.mean_iou;
        Ok(())
    })
}

/// # Safety
/// `s` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn frnf_session_save_checkpoint(s: *const FrnfSession, path: *const c_char) -> FrnfStatus {
    guard(|| {
        let h = ref_arg(s, "session")?;
        let path = str_arg(path, "path")?;
        save_checkpoint(Path::new(path), &h.session.state.params)?;
        Ok(())
    })
}
