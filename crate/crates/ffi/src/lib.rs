//! C interface to the fmri2ges core.
//!
//! Every object crosses the boundary as an opaque pointer that the caller
//! releases with the matching `*_free`. Functions return an [`F2gStatus`];
//! the message for the most recent failure on the calling thread is
//! available through [`f2g_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use fmri2ges::diffusion::GestureClip;
use fmri2ges::f2g::{generate_from_fmri, F2gCheckpoint};
use fmri2ges::f2t::{F2tDecoder, FmriRecord, Region};
use fmri2ges::io::{
    f2g_from_checkpoint, f2t_from_checkpoint, gestures_to_checkpoint, load_gestures, model_kind, read_dataset,
    t2g_from_checkpoint, Checkpoint, KeyValues, LoadedDataset,
};
use fmri2ges::metrics::{evaluate, MetricsConfig};
use fmri2ges::render::{render_svg, RenderConfig};
use fmri2ges::skeleton::{bones, FRAME_WIDTH};
use fmri2ges::t2g::{generate_from_text, T2gModel};
use fmri2ges::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum F2gStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Checksum = 5,
    Shape = 6,
    Missing = 7,
    Numeric = 8,
    WrongKind = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum F2gModelKind {
    Text = 1,
    Fmri = 2,
}

/// Scores of generated clips against references.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct F2gMetrics {
    pub mae: f64,
    pub ape: f64,
    pub pck: f64,
    pub fgd: f64,
    pub bc: f64,
    pub diversity: f64,
}

pub struct F2gDataset(LoadedDataset);

pub enum F2gModel {
    Text(T2gModel),
    Fmri(F2gCheckpoint),
}

pub struct F2gDecoder(F2tDecoder);

pub struct F2gGestures(Vec<GestureClip>);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(F2gStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidArgument(_) | Error::StepOutOfRange { .. } | Error::UnknownWord(_) | Error::Empty(_) => {
                F2gStatus::InvalidArgument
            }
            Error::Shape(_) | Error::Modality { .. } => F2gStatus::Shape,
            Error::NonFinite(_) | Error::RankDeficient(_) => F2gStatus::Numeric,
            Error::Missing(_) => F2gStatus::Missing,
            Error::Format(_) => F2gStatus::Format,
            Error::Checksum { .. } => F2gStatus::Checksum,
            Error::Io(_) => F2gStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> F2gStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            F2gStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            F2gStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(F2gStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(F2gStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn fmri_arg(voxels: *const f64, n_tr: usize, n_voxels: usize, tr_seconds: f64) -> Result<FmriRecord, Failure> {
    if voxels.is_null() {
        return Err(null("voxel buffer"));
    }
    let len = n_tr
        .checked_mul(n_voxels)
        .ok_or_else(|| Failure(F2gStatus::InvalidArgument, "voxel buffer size overflows".into()))?;
    let data = std::slice::from_raw_parts(voxels, len).to_vec();
    let m = ndarray::Array2::from_shape_vec((n_tr, n_voxels), data)
        .map_err(|e| Failure(F2gStatus::Shape, e.to_string()))?;
    Ok(FmriRecord::new(m, tr_seconds, Region::All)?)
}

/// Copies the last error message of this thread, NUL-terminated and
/// truncated to `capacity`. Returns the full message length in bytes.
///
/// # Safety
/// `buffer` must be null or point to `capacity` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn f2g_last_error(buffer: *mut c_char, capacity: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes();
        if !buffer.is_null() && capacity > 0 {
            let n = bytes.len().min(capacity - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buffer, n);
            *buffer.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn f2g_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Keypoint coordinates per frame.
#[no_mangle]
pub extern "C" fn f2g_frame_width() -> usize {
    FRAME_WIDTH
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn f2g_dataset_load(path: *const c_char, out: *mut *mut F2gDataset) -> F2gStatus {
    guard(|| {
        let dir = path_arg(path)?;
        put(out, F2gDataset(read_dataset(&dir)?))
    })
}

/// Number of unpaired fMRI records in the dataset; 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn f2g_dataset_unpaired_count(dataset: *const F2gDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.data.unpaired_fmri.len())
}

/// Shape of unpaired record `index`, for sizing the buffer of
/// [`f2g_dataset_unpaired_fmri`].
///
/// # Safety
/// `dataset` must be a live handle; the output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn f2g_dataset_unpaired_shape(
    dataset: *const F2gDataset,
    index: usize,
    n_tr: *mut usize,
    n_voxels: *mut usize,
    tr_seconds: *mut f64,
) -> F2gStatus {
    guard(|| {
        let d = get(dataset, "dataset")?;
        let rec = d.0.data.unpaired_fmri.get(index).ok_or_else(|| {
            Failure(F2gStatus::InvalidArgument, format!("record {index} of {}", d.0.data.unpaired_fmri.len()))
        })?;
        if n_tr.is_null() || n_voxels.is_null() || tr_seconds.is_null() {
            return Err(null("shape output"));
        }
        *n_tr = rec.fmri.n_tr();
        *n_voxels = rec.fmri.n_voxels();
        *tr_seconds = rec.fmri.tr_seconds();
        Ok(())
    })
}

/// Copies unpaired record `index` row-major into `buffer`.
///
/// # Safety
/// `dataset` must be a live handle and `buffer` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn f2g_dataset_unpaired_fmri(
    dataset: *const F2gDataset,
    index: usize,
    buffer: *mut f64,
    capacity: usize,
) -> F2gStatus {
    guard(|| {
        let d = get(dataset, "dataset")?;
        let rec = d.0.data.unpaired_fmri.get(index).ok_or_else(|| {
            Failure(F2gStatus::InvalidArgument, format!("record {index} of {}", d.0.data.unpaired_fmri.len()))
        })?;
        copy_out(rec.fmri.voxels().iter().copied(), rec.fmri.voxels().len(), buffer, capacity)
    })
}

unsafe fn copy_out(values: impl Iterator<Item = f64>, len: usize, buffer: *mut f64, capacity: usize) -> Result<(), Failure> {
    if capacity < len {
        return Err(Failure(F2gStatus::BufferTooSmall, format!("need {len} values, buffer holds {capacity}")));
    }
    if buffer.is_null() {
        return Err(null("buffer"));
    }
    for (i, v) in values.enumerate() {
        *buffer.add(i) = v;
    }
    Ok(())
}

/// # Safety
/// `dataset` must be null or a handle from [`f2g_dataset_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn f2g_dataset_free(dataset: *mut F2gDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Loads a text-to-gesture or fMRI-to-gesture checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn f2g_model_load(path: *const c_char, out: *mut *mut F2gModel) -> F2gStatus {
    guard(|| {
        let ckpt = Checkpoint::load(&path_arg(path)?)?;
        let model = match model_kind(&ckpt)?.as_str() {
            "t2g" => F2gModel::Text(t2g_from_checkpoint(&ckpt)?),
            "f2g" => F2gModel::Fmri(f2g_from_checkpoint(&ckpt)?),
            other => return Err(Failure(F2gStatus::WrongKind, format!("{other} checkpoint is not a gesture model"))),
        };
        put(out, model)
    })
}

/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn f2g_model_kind(model: *const F2gModel, kind: *mut F2gModelKind) -> F2gStatus {
    guard(|| {
        let m = get(model, "model")?;
        if kind.is_null() {
            return Err(null("kind output"));
        }
        *kind = match m {
            F2gModel::Text(_) => F2gModelKind::Text,
            F2gModel::Fmri(_) => F2gModelKind::Fmri,
        };
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from [`f2g_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn f2g_model_free(model: *mut F2gModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Generates one clip from frame-aligned word ids. Works with either model
/// kind; an fMRI model uses the text model it was trained alongside.
///
/// # Safety
/// `words` must point to `n_frames` ids; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn f2g_generate_from_text(
    model: *const F2gModel,
    words: *const u32,
    n_frames: usize,
    seed: u64,
    out: *mut *mut F2gGestures,
) -> F2gStatus {
    guard(|| {
        let m = get(model, "model")?;
        if words.is_null() {
            return Err(null("word buffer"));
        }
        let words = std::slice::from_raw_parts(words, n_frames);
        let clip = match m {
            F2gModel::Text(t) => generate_from_text(t, words, seed)?,
            F2gModel::Fmri(f) => generate_from_text(&f.text_model(), words, seed)?,
        };
        put(out, F2gGestures(vec![clip]))
    })
}

/// Generates a clip for a TR-rate fMRI recording (`n_tr` rows of
/// `n_voxels`, row-major). Requires an fMRI model.
///
/// # Safety
/// `voxels` must point to `n_tr * n_voxels` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn f2g_generate_from_fmri(
    model: *const F2gModel,
    voxels: *const f64,
    n_tr: usize,
    n_voxels: usize,
    tr_seconds: f64,
    seed: u64,
    out: *mut *mut F2gGestures,
) -> F2gStatus {
    guard(|| {
        let F2gModel::Fmri(ckpt) = get(model, "model")? else {
            return Err(Failure(F2gStatus::WrongKind, "fMRI conditioning needs an f2g model".into()));
        };
        let rec = fmri_arg(voxels, n_tr, n_voxels, tr_seconds)?;
        put(out, F2gGestures(vec![generate_from_fmri(ckpt, &rec, seed)?]))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn f2g_decoder_load(path: *const c_char, out: *mut *mut F2gDecoder) -> F2gStatus {
    guard(|| {
        let ckpt = Checkpoint::load(&path_arg(path)?)?;
        put(out, F2gDecoder(f2t_from_checkpoint(&ckpt)?))
    })
}

/// Decodes word ids from fMRI into `words`. `*len` receives the decoded
/// length even when the buffer is too small.
///
/// # Safety
/// `voxels` must point to `n_tr * n_voxels` doubles, `words` to `capacity`
/// ids and `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn f2g_decode_text(
    decoder: *const F2gDecoder,
    voxels: *const f64,
    n_tr: usize,
    n_voxels: usize,
    tr_seconds: f64,
    seed: u64,
    words: *mut u32,
    capacity: usize,
    len: *mut usize,
) -> F2gStatus {
    guard(|| {
        let d = get(decoder, "decoder")?;
        if len.is_null() {
            return Err(null("length output"));
        }
        let rec = fmri_arg(voxels, n_tr, n_voxels, tr_seconds)?;
        let decoded = d.0.decode(&rec, seed)?;
        *len = decoded.len();
        if capacity < decoded.len() {
            return Err(Failure(F2gStatus::BufferTooSmall, format!("need {} words, buffer holds {capacity}", decoded.len())));
        }
        if words.is_null() {
            return Err(null("word buffer"));
        }
        for (i, w) in decoded.iter().enumerate() {
            *words.add(i) = w.word;
        }
        Ok(())
    })
}

/// # Safety
/// `decoder` must be null or a handle from [`f2g_decoder_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn f2g_decoder_free(decoder: *mut F2gDecoder) {
    if !decoder.is_null() {
        drop(Box::from_raw(decoder));
    }
}

/// Reads a gesture checkpoint or bare gesture array.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn f2g_gestures_load(path: *const c_char, out: *mut *mut F2gGestures) -> F2gStatus {
    guard(|| put(out, F2gGestures(load_gestures(&path_arg(path)?)?)))
}

/// # Safety
/// `gestures` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn f2g_gestures_save(gestures: *const F2gGestures, path: *const c_char) -> F2gStatus {
    guard(|| {
        let g = get(gestures, "gestures")?;
        let mut echo = KeyValues::new();
        echo.set("command", "ffi");
        gestures_to_checkpoint(&g.0, &echo)?.save(&path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `gestures` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn f2g_gestures_count(gestures: *const F2gGestures) -> usize {
    gestures.as_ref().map_or(0, |g| g.0.len())
}

/// Frame count of clip `index`; 0 when out of range.
///
/// # Safety
/// `gestures` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn f2g_gestures_frames(gestures: *const F2gGestures, index: usize) -> usize {
    gestures.as_ref().and_then(|g| g.0.get(index)).map_or(0, GestureClip::len)
}

/// Copies clip `index` row-major (`frames * f2g_frame_width()` doubles).
///
/// # Safety
/// `gestures` must be a live handle and `buffer` must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn f2g_gestures_copy(
    gestures: *const F2gGestures,
    index: usize,
    buffer: *mut f64,
    capacity: usize,
) -> F2gStatus {
    guard(|| {
        let g = get(gestures, "gestures")?;
        let clip = g
            .0
            .get(index)
            .ok_or_else(|| Failure(F2gStatus::InvalidArgument, format!("clip {index} of {}", g.0.len())))?;
        copy_out(clip.frames().iter().copied(), clip.frames().len(), buffer, capacity)
    })
}

/// Writes clip `index` as an SVG filmstrip of every `every`-th frame.
///
/// # Safety
/// `gestures` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn f2g_gestures_render_svg(
    gestures: *const F2gGestures,
    index: usize,
    every: usize,
    path: *const c_char,
) -> F2gStatus {
    guard(|| {
        let g = get(gestures, "gestures")?;
        let clip = g
            .0
            .get(index)
            .ok_or_else(|| Failure(F2gStatus::InvalidArgument, format!("clip {index} of {}", g.0.len())))?;
        let svg = render_svg(clip, &bones(), &RenderConfig { every })?;
        std::fs::write(path_arg(path)?, svg).map_err(Error::from)?;
        Ok(())
    })
}

/// Scores `generated` against `reference` with the default metric settings.
///
/// # Safety
/// Both handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn f2g_evaluate(
    reference: *const F2gGestures,
    generated: *const F2gGestures,
    out: *mut F2gMetrics,
) -> F2gStatus {
    guard(|| {
        let r = get(reference, "reference")?;
        let g = get(generated, "generated")?;
        if out.is_null() {
            return Err(null("metrics output"));
        }
        let rep = evaluate(&r.0, &g.0, None, MetricsConfig::default())?;
        *out = F2gMetrics { mae: rep.mae, ape: rep.ape, pck: rep.pck, fgd: rep.fgd, bc: rep.bc, diversity: rep.diversity };
        Ok(())
    })
}

/// # Safety
/// `gestures` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn f2g_gestures_free(gestures: *mut F2gGestures) {
    if !gestures.is_null() {
        drop(Box::from_raw(gestures));
    }
}
