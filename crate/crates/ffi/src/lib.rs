//! C interface to the mqsvis engine.
//!
//! Every function returns an [`MqsStatus`]; results go through out-pointers.
//! On failure [`mqs_last_error`] describes the error of the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use mqsvis::error::Error;
use mqsvis::hyperterms::GainParams;
use mqsvis::indicators::{compute_tile, BlurWidth, TileSpec, DEFAULT_THREE_SIGMA};
use mqsvis::preselection::{moment_sum, ModelConfig, StrategyConfig};
use mqsvis::series::PrecisionConfig;

/// Number of blur widths reported by [`mqs_model_tile`].
pub const MQS_BLUR_WIDTHS: usize = 4;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MqsStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    DegeneratePreselection = 3,
    TableRange = 4,
    MarginTooSmall = 5,
    EmptyDistribution = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Opaque model handle.
pub struct MqsModel {
    inner: ModelConfig,
}

/// Sums of one tile work item, see the partial-file format.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MqsTilePartial {
    pub prob_sum: f64,
    pub overlap_sum: f64,
    /// Blurred overlaps for `3σ̄ = 1, 1.5, 15, 150`; valid for the first
    /// `blur_count` entries.
    pub blur_overlap: [f64; MQS_BLUR_WIDTHS],
    pub blur_count: u32,
    pub sum_k: f64,
    pub sum_l: f64,
    pub sum_k2: f64,
    pub sum_l2: f64,
    pub sum_kl: f64,
    pub max_p: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> MqsStatus {
    match e {
        Error::Domain(_) => MqsStatus::Domain,
        Error::DegeneratePreselection { .. } => MqsStatus::DegeneratePreselection,
        Error::TableRange { .. } => MqsStatus::TableRange,
        Error::MarginTooSmall { .. } => MqsStatus::MarginTooSmall,
        Error::EmptyDistribution => MqsStatus::EmptyDistribution,
        Error::MissingTile { .. } | Error::MalformedPartial { .. } | Error::Io { .. } => MqsStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), MqsStatus>) -> MqsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MqsStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("internal error: {msg}"));
            MqsStatus::Panic
        }
    }
}

fn lift<T>(r: mqsvis::error::Result<T>) -> Result<T, MqsStatus> {
    r.map_err(|e| {
        set_error(&e.to_string());
        status_of(&e)
    })
}

fn null() -> MqsStatus {
    set_error("null pointer argument");
    MqsStatus::NullPointer
}

unsafe fn model_ref<'a>(model: *const MqsModel) -> Result<&'a ModelConfig, MqsStatus> {
    // SAFETY: caller passes a handle from mqs_model_new or null
    unsafe { model.as_ref() }.map(|m| &m.inner).ok_or_else(null)
}

unsafe fn write_out<T>(out: *mut T, v: T) -> Result<(), MqsStatus> {
    if out.is_null() {
        return Err(null());
    }
    // SAFETY: non-null and, per the contract, valid for writes
    unsafe { out.write(v) };
    Ok(())
}

/// Message of the last failed call on this thread, empty after a success.
/// The pointer stays valid until the next call into this library on the same
/// thread.
#[no_mangle]
pub extern "C" fn mqs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mqs_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version string"),
    };
    VERSION.as_ptr()
}

/// Builds a model for mean photon parameter `m`, threshold `dth` and
/// reflectivity `r` (0 selects the theoretical projector), and computes its
/// normalization. `eps_rel <= 0` selects the default precision.
///
/// # Safety
/// `out` must be valid for writing one pointer. Free the handle with
/// [`mqs_model_free`].
#[no_mangle]
pub unsafe extern "C" fn mqs_model_new(m: f64, dth: u64, r: f64, eps_rel: f64, out: *mut *mut MqsModel) -> MqsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let prec = if eps_rel > 0.0 {
            lift(PrecisionConfig::new(eps_rel))?
        } else {
            PrecisionConfig::default()
        };
        let gain = lift(GainParams::from_mean(m))?;
        let presel = lift(mqsvis::cli::preselection(dth, r))?;
        let inner = lift(ModelConfig::new(gain, presel, prec, StrategyConfig::default()))?;
        unsafe { write_out(out, Box::into_raw(Box::new(MqsModel { inner }))) }
    })
}

/// # Safety
/// `model` must come from [`mqs_model_new`] and not be used afterwards. Null
/// is ignored.
#[no_mangle]
pub unsafe extern "C" fn mqs_model_free(model: *mut MqsModel) {
    if !model.is_null() {
        // SAFETY: handle was produced by Box::into_raw in mqs_model_new
        drop(unsafe { Box::from_raw(model) });
    }
}

/// `|N|²` of the model.
///
/// # Safety
/// `model` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn mqs_model_norm_sq(model: *const MqsModel, out: *mut f64) -> MqsStatus {
    guard(|| unsafe {
        let m = model_ref(model)?;
        write_out(out, m.norm_sq)
    })
}

/// `p_Φ(k, l)`.
///
/// # Safety
/// `model` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn mqs_model_probability(model: *const MqsModel, k: u64, l: u64, out: *mut f64) -> MqsStatus {
    guard(|| unsafe {
        let m = model_ref(model)?;
        write_out(out, m.probability(k, l))
    })
}

/// `E[kᵖ lᵠ]` of the preselected state.
///
/// # Safety
/// `model` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn mqs_model_moment(model: *const MqsModel, p: u32, q: u32, out: *mut f64) -> MqsStatus {
    guard(|| unsafe {
        let m = model_ref(model)?;
        write_out(out, lift(moment_sum(m, p, q))?)
    })
}

/// Fills `buf` with `p_Φ(k, l)` for `k ∈ [k0, k1)`, `l ∈ [l0, l1)`, row-major
/// in `k`. `len` is the capacity of `buf` in elements.
///
/// # Safety
/// `model` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn mqs_model_grid(
    model: *const MqsModel,
    k0: u64,
    k1: u64,
    l0: u64,
    l1: u64,
    buf: *mut f64,
    len: usize,
) -> MqsStatus {
    guard(|| unsafe {
        let m = model_ref(model)?;
        if buf.is_null() {
            return Err(null());
        }
        if k1 < k0 || l1 < l0 {
            set_error("empty or inverted range");
            return Err(MqsStatus::Domain);
        }
        let need = ((k1 - k0) * (l1 - l0)) as usize;
        if len < need {
            set_error(&format!("buffer holds {len} values, {need} required"));
            return Err(MqsStatus::BufferTooSmall);
        }
        // SAFETY: buf is non-null and valid for len >= need elements
        let dst = std::slice::from_raw_parts_mut(buf, need);
        for (d, ln) in dst.iter_mut().zip(m.log_grid(k0..k1, l0..l1)) {
            *d = ln.exp();
        }
        Ok(())
    })
}

/// Computes the work item `(x, y)` of a tiling with edge `size`. With `blur`
/// set, the four default Weierstrass widths are applied.
///
/// # Safety
/// `model` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn mqs_model_tile(
    model: *const MqsModel,
    x: u64,
    y: u64,
    size: u64,
    blur: bool,
    out: *mut MqsTilePartial,
) -> MqsStatus {
    guard(|| unsafe {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(null());
        }
        let widths: Vec<BlurWidth> = if blur { BlurWidth::defaults() } else { Vec::new() };
        let spec = lift(TileSpec::new(x, y, size, TileSpec::margin_for(&widths)))?;
        let p = lift(compute_tile(spec, m, &widths))?.partial;
        let mut blur_overlap = [0.0; MQS_BLUR_WIDTHS];
        for (slot, b) in blur_overlap.iter_mut().zip(&p.blur) {
            *slot = b.overlap_sum;
        }
        debug_assert_eq!(DEFAULT_THREE_SIGMA.len(), MQS_BLUR_WIDTHS);
        write_out(
            out,
            MqsTilePartial {
                prob_sum: p.prob_sum,
                overlap_sum: p.overlap_sum,
                blur_overlap,
                blur_count: p.blur.len() as u32,
                sum_k: p.sum_k,
                sum_l: p.sum_l,
                sum_k2: p.sum_k2,
                sum_l2: p.sum_l2,
                sum_kl: p.sum_kl,
                max_p: p.max_p,
            },
        )
    })
}
