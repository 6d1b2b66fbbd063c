//! C ABI over the tessera engine.
//!
//! Every function returns a [`TesseraStatus`]. On failure the message is kept
//! per thread and can be read with [`tessera_last_error`]. Objects are opaque
//! handles created by `*_new`/`*_from_*` calls and released with the matching
//! `*_free`. Strings returned through `char **` out-parameters are owned by the
//! caller and released with [`tessera_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use tessera::denoiser::PromptId;
use tessera::engine::{Engine, EngineConfig, EngineError, RunOptions, RunResult};
use tessera::{
    solve_rectangular, solve_square, tile_cost_matrix, CopySpec, CostMatrix, ImageGrid, TilePermutation, Tiling,
    TransformSpec,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TesseraStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    TransformError = 4,
    AssignmentError = 5,
    EngineError = 6,
    Panic = 7,
}

/// A dense `height × width × channels` float image, row-major, channels last.
pub struct TesseraImage {
    inner: ImageGrid,
}

/// A tile permutation, ring rotation, flip configuration or identity.
pub struct TesseraTransform {
    inner: TransformSpec,
}

/// The outputs of one engine run.
pub struct TesseraRun {
    inner: RunResult,
}

struct Failure(TesseraStatus, String);

impl Failure {
    fn invalid(msg: impl Into<String>) -> Self {
        Self(TesseraStatus::InvalidArgument, msg.into())
    }
}

impl From<tessera::ImageError> for Failure {
    fn from(e: tessera::ImageError) -> Self {
        Self::invalid(e.to_string())
    }
}

impl From<tessera::TransformError> for Failure {
    fn from(e: tessera::TransformError) -> Self {
        Self(TesseraStatus::TransformError, e.to_string())
    }
}

impl From<tessera::assignment::AssignmentError> for Failure {
    fn from(e: tessera::assignment::AssignmentError) -> Self {
        Self(TesseraStatus::AssignmentError, e.to_string())
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        Self(TesseraStatus::EngineError, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TesseraStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            TesseraStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            TesseraStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(TesseraStatus::NullPointer, format!("{what} is null"))
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn input<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::invalid(format!("{what} is not UTF-8")))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("string out-pointer"));
    }
    *out = CString::new(s).map_err(|e| Failure::invalid(e.to_string()))?.into_raw();
    Ok(())
}

/// Message of the last failed call on this thread, or NULL after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn tessera_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must come from this library, or be NULL.
#[no_mangle]
pub unsafe extern "C" fn tessera_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Copies `len == height * width * channels` pixel values in `[0, 1]`.
///
/// # Safety
/// `data` must point to `len` floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tessera_image_new(
    height: usize,
    width: usize,
    channels: usize,
    data: *const f32,
    len: usize,
    out: *mut *mut TesseraImage,
) -> TesseraStatus {
    guard(|| {
        let values = input(data, len, "data")?.to_vec();
        let inner = ImageGrid::pixels(height, width, channels, values)?;
        put(out, TesseraImage { inner }, "out")
    })
}

/// # Safety
/// `image` must come from this library, or be NULL.
#[no_mangle]
pub unsafe extern "C" fn tessera_image_free(image: *mut TesseraImage) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

/// # Safety
/// `image` must be a live handle; the out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn tessera_image_shape(
    image: *const TesseraImage,
    height: *mut usize,
    width: *mut usize,
    channels: *mut usize,
) -> TesseraStatus {
    guard(|| {
        let (h, w, c) = borrow(image, "image")?.inner.shape();
        for (p, v) in [(height, h), (width, w), (channels, c)] {
            *p.as_mut().ok_or_else(|| null("shape out-pointer"))? = v;
        }
        Ok(())
    })
}

/// Copies the values into `out`, which must hold at least
/// `height * width * channels` floats.
///
/// # Safety
/// `out` must point to `len` writable floats.
#[no_mangle]
pub unsafe extern "C" fn tessera_image_data(image: *const TesseraImage, out: *mut f32, len: usize) -> TesseraStatus {
    guard(|| {
        let values = borrow(image, "image")?.inner.values();
        if len < values.len() {
            return Err(Failure(
                TesseraStatus::BufferTooSmall,
                format!("buffer holds {len} floats, image has {}", values.len()),
            ));
        }
        output(out, values.len(), "out")?.copy_from_slice(values);
        Ok(())
    })
}

/// Parses a transform from its JSON form, e.g.
/// `{"kind": "rings", "angular_step": 5, "rotations": [0, 90]}`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tessera_transform_from_json(json: *const c_char, out: *mut *mut TesseraTransform) -> TesseraStatus {
    guard(|| {
        let inner: TransformSpec =
            serde_json::from_str(text(json, "json")?).map_err(|e| Failure::invalid(e.to_string()))?;
        put(out, TesseraTransform { inner }, "out")
    })
}

/// A permutation of an `m × m` grid of `tile_h × tile_w` tiles. Output tile
/// `j` takes source tile `mapping[j]`.
///
/// # Safety
/// `mapping` must point to `m * m` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tessera_permutation_new(
    m: usize,
    tile_h: usize,
    tile_w: usize,
    mapping: *const usize,
    len: usize,
    out: *mut *mut TesseraTransform,
) -> TesseraStatus {
    guard(|| {
        let tiling = Tiling::new(m, tile_h, tile_w)?;
        let perm = TilePermutation::new(tiling, input(mapping, len, "mapping")?.to_vec())?;
        put(
            out,
            TesseraTransform {
                inner: TransformSpec::Permutation(perm),
            },
            "out",
        )
    })
}

/// # Safety
/// `transform` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tessera_transform_to_json(transform: *const TesseraTransform, out: *mut *mut c_char) -> TesseraStatus {
    guard(|| {
        let json = serde_json::to_string(&borrow(transform, "transform")?.inner)
            .map_err(|e| Failure::invalid(e.to_string()))?;
        put_string(out, json)
    })
}

/// # Safety
/// `transform` must come from this library, or be NULL.
#[no_mangle]
pub unsafe extern "C" fn tessera_transform_free(transform: *mut TesseraTransform) {
    if !transform.is_null() {
        drop(Box::from_raw(transform));
    }
}

/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tessera_transform_apply(
    transform: *const TesseraTransform,
    image: *const TesseraImage,
    out: *mut *mut TesseraImage,
) -> TesseraStatus {
    guard(|| {
        let img = borrow(transform, "transform")?.inner.apply(&borrow(image, "image")?.inner)?;
        put(out, TesseraImage { inner: img }, "out")
    })
}

/// # Safety
/// `transform` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tessera_transform_invert(
    transform: *const TesseraTransform,
    out: *mut *mut TesseraTransform,
) -> TesseraStatus {
    guard(|| {
        let inner = borrow(transform, "transform")?.inner.invert();
        put(out, TesseraTransform { inner }, "out")
    })
}

/// The transform taking `base`'s frame to `target`'s: `target ∘ base⁻¹`.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tessera_transform_relative(
    target: *const TesseraTransform,
    base: *const TesseraTransform,
    out: *mut *mut TesseraTransform,
) -> TesseraStatus {
    guard(|| {
        let inner = TransformSpec::relative(&borrow(target, "target")?.inner, &borrow(base, "base")?.inner)?;
        put(out, TesseraTransform { inner }, "out")
    })
}

/// Row-major `n × n` costs; `mapping[j]` receives the row assigned to column
/// `j`, and `total_cost` (if not NULL) the summed cost.
///
/// # Safety
/// `costs` must hold `n * n` doubles and `mapping` room for `n` values.
#[no_mangle]
pub unsafe extern "C" fn tessera_solve_square(
    costs: *const f64,
    n: usize,
    mapping: *mut usize,
    total_cost: *mut f64,
) -> TesseraStatus {
    guard(|| {
        let entries = input(costs, n * n, "costs")?.to_vec();
        let a = solve_square(&CostMatrix::new(n, n, entries)?)?;
        output(mapping, n, "mapping")?.copy_from_slice(&a.mapping);
        if let Some(t) = total_cost.as_mut() {
            *t = a.total_cost;
        }
        Ok(())
    })
}

/// As [`tessera_solve_square`] for `rows × cols` costs, where row `i` may be
/// used up to `copies[i]` times.
///
/// # Safety
/// `costs` must hold `rows * cols` doubles, `copies` `rows` values and
/// `mapping` room for `cols` values.
#[no_mangle]
pub unsafe extern "C" fn tessera_solve_rectangular(
    costs: *const f64,
    rows: usize,
    cols: usize,
    copies: *const usize,
    mapping: *mut usize,
    total_cost: *mut f64,
) -> TesseraStatus {
    guard(|| {
        let entries = input(costs, rows * cols, "costs")?.to_vec();
        let spec = CopySpec::new(input(copies, rows, "copies")?.to_vec())?;
        let a = solve_rectangular(&CostMatrix::new(rows, cols, entries)?, &spec)?;
        output(mapping, cols, "mapping")?.copy_from_slice(&a.mapping);
        if let Some(t) = total_cost.as_mut() {
            *t = a.total_cost;
        }
        Ok(())
    })
}

/// L2 distances between the `m * m` tiles of `source` (rows) and `target`
/// (columns), written row-major into `out`.
///
/// # Safety
/// Handles must be live; `out` must hold `len >= m^4` doubles.
#[no_mangle]
pub unsafe extern "C" fn tessera_tile_cost_matrix(
    source: *const TesseraImage,
    target: *const TesseraImage,
    m: usize,
    out: *mut f64,
    len: usize,
) -> TesseraStatus {
    guard(|| {
        let source = &borrow(source, "source")?.inner;
        let target = &borrow(target, "target")?.inner;
        let tiling = Tiling::for_image(m, source.height(), source.width())?;
        let d = tile_cost_matrix(source, target, tiling)?;
        let entries = d.entries();
        if len < entries.len() {
            return Err(Failure(
                TesseraStatus::BufferTooSmall,
                format!("buffer holds {len} doubles, matrix has {}", entries.len()),
            ));
        }
        output(out, entries.len(), "out")?.copy_from_slice(entries);
        Ok(())
    })
}

/// Runs the engine against the built-in mock denoiser.
///
/// `config_json` is an engine config such as
/// `{"mode": "fixed_pixel", "prompts": ["a"], "tiles": 4}`. Prompt `i` is
/// pulled towards `targets[i]` with strength `pull` in `(0, 1]`. Free modes
/// take their image size from the targets; latent modes encode with a
/// block-average codec of factor `latent_scale`. `workers == 0` uses every
/// core; results do not depend on it.
///
/// # Safety
/// `sources` and `targets` must point to `n_sources` / `n_targets` live
/// handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tessera_run_mock(
    config_json: *const c_char,
    sources: *const *const TesseraImage,
    n_sources: usize,
    targets: *const *const TesseraImage,
    n_targets: usize,
    pull: f64,
    latent_scale: usize,
    workers: usize,
    out: *mut *mut TesseraRun,
) -> TesseraStatus {
    guard(|| {
        let config: EngineConfig =
            serde_json::from_str(text(config_json, "config_json")?).map_err(|e| Failure::invalid(e.to_string()))?;
        let images = |p: *const *const TesseraImage, n: usize, what: &str| -> Result<Vec<ImageGrid>, Failure> {
            input(p, n, what)?
                .iter()
                .map(|&h| borrow(h, what).map(|i| i.inner.clone()))
                .collect()
        };
        let sources = images(sources, n_sources, "sources")?;
        let targets = images(targets, n_targets, "targets")?;
        if targets.len() != config.prompts.len() {
            return Err(Failure::invalid(format!(
                "{} targets for {} prompts",
                targets.len(),
                config.prompts.len()
            )));
        }
        let prompts = config.prompts.iter().map(|p| PromptId::new(p.clone())).zip(targets).collect();
        let built = tessera::runner::mock_backend(prompts, pull, latent_scale.max(1), None)
            .map_err(|e| Failure::invalid(e.to_string()))?;
        let shape = if config.mode.is_fixed() { None } else { built.shape };
        let engine = Engine::new(
            config,
            built.backend,
            sources,
            shape,
            RunOptions {
                workers,
                record_snapshots: false,
            },
        )?;
        put(out, TesseraRun { inner: engine.run()? }, "out")
    })
}

/// # Safety
/// `run` must come from this library, or be NULL.
#[no_mangle]
pub unsafe extern "C" fn tessera_run_free(run: *mut TesseraRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of output images, one per prompt.
///
/// # Safety
/// `run` must be live; `count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tessera_run_image_count(run: *const TesseraRun, count: *mut usize) -> TesseraStatus {
    guard(|| {
        let n = borrow(run, "run")?.inner.images.len();
        *count.as_mut().ok_or_else(|| null("count"))? = n;
        Ok(())
    })
}

/// A copy of output image `index`.
///
/// # Safety
/// `run` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tessera_run_image(run: *const TesseraRun, index: usize, out: *mut *mut TesseraImage) -> TesseraStatus {
    guard(|| {
        let images = &borrow(run, "run")?.inner.images;
        let img = images
            .get(index)
            .ok_or_else(|| Failure::invalid(format!("image {index} of {}", images.len())))?;
        put(out, TesseraImage { inner: img.clone() }, "out")
    })
}

/// The final transform of prompt `index`. Fails for runs that produce tile
/// selections (multiple sources or copies); use
/// [`tessera_run_arrangements_json`] for those.
///
/// # Safety
/// `run` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tessera_run_transform(
    run: *const TesseraRun,
    index: usize,
    out: *mut *mut TesseraTransform,
) -> TesseraStatus {
    guard(|| {
        let arrangements = &borrow(run, "run")?.inner.arrangements;
        let a = arrangements
            .get(index)
            .ok_or_else(|| Failure::invalid(format!("arrangement {index} of {}", arrangements.len())))?;
        let t = a
            .transform()
            .ok_or_else(|| Failure::invalid(format!("prompt {index} produced a tile selection")))?;
        put(out, TesseraTransform { inner: t.clone() }, "out")
    })
}

/// All final arrangements as a JSON array.
///
/// # Safety
/// `run` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tessera_run_arrangements_json(run: *const TesseraRun, out: *mut *mut c_char) -> TesseraStatus {
    guard(|| {
        let json = serde_json::to_string(&borrow(run, "run")?.inner.arrangements)
            .map_err(|e| Failure::invalid(e.to_string()))?;
        put_string(out, json)
    })
}

/// Per mainline step, how many tile slots changed assignment. Writes up to
/// `len` entries and stores the full length in `steps`.
///
/// # Safety
/// `run` must be live; `out` must hold `len` values; `steps` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tessera_run_change_trace(
    run: *const TesseraRun,
    out: *mut usize,
    len: usize,
    steps: *mut usize,
) -> TesseraStatus {
    guard(|| {
        let trace = borrow(run, "run")?.inner.change_trace();
        *steps.as_mut().ok_or_else(|| null("steps"))? = trace.len();
        let n = len.min(trace.len());
        output(out, n, "out")?.copy_from_slice(&trace[..n]);
        Ok(())
    })
}
