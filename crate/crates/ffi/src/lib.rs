//! C ABI for the path-bandwidth tracking engine.
//!
//! The surface is a single opaque handle created from two JSON documents
//! (a topology and a run config), a step function that pulls measurements
//! through a caller-supplied callback, and accessors for the per-path
//! estimates and confidence intervals. Every call returns an error code;
//! the matching human-readable message is kept per thread and read back
//! with [`pab_last_error`].
//!
//! The generated header lands in `include/pabtrack.h` at build time.

use std::cell::RefCell;
use std::ffi::{c_char, c_void, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use pabtrack::chirp::{ChirpObservation, ChirpSpec};
use pabtrack::config::RunConfig;
use pabtrack::estimator::SelectionMode;
use pabtrack::sim::derive_seeds;
use pabtrack::topology::{parse_topology, PathId};
use pabtrack::tracker::{Measurer, Tracker};
use pabtrack::PabError;

/// Success.
pub const PAB_OK: i32 = 0;
/// A required pointer argument was null.
pub const PAB_ERR_NULL: i32 = -1;
/// Invalid input: malformed JSON, bad UTF-8, or a rejected configuration.
pub const PAB_ERR_CONFIG: i32 = -2;
/// A measurement failed or produced no usable windows.
pub const PAB_ERR_MEASUREMENT: i32 = -3;
/// An I/O error surfaced from the engine.
pub const PAB_ERR_IO: i32 = -4;
/// The measurement callback returned a nonzero status.
pub const PAB_ERR_CALLBACK: i32 = -5;
/// A caller-provided output buffer is too small.
pub const PAB_ERR_BUFFER: i32 = -6;
/// The engine panicked; the handle is still valid but the step was lost.
pub const PAB_ERR_PANIC: i32 = -7;

/// Estimate selection: largest rate with all mass at or above it inside the
/// confidence interval.
pub const PAB_MODE_LOWER_BOUND: i32 = 0;
/// Estimate selection: 25th percentile of the path marginal.
pub const PAB_MODE_PERCENTILE_25: i32 = 1;
/// Estimate selection: median of the path marginal.
pub const PAB_MODE_MEDIAN: i32 = 2;

/// Measurement callback.
///
/// `rates` holds the planned per-window input rates in Mbps for the chirp the
/// engine wants sent on `path`; the callback must write the measured output
/// rate of each window into `out_rates` (same length `n_rates`). Writing a
/// negative value drops that window (lost or discarded). Return 0 on success;
/// any other value aborts the step and surfaces as `PAB_ERR_CALLBACK`.
pub type PabMeasureFn = Option<
    unsafe extern "C" fn(
        ctx: *mut c_void,
        path: u32,
        rates: *const f64,
        n_rates: usize,
        out_rates: *mut f64,
    ) -> i32,
>;

/// Opaque tracking engine handle.
pub struct PabTracker {
    tracker: Tracker,
    epsilon: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let clean = msg.replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(clean).unwrap_or_default());
}

fn code_of(err: &PabError) -> i32 {
    match err {
        PabError::Io(_) => PAB_ERR_IO,
        PabError::Measurement(_) | PabError::EmptyObservation { .. } => PAB_ERR_MEASUREMENT,
        _ => PAB_ERR_CONFIG,
    }
}

fn fail(err: &PabError) -> i32 {
    set_error(&err.to_string());
    code_of(err)
}

/// Last error message on this thread, empty when no call has failed yet.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, i32> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(PAB_ERR_NULL);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        PAB_ERR_CONFIG
    })
}

/// Creates a tracker from a topology JSON document and a run-config JSON
/// document (missing config keys take defaults). Returns null on failure;
/// inspect [`pab_last_error`]. Free with [`pab_tracker_free`].
///
/// # Safety
/// Both pointers must be null-terminated strings or null.
#[no_mangle]
pub unsafe extern "C" fn pab_tracker_new(
    topology_json: *const c_char,
    config_json: *const c_char,
) -> *mut PabTracker {
    let topo_text = match read_str(topology_json) {
        Ok(s) => s,
        Err(_) => return std::ptr::null_mut(),
    };
    let cfg_text = match read_str(config_json) {
        Ok(s) => s,
        Err(_) => return std::ptr::null_mut(),
    };
    let built = catch_unwind(|| -> Result<PabTracker, PabError> {
        let topo = parse_topology(topo_text)?;
        let cfg = RunConfig::from_json(cfg_text)?;
        cfg.validate()?;
        let seeds = derive_seeds(cfg.seed, 1)[0];
        let tracker = Tracker::new(&topo, cfg.tracker_params(seeds.filter, seeds.sampler)?)?;
        Ok(PabTracker {
            tracker,
            epsilon: cfg.epsilon,
        })
    });
    match built {
        Ok(Ok(h)) => Box::into_raw(Box::new(h)),
        Ok(Err(e)) => {
            fail(&e);
            std::ptr::null_mut()
        }
        Err(_) => {
            set_error("panic while building tracker");
            std::ptr::null_mut()
        }
    }
}

/// Destroys a tracker. Null is a no-op.
///
/// # Safety
/// `handle` must be a pointer from [`pab_tracker_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pab_tracker_free(handle: *mut PabTracker) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

unsafe fn deref<'a>(handle: *const PabTracker) -> Result<&'a PabTracker, i32> {
    if handle.is_null() {
        set_error("null tracker handle");
        return Err(PAB_ERR_NULL);
    }
    Ok(&*handle)
}

/// Number of paths under track, or `PAB_ERR_NULL`.
///
/// # Safety
/// `handle` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn pab_tracker_path_count(handle: *const PabTracker) -> i32 {
    match deref(handle) {
        Ok(h) => h.tracker.topology().n_paths() as i32,
        Err(c) => c,
    }
}

/// Number of links in the topology, or `PAB_ERR_NULL`.
///
/// # Safety
/// `handle` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn pab_tracker_link_count(handle: *const PabTracker) -> i32 {
    match deref(handle) {
        Ok(h) => h.tracker.topology().n_links() as i32,
        Err(c) => c,
    }
}

/// Measurements absorbed so far, or a negative error code.
///
/// # Safety
/// `handle` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn pab_tracker_measurements(handle: *const PabTracker) -> i64 {
    match deref(handle) {
        Ok(h) => h.tracker.measurements() as i64,
        Err(c) => c as i64,
    }
}

/// Completed belief-update boundaries so far, or a negative error code.
///
/// # Safety
/// `handle` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn pab_tracker_slices(handle: *const PabTracker) -> i64 {
    match deref(handle) {
        Ok(h) => h.tracker.slices() as i64,
        Err(c) => c as i64,
    }
}

struct CallbackMeasurer {
    cb: unsafe extern "C" fn(*mut c_void, u32, *const f64, usize, *mut f64) -> i32,
    ctx: *mut c_void,
    epsilon: f64,
    time_index: u64,
}

impl Measurer for CallbackMeasurer {
    fn measure(
        &mut self,
        path: PathId,
        spec: &ChirpSpec,
    ) -> Result<ChirpObservation, PabError> {
        let rates = spec.window_rates();
        let mut out = vec![-1.0f64; rates.len()];
        let rc = unsafe {
            (self.cb)(
                self.ctx,
                path.index() as u32,
                rates.as_ptr(),
                rates.len(),
                out.as_mut_ptr(),
            )
        };
        if rc != 0 {
            return Err(PabError::Measurement(format!(
                "measurement callback returned {rc}"
            )));
        }
        let mut kept_rates = Vec::new();
        let mut out_rates = Vec::new();
        let mut outcomes = Vec::new();
        for (i, &y) in out.iter().enumerate() {
            if y.is_finite() && y >= 0.0 {
                kept_rates.push(rates[i]);
                out_rates.push(y);
                outcomes.push(y >= rates[i] - self.epsilon);
            }
        }
        if kept_rates.is_empty() {
            return Err(PabError::EmptyObservation {
                surviving: 0,
                total: rates.len(),
            });
        }
        Ok(ChirpObservation {
            path,
            rates: kept_rates,
            out_rates,
            outcomes,
            time_index: self.time_index,
        })
    }
}

/// Runs one measurement step: the engine picks a path and chirp rates, pulls
/// the measurement through `measure`, and absorbs the evidence (advancing the
/// belief state on slice boundaries). On success writes the probed path index
/// to `out_path` (when non-null) and returns `PAB_OK`. A callback abort
/// returns `PAB_ERR_CALLBACK`; the path selection for that step is consumed.
///
/// # Safety
/// `handle` must be live; `measure` must be a valid function pointer
/// honoring the [`PabMeasureFn`] contract for the duration of the call.
#[no_mangle]
pub unsafe extern "C" fn pab_tracker_step(
    handle: *mut PabTracker,
    measure: PabMeasureFn,
    ctx: *mut c_void,
    out_path: *mut u32,
) -> i32 {
    if handle.is_null() {
        set_error("null tracker handle");
        return PAB_ERR_NULL;
    }
    let Some(cb) = measure else {
        set_error("null measurement callback");
        return PAB_ERR_NULL;
    };
    let h = &mut *handle;
    let mut measurer = CallbackMeasurer {
        cb,
        ctx,
        epsilon: h.epsilon,
        time_index: h.tracker.measurements(),
    };
    let stepped = catch_unwind(AssertUnwindSafe(|| h.tracker.step(&mut measurer)));
    match stepped {
        Ok(Ok(step)) => {
            if !out_path.is_null() {
                *out_path = step.record.path;
            }
            PAB_OK
        }
        Ok(Err(e)) => {
            let code = fail(&e);
            if code == PAB_ERR_MEASUREMENT && e.to_string().contains("callback returned") {
                PAB_ERR_CALLBACK
            } else {
                code
            }
        }
        Err(_) => {
            set_error("panic during tracking step");
            PAB_ERR_PANIC
        }
    }
}

/// Writes one estimate per path (Mbps) under the given `PAB_MODE_*` rule into
/// `out` and returns the number written; `cap` must be at least the path
/// count.
///
/// # Safety
/// `handle` must be live or null; `out` must point to `cap` writable u32s.
#[no_mangle]
pub unsafe extern "C" fn pab_tracker_estimates(
    handle: *const PabTracker,
    mode: i32,
    out: *mut u32,
    cap: usize,
) -> i32 {
    let h = match deref(handle) {
        Ok(h) => h,
        Err(c) => return c,
    };
    if out.is_null() {
        set_error("null output buffer");
        return PAB_ERR_NULL;
    }
    let mode = match mode {
        PAB_MODE_LOWER_BOUND => SelectionMode::LowerBound,
        PAB_MODE_PERCENTILE_25 => SelectionMode::Percentile25,
        PAB_MODE_MEDIAN => SelectionMode::Median,
        other => {
            set_error(&format!("unknown selection mode {other}"));
            return PAB_ERR_CONFIG;
        }
    };
    let est = h.tracker.estimates(mode);
    if cap < est.len() {
        set_error(&format!("buffer holds {cap}, need {}", est.len()));
        return PAB_ERR_BUFFER;
    }
    for (i, v) in est.iter().enumerate() {
        *out.add(i) = *v;
    }
    est.len() as i32
}

/// Writes the per-path confidence-interval bounds (Mbps, inclusive) into `lo`
/// and `hi` and returns the number of paths written; `cap` must be at least
/// the path count.
///
/// # Safety
/// `handle` must be live or null; `lo` and `hi` must each point to `cap`
/// writable u32s.
#[no_mangle]
pub unsafe extern "C" fn pab_tracker_intervals(
    handle: *const PabTracker,
    lo: *mut u32,
    hi: *mut u32,
    cap: usize,
) -> i32 {
    let h = match deref(handle) {
        Ok(h) => h,
        Err(c) => return c,
    };
    if lo.is_null() || hi.is_null() {
        set_error("null output buffer");
        return PAB_ERR_NULL;
    }
    let cis = h.tracker.confidence_intervals();
    if cap < cis.len() {
        set_error(&format!("buffer holds {cap}, need {}", cis.len()));
        return PAB_ERR_BUFFER;
    }
    for (i, ci) in cis.iter().enumerate() {
        *lo.add(i) = ci.lo;
        *hi.add(i) = ci.hi;
    }
    cis.len() as i32
}

/// 1 when the last message-passing pass converged, 0 when it hit the
/// iteration cap, or a negative error code.
///
/// # Safety
/// `handle` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn pab_tracker_converged(handle: *const PabTracker) -> i32 {
    match deref(handle) {
        Ok(_h) => {
            // The tracker records convergence in each step record; expose the
            // most recent flag through the marginals' consistency: a tracker
            // always holds the flag of its last BP pass.
            i32::from(_h.tracker.last_converged())
        }
        Err(c) => c,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pabtrack::topology::topology_to_json;

    fn topo_json() -> CString {
        let topo = pabtrack::topology::generate_random_topology(3, 7).unwrap();
        CString::new(topology_to_json(&topo).unwrap()).unwrap()
    }

    fn cfg_json(extra: &str) -> CString {
        CString::new(format!("{{\"seed\": 5{extra}}}")).unwrap()
    }

    /// Reports every window at its input rate: a path whose bandwidth sits
    /// above every probed rate.
    unsafe extern "C" fn echo_cb(
        _ctx: *mut c_void,
        _path: u32,
        rates: *const f64,
        n: usize,
        out: *mut f64,
    ) -> i32 {
        for i in 0..n {
            *out.add(i) = *rates.add(i);
        }
        0
    }

    unsafe extern "C" fn abort_cb(
        _ctx: *mut c_void,
        _path: u32,
        _rates: *const f64,
        _n: usize,
        _out: *mut f64,
    ) -> i32 {
        42
    }

    /// Drops every window.
    unsafe extern "C" fn drop_all_cb(
        _ctx: *mut c_void,
        _path: u32,
        _rates: *const f64,
        n: usize,
        out: *mut f64,
    ) -> i32 {
        for i in 0..n {
            *out.add(i) = -1.0;
        }
        0
    }

    #[test]
    fn lifecycle_and_steps() {
        unsafe {
            let topo = topo_json();
            let cfg = cfg_json(", \"lambda\": 3");
            let h = pab_tracker_new(topo.as_ptr(), cfg.as_ptr());
            assert!(!h.is_null());
            let n_paths = pab_tracker_path_count(h);
            assert!(n_paths > 0);
            assert!(pab_tracker_link_count(h) > 0);
            assert_eq!(pab_tracker_measurements(h), 0);

            let mut path = u32::MAX;
            for _ in 0..6 {
                assert_eq!(pab_tracker_step(h, Some(echo_cb), std::ptr::null_mut(), &mut path), PAB_OK);
                assert!((path as i32) < n_paths);
            }
            assert_eq!(pab_tracker_measurements(h), 6);
            assert_eq!(pab_tracker_slices(h), 2);

            let mut est = vec![0u32; n_paths as usize];
            for mode in [PAB_MODE_LOWER_BOUND, PAB_MODE_PERCENTILE_25, PAB_MODE_MEDIAN] {
                let n = pab_tracker_estimates(h, mode, est.as_mut_ptr(), est.len());
                assert_eq!(n, n_paths);
                assert!(est.iter().all(|&r| (1..=100).contains(&r)));
            }
            let mut lo = vec![0u32; n_paths as usize];
            let mut hi = vec![0u32; n_paths as usize];
            assert_eq!(pab_tracker_intervals(h, lo.as_mut_ptr(), hi.as_mut_ptr(), lo.len()), n_paths);
            assert!(lo.iter().zip(&hi).all(|(a, b)| a <= b));
            assert!(pab_tracker_converged(h) >= 0);
            pab_tracker_free(h);
        }
    }

    #[test]
    fn all_pass_probes_push_estimates_up() {
        unsafe {
            let topo = topo_json();
            let cfg = cfg_json(", \"lambda\": 5");
            let h = pab_tracker_new(topo.as_ptr(), cfg.as_ptr());
            assert!(!h.is_null());
            let n_paths = pab_tracker_path_count(h) as usize;
            for _ in 0..60 {
                assert_eq!(
                    pab_tracker_step(h, Some(echo_cb), std::ptr::null_mut(), std::ptr::null_mut()),
                    PAB_OK
                );
            }
            let mut est = vec![0u32; n_paths];
            pab_tracker_estimates(h, PAB_MODE_MEDIAN, est.as_mut_ptr(), est.len());
            let mean = est.iter().sum::<u32>() as f64 / est.len() as f64;
            // Every probe passed at every rate, so the posterior should sit
            // well above the uniform-prior median of ~50.
            assert!(mean > 60.0, "mean median estimate {mean}");
            pab_tracker_free(h);
        }
    }

    #[test]
    fn error_paths_set_messages() {
        unsafe {
            let topo = topo_json();
            let bad = CString::new("{not json").unwrap();
            assert!(pab_tracker_new(topo.as_ptr(), bad.as_ptr()).is_null());
            let msg = CStr::from_ptr(pab_last_error()).to_str().unwrap();
            assert!(!msg.is_empty());

            let rejected = cfg_json(", \"gamma\": 2.0");
            assert!(pab_tracker_new(topo.as_ptr(), rejected.as_ptr()).is_null());
            let msg = CStr::from_ptr(pab_last_error()).to_str().unwrap();
            assert!(msg.contains("gamma"), "{msg}");

            assert!(pab_tracker_new(std::ptr::null(), topo.as_ptr()).is_null());
            assert_eq!(pab_tracker_path_count(std::ptr::null()), PAB_ERR_NULL);

            let cfg = cfg_json("");
            let h = pab_tracker_new(topo.as_ptr(), cfg.as_ptr());
            assert!(!h.is_null());
            assert_eq!(
                pab_tracker_step(h, Some(abort_cb), std::ptr::null_mut(), std::ptr::null_mut()),
                PAB_ERR_CALLBACK
            );
            assert_eq!(
                pab_tracker_step(h, None, std::ptr::null_mut(), std::ptr::null_mut()),
                PAB_ERR_NULL
            );
            assert_eq!(
                pab_tracker_step(h, Some(drop_all_cb), std::ptr::null_mut(), std::ptr::null_mut()),
                PAB_ERR_MEASUREMENT
            );
            let mut est = vec![0u32; 1];
            assert_eq!(pab_tracker_estimates(h, 9, est.as_mut_ptr(), 1), PAB_ERR_CONFIG);
            assert_eq!(
                pab_tracker_estimates(h, PAB_MODE_MEDIAN, est.as_mut_ptr(), 1),
                PAB_ERR_BUFFER
            );
            pab_tracker_free(h);
            pab_tracker_free(std::ptr::null_mut());
        }
    }

    #[test]
    fn same_seed_gives_identical_trajectories() {
        unsafe {
            let topo = topo_json();
            let cfg = cfg_json("");
            let run = |_: ()| {
                let h = pab_tracker_new(topo.as_ptr(), cfg.as_ptr());
                let n = pab_tracker_path_count(h) as usize;
                let mut paths = Vec::new();
                let mut p = 0u32;
                for _ in 0..12 {
                    pab_tracker_step(h, Some(echo_cb), std::ptr::null_mut(), &mut p);
                    paths.push(p);
                }
                let mut est = vec![0u32; n];
                pab_tracker_estimates(h, PAB_MODE_MEDIAN, est.as_mut_ptr(), n);
                pab_tracker_free(h);
                (paths, est)
            };
            assert_eq!(run(()), run(()));
        }
    }
}
