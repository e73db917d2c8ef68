//! C ABI over `active-irs`.
//!
//! Objects are opaque handles created and freed by this library. Every
//! fallible call returns an [`AirsStatus`]; on failure a message is
//! available from [`airs_last_error`] on the same thread. Panics never
//! cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use active_irs::baselines::baseline_no_irs;
use active_irs::channel::{draw, ChannelSet};
use active_irs::config::{db_to_linear, SystemConfig};
use active_irs::ia::{run, RunResult};
use active_irs::math::CVec;
use active_irs::problem::check_feasibility;
use active_irs::Error;

/// Return codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AirsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Solver = 4,
    Runtime = 5,
    Panic = 6,
}

/// Scenario configuration.
pub struct AirsConfig {
    inner: SystemConfig,
}

/// One channel realization.
pub struct AirsChannel {
    inner: ChannelSet,
}

/// Outcome of the joint design on one channel.
pub struct AirsResult {
    run: RunResult,
    feasible: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    // interior NULs would truncate the message; replace them
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

type Failure = (AirsStatus, String);

fn from_error(e: Error) -> Failure {
    let status = match e {
        Error::Config(_) | Error::ConfigLine { .. } => AirsStatus::Config,
        Error::Contract(_) => AirsStatus::InvalidArgument,
        Error::Solver { .. } | Error::Initialization(_) => AirsStatus::Solver,
        _ => AirsStatus::Runtime,
    };
    (status, e.to_string())
}

fn null(what: &str) -> Failure {
    (AirsStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AirsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AirsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            AirsStatus::Panic
        }
    }
}

unsafe fn href<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn hmut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, v: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(v);
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn airs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Default scenario (N_T = 4, K = 3, M = 10, 4 dB, P_A = 10 mW).
#[no_mangle]
pub extern "C" fn airs_config_new() -> *mut AirsConfig {
    Box::into_raw(Box::new(AirsConfig {
        inner: SystemConfig::default(),
    }))
}

/// Parses `key=value` lines over the defaults.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn airs_config_parse(text: *const c_char, out: *mut *mut AirsConfig) -> AirsStatus {
    guard(|| {
        if text.is_null() {
            return Err(null("text"));
        }
        let s = CStr::from_ptr(text)
            .to_str()
            .map_err(|e| (AirsStatus::InvalidArgument, format!("text is not UTF-8: {e}")))?;
        let cfg = SystemConfig::from_str_config(s).map_err(from_error)?;
        put(out, Box::into_raw(Box::new(AirsConfig { inner: cfg })), "out")
    })
}

/// # Safety
/// `cfg` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn airs_config_set_seed(cfg: *mut AirsConfig, seed: u64) -> AirsStatus {
    guard(|| {
        hmut(cfg, "cfg")?.inner.seed = seed;
        Ok(())
    })
}

/// Common SINR target of all users, in dB.
///
/// # Safety
/// `cfg` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn airs_config_set_sinr_db(cfg: *mut AirsConfig, sinr_db: f64) -> AirsStatus {
    guard(|| {
        let c = hmut(cfg, "cfg")?;
        let mut next = c.inner.clone();
        next.sinr_req = db_to_linear(sinr_db);
        next.validate().map_err(from_error)?;
        c.inner = next;
        Ok(())
    })
}

/// IRS amplification power budget, in watts.
///
/// # Safety
/// `cfg` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn airs_config_set_irs_budget_w(cfg: *mut AirsConfig, budget_w: f64) -> AirsStatus {
    guard(|| {
        let c = hmut(cfg, "cfg")?;
        let mut next = c.inner.clone();
        next.irs_power_budget_w = budget_w;
        next.validate().map_err(from_error)?;
        c.inner = next;
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from this library (or be NULL) and not be used again.
#[no_mangle]
pub unsafe extern "C" fn airs_config_free(cfg: *mut AirsConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Draws geometry and fading for `seed`.
///
/// # Safety
/// `cfg` must come from this library; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn airs_channel_draw(
    cfg: *const AirsConfig,
    seed: u64,
    out: *mut *mut AirsChannel,
) -> AirsStatus {
    guard(|| {
        let c = href(cfg, "cfg")?;
        c.inner.validate().map_err(from_error)?;
        let (_, ch) = draw(&c.inner, seed);
        put(out, Box::into_raw(Box::new(AirsChannel { inner: ch })), "out")
    })
}

/// Antennas, IRS elements and users of a channel.
///
/// # Safety
/// `ch` must come from this library; outputs valid pointers.
#[no_mangle]
pub unsafe extern "C" fn airs_channel_dims(
    ch: *const AirsChannel,
    n_t: *mut usize,
    m: *mut usize,
    k: *mut usize,
) -> AirsStatus {
    guard(|| {
        let ch = &href(ch, "ch")?.inner;
        put(n_t, ch.n_t(), "n_t")?;
        put(m, ch.m(), "m")?;
        put(k, ch.k(), "k")
    })
}

/// # Safety
/// `ch` must come from this library (or be NULL) and not be used again.
#[no_mangle]
pub unsafe extern "C" fn airs_channel_free(ch: *mut AirsChannel) {
    if !ch.is_null() {
        drop(Box::from_raw(ch));
    }
}

fn dims_match(cfg: &SystemConfig, ch: &ChannelSet) -> Result<(), Failure> {
    if (cfg.n_t, cfg.irs_elements, cfg.users) != (ch.n_t(), ch.m(), ch.k()) {
        return Err((
            AirsStatus::InvalidArgument,
            "channel dimensions do not match the config".into(),
        ));
    }
    Ok(())
}

/// Minimum BS power without an IRS (baseline 1). `feasible` is set to 0
/// when the SINR targets cannot be met, in which case `power_w` is NaN.
///
/// # Safety
/// Handles must come from this library; outputs valid pointers.
#[no_mangle]
pub unsafe extern "C" fn airs_baseline_no_irs(
    cfg: *const AirsConfig,
    ch: *const AirsChannel,
    power_w: *mut f64,
    feasible: *mut c_int,
) -> AirsStatus {
    guard(|| {
        let cfg = &href(cfg, "cfg")?.inner;
        let ch = &href(ch, "ch")?.inner;
        dims_match(cfg, ch)?;
        let b = baseline_no_irs(ch, cfg).map_err(from_error)?;
        put(power_w, if b.feasible { b.bs_power_w } else { f64::NAN }, "power_w")?;
        put(feasible, c_int::from(b.feasible), "feasible")
    })
}

/// Runs the joint beamforming / IRS design.
///
/// # Safety
/// Handles must come from this library; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn airs_solve(
    cfg: *const AirsConfig,
    ch: *const AirsChannel,
    out: *mut *mut AirsResult,
) -> AirsStatus {
    guard(|| {
        let cfg = &href(cfg, "cfg")?.inner;
        let ch = &href(ch, "ch")?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        dims_match(cfg, ch)?;
        cfg.validate().map_err(from_error)?;
        let r = run(ch, cfg).map_err(from_error)?;
        let feasible = check_feasibility(ch, &r.solution, cfg, 1e-6).feasible;
        put(out, Box::into_raw(Box::new(AirsResult { run: r, feasible })), "out")
    })
}

/// BS transmit power of the returned design, in watts.
///
/// # Safety
/// `res` must come from this library; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn airs_result_bs_power_w(res: *const AirsResult, out: *mut f64) -> AirsStatus {
    guard(|| {
        let r = href(res, "res")?;
        put(out, r.run.solution.w.iter().map(|w| w.norm_squared()).sum(), "out")
    })
}

/// Subproblems solved; 0 for a NULL handle.
///
/// # Safety
/// `res` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn airs_result_iterations(res: *const AirsResult) -> usize {
    res.as_ref().map_or(0, |r| r.run.iterations)
}

/// 1 when the design meets every SINR target and the IRS budget, else 0.
///
/// # Safety
/// `res` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn airs_result_feasible(res: *const AirsResult) -> c_int {
    res.as_ref().map_or(0, |r| c_int::from(r.feasible))
}

unsafe fn copy_complex(
    v: &CVec,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> Result<(), Failure> {
    if re.is_null() || im.is_null() {
        return Err(null("re/im"));
    }
    if len != v.len() {
        return Err((
            AirsStatus::InvalidArgument,
            format!("buffer length {len}, expected {}", v.len()),
        ));
    }
    for (i, z) in v.iter().enumerate() {
        re.add(i).write(z.re);
        im.add(i).write(z.im);
    }
    Ok(())
}

/// Beamformer of user `k` into `re`/`im` (length N_T each).
///
/// # Safety
/// `res` must come from this library; buffers must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn airs_result_beamformer(
    res: *const AirsResult,
    k: usize,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> AirsStatus {
    guard(|| {
        let r = href(res, "res")?;
        let w = r.run.solution.w.get(k).ok_or_else(|| {
            (AirsStatus::InvalidArgument, format!("user {k} out of range"))
        })?;
        copy_complex(w, re, im, len)
    })
}

/// IRS reflection coefficients (amplitude times phase) into `re`/`im`
/// (length M each).
///
/// # Safety
/// `res` must come from this library; buffers must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn airs_result_reflection(
    res: *const AirsResult,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> AirsStatus {
    guard(|| {
        let r = href(res, "res")?;
        copy_complex(&r.run.solution.psi, re, im, len)
    })
}

/// Rows in the convergence trace; 0 for a NULL handle.
///
/// # Safety
/// `res` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn airs_result_trace_len(res: *const AirsResult) -> usize {
    res.as_ref().map_or(0, |r| r.run.trace.rows.len())
}

/// Objective (watts) recorded in trace row `i`.
///
/// # Safety
/// `res` must come from this library; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn airs_result_trace_objective(
    res: *const AirsResult,
    i: usize,
    out: *mut f64,
) -> AirsStatus {
    guard(|| {
        let r = href(res, "res")?;
        let row = r.run.trace.rows.get(i).ok_or_else(|| {
            (AirsStatus::InvalidArgument, format!("trace row {i} out of range"))
        })?;
        put(out, row.objective_w, "out")
    })
}

/// # Safety
/// `res` must come from this library (or be NULL) and not be used again.
#[no_mangle]
pub unsafe extern "C" fn airs_result_free(res: *mut AirsResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn last_error() -> String {
        let p = airs_last_error();
        assert!(!p.is_null());
        unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
    }

    #[test]
    fn null_handles_are_reported() {
        unsafe {
            assert_eq!(airs_config_set_seed(ptr::null_mut(), 1), AirsStatus::NullPointer);
            assert!(last_error().contains("cfg"));
            let mut out = ptr::null_mut();
            assert_eq!(airs_channel_draw(ptr::null(), 1, &mut out), AirsStatus::NullPointer);
            assert!(out.is_null());
            assert_eq!(airs_result_iterations(ptr::null()), 0);
            airs_config_free(ptr::null_mut());
        }
    }

    #[test]
    fn config_errors_map_to_config_status() {
        let text = CString::new("users = 3\nbogus = 1\n").unwrap();
        let mut out = ptr::null_mut();
        let s = unsafe { airs_config_parse(text.as_ptr(), &mut out) };
        assert_eq!(s, AirsStatus::Config);
        assert!(out.is_null());
        assert!(last_error().contains("bogus"));
    }

    #[test]
    fn setters_validate() {
        let c = airs_config_new();
        unsafe {
            assert_eq!(airs_config_set_irs_budget_w(c, -1.0), AirsStatus::Config);
            assert_eq!((*c).inner.irs_power_budget_w, 10e-3);
            assert_eq!(airs_config_set_sinr_db(c, 6.0), AirsStatus::Ok);
            assert!(((*c).inner.sinr_req - db_to_linear(6.0)).abs() < 1e-12);
            airs_config_free(c);
        }
    }

    #[test]
    fn channel_dims_and_mismatch() {
        let c = airs_config_new();
        let small = CString::new("irs_elements = 4\n").unwrap();
        let mut c4 = ptr::null_mut();
        let mut ch = ptr::null_mut();
        unsafe {
            assert_eq!(airs_config_parse(small.as_ptr(), &mut c4), AirsStatus::Ok);
            assert_eq!(airs_channel_draw(c, 7, &mut ch), AirsStatus::Ok);
            let (mut n, mut m, mut k) = (0, 0, 0);
            assert_eq!(airs_channel_dims(ch, &mut n, &mut m, &mut k), AirsStatus::Ok);
            assert_eq!((n, m, k), (4, 10, 3));
            let mut res = ptr::null_mut();
            assert_eq!(airs_solve(c4, ch, &mut res), AirsStatus::InvalidArgument);
            assert!(res.is_null());
            airs_channel_free(ch);
            airs_config_free(c4);
            airs_config_free(c);
        }
    }
}
