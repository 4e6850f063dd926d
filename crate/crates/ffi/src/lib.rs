//! C ABI for `regflow`.
//!
//! Every function returns an [`RfStatus`] and writes results through out
//! pointers. Handles are opaque and owned by the caller until passed to the
//! matching `*_free`. Strings handed out by the library must be released
//! with [`rf_string_free`]. After a failure, [`rf_last_error_message`]
//! describes it until the next call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use regflow::flow::{integrate_flow, km_iterate, IntegratorConfig, Trajectory};
use regflow::operators::{Operator, OperatorSpec};
use regflow::point::Point;
use regflow::rates::{fit_decay, select_model, Metric, Model};
use regflow::schedule::{LambdaSchedule, ScheduleSpec};
use regflow::Error;

/// Result of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Arguments are inconsistent, e.g. a dimension mismatch.
    Usage = 3,
    /// A JSON description failed to parse or validate.
    Config = 4,
    /// Integration, fitting or an oracle failed numerically.
    Numeric = 5,
    /// A panic was caught at the boundary; the library state is intact.
    Panic = 6,
}

/// An operator built from its JSON description.
pub struct RfOperator {
    op: Operator,
}

/// A sampled trajectory.
pub struct RfTrajectory {
    traj: Trajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(RfStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            _ if e.is_numeric() => RfStatus::Numeric,
            Error::Config { .. } | Error::Json(_) => RfStatus::Config,
            _ => RfStatus::Usage,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(RfStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording its error message and turning panics into
/// [`RfStatus::Panic`].
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RfStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RfStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            RfStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(RfStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn point_arg(p: *const f64, n: usize, what: &str) -> Result<Point, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let coords = std::slice::from_raw_parts(p, n).to_vec();
    Point::new(coords).map_err(Failure::from)
}

unsafe fn op_arg<'a>(op: *const RfOperator) -> Result<&'a RfOperator, Failure> {
    op.as_ref().ok_or_else(|| null("operator"))
}

unsafe fn traj_arg<'a>(t: *const RfTrajectory) -> Result<&'a RfTrajectory, Failure> {
    t.as_ref().ok_or_else(|| null("trajectory"))
}

fn json_err(what: &str) -> impl FnOnce(serde_json::Error) -> Failure + '_ {
    move |e| Failure(RfStatus::Config, format!("{what}: {e}"))
}

fn schedule_from_json(text: &str) -> Result<LambdaSchedule, Failure> {
    let spec: ScheduleSpec = serde_json::from_str(text).map_err(json_err("schedule"))?;
    LambdaSchedule::try_from(spec).map_err(|e| Failure(RfStatus::Config, format!("schedule: {e}")))
}

fn out_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Failure(RfStatus::Usage, "string contains NUL".into()))?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Message of the last failure on this thread, or null. Owned by the
/// library; valid until the next call.
#[no_mangle]
pub extern "C" fn rf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn rf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds an operator from a JSON tree such as
/// `{"kind":"project","set":{"kind":"ball","center":[0,0],"radius":1}}`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rf_operator_from_json(json: *const c_char, out: *mut *mut RfOperator) -> RfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = str_arg(json, "json")?;
        let spec: OperatorSpec = serde_json::from_str(text).map_err(json_err("operator"))?;
        let op = spec.build()?;
        *out = Box::into_raw(Box::new(RfOperator { op }));
        Ok(())
    })
}

/// # Safety
/// `op` must come from [`rf_operator_from_json`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn rf_operator_free(op: *mut RfOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// Dimension of the space the operator acts on.
///
/// # Safety
/// `op` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rf_operator_dim(op: *const RfOperator, out: *mut usize) -> RfStatus {
    guard(|| {
        let op = op_arg(op)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = op.op.dim();
        Ok(())
    })
}

/// Writes `T(x)` to `out`; both buffers hold `n` values.
///
/// # Safety
/// `x` and `out` must each point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn rf_operator_apply(
    op: *const RfOperator,
    x: *const f64,
    n: usize,
    out: *mut f64,
) -> RfStatus {
    guard(|| {
        let op = op_arg(op)?;
        let x = point_arg(x, n, "x")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let y = op.op.apply(&x)?;
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(y.coords());
        Ok(())
    })
}

/// Writes `|x - T(x)|` to `out`.
///
/// # Safety
/// `x` must point to `n` doubles and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rf_operator_residual(
    op: *const RfOperator,
    x: *const f64,
    n: usize,
    out: *mut f64,
) -> RfStatus {
    guard(|| {
        let op = op_arg(op)?;
        let x = point_arg(x, n, "x")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = regflow::fixset::residual(&op.op, &x)?;
        Ok(())
    })
}

/// Krasnoselskii-Mann iteration for `iterations` steps with relaxation
/// given by a JSON schedule such as `{"kind":"constant","value":0.5}`.
///
/// # Safety
/// `x0` must point to `n` doubles, `schedule_json` be NUL-terminated and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rf_km_iterate(
    op: *const RfOperator,
    x0: *const f64,
    n: usize,
    schedule_json: *const c_char,
    iterations: usize,
    out: *mut *mut RfTrajectory,
) -> RfStatus {
    guard(|| {
        let op = op_arg(op)?;
        let x0 = point_arg(x0, n, "x0")?;
        let schedule = schedule_from_json(str_arg(schedule_json, "schedule_json")?)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let traj = km_iterate(&op.op, &x0, &schedule, iterations, op.op.fix_oracle())?;
        *out = Box::into_raw(Box::new(RfTrajectory { traj }));
        Ok(())
    })
}

/// Integrates the flow. `integrator_json` is e.g.
/// `{"method":{"kind":"rk45","rel_tol":1e-9,"abs_tol":1e-12},"t_end":10,"sampling":{"interval":0.1}}`.
/// When integration breaks down, returns [`RfStatus::Numeric`] and still
/// hands out the partial trajectory.
///
/// # Safety
/// As for [`rf_km_iterate`].
#[no_mangle]
pub unsafe extern "C" fn rf_integrate_flow(
    op: *const RfOperator,
    x0: *const f64,
    n: usize,
    schedule_json: *const c_char,
    integrator_json: *const c_char,
    out: *mut *mut RfTrajectory,
) -> RfStatus {
    guard(|| {
        let op = op_arg(op)?;
        let x0 = point_arg(x0, n, "x0")?;
        let schedule = schedule_from_json(str_arg(schedule_json, "schedule_json")?)?;
        let config: IntegratorConfig = serde_json::from_str(str_arg(integrator_json, "integrator_json")?)
            .map_err(json_err("integrator"))?;
        config
            .validate()
            .map_err(|e| Failure(RfStatus::Config, format!("integrator: {e}")))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        match integrate_flow(&op.op, &x0, &schedule, &config, op.op.fix_oracle()) {
            Ok(traj) => {
                *out = Box::into_raw(Box::new(RfTrajectory { traj }));
                Ok(())
            }
            Err(Error::Integration { t, message, partial }) => {
                *out = Box::into_raw(Box::new(RfTrajectory { traj: *partial }));
                Err(Failure(
                    RfStatus::Numeric,
                    format!("integration failed at t = {t}: {message}"),
                ))
            }
            Err(e) => Err(e.into()),
        }
    })
}

/// # Safety
/// `t` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn rf_trajectory_free(t: *mut RfTrajectory) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Number of samples.
///
/// # Safety
/// `t` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rf_trajectory_len(t: *const RfTrajectory, out: *mut usize) -> RfStatus {
    guard(|| {
        let t = traj_arg(t)?;
        *out.as_mut().ok_or_else(|| null("out"))? = t.traj.samples.len();
        Ok(())
    })
}

fn sample(t: &RfTrajectory, i: usize) -> Result<&regflow::flow::TrajectorySample, Failure> {
    t.traj.samples.get(i).ok_or_else(|| {
        Failure(
            RfStatus::Usage,
            format!("sample {i} out of range ({} samples)", t.traj.samples.len()),
        )
    })
}

/// Time, residual and (if known, else NaN) distance to `Fix T` of sample `i`.
///
/// # Safety
/// `t` must be a live handle; each out pointer may be null to skip it.
#[no_mangle]
pub unsafe extern "C" fn rf_trajectory_sample(
    t: *const RfTrajectory,
    i: usize,
    time: *mut f64,
    residual: *mut f64,
    dist_fix: *mut f64,
) -> RfStatus {
    guard(|| {
        let s = sample(traj_arg(t)?, i)?;
        if let Some(p) = time.as_mut() {
            *p = s.t;
        }
        if let Some(p) = residual.as_mut() {
            *p = s.residual;
        }
        if let Some(p) = dist_fix.as_mut() {
            *p = s.dist_fix.unwrap_or(f64::NAN);
        }
        Ok(())
    })
}

/// Copies the state of sample `i` into `out`, which holds `n` values.
///
/// # Safety
/// `out` must point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn rf_trajectory_point(
    t: *const RfTrajectory,
    i: usize,
    out: *mut f64,
    n: usize,
) -> RfStatus {
    guard(|| {
        let s = sample(traj_arg(t)?, i)?;
        if out.is_null() {
            return Err(null("out"));
        }
        if n != s.x.dim() {
            return Err(Failure(
                RfStatus::Usage,
                format!("buffer holds {n} values, state has {}", s.x.dim()),
            ));
        }
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(s.x.coords());
        Ok(())
    })
}

/// The trajectory in the CSV format of the command-line tool.
///
/// # Safety
/// `out` must be a valid pointer; free the result with [`rf_string_free`].
#[no_mangle]
pub unsafe extern "C" fn rf_trajectory_to_csv(t: *const RfTrajectory, out: *mut *mut c_char) -> RfStatus {
    guard(|| {
        let t = traj_arg(t)?;
        if out.is_null() {
            return Err(null("out"));
        }
        out_string(out, t.traj.to_csv_string())
    })
}

/// Fits a decay model and returns it as JSON. `metric` is `residual`,
/// `dist_fix` or `dist_to_limit`; `model` is `exponential`, `powerlaw` or
/// `auto` (fit both and select).
///
/// # Safety
/// String arguments must be NUL-terminated; free the result with
/// [`rf_string_free`].
#[no_mangle]
pub unsafe extern "C" fn rf_fit_decay(
    t: *const RfTrajectory,
    metric: *const c_char,
    model: *const c_char,
    out_json: *mut *mut c_char,
) -> RfStatus {
    guard(|| {
        let t = traj_arg(t)?;
        let metric: Metric = serde_json::from_value(str_arg(metric, "metric")?.into()).map_err(json_err("metric"))?;
        let model = str_arg(model, "model")?;
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        let json = if model == "auto" {
            serde_json::to_string(&select_model(&t.traj, metric, None)?)
        } else {
            let model: Model = serde_json::from_value(model.into()).map_err(json_err("model"))?;
            serde_json::to_string(&fit_decay(&t.traj, metric, model, None)?)
        }
        .map_err(|e| Failure(RfStatus::Usage, e.to_string()))?;
        out_string(out_json, json)
    })
}
