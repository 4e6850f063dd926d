use std::ffi::{CStr, CString};
use std::ptr;

use regflow_ffi::*;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = rf_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

const TWO_LINES: &str = r#"{"kind":"compose","children":[
    {"kind":"project","set":{"kind":"hyperplane","a":[0.0,1.0],"b":0.0}},
    {"kind":"project","set":{"kind":"hyperplane","a":[-0.8660254037844386,0.5],"b":0.0}}]}"#;

fn operator(json: &str) -> *mut RfOperator {
    let mut op = ptr::null_mut();
    let status = unsafe { rf_operator_from_json(cstr(json).as_ptr(), &mut op) };
    assert_eq!(status, RfStatus::Ok);
    op
}

#[test]
fn apply_and_residual_of_a_projector() {
    let op = operator(r#"{"kind":"project","set":{"kind":"ball","center":[0.0,0.0],"radius":1.0}}"#);
    let mut dim = 0;
    assert_eq!(unsafe { rf_operator_dim(op, &mut dim) }, RfStatus::Ok);
    assert_eq!(dim, 2);
    let x = [3.0, 4.0];
    let mut y = [0.0; 2];
    assert_eq!(unsafe { rf_operator_apply(op, x.as_ptr(), 2, y.as_mut_ptr()) }, RfStatus::Ok);
    assert!((y[0] - 0.6).abs() < 1e-15 && (y[1] - 0.8).abs() < 1e-15, "{y:?}");
    let mut r = 0.0;
    assert_eq!(unsafe { rf_operator_residual(op, x.as_ptr(), 2, &mut r) }, RfStatus::Ok);
    assert!((r - 4.0).abs() < 1e-15);
    unsafe { rf_operator_free(op) };
}

#[test]
fn dimension_mismatch_is_a_usage_error() {
    let op = operator(TWO_LINES);
    let x = [1.0, 2.0, 3.0];
    let mut y = [0.0; 3];
    let status = unsafe { rf_operator_apply(op, x.as_ptr(), 3, y.as_mut_ptr()) };
    assert_eq!(status, RfStatus::Usage);
    assert!(last_error().contains("dimension"), "{}", last_error());
    unsafe { rf_operator_free(op) };
}

#[test]
fn bad_json_and_null_pointers_are_reported() {
    let mut op = ptr::null_mut();
    let s = unsafe { rf_operator_from_json(cstr(r#"{"kind":"nope"}"#).as_ptr(), &mut op) };
    assert_eq!(s, RfStatus::Config);
    assert!(op.is_null());
    let s = unsafe { rf_operator_from_json(ptr::null(), &mut op) };
    assert_eq!(s, RfStatus::NullPointer);
    let bad = [0xffu8, 0x00];
    let s = unsafe { rf_operator_from_json(bad.as_ptr().cast(), &mut op) };
    assert_eq!(s, RfStatus::InvalidUtf8);
    // a negative radius passes the parser but not construction
    let s = unsafe {
        rf_operator_from_json(
            cstr(r#"{"kind":"project","set":{"kind":"ball","center":[0.0],"radius":-1.0}}"#).as_ptr(),
            &mut op,
        )
    };
    assert_eq!(s, RfStatus::Config);
    assert!(last_error().contains("operator"), "{}", last_error());
    let mut dim = 0;
    assert_eq!(unsafe { rf_operator_dim(ptr::null(), &mut dim) }, RfStatus::NullPointer);
}

#[test]
fn km_iteration_contracts_by_a_quarter() {
    let op = operator(TWO_LINES);
    let x0 = [3.0, 4.0];
    let mut t = ptr::null_mut();
    let sched = cstr(r#"{"kind":"constant","value":1.0}"#);
    let s = unsafe { rf_km_iterate(op, x0.as_ptr(), 2, sched.as_ptr(), 10, &mut t) };
    assert_eq!(s, RfStatus::Ok);
    let mut len = 0;
    assert_eq!(unsafe { rf_trajectory_len(t, &mut len) }, RfStatus::Ok);
    assert_eq!(len, 11);
    let mut prev = f64::INFINITY;
    for i in 1..len {
        let mut x = [0.0; 2];
        assert_eq!(unsafe { rf_trajectory_point(t, i, x.as_mut_ptr(), 2) }, RfStatus::Ok);
        let norm = x[0].hypot(x[1]);
        if i > 1 {
            assert!((norm / prev - 0.25).abs() < 1e-12, "{}", norm / prev);
        }
        prev = norm;
    }
    let mut time = 0.0;
    assert_eq!(
        unsafe { rf_trajectory_sample(t, 3, &mut time, ptr::null_mut(), ptr::null_mut()) },
        RfStatus::Ok
    );
    assert_eq!(time, 3.0);
    assert_eq!(
        unsafe { rf_trajectory_sample(t, 99, &mut time, ptr::null_mut(), ptr::null_mut()) },
        RfStatus::Usage
    );
    unsafe {
        rf_trajectory_free(t);
        rf_operator_free(op);
    }
}

#[test]
fn flow_fit_and_csv_round_trip_through_strings() {
    let op = operator(TWO_LINES);
    let x0 = [3.0, 4.0];
    let sched = cstr(r#"{"kind":"constant","value":1.0}"#);
    let integ = cstr(
        r#"{"method":{"kind":"rk45","rel_tol":1e-10,"abs_tol":1e-14},"t_end":30.0,"sampling":{"interval":0.1}}"#,
    );
    let mut t = ptr::null_mut();
    let s = unsafe { rf_integrate_flow(op, x0.as_ptr(), 2, sched.as_ptr(), integ.as_ptr(), &mut t) };
    assert_eq!(s, RfStatus::Ok);

    let mut json = ptr::null_mut();
    let s = unsafe { rf_fit_decay(t, cstr("residual").as_ptr(), cstr("exponential").as_ptr(), &mut json) };
    assert_eq!(s, RfStatus::Ok, "{}", last_error());
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_string();
    unsafe { rf_string_free(json) };
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    // T - I has eigenvalues -3/4 and -1; the fast mode still biases the
    // default window slightly
    let rate = v["rate"].as_f64().unwrap();
    assert!((rate - 0.75).abs() < 5e-3, "{text}");

    let mut json = ptr::null_mut();
    let s = unsafe { rf_fit_decay(t, cstr("residual").as_ptr(), cstr("auto").as_ptr(), &mut json) };
    assert_eq!(s, RfStatus::Ok);
    let v: serde_json::Value = serde_json::from_str(unsafe { CStr::from_ptr(json) }.to_str().unwrap()).unwrap();
    unsafe { rf_string_free(json) };
    assert_eq!(v["chosen"], "exponential");

    let s = unsafe { rf_fit_decay(t, cstr("speed").as_ptr(), cstr("auto").as_ptr(), &mut json) };
    assert_eq!(s, RfStatus::Config);

    let mut csv = ptr::null_mut();
    assert_eq!(unsafe { rf_trajectory_to_csv(t, &mut csv) }, RfStatus::Ok);
    let text = unsafe { CStr::from_ptr(csv) }.to_str().unwrap().to_string();
    unsafe { rf_string_free(csv) };
    assert!(text.starts_with("t,x_0,x_1,residual,dist_fix,speed\n"), "{}", &text[..60]);
    assert_eq!(text.lines().count(), 302);
    unsafe {
        rf_trajectory_free(t);
        rf_operator_free(op);
    }
}

#[test]
fn invalid_integrator_config_is_a_config_error() {
    let op = operator(TWO_LINES);
    let x0 = [1.0, 0.0];
    let sched = cstr(r#"{"kind":"constant","value":1.0}"#);
    let integ = cstr(r#"{"method":{"kind":"rk45","rel_tol":1e-9,"abs_tol":1e-12},"t_end":1.0,"sampling":{"stride":2}}"#);
    let mut t = ptr::null_mut();
    let s = unsafe { rf_integrate_flow(op, x0.as_ptr(), 2, sched.as_ptr(), integ.as_ptr(), &mut t) };
    assert_eq!(s, RfStatus::Config);
    assert!(t.is_null());
    assert!(last_error().contains("stride"), "{}", last_error());
    let sched = cstr(r#"{"kind":"constant","value":1.5}"#);
    let s = unsafe { rf_km_iterate(op, x0.as_ptr(), 2, sched.as_ptr(), 3, &mut t) };
    assert_eq!(s, RfStatus::Config);
    unsafe { rf_operator_free(op) };
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/regflow.h")).unwrap();
    for name in [
        "typedef struct RfOperator RfOperator",
        "typedef struct RfTrajectory RfTrajectory",
        "RF_STATUS_PANIC = 6",
        "rf_operator_from_json",
        "rf_operator_apply",
        "rf_operator_residual",
        "rf_km_iterate",
        "rf_integrate_flow",
        "rf_trajectory_point",
        "rf_fit_decay",
        "rf_last_error_message",
        "rf_string_free",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}
