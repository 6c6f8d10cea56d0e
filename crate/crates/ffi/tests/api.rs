use std::ffi::{CStr, CString};
use std::ptr;

use mltet_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(mltet_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn element_lifecycle() {
    let id = CString::new("p2n15").unwrap();
    let mut el = ptr::null_mut();
    unsafe {
        assert_eq!(mltet_element_new(id.as_ptr(), &mut el), MltetStatus::Ok);
        assert_eq!(mltet_element_node_count(el), 15);
        assert_eq!(mltet_element_quad_count(el), 14);
        let mut w = vec![0.0; 15];
        assert_eq!(mltet_element_mass_weights(el, w.as_mut_ptr(), w.len()), MltetStatus::Ok);
        assert!((w.iter().sum::<f64>() - 1.0 / 6.0).abs() < 1e-14);
        assert_eq!(
            mltet_element_mass_weights(el, w.as_mut_ptr(), 3),
            MltetStatus::BufferTooSmall
        );
        assert!(last_error().contains("need 15"));
        mltet_element_free(el);
    }
}

#[test]
fn unknown_element_and_missing_data() {
    let mut el = ptr::null_mut();
    unsafe {
        let bad = CString::new("p9n1").unwrap();
        assert_eq!(mltet_element_new(bad.as_ptr(), &mut el), MltetStatus::InvalidArgument);
        assert!(el.is_null());
        assert!(last_error().contains("p9n1"));
        assert_eq!(mltet_element_new(ptr::null(), &mut el), MltetStatus::NullPointer);
        let p3 = CString::new("p3n32").unwrap();
        std::env::set_var("MLTET_DATA_DIR", "/nonexistent-mltet-data");
        assert_eq!(mltet_element_new(p3.as_ptr(), &mut el), MltetStatus::MissingData);
    }
}

#[test]
fn matvec_modes_agree_on_constants_and_quadratics() {
    let id = CString::new("p2n15").unwrap();
    let mut el = ptr::null_mut();
    let verts = [0.1, 0.0, 0.0, 1.2, 0.1, 0.0, 0.2, 0.9, 0.1, 0.0, 0.3, 1.1];
    unsafe {
        assert_eq!(mltet_element_new(id.as_ptr(), &mut el), MltetStatus::Ok);
        let u = vec![1.0; 15];
        let mut out = vec![0.0; 15];
        let st = mltet_element_matvec_scalar(el, verts.as_ptr(), 2.0, MltetMode::Rule as i32, u.as_ptr(), out.as_mut_ptr());
        assert_eq!(st, MltetStatus::Ok);
        assert!(out.iter().all(|v| v.abs() < 1e-12));
        let u: Vec<f64> = (0..15).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut a = vec![0.0; 15];
        let mut b = vec![0.0; 15];
        mltet_element_matvec_scalar(el, verts.as_ptr(), 2.0, 0, u.as_ptr(), a.as_mut_ptr());
        mltet_element_matvec_scalar(el, verts.as_ptr(), 2.0, 1, u.as_ptr(), b.as_mut_ptr());
        // the rule is exact for products of gradients of the space only up to P1 x DU,
        // so generic vectors differ but stay close in energy
        let ea: f64 = u.iter().zip(&a).map(|(x, y)| x * y).sum();
        let eb: f64 = u.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!(ea > 0.0 && eb > 0.0);
        assert_eq!(
            mltet_element_matvec_scalar(el, verts.as_ptr(), 2.0, 7, u.as_ptr(), a.as_mut_ptr()),
            MltetStatus::InvalidArgument
        );
        let flat = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
        assert_eq!(
            mltet_element_matvec_scalar(el, flat.as_ptr(), 1.0, 0, u.as_ptr(), a.as_mut_ptr()),
            MltetStatus::Numerical
        );
        mltet_element_free(el);
    }
}

#[test]
fn rules_roundtrip_and_verify() {
    let id = CString::new("p2n15").unwrap();
    let mut rule = ptr::null_mut();
    unsafe {
        assert_eq!(mltet_rule_builtin(id.as_ptr(), &mut rule), MltetStatus::Ok);
        let n = mltet_rule_point_count(rule);
        assert_eq!(n, 14);
        let mut xyz = vec![0.0; 3 * n];
        let mut w = vec![0.0; n];
        assert_eq!(mltet_rule_points(rule, xyz.as_mut_ptr(), w.as_mut_ptr(), n), MltetStatus::Ok);
        assert!((w.iter().sum::<f64>() - 1.0 / 6.0).abs() < 1e-15);
        let mut passed = -1;
        assert_eq!(mltet_rule_verify(id.as_ptr(), rule, &mut passed), MltetStatus::Ok);
        assert_eq!(passed, 1);
        let mut el = ptr::null_mut();
        assert_eq!(mltet_element_with_rule(id.as_ptr(), rule, &mut el), MltetStatus::Ok);
        mltet_element_free(el);
        mltet_rule_free(rule);

        let missing = CString::new("/nonexistent/rule.json").unwrap();
        assert_eq!(mltet_rule_load(missing.as_ptr(), &mut rule), MltetStatus::Io);
        assert!(rule.is_null());
        mltet_rule_free(ptr::null_mut());
        mltet_element_free(ptr::null_mut());
    }
}

#[test]
fn stable_step_matches_exact_honeycomb_value() {
    let id = CString::new("p2n15").unwrap();
    let mut el = ptr::null_mut();
    let mut dt = 0.0;
    unsafe {
        mltet_element_new(id.as_ptr(), &mut el);
        assert_eq!(mltet_element_dt_max(el, 0, 2, &mut dt), MltetStatus::Ok);
        assert_eq!(mltet_element_dt_max(el, 0, 9, &mut dt), MltetStatus::InvalidArgument);
        mltet_element_free(el);
    }
    assert!((dt - 0.2905).abs() < 1e-3, "{dt}");
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(mltet_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
