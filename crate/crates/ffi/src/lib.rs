//! C interface to `mltet`.
//!
//! Objects are opaque handles created by `*_new`/`*_load` functions and
//! released with the matching `*_free`. Every fallible call returns an
//! [`MltetStatus`]; on failure `mltet_last_error` describes the cause.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use mltet::dispersion::{self, StiffnessMode};
use mltet::kernels::{
    matvec_exact_scalar, matvec_quad_scalar, transform_scalar, transform_scalar_constant,
    ElementGeometry, OpCount,
};
use mltet::mesh::PeriodicCell;
use mltet::quadrature::{builtin_stiffness_rule, QuadratureRule, RuleFile};
use mltet::refelement::ReferenceElement;
use mltet::{ElementId, Error};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MltetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    MissingData = 4,
    Numerical = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// How element stiffness matrices are evaluated; passed as `int32_t`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MltetMode {
    Exact = 0,
    Rule = 1,
}

fn mode_arg(m: i32) -> Result<StiffnessMode, (MltetStatus, String)> {
    match m {
        x if x == MltetMode::Exact as i32 => Ok(StiffnessMode::Exact),
        x if x == MltetMode::Rule as i32 => Ok(StiffnessMode::Rule),
        _ => Err((MltetStatus::InvalidArgument, format!("unknown mode {m}"))),
    }
}

/// A reference element with its kernel tables.
pub struct MltetElement(ReferenceElement);

/// A symmetric quadrature rule.
pub struct MltetRule(QuadratureRule);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).expect("nul bytes removed"));
}

fn status_of(e: &Error) -> MltetStatus {
    match e {
        Error::Io(_) | Error::Parse { .. } | Error::Json(_) => MltetStatus::Io,
        Error::MissingElementData(_) => MltetStatus::MissingData,
        Error::UnknownElement(_) | Error::InvalidInput(_) | Error::ConfigMismatch { .. } => {
            MltetStatus::InvalidArgument
        }
        _ => MltetStatus::Numerical,
    }
}

/// Runs `f`, recording errors and converting panics.
fn guard(f: impl FnOnce() -> Result<(), (MltetStatus, String)>) -> MltetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MltetStatus::Ok
        }
        Ok(Err((s, m))) => {
            set_error(m);
            s
        }
        Err(_) => {
            set_error("internal panic");
            MltetStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (MltetStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (MltetStatus, String) {
    (MltetStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (MltetStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (MltetStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mltet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the last failed call on this thread (empty after success).
/// Valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn mltet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds element `id` (e.g. `"p2n15"`) with its paired stiffness rule.
///
/// # Safety
/// `id` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mltet_element_new(id: *const c_char, out: *mut *mut MltetElement) -> MltetStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let id: ElementId = str_arg(id, "id")?.parse().map_err(lib_err)?;
        let el = ReferenceElement::new(id).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(MltetElement(el)));
        Ok(())
    })
}

/// Builds element `id` with the given stiffness rule.
///
/// # Safety
/// `id` must be a NUL-terminated string, `rule` a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mltet_element_with_rule(
    id: *const c_char,
    rule: *const MltetRule,
    out: *mut *mut MltetElement,
) -> MltetStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let rule = rule.as_ref().ok_or_else(|| null("rule"))?;
        let id: ElementId = str_arg(id, "id")?.parse().map_err(lib_err)?;
        let el = ReferenceElement::with_rule(id, &rule.0).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(MltetElement(el)));
        Ok(())
    })
}

/// # Safety
/// `el` must be null or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mltet_element_free(el: *mut MltetElement) {
    if !el.is_null() {
        drop(Box::from_raw(el));
    }
}

/// Number of nodes, or 0 for a null handle.
///
/// # Safety
/// `el` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mltet_element_node_count(el: *const MltetElement) -> usize {
    el.as_ref().map_or(0, |e| e.0.n())
}

/// Number of stiffness quadrature points, or 0 for a null handle.
///
/// # Safety
/// `el` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mltet_element_quad_count(el: *const MltetElement) -> usize {
    el.as_ref().map_or(0, |e| e.0.tables.n_quad())
}

/// Copies the reference mass weights into `out[0..len]`.
///
/// # Safety
/// `el` must be a live handle and `out` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mltet_element_mass_weights(
    el: *const MltetElement,
    out: *mut f64,
    len: usize,
) -> MltetStatus {
    guard(|| {
        let el = el.as_ref().ok_or_else(|| null("element"))?;
        let w = &el.0.tables.mass_weights;
        if out.is_null() {
            return Err(null("out"));
        }
        if len < w.len() {
            return Err((
                MltetStatus::BufferTooSmall,
                format!("need {} values, got {len}", w.len()),
            ));
        }
        std::slice::from_raw_parts_mut(out, w.len()).copy_from_slice(w);
        Ok(())
    })
}

/// `out = A u` for the element with vertices `vertices` (4 x 3, row major)
/// and constant scalar coefficient `c`.
///
/// # Safety
/// `el` must be a live handle, `vertices` valid for 12 doubles, `u` and
/// `out` valid for `node_count` doubles.
#[no_mangle]
pub unsafe extern "C" fn mltet_element_matvec_scalar(
    el: *const MltetElement,
    vertices: *const f64,
    c: f64,
    mode: i32,
    u: *const f64,
    out: *mut f64,
) -> MltetStatus {
    guard(|| {
        let el = el.as_ref().ok_or_else(|| null("element"))?;
        if vertices.is_null() || u.is_null() || out.is_null() {
            return Err(null("buffer"));
        }
        let v = std::slice::from_raw_parts(vertices, 12);
        let verts = [0, 1, 2, 3].map(|i| [v[3 * i], v[3 * i + 1], v[3 * i + 2]]);
        let g = ElementGeometry::from_vertices(&verts).map_err(lib_err)?;
        let t = &el.0.tables;
        let n = t.n();
        let u = std::slice::from_raw_parts(u, n);
        let out = std::slice::from_raw_parts_mut(out, n);
        let mut ops = OpCount::default();
        match mode_arg(mode)? {
            StiffnessMode::Exact => {
                matvec_exact_scalar(t, &transform_scalar_constant(c, &g), u, out, &mut ops)
            }
            StiffnessMode::Rule => {
                let s = transform_scalar(&vec![c; t.n_quad()], &t.quad_weights, &g);
                matvec_quad_scalar(t, &s, u, out, &mut ops)
            }
        }
        Ok(())
    })
}

/// Largest stable step of the order-`2k` scheme on the periodic honeycomb.
///
/// # Safety
/// `el` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mltet_element_dt_max(
    el: *const MltetElement,
    mode: i32,
    k: u32,
    out: *mut f64,
) -> MltetStatus {
    guard(|| {
        let el = el.as_ref().ok_or_else(|| null("element"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cell = PeriodicCell::honeycomb(&el.0.nodes).map_err(lib_err)?;
        let op = dispersion::assemble_bloch_operator(&cell, &el.0, mode_arg(mode)?);
        let s = dispersion::max_spatial_eigenvalue(&op, 16, 6).map_err(lib_err)?;
        *out = dispersion::dt_max(s, k).map_err(lib_err)?;
        Ok(())
    })
}

/// Built-in stiffness rule paired with element `id`.
///
/// # Safety
/// `id` must be a NUL-terminated string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mltet_rule_builtin(id: *const c_char, out: *mut *mut MltetRule) -> MltetStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let id: ElementId = str_arg(id, "id")?.parse().map_err(lib_err)?;
        *out = Box::into_raw(Box::new(MltetRule(builtin_stiffness_rule(id))));
        Ok(())
    })
}

/// Reads a rule file (JSON).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mltet_rule_load(path: *const c_char, out: *mut *mut MltetRule) -> MltetStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let rule = RuleFile::load(Path::new(path))
            .and_then(|f| f.to_rule())
            .map_err(lib_err)?;
        *out = Box::into_raw(Box::new(MltetRule(rule)));
        Ok(())
    })
}

/// # Safety
/// `rule` must be null or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mltet_rule_free(rule: *mut MltetRule) {
    if !rule.is_null() {
        drop(Box::from_raw(rule));
    }
}

/// Number of points, or 0 for a null handle.
///
/// # Safety
/// `rule` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mltet_rule_point_count(rule: *const MltetRule) -> usize {
    rule.as_ref().map_or(0, |r| r.0.point_count())
}

/// Expanded points (`xyz`, 3 per point) and weights (`w`); `len` is the
/// capacity in points.
///
/// # Safety
/// `rule` must be a live handle, `xyz` valid for `3 * len` and `w` for `len`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn mltet_rule_points(
    rule: *const MltetRule,
    xyz: *mut f64,
    w: *mut f64,
    len: usize,
) -> MltetStatus {
    guard(|| {
        let rule = rule.as_ref().ok_or_else(|| null("rule"))?;
        if xyz.is_null() || w.is_null() {
            return Err(null("buffer"));
        }
        let pts = rule.0.points();
        if len < pts.len() {
            return Err((
                MltetStatus::BufferTooSmall,
                format!("need {} points, got {len}", pts.len()),
            ));
        }
        let xyz = std::slice::from_raw_parts_mut(xyz, 3 * pts.len());
        let w = std::slice::from_raw_parts_mut(w, pts.len());
        for (i, (p, wi)) in pts.iter().zip(rule.0.weights()).enumerate() {
            xyz[3 * i..3 * i + 3].copy_from_slice(&p.cartesian());
            w[i] = wi;
        }
        Ok(())
    })
}

/// Checks positivity, exactness and the spurious-mode conditions of `rule`
/// for element `id`; `passed` receives 1 or 0.
///
/// # Safety
/// `id` must be a NUL-terminated string, `rule` a live handle, `passed` valid.
#[no_mangle]
pub unsafe extern "C" fn mltet_rule_verify(
    id: *const c_char,
    rule: *const MltetRule,
    passed: *mut i32,
) -> MltetStatus {
    guard(|| {
        let rule = rule.as_ref().ok_or_else(|| null("rule"))?;
        if passed.is_null() {
            return Err(null("passed"));
        }
        let id: ElementId = str_arg(id, "id")?.parse().map_err(lib_err)?;
        *passed = mltet::cli::verify_rule(id, &rule.0).passed() as i32;
        Ok(())
    })
}
