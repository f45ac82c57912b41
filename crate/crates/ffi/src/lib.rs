//! C ABI over the MTS sketch library.
//!
//! Sketches are opaque handles created, merged, and freed through this
//! interface; every fallible call returns an [`MtsStatus`] and writes its
//! result through an out-pointer. Estimates come back as doubles; the full
//! component breakdown stays Rust-side.
//!
//! All functions are safe to call from multiple threads as long as a handle
//! passed mutably (insert) is not used concurrently elsewhere, mirroring the
//! single-writer rule of the Rust API.

use std::ffi::{c_char, CStr};

use mts::estimators::{self, EstimateError};
use mts::expr;
use mts::hashing::{ingest_id, SeedSet};
use mts::sketch::{MtsSketch, SketchConfig, SketchError};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MtsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidConfig = 2,
    IncompatibleSketches = 3,
    EmptySketch = 4,
    SampleTooSparse = 5,
    ExpressionSampleEmpty = 6,
    CorruptSketch = 7,
    InvalidExpression = 8,
    InvalidArgument = 9,
}

/// Opaque sketch handle.
pub struct MtsSketchHandle {
    inner: MtsSketch,
}

impl From<SketchError> for MtsStatus {
    fn from(e: SketchError) -> Self {
        match e {
            SketchError::InvalidConfig(_) => MtsStatus::InvalidConfig,
            SketchError::IncompatibleSketches => MtsStatus::IncompatibleSketches,
            SketchError::CorruptSketch(_) => MtsStatus::CorruptSketch,
        }
    }
}

impl From<EstimateError> for MtsStatus {
    fn from(e: EstimateError) -> Self {
        match e {
            EstimateError::EmptySketch => MtsStatus::EmptySketch,
            EstimateError::SampleTooSparse => MtsStatus::SampleTooSparse,
            EstimateError::IncompatibleSketches => MtsStatus::IncompatibleSketches,
            EstimateError::ExpressionSampleEmpty => MtsStatus::ExpressionSampleEmpty,
            EstimateError::Expr(_) => MtsStatus::InvalidExpression,
        }
    }
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn mts_status_message(status: MtsStatus) -> *const c_char {
    let msg: &'static [u8] = match status {
        MtsStatus::Ok => b"ok\0",
        MtsStatus::NullPointer => b"null pointer argument\0",
        MtsStatus::InvalidConfig => b"invalid sketch config\0",
        MtsStatus::IncompatibleSketches => b"sketches have incompatible configs or seeds\0",
        MtsStatus::EmptySketch => b"sketch is empty\0",
        MtsStatus::SampleTooSparse => b"subsample too sparse for a correction\0",
        MtsStatus::ExpressionSampleEmpty => b"no subsample element satisfies the expression\0",
        MtsStatus::CorruptSketch => b"corrupt sketch bytes\0",
        MtsStatus::InvalidExpression => b"invalid set expression\0",
        MtsStatus::InvalidArgument => b"invalid argument\0",
    };
    msg.as_ptr() as *const c_char
}

/// Creates a sketch. `buckets >= 16`, `subsample_capacity >= 8`; sketches
/// that will be merged or compared must share both seeds.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn mts_sketch_new(
    buckets: u32,
    subsample_capacity: u32,
    value_seed: u64,
    bucket_seed: u64,
    out: *mut *mut MtsSketchHandle,
) -> MtsStatus {
    if out.is_null() {
        return MtsStatus::NullPointer;
    }
    let config = match SketchConfig::new(
        buckets,
        subsample_capacity,
        SeedSet::new(value_seed, bucket_seed),
    ) {
        Ok(c) => c,
        Err(e) => return e.into(),
    };
    match MtsSketch::new(config) {
        Ok(sketch) => {
            *out = Box::into_raw(Box::new(MtsSketchHandle { inner: sketch }));
            MtsStatus::Ok
        }
        Err(e) => e.into(),
    }
}

/// Releases a handle returned by this library. A null pointer is a no-op.
///
/// # Safety
/// `handle` must have been produced by this library and not freed before.
#[no_mangle]
pub unsafe extern "C" fn mts_sketch_free(handle: *mut MtsSketchHandle) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Inserts one element occurrence.
///
/// # Safety
/// `handle` must be a live handle with no concurrent use.
#[no_mangle]
pub unsafe extern "C" fn mts_sketch_insert(
    handle: *mut MtsSketchHandle,
    element: u64,
) -> MtsStatus {
    let Some(handle) = handle.as_mut() else {
        return MtsStatus::NullPointer;
    };
    handle.inner.insert(element);
    MtsStatus::Ok
}

/// Inserts an occurrence keyed by a byte string, canonicalized through the
/// seeded ingestion hash.
///
/// # Safety
/// `bytes` must point to `len` readable bytes; `handle` as in
/// [`mts_sketch_insert`].
#[no_mangle]
pub unsafe extern "C" fn mts_sketch_insert_bytes(
    handle: *mut MtsSketchHandle,
    bytes: *const u8,
    len: usize,
) -> MtsStatus {
    let Some(handle) = handle.as_mut() else {
        return MtsStatus::NullPointer;
    };
    if bytes.is_null() && len > 0 {
        return MtsStatus::NullPointer;
    }
    let slice = if len == 0 {
        &[][..]
    } else {
        std::slice::from_raw_parts(bytes, len)
    };
    let id = ingest_id(handle.inner.config().seeds, slice);
    handle.inner.insert(id);
    MtsStatus::Ok
}

/// Number of insertions the sketch has absorbed.
///
/// # Safety
/// `handle` live; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mts_sketch_occurrences(
    handle: *const MtsSketchHandle,
    out: *mut u64,
) -> MtsStatus {
    let (Some(handle), false) = (handle.as_ref(), out.is_null()) else {
        return MtsStatus::NullPointer;
    };
    *out = handle.inner.occurrences_seen();
    MtsStatus::Ok
}

/// Merges two sketches into a new handle equal to the sketch of the
/// concatenated streams.
///
/// # Safety
/// `a`, `b` live handles; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mts_sketch_merge(
    a: *const MtsSketchHandle,
    b: *const MtsSketchHandle,
    out: *mut *mut MtsSketchHandle,
) -> MtsStatus {
    let (Some(a), Some(b), false) = (a.as_ref(), b.as_ref(), out.is_null()) else {
        return MtsStatus::NullPointer;
    };
    match a.inner.merge(&b.inner) {
        Ok(merged) => {
            *out = Box::into_raw(Box::new(MtsSketchHandle { inner: merged }));
            MtsStatus::Ok
        }
        Err(e) => e.into(),
    }
}

/// Serializes a sketch to the `MTS1` byte format. The buffer is allocated
/// by this library and must be released with [`mts_bytes_free`].
///
/// # Safety
/// `handle` live; `out_ptr` and `out_len` valid.
#[no_mangle]
pub unsafe extern "C" fn mts_sketch_serialize(
    handle: *const MtsSketchHandle,
    out_ptr: *mut *mut u8,
    out_len: *mut usize,
) -> MtsStatus {
    let (Some(handle), false, false) = (handle.as_ref(), out_ptr.is_null(), out_len.is_null())
    else {
        return MtsStatus::NullPointer;
    };
    let bytes = handle.inner.to_bytes().into_boxed_slice();
    *out_len = bytes.len();
    *out_ptr = Box::into_raw(bytes) as *mut u8;
    MtsStatus::Ok
}

/// Releases a buffer returned by [`mts_sketch_serialize`].
///
/// # Safety
/// `(ptr, len)` must come from `mts_sketch_serialize` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn mts_bytes_free(ptr: *mut u8, len: usize) {
    if !ptr.is_null() {
        drop(Box::from_raw(std::ptr::slice_from_raw_parts_mut(ptr, len)));
    }
}

/// Restores a sketch from `MTS1` bytes.
///
/// # Safety
/// `bytes` must point to `len` readable bytes; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mts_sketch_deserialize(
    bytes: *const u8,
    len: usize,
    out: *mut *mut MtsSketchHandle,
) -> MtsStatus {
    if bytes.is_null() || out.is_null() {
        return MtsStatus::NullPointer;
    }
    let slice = std::slice::from_raw_parts(bytes, len);
    match MtsSketch::from_bytes(slice) {
        Ok(sketch) => {
            *out = Box::into_raw(Box::new(MtsSketchHandle { inner: sketch }));
            MtsStatus::Ok
        }
        Err(e) => e.into(),
    }
}

unsafe fn write_estimate(
    result: Result<estimators::EstimateReport, EstimateError>,
    out: *mut f64,
) -> MtsStatus {
    match result {
        Ok(report) => {
            *out = report.value;
            MtsStatus::Ok
        }
        Err(e) => e.into(),
    }
}

/// Full-stream cardinality of the stream behind one sketch.
///
/// # Safety
/// `handle` live; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mts_estimate_single(
    handle: *const MtsSketchHandle,
    out: *mut f64,
) -> MtsStatus {
    let (Some(handle), false) = (handle.as_ref(), out.is_null()) else {
        return MtsStatus::NullPointer;
    };
    write_estimate(estimators::estimate_single(&handle.inner), out)
}

/// Cardinality of the union of the two streams.
///
/// # Safety
/// `a`, `b` live handles; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mts_estimate_union(
    a: *const MtsSketchHandle,
    b: *const MtsSketchHandle,
    out: *mut f64,
) -> MtsStatus {
    let (Some(a), Some(b), false) = (a.as_ref(), b.as_ref(), out.is_null()) else {
        return MtsStatus::NullPointer;
    };
    write_estimate(estimators::estimate_union(&a.inner, &b.inner), out)
}

/// Cardinality of the intersection of the two streams.
///
/// # Safety
/// `a`, `b` live handles; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mts_estimate_intersection(
    a: *const MtsSketchHandle,
    b: *const MtsSketchHandle,
    out: *mut f64,
) -> MtsStatus {
    let (Some(a), Some(b), false) = (a.as_ref(), b.as_ref(), out.is_null()) else {
        return MtsStatus::NullPointer;
    };
    write_estimate(estimators::estimate_intersection(&a.inner, &b.inner), out)
}

/// Cardinality of the set difference `A \ B`.
///
/// # Safety
/// `a`, `b` live handles; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mts_estimate_difference(
    a: *const MtsSketchHandle,
    b: *const MtsSketchHandle,
    out: *mut f64,
) -> MtsStatus {
    let (Some(a), Some(b), false) = (a.as_ref(), b.as_ref(), out.is_null()) else {
        return MtsStatus::NullPointer;
    };
    write_estimate(estimators::estimate_difference(&a.inner, &b.inner), out)
}

/// Jaccard similarity of the two streams (unclamped).
///
/// # Safety
/// `a`, `b` live handles; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mts_estimate_jaccard(
    a: *const MtsSketchHandle,
    b: *const MtsSketchHandle,
    out: *mut f64,
) -> MtsStatus {
    let (Some(a), Some(b), false) = (a.as_ref(), b.as_ref(), out.is_null()) else {
        return MtsStatus::NullPointer;
    };
    match estimators::estimate_jaccard_pair(&a.inner, &b.inner) {
        Ok(v) => {
            *out = v;
            MtsStatus::Ok
        }
        Err(e) => e.into(),
    }
}

/// Cardinality of an arbitrary set expression over `count` sketches. The
/// expression uses `|`, `&`, `-` and parentheses; identifiers bind to the
/// handles in first-appearance order. An empty expression subsample yields
/// `ExpressionSampleEmpty` (the estimate would be indistinguishable from
/// zero).
///
/// # Safety
/// `handles` must point to `count` live handle pointers; `expression` must
/// be a NUL-terminated string; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mts_estimate_expression(
    handles: *const *const MtsSketchHandle,
    count: usize,
    expression: *const c_char,
    out: *mut f64,
) -> MtsStatus {
    if handles.is_null() || expression.is_null() || out.is_null() {
        return MtsStatus::NullPointer;
    }
    let Ok(text) = CStr::from_ptr(expression).to_str() else {
        return MtsStatus::InvalidExpression;
    };
    let parsed = match expr::parse(text) {
        Ok(p) => p,
        Err(_) => return MtsStatus::InvalidExpression,
    };
    let handle_ptrs = std::slice::from_raw_parts(handles, count);
    let mut sketches = Vec::with_capacity(count);
    for &ptr in handle_ptrs {
        let Some(handle) = ptr.as_ref() else {
            return MtsStatus::NullPointer;
        };
        sketches.push(&handle.inner);
    }
    if parsed.expr.arity() != count {
        return MtsStatus::InvalidArgument;
    }
    match estimators::estimate_expression(&sketches, &parsed.expr) {
        Ok(report) if report.warning.is_some() => MtsStatus::ExpressionSampleEmpty,
        Ok(report) => {
            *out = report.value;
            MtsStatus::Ok
        }
        Err(e) => e.into(),
    }
}
