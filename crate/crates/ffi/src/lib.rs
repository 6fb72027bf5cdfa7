//! C ABI over the sketchguard library.
//!
//! Every function returns an [`SgStatus`]; on failure a message is kept per
//! thread and can be read with [`sg_last_error`]. Handles are opaque and
//! must be released with their `_free` function. Flow identifiers are
//! passed either as 64-bit integers or as big-endian byte strings of 4 to 32
//! bytes.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use sketchguard::batching::{Header, PolicyTag, HEADER_LEN};
use sketchguard::redundancy::{
    apply_plan, build_coverage, default_label, format_terms, mr_generate, pascal_generate, plan_recovery, spans_check,
    stored_sums, CoverageMapping, MappingKind, PartitionScheme, RecoveryPlan, RecoveryStatus, Source,
};
use sketchguard::sketch::{FlowId, Sketch, SketchError, SketchParams};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Overflow = 3,
    Mismatch = 4,
    Unrecoverable = 5,
    BufferTooSmall = 6,
    Decode = 7,
    Internal = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgMapping {
    Dedicated = 0,
    Distributed = 1,
    Replication = 2,
    Clique = 3,
    ImbalancedSpace = 4,
    SweetSpot = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgRecoveryStatus {
    Exact = 0,
    Semi = 1,
    Unrecoverable = 2,
}

/// Decoded fixed share header.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SgShareHeader {
    pub version: u8,
    pub cycle: u32,
    pub sender: u16,
    /// 0 full, 1 incremental, 2 alive.
    pub policy: u8,
    pub rep: u8,
    pub partition: u16,
    pub count: u32,
}

/// A Count-Min Sketch.
pub struct SgSketch {
    inner: Sketch,
}

/// Recovery plan over an unpartitioned mapping.
pub struct SgRecoveryPlan {
    mapping: CoverageMapping,
    plan: RecoveryPlan,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = s);
}

fn fail(status: SgStatus, msg: impl Into<String>) -> SgStatus {
    set_error(msg);
    status
}

fn sketch_status(e: SketchError) -> SgStatus {
    let status = match e {
        SketchError::Overflow { .. } => SgStatus::Overflow,
        SketchError::ParamMismatch | SketchError::Arity { .. } => SgStatus::Mismatch,
        _ => SgStatus::InvalidArgument,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> SgStatus) -> SgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(SgStatus::Internal, "panic inside sketchguard"),
    }
}

macro_rules! deref {
    ($p:expr) => {
        match unsafe { $p.as_ref() } {
            Some(v) => v,
            None => return fail(SgStatus::NullPointer, concat!(stringify!($p), " is null")),
        }
    };
}

macro_rules! deref_mut {
    ($p:expr) => {
        match unsafe { $p.as_mut() } {
            Some(v) => v,
            None => return fail(SgStatus::NullPointer, concat!(stringify!($p), " is null")),
        }
    };
}

unsafe fn bytes<'a>(p: *const u8, len: usize) -> Option<&'a [u8]> {
    if p.is_null() {
        (len == 0).then_some(&[])
    } else {
        Some(slice::from_raw_parts(p, len))
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf`, truncating
/// and always NUL-terminating. Returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sg_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let b = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = b.len().min(cap - 1);
            ptr::copy_nonoverlapping(b.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        b.len()
    })
}

fn put_sketch(out: *mut *mut SgSketch, s: Sketch) -> SgStatus {
    let out = deref_mut!(out);
    *out = Box::into_raw(Box::new(SgSketch { inner: s }));
    SgStatus::Ok
}

fn new_from(params: Result<SketchParams, SketchError>, out: *mut *mut SgSketch) -> SgStatus {
    match params.and_then(Sketch::new) {
        Ok(s) => put_sketch(out, s),
        Err(e) => sketch_status(e),
    }
}

/// Sketch sized from accuracy guarantees.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sg_sketch_new(epsilon: f64, delta: f64, seed: u64, out: *mut *mut SgSketch) -> SgStatus {
    guard(|| new_from(SketchParams::from_accuracy(epsilon, delta, seed), out))
}

/// Sketch with explicit dimensions and counter width (1..=64 bits).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sg_sketch_new_dims(
    d: usize,
    w: usize,
    seed: u64,
    counter_bits: u32,
    out: *mut *mut SgSketch,
) -> SgStatus {
    guard(|| {
        if counter_bits == 0 || counter_bits > 64 {
            return fail(SgStatus::InvalidArgument, "counter_bits must be in 1..=64");
        }
        new_from(SketchParams::with_dims(d, w, seed).map(|p| p.with_counter_bits(counter_bits)), out)
    })
}

/// # Safety
/// `s` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn sg_sketch_free(s: *mut SgSketch) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Deep copy.
///
/// # Safety
/// `s` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sg_sketch_clone(s: *const SgSketch, out: *mut *mut SgSketch) -> SgStatus {
    guard(|| put_sketch(out, deref!(s).inner.clone()))
}

fn update(s: *mut SgSketch, id: Result<FlowId, SketchError>, count: u64) -> SgStatus {
    let s = deref_mut!(s);
    match id.and_then(|id| s.inner.update(&id, count)) {
        Ok(()) => SgStatus::Ok,
        Err(e) => sketch_status(e),
    }
}

/// Adds `count` occurrences of the 64-bit identifier `id`.
///
/// # Safety
/// `s` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn sg_sketch_update(s: *mut SgSketch, id: u64, count: u64) -> SgStatus {
    guard(|| update(s, FlowId::from_u64(id, 64), count))
}

/// Adds `count` occurrences of a big-endian byte identifier.
///
/// # Safety
/// `s` must be a valid handle and `id` must point to `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn sg_sketch_update_bytes(s: *mut SgSketch, id: *const u8, len: usize, count: u64) -> SgStatus {
    guard(|| match bytes(id, len) {
        Some(b) => update(s, FlowId::from_bytes(b), count),
        None => fail(SgStatus::NullPointer, "id is null"),
    })
}

fn query(s: *const SgSketch, id: Result<FlowId, SketchError>, out: *mut u64) -> SgStatus {
    let s = deref!(s);
    let out = deref_mut!(out);
    match id {
        Ok(id) => {
            *out = s.inner.query(&id);
            SgStatus::Ok
        }
        Err(e) => sketch_status(e),
    }
}

/// Point query; never below the true count.
///
/// # Safety
/// `s` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sg_sketch_query(s: *const SgSketch, id: u64, out: *mut u64) -> SgStatus {
    guard(|| query(s, FlowId::from_u64(id, 64), out))
}

/// # Safety
/// `s` and `out` must be valid pointers and `id` must point to `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn sg_sketch_query_bytes(
    s: *const SgSketch,
    id: *const u8,
    len: usize,
    out: *mut u64,
) -> SgStatus {
    guard(|| match bytes(id, len) {
        Some(b) => query(s, FlowId::from_bytes(b), out),
        None => fail(SgStatus::NullPointer, "id is null"),
    })
}

/// Adds `src` into `dst` cell by cell; both must share dimensions and seed.
///
/// # Safety
/// Both must be valid handles.
#[no_mangle]
pub unsafe extern "C" fn sg_sketch_merge(dst: *mut SgSketch, src: *const SgSketch) -> SgStatus {
    guard(|| {
        let src = deref!(src).inner.clone();
        let dst = deref_mut!(dst);
        match dst.inner.merge_in(&src) {
            Ok(()) => SgStatus::Ok,
            Err(e) => sketch_status(e),
        }
    })
}

/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sg_sketch_dims(s: *const SgSketch, d: *mut usize, w: *mut usize) -> SgStatus {
    guard(|| {
        let s = deref!(s);
        *deref_mut!(d) = s.inner.d();
        *deref_mut!(w) = s.inner.w();
        SgStatus::Ok
    })
}

/// Total count added so far.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sg_sketch_total(s: *const SgSketch, out: *mut u64) -> SgStatus {
    guard(|| {
        *deref_mut!(out) = deref!(s).inner.total();
        SgStatus::Ok
    })
}

/// Copies the `d * w` counters, row-major, into `buf`.
///
/// # Safety
/// `buf` must point to `cap` writable `u64`s.
#[no_mangle]
pub unsafe extern "C" fn sg_sketch_counters(s: *const SgSketch, buf: *mut u64, cap: usize) -> SgStatus {
    guard(|| {
        let c = deref!(s).inner.counts();
        if buf.is_null() {
            return fail(SgStatus::NullPointer, "buf is null");
        }
        if cap < c.len() {
            return fail(SgStatus::BufferTooSmall, format!("need {} counters", c.len()));
        }
        ptr::copy_nonoverlapping(c.as_ptr(), buf, c.len());
        SgStatus::Ok
    })
}

fn write_matrix(rows: &[Vec<i64>], out: *mut i64, cap: usize) -> SgStatus {
    let n: usize = rows.iter().map(Vec::len).sum();
    if out.is_null() {
        return fail(SgStatus::NullPointer, "out is null");
    }
    if cap < n {
        return fail(SgStatus::BufferTooSmall, format!("need {n} entries"));
    }
    for (i, v) in rows.iter().flatten().enumerate() {
        unsafe { *out.add(i) = *v };
    }
    SgStatus::Ok
}

/// Writes the `f x k` redundant matrix row-major into `out`.
///
/// # Safety
/// `out` must point to `cap` writable `i64`s.
#[no_mangle]
pub unsafe extern "C" fn sg_mr_generate(k: usize, f: usize, out: *mut i64, cap: usize) -> SgStatus {
    guard(|| match mr_generate(k, f) {
        Ok(m) => write_matrix(&m.rows, out, cap),
        Err(e) => fail(SgStatus::InvalidArgument, e.to_string()),
    })
}

/// Writes the `k x k` Pascal matrix row-major into `out`.
///
/// # Safety
/// `out` must point to `cap` writable `i64`s.
#[no_mangle]
pub unsafe extern "C" fn sg_pascal_generate(k: usize, out: *mut i64, cap: usize) -> SgStatus {
    guard(|| match pascal_generate(k) {
        Some(p) => write_matrix(&p, out, cap),
        None => fail(SgStatus::Overflow, format!("Pascal matrix of order {k} overflows i64")),
    })
}

/// Whether every `f`-column subset of the `rows x cols` matrix is
/// non-singular. Sets `*out` to 1 or 0.
///
/// # Safety
/// `m` must point to `rows * cols` `i64`s.
#[no_mangle]
pub unsafe extern "C" fn sg_spans_check(m: *const i64, rows: usize, cols: usize, f: usize, out: *mut u8) -> SgStatus {
    guard(|| {
        let out = deref_mut!(out);
        if m.is_null() {
            return fail(SgStatus::NullPointer, "m is null");
        }
        if f > rows || f > cols {
            return fail(SgStatus::InvalidArgument, "f exceeds the matrix dimensions");
        }
        let flat = slice::from_raw_parts(m, rows * cols);
        let mat: Vec<Vec<i64>> = flat.chunks(cols.max(1)).map(<[i64]>::to_vec).collect();
        *out = spans_check(&mat, f) as u8;
        SgStatus::Ok
    })
}

fn mapping_kind(m: SgMapping) -> MappingKind {
    match m {
        SgMapping::Dedicated => MappingKind::Dedicated,
        SgMapping::Distributed => MappingKind::Distributed,
        SgMapping::Replication => MappingKind::Replication,
        SgMapping::Clique => MappingKind::Clique,
        SgMapping::ImbalancedSpace => MappingKind::ImbalancedSpace,
        SgMapping::SweetSpot => MappingKind::SweetSpot,
    }
}

fn status_of(s: RecoveryStatus) -> SgRecoveryStatus {
    match s {
        RecoveryStatus::Exact => SgRecoveryStatus::Exact,
        RecoveryStatus::Semi => SgRecoveryStatus::Semi,
        RecoveryStatus::Unrecoverable => SgRecoveryStatus::Unrecoverable,
    }
}

/// Plans recovery of the `n` failed node ids in `failed` (0-based; ids
/// `>= k` are dedicated redundant nodes). Only mappings over a single
/// partition are supported.
///
/// # Safety
/// `failed` must point to `n` ids and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sg_plan_new(
    mapping: SgMapping,
    k: usize,
    f: usize,
    failed: *const usize,
    n: usize,
    out: *mut *mut SgRecoveryPlan,
) -> SgStatus {
    guard(|| {
        let out = deref_mut!(out);
        let failed: BTreeSet<usize> = if n == 0 {
            BTreeSet::new()
        } else if failed.is_null() {
            return fail(SgStatus::NullPointer, "failed is null");
        } else {
            slice::from_raw_parts(failed, n).iter().copied().collect()
        };
        let m = match build_coverage(mapping_kind(mapping), k, f) {
            Ok(m) => m,
            Err(e) => return fail(SgStatus::InvalidArgument, e.to_string()),
        };
        if m.p != 1 {
            return fail(SgStatus::InvalidArgument, format!("{} mapping needs {} partitions", m.kind, m.p));
        }
        if let Some(&j) = failed.iter().find(|&&j| j >= m.node_count()) {
            return fail(SgStatus::InvalidArgument, format!("node {j} does not exist"));
        }
        let plan = plan_recovery(&m, &failed);
        *out = Box::into_raw(Box::new(SgRecoveryPlan { mapping: m, plan }));
        SgStatus::Ok
    })
}

/// # Safety
/// `p` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn sg_plan_free(p: *mut SgRecoveryPlan) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Worst status over all failed data nodes.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sg_plan_status(p: *const SgRecoveryPlan, out: *mut SgRecoveryStatus) -> SgStatus {
    guard(|| {
        *deref_mut!(out) = status_of(deref!(p).plan.status());
        SgStatus::Ok
    })
}

/// Status of data node `j`; `InvalidArgument` when `j` did not fail.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sg_plan_node_status(
    p: *const SgRecoveryPlan,
    j: usize,
    out: *mut SgRecoveryStatus,
) -> SgStatus {
    guard(|| {
        let p = deref!(p);
        let out = deref_mut!(out);
        match p.plan.node_status(j) {
            Some(s) => {
                *out = status_of(s);
                SgStatus::Ok
            }
            None => fail(SgStatus::InvalidArgument, format!("data node {j} did not fail")),
        }
    })
}

/// Number of redundant vectors of the plan's mapping.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sg_plan_vector_count(p: *const SgRecoveryPlan, out: *mut usize) -> SgStatus {
    guard(|| {
        *deref_mut!(out) = deref!(p).mapping.vectors.len();
        SgStatus::Ok
    })
}

/// Writes the exact equation for data node `j` (e.g. `D5 = -R4 + R5`) as a
/// NUL-terminated string. `*needed` receives the length without the NUL.
///
/// # Safety
/// `buf` must point to `cap` writable bytes; `needed` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sg_plan_equation(
    p: *const SgRecoveryPlan,
    j: usize,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> SgStatus {
    guard(|| {
        let p = deref!(p);
        let needed = deref_mut!(needed);
        let Some(terms) = p.plan.exact_terms(0, j) else {
            return fail(SgStatus::Unrecoverable, format!("no exact equation for data node {j}"));
        };
        let s = format!("D{} = {}", j + 1, format_terms(terms, &default_label(&p.mapping)));
        *needed = s.len();
        if buf.is_null() || cap <= s.len() {
            return fail(SgStatus::BufferTooSmall, format!("need {} bytes", s.len() + 1));
        }
        ptr::copy_nonoverlapping(s.as_ptr().cast(), buf, s.len());
        *buf.add(s.len()) = 0;
        SgStatus::Ok
    })
}

unsafe fn handles<'a>(p: *const *const SgSketch, n: usize) -> Option<Vec<Option<&'a Sketch>>> {
    if p.is_null() {
        return None;
    }
    Some(slice::from_raw_parts(p, n).iter().map(|s| s.as_ref().map(|s| &s.inner)).collect())
}

/// Sum-sketch of redundant vector `v` built from all `k` data sketches.
///
/// # Safety
/// `data` must point to `k` valid handles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sg_plan_sum(
    p: *const SgRecoveryPlan,
    data: *const *const SgSketch,
    v: usize,
    out: *mut *mut SgSketch,
) -> SgStatus {
    guard(|| {
        let p = deref!(p);
        let Some(data) = handles(data, p.mapping.k) else {
            return fail(SgStatus::NullPointer, "data is null");
        };
        let Some(data) = data.into_iter().map(|s| s.cloned()).collect::<Option<Vec<Sketch>>>() else {
            return fail(SgStatus::NullPointer, "a data sketch is null");
        };
        if v >= p.mapping.vectors.len() {
            return fail(SgStatus::InvalidArgument, format!("vector {v} does not exist"));
        }
        let scheme = PartitionScheme::single(data[0].d(), data[0].w());
        match stored_sums(&p.mapping, &scheme, &data) {
            Ok(mut sums) => put_sketch(out, sums.swap_remove(v)),
            Err(e) => fail(SgStatus::Mismatch, e.to_string()),
        }
    })
}

/// Recovers data node `j` from surviving sketches.
///
/// `data` holds `k` handles and `sums` one per vector; entries of failed
/// nodes may be null. The result has the layout of the first non-null data
/// sketch, or of the first sum-sketch with 32-bit counters.
///
/// # Safety
/// `data` must point to `k` and `sums` to `vector_count` handle slots.
#[no_mangle]
pub unsafe extern "C" fn sg_plan_recover(
    p: *const SgRecoveryPlan,
    data: *const *const SgSketch,
    sums: *const *const SgSketch,
    j: usize,
    out: *mut *mut SgSketch,
) -> SgStatus {
    guard(|| {
        let p = deref!(p);
        let (Some(data), Some(sums)) = (handles(data, p.mapping.k), handles(sums, p.mapping.vectors.len())) else {
            return fail(SgStatus::NullPointer, "data or sums is null");
        };
        let template = match data.iter().flatten().next() {
            Some(s) => (*s).clone(),
            None => match sums.iter().flatten().next() {
                Some(s) => s.zeroed_with_bits(32),
                None => return fail(SgStatus::NullPointer, "no surviving sketch"),
            },
        };
        if !p.plan.failed.contains(&j) || j >= p.mapping.k {
            return fail(SgStatus::InvalidArgument, format!("data node {j} did not fail"));
        }
        if p.plan.node_status(j) == Some(RecoveryStatus::Unrecoverable) {
            return fail(SgStatus::Unrecoverable, format!("data node {j} is unrecoverable"));
        }
        let fetch = |s: Source| match s {
            Source::Data(i) => data.get(i).copied().flatten(),
            Source::Redundant(v) => sums.get(v).copied().flatten(),
        };
        let scheme = PartitionScheme::single(template.d(), template.w());
        match apply_plan(&p.mapping, &scheme, &p.plan, &fetch, &template) {
            Ok(mut rec) => match rec.remove(&j) {
                Some(r) => put_sketch(out, r.sketch),
                None => fail(SgStatus::Internal, "plan produced no sketch"),
            },
            Err(e) => fail(SgStatus::Mismatch, e.to_string()),
        }
    })
}

/// Decodes the fixed header of an encoded share.
///
/// # Safety
/// `buf` must point to `len` bytes and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sg_share_header_decode(buf: *const u8, len: usize, out: *mut SgShareHeader) -> SgStatus {
    guard(|| {
        let out = deref_mut!(out);
        let Some(b) = bytes(buf, len) else {
            return fail(SgStatus::NullPointer, "buf is null");
        };
        if b.len() < HEADER_LEN {
            return fail(SgStatus::Decode, format!("share shorter than {HEADER_LEN} bytes"));
        }
        match Header::read(b) {
            Ok(h) => {
                *out = SgShareHeader {
                    version: h.version,
                    cycle: h.cycle,
                    sender: h.sender,
                    policy: match h.policy {
                        PolicyTag::Full => 0,
                        PolicyTag::Incremental => 1,
                        PolicyTag::Alive => 2,
                    },
                    rep: h.rep,
                    partition: h.partition,
                    count: h.count,
                };
                SgStatus::Ok
            }
            Err(e) => fail(SgStatus::Decode, e.to_string()),
        }
    })
}
