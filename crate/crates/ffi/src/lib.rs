//! C ABI over the protorel library.
//!
//! Objects cross the boundary as opaque handles created by `*_load` and
//! released by the matching `*_free`. Every fallible call returns a
//! [`ProtorelStatus`]; the message for the last failure on the calling thread
//! is available from [`protorel_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use protorel::classifier::RelationModel;
use protorel::embed::EntityEmbeddings;
use protorel::eval::{evaluate, PredictionRecord};
use protorel::mutrel::{mutual_relation, nearest_prototypes, PrototypeSet};
use protorel::{Error, ErrorKind};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtorelStatus {
    Ok = 0,
    MissingFile = 1,
    Io = 2,
    Format = 3,
    Dimension = 4,
    InvalidArgument = 5,
    Numeric = 6,
    NullPointer = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

impl From<&Error> for ProtorelStatus {
    fn from(e: &Error) -> Self {
        match e.kind() {
            ErrorKind::MissingFile => ProtorelStatus::MissingFile,
            ErrorKind::Io => ProtorelStatus::Io,
            ErrorKind::Format => ProtorelStatus::Format,
            ErrorKind::Dimension => ProtorelStatus::Dimension,
            ErrorKind::InvalidArgument => ProtorelStatus::InvalidArgument,
            ErrorKind::Numeric => ProtorelStatus::Numeric,
        }
    }
}

/// Entity embedding table.
pub struct ProtorelEmbeddings {
    inner: EntityEmbeddings,
}

/// Relation prototypes, leaf layer first.
pub struct ProtorelPrototypes {
    inner: PrototypeSet,
}

/// Trained relation classifier.
pub struct ProtorelModel {
    inner: RelationModel,
}

/// Headline metrics of a scored predictions file.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ProtorelMetrics {
    pub auc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n_candidates: usize,
    pub n_gold: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: ProtorelStatus, msg: impl Into<String>) -> ProtorelStatus {
    set_error(msg.into());
    status
}

fn guard(f: impl FnOnce() -> Result<(), ProtorelStatus>) -> ProtorelStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ProtorelStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(ProtorelStatus::Panic, "internal panic"),
    }
}

fn lib(e: Error) -> ProtorelStatus {
    let status = ProtorelStatus::from(&e);
    fail(status, format!("{}: {e}", e.tag()))
}

fn null(what: &str) -> ProtorelStatus {
    fail(ProtorelStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, ProtorelStatus> {
    if p.is_null() {
        return Err(null("path"));
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => Err(fail(ProtorelStatus::InvalidArgument, "path is not valid UTF-8")),
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, ProtorelStatus> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, needed: usize) -> Result<&'a mut [T], ProtorelStatus> {
    if p.is_null() {
        return Err(null("output buffer"));
    }
    if len < needed {
        return Err(fail(
            ProtorelStatus::BufferTooSmall,
            format!("output buffer holds {len} values, {needed} needed"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(p, needed))
}

unsafe fn write_out<T>(p: *mut T, v: T) -> Result<(), ProtorelStatus> {
    if p.is_null() {
        return Err(null("output pointer"));
    }
    p.write(v);
    Ok(())
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn protorel_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn protorel_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Runs the command-line front end with `argv[0..argc]` and returns its exit code.
///
/// # Safety
/// `argv` must point to `argc` valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn protorel_run(argc: c_int, argv: *const *const c_char) -> c_int {
    if argv.is_null() || argc < 1 {
        set_error("argv must hold at least the program name".into());
        return protorel::cli::EXIT_USAGE;
    }
    let mut args = Vec::with_capacity(argc as usize);
    for i in 0..argc as usize {
        let a = *argv.add(i);
        if a.is_null() {
            set_error(format!("argv[{i}] is null"));
            return protorel::cli::EXIT_USAGE;
        }
        args.push(CStr::from_ptr(a).to_string_lossy().into_owned());
    }
    catch_unwind(|| protorel::cli::main_with(args)).unwrap_or_else(|_| {
        set_error("internal panic".into());
        protorel::cli::EXIT_NUMERIC
    })
}

/// Loads an embedding table in text or binary form.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn protorel_embeddings_load(
    path: *const c_char,
    out: *mut *mut ProtorelEmbeddings,
) -> ProtorelStatus {
    guard(|| {
        let path = path_arg(path)?;
        let inner = EntityEmbeddings::load(&path).map_err(lib)?;
        write_out(out, Box::into_raw(Box::new(ProtorelEmbeddings { inner })))
    })
}

/// # Safety
/// `emb` must come from [`protorel_embeddings_load`] or be null.
#[no_mangle]
pub unsafe extern "C" fn protorel_embeddings_free(emb: *mut ProtorelEmbeddings) {
    if !emb.is_null() {
        drop(Box::from_raw(emb));
    }
}

/// # Safety
/// `emb` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn protorel_embeddings_count(emb: *const ProtorelEmbeddings) -> usize {
    emb.as_ref().map_or(0, |e| e.inner.n())
}

/// # Safety
/// `emb` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn protorel_embeddings_dim(emb: *const ProtorelEmbeddings) -> usize {
    emb.as_ref().map_or(0, |e| e.inner.dim())
}

/// Copies entity `entity`'s vector into `out[0..dim]`.
///
/// # Safety
/// `emb` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn protorel_embeddings_row(
    emb: *const ProtorelEmbeddings,
    entity: usize,
    out: *mut f64,
    len: usize,
) -> ProtorelStatus {
    guard(|| {
        let emb = &handle(emb, "embeddings")?.inner;
        let row = emb.row(entity).ok_or_else(|| {
            fail(
                ProtorelStatus::InvalidArgument,
                format!("entity {entity} out of range for {} entities", emb.n()),
            )
        })?;
        out_slice(out, len, row.len())?.copy_from_slice(row);
        Ok(())
    })
}

/// Writes `e_tail - e_head` into `out[0..dim]`.
///
/// # Safety
/// `emb` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn protorel_mutual_relation(
    emb: *const ProtorelEmbeddings,
    head: usize,
    tail: usize,
    out: *mut f64,
    len: usize,
) -> ProtorelStatus {
    guard(|| {
        let emb = &handle(emb, "embeddings")?.inner;
        let mr = mutual_relation(emb, head, tail).map_err(lib)?;
        out_slice(out, len, mr.len())?.copy_from_slice(&mr);
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn protorel_prototypes_load(
    path: *const c_char,
    out: *mut *mut ProtorelPrototypes,
) -> ProtorelStatus {
    guard(|| {
        let path = path_arg(path)?;
        let inner = PrototypeSet::load(&path).map_err(lib)?;
        write_out(out, Box::into_raw(Box::new(ProtorelPrototypes { inner })))
    })
}

/// # Safety
/// `protos` must come from [`protorel_prototypes_load`] or be null.
#[no_mangle]
pub unsafe extern "C" fn protorel_prototypes_free(protos: *mut ProtorelPrototypes) {
    if !protos.is_null() {
        drop(Box::from_raw(protos));
    }
}

/// Leaf relations covered, NA included.
///
/// # Safety
/// `protos` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn protorel_prototypes_relations(protos: *const ProtorelPrototypes) -> usize {
    protos.as_ref().map_or(0, |p| p.inner.n_relations())
}

/// # Safety
/// `protos` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn protorel_prototypes_dim(protos: *const ProtorelPrototypes) -> usize {
    protos.as_ref().map_or(0, |p| p.inner.dim())
}

/// Up to `k` non-NA relations ranked by prototype cosine. Relation ids go to
/// `relations`, cosines to `cosines`; `*written` receives the count.
///
/// # Safety
/// Handles must be live; both arrays must hold `k` values.
#[no_mangle]
pub unsafe extern "C" fn protorel_nearest_prototypes(
    emb: *const ProtorelEmbeddings,
    protos: *const ProtorelPrototypes,
    head: usize,
    tail: usize,
    k: usize,
    relations: *mut usize,
    cosines: *mut f64,
    written: *mut usize,
) -> ProtorelStatus {
    guard(|| {
        let emb = &handle(emb, "embeddings")?.inner;
        let protos = &handle(protos, "prototypes")?.inner;
        let ranked = nearest_prototypes(emb, protos, head, tail, k).map_err(lib)?;
        let rel = out_slice(relations, k, ranked.len())?;
        let cos = out_slice(cosines, k, ranked.len())?;
        for (i, (r, c)) in ranked.iter().enumerate() {
            rel[i] = *r;
            cos[i] = *c;
        }
        write_out(written, ranked.len())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn protorel_model_load(path: *const c_char, out: *mut *mut ProtorelModel) -> ProtorelStatus {
    guard(|| {
        let path = path_arg(path)?;
        let inner = RelationModel::load(&path).map_err(lib)?;
        write_out(out, Box::into_raw(Box::new(ProtorelModel { inner })))
    })
}

/// # Safety
/// `model` must come from [`protorel_model_load`] or be null.
#[no_mangle]
pub unsafe extern "C" fn protorel_model_free(model: *mut ProtorelModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn protorel_model_relations(model: *const ProtorelModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.n_relations())
}

/// Copies relation `id`'s name, NUL-terminated, into `buf`.
///
/// # Safety
/// `model` must be a live handle and `buf` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn protorel_model_relation_name(
    model: *const ProtorelModel,
    id: usize,
    buf: *mut c_char,
    len: usize,
) -> ProtorelStatus {
    guard(|| {
        let model = &handle(model, "model")?.inner;
        let name = model.relations.get(id).ok_or_else(|| {
            fail(
                ProtorelStatus::InvalidArgument,
                format!("relation {id} out of range for {} relations", model.relations.len()),
            )
        })?;
        let bytes = name.as_bytes();
        let out = out_slice(buf, len, bytes.len() + 1)?;
        for (o, b) in out.iter_mut().zip(bytes) {
            *o = *b as c_char;
        }
        out[bytes.len()] = 0;
        Ok(())
    })
}

/// Scores a predictions file (AUC and the max-F1 operating point).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn protorel_eval_predictions(path: *const c_char, out: *mut ProtorelMetrics) -> ProtorelStatus {
    guard(|| {
        let path = path_arg(path)?;
        let records = PredictionRecord::load(&path).map_err(lib)?;
        let r = evaluate(&records, None, &[], &[]).map_err(lib)?;
        write_out(
            out,
            ProtorelMetrics {
                auc: r.auc,
                precision: r.max_f1.0,
                recall: r.max_f1.1,
                f1: r.max_f1.2,
                n_candidates: r.n_candidates,
                n_gold: r.n_gold,
            },
        )
    })
}
