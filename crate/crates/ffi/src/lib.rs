//! C ABI over `rwre-core`.
//!
//! Every function returns an [`RwreStatus`]; results go through out-pointers.
//! On failure the message is kept per thread and read with
//! [`rwre_last_error_message`]. Handles are opaque and must be released with
//! their `_free` function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rwre_core::config::ExperimentConfig;
use rwre_core::env::{EnvModel, EnvSource, Environment, Realization};
use rwre_core::lattice::{Dim, LatticePoint, MAX_DIM};
use rwre_core::regen::{self, BlockOptions, RegenerationBlock};
use rwre_core::renorm::{self, DpMode, ExplicitTraps, ThreatProblem};
use rwre_core::rng::Seed;
use rwre_core::walk::JumpKernel;
use rwre_core::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RwreStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Usage = 4,
    DimensionMismatch = 5,
    Overflow = 6,
    Censored = 7,
    Acceptance = 8,
    Resource = 9,
    Io = 10,
    Panic = 11,
}

impl From<&Error> for RwreStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Config { .. } => RwreStatus::Config,
            Error::Usage(_) => RwreStatus::Usage,
            Error::DimensionMismatch { .. } => RwreStatus::DimensionMismatch,
            Error::Overflow => RwreStatus::Overflow,
            Error::Censored { .. } => RwreStatus::Censored,
            Error::Acceptance { .. } => RwreStatus::Acceptance,
            Error::Resource(_) => RwreStatus::Resource,
            Error::Io(_) => RwreStatus::Io,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Run `f`, recording any error or panic; the error slot is cleared on success.
fn guard(f: impl FnOnce() -> Result<(), (RwreStatus, String)>) -> RwreStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            RwreStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            RwreStatus::Panic
        }
    }
}

fn lift<T>(r: rwre_core::Result<T>) -> Result<T, (RwreStatus, String)> {
    r.map_err(|e| (RwreStatus::from(&e), e.to_string()))
}

fn null(what: &str) -> (RwreStatus, String) {
    (RwreStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` is null or valid for reads of `T`.
unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (RwreStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

/// # Safety
/// `p` is null or valid for writes of `T`.
unsafe fn write<T>(p: *mut T, v: T, what: &str) -> Result<(), (RwreStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

/// # Safety
/// `x` is null only when `d == 0`; otherwise valid for `d` reads.
unsafe fn point(
    dim: Dim,
    x: *const i64,
    d: usize,
    t: i64,
) -> Result<LatticePoint, (RwreStatus, String)> {
    if d != dim.get() {
        return Err((
            RwreStatus::DimensionMismatch,
            Error::DimensionMismatch {
                expected: dim.get(),
                found: d,
            }
            .to_string(),
        ));
    }
    if x.is_null() {
        return Err(null("x"));
    }
    let mut p = LatticePoint { x: [0; MAX_DIM], t };
    p.x[..d].copy_from_slice(std::slice::from_raw_parts(x, d));
    Ok(p)
}

/// Validated environment model and jump kernel.
pub struct RwreModel {
    config: ExperimentConfig,
    env: EnvModel,
    kernel: JumpKernel,
}

/// One realization of the environment.
pub struct RwreEnv {
    inner: Realization,
}

/// Sampled regeneration blocks.
pub struct RwreBlocks {
    dim: Dim,
    blocks: Vec<RegenerationBlock>,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct RwreBlock {
    pub seed: u64,
    pub t1: u64,
    /// Spatial displacement; entries past the dimension are 0.
    pub disp: [i64; 3],
    pub censored: bool,
    pub rejections: u64,
}

/// Speed and diffusion estimates; entries past the dimension are 0.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct RwreLimits {
    pub dim: usize,
    pub v_hat: [f64; 3],
    pub v_ci_lo: [f64; 3],
    pub v_ci_hi: [f64; 3],
    /// Row-major d x d in the leading entries of a 3 x 3 array.
    pub sigma_hat: [f64; 9],
    pub n_blocks: u64,
    pub n_censored: u64,
    pub mean_t1: f64,
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn rwre_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn rwre_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Build a model from TOML config text (same keys as the command-line tool).
///
/// # Safety
/// `config_toml` is a nul-terminated string; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rwre_model_new(
    config_toml: *const c_char,
    out: *mut *mut RwreModel,
) -> RwreStatus {
    guard(|| {
        if config_toml.is_null() {
            return Err(null("config_toml"));
        }
        let text = CStr::from_ptr(config_toml)
            .to_str()
            .map_err(|e| (RwreStatus::InvalidUtf8, e.to_string()))?;
        let config = lift(ExperimentConfig::parse(text))?;
        let env = lift(config.env_config().and_then(|c| c.model()))?;
        let kernel = lift(config.kernel())?;
        write(
            out,
            Box::into_raw(Box::new(RwreModel {
                config,
                env,
                kernel,
            })),
            "out",
        )
    })
}

/// # Safety
/// `model` is null or was returned by [`rwre_model_new`] and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rwre_model_free(model: *mut RwreModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Spatial dimension of the model.
///
/// # Safety
/// `model` is a live handle; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rwre_model_dim(model: *const RwreModel, out: *mut usize) -> RwreStatus {
    guard(|| write(out, deref(model, "model")?.env.dim().get(), "out"))
}

/// Realize the environment for `seed`.
///
/// # Safety
/// `model` is a live handle; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rwre_env_new(
    model: *const RwreModel,
    seed: u64,
    out: *mut *mut RwreEnv,
) -> RwreStatus {
    guard(|| {
        let inner = deref(model, "model")?.env.realize(Seed(seed));
        write(out, Box::into_raw(Box::new(RwreEnv { inner })), "out")
    })
}

/// # Safety
/// `env` is null or was returned by [`rwre_env_new`] and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rwre_env_free(env: *mut RwreEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// omega at (x, t); `x` holds `d` spatial coordinates.
///
/// # Safety
/// `env` is a live handle, `x` is valid for `d` reads, `out` for writes.
#[no_mangle]
pub unsafe extern "C" fn rwre_env_omega(
    env: *const RwreEnv,
    x: *const i64,
    d: usize,
    t: i64,
    out: *mut u64,
) -> RwreStatus {
    guard(|| {
        let env = &deref(env, "env")?.inner;
        let z = point(env.dim(), x, d, t)?;
        write(out, lift(env.omega(&z))?, "out")
    })
}

/// Regeneration indicator eta at (x, t).
///
/// # Safety
/// As [`rwre_env_omega`].
#[no_mangle]
pub unsafe extern "C" fn rwre_env_eta(
    env: *const RwreEnv,
    x: *const i64,
    d: usize,
    t: i64,
    out: *mut bool,
) -> RwreStatus {
    guard(|| {
        let env = &deref(env, "env")?.inner;
        let z = point(env.dim(), x, d, t)?;
        write(out, lift(env.eta(&z))?, "out")
    })
}

/// Minimal number of threatened sites over allowed paths of length J*H from
/// the origin, with traps {eta = 1} of this realization.
///
/// # Safety
/// `env` and `model` are live handles; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rwre_env_min_threats(
    model: *const RwreModel,
    env: *const RwreEnv,
    j: u64,
    h: u64,
    out: *mut u64,
) -> RwreStatus {
    guard(|| {
        let model = deref(model, "model")?;
        let env = &deref(env, "env")?.inner;
        let problem = ThreatProblem::m_j(j, h, model.kernel.range());
        let m = lift(renorm::min_threats(
            &problem,
            &renorm::EtaTraps(env),
            None,
            DpMode::Serial,
        ))?;
        write(out, m, "out")
    })
}

/// As [`rwre_env_min_threats`] with an explicit trap set: `n_traps` points,
/// each `d` coordinates followed by the time, flattened into `traps`.
///
/// # Safety
/// `traps` is valid for `n_traps * (d + 1)` reads (or null when `n_traps` is
/// 0); `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rwre_min_threats(
    d: usize,
    traps: *const i64,
    n_traps: usize,
    j: u64,
    h: u64,
    range: u32,
    out: *mut u64,
) -> RwreStatus {
    guard(|| {
        let dim = lift(Dim::new(d))?;
        let flat: &[i64] = if n_traps == 0 {
            &[]
        } else if traps.is_null() {
            return Err(null("traps"));
        } else {
            std::slice::from_raw_parts(traps, n_traps * (d + 1))
        };
        let points = flat
            .chunks_exact(d + 1)
            .map(|c| point(dim, c.as_ptr(), d, c[d]))
            .collect::<Result<Vec<_>, _>>()?;
        let problem = ThreatProblem::m_j(j, h, range);
        let m = lift(renorm::min_threats(
            &problem,
            &ExplicitTraps::new(dim, points),
            None,
            DpMode::Serial,
        ))?;
        write(out, m, "out")
    })
}

/// Sample `n` regeneration blocks. `horizon` 0 selects the model's
/// `experiment.horizon`.
///
/// # Safety
/// `model` is a live handle; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rwre_sample_blocks(
    model: *const RwreModel,
    n: u64,
    seed: u64,
    horizon: u64,
    out: *mut *mut RwreBlocks,
) -> RwreStatus {
    guard(|| {
        let model = deref(model, "model")?;
        let opts = BlockOptions {
            horizon: if horizon == 0 {
                model.config.count("experiment.horizon")
            } else {
                horizon
            },
            acceptance_floor: model.config.float("experiment.floor"),
        };
        let blocks = lift(regen::sample_blocks(
            &model.env,
            &model.kernel,
            n,
            Seed(seed),
            &opts,
        ))?;
        let h = RwreBlocks {
            dim: model.env.dim(),
            blocks,
        };
        write(out, Box::into_raw(Box::new(h)), "out")
    })
}

/// # Safety
/// `blocks` is null or was returned by [`rwre_sample_blocks`] and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rwre_blocks_free(blocks: *mut RwreBlocks) {
    if !blocks.is_null() {
        drop(Box::from_raw(blocks));
    }
}

/// # Safety
/// `blocks` is a live handle; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rwre_blocks_len(blocks: *const RwreBlocks, out: *mut usize) -> RwreStatus {
    guard(|| write(out, deref(blocks, "blocks")?.blocks.len(), "out"))
}

/// # Safety
/// `blocks` is a live handle; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rwre_blocks_get(
    blocks: *const RwreBlocks,
    index: usize,
    out: *mut RwreBlock,
) -> RwreStatus {
    guard(|| {
        let h = deref(blocks, "blocks")?;
        let b = h.blocks.get(index).ok_or_else(|| {
            (
                RwreStatus::Usage,
                format!("index {index} out of range ({} blocks)", h.blocks.len()),
            )
        })?;
        let mut disp = [0i64; 3];
        disp.copy_from_slice(&b.disp[..3]);
        write(
            out,
            RwreBlock {
                seed: b.seed,
                t1: b.t1,
                disp,
                censored: b.censored,
                rejections: b.rejections,
            },
            "out",
        )
    })
}

/// Speed and diffusion estimates with `n_boot` bootstrap resamples.
///
/// # Safety
/// `blocks` is a live handle; `out` is valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rwre_estimate_limits(
    blocks: *const RwreBlocks,
    n_boot: usize,
    seed: u64,
    out: *mut RwreLimits,
) -> RwreStatus {
    guard(|| {
        let h = deref(blocks, "blocks")?;
        let e = lift(regen::estimate_limits(&h.blocks, h.dim, n_boot, Seed(seed)))?;
        let d = h.dim.get();
        let mut r = RwreLimits {
            dim: d,
            n_blocks: e.n_blocks as u64,
            n_censored: e.n_censored as u64,
            mean_t1: e.mean_t1,
            ..Default::default()
        };
        for i in 0..d {
            r.v_hat[i] = e.v_hat[i];
            r.v_ci_lo[i] = e.v_ci[i].0;
            r.v_ci_hi[i] = e.v_ci[i].1;
            for k in 0..d {
                r.sigma_hat[3 * i + k] = e.sigma_hat[i][k];
            }
        }
        write(out, r, "out")
    })
}
