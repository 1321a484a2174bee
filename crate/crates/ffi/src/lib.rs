//! C ABI for the ggbm library.
//!
//! Every fallible call returns a [`GgbmStatus`]; on failure the message is
//! available from [`ggbm_last_error`] on the same thread. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ggbm::calibrate::{implied_sigma, OptionChain};
use ggbm::lapinv::{density_grid, DensityGrid};
use ggbm::moments::{analytic_mean, analytic_msd, log_mean, log_variance};
use ggbm::pricing::{bs_call, gbs_call_mc_with, gbs_call_with, gbs_put_with, price_curve_with, BsMode, Discount, PricingConfig};
use ggbm::simulate::{simulate_paths, PathEnsemble};
use ggbm::specfun::{ml1, ml2, ml3};
use ggbm::{Error, MarketParams, MemoryKernel};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GgbmStatus {
    Ok = 0,
    Domain = 1,
    Truncation = 2,
    Inversion = 3,
    Grid = 4,
    Admissibility = 5,
    Quadrature = 6,
    Sampling = 7,
    Calibration = 8,
    Parse = 9,
    Io = 10,
    NullPointer = 11,
    Panic = 12,
}

/// Formula mixed by the pricing calls.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GgbmMode {
    RiskNeutral = 0,
    DriftForm = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GgbmDiscount {
    Operational = 0,
    Physical = 1,
}

/// Market parameters, passed by value.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GgbmMarket {
    pub x0: f64,
    pub mu: f64,
    pub sigma: f64,
    pub r: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GgbmMoments {
    pub mean: f64,
    pub msd: f64,
    pub log_mean: f64,
    pub log_variance: f64,
}

/// Opaque memory kernel.
pub struct GgbmKernel(MemoryKernel);

/// Opaque tabulated operational-time density.
pub struct GgbmDensityGrid(DensityGrid);

/// Opaque simulated path ensemble.
pub struct GgbmEnsemble(PathEnsemble);

/// Opaque option chain.
pub struct GgbmChain(OptionChain);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> GgbmStatus {
    match e {
        Error::Domain { .. } => GgbmStatus::Domain,
        Error::Truncation { .. } => GgbmStatus::Truncation,
        Error::Inversion(_) => GgbmStatus::Inversion,
        Error::Grid(_) => GgbmStatus::Grid,
        Error::Admissibility { .. } => GgbmStatus::Admissibility,
        Error::Quadrature { .. } => GgbmStatus::Quadrature,
        Error::Sampling(_) => GgbmStatus::Sampling,
        Error::Calibration(_) => GgbmStatus::Calibration,
        Error::Parse(_) => GgbmStatus::Parse,
        Error::Io(_) => GgbmStatus::Io,
    }
}

enum Fail {
    Lib(Error),
    Null(&'static str),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

/// Runs `f`, recording errors and panics in the thread-local slot.
fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> GgbmStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GgbmStatus::Ok,
        Ok(Err(Fail::Lib(e))) => {
            set_error(format!("{}: {e}", e.code()));
            status_of(&e)
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("ffi.null: {what} is null"));
            GgbmStatus::NullPointer
        }
        Err(_) => {
            set_error("ffi.panic: internal panic".into());
            GgbmStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn input<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn c_str<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Lib(Error::Parse(format!("{what} is not UTF-8"))))
}

fn market(m: GgbmMarket) -> Result<MarketParams, Fail> {
    Ok(MarketParams::new(m.x0, m.mu, m.sigma, m.r)?)
}

fn pricing(mode: GgbmMode, discount: GgbmDiscount) -> PricingConfig {
    PricingConfig {
        mode: match mode {
            GgbmMode::RiskNeutral => BsMode::RiskNeutral,
            GgbmMode::DriftForm => BsMode::DriftForm,
        },
        discount: match discount {
            GgbmDiscount::Operational => Discount::Operational,
            GgbmDiscount::Physical => Discount::Physical,
        },
        ..Default::default()
    }
}

/// Message of the last failed call on this thread, or NULL. Valid until the next call.
#[no_mangle]
pub extern "C" fn ggbm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ggbm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `spec` must be a NUL-terminated string; `out_kernel` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggbm_kernel_parse(spec: *const c_char, out_kernel: *mut *mut GgbmKernel) -> GgbmStatus {
    guard(|| {
        let slot = out(out_kernel, "out_kernel")?;
        *slot = ptr::null_mut();
        let k: MemoryKernel = c_str(spec, "spec")?.parse()?;
        k.check()?;
        *slot = Box::into_raw(Box::new(GgbmKernel(k)));
        Ok(())
    })
}

/// # Safety
/// `kernel` must come from [`ggbm_kernel_parse`] and not be freed twice. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn ggbm_kernel_free(kernel: *mut GgbmKernel) {
    if !kernel.is_null() {
        drop(Box::from_raw(kernel));
    }
}

/// One-parameter Mittag-Leffler function.
///
/// # Safety
/// `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggbm_ml1(alpha: f64, z: f64, out_value: *mut f64) -> GgbmStatus {
    guard(|| {
        *out(out_value, "out_value")? = ml1(alpha, z)?;
        Ok(())
    })
}

/// # Safety
/// `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggbm_ml2(alpha: f64, beta: f64, z: f64, out_value: *mut f64) -> GgbmStatus {
    guard(|| {
        *out(out_value, "out_value")? = ml2(alpha, beta, z)?;
        Ok(())
    })
}

/// # Safety
/// `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggbm_ml3(alpha: f64, beta: f64, gamma: f64, z: f64, out_value: *mut f64) -> GgbmStatus {
    guard(|| {
        *out(out_value, "out_value")? = ml3(alpha, beta, gamma, z)?;
        Ok(())
    })
}

/// Closed-form Black-Scholes call with time to maturity `tau`.
///
/// # Safety
/// `out_price` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggbm_bs_call(
    m: GgbmMarket,
    strike: f64,
    tau: f64,
    mode: GgbmMode,
    out_price: *mut f64,
) -> GgbmStatus {
    guard(|| {
        let cfg = pricing(mode, GgbmDiscount::Operational);
        *out(out_price, "out_price")? = bs_call(&market(m)?, strike, tau, cfg.mode)?;
        Ok(())
    })
}

/// Generalized Black-Scholes call.
///
/// # Safety
/// `kernel` must be a live handle; `out_price` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggbm_gbs_call(
    kernel: *const GgbmKernel,
    m: GgbmMarket,
    strike: f64,
    maturity: f64,
    mode: GgbmMode,
    discount: GgbmDiscount,
    out_price: *mut f64,
) -> GgbmStatus {
    guard(|| {
        let k = &input(kernel, "kernel")?.0;
        *out(out_price, "out_price")? = gbs_call_with(k, &market(m)?, strike, maturity, &pricing(mode, discount))?;
        Ok(())
    })
}

/// Generalized put by parity under the chosen discounting.
///
/// # Safety
/// `kernel` must be a live handle; `out_price` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggbm_gbs_put(
    kernel: *const GgbmKernel,
    m: GgbmMarket,
    strike: f64,
    maturity: f64,
    mode: GgbmMode,
    discount: GgbmDiscount,
    out_price: *mut f64,
) -> GgbmStatus {
    guard(|| {
        let k = &input(kernel, "kernel")?.0;
        *out(out_price, "out_price")? = gbs_put_with(k, &market(m)?, strike, maturity, &pricing(mode, discount))?;
        Ok(())
    })
}

/// Monte-Carlo call price and its standard error.
///
/// # Safety
/// `kernel` must be a live handle; both out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggbm_gbs_call_mc(
    kernel: *const GgbmKernel,
    m: GgbmMarket,
    strike: f64,
    maturity: f64,
    n_draws: usize,
    seed: u64,
    out_price: *mut f64,
    out_std_error: *mut f64,
) -> GgbmStatus {
    guard(|| {
        let k = &input(kernel, "kernel")?.0;
        let price = out(out_price, "out_price")?;
        let se = out(out_std_error, "out_std_error")?;
        let cfg = PricingConfig::default();
        (*price, *se) = gbs_call_mc_with(k, &market(m)?, strike, maturity, n_draws, seed, &cfg)?;
        Ok(())
    })
}

/// Calls at `n` strikes for one maturity.
///
/// # Safety
/// `strikes` and `out_prices` must each hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn ggbm_price_curve(
    kernel: *const GgbmKernel,
    m: GgbmMarket,
    strikes: *const f64,
    n: usize,
    maturity: f64,
    out_prices: *mut f64,
) -> GgbmStatus {
    guard(|| {
        let k = &input(kernel, "kernel")?.0;
        if n == 0 {
            return Ok(());
        }
        if strikes.is_null() {
            return Err(Fail::Null("strikes"));
        }
        if out_prices.is_null() {
            return Err(Fail::Null("out_prices"));
        }
        let ks = std::slice::from_raw_parts(strikes, n);
        let prices = price_curve_with(k, &market(m)?, ks, maturity, &PricingConfig::default())?;
        std::slice::from_raw_parts_mut(out_prices, n).copy_from_slice(&prices);
        Ok(())
    })
}

/// Analytic moments of the price at time `t`.
///
/// # Safety
/// `kernel` must be a live handle; `out_moments` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggbm_moments(
    kernel: *const GgbmKernel,
    m: GgbmMarket,
    t: f64,
    out_moments: *mut GgbmMoments,
) -> GgbmStatus {
    guard(|| {
        let k = &input(kernel, "kernel")?.0;
        let o = out(out_moments, "out_moments")?;
        let m = market(m)?;
        *o = GgbmMoments {
            mean: analytic_mean(k, &m, t)?,
            msd: analytic_msd(k, &m, t)?,
            log_mean: log_mean(k, &m, t)?,
            log_variance: log_variance(k, &m, t)?,
        };
        Ok(())
    })
}

/// Tabulates `h(u, t)` on `nodes` points.
///
/// # Safety
/// `kernel` must be a live handle; `out_grid` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggbm_density_grid(
    kernel: *const GgbmKernel,
    t: f64,
    nodes: usize,
    out_grid: *mut *mut GgbmDensityGrid,
) -> GgbmStatus {
    guard(|| {
        let slot = out(out_grid, "out_grid")?;
        *slot = ptr::null_mut();
        let g = density_grid(&input(kernel, "kernel")?.0, t, nodes)?;
        *slot = Box::into_raw(Box::new(GgbmDensityGrid(g)));
        Ok(())
    })
}

/// Number of nodes in the grid; 0 for NULL.
///
/// # Safety
/// `grid` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ggbm_density_grid_len(grid: *const GgbmDensityGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.0.u.len())
}

/// Copies abscissae and values into caller buffers of length `len` (at least the grid length).
///
/// # Safety
/// `grid` must be a live handle; `u` and `h` must each hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ggbm_density_grid_copy(
    grid: *const GgbmDensityGrid,
    u: *mut f64,
    h: *mut f64,
    len: usize,
) -> GgbmStatus {
    guard(|| {
        let g = &input(grid, "grid")?.0;
        let n = g.u.len();
        if len < n {
            return Err(Error::Domain {
                module: "ffi",
                msg: format!("buffer of {len} is shorter than the grid ({n})"),
            }
            .into());
        }
        if u.is_null() {
            return Err(Fail::Null("u"));
        }
        if h.is_null() {
            return Err(Fail::Null("h"));
        }
        std::slice::from_raw_parts_mut(u, n).copy_from_slice(&g.u);
        std::slice::from_raw_parts_mut(h, n).copy_from_slice(&g.h);
        Ok(())
    })
}

/// # Safety
/// `grid` must come from [`ggbm_density_grid`] and not be freed twice. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn ggbm_density_grid_free(grid: *mut GgbmDensityGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Simulates `n_paths` paths on `times` (a zero time is prepended when missing).
///
/// # Safety
/// `times` must hold `n_times` doubles; `out_ensemble` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggbm_simulate(
    kernel: *const GgbmKernel,
    m: GgbmMarket,
    times: *const f64,
    n_times: usize,
    n_paths: usize,
    seed: u64,
    out_ensemble: *mut *mut GgbmEnsemble,
) -> GgbmStatus {
    guard(|| {
        let slot = out(out_ensemble, "out_ensemble")?;
        *slot = ptr::null_mut();
        let k = &input(kernel, "kernel")?.0;
        if times.is_null() {
            return Err(Fail::Null("times"));
        }
        let ts = std::slice::from_raw_parts(times, n_times);
        let ens = simulate_paths(k, &market(m)?, ts, n_paths, seed)?;
        *slot = Box::into_raw(Box::new(GgbmEnsemble(ens)));
        Ok(())
    })
}

/// Writes the number of paths and of time points.
///
/// # Safety
/// `ensemble` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggbm_ensemble_shape(
    ensemble: *const GgbmEnsemble,
    out_paths: *mut usize,
    out_times: *mut usize,
) -> GgbmStatus {
    guard(|| {
        let e = &input(ensemble, "ensemble")?.0;
        *out(out_paths, "out_paths")? = e.n_paths;
        *out(out_times, "out_times")? = e.n_times();
        Ok(())
    })
}

/// Copies the time grid and the row-major path matrix.
///
/// # Safety
/// `times` must hold `n_times` doubles and `values` `n_paths * n_times` doubles.
#[no_mangle]
pub unsafe extern "C" fn ggbm_ensemble_copy(
    ensemble: *const GgbmEnsemble,
    times: *mut f64,
    values: *mut f64,
) -> GgbmStatus {
    guard(|| {
        let e = &input(ensemble, "ensemble")?.0;
        if times.is_null() {
            return Err(Fail::Null("times"));
        }
        if values.is_null() {
            return Err(Fail::Null("values"));
        }
        std::slice::from_raw_parts_mut(times, e.time_grid.len()).copy_from_slice(&e.time_grid);
        std::slice::from_raw_parts_mut(values, e.paths.len()).copy_from_slice(&e.paths);
        Ok(())
    })
}

/// # Safety
/// `ensemble` must come from [`ggbm_simulate`] and not be freed twice. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn ggbm_ensemble_free(ensemble: *mut GgbmEnsemble) {
    if !ensemble.is_null() {
        drop(Box::from_raw(ensemble));
    }
}

/// Reads an option chain CSV.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_chain` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggbm_chain_read_csv(path: *const c_char, out_chain: *mut *mut GgbmChain) -> GgbmStatus {
    guard(|| {
        let slot = out(out_chain, "out_chain")?;
        *slot = ptr::null_mut();
        let c = OptionChain::from_path(Path::new(c_str(path, "path")?))?;
        *slot = Box::into_raw(Box::new(GgbmChain(c)));
        Ok(())
    })
}

/// Number of records; 0 for NULL.
///
/// # Safety
/// `chain` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ggbm_chain_len(chain: *const GgbmChain) -> usize {
    chain.as_ref().map_or(0, |c| c.0.records.len())
}

/// # Safety
/// `chain` must come from [`ggbm_chain_read_csv`] and not be freed twice. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn ggbm_chain_free(chain: *mut GgbmChain) {
    if !chain.is_null() {
        drop(Box::from_raw(chain));
    }
}

/// Least-squares sigma for a fixed kernel, searched on `[sigma_lo, sigma_hi]`.
///
/// # Safety
/// `chain` and `kernel` must be live handles; `out_sigma` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ggbm_implied_sigma(
    chain: *const GgbmChain,
    kernel: *const GgbmKernel,
    sigma_lo: f64,
    sigma_hi: f64,
    out_sigma: *mut f64,
) -> GgbmStatus {
    guard(|| {
        let c = &input(chain, "chain")?.0;
        let k = &input(kernel, "kernel")?.0;
        *out(out_sigma, "out_sigma")? = implied_sigma(c, k, (sigma_lo, sigma_hi))?;
        Ok(())
    })
}
