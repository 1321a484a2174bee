//! Moments and log-moments of the subordinated process.
//!
//! Every kernel has two routes for `<x^n(t)>`: a closed form or series
//! (`analytic_mean`, `analytic_msd`) and the numerical inversion of
//! `x0^n / (s (1 - eta_hat(s) c_n))` with `c_n = sigma^2 n (n-1) / 2 + mu n`
//! (`generic_moment`).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{eta_integral, eta_laplace_unchecked, eta_time, MemoryKernel};
use crate::lapinv::{lap_invert, InversionConfig};
use crate::quad;
use crate::specfun::{gamma, kummer_1f1, lower_incomplete_gamma, ml1, ml2, ml3, rgamma};

const MODULE: &str = "moments";

/// Langevin and valuation constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub x0: f64,
    pub mu: f64,
    pub sigma: f64,
    pub r: f64,
}

impl MarketParams {
    pub fn new(x0: f64, mu: f64, sigma: f64, r: f64) -> Result<Self> {
        let m = MarketParams { x0, mu, sigma, r };
        m.check()?;
        Ok(m)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.x0 > 0.0 && self.x0.is_finite()) {
            return Err(Error::domain(MODULE, format!("x0 = {} must be positive", self.x0)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::domain(MODULE, format!("sigma = {} must be positive", self.sigma)));
        }
        if !self.mu.is_finite() || !self.r.is_finite() {
            return Err(Error::domain(MODULE, "mu and r must be finite"));
        }
        Ok(())
    }

    /// `mu - sigma^2 / 2`.
    pub fn mu_bar(&self) -> f64 {
        self.mu - 0.5 * self.sigma * self.sigma
    }

    /// Same parameters with a different volatility.
    pub fn with_sigma(&self, sigma: f64) -> Self {
        MarketParams { sigma, ..*self }
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::domain(MODULE, format!("t = {t} must be non-negative")));
    }
    Ok(())
}

const SERIES_REL: f64 = 1e-12;
const SERIES_MAX_TERMS: usize = 400;
const SERIES_TAIL_FLAG: f64 = 1e-8;

/// Sum `sum_n term(n)` for the mix-kernel moment series.
fn mix_series<F: Fn(usize) -> Result<f64>>(term: F) -> Result<f64> {
    let mut sum = 0.0;
    let mut prev = 0.0f64;
    for n in 0..SERIES_MAX_TERMS {
        let t = term(n)?;
        sum += t;
        if n > 0 && t.abs() < SERIES_REL * sum.abs() {
            return Ok(sum);
        }
        prev = t;
    }
    let last = term(SERIES_MAX_TERMS)?;
    let q = if prev != 0.0 { (last / prev).abs() } else { 0.0 };
    let tail = if q < 1.0 { last.abs() / (1.0 - q) } else { f64::INFINITY };
    if tail > SERIES_TAIL_FLAG * sum.abs() {
        return Err(Error::Truncation {
            module: MODULE,
            max_terms: SERIES_MAX_TERMS,
            msg: format!("moment series tail bound {tail:e}"),
        });
    }
    Ok(sum + last)
}

/// `L^{-1}[1 / (s (1 - c eta_hat(s)))](t)` in closed or series form.
fn growth_factor(k: &MemoryKernel, c: f64, t: f64) -> Result<f64> {
    if t == 0.0 || c == 0.0 {
        return Ok(1.0);
    }
    match *k {
        MemoryKernel::Standard => Ok((c * t).exp()),
        MemoryKernel::Subdiffusive { alpha } => ml1(alpha, c * t.powf(alpha)),
        MemoryKernel::Tempered { alpha, tau } => {
            // 1 + int_0^t e^{-t'/tau} t'^{-1} E_{alpha,0}(c t'^alpha) dt', with
            // t' = v^{1/alpha} removing the t'^{alpha-1} endpoint singularity.
            let integrand = |v: f64| -> f64 {
                let tp = v.powf(1.0 / alpha);
                (-tp / tau).exp() * c / alpha * ml2(alpha, alpha, c * v).unwrap_or(f64::NAN)
            };
            let body = quad::integrate(integrand, 0.0, t.powf(alpha), 1e-15, 1e-13)?;
            Ok(1.0 + body)
        }
        MemoryKernel::MixStandardSub { alpha, w1, w2 } => mix_series(|n| {
            let nf = n as f64;
            let a = w1 * c * t.powf(alpha);
            Ok(a.powi(n as i32) * rgamma(alpha * nf + 1.0) * kummer_1f1(nf + 1.0, alpha * nf + 1.0, w2 * c * t)?)
        }),
        MemoryKernel::MixSubSub { alpha1, alpha2, w1, w2 } => mix_series(|n| {
            let nf = n as f64;
            let a = w1 * c * t.powf(alpha1);
            Ok(a.powi(n as i32) * ml3(alpha2, alpha1 * nf + 1.0, nf + 1.0, w2 * c * t.powf(alpha2))?)
        }),
    }
}

/// `<x(t)>` from the closed forms.
pub fn analytic_mean(k: &MemoryKernel, m: &MarketParams, t: f64) -> Result<f64> {
    k.check()?;
    m.check()?;
    check_time(t)?;
    Ok(m.x0 * growth_factor(k, m.mu, t)?)
}

/// `<x^2(t)>` from the closed forms.
pub fn analytic_msd(k: &MemoryKernel, m: &MarketParams, t: f64) -> Result<f64> {
    k.check()?;
    m.check()?;
    check_time(t)?;
    Ok(m.x0 * m.x0 * growth_factor(k, m.sigma * m.sigma + 2.0 * m.mu, t)?)
}

/// Real root of `c eta_hat(s) = 1` on `s > 0`, if any.
fn dominant_pole(k: &MemoryKernel, c: f64) -> Option<f64> {
    if c <= 0.0 {
        return None;
    }
    let g = |s: f64| c * eta_laplace_unchecked(k, Complex64::new(s, 0.0)).re - 1.0;
    // eta_hat is decreasing on s > 0
    let (mut lo, mut hi) = (1e-300f64, 1.0f64);
    if g(lo) <= 0.0 {
        return None;
    }
    while g(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e300 {
            return None;
        }
    }
    for _ in 0..200 {
        let mid = if hi / lo > 4.0 { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

/// `<x^n(t)>` by numerical inversion of its Laplace transform.
pub fn generic_moment(k: &MemoryKernel, m: &MarketParams, n: u32, t: f64) -> Result<f64> {
    generic_moment_with(k, m, n, t, &InversionConfig::default())
}

pub fn generic_moment_with(k: &MemoryKernel, m: &MarketParams, n: u32, t: f64, cfg: &InversionConfig) -> Result<f64> {
    k.check()?;
    m.check()?;
    check_time(t)?;
    if n == 0 {
        return Ok(1.0);
    }
    let x0n = m.x0.powi(n as i32);
    if t == 0.0 {
        return Ok(x0n);
    }
    let nf = n as f64;
    let c = 0.5 * m.sigma * m.sigma * nf * (nf - 1.0) + m.mu * nf;
    let mut cfg = *cfg;
    if let Some(p) = dominant_pole(k, c) {
        if p * t > 700.0 {
            return Err(Error::Inversion(format!(
                "growth rate {p:e} makes t = {t} exceed the inversion's dynamic range"
            )));
        }
        cfg.shift = cfg.shift.max(p);
    }
    let v = lap_invert(|s| (s * (1.0 - eta_laplace_unchecked(k, s) * c)).inv(), t, &cfg)?;
    Ok(x0n * v)
}

/// `<log x(t)> = log x0 + mu_bar I(t)`.
pub fn log_mean(k: &MemoryKernel, m: &MarketParams, t: f64) -> Result<f64> {
    k.check()?;
    m.check()?;
    check_time(t)?;
    Ok(m.x0.ln() + m.mu_bar() * eta_integral(k, t)?)
}

/// `int_0^t eta(t - t') I(t') dt'`, i.e. the inverse transform of `eta_hat^2 / s`.
fn double_integral_closed(k: &MemoryKernel, t: f64) -> Result<f64> {
    let pl = |a: f64| t.powf(a) * rgamma(1.0 + a);
    Ok(match *k {
        MemoryKernel::Standard => 0.5 * t * t,
        MemoryKernel::Subdiffusive { alpha } => pl(2.0 * alpha),
        MemoryKernel::Tempered { alpha, tau } => {
            tau.powf(2.0 * alpha) * lower_incomplete_gamma(2.0 * alpha, t / tau)? / gamma(2.0 * alpha)
        }
        MemoryKernel::MixStandardSub { alpha, w1, w2 } => {
            w1 * w1 * pl(2.0 * alpha) + 2.0 * w1 * w2 * pl(alpha + 1.0) + w2 * w2 * pl(2.0)
        }
        MemoryKernel::MixSubSub { alpha1, alpha2, w1, w2 } => {
            w1 * w1 * pl(2.0 * alpha1) + 2.0 * w1 * w2 * pl(alpha1 + alpha2) + w2 * w2 * pl(2.0 * alpha2)
        }
    })
}

/// Same convolution by one-dimensional quadrature, using the closed-form `I`.
fn double_integral_quadrature(k: &MemoryKernel, t: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    // w = t y^p flattens the w^(a-1) singularity of eta at the origin.
    let p = 1.0 / k.min_exponent();
    let f = |y: f64| -> f64 {
        // Gauss-Kronrod nodes never touch y = 0.
        let w = t * y.powf(p);
        let jac = t * p * y.powf(p - 1.0);
        eta_time(k, w).unwrap_or(f64::NAN) * eta_integral(k, (t - w).max(0.0)).unwrap_or(f64::NAN) * jac
    };
    quad::integrate(f, 0.0, 1.0, 1e-15, 1e-11).map_err(|e| Error::Quadrature {
        module: MODULE,
        msg: e.to_string(),
    })
}

fn log_variance_from(m: &MarketParams, i: f64, j: f64) -> f64 {
    let mb = m.mu_bar();
    m.sigma * m.sigma * i + mb * mb * (2.0 * j - i * i)
}

/// Log-variance `<log^2 x> - <log x>^2` from the per-kernel closed forms.
pub fn log_variance(k: &MemoryKernel, m: &MarketParams, t: f64) -> Result<f64> {
    k.check()?;
    m.check()?;
    check_time(t)?;
    let i = eta_integral(k, t)?;
    let j = double_integral_closed(k, t)?;
    Ok(log_variance_from(m, i, j))
}

/// Log-variance through the generic convolution quadrature.
pub fn log_variance_quadrature(k: &MemoryKernel, m: &MarketParams, t: f64) -> Result<f64> {
    k.check()?;
    m.check()?;
    check_time(t)?;
    let i = eta_integral(k, t)?;
    let j = double_integral_quadrature(k, t)?;
    Ok(log_variance_from(m, i, j))
}

/// Expected periodic log return over `[t, t + dt]`, per unit time.
pub fn periodic_log_return(k: &MemoryKernel, m: &MarketParams, t: f64, dt: f64) -> Result<f64> {
    k.check()?;
    m.check()?;
    check_time(t)?;
    if !(dt > 0.0) {
        return Err(Error::domain(MODULE, format!("dt = {dt} must be positive")));
    }
    Ok(m.mu_bar() * (eta_integral(k, t + dt)? - eta_integral(k, t)?) / dt)
}

/// The `dt -> 0` limit `mu_bar eta(t)`.
pub fn periodic_log_return_limit(k: &MemoryKernel, m: &MarketParams, t: f64) -> Result<f64> {
    k.check()?;
    m.check()?;
    Ok(m.mu_bar() * eta_time(k, t)?)
}
