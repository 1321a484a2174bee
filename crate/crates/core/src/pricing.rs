//! Black-Scholes prices and their mixture over operational time.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::MemoryKernel;
use crate::lapinv::{density_grid, DensityGrid};
use crate::moments::MarketParams;
use crate::simulate::{mean_and_se, sample_operational_times, SamplingRoute};
use crate::specfun::std_normal_cdf;

const MODULE: &str = "pricing";

/// Nodes of the density grid used for pricing.
pub const PRICING_GRID_NODES: usize = 4001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    Call,
    Put,
}

impl FromStr for OptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "C" | "c" | "call" | "Call" => Ok(OptionKind::Call),
            "P" | "p" | "put" | "Put" => Ok(OptionKind::Put),
            other => Err(Error::Parse(format!("option kind '{other}' is not C or P"))),
        }
    }
}

impl fmt::Display for OptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptionKind::Call => "C",
            OptionKind::Put => "P",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionSpec {
    pub strike: f64,
    pub maturity: f64,
    pub kind: OptionKind,
    pub market_price: Option<f64>,
}

impl OptionSpec {
    pub fn new(strike: f64, maturity: f64, kind: OptionKind, market_price: Option<f64>) -> Result<Self> {
        let o = OptionSpec {
            strike,
            maturity,
            kind,
            market_price,
        };
        o.check()?;
        Ok(o)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.strike > 0.0 && self.strike.is_finite()) {
            return Err(Error::domain(MODULE, format!("strike {} must be positive", self.strike)));
        }
        if !(self.maturity > 0.0 && self.maturity.is_finite()) {
            return Err(Error::domain(MODULE, format!("maturity {} must be positive", self.maturity)));
        }
        if let Some(p) = self.market_price {
            if !(p >= 0.0) {
                return Err(Error::domain(MODULE, format!("market price {p} must be non-negative")));
            }
        }
        Ok(())
    }
}

/// Which Black-Scholes formula is mixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BsMode {
    /// Rate `r` in `d1` and in the discount factor.
    #[default]
    RiskNeutral,
    /// `d1 = (ln(x/K) + mu tau) / (sigma sqrt(tau))`, discount `exp(-(mu - sigma^2/2) tau)`.
    DriftForm,
}

/// Discounting of the mixed price.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Discount {
    /// `exp(-rate S(T))` inside the mixture.
    #[default]
    Operational,
    /// `exp(-rate T)` outside the mixture.
    Physical,
}

impl FromStr for BsMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "risk-neutral" => Ok(BsMode::RiskNeutral),
            "drift-form" => Ok(BsMode::DriftForm),
            _ => Err(Error::Parse(format!("mode '{s}' is not risk-neutral or drift-form"))),
        }
    }
}

impl FromStr for Discount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "operational" => Ok(Discount::Operational),
            "physical" => Ok(Discount::Physical),
            _ => Err(Error::Parse(format!("discount '{s}' is not operational or physical"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricingConfig {
    pub mode: BsMode,
    pub discount: Discount,
    pub grid_nodes: usize,
}

impl Default for PricingConfig {
    fn default() -> Self {
        PricingConfig {
            mode: BsMode::RiskNeutral,
            discount: Discount::Operational,
            grid_nodes: PRICING_GRID_NODES,
        }
    }
}

/// Effective rate of the formula: `r`, or `mu - sigma^2/2` in drift form.
pub fn effective_rate(m: &MarketParams, mode: BsMode) -> f64 {
    match mode {
        BsMode::RiskNeutral => m.r,
        BsMode::DriftForm => m.mu - 0.5 * m.sigma * m.sigma,
    }
}

/// Black-Scholes call at rate `rate`; `tau = 0` gives the intrinsic value.
fn bs_call_rate(x: f64, k: f64, sigma: f64, rate: f64, tau: f64) -> f64 {
    if tau <= 0.0 {
        return (x - k).max(0.0);
    }
    let vol = sigma * tau.sqrt();
    let disc = (-rate * tau).exp();
    if vol == 0.0 {
        return (x - k * disc).max(0.0);
    }
    let d1 = ((x / k).ln() + (rate + 0.5 * sigma * sigma) * tau) / vol;
    let d2 = d1 - vol;
    (x * std_normal_cdf(d1) - k * disc * std_normal_cdf(d2)).max(0.0)
}

fn check_inputs(m: &MarketParams, strike: f64, tau: f64) -> Result<()> {
    m.check()?;
    if !(strike > 0.0 && strike.is_finite()) {
        return Err(Error::domain(MODULE, format!("strike {strike} must be positive")));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::domain(MODULE, format!("time to maturity {tau} must be positive")));
    }
    Ok(())
}

/// Black-Scholes call on `x0` with time to maturity `tau`.
pub fn bs_call(m: &MarketParams, strike: f64, tau: f64, mode: BsMode) -> Result<f64> {
    check_inputs(m, strike, tau)?;
    Ok(bs_call_rate(m.x0, strike, m.sigma, effective_rate(m, mode), tau))
}

/// Black-Scholes put by parity.
pub fn bs_put(m: &MarketParams, strike: f64, tau: f64, mode: BsMode) -> Result<f64> {
    let c = bs_call(m, strike, tau, mode)?;
    let rate = effective_rate(m, mode);
    Ok((c - m.x0 + strike * (-rate * tau).exp()).max(0.0))
}

/// Mixture weights of one density grid, reusable across strikes and sigmas.
struct Mixer<'a> {
    grid: &'a DensityGrid,
    maturity: f64,
}

impl Mixer<'_> {
    fn call(&self, m: &MarketParams, strike: f64, cfg: &PricingConfig) -> f64 {
        let rate = effective_rate(m, cfg.mode);
        let x = m.x0;
        match cfg.discount {
            Discount::Operational => self.grid.expectation(|u| bs_call_rate(x, strike, m.sigma, rate, u)),
            Discount::Physical => {
                (-rate * self.maturity).exp()
                    * self
                        .grid
                        .expectation(|u| (rate * u).exp() * bs_call_rate(x, strike, m.sigma, rate, u))
            }
        }
    }

    /// Put by parity under the same discounting.
    fn put(&self, m: &MarketParams, strike: f64, cfg: &PricingConfig) -> f64 {
        let c = self.call(m, strike, cfg);
        let rate = effective_rate(m, cfg.mode);
        let p = match cfg.discount {
            Discount::Operational => c - m.x0 + strike * self.grid.expectation(|u| (-rate * u).exp()),
            Discount::Physical => {
                let d = (-rate * self.maturity).exp();
                c - d * (m.x0 * self.grid.expectation(|u| (rate * u).exp()) - strike)
            }
        };
        p.max(0.0)
    }
}

fn pricing_grid(k: &MemoryKernel, t: f64, cfg: &PricingConfig) -> Result<DensityGrid> {
    density_grid(k, t, cfg.grid_nodes)
}

/// Price of `opt` from a precomputed grid for its maturity.
pub fn gbs_price_on_grid(m: &MarketParams, opt: &OptionSpec, grid: &DensityGrid, cfg: &PricingConfig) -> Result<f64> {
    opt.check()?;
    m.check()?;
    if (grid.t - opt.maturity).abs() > 1e-12 * opt.maturity {
        return Err(Error::Grid(format!(
            "grid built for t = {} used at maturity {}",
            grid.t, opt.maturity
        )));
    }
    let mix = Mixer {
        grid,
        maturity: opt.maturity,
    };
    Ok(match opt.kind {
        OptionKind::Call => mix.call(m, opt.strike, cfg),
        OptionKind::Put => mix.put(m, opt.strike, cfg),
    })
}

/// Generalized Black-Scholes call with an explicit configuration.
pub fn gbs_call_with(k: &MemoryKernel, m: &MarketParams, strike: f64, t: f64, cfg: &PricingConfig) -> Result<f64> {
    k.check()?;
    check_inputs(m, strike, t)?;
    if k.reduced() == MemoryKernel::Standard {
        let c = bs_call(m, strike, t, cfg.mode)?;
        return Ok(c);
    }
    let grid = pricing_grid(k, t, cfg)?;
    gbs_price_on_grid(m, &OptionSpec::new(strike, t, OptionKind::Call, None)?, &grid, cfg)
}

/// Generalized Black-Scholes call: `int C_BS(x0, u) h(u, T) du`.
pub fn gbs_call(k: &MemoryKernel, m: &MarketParams, strike: f64, t: f64) -> Result<f64> {
    gbs_call_with(k, m, strike, t, &PricingConfig::default())
}

/// Generalized put by parity.
pub fn gbs_put_with(k: &MemoryKernel, m: &MarketParams, strike: f64, t: f64, cfg: &PricingConfig) -> Result<f64> {
    k.check()?;
    check_inputs(m, strike, t)?;
    let grid = pricing_grid(k, t, cfg)?;
    gbs_price_on_grid(m, &OptionSpec::new(strike, t, OptionKind::Put, None)?, &grid, cfg)
}

pub fn gbs_put(k: &MemoryKernel, m: &MarketParams, strike: f64, t: f64) -> Result<f64> {
    gbs_put_with(k, m, strike, t, &PricingConfig::default())
}

/// Monte-Carlo oracle: average of the conditional Black-Scholes price over
/// `n` draws of `S(T)`. Returns `(price, standard error)`.
pub fn gbs_call_mc_with(
    k: &MemoryKernel,
    m: &MarketParams,
    strike: f64,
    t: f64,
    n: usize,
    seed: u64,
    cfg: &PricingConfig,
) -> Result<(f64, f64)> {
    k.check()?;
    check_inputs(m, strike, t)?;
    if n < 2 {
        return Err(Error::Sampling("need at least two draws".into()));
    }
    let rate = effective_rate(m, cfg.mode);
    let us = sample_operational_times(k, t, n, seed, SamplingRoute::default_for(&k.reduced()))?;
    let vals: Vec<f64> = us
        .par_iter()
        .map(|&u| {
            let c = bs_call_rate(m.x0, strike, m.sigma, rate, u);
            match cfg.discount {
                Discount::Operational => c,
                Discount::Physical => (rate * (u - t)).exp() * c,
            }
        })
        .collect();
    Ok(mean_and_se(&vals))
}

pub fn gbs_call_mc(k: &MemoryKernel, m: &MarketParams, strike: f64, t: f64, n: usize, seed: u64) -> Result<(f64, f64)> {
    gbs_call_mc_with(k, m, strike, t, n, seed, &PricingConfig::default())
}

/// Calls across `strikes` at one maturity, sharing one density grid.
pub fn price_curve_with(
    k: &MemoryKernel,
    m: &MarketParams,
    strikes: &[f64],
    t: f64,
    cfg: &PricingConfig,
) -> Result<Vec<f64>> {
    k.check()?;
    m.check()?;
    for &s in strikes {
        check_inputs(m, s, t)?;
    }
    if k.reduced() == MemoryKernel::Standard {
        return strikes.iter().map(|&s| bs_call(m, s, t, cfg.mode)).collect();
    }
    let grid = pricing_grid(k, t, cfg)?;
    let mix = Mixer { grid: &grid, maturity: t };
    Ok(strikes.par_iter().map(|&s| mix.call(m, s, cfg)).collect())
}

pub fn price_curve(k: &MemoryKernel, m: &MarketParams, strikes: &[f64], t: f64) -> Result<Vec<f64>> {
    price_curve_with(k, m, strikes, t, &PricingConfig::default())
}
