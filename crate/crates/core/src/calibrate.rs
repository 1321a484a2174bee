//! Least-squares calibration of `sigma` and the memory exponent to an option chain.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::{Arc, RwLock};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::MemoryKernel;
use crate::lapinv::{density_grid, DensityGrid};
use crate::moments::MarketParams;
use crate::pricing::{gbs_price_on_grid, OptionKind, OptionSpec, PricingConfig};
use crate::specfun::std_normal_pdf;

const MODULE: &str = "calibrate";

/// Default search bracket for sigma.
pub const SIGMA_BRACKET: (f64, f64) = (1e-4, 3.0);
/// Absolute tolerance of the golden-section search.
pub const SIGMA_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptionChain {
    pub quote_date: NaiveDate,
    pub spot: f64,
    pub rate: f64,
    pub records: Vec<OptionSpec>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ChainRow {
    quote_date: String,
    spot: f64,
    rate: f64,
    strike: f64,
    maturity_years: f64,
    kind: String,
    market_price: f64,
}

const CHAIN_HEADER: [&str; 7] = ["quote_date", "spot", "rate", "strike", "maturity_years", "kind", "market_price"];

impl OptionChain {
    pub fn new(quote_date: NaiveDate, spot: f64, rate: f64, records: Vec<OptionSpec>) -> Result<Self> {
        let c = OptionChain {
            quote_date,
            spot,
            rate,
            records,
        };
        c.check()?;
        Ok(c)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.spot > 0.0 && self.spot.is_finite()) {
            return Err(Error::domain(MODULE, format!("spot {} must be positive", self.spot)));
        }
        if !self.rate.is_finite() {
            return Err(Error::domain(MODULE, "rate must be finite"));
        }
        if self.records.is_empty() {
            return Err(Error::domain(MODULE, "option chain has no records"));
        }
        for r in &self.records {
            r.check()?;
            if r.market_price.is_none() {
                return Err(Error::domain(MODULE, "every chain record needs a market price"));
            }
        }
        Ok(())
    }

    /// Parse the CSV layout `quote_date,spot,rate,strike,maturity_years,kind,market_price`.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers().map_err(|e| Error::Parse(format!("chain header: {e}")))?;
        if header.iter().collect::<Vec<_>>() != CHAIN_HEADER {
            return Err(Error::Parse(format!(
                "chain header must be '{}', got '{}'",
                CHAIN_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut first: Option<(NaiveDate, f64, f64)> = None;
        let mut records = Vec::new();
        for (i, row) in rdr.deserialize::<ChainRow>().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| Error::Parse(format!("chain line {line}: {e}")))?;
            let date = NaiveDate::parse_from_str(&row.quote_date, "%Y-%m-%d")
                .map_err(|e| Error::Parse(format!("chain line {line}: quote_date '{}': {e}", row.quote_date)))?;
            match first {
                None => first = Some((date, row.spot, row.rate)),
                Some(f) if f != (date, row.spot, row.rate) => {
                    return Err(Error::Parse(format!(
                        "chain line {line}: quote_date, spot and rate must be the same on every row"
                    )));
                }
                Some(_) => {}
            }
            let kind: OptionKind = row
                .kind
                .parse()
                .map_err(|e: Error| Error::Parse(format!("chain line {line}: {e}")))?;
            records.push(
                OptionSpec::new(row.strike, row.maturity_years, kind, Some(row.market_price))
                    .map_err(|e| Error::Parse(format!("chain line {line}: {e}")))?,
            );
        }
        let (date, spot, rate) = first.ok_or_else(|| Error::Parse("option chain has no records".into()))?;
        OptionChain::new(date, spot, rate, records)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_reader(f)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for r in &self.records {
            wtr.serialize(ChainRow {
                quote_date: self.quote_date.format("%Y-%m-%d").to_string(),
                spot: self.spot,
                rate: self.rate,
                strike: r.strike,
                maturity_years: r.maturity,
                kind: r.kind.to_string(),
                market_price: r.market_price.unwrap_or(0.0),
            })
            .map_err(|e| Error::Io(e.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Market parameters with drift equal to the rate.
    pub fn market(&self, sigma: f64) -> Result<MarketParams> {
        MarketParams::new(self.spot, self.rate, sigma, self.rate)
    }

    /// A chain of model prices at `(k, sigma)` for the given contracts.
    pub fn synthetic(
        quote_date: NaiveDate,
        spot: f64,
        rate: f64,
        contracts: &[(f64, f64, OptionKind)],
        k: &MemoryKernel,
        sigma: f64,
        cfg: &PricingConfig,
    ) -> Result<Self> {
        let m = MarketParams::new(spot, rate, sigma, rate)?;
        let cache = GridCache::new(cfg.grid_nodes);
        let records = contracts
            .iter()
            .map(|&(strike, maturity, kind)| {
                let spec = OptionSpec::new(strike, maturity, kind, None)?;
                let grid = cache.get(k, maturity)?;
                let p = gbs_price_on_grid(&m, &spec, &grid, cfg)?;
                OptionSpec::new(strike, maturity, kind, Some(p))
            })
            .collect::<Result<Vec<_>>>()?;
        OptionChain::new(quote_date, spot, rate, records)
    }
}

/// Density grids keyed by `(kernel, maturity)`; they do not depend on sigma.
#[derive(Debug, Default)]
pub struct GridCache {
    nodes: usize,
    grids: RwLock<HashMap<(String, u64), Arc<DensityGrid>>>,
}

impl GridCache {
    pub fn new(nodes: usize) -> Self {
        GridCache {
            nodes,
            grids: RwLock::new(HashMap::new()),
        }
    }

    pub fn get(&self, k: &MemoryKernel, maturity: f64) -> Result<Arc<DensityGrid>> {
        let key = (k.to_string(), maturity.to_bits());
        if let Some(g) = self.grids.read().expect("grid cache poisoned").get(&key) {
            return Ok(Arc::clone(g));
        }
        let g = Arc::new(density_grid(k, maturity, self.nodes)?);
        let mut w = self.grids.write().expect("grid cache poisoned");
        Ok(Arc::clone(w.entry(key).or_insert(g)))
    }

    pub fn len(&self) -> usize {
        self.grids.read().expect("grid cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Fitting objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Plain sum of squared price errors.
    #[default]
    Sse,
    /// Errors divided by the Black-Scholes vega at the trial sigma.
    Vega,
    /// Errors relative to the market price.
    Relative,
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sse" => Ok(Objective::Sse),
            "vega" => Ok(Objective::Vega),
            "relative" => Ok(Objective::Relative),
            _ => Err(Error::Parse(format!("objective '{s}' is not sse, vega or relative"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    pub objective: Objective,
    pub include_puts: bool,
    pub pricing: PricingConfig,
    pub bracket: (f64, f64),
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            objective: Objective::Sse,
            include_puts: false,
            pricing: PricingConfig::default(),
            bracket: SIGMA_BRACKET,
        }
    }
}

fn fitted_records<'a>(chain: &'a OptionChain, opts: &CalibrationOptions) -> Result<Vec<&'a OptionSpec>> {
    let recs: Vec<&OptionSpec> = chain
        .records
        .iter()
        .filter(|r| opts.include_puts || r.kind == OptionKind::Call)
        .collect();
    if recs.is_empty() {
        return Err(Error::Calibration("no records left to fit (puts are excluded by default)".into()));
    }
    Ok(recs)
}

/// Model prices for `records` at `(k, sigma)`.
fn model_prices(
    chain: &OptionChain,
    records: &[&OptionSpec],
    k: &MemoryKernel,
    sigma: f64,
    cache: &GridCache,
    opts: &CalibrationOptions,
) -> Result<Vec<f64>> {
    let m = chain.market(sigma)?;
    records
        .iter()
        .map(|r| {
            let g = cache.get(k, r.maturity)?;
            gbs_price_on_grid(&m, r, &g, &opts.pricing)
        })
        .collect()
}

fn objective_value(
    chain: &OptionChain,
    records: &[&OptionSpec],
    prices: &[f64],
    sigma: f64,
    opts: &CalibrationOptions,
) -> f64 {
    records
        .iter()
        .zip(prices)
        .map(|(r, p)| {
            let market = r.market_price.unwrap_or(0.0);
            let e = p - market;
            let w = match opts.objective {
                Objective::Sse => 1.0,
                Objective::Vega => {
                    let sq = r.maturity.sqrt();
                    let d1 = ((chain.spot / r.strike).ln() + (chain.rate + 0.5 * sigma * sigma) * r.maturity)
                        / (sigma * sq);
                    1.0 / (chain.spot * std_normal_pdf(d1) * sq).max(1e-8)
                }
                Objective::Relative => 1.0 / market.max(1e-8),
            };
            (e * w) * (e * w)
        })
        .sum()
}

/// Golden-section minimizer on `[lo, hi]` to absolute tolerance `tol`.
fn golden_section<F: FnMut(f64) -> Result<f64>>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// Sigma minimizing the objective for a fixed kernel.
pub fn implied_sigma_with(
    chain: &OptionChain,
    k: &MemoryKernel,
    opts: &CalibrationOptions,
    cache: &GridCache,
) -> Result<f64> {
    chain.check()?;
    k.check()?;
    let (lo, hi) = opts.bracket;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::Calibration(format!("empty or invalid sigma bracket ({lo}, {hi})")));
    }
    let records = fitted_records(chain, opts)?;
    if records.iter().all(|r| r.market_price.unwrap_or(0.0) == 0.0) {
        return Err(Error::Calibration("flat objective: every market price is zero".into()));
    }
    golden_section(
        |s| {
            let p = model_prices(chain, &records, k, s, cache, opts)?;
            Ok(objective_value(chain, &records, &p, s, opts))
        },
        lo,
        hi,
        SIGMA_TOL,
    )
}

pub fn implied_sigma(chain: &OptionChain, k: &MemoryKernel, bracket: (f64, f64)) -> Result<f64> {
    let opts = CalibrationOptions {
        bracket,
        ..Default::default()
    };
    implied_sigma_with(chain, k, &opts, &GridCache::new(opts.pricing.grid_nodes))
}

/// Kernel family scanned over its memory exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum KernelFamily {
    /// Subdiffusive kernel; `alpha = 1` is the standard kernel.
    Sub,
    /// Tempered kernel with fixed `tau`.
    Tempered { tau: f64 },
    /// Standard plus subdiffusive mixture with weight `w1` on the power law.
    MixGs { w1: f64 },
    /// Two power laws; the scanned exponent is `alpha1`, `alpha2` is fixed.
    MixSs { alpha2: f64, w1: f64 },
}

impl KernelFamily {
    pub fn kernel(&self, alpha: f64) -> Result<MemoryKernel> {
        match *self {
            KernelFamily::Sub => MemoryKernel::from_alpha(alpha),
            KernelFamily::Tempered { tau } => MemoryKernel::tempered(alpha, tau),
            KernelFamily::MixGs { w1 } => {
                if alpha == 1.0 {
                    Ok(MemoryKernel::Standard)
                } else {
                    MemoryKernel::mix_standard_sub(alpha, w1)
                }
            }
            KernelFamily::MixSs { alpha2, w1 } => MemoryKernel::mix_sub_sub(alpha, alpha2, w1),
        }
    }

    /// The same family with a different mixture weight.
    fn with_weight(&self, w1: f64) -> Self {
        match *self {
            KernelFamily::MixGs { .. } => KernelFamily::MixGs { w1 },
            KernelFamily::MixSs { alpha2, .. } => KernelFamily::MixSs { alpha2, w1 },
            f => f,
        }
    }
}

/// One point of an alpha scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanPoint {
    pub alpha: f64,
    pub kernel: MemoryKernel,
    pub sigma_hat: f64,
    pub mse: f64,
}

/// Mean squared price error of `k` at `sigma` over the fitted records.
pub fn mse_at(
    chain: &OptionChain,
    k: &MemoryKernel,
    sigma: f64,
    opts: &CalibrationOptions,
    cache: &GridCache,
) -> Result<(f64, Vec<f64>)> {
    let records = fitted_records(chain, opts)?;
    let p = model_prices(chain, &records, k, sigma, cache, opts)?;
    let errs: Vec<f64> = records
        .iter()
        .zip(&p)
        .map(|(r, p)| (p - r.market_price.unwrap_or(0.0)).abs())
        .collect();
    let mse = errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64;
    Ok((mse, errs))
}

/// For each alpha: fit sigma, then report the MSE. Returns the curve and
/// the index of its minimum (the first one on ties).
pub fn mse_vs_alpha_with(
    chain: &OptionChain,
    family: &KernelFamily,
    alpha_grid: &[f64],
    opts: &CalibrationOptions,
    cache: &GridCache,
) -> Result<(Vec<ScanPoint>, usize)> {
    if alpha_grid.is_empty() {
        return Err(Error::Calibration("alpha grid is empty".into()));
    }
    if let Some(a) = alpha_grid.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
        return Err(Error::Calibration(format!("alpha {a} outside (0, 1]")));
    }
    let points = alpha_grid
        .par_iter()
        .map(|&alpha| {
            let k = family.kernel(alpha)?;
            let sigma_hat = implied_sigma_with(chain, &k, opts, cache)?;
            let (mse, _) = mse_at(chain, &k, sigma_hat, opts, cache)?;
            Ok(ScanPoint {
                alpha,
                kernel: k,
                sigma_hat,
                mse,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = points
        .iter()
        .enumerate()
        .fold(0, |b, (i, p)| if p.mse < points[b].mse { i } else { b });
    Ok((points, best))
}

/// MSE curve over `alpha_grid` with the sub family, and the best alpha.
pub fn mse_vs_alpha(chain: &OptionChain, alpha_grid: &[f64]) -> Result<(Vec<f64>, f64)> {
    let opts = CalibrationOptions::default();
    let cache = GridCache::new(opts.pricing.grid_nodes);
    let (pts, best) = mse_vs_alpha_with(chain, &KernelFamily::Sub, alpha_grid, &opts, &cache)?;
    Ok((pts.iter().map(|p| p.mse).collect(), pts[best].alpha))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub kernel: MemoryKernel,
    pub sigma_hat: f64,
    pub mse: f64,
    pub per_record_abs_error: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    pub mse_curve: Vec<f64>,
    pub sigma_curve: Vec<f64>,
    /// Mixture weights tried, when a weight scan was requested.
    pub weight_grid: Vec<f64>,
}

/// Full calibration: alpha scan (optionally crossed with a weight scan for
/// mixture families), best point, per-record errors.
pub fn calibrate(
    chain: &OptionChain,
    family: &KernelFamily,
    alpha_grid: &[f64],
    weight_grid: Option<&[f64]>,
    opts: &CalibrationOptions,
) -> Result<CalibrationResult> {
    let cache = GridCache::new(opts.pricing.grid_nodes);
    let families: Vec<KernelFamily> = match (family, weight_grid) {
        (KernelFamily::MixGs { .. } | KernelFamily::MixSs { .. }, Some(ws)) if !ws.is_empty() => {
            ws.iter().map(|&w| family.with_weight(w)).collect()
        }
        _ => vec![*family],
    };
    let mut best: Option<(Vec<ScanPoint>, usize)> = None;
    for fam in &families {
        let (pts, i) = mse_vs_alpha_with(chain, fam, alpha_grid, opts, &cache)?;
        let better = best.as_ref().is_none_or(|(bp, bi)| pts[i].mse < bp[*bi].mse);
        if better {
            best = Some((pts, i));
        }
    }
    let (pts, i) = best.expect("at least one family scanned");
    let p = &pts[i];
    let (mse, errs) = mse_at(chain, &p.kernel, p.sigma_hat, opts, &cache)?;
    Ok(CalibrationResult {
        kernel: p.kernel,
        sigma_hat: p.sigma_hat,
        mse,
        per_record_abs_error: errs,
        alpha_grid: pts.iter().map(|p| p.alpha).collect(),
        mse_curve: pts.iter().map(|p| p.mse).collect(),
        sigma_curve: pts.iter().map(|p| p.sigma_hat).collect(),
        weight_grid: weight_grid.map(|w| w.to_vec()).unwrap_or_default(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Moneyness {
    InTheMoney,
    AtTheMoney,
    OutOfTheMoney,
}

impl Moneyness {
    pub fn of(spot: f64, strike: f64, kind: OptionKind) -> Self {
        if (strike - spot).abs() / spot < 1e-6 {
            return Moneyness::AtTheMoney;
        }
        let call_itm = strike < spot;
        match (kind, call_itm) {
            (OptionKind::Call, true) | (OptionKind::Put, false) => Moneyness::InTheMoney,
            _ => Moneyness::OutOfTheMoney,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Moneyness::InTheMoney => "ITM",
            Moneyness::AtTheMoney => "ATM",
            Moneyness::OutOfTheMoney => "OTM",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MoneynessRow {
    pub alpha: f64,
    pub sigma_hat: f64,
    pub strike: f64,
    pub maturity: f64,
    pub kind: OptionKind,
    pub moneyness: Moneyness,
    pub model_price: f64,
    pub market_price: f64,
    pub abs_error: f64,
}

/// Per-record absolute errors for each alpha (sub family), sigma refitted per alpha.
pub fn moneyness_profile_with(
    chain: &OptionChain,
    family: &KernelFamily,
    alphas: &[f64],
    opts: &CalibrationOptions,
    cache: &GridCache,
) -> Result<Vec<MoneynessRow>> {
    let records = fitted_records(chain, opts)?;
    let per_alpha = alphas
        .par_iter()
        .map(|&alpha| {
            let k = family.kernel(alpha)?;
            let sigma_hat = implied_sigma_with(chain, &k, opts, cache)?;
            let prices = model_prices(chain, &records, &k, sigma_hat, cache, opts)?;
            Ok(records
                .iter()
                .zip(prices)
                .map(|(r, p)| {
                    let market = r.market_price.unwrap_or(0.0);
                    MoneynessRow {
                        alpha,
                        sigma_hat,
                        strike: r.strike,
                        maturity: r.maturity,
                        kind: r.kind,
                        moneyness: Moneyness::of(chain.spot, r.strike, r.kind),
                        model_price: p,
                        market_price: market,
                        abs_error: (p - market).abs(),
                    }
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_alpha.into_iter().flatten().collect())
}

pub fn moneyness_profile(chain: &OptionChain, alphas: &[f64]) -> Result<Vec<MoneynessRow>> {
    let opts = CalibrationOptions::default();
    moneyness_profile_with(chain, &KernelFamily::Sub, alphas, &opts, &GridCache::new(opts.pricing.grid_nodes))
}
