use chrono::NaiveDate;
use ggbm::calibrate::{
    calibrate, implied_sigma, moneyness_profile, mse_vs_alpha, mse_vs_alpha_with, CalibrationOptions, GridCache,
    KernelFamily, Moneyness, OptionChain, SIGMA_BRACKET,
};
use ggbm::pricing::{OptionKind, OptionSpec, PricingConfig};
use ggbm::{Error, MemoryKernel};

fn date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 3, 1).unwrap()
}

fn chain(alpha: f64, sigma: f64, strikes: &[f64], maturities: &[f64]) -> OptionChain {
    let contracts: Vec<_> = maturities
        .iter()
        .flat_map(|t| strikes.iter().map(move |k| (*k, *t, OptionKind::Call)))
        .collect();
    let k = MemoryKernel::from_alpha(alpha).unwrap();
    OptionChain::synthetic(date(), 100.0, 0.02, &contracts, &k, sigma, &PricingConfig::default()).unwrap()
}

fn strikes(n: usize) -> Vec<f64> {
    (0..n).map(|i| 80.0 + 40.0 * i as f64 / (n - 1) as f64).collect()
}

#[test]
fn sigma_recovered_with_true_alpha() {
    let c = chain(0.7, 0.25, &strikes(10), &[0.5]);
    let s = implied_sigma(&c, &MemoryKernel::subdiffusive(0.7).unwrap(), SIGMA_BRACKET).unwrap();
    assert!((s - 0.25).abs() < 1e-3, "{s}");
}

#[test]
fn black_scholes_chain_prefers_unit_alpha() {
    let c = chain(1.0, 0.2, &strikes(12), &[0.25, 1.0]);
    let grid: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
    let (curve, best) = mse_vs_alpha(&c, &grid).unwrap();
    assert_eq!(best, 1.0);
    assert_eq!(curve.len(), 10);
    // residual is set by the sigma search tolerance
    assert!(curve[9] < 1e-10, "{}", curve[9]);
}

#[test]
fn argmin_is_invariant_under_price_scaling() {
    // scaling spot, strikes and prices together scales every model price too
    let c = chain(0.6, 0.3, &strikes(8), &[0.5]);
    let scale = 7.5;
    let scaled = OptionChain::new(
        c.quote_date,
        c.spot * scale,
        c.rate,
        c.records
            .iter()
            .map(|r| OptionSpec::new(r.strike * scale, r.maturity, r.kind, r.market_price.map(|p| p * scale)).unwrap())
            .collect(),
    )
    .unwrap();
    let grid = [0.4, 0.5, 0.6, 0.7, 0.8];
    let (a, best_a) = mse_vs_alpha(&c, &grid).unwrap();
    let (b, best_b) = mse_vs_alpha(&scaled, &grid).unwrap();
    assert_eq!(best_a, best_b);
    for (x, y) in a.iter().zip(&b) {
        assert!((y - x * scale * scale).abs() <= 1e-6 * y.max(1e-12) + 1e-12, "{x} {y}");
    }
}

#[test]
fn moneyness_profile_shape_and_bs_itm_dominance() {
    let c = chain(1.0, 0.2, &strikes(9), &[0.5]);
    let alphas = [0.5, 0.8, 1.0];
    let rows = moneyness_profile(&c, &alphas).unwrap();
    assert_eq!(rows.len(), c.records.len() * alphas.len());
    for r in rows.iter().filter(|r| r.moneyness == Moneyness::InTheMoney && r.alpha == 1.0) {
        for other in rows.iter().filter(|o| o.strike == r.strike && o.alpha != 1.0) {
            assert!(r.abs_error <= other.abs_error, "K={}: {} > {}", r.strike, r.abs_error, other.abs_error);
        }
    }
    assert!(rows.iter().any(|r| r.moneyness == Moneyness::AtTheMoney));
}

#[test]
fn calibration_result_invariants() {
    let c = chain(0.8, 0.3, &strikes(6), &[0.25, 0.5]);
    let grid = [0.7, 0.8, 0.9];
    let r = calibrate(&c, &KernelFamily::Sub, &grid, None, &CalibrationOptions::default()).unwrap();
    assert_eq!(r.alpha_grid, grid);
    assert_eq!(r.mse_curve.len(), grid.len());
    let mse = r.per_record_abs_error.iter().map(|e| e * e).sum::<f64>() / r.per_record_abs_error.len() as f64;
    assert!((mse - r.mse).abs() <= 1e-15 + 1e-12 * mse);
    assert_eq!(r.kernel, MemoryKernel::subdiffusive(0.8).unwrap());
    assert!((r.sigma_hat - 0.3).abs() < 1e-4);
    let json = serde_json::to_string(&r).unwrap();
    assert!(json.contains("\"mse_curve\""));
}

#[test]
fn mixture_weight_scan_finds_generating_weight() {
    let contracts: Vec<_> = strikes(8).into_iter().map(|k| (k, 0.5, OptionKind::Call)).collect();
    let truth = MemoryKernel::mix_standard_sub(0.6, 0.3).unwrap();
    let c = OptionChain::synthetic(date(), 100.0, 0.02, &contracts, &truth, 0.25, &PricingConfig::default()).unwrap();
    let r = calibrate(
        &c,
        &KernelFamily::MixGs { w1: 0.5 },
        &[0.5, 0.6, 0.7],
        Some(&[0.1, 0.3, 0.5]),
        &CalibrationOptions::default(),
    )
    .unwrap();
    assert_eq!(r.kernel, truth);
    assert!(r.mse < 1e-10);
}

#[test]
fn puts_are_excluded_by_default() {
    let rec = |kind| OptionSpec::new(100.0, 0.5, kind, Some(5.0)).unwrap();
    let only_puts = OptionChain::new(date(), 100.0, 0.02, vec![rec(OptionKind::Put)]).unwrap();
    assert!(matches!(
        implied_sigma(&only_puts, &MemoryKernel::Standard, SIGMA_BRACKET),
        Err(Error::Calibration(_))
    ));
    let opts = CalibrationOptions {
        include_puts: true,
        ..Default::default()
    };
    let cache = GridCache::new(501);
    let (pts, _) = mse_vs_alpha_with(&only_puts, &KernelFamily::Sub, &[1.0], &opts, &cache).unwrap();
    assert!(pts[0].mse < 1e-10);
}

#[test]
fn alpha_grid_outside_unit_interval_rejected() {
    let c = chain(1.0, 0.2, &strikes(3), &[0.5]);
    assert!(mse_vs_alpha(&c, &[0.5, 1.2]).is_err());
    assert!(mse_vs_alpha(&c, &[]).is_err());
}
