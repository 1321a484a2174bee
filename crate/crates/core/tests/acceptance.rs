//! Acceptance battery: one PASS/FAIL line per criterion, with timing against its budget.
//!
//! Built with `harness = false` so the report is always printed.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use ggbm::calibrate::{
    mse_at, mse_vs_alpha_with, CalibrationOptions, GridCache, KernelFamily, OptionChain,
};
use ggbm::lapinv::{density_grid, lap_invert, subordination_density, InversionConfig, SubordinationDensity};
use ggbm::moments::{analytic_mean, analytic_msd, generic_moment, log_mean, log_variance};
use ggbm::pricing::{bs_call, gbs_call, gbs_call_mc, price_curve, BsMode, OptionKind, PricingConfig};
use ggbm::simulate::{ensemble_stats, log_return_histogram, simulate_paths};
use ggbm::specfun::{erfc, gamma, lower_incomplete_gamma, ml1, ml2, ml3};
use ggbm::{MarketParams, MemoryKernel};
use num_complex::Complex64;

type Outcome = Result<String, String>;

fn all_kernels() -> Vec<MemoryKernel> {
    vec![
        MemoryKernel::Standard,
        MemoryKernel::subdiffusive(0.8).unwrap(),
        MemoryKernel::tempered(0.5, 10.0).unwrap(),
        MemoryKernel::mix_standard_sub(0.8, 0.5).unwrap(),
        MemoryKernel::mix_sub_sub(0.6, 0.8, 0.5).unwrap(),
    ]
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Collects failures; the outcome lists the worst observed discrepancy.
struct Tally {
    failures: Vec<String>,
    worst: f64,
}

impl Tally {
    fn new() -> Self {
        Tally {
            failures: Vec::new(),
            worst: 0.0,
        }
    }

    fn check(&mut self, ok: bool, err: f64, what: impl FnOnce() -> String) {
        if err.is_finite() {
            self.worst = self.worst.max(err);
        } else {
            self.worst = f64::INFINITY;
        }
        if !ok {
            self.failures.push(what());
        }
    }

    fn finish(self, label: &str) -> Outcome {
        if self.failures.is_empty() {
            Ok(format!("{label} {:.3e}", self.worst))
        } else {
            let n = self.failures.len();
            let first: Vec<_> = self.failures.into_iter().take(3).collect();
            Err(format!("{n} failing checks, e.g. {}", first.join("; ")))
        }
    }
}

fn c1_gbm_reduction() -> Outcome {
    let m = MarketParams::new(100.0, 0.02, 0.2, 0.02).unwrap();
    let mut t = Tally::new();
    for t_mat in [1.0 / 12.0, 1.0] {
        for mny in [0.5, 0.8, 1.0, 1.2, 2.0] {
            let k = mny * m.x0;
            let g = gbs_call(&MemoryKernel::Standard, &m, k, t_mat).map_err(|e| e.to_string())?;
            let b = bs_call(&m, k, t_mat, BsMode::RiskNeutral).map_err(|e| e.to_string())?;
            let rel = (g - b).abs() / b.abs().max(f64::MIN_POSITIVE);
            t.check(rel <= 1e-10, rel, || format!("K/x0={mny} T={t_mat}: {g} vs {b}"));
        }
    }
    t.finish("max rel err")
}

fn c2_special_functions() -> Outcome {
    let mut t = Tally::new();
    for z in linspace(-5.0, 5.0, 101) {
        let v = ml1(1.0, z).map_err(|e| e.to_string())?;
        let err = (v - z.exp()).abs();
        t.check(err <= 1e-10, err, || format!("E_1({z}) = {v}"));
    }
    let (mut half_rel, mut half_ulps) = (0.0f64, 0.0f64);
    for z in linspace(0.0, 5.0, 51) {
        let v = ml1(0.5, z).map_err(|e| e.to_string())?;
        let want = (z * z).exp() * erfc(-z);
        let err = (v - want).abs();
        half_rel = half_rel.max(err / want);
        half_ulps = half_ulps.max(err / (want * f64::EPSILON));
        t.check(err <= 1e-8, err, || {
            format!("|E_1/2({z}) - oracle| = {err:.2e} (value {want:.3e}, one ulp {:.2e})", want * f64::EPSILON)
        });
    }
    for a in [0.5, 0.8, 1.5] {
        for z in linspace(0.1, 10.0, 100) {
            let g = lower_incomplete_gamma(a, z).map_err(|e| e.to_string())?;
            let want = gamma(a) * (-z).exp() * z.powf(a) * ml2(1.0, a + 1.0, z).map_err(|e| e.to_string())?;
            let rel = (g - want).abs() / want.abs();
            t.check(rel <= 1e-10, rel, || format!("gamma({a}, {z}) = {g} vs {want}"));
        }
    }
    t.finish("max err")
        .map_err(|e| format!("{e}; E_1/2 max rel err {half_rel:.2e} ({half_ulps:.1} ulp)"))
}

fn c3_inversion() -> Outcome {
    let cfg = InversionConfig::default();
    let mut t = Tally::new();
    let ts = linspace(0.1, 5.0, 50);
    let (a, lam) = (0.7, -0.8);
    for &tt in &ts {
        // E_a(lam t^a)  <->  s^{a-1} / (s^a - lam)
        let v = lap_invert(|s: Complex64| s.powf(a - 1.0) / (s.powf(a) - lam), tt, &cfg).map_err(|e| e.to_string())?;
        let w = ml1(a, lam * tt.powf(a)).map_err(|e| e.to_string())?;
        let rel = (v - w).abs() / w.abs();
        t.check(rel <= 1e-6, rel, || format!("one-parameter t={tt}: {v} vs {w}"));

        // t^{b-1} E_{a,b}(lam t^a)  <->  s^{a-b} / (s^a - lam)
        let b = 1.3;
        let v = lap_invert(|s: Complex64| s.powf(a - b) / (s.powf(a) - lam), tt, &cfg).map_err(|e| e.to_string())?;
        let w = tt.powf(b - 1.0) * ml2(a, b, lam * tt.powf(a)).map_err(|e| e.to_string())?;
        let rel = (v - w).abs() / w.abs();
        t.check(rel <= 1e-6, rel, || format!("two-parameter t={tt}: {v} vs {w}"));

        // t^{b-1} E^g_{a,b}(lam t^a)  <->  s^{a g - b} / (s^a - lam)^g
        let g = 1.5;
        let v = lap_invert(|s: Complex64| s.powf(a * g - b) / (s.powf(a) - lam).powf(g), tt, &cfg)
            .map_err(|e| e.to_string())?;
        let w = tt.powf(b - 1.0) * ml3(a, b, g, lam * tt.powf(a)).map_err(|e| e.to_string())?;
        let rel = (v - w).abs() / w.abs();
        t.check(rel <= 1e-6, rel, || format!("three-parameter t={tt}: {v} vs {w}"));
    }
    let k = MemoryKernel::subdiffusive(0.5).unwrap();
    for tt in [0.25f64, 1.0, 4.0] {
        for u in linspace(0.0, 6.0 * tt.sqrt(), 25) {
            let v = match subordination_density(&k, u, tt).map_err(|e| e.to_string())? {
                SubordinationDensity::Value(v) => v,
                other => return Err(format!("unexpected {other:?}")),
            };
            let w = (-u * u / (4.0 * tt)).exp() / (PI * tt).sqrt();
            let err = (v - w).abs();
            t.check(err <= 1e-5, err, || format!("h_1/2({u}, {tt}) = {v} vs {w}"));
        }
    }
    t.finish("max err")
}

fn c4_density_mass() -> Outcome {
    let mut t = Tally::new();
    for k in all_kernels() {
        for tt in [0.25, 1.0, 4.0] {
            let g = density_grid(&k, tt, 2001).map_err(|e| format!("{k} t={tt}: {e}"))?;
            let mass = if g.degenerate {
                1.0
            } else {
                g.u.windows(2).zip(g.h.windows(2)).map(|(u, h)| 0.5 * (u[1] - u[0]) * (h[0] + h[1])).sum()
            };
            let min_h = g.h.iter().copied().fold(f64::INFINITY, f64::min);
            let err = (mass - 1.0f64).abs();
            t.check(err <= 1e-3 && min_h >= -1e-9, err, || {
                format!("{k} t={tt}: mass {mass}, min h {min_h}")
            });
        }
    }
    t.finish("max |mass - 1| (grid trapezoid, no tail credit)")
}

fn c5_moments() -> Outcome {
    let m = MarketParams::new(1.0, 0.03, 0.02f64.sqrt(), 0.03).unwrap();
    let mut t = Tally::new();
    for k in all_kernels() {
        for tt in linspace(0.1, 5.0, 12) {
            for n in [1u32, 2] {
                let lap = generic_moment(&k, &m, n, tt).map_err(|e| format!("{k}: {e}"))?;
                let closed = if n == 1 { analytic_mean(&k, &m, tt) } else { analytic_msd(&k, &m, tt) }
                    .map_err(|e| format!("{k}: {e}"))?;
                let rel = (lap - closed).abs() / closed.abs();
                t.check(rel <= 1e-4, rel, || format!("{k} n={n} t={tt}: {lap} vs {closed}"));
            }
        }
    }
    // sGBM mean x0 E_alpha(mu t^alpha)
    let k = MemoryKernel::subdiffusive(0.8).unwrap();
    for tt in [0.1, 1.0, 5.0] {
        let v = analytic_mean(&k, &m, tt).map_err(|e| e.to_string())?;
        let w = m.x0 * ml1(0.8, m.mu * tt.powf(0.8)).map_err(|e| e.to_string())?;
        let rel = (v - w).abs() / w;
        t.check(rel <= 1e-12, rel, || format!("mean t={tt}: {v} vs {w}"));
    }
    t.finish("max rel err")
}

fn c6_ensembles() -> Outcome {
    let m = MarketParams::new(1.0, 0.03, 0.02f64.sqrt(), 0.03).unwrap();
    let kernels = [
        MemoryKernel::Standard,
        MemoryKernel::subdiffusive(0.8).unwrap(),
        MemoryKernel::mix_standard_sub(0.8, 0.5).unwrap(),
        MemoryKernel::mix_sub_sub(0.6, 0.8, 0.5).unwrap(),
    ];
    let n = 100_000;
    let mut t = Tally::new();
    let mut kurt = Vec::new();
    for (i, k) in kernels.iter().enumerate() {
        let ens = simulate_paths(k, &m, &[0.5, 1.0, 2.0], n, 1000 + i as u64).map_err(|e| format!("{k}: {e}"))?;
        for s in ensemble_stats(&ens).iter().filter(|s| s.t > 0.0) {
            let checks = [
                ("mean", s.mean, s.mean_se, analytic_mean(k, &m, s.t)),
                ("msd", s.msd, s.msd_se, analytic_msd(k, &m, s.t)),
                ("log-mean", s.log_mean, s.log_mean_se, log_mean(k, &m, s.t)),
                ("log-var", s.log_var, s.log_var_se, log_variance(k, &m, s.t)),
            ];
            for (name, est, se, exact) in checks {
                let exact = exact.map_err(|e| e.to_string())?;
                let z = (est - exact).abs() / se;
                t.check(z <= 3.0, z, || format!("{k} {name} t={}: {est} vs {exact} ({z:.2} s.e.)", s.t));
            }
        }
        let h = log_return_histogram(&ens, 0.0, 1.0, 80).map_err(|e| e.to_string())?;
        kurt.push((h.excess_kurtosis, h.kurtosis_se));
    }
    let (ks, kse) = kurt[0];
    t.check(ks.abs() <= 3.0 * kse, ks.abs() / kse, || format!("standard excess kurtosis {ks} (se {kse})"));
    for (k, (ex, se)) in kernels.iter().zip(&kurt).skip(1) {
        t.check(*ex > 3.0 * se, 0.0, || format!("{k} excess kurtosis {ex} not positive (se {se})"));
    }
    let summary = kurt.iter().map(|(k, _)| format!("{k:.3}")).collect::<Vec<_>>().join("/");
    t.finish("max |z|")
        .map(|s| format!("{s}; excess kurtosis std/sub/mix-gs/mix-ss = {summary}"))
}

fn c7_pricing_dual_route() -> Outcome {
    let m = MarketParams::new(100.0, 0.02, 0.2, 0.02).unwrap();
    let mut t = Tally::new();
    for (i, k) in all_kernels().iter().enumerate() {
        for (j, tt) in [1.0 / 12.0, 0.25, 1.0].into_iter().enumerate() {
            let strikes = [80.0, 100.0, 120.0];
            let quad = price_curve(k, &m, &strikes, tt).map_err(|e| format!("{k}: {e}"))?;
            for (kk, q) in strikes.iter().zip(quad) {
                let seed = 7000 + 10 * i as u64 + j as u64;
                let (mc, se) = gbs_call_mc(k, &m, *kk, tt, 100_000, seed).map_err(|e| e.to_string())?;
                // The standard clock is deterministic, so its s.e. is pure roundoff.
                let z = (mc - q).abs() / se.max(1e-12 * q.abs()).max(f64::MIN_POSITIVE);
                t.check(z <= 3.0, z, || format!("{k} K={kk} T={tt}: quad {q} mc {mc} ({z:.2} s.e.)"));
            }
        }
    }
    t.finish("max |z|")
}

fn c8_calibration() -> Outcome {
    let date = NaiveDate::from_ymd_opt(2024, 1, 2).unwrap();
    let (spot, rate) = (100.0, 0.02);
    let mut contracts = Vec::new();
    for tt in [0.25, 0.75] {
        for kk in linspace(80.0, 124.0, 12) {
            contracts.push((kk, tt, OptionKind::Call));
        }
    }
    let opts = CalibrationOptions::default();
    let alpha_grid = linspace(0.05, 1.0, 20);
    let mut parts = Vec::new();
    let mut t = Tally::new();
    for (alpha, sigma) in [(0.7, 0.25), (1.0, 0.2)] {
        let truth = MemoryKernel::from_alpha(alpha).unwrap();
        let cfg = PricingConfig::default();
        let chain = OptionChain::synthetic(date, spot, rate, &contracts, &truth, sigma, &cfg).map_err(|e| e.to_string())?;
        let cache = GridCache::new(opts.pricing.grid_nodes);
        let (pts, best) = mse_vs_alpha_with(&chain, &KernelFamily::Sub, &alpha_grid, &opts, &cache)
            .map_err(|e| e.to_string())?;
        let (a_hat, s_hat) = (pts[best].alpha, pts[best].sigma_hat);
        let (mse_truth, _) = mse_at(&chain, &truth, sigma, &opts, &cache).map_err(|e| e.to_string())?;
        t.check((a_hat - alpha).abs() <= 0.05 + 1e-12, (a_hat - alpha).abs(), || {
            format!("alpha*={alpha}: alpha_hat={a_hat}")
        });
        t.check((s_hat - sigma).abs() <= 1e-3, (s_hat - sigma).abs(), || {
            format!("alpha*={alpha}: sigma_hat={s_hat} vs {sigma}")
        });
        t.check(mse_truth <= 1e-10, mse_truth, || format!("alpha*={alpha}: MSE at truth {mse_truth}"));
        parts.push(format!("({alpha},{sigma}) -> ({a_hat:.2},{s_hat:.6})"));
    }
    t.finish("max deviation").map(|s| format!("{s}; {}", parts.join(", ")))
}

fn c9_no_arbitrage() -> Outcome {
    let m = MarketParams::new(100.0, 0.02, 0.2, 0.02).unwrap();
    let strikes = linspace(50.0, 200.0, 151);
    let mut t = Tally::new();
    for k in all_kernels() {
        for tt in [1.0 / 12.0, 1.0] {
            let c = price_curve(&k, &m, &strikes, tt).map_err(|e| format!("{k}: {e}"))?;
            let worst_inc = c.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
            let worst_conv = c.windows(3).map(|w| w[0] - 2.0 * w[1] + w[2]).fold(f64::INFINITY, f64::min);
            t.check(worst_inc <= 0.0, worst_inc.max(0.0), || format!("{k} T={tt}: increase {worst_inc}"));
            t.check(worst_conv >= -1e-8, (-worst_conv).max(0.0), || {
                format!("{k} T={tt}: second difference {worst_conv}")
            });
        }
    }
    t.finish("worst violation")
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn c10_determinism() -> Outcome {
    let m = MarketParams::new(1.0, 0.03, 0.02f64.sqrt(), 0.03).unwrap();
    let k = MemoryKernel::mix_standard_sub(0.8, 0.5).unwrap();
    let ks = MemoryKernel::subdiffusive(0.8).unwrap();
    let simulate = || {
        let a = simulate_paths(&k, &m, &[0.25, 0.5, 1.0], 4000, 7).unwrap();
        let b = simulate_paths(&ks, &m, &[0.25, 0.5, 1.0], 4000, 7).unwrap();
        let stats = (ensemble_stats(&a), ensemble_stats(&b));
        (serde_json::to_vec(&(a, b)).unwrap(), serde_json::to_vec(&stats).unwrap())
    };
    let date = NaiveDate::from_ymd_opt(2024, 1, 2).unwrap();
    let contracts: Vec<_> = [85.0, 95.0, 100.0, 105.0, 115.0]
        .iter()
        .map(|kk| (*kk, 0.5, OptionKind::Call))
        .collect();
    let chain = OptionChain::synthetic(date, 100.0, 0.02, &contracts, &ks, 0.25, &PricingConfig::default()).unwrap();
    let calibrate = || {
        let r = ggbm::calibrate::calibrate(
            &chain,
            &KernelFamily::Sub,
            &[0.6, 0.7, 0.8, 0.9, 1.0],
            None,
            &CalibrationOptions::default(),
        )
        .unwrap();
        serde_json::to_vec(&r).unwrap()
    };
    let sim1 = in_pool(1, simulate);
    let sim4 = in_pool(4, simulate);
    let cal1 = in_pool(1, calibrate);
    let cal4 = in_pool(4, calibrate);
    let mut t = Tally::new();
    t.check(sim1 == sim4, 0.0, || "simulation output differs between 1 and 4 threads".into());
    t.check(cal1 == cal4, 0.0, || "calibration output differs between 1 and 4 threads".into());
    t.finish("").map(|_| {
        format!(
            "simulation {} + {} bytes and calibration {} bytes identical across 1 and 4 threads",
            sim1.0.len(),
            sim1.1.len(),
            cal1.len()
        )
    })
}

fn main() {
    let criteria: [(u32, &str, Duration, fn() -> Outcome); 10] = [
        (1, "GBM reduction", Duration::from_secs(1), c1_gbm_reduction),
        (2, "special-function fidelity", Duration::from_secs(1), c2_special_functions),
        (3, "inversion battery", Duration::from_secs(10), c3_inversion),
        (4, "density mass", Duration::from_secs(30), c4_density_mass),
        (5, "moment dual-route", Duration::from_secs(30), c5_moments),
        (6, "ensemble statistics", Duration::from_secs(300), c6_ensembles),
        (7, "pricing dual-route", Duration::from_secs(300), c7_pricing_dual_route),
        (8, "calibration round-trip", Duration::from_secs(600), c8_calibration),
        (9, "no-arbitrage shape", Duration::from_secs(30), c9_no_arbitrage),
        (10, "determinism", Duration::from_secs(600), c10_determinism),
    ];
    let only: Option<u32> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for (id, name, budget, f) in criteria {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        let over = took > budget;
        let (tag, detail) = match (&outcome, over) {
            (Ok(d), false) => ("PASS", d.clone()),
            (Ok(d), true) => ("FAIL", format!("{d}; over budget")),
            (Err(e), _) => ("FAIL", e.clone()),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {tag} {name}: {detail} [{:.2}s / {}s budget]",
            took.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
