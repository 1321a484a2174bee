use std::ffi::{CStr, CString};
use std::ptr;

use ggbm_ffi::*;

fn last_error() -> String {
    let p = ggbm_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn kernel(spec: &str) -> *mut GgbmKernel {
    let s = CString::new(spec).unwrap();
    let mut k = ptr::null_mut();
    assert_eq!(unsafe { ggbm_kernel_parse(s.as_ptr(), &mut k) }, GgbmStatus::Ok);
    assert!(!k.is_null());
    k
}

const MARKET: GgbmMarket = GgbmMarket {
    x0: 100.0,
    mu: 0.02,
    sigma: 0.2,
    r: 0.02,
};

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(ggbm_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn kernel_errors_carry_codes() {
    let s = CString::new("sub:alpha=1.4").unwrap();
    let mut k = ptr::null_mut();
    let st = unsafe { ggbm_kernel_parse(s.as_ptr(), &mut k) };
    assert_eq!(st, GgbmStatus::Domain);
    assert!(k.is_null());
    assert!(last_error().starts_with("kernels.domain"), "{}", last_error());

    let s = CString::new("wobbly").unwrap();
    assert_eq!(unsafe { ggbm_kernel_parse(s.as_ptr(), &mut k) }, GgbmStatus::Parse);
    assert_eq!(unsafe { ggbm_kernel_parse(ptr::null(), &mut k) }, GgbmStatus::NullPointer);
    assert_eq!(unsafe { ggbm_kernel_parse(s.as_ptr(), ptr::null_mut()) }, GgbmStatus::NullPointer);
}

#[test]
fn success_clears_last_error() {
    let mut v = 0.0;
    assert_eq!(unsafe { ggbm_ml1(0.5, 0.0, ptr::null_mut()) }, GgbmStatus::NullPointer);
    assert!(!ggbm_last_error().is_null());
    assert_eq!(unsafe { ggbm_ml1(1.0, 1.0, &mut v) }, GgbmStatus::Ok);
    assert!(ggbm_last_error().is_null());
    assert!((v - 1f64.exp()).abs() < 1e-12);
}

#[test]
fn standard_kernel_prices_like_black_scholes() {
    let k = kernel("standard");
    let (mut g, mut bs) = (0.0, 0.0);
    unsafe {
        assert_eq!(
            ggbm_gbs_call(k, MARKET, 105.0, 0.5, GgbmMode::RiskNeutral, GgbmDiscount::Operational, &mut g),
            GgbmStatus::Ok
        );
        assert_eq!(ggbm_bs_call(MARKET, 105.0, 0.5, GgbmMode::RiskNeutral, &mut bs), GgbmStatus::Ok);
        ggbm_kernel_free(k);
    }
    assert!((g - bs).abs() <= 1e-12 * bs);
}

#[test]
fn curve_matches_single_calls_and_parity_holds() {
    let k = kernel("sub:alpha=0.8");
    let strikes = [80.0, 100.0, 120.0];
    let mut curve = [0.0; 3];
    unsafe {
        assert_eq!(ggbm_price_curve(k, MARKET, strikes.as_ptr(), 3, 0.25, curve.as_mut_ptr()), GgbmStatus::Ok);
        for (kk, c) in strikes.iter().zip(curve) {
            let (mut one, mut put) = (0.0, 0.0);
            ggbm_gbs_call(k, MARKET, *kk, 0.25, GgbmMode::RiskNeutral, GgbmDiscount::Operational, &mut one);
            ggbm_gbs_put(k, MARKET, *kk, 0.25, GgbmMode::RiskNeutral, GgbmDiscount::Operational, &mut put);
            assert!((one - c).abs() < 1e-12);
            assert!(put >= 0.0 && put < *kk);
        }
        let (mut p, mut se) = (0.0, 0.0);
        assert_eq!(ggbm_gbs_call_mc(k, MARKET, 100.0, 0.25, 20_000, 3, &mut p, &mut se), GgbmStatus::Ok);
        assert!((p - curve[1]).abs() < 4.0 * se, "{p} {se} {}", curve[1]);
        ggbm_kernel_free(k);
    }
}

#[test]
fn density_grid_round_trip() {
    let k = kernel("sub:alpha=0.5");
    let mut g = ptr::null_mut();
    unsafe {
        assert_eq!(ggbm_density_grid(k, 1.0, 801, &mut g), GgbmStatus::Ok);
        let n = ggbm_density_grid_len(g);
        assert_eq!(n, 801);
        let (mut u, mut h) = (vec![0.0; n], vec![0.0; n]);
        assert_eq!(ggbm_density_grid_copy(g, u.as_mut_ptr(), h.as_mut_ptr(), n - 1), GgbmStatus::Domain);
        assert_eq!(ggbm_density_grid_copy(g, u.as_mut_ptr(), h.as_mut_ptr(), n), GgbmStatus::Ok);
        for (x, y) in u.iter().zip(&h).skip(1).step_by(50) {
            let exact = (-x * x / 4.0).exp() / std::f64::consts::PI.sqrt();
            assert!((y - exact).abs() < 1e-6, "{x} {y} {exact}");
        }
        ggbm_density_grid_free(g);
        ggbm_kernel_free(k);
        assert_eq!(ggbm_density_grid_len(ptr::null()), 0);
    }
}

#[test]
fn simulation_is_seeded() {
    let k = kernel("sub:alpha=0.8");
    let times = [0.5, 1.0];
    let run = || unsafe {
        let mut e = ptr::null_mut();
        assert_eq!(ggbm_simulate(k, MARKET, times.as_ptr(), 2, 64, 11, &mut e), GgbmStatus::Ok);
        let (mut np, mut nt) = (0, 0);
        ggbm_ensemble_shape(e, &mut np, &mut nt);
        assert_eq!((np, nt), (64, 3));
        let mut ts = vec![0.0; nt];
        let mut vals = vec![0.0; np * nt];
        assert_eq!(ggbm_ensemble_copy(e, ts.as_mut_ptr(), vals.as_mut_ptr()), GgbmStatus::Ok);
        ggbm_ensemble_free(e);
        assert_eq!(ts, vec![0.0, 0.5, 1.0]);
        vals
    };
    let a = run();
    assert_eq!(a, run());
    assert!(a.iter().step_by(3).all(|x| *x == 100.0));
    unsafe { ggbm_kernel_free(k) };
}

#[test]
fn moments_of_standard_kernel() {
    let k = kernel("standard");
    let mut m = GgbmMoments::default();
    unsafe {
        assert_eq!(ggbm_moments(k, MARKET, 2.0, &mut m), GgbmStatus::Ok);
        ggbm_kernel_free(k);
    }
    assert!((m.mean - 100.0 * (0.04f64).exp()).abs() < 1e-9);
    assert!((m.log_variance - 0.08).abs() < 1e-12);
}

#[test]
fn chain_and_implied_sigma() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain.csv");
    let k = kernel("standard");
    let mut rows = String::from("quote_date,spot,rate,strike,maturity_years,kind,market_price\n");
    for strike in [90.0, 100.0, 110.0] {
        let mut p = 0.0;
        unsafe { ggbm_bs_call(GgbmMarket { sigma: 0.3, ..MARKET }, strike, 0.5, GgbmMode::RiskNeutral, &mut p) };
        rows.push_str(&format!("2024-01-02,100,0.02,{strike},0.5,C,{p}\n"));
    }
    std::fs::write(&path, rows).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut chain = ptr::null_mut();
    let mut s = 0.0;
    unsafe {
        assert_eq!(ggbm_chain_read_csv(cpath.as_ptr(), &mut chain), GgbmStatus::Ok);
        assert_eq!(ggbm_chain_len(chain), 3);
        assert_eq!(ggbm_implied_sigma(chain, k, 1e-4, 3.0, &mut s), GgbmStatus::Ok);
        assert!((s - 0.3).abs() < 1e-4, "{s}");
        assert_eq!(ggbm_implied_sigma(chain, k, 0.2, 0.2, &mut s), GgbmStatus::Calibration);
        ggbm_chain_free(chain);
        ggbm_kernel_free(k);
    }
    let missing = CString::new(dir.path().join("none.csv").to_str().unwrap()).unwrap();
    let mut c2 = ptr::null_mut();
    assert_eq!(unsafe { ggbm_chain_read_csv(missing.as_ptr(), &mut c2) }, GgbmStatus::Io);
}

#[test]
fn errors_are_thread_local() {
    let mut v = 0.0;
    assert_eq!(unsafe { ggbm_ml1(-1.0, 0.0, &mut v) }, GgbmStatus::Domain);
    std::thread::spawn(|| assert!(ggbm_last_error().is_null())).join().unwrap();
    assert!(!ggbm_last_error().is_null());
}
