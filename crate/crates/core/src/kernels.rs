//! Memory kernels `eta(t)` and their Laplace-domain companions.
//!
//! A kernel fixes the subordinator: its Levy exponent is `Psi(s) = 1 / eta_hat(s)`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lapinv;
use crate::specfun::{gamma, lower_incomplete_gamma};

const MODULE: &str = "kernels";
const WEIGHT_TOL: f64 = 1e-12;

/// The five supported kernel families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum MemoryKernel {
    /// `eta = 1`: plain geometric Brownian motion.
    Standard,
    /// `eta = t^(alpha-1) / Gamma(alpha)`.
    Subdiffusive { alpha: f64 },
    /// Power law with exponential truncation after the crossover time `tau`.
    Tempered { alpha: f64, tau: f64 },
    /// `w1` power-law part plus `w2` standard part.
    MixStandardSub { alpha: f64, w1: f64, w2: f64 },
    /// Two power laws with `alpha1 < alpha2`, weighted by `w1` and `w2`.
    MixSubSub { alpha1: f64, alpha2: f64, w1: f64, w2: f64 },
}

fn unit_open(name: &str, a: f64) -> Result<()> {
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::domain(MODULE, format!("{name} = {a} must lie in (0, 1)")));
    }
    Ok(())
}

fn weights(w1: f64, w2: f64) -> Result<()> {
    for (n, w) in [("w1", w1), ("w2", w2)] {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::domain(MODULE, format!("{n} = {w} must lie in [0, 1]")));
        }
    }
    if (w1 + w2 - 1.0).abs() > WEIGHT_TOL {
        return Err(Error::domain(MODULE, format!("weights must sum to 1, got {}", w1 + w2)));
    }
    Ok(())
}

impl MemoryKernel {
    pub fn subdiffusive(alpha: f64) -> Result<Self> {
        let k = MemoryKernel::Subdiffusive { alpha };
        k.check()?;
        Ok(k)
    }

    pub fn tempered(alpha: f64, tau: f64) -> Result<Self> {
        let k = MemoryKernel::Tempered { alpha, tau };
        k.check()?;
        Ok(k)
    }

    pub fn mix_standard_sub(alpha: f64, w1: f64) -> Result<Self> {
        let k = MemoryKernel::MixStandardSub { alpha, w1, w2: 1.0 - w1 };
        k.check()?;
        Ok(k)
    }

    pub fn mix_sub_sub(alpha1: f64, alpha2: f64, w1: f64) -> Result<Self> {
        let k = MemoryKernel::MixSubSub {
            alpha1,
            alpha2,
            w1,
            w2: 1.0 - w1,
        };
        k.check()?;
        Ok(k)
    }

    /// Subdiffusive kernel for `alpha < 1`, the standard kernel at `alpha = 1`.
    pub fn from_alpha(alpha: f64) -> Result<Self> {
        if alpha == 1.0 {
            Ok(MemoryKernel::Standard)
        } else {
            Self::subdiffusive(alpha)
        }
    }

    /// Check the parameter invariants of the family.
    pub fn check(&self) -> Result<()> {
        match *self {
            MemoryKernel::Standard => Ok(()),
            MemoryKernel::Subdiffusive { alpha } => unit_open("alpha", alpha),
            MemoryKernel::Tempered { alpha, tau } => {
                unit_open("alpha", alpha)?;
                if !(tau > 0.0 && tau.is_finite()) {
                    return Err(Error::domain(MODULE, format!("tau = {tau} must be positive")));
                }
                Ok(())
            }
            MemoryKernel::MixStandardSub { alpha, w1, w2 } => {
                unit_open("alpha", alpha)?;
                weights(w1, w2)
            }
            MemoryKernel::MixSubSub { alpha1, alpha2, w1, w2 } => {
                unit_open("alpha1", alpha1)?;
                unit_open("alpha2", alpha2)?;
                if alpha1 >= alpha2 {
                    return Err(Error::domain(
                        MODULE,
                        format!("ordering violated: need alpha1 < alpha2, got {alpha1} >= {alpha2}"),
                    ));
                }
                weights(w1, w2)
            }
        }
    }

    /// Whether `eta` diverges at the origin.
    pub fn is_singular(&self) -> bool {
        match *self {
            MemoryKernel::Standard => false,
            MemoryKernel::MixStandardSub { w1, .. } => w1 > 0.0,
            _ => true,
        }
    }

    /// Smallest power-law exponent present; 1 for the standard kernel.
    pub fn min_exponent(&self) -> f64 {
        match *self {
            MemoryKernel::Standard => 1.0,
            MemoryKernel::Subdiffusive { alpha } | MemoryKernel::Tempered { alpha, .. } => alpha,
            MemoryKernel::MixStandardSub { alpha, w1, .. } => {
                if w1 > 0.0 {
                    alpha
                } else {
                    1.0
                }
            }
            MemoryKernel::MixSubSub { alpha1, w1, alpha2, .. } => {
                if w1 > 0.0 {
                    alpha1
                } else {
                    alpha2
                }
            }
        }
    }

    /// The same kernel with zero-weight mixture components dropped, so a mix
    /// with `w1 = 0` or `w2 = 0` is handled by its pure family.
    pub fn reduced(&self) -> MemoryKernel {
        match *self {
            MemoryKernel::MixStandardSub { w1, .. } if w1 == 0.0 => MemoryKernel::Standard,
            MemoryKernel::MixStandardSub { alpha, w2, .. } if w2 == 0.0 => MemoryKernel::Subdiffusive { alpha },
            MemoryKernel::MixSubSub { alpha2, w1, .. } if w1 == 0.0 => MemoryKernel::Subdiffusive { alpha: alpha2 },
            MemoryKernel::MixSubSub { alpha1, w2, .. } if w2 == 0.0 => MemoryKernel::Subdiffusive { alpha: alpha1 },
            k => k,
        }
    }

    /// Short family label used in tables.
    pub fn family(&self) -> &'static str {
        match self {
            MemoryKernel::Standard => "standard",
            MemoryKernel::Subdiffusive { .. } => "sub",
            MemoryKernel::Tempered { .. } => "tempered",
            MemoryKernel::MixStandardSub { .. } => "mix-gs",
            MemoryKernel::MixSubSub { .. } => "mix-ss",
        }
    }
}

fn power_law(alpha: f64, t: f64) -> f64 {
    t.powf(alpha - 1.0) / gamma(alpha)
}

/// `eta(t)`.
pub fn eta_time(k: &MemoryKernel, t: f64) -> Result<f64> {
    if !(t > 0.0) && k.is_singular() {
        return Err(Error::domain(MODULE, format!("eta(t) needs t > 0 for a singular kernel, got {t}")));
    }
    if t < 0.0 {
        return Err(Error::domain(MODULE, format!("eta(t) needs t >= 0, got {t}")));
    }
    Ok(match *k {
        MemoryKernel::Standard => 1.0,
        MemoryKernel::Subdiffusive { alpha } => power_law(alpha, t),
        MemoryKernel::Tempered { alpha, tau } => power_law(alpha, t) * (-t / tau).exp(),
        MemoryKernel::MixStandardSub { alpha, w1, w2 } => {
            let p = if w1 > 0.0 { w1 * power_law(alpha, t) } else { 0.0 };
            p + w2
        }
        MemoryKernel::MixSubSub { alpha1, alpha2, w1, w2 } => {
            w1 * power_law(alpha1, t) + w2 * power_law(alpha2, t)
        }
    })
}

/// `I(t) = int_0^t eta`.
pub fn eta_integral(k: &MemoryKernel, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain(MODULE, format!("I(t) needs t >= 0, got {t}")));
    }
    let pl = |a: f64| t.powf(a) / gamma(1.0 + a);
    Ok(match *k {
        MemoryKernel::Standard => t,
        MemoryKernel::Subdiffusive { alpha } => pl(alpha),
        MemoryKernel::Tempered { alpha, tau } => {
            tau.powf(alpha) * lower_incomplete_gamma(alpha, t / tau)? / gamma(alpha)
        }
        MemoryKernel::MixStandardSub { alpha, w1, w2 } => w1 * pl(alpha) + w2 * t,
        MemoryKernel::MixSubSub { alpha1, alpha2, w1, w2 } => w1 * pl(alpha1) + w2 * pl(alpha2),
    })
}

/// `eta_hat(s)` anywhere off the branch cut; used on inversion contours.
pub(crate) fn eta_laplace_unchecked(k: &MemoryKernel, s: Complex64) -> Complex64 {
    match *k {
        MemoryKernel::Standard => s.inv(),
        MemoryKernel::Subdiffusive { alpha } => s.powf(-alpha),
        MemoryKernel::Tempered { alpha, tau } => (s + 1.0 / tau).powf(-alpha),
        MemoryKernel::MixStandardSub { alpha, w1, w2 } => s.powf(-alpha) * w1 + s.inv() * w2,
        MemoryKernel::MixSubSub { alpha1, alpha2, w1, w2 } => {
            s.powf(-alpha1) * w1 + s.powf(-alpha2) * w2
        }
    }
}

/// Laplace transform `eta_hat(s)` for `Re(s) > 0`.
pub fn eta_laplace(k: &MemoryKernel, s: Complex64) -> Result<Complex64> {
    if !(s.re > 0.0) {
        return Err(Error::domain(MODULE, format!("eta_hat(s) needs Re(s) > 0, got {s}")));
    }
    Ok(eta_laplace_unchecked(k, s))
}

/// Levy exponent `Psi(s) = 1 / eta_hat(s)`.
pub fn levy_exponent(k: &MemoryKernel, s: Complex64) -> Result<Complex64> {
    let e = eta_laplace(k, s)?;
    if e.norm() == 0.0 {
        return Err(Error::Admissibility {
            module: MODULE,
            msg: format!("eta_hat vanishes at s = {s}"),
        });
    }
    Ok(e.inv())
}

/// `Psi'(s)` for real `s > 0`.
pub(crate) fn levy_derivative(k: &MemoryKernel, s: f64) -> f64 {
    match *k {
        MemoryKernel::Standard => 1.0,
        MemoryKernel::Subdiffusive { alpha } => alpha * s.powf(alpha - 1.0),
        MemoryKernel::Tempered { alpha, tau } => alpha * (s + 1.0 / tau).powf(alpha - 1.0),
        MemoryKernel::MixStandardSub { alpha, w1, w2 } => {
            let eta = w1 * s.powf(-alpha) + w2 / s;
            let d_eta = -w1 * alpha * s.powf(-alpha - 1.0) - w2 / (s * s);
            -d_eta / (eta * eta)
        }
        MemoryKernel::MixSubSub { alpha1, alpha2, w1, w2 } => {
            let eta = w1 * s.powf(-alpha1) + w2 * s.powf(-alpha2);
            let d_eta = -w1 * alpha1 * s.powf(-alpha1 - 1.0) - w2 * alpha2 * s.powf(-alpha2 - 1.0);
            -d_eta / (eta * eta)
        }
    }
}

/// Outcome of [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub issues: Vec<String>,
    /// Smallest subordination density seen on the probe grid.
    pub min_density: Option<f64>,
}

/// Parameter checks plus a numerical non-negativity probe of `h(u, t)`.
pub fn validate(k: &MemoryKernel) -> ValidationReport {
    let mut issues = Vec::new();
    if let Err(e) = k.check() {
        issues.push(e.to_string());
        return ValidationReport {
            passed: false,
            issues,
            min_density: None,
        };
    }
    // eta_hat(s) on real s must be positive and decreasing.
    let mut prev = f64::INFINITY;
    for i in 0..=40 {
        let s = 10f64.powf(-4.0 + 0.2 * i as f64);
        let v = eta_laplace_unchecked(k, Complex64::new(s, 0.0)).re;
        if !(v > 0.0) || v >= prev {
            issues.push(format!("eta_hat not positive and decreasing at s = {s:e}"));
            break;
        }
        prev = v;
    }
    let mut min_density = None;
    if *k != MemoryKernel::Standard {
        let cfg = lapinv::InversionConfig::default();
        let mut lo = f64::INFINITY;
        for t in [0.25, 1.0, 4.0] {
            let scale = eta_integral(k, t).unwrap_or(t).max(1e-3);
            for j in 0..=24 {
                let u = 4.0 * scale * j as f64 / 24.0;
                match lapinv::subordination_density_raw(k, u, t, &cfg) {
                    Ok(h) => lo = lo.min(h),
                    Err(e) => {
                        issues.push(format!("density probe failed at u={u}, t={t}: {e}"));
                    }
                }
            }
        }
        if lo < -1e-6 {
            issues.push(format!("subordination density negative on probe grid: min {lo:e}"));
        }
        min_density = Some(lo);
    }
    ValidationReport {
        passed: issues.is_empty(),
        issues,
        min_density,
    }
}

impl fmt::Display for MemoryKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            MemoryKernel::Standard => write!(f, "standard"),
            MemoryKernel::Subdiffusive { alpha } => write!(f, "sub:alpha={alpha}"),
            MemoryKernel::Tempered { alpha, tau } => write!(f, "tempered:alpha={alpha},tau={tau}"),
            MemoryKernel::MixStandardSub { alpha, w1, .. } => write!(f, "mix-gs:alpha={alpha},w1={w1}"),
            MemoryKernel::MixSubSub { alpha1, alpha2, w1, .. } => {
                write!(f, "mix-ss:alpha1={alpha1},alpha2={alpha2},w1={w1}")
            }
        }
    }
}

impl FromStr for MemoryKernel {
    type Err = Error;

    /// Parses `standard`, `sub:alpha=..`, `tempered:alpha=..,tau=..`,
    /// `mix-gs:alpha=..,w1=..` and `mix-ss:alpha1=..,alpha2=..,w1=..`.
    fn from_str(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let (family, rest) = match spec.split_once(':') {
            Some((f, r)) => (f.trim(), r.trim()),
            None => (spec, ""),
        };
        let mut params: Vec<(String, f64)> = Vec::new();
        if !rest.is_empty() {
            for kv in rest.split(',') {
                let (key, val) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::Parse(format!("kernel parameter `{kv}` is not key=value")))?;
                let v: f64 = val
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("kernel parameter `{key}` has non-numeric value `{val}`")))?;
                params.push((key.trim().to_string(), v));
            }
        }
        let allowed: &[&str] = match family {
            "standard" => &[],
            "sub" => &["alpha"],
            "tempered" => &["alpha", "tau"],
            "mix-gs" => &["alpha", "w1"],
            "mix-ss" => &["alpha1", "alpha2", "w1"],
            other => return Err(Error::Parse(format!("unknown kernel family `{other}`"))),
        };
        for (key, _) in &params {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::Parse(format!("kernel `{family}` has no parameter `{key}`")));
            }
        }
        let get = |name: &str| -> Result<f64> {
            params
                .iter()
                .find(|(k, _)| k == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::Parse(format!("kernel `{family}` needs parameter `{name}`")))
        };
        match family {
            "standard" => Ok(MemoryKernel::Standard),
            "sub" => MemoryKernel::subdiffusive(get("alpha")?),
            "tempered" => MemoryKernel::tempered(get("alpha")?, get("tau")?),
            "mix-gs" => MemoryKernel::mix_standard_sub(get("alpha")?, get("w1")?),
            _ => MemoryKernel::mix_sub_sub(get("alpha1")?, get("alpha2")?, get("w1")?),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn eta_time_examples() {
        assert_eq!(eta_time(&MemoryKernel::Standard, 3.7).unwrap(), 1.0);
        let sub = MemoryKernel::subdiffusive(0.5).unwrap();
        assert!((eta_time(&sub, 1.0).unwrap() - 1.0 / PI.sqrt()).abs() < 1e-15);
        assert!(eta_time(&sub, 0.0).is_err());
        assert!(eta_time(&sub, -1.0).is_err());
    }

    #[test]
    fn eta_integral_examples() {
        assert_eq!(eta_integral(&MemoryKernel::Standard, 2.0).unwrap(), 2.0);
        let sub = MemoryKernel::subdiffusive(0.8).unwrap();
        assert!((eta_integral(&sub, 1.0).unwrap() - 1.0 / gamma(1.8)).abs() < 1e-15);
    }

    #[test]
    fn laplace_and_levy_examples() {
        assert!((eta_laplace(&MemoryKernel::Standard, c(2.0, 0.0)).unwrap() - c(0.5, 0.0)).norm() < 1e-15);
        let sub = MemoryKernel::subdiffusive(0.5).unwrap();
        assert!((eta_laplace(&sub, c(4.0, 0.0)).unwrap() - c(0.5, 0.0)).norm() < 1e-15);
        assert!((levy_exponent(&MemoryKernel::Standard, c(3.0, 0.0)).unwrap() - c(3.0, 0.0)).norm() < 1e-15);
        assert!((levy_exponent(&sub, c(4.0, 0.0)).unwrap() - c(2.0, 0.0)).norm() < 1e-15);
        let mix = MemoryKernel::mix_standard_sub(0.8, 0.5).unwrap();
        assert!((levy_exponent(&mix, c(1.0, 0.0)).unwrap() - c(1.0, 0.0)).norm() < 1e-15);
        assert!(eta_laplace(&sub, c(0.0, 1.0)).is_err());
        assert!(eta_laplace(&sub, c(-1.0, 0.0)).is_err());
    }

    #[test]
    fn constructors_enforce_ranges() {
        assert!(MemoryKernel::subdiffusive(1.0).is_err());
        assert!(MemoryKernel::subdiffusive(0.0).is_err());
        assert!(MemoryKernel::tempered(0.5, 0.0).is_err());
        assert!(MemoryKernel::mix_standard_sub(0.5, 1.2).is_err());
        assert!(MemoryKernel::mix_sub_sub(0.8, 0.6, 0.5).is_err());
        let bad = MemoryKernel::MixStandardSub { alpha: 0.5, w1: 0.5, w2: 0.6 };
        assert!(bad.check().is_err());
    }

    #[test]
    fn parse_and_display_round_trip() {
        for s in [
            "standard",
            "sub:alpha=0.8",
            "tempered:alpha=0.8,tau=2",
            "mix-gs:alpha=0.8,w1=0.5",
            "mix-ss:alpha1=0.6,alpha2=0.8,w1=0.5",
        ] {
            let k: MemoryKernel = s.parse().unwrap();
            assert_eq!(k.to_string(), s);
            assert_eq!(k.to_string().parse::<MemoryKernel>().unwrap(), k);
        }
        let k: MemoryKernel = "mix-ss:alpha1=0.6,alpha2=0.8,w1=0.25".parse().unwrap();
        assert_eq!(k, MemoryKernel::MixSubSub { alpha1: 0.6, alpha2: 0.8, w1: 0.25, w2: 0.75 });
    }

    #[test]
    fn parse_errors() {
        assert!("sub:alpha=1.4".parse::<MemoryKernel>().is_err());
        assert!("sub".parse::<MemoryKernel>().is_err());
        assert!("sub:beta=0.3".parse::<MemoryKernel>().is_err());
        assert!("sub:alpha=x".parse::<MemoryKernel>().is_err());
        assert!("levy:alpha=0.3".parse::<MemoryKernel>().is_err());
    }

    #[test]
    fn validate_examples() {
        let r = validate(&MemoryKernel::subdiffusive(0.8).unwrap());
        assert!(r.passed, "{:?}", r.issues);
        let bad = MemoryKernel::MixSubSub { alpha1: 0.8, alpha2: 0.6, w1: 0.5, w2: 0.5 };
        let r = validate(&bad);
        assert!(!r.passed);
        assert!(r.issues[0].contains("ordering"));
        let r = validate(&MemoryKernel::tempered(0.5, 1.0).unwrap());
        assert!(r.passed, "{:?}", r.issues);
        assert!(r.min_density.unwrap() >= -1e-6);
    }
}
