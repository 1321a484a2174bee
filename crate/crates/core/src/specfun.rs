//! Special functions behind the closed-form moment expressions.
//!
//! The Mittag-Leffler family is evaluated by its power series wherever the
//! series is numerically safe. Large positive arguments switch to the
//! exponential asymptotic form (with its algebraic correction terms), and
//! large negative arguments of the one-parameter function use the
//! completely-monotone Laplace integral representation.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quad;

const MODULE: &str = "specfun";

/// Truncation controls for the series evaluators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyBudget {
    /// Target error: absolute for results of magnitude below one, relative above.
    pub abs_tol: f64,
    pub max_terms: usize,
    /// Largest `|z|` for which a negative Mittag-Leffler argument is summed directly.
    pub z_switch: f64,
}

impl Default for AccuracyBudget {
    fn default() -> Self {
        AccuracyBudget {
            abs_tol: 1e-16,
            max_terms: 4000,
            z_switch: 5.0,
        }
    }
}

impl AccuracyBudget {
    pub fn new(abs_tol: f64, max_terms: usize) -> Result<Self> {
        if !(abs_tol > 0.0) {
            return Err(Error::domain(MODULE, "abs_tol must be positive"));
        }
        if max_terms == 0 {
            return Err(Error::domain(MODULE, "max_terms must be at least 1"));
        }
        Ok(AccuracyBudget {
            abs_tol,
            max_terms,
            ..Default::default()
        })
    }
}

// ---------------------------------------------------------------------------
// Gamma function (Lanczos, g = 7, n = 9)

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `sin(pi x)` with exact zeros at the integers.
fn sin_pi(x: f64) -> f64 {
    let r = x - 2.0 * (0.5 * x).floor();
    if r == 0.0 || r == 1.0 {
        return 0.0;
    }
    (PI * r).sin()
}

fn is_nonpositive_integer(x: f64) -> bool {
    x <= 0.0 && x == x.floor()
}

fn lanczos_sum(xm1: f64) -> f64 {
    let mut a = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (xm1 + i as f64);
    }
    a
}

/// Gamma function. Poles return NaN.
pub fn gamma(x: f64) -> f64 {
    if is_nonpositive_integer(x) {
        return f64::NAN;
    }
    if x < 0.5 {
        return PI / (sin_pi(x) * gamma(1.0 - x));
    }
    if x == x.floor() && x <= 30.0 {
        return (2..x as u32).fold(1.0, |acc, k| acc * k as f64);
    }
    if x > 171.7 {
        return f64::INFINITY;
    }
    let xm1 = x - 1.0;
    let t = xm1 + LANCZOS_G + 0.5;
    let a = lanczos_sum(xm1);
    if x > 140.0 {
        // t^(x-1/2) overflows before the damping factor is applied.
        let half = t.powf(0.5 * (xm1 + 0.5));
        return (2.0 * PI).sqrt() * half * (half * (-t).exp()) * a;
    }
    (2.0 * PI).sqrt() * t.powf(xm1 + 0.5) * (-t).exp() * a
}

/// `ln |Gamma(x)|`.
pub fn ln_gamma(x: f64) -> f64 {
    if is_nonpositive_integer(x) {
        return f64::INFINITY;
    }
    if x < 0.5 {
        return PI.ln() - sin_pi(x).abs().ln() - ln_gamma(1.0 - x);
    }
    let xm1 = x - 1.0;
    let t = xm1 + LANCZOS_G + 0.5;
    LN_SQRT_2PI + (xm1 + 0.5) * t.ln() - t + lanczos_sum(xm1).ln()
}

/// Reciprocal gamma, which is entire: zero at the poles of Gamma.
pub fn rgamma(x: f64) -> f64 {
    if is_nonpositive_integer(x) {
        return 0.0;
    }
    if x > 170.0 {
        return (-ln_gamma(x)).exp();
    }
    1.0 / gamma(x)
}

// ---------------------------------------------------------------------------
// Mittag-Leffler family

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::domain(MODULE, format!("alpha = {alpha} outside (0, 2]")));
    }
    Ok(())
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::domain(MODULE, format!("{name} must be finite")));
    }
    Ok(())
}

/// `c * rgamma(x)` without intermediate overflow; `ln_c` is `ln |c|`.
fn scaled_rgamma(c: f64, ln_c: f64, sign_c: f64, x: f64) -> f64 {
    if c.is_finite() && c.abs() < 1e250 && x <= 170.0 {
        return c * rgamma(x);
    }
    if is_nonpositive_integer(x) {
        return 0.0;
    }
    sign_c * gamma_sign(x) * (ln_c - ln_gamma(x)).exp()
}

fn gamma_sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if (x.floor() as i64).rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Sum a series whose `k`-th term is produced by `term(k)`; stops once two
/// consecutive terms are negligible and the magnitudes are decreasing.
fn sum_series<F: FnMut(usize) -> f64>(mut term: F, budget: &AccuracyBudget, what: &str) -> Result<(f64, f64)> {
    let mut sum = 0.0;
    let mut comp = 0.0; // Kahan compensation
    let mut prev = f64::INFINITY;
    let mut quiet = 0;
    let mut max_term: f64 = 0.0;
    for k in 0..budget.max_terms {
        let t = term(k);
        if !t.is_finite() {
            return Err(Error::domain(MODULE, format!("{what}: term {k} overflowed")));
        }
        let y = t - comp;
        let s = sum + y;
        comp = (s - sum) - y;
        sum = s;
        max_term = max_term.max(t.abs());
        let small = t.abs() <= budget.abs_tol * sum.abs().max(1.0);
        if k > 0 && small && t.abs() <= prev {
            quiet += 1;
            if quiet >= 2 {
                return Ok((sum, max_term));
            }
        } else {
            quiet = 0;
        }
        prev = t.abs();
    }
    Err(Error::Truncation {
        module: MODULE,
        max_terms: budget.max_terms,
        msg: what.to_string(),
    })
}

/// Power series for the two-parameter function.
pub fn ml2_series(alpha: f64, beta: f64, z: f64, budget: &AccuracyBudget) -> Result<f64> {
    if z == 0.0 {
        return Ok(rgamma(beta));
    }
    let ln_abs_z = z.abs().ln();
    let mut zk = 1.0;
    let (sum, max_term) = sum_series(
        |k| {
            let c = zk;
            zk *= z;
            let sign = if z < 0.0 && k % 2 == 1 { -1.0 } else { 1.0 };
            scaled_rgamma(c, k as f64 * ln_abs_z, sign, alpha * k as f64 + beta)
        },
        budget,
        "Mittag-Leffler series",
    )?;
    if z < 0.0 && max_term * f64::EPSILON > 1e-6 * sum.abs().max(1.0) {
        return Err(Error::domain(
            MODULE,
            format!("Mittag-Leffler series at z = {z} loses all precision to cancellation"),
        ));
    }
    Ok(sum)
}

/// Large-argument expansion for `z > 0`:
/// `E(z) ~ z^((1-beta)/alpha) exp(z^(1/alpha)) / alpha - sum_k z^-k / Gamma(beta - alpha k)`,
/// with the algebraic sum truncated at its smallest term.
pub fn ml2_asymptotic(alpha: f64, beta: f64, z: f64) -> f64 {
    let lead = z.powf((1.0 - beta) / alpha) * z.powf(1.0 / alpha).exp() / alpha;
    let mut corr = 0.0;
    let mut prev = f64::INFINITY;
    for k in 1..60 {
        let t = z.powi(-(k as i32)) * rgamma(beta - alpha * k as f64);
        if t.abs() > prev && t != 0.0 {
            break;
        }
        corr += t;
        if t != 0.0 {
            prev = t.abs();
        }
    }
    lead - corr
}

/// `E_alpha(-x)` for `0 < alpha < 1` through the positive Laplace-integral
/// representation; stable for large `x`.
fn ml1_negative_integral(alpha: f64, x: f64) -> Result<f64> {
    let t = x.powf(1.0 / alpha);
    let c = (alpha * PI).cos();
    let near = |v: f64| (-t * v.powf(1.0 / alpha)).exp() / (v * v + 2.0 * v * c + 1.0);
    let far = |w: f64| {
        if w == 0.0 {
            0.0
        } else {
            (-t * w.powf(-1.0 / alpha)).exp() / (w * w + 2.0 * w * c + 1.0)
        }
    };
    let a = quad::integrate(near, 0.0, 1.0, 1e-17, 1e-13)?;
    let b = quad::integrate(far, 0.0, 1.0, 1e-17, 1e-13)?;
    Ok((alpha * PI).sin() / (alpha * PI) * (a + b))
}

/// Would the positive-argument series overflow or run past the term cap?
const OSCILLATORY_SWITCH: f64 = 18.0;

fn series_feasible(alpha: f64, z: f64, budget: &AccuracyBudget) -> bool {
    // The terms peak near k = z^(1/alpha) / alpha and the sum is about
    // exp(z^(1/alpha)) / alpha.
    let growth = z.powf(1.0 / alpha);
    growth < 650.0 && (2.0 * growth / alpha + 60.0) < budget.max_terms as f64
}

/// Two-parameter Mittag-Leffler function with an explicit budget.
pub fn ml2_with(alpha: f64, beta: f64, z: f64, budget: &AccuracyBudget) -> Result<f64> {
    check_alpha(alpha)?;
    check_finite("beta", beta)?;
    check_finite("z", z)?;
    if z >= 0.0 {
        if series_feasible(alpha, z, budget) {
            return ml2_series(alpha, beta, z, budget);
        }
        return Ok(ml2_asymptotic(alpha, beta, z));
    }
    // For alpha > 1 the series loses about exp(g) to cancellation and the
    // asymptotic form errs by about exp(-g), g = |z|^(1/alpha); they balance near g = 18.
    if -z <= budget.z_switch || (alpha > 1.0 && (-z).powf(1.0 / alpha) <= OSCILLATORY_SWITCH) {
        return ml2_series(alpha, beta, z, budget);
    }
    if beta == 1.0 {
        if alpha == 1.0 {
            return Ok(z.exp());
        }
        if alpha < 1.0 {
            return ml1_negative_integral(alpha, -z);
        }
    }
    // Algebraic decay for large negative arguments, plus for alpha > 1 the
    // conjugate pair of exponential terms from the roots w = |z|^(1/alpha) e^(+-i pi/alpha).
    let osc = if alpha > 1.0 {
        let w = Complex64::from_polar((-z).powf(1.0 / alpha), PI / alpha);
        2.0 / alpha * (w.powf(1.0 - beta) * w.exp()).re
    } else {
        0.0
    };
    let mut corr = 0.0;
    let mut prev = f64::INFINITY;
    for k in 1..60 {
        let t = z.powi(-(k as i32)) * rgamma(beta - alpha * k as f64);
        if t.abs() > prev && t != 0.0 {
            break;
        }
        corr += t;
        if t != 0.0 {
            prev = t.abs();
        }
    }
    Ok(osc - corr)
}

/// One-parameter Mittag-Leffler function `E_alpha(z)`.
pub fn ml1(alpha: f64, z: f64) -> Result<f64> {
    ml2_with(alpha, 1.0, z, &AccuracyBudget::default())
}

/// Two-parameter Mittag-Leffler function `E_{alpha,beta}(z)`.
pub fn ml2(alpha: f64, beta: f64, z: f64) -> Result<f64> {
    ml2_with(alpha, beta, z, &AccuracyBudget::default())
}

/// Three-parameter (Prabhakar) Mittag-Leffler function by direct summation.
pub fn ml3_with(alpha: f64, beta: f64, gamma_: f64, z: f64, budget: &AccuracyBudget) -> Result<f64> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::domain(MODULE, format!("alpha = {alpha} must be positive")));
    }
    check_finite("beta", beta)?;
    check_finite("gamma", gamma_)?;
    check_finite("z", z)?;
    if z == 0.0 {
        return Ok(rgamma(beta));
    }
    // coefficient (gamma)_n z^n / n!, carried both directly and in log form
    let mut c = 1.0;
    let mut ln_c = 0.0;
    let mut sign = 1.0;
    let ln_abs_z = z.abs().ln();
    let (sum, max_term) = sum_series(
        |n| {
            let t = scaled_rgamma(c, ln_c, sign, alpha * n as f64 + beta);
            let g = gamma_ + n as f64;
            let step = g * z / (n as f64 + 1.0);
            c *= step;
            if g == 0.0 {
                ln_c = f64::NEG_INFINITY;
            } else {
                ln_c += g.abs().ln() + ln_abs_z - (n as f64 + 1.0).ln();
            }
            if step < 0.0 {
                sign = -sign;
            }
            t
        },
        budget,
        "three-parameter Mittag-Leffler series",
    )?;
    if max_term * f64::EPSILON > 1e-6 * sum.abs().max(1.0) {
        return Err(Error::domain(
            MODULE,
            format!("three-parameter Mittag-Leffler series at z = {z} loses all precision"),
        ));
    }
    Ok(sum)
}

pub fn ml3(alpha: f64, beta: f64, gamma_: f64, z: f64) -> Result<f64> {
    ml3_with(alpha, beta, gamma_, z, &AccuracyBudget::default())
}

// ---------------------------------------------------------------------------
// Confluent hypergeometric, incomplete gamma, normal CDF

/// Kummer's confluent hypergeometric function `1F1(a; b; z)`.
pub fn kummer_1f1(a: f64, b: f64, z: f64) -> Result<f64> {
    kummer_1f1_with(a, b, z, &AccuracyBudget::default())
}

pub fn kummer_1f1_with(a: f64, b: f64, z: f64, budget: &AccuracyBudget) -> Result<f64> {
    check_finite("a", a)?;
    check_finite("z", z)?;
    if is_nonpositive_integer(b) {
        return Err(Error::domain(MODULE, format!("1F1 pole: b = {b} is a non-positive integer")));
    }
    if z < -1.0 {
        // Kummer's transformation keeps the series positive.
        return Ok(z.exp() * kummer_1f1_with(b - a, b, -z, budget)?);
    }
    let mut c = 1.0;
    let (sum, _) = sum_series(
        |k| {
            let t = c;
            let kf = k as f64;
            c *= (a + kf) / (b + kf) * z / (kf + 1.0);
            t
        },
        budget,
        "1F1 series",
    )?;
    Ok(sum)
}

/// Lower incomplete gamma function `gamma(a, z)`.
pub fn lower_incomplete_gamma(a: f64, z: f64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::domain(MODULE, format!("incomplete gamma needs a > 0, got {a}")));
    }
    if !(z >= 0.0) {
        return Err(Error::domain(MODULE, format!("incomplete gamma needs z >= 0, got {z}")));
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    if z.is_infinite() {
        return Ok(gamma(a));
    }
    let prefactor = (a * z.ln() - z).exp();
    if z < a + 1.0 {
        // z^a e^-z sum_k z^k / (a (a+1) ... (a+k))
        let mut t = 1.0 / a;
        let mut sum = t;
        for k in 1..10_000 {
            t *= z / (a + k as f64);
            sum += t;
            if t.abs() < sum.abs() * 1e-17 {
                return Ok(prefactor * sum);
            }
        }
        return Err(Error::Truncation {
            module: MODULE,
            max_terms: 10_000,
            msg: "incomplete gamma series".into(),
        });
    }
    // Upper function by Lentz's continued fraction.
    let tiny = 1e-300;
    let mut b = z + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            return Ok(gamma(a) - prefactor * h);
        }
    }
    Err(Error::Truncation {
        module: MODULE,
        max_terms: 10_000,
        msg: "incomplete gamma continued fraction".into(),
    })
}

/// Standard normal cumulative distribution function.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}
