//! Numerical Laplace inversion and the densities built on it.
//!
//! The subordination density `h(u, t)` of the inverse subordinator has the
//! Laplace transform `Psi(s)/s * exp(-u Psi(s))` in `t`; everything in this
//! module (density grids, the price density) is an inversion of that kind.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{eta_laplace_unchecked, levy_derivative, MemoryKernel};
use crate::moments::MarketParams;
use crate::quad;

/// Inversion algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    /// Fixed Talbot contour.
    Talbot,
    /// Gaver-Stehfest acceleration on the real axis.
    GaverStehfest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InversionConfig {
    pub method: Method,
    pub nodes: usize,
    /// Contour scale: the Talbot contour crosses the real axis at `scale * nodes / t`.
    pub scale: f64,
    /// Abscissa shift applied before inversion (moves singularities left of the contour).
    pub shift: f64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig {
            method: Method::Talbot,
            nodes: 32,
            scale: 0.4,
            shift: 0.0,
        }
    }
}

impl InversionConfig {
    pub fn gaver_stehfest(nodes: usize) -> Self {
        InversionConfig {
            method: Method::GaverStehfest,
            nodes,
            scale: 1.0,
            shift: 0.0,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.nodes == 0 {
            return Err(Error::Inversion("nodes must be positive".into()));
        }
        if self.method == Method::GaverStehfest && self.nodes % 2 != 0 {
            return Err(Error::Inversion("Gaver-Stehfest needs an even number of terms".into()));
        }
        if !(self.scale > 0.0) {
            return Err(Error::Inversion("scale must be positive".into()));
        }
        Ok(())
    }
}

/// Fixed Talbot rule on `exp(s t + ln_f(s))`; adding the exponents before
/// exponentiating keeps `exp(-u Psi)` from overflowing against `exp(s t)`.
fn talbot<F: Fn(Complex64) -> Complex64>(ln_f: &F, t: f64, m: usize, scale: f64) -> f64 {
    let mf = m as f64;
    let r = scale * mf / t;
    let mut sum = 0.5 * (r * t + ln_f(Complex64::new(r, 0.0))).exp().re;
    for k in 1..m {
        let theta = k as f64 * PI / mf;
        let cot = theta.cos() / theta.sin();
        let s = Complex64::new(r * theta * cot, r * theta);
        let sigma = theta + (theta * cot - 1.0) * cot;
        let w = Complex64::new(1.0, sigma);
        sum += ((s * t + ln_f(s)).exp() * w).re;
    }
    r / mf * sum
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

fn stehfest_weights(n: usize) -> Vec<f64> {
    let half = n / 2;
    (1..=n)
        .map(|k| {
            let mut v = 0.0;
            for j in k.div_ceil(2)..=k.min(half) {
                v += (j as f64).powi(half as i32) * factorial(2 * j)
                    / (factorial(half - j)
                        * factorial(j)
                        * factorial(j - 1)
                        * factorial(k - j)
                        * factorial(2 * j - k));
            }
            if (k + half) % 2 == 1 {
                -v
            } else {
                v
            }
        })
        .collect()
}

fn gaver_stehfest<F: Fn(Complex64) -> Complex64>(f: &F, t: f64, n: usize) -> f64 {
    let a = LN_2 / t;
    stehfest_weights(n)
        .iter()
        .enumerate()
        .map(|(i, w)| w * f(Complex64::new(a * (i + 1) as f64, 0.0)).re)
        .sum::<f64>()
        * a
}

/// Invert the Laplace transform `f` at time `t > 0`.
pub fn lap_invert<F: Fn(Complex64) -> Complex64>(f: F, t: f64, cfg: &InversionConfig) -> Result<f64> {
    lap_invert_ln(|s| f(s).ln(), t, cfg)
}

/// Invert a transform given through its logarithm `ln_f(s) = ln F(s)`.
pub fn lap_invert_ln<F: Fn(Complex64) -> Complex64>(ln_f: F, t: f64, cfg: &InversionConfig) -> Result<f64> {
    cfg.check()?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Inversion(format!("t = {t} must be positive and finite")));
    }
    let shift = cfg.shift;
    let raw = match cfg.method {
        Method::Talbot => talbot(&|s: Complex64| ln_f(s + shift), t, cfg.nodes, cfg.scale),
        Method::GaverStehfest => gaver_stehfest(&|s: Complex64| ln_f(s + shift).exp(), t, cfg.nodes),
    };
    let v = raw * (shift * t).exp();
    if !v.is_finite() {
        return Err(Error::Inversion(format!("non-finite value during contour evaluation at t = {t}")));
    }
    Ok(v)
}

// ---------------------------------------------------------------------------
// Subordination density

/// `h(u, t)` for one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SubordinationDensity {
    Value(f64),
    /// The standard kernel has `h(u, t) = delta(u - t)`.
    DegenerateAt(f64),
}

fn levy(k: &MemoryKernel, s: Complex64) -> Complex64 {
    eta_laplace_unchecked(k, s).inv()
}

/// Largest exponent magnitude treated as an exact zero.
const NEGLIGIBLE_EXPONENT: f64 = -700.0;

/// Contour adapted to a transform `exp(-E(s)) G(s)` with `E` increasing and
/// concave on the positive axis: the Talbot crossing point is raised to the
/// saddle `s*` of `s t - E(s)` when that lies beyond the default radius.
/// `None` means the value is below `exp(-700)` by the Chernoff bound.
fn saddle_config<D, E>(t: f64, d_exponent: D, exponent: E, cfg: &InversionConfig) -> Option<InversionConfig>
where
    D: Fn(f64) -> f64,
    E: Fn(f64) -> f64,
{
    if cfg.method != Method::Talbot {
        return Some(*cfg);
    }
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    if d_exponent(hi.exp()) >= t {
        return (t * hi.exp() - exponent(hi.exp()) >= NEGLIGIBLE_EXPONENT).then_some(*cfg);
    }
    if d_exponent(lo.exp()) <= t {
        return Some(*cfg);
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if d_exponent(mid.exp()) > t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s_star = (0.5 * (lo + hi)).exp();
    if s_star * t - exponent(s_star) < NEGLIGIBLE_EXPONENT {
        return None;
    }
    let mut out = *cfg;
    out.scale = cfg.scale.max(s_star * t / cfg.nodes as f64);
    Some(out)
}

fn density_config(k: &MemoryKernel, u: f64, t: f64, cfg: &InversionConfig) -> Option<InversionConfig> {
    saddle_config(
        t,
        |s| u * levy_derivative(k, s),
        |s| u * levy(k, Complex64::new(s, 0.0)).re,
        cfg,
    )
}

/// Unclipped numerical `h(u, t)`; errors for the standard kernel. The
/// subdiffusive kernel uses its real-integral form, everything else the
/// contour inversion.
pub(crate) fn subordination_density_raw(k: &MemoryKernel, u: f64, t: f64, cfg: &InversionConfig) -> Result<f64> {
    match *k {
        MemoryKernel::Subdiffusive { alpha } if cfg.method == Method::Talbot => {
            if !(u >= 0.0) {
                return Err(Error::domain("lapinv", format!("u = {u} must be non-negative")));
            }
            stable_inverse_density(alpha, u, t)
        }
        _ => subordination_density_inverted(k, u, t, cfg),
    }
}

/// `h(u, t)` by numerical inversion of `Psi(s)/s * exp(-u Psi(s))` for any
/// non-standard kernel, unclipped.
pub fn subordination_density_inverted(k: &MemoryKernel, u: f64, t: f64, cfg: &InversionConfig) -> Result<f64> {
    if *k == MemoryKernel::Standard {
        return Err(Error::Inversion("standard kernel has a point-mass density".into()));
    }
    if !(u >= 0.0) {
        return Err(Error::domain("lapinv", format!("u = {u} must be non-negative")));
    }
    let Some(cfg) = density_config(k, u, t, cfg) else {
        return Ok(0.0);
    };
    lap_invert_ln(
        |s| {
            let psi = levy(k, s);
            (psi / s).ln() - psi * u
        },
        t,
        &cfg,
    )
}

const CLIP: f64 = 1e-9;

fn clip(v: f64, u: f64, t: f64) -> Result<f64> {
    if v >= 0.0 {
        Ok(v)
    } else if v >= -CLIP {
        Ok(0.0)
    } else {
        Err(Error::Admissibility {
            module: "lapinv",
            msg: format!("h({u}, {t}) = {v:e} is negative beyond numerical slack"),
        })
    }
}

/// Density of the inverse subordinator `S(t)` at `u`.
pub fn subordination_density(k: &MemoryKernel, u: f64, t: f64) -> Result<SubordinationDensity> {
    subordination_density_with(k, u, t, &InversionConfig::default())
}

pub fn subordination_density_with(
    k: &MemoryKernel,
    u: f64,
    t: f64,
    cfg: &InversionConfig,
) -> Result<SubordinationDensity> {
    k.check()?;
    let k = &k.reduced();
    if !(t > 0.0) {
        return Err(Error::domain("lapinv", format!("t = {t} must be positive")));
    }
    if *k == MemoryKernel::Standard {
        return Ok(SubordinationDensity::DegenerateAt(t));
    }
    let v = subordination_density_raw(k, u, t, cfg)?;
    Ok(SubordinationDensity::Value(clip(v, u, t)?))
}

/// `P(S(t) > u)`, from the transform `exp(-u Psi(s)) / s`.
pub fn subordination_tail(k: &MemoryKernel, u: f64, t: f64, cfg: &InversionConfig) -> Result<f64> {
    if *k == MemoryKernel::Standard {
        return Ok(if u < t { 1.0 } else { 0.0 });
    }
    if let (MemoryKernel::Subdiffusive { alpha }, Method::Talbot) = (*k, cfg.method) {
        return stable_inverse_tail(alpha, u, t);
    }
    let Some(cfg) = density_config(k, u, t, cfg) else {
        return Ok(0.0);
    };
    lap_invert_ln(|s| -levy(k, s) * u - s.ln(), t, &cfg)
}

// ---------------------------------------------------------------------------
// Subdiffusive kernel: S(t) = (t / X)^alpha with X one-sided alpha-stable.
//
// With x = u t^-alpha and z = x^(1/(1-alpha)), Kanter's representation gives
//   P(S(t) > u) = (1/pi) int_0^pi exp(-z a(phi)) dphi,
//   h(u, t)     = 1/((1-alpha) u pi) int_0^pi z a(phi) exp(-z a(phi)) dphi,
// a(phi) = (sin(alpha phi)/sin phi)^(1/(1-alpha)) sin((1-alpha) phi)/sin(alpha phi).
// Small x uses the Wright-function series instead, where the integrand
// collapses onto phi = pi.

const WRIGHT_SWITCH: f64 = 0.9;

fn ln_kanter_a(alpha: f64, phi: f64) -> f64 {
    ((alpha * phi).sin() / phi.sin()).ln() / (1.0 - alpha) + ((1.0 - alpha) * phi).sin().ln()
        - (alpha * phi).sin().ln()
}

/// `ln |1/Gamma(y)|` and the sign of `1/Gamma(y)`; `None` at the poles.
fn ln_rgamma_signed(y: f64) -> Option<(f64, f64)> {
    if y > 0.0 {
        return Some((-crate::specfun::ln_gamma(y), 1.0));
    }
    if y == y.floor() {
        return None;
    }
    // 1/Gamma(y) = sin(pi y) Gamma(1 - y) / pi
    let sp = (PI * y).sin();
    Some((sp.abs().ln() + crate::specfun::ln_gamma(1.0 - y) - PI.ln(), sp.signum()))
}

/// `sum_k (-1)^k x^(k+j) / ((k+j)! Gamma(1 - alpha (k+1)))`; `j = 0` is the
/// scaled density, `j = 1` its integral from zero.
fn wright_series(alpha: f64, x: f64, j: usize) -> Result<f64> {
    let ln_x = x.ln();
    let mut sum = 0.0;
    let mut quiet = 0;
    for k in 0..20_000usize {
        let Some((lr, sign)) = ln_rgamma_signed(1.0 - alpha * (k as f64 + 1.0)) else {
            continue;
        };
        let n = (k + j) as f64;
        let mag = (n * ln_x - crate::specfun::ln_gamma(n + 1.0) + lr).exp();
        let term = if k % 2 == 0 { sign * mag } else { -sign * mag };
        sum += term;
        if mag <= 1e-17 * sum.abs().max(1e-300) {
            quiet += 1;
            if quiet >= 3 {
                return Ok(sum);
            }
        } else {
            quiet = 0;
        }
    }
    Err(Error::Truncation {
        module: "lapinv",
        max_terms: 20_000,
        msg: "Wright series for the inverse stable density".into(),
    })
}

/// Integrate `g(ln z + ln a(phi))` over `(0, pi)`. `a` is increasing and the
/// integrand peaks where the exponent crosses zero; for alpha near one the
/// peak is far narrower than the interval, so panels are graded geometrically
/// around it from the local width `1 / w'(phi)`.
fn kanter_integral<G: Fn(f64) -> f64>(alpha: f64, ln_z: f64, g: G) -> Result<f64> {
    let w = |phi: f64| ln_z + ln_kanter_a(alpha, phi);
    let f = |phi: f64| g(w(phi));
    let (mut lo, mut hi) = (0.0, PI);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if w(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let split = 0.5 * (lo + hi);
    if split <= 0.0 || split >= PI {
        return quad::integrate(f, 0.0, PI, 1e-16, 1e-11);
    }
    let d = 1e-7 * split.min(PI - split);
    let slope = (w(split + d) - w(split - d)) / (2.0 * d);
    let width = if slope.is_finite() && slope > 0.0 { 1.0 / slope } else { PI };
    let mut points = vec![0.0, split, PI];
    let mut step = width;
    while step < PI {
        for p in [split - step, split + step] {
            if p > 0.0 && p < PI {
                points.push(p);
            }
        }
        step *= 4.0;
    }
    points.sort_by(f64::total_cmp);
    points.dedup();
    points
        .windows(2)
        .map(|ab| quad::integrate(&f, ab[0], ab[1], 1e-16, 1e-11))
        .sum()
}

fn stable_inverse_density(alpha: f64, u: f64, t: f64) -> Result<f64> {
    let x = u * t.powf(-alpha);
    if x <= WRIGHT_SWITCH {
        if x == 0.0 {
            return Ok(t.powf(-alpha) * crate::specfun::rgamma(1.0 - alpha));
        }
        return Ok(t.powf(-alpha) * wright_series(alpha, x, 0)?);
    }
    let ln_z = x.ln() / (1.0 - alpha);
    let integral = kanter_integral(alpha, ln_z, |w| if w > 700.0 { 0.0 } else { (w - w.exp()).exp() })?;
    Ok(integral / ((1.0 - alpha) * u * PI))
}

fn stable_inverse_tail(alpha: f64, u: f64, t: f64) -> Result<f64> {
    let x = u * t.powf(-alpha);
    if x <= WRIGHT_SWITCH {
        if x == 0.0 {
            return Ok(1.0);
        }
        return Ok(1.0 - wright_series(alpha, x, 1)?);
    }
    let ln_z = x.ln() / (1.0 - alpha);
    let integral = kanter_integral(alpha, ln_z, |w| if w > 700.0 { 0.0 } else { (-w.exp()).exp() })?;
    Ok(integral / PI)
}

/// Tabulated `h(., t)` with its trapezoid CDF.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityGrid {
    pub t: f64,
    pub u: Vec<f64>,
    pub h: Vec<f64>,
    pub cdf: Vec<f64>,
    /// Mass beyond the last node, from an exact tail inversion.
    pub tail_mass: f64,
    /// Point mass at `u = t` (standard kernel); `u`, `h` and `cdf` then hold one node.
    pub degenerate: bool,
}

const TAIL_TARGET: f64 = 1e-5;
const MAX_DOUBLINGS: u32 = 10;

impl DensityGrid {
    fn point_mass(t: f64) -> Self {
        DensityGrid {
            t,
            u: vec![t],
            h: vec![1.0],
            cdf: vec![1.0],
            tail_mass: 0.0,
            degenerate: true,
        }
    }

    pub fn u_max(&self) -> f64 {
        *self.u.last().expect("grid is never empty")
    }

    /// Trapezoid mass on the grid.
    pub fn mass(&self) -> f64 {
        *self.cdf.last().expect("grid is never empty")
    }

    /// `1 - mass`, the weight assigned to `u_max` by [`DensityGrid::expectation`].
    pub fn residual_mass(&self) -> f64 {
        1.0 - self.mass()
    }

    /// `E[g(S(t))]`: trapezoid rule plus residual mass placed at `u_max`.
    pub fn expectation<G: Fn(f64) -> f64>(&self, g: G) -> f64 {
        if self.degenerate {
            return g(self.t);
        }
        // Two-point Gauss-Legendre per panel against the linear interpolant of
        // h: exact for the mass, and robust to the sqrt(u) onset of option
        // values at u = 0 where a plain trapezoid converges only as du^1.5.
        const XI: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];
        let du = self.u[1] - self.u[0];
        let body: f64 = self
            .u
            .windows(2)
            .zip(self.h.windows(2))
            .map(|(u, h)| {
                XI.iter()
                    .map(|&x| g(u[0] + x * du) * ((1.0 - x) * h[0] + x * h[1]))
                    .sum::<f64>()
            })
            .sum();
        0.5 * du * body + self.residual_mass() * g(self.u_max())
    }

    /// Linearly interpolated density; zero beyond the grid.
    pub fn density_at(&self, u: f64) -> f64 {
        if self.degenerate || u < 0.0 || u > self.u_max() {
            return 0.0;
        }
        let du = self.u[1] - self.u[0];
        let i = ((u / du) as usize).min(self.u.len() - 2);
        let w = (u - self.u[i]) / du;
        self.h[i] * (1.0 - w) + self.h[i + 1] * w
    }

    /// Inverse CDF under the piecewise-linear density; `p` beyond the grid
    /// mass maps to `u_max`.
    pub fn quantile(&self, p: f64) -> f64 {
        if self.degenerate {
            return self.t;
        }
        let n = self.cdf.len();
        if p >= self.cdf[n - 1] {
            return self.u_max();
        }
        if p <= 0.0 {
            return 0.0;
        }
        // first index with cdf >= p
        let j = self.cdf.partition_point(|&c| c < p).max(1);
        let i = j - 1;
        let du = self.u[1] - self.u[0];
        let (h0, h1) = (self.h[i], self.h[i + 1]);
        let need = p - self.cdf[i];
        // need = h0 x + (h1 - h0) x^2 / (2 du), x in [0, du]
        let a = 0.5 * (h1 - h0) / du;
        let x = if a.abs() < 1e-14 * h0.abs().max(1e-300) {
            if h0 > 0.0 {
                need / h0
            } else {
                0.0
            }
        } else {
            let disc = (h0 * h0 + 4.0 * a * need).max(0.0);
            2.0 * need / (h0 + disc.sqrt())
        };
        self.u[i] + x.clamp(0.0, du)
    }
}

/// Tabulate `h(., t)` on `n` nodes, with `u_max` grown by doubling from `t`
/// until the tail mass is negligible.
pub fn density_grid(k: &MemoryKernel, t: f64, n: usize) -> Result<DensityGrid> {
    density_grid_with(k, t, n, &InversionConfig::default())
}

pub fn density_grid_with(k: &MemoryKernel, t: f64, n: usize, cfg: &InversionConfig) -> Result<DensityGrid> {
    k.check()?;
    let k = &k.reduced();
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Grid(format!("t = {t} must be positive")));
    }
    if *k == MemoryKernel::Standard {
        return Ok(DensityGrid::point_mass(t));
    }
    if n < 3 {
        return Err(Error::Grid(format!("need at least 3 nodes, got {n}")));
    }
    let mut u_max = t;
    let mut tail = subordination_tail(k, u_max, t, cfg)?;
    let mut doublings = 0;
    while tail > TAIL_TARGET {
        if doublings == MAX_DOUBLINGS {
            return Err(Error::Grid(format!(
                "tail mass {tail:e} still above target at u_max = {u_max} (cap 2^{MAX_DOUBLINGS} t)"
            )));
        }
        u_max *= 2.0;
        doublings += 1;
        tail = subordination_tail(k, u_max, t, cfg)?;
    }
    let du = u_max / (n - 1) as f64;
    let u: Vec<f64> = (0..n).map(|i| i as f64 * du).collect();
    let h = u
        .par_iter()
        .map(|&ui| subordination_density_raw(k, ui, t, cfg).and_then(|v| clip(v, ui, t)))
        .collect::<Result<Vec<f64>>>()?;
    let mut cdf = Vec::with_capacity(n);
    cdf.push(0.0);
    for i in 1..n {
        cdf.push(cdf[i - 1] + 0.5 * du * (h[i - 1] + h[i]));
    }
    let total = cdf[n - 1];
    if (total - 1.0).abs() > 1e-4 {
        return Err(Error::Grid(format!(
            "trapezoid mass {total} is not within 1e-4 of one; increase the node count"
        )));
    }
    Ok(DensityGrid {
        t,
        u,
        h,
        cdf,
        tail_mass: tail.max(0.0),
        degenerate: false,
    })
}

// ---------------------------------------------------------------------------
// Price density

/// Log-normal density of plain GBM at operational time `u`.
pub fn lognormal_pdf(m: &MarketParams, x: f64, u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    let var = m.sigma * m.sigma * u;
    let z = (x / m.x0).ln() - m.mu_bar() * u;
    (-z * z / (2.0 * var)).exp() / (x * (2.0 * PI * var).sqrt())
}

/// Price density `P(x, t)` by inverting its closed Laplace-domain form.
pub fn price_pdf(k: &MemoryKernel, m: &MarketParams, x: f64, t: f64) -> Result<f64> {
    price_pdf_with(k, m, x, t, &InversionConfig::default())
}

pub fn price_pdf_with(k: &MemoryKernel, m: &MarketParams, x: f64, t: f64, cfg: &InversionConfig) -> Result<f64> {
    k.check()?;
    m.check()?;
    if !(x > 0.0) {
        return Err(Error::domain("lapinv", format!("x = {x} must be positive")));
    }
    if !(t > 0.0) {
        return Err(Error::domain("lapinv", format!("t = {t} must be positive")));
    }
    if *k == MemoryKernel::Standard {
        return Ok(lognormal_pdf(m, x, t));
    }
    let l = (x / m.x0).ln();
    let s2 = m.sigma * m.sigma;
    let mb = m.mu_bar();
    let root_re = |s: f64| (2.0 * s2 * levy(k, Complex64::new(s, 0.0)).re + mb * mb).sqrt();
    let Some(cfg) = saddle_config(
        t,
        |s| l.abs() * levy_derivative(k, s) / root_re(s),
        |s| (root_re(s) * l.abs() - mb * l) / s2,
        cfg,
    ) else {
        return Ok(0.0);
    };
    let v = lap_invert_ln(
        |s| {
            let psi = levy(k, s);
            let root = (psi * (2.0 * s2) + mb * mb).sqrt();
            // x > x0 and x < x0 branches combined through |log(x/x0)|.
            (psi / s / (root * x)).ln() + (-root * l.abs() + mb * l) / s2
        },
        t,
        &cfg,
    )?;
    clip(v, x, t)
}

/// Price density by quadrature of the log-normal against a tabulated `h(., t)`.
pub fn price_pdf_quadrature(m: &MarketParams, x: f64, grid: &DensityGrid) -> Result<f64> {
    if grid.degenerate {
        return Ok(lognormal_pdf(m, x, grid.t));
    }
    // u = v^2 absorbs the u^(-1/2) behaviour of the log-normal at x = x0.
    let vmax = grid.u_max().sqrt();
    let body = quad::integrate(
        |v| {
            let u = v * v;
            2.0 * v * lognormal_pdf(m, x, u) * grid.density_at(u)
        },
        0.0,
        vmax,
        1e-12,
        1e-9,
    )?;
    Ok(body + grid.residual_mass() * lognormal_pdf(m, x, grid.u_max()))
}

/// `P(x, t)` sampled on an `x` grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PricePdfSlice {
    pub t: f64,
    pub x0: f64,
    pub mu: f64,
    pub sigma: f64,
    pub x: Vec<f64>,
    pub p: Vec<f64>,
}

pub fn price_pdf_slice(k: &MemoryKernel, m: &MarketParams, t: f64, x: &[f64]) -> Result<PricePdfSlice> {
    if x.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("lapinv", "x grid must be strictly ascending"));
    }
    let p = x
        .par_iter()
        .map(|&xi| price_pdf(k, m, xi, t))
        .collect::<Result<Vec<f64>>>()?;
    Ok(PricePdfSlice {
        t,
        x0: m.x0,
        mu: m.mu,
        sigma: m.sigma,
        x: x.to_vec(),
        p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::{gamma, ml1, ml2};

    #[test]
    fn textbook_pairs() {
        let cfg = InversionConfig::default();
        let v = lap_invert(|s| (s + 1.0).inv(), 1.0, &cfg).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-8, "{v}");
        let v = lap_invert(|s| (s * s).inv(), 3.0, &cfg).unwrap();
        assert!((v - 3.0).abs() < 1e-10, "{v}");
    }

    #[test]
    fn gaver_stehfest_smooth_pair() {
        let cfg = InversionConfig::gaver_stehfest(14);
        let v = lap_invert(|s| (s + 1.0).inv(), 1.0, &cfg).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-4, "{v}");
        assert!(InversionConfig::gaver_stehfest(13).check().is_err());
    }

    #[test]
    fn one_parameter_ml_pair() {
        let (a, mu, t) = (0.8, 0.03, 2.0);
        let v = lap_invert(|s| s.powf(a - 1.0) / (s.powf(a) - mu), t, &InversionConfig::default()).unwrap();
        let want = ml1(a, mu * f64::powf(t, a)).unwrap();
        assert!((v - want).abs() < 1e-6, "{v} {want}");
    }

    #[test]
    fn half_order_density_closed_form() {
        let k = MemoryKernel::subdiffusive(0.5).unwrap();
        match subordination_density(&k, 1.0, 1.0).unwrap() {
            SubordinationDensity::Value(v) => {
                let want = (-0.25f64).exp() / PI.sqrt();
                assert!((v - want).abs() < 1e-8, "{v} {want}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn standard_kernel_is_degenerate() {
        assert_eq!(
            subordination_density(&MemoryKernel::Standard, 0.3, 2.0).unwrap(),
            SubordinationDensity::DegenerateAt(2.0)
        );
        let g = density_grid(&MemoryKernel::Standard, 2.0, 100).unwrap();
        assert!(g.degenerate);
        assert_eq!(g.expectation(|u| u * u), 4.0);
        assert_eq!(g.quantile(0.3), 2.0);
    }

    #[test]
    fn grid_mass_half_order() {
        let k = MemoryKernel::subdiffusive(0.5).unwrap();
        let g = density_grid(&k, 1.0, 400).unwrap();
        assert!((g.mass() - 1.0).abs() < 1e-4, "{}", g.mass());
        assert!(g.cdf.windows(2).all(|w| w[1] >= w[0]));
        // mean of S(1) is 1/Gamma(1.5)
        let mean = g.expectation(|u| u);
        assert!((mean - 1.0 / gamma(1.5)).abs() < 1e-4, "{mean}");
    }

    #[test]
    fn quantile_inverts_cdf() {
        let k = MemoryKernel::subdiffusive(0.7).unwrap();
        let g = density_grid(&k, 1.0, 300).unwrap();
        for p in [0.01, 0.2, 0.5, 0.9, 0.999] {
            let u = g.quantile(p);
            // trapezoid cdf between nodes
            let i = ((u / (g.u[1] - g.u[0])) as usize).min(g.u.len() - 2);
            assert!(g.cdf[i] <= p + 1e-12 && p <= g.cdf[i + 1] + 1e-12);
        }
    }

    #[test]
    fn lognormal_reduction() {
        let m = MarketParams::new(1.0, 0.03, 0.02f64.sqrt(), 0.0).unwrap();
        let p = price_pdf(&MemoryKernel::Standard, &m, 1.0, 1.0).unwrap();
        let mb: f64 = 0.03 - 0.01;
        let want = (-(mb * mb) / (2.0 * 0.02)).exp() / (2.0 * PI * 0.02).sqrt();
        assert!((p - want).abs() < 1e-14);
    }

    #[test]
    fn two_parameter_ml_pair() {
        let (a, b, lam) = (0.7, 1.4, -0.6);
        for t in [0.3, 1.0, 4.0] {
            let v = lap_invert(|s| s.powf(a - b) / (s.powf(a) - lam), t, &InversionConfig::default()).unwrap();
            let want = f64::powf(t, b - 1.0) * ml2(a, b, lam * f64::powf(t, a)).unwrap();
            assert!((v - want).abs() < 1e-6 * want.abs(), "{t}: {v} {want}");
        }
    }

    #[test]
    fn stable_route_matches_inversion() {
        let cfg = InversionConfig::default();
        for alpha in [0.3, 0.5, 0.8, 0.95] {
            let k = MemoryKernel::subdiffusive(alpha).unwrap();
            for (u, t) in [(0.05, 1.0), (0.4, 0.25), (1.0, 1.0), (2.5, 4.0), (3.0, 1.0)] {
                let a = subordination_density_raw(&k, u, t, &cfg).unwrap();
                let b = subordination_density_inverted(&k, u, t, &cfg).unwrap();
                assert!((a - b).abs() < 1e-8 * a.max(1e-3), "alpha={alpha} u={u} t={t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn stable_route_half_closed_form() {
        let k = MemoryKernel::subdiffusive(0.5).unwrap();
        for (u, t) in [(0.0f64, 1.0f64), (0.3, 1.0), (1.7, 0.5), (6.0, 2.0)] {
            let want = (-u * u / (4.0 * t)).exp() / (PI * t).sqrt();
            let got = subordination_density_raw(&k, u, t, &InversionConfig::default()).unwrap();
            assert!((got - want).abs() < 1e-12, "u={u} t={t}: {got} vs {want}");
            // P(S(t) > u) = erfc(u / (2 sqrt t))
            let tail = subordination_tail(&k, u, t, &InversionConfig::default()).unwrap();
            assert!((tail - libm::erfc(u / (2.0 * t.sqrt()))).abs() < 1e-11);
        }
    }

    #[test]
    fn near_unit_alpha_grid_keeps_mass() {
        let k = MemoryKernel::subdiffusive(0.999).unwrap();
        for t in [0.25, 1.0, 5.0] {
            let g = density_grid(&k, t, 4001).unwrap();
            assert!((g.mass() - 1.0).abs() < 1e-7, "t={t}: {}", g.mass());
            assert!(g.h.iter().all(|&h| h >= 0.0));
        }
    }
}
