//! Monte-Carlo engine for the time-changed process `X(t) = x(S(t))`.
//!
//! Every path owns an independent ChaCha stream selected by its index, so an
//! ensemble is a pure function of `(seed, kernel, market, grid)` no matter
//! how the paths are scheduled across threads.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{eta_integral, MemoryKernel};
use crate::lapinv::{density_grid, DensityGrid};
use crate::moments::MarketParams;

/// Grid nodes used when sampling `S(t)` by inverse CDF.
pub const SAMPLING_GRID_NODES: usize = 2001;
/// Operational steps per typical value of `S(t_max)` on simulated paths.
pub const PATH_STEPS: f64 = 1000.0;

/// Random stream of path `index` under `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let v: f64 = rng.random();
        if v > 0.0 {
            return v;
        }
    }
}

/// Standard one-sided stable variable with `E exp(-s S) = exp(-s^alpha)`
/// (Kanter's representation).
fn standard_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let u = PI * open_unit(rng);
    let e = -open_unit(rng).ln();
    let a = (alpha * u).sin() / u.sin().powf(1.0 / alpha);
    let b = ((1.0 - alpha) * u).sin() / e;
    a * b.powf((1.0 - alpha) / alpha)
}

/// Increment of the alpha-stable subordinator over an operational step `du`.
pub fn sample_stable_increment<R: Rng + ?Sized>(alpha: f64, du: f64, rng: &mut R) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Sampling(format!("stable index {alpha} outside (0, 1)")));
    }
    if !(du > 0.0) {
        return Err(Error::Sampling(format!("operational step {du} must be positive")));
    }
    Ok(du.powf(1.0 / alpha) * standard_stable(alpha, rng))
}

/// A stable subordinator sampled at multiples of `du`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubordinatorPath {
    pub du: f64,
    pub values: Vec<f64>,
}

pub fn subordinator_path<R: Rng + ?Sized>(alpha: f64, du: f64, steps: usize, rng: &mut R) -> Result<SubordinatorPath> {
    let mut values = Vec::with_capacity(steps + 1);
    values.push(0.0);
    let mut acc = 0.0;
    for _ in 0..steps {
        acc += sample_stable_increment(alpha, du, rng)?;
        values.push(acc);
    }
    Ok(SubordinatorPath { du, values })
}

/// First-passage times of a stable subordinator over ascending `targets`.
///
/// The subordinator is walked on a fixed operational step of
/// `E[S(t_max)] / PATH_STEPS`; each passage is placed at the midpoint of the
/// step in which it happens. A jump over several targets gives them the same
/// value (a trapping period).
fn stable_first_passages<R: Rng + ?Sized>(alpha: f64, targets: &[f64], rng: &mut R, out: &mut [f64]) {
    let t_max = targets.last().copied().unwrap_or(0.0);
    let du = t_max.powf(alpha) / crate::specfun::gamma(1.0 + alpha) / PATH_STEPS;
    let jump_scale = du.powf(1.0 / alpha);
    let (mut u, mut big_t) = (0.0, 0.0);
    let mut i = 0;
    while i < targets.len() {
        if targets[i] <= 0.0 {
            out[i] = 0.0;
            i += 1;
            continue;
        }
        if big_t > targets[i] {
            out[i] = u - 0.5 * du;
            i += 1;
            continue;
        }
        big_t += jump_scale * standard_stable(alpha, rng);
        u += du;
    }
}

/// Exact single-time draw: `S(t) = (t / T(1))^alpha` by self-similarity.
fn stable_first_passage_exact<R: Rng + ?Sized>(alpha: f64, t: f64, rng: &mut R) -> f64 {
    (t / standard_stable(alpha, rng)).powf(alpha)
}

/// How `S(t)` is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SamplingRoute {
    /// Exact stable-subordinator construction (subdiffusive kernel only).
    StablePath,
    /// Inverse CDF of the tabulated subordination density.
    DensityGrid,
}

impl SamplingRoute {
    pub fn default_for(k: &MemoryKernel) -> Self {
        match k {
            MemoryKernel::Subdiffusive { .. } => SamplingRoute::StablePath,
            _ => SamplingRoute::DensityGrid,
        }
    }
}

/// One draw of the inverse subordinator `S(t)`.
pub fn inverse_subordinator<R: Rng + ?Sized>(k: &MemoryKernel, t: f64, rng: &mut R) -> Result<f64> {
    k.check()?;
    let k = &k.reduced();
    if !(t >= 0.0) {
        return Err(Error::Sampling(format!("t = {t} must be non-negative")));
    }
    match *k {
        MemoryKernel::Standard => Ok(t),
        MemoryKernel::Subdiffusive { alpha } => Ok(stable_first_passage_exact(alpha, t, rng)),
        _ => {
            if t == 0.0 {
                return Ok(0.0);
            }
            let g = density_grid(k, t, SAMPLING_GRID_NODES)?;
            Ok(g.quantile(rng.random()))
        }
    }
}

/// `n` independent draws of `S(t)`, draw `i` using stream `i` of `seed`.
pub fn sample_operational_times(
    k: &MemoryKernel,
    t: f64,
    n: usize,
    seed: u64,
    route: SamplingRoute,
) -> Result<Vec<f64>> {
    k.check()?;
    let k = &k.reduced();
    if !(t > 0.0) {
        return Err(Error::Sampling(format!("t = {t} must be positive")));
    }
    match (route, *k) {
        (_, MemoryKernel::Standard) => Ok(vec![t; n]),
        (SamplingRoute::StablePath, MemoryKernel::Subdiffusive { alpha }) => Ok((0..n)
            .into_par_iter()
            .map(|i| stable_first_passage_exact(alpha, t, &mut path_rng(seed, i as u64)))
            .collect()),
        (SamplingRoute::StablePath, _) => Err(Error::Sampling(format!(
            "stable-path sampling needs a subdiffusive kernel, got {k}"
        ))),
        (SamplingRoute::DensityGrid, _) => {
            let g = density_grid(k, t, SAMPLING_GRID_NODES)?;
            Ok((0..n)
                .into_par_iter()
                .map(|i| g.quantile(path_rng(seed, i as u64).random()))
                .collect())
        }
    }
}

/// Simulated trajectories on a common time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathEnsemble {
    pub time_grid: Vec<f64>,
    /// Row-major `n_paths x time_grid.len()`.
    pub paths: Vec<f64>,
    pub n_paths: usize,
    pub seed: u64,
    pub kernel: MemoryKernel,
    pub market: MarketParams,
}

impl PathEnsemble {
    pub fn n_times(&self) -> usize {
        self.time_grid.len()
    }

    pub fn path(&self, i: usize) -> &[f64] {
        let n = self.n_times();
        &self.paths[i * n..(i + 1) * n]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_paths).map(|i| self.path(i)[j]).collect()
    }

    /// Index of `t` on the grid, if present.
    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.time_grid
            .iter()
            .position(|&g| (g - t).abs() <= 1e-12 * t.abs().max(1.0))
    }
}

/// Simulate `n_paths` trajectories of `x(S(t))` on `time_grid`.
///
/// A zero time is prepended when the grid starts after the origin, so
/// column 0 always holds `x0`.
pub fn simulate_paths(
    k: &MemoryKernel,
    m: &MarketParams,
    time_grid: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    k.check()?;
    m.check()?;
    let kernel = *k;
    let k = &k.reduced();
    if time_grid.is_empty() || time_grid.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(Error::Sampling("time grid must be non-empty and non-negative".into()));
    }
    if time_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Sampling("time grid must be strictly ascending".into()));
    }
    if n_paths == 0 {
        return Err(Error::Sampling("need at least one path".into()));
    }
    let mut grid = time_grid.to_vec();
    if grid[0] > 0.0 {
        grid.insert(0, 0.0);
    }
    let nt = grid.len();

    // Comonotone coupling for tabulated kernels: one uniform per path.
    let tables: Vec<Option<DensityGrid>> = match *k {
        MemoryKernel::Standard | MemoryKernel::Subdiffusive { .. } => vec![None; nt],
        _ => grid
            .iter()
            .map(|&t| {
                if t == 0.0 {
                    Ok(None)
                } else {
                    density_grid(k, t, SAMPLING_GRID_NODES).map(Some)
                }
            })
            .collect::<Result<_>>()?,
    };

    let mu_bar = m.mu_bar();
    let rows: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i as u64);
            let mut op = vec![0.0; nt];
            match *k {
                MemoryKernel::Standard => op.copy_from_slice(&grid),
                MemoryKernel::Subdiffusive { alpha } => stable_first_passages(alpha, &grid, &mut rng, &mut op),
                _ => {
                    let p: f64 = rng.random();
                    for (j, table) in tables.iter().enumerate() {
                        op[j] = table.as_ref().map_or(0.0, |g| g.quantile(p));
                    }
                    // quantiles of nested grids can jitter by interpolation error
                    for j in 1..nt {
                        op[j] = op[j].max(op[j - 1]);
                    }
                }
            }
            let mut row = Vec::with_capacity(nt);
            let mut b = 0.0;
            let mut prev = 0.0;
            for &s in &op {
                let ds = s - prev;
                if ds > 0.0 {
                    let z: f64 = rng.sample(StandardNormal);
                    b += ds.sqrt() * z;
                }
                prev = s;
                row.push(m.x0 * (mu_bar * s + m.sigma * b).exp());
            }
            row
        })
        .collect();

    Ok(PathEnsemble {
        time_grid: grid,
        paths: rows.into_iter().flatten().collect(),
        n_paths,
        seed,
        kernel,
        market: *m,
    })
}

/// Order-insensitive summation (fixed pairwise tree over the input order).
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Sample mean with its standard error.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Sample variance with an asymptotic standard error `sqrt((m4 - v^2) / n)`.
pub fn variance_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    let d2: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
    let d4: Vec<f64> = xs.iter().map(|x| (x - mean).powi(4)).collect();
    let v = pairwise_sum(&d2) / n;
    let m4 = pairwise_sum(&d4) / n;
    (v * n / (n - 1.0).max(1.0), ((m4 - v * v).max(0.0) / n).sqrt())
}

/// Ensemble statistics at one grid time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub t: f64,
    pub mean: f64,
    pub mean_se: f64,
    pub msd: f64,
    pub msd_se: f64,
    pub log_mean: f64,
    pub log_mean_se: f64,
    pub log_var: f64,
    pub log_var_se: f64,
}

pub fn ensemble_stats(ens: &PathEnsemble) -> Vec<EnsembleStats> {
    (0..ens.n_times())
        .map(|j| {
            let col = ens.column(j);
            let sq: Vec<f64> = col.iter().map(|x| x * x).collect();
            let logs: Vec<f64> = col.iter().map(|x| x.ln()).collect();
            let (mean, mean_se) = mean_and_se(&col);
            let (msd, msd_se) = mean_and_se(&sq);
            let (log_mean, log_mean_se) = mean_and_se(&logs);
            let (log_var, log_var_se) = variance_and_se(&logs);
            EnsembleStats {
                t: ens.time_grid[j],
                mean,
                mean_se,
                msd,
                msd_se,
                log_mean,
                log_mean_se,
                log_var,
                log_var_se,
            }
        })
        .collect()
}

/// Normalized histogram of `log(x(t + dt) / x(t))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogReturnHistogram {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
    pub excess_kurtosis: f64,
    /// Large-sample standard error `sqrt(24 / n)` of the kurtosis under normality.
    pub kurtosis_se: f64,
    pub n: usize,
}

impl LogReturnHistogram {
    /// `sum density * width`, one by construction.
    pub fn mass(&self) -> f64 {
        self.density
            .iter()
            .zip(self.edges.windows(2))
            .map(|(d, w)| d * (w[1] - w[0]))
            .sum()
    }
}

pub fn log_return_histogram(ens: &PathEnsemble, t: f64, dt: f64, n_bins: usize) -> Result<LogReturnHistogram> {
    let i0 = ens
        .time_index(t)
        .ok_or_else(|| Error::Sampling(format!("t = {t} is not on the ensemble grid")))?;
    let i1 = ens
        .time_index(t + dt)
        .ok_or_else(|| Error::Sampling(format!("t + dt = {} is not on the ensemble grid", t + dt)))?;
    if n_bins == 0 {
        return Err(Error::Sampling("need at least one bin".into()));
    }
    let r: Vec<f64> = (0..ens.n_paths)
        .map(|i| {
            let p = ens.path(i);
            (p[i1] / p[i0]).ln()
        })
        .collect();
    let n = r.len() as f64;
    let mean = pairwise_sum(&r) / n;
    let m2 = pairwise_sum(&r.iter().map(|x| (x - mean).powi(2)).collect::<Vec<_>>()) / n;
    let m4 = pairwise_sum(&r.iter().map(|x| (x - mean).powi(4)).collect::<Vec<_>>()) / n;
    let excess_kurtosis = if m2 > 0.0 { m4 / (m2 * m2) - 3.0 } else { 0.0 };
    let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let width = (hi - lo) / n_bins as f64;
    let edges: Vec<f64> = (0..=n_bins).map(|b| lo + b as f64 * width).collect();
    let mut counts = vec![0usize; n_bins];
    for x in &r {
        let b = (((x - lo) / width) as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    let density = counts.iter().map(|&c| c as f64 / (n * width)).collect();
    Ok(LogReturnHistogram {
        edges,
        density,
        excess_kurtosis,
        kurtosis_se: (24.0 / n).sqrt(),
        n: r.len(),
    })
}

/// `E[S(t)] = I(t)`, the first moment of the inverse subordinator.
pub fn mean_operational_time(k: &MemoryKernel, t: f64) -> Result<f64> {
    eta_integral(k, t)
}
