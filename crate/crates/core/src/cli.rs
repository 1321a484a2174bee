//! Command-line front end: argument parsing, config merging and output emission.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::calibrate::{
    calibrate, moneyness_profile_with, CalibrationOptions, GridCache, KernelFamily, Objective, OptionChain,
};
use crate::error::Error;
use crate::kernels::MemoryKernel;
use crate::lapinv::{density_grid_with, price_pdf_slice, InversionConfig};
use crate::moments::{analytic_mean, analytic_msd, log_mean, log_variance, periodic_log_return, MarketParams};
use crate::pricing::{gbs_call_mc_with, gbs_price_on_grid, BsMode, Discount, OptionKind, OptionSpec, PricingConfig};
use crate::simulate::{ensemble_stats, simulate_paths};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// A failure with its exit status and module-qualified code.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub exit: i32,
    pub code: String,
    pub msg: String,
}

impl CliError {
    fn usage(msg: impl Into<String>) -> Self {
        CliError {
            exit: EXIT_USAGE,
            code: "cli.usage".into(),
            msg: msg.into(),
        }
    }

    /// Error raised while validating flags: always a usage error.
    fn invalid(e: Error) -> Self {
        CliError {
            exit: EXIT_USAGE,
            code: e.code(),
            msg: e.to_string(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let exit = match e {
            Error::Parse(_) => EXIT_USAGE,
            Error::Io(_) => EXIT_IO,
            _ => EXIT_NUMERIC,
        };
        CliError {
            exit,
            code: e.code(),
            msg: e.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    /// One line: `error[code]: message`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = self.msg.split_whitespace().collect::<Vec<_>>().join(" ");
        write!(f, "error[{}]: {}", self.code, msg)
    }
}

/// Inclusive linear grid `a:b:n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

impl FromStr for Grid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::Parse(format!("grid '{s}' is not a:b:n"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if n == 0 || !a.is_finite() || !b.is_finite() {
            return Err(bad());
        }
        if n == 1 {
            return Ok(Grid(vec![a]));
        }
        let h = (b - a) / (n - 1) as f64;
        Ok(Grid((0..n).map(|i| if i == n - 1 { b } else { a + h * i as f64 }).collect()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Sub,
    Tempered,
    MixGs,
    MixSs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PdfKind {
    /// Operational-time density h(u, t) on its adaptive grid.
    Density,
    /// Price density P(x, t) on --x-grid.
    Price,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Talbot,
    Gs,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Memory kernel: standard | sub:alpha=A | tempered:alpha=A,tau=T |
    /// mix-gs:alpha=A,w1=W | mix-ss:alpha1=A,alpha2=B,w1=W
    #[arg(long)]
    pub kernel: MemoryKernel,
    /// Initial price x0
    #[arg(long)]
    pub spot: f64,
    /// Annualized rate r
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub rate: f64,
    /// Drift mu (defaults to the rate)
    #[arg(long, allow_negative_numbers = true)]
    pub mu: Option<f64>,
    /// Volatility sigma
    #[arg(long)]
    pub sigma: f64,
}

impl ModelArgs {
    fn market(&self) -> Result<MarketParams, CliError> {
        MarketParams::new(self.spot, self.mu.unwrap_or(self.rate), self.sigma, self.rate).map_err(CliError::invalid)
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Output file (written atomically); stdout when absent
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PricingArgs {
    /// Black-Scholes formula being mixed: risk-neutral | drift-form
    #[arg(long, default_value = "risk-neutral")]
    pub mode: BsMode,
    /// Discounting: operational (exp(-r S(T)) inside the mixture) | physical (exp(-r T))
    #[arg(long, default_value = "operational")]
    pub discount: Discount,
}

impl PricingArgs {
    fn config(&self) -> PricingConfig {
        PricingConfig {
            mode: self.mode,
            discount: self.discount,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Parser)]
#[command(
    name = "ggbm",
    version,
    about = "Generalized geometric Brownian motion: moments, densities, simulation, option pricing and calibration",
    after_help = "Every CSV output starts with a header row. Exit codes: 0 success, 2 usage, 3 numeric failure, 4 I/O.\n\
                  GGBM_THREADS caps the number of worker threads."
)]
pub struct Cli {
    /// key=value file merged under the command-line flags (flags win)
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// European option prices.
    ///
    /// CSV columns: strike,maturity,kind,price[,mc_price,mc_se].
    /// Puts use parity under the chosen discounting: operational
    /// P = C - x0 + K E[exp(-r S(T))], physical P = C - exp(-rT)(x0 E[exp(r S(T))] - K).
    Price {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, conflicts_with = "strikes", required_unless_present = "strikes")]
        strike: Option<f64>,
        /// Strike grid a:b:n (inclusive)
        #[arg(long)]
        strikes: Option<Grid>,
        #[arg(long)]
        maturity: f64,
        /// C or P
        #[arg(long, default_value = "C")]
        kind: OptionKind,
        #[command(flatten)]
        pricing: PricingArgs,
        /// Also run the Monte-Carlo oracle with this many draws (calls only)
        #[arg(long)]
        mc_draws: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Fit sigma and alpha to an option chain.
    ///
    /// Writes the calibration result as JSON. --curve-output writes
    /// alpha,sigma_hat,mse; --moneyness-output writes
    /// alpha,sigma_hat,strike,maturity,kind,moneyness,model_price,market_price,abs_error.
    Calibrate {
        /// Chain CSV: quote_date,spot,rate,strike,maturity_years,kind,market_price
        #[arg(long)]
        chain: PathBuf,
        /// Alpha grid a:b:n in (0, 1]
        #[arg(long, default_value = "0.05:1.0:20")]
        alpha_grid: Grid,
        #[arg(long, value_enum, default_value_t = FamilyArg::Sub)]
        kernel_family: FamilyArg,
        /// Tempering time for the tempered family
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        /// Power-law weight for the mixture families
        #[arg(long, default_value_t = 0.5)]
        w1: f64,
        /// Weight grid a:b:n scanned together with alpha (mixture families)
        #[arg(long)]
        w1_grid: Option<Grid>,
        /// Fixed second exponent of the mix-ss family
        #[arg(long, default_value_t = 0.9)]
        alpha2: f64,
        /// sse | vega | relative
        #[arg(long, default_value = "sse")]
        objective: Objective,
        /// Fit puts as well as calls
        #[arg(long)]
        include_puts: bool,
        #[command(flatten)]
        pricing: PricingArgs,
        /// Calibration result JSON; stdout when absent
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long)]
        curve_output: Option<PathBuf>,
        #[arg(long)]
        moneyness_output: Option<PathBuf>,
    },
    /// Monte-Carlo path ensemble.
    ///
    /// Summary CSV columns: t,mean,mean_se,msd,msd_se,log_mean,log_mean_se,log_var,log_var_se.
    /// --paths-output writes one row per path: path,<one column per time>.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        /// Time grid t0:t1:n (inclusive)
        #[arg(long)]
        grid: Grid,
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        paths_output: Option<PathBuf>,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Operational-time or price density.
    ///
    /// CSV columns: abscissa,value.
    Pdf {
        #[arg(long)]
        kernel: MemoryKernel,
        #[arg(long)]
        t: f64,
        #[arg(long, value_enum, default_value_t = PdfKind::Density)]
        what: PdfKind,
        /// Density grid nodes
        #[arg(long, default_value_t = 2001)]
        nodes: usize,
        #[arg(long, value_enum, default_value_t = MethodArg::Talbot)]
        inversion: MethodArg,
        #[arg(long)]
        inversion_nodes: Option<usize>,
        #[arg(long)]
        spot: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        mu: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        /// Price grid a:b:n for --what price
        #[arg(long)]
        x_grid: Option<Grid>,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Analytic moments on a time grid.
    ///
    /// CSV columns: t,mean,msd,log_mean,log_variance,periodic_log_return.
    Moments {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        grid: Grid,
        /// Horizon of the periodic log return
        #[arg(long, default_value_t = 1.0 / 252.0)]
        dt: f64,
        #[command(flatten)]
        out: OutputArgs,
    },
}

/// Validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
}

/// Reads `key = value` lines; `#` starts a comment.
pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError {
        exit: EXIT_IO,
        code: "cli.io".into(),
        msg: format!("config {}: {e}", path.display()),
    })?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("config {} line {}: expected key=value", path.display(), i + 1)))?;
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

fn config_path(argv: &[OsString]) -> Result<Option<PathBuf>, CliError> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it
                .next()
                .map(|p| Some(PathBuf::from(p)))
                .ok_or_else(|| CliError::usage("--config needs a file"));
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Ok(Some(PathBuf::from(p)));
        }
    }
    Ok(None)
}

const SUBCOMMANDS: [&str; 5] = ["price", "calibrate", "simulate", "pdf", "moments"];

/// Inserts config entries after the subcommand for every flag not given on the command line.
fn merge_config(argv: Vec<OsString>, cfg: &BTreeMap<String, String>) -> Vec<OsString> {
    let given = |key: &str| {
        argv.iter().any(|a| {
            let s = a.to_string_lossy();
            s == format!("--{key}") || s.starts_with(&format!("--{key}="))
        })
    };
    let mut extra: Vec<OsString> = Vec::new();
    for (k, v) in cfg {
        if k == "config" || given(k) {
            continue;
        }
        match v.as_str() {
            "true" => extra.push(format!("--{k}").into()),
            "false" => {}
            _ => extra.push(format!("--{k}={v}").into()),
        }
    }
    let pos = argv
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
        .map(|p| p + 1)
        .unwrap_or(argv.len());
    let mut out = argv[..pos].to_vec();
    out.extend(extra);
    out.extend_from_slice(&argv[pos..]);
    out
}

/// Outcome of argument parsing: either a config to run or text to print (help, version).
#[derive(Debug)]
pub enum Parsed {
    Run(Box<RunConfig>),
    Print(String),
}

pub fn parse_args<I, T>(args: I) -> Result<Parsed, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let mut argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    if let Some(p) = config_path(&argv)? {
        let cfg = read_config(&p)?;
        argv = merge_config(argv, &cfg);
    }
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            if !e.use_stderr() {
                return Ok(Parsed::Print(e.to_string()));
            }
            let text = e.to_string();
            let first = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            return Err(CliError::usage(first.to_string()));
        }
    };
    validate(&cli.command)?;
    Ok(Parsed::Run(Box::new(RunConfig { command: cli.command })))
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::usage(format!("--{name} must be positive, got {v}")))
    }
}

fn validate(cmd: &Command) -> Result<(), CliError> {
    match cmd {
        Command::Price {
            model,
            strike,
            strikes,
            maturity,
            mc_draws,
            ..
        } => {
            model.market()?;
            positive("maturity", *maturity)?;
            if let Some(k) = strike {
                positive("strike", *k)?;
            }
            if let Some(g) = strikes {
                for k in &g.0 {
                    positive("strikes", *k)?;
                }
            }
            if let Some(n) = mc_draws {
                if *n < 2 {
                    return Err(CliError::usage("--mc-draws must be at least 2"));
                }
            }
        }
        Command::Calibrate { alpha_grid, w1_grid, .. } => {
            if let Some(a) = alpha_grid.0.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
                return Err(CliError::usage(format!("--alpha-grid value {a} outside (0, 1]")));
            }
            if let Some(w) = w1_grid.as_ref().and_then(|g| g.0.iter().find(|w| !(**w >= 0.0 && **w <= 1.0))) {
                return Err(CliError::usage(format!("--w1-grid value {w} outside [0, 1]")));
            }
        }
        Command::Simulate { model, grid, paths, .. } => {
            model.market()?;
            if *paths == 0 {
                return Err(CliError::usage("--paths must be positive"));
            }
            if grid.0.iter().any(|t| *t < 0.0) || grid.0.windows(2).any(|w| w[1] <= w[0]) {
                return Err(CliError::usage("--grid must be non-negative and strictly increasing"));
            }
        }
        Command::Pdf {
            t,
            what,
            spot,
            sigma,
            x_grid,
            nodes,
            ..
        } => {
            positive("t", *t)?;
            if *nodes < 3 {
                return Err(CliError::usage("--nodes must be at least 3"));
            }
            if *what == PdfKind::Price {
                positive("spot", spot.ok_or_else(|| CliError::usage("--what price needs --spot"))?)?;
                positive("sigma", sigma.ok_or_else(|| CliError::usage("--what price needs --sigma"))?)?;
                let g = x_grid.as_ref().ok_or_else(|| CliError::usage("--what price needs --x-grid"))?;
                if g.0.iter().any(|x| *x <= 0.0) {
                    return Err(CliError::usage("--x-grid must be positive"));
                }
            }
        }
        Command::Moments { model, grid, dt, .. } => {
            model.market()?;
            positive("dt", *dt)?;
            if grid.0.iter().any(|t| *t < 0.0) {
                return Err(CliError::usage("--grid must be non-negative"));
            }
        }
    }
    Ok(())
}

/// Full-precision number formatting for CSV (17 significant digits).
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

fn json_text<T: Serialize>(v: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::from(Error::Io(e.to_string())))?;
    s.push('\n');
    Ok(s)
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::from(Error::Io(format!("{}: {e}", path.display())))
}

/// Writes `content` to `path` through a temporary file and a rename, or to stdout.
pub fn emit(path: Option<&Path>, content: &str) -> Result<(), CliError> {
    match path {
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(content.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::from(Error::from(e)))
        }
        Some(p) => {
            let name = p.file_name().ok_or_else(|| CliError::usage(format!("{} is not a file path", p.display())))?;
            let mut tmp_name = OsString::from(".");
            tmp_name.push(name);
            tmp_name.push(format!(".tmp{}", std::process::id()));
            let tmp = p.with_file_name(tmp_name);
            let res = fs::write(&tmp, content).and_then(|_| fs::rename(&tmp, p));
            if let Err(e) = res {
                let _ = fs::remove_file(&tmp);
                return Err(io_err(p, e));
            }
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct PriceRow {
    strike: f64,
    maturity: f64,
    kind: OptionKind,
    price: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    mc_price: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mc_se: Option<f64>,
}

#[derive(Serialize)]
struct MomentRow {
    t: f64,
    mean: f64,
    msd: f64,
    log_mean: f64,
    log_variance: f64,
    periodic_log_return: f64,
}

#[derive(Serialize)]
struct XY<'a> {
    t: f64,
    abscissa: &'a [f64],
    value: &'a [f64],
}

/// Executes a validated configuration; every output is fully computed before anything is written.
pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    match &cfg.command {
        Command::Price {
            model,
            strike,
            strikes,
            maturity,
            kind,
            pricing,
            mc_draws,
            seed,
            out,
        } => {
            let m = model.market()?;
            let pc = pricing.config();
            let ks: Vec<f64> = match (strike, strikes) {
                (Some(k), _) => vec![*k],
                (None, Some(g)) => g.0.clone(),
                (None, None) => return Err(CliError::usage("one of --strike or --strikes is required")),
            };
            if mc_draws.is_some() && *kind == OptionKind::Put {
                return Err(CliError::usage("--mc-draws prices calls only"));
            }
            let grid = density_grid_with(&model.kernel, *maturity, pc.grid_nodes, &InversionConfig::default())?;
            let mut rows = Vec::with_capacity(ks.len());
            for &k in &ks {
                let spec = OptionSpec::new(k, *maturity, *kind, None)?;
                let price = gbs_price_on_grid(&m, &spec, &grid, &pc)?;
                let mc = match mc_draws {
                    Some(n) => Some(gbs_call_mc_with(&model.kernel, &m, k, *maturity, *n, *seed, &pc)?),
                    None => None,
                };
                rows.push(PriceRow {
                    strike: k,
                    maturity: *maturity,
                    kind: *kind,
                    price,
                    mc_price: mc.map(|v| v.0),
                    mc_se: mc.map(|v| v.1),
                });
            }
            let text = match out.format {
                Format::Json => json_text(&rows)?,
                Format::Csv => {
                    let mut header = vec!["strike", "maturity", "kind", "price"];
                    if mc_draws.is_some() {
                        header.extend(["mc_price", "mc_se"]);
                    }
                    let body: Vec<Vec<String>> = rows
                        .iter()
                        .map(|r| {
                            let mut v = vec![num(r.strike), num(r.maturity), r.kind.to_string(), num(r.price)];
                            if let (Some(p), Some(se)) = (r.mc_price, r.mc_se) {
                                v.extend([num(p), num(se)]);
                            }
                            v
                        })
                        .collect();
                    csv_text(&header, &body)
                }
            };
            emit(out.output.as_deref(), &text)
        }
        Command::Calibrate {
            chain,
            alpha_grid,
            kernel_family,
            tau,
            w1,
            w1_grid,
            alpha2,
            objective,
            include_puts,
            pricing,
            output,
            curve_output,
            moneyness_output,
        } => {
            let chain = OptionChain::from_path(chain).map_err(|e| match e {
                Error::Parse(m) => CliError {
                    exit: EXIT_USAGE,
                    code: "calibrate.chain".into(),
                    msg: m,
                },
                e => e.into(),
            })?;
            let family = match kernel_family {
                FamilyArg::Sub => KernelFamily::Sub,
                FamilyArg::Tempered => KernelFamily::Tempered { tau: *tau },
                FamilyArg::MixGs => KernelFamily::MixGs { w1: *w1 },
                FamilyArg::MixSs => KernelFamily::MixSs {
                    alpha2: *alpha2,
                    w1: *w1,
                },
            };
            let opts = CalibrationOptions {
                objective: *objective,
                include_puts: *include_puts,
                pricing: pricing.config(),
                ..Default::default()
            };
            let res = calibrate(&chain, &family, &alpha_grid.0, w1_grid.as_ref().map(|g| &g.0[..]), &opts)?;
            let json = json_text(&res)?;
            let curve = curve_output.as_ref().map(|_| {
                let rows: Vec<Vec<String>> = res
                    .alpha_grid
                    .iter()
                    .zip(&res.sigma_curve)
                    .zip(&res.mse_curve)
                    .map(|((a, s), m)| vec![num(*a), num(*s), num(*m)])
                    .collect();
                csv_text(&["alpha", "sigma_hat", "mse"], &rows)
            });
            let money = match moneyness_output {
                Some(_) => {
                    let cache = GridCache::new(opts.pricing.grid_nodes);
                    let rows = moneyness_profile_with(&chain, &family, &alpha_grid.0, &opts, &cache)?;
                    let body: Vec<Vec<String>> = rows
                        .iter()
                        .map(|r| {
                            vec![
                                num(r.alpha),
                                num(r.sigma_hat),
                                num(r.strike),
                                num(r.maturity),
                                r.kind.to_string(),
                                r.moneyness.label().to_string(),
                                num(r.model_price),
                                num(r.market_price),
                                num(r.abs_error),
                            ]
                        })
                        .collect();
                    Some(csv_text(
                        &[
                            "alpha",
                            "sigma_hat",
                            "strike",
                            "maturity",
                            "kind",
                            "moneyness",
                            "model_price",
                            "market_price",
                            "abs_error",
                        ],
                        &body,
                    ))
                }
                None => None,
            };
            emit(output.as_deref(), &json)?;
            if let (Some(p), Some(c)) = (curve_output, curve) {
                emit(Some(p), &c)?;
            }
            if let (Some(p), Some(c)) = (moneyness_output, money) {
                emit(Some(p), &c)?;
            }
            Ok(())
        }
        Command::Simulate {
            model,
            grid,
            paths,
            seed,
            paths_output,
            out,
        } => {
            let m = model.market()?;
            let ens = simulate_paths(&model.kernel, &m, &grid.0, *paths, *seed)?;
            let stats = ensemble_stats(&ens);
            let text = match out.format {
                Format::Json => json_text(&stats)?,
                Format::Csv => {
                    let body: Vec<Vec<String>> = stats
                        .iter()
                        .map(|s| {
                            [
                                s.t,
                                s.mean,
                                s.mean_se,
                                s.msd,
                                s.msd_se,
                                s.log_mean,
                                s.log_mean_se,
                                s.log_var,
                                s.log_var_se,
                            ]
                            .iter()
                            .map(|v| num(*v))
                            .collect()
                        })
                        .collect();
                    csv_text(
                        &[
                            "t",
                            "mean",
                            "mean_se",
                            "msd",
                            "msd_se",
                            "log_mean",
                            "log_mean_se",
                            "log_var",
                            "log_var_se",
                        ],
                        &body,
                    )
                }
            };
            let per_path = paths_output.as_ref().map(|_| {
                let mut header: Vec<String> = vec!["path".into()];
                header.extend(ens.time_grid.iter().map(|t| format!("t={}", num(*t))));
                let mut s = header.join(",");
                s.push('\n');
                for i in 0..ens.n_paths {
                    s.push_str(&i.to_string());
                    for v in ens.path(i) {
                        s.push(',');
                        s.push_str(&num(*v));
                    }
                    s.push('\n');
                }
                s
            });
            emit(out.output.as_deref(), &text)?;
            if let (Some(p), Some(c)) = (paths_output, per_path) {
                emit(Some(p), &c)?;
            }
            Ok(())
        }
        Command::Pdf {
            kernel,
            t,
            what,
            nodes,
            inversion,
            inversion_nodes,
            spot,
            mu,
            sigma,
            x_grid,
            out,
        } => {
            let inv = match inversion {
                MethodArg::Talbot => InversionConfig {
                    nodes: inversion_nodes.unwrap_or(InversionConfig::default().nodes),
                    ..Default::default()
                },
                MethodArg::Gs => InversionConfig::gaver_stehfest(inversion_nodes.unwrap_or(16)),
            };
            inv.check().map_err(CliError::invalid)?;
            let (xs, ys) = match what {
                PdfKind::Density => {
                    let g = density_grid_with(kernel, *t, *nodes, &inv)?;
                    (g.u, g.h)
                }
                PdfKind::Price => {
                    let spot = spot.expect("validated");
                    let m = MarketParams::new(spot, mu.unwrap_or(0.0), sigma.expect("validated"), 0.0)
                        .map_err(CliError::invalid)?;
                    let xg = x_grid.as_ref().expect("validated");
                    let s = price_pdf_slice(kernel, &m, *t, &xg.0)?;
                    (s.x, s.p)
                }
            };
            let text = match out.format {
                Format::Json => json_text(&XY {
                    t: *t,
                    abscissa: &xs,
                    value: &ys,
                })?,
                Format::Csv => {
                    let rows: Vec<Vec<String>> = xs.iter().zip(&ys).map(|(x, y)| vec![num(*x), num(*y)]).collect();
                    csv_text(&["abscissa", "value"], &rows)
                }
            };
            emit(out.output.as_deref(), &text)
        }
        Command::Moments { model, grid, dt, out } => {
            let m = model.market()?;
            let k = &model.kernel;
            let rows = grid
                .0
                .iter()
                .map(|&t| {
                    Ok(MomentRow {
                        t,
                        mean: analytic_mean(k, &m, t)?,
                        msd: analytic_msd(k, &m, t)?,
                        log_mean: log_mean(k, &m, t)?,
                        log_variance: log_variance(k, &m, t)?,
                        periodic_log_return: periodic_log_return(k, &m, t, *dt)?,
                    })
                })
                .collect::<Result<Vec<_>, Error>>()?;
            let text = match out.format {
                Format::Json => json_text(&rows)?,
                Format::Csv => {
                    let body: Vec<Vec<String>> = rows
                        .iter()
                        .map(|r| {
                            [r.t, r.mean, r.msd, r.log_mean, r.log_variance, r.periodic_log_return]
                                .iter()
                                .map(|v| num(*v))
                                .collect()
                        })
                        .collect();
                    csv_text(
                        &["t", "mean", "msd", "log_mean", "log_variance", "periodic_log_return"],
                        &body,
                    )
                }
            };
            emit(out.output.as_deref(), &text)
        }
    }
}

/// Applies `GGBM_THREADS` to the global worker pool.
pub fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("GGBM_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::usage(format!("GGBM_THREADS='{v}' is not a positive integer")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(format!("GGBM_THREADS: {e}")))?;
    }
    Ok(())
}

/// Entry point shared by the binary: returns the process exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let res = configure_threads().and_then(|_| parse_args(args)).and_then(|p| match p {
        Parsed::Print(s) => {
            print!("{s}");
            Ok(())
        }
        Parsed::Run(cfg) => run(&cfg),
    });
    match res {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{e}");
            e.exit
        }
    }
}
