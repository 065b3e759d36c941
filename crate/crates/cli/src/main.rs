//! `fmrvol`: prices, bands, averages, verification, simulation and figure
//! data from the command line. Every command writes CSV.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use fmrvol::figures::{self, FigureConfig, FigureSet};
use fmrvol::ou_calculus::scott_closed_form;
use fmrvol::simulator::{self, Policy, SimConfig, ZScheme};
use fmrvol::table::{Cell, Table};
use fmrvol::verification::acceptance::{self, AcceptanceConfig};
use fmrvol::verification::ResidualReport;
use fmrvol::{AverageSet, Error, FieldError, MarketParams, OUVolModel, OuSolutions, Pricer, Side, VolSpec};

#[derive(Parser, Debug)]
#[command(name = "fmrvol", version, about = "Option pricing and hedging under fast mean-reverting volatility with small costs")]
struct Cli {
    /// JSON file with run settings; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory for CSV output.
    #[arg(long, global = true, env = "FMRVOL_OUT_DIR")]
    out_dir: Option<PathBuf>,

    /// Print CSV to stdout instead of writing files.
    #[arg(long, global = true)]
    stdout: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Price and its corrections over an S grid.
    Price {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Hedge centre and no-trade band for both sides over an S grid.
    Band {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Averages against the invariant law, closed form beside quadrature.
    Averages {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Runs the acceptance criteria; exits 1 if any fails.
    Verify {
        /// Vol-of-vol for the criteria (default 0.4).
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        rho: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Paths in the hedged-wealth comparison.
        #[arg(long)]
        sim_paths: Option<usize>,
        /// Run only these criteria, e.g. `1,4,8`.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
    /// Monte Carlo of hedged terminal wealth.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Plot data for the band and price figures; exits 1 if a gate fails.
    Figures {
        #[arg(long, value_enum, default_value_t = SetArg::All)]
        set: SetArg,
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        m: Option<f64>,
        #[arg(long)]
        n_s: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
    },
}

#[derive(Args, Debug, Default)]
struct ModelArgs {
    #[arg(long, allow_hyphen_values = true)]
    r: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    strike: Option<f64>,
    #[arg(long)]
    expiry: Option<f64>,
    /// Target effective volatility; fixes `m` for the Scott model.
    #[arg(long)]
    sigma_bar: Option<f64>,
    /// Vol-of-vol (required).
    #[arg(long)]
    nu: Option<f64>,
    /// OU mean; overrides `sigma_bar`.
    #[arg(long, allow_hyphen_values = true)]
    m: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    rho: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct GridArgs {
    #[arg(long)]
    s_min: Option<f64>,
    #[arg(long)]
    s_max: Option<f64>,
    #[arg(long)]
    n_s: Option<usize>,
    /// Calendar time of evaluation.
    #[arg(long)]
    t: Option<f64>,
    /// Volatility state; defaults to `m`.
    #[arg(long, allow_hyphen_values = true)]
    z: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct SimArgs {
    #[arg(long)]
    n_paths: Option<usize>,
    #[arg(long)]
    n_steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rebalance_every: Option<usize>,
    /// Comma list of `band`, `none`, `bs_delta`, `scaled_band:<kappa>`.
    #[arg(long, value_delimiter = ',')]
    policies: Vec<String>,
    #[arg(long)]
    s0: Option<f64>,
    #[arg(long, value_enum)]
    z_scheme: Option<SchemeArg>,
    #[arg(long)]
    allow_coarse_dt: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SchemeArg {
    Exact,
    Euler,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum SetArg {
    Fig1,
    Fig2,
    Fig3,
    All,
}

/// Contents of `--config`. Field names match the flags.
#[derive(Deserialize, Debug, Default)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    r: Option<f64>,
    alpha: Option<f64>,
    gamma: Option<f64>,
    strike: Option<f64>,
    expiry: Option<f64>,
    sigma_bar: Option<f64>,
    nu: Option<f64>,
    m: Option<f64>,
    rho: Option<f64>,
    epsilon: Option<f64>,
    vol: Option<VolSpec>,
    s_min: Option<f64>,
    s_max: Option<f64>,
    n_s: Option<usize>,
    t: Option<f64>,
    z: Option<f64>,
    out_dir: Option<PathBuf>,
    simulation: Option<SimConfig>,
    figures: Option<FigureConfig>,
    verify: Option<AcceptanceConfig>,
}

/// Failure categories mapped to exit codes.
enum Fail {
    Config(String),
    Check(String),
    Run(String),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) | Error::Domain(_) | Error::DegenerateMeasure => Fail::Config(e.to_string()),
            other => Fail::Run(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Fail {
    fn from(e: std::io::Error) -> Self {
        Fail::Run(format!("io: {e}"))
    }
}

fn config_error(errs: Vec<FieldError>) -> Fail {
    Fail::from(Error::InvalidConfig(errs))
}

struct Resolved {
    market: MarketParams,
    model: OUVolModel,
    epsilon: f64,
}

fn resolve_model(args: &ModelArgs, file: &RunConfig) -> Result<Resolved, Fail> {
    let pick = |flag: Option<f64>, cfg: Option<f64>, default: f64| flag.or(cfg).unwrap_or(default);
    let market = MarketParams::new(
        pick(args.r, file.r, 0.04),
        pick(args.alpha, file.alpha, 0.1),
        pick(args.gamma, file.gamma, 1.0),
        pick(args.strike, file.strike, 100.0),
        pick(args.expiry, file.expiry, 3.0),
    );
    let sigma_bar = pick(args.sigma_bar, file.sigma_bar, 0.165);
    let rho = pick(args.rho, file.rho, 0.0);
    let epsilon = pick(args.epsilon, file.epsilon, 1.0 / 200.0);
    let vol = file.vol.unwrap_or_default();
    let mut errs = Vec::new();
    let nu = args.nu.or(file.nu);
    if nu.is_none() {
        errs.push(FieldError::new("nu", "required: the published parameter sets do not fix it"));
    }
    let m = args.m.or(file.m);
    if m.is_none() && vol != VolSpec::Scott {
        errs.push(FieldError::new("m", "required unless the volatility function is scott"));
    }
    if !(sigma_bar > 0.0) {
        errs.push(FieldError::new("sigma_bar", "must be positive"));
    }
    if !errs.is_empty() {
        return Err(config_error(errs));
    }
    let nu = nu.unwrap_or_default();
    let model = match m {
        Some(m) => OUVolModel::new(m, nu, rho, vol.build()),
        None => OUVolModel::scott_with_sigma_bar(sigma_bar, nu, rho),
    };
    let checked = fmrvol::validate(&market, &model, epsilon)?;
    for w in &checked.warnings {
        eprintln!("warning: {w}");
    }
    Ok(Resolved { market, model, epsilon })
}

fn s_grid(grid: &GridArgs, file: &RunConfig, strike: f64) -> Result<Vec<f64>, Fail> {
    let lo = grid.s_min.or(file.s_min).unwrap_or(0.5 * strike);
    let hi = grid.s_max.or(file.s_max).unwrap_or(2.0 * strike);
    let n = grid.n_s.or(file.n_s).unwrap_or(31);
    let mut errs = Vec::new();
    if !(lo > 0.0) {
        errs.push(FieldError::new("s_min", "must be positive"));
    }
    if !(hi >= lo) {
        errs.push(FieldError::new("s_max", "must be at least s_min"));
    }
    if n < 1 {
        errs.push(FieldError::new("n_s", "must be at least 1"));
    }
    if !errs.is_empty() {
        return Err(config_error(errs));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok(fmrvol::verification::uniform_grid(lo, hi, n))
}

struct Sink {
    dir: PathBuf,
    stdout: bool,
}

impl Sink {
    fn emit(&self, name: &str, csv: &str) -> Result<(), Fail> {
        if self.stdout {
            print!("{csv}");
            return Ok(());
        }
        fs::create_dir_all(&self.dir)?;
        let path = self.dir.join(format!("{name}.csv"));
        fs::write(&path, csv)?;
        println!("wrote {}", path.display());
        Ok(())
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Fail> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Fail::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Fail::Config(format!("{}: {e}", path.display())))
}

fn parse_policy(s: &str) -> Result<Policy, Fail> {
    let bad = || config_error(vec![FieldError::new("policies", format!("unknown policy '{s}'"))]);
    match s.trim() {
        "band" => Ok(Policy::Band),
        "none" => Ok(Policy::None),
        "bs_delta" => Ok(Policy::BsDelta),
        other => {
            let kappa = other.strip_prefix("scaled_band:").ok_or_else(bad)?;
            Ok(Policy::ScaledBand { kappa: kappa.parse().map_err(|_| bad())? })
        }
    }
}

fn price(pricer: &Pricer, eps: f64, s_axis: &[f64], t: f64, z: f64) -> Result<Table, Fail> {
    let mut table = Table::new(&["S", "C_BS", "C3", "C6_z", "C6_tilde", "total"]);
    for &s in s_axis {
        let p = pricer.price(s, t, z, eps)?;
        table.push(vec![s.into(), p.c0.into(), p.c3.into(), p.c6_z.into(), p.c6_tilde.into(), p.total.into()]);
    }
    Ok(table)
}

fn band(pricer: &Pricer, eps: f64, s_axis: &[f64], t: f64, z: f64) -> Result<Table, Fail> {
    let mut table = Table::new(&[
        "S",
        "y_star_plain",
        "lower_plain",
        "upper_plain",
        "y_star_writer",
        "lower_writer",
        "upper_writer",
    ]);
    let h = pricer.hedge();
    for &s in s_axis {
        let mut row: Vec<Cell> = vec![s.into()];
        for side in Side::BOTH {
            let b = h.band(side, s, t, z, eps)?;
            row.extend([b.y_star.into(), b.lower.into(), b.upper.into()]);
        }
        table.push(row);
    }
    Ok(table)
}

fn averages(model: &OUVolModel) -> Result<Table, Fail> {
    let sol = OuSolutions::build(model)?;
    let closed: Option<AverageSet> = model.vol.is_scott().then(|| scott_closed_form(model.m, model.nu));
    let mut table = Table::new(&["name", "closed_form", "quadrature", "rel_diff"]);
    for (i, (name, q)) in sol.averages.entries().enumerate() {
        let (c, d) = match &closed {
            Some(cf) => {
                let c = cf.values()[i];
                let d = if c == q { 0.0 } else { (c - q).abs() / c.abs() };
                (Cell::from(c), Cell::from(d))
            }
            None => (Cell::from(""), Cell::from("")),
        };
        table.push(vec![name.into(), c, q.into(), d]);
    }
    Ok(table)
}

fn residual_csv(reports: &[ResidualReport]) -> String {
    let mut buf = Vec::new();
    buf.extend_from_slice(ResidualReport::CSV_HEADER.as_bytes());
    buf.push(b'\n');
    for r in reports {
        r.write_csv_row(&mut buf).expect("in-memory write");
    }
    String::from_utf8(buf).expect("utf8")
}

fn run(cli: Cli) -> Result<(), Fail> {
    let file = load_config(cli.config.as_deref())?;
    let sink = Sink {
        dir: cli.out_dir.clone().or(file.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out")),
        stdout: cli.stdout,
    };
    match &cli.command {
        Command::Price { model, grid } | Command::Band { model, grid } => {
            let res = resolve_model(model, &file)?;
            let s_axis = s_grid(grid, &file, res.market.strike)?;
            let t = grid.t.or(file.t).unwrap_or(0.0);
            let z = grid.z.or(file.z).unwrap_or(res.model.m);
            let pricer = Pricer::new(res.market, res.model)?;
            if matches!(cli.command, Command::Price { .. }) {
                sink.emit("price", &price(&pricer, res.epsilon, &s_axis, t, z)?.to_csv_string())
            } else {
                sink.emit("band", &band(&pricer, res.epsilon, &s_axis, t, z)?.to_csv_string())
            }
        }
        Command::Averages { model } => {
            let res = resolve_model(model, &file)?;
            sink.emit("averages", &averages(&res.model)?.to_csv_string())
        }
        Command::Verify { nu, rho, seed, sim_paths, only } => {
            let mut cfg = file.verify.clone().unwrap_or_default();
            cfg.nu = nu.or(file.nu).unwrap_or(cfg.nu);
            cfg.rho = rho.unwrap_or(cfg.rho);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.sim_paths = sim_paths.unwrap_or(cfg.sim_paths);
            if !(cfg.nu > 0.0) || cfg.rho == 0.0 || !(cfg.rho.abs() <= 1.0) || cfg.sim_paths < 2 {
                return Err(config_error(vec![FieldError::new(
                    "verify",
                    "needs nu > 0, 0 < |rho| <= 1 and at least 2 simulated paths",
                )]));
            }
            let ids: Vec<u8> = if only.is_empty() { (1..=10).collect() } else { only.clone() };
            let mut table = Table::new(&["id", "name", "passed", "elapsed_s", "budget_s", "detail"]);
            let mut failed = 0;
            for id in ids {
                let o = acceptance::run_criterion(id, &cfg);
                eprintln!("{o}");
                failed += !o.passed as usize;
                table.push(vec![
                    o.id.to_string().into(),
                    o.name.as_str().into(),
                    if o.passed { "true" } else { "false" }.into(),
                    o.elapsed_s.into(),
                    o.budget_s.into(),
                    o.detail.into(),
                ]);
            }
            sink.emit("verify", &table.to_csv_string())?;
            let reports = acceptance::residual_reports(&cfg)?;
            for r in &reports {
                eprintln!("{r}");
            }
            failed += reports.iter().filter(|r| r.flagged).count();
            sink.emit("residuals", &residual_csv(&reports))?;
            if failed > 0 {
                return Err(Fail::Check(format!("{failed} check(s) failed")));
            }
            Ok(())
        }
        Command::Simulate { model, sim } => {
            let res = resolve_model(model, &file)?;
            let mut cfg = file.simulation.clone().unwrap_or_default();
            cfg.epsilon = res.epsilon;
            cfg.n_paths = sim.n_paths.unwrap_or(cfg.n_paths);
            cfg.n_steps = sim.n_steps.unwrap_or(cfg.n_steps);
            cfg.seed = sim.seed.unwrap_or(cfg.seed);
            cfg.rebalance_every = sim.rebalance_every.unwrap_or(cfg.rebalance_every);
            cfg.s0 = sim.s0.unwrap_or(cfg.s0);
            cfg.allow_coarse_dt |= sim.allow_coarse_dt;
            if let Some(z) = model_z(&file) {
                cfg.z0 = Some(z);
            }
            if let Some(s) = sim.z_scheme {
                cfg.z_scheme = match s {
                    SchemeArg::Exact => ZScheme::Exact,
                    SchemeArg::Euler => ZScheme::Euler,
                };
            }
            if !sim.policies.is_empty() {
                cfg.policies = sim.policies.iter().map(|p| parse_policy(p)).collect::<Result<_, _>>()?;
            }
            let pricer = Pricer::new(res.market, res.model)?;
            let started = Instant::now();
            let out = simulator::run(&cfg, &pricer)?;
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            eprintln!("simulated {} paths in {:.2} s", out.n_paths, started.elapsed().as_secs_f64());
            sink.emit("simulate", &out.table().to_csv_string())
        }
        Command::Figures { set, nu, m, n_s, epsilon } => {
            let mut cfg = file.figures.clone().unwrap_or_default();
            match nu.or(file.nu) {
                Some(v) => cfg.nu = v,
                None if file.figures.is_some() => {}
                None => {
                    return Err(config_error(vec![FieldError::new(
                        "nu",
                        "required: the published parameter sets do not fix it",
                    )]))
                }
            }
            cfg.m = m.or(file.m).or(cfg.m);
            cfg.n_s = n_s.unwrap_or(cfg.n_s);
            cfg.epsilon = epsilon.or(file.epsilon).unwrap_or(cfg.epsilon);
            if !(cfg.nu > 0.0) || !(cfg.epsilon >= 0.0) {
                return Err(config_error(vec![FieldError::new("figures", "needs nu > 0 and epsilon >= 0")]));
            }
            let sets: Vec<FigureSet> = match set {
                SetArg::Fig1 => vec![FigureSet::Fig1],
                SetArg::Fig2 => vec![FigureSet::Fig2],
                SetArg::Fig3 => vec![FigureSet::Fig3],
                SetArg::All => FigureSet::ALL.to_vec(),
            };
            let mut figs = Vec::new();
            for s in sets {
                figs.extend(figures::generate(s, &cfg)?);
            }
            for f in &figs {
                sink.emit(&f.name, &f.table.to_csv_string())?;
            }
            let gates = figures::gates(&figs, &cfg);
            let mut failed = 0;
            for g in &gates {
                eprintln!("[{}] {}: {}", if g.passed { "PASS" } else { "FAIL" }, g.figure, g.detail);
                failed += !g.passed as usize;
            }
            if failed > 0 {
                return Err(Fail::Check(format!("{failed} figure gate(s) failed")));
            }
            Ok(())
        }
    }
}

fn model_z(file: &RunConfig) -> Option<f64> {
    file.simulation.as_ref().and_then(|s| s.z0).or(file.z)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Fail::Check(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(1)
        }
        Err(Fail::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
