use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use unisplit::model::ProblemSpec;
use unisplit::pipeline::{self, RunConfig};
use unisplit::process::RngStream;
use unisplit::scenario::{self, DbConvention, Row, Scenario};
use unisplit::sched::{build_schedule, LevelMethod, DEFAULT_PILOT_LEVELS, DEFAULT_PILOT_SAMPLES};
use unisplit::stats::{oracle_with_family, EstimateReport, Method};

/// Rare-event probabilities P[S(X) <= gamma] by multilevel splitting.
#[derive(Parser)]
#[command(name = "unisplit", version, about)]
struct Cli {
    /// Worker threads for replications (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate one probability and write a report.
    Run(RunArgs),
    /// Print the level schedule for a problem.
    Levels(LevelsArgs),
    /// Rerun every row of a built-in table and write CSV.
    Reproduce(ReproduceArgs),
    /// Compare an estimate against an exact oracle.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct Source {
    /// Scenario JSON file.
    #[arg(long, conflicts_with = "table", required_unless_present = "table")]
    scenario: Option<PathBuf>,
    /// Built-in table preset (I to VI).
    #[arg(long)]
    table: Option<String>,
    /// Override the threshold.
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<f64>,
    /// Decibel convention for log-normal parameters given in dB.
    #[arg(long, value_enum)]
    db_convention: Option<DbArg>,
}

#[derive(Args)]
struct Tuning {
    /// Samples per level.
    #[arg(long)]
    s: Option<usize>,
    /// Replications (split) or samples (naive, is).
    #[arg(long)]
    m: Option<usize>,
    /// Target survival per level.
    #[arg(long)]
    pbar: Option<f64>,
    #[arg(long, value_enum)]
    levels_method: Option<LevelsArg>,
    #[arg(long)]
    pilot_levels: Option<usize>,
    #[arg(long)]
    pilot_samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    tuning: Tuning,
    #[arg(long, value_enum, default_value_t = MethodArg::Split)]
    method: MethodArg,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Include wall-clock fields in the report (makes output run-dependent).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct LevelsArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    tuning: Tuning,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args)]
struct ReproduceArgs {
    /// Table id, I to VI.
    #[arg(long)]
    table: String,
    #[arg(long, value_enum)]
    db_convention: Option<DbArg>,
    #[command(flatten)]
    tuning: Tuning,
    /// Samples for naive Monte Carlo.
    #[arg(long)]
    naive_m: Option<usize>,
    /// Samples for importance sampling.
    #[arg(long)]
    is_m: Option<usize>,
    /// Estimators to run (default: those listed in the preset).
    #[arg(long, value_enum, value_delimiter = ',')]
    methods: Vec<MethodArg>,
    /// Only the rows with these thresholds.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    gammas: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    tuning: Tuning,
    #[arg(long, value_enum, default_value_t = MethodArg::Split)]
    method: MethodArg,
    /// Allowed deviation in standard errors.
    #[arg(long, default_value_t = 3.0)]
    sigmas: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Split,
    Naive,
    Is,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Split => Method::Split,
            MethodArg::Naive => Method::Naive,
            MethodArg::Is => Method::Is,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelsArg {
    /// Product lower bound.
    Lb,
    /// Pilot run and inverse CCDF interpolation.
    Iccdf,
}

#[derive(Clone, Copy, ValueEnum)]
enum DbArg {
    Power10,
    Amplitude20,
}

impl From<DbArg> for DbConvention {
    fn from(d: DbArg) -> Self {
        match d {
            DbArg::Power10 => DbConvention::Power10,
            DbArg::Amplitude20 => DbConvention::Amplitude20,
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<unisplit::Error> for Failure {
    fn from(e: unisplit::Error) -> Self {
        Failure { code: if e.is_config() { 2 } else { 3 }, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: 3, message: e.to_string() }
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure { code: 3, message: e.to_string() }
    }
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Levels(a) => cmd_levels(a),
        Command::Reproduce(a) => cmd_reproduce(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load(source: &Source) -> CliResult<(Scenario, ProblemSpec)> {
    let conv = source.db_convention.map(DbConvention::from);
    let sc = match (&source.scenario, &source.table) {
        (Some(path), _) => scenario::load_scenario(path, conv).map_err(|e| match e {
            unisplit::Error::Io(io) => config_error(format!("{}: {io}", path.display())),
            other => other.into(),
        })?,
        (None, Some(id)) => scenario::preset_with(id, conv)?,
        (None, None) => return Err(config_error("either --scenario or --table is required")),
    };
    let problem = match source.gamma {
        Some(g) => sc.problem.with_gamma(g)?,
        None => sc.problem.clone(),
    };
    Ok((sc, problem))
}

fn config_for(sc: &Scenario, problem: &ProblemSpec, method: Method, t: &Tuning) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::from_settings(problem, &sc.settings, method);
    if let Some(s) = t.s {
        cfg.s = s;
    }
    if let Some(m) = t.m {
        cfg.m = m;
    }
    if let Some(p) = t.pbar {
        cfg.p_bar = p;
    }
    if let Some(seed) = t.seed {
        cfg.seed = seed;
    }
    let (levels, pilot_levels, pilot_samples) = match &cfg.levels {
        LevelMethod::InverseCcdf { pilot_levels, pilot_samples } => {
            (Some(LevelsArg::Iccdf), *pilot_levels, *pilot_samples)
        }
        LevelMethod::LowerBound => (Some(LevelsArg::Lb), DEFAULT_PILOT_LEVELS, DEFAULT_PILOT_SAMPLES),
        LevelMethod::Fixed { .. } => (None, DEFAULT_PILOT_LEVELS, DEFAULT_PILOT_SAMPLES),
    };
    let pilot_levels = t.pilot_levels.unwrap_or(pilot_levels);
    let pilot_samples = t.pilot_samples.unwrap_or(pilot_samples);
    cfg.levels = match t.levels_method.or(levels) {
        Some(LevelsArg::Lb) => LevelMethod::LowerBound,
        Some(LevelsArg::Iccdf) => LevelMethod::InverseCcdf { pilot_levels, pilot_samples },
        None => cfg.levels,
    };
    if !(cfg.p_bar > 0.0 && cfg.p_bar < 1.0) {
        return Err(config_error(format!("--pbar must lie in (0, 1), got {}", cfg.p_bar)));
    }
    Ok(cfg)
}

fn sink(out: &Option<PathBuf>) -> CliResult<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(std::fs::File::create(p).map_err(|e| config_error(format!("{}: {e}", p.display())))?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4e}"))
}

fn summary(r: &EstimateReport) -> String {
    format!(
        "{} gamma={} mean={:.4e} re={} wall={}s wnrv={}",
        r.method.as_str(),
        r.gamma,
        r.mean,
        r.re.map_or_else(|| "-".into(), |x| format!("{:.2}%", 100.0 * x)),
        r.wall_seconds.map_or_else(|| "-".into(), |x| format!("{x:.3}")),
        fmt_opt(r.wnrv),
    )
}

struct CsvRow<'a> {
    gamma: f64,
    method: &'a str,
    mean: Option<f64>,
    re_percent: Option<f64>,
    wnrv: Option<f64>,
    wall_seconds: Option<f64>,
    seed: Option<u64>,
    paper_reference_label: Option<&'a str>,
    paper_reference_mean: Option<f64>,
    paper_reference_re_percent: Option<f64>,
    paper_reference_wnrv: Option<f64>,
}

impl<'a> CsvRow<'a> {
    fn from_report(r: &'a EstimateReport, row: Option<&'a Row>) -> Self {
        let reference = row.and_then(|row| row.reference(r.method.as_str()));
        CsvRow {
            gamma: r.gamma,
            method: r.method.as_str(),
            mean: Some(r.mean),
            re_percent: r.re.map(|x| 100.0 * x),
            wnrv: r.wnrv,
            wall_seconds: r.wall_seconds,
            seed: Some(r.seed),
            paper_reference_label: reference.map(|x| x.label.as_str()),
            paper_reference_mean: reference.map(|x| x.mean),
            paper_reference_re_percent: reference.and_then(|x| x.re_percent),
            paper_reference_wnrv: reference.and_then(|x| x.wnrv),
        }
    }

    fn reference_only(row: &'a Row, label: &'a str) -> Option<Self> {
        let x = row.reference(label)?;
        Some(CsvRow {
            gamma: row.gamma,
            method: "reference",
            mean: None,
            re_percent: None,
            wnrv: None,
            wall_seconds: None,
            seed: None,
            paper_reference_label: Some(&x.label),
            paper_reference_mean: Some(x.mean),
            paper_reference_re_percent: x.re_percent,
            paper_reference_wnrv: x.wnrv,
        })
    }
}

fn finish(report: EstimateReport, timing: bool) -> EstimateReport {
    eprintln!("{}", summary(&report));
    if timing {
        report
    } else {
        report.without_timing()
    }
}

fn cmd_run(a: RunArgs) -> CliResult<u8> {
    let (sc, problem) = load(&a.source)?;
    let cfg = config_for(&sc, &problem, a.method.into(), &a.tuning)?;
    let report = finish(pipeline::run(&problem, &cfg)?, a.timing);
    let mut out = sink(&a.out)?;
    match a.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, &report).map_err(std::io::Error::from)?;
            writeln!(out)?;
        }
        Format::Csv => {
            let row = sc.rows.iter().find(|r| r.gamma == report.gamma);
            let mut w = csv::Writer::from_writer(out);
            write_header(&mut w)?;
            w.write_record(csv_fields(&CsvRow::from_report(&report, row)))?;
            w.flush()?;
        }
    }
    Ok(0)
}

#[derive(Serialize)]
struct LevelsOut {
    gamma: f64,
    p_bar: f64,
    times: Vec<f64>,
    targets: Vec<f64>,
}

fn cmd_levels(a: LevelsArgs) -> CliResult<u8> {
    let (sc, problem) = load(&a.source)?;
    let cfg = config_for(&sc, &problem, Method::Split, &a.tuning)?;
    let mut rng = RngStream::new(cfg.seed).substream(u64::MAX);
    let schedule = build_schedule(&problem, &cfg.levels, cfg.p_bar, &mut rng)?;
    let times = schedule.times().to_vec();
    let targets = (1..=times.len()).map(|i| cfg.p_bar.powi(i as i32)).collect();
    let lv = LevelsOut { gamma: problem.gamma(), p_bar: cfg.p_bar, times, targets };
    let mut out = sink(&a.out)?;
    match a.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, &lv).map_err(std::io::Error::from)?;
            writeln!(out)?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["level", "time", "target"])?;
            for (i, (t, p)) in lv.times.iter().zip(&lv.targets).enumerate() {
                w.write_record([(i + 1).to_string(), t.to_string(), p.to_string()])?;
            }
            w.flush()?;
        }
    }
    Ok(0)
}

fn cmd_reproduce(a: ReproduceArgs) -> CliResult<u8> {
    let sc = scenario::preset_with(&a.table, a.db_convention.map(DbConvention::from))?;
    let methods: Vec<Method> = if a.methods.is_empty() {
        if sc.settings.methods.is_empty() {
            vec![Method::Split]
        } else {
            sc.settings.methods.clone()
        }
    } else {
        a.methods.iter().map(|&m| m.into()).collect()
    };
    let mut w = csv::Writer::from_writer(sink(&a.out)?);
    write_header(&mut w)?;
    let mut wrote = 0;
    for (row, problem) in sc.row_problems()? {
        let row = row.expect("presets have rows");
        if !a.gammas.is_empty() && !a.gammas.contains(&row.gamma) {
            continue;
        }
        for &method in &methods {
            let mut cfg = config_for(&sc, &problem, method, &a.tuning)?;
            match method {
                Method::Naive => cfg.m = a.naive_m.or(sc.settings.naive_m).unwrap_or(cfg.m),
                Method::Is => cfg.m = a.is_m.or(sc.settings.is_m).unwrap_or(cfg.m),
                Method::Split => {}
            }
            let report = finish(pipeline::run(&problem, &cfg)?, a.timing);
            let mut rec = CsvRow::from_report(&report, Some(row));
            if !a.timing {
                rec.wnrv = None;
                rec.wall_seconds = None;
            }
            w.write_record(csv_fields(&rec))?;
            wrote += 1;
        }
        for r in &row.reference {
            if methods.iter().any(|m| m.as_str() == r.label) {
                continue;
            }
            if let Some(rec) = CsvRow::reference_only(row, &r.label) {
                w.write_record(csv_fields(&rec))?;
            }
        }
    }
    w.flush()?;
    if wrote == 0 {
        return Err(config_error("no table row matches --gammas"));
    }
    Ok(0)
}

const CSV_HEADER: [&str; 11] = [
    "gamma",
    "method",
    "mean",
    "re_percent",
    "wnrv",
    "wall_seconds",
    "seed",
    "paper_reference_label",
    "paper_reference_mean",
    "paper_reference_re_percent",
    "paper_reference_wnrv",
];

fn write_header<W: Write>(w: &mut csv::Writer<W>) -> CliResult<()> {
    Ok(w.write_record(CSV_HEADER)?)
}

fn csv_fields(r: &CsvRow) -> Vec<String> {
    let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    vec![
        r.gamma.to_string(),
        r.method.to_string(),
        f(r.mean),
        f(r.re_percent),
        f(r.wnrv),
        f(r.wall_seconds),
        r.seed.map(|s| s.to_string()).unwrap_or_default(),
        r.paper_reference_label.unwrap_or_default().to_string(),
        f(r.paper_reference_mean),
        f(r.paper_reference_re_percent),
        f(r.paper_reference_wnrv),
    ]
}

#[derive(Serialize)]
struct VerifyOut {
    oracle: String,
    exact: f64,
    report: EstimateReport,
    /// `(mean - exact) / standard error`.
    z: Option<f64>,
    agrees: bool,
}

fn cmd_verify(a: VerifyArgs) -> CliResult<u8> {
    let (sc, problem) = load(&a.source)?;
    let (exact, family) = oracle_with_family(&problem)?;
    let cfg = config_for(&sc, &problem, a.method.into(), &a.tuning)?;
    let report = finish(pipeline::run(&problem, &cfg)?, false);
    let se = report.std_error();
    let z = (se > 0.0).then(|| (report.mean - exact) / se);
    let agrees = match z {
        Some(z) => z.abs() <= a.sigmas,
        None => report.mean == exact,
    };
    let out = VerifyOut { oracle: format!("{family:?}"), exact, report, z, agrees };
    println!("{}", serde_json::to_string_pretty(&out).map_err(std::io::Error::from)?);
    Ok(if agrees { 0 } else { 1 })
}
