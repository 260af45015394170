mod document;
mod input;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use crt_logit::baselines::ResamplingConfig;
use crt_logit::inference::{InferenceConfig, LambdaStrategy};
use crt_logit::multiple_testing::{score_selection, select, GroundTruth, Procedure};
use crt_logit::simulation::{
    run_fdr_power_sweep, run_lambda_heatmap, run_qq_experiment, run_runtime_bench, ExperimentOptions, Method,
    NullIndexRule, Replicate, SimulationConfig, SupportPlacement, SweepParam,
};
use crt_logit::solvers::SolverOptions;

use document::{fmt_f64, ResultDocument};
use input::InputError;

#[derive(Debug, Parser)]
#[command(
    name = "crt-logit",
    version,
    about = "Conditional randomization tests for sparse logistic regression"
)]
struct Cli {
    /// Worker threads (default: all available cores).
    #[arg(long, global = true, env = "CRT_LOGIT_THREADS")]
    threads: Option<usize>,

    /// File of `key = value` lines supplying flags; explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Test every variable of a data set and select at a target FDR.
    Infer(InferCmd),
    /// Write one synthetic data set as CSV.
    Simulate(SimulateCmd),
    /// Null-statistic QQ experiment.
    Qq(QqCmd),
    /// FDR and power while one simulation parameter varies.
    Sweep(SweepCmd),
    /// CRT-logit FDR and power over x-distillation penalties.
    LambdaHeatmap(HeatmapCmd),
    /// Wall-clock comparison of methods.
    Bench(BenchCmd),
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long, default_value_t = 400)]
    n: usize,
    #[arg(long, default_value_t = 600)]
    p: usize,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    #[arg(long, default_value_t = 2.0)]
    snr: f64,
    /// Fraction of nonzero coefficients.
    #[arg(long, alias = "kappa", default_value_t = 0.04)]
    sparsity: f64,
    #[arg(long, default_value_t = 2.0)]
    magnitude: f64,
    /// `random` or `fixed` (equispaced).
    #[arg(long)]
    support: Option<SupportPlacement>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SimArgs {
    fn config(&self, default_support: SupportPlacement) -> SimulationConfig {
        SimulationConfig {
            n: self.n,
            p: self.p,
            rho: self.rho,
            snr: self.snr,
            sparsity: self.sparsity,
            signal_magnitude: self.magnitude,
            seed: self.seed,
            support_placement: self.support.unwrap_or(default_support),
        }
    }
}

#[derive(Debug, Args)]
struct InferenceArgs {
    /// Penalty of the full fit: `cv`, `universal` or a number.
    #[arg(long, default_value = "cv")]
    lambda: LambdaStrategy,
    /// Penalty of the x-distillations: `cv`, `universal` or a number.
    #[arg(long, default_value = "cv")]
    lambda_dx: LambdaStrategy,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// dCRT: cross-validate each leave-one-out logistic fit.
    #[arg(long)]
    y_distillation_cv: bool,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
}

impl InferenceArgs {
    fn config(&self) -> InferenceConfig {
        InferenceConfig {
            lambda: self.lambda,
            lambda_dx: self.lambda_dx,
            screening: true,
            n_folds: self.folds,
            y_distillation_cv: self.y_distillation_cv,
            solver: SolverOptions {
                tol: self.tol,
                max_iter: self.max_iter,
            },
        }
    }

    fn echo(&self, map: &mut BTreeMap<String, String>) {
        map.insert("lambda".into(), self.lambda.to_string());
        map.insert("lambda_dx".into(), self.lambda_dx.to_string());
        map.insert("folds".into(), self.folds.to_string());
        map.insert("y_distillation_cv".into(), self.y_distillation_cv.to_string());
        map.insert("tol".into(), self.tol.to_string());
        map.insert("max_iter".into(), self.max_iter.to_string());
    }
}

#[derive(Debug, Args)]
struct SelectionArgs {
    /// `bh` or `by`.
    #[arg(long, default_value = "bh")]
    fdr_procedure: Procedure,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct InferCmd {
    /// Design matrix CSV (rows = samples).
    #[arg(long)]
    x: PathBuf,
    /// Response CSV: one column of 0/1.
    #[arg(long)]
    y: PathBuf,
    /// Both CSV files start with a header row.
    #[arg(long)]
    header: bool,
    /// `crt-logit`, `dcrt`, `crt[:B]` or `hrt[:B]`.
    #[arg(long, default_value = "crt-logit")]
    method: Method,
    /// Resample count for `crt` and `hrt` (overrides `:B`).
    #[arg(long)]
    resamples: Option<usize>,
    /// Test every variable instead of the fitted support only.
    #[arg(long)]
    no_screening: bool,
    /// Share of each class held out for testing by HRT.
    #[arg(long, default_value_t = 0.5)]
    holdout_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// True support (0-based indices) for FDP and power.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// JSON output; a CSV with the same stem is written beside it. Without
    /// it the JSON goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    inference: InferenceArgs,
    #[command(flatten)]
    selection: SelectionArgs,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct SimulateCmd {
    #[command(flatten)]
    sim: SimArgs,
    /// Replicate index; its seed is `seed + replicate`.
    #[arg(long, default_value_t = 0)]
    replicate: u64,
    /// Output directory for `x.csv`, `y.csv`, `beta0.csv` and `truth.txt`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct QqCmd {
    #[command(flatten)]
    sim: SimArgs,
    /// Comma-separated: `crt-logit`, `dcrt`.
    #[arg(long, alias = "method", default_value = "crt-logit,dcrt")]
    methods: String,
    #[arg(long, default_value_t = 500)]
    replicates: usize,
    /// `first-null` or a variable index.
    #[arg(long, default_value = "first-null")]
    null_index: NullIndexRule,
    #[command(flatten)]
    inference: InferenceArgs,
    /// Per-replicate CSV; the summary goes to `<stem>_summary.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct SweepCmd {
    #[command(flatten)]
    sim: SimArgs,
    /// `n`, `p`, `rho`, `snr` or `sparsity`.
    #[arg(long)]
    vary: SweepParam,
    /// Comma-separated values of the varied parameter.
    #[arg(long)]
    values: String,
    #[arg(long, alias = "method", default_value = "crt-logit,dcrt")]
    methods: String,
    #[arg(long, default_value_t = 30)]
    replicates: usize,
    #[command(flatten)]
    inference: InferenceArgs,
    #[command(flatten)]
    selection: SelectionArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct HeatmapCmd {
    #[command(flatten)]
    sim: SimArgs,
    /// Comma-separated sample sizes (default: `--n`).
    #[arg(long)]
    n_values: Option<String>,
    /// Comma-separated multiples of `sqrt(log p / n)`.
    #[arg(long, default_value = "0.01,0.03,0.1,0.3,1,3,10")]
    multipliers: String,
    #[arg(long, default_value_t = 10)]
    replicates: usize,
    #[command(flatten)]
    inference: InferenceArgs,
    #[command(flatten)]
    selection: SelectionArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct BenchCmd {
    #[command(flatten)]
    sim: SimArgs,
    #[arg(
        long,
        alias = "method",
        default_value = "crt-logit,crt-logit-noscreen,dcrt,hrt:500,crt:500"
    )]
    methods: String,
    #[arg(long, default_value_t = 1)]
    replicates: usize,
    #[command(flatten)]
    inference: InferenceArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Input(InputError),
    Core(crt_logit::Error),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use crt_logit::Error as E;
        match self {
            CliError::Input(InputError::Malformed(_)) => 2,
            CliError::Input(InputError::DimensionMismatch(_)) => 3,
            CliError::Core(E::InvalidInput(_) | E::IndexOutOfRange { .. } | E::SplitError(_)) => 2,
            CliError::Core(_) | CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(e) => e.fmt(f),
            CliError::Core(e) => e.fmt(f),
            CliError::Io(e) => f.write_str(e),
        }
    }
}

impl From<InputError> for CliError {
    fn from(e: InputError) -> Self {
        CliError::Input(e)
    }
}

impl From<crt_logit::Error> for CliError {
    fn from(e: crt_logit::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Input(InputError::Malformed(msg.into()))
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| invalid(format!("bad {what} '{t}'"))))
        .collect()
}

/// `dir/name.ext` -> `dir/name_summary.ext`.
fn summary_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_summary.{}", ext.to_string_lossy()),
        None => format!("{stem}_summary"),
    };
    path.with_file_name(name)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn run_infer(cmd: &InferCmd) -> Result<(), CliError> {
    let data = input::read_dataset(&cmd.x, &cmd.y, cmd.header)?;
    let mut method = cmd.method;
    match (&mut method, cmd.resamples) {
        (Method::VanillaCrt { resamples } | Method::Hrt { resamples }, Some(b)) => {
            if b == 0 {
                return Err(invalid("--resamples must be positive"));
            }
            *resamples = b;
        }
        (_, Some(_)) => return Err(invalid("--resamples only applies to crt and hrt")),
        _ => {}
    }
    if cmd.no_screening {
        match &mut method {
            Method::CrtLogit { screening } | Method::Dcrt { screening } => *screening = false,
            _ => return Err(invalid("--no-screening only applies to crt-logit and dcrt")),
        }
    }
    let config = cmd.inference.config();
    let output = match method {
        Method::Hrt { resamples } => crt_logit::baselines::hrt(
            &data,
            &ResamplingConfig {
                n_resamples: resamples,
                seed: cmd.seed,
                holdout_fraction: cmd.holdout_fraction,
            },
            &config,
        )?,
        m => m.run(&data, &config, cmd.seed)?,
    };
    let report = select(&output.p_values(), cmd.selection.alpha, cmd.selection.fdr_procedure)?;
    let score = match &cmd.truth {
        Some(path) => {
            let truth = GroundTruth::new(input::read_truth(path, data.p())?, data.p())?;
            Some(score_selection(&report, &truth))
        }
        None => None,
    };

    let mut echo = BTreeMap::new();
    echo.insert("method".into(), method.name());
    echo.insert("seed".into(), cmd.seed.to_string());
    echo.insert("header".into(), cmd.header.to_string());
    echo.insert("fdr_procedure".into(), cmd.selection.fdr_procedure.name().to_string());
    echo.insert("alpha".into(), cmd.selection.alpha.to_string());
    if matches!(method, Method::Hrt { .. }) {
        echo.insert("holdout_fraction".into(), cmd.holdout_fraction.to_string());
    }
    cmd.inference.echo(&mut echo);
    let doc = ResultDocument::new(
        method.name(),
        echo,
        data.n(),
        output.model.lambda,
        &output.results,
        &report,
        score,
    );

    let json = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Io(e.to_string()))?;
    match &cmd.out {
        Some(path) => {
            let mut w = create(path)?;
            writeln!(w, "{json}")?;
            w.flush()?;
            let csv_path = path.with_extension("csv");
            doc.write_csv(create(&csv_path)?)
                .map_err(|e| CliError::Io(e.to_string()))?;
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn run_simulate(cmd: &SimulateCmd) -> Result<(), CliError> {
    let config = cmd.sim.config(SupportPlacement::Random);
    let rep = Replicate::generate(&config, cmd.replicate)?;
    fs::create_dir_all(&cmd.out)?;

    let mut w = csv::Writer::from_writer(create(&cmd.out.join("x.csv"))?);
    for row in rep.data.x().view().rows() {
        w.write_record(row.iter().map(|&v| fmt_f64(v)))
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush()?;
    let mut w = create(&cmd.out.join("y.csv"))?;
    for &v in rep.data.y() {
        writeln!(w, "{}", v as u8)?;
    }
    w.flush()?;
    let mut w = create(&cmd.out.join("beta0.csv"))?;
    for &b in &rep.beta0 {
        writeln!(w, "{}", fmt_f64(b))?;
    }
    w.flush()?;
    let mut w = create(&cmd.out.join("truth.txt"))?;
    writeln!(w, "# seed = {}, sigma = {}", rep.seed, fmt_f64(rep.sigma))?;
    for j in rep.support.support() {
        writeln!(w, "{j}")?;
    }
    w.flush()?;
    Ok(())
}

fn methods(list: &str) -> Result<Vec<Method>, CliError> {
    let m = Method::parse_list(list)?;
    if m.is_empty() {
        return Err(invalid("no methods given"));
    }
    Ok(m)
}

fn experiment_options(inference: &InferenceArgs, selection: Option<&SelectionArgs>) -> ExperimentOptions {
    let mut opts = ExperimentOptions {
        inference: inference.config(),
        ..Default::default()
    };
    if let Some(s) = selection {
        opts.alpha = s.alpha;
        opts.procedure = s.fdr_procedure;
    }
    opts
}

fn run_qq(cmd: &QqCmd) -> Result<(), CliError> {
    let config = cmd.sim.config(SupportPlacement::FixedEquispaced);
    let table = run_qq_experiment(
        &config,
        &methods(&cmd.methods)?,
        cmd.replicates,
        cmd.null_index,
        &cmd.inference.config(),
    )?;
    table.write_csv(create(&cmd.out)?)?;
    table.write_summary_csv(create(&summary_path(&cmd.out))?)?;
    Ok(())
}

fn run_sweep(cmd: &SweepCmd) -> Result<(), CliError> {
    let values: Vec<f64> = parse_list(&cmd.values, "value")?;
    let table = run_fdr_power_sweep(
        &cmd.sim.config(SupportPlacement::Random),
        cmd.vary,
        &values,
        &methods(&cmd.methods)?,
        &experiment_options(&cmd.inference, Some(&cmd.selection)),
        cmd.replicates,
    )?;
    table.write_csv(create(&cmd.out)?)?;
    table.write_summary_csv(create(&summary_path(&cmd.out))?)?;
    Ok(())
}

fn run_heatmap(cmd: &HeatmapCmd) -> Result<(), CliError> {
    let n_values: Vec<usize> = match &cmd.n_values {
        Some(s) => parse_list(s, "sample size")?,
        None => vec![cmd.sim.n],
    };
    let multipliers: Vec<f64> = parse_list(&cmd.multipliers, "multiplier")?;
    let table = run_lambda_heatmap(
        &cmd.sim.config(SupportPlacement::Random),
        &n_values,
        &multipliers,
        &experiment_options(&cmd.inference, Some(&cmd.selection)),
        cmd.replicates,
    )?;
    table.write_csv(create(&cmd.out)?)?;
    table.write_summary_csv(create(&summary_path(&cmd.out))?)?;
    Ok(())
}

fn run_bench(cmd: &BenchCmd) -> Result<(), CliError> {
    let table = run_runtime_bench(
        &cmd.sim.config(SupportPlacement::Random),
        &methods(&cmd.methods)?,
        &experiment_options(&cmd.inference, None),
        cmd.replicates,
    )?;
    table.write_csv(create(&cmd.out)?)?;
    table.write_summary_csv(create(&summary_path(&cmd.out))?)?;
    Ok(())
}

/// Splices the flags of `--config FILE` in right after the subcommand name,
/// so flags given on the command line (which come later) override them.
fn expand_config(args: Vec<String>) -> Result<Vec<String>, CliError> {
    let mut path = None;
    let mut rest = Vec::with_capacity(args.len());
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            path = it.next();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else {
        return Ok(rest);
    };
    let extra = input::config_args(Path::new(&path))?;
    let names = ["infer", "simulate", "qq", "sweep", "lambda-heatmap", "bench"];
    let at = rest
        .iter()
        .position(|a| names.contains(&a.as_str()))
        .map_or(rest.len(), |i| i + 1);
    rest.splice(at..at, extra);
    Ok(rest)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(invalid("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    match &cli.command {
        Command::Infer(c) => run_infer(c),
        Command::Simulate(c) => run_simulate(c),
        Command::Qq(c) => run_qq(c),
        Command::Sweep(c) => run_sweep(c),
        Command::LambdaHeatmap(c) => run_heatmap(c),
        Command::Bench(c) => run_bench(c),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match expand_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let cli = Cli::parse_from(args);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
