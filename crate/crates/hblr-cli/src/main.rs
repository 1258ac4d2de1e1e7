//! `hblr` — simulate the benchmark systems, train segmented local-model
//! committees, evaluate them, and query trained models.

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use hblr_core::io::{load_model, read_dataset, save_model, write_dataset};
use hblr_core::segmentation::{train_segmented, train_test_split, Dataset, TrainOptions, TrainReport};
use hblr_core::sim::{make_supervised, simulate_dipc, simulate_msd, SdeConfig};
use hblr_core::{evaluate, predict_averaged, predict_with_variance, Error, HyperParams, Metric};

mod config;

#[derive(Parser)]
#[command(
    name = "hblr",
    version,
    about = "Bayesian local-model regression on stochastic benchmark systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a benchmark system and write a supervised dataset
    #[command(subcommand)]
    Simulate(SimulateSystem),
    /// Train a segmented model on a dataset and save it
    Train(TrainArgs),
    /// Score a saved model on a dataset
    Eval(EvalArgs),
    /// Query a saved model at given inputs
    Predict(PredictArgs),
}

#[derive(Subcommand)]
enum SimulateSystem {
    /// Stochastic mass-spring-damper (2 states, no control)
    Msd(MsdArgs),
    /// Feedback-stabilized double inverted pendulum on a cart (6 states)
    Dipc(DipcArgs),
}

#[derive(Args)]
struct SimArgs {
    /// Output dataset path (training side when --test-out is given)
    #[arg(long)]
    out: PathBuf,
    /// Seed for the process and measurement noise
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Integration step in seconds
    #[arg(long)]
    dt: Option<f64>,
    /// Simulated time span in seconds
    #[arg(long)]
    duration: Option<f64>,
    /// Turn off process and measurement noise
    #[arg(long)]
    no_noise: bool,
    /// Also write a held-out test split to this path
    #[arg(long)]
    test_out: Option<PathBuf>,
    /// Fraction of rows moved to the test split
    #[arg(long, default_value_t = 0.33)]
    test_fraction: f64,
    /// Seed for the split shuffle (defaults to --seed)
    #[arg(long)]
    split_seed: Option<u64>,
}

#[derive(Args)]
struct MsdArgs {
    #[command(flatten)]
    sim: SimArgs,
    /// Natural frequency of the oscillator
    #[arg(long, default_value_t = 3.0)]
    nu: f64,
    /// Damping coefficient
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
}

#[derive(Args)]
struct DipcArgs {
    #[command(flatten)]
    sim: SimArgs,
}

#[derive(Args)]
struct TrainArgs {
    /// Training dataset (CSV with a role line)
    #[arg(long)]
    data: PathBuf,
    /// Where to save the trained model
    #[arg(long)]
    model_out: PathBuf,
    /// Config file with hyperparameter overrides
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of segments along the control schedule
    #[arg(long)]
    segments: Option<usize>,
    /// Blocks of overlap between neighboring segments
    #[arg(long)]
    overlap: Option<usize>,
    /// Sweep budget per local-model committee
    #[arg(long)]
    max_iters: Option<usize>,
    /// Seed for the constant-response noise injection
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Copy, Clone, Default, ValueEnum)]
enum MetricArg {
    #[default]
    Nmse,
    Mse,
}

#[derive(Args)]
struct EvalArgs {
    /// Evaluation dataset (CSV with a role line)
    #[arg(long)]
    data: PathBuf,
    /// Trained model file
    #[arg(long)]
    model: PathBuf,
    /// Error metric to report per response
    #[arg(long, value_enum, default_value_t)]
    metric: MetricArg,
    /// Worker threads (default: all cores)
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("query").required(true).args(["input", "input_file"])))]
struct PredictArgs {
    /// Trained model file
    #[arg(long)]
    model: PathBuf,
    /// One query as comma-separated input values
    #[arg(long)]
    input: Option<String>,
    /// File with one comma-separated query per line
    #[arg(long)]
    input_file: Option<PathBuf>,
    /// Also print the predictive variance per response
    #[arg(long)]
    with_variance: bool,
}

enum Failure {
    Usage(String),
    Core(Error),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Core(Error::Numerical { .. }) | Failure::Core(Error::Factorization(_)) => 3,
            Failure::Core(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(msg) => write!(f, "{msg}"),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let ok = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return ExitCode::from(if ok { 0 } else { 1 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate(SimulateSystem::Msd(args)) => cmd_simulate_msd(args),
        Command::Simulate(SimulateSystem::Dipc(args)) => cmd_simulate_dipc(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Predict(args) => cmd_predict(args),
    }
}

fn sde_config(base: SdeConfig, args: &SimArgs) -> Result<SdeConfig, Failure> {
    let dt = args.dt.unwrap_or(base.dt);
    let duration = args.duration.unwrap_or(base.duration);
    if dt <= 0.0 || !dt.is_finite() {
        return Err(usage(format!("--dt must be positive, got {dt}")));
    }
    if !duration.is_finite() || duration < dt {
        return Err(usage(format!(
            "--duration must cover at least one step of {dt}, got {duration}"
        )));
    }
    Ok(SdeConfig {
        dt,
        duration,
        seed: args.seed,
        noise: !args.no_noise,
    })
}

fn write_outputs(data: Dataset, args: &SimArgs) -> Result<(), Failure> {
    if let Some(test_out) = &args.test_out {
        if !(args.test_fraction > 0.0 && args.test_fraction < 1.0) {
            return Err(usage(format!(
                "--test-fraction must lie in (0, 1), got {}",
                args.test_fraction
            )));
        }
        let split_seed = args.split_seed.unwrap_or(args.seed);
        let (train, test) = train_test_split(&data, args.test_fraction, split_seed)?;
        write_dataset(&args.out, &train)?;
        write_dataset(test_out, &test)?;
        println!("wrote {} training rows to {}", train.n_samples(), args.out.display());
        println!("wrote {} test rows to {}", test.n_samples(), test_out.display());
    } else {
        write_dataset(&args.out, &data)?;
        println!("wrote {} rows to {}", data.n_samples(), args.out.display());
    }
    Ok(())
}

fn cmd_simulate_msd(args: MsdArgs) -> Result<(), Failure> {
    if args.nu <= 0.0 || !args.nu.is_finite() {
        return Err(usage(format!("--nu must be positive, got {}", args.nu)));
    }
    if args.gamma < 0.0 || !args.gamma.is_finite() {
        return Err(usage(format!("--gamma must be non-negative, got {}", args.gamma)));
    }
    let config = sde_config(SdeConfig::msd_defaults(args.sim.seed), &args.sim)?;
    let traj = simulate_msd(&config, args.nu, args.gamma)?;
    let data = make_supervised(&traj, false)?;
    write_outputs(data, &args.sim)
}

fn cmd_simulate_dipc(args: DipcArgs) -> Result<(), Failure> {
    let config = sde_config(SdeConfig::dipc_defaults(args.sim.seed), &args.sim)?;
    let traj = simulate_dipc(&config)?;
    let data = make_supervised(&traj, true)?;
    write_outputs(data, &args.sim)
}

fn init_jobs(jobs: Option<usize>) -> Result<(), Failure> {
    let Some(n) = jobs else { return Ok(()) };
    if n == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| usage(format!("could not size the worker pool: {e}")))
}

fn cmd_train(args: TrainArgs) -> Result<(), Failure> {
    init_jobs(args.jobs)?;
    let data = read_dataset(&args.data)?;

    let mut params = HyperParams::default();
    let mut opts = TrainOptions::default();
    if let Some(path) = &args.config {
        config::apply_config(path, &mut params, &mut opts)?;
    }
    if let Some(v) = args.max_iters {
        params.max_iters = v;
    }
    if let Some(v) = args.segments {
        opts.segments_requested = v;
    }
    if let Some(v) = args.overlap {
        opts.overlap_blocks = v;
    }
    if let Some(v) = args.seed {
        opts.noise_seed = v;
    }
    params.validate().map_err(|e| usage(e.to_string()))?;

    let (model, report) = train_segmented(&data, &params, &opts)?;
    save_model(&args.model_out, &model, &params)?;
    print_train_report(&report);
    Ok(())
}

fn print_train_report(report: &TrainReport) {
    println!("response\tsegment\ttraining_nmse\tlocal_models\titerations");
    for s in &report.stats {
        let metric = match s.training_nmse {
            Some(v) => format!("{v:.6e}"),
            None => "-".to_string(),
        };
        println!(
            "{}\t{}\t{}\t{}\t{}",
            s.response + 1,
            s.segment + 1,
            metric,
            s.local_models,
            s.iterations
        );
    }
}

fn cmd_eval(args: EvalArgs) -> Result<(), Failure> {
    init_jobs(args.jobs)?;
    let data = read_dataset(&args.data)?;
    let (model, params) = load_model(&args.model)?;
    let metric = match args.metric {
        MetricArg::Nmse => Metric::Nmse,
        MetricArg::Mse => Metric::Mse,
    };

    let values = evaluate(&data, &model, &params, metric)?;
    let label = match metric {
        Metric::Nmse => "nmse",
        Metric::Mse => "mse",
    };
    println!("response\t{label}");
    for (r, v) in values.iter().enumerate() {
        println!("{}\t{v:.6e}", r + 1);
    }

    // Timing pass: the clock brackets only the prediction call, not row
    // extraction or metric bookkeeping. Goes to stderr so the metric table
    // above stays byte-stable across runs.
    let n = data.n_samples();
    let mut spent = Duration::ZERO;
    for i in 0..n {
        let x = data.input_row(i);
        let start = Instant::now();
        let means = predict_averaged(&x, &model, &params)?;
        spent += start.elapsed();
        std::hint::black_box(means);
    }
    let ms_per_query = spent.as_secs_f64() * 1e3 / n as f64;
    eprintln!("mean prediction time: {ms_per_query:.9} ms over {n} queries");
    Ok(())
}

fn parse_inline_query(text: &str) -> Result<DVector<f64>, Failure> {
    let values: Result<Vec<f64>, _> = text.split(',').map(|c| c.trim().parse::<f64>()).collect();
    match values {
        Ok(v) if !v.is_empty() => Ok(DVector::from_vec(v)),
        _ => Err(usage(format!(
            "--input must be comma-separated numbers, got '{text}'"
        ))),
    }
}

fn read_query_file(path: &PathBuf) -> Result<Vec<DVector<f64>>, Failure> {
    let text = std::fs::read_to_string(path).map_err(Error::from)?;
    let mut queries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let values: Result<Vec<f64>, _> =
            line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        match values {
            Ok(v) if !v.is_empty() => queries.push(DVector::from_vec(v)),
            _ => {
                return Err(Failure::Core(Error::Parse {
                    path: path.display().to_string(),
                    line: i + 1,
                    detail: "expected comma-separated numbers".to_string(),
                }));
            }
        }
    }
    if queries.is_empty() {
        return Err(Failure::Core(Error::Schema {
            path: path.display().to_string(),
            detail: "no queries in file".to_string(),
        }));
    }
    Ok(queries)
}

fn cmd_predict(args: PredictArgs) -> Result<(), Failure> {
    let (model, params) = load_model(&args.model)?;
    let queries = match (&args.input, &args.input_file) {
        (Some(inline), None) => vec![parse_inline_query(inline)?],
        (None, Some(path)) => read_query_file(path)?,
        _ => unreachable!("clap enforces exactly one query source"),
    };
    for x in &queries {
        if args.with_variance {
            let dists = predict_with_variance(x, &model, &params)?;
            let cells: Vec<String> = dists
                .iter()
                .map(|d| format!("{:.6e}\t{:.6e}", d.mean, d.variance))
                .collect();
            println!("{}", cells.join("\t"));
        } else {
            let means = predict_averaged(x, &model, &params)?;
            let cells: Vec<String> = means.iter().map(|m| format!("{m:.6e}")).collect();
            println!("{}", cells.join("\t"));
        }
    }
    Ok(())
}
