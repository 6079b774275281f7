//! `dpanon` command-line front end.
//!
//! `anonymize` releases a k-anonymous version of a CSV file; `experiment`
//! runs the synthetic privacy/utility grid and writes metrics as JSON.
//! Exit status is 0 on success, 2 on usage errors and 1 on data or solver
//! errors.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::Utc;
use clap::{Args, Parser, Subcommand};
use dpanon_core::dataset::{load_table, Column, ColumnKind, Schema};
use dpanon_core::dither::DEFAULT_ALPHA;
use dpanon_core::experiment::{run_experiment, ExperimentConfig};
use dpanon_core::pipeline::{Anonymizer, Method};
use dpanon_core::reid::reid_trials;
use dpanon_core::shiftlearn::{Coding, Estimator, DEFAULT_RIDGE};
use dpanon_core::synth::SynthConfig;
use dpanon_core::Error;

#[derive(Parser)]
#[command(name = "dpanon", version, about = "Distribution-preserving k-anonymization")]
struct Cli {
    /// Worker threads (defaults to all cores). Output does not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Anonymize the quasi-identifiers of a CSV file.
    Anonymize(AnonymizeArgs),
    /// Run the synthetic experiment grid.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct AnonymizeArgs {
    #[arg(long)]
    input: PathBuf,
    /// Released CSV; the JSON sidecar goes next to it unless --sidecar is given.
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    sidecar: Option<PathBuf>,
    /// Quasi-identifier columns as `name[:kind]`, kind one of ordinal,
    /// binary or continuous (default ordinal). Continuous values are grouped
    /// after rounding to 12 significant digits.
    #[arg(long, value_delimiter = ',', required = true, value_parser = parse_column)]
    qi_cols: Vec<Column>,
    #[arg(long)]
    response_col: String,
    #[arg(long)]
    id_col: Option<String>,
    #[arg(long)]
    k: usize,
    /// centroid, resample, permute, cell-dither or gaussian.
    #[arg(long, default_value = "resample")]
    method: Method,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Weight of the response in the clustering distortion.
    #[arg(long, default_value_t = 1.0)]
    w: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cluster index of every record, as CSV.
    #[arg(long)]
    assignment: Option<PathBuf>,
    /// Reidentification trials against the input; zero skips the attack.
    #[arg(long, default_value_t = 0)]
    trials: usize,
    /// Reidentification report (JSON); required when --trials is positive.
    #[arg(long)]
    reid_output: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Comma-separated k grid.
    #[arg(long, value_delimiter = ',', default_value = "2,10,50,200")]
    k: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "centroid,resample,permute,cell-dither,gaussian")]
    methods: Vec<Method>,
    /// Shift estimators: none, nonparametric or logistic.
    #[arg(long, value_delimiter = ',', default_value = "none,nonparametric")]
    shift: Vec<Estimator>,
    #[arg(long, value_delimiter = ',', default_value = "dummy,numeric")]
    coding: Vec<Coding>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    n_train: usize,
    #[arg(long, default_value_t = 2000)]
    n_test: usize,
    /// Levels per quasi-identifier.
    #[arg(long, value_delimiter = ',', default_value = "8,2,5")]
    levels: Vec<usize>,
    /// Linear response coefficient per quasi-identifier.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    slopes: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.4)]
    dependence: f64,
    /// Exponential tilt of the target marginal; zero means no shift.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    tilt: f64,
    #[arg(long, default_value_t = 0)]
    tilt_dim: usize,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    w: f64,
    #[arg(long, default_value_t = DEFAULT_RIDGE)]
    ridge: f64,
    /// Metrics JSON.
    #[arg(long)]
    output: PathBuf,
    /// Flat metrics table for plotting.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn parse_column(s: &str) -> Result<Column, Error> {
    let (name, kind) = match s.split_once(':') {
        Some((name, kind)) => (name, kind.parse()?),
        None => (s, ColumnKind::Ordinal),
    };
    if name.trim().is_empty() {
        return Err(Error::Usage("empty column name".into()));
    }
    Ok(Column::new(name.trim(), kind))
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(path)?))
}

fn run_anonymize(args: AnonymizeArgs) -> Result<(), Error> {
    if args.k < 2 {
        return Err(Error::Usage(format!("k must be at least 2, got {}", args.k)));
    }
    if args.method == Method::Gaussian && !(args.alpha > 0.0) {
        return Err(Error::Usage(format!("alpha must be positive, got {}", args.alpha)));
    }
    if args.trials > 0 && args.reid_output.is_none() {
        return Err(Error::Usage("--trials needs --reid-output".into()));
    }
    let started = Utc::now();
    let mut schema = Schema::new(args.qi_cols, args.response_col);
    if let Some(id) = args.id_col {
        schema = schema.with_id_column(id);
    }
    let table = load_table(&args.input, &schema)?;
    let anonymizer = Anonymizer::prepare(&table, args.k, args.w, args.seed)?;
    let released = anonymizer.release(args.method, args.alpha, args.seed)?;

    released.write_csv(create(&args.output)?)?;
    let sidecar = args
        .sidecar
        .unwrap_or_else(|| args.output.with_extension("json"));
    released.write_sidecar(create(&sidecar)?, started, Utc::now())?;
    if let Some(path) = args.assignment {
        anonymizer.model().write_assignment_csv(create(&path)?, table.record_ids())?;
    }
    if let Some(path) = args.reid_output.filter(|_| args.trials > 0) {
        let report = reid_trials(&table, &anonymizer, args.method, args.alpha, args.trials, args.seed)?;
        report.write_json(create(&path)?)?;
    }
    Ok(())
}

fn run_experiment_cmd(args: ExperimentArgs) -> Result<(), Error> {
    let defaults = SynthConfig::default();
    let slopes = match args.slopes {
        Some(s) => s,
        None if args.levels.len() == defaults.slopes.len() => defaults.slopes.clone(),
        None => vec![1.0; args.levels.len()],
    };
    let config = ExperimentConfig {
        n_train: args.n_train,
        n_test: args.n_test,
        synth: SynthConfig {
            levels: args.levels,
            slopes,
            dependence: args.dependence,
            shift: args.tilt,
            shift_dim: args.tilt_dim,
            ..defaults
        },
        k_grid: args.k,
        methods: args.methods,
        estimators: args.shift,
        codings: args.coding,
        alpha: args.alpha,
        w: args.w,
        ridge: args.ridge,
        trials: args.trials,
        seed: args.seed,
    };
    let report = run_experiment(&config)?;
    report.write_json(create(&args.output)?)?;
    if let Some(path) = args.csv {
        report.write_csv(create(&path)?)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Anonymize(args) => run_anonymize(args),
        Command::Experiment(args) => run_experiment_cmd(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, Error::Usage(_)) { 2 } else { 1 })
        }
    }
}
