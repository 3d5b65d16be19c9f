use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use sphar_cpd::bench::{self, BenchConfig, BenchScenario, SettingOutcome};
use sphar_cpd::diagnostics::theory_tuning_bounds;
use sphar_cpd::eval::{assign_and_average, hausdorff_scaled};
use sphar_cpd::simulate::Junction;
use sphar_cpd::io::{
    parse_coefficients, to_json, write_coefficients, MetricsDocument, ResultDocument, ScenarioConfig,
    SegmentMean, TheoryReport, TruthDocument, METRICS_FORMAT, RESULT_FORMAT,
};
use sphar_cpd::{
    detect, fit_segment_with_intercept, mean_surface, simulate, DetectorConfig, Error, Lambda, SegmentSpec,
};

#[derive(Parser)]
#[command(name = "sphar-cpd", version, about = "Change point detection for spherical autoregressive coefficient series")]
struct Cli {
    /// Worker threads (defaults to SPHAR_THREADS, then the number of CPUs).
    #[arg(long, global = true, env = "SPHAR_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write coefficients plus a truth sidecar.
    Simulate(SimulateArgs),
    /// Detect change points in a coefficient file.
    Detect(DetectArgs),
    /// Run a Monte Carlo benchmark.
    Bench(BenchArgs),
    /// Score a detection result against a truth sidecar.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Truth sidecar path (default: `<out>.truth.json`).
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    p: usize,
    /// Highest multipole used, exclusive (default: all in the file).
    #[arg(long = "L")]
    max_ell: Option<usize>,
    /// Scalar or comma-separated per-multipole list.
    #[arg(long, default_value = "0")]
    lambda: String,
    #[arg(long)]
    gamma: f64,
    #[arg(long, default_value_t = DetectorConfig::DEFAULT_DELTA)]
    delta: usize,
    /// Also fit per-segment intercepts and mean surfaces.
    #[arg(long)]
    intercept: bool,
    /// Report theory tuning quantities from the fitted segments.
    #[arg(long)]
    theory: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    q: usize,
    #[arg(long, default_value_t = 2.0)]
    d: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, default_value_t = 300.0)]
    gamma: f64,
    #[arg(long, default_value_t = DetectorConfig::DEFAULT_DELTA)]
    delta: usize,
    /// Lambda grid of the tuning study.
    #[arg(long, default_value = "0,1")]
    lambdas: String,
    /// Gamma grid of the tuning study.
    #[arg(long, default_value = "100,200,300")]
    gammas: String,
    /// Segment junction override: `continue` or `restart`.
    #[arg(long)]
    junction: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

enum CliError {
    Config(String),
    Parse(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Parse(_) => 3,
            Self::Numeric(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Config(m) | Self::Parse(m) | Self::Numeric(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::DegenerateFit(_) | Error::NonFinite(_) => Self::Numeric(e.to_string()),
            _ => Self::Config(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

fn parse_list(raw: &str, what: &str) -> CliResult<Vec<f64>> {
    raw.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("invalid {what} value '{v}'")))
        })
        .collect()
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    serde_json::from_str(&read(path)?).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

fn cmd_simulate(args: SimulateArgs) -> CliResult<()> {
    let mut config = ScenarioConfig::from_toml(&read(&args.config)?)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let spec = config.resolve()?;
    let series = simulate(&spec)?;
    write(&args.out, &write_coefficients(&series))?;
    let truth_path = args.truth.unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".truth.json");
        p.into()
    });
    write(&truth_path, &to_json(&TruthDocument::new(config, spec)))
}

fn cmd_detect(args: DetectArgs) -> CliResult<()> {
    let text = read(&args.input)?;
    let mut series = parse_coefficients(&text).map_err(|e| CliError::Parse(format!("{}: {e}", args.input.display())))?;
    if let Some(l) = args.max_ell {
        if l != series.max_ell() {
            series = series.truncate(l)?;
        }
    }
    let values = parse_list(&args.lambda, "lambda")?;
    let lambda = match values.as_slice() {
        [v] => Lambda::Scalar(*v),
        _ => Lambda::PerEll(values),
    };
    let mut config = DetectorConfig::new(args.p, series.max_ell(), lambda, args.gamma);
    config.delta = args.delta;
    config.validate()?;

    let result = detect(&series, &config)?;
    if result.single_segment_fallback {
        eprintln!(
            "warning: n={} is shorter than two segments of delta={}; reporting a single segment",
            series.n(),
            config.delta
        );
    }
    let residual_variance: Vec<Vec<f64>> = result.segments.iter().map(|f| f.residual_variance()).collect();

    let intercept = if args.intercept {
        let mut out = Vec::new();
        for (s, e) in result.partition.intervals() {
            let fit = fit_segment_with_intercept(&series, s, e, config.p, config.max_ell)?;
            let surface = mean_surface(&fit.mu_hat, &fit.coeffs)?;
            out.push(SegmentMean {
                fit,
                mean_surface: surface,
            });
        }
        Some(out)
    } else {
        None
    };

    let theory = args.theory.then(|| {
        let segments: Result<Vec<SegmentSpec>, Error> = result
            .segments
            .iter()
            .zip(&residual_variance)
            .map(|(fit, var)| SegmentSpec::new(fit.coeffs.clone(), var.clone()))
            .collect();
        match segments.and_then(|segs| theory_tuning_bounds(&segs, &config.lambda.to_vec(config.max_ell), config.p)) {
            Ok(bounds) => TheoryReport::Bounds(bounds),
            Err(e) => TheoryReport::Unavailable(e.to_string()),
        }
    });

    let doc = ResultDocument {
        format: RESULT_FORMAT.into(),
        input: args.input.display().to_string(),
        config,
        result,
        residual_variance,
        intercept,
        theory,
    };
    write(&args.out, &to_json(&doc))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn bench_tables(config: &BenchConfig, outcomes: &[SettingOutcome]) -> BTreeMap<&'static str, String> {
    let provenance = format!("# config: {}\n", serde_json::to_string(config).expect("serializable"));
    let groups = outcomes[0].summary.mean_location.len();
    let mut files = BTreeMap::new();

    let mut table = provenance.clone();
    table.push_str("lambda,gamma,reps,mean_D,sd_D");
    for k in 1..=groups {
        write!(table, ",mean_rho_{k},sd_rho_{k},count_{k}").unwrap();
    }
    table.push('\n');
    for o in outcomes {
        let s = &o.summary;
        write!(table, "{},{},{},{},{}", o.lambda, o.gamma, s.replicates, s.mean_hausdorff, s.sd_hausdorff).unwrap();
        for k in 0..groups {
            write!(
                table,
                ",{},{},{}",
                fmt_opt(s.mean_location[k]),
                fmt_opt(s.sd_location[k]),
                s.location_counts[k]
            )
            .unwrap();
        }
        table.push('\n');
    }
    files.insert("table.csv", table);

    let mut records = provenance.clone();
    records.push_str("lambda,gamma,replicate,seed,k_hat,estimate,hausdorff\n");
    let mut timings = String::from("lambda,gamma,replicate,seed,runtime_ms\n");
    for o in outcomes {
        for (i, r) in o.records.iter().enumerate() {
            let est: Vec<String> = r.estimate.iter().map(ToString::to_string).collect();
            writeln!(
                records,
                "{},{},{i},{},{},{},{}",
                o.lambda,
                o.gamma,
                r.seed,
                r.k_hat(),
                est.join(" "),
                r.hausdorff
            )
            .unwrap();
            writeln!(timings, "{},{},{i},{},{:.3}", o.lambda, o.gamma, r.seed, r.runtime_ms).unwrap();
        }
    }
    files.insert("records.csv", records);
    files.insert("timings.csv", timings);

    if config.scenario == BenchScenario::TuningGrid {
        let mut hist = provenance.clone();
        hist.push_str("lambda,gamma,t,count\n");
        let mut khat = provenance;
        khat.push_str("lambda,gamma,k_hat,count\n");
        for o in outcomes {
            let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
            for r in &o.records {
                for &t in &r.estimate {
                    *counts.entry(t).or_default() += 1;
                }
            }
            for (t, c) in counts {
                writeln!(hist, "{},{},{t},{c}", o.lambda, o.gamma).unwrap();
            }
            for (k, c) in &o.summary.k_hat_histogram {
                writeln!(khat, "{},{},{k},{c}", o.lambda, o.gamma).unwrap();
            }
        }
        files.insert("histogram.csv", hist);
        files.insert("khat.csv", khat);
    }
    files
}

fn cmd_bench(args: BenchArgs) -> CliResult<()> {
    let scenario: BenchScenario = args.scenario.parse()?;
    let mut config = BenchConfig::new(scenario, args.reps, args.seed);
    config.q = args.q;
    config.d = args.d;
    config.lambda = args.lambda;
    config.gamma = args.gamma;
    config.delta = args.delta;
    config.lambdas = parse_list(&args.lambdas, "lambda")?;
    config.gammas = parse_list(&args.gammas, "gamma")?;
    config.junction = match args.junction.as_deref() {
        None => None,
        Some("continue") => Some(Junction::Continue),
        Some("restart") => Some(Junction::Restart),
        Some(other) => return Err(CliError::Config(format!("unknown junction '{other}'"))),
    };
    config.validate()?;
    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", args.out.display())))?;

    let outcomes = bench::run(&config)?;
    let summaries: Vec<_> = outcomes
        .iter()
        .map(|o| json!({ "lambda": o.lambda, "gamma": o.gamma, "n": o.n, "summary": o.summary }))
        .collect();
    let summary = json!({
        "format": "sphar-cpd/bench/v1",
        "config": config,
        "settings": summaries,
    });
    write(&args.out.join("summary.json"), &to_json(&summary))?;
    for (name, contents) in bench_tables(&config, &outcomes) {
        write(&args.out.join(name), &contents)?;
    }
    for o in &outcomes {
        let s = &o.summary;
        let locs: Vec<String> = s.mean_location.iter().map(|v| fmt_opt(*v)).collect();
        println!(
            "{} lambda={} gamma={}: D={:.4} ({:.4}) mean rho=[{}]",
            scenario.id(),
            o.lambda,
            o.gamma,
            s.mean_hausdorff,
            s.sd_hausdorff,
            locs.join(", ")
        );
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> CliResult<()> {
    let result: ResultDocument = parse_json(&args.input)?;
    let truth: TruthDocument = parse_json(&args.truth)?;
    let n = truth.scenario.n;
    if result.result.partition.n() != n {
        return Err(CliError::Config(format!(
            "result covers n={}, truth has n={n}",
            result.result.partition.n()
        )));
    }
    let est = result.result.partition.change_points().to_vec();
    let tru = truth.scenario.partition.change_points().to_vec();
    let assignment = if (1..=2).contains(&tru.len()) {
        Some(assign_and_average(&est, &tru, n)?)
    } else {
        None
    };
    let doc = MetricsDocument {
        format: METRICS_FORMAT.into(),
        result: args.input.display().to_string(),
        truth: args.truth.display().to_string(),
        n,
        hausdorff: hausdorff_scaled(&est, &tru, n),
        true_change_points: tru,
        estimated_change_points: est,
        assignment,
    };
    write(&args.out, &to_json(&doc))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let outcome = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Eval(a) => cmd_eval(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
