use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand, ValueEnum};
use svt_core::experiment::{emit_report, scaling_study, ExperimentSpec};
use svt_core::io;
use svt_core::probe::{build_packing_set, check_sigma_bound, estimate_expected_sigma_r, PackingParams};
use svt_core::rng::seeded;
use svt_core::sampling::marginals;
use svt_core::svt::{run_with_marginals, DEFAULT_C_STAR, DEFAULT_MAX_ITERS};
use svt_core::{
    CompletionConfig, Error, LambdaChoice, LambdaRule, MarginalSummary, NoiseModel, SamplingModel,
    StopRule,
};

#[derive(Parser)]
#[command(name = "svt-bench", version, about = "Low-rank matrix completion by clipped singular value thresholding")]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Complete a matrix from an observations file.
    Complete(CompleteArgs),
    /// Run a scaling study described by a JSON experiment spec.
    Simulate(SimulateArgs),
    /// Monte Carlo probes of the stochastic terms.
    #[command(subcommand)]
    Probe(ProbeCommand),
    /// Build a packing set and write one CSV per member.
    Packing(PackingArgs),
}

#[derive(Args)]
struct CompleteArgs {
    /// Observations in `%%observations m1 m2 count` coordinate format.
    #[arg(long)]
    input: PathBuf,
    /// A positive number, `auto-dense` or `auto-general`.
    #[arg(long)]
    lambda: String,
    /// Sup-norm bound of the target.
    #[arg(long)]
    a: f64,
    /// Noise standard deviation, for `auto-general`.
    #[arg(long)]
    sigma: Option<f64>,
    /// Noise bound, for the automatic rules.
    #[arg(long)]
    b: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_C_STAR)]
    c_star: f64,
    /// Sampling model file (`uniform p` or a coordinate listing); marginals
    /// are estimated from the mask when omitted.
    #[arg(long)]
    sampling: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    max_iters: usize,
    /// Slack added to the operator-norm stopping threshold.
    #[arg(long, default_value_t = 0.0)]
    extra_tol: f64,
    /// Clip the estimate to `[-a, a]` before writing.
    #[arg(long)]
    post_clip: bool,
    /// Estimate CSV.
    #[arg(long)]
    out: PathBuf,
    /// Per-iteration trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum ProbeCommand {
    /// Check the deviation bound on the noise-on-mask operator norm.
    Sigma(SigmaArgs),
    /// Mean operator norm of the Rademacher-on-mask matrix.
    SigmaR(SigmaRArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseKind {
    TruncatedGaussian,
    Rademacher,
    Uniform,
}

#[derive(Args)]
struct SigmaArgs {
    #[arg(long)]
    m1: usize,
    #[arg(long)]
    m2: usize,
    #[arg(long)]
    p: f64,
    /// Standard deviation of the truncated noise; only for `truncated-gaussian`.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    b: f64,
    /// Deviation level; defaults to `sqrt(2 ln(m1 + m2))`.
    #[arg(long)]
    t: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_C_STAR)]
    c_star: f64,
    #[arg(long)]
    reps: usize,
    #[arg(long, value_enum, default_value_t = NoiseKind::TruncatedGaussian)]
    noise: NoiseKind,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SigmaRArgs {
    #[arg(long)]
    m1: usize,
    #[arg(long)]
    m2: usize,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    reps: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PackingArgs {
    #[arg(long)]
    m1: usize,
    #[arg(long)]
    m2: usize,
    #[arg(long)]
    r: usize,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    sigma: f64,
    #[arg(long)]
    a: f64,
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    count: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

/// An error together with its exit code.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

const INVALID_INPUT: u8 = 1;
const RUNTIME: u8 = 2;

impl Failure {
    fn invalid(err: impl Into<anyhow::Error>) -> Self {
        Self { code: INVALID_INPUT, err: err.into() }
    }

    fn runtime(err: impl Into<anyhow::Error>) -> Self {
        Self { code: RUNTIME, err: err.into() }
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        match err {
            Error::Io(_) | Error::Csv(_) | Error::SvdNonConvergence { .. } | Error::Trial { .. } => {
                Self::runtime(err)
            }
            _ => Self::invalid(err),
        }
    }
}

trait Classify<T> {
    fn invalid_input(self, what: impl FnOnce() -> String) -> Result<T, Failure>;
    fn runtime(self, what: impl FnOnce() -> String) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn invalid_input(self, what: impl FnOnce() -> String) -> Result<T, Failure> {
        self.map_err(|e| Failure::invalid(e.into().context(what())))
    }

    fn runtime(self, what: impl FnOnce() -> String) -> Result<T, Failure> {
        self.map_err(|e| Failure::runtime(e.into().context(what())))
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).invalid_input(|| format!("cannot read {}", path.display()))
}

fn lambda_choice(args: &CompleteArgs) -> Result<LambdaChoice, Failure> {
    let need = |v: Option<f64>, flag: &str| {
        v.ok_or_else(|| Failure::invalid(anyhow!("--lambda {} requires --{flag}", args.lambda)))
    };
    match args.lambda.as_str() {
        "auto-dense" => Ok(LambdaChoice::Rule(LambdaRule::Dense { b: need(args.b, "b")? })),
        "auto-general" => Ok(LambdaChoice::Rule(LambdaRule::General {
            sigma: need(args.sigma, "sigma")?,
            b: need(args.b, "b")?,
            c_star: args.c_star,
        })),
        other => {
            let value: f64 = other.parse().map_err(|_| {
                Failure::invalid(anyhow!(
                    "--lambda must be a number, auto-dense or auto-general, got `{other}`"
                ))
            })?;
            Ok(LambdaChoice::Value(value))
        }
    }
}

fn complete(args: CompleteArgs) -> Result<(), Failure> {
    let obs = io::parse_observations(&read_text(&args.input)?)
        .invalid_input(|| format!("invalid observations in {}", args.input.display()))?;
    let summary = match &args.sampling {
        Some(path) => {
            let model = io::parse_sampling_model(&read_text(path)?, Some(obs.shape()))
                .invalid_input(|| format!("invalid sampling model in {}", path.display()))?;
            marginals(&model)
        }
        None => MarginalSummary::from_mask(obs.mask()),
    };
    let mut config = CompletionConfig::new(lambda_choice(&args)?, args.a);
    config.max_iters = args.max_iters;
    config.extra_tol = args.extra_tol;
    config.post_clip = args.post_clip;
    config.stop = StopRule::Dual;

    let result = run_with_marginals(&obs, &config, &summary)?;
    io::write_matrix_csv(&result.estimate, &args.out)
        .runtime(|| format!("cannot write {}", args.out.display()))?;
    if let Some(path) = &args.trace {
        io::write_trace_csv(&result.trace, path)
            .runtime(|| format!("cannot write {}", path.display()))?;
    }
    println!(
        "lambda={:.6e} iterations={} converged={}",
        result.lambda, result.iterations, result.converged
    );
    if !result.converged {
        eprintln!("warning: stopping rule not met after {} iterations", result.iterations);
    }
    Ok(())
}

fn simulate(args: SimulateArgs, seed: Option<u64>) -> Result<(), Failure> {
    let text = read_text(&args.spec)?;
    let mut spec: ExperimentSpec = serde_json::from_str(&text)
        .invalid_input(|| format!("invalid experiment spec in {}", args.spec.display()))?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let bundle = scaling_study(&spec)?;
    emit_report(&bundle, &args.out_dir)
        .runtime(|| format!("cannot write report to {}", args.out_dir.display()))?;
    for fit in &bundle.slope_fits {
        let other = if fit.axis == "p" { "r" } else { "p" };
        println!(
            "{} slope vs {} at {other}={} = {:.4} (stderr {:.4}, {} points)",
            fit.estimator.name(),
            fit.axis,
            fit.fixed,
            fit.slope,
            fit.stderr,
            fit.points
        );
    }
    if !bundle.failures.is_empty() {
        eprintln!("warning: {} trial(s) failed; see summary.json", bundle.failures.len());
    }
    Ok(())
}

fn probe_sigma(args: SigmaArgs, seed: u64) -> Result<(), Failure> {
    let noise = match args.noise {
        NoiseKind::TruncatedGaussian => NoiseModel::TruncatedGaussian {
            sigma: args
                .sigma
                .ok_or_else(|| Failure::invalid(anyhow!("--noise truncated-gaussian requires --sigma")))?,
            b: args.b,
        },
        NoiseKind::Rademacher => NoiseModel::ScaledRademacher { b: args.b },
        NoiseKind::Uniform => NoiseModel::UniformBounded { b: args.b },
    };
    let model = SamplingModel::uniform(args.m1, args.m2, args.p)?;
    let t = args
        .t
        .unwrap_or_else(|| (2.0 * ((args.m1 + args.m2) as f64).ln()).sqrt());
    let check = check_sigma_bound(&model, &noise, t, args.c_star, args.reps, &mut seeded(seed))?;
    let report = check.report();
    io::write_json(&report, &args.out).runtime(|| format!("cannot write {}", args.out.display()))?;
    println!(
        "violations={}/{} calibrated_c_star={:.4}",
        check.violations(),
        args.reps,
        check.calibrated_c_star()
    );
    Ok(())
}

fn probe_sigma_r(args: SigmaRArgs, seed: u64) -> Result<(), Failure> {
    let model = SamplingModel::uniform(args.m1, args.m2, args.p)?;
    let report = estimate_expected_sigma_r(&model, args.reps, &mut seeded(seed))?;
    io::write_json(&report.report(), &args.out)
        .runtime(|| format!("cannot write {}", args.out.display()))?;
    println!("mean_opnorm={:.4} ratio={:.4}", report.mean_opnorm, report.ratio_to_bound);
    Ok(())
}

fn packing(args: PackingArgs, seed: u64) -> Result<(), Failure> {
    let params = PackingParams::new(
        args.m1, args.m2, args.r, args.p, args.sigma, args.a, args.gamma, args.count,
    );
    let set = build_packing_set(&params, &mut seeded(seed))?;
    io::write_packing_set(&set, &args.out_dir)
        .runtime(|| format!("cannot write packing set to {}", args.out_dir.display()))?;
    println!("members={} shortfall={}", set.members.len(), set.shortfall);
    if set.shortfall > 0 {
        eprintln!("warning: {} member(s) short of the requested count", set.shortfall);
    }
    Ok(())
}

fn main() -> ExitCode {
    let parsed = <Cli as clap::CommandFactory>::command()
        .try_get_matches()
        .and_then(|m| <Cli as clap::FromArgMatches>::from_arg_matches(&m).map(|cli| (m, cli)));
    let (matches, cli) = match parsed {
        Ok(parsed) => parsed,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(INVALID_INPUT)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let seed_given = matches.value_source("seed") == Some(clap::parser::ValueSource::CommandLine);
    let outcome = match cli.command {
        Command::Complete(args) => complete(args),
        Command::Simulate(args) => simulate(args, seed_given.then_some(cli.seed)),
        Command::Probe(ProbeCommand::Sigma(args)) => probe_sigma(args, cli.seed),
        Command::Probe(ProbeCommand::SigmaR(args)) => probe_sigma_r(args, cli.seed),
        Command::Packing(args) => packing(args, cli.seed),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, err }) => {
            eprintln!("error: {err:#}");
            ExitCode::from(code)
        }
    }
}
