//! `clique-lab`: run experiments, sweeps and the acceptance checks.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use clique_lab::experiment::{
    parse_wake, run_experiment, sweep, write_records_csv, write_records_jsonl, write_sweep_csv, Algo, ExperimentSpec,
    Format, Params, SchedulerKind, SweepGrid,
};
use clique_lab::verify::{verify_with, VerifyOptions};

#[derive(Parser)]
#[command(name = "clique-lab", version, about = "Leader election experiments on clique networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run trials of one protocol at one size.
    Run(RunArgs),
    /// Summarize a grid of sizes and parameter values, one row per cell.
    Sweep(SweepArgs),
    /// Run the acceptance checks.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    algo: String,
    #[arg(long, default_value_t = 1)]
    trials: u64,
    /// Base seed; trial t uses seed + t.
    #[arg(long, env = "CLIQUE_LAB_SEED", default_value_t = 0)]
    seed: u64,
    /// simultaneous | all | single | half | subset:<i,j,...>
    #[arg(long, default_value = "simultaneous")]
    wake: String,
    /// unit | random | slow-competes | fast-wakeups-slow-elections | fifo-stress
    #[arg(long, default_value = "random")]
    scheduler: String,
    /// Wire ports adaptively with the isolating adversary (synchronous only).
    #[arg(long)]
    isolating: bool,
    /// Write 0 in the seconds column so output is byte-reproducible.
    #[arg(long)]
    no_wallclock: bool,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    ell: Option<u64>,
    #[arg(long)]
    k: Option<u32>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    d: Option<u64>,
    #[arg(long)]
    g: Option<u64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value = "csv")]
    format: String,
    /// Also write a JSONL event trace of every trial.
    #[arg(long)]
    trace: bool,
    #[arg(long, default_value = "trace.jsonl")]
    trace_out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    ell: Vec<u64>,
    #[arg(long, value_delimiter = ',')]
    k: Vec<u32>,
    #[arg(long, value_delimiter = ',')]
    epsilon: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    d: Vec<u64>,
    #[arg(long, value_delimiter = ',')]
    g: Vec<u64>,
    #[arg(long, value_delimiter = ',')]
    a: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    b: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    gamma: Vec<f64>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Comma-separated criteria to run.
    #[arg(long, value_delimiter = ',')]
    only: Vec<String>,
    /// Trial-count multiplier for quick runs.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, env = "CLIQUE_LAB_SEED", default_value_t = 0)]
    seed: u64,
    /// Use a deliberately unsafe referee rule; the suite should fail.
    #[arg(long)]
    sabotage: bool,
    /// Do not fail criteria that exceed their runtime budget.
    #[arg(long)]
    no_budgets: bool,
}

/// A usage problem: reported on stderr with exit status 2.
struct Usage(String);

fn spec(common: &Common, n: usize, params: Params) -> Result<ExperimentSpec, Usage> {
    let usage = |e: clique_lab::ConfigError| Usage(e.to_string());
    let algo: Algo = common.algo.parse().map_err(usage)?;
    let wake = parse_wake(&common.wake).map_err(usage)?;
    let scheduler: SchedulerKind = common.scheduler.parse().map_err(usage)?;
    let spec = ExperimentSpec::new(algo, n)
        .with_params(params)
        .with_trials(common.trials)
        .with_seed(common.seed)
        .with_wake(wake)
        .with_scheduler(scheduler)
        .with_isolating(common.isolating)
        .with_wallclock(!common.no_wallclock);
    spec.validate().map_err(usage)?;
    Ok(spec)
}

fn output(path: &Option<PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(args: RunArgs) -> anyhow::Result<Result<(), Usage>> {
    let params = Params {
        ell: args.ell,
        k: args.k,
        epsilon: args.epsilon,
        d: args.d,
        g: args.g,
        a: args.a,
        b: args.b,
        gamma: args.gamma,
    };
    let format: Format = match args.format.parse() {
        Ok(f) => f,
        Err(e) => return Ok(Err(Usage(format!("{e}")))),
    };
    let spec = match spec(&args.common, args.n, params) {
        Ok(s) => s.with_trace(args.trace),
        Err(u) => return Ok(Err(u)),
    };
    let exp = run_experiment(&spec)?;
    let mut out = output(&args.common.out)?;
    match format {
        Format::Csv => write_records_csv(&mut out, exp.records())?,
        Format::Jsonl => write_records_jsonl(&mut out, exp.records())?,
    }
    out.flush()?;
    if args.trace {
        let mut w = BufWriter::new(File::create(&args.trace_out)?);
        for run in &exp.runs {
            for line in run.trace.as_deref().unwrap_or_default().lines() {
                let rest = line.strip_prefix('{').unwrap_or(line);
                writeln!(w, "{{\"trial\":{},{rest}", run.record.trial)?;
            }
        }
        w.flush()?;
    }
    let s = exp.summary;
    eprintln!(
        "{} n={} trials={}: mean messages {:.1}, max {}, mean time {:.3}, success {:.4} [{:.4}, {:.4}]",
        spec.algo, spec.n, s.trials, s.mean_messages, s.max_messages, s.mean_time, s.success_rate, s.ci_low, s.ci_high
    );
    Ok(Ok(()))
}

/// Cross product of the given parameter lists; an empty list leaves the
/// parameter at its default.
fn points(args: &SweepArgs) -> Vec<Params> {
    fn opt<T: Copy>(v: &[T]) -> Vec<Option<T>> {
        if v.is_empty() {
            vec![None]
        } else {
            v.iter().copied().map(Some).collect()
        }
    }
    let mut out = Vec::new();
    for ell in opt(&args.ell) {
        for k in opt(&args.k) {
            for epsilon in opt(&args.epsilon) {
                for d in opt(&args.d) {
                    for g in opt(&args.g) {
                        for a in opt(&args.a) {
                            for b in opt(&args.b) {
                                for gamma in opt(&args.gamma) {
                                    out.push(Params { ell, k, epsilon, d, g, a, b, gamma });
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn sweep_cmd(args: SweepArgs) -> anyhow::Result<Result<(), Usage>> {
    let points = points(&args);
    let mut base = None;
    for &n in &args.n {
        for p in &points {
            match spec(&args.common, n, *p) {
                Ok(s) => base = base.or(Some(s)),
                Err(u) => return Ok(Err(u)),
            }
        }
    }
    let Some(base) = base else { return Ok(Err(Usage("sweep grid is empty".into()))) };
    let rows = sweep(&SweepGrid { base, ns: args.n.clone(), points })?;
    let mut out = output(&args.common.out)?;
    write_sweep_csv(&mut out, &rows)?;
    out.flush()?;
    Ok(Ok(()))
}

fn verify_cmd(args: VerifyArgs) -> anyhow::Result<Result<bool, Usage>> {
    let opts = VerifyOptions {
        only: args.only,
        scale: args.scale,
        base_seed: args.seed,
        sabotage: args.sabotage,
        enforce_budgets: !args.no_budgets,
    };
    let report = match verify_with(&opts, |c| println!("{c}")) {
        Ok(r) => r,
        Err(e) => return Ok(Err(Usage(e.to_string()))),
    };
    if report.all_passed() {
        println!("all {} criteria passed", report.criteria.len());
    } else {
        println!("failed: {}", report.failed().join(", "));
    }
    Ok(Ok(report.all_passed()))
}

fn main() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a)?.map(|()| true),
        Command::Sweep(a) => sweep_cmd(a)?.map(|()| true),
        Command::Verify(a) => verify_cmd(a)?,
    };
    Ok(match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    })
}
