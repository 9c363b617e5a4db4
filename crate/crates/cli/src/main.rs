use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use cvi::benchgen::{gen_diagram, BenchSpec};
use cvi::diagram::Model;
use cvi::engine::{configure_threads, exact_value, mono_run, Algorithm, Cvi, CviConfig, Report};
use cvi::pareto::{CacheDump, ParetoCache};

#[derive(Parser)]
#[command(name = "cvi", version, about = "Compositional value iteration for string diagrams of open MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a weighted reachability query.
    Run(RunArgs),
    /// Write a generated benchmark as a model file.
    Gen(GenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Oracle {
    Off,
    ExactCompare,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["model", "bench"])))]
struct RunArgs {
    /// Model file in the JSON interchange format.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Generated benchmark, e.g. `chains:10:dice2`.
    #[arg(long)]
    bench: Option<String>,
    /// Overrides the seed of a generated benchmark.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "ocvi-exact", value_parser = parse_algorithm)]
    algorithm: Algorithm,
    /// Defaults to the model's query epsilon, else 1e-4.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 1e-5)]
    eta: f64,
    #[arg(long, default_value_t = 10)]
    check_period: u64,
    #[arg(long, default_value_t = 200)]
    cache_cutoff: u64,
    #[arg(long, default_value_t = 100_000)]
    iteration_cap: u64,
    /// Wall-clock budget in seconds.
    #[arg(long)]
    time_cap: Option<f64>,
    /// Query entrance by flattened name; defaults to the model's.
    #[arg(long)]
    entrance: Option<String>,
    /// Print the JSON report instead of a table.
    #[arg(long)]
    json: bool,
    #[arg(long, value_enum, default_value = "off")]
    oracle: Oracle,
    /// Worker threads for uncached local solves.
    #[arg(long, env = "CVI_THREADS")]
    threads: Option<usize>,
    /// Pareto cache to start from.
    #[arg(long)]
    cache_in: Option<PathBuf>,
    /// Where to write the Pareto cache after the run.
    #[arg(long)]
    cache_out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// Benchmark spec, e.g. `rooms:3:rms:unsafe,windy`.
    #[arg(long)]
    bench: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: cvi::Error| e.to_string())
}

fn bench_spec(text: &str, seed: Option<u64>) -> Result<BenchSpec> {
    let spec: BenchSpec = text.parse()?;
    Ok(match seed {
        Some(s) => spec.with_seed(s),
        None => spec,
    })
}

fn load(args: &RunArgs) -> Result<Model> {
    let mut model = match (&args.model, &args.bench) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Model::from_json(&text).with_context(|| format!("loading {}", path.display()))?
        }
        (None, Some(spec)) => {
            let bench = gen_diagram(&bench_spec(spec, args.seed)?)?;
            Model::from_json(&bench.model_file().to_json_compact())?
        }
        (None, None) => bail!("either --model or --bench is required"),
    };
    if let Some(name) = &args.entrance {
        let names = model.index.global_entrance_names(&model.diagram);
        model.query.entrance =
            names.iter().position(|n| n == name).with_context(|| format!("{name:?} is not a global entrance"))?;
    }
    Ok(model)
}

fn run(args: RunArgs) -> Result<ExitCode> {
    if let Some(n) = args.threads {
        configure_threads(n)?;
    }
    let model = load(&args)?;
    let base = CviConfig {
        epsilon: args.epsilon.or(model.query.epsilon).unwrap_or(1e-4),
        eta: args.eta,
        check_period: args.check_period,
        cache_cutoff: args.cache_cutoff,
        iteration_cap: args.iteration_cap,
        time_cap: args.time_cap,
        ..CviConfig::default()
    };
    let cfg = args.algorithm.configure(base);
    cfg.validate()?;
    let (d, idx, w) = (&model.diagram, &model.index, &model.query.weights);
    let result = if args.algorithm == Algorithm::Mono {
        mono_run(d, w, &cfg)?
    } else {
        let mut engine = Cvi::new(d, idx, w, cfg.clone())?;
        if let Some(path) = &args.cache_in {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let dump: CacheDump = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            engine = engine.with_cache(ParetoCache::from_dump(&dump)?);
        }
        let result = engine.run()?;
        if let Some(path) = &args.cache_out {
            let text = serde_json::to_string_pretty(&engine.cache().dump())?;
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        }
        result
    };
    let names = idx.global_entrance_names(d);
    let mut report = Report::new(args.algorithm, &cfg, &names, model.query.entrance, &result);
    if let Oracle::ExactCompare = args.oracle {
        let exact = exact_value(d, w)?;
        report = report.with_oracle(&exact[model.query.entrance]);
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", report.table());
    }
    if report.oracle.as_ref().is_some_and(|o| report.converged && !o.within_epsilon) {
        bail!("exact value lies outside [lower, lower + epsilon]");
    }
    Ok(if report.converged { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn gen(args: GenArgs) -> Result<ExitCode> {
    let bench = gen_diagram(&bench_spec(&args.bench, args.seed)?)?;
    let text = bench.model_file().to_json();
    match &args.output {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => println!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Gen(args) => gen(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
