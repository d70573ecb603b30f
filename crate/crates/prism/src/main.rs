use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use prism::commands::{self, Artifacts, Overrides};
use prism::config::{load_config, RunConfig};
use prism::PrismError;
use prism_core::corpus::TaskKind;
use prism_core::eval::FailurePolicy;
use prism_core::generate::Strategy;

#[derive(Parser)]
#[command(name = "prism", version, about = "Multi-perspective retrieval-augmented code completion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: GlobalArgs,
}

#[derive(Args)]
struct GlobalArgs {
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for indexing and evaluation [default: available cores].
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: Option<u64>,
    /// Output directory for all artifacts; overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConfigArg {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Line,
    Body,
}

#[derive(Subcommand)]
enum Command {
    /// Read the corpus; write snippets, tasks and the file split.
    Ingest(ConfigArg),
    /// Build one index per perspective over the snippets.
    Index(ConfigArg),
    /// Train the selectors on the validation tasks.
    Train(ConfigArg),
    /// Evaluate strategies on the test tasks.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated, e.g. `base,single:lexical,union,linucb`.
        #[arg(long, value_delimiter = ',', value_parser = parse_strategy)]
        strategy: Option<Vec<Strategy>>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        repeat: Option<u64>,
    },
    /// Complete one hole and print the completion.
    Complete {
        /// Defaults to `<out>/resolved-config.json`.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        prefix_file: PathBuf,
        #[arg(long)]
        suffix_file: PathBuf,
        #[arg(long, default_value = "linucb", value_parser = parse_strategy)]
        strategy: Strategy,
        #[arg(long, value_enum, default_value = "line")]
        kind: KindArg,
    },
    /// Aggregate a records file into report.csv, report.json and plot-data.json.
    Report {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults to `<out>/records.jsonl`.
        #[arg(long)]
        records: Option<PathBuf>,
    },
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: prism_core::generate::GenerateError| e.to_string())
}

fn load(path: &Path, overrides: &Overrides) -> Result<RunConfig> {
    let mut cfg = load_config(path)?;
    overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

/// The explicit config, else the resolved config echoed under `--out`.
fn load_optional(config: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
    match (config, &overrides.out) {
        (Some(path), _) => load(path, overrides),
        (None, Some(out)) => load(&out.join("resolved-config.json"), overrides),
        (None, None) => Err(PrismError::Usage("pass --config or --out".into()).into()),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn execute(cli: Cli) -> Result<()> {
    let overrides = Overrides { seed: cli.global.seed, out: cli.global.out.clone(), ..Overrides::default() };
    match cli.command {
        Command::Ingest(a) => println!("{}", commands::ingest(&load(&a.config, &overrides)?)?),
        Command::Index(a) => println!("{}", commands::index(&load(&a.config, &overrides)?)?),
        Command::Train(a) => println!("{}", commands::train(&load(&a.config, &overrides)?)?),
        Command::Run { config, strategy, repeat } => {
            let overrides = Overrides { strategies: strategy, repeat: repeat.map(|r| r as usize), ..overrides };
            let outcome = commands::run(&load(&config, &overrides)?)?;
            for (strategy, why) in &outcome.skipped {
                eprintln!("warning: skipped {}: {why}", strategy.name());
            }
            print!("{}", outcome.report.to_csv());
        }
        Command::Complete { config, prefix_file, suffix_file, strategy, kind } => {
            let cfg = load_optional(config.as_deref(), &overrides)?;
            let kind = match kind {
                KindArg::Line => TaskKind::RandomLine,
                KindArg::Body => TaskKind::FunctionBody,
            };
            let name = prefix_file.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let record = commands::complete(&cfg, &read_text(&prefix_file)?, &read_text(&suffix_file)?, &name, kind, &strategy)?;
            println!("{}", record.generation);
        }
        Command::Report { config, records } => {
            let (out, policy) = match load_optional(config.as_deref(), &overrides) {
                Ok(cfg) => (commands::artifacts(&cfg), cfg.eval.failure_policy),
                Err(_) if overrides.out.is_some() => (Artifacts::new(overrides.out.clone().unwrap()), FailurePolicy::Count),
                Err(e) => return Err(e),
            };
            let records = records.unwrap_or_else(|| out.records());
            print!("{}", commands::report(&records, &out, policy)?.to_csv());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let jobs = cli.global.jobs.map_or(0, |j| j as usize);
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = matches!(e.downcast_ref::<PrismError>(), Some(PrismError::Usage(_)));
            ExitCode::from(if usage { 1 } else { 2 })
        }
    }
}
