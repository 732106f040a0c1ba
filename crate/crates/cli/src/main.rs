use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use perception_safety::fixture::{self, Archetype, Fault};
use perception_safety::report::{format_comparison, format_table, parse_json_lines, to_json_lines};
use perception_safety::scenario::kitti::{import_kitti_tracklets, KittiImportOptions};
use perception_safety::scenario::{perception_log_to_string, scenario_to_string};
use perception_safety::{evaluate_scenario, load_perception_log, load_scenario, EvaluationConfig, SafetyReport};

const EXIT_INPUT: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser)]
#[command(name = "psafety", version, about = "Safety-oriented evaluation of perception output")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate scenario/log pairs and print one report per pair
    Evaluate(EvaluateArgs),
    /// Write a synthetic scenario and a perception log with injected faults
    Generate(GenerateArgs),
    /// Compare reports side by side with deltas against the first
    Compare(CompareArgs),
    /// Convert KITTI tracklet labels and OXTS odometry into a scenario file
    ImportKitti(ImportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    JsonLines,
}

#[derive(clap::Args)]
struct EvaluateArgs {
    /// Scenario file; repeat together with --log for several pairs
    #[arg(long, required = true)]
    scenario: Vec<PathBuf>,
    /// Perception log file, paired with --scenario in the given order
    #[arg(long, required = true)]
    log: Vec<PathBuf>,
    /// TOML configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration value, e.g. `weights.w_T=0`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Write the output here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// Worker threads (defaults to the number of CPUs)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(clap::Args)]
struct GenerateArgs {
    #[arg(long)]
    archetype: String,
    /// drop=ID, miss=RATE, delay=FRAMES, jitter=SIGMA, swap=A:B@FRAME or latency=SECONDS
    #[arg(long = "fault")]
    faults: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct CompareArgs {
    /// JSON-lines report files; every report in them takes part
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ImportArgs {
    /// tracklet_labels.xml
    #[arg(long)]
    tracklets: PathBuf,
    /// OXTS file or directory of per-frame OXTS files
    #[arg(long)]
    oxts: PathBuf,
    #[arg(long, default_value = "kitti")]
    name: String,
    #[arg(long)]
    out: PathBuf,
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<perception_safety::Error> for Failure {
    fn from(e: perception_safety::Error) -> Self {
        let code = if e.is_config() { EXIT_CONFIG } else { EXIT_INPUT };
        Failure {
            code,
            error: e.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure {
            code: EXIT_INPUT,
            error,
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn write_output(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn read_text(path: &Path) -> CliResult<String> {
    Ok(fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)
}

fn load_config(args: &EvaluateArgs) -> CliResult<EvaluationConfig> {
    let text = match &args.config {
        Some(p) => Some(fs::read_to_string(p).map_err(|e| Failure {
            code: EXIT_CONFIG,
            error: anyhow!("{}: {e}", p.display()),
        })?),
        None => None,
    };
    Ok(EvaluationConfig::from_sources(text.as_deref(), &args.overrides)?)
}

fn evaluate_pair(scenario: &Path, log: &Path, cfg: &EvaluationConfig) -> perception_safety::Result<SafetyReport> {
    let scenario = load_scenario(scenario)?;
    let log = load_perception_log(log, &scenario)?;
    evaluate_scenario(&scenario, &log, cfg)
}

fn run_evaluate(args: EvaluateArgs) -> CliResult<()> {
    if args.scenario.len() != args.log.len() {
        return Err(anyhow!(
            "got {} --scenario and {} --log arguments; they must pair up",
            args.scenario.len(),
            args.log.len()
        )
        .into());
    }
    let cfg = load_config(&args)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().context("starting worker threads")?;
    let results: Vec<_> = pool.install(|| {
        args.scenario
            .par_iter()
            .zip(args.log.par_iter())
            .map(|(s, l)| evaluate_pair(s, l, &cfg))
            .collect()
    });
    let reports = results.into_iter().collect::<perception_safety::Result<Vec<_>>>()?;
    for r in &reports {
        for w in &r.warnings {
            eprintln!("warning: {}: {w}", r.scenario);
        }
    }
    let text = match args.format {
        Format::Table => format_table(&reports),
        Format::JsonLines => to_json_lines(&reports),
    };
    write_output(args.out.as_deref(), &text)
}

fn run_generate(args: GenerateArgs) -> CliResult<()> {
    let archetype: Archetype = args.archetype.parse()?;
    let faults = args
        .faults
        .iter()
        .map(|f| f.parse::<Fault>())
        .collect::<perception_safety::Result<Vec<_>>>()?;
    let (scenario, log) = fixture::generate(archetype, &faults, args.seed);
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let scenario_path = args.out.join(format!("{archetype}.scenario.jsonl"));
    let log_path = args.out.join(format!("{archetype}.log.jsonl"));
    fs::write(&scenario_path, scenario_to_string(&scenario))
        .with_context(|| format!("writing {}", scenario_path.display()))?;
    fs::write(&log_path, perception_log_to_string(&log)).with_context(|| format!("writing {}", log_path.display()))?;
    println!("{}\n{}", scenario_path.display(), log_path.display());
    Ok(())
}

fn run_compare(args: CompareArgs) -> CliResult<()> {
    let mut reports = Vec::new();
    for p in &args.reports {
        reports.extend(parse_json_lines(&read_text(p)?, &p.display().to_string())?);
    }
    write_output(args.out.as_deref(), &format_comparison(&reports)?)
}

fn read_oxts(path: &Path) -> CliResult<String> {
    if !path.is_dir() {
        return read_text(path);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .with_context(|| format!("listing {}", path.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    let mut text = String::new();
    for f in files {
        text.push_str(read_text(&f)?.trim_end());
        text.push('\n');
    }
    Ok(text)
}

fn run_import(args: ImportArgs) -> CliResult<()> {
    let options = KittiImportOptions {
        name: args.name,
        ..KittiImportOptions::default()
    };
    let scenario = import_kitti_tracklets(&read_text(&args.tracklets)?, &read_oxts(&args.oxts)?, &options)?;
    for w in &scenario.warnings {
        eprintln!("warning: {w}");
    }
    write_output(Some(&args.out), &scenario_to_string(&scenario))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Evaluate(a) => run_evaluate(a),
        Command::Generate(a) => run_generate(a),
        Command::Compare(a) => run_compare(a),
        Command::ImportKitti(a) => run_import(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
