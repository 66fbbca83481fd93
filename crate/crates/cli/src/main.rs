//! `stackrl`: run, sweep and inspect leader-follower learning experiments.
//!
//! Exit statuses:
//!
//! | status | meaning                                          |
//! |--------|--------------------------------------------------|
//! | 0      | success                                          |
//! | 1      | any other failure (bad argument values, I/O)     |
//! | 2      | unknown verb or malformed command line           |
//! | 3      | unreadable or invalid config, model or CSV input |
//! | 4      | invariant violation, or a failed `validate` check |
//!
//! Failures print one line to stderr: `error class=<class> message=<text>`.

mod validate;

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stackrl::config::Document;
use stackrl::env::model_to_text;
use stackrl::harness::{
    greedy_failure_fixture, read_csv, run_on_model, run_sweep, summarize, write_csv, write_sweep_csv,
    write_sweep_summary, ExperimentConfig, SweepGrid,
};

/// Environment variable naming the default output directory.
const OUT_DIR_ENV: &str = "STACKRL_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "results";

#[derive(Parser)]
#[command(name = "stackrl", version, about = "Leader-follower LSVI-UCB experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its regret trace.
    Run(RunArgs),
    /// Run every cell of the config's [sweep] grid.
    Sweep(RunArgs),
    /// Check the library's invariants and print one line per property.
    Validate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare greedy and soft-max followers on the greedy-failure tables.
    Fixture {
        #[arg(long, default_value_t = 10.0)]
        m: f64,
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        #[arg(long = "alpha-f", default_value_t = 1.0)]
        alpha_f: f64,
    },
    /// Summarize a regret CSV.
    Report {
        csv: PathBuf,
        /// Uniform-baseline trace to compare final-half growth against.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Fraction of episodes forming the early window.
        #[arg(long, default_value_t = 0.1)]
        early_fraction: f64,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Master seed; same as `--set run.seed=N`.
    #[arg(long)]
    seed: Option<u64>,
    /// Parent of the per-run directory; defaults to $STACKRL_OUT_DIR, then ./results.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `section.key=value` override, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

struct Failure {
    status: u8,
    class: &'static str,
    message: String,
}

impl Failure {
    fn new(status: u8, class: &'static str, message: impl Into<String>) -> Self {
        Self { status, class, message: message.into() }
    }

    /// Failure while reading user-supplied input.
    fn input(e: stackrl::Error) -> Self {
        let status = match e {
            stackrl::Error::InvariantViolation(_) => 4,
            _ => 3,
        };
        Self::new(status, e.class(), e.to_string())
    }

    fn runtime(e: stackrl::Error) -> Self {
        let status = match e {
            stackrl::Error::InvariantViolation(_) => 4,
            _ => 1,
        };
        Self::new(status, e.class(), e.to_string())
    }

    fn io(e: std::io::Error, what: &Path) -> Self {
        Self::new(1, "io", format!("{}: {e}", what.display()))
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let class = match e.kind() {
                ErrorKind::InvalidSubcommand => "unknown_verb",
                _ => "usage",
            };
            let first = e.to_string().lines().next().unwrap_or("").to_string();
            eprintln!("error class={class} message={first}");
            return ExitCode::from(2);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error class={} message={}", f.class, f.message.replace('\n', " "));
            ExitCode::from(f.status)
        }
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Run(args) => run(&args),
        Command::Sweep(args) => sweep(&args),
        Command::Validate { seed } => {
            let failed = validate::run_all(seed);
            if failed == 0 {
                Ok(())
            } else {
                Err(Failure::new(4, "validation_failed", format!("{failed} properties failed")))
            }
        }
        Command::Fixture { m, eps, alpha_f } => {
            let r = greedy_failure_fixture(m, eps, alpha_f).map_err(Failure::runtime)?;
            println!("m {}", r.m);
            println!("eps {}", r.eps);
            println!("alpha_f {}", r.alpha_f);
            println!("greedy_discrepancy {}", r.greedy_discrepancy);
            println!("softmax_discrepancy {}", r.softmax_discrepancy);
            println!("bound {}", r.bound);
            println!("softmax_within_bound {}", r.within_bound());
            println!("max_abs_q_leader {}", r.max_abs_q_leader);
            Ok(())
        }
        Command::Report { csv, baseline, early_fraction } => report(&csv, baseline.as_deref(), early_fraction),
    }
}

/// Config file plus overrides, and the document actually used.
fn load_config(args: &RunArgs) -> CliResult<(ExperimentConfig, Document)> {
    let text = fs::read_to_string(&args.config).map_err(|e| {
        Failure::new(3, "unreadable_config", format!("{}: {e}", args.config.display()))
    })?;
    let mut doc = Document::parse(&text).map_err(Failure::input)?;
    for spec in &args.overrides {
        doc.apply_override(spec).map_err(Failure::input)?;
    }
    if let Some(seed) = args.seed {
        doc.section_mut("run").set("seed", seed.to_string());
    }
    let base = args.config.parent().unwrap_or(Path::new("."));
    let config = ExperimentConfig::from_document(&doc, base).map_err(Failure::input)?;
    Ok((config, doc))
}

/// Creates `<parent>/<verb>-<UTC timestamp>[-n]`.
fn run_directory(args: &RunArgs, verb: &str) -> CliResult<PathBuf> {
    let parent = args
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    fs::create_dir_all(&parent).map_err(|e| Failure::io(e, &parent))?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    for n in 0.. {
        let name = if n == 0 {
            format!("{verb}-{stamp}")
        } else {
            format!("{verb}-{stamp}-{n}")
        };
        let dir = parent.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Failure::io(e, &dir)),
        }
    }
    unreachable!()
}

fn write_provenance(dir: &Path, config: &ExperimentConfig, extra: Option<&Document>) -> CliResult<()> {
    let mut doc = config.to_document();
    if let Some(sweep) = extra.and_then(|d| d.section("sweep")) {
        doc.sections.push(sweep.clone());
    }
    let path = dir.join("effective_config.cfg");
    fs::write(&path, doc.to_text()).map_err(|e| Failure::io(e, &path))?;
    let info = format!(
        "package = {} {}\nprofile = {}\ntarget = {}-{}\ncommand = {}\n",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
        if cfg!(debug_assertions) { "debug" } else { "release" },
        std::env::consts::ARCH,
        std::env::consts::OS,
        std::env::args().collect::<Vec<_>>().join(" "),
    );
    let path = dir.join("build_info.txt");
    fs::write(&path, info).map_err(|e| Failure::io(e, &path))
}

fn create(path: &Path) -> CliResult<BufWriter<fs::File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Failure::io(e, parent))?;
    }
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::io(e, path))
}

fn run(args: &RunArgs) -> CliResult<()> {
    let (config, _) = load_config(args)?;
    let model = config.load_model().map_err(Failure::input)?;
    let dir = run_directory(args, "run")?;
    write_provenance(&dir, &config, None)?;
    let path = dir.join("model.txt");
    fs::write(&path, model_to_text(&model)).map_err(|e| Failure::io(e, &path))?;
    let records = run_on_model(&config, &model).map_err(Failure::runtime)?;
    let mut targets = vec![dir.join("regret.csv")];
    targets.extend(config.output.clone());
    for path in &targets {
        write_csv(&records, create(path)?).map_err(Failure::runtime)?;
    }
    let last = records.last().expect("at least one episode");
    println!("run_dir {}", dir.display());
    println!("episodes {}", last.k);
    println!("leader_cum {}", last.leader_cum);
    println!("follower_cum {}", last.follower_cum);
    Ok(())
}

fn sweep(args: &RunArgs) -> CliResult<()> {
    let (config, doc) = load_config(args)?;
    let grid = SweepGrid::from_document(&doc).map_err(Failure::input)?;
    let dir = run_directory(args, "sweep")?;
    write_provenance(&dir, &config, Some(&doc))?;
    let cells = run_sweep(&config, &grid);
    let mut targets = vec![dir.join("sweep.csv")];
    targets.extend(config.output.clone());
    for path in &targets {
        write_sweep_csv(&cells, create(path)?).map_err(Failure::runtime)?;
    }
    write_sweep_summary(&cells, create(&dir.join("sweep_summary.csv"))?).map_err(Failure::runtime)?;
    let failed = cells.iter().filter(|c| c.outcome.is_err()).count();
    println!("run_dir {}", dir.display());
    println!("cells {}", cells.len());
    println!("failed_cells {failed}");
    for cell in cells.iter().filter(|c| c.outcome.is_err()) {
        if let Err(e) = &cell.outcome {
            eprintln!("cell {} failed: class={} message={e}", cell.index, e.class());
        }
    }
    Ok(())
}

fn read_trace(path: &Path) -> CliResult<Vec<stackrl::harness::RegretRecord>> {
    let file = fs::File::open(path)
        .map_err(|e| Failure::new(3, "unreadable_csv", format!("{}: {e}", path.display())))?;
    read_csv(file).map_err(|e| Failure::new(3, e.class(), format!("{}: {e}", path.display())))
}

fn report(path: &Path, baseline: Option<&Path>, early_fraction: f64) -> CliResult<()> {
    let records = read_trace(path)?;
    let s = summarize(&records, early_fraction).map_err(Failure::input)?;
    println!("episodes {}", s.episodes);
    println!("leader_cum {}", s.leader_final);
    println!("follower_cum {}", s.follower_final);
    println!("early_episodes {}", s.early_episodes);
    println!("leader_sublinearity_ratio {}", s.leader_ratio);
    println!("follower_sublinearity_ratio {}", s.follower_ratio);
    println!("leader_final_half {}", s.leader_final_half);
    println!("follower_final_half {}", s.follower_final_half);
    if let Some(baseline) = baseline {
        let b = summarize(&read_trace(baseline)?, early_fraction).map_err(Failure::input)?;
        println!("baseline_leader_final_half {}", b.leader_final_half);
        println!("baseline_follower_final_half {}", b.follower_final_half);
        println!("leader_growth_ratio {}", b.leader_final_half / s.leader_final_half);
        println!("follower_growth_ratio {}", b.follower_final_half / s.follower_final_half);
    }
    Ok(())
}
