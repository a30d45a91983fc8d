//! `wamlab`: run suites, analyze datasets, run named experiments and bundle reports.
//!
//! Exit status is 0 on success, 1 when a run fails and 2 for usage or configuration errors.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use wamlab::config::{Experiment, Overrides, RunConfig};
use wamlab::harness::analysis::{
    collapse, mitigation, separability, summarize, utility_gap, write_collapse, write_mitigation, write_scaling,
    write_separability, write_utility, SeparabilityReport, SummaryRow,
};
use wamlab::harness::io::{read_dataset, read_meta, write_dataset, SuiteManifest};
use wamlab::harness::{run_suite, Alignment, RunDataset, RunOptions, SuiteGrid};
use wamlab::selection::Strategy;

const DEFAULT_OUT: &str = "out";
const K_FOLDS: usize = 5;

#[derive(Parser)]
#[command(name = "wamlab", version, about = "Action-state consistency laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the suite a config describes and write the dataset.
    Run(RunArgs),
    /// Write separability reports for an existing dataset.
    Analyze(AnalyzeArgs),
    /// Run one experiment and write its CSVs to <out>/<name>/.
    Experiment {
        /// separability, collapse, utility, scaling or mitigation.
        #[arg(value_parser = parse_experiment)]
        name: Experiment,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run every configured experiment and write a plain-text summary next to their CSVs.
    Report(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Seeds per cell.
    #[arg(long)]
    seeds: Option<u64>,
    /// Selection strategies, comma separated or repeated.
    #[arg(long, value_delimiter = ',')]
    strategy: Vec<String>,
    /// Candidate counts, comma separated or repeated.
    #[arg(long, value_delimiter = ',')]
    candidates: Vec<usize>,
    /// Consistency sharpness.
    #[arg(long)]
    alpha: Option<f64>,
    /// Softmax temperature of the consensus weights.
    #[arg(long)]
    tau: Option<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Dataset directory or its episodes.jsonl.
    dataset: PathBuf,
    /// Seed for the cross-validation folds; defaults to the dataset's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the dataset's directory.
    #[arg(long, env = "WAMLAB_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OutputArgs {
    /// Output directory; overrides output_dir from the config.
    #[arg(long, env = "WAMLAB_OUT")]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
}

fn parse_experiment(s: &str) -> Result<Experiment, String> {
    s.parse().map_err(|e: wamlab::Error| e.to_string())
}

/// Bad input from the user, reported with exit status 2.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(e: impl fmt::Display) -> anyhow::Error {
    Usage(e.to_string()).into()
}

fn is_usage(err: &anyhow::Error) -> bool {
    err.chain().any(|c| {
        c.downcast_ref::<Usage>().is_some()
            || matches!(c.downcast_ref::<wamlab::Error>(), Some(wamlab::Error::Config(_)))
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Analyze(args) => cmd_analyze(&args),
        Command::Experiment { name, run } => cmd_experiment(name, &run),
        Command::Report(args) => cmd_report(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_usage(&e) { 2 } else { 1 })
        }
    }
}

fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config).map_err(usage)?;
    let strategies = if args.strategy.is_empty() {
        None
    } else {
        Some(
            args.strategy
                .iter()
                .map(|s| s.parse::<Strategy>())
                .collect::<wamlab::Result<Vec<_>>>()
                .map_err(usage)?,
        )
    };
    let overrides = Overrides {
        master_seed: args.seed,
        seeds: args.seeds,
        strategies,
        candidates: (!args.candidates.is_empty()).then(|| args.candidates.clone()),
        alpha: args.alpha,
        tau: args.tau,
    };
    cfg.apply(&overrides).map_err(usage)?;
    Ok(cfg)
}

fn out_dir(args: &OutputArgs, cfg: &RunConfig) -> PathBuf {
    args.out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn execute(grid: &SuiteGrid, cfg: &RunConfig, jobs: Option<usize>) -> wamlab::Result<RunDataset> {
    run_suite(grid, cfg.fingerprint.clone(), RunOptions { jobs })
}

fn save(dir: &Path, grid: &SuiteGrid, ds: &RunDataset) -> Result<()> {
    let (jsonl, _) = write_dataset(dir, ds, SuiteManifest::of(grid), Some(timestamp()))
        .with_context(|| format!("writing dataset to {}", dir.display()))?;
    eprintln!("wrote {}", jsonl.display());
    Ok(())
}

fn summary_line(r: &SummaryRow, multi_preset: bool) -> String {
    let preset = if multi_preset {
        format!("preset={} ", r.preset)
    } else {
        String::new()
    };
    format!(
        "{preset}strategy={} N={} episodes={} success_rate={:.3} mean_consistency={:.6}",
        r.strategy, r.n_candidates, r.episodes, r.success_rate, r.mean_consistency
    )
}

fn summary_lines(ds: &RunDataset) -> Vec<String> {
    let rows = summarize(ds);
    let multi = rows.iter().any(|r| r.preset != rows[0].preset);
    rows.iter().map(|r| summary_line(r, multi)).collect()
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let grid = cfg.grid().map_err(usage)?;
    let ds = execute(&grid, &cfg, args.output.jobs)?;
    save(&out_dir(&args.output, &cfg), &grid, &ds)?;
    for line in summary_lines(&ds) {
        println!("{line}");
    }
    Ok(())
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| format!("{v:.4}"))
}

fn separability_lines(r: &SeparabilityReport) -> Vec<String> {
    let count = |a: Alignment| r.alignment.values().filter(|&&x| x == a).count();
    vec![format!(
        "pooled_d={} auc={} aligned={} misaligned={} undetermined={}",
        fmt_opt(r.pooled_d),
        fmt_opt(r.cv.as_ref().map(|c| c.roc.auc)),
        count(Alignment::Aligned),
        count(Alignment::Misaligned),
        count(Alignment::Undetermined),
    )]
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<()> {
    if !args.dataset.exists() {
        return Err(usage(format!("no dataset at {}", args.dataset.display())));
    }
    let ds = read_dataset(&args.dataset).with_context(|| format!("reading {}", args.dataset.display()))?;
    let meta = read_meta(&args.dataset)?;
    let seed = args.seed.or(meta.map(|m| m.manifest.master_seed)).unwrap_or(0);
    let out = match &args.out {
        Some(o) => o.clone(),
        None if args.dataset.is_dir() => args.dataset.clone(),
        None => args.dataset.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let report = separability(&ds, seed, K_FOLDS);
    warn_all(&report.warnings);
    for p in write_separability(&out, &report)? {
        eprintln!("wrote {}", p.display());
    }
    for line in separability_lines(&report) {
        println!("{line}");
    }
    Ok(())
}

/// Datasets already run during this command, keyed by their grid.
type Cache = BTreeMap<String, RunDataset>;

fn run_experiment(
    e: Experiment,
    cfg: &RunConfig,
    out: &Path,
    jobs: Option<usize>,
    cache: &mut Cache,
) -> Result<Vec<String>> {
    let grid = cfg.experiment_grid(e).map_err(usage)?;
    let key = grid.fingerprint();
    if !cache.contains_key(&key) {
        let ds = execute(&grid, cfg, jobs)?;
        cache.insert(key.clone(), ds);
    }
    let ds = &cache[&key];
    let dir = out.join(e.name());
    save(&dir, &grid, ds)?;
    let mut lines = vec![];
    let written = match e {
        Experiment::Separability => {
            let r = separability(ds, cfg.master_seed, K_FOLDS);
            warn_all(&r.warnings);
            lines.extend(separability_lines(&r));
            write_separability(&dir, &r)?
        }
        Experiment::Collapse => {
            let r = collapse(ds);
            for missing in &r.missing_cells {
                eprintln!("warning: no episodes in cell {missing}");
            }
            for c in &r.cells {
                lines.push(format!(
                    "cell={} episodes={} late_delta_z={} mean_delta_z={}",
                    c.name(),
                    c.episodes,
                    c.late_delta_z.map_or("NA".into(), |v| format!("{v:.4e}")),
                    c.mean_delta_z.map_or("NA".into(), |v| format!("{v:.4e}")),
                ));
            }
            lines.push(format!(
                "pearson={} spearman={} misaligned_tasks={}",
                fmt_opt(r.correlation.map(|c| c.pearson)),
                fmt_opt(r.correlation.map(|c| c.spearman)),
                r.misaligned_tasks()
            ));
            write_collapse(&dir, &r)?
        }
        Experiment::Utility => match utility_gap(ds) {
            Ok(r) => {
                lines.push(format!(
                    "value_gap_positive={:.3} sign_agreement={:.3}",
                    r.value_positive, r.sign_agreement
                ));
                write_utility(&dir, &r)?
            }
            Err(err @ wamlab::Error::InsufficientData(_)) => {
                eprintln!("warning: utility gap unavailable: {err}");
                vec![]
            }
            Err(err) => return Err(err.into()),
        },
        Experiment::Scaling => {
            let rows = summarize(ds);
            lines.extend(summary_lines(ds));
            write_scaling(&dir, &rows)?
        }
        Experiment::Mitigation => {
            let mut paths = vec![];
            for &s in grid.strategies.iter().filter(|&&s| s != Strategy::Single) {
                for &n in &grid.candidates {
                    let r = mitigation(ds, s, n)?;
                    lines.push(format!(
                        "strategy={} N={} pairs={} late_positive={:.3}",
                        s, n, r.pairs, r.late_positive
                    ));
                    paths.extend(write_mitigation(&dir, &r)?);
                }
            }
            paths
        }
    };
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(lines)
}

fn cmd_experiment(e: Experiment, args: &RunArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let out = out_dir(&args.output, &cfg);
    for line in run_experiment(e, &cfg, &out, args.output.jobs, &mut Cache::new())? {
        println!("{line}");
    }
    Ok(())
}

fn cmd_report(args: &RunArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let out = out_dir(&args.output, &cfg);
    // with no experiments listed, run every one the config supports
    let (experiments, explicit) = if cfg.experiments.is_empty() {
        (Experiment::ALL.to_vec(), false)
    } else {
        (cfg.experiments.clone(), true)
    };
    let mut cache = Cache::new();
    let mut text = vec![
        format!("config {}", args.config.display()),
        format!("fingerprint {}", cfg.fingerprint),
        format!("master_seed {} seeds {}", cfg.master_seed, cfg.seeds),
    ];
    for e in experiments {
        if !explicit {
            if let Err(err) = cfg.experiment_grid(e) {
                eprintln!("skipping {e}: {err}");
                continue;
            }
        }
        text.push(String::new());
        text.push(format!("[{e}]"));
        text.extend(run_experiment(e, &cfg, &out, args.output.jobs, &mut cache)?);
    }
    let path = out.join("summary.txt");
    std::fs::create_dir_all(&out)?;
    std::fs::write(&path, text.join("\n") + "\n").with_context(|| format!("writing {}", path.display()))?;
    print!("{}", text.join("\n") + "\n");
    eprintln!("wrote {}", path.display());
    Ok(())
}
