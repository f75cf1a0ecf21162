//! Command-line front end: single runs, multi-seed comparisons and reports.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{SimConfig, Strategy};
use crate::engine::{self, client_for, DecisionRecord, RunOutcome, RunSummary};
use crate::error::{Error, Result};
use crate::selection::Method;

#[derive(Debug, Parser)]
#[command(
    name = "swarm-explore",
    version,
    about = "Multi-robot frontier exploration simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation.
    Run(RunArgs),
    /// Run several methods over several seeds and compare explored area.
    Compare(CompareArgs),
    /// Summarize finished runs from their summary.json files.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct Overrides {
    /// JSON config file.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub robots: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Overrides {
    fn load(&self) -> Result<SimConfig> {
        let mut cfg = SimConfig::load(&self.config)?;
        if let Some(steps) = self.steps {
            cfg.total_steps = steps;
            cfg.warmup_steps = cfg.warmup_steps.min(steps);
        }
        if let Some(n) = self.robots {
            cfg.n_robots = n;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Overrides,
    #[arg(long)]
    pub seed: Option<u64>,
    /// baseline, llm or mock-heuristic.
    #[arg(long)]
    pub method: Option<Strategy>,
    /// Write a map and frontier snapshot every this many steps.
    #[arg(long)]
    pub snapshot_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Overrides,
    #[arg(long, value_delimiter = ',', default_value = "baseline,mock-heuristic")]
    pub methods: Vec<Strategy>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    pub seeds: Vec<u64>,
    /// Also print mean target features per method (model methods: after
    /// warm-up only).
    #[arg(long)]
    pub stats: bool,
    /// Runs executed in parallel.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directories, each holding a summary.json.
    #[arg(required = true)]
    pub dirs: Vec<PathBuf>,
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Run(args) => cmd_run(&args, out),
        Command::Compare(args) => cmd_compare(&args, out).map(|_| ()),
        Command::Report(args) => cmd_report(&args.dirs, out),
    }
}

fn say(out: &mut dyn Write, line: std::fmt::Arguments<'_>) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))
}

pub fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = args.common.load()?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(method) = args.method {
        cfg.method = method;
    }
    if args.snapshot_every.is_some() {
        cfg.snapshot_every = args.snapshot_every;
    }
    let outcome = engine::run(cfg)?;
    let s = &outcome.summary;
    say(
        out,
        format_args!(
            "{} seed {}: {} steps, explored {} cells, {} decisions ({} model, {} fallback) in {:.2} s -> {}",
            s.config.method,
            s.config.seed,
            s.steps,
            s.final_explored_cells,
            outcome.decisions.len(),
            s.llm_decisions,
            s.llm_fallback_decisions,
            s.wall_time_secs,
            s.config.out_dir.display()
        ),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodStats {
    pub method: Strategy,
    pub runs: usize,
    pub final_explored_mean: f64,
    pub final_explored_std: f64,
    pub decisions: usize,
    pub mean_n_frontier_neighbors: f64,
    pub mean_n_occupied_neighbors: f64,
    pub mean_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub seeds: Vec<u64>,
    pub methods: Vec<MethodStats>,
    /// Final explored area of the last method over the first.
    pub ratio: Option<f64>,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn decision_stats(decisions: &[&DecisionRecord]) -> (f64, f64, f64) {
    let n = decisions.len() as f64;
    let mean = |f: &dyn Fn(&DecisionRecord) -> f64| decisions.iter().map(|d| f(d)).sum::<f64>() / n;
    (
        mean(&|d| d.n_frontier_neighbors as f64),
        mean(&|d| d.n_occupied_neighbors as f64),
        mean(&|d| d.distance),
    )
}

pub fn cmd_compare(args: &CompareArgs, out: &mut dyn Write) -> Result<Comparison> {
    let base = args.common.load()?;
    if args.methods.len() < 2 || args.seeds.is_empty() {
        return Err(Error::Config(
            "compare needs at least two methods and one seed".into(),
        ));
    }
    let distinct: std::collections::BTreeSet<u64> = args.seeds.iter().copied().collect();
    if distinct.len() != args.seeds.len() {
        return Err(Error::Config("compare seeds must be distinct".into()));
    }
    let root = base.out_dir.clone();
    let mut configs = Vec::new();
    for (mi, &method) in args.methods.iter().enumerate() {
        for &seed in &args.seeds {
            let mut cfg = base.clone();
            cfg.method = method;
            cfg.seed = seed;
            cfg.out_dir = root
                .join(format!("{mi}_{method}"))
                .join(format!("seed_{seed}"));
            configs.push(cfg);
        }
        // surface a missing key before any run starts
        let mut probe = base.clone();
        probe.method = method;
        probe.validate()?;
        client_for(&probe)?;
    }

    let outcomes = run_all(configs, args.jobs.max(1))?;
    let per_method: Vec<&[RunOutcome]> = outcomes.chunks(args.seeds.len()).collect();

    let mut methods = Vec::new();
    for (&method, runs) in args.methods.iter().zip(&per_method) {
        let finals: Vec<f64> = runs
            .iter()
            .map(|o| o.summary.final_explored_cells as f64)
            .collect();
        let (mean, std) = mean_std(&finals);
        // warm-up decisions of model strategies come from the baseline sampler
        let decisions: Vec<&DecisionRecord> = runs
            .iter()
            .flat_map(|o| &o.decisions)
            .filter(|d| !method.uses_llm_pipeline() || d.method != Method::Baseline)
            .collect();
        let (nf, no, dist) = decision_stats(&decisions);
        methods.push(MethodStats {
            method,
            runs: runs.len(),
            final_explored_mean: mean,
            final_explored_std: std,
            decisions: decisions.len(),
            mean_n_frontier_neighbors: nf,
            mean_n_occupied_neighbors: no,
            mean_distance: dist,
        });
    }
    let ratio = match methods.as_slice() {
        [first, .., last] if first.final_explored_mean > 0.0 => {
            Some(last.final_explored_mean / first.final_explored_mean)
        }
        _ => None,
    };
    let cmp = Comparison {
        seeds: args.seeds.clone(),
        methods,
        ratio,
    };
    std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    write_comparison_csv(
        &root.join("comparison.csv"),
        &args.methods,
        &per_method,
        ratio,
    )?;

    for m in &cmp.methods {
        say(
            out,
            format_args!(
                "{}: final explored {:.1} ± {:.1} cells over {} seeds",
                m.method, m.final_explored_mean, m.final_explored_std, m.runs
            ),
        )?;
        if args.stats {
            say(
                out,
                format_args!(
                    "{}: {} decisions, mean n_frontier_neighbors {:.3}, mean n_occupied_neighbors {:.3}, mean distance {:.3} m",
                    m.method, m.decisions, m.mean_n_frontier_neighbors, m.mean_n_occupied_neighbors, m.mean_distance
                ),
            )?;
        }
    }
    if let (Some(r), [first, .., last]) = (cmp.ratio, cmp.methods.as_slice()) {
        say(
            out,
            format_args!("ratio {}/{}: {r:.4}", last.method, first.method),
        )?;
    }
    let path = root.join("comparison.json");
    let json = serde_json::to_string_pretty(&cmp).map_err(|source| Error::Json {
        path: path.clone(),
        source,
    })?;
    std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(cmp)
}

fn run_all(configs: Vec<SimConfig>, jobs: usize) -> Result<Vec<RunOutcome>> {
    let slots: Vec<Mutex<Option<Result<RunOutcome>>>> =
        configs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..jobs.min(configs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cfg) = configs.get(i) else { break };
                let r = engine::run(cfg.clone());
                *slots[i].lock().expect("slot lock") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| {
            m.into_inner()
                .expect("slot lock")
                .expect("every run finished")
        })
        .collect()
}

/// One row per step: mean and population stddev of the explored area per
/// method across seeds, then a `ratio` row holding the final-step ratio of
/// the last method over the first.
fn write_comparison_csv(
    path: &Path,
    methods: &[Strategy],
    runs: &[&[RunOutcome]],
    ratio: Option<f64>,
) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_owned(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["step".to_owned()];
    for m in methods {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
    }
    w.write_record(&header).map_err(csv_err)?;
    let steps = runs
        .iter()
        .flat_map(|rs| rs.iter().map(|o| o.metrics.len()))
        .min()
        .unwrap_or(0);
    for step in 0..steps {
        let mut row = vec![step.to_string()];
        for rs in runs {
            let xs: Vec<f64> = rs
                .iter()
                .map(|o| o.metrics[step].ever_explored_cells as f64)
                .collect();
            let (mean, std) = mean_std(&xs);
            row.push(format!("{mean:.3}"));
            row.push(format!("{std:.3}"));
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    let mut row = vec![
        "ratio".to_owned(),
        ratio.map_or("nan".to_owned(), |r| format!("{r:.6}")),
    ];
    row.resize(header.len(), String::new());
    w.write_record(&row).map_err(csv_err)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn cmd_report(dirs: &[PathBuf], out: &mut dyn Write) -> Result<()> {
    let mut finals = Vec::new();
    for dir in dirs {
        let path = dir.join("summary.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let s: RunSummary = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.clone(),
            source,
        })?;
        say(
            out,
            format_args!(
                "{}: method {} seed {} robots {} steps {} explored {} decisions {}/{}/{} (baseline/model/fallback)",
                dir.display(),
                s.config.method,
                s.config.seed,
                s.config.n_robots,
                s.steps,
                s.final_explored_cells,
                s.baseline_decisions,
                s.llm_decisions,
                s.llm_fallback_decisions
            ),
        )?;
        finals.push(s.final_explored_cells as f64);
    }
    let (mean, std) = mean_std(&finals);
    say(
        out,
        format_args!("{} runs: explored {mean:.1} ± {std:.1} cells", finals.len()),
    )
}
