//! Command-line front end.
//!
//! Every subcommand takes `--config PATH` (JSON, defaults apply when
//! omitted), `--seed N` (overrides the config), and `--out DIR` (overrides
//! the config's output directory). Exit codes: 0 on success, 1 when the
//! config cannot be loaded or fails validation, 2 when a run fails after
//! the config was accepted.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{ModelMode, ObjectiveKind, RunConfig};
use crate::control::{AnalyticDynamics, ControllerPolicy, Dynamics};
use crate::error::{Error, Result};
use crate::experiment::{
    collect, deploy, evaluate, roll_error_sweep, sample_episode, solve_options, train_model,
    validation_triples,
};
use crate::io::{
    self, config_sha256, file_sha256, load_checkpoint, load_dataset, load_eval_summary, Manifest,
    ReportRow,
};
use crate::rng::episode_stream;
use crate::sim::run_episode;

#[derive(Parser)]
#[command(
    name = "rebound",
    version,
    about = "Constrained forward-model learning and control on a ball-paddle simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args)]
pub struct Common {
    /// Run configuration (JSON). Built-in defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand)]
pub enum Command {
    /// Run the planner in the simulator and record one transition per
    /// contact.
    Collect {
        #[command(flatten)]
        common: Common,
    },
    /// Train the configured arm on a collected dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Transition dataset; defaults to dataset.jsonl in the output
        /// directory.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Score a model over seeded episodes.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to deploy; defaults to checkpoint.json in the output
        /// directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Score the flawed analytic baseline instead of a checkpoint.
        #[arg(long, conflicts_with = "checkpoint")]
        analytic: bool,
    },
    /// Retrain and score the residual arm across analytic roll errors.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Transition dataset; defaults to dataset.jsonl in the output
        /// directory.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Run one seeded episode and dump the bounce trace and flight path.
    CtrlDemo {
        #[command(flatten)]
        common: Common,
    },
    /// Merge per-arm summaries from the output directory into one table.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Collect { common }
            | Command::Train { common, .. }
            | Command::Eval { common, .. }
            | Command::Sweep { common, .. }
            | Command::CtrlDemo { common }
            | Command::Report { common } => common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Collect { .. } => "collect",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Sweep { .. } => "sweep",
            Command::CtrlDemo { .. } => "ctrl-demo",
            Command::Report { .. } => "report",
        }
    }
}

/// Stage one: resolve the effective config. Any error here is a config
/// error (exit 1).
fn resolve_config(common: &Common) -> Result<RunConfig> {
    let mut run = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        run.seed = seed;
    }
    if let Some(out) = &common.out {
        run.output_dir = out.clone();
    }
    run.validate()?;
    Ok(run)
}

pub fn arm_label(mode: ModelMode, objective: ObjectiveKind) -> &'static str {
    match (mode, objective) {
        (ModelMode::Full, ObjectiveKind::Unconstrained) => "full_unconstrained",
        (ModelMode::Full, ObjectiveKind::Constrained) => "full_constrained",
        (ModelMode::Residual, ObjectiveKind::Unconstrained) => "residual_unconstrained",
        (ModelMode::Residual, ObjectiveKind::Constrained) => "residual_constrained",
    }
}

pub const ANALYTIC_ARM: &str = "analytic";

struct Outputs {
    dir: PathBuf,
    manifest: Manifest,
}

impl Outputs {
    fn new(run: &RunConfig, command: &str) -> Result<Outputs> {
        fs::create_dir_all(&run.output_dir)?;
        Ok(Outputs {
            dir: run.output_dir.clone(),
            manifest: Manifest {
                command: command.to_string(),
                config_sha256: config_sha256(run)?,
                seed: run.seed,
                inputs: Vec::new(),
                outputs: Vec::new(),
            },
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn note_input(&mut self, path: &Path) -> Result<()> {
        self.manifest
            .inputs
            .push((path.display().to_string(), file_sha256(path)?));
        Ok(())
    }

    fn note_output(&mut self, name: &str) -> Result<()> {
        let digest = file_sha256(&self.path(name))?;
        self.manifest.outputs.push((name.to_string(), digest));
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.manifest.inputs.sort();
        self.manifest.outputs.sort();
        io::save_manifest(&self.dir, &self.manifest)
    }
}

fn cmd_collect(run: &RunConfig) -> Result<()> {
    let mut out = Outputs::new(run, "collect")?;
    let (dataset, stats) = collect(run)?;
    io::save_dataset(&out.path("dataset.jsonl"), &dataset)?;
    out.note_output("dataset.jsonl")?;
    out.finish()?;
    println!(
        "collect: {} transitions from {} episodes ({:.1} sim s)",
        stats.transitions, stats.episodes, stats.sim_seconds
    );
    Ok(())
}

fn cmd_train(run: &RunConfig, dataset_path: Option<&Path>) -> Result<()> {
    let mut out = Outputs::new(run, "train")?;
    let default_path = out.path("dataset.jsonl");
    let dataset_path = dataset_path.unwrap_or(&default_path);
    let dataset = load_dataset(dataset_path)?;
    out.note_input(dataset_path)?;

    let trained = train_model(&dataset, run)?;
    io::save_checkpoint(
        &out.path("checkpoint.json"),
        trained.network(),
        run.seed,
        trained.run.iterations_done,
    )?;
    io::save_training_log(&out.path("training_log.csv"), run, &trained.run.log.rows)?;
    let triples = validation_triples(
        trained.network(),
        &trained.validation,
        run.experiment.delta,
    )?;
    io::save_validation_errors(&out.path("validation_errors.csv"), run, &triples)?;
    out.note_output("checkpoint.json")?;
    out.note_output("training_log.csv")?;
    out.note_output("validation_errors.csv")?;
    out.finish()?;

    let arm = arm_label(run.experiment.mode, run.experiment.objective);
    println!(
        "train[{arm}]: {} iterations on {} transitions, objective {:.6}",
        trained.run.iterations_done,
        dataset.len(),
        trained.diagnostics.objective
    );
    for (i, (g, l)) in trained
        .diagnostics
        .constraint_values
        .iter()
        .zip(&trained.run.dual.lambdas)
        .enumerate()
    {
        println!("train[{arm}]: constraint_{i} {g:.6} lambda_{i} {l:.6}");
    }
    Ok(())
}

fn cmd_eval(run: &RunConfig, checkpoint: Option<&Path>, analytic: bool) -> Result<()> {
    let mut out = Outputs::new(run, "eval")?;
    let sim = run.effective_sim();
    let (model, arm): (Box<dyn Dynamics>, &str) = if analytic {
        (Box::new(AnalyticDynamics::faulty(&sim)), ANALYTIC_ARM)
    } else {
        let default_path = out.path("checkpoint.json");
        let path = checkpoint.unwrap_or(&default_path);
        let (net, _) = load_checkpoint(path)?;
        out.note_input(path)?;
        let arm = arm_label(run.experiment.mode, run.experiment.objective);
        (
            Box::new(deploy(net, run.experiment.mode, &sim)?),
            arm,
        )
    };

    let (rows, summary) = evaluate(model.as_ref(), run)?;
    let episodes_name = format!("eval_episodes_{arm}.csv");
    let summary_name = format!("eval_summary_{arm}.csv");
    io::save_eval_rows(&out.path(&episodes_name), run, &rows)?;
    io::save_eval_summary(&out.path(&summary_name), run, arm, &summary)?;
    out.note_output(&episodes_name)?;
    out.note_output(&summary_name)?;
    out.finish()?;

    println!(
        "eval[{arm}]: {} episodes, failure rate {:.3}, mean error {}",
        summary.episodes,
        summary.failure_rate,
        summary
            .mean_error
            .map(|e| format!("{e:.4}"))
            .unwrap_or_else(|| "absent".to_string())
    );
    Ok(())
}

fn cmd_sweep(run: &RunConfig, dataset_path: Option<&Path>) -> Result<()> {
    let mut out = Outputs::new(run, "sweep")?;
    let default_path = out.path("dataset.jsonl");
    let dataset_path = dataset_path.unwrap_or(&default_path);
    let dataset = load_dataset(dataset_path)?;
    out.note_input(dataset_path)?;

    let rows = roll_error_sweep(&dataset, run)?;
    io::save_sweep(&out.path("sweep.csv"), run, &rows)?;
    out.note_output("sweep.csv")?;
    out.finish()?;

    for row in &rows {
        println!(
            "sweep[{:.2} rad, {}]: failure rate {:.3}, mean error {}",
            row.roll_error,
            row.arm.label(),
            row.summary.failure_rate,
            row.summary
                .mean_error
                .map(|e| format!("{e:.4}"))
                .unwrap_or_else(|| "absent".to_string())
        );
    }
    Ok(())
}

fn cmd_demo(run: &RunConfig) -> Result<()> {
    let mut out = Outputs::new(run, "ctrl-demo")?;
    let mut sim = run.effective_sim();
    sim.record_trajectory = true;

    let model: Box<dyn Dynamics> = match &run.experiment.demo_checkpoint {
        Some(path) => {
            let (net, _) = load_checkpoint(path)?;
            out.note_input(path)?;
            Box::new(deploy(net, run.experiment.mode, &sim)?)
        }
        None => Box::new(AnalyticDynamics::faulty(&sim)),
    };

    let mut rng = episode_stream(run.seed, 0);
    let (task, setup) = sample_episode(&mut rng, run, &sim);
    let mut policy = ControllerPolicy::new(
        model.as_ref(),
        task,
        sim.clone(),
        solve_options(&run.controller),
        run.controller.warm_start,
    )?;
    let trace = run_episode(
        &mut policy,
        &setup,
        &sim,
        run.experiment.bounces_per_episode,
    );

    io::save_solves(&out.path("demo_solves.csv"), run, &trace.bounces)?;
    io::save_trajectory(&out.path("demo_trajectory.csv"), run, &trace.trajectory)?;
    out.note_output("demo_solves.csv")?;
    out.note_output("demo_trajectory.csv")?;
    out.finish()?;

    println!(
        "ctrl-demo: {} bounces over {:.2} sim s, target ({:.3}, {:.3}), ended {}",
        trace.bounces.len(),
        trace.sim_time,
        setup.p_desired[0],
        setup.p_desired[1],
        match trace.termination {
            crate::sim::Termination::Completed => "completed".to_string(),
            t => format!("{t:?}"),
        }
    );
    Ok(())
}

/// Fixed presentation order of the comparison table.
const REPORT_ORDER: [&str; 5] = [
    "full_unconstrained",
    "full_constrained",
    "residual_unconstrained",
    "residual_constrained",
    ANALYTIC_ARM,
];

fn cmd_report(run: &RunConfig) -> Result<()> {
    let mut out = Outputs::new(run, "report")?;
    let mut rows: Vec<ReportRow> = Vec::new();
    for arm in REPORT_ORDER {
        let path = out.path(&format!("eval_summary_{arm}.csv"));
        if path.exists() {
            rows.push(load_eval_summary(&path)?);
            out.note_input(&path)?;
        }
    }
    if rows.is_empty() {
        return Err(Error::Config(format!(
            "no eval_summary_*.csv files in {}; run eval first",
            out.dir.display()
        )));
    }
    io::save_report(&out.path("report.csv"), run, &rows)?;
    out.note_output("report.csv")?;
    out.finish()?;

    println!(
        "{:<24} {:>9} {:>12} {:>11} {:>10}",
        "arm", "episodes", "failure_rate", "mean_error", "std_error"
    );
    for r in &rows {
        println!(
            "{:<24} {:>9} {:>12.3} {:>11} {:>10}",
            r.arm,
            r.episodes,
            r.failure_rate,
            r.mean_error
                .map(|e| format!("{e:.4}"))
                .unwrap_or_else(|| "absent".to_string()),
            r.std_error
                .map(|e| format!("{e:.4}"))
                .unwrap_or_else(|| "absent".to_string()),
        );
    }
    Ok(())
}

fn dispatch(command: &Command, run: &RunConfig) -> Result<()> {
    match command {
        Command::Collect { .. } => cmd_collect(run),
        Command::Train { dataset, .. } => cmd_train(run, dataset.as_deref()),
        Command::Eval {
            checkpoint,
            analytic,
            ..
        } => cmd_eval(run, checkpoint.as_deref(), *analytic),
        Command::Sweep { dataset, .. } => cmd_sweep(run, dataset.as_deref()),
        Command::CtrlDemo { .. } => cmd_demo(run),
        Command::Report { .. } => cmd_report(run),
    }
}

/// Parses `argv`, runs the selected command, and maps errors to the exit
/// contract.
pub fn run_cli<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successful exits.
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let run = match resolve_config(cli.command.common()) {
        Ok(run) => run,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(1);
        }
    };
    match dispatch(&cli.command, &run) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{} failed: {e}", cli.command.name());
            ExitCode::from(2)
        }
    }
}
