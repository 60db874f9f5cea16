//! On-disk formats: transition datasets, model checkpoints, CSV artifacts,
//! and run manifests.
//!
//! Datasets are JSON lines. Line 1 is a header naming the schema and the
//! dimensions; every following line is one transition. Floats are written
//! with 17 significant digits, enough to reproduce any f64 bit-exactly on
//! read-back. Checkpoints are a single JSON document. CSV files open with a
//! `#` comment carrying the config digest and seed, then a header row.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::experiment::{EpisodeRow, EvalSummary, SweepRow, ValidationTriple};
use crate::learn::{LogRow, Transition};
use crate::nn::MlpModel;
use crate::sim::{BounceRecord, Termination, MODEL_INPUT_DIM, MODEL_OUTPUT_DIM};

pub const STATE_DIM: usize = MODEL_INPUT_DIM - crate::sim::Action::DIM;

/// 17 significant digits: the round-trip-safe decimal width for f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{:.16e}", x)
}

fn fmt_array(values: &[f64]) -> String {
    let mut s = String::from("[");
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{}", fmt_f64(*v));
    }
    s.push(']');
    s
}

pub const DATASET_SCHEMA: &str = "transitions-v1";
pub const CHECKPOINT_SCHEMA: &str = "mlp-checkpoint-v1";

#[derive(Clone, Debug, Serialize, Deserialize)]
struct DatasetHeader {
    schema: String,
    state_dim: usize,
    action_dim: usize,
    label_dim: usize,
    count: usize,
}

pub fn save_dataset(path: &Path, transitions: &[Transition]) -> Result<()> {
    for (i, t) in transitions.iter().enumerate() {
        if !t.is_finite() {
            return Err(Error::NonFinite(format!("transition {i} in dataset")));
        }
    }
    let header = DatasetHeader {
        schema: DATASET_SCHEMA.into(),
        state_dim: STATE_DIM,
        action_dim: crate::sim::Action::DIM,
        label_dim: MODEL_OUTPUT_DIM,
        count: transitions.len(),
    };
    let mut out = String::new();
    let _ = writeln!(out, "{}", serde_json::to_string(&header)?);
    for t in transitions {
        let _ = writeln!(
            out,
            "{{\"s\":{},\"a\":{},\"f\":{}}}",
            fmt_array(&t.state),
            fmt_array(&t.action),
            fmt_array(&t.label)
        );
    }
    fs::write(path, out)?;
    Ok(())
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

pub fn load_dataset(path: &Path) -> Result<Vec<Transition>> {
    let file = fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file, expected dataset header"))??;
    let header: DatasetHeader = serde_json::from_str(&header_line)
        .map_err(|e| parse_err(path, 1, format!("bad header: {e}")))?;
    if header.schema != DATASET_SCHEMA {
        return Err(parse_err(
            path,
            1,
            format!("schema {:?}, expected {:?}", header.schema, DATASET_SCHEMA),
        ));
    }
    let mut transitions = Vec::with_capacity(header.count);
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Transition = serde_json::from_str(&line)
            .map_err(|e| parse_err(path, line_no, e.to_string()))?;
        if t.state.len() != header.state_dim
            || t.action.len() != header.action_dim
            || t.label.len() != header.label_dim
        {
            return Err(parse_err(
                path,
                line_no,
                format!(
                    "dims {}/{}/{}, header says {}/{}/{}",
                    t.state.len(),
                    t.action.len(),
                    t.label.len(),
                    header.state_dim,
                    header.action_dim,
                    header.label_dim
                ),
            ));
        }
        if !t.is_finite() {
            return Err(parse_err(path, line_no, "non-finite value"));
        }
        transitions.push(t);
    }
    if transitions.len() != header.count {
        return Err(parse_err(
            path,
            1,
            format!(
                "header promises {} transitions, file holds {}",
                header.count,
                transitions.len()
            ),
        ));
    }
    Ok(transitions)
}

/// Serialized network plus the provenance needed to reuse it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema: String,
    pub layer_sizes: Vec<usize>,
    /// Row-major `out x in` weight matrices, one per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub prelu_slopes: Vec<Vec<f64>>,
    pub seed: u64,
    pub iterations: usize,
}

impl Checkpoint {
    pub fn from_model(model: &MlpModel, seed: u64, iterations: usize) -> Checkpoint {
        Checkpoint {
            schema: CHECKPOINT_SCHEMA.into(),
            layer_sizes: model.layer_sizes().to_vec(),
            weights: model.weights().to_vec(),
            biases: model.biases().to_vec(),
            prelu_slopes: model.prelu_slopes().to_vec(),
            seed,
            iterations,
        }
    }

    pub fn into_model(self) -> Result<MlpModel> {
        MlpModel::from_parts(
            self.layer_sizes,
            self.weights,
            self.biases,
            self.prelu_slopes,
        )
    }
}

pub fn save_checkpoint(path: &Path, model: &MlpModel, seed: u64, iterations: usize) -> Result<()> {
    let ckpt = Checkpoint::from_model(model, seed, iterations);
    fs::write(path, serde_json::to_string_pretty(&ckpt)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(MlpModel, Checkpoint)> {
    let text = fs::read_to_string(path)?;
    let ckpt: Checkpoint =
        serde_json::from_str(&text).map_err(|e| parse_err(path, 1, e.to_string()))?;
    if ckpt.schema != CHECKPOINT_SCHEMA {
        return Err(parse_err(
            path,
            1,
            format!("schema {:?}, expected {:?}", ckpt.schema, CHECKPOINT_SCHEMA),
        ));
    }
    let meta = ckpt.clone();
    Ok((ckpt.into_model()?, meta))
}

/// Digest of the effective config, for stamping artifacts.
pub fn config_sha256(run: &RunConfig) -> Result<String> {
    let canonical = serde_json::to_string(run)?;
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    Ok(hex::encode(hasher.finalize()))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex::encode(hasher.finalize()))
}

/// Written next to every command's outputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    /// File name -> content digest for files the command consumed
    /// (datasets, checkpoints).
    pub inputs: Vec<(String, String)>,
    /// File name -> content digest for everything the command wrote.
    pub outputs: Vec<(String, String)>,
}

pub fn save_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let path = dir.join("manifest.json");
    fs::write(path, serde_json::to_string_pretty(manifest)?)?;
    Ok(())
}

fn csv_comment(run: &RunConfig) -> Result<String> {
    Ok(format!(
        "# config_sha256={} seed={}",
        config_sha256(run)?,
        run.seed
    ))
}

fn write_csv(
    path: &Path,
    comment: &str,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut file = fs::File::create(path)?;
    writeln!(file, "{comment}")?;
    writeln!(file, "{}", header.join(","))?;
    for row in rows {
        writeln!(file, "{}", row.join(","))?;
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn save_training_log(path: &Path, run: &RunConfig, rows: &[LogRow]) -> Result<()> {
    let n_constraints = rows.first().map_or(0, |r| r.constraints.len());
    let mut header = vec!["iteration".to_string(), "objective".to_string()];
    for i in 0..n_constraints {
        header.push(format!("constraint_{i}"));
    }
    for i in 0..n_constraints {
        header.push(format!("lambda_{i}"));
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(
        path,
        &csv_comment(run)?,
        &header_refs,
        rows.iter().map(|r| {
            let mut row = vec![r.iteration.to_string(), r.objective.to_string()];
            row.extend(r.constraints.iter().map(f64::to_string));
            row.extend(r.lambdas.iter().map(f64::to_string));
            row
        }),
    )
}

pub fn save_validation_errors(
    path: &Path,
    run: &RunConfig,
    triples: &[ValidationTriple],
) -> Result<()> {
    write_csv(
        path,
        &csv_comment(run)?,
        &["label_norm", "absolute_error", "normalized_error"],
        triples.iter().map(|t| {
            vec![
                t.label_norm.to_string(),
                t.absolute_error.to_string(),
                opt(t.normalized_error),
            ]
        }),
    )
}

pub fn save_eval_rows(path: &Path, run: &RunConfig, rows: &[EpisodeRow]) -> Result<()> {
    write_csv(
        path,
        &csv_comment(run)?,
        &["episode", "bounces", "termination", "mean_error", "sim_time"],
        rows.iter().map(|r| {
            vec![
                r.episode.to_string(),
                r.bounces.to_string(),
                r.termination_label().to_string(),
                opt(r.mean_error),
                r.sim_time.to_string(),
            ]
        }),
    )
}

fn parse_field<T: std::str::FromStr>(
    path: &Path,
    line: usize,
    name: &str,
    raw: &str,
) -> Result<T> {
    raw.parse()
        .map_err(|_| parse_err(path, line, format!("bad {name}: {raw:?}")))
}

fn termination_from_label(label: &str) -> Option<Termination> {
    use crate::sim::FailureKind::*;
    Some(match label {
        "completed" => Termination::Completed,
        "below_plane" => Termination::Failure(BelowPlane),
        "out_of_workspace" => Termination::Failure(OutOfWorkspace),
        "solve_rejected" => Termination::Failure(PolicyRejected),
        "non_finite_action" => Termination::Failure(NonFiniteAction),
        "no_contact" => Termination::Failure(NoContact),
        _ => return None,
    })
}

pub fn load_eval_rows(path: &Path) -> Result<Vec<EpisodeRow>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    let mut seen_header = false;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !seen_header {
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected 5 fields, got {}", fields.len()),
            ));
        }
        let termination = termination_from_label(fields[2])
            .ok_or_else(|| parse_err(path, line_no, format!("bad termination: {:?}", fields[2])))?;
        let mean_error = if fields[3].is_empty() {
            None
        } else {
            Some(parse_field(path, line_no, "mean_error", fields[3])?)
        };
        rows.push(EpisodeRow {
            episode: parse_field(path, line_no, "episode", fields[0])?,
            bounces: parse_field(path, line_no, "bounces", fields[1])?,
            termination,
            mean_error,
            sim_time: parse_field(path, line_no, "sim_time", fields[4])?,
        });
    }
    if !seen_header {
        return Err(parse_err(path, 1, "missing header row"));
    }
    Ok(rows)
}

/// One arm of the final comparison table; also the row format of the
/// per-arm summary CSV that `report` merges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub arm: String,
    pub episodes: usize,
    pub failures: usize,
    pub failure_rate: f64,
    pub mean_error: Option<f64>,
    pub std_error: Option<f64>,
}

impl ReportRow {
    pub fn from_summary(arm: &str, summary: &EvalSummary) -> ReportRow {
        ReportRow {
            arm: arm.to_string(),
            episodes: summary.episodes,
            failures: summary.failures,
            failure_rate: summary.failure_rate,
            mean_error: summary.mean_error,
            std_error: summary.std_error,
        }
    }
}

const SUMMARY_HEADER: [&str; 6] = [
    "arm",
    "episodes",
    "failures",
    "failure_rate",
    "mean_error",
    "std_error",
];

fn summary_fields(r: &ReportRow) -> Vec<String> {
    vec![
        r.arm.clone(),
        r.episodes.to_string(),
        r.failures.to_string(),
        r.failure_rate.to_string(),
        opt(r.mean_error),
        opt(r.std_error),
    ]
}

pub fn save_eval_summary(
    path: &Path,
    run: &RunConfig,
    arm: &str,
    summary: &EvalSummary,
) -> Result<()> {
    let row = ReportRow::from_summary(arm, summary);
    write_csv(
        path,
        &csv_comment(run)?,
        &SUMMARY_HEADER,
        std::iter::once(summary_fields(&row)),
    )
}

pub fn load_eval_summary(path: &Path) -> Result<ReportRow> {
    let text = fs::read_to_string(path)?;
    let mut seen_header = false;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !seen_header {
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != SUMMARY_HEADER.len() {
            return Err(parse_err(
                path,
                line_no,
                format!(
                    "expected {} fields, got {}",
                    SUMMARY_HEADER.len(),
                    fields.len()
                ),
            ));
        }
        let mean_error = if fields[4].is_empty() {
            None
        } else {
            Some(parse_field(path, line_no, "mean_error", fields[4])?)
        };
        let std_error = if fields[5].is_empty() {
            None
        } else {
            Some(parse_field(path, line_no, "std_error", fields[5])?)
        };
        return Ok(ReportRow {
            arm: fields[0].to_string(),
            episodes: parse_field(path, line_no, "episodes", fields[1])?,
            failures: parse_field(path, line_no, "failures", fields[2])?,
            failure_rate: parse_field(path, line_no, "failure_rate", fields[3])?,
            mean_error,
            std_error,
        });
    }
    Err(parse_err(path, 1, "no summary row"))
}

pub fn save_sweep(path: &Path, run: &RunConfig, rows: &[SweepRow]) -> Result<()> {
    write_csv(
        path,
        &csv_comment(run)?,
        &[
            "roll_error",
            "arm",
            "episodes",
            "failures",
            "mean_error",
            "std_error",
        ],
        rows.iter().map(|r| {
            vec![
                r.roll_error.to_string(),
                r.arm.label().to_string(),
                r.summary.episodes.to_string(),
                r.summary.failures.to_string(),
                opt(r.summary.mean_error),
                opt(r.summary.std_error),
            ]
        }),
    )
}

pub fn save_report(path: &Path, run: &RunConfig, rows: &[ReportRow]) -> Result<()> {
    write_csv(
        path,
        &csv_comment(run)?,
        &SUMMARY_HEADER,
        rows.iter().map(summary_fields),
    )
}

/// Per-bounce solver telemetry from the demo command.
pub fn save_solves(path: &Path, run: &RunConfig, bounces: &[BounceRecord]) -> Result<()> {
    write_csv(
        path,
        &csv_comment(run)?,
        &[
            "bounce",
            "time",
            "landing_x",
            "landing_y",
            "target_error",
            "cost",
            "max_violation",
            "iterations",
        ],
        bounces.iter().map(|r| {
            vec![
                r.index.to_string(),
                r.time.to_string(),
                r.landing[0].to_string(),
                r.landing[1].to_string(),
                r.target_error.to_string(),
                opt(r.solve.map(|s| s.cost)),
                opt(r.solve.map(|s| s.max_violation)),
                r.solve
                    .map(|s| s.iterations.to_string())
                    .unwrap_or_default(),
            ]
        }),
    )
}

pub fn save_trajectory(
    path: &Path,
    run: &RunConfig,
    points: &[crate::sim::TrajectoryPoint],
) -> Result<()> {
    write_csv(
        path,
        &csv_comment(run)?,
        &["time", "x", "y", "z"],
        points.iter().map(|p| {
            vec![
                p.time.to_string(),
                p.ball_pos.x.to_string(),
                p.ball_pos.y.to_string(),
                p.ball_pos.z.to_string(),
            ]
        }),
    )
}
