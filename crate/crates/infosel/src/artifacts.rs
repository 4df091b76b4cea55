//! File formats for run artifacts. Tables are CSV with fixed headers; structured
//! records are pretty-printed JSON.

use std::fs;
use std::path::Path;

use infosel_core::bayesopt::OptimizationTrace;
use infosel_core::classifier::{Architecture, Checkpoint, LossCurves, Model, Stage, TrainConfig};
use infosel_core::dataset::{FeatureShape, Label};
use infosel_core::entropy::{EntropyScoreTable, Flag, Histogram, ScoreRow};
use infosel_core::stats::{ConfusionMatrix, SankeyFlows};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{create_parent, csv_err, fmt_f64, reader, writer};

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    create_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingArtifact(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

const CHECKPOINT_FORMAT: &str = "infosel-checkpoint/1";

/// Self-describing checkpoint: shapes, parameters, training config, epoch
/// and validation loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointFile {
    pub format: String,
    pub name: String,
    pub input_shape: FeatureShape,
    pub architecture: Architecture,
    pub param_count: usize,
    pub stage: Stage,
    pub epoch: usize,
    pub validation_loss: f64,
    /// Proportion of the training split the model was trained on.
    pub training_proportion: f64,
    pub train_config: TrainConfig,
    pub seed: u64,
    pub model: Model,
}

impl CheckpointFile {
    pub fn new(
        name: &str,
        shape: FeatureShape,
        ckpt: &Checkpoint,
        cfg: &TrainConfig,
        proportion: f64,
        seed: u64,
    ) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            name: name.into(),
            input_shape: shape,
            architecture: cfg.architecture,
            param_count: ckpt.model.param_count(),
            stage: ckpt.stage,
            epoch: ckpt.epoch,
            validation_loss: ckpt.validation_loss,
            training_proportion: proportion,
            train_config: cfg.clone(),
            seed,
            model: ckpt.model.clone(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: Self = read_json(path)?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(Error::format(path, format!("unsupported checkpoint format `{}`", file.format)));
        }
        if file.model.input_dim() != file.input_shape.len() {
            return Err(Error::format(path, "model input size disagrees with input_shape"));
        }
        Ok(file)
    }
}

pub fn write_loss_curves(curves: &LossCurves, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["stage", "epoch", "train_loss", "val_loss"]).map_err(|e| csv_err(path, e))?;
    for e in curves.iter() {
        w.write_record([e.stage.name().to_string(), e.epoch.to_string(), fmt_f64(e.train_loss), fmt_f64(e.val_loss)])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_scores(table: &EntropyScoreTable, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["sample_id", "entropy", "rank", "flag"]).map_err(|e| csv_err(path, e))?;
    for r in table.rows() {
        w.write_record([r.sample_id.to_string(), fmt_f64(r.entropy), r.rank.to_string(), r.flag.name().to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_scores(path: &Path) -> Result<EntropyScoreTable> {
    let mut rdr = reader(path)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let bad = |message: String| Error::Row { path: path.to_path_buf(), row: i + 2, message };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let field = |j: usize| rec.get(j).unwrap_or("");
        let flag = match field(3) {
            "informative" => Flag::Informative,
            "redundant" => Flag::Redundant,
            other => return Err(bad(format!("unknown flag `{other}`"))),
        };
        rows.push(ScoreRow {
            sample_id: field(0).parse().map_err(|_| bad("bad sample_id".into()))?,
            entropy: field(1).parse().map_err(|_| bad("bad entropy".into()))?,
            rank: field(2).parse().map_err(|_| bad("bad rank".into()))?,
            flag,
        });
    }
    EntropyScoreTable::from_rows(rows).map_err(|e| Error::format(path, e))
}

pub fn write_trace(trace: &OptimizationTrace, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["call", "phase", "proportion", "objective", "is_best_so_far"]).map_err(|e| csv_err(path, e))?;
    for (e, best) in trace.entries.iter().zip(trace.improvements()) {
        w.write_record([
            e.call.to_string(),
            e.phase.name().to_string(),
            fmt_f64(e.proportion),
            fmt_f64(e.objective),
            best.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub best_proportion: f64,
    pub best_validation_loss: f64,
    pub selected_count: usize,
    pub train_count: usize,
    pub config: infosel_core::bayesopt::BoConfig,
    pub space: infosel_core::bayesopt::SearchSpace,
    pub seed: u64,
    /// Every call, including the fitted surrogate hyperparameters.
    pub trace: OptimizationTrace,
}

pub fn write_histograms(hists: &[(&str, Histogram)], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["bin_left", "bin_right", "normalized_count", "subset"]).map_err(|e| csv_err(path, e))?;
    for (subset, h) in hists {
        for (i, c) in h.normalized_counts.iter().enumerate() {
            w.write_record([fmt_f64(h.edges[i]), fmt_f64(h.edges[i + 1]), fmt_f64(*c), subset.to_string()])
                .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_embeddings(rows: &[(u64, Label, Vec<f64>)], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    let dim = rows.first().map_or(0, |r| r.2.len());
    let mut header = vec!["sample_id".to_string(), "label".to_string()];
    header.extend((0..dim).map(|j| format!("e{j}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (id, label, e) in rows {
        let mut row = vec![id.to_string(), (*label as u8).to_string()];
        row.extend(e.iter().map(|v| fmt_f64(*v)));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_confusion(rows: &[(&str, ConfusionMatrix)], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["split", "TP", "FP", "TN", "FN"]).map_err(|e| csv_err(path, e))?;
    for (split, cm) in rows {
        w.write_record([
            split.to_string(),
            cm.tp.to_string(),
            cm.fp.to_string(),
            cm.tn.to_string(),
            cm.fn_.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_sankey(flows: &SankeyFlows, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["source", "target", "weight"]).map_err(|e| csv_err(path, e))?;
    for (from, to, weight) in flows.rows() {
        w.write_record([from.to_string(), to.to_string(), fmt_f64(weight)]).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Validation-split probabilities of the positive class for both models;
/// the decision thresholds are recomputable from this file.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationPredictions {
    pub sample_ids: Vec<u64>,
    pub labels: Vec<Label>,
    pub baseline: Vec<f64>,
    pub entropy: Vec<f64>,
}

impl ValidationPredictions {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = writer(path)?;
        w.write_record(["sample_id", "label", "baseline", "entropy"]).map_err(|e| csv_err(path, e))?;
        for i in 0..self.sample_ids.len() {
            w.write_record([
                self.sample_ids[i].to_string(),
                (self.labels[i] as u8).to_string(),
                fmt_f64(self.baseline[i]),
                fmt_f64(self.entropy[i]),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut rdr = reader(path)?;
        let mut out = Self { sample_ids: vec![], labels: vec![], baseline: vec![], entropy: vec![] };
        for (i, rec) in rdr.records().enumerate() {
            let bad = |message: &str| Error::Row { path: path.to_path_buf(), row: i + 2, message: message.into() };
            let rec = rec.map_err(|e| bad(&e.to_string()))?;
            let num = |j: usize| rec.get(j).and_then(|s| s.parse::<f64>().ok()).ok_or_else(|| bad("bad number"));
            out.sample_ids.push(rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad sample_id"))?);
            let label = rec.get(1).and_then(|s| s.parse::<i64>().ok()).and_then(|v| Label::try_from(v).ok());
            out.labels.push(label.ok_or_else(|| bad("bad label"))?);
            out.baseline.push(num(2)?);
            out.entropy.push(num(3)?);
        }
        Ok(out)
    }
}
