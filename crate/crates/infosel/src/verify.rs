//! Post-hoc checks of a finished run, recomputed from its files alone.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use infosel_core::dataset::{Dataset, Split, SplitAssignment};
use infosel_core::entropy::Flag;

use crate::artifacts::{read_json, read_scores, CheckpointFile, TraceSummary, ValidationPredictions};
use crate::error::{Error, Result};
use crate::io::reader;
use crate::pipeline::{hash_file, load_data, thresholds, Layout, MetricsFile, RunManifest, BASELINE, ENTROPY};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, result: std::result::Result<(), String>) -> Check {
    match result {
        Ok(()) => Check { name, passed: true, detail: String::new() },
        Err(detail) => Check { name, passed: false, detail },
    }
}

/// Rows of a loss-curve file as `(stage, epoch, val_loss)`.
pub fn read_val_losses(path: &Path) -> Result<Vec<(String, usize, f64)>> {
    let mut rdr = reader(path)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let bad = |m: &str| Error::Row { path: path.to_path_buf(), row: i + 2, message: m.into() };
        let rec = rec.map_err(|e| bad(&e.to_string()))?;
        rows.push((
            rec.get(0).ok_or_else(|| bad("missing stage"))?.to_string(),
            rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad epoch"))?,
            rec.get(3).and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad val_loss"))?,
        ));
    }
    Ok(rows)
}

/// Data rows in a CSV file, excluding the header.
pub fn count_rows(path: &Path) -> Result<usize> {
    Ok(reader(path)?.records().count())
}

fn artifacts(layout: &Layout, manifest: &RunManifest) -> std::result::Result<(), String> {
    if manifest.artifacts.is_empty() {
        return Err("empty inventory".into());
    }
    for a in &manifest.artifacts {
        let (sha, bytes) = hash_file(&layout.root.join(&a.path)).map_err(|e| e.to_string())?;
        if sha != a.sha256 || bytes != a.bytes {
            return Err(format!("{} changed since the manifest was written", a.path));
        }
    }
    Ok(())
}

fn conservation(layout: &Layout, manifest: &RunManifest, splits: &SplitAssignment) -> std::result::Result<(), String> {
    let table = read_scores(&layout.scores()).map_err(|e| e.to_string())?;
    let inf = table.rows().iter().filter(|r| r.flag == Flag::Informative).count();
    let red = table.len() - inf;
    let train = splits.ids(Split::Train).len();
    let declared = (manifest.informative_count, manifest.redundant_count, manifest.train_count);
    if declared != (Some(inf), Some(red), Some(train)) {
        return Err(format!("manifest {declared:?} vs files ({inf}, {red}, {train})"));
    }
    if inf + red != train {
        return Err(format!("{inf} + {red} != {train}"));
    }
    let train_ids: BTreeSet<u64> = splits.ids(Split::Train).into_iter().collect();
    let scored: BTreeSet<u64> = table.rows().iter().map(|r| r.sample_id).collect();
    if scored != train_ids {
        return Err("scored ids differ from the training split".into());
    }
    Ok(())
}

fn group_exclusive(
    internal: &Dataset,
    external: Option<&Dataset>,
    splits: &SplitAssignment,
) -> std::result::Result<(), String> {
    if splits.len() != internal.len() {
        return Err(format!("{} assignments for {} samples", splits.len(), internal.len()));
    }
    let mut group_split: BTreeMap<u64, Split> = BTreeMap::new();
    for r in internal.records() {
        let s = splits.split_of(r.sample_id).ok_or_else(|| format!("sample {} unassigned", r.sample_id))?;
        if *group_split.entry(r.group_id).or_insert(s) != s {
            return Err(format!("group {} spans several splits", r.group_id));
        }
    }
    if let Some(ext) = external {
        let ids: BTreeSet<u64> = internal.records().iter().map(|r| r.sample_id).collect();
        for r in ext.records() {
            if group_split.contains_key(&r.group_id) || ids.contains(&r.sample_id) {
                return Err(format!("external sample {} collides with the internal set", r.sample_id));
            }
        }
    }
    Ok(())
}

fn threshold_provenance(layout: &Layout) -> std::result::Result<(), String> {
    let pred = ValidationPredictions::read(&layout.validation_predictions()).map_err(|e| e.to_string())?;
    let thr = thresholds(&pred).map_err(|e| e.to_string())?;
    let metrics: MetricsFile = read_json(&layout.metrics()).map_err(|e| e.to_string())?;
    if metrics.thresholds != thr {
        return Err(format!("recorded {:?}, recomputed {thr:?}", metrics.thresholds));
    }
    for e in &metrics.evaluations {
        let expected = if e.model == BASELINE { thr.baseline } else { thr.entropy };
        if e.report.threshold != expected {
            return Err(format!("{}/{} used threshold {}", e.test, e.model, e.report.threshold));
        }
    }
    Ok(())
}

fn entropy_matches_trace(layout: &Layout, manifest: &RunManifest) -> std::result::Result<(), String> {
    let ckpt = CheckpointFile::load(&layout.checkpoint(ENTROPY)).map_err(|e| e.to_string())?;
    let summary: TraceSummary = read_json(&layout.trace_summary()).map_err(|e| e.to_string())?;
    let ok = ckpt.validation_loss == summary.trace.best_y
        && summary.best_validation_loss == summary.trace.best_y
        && manifest.best_validation_loss == Some(summary.trace.best_y);
    if !ok {
        return Err(format!("checkpoint {} vs trace best {}", ckpt.validation_loss, summary.trace.best_y));
    }
    let ip = manifest.informative_proportion.ok_or("no proportion in the manifest")?;
    if !manifest.config.space.contains(ip) {
        return Err(format!("proportion {ip} outside the search space"));
    }
    Ok(())
}

fn loss_curves(layout: &Layout) -> std::result::Result<(), String> {
    for name in [BASELINE, ENTROPY] {
        let ckpt = CheckpointFile::load(&layout.checkpoint(name)).map_err(|e| e.to_string())?;
        let rows = read_val_losses(&layout.figure(&format!("loss_{name}.csv"))).map_err(|e| e.to_string())?;
        let expected = ckpt.train_config.stage_a_epochs + ckpt.train_config.stage_b_epochs;
        if rows.len() != expected {
            return Err(format!("{name}: {} curve rows, expected {expected}", rows.len()));
        }
        if rows.iter().any(|r| r.2 < ckpt.validation_loss) {
            return Err(format!("{name}: a curve epoch beats the checkpoint"));
        }
        let matched =
            rows.iter().any(|(s, e, v)| s == ckpt.stage.name() && *e == ckpt.epoch && *v == ckpt.validation_loss);
        if ckpt.epoch > 0 && !matched {
            return Err(format!("{name}: checkpoint {}/{} not in the curve", ckpt.stage.name(), ckpt.epoch));
        }
    }
    Ok(())
}

fn embeddings(
    layout: &Layout,
    splits: &SplitAssignment,
    external: Option<&Dataset>,
) -> std::result::Result<(), String> {
    for name in [BASELINE, ENTROPY] {
        let mut sizes: Vec<(&str, usize)> = Split::ALL.iter().map(|s| (s.name(), splits.ids(*s).len())).collect();
        if let Some(ext) = external {
            sizes.push(("external", ext.len()));
        }
        for (split, n) in sizes {
            let rows =
                count_rows(&layout.figure(&format!("embeddings_{name}_{split}.csv"))).map_err(|e| e.to_string())?;
            if rows != n {
                return Err(format!("{name}/{split}: {rows} rows for {n} samples"));
            }
        }
    }
    Ok(())
}

/// Re-derives the run's invariants from the files under `out_dir`.
pub fn verify_run(out_dir: &Path) -> Result<Vec<Check>> {
    let layout = Layout::new(out_dir);
    let manifest: RunManifest = read_json(&layout.manifest())?;
    if !manifest.complete {
        return Err(Error::format(layout.manifest(), "run is incomplete"));
    }
    let data = load_data(&manifest.config, &layout)?;
    let splits = crate::io::load_splits(&layout.splits(), manifest.config.split)?;
    Ok(vec![
        check("artifact_hashes", artifacts(&layout, &manifest)),
        check("conservation", conservation(&layout, &manifest, &splits)),
        check("group_exclusive_splits", group_exclusive(&data.internal, data.external.as_ref(), &splits)),
        check("threshold_provenance", threshold_provenance(&layout)),
        check("entropy_loss_matches_trace", entropy_matches_trace(&layout, &manifest)),
        check("loss_curves_match_checkpoints", loss_curves(&layout)),
        check("embedding_cardinality", embeddings(&layout, &splits, data.external.as_ref())),
    ])
}
