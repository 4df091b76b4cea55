//! The end-to-end experiment. Each stage is a plain function over in-memory
//! values; [`run_pipeline`] chains them and writes every artifact, and the
//! command-line subcommands run them one at a time from files.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use infosel_core::bayesopt::{minimize, OptimizationTrace};
use infosel_core::classifier::{train_on_splits, train_two_stage, Model, TrainOutcome};
use infosel_core::dataset::{
    generate_synthetic, split_by_group, Dataset, Label, Split, SplitAssignment, SyntheticConfig,
};
use infosel_core::entropy::{
    entropy_gap_test, entropy_histogram, score_training_set, selected_count, EntropyGapTest, EntropyScoreTable, Flag,
    Selection, Subset,
};
use infosel_core::stats::{compare_recall, export_sankey, select_threshold_max_f, MetricReport, RecallComparison};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::artifacts::{
    read_json, read_scores, write_confusion, write_embeddings, write_histograms, write_json, write_loss_curves,
    write_sankey, write_scores, write_trace, CheckpointFile, TraceSummary, ValidationPredictions,
};
use crate::config::{DataSource, RunConfig};
use crate::error::{Error, Result};
use crate::io::{load_csv, load_splits, save_csv, save_splits};

pub const BASELINE: &str = "baseline";
pub const ENTROPY: &str = "entropy";

/// Paths of every artifact under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    pub fn internal_data(&self) -> PathBuf {
        self.root.join("data/internal.csv")
    }
    pub fn external_data(&self) -> PathBuf {
        self.root.join("data/external.csv")
    }
    pub fn splits(&self) -> PathBuf {
        self.root.join("splits.csv")
    }
    pub fn checkpoint(&self, model: &str) -> PathBuf {
        self.root.join(format!("checkpoints/{model}.json"))
    }
    pub fn scores(&self) -> PathBuf {
        self.root.join("scores.csv")
    }
    pub fn trace(&self) -> PathBuf {
        self.root.join("trace.csv")
    }
    pub fn trace_summary(&self) -> PathBuf {
        self.root.join("trace_summary.json")
    }
    pub fn metrics(&self) -> PathBuf {
        self.root.join("reports/metrics.json")
    }
    pub fn evaluations(&self) -> PathBuf {
        self.root.join("reports/evaluations.json")
    }
    pub fn validation_predictions(&self) -> PathBuf {
        self.root.join("reports/validation_predictions.csv")
    }
    pub fn figure(&self, name: &str) -> PathBuf {
        self.root.join("figures").join(name)
    }
    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }
    pub fn timings(&self) -> PathBuf {
        self.root.join("timings.json")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Data {
    pub internal: Dataset,
    pub external: Option<Dataset>,
}

/// Builds or loads the internal set and the optional external set. The
/// synthetic external set continues the internal id ranges, so group and
/// sample ids never collide.
pub fn build_data(cfg: &RunConfig) -> Result<Data> {
    let seeds = cfg.seeds();
    match &cfg.data {
        DataSource::Synthetic { internal, external } => {
            let internal_cfg = SyntheticConfig { seed: seeds.data, ..internal.clone() };
            let internal = generate_synthetic(&internal_cfg)?;
            let external = match external {
                None => None,
                Some(shift) => {
                    let next = |f: fn(&infosel_core::dataset::SampleRecord) -> u64| {
                        internal.records().iter().map(f).max().map_or(0, |m| m + 1)
                    };
                    Some(generate_synthetic(&SyntheticConfig {
                        n_groups: shift.n_groups,
                        mean_shift: internal_cfg.mean_shift + shift.mean_shift,
                        first_group_id: next(|r| r.group_id),
                        first_sample_id: next(|r| r.sample_id),
                        seed: seeds.external_data,
                        ..internal_cfg.clone()
                    })?)
                }
            };
            Ok(Data { internal, external })
        }
        DataSource::Csv { internal, external } => {
            let internal_set = load_csv(internal)?;
            let external_set = external.as_deref().map(load_csv).transpose()?;
            if let Some(ext) = &external_set {
                let groups = internal_set.group_ids();
                let ids: BTreeSet<u64> = internal_set.records().iter().map(|r| r.sample_id).collect();
                if ext.records().iter().any(|r| groups.contains(&r.group_id) || ids.contains(&r.sample_id)) {
                    return Err(Error::Config("external set shares group or sample ids with the internal set".into()));
                }
                if ext.shape() != internal_set.shape() {
                    return Err(Error::Config("external set has a different feature shape".into()));
                }
            }
            Ok(Data { internal: internal_set, external: external_set })
        }
    }
}

pub fn split(cfg: &RunConfig, data: &Data) -> Result<SplitAssignment> {
    Ok(split_by_group(&data.internal, cfg.split, cfg.seeds().split)?)
}

pub fn train_baseline(cfg: &RunConfig, data: &Data, splits: &SplitAssignment) -> Result<TrainOutcome> {
    Ok(train_on_splits(&data.internal, splits, &cfg.resolved().train)?)
}

/// Scores the training split once with the Baseline model.
pub fn score(baseline: &Model, data: &Data, splits: &SplitAssignment) -> Result<EntropyScoreTable> {
    Ok(score_training_set(baseline, &data.internal, &splits.ids(Split::Train))?)
}

#[derive(Debug, Clone)]
pub struct Optimization {
    pub trace: OptimizationTrace,
    pub selected_count: usize,
    pub selection: Selection,
    /// Scores flagged at the chosen proportion.
    pub table: EntropyScoreTable,
    /// Training run of the best call, restored rather than retrained.
    pub entropy: TrainOutcome,
}

/// Trains on the top-`m` informative samples.
pub fn train_on_informative(
    cfg: &RunConfig,
    data: &Data,
    splits: &SplitAssignment,
    table: &EntropyScoreTable,
    m: usize,
) -> Result<TrainOutcome> {
    let selection = table.clone().select_count(m);
    Ok(train_two_stage(&data.internal, &selection.informative, &splits.ids(Split::Validation), &cfg.resolved().train)?)
}

/// Minimizes best validation loss over the informative proportion. Each call
/// runs the full two-stage schedule; calls are cached on the selected count,
/// since proportions that round to the same count are the same experiment.
pub fn optimize(
    cfg: &RunConfig,
    data: &Data,
    splits: &SplitAssignment,
    table: &EntropyScoreTable,
) -> Result<Optimization> {
    let n = table.len();
    let mut cache: BTreeMap<usize, std::result::Result<TrainOutcome, String>> = BTreeMap::new();
    let objective = |x: f64| {
        let m = selected_count(x, n);
        let entry = cache
            .entry(m)
            .or_insert_with(|| train_on_informative(cfg, data, splits, table, m).map_err(|e| e.to_string()));
        entry.as_ref().map(|o| o.best.validation_loss).map_err(Clone::clone)
    };
    let trace = minimize(objective, &cfg.space, &cfg.resolved().bo)?;
    let m = selected_count(trace.best_x, n);
    let entropy = match cache.remove(&m) {
        Some(Ok(outcome)) => outcome,
        _ => return Err(Error::Config("best proportion has no successful training run".into())),
    };
    let mut table = table.clone();
    let selection = table.select_count(m);
    Ok(Optimization { trace, selected_count: m, selection, table, entropy })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub baseline: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationEntry {
    pub test: String,
    pub model: String,
    pub n: usize,
    /// True when the model was trained on these samples.
    pub in_sample: bool,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonEntry {
    pub test: String,
    pub baseline: String,
    pub entropy: String,
    pub comparison: Option<RecallComparison>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub seed: u64,
    pub thresholds: Thresholds,
    pub evaluations: Vec<EvaluationEntry>,
    pub comparisons: Vec<ComparisonEntry>,
    pub entropy_gap: Option<EntropyGapTest>,
    pub entropy_gap_error: Option<String>,
}

fn positive_probs(model: &Model, records: &[&infosel_core::dataset::SampleRecord]) -> Result<Vec<f64>> {
    let xs: Vec<&[f64]> = records.iter().map(|r| r.features.as_slice()).collect();
    Ok(model.predict_proba(&xs)?.into_iter().map(|p| p[1]).collect())
}

pub fn validation_predictions(
    data: &Data,
    splits: &SplitAssignment,
    baseline: &Model,
    entropy: &Model,
) -> Result<ValidationPredictions> {
    let ids = splits.ids(Split::Validation);
    let records = data.internal.select(&ids)?;
    Ok(ValidationPredictions {
        labels: records.iter().map(|r| r.label).collect(),
        baseline: positive_probs(baseline, &records)?,
        entropy: positive_probs(entropy, &records)?,
        sample_ids: ids,
    })
}

pub fn thresholds(pred: &ValidationPredictions) -> Result<Thresholds> {
    Ok(Thresholds {
        baseline: select_threshold_max_f(&pred.baseline, &pred.labels)?,
        entropy: select_threshold_max_f(&pred.entropy, &pred.labels)?,
    })
}

/// Test sets in report order: internal test, external test, and the
/// redundant training samples.
pub fn test_sets<'a>(
    data: &'a Data,
    splits: &SplitAssignment,
    redundant: &[u64],
) -> Result<Vec<(&'static str, Vec<&'a infosel_core::dataset::SampleRecord>)>> {
    let mut out = vec![("internal_test", data.internal.select(&splits.ids(Split::Test))?)];
    if let Some(ext) = &data.external {
        out.push(("external_test", ext.records().iter().collect()));
    }
    if !redundant.is_empty() {
        out.push(("redundant_subset", data.internal.select(redundant)?));
    }
    Ok(out)
}

/// Thresholds both models on validation by max-F and evaluates them on
/// every test set.
pub fn evaluate(
    data: &Data,
    splits: &SplitAssignment,
    redundant: &[u64],
    baseline: &Model,
    entropy: &Model,
) -> Result<(ValidationPredictions, Thresholds, Vec<EvaluationEntry>)> {
    let pred = validation_predictions(data, splits, baseline, entropy)?;
    let thr = thresholds(&pred)?;
    let mut entries = Vec::new();
    for (test, records) in test_sets(data, splits, redundant)? {
        let labels: Vec<Label> = records.iter().map(|r| r.label).collect();
        for (name, model, t) in [(BASELINE, baseline, thr.baseline), (ENTROPY, entropy, thr.entropy)] {
            let report = MetricReport::evaluate(&positive_probs(model, &records)?, &labels, t)?;
            entries.push(EvaluationEntry {
                test: test.into(),
                model: name.into(),
                n: records.len(),
                // The Baseline trained on the whole training split.
                in_sample: test == "redundant_subset" && name == BASELINE,
                report,
            });
        }
    }
    Ok((pred, thr, entries))
}

/// Baseline-vs-Entropy recall comparison for every test set.
pub fn compare(entries: &[EvaluationEntry]) -> Vec<ComparisonEntry> {
    let mut tests: Vec<&str> = Vec::new();
    for e in entries {
        if !tests.contains(&e.test.as_str()) {
            tests.push(&e.test);
        }
    }
    tests
        .into_iter()
        .map(|test| {
            let find = |model: &str| entries.iter().find(|e| e.test == test && e.model == model).map(|e| &e.report);
            let result = match (find(BASELINE), find(ENTROPY)) {
                (Some(b), Some(e)) => match (b.recall_ci, e.recall_ci) {
                    (Some(cb), Some(ce)) => compare_recall(b.recall, cb, e.recall, ce).map_err(|err| err.to_string()),
                    _ => Err("no positives in this test set".to_string()),
                },
                _ => Err("missing report".to_string()),
            };
            ComparisonEntry {
                test: test.into(),
                baseline: BASELINE.into(),
                entropy: ENTROPY.into(),
                error: result.as_ref().err().cloned(),
                comparison: result.ok(),
            }
        })
        .collect()
}

pub fn metrics_file(
    seed: u64,
    thr: Thresholds,
    entries: Vec<EvaluationEntry>,
    table: &EntropyScoreTable,
) -> MetricsFile {
    let gap = entropy_gap_test(table);
    MetricsFile {
        seed,
        thresholds: thr,
        comparisons: compare(&entries),
        evaluations: entries,
        entropy_gap_error: gap.as_ref().err().map(|e| e.to_string()),
        entropy_gap: gap.ok(),
    }
}

/// Writes embeddings, entropy histograms, confusion matrices and Sankey
/// flows. Returns the files written.
#[allow(clippy::too_many_arguments)]
pub fn export_figures(
    layout: &Layout,
    data: &Data,
    splits: &SplitAssignment,
    models: [&Model; 2],
    table: &EntropyScoreTable,
    selection: &Selection,
    metrics: &MetricsFile,
    bins: usize,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut sets: Vec<(&str, Vec<&infosel_core::dataset::SampleRecord>)> =
        Split::ALL.iter().map(|s| Ok((s.name(), data.internal.select(&splits.ids(*s))?))).collect::<Result<_>>()?;
    if let Some(ext) = &data.external {
        sets.push(("external", ext.records().iter().collect()));
    }
    for (name, model) in [BASELINE, ENTROPY].into_iter().zip(models) {
        for (split, records) in &sets {
            let xs: Vec<&[f64]> = records.iter().map(|r| r.features.as_slice()).collect();
            let emb = model.penultimate_embeddings(&xs)?;
            let rows: Vec<(u64, Label, Vec<f64>)> =
                records.iter().zip(emb).map(|(r, e)| (r.sample_id, r.label, e)).collect();
            let path = layout.figure(&format!("embeddings_{name}_{split}.csv"));
            write_embeddings(&rows, &path)?;
            written.push(path);
        }
    }

    let mut hists = Vec::new();
    for (tag, subset, ids) in [
        ("informative", Subset::Informative, &selection.informative),
        ("redundant", Subset::Redundant, &selection.redundant),
    ] {
        if !ids.is_empty() {
            hists.push((tag, entropy_histogram(table, bins, subset)?));
        }
    }
    let path = layout.figure("entropy_histogram.csv");
    write_histograms(&hists, &path)?;
    written.push(path);

    for name in [BASELINE, ENTROPY] {
        let entries: Vec<_> = metrics.evaluations.iter().filter(|e| e.model == name).collect();
        let rows: Vec<(&str, _)> = entries.iter().map(|e| (e.test.as_str(), e.report.counts)).collect();
        let path = layout.figure(&format!("confusion_{name}.csv"));
        write_confusion(&rows, &path)?;
        written.push(path);
        for e in entries {
            // A test set without one of the classes has no Sankey diagram.
            if let Ok(flows) = export_sankey(&e.report.counts) {
                let path = layout.figure(&format!("sankey_{name}_{}.csv", e.test));
                write_sankey(&flows, &path)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Inventory and headline numbers of one run. Wall-clock timings live in
/// `timings.json`, outside the manifest, so that identical runs produce
/// identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub complete: bool,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    pub seed: u64,
    pub config: RunConfig,
    pub informative_proportion: Option<f64>,
    pub best_validation_loss: Option<f64>,
    pub train_count: Option<usize>,
    pub informative_count: Option<usize>,
    pub redundant_count: Option<usize>,
    pub artifacts: Vec<ArtifactRecord>,
}

pub fn hash_file(path: &Path) -> Result<(String, u64)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

fn relative(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

struct Recorder {
    layout: Layout,
    written: BTreeSet<PathBuf>,
    timings: Vec<(&'static str, f64)>,
    manifest: RunManifest,
}

impl Recorder {
    fn stage<T>(&mut self, name: &'static str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f(self);
        self.timings.push((name, start.elapsed().as_secs_f64()));
        out.map_err(|e| Error::Stage { stage: name, source: Box::new(e) })
    }

    fn extend(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        self.written.extend(paths);
    }

    fn finish(mut self) -> Result<RunManifest> {
        let mut artifacts = Vec::new();
        for path in &self.written {
            let (sha256, bytes) = hash_file(path)?;
            artifacts.push(ArtifactRecord { path: relative(&self.layout.root, path), sha256, bytes });
        }
        artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        self.manifest.artifacts = artifacts;
        write_json(&self.manifest, &self.layout.manifest())?;
        let timings: BTreeMap<&str, f64> = self.timings.iter().copied().collect();
        write_json(&timings, &self.layout.timings())?;
        Ok(self.manifest)
    }
}

/// Runs every stage and writes all artifacts plus `manifest.json` under
/// `out_dir`. On failure the manifest is still written, marked incomplete
/// and naming the failed stage, and the stage error is returned.
pub fn run_pipeline(cfg: &RunConfig, out_dir: &Path) -> Result<RunManifest> {
    let layout = Layout::new(out_dir);
    let resolved = cfg.resolved();
    let mut rec = Recorder {
        layout: layout.clone(),
        written: BTreeSet::new(),
        timings: Vec::new(),
        manifest: RunManifest {
            format: "infosel-manifest/1".into(),
            complete: false,
            failed_stage: None,
            error: None,
            seed: cfg.seed,
            config: resolved.clone(),
            informative_proportion: None,
            best_validation_loss: None,
            train_count: None,
            informative_count: None,
            redundant_count: None,
            artifacts: Vec::new(),
        },
    };
    match run_stages(cfg, &mut rec) {
        Ok(()) => {
            rec.manifest.complete = true;
            rec.finish()
        }
        Err(e) => {
            rec.manifest.failed_stage = e.stage().map(String::from);
            rec.manifest.error = Some(e.to_string());
            rec.finish()?;
            Err(e)
        }
    }
}

fn run_stages(cfg: &RunConfig, rec: &mut Recorder) -> Result<()> {
    let layout = rec.layout.clone();
    rec.stage(Step::Config.name(), |_| cfg.validate())?;

    let data = rec.stage(Step::Generate.name(), |rec| {
        let data = build_data(cfg)?;
        rec.extend(persist_data(&layout, &data)?);
        Ok(data)
    })?;

    let splits = rec.stage(Step::Split.name(), |rec| {
        let s = split(cfg, &data)?;
        rec.extend(persist_splits(&layout, &s)?);
        Ok(s)
    })?;
    rec.manifest.train_count = Some(splits.ids(Split::Train).len());

    let baseline = rec.stage(Step::TrainBaseline.name(), |rec| {
        let out = train_baseline(cfg, &data, &splits)?;
        rec.extend(persist_model(&layout, cfg, BASELINE, data.internal.shape(), &out, 1.0)?);
        Ok(out)
    })?;

    let table = rec.stage(Step::Score.name(), |rec| {
        let table = score(&baseline.best.model, &data, &splits)?;
        rec.extend(persist_scores(&layout, &table)?);
        Ok(table)
    })?;

    let opt = rec.stage(Step::Optimize.name(), |rec| {
        let opt = optimize(cfg, &data, &splits, &table)?;
        rec.extend(persist_optimization(&layout, cfg, &opt)?);
        Ok(opt)
    })?;
    rec.manifest.informative_proportion = Some(opt.trace.best_x);
    rec.manifest.best_validation_loss = Some(opt.trace.best_y);
    rec.manifest.informative_count = Some(opt.selection.informative.len());
    rec.manifest.redundant_count = Some(opt.selection.redundant.len());

    rec.stage(Step::TrainEntropy.name(), |rec| {
        let proportion = opt.selected_count as f64 / opt.table.len() as f64;
        rec.extend(persist_model(&layout, cfg, ENTROPY, data.internal.shape(), &opt.entropy, proportion)?);
        Ok(())
    })?;

    let models = [&baseline.best.model, &opt.entropy.best.model];
    let (thr, entries) = rec.stage(Step::Evaluate.name(), |rec| {
        let (pred, thr, entries) = evaluate(&data, &splits, &opt.selection.redundant, models[0], models[1])?;
        rec.extend(persist_evaluation(&layout, cfg.seed, &pred, thr, &entries)?);
        Ok((thr, entries))
    })?;

    let metrics = rec.stage(Step::Compare.name(), |rec| {
        let file = metrics_file(cfg.seed, thr, entries, &opt.table);
        write_json(&file, &layout.metrics())?;
        rec.extend([layout.metrics()]);
        Ok(file)
    })?;

    rec.stage(Step::Export.name(), |rec| {
        let files =
            export_figures(&layout, &data, &splits, models, &opt.table, &opt.selection, &metrics, cfg.histogram_bins)?;
        rec.extend(files);
        Ok(())
    })
}

pub fn persist_data(layout: &Layout, data: &Data) -> Result<Vec<PathBuf>> {
    save_csv(&data.internal, &layout.internal_data())?;
    let mut out = vec![layout.internal_data()];
    if let Some(ext) = &data.external {
        save_csv(ext, &layout.external_data())?;
        out.push(layout.external_data());
    }
    Ok(out)
}

pub fn persist_splits(layout: &Layout, splits: &SplitAssignment) -> Result<Vec<PathBuf>> {
    save_splits(splits, &layout.splits())?;
    Ok(vec![layout.splits()])
}

/// Writes a model's best checkpoint and its loss curves.
pub fn persist_model(
    layout: &Layout,
    cfg: &RunConfig,
    name: &str,
    shape: infosel_core::dataset::FeatureShape,
    outcome: &TrainOutcome,
    proportion: f64,
) -> Result<Vec<PathBuf>> {
    let file = CheckpointFile::new(name, shape, &outcome.best, &cfg.resolved().train, proportion, cfg.seed);
    let curves = layout.figure(&format!("loss_{name}.csv"));
    write_json(&file, &layout.checkpoint(name))?;
    write_loss_curves(&outcome.curves, &curves)?;
    Ok(vec![layout.checkpoint(name), curves])
}

pub fn persist_scores(layout: &Layout, table: &EntropyScoreTable) -> Result<Vec<PathBuf>> {
    write_scores(table, &layout.scores())?;
    Ok(vec![layout.scores()])
}

pub fn persist_optimization(layout: &Layout, cfg: &RunConfig, opt: &Optimization) -> Result<Vec<PathBuf>> {
    let resolved = cfg.resolved();
    write_trace(&opt.trace, &layout.trace())?;
    write_json(
        &TraceSummary {
            best_proportion: opt.trace.best_x,
            best_validation_loss: opt.trace.best_y,
            selected_count: opt.selected_count,
            train_count: opt.table.len(),
            config: resolved.bo,
            space: resolved.space,
            seed: cfg.seed,
            trace: opt.trace.clone(),
        },
        &layout.trace_summary(),
    )?;
    write_scores(&opt.table, &layout.scores())?;
    Ok(vec![layout.trace(), layout.trace_summary(), layout.scores()])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationsFile {
    pub seed: u64,
    pub thresholds: Thresholds,
    pub evaluations: Vec<EvaluationEntry>,
}

pub fn persist_evaluation(
    layout: &Layout,
    seed: u64,
    pred: &ValidationPredictions,
    thresholds: Thresholds,
    entries: &[EvaluationEntry],
) -> Result<Vec<PathBuf>> {
    pred.write(&layout.validation_predictions())?;
    write_json(&EvaluationsFile { seed, thresholds, evaluations: entries.to_vec() }, &layout.evaluations())?;
    Ok(vec![layout.validation_predictions(), layout.evaluations()])
}

/// Pipeline stages, in execution order. Each subcommand runs one of them
/// from the artifacts of the previous ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Config,
    Generate,
    Split,
    TrainBaseline,
    Score,
    Optimize,
    TrainEntropy,
    Evaluate,
    Compare,
    Export,
}

impl Step {
    pub fn name(self) -> &'static str {
        match self {
            Step::Config => "config",
            Step::Generate => "generate",
            Step::Split => "split",
            Step::TrainBaseline => "train-baseline",
            Step::Score => "score",
            Step::Optimize => "optimize",
            Step::TrainEntropy => "train-entropy",
            Step::Evaluate => "evaluate",
            Step::Compare => "compare",
            Step::Export => "export",
        }
    }
}

/// Loads the datasets written by `generate`. The external file is expected
/// exactly when the configuration declares an external set.
pub fn load_data(cfg: &RunConfig, layout: &Layout) -> Result<Data> {
    let has_external = match &cfg.data {
        DataSource::Synthetic { external, .. } => external.is_some(),
        DataSource::Csv { external, .. } => external.is_some(),
    };
    let internal = load_csv(&layout.internal_data())?;
    let external = if has_external { Some(load_csv(&layout.external_data())?) } else { None };
    Ok(Data { internal, external })
}

pub fn load_checkpoint(layout: &Layout, name: &str) -> Result<CheckpointFile> {
    CheckpointFile::load(&layout.checkpoint(name))
}

fn load_split_file(cfg: &RunConfig, layout: &Layout, data: &Data) -> Result<SplitAssignment> {
    let splits = load_splits(&layout.splits(), cfg.split)?;
    splits.check_against(&data.internal).map_err(|e| Error::format(layout.splits(), e))?;
    Ok(splits)
}

/// Runs a single stage from the artifacts already under `layout`, returning
/// the files it wrote. Stage failures carry the stage name.
pub fn run_step(step: Step, cfg: &RunConfig, layout: &Layout) -> Result<Vec<PathBuf>> {
    run_step_inner(step, cfg, layout).map_err(|e| Error::Stage { stage: step.name(), source: Box::new(e) })
}

fn run_step_inner(step: Step, cfg: &RunConfig, layout: &Layout) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    match step {
        Step::Config => Ok(Vec::new()),
        Step::Generate => persist_data(layout, &build_data(cfg)?),
        Step::Split => {
            let data = load_data(cfg, layout)?;
            persist_splits(layout, &split(cfg, &data)?)
        }
        Step::TrainBaseline => {
            let data = load_data(cfg, layout)?;
            let splits = load_split_file(cfg, layout, &data)?;
            let out = train_baseline(cfg, &data, &splits)?;
            persist_model(layout, cfg, BASELINE, data.internal.shape(), &out, 1.0)
        }
        Step::Score => {
            let data = load_data(cfg, layout)?;
            let splits = load_split_file(cfg, layout, &data)?;
            let baseline = load_checkpoint(layout, BASELINE)?;
            persist_scores(layout, &score(&baseline.model, &data, &splits)?)
        }
        Step::Optimize => {
            let data = load_data(cfg, layout)?;
            let splits = load_split_file(cfg, layout, &data)?;
            let table = read_scores(&layout.scores())?;
            let opt = optimize(cfg, &data, &splits, &table)?;
            let mut files = persist_optimization(layout, cfg, &opt)?;
            let proportion = opt.selected_count as f64 / opt.table.len() as f64;
            files.extend(persist_model(layout, cfg, ENTROPY, data.internal.shape(), &opt.entropy, proportion)?);
            Ok(files)
        }
        Step::TrainEntropy => {
            // Retrains at the chosen count; training is deterministic, so the
            // result must reproduce the optimizer's best loss exactly.
            let data = load_data(cfg, layout)?;
            let splits = load_split_file(cfg, layout, &data)?;
            let summary: TraceSummary = read_json(&layout.trace_summary())?;
            let table = read_scores(&layout.scores())?;
            let out = train_on_informative(cfg, &data, &splits, &table, summary.selected_count)?;
            if out.best.validation_loss != summary.best_validation_loss {
                return Err(Error::format(
                    layout.trace_summary(),
                    format!(
                        "retrained validation loss {} differs from the optimizer's best {}",
                        out.best.validation_loss, summary.best_validation_loss
                    ),
                ));
            }
            let proportion = summary.selected_count as f64 / table.len() as f64;
            persist_model(layout, cfg, ENTROPY, data.internal.shape(), &out, proportion)
        }
        Step::Evaluate => {
            let data = load_data(cfg, layout)?;
            let splits = load_split_file(cfg, layout, &data)?;
            let table = read_scores(&layout.scores())?;
            let redundant = redundant_ids(&table);
            let (b, e) = (load_checkpoint(layout, BASELINE)?, load_checkpoint(layout, ENTROPY)?);
            let (pred, thr, entries) = evaluate(&data, &splits, &redundant, &b.model, &e.model)?;
            persist_evaluation(layout, cfg.seed, &pred, thr, &entries)
        }
        Step::Compare => {
            let evals: EvaluationsFile = read_json(&layout.evaluations())?;
            let table = read_scores(&layout.scores())?;
            write_json(&metrics_file(cfg.seed, evals.thresholds, evals.evaluations, &table), &layout.metrics())?;
            Ok(vec![layout.metrics()])
        }
        Step::Export => export_from_artifacts(cfg, layout),
    }
}

fn redundant_ids(table: &EntropyScoreTable) -> Vec<u64> {
    let mut ids: Vec<u64> = table.rows().iter().filter(|r| r.flag == Flag::Redundant).map(|r| r.sample_id).collect();
    ids.sort_unstable();
    ids
}

/// Figure data from a finished run's files; a missing upstream artifact is
/// named in the error.
pub fn export_from_artifacts(cfg: &RunConfig, layout: &Layout) -> Result<Vec<PathBuf>> {
    let data = load_data(cfg, layout)?;
    let splits = load_split_file(cfg, layout, &data)?;
    let (b, e) = (load_checkpoint(layout, BASELINE)?, load_checkpoint(layout, ENTROPY)?);
    let table = read_scores(&layout.scores())?;
    let metrics: MetricsFile = read_json(&layout.metrics())?;
    let selection = Selection {
        informative: {
            let mut ids: Vec<u64> =
                table.rows().iter().filter(|r| r.flag == Flag::Informative).map(|r| r.sample_id).collect();
            ids.sort_unstable();
            ids
        },
        redundant: redundant_ids(&table),
    };
    export_figures(layout, &data, &splits, [&b.model, &e.model], &table, &selection, &metrics, cfg.histogram_bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use infosel_core::stats::ConfusionMatrix;

    fn entry(test: &str, model: &str, tp: u64, fn_: u64) -> EvaluationEntry {
        let counts = ConfusionMatrix { tp, fp: 3, tn: 20, fn_ };
        EvaluationEntry {
            test: test.into(),
            model: model.into(),
            n: counts.total() as usize,
            in_sample: false,
            report: MetricReport::new(counts, 0.5).unwrap(),
        }
    }

    #[test]
    fn comparisons_keep_test_order_and_orientation() {
        let entries = [
            entry("internal_test", BASELINE, 30, 20),
            entry("internal_test", ENTROPY, 40, 10),
            entry("external_test", BASELINE, 0, 0),
            entry("external_test", ENTROPY, 0, 0),
        ];
        let c = compare(&entries);
        assert_eq!(c.iter().map(|c| c.test.as_str()).collect::<Vec<_>>(), ["internal_test", "external_test"]);
        let first = c[0].comparison.as_ref().unwrap();
        assert!(first.z > 0.0 && first.delta_recall > 0.0);
        assert!(c[1].comparison.is_none() && c[1].error.is_some());
    }

    #[test]
    fn relative_paths_use_forward_slashes() {
        let root = Path::new("/tmp/run");
        assert_eq!(relative(root, &root.join("figures").join("a.csv")), "figures/a.csv");
    }
}
