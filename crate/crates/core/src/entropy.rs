//! Prediction-entropy scoring and informative-subset selection.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::classifier::Model;
use crate::dataset::Dataset;
use crate::stats::{compare_recall, Interval, RecallComparison, Z_95};
use crate::{Error, Result};

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn prediction_entropy(p: &[f64]) -> Result<f64> {
    if p.len() < 2 {
        return Err(Error::InvalidInput("probability vector needs at least two entries".into()));
    }
    if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidInput("probabilities must lie in [0, 1]".into()));
    }
    let sum: f64 = p.iter().sum();
    if libm::fabs(sum - 1.0) > 1e-9 {
        return Err(Error::InvalidInput(format!("probabilities sum to {sum}")));
    }
    let h: f64 = p.iter().filter(|v| **v > 0.0).map(|v| -v * libm::log(*v)).sum();
    Ok(h.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    Informative,
    Redundant,
}

impl Flag {
    pub fn name(self) -> &'static str {
        match self {
            Flag::Informative => "informative",
            Flag::Redundant => "redundant",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub sample_id: u64,
    pub entropy: f64,
    /// 1-based position in descending-entropy order.
    pub rank: usize,
    pub flag: Flag,
}

/// Rows in rank order. Ties in entropy rank by ascending sample id;
/// informative rows are exactly the leading ones.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyScoreTable {
    rows: Vec<ScoreRow>,
}

/// Id lists produced by a selection, each sorted by sample id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub informative: Vec<u64>,
    pub redundant: Vec<u64>,
}

/// `round(proportion · n)`, halves away from zero.
pub fn selected_count(proportion: f64, n: usize) -> usize {
    (libm::round(proportion * n as f64) as usize).min(n)
}

impl EntropyScoreTable {
    /// Ranks `(sample_id, entropy)` pairs. Every row starts informative.
    pub fn from_scores(scores: impl IntoIterator<Item = (u64, f64)>) -> Result<Self> {
        let mut pairs: Vec<(u64, f64)> = scores.into_iter().collect();
        if pairs.is_empty() {
            return Err(Error::Empty("score set"));
        }
        if pairs.iter().any(|(_, h)| !h.is_finite() || *h < 0.0) {
            return Err(Error::InvalidInput("entropies must be finite and non-negative".into()));
        }
        pairs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidInput("duplicate sample_id in scores".into()));
        }
        let rows = pairs
            .into_iter()
            .enumerate()
            .map(|(i, (sample_id, entropy))| ScoreRow { sample_id, entropy, rank: i + 1, flag: Flag::Informative })
            .collect();
        Ok(Self { rows })
    }

    /// Rebuilds a table from stored rows, checking every table invariant.
    pub fn from_rows(mut rows: Vec<ScoreRow>) -> Result<Self> {
        rows.sort_by_key(|r| r.rank);
        let table = Self::from_scores(rows.iter().map(|r| (r.sample_id, r.entropy)))?;
        let m = rows.iter().filter(|r| r.flag == Flag::Informative).count();
        for (a, b) in rows.iter().zip(&table.rows) {
            let expected = if b.rank <= m { Flag::Informative } else { Flag::Redundant };
            if a.sample_id != b.sample_id || a.rank != b.rank || a.flag != expected {
                return Err(Error::InvalidInput(format!("score row for sample {} is inconsistent", a.sample_id)));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[ScoreRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn informative_count(&self) -> usize {
        self.rows.iter().take_while(|r| r.flag == Flag::Informative).count()
    }

    /// Flags the top `round(proportion · N)` rows informative and the rest
    /// redundant.
    pub fn select_informative(&mut self, proportion: f64) -> Result<Selection> {
        if !(proportion > 0.0 && proportion <= 1.0) {
            return Err(Error::InvalidInput(format!("proportion {proportion} outside (0, 1]")));
        }
        Ok(self.select_count(selected_count(proportion, self.rows.len())))
    }

    pub fn select_count(&mut self, m: usize) -> Selection {
        let m = m.min(self.rows.len());
        let mut informative = Vec::with_capacity(m);
        let mut redundant = Vec::with_capacity(self.rows.len() - m);
        for row in &mut self.rows {
            if row.rank <= m {
                row.flag = Flag::Informative;
                informative.push(row.sample_id);
            } else {
                row.flag = Flag::Redundant;
                redundant.push(row.sample_id);
            }
        }
        informative.sort_unstable();
        redundant.sort_unstable();
        Selection { informative, redundant }
    }

    fn entropies(&self, subset: Subset) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| match subset {
                Subset::All => true,
                Subset::Informative => r.flag == Flag::Informative,
                Subset::Redundant => r.flag == Flag::Redundant,
            })
            .map(|r| r.entropy)
            .collect()
    }
}

/// Scores each listed sample with `model` and ranks the results.
pub fn score_training_set(model: &Model, data: &Dataset, train_ids: &[u64]) -> Result<EntropyScoreTable> {
    if train_ids.is_empty() {
        return Err(Error::Empty("training sample list"));
    }
    let mut scores = Vec::with_capacity(train_ids.len());
    for rec in data.select(train_ids)? {
        let p = model.predict_one(&rec.features)?;
        scores.push((rec.sample_id, prediction_entropy(&p)?));
    }
    EntropyScoreTable::from_scores(scores)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    Informative,
    Redundant,
    All,
}

impl Subset {
    pub fn name(self) -> &'static str {
        match self {
            Subset::Informative => "informative",
            Subset::Redundant => "redundant",
            Subset::All => "all",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `n_bins + 1` edges spanning `[0, ln 2]`.
    pub edges: Vec<f64>,
    /// Fractions per bin, summing to 1.
    pub normalized_counts: Vec<f64>,
}

/// Histogram of binary-prediction entropies over `[0, ln 2]`. Values at the
/// right edge fall into the last bin.
pub fn entropy_histogram(table: &EntropyScoreTable, n_bins: usize, subset: Subset) -> Result<Histogram> {
    if n_bins == 0 {
        return Err(Error::InvalidInput("histogram needs at least one bin".into()));
    }
    let values = table.entropies(subset);
    if values.is_empty() {
        return Err(Error::Empty("entropy subset"));
    }
    let hi = core::f64::consts::LN_2;
    let width = hi / n_bins as f64;
    let edges = (0..=n_bins).map(|i| if i == n_bins { hi } else { i as f64 * width }).collect();
    let mut counts = alloc::vec![0usize; n_bins];
    for v in &values {
        let bin = (libm::floor(v / width) as usize).min(n_bins - 1);
        counts[bin] += 1;
    }
    let n = values.len() as f64;
    Ok(Histogram { edges, normalized_counts: counts.into_iter().map(|c| c as f64 / n).collect() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetSummary {
    pub n: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub ci: Interval,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyGapTest {
    pub informative: SubsetSummary,
    pub redundant: SubsetSummary,
    /// Redundant mean as the first value, informative as the second, so a
    /// higher informative mean gives a positive Z.
    pub comparison: RecallComparison,
}

fn summarize(values: &[f64]) -> SubsetSummary {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = if n > 1 { values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    let std_dev = libm::sqrt(var);
    let half = Z_95 * std_dev / libm::sqrt(n as f64);
    SubsetSummary { n, mean, std_dev, ci: Interval { lower: mean - half, upper: mean + half } }
}

/// Compares mean entropy of the informative and redundant subsets with
/// normal-approximation intervals and the CI-based Z test.
pub fn entropy_gap_test(table: &EntropyScoreTable) -> Result<EntropyGapTest> {
    let inf = table.entropies(Subset::Informative);
    let red = table.entropies(Subset::Redundant);
    if inf.is_empty() {
        return Err(Error::Empty("informative subset"));
    }
    if red.is_empty() {
        return Err(Error::Empty("redundant subset"));
    }
    let (informative, redundant) = (summarize(&inf), summarize(&red));
    let comparison = compare_recall(redundant.mean, redundant.ci, informative.mean, informative.ci)?;
    Ok(EntropyGapTest { informative, redundant, comparison })
}
