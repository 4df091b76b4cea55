//! Group-structured datasets, the synthetic redundancy generator and
//! group-level splitting.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::{rng_for, rng_from_seed};
use crate::{Error, Result};

/// Binary ground truth. `Abnormal` is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    NoFinding = 0,
    Abnormal = 1,
}

impl Label {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_positive(self) -> bool {
        self == Label::Abnormal
    }
}

impl TryFrom<i64> for Label {
    type Error = Error;

    fn try_from(v: i64) -> Result<Self> {
        match v {
            0 => Ok(Label::NoFinding),
            1 => Ok(Label::Abnormal),
            other => Err(Error::InvalidInput(format!("label {other} is not binary"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Base,
    Duplicate,
}

/// Layout of each sample's features. Grids are stored row-major, one channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureShape {
    Vector { dim: usize },
    Grid { height: usize, width: usize },
}

impl FeatureShape {
    pub fn len(&self) -> usize {
        match *self {
            FeatureShape::Vector { dim } => dim,
            FeatureShape::Grid { height, width } => height * width,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: u64,
    pub group_id: u64,
    pub label: Label,
    pub origin: Origin,
    pub parent_id: Option<u64>,
    pub features: Vec<f64>,
}

/// An immutable, validated collection of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    shape: FeatureShape,
    records: Vec<SampleRecord>,
    index: BTreeMap<u64, usize>,
}

impl Dataset {
    pub fn new(shape: FeatureShape, records: Vec<SampleRecord>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::InvalidInput("feature shape has no elements".into()));
        }
        let mut index = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            if index.insert(r.sample_id, i).is_some() {
                return Err(Error::InvalidInput(format!("duplicate sample_id {}", r.sample_id)));
            }
            if r.features.len() != shape.len() {
                return Err(Error::ShapeMismatch { expected: shape.len(), got: r.features.len() });
            }
            if r.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("sample {} has a non-finite feature", r.sample_id)));
            }
        }
        for r in &records {
            match (r.origin, r.parent_id) {
                (Origin::Base, None) => {}
                (Origin::Duplicate, Some(pid)) => {
                    let parent = index.get(&pid).map(|&i| &records[i]).ok_or_else(|| {
                        Error::InvalidInput(format!("sample {} has unknown parent {pid}", r.sample_id))
                    })?;
                    if parent.group_id != r.group_id || parent.label != r.label {
                        return Err(Error::InvalidInput(format!(
                            "sample {} differs from parent {pid} in group or label",
                            r.sample_id
                        )));
                    }
                }
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "sample {}: parent_id must be set exactly for duplicates",
                        r.sample_id
                    )))
                }
            }
        }
        Ok(Self { shape, records, index })
    }

    pub fn shape(&self) -> FeatureShape {
        self.shape
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, sample_id: u64) -> Option<&SampleRecord> {
        self.index.get(&sample_id).map(|&i| &self.records[i])
    }

    /// Records for `ids`, in the given order.
    pub fn select(&self, ids: &[u64]) -> Result<Vec<&SampleRecord>> {
        ids.iter()
            .map(|id| self.get(*id).ok_or_else(|| Error::InvalidInput(format!("unknown sample_id {id}"))))
            .collect()
    }

    pub fn group_ids(&self) -> BTreeSet<u64> {
        self.records.iter().map(|r| r.group_id).collect()
    }
}

/// Group size distribution: sizes lie in `min..=max`, and a larger
/// `tail_exponent` concentrates groups at `min` so that a minority of groups
/// holds a large share of the samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSizes {
    pub min: usize,
    pub max: usize,
    pub tail_exponent: f64,
}

impl GroupSizes {
    fn draw(&self, rng: &mut impl rand::Rng) -> usize {
        let u: f64 = rng.random();
        let span = (self.max - self.min + 1) as f64;
        let extra = libm::floor(span * libm::pow(u, self.tail_exponent)) as usize;
        (self.min + extra).min(self.max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_groups: usize,
    pub group_sizes: GroupSizes,
    pub duplicate_fraction: f64,
    pub perturbation_sigma: f64,
    /// Probability that a base sample is abnormal.
    pub class_prior: f64,
    pub shape: FeatureShape,
    pub class_separation: f64,
    /// Added to every feature; emulates an external domain.
    pub mean_shift: f64,
    pub first_group_id: u64,
    pub first_sample_id: u64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_groups: 200,
            group_sizes: GroupSizes { min: 1, max: 12, tail_exponent: 3.0 },
            duplicate_fraction: 0.6,
            perturbation_sigma: 0.05,
            class_prior: 0.4,
            shape: FeatureShape::Vector { dim: 8 },
            class_separation: 2.0,
            mean_shift: 0.0,
            first_group_id: 0,
            first_sample_id: 0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.n_groups < 3 {
            return bad("n_groups must be at least 3");
        }
        if !(0.0..1.0).contains(&self.duplicate_fraction) {
            return bad("duplicate_fraction must lie in [0, 1)");
        }
        if !(self.perturbation_sigma >= 0.0 && self.perturbation_sigma.is_finite()) {
            return bad("perturbation_sigma must be finite and non-negative");
        }
        if !(self.class_prior > 0.0 && self.class_prior < 1.0) {
            return bad("class_prior must lie in (0, 1)");
        }
        let g = &self.group_sizes;
        if g.min == 0 || g.max < g.min || !(g.tail_exponent > 0.0 && g.tail_exponent.is_finite()) {
            return bad("group sizes need 1 <= min <= max and a positive tail exponent");
        }
        if self.shape.is_empty() {
            return bad("feature shape must be non-empty");
        }
        if !(self.class_separation >= 0.0 && self.class_separation.is_finite() && self.mean_shift.is_finite()) {
            return bad("class_separation must be finite and non-negative");
        }
        Ok(())
    }
}

fn base_features(cfg: &SyntheticConfig, label: Label, rng: &mut impl rand::Rng) -> Vec<f64> {
    let sign = if label.is_positive() { 0.5 } else { -0.5 };
    match cfg.shape {
        FeatureShape::Vector { dim } => (0..dim)
            .map(|j| {
                let noise: f64 = rng.sample(StandardNormal);
                let mean = if j == 0 { sign * cfg.class_separation } else { 0.0 };
                mean + noise + cfg.mean_shift
            })
            .collect(),
        FeatureShape::Grid { height, width } => {
            let (h, w) = (height as f64, width as f64);
            let (ci, cj) = ((h - 1.0) / 2.0, (w - 1.0) / 2.0);
            let radius = libm::fmax(h.min(w) / 4.0, 0.5);
            let mut out = Vec::with_capacity(height * width);
            for i in 0..height {
                for j in 0..width {
                    let (fi, fj) = (i as f64, j as f64);
                    let background = 0.5
                        * libm::sin(core::f64::consts::PI * (fi + 0.5) / h)
                        * libm::sin(core::f64::consts::PI * (fj + 0.5) / w);
                    let d2 = ((fi - ci) * (fi - ci) + (fj - cj) * (fj - cj)) / (radius * radius);
                    let blob = sign * cfg.class_separation * libm::exp(-0.5 * d2);
                    let noise: f64 = rng.sample(StandardNormal);
                    out.push(background + blob + noise + cfg.mean_shift);
                }
            }
            out
        }
    }
}

/// Generates a dataset with injected near-duplicates. Every group's first
/// sample is a base sample; a `duplicate_fraction` share of all samples
/// (capped by the number of non-first slots) are perturbed copies of a base
/// sample from the same group.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut size_rng = rng_for(cfg.seed, "group-sizes");
    let sizes: Vec<usize> = (0..cfg.n_groups).map(|_| cfg.group_sizes.draw(&mut size_rng)).collect();
    let total: usize = sizes.iter().sum();

    // Slots (group, position >= 1) that may hold duplicates.
    let mut slots: Vec<(usize, usize)> =
        sizes.iter().enumerate().flat_map(|(g, &s)| (1..s).map(move |p| (g, p))).collect();
    let wanted = libm::round(cfg.duplicate_fraction * total as f64) as usize;
    let mut slot_rng = rng_for(cfg.seed, "duplicate-slots");
    slots.shuffle(&mut slot_rng);
    slots.truncate(wanted.min(slots.len()));
    let dup_slots: BTreeSet<(usize, usize)> = slots.into_iter().collect();

    let mut rng = rng_for(cfg.seed, "features");
    let mut records = Vec::with_capacity(total);
    let mut next_id = cfg.first_sample_id;
    for (g, &size) in sizes.iter().enumerate() {
        let group_id = cfg.first_group_id + g as u64;
        let group_start = records.len();
        let (bases, dups): (Vec<usize>, Vec<usize>) = (0..size).partition(|&p| !dup_slots.contains(&(g, p)));
        for _ in &bases {
            let label = if rng.random::<f64>() < cfg.class_prior { Label::Abnormal } else { Label::NoFinding };
            let features = base_features(cfg, label, &mut rng);
            records.push(SampleRecord {
                sample_id: next_id,
                group_id,
                label,
                origin: Origin::Base,
                parent_id: None,
                features,
            });
            next_id += 1;
        }
        for _ in &dups {
            let parent_idx = group_start + rng.random_range(0..bases.len());
            let parent: &SampleRecord = &records[parent_idx];
            let (label, parent_id) = (parent.label, parent.sample_id);
            let mut features = parent.features.clone();
            if cfg.perturbation_sigma > 0.0 {
                for v in &mut features {
                    let z: f64 = rng.sample(StandardNormal);
                    *v += cfg.perturbation_sigma * z;
                }
            }
            records.push(SampleRecord {
                sample_id: next_id,
                group_id,
                label,
                origin: Origin::Duplicate,
                parent_id: Some(parent_id),
                features,
            });
            next_id += 1;
        }
    }
    Dataset::new(cfg.shape, records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self { train: 0.70, validation: 0.10, test: 0.20 }
    }
}

impl SplitFractions {
    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.validation, self.test]
    }

    fn from_array(a: [f64; 3]) -> Self {
        Self { train: a[0], validation: a[1], test: a[2] }
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.as_array();
        if a.iter().any(|f| !(*f > 0.0)) || libm::fabs(a.iter().sum::<f64>() - 1.0) > 1e-9 {
            return Err(Error::InvalidConfig("split fractions must be positive and sum to 1".into()));
        }
        Ok(())
    }

    /// Largest absolute deviation from `target`, in fraction units.
    pub fn max_abs_error(&self, target: &SplitFractions) -> f64 {
        let (a, b) = (self.as_array(), target.as_array());
        (0..3).map(|i| libm::fabs(a[i] - b[i])).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    assignment: BTreeMap<u64, Split>,
    pub target: SplitFractions,
    pub achieved: SplitFractions,
}

impl SplitAssignment {
    /// Builds an assignment from an explicit mapping, recomputing achieved
    /// fractions.
    pub fn from_map(assignment: BTreeMap<u64, Split>, target: SplitFractions) -> Self {
        let mut counts = [0usize; 3];
        for s in assignment.values() {
            counts[s.index()] += 1;
        }
        let n = assignment.len().max(1) as f64;
        let achieved = SplitFractions::from_array(counts.map(|c| c as f64 / n));
        Self { assignment, target, achieved }
    }

    pub fn split_of(&self, sample_id: u64) -> Option<Split> {
        self.assignment.get(&sample_id).copied()
    }

    /// Sample ids in `split`, ascending.
    pub fn ids(&self, split: Split) -> Vec<u64> {
        self.assignment.iter().filter(|(_, s)| **s == split).map(|(id, _)| *id).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, Split)> + '_ {
        self.assignment.iter().map(|(id, s)| (*id, *s))
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    /// Checks that every sample of `dataset` is assigned and that no group
    /// spans two splits.
    pub fn check_against(&self, dataset: &Dataset) -> Result<()> {
        if self.assignment.len() != dataset.len() {
            return Err(Error::InvalidInput("assignment does not cover the dataset".into()));
        }
        let mut group_split: BTreeMap<u64, Split> = BTreeMap::new();
        for r in dataset.records() {
            let s = self
                .split_of(r.sample_id)
                .ok_or_else(|| Error::InvalidInput(format!("sample {} unassigned", r.sample_id)))?;
            if *group_split.entry(r.group_id).or_insert(s) != s {
                return Err(Error::InvalidInput(format!("group {} spans two splits", r.group_id)));
            }
        }
        Ok(())
    }
}

/// Assigns whole groups to splits: groups are shuffled with `seed`, stably
/// ordered largest first, and each goes to the split with the largest
/// remaining sample deficit.
pub fn split_by_group(dataset: &Dataset, fractions: SplitFractions, seed: u64) -> Result<SplitAssignment> {
    fractions.validate()?;
    let mut groups: BTreeMap<u64, Vec<&SampleRecord>> = BTreeMap::new();
    for r in dataset.records() {
        groups.entry(r.group_id).or_default().push(r);
    }
    if groups.len() < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 groups, found {}", groups.len())));
    }
    let mut order: Vec<(u64, usize)> = groups.iter().map(|(g, v)| (*g, v.len())).collect();
    order.shuffle(&mut rng_from_seed(seed));
    order.sort_by_key(|g| core::cmp::Reverse(g.1));

    let sizes: Vec<usize> = order.iter().map(|(_, s)| *s).collect();
    let placement = greedy_partition(&sizes, &fractions);

    let mut assignment = BTreeMap::new();
    for ((gid, _), split) in order.iter().zip(placement) {
        for r in &groups[gid] {
            assignment.insert(r.sample_id, split);
        }
    }
    let result = SplitAssignment::from_map(assignment, fractions);
    for split in Split::ALL {
        for label in [Label::NoFinding, Label::Abnormal] {
            let present =
                dataset.records().iter().any(|r| r.label == label && result.split_of(r.sample_id) == Some(split));
            if !present {
                return Err(Error::MissingClass { split: split.name(), label: label as u8 });
            }
        }
    }
    Ok(result)
}

/// Greedy placement of items (already in placement order) into three bins.
pub fn greedy_partition(sizes: &[usize], fractions: &SplitFractions) -> Vec<Split> {
    let total: usize = sizes.iter().sum();
    let targets = fractions.as_array().map(|f| f * total as f64);
    let mut filled = [0usize; 3];
    sizes
        .iter()
        .map(|&s| {
            let mut best = 0;
            for k in 1..3 {
                if targets[k] - filled[k] as f64 > targets[best] - filled[best] as f64 {
                    best = k;
                }
            }
            filled[best] += s;
            Split::ALL[best]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn cfg() -> SyntheticConfig {
        SyntheticConfig { n_groups: 50, seed: 7, ..Default::default() }
    }

    #[test]
    fn no_duplicates_requested() {
        let d = generate_synthetic(&SyntheticConfig { duplicate_fraction: 0.0, ..cfg() }).unwrap();
        assert!(d.records().iter().all(|r| r.origin == Origin::Base && r.parent_id.is_none()));
    }

    #[test]
    fn zero_sigma_duplicates_copy_parent() {
        let d = generate_synthetic(&SyntheticConfig { perturbation_sigma: 0.0, ..cfg() }).unwrap();
        let mut seen = 0;
        for r in d.records().iter().filter(|r| r.origin == Origin::Duplicate) {
            let p = d.get(r.parent_id.unwrap()).unwrap();
            assert_eq!(p.features, r.features);
            assert_eq!((p.group_id, p.label), (r.group_id, r.label));
            seen += 1;
        }
        assert!(seen > 0);
    }

    #[test]
    fn generation_is_deterministic() {
        let c = SyntheticConfig { duplicate_fraction: 0.6, ..cfg() };
        assert_eq!(generate_synthetic(&c).unwrap(), generate_synthetic(&c).unwrap());
        let other = generate_synthetic(&SyntheticConfig { seed: 8, ..c }).unwrap();
        assert_ne!(generate_synthetic(&c).unwrap(), other);
    }

    #[test]
    fn duplicate_share_matches_request() {
        let d = generate_synthetic(&SyntheticConfig { n_groups: 400, ..cfg() }).unwrap();
        let dups = d.records().iter().filter(|r| r.origin == Origin::Duplicate).count();
        let share = dups as f64 / d.len() as f64;
        assert!((share - 0.6).abs() < 0.01, "share {share}");
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(generate_synthetic(&SyntheticConfig { n_groups: 2, ..cfg() }).is_err());
        assert!(generate_synthetic(&SyntheticConfig { duplicate_fraction: 1.0, ..cfg() }).is_err());
        assert!(generate_synthetic(&SyntheticConfig { perturbation_sigma: -1.0, ..cfg() }).is_err());
    }

    #[test]
    fn grid_pathway_has_grid_shape() {
        let c = SyntheticConfig { shape: FeatureShape::Grid { height: 6, width: 5 }, ..cfg() };
        let d = generate_synthetic(&c).unwrap();
        assert!(d.records().iter().all(|r| r.features.len() == 30));
    }

    fn equal_groups(n: usize, per: usize) -> Dataset {
        let mut records = Vec::new();
        for g in 0..n {
            for k in 0..per {
                let id = (g * per + k) as u64;
                records.push(SampleRecord {
                    sample_id: id,
                    group_id: g as u64,
                    label: if k % 2 == 0 { Label::NoFinding } else { Label::Abnormal },
                    origin: Origin::Base,
                    parent_id: None,
                    features: vec![id as f64],
                });
            }
        }
        Dataset::new(FeatureShape::Vector { dim: 1 }, records).unwrap()
    }

    #[test]
    fn equal_groups_split_exactly() {
        let d = equal_groups(10, 4);
        let s = split_by_group(&d, SplitFractions::default(), 3).unwrap();
        let groups_in =
            |split| s.ids(split).iter().map(|id| d.get(*id).unwrap().group_id).collect::<BTreeSet<_>>().len();
        assert_eq!([groups_in(Split::Train), groups_in(Split::Validation), groups_in(Split::Test)], [7, 1, 2]);
        s.check_against(&d).unwrap();
    }

    #[test]
    fn missing_class_is_an_error() {
        let mut records = Vec::new();
        for g in 0..5u64 {
            records.push(SampleRecord {
                sample_id: g,
                group_id: g,
                label: Label::NoFinding,
                origin: Origin::Base,
                parent_id: None,
                features: vec![0.0],
            });
        }
        let d = Dataset::new(FeatureShape::Vector { dim: 1 }, records).unwrap();
        assert!(matches!(split_by_group(&d, SplitFractions::default(), 0), Err(Error::MissingClass { .. })));
    }

    #[test]
    fn dataset_rejects_broken_parent_links() {
        let r = |id, origin, parent_id| SampleRecord {
            sample_id: id,
            group_id: 0,
            label: Label::NoFinding,
            origin,
            parent_id,
            features: vec![0.0],
        };
        let shape = FeatureShape::Vector { dim: 1 };
        assert!(Dataset::new(shape, vec![r(0, Origin::Base, Some(1))]).is_err());
        assert!(Dataset::new(shape, vec![r(0, Origin::Duplicate, Some(9))]).is_err());
        assert!(Dataset::new(shape, vec![r(0, Origin::Base, None), r(0, Origin::Base, None)]).is_err());
        assert!(Dataset::new(shape, vec![r(0, Origin::Base, None), r(1, Origin::Duplicate, Some(0))]).is_ok());
    }
}
