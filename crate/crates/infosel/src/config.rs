use std::path::{Path, PathBuf};

use infosel_core::bayesopt::{BoConfig, SearchSpace};
use infosel_core::classifier::TrainConfig;
use infosel_core::dataset::{SplitFractions, SyntheticConfig};
use infosel_core::rng::sub_seed;
use serde::{Deserialize, Serialize};

use crate::artifacts::read_json;
use crate::error::{Error, Result};

/// Shifted companion set emulating an external site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExternalShift {
    pub n_groups: usize,
    pub mean_shift: f64,
}

impl Default for ExternalShift {
    fn default() -> Self {
        Self { n_groups: 100, mean_shift: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic {
        #[serde(default)]
        internal: SyntheticConfig,
        #[serde(default)]
        external: Option<ExternalShift>,
    },
    Csv {
        internal: PathBuf,
        #[serde(default)]
        external: Option<PathBuf>,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic { internal: SyntheticConfig::default(), external: Some(ExternalShift::default()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Every stage seed is derived from this one.
    pub seed: u64,
    pub data: DataSource,
    pub split: SplitFractions,
    pub train: TrainConfig,
    pub bo: BoConfig,
    pub space: SearchSpace,
    pub histogram_bins: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataSource::default(),
            split: SplitFractions::default(),
            // Desk-scale training sets hold ~10^3 samples; 512-sample batches
            // would give two updates per epoch.
            train: TrainConfig { batch_size: 32, ..TrainConfig::default() },
            bo: BoConfig::default(),
            space: SearchSpace::default(),
            histogram_bins: 50,
        }
    }
}

/// Seeds of the independent random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub data: u64,
    pub external_data: u64,
    pub split: u64,
    pub train: u64,
    pub bo: u64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn seeds(&self) -> StageSeeds {
        StageSeeds {
            data: sub_seed(self.seed, "data"),
            external_data: sub_seed(self.seed, "external-data"),
            split: sub_seed(self.seed, "split"),
            train: sub_seed(self.seed, "train"),
            bo: sub_seed(self.seed, "bo"),
        }
    }

    /// Copy with every nested seed replaced by its derived sub-seed, as
    /// actually used by the pipeline.
    pub fn resolved(&self) -> Self {
        let seeds = self.seeds();
        let mut out = self.clone();
        if let DataSource::Synthetic { internal, .. } = &mut out.data {
            internal.seed = seeds.data;
        }
        out.train.seed = seeds.train;
        out.bo.seed = seeds.bo;
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        self.train.validate()?;
        self.bo.validate()?;
        self.space.validate()?;
        if self.histogram_bins == 0 {
            return Err(Error::Config("histogram_bins must be positive".into()));
        }
        match &self.data {
            DataSource::Synthetic { internal, external } => {
                internal.validate()?;
                if let Some(e) = external {
                    if e.n_groups == 0 || !e.mean_shift.is_finite() {
                        return Err(Error::Config("external set needs groups and a finite mean shift".into()));
                    }
                }
            }
            DataSource::Csv { internal, external } => {
                for p in std::iter::once(internal).chain(external) {
                    if !p.exists() {
                        return Err(Error::Config(format!("data file {} does not exist", p.display())));
                    }
                }
            }
        }
        Ok(())
    }
}
