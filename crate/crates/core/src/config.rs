//! One structured run configuration drives every command; CLI flags override
//! individual fields, and the fully resolved config is persisted in the run
//! manifest so any run can be reproduced from it alone.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alpha::SearchConfig;
use crate::augment::AugmentConfig;
use crate::codebook::SinkhornConfig;
use crate::data::{Dataset, GeneratorConfig, SplitSpec};
use crate::error::{Error, Result};
use crate::loss::LossConfig;
use crate::model::ModelConfig;
use crate::trainer::{AuxMode, TrainConfig};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DataSection {
    /// Dataset file in the interchange format.
    pub path: String,
    #[serde(default)]
    pub split: SplitSpec,
    /// Fixed activity thresholds overriding the quantile rule.
    #[serde(default)]
    pub bucket_thresholds: Option<(usize, usize)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CodebookSection {
    #[serde(default = "default_capacity")]
    pub capacity: usize,
    #[serde(default = "default_tau3")]
    pub tau3: f64,
    #[serde(flatten)]
    pub sinkhorn: SinkhornConfig,
}

fn default_capacity() -> usize {
    128
}
fn default_tau3() -> f64 {
    0.1
}

impl Default for CodebookSection {
    fn default() -> Self {
        CodebookSection {
            capacity: default_capacity(),
            tau3: default_tau3(),
            sinkhorn: SinkhornConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AlphaSection {
    #[serde(default = "default_w")]
    pub w1: f64,
    #[serde(default = "default_w")]
    pub w2: f64,
}

fn default_w() -> f64 {
    1.0
}

impl Default for AlphaSection {
    fn default() -> Self {
        AlphaSection { w1: 1.0, w2: 1.0 }
    }
}

/// The full run configuration. Optional sections are only required by the
/// commands that use them.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub generator: Option<GeneratorConfig>,
    #[serde(default)]
    pub data: Option<DataSection>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub augment: AugmentConfig,
    #[serde(default)]
    pub codebook: CodebookSection,
    #[serde(default)]
    pub alpha: AlphaSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub search: SearchConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let mut s = serde_json::to_string_pretty(&value).expect("config renders");
        s.push('\n');
        s
    }

    pub fn data_section(&self) -> Result<&DataSection> {
        self.data
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("config is missing the `data` section".into()))
    }

    pub fn generator_section(&self) -> Result<&GeneratorConfig> {
        self.generator.as_ref().ok_or_else(|| {
            Error::InvalidConfig("config is missing the `generator` section".into())
        })
    }

    /// The model config completed with vocabulary sizes from a dataset.
    pub fn model_for(&self, ds: &Dataset) -> ModelConfig {
        let mut m = self.model.clone();
        m.num_users = ds.num_users;
        m.num_items = ds.num_items;
        m.extra_vocab_sizes = ds.extra_vocab_sizes.clone();
        m
    }
}

/// Flag-level overrides; every field beats the config file when present.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub aux: Option<AuxMode>,
    pub alpha_const: Option<f64>,
    pub aux_weight: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub learning_rate: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(seed) = self.seed {
            cfg.train.seed = seed;
            if let Some(g) = cfg.generator.as_mut() {
                g.seed = seed;
            }
        }
        if let Some(aux) = self.aux {
            cfg.train.aux = aux;
        }
        if let Some(a) = self.alpha_const {
            cfg.train.alpha_const = Some(a);
        }
        if let Some(w) = self.aux_weight {
            cfg.loss.aux_weight = w;
        }
        if let Some(b) = self.batch_size {
            cfg.train.batch_size = b;
        }
        if let Some(e) = self.max_epochs {
            cfg.train.max_epochs = e;
        }
        if let Some(lr) = self.learning_rate {
            cfg.train.learning_rate = lr;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_json_fills_defaults() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg.codebook.capacity, 128);
        assert_eq!(cfg.loss.top_k, 5);
        assert_eq!(cfg.train.batch_size, 256);
        assert_eq!(cfg.model.embed_dim, 16);
        assert_eq!(cfg.search.w1_grid.len(), 5);
    }

    #[test]
    fn flag_beats_config_beats_default() {
        // default
        let mut cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg.train.seed, 0);
        // config file value
        cfg = serde_json::from_str(r#"{"train": {"seed": 7}}"#).unwrap();
        assert_eq!(cfg.train.seed, 7);
        // flag override
        let ov = Overrides {
            seed: Some(99),
            ..Overrides::default()
        };
        ov.apply(&mut cfg);
        assert_eq!(cfg.train.seed, 99);
    }

    #[test]
    fn roundtrips_through_json() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"data": {"path": "d.csv"}, "loss": {"aux_weight": 0.1}}"#)
                .unwrap();
        let text = cfg.to_json();
        let cfg2: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg2.loss.aux_weight, 0.1);
        assert_eq!(cfg2.data.unwrap().path, "d.csv");
    }
}
