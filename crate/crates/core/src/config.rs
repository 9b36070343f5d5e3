//! Flat JSON experiment configuration. Every field is optional; missing
//! fields take the defaults below.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::CorpusSource;
use crate::difficulty::{validate_budgets, Thresholds, DEFAULT_CONVERGENCE_BUDGET, DEFAULT_TEACHER_BUDGETS};
use crate::error::{Error, Result};
use crate::knee::KneeParams;
use crate::model::{LossWeights, ModelConfig, TrainConfig};
use crate::schedule::{CurriculumPlan, StopRule};
use crate::steganalysis::DetectorConfig;
use crate::tensor::AdamConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Model initialization, batch order and training payloads.
    pub seed: u64,
    /// Synthetic image generation and the train/val/test split.
    pub data_seed: u64,
    /// Payloads used when scoring difficulty and evaluating.
    pub scoring_seed: u64,

    /// Image directory; the synthetic corpus is used when unset.
    pub corpus_dir: Option<PathBuf>,
    pub synthetic_images: usize,
    pub image_height: usize,
    pub image_width: usize,

    pub payload_depth: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub hidden_channels: usize,

    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,

    pub w_ssim: f64,
    pub w_msssim: f64,
    pub w_rmse: f64,
    pub w_encode: f64,
    pub w_decode: f64,

    pub alpha1: f64,
    pub alpha2: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub teacher_budgets: Vec<usize>,
    pub convergence_budget: usize,

    /// Total epoch budget of a curriculum run.
    pub max_iter: usize,
    pub stage_caps: [usize; 3],
    pub knee_window: usize,
    pub knee_sensitivity: f64,
    pub knee_min_epochs: usize,
    pub converge_patience: usize,
    pub converge_min_delta: f64,

    pub detector_blocks: usize,
    pub detector_channels: usize,
    pub detector_epochs: usize,
    pub detector_seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        let model = ModelConfig::default();
        let adam = AdamConfig::default();
        let w = LossWeights::default();
        let t = Thresholds::default();
        let knee = KneeParams::default();
        let det = DetectorConfig::default();
        Config {
            seed: 0,
            data_seed: 0,
            scoring_seed: 0,
            corpus_dir: None,
            synthetic_images: 200,
            image_height: model.image_size.0,
            image_width: model.image_size.1,
            payload_depth: model.payload_depth,
            encoder_layers: model.encoder_layers,
            decoder_layers: model.decoder_layers,
            hidden_channels: model.hidden_channels,
            learning_rate: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            adam_eps: adam.eps,
            batch_size: TrainConfig::default().batch_size,
            w_ssim: w.w_ssim,
            w_msssim: w.w_msssim,
            w_rmse: w.w_rmse,
            w_encode: w.w_encode,
            w_decode: w.w_decode,
            alpha1: t.alpha1,
            alpha2: t.alpha2,
            mu1: t.mu1,
            mu2: t.mu2,
            teacher_budgets: DEFAULT_TEACHER_BUDGETS.to_vec(),
            convergence_budget: DEFAULT_CONVERGENCE_BUDGET,
            max_iter: 120,
            stage_caps: [40, 40, 40],
            knee_window: knee.smoothing_window,
            knee_sensitivity: knee.sensitivity,
            knee_min_epochs: knee.min_epochs,
            converge_patience: 10,
            converge_min_delta: 1e-4,
            detector_blocks: det.conv_blocks,
            detector_channels: det.channels,
            detector_epochs: det.epochs,
            detector_seed: det.seed,
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Config> {
        let cfg: Config = serde_json::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            image_size: (self.image_height, self.image_width),
            payload_depth: self.payload_depth,
            encoder_layers: self.encoder_layers,
            decoder_layers: self.decoder_layers,
            hidden_channels: self.hidden_channels,
            seed: self.seed,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            adam: AdamConfig {
                lr: self.learning_rate,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.adam_eps,
            },
            weights: LossWeights {
                w_ssim: self.w_ssim,
                w_msssim: self.w_msssim,
                w_rmse: self.w_rmse,
                w_encode: self.w_encode,
                w_decode: self.w_decode,
            },
            seed: self.seed,
        }
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            mu1: self.mu1,
            mu2: self.mu2,
        }
    }

    pub fn knee(&self) -> KneeParams {
        KneeParams {
            smoothing_window: self.knee_window,
            sensitivity: self.knee_sensitivity,
            min_epochs: self.knee_min_epochs,
        }
    }

    pub fn converge(&self) -> StopRule {
        StopRule::Converge {
            patience: self.converge_patience,
            min_delta: self.converge_min_delta,
        }
    }

    pub fn plan(&self) -> CurriculumPlan {
        CurriculumPlan::three_stage(self.knee(), self.stage_caps, self.converge(), self.max_iter)
    }

    pub fn detector(&self) -> DetectorConfig {
        DetectorConfig {
            conv_blocks: self.detector_blocks,
            channels: self.detector_channels,
            seed: self.detector_seed,
            epochs: self.detector_epochs,
            ..DetectorConfig::default()
        }
    }

    pub fn corpus_source(&self) -> CorpusSource {
        match &self.corpus_dir {
            Some(dir) => CorpusSource::Directory(dir.clone()),
            None => CorpusSource::Synthetic {
                n: self.synthetic_images,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model().validate()?;
        if self.batch_size == 0 {
            return Err(Error::Invalid("batch_size must be positive".into()));
        }
        let adam = &self.train().adam;
        if !(adam.lr > 0.0 && (0.0..1.0).contains(&adam.beta1) && (0.0..1.0).contains(&adam.beta2) && adam.eps > 0.0) {
            return Err(Error::Invalid(format!("invalid Adam settings {adam:?}")));
        }
        self.train().weights.validate()?;
        self.thresholds().validate()?;
        validate_budgets(&self.teacher_budgets, self.convergence_budget)?;
        self.plan().validate()?;
        self.detector().validate()?;
        Ok(())
    }
}
