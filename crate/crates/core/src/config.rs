use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bim::{Normalization, PromptTemplate};
use crate::error::{Error, Result};
use crate::suppression::PosScope;

/// Relative order of re-scoring and NMS. POS always runs after NMS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageOrder {
    #[default]
    RescoreThenNms,
    NmsThenRescore,
}

/// Pipeline hyperparameters. Defaults: `k = 5`, `alpha = 0.2`,
/// `theta = 0.5`, prompt `"Part of {scene}"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Scenes averaged into the background embedding.
    pub k: usize,
    /// Re-score exponent; 0 leaves scores untouched.
    pub alpha: f64,
    /// POS overlap-area-ratio threshold.
    pub theta: f64,
    pub pos_scope: PosScope,
    pub nms_iou: f64,
    pub prompt_template: PromptTemplate,
    pub normalization: Normalization,
    /// Softmax temperature for region classification.
    pub temperature: f64,
    pub seed: u64,
    /// Rescale the mean scene embedding to unit length.
    pub renormalize_bg: bool,
    pub stage_order: StageOrder,
    pub eval_iou: f64,
    pub max_dets: Option<usize>,
    /// Minimum class probability for a region to emit a detection.
    pub region_score_floor: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            k: 5,
            alpha: 0.2,
            theta: 0.5,
            pos_scope: PosScope::NovelOnly,
            nms_iou: 0.5,
            prompt_template: PromptTemplate::default(),
            normalization: Normalization::Zscore,
            temperature: 0.01,
            seed: 0,
            renormalize_bg: true,
            stage_order: StageOrder::RescoreThenNms,
            eval_iou: 0.5,
            max_dets: None,
            region_score_floor: 0.05,
        }
    }
}

fn in_half_open(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "{name} = {v} must lie in (0, 1]"
        )))
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Validation("k must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Validation(format!(
                "alpha = {} must lie in [0, 1]",
                self.alpha
            )));
        }
        in_half_open("theta", self.theta)?;
        in_half_open("nms_iou", self.nms_iou)?;
        in_half_open("eval_iou", self.eval_iou)?;
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Validation(format!(
                "temperature = {} must be positive",
                self.temperature
            )));
        }
        if !(0.0..=1.0).contains(&self.region_score_floor) {
            return Err(Error::Validation(
                "region_score_floor must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let position = e
                .span()
                .map(|s| format!("config byte {}", s.start))
                .unwrap_or_else(|| "config".to_string());
            Error::parse(position, e.message())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&crate::io::read_text(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
