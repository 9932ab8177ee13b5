//! Scene-conditioned background embeddings and category re-scoring.
//!
//! Per image, the top-K predicted scenes are wrapped in a prompt template,
//! looked up in a table of prompted scene embeddings, and averaged into a
//! background embedding. Each category's cosine similarity to that embedding
//! is normalized across categories and passed through a sigmoid to give a
//! re-score coefficient `r`, which is blended into detection scores as
//! `s^(1-alpha) * r^alpha`.

use std::collections::BTreeMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::suppression::{CategoryId, Detection, ImageId};

/// Named vectors of a common dimension, in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    normalized: bool,
    entries: IndexMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            normalized: false,
            entries: IndexMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Whether the table claims unit-norm vectors (set by [`normalize_table`]
    /// or by a file header).
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub(crate) fn set_normalized_flag(&mut self, flag: bool) {
        self.normalized = flag;
    }

    pub fn insert(&mut self, name: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let name = name.into();
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: vector.len(),
                context: format!("entry `{name}`"),
            });
        }
        if self.entries.contains_key(&name) {
            return Err(Error::DuplicateName(name));
        }
        self.entries.insert(name, vector);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.entries.get(name).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit(name: &str, v: &[f64]) -> Result<Vec<f64>> {
    let n = l2_norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroVector(name.to_string()));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Scales every vector to unit L2 norm.
pub fn normalize_table(table: &EmbeddingTable) -> Result<EmbeddingTable> {
    let mut out = EmbeddingTable::new(table.dim);
    for (name, v) in table.iter() {
        out.entries.insert(name.to_string(), unit(name, v)?);
    }
    out.normalized = true;
    Ok(out)
}

/// Ranked scene probabilities for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneContext {
    pub image_id: ImageId,
    scenes: Vec<(String, f64)>,
}

impl SceneContext {
    pub fn new(image_id: ImageId, scenes: Vec<(String, f64)>) -> Result<Self> {
        if scenes.is_empty() {
            return Err(Error::Validation(format!(
                "scene context for image {image_id} is empty"
            )));
        }
        if let Some((name, p)) = scenes.iter().find(|(_, p)| !(0.0..=1.0).contains(p)) {
            return Err(Error::Validation(format!(
                "image {image_id}: scene `{name}` has probability {p} outside [0, 1]"
            )));
        }
        if scenes.windows(2).any(|w| w[0].1 < w[1].1) {
            return Err(Error::Validation(format!(
                "image {image_id}: scenes not sorted by descending probability"
            )));
        }
        let total: f64 = scenes.iter().map(|(_, p)| p).sum();
        if total > 1.0 + 1e-6 {
            return Err(Error::Validation(format!(
                "image {image_id}: scene probabilities sum to {total}"
            )));
        }
        Ok(Self { image_id, scenes })
    }

    pub fn scenes(&self) -> &[(String, f64)] {
        &self.scenes
    }

    pub fn top(&self, k: usize) -> &[(String, f64)] {
        &self.scenes[..k.min(self.scenes.len())]
    }
}

/// Text wrapper applied to scene names, with a `{scene}` placeholder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PromptTemplate(String);

impl PromptTemplate {
    pub fn new(template: impl Into<String>) -> Result<Self> {
        let template = template.into();
        if !template.contains("{scene}") {
            return Err(Error::Validation(format!(
                "prompt template `{template}` lacks a {{scene}} placeholder"
            )));
        }
        Ok(Self(template))
    }

    pub fn apply(&self, scene: &str) -> String {
        self.0.replace("{scene}", scene)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self("Part of {scene}".to_string())
    }
}

impl TryFrom<String> for PromptTemplate {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Self::new(s)
    }
}

impl From<PromptTemplate> for String {
    fn from(t: PromptTemplate) -> String {
        t.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundEmbedding {
    pub vector: Vec<f64>,
    /// Scene names (not prompted) in rank order.
    pub source_scenes: Vec<String>,
    pub k: usize,
}

/// Mean of the prompted embeddings of the image's top-`k` scenes.
///
/// With `renormalize` the mean is rescaled to unit length, which keeps
/// cosine scoring against the class bank well defined.
pub fn build_background_embedding(
    ctx: &SceneContext,
    prompted_scenes: &EmbeddingTable,
    k: usize,
    template: &PromptTemplate,
    renormalize: bool,
) -> Result<BackgroundEmbedding> {
    if k == 0 {
        return Err(Error::Validation("k must be positive".into()));
    }
    if ctx.scenes.len() < k {
        return Err(Error::InsufficientScenes {
            image_id: ctx.image_id,
            available: ctx.scenes.len(),
            required: k,
        });
    }
    let mut mean = vec![0.0; prompted_scenes.dim()];
    let mut source_scenes = Vec::with_capacity(k);
    for (scene, _) in ctx.top(k) {
        let prompted = template.apply(scene);
        let v = prompted_scenes
            .get(&prompted)
            .ok_or_else(|| Error::MissingSceneEmbedding {
                scene: scene.clone(),
                prompted: prompted.clone(),
            })?;
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
        source_scenes.push(scene.clone());
    }
    for m in &mut mean {
        *m /= k as f64;
    }
    let vector = if renormalize {
        unit(&format!("background of image {}", ctx.image_id), &mean)?
    } else {
        mean
    };
    Ok(BackgroundEmbedding {
        vector,
        source_scenes,
        k,
    })
}

/// Unit-norm class embeddings indexed by category id, in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassBank {
    ids: Vec<CategoryId>,
    vectors: Vec<Vec<f64>>,
    dim: usize,
}

impl ClassBank {
    /// Normalizes each vector on the way in.
    pub fn new(entries: Vec<(CategoryId, Vec<f64>)>) -> Result<Self> {
        let dim = entries.first().map_or(0, |(_, v)| v.len());
        let mut ids = Vec::with_capacity(entries.len());
        let mut vectors = Vec::with_capacity(entries.len());
        for (id, v) in entries {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                    context: format!("category {id}"),
                });
            }
            if ids.contains(&id) {
                return Err(Error::DuplicateName(format!("category {id}")));
            }
            vectors.push(unit(&format!("category {id}"), &v)?);
            ids.push(id);
        }
        Ok(Self { ids, vectors, dim })
    }

    /// Looks up each category's embedding by name in `table`.
    pub fn from_table(
        table: &EmbeddingTable,
        names: &BTreeMap<CategoryId, String>,
    ) -> Result<Self> {
        let entries = names
            .iter()
            .map(|(&id, name)| {
                table
                    .get(name)
                    .map(|v| (id, v.to_vec()))
                    .ok_or(Error::MissingCategory(id))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }

    pub fn ids(&self) -> &[CategoryId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn iter(&self) -> impl Iterator<Item = (CategoryId, &[f64])> {
        self.ids
            .iter()
            .copied()
            .zip(self.vectors.iter().map(Vec::as_slice))
    }
}

/// How raw category-to-background similarities are spread before the sigmoid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `(phi - mean) / std` with the population standard deviation.
    #[default]
    Zscore,
    /// `(phi - min) / (max - min)`.
    Minmax,
    /// Raw similarity.
    None,
}

impl std::str::FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zscore" => Ok(Self::Zscore),
            "minmax" => Ok(Self::Minmax),
            "none" => Ok(Self::None),
            other => Err(Error::Validation(format!(
                "unknown normalization `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for Normalization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Zscore => "zscore",
            Self::Minmax => "minmax",
            Self::None => "none",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RescoreEntry {
    pub raw_similarity: f64,
    pub normalized: f64,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct RescoreTable {
    pub entries: BTreeMap<CategoryId, RescoreEntry>,
    /// Set when the similarity spread was below 1e-12 and every coefficient
    /// fell back to 0.5.
    pub degenerate: bool,
}

impl RescoreTable {
    pub fn coefficient(&self, id: CategoryId) -> Option<f64> {
        self.entries.get(&id).map(|e| e.coefficient)
    }

    /// Every category gets the same coefficient `r`.
    pub fn uniform(ids: impl IntoIterator<Item = CategoryId>, r: f64) -> Self {
        Self {
            entries: ids
                .into_iter()
                .map(|id| {
                    (
                        id,
                        RescoreEntry {
                            raw_similarity: 0.0,
                            normalized: 0.0,
                            coefficient: r,
                        },
                    )
                })
                .collect(),
            degenerate: false,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

const DEGENERATE_SPREAD: f64 = 1e-12;

/// Per-category re-score coefficients against one background embedding.
pub fn rescore_coefficients(
    classes: &ClassBank,
    bg: &BackgroundEmbedding,
    normalization: Normalization,
) -> Result<RescoreTable> {
    if bg.vector.len() != classes.dim() {
        return Err(Error::DimensionMismatch {
            expected: classes.dim(),
            found: bg.vector.len(),
            context: "background embedding".into(),
        });
    }
    let raw: Vec<f64> = classes.vectors.iter().map(|c| dot(c, &bg.vector)).collect();
    let n = raw.len() as f64;

    let normalized: Option<Vec<f64>> = match normalization {
        Normalization::None => Some(raw.clone()),
        Normalization::Zscore => {
            let mean = raw.iter().sum::<f64>() / n;
            let var = raw.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            (std >= DEGENERATE_SPREAD).then(|| raw.iter().map(|p| (p - mean) / std).collect())
        }
        Normalization::Minmax => {
            let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (hi - lo >= DEGENERATE_SPREAD)
                .then(|| raw.iter().map(|p| (p - lo) / (hi - lo)).collect())
        }
    };

    let degenerate = normalized.is_none();
    if degenerate {
        log::warn!(
            "category similarities to the background are all equal; r = 0.5 for every category"
        );
    }
    let entries = classes
        .ids
        .iter()
        .zip(&raw)
        .enumerate()
        .map(|(i, (&id, &phi))| {
            let (normalized, coefficient) = match &normalized {
                Some(z) => (z[i], sigmoid(z[i])),
                None => (0.0, 0.5),
            };
            (
                id,
                RescoreEntry {
                    raw_similarity: phi,
                    normalized,
                    coefficient,
                },
            )
        })
        .collect();
    Ok(RescoreTable {
        entries,
        degenerate,
    })
}

fn check_unit_interval(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value,
            expected: "[0, 1]",
        })
    }
}

/// Geometric blend `s^(1-alpha) * r^alpha`.
pub fn blend_scores(s_initial: f64, r: f64, alpha: f64) -> Result<f64> {
    check_unit_interval("score", s_initial)?;
    check_unit_interval("re-score coefficient", r)?;
    check_unit_interval("alpha", alpha)?;
    Ok(if alpha == 0.0 {
        s_initial
    } else if alpha == 1.0 {
        r
    } else {
        s_initial.powf(1.0 - alpha) * r.powf(alpha)
    })
}

/// Replaces each detection's score with its blended score. Order and boxes
/// are untouched.
pub fn rescore_detections(
    dets: &[Detection],
    table: &RescoreTable,
    alpha: f64,
) -> Result<Vec<Detection>> {
    dets.iter()
        .map(|d| {
            let r = table
                .coefficient(d.category_id)
                .ok_or(Error::MissingCategory(d.category_id))?;
            Ok(Detection {
                score: blend_scores(d.score, r, alpha)?,
                ..*d
            })
        })
        .collect()
}

/// Softmax over `[class_1 .. class_C, background]` cosine similarities
/// divided by `temperature`. The last column of each row is the background
/// probability.
pub fn score_regions(
    regions: &[Vec<f64>],
    classes: &ClassBank,
    bg: &BackgroundEmbedding,
    temperature: f64,
) -> Result<Vec<Vec<f64>>> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Domain {
            name: "temperature",
            value: temperature,
            expected: "(0, inf)",
        });
    }
    if bg.vector.len() != classes.dim() {
        return Err(Error::DimensionMismatch {
            expected: classes.dim(),
            found: bg.vector.len(),
            context: "background embedding".into(),
        });
    }
    regions
        .iter()
        .enumerate()
        .map(|(i, region)| {
            if region.len() != classes.dim() {
                return Err(Error::DimensionMismatch {
                    expected: classes.dim(),
                    found: region.len(),
                    context: format!("region {i}"),
                });
            }
            let logits: Vec<f64> = classes
                .vectors
                .iter()
                .map(|c| dot(region, c))
                .chain(std::iter::once(dot(region, &bg.vector)))
                .map(|s| s / temperature)
                .collect();
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            Ok(exps.into_iter().map(|e| e / total).collect())
        })
        .collect()
}
