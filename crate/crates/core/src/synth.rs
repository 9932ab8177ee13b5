//! Desk-scale synthetic detection worlds.
//!
//! A world has random unit class embeddings, scene embeddings pulled toward
//! the classes that live in them (`scene_object_affinity`), per-image scene
//! distributions peaked on a dominant scene, ground truths whose categories
//! follow that scene, and a noisy detector: one jittered hit per ground
//! truth plus injected partial and oversized false positives.

use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bim::{normalize_table, EmbeddingTable, PromptTemplate, SceneContext};
use crate::error::{Error, Result};
use crate::eval::GroundTruth;
use crate::exec::Exec;
use crate::geometry::BBox;
use crate::io::{self, CategoryInfo, Dataset, ImageInfo};
use crate::region_sampler::{sample_oversized, sample_partial, IouRange, SamplerOptions};
use crate::rng::SampleRng;
use crate::suppression::{CategoryId, CategorySplit, Detection};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorNoise {
    pub score_noise_sd: f64,
    /// Per-edge jitter as a fraction of box width/height.
    pub localization_noise_sd: f64,
    /// Probability that a ground truth spawns one partial-region FP.
    pub partial_fp_rate: f64,
    pub oversized_fp_rate: f64,
}

impl Default for DetectorNoise {
    fn default() -> Self {
        Self {
            score_noise_sd: 0.1,
            localization_noise_sd: 0.03,
            partial_fp_rate: 0.3,
            oversized_fp_rate: 0.2,
        }
    }
}

impl DetectorNoise {
    pub fn noiseless() -> Self {
        Self {
            score_noise_sd: 0.0,
            localization_noise_sd: 0.0,
            partial_fp_rate: 0.0,
            oversized_fp_rate: 0.0,
        }
    }
}

/// Which ground truths may spawn injected false positives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FpTarget {
    #[default]
    All,
    Novel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticWorldSpec {
    pub n_images: usize,
    pub n_base_categories: usize,
    pub n_novel_categories: usize,
    pub embedding_dim: usize,
    pub scene_count: usize,
    pub scene_object_affinity: f64,
    pub detector_noise: DetectorNoise,
    pub seed: u64,
    pub image_width: f64,
    pub image_height: f64,
    pub min_objects: usize,
    pub max_objects: usize,
    pub fp_target: FpTarget,
    /// Scenes written per image context; 0 keeps the full distribution.
    pub context_top: usize,
    pub prompt_template: PromptTemplate,
    pub base_score: f64,
    pub novel_score: f64,
}

impl Default for SyntheticWorldSpec {
    fn default() -> Self {
        Self {
            n_images: 100,
            n_base_categories: 12,
            n_novel_categories: 6,
            embedding_dim: 64,
            scene_count: 20,
            scene_object_affinity: 0.6,
            detector_noise: DetectorNoise::default(),
            seed: 0,
            image_width: 640.0,
            image_height: 480.0,
            min_objects: 2,
            max_objects: 6,
            fp_target: FpTarget::All,
            context_top: 0,
            prompt_template: PromptTemplate::default(),
            base_score: 0.8,
            novel_score: 0.55,
        }
    }
}

impl SyntheticWorldSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InfeasibleSpec(m.to_string()));
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let n = &self.detector_noise;
        if self.n_base_categories + self.n_novel_categories == 0 {
            return fail("at least one category is required");
        }
        if self.embedding_dim == 0 || self.scene_count == 0 {
            return fail("embedding_dim and scene_count must be positive");
        }
        if !unit(self.scene_object_affinity)
            || !unit(n.partial_fp_rate)
            || !unit(n.oversized_fp_rate)
        {
            return fail("affinity and FP rates must lie in [0, 1]");
        }
        if !(n.score_noise_sd >= 0.0 && n.localization_noise_sd >= 0.0) {
            return fail("noise standard deviations must be non-negative");
        }
        if self.min_objects > self.max_objects {
            return fail("min_objects exceeds max_objects");
        }
        if !(self.image_width >= 16.0 && self.image_height >= 16.0) {
            return fail("images must be at least 16x16");
        }
        if !(unit(self.base_score) && unit(self.novel_score)) {
            return fail("mean scores must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: Self =
            toml::from_str(text).map_err(|e| Error::parse("world spec", e.message()))?;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub dataset: Dataset,
    pub split: CategorySplit,
    pub class_table: EmbeddingTable,
    /// Keyed by prompted scene name.
    pub scene_table: EmbeddingTable,
    pub contexts: Vec<SceneContext>,
    pub detections: Vec<Detection>,
}

fn gaussian_unit(rng: &mut SampleRng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = crate::bim::l2_norm(&v);
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn normal(rng: &mut SampleRng, sd: f64) -> f64 {
    if sd == 0.0 {
        0.0
    } else {
        sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
    }
}

const PARTIAL_FP_IOU: (f64, f64) = (0.15, 0.45);
const OVERSIZED_FP_IOU: (f64, f64) = (0.2, 0.45);

pub fn category_name(id: CategoryId) -> String {
    format!("category_{id}")
}

pub fn scene_name(j: usize) -> String {
    format!("scene_{j}")
}

struct ImageDraw {
    context: SceneContext,
    gts: Vec<GroundTruth>,
    dets: Vec<Detection>,
}

pub fn generate_synthetic_world(spec: &SyntheticWorldSpec, exec: Exec) -> Result<SyntheticWorld> {
    spec.validate()?;
    let n_cat = spec.n_base_categories + spec.n_novel_categories;
    let ids: Vec<CategoryId> = (1..=n_cat as CategoryId).collect();
    let split = CategorySplit::new(
        ids[..spec.n_base_categories].iter().copied(),
        ids[spec.n_base_categories..].iter().copied(),
    )?;

    let mut rng = SampleRng::derived(spec.seed, &[0]);
    let class_vecs: Vec<Vec<f64>> = ids
        .iter()
        .map(|_| gaussian_unit(&mut rng, spec.embedding_dim))
        .collect();
    let mut class_table = EmbeddingTable::new(spec.embedding_dim);
    for (id, v) in ids.iter().zip(&class_vecs) {
        class_table.insert(category_name(*id), v.clone())?;
    }
    let class_table = normalize_table(&class_table)?;

    // category index c lives in scene c % scene_count
    let home = |c: usize| c % spec.scene_count;
    let a = spec.scene_object_affinity;
    let mut scene_raw = EmbeddingTable::new(spec.embedding_dim);
    for j in 0..spec.scene_count {
        let own = gaussian_unit(&mut rng, spec.embedding_dim);
        let members: Vec<&Vec<f64>> = (0..n_cat)
            .filter(|&c| home(c) == j)
            .map(|c| &class_vecs[c])
            .collect();
        let v: Vec<f64> = if members.is_empty() {
            own
        } else {
            (0..spec.embedding_dim)
                .map(|d| {
                    let m = members.iter().map(|v| v[d]).sum::<f64>() / members.len() as f64;
                    a * m + (1.0 - a) * own[d]
                })
                .collect()
        };
        scene_raw.insert(spec.prompt_template.apply(&scene_name(j)), v)?;
    }
    let scene_table = normalize_table(&scene_raw)?;

    let (w, h) = (spec.image_width, spec.image_height);
    let opts = SamplerOptions::default();
    let partial_band = IouRange::new(PARTIAL_FP_IOU.0, PARTIAL_FP_IOU.1)?;
    let oversized_band = IouRange::new(OVERSIZED_FP_IOU.0, OVERSIZED_FP_IOU.1)?;
    let noise = spec.detector_noise;

    let images = exec.map_range(spec.n_images, |i| -> Result<ImageDraw> {
        let image_id = i as u64 + 1;
        let mut rng = SampleRng::derived(spec.seed, &[1, i as u64]);
        let dominant = rng.below(spec.scene_count);
        let logits: Vec<f64> = (0..spec.scene_count)
            .map(|j| normal(&mut rng, 1.0) + if j == dominant { 3.0 } else { 0.0 })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        let mut scenes: Vec<(String, f64)> = logits
            .iter()
            .enumerate()
            .map(|(j, l)| (scene_name(j), (l - max).exp() / z))
            .collect();
        scenes.sort_by(|x, y| y.1.total_cmp(&x.1));
        if spec.context_top > 0 {
            scenes.truncate(spec.context_top);
        }
        let context = SceneContext::new(image_id, scenes)?;

        let residents: Vec<usize> = (0..n_cat).filter(|&c| home(c) == dominant).collect();
        let n_obj = spec.min_objects + rng.below(spec.max_objects - spec.min_objects + 1);
        let mut gts = Vec::with_capacity(n_obj);
        let mut dets = Vec::new();
        for _ in 0..n_obj {
            let c = if !residents.is_empty() && rng.bernoulli(a) {
                residents[rng.below(residents.len())]
            } else {
                rng.below(n_cat)
            };
            let cat = ids[c];
            let bw = w * rng.uniform_in(0.08, 0.35);
            let bh = h * rng.uniform_in(0.08, 0.35);
            let x = rng.uniform_in(0.0, w - bw);
            let y = rng.uniform_in(0.0, h - bh);
            let gt_box = BBox::new(x, y, x + bw, y + bh)?;
            gts.push(GroundTruth::new(image_id, cat, gt_box, false)?);

            let mean = if split.novel().contains(&cat) {
                spec.novel_score
            } else {
                spec.base_score
            };
            let score = (mean + normal(&mut rng, noise.score_noise_sd)).clamp(0.01, 0.99);
            let sd = noise.localization_noise_sd;
            let jitter = BBox::new(
                (x + normal(&mut rng, sd * bw)).clamp(0.0, w),
                (y + normal(&mut rng, sd * bh)).clamp(0.0, h),
                (x + bw + normal(&mut rng, sd * bw)).clamp(0.0, w),
                (y + bh + normal(&mut rng, sd * bh)).clamp(0.0, h),
            );
            let hit = match jitter {
                Ok(b) if b.area() > 0.0 => b,
                _ => gt_box,
            };
            dets.push(Detection::new(image_id, cat, hit, score)?);

            let eligible = spec.fp_target == FpTarget::All || split.novel().contains(&cat);
            if eligible && rng.bernoulli(noise.partial_fp_rate) {
                let part = sample_partial(&gt_box, partial_band, &mut rng, &opts)?;
                let s = score * rng.uniform_in(0.6, 1.0);
                dets.push(Detection::new(image_id, cat, part, s)?);
            }
            if eligible && rng.bernoulli(noise.oversized_fp_rate) {
                match sample_oversized(&gt_box, w, h, oversized_band, &mut rng, &opts) {
                    Ok(big) => {
                        let s = score * rng.uniform_in(0.5, 0.9);
                        dets.push(Detection::new(image_id, cat, big, s)?);
                    }
                    Err(Error::InfeasibleSample { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
        }
        Ok(ImageDraw { context, gts, dets })
    });

    let mut contexts = Vec::with_capacity(spec.n_images);
    let mut ground_truths = Vec::new();
    let mut detections = Vec::new();
    for img in images {
        let img = img?;
        contexts.push(img.context);
        ground_truths.extend(img.gts);
        detections.extend(img.dets);
    }
    let dataset = Dataset {
        images: (1..=spec.n_images as u64)
            .map(|id| ImageInfo {
                id,
                width: w,
                height: h,
                file_name: None,
            })
            .collect(),
        categories: ids
            .iter()
            .map(|&id| CategoryInfo {
                id,
                name: category_name(id),
                split: Some(
                    if split.novel().contains(&id) {
                        "novel"
                    } else {
                        "base"
                    }
                    .to_string(),
                ),
            })
            .collect(),
        ground_truths,
    };
    Ok(SyntheticWorld {
        dataset,
        split,
        class_table,
        scene_table,
        contexts,
        detections,
    })
}

pub const ANNOTATIONS_FILE: &str = "annotations.json";
pub const DETECTIONS_FILE: &str = "detections.json";
pub const CLASSES_FILE: &str = "classes.embtab";
pub const SCENES_FILE: &str = "scenes.embtab";
pub const CONTEXTS_FILE: &str = "contexts.scenectx";

impl SyntheticWorld {
    pub fn save(&self, dir: &Path) -> Result<()> {
        io::save_annotations(&dir.join(ANNOTATIONS_FILE), &self.dataset)?;
        io::save_detections(&dir.join(DETECTIONS_FILE), &self.detections)?;
        io::save_embedding_table(&dir.join(CLASSES_FILE), &self.class_table)?;
        io::save_embedding_table(&dir.join(SCENES_FILE), &self.scene_table)?;
        io::save_scene_contexts(&dir.join(CONTEXTS_FILE), &self.contexts)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let dataset = io::load_annotations(&dir.join(ANNOTATIONS_FILE), true)?;
        let split = dataset.split()?;
        Ok(Self {
            split,
            detections: io::load_detections(&dir.join(DETECTIONS_FILE))?
                .into_checked(true, "detections")?,
            class_table: io::load_embedding_table(&dir.join(CLASSES_FILE), false)?,
            scene_table: io::load_embedding_table(&dir.join(SCENES_FILE), false)?,
            contexts: io::load_scene_contexts(&dir.join(CONTEXTS_FILE))?,
            dataset,
        })
    }
}
