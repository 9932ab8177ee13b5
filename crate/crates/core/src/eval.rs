//! COCO-style box AP at a single IoU threshold, aggregated over base, novel
//! and all categories.
//!
//! Matching follows `pycocotools`: detections of one (image, category) are
//! visited by descending score; each takes the unmatched non-crowd ground
//! truth of highest IoU at or above the threshold, otherwise it may be
//! absorbed by a crowd region (intersection over detection area) and is then
//! ignored. AP uses the 101-point interpolated precision envelope.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geometry::{intersection_area, iou_with_areas, BBox};
use crate::suppression::{CategoryId, CategorySplit, Detection, ImageId, SplitKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub image_id: ImageId,
    pub category_id: CategoryId,
    pub bbox: BBox,
    pub crowd: bool,
}

impl GroundTruth {
    pub fn new(
        image_id: ImageId,
        category_id: CategoryId,
        bbox: BBox,
        crowd: bool,
    ) -> Result<Self> {
        if bbox.area() <= 0.0 {
            return Err(Error::Validation(format!(
                "ground truth on image {image_id} has a zero-area box"
            )));
        }
        Ok(Self {
            image_id,
            category_id,
            bbox,
            crowd,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchLabel {
    TruePositive,
    FalsePositive,
    /// Matched only a crowd region: neither TP nor FP.
    Ignored,
}

/// Visiting order: score desc, input index asc.
fn score_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    order
}

/// Labels for one (image, category) group, aligned with the input order.
pub fn match_detections(dets: &[Detection], gts: &[GroundTruth], iou_thr: f64) -> Vec<MatchLabel> {
    let mut labels = vec![MatchLabel::FalsePositive; dets.len()];
    let mut taken = vec![false; gts.len()];
    let gt_areas: Vec<f64> = gts.iter().map(|g| g.bbox.area()).collect();
    for di in score_order(dets) {
        let d = &dets[di].bbox;
        let d_area = d.area();
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in gts.iter().enumerate() {
            if g.crowd || taken[gi] {
                continue;
            }
            let ov = iou_with_areas(d, &g.bbox, d_area, gt_areas[gi]);
            if ov >= iou_thr && best.is_none_or(|(_, b)| ov > b) {
                best = Some((gi, ov));
            }
        }
        labels[di] = match best {
            Some((gi, _)) => {
                taken[gi] = true;
                MatchLabel::TruePositive
            }
            None if gts
                .iter()
                .any(|g| g.crowd && intersection_area(d, &g.bbox) / d_area >= iou_thr) =>
            {
                MatchLabel::Ignored
            }
            None => MatchLabel::FalsePositive,
        };
    }
    labels
}

/// The 101 recall thresholds `k * 0.01` (`k = 0..=100`, last one exactly 1),
/// as `numpy.linspace(0, 1, 101)` produces them.
pub fn recall_thresholds() -> [f64; 101] {
    let mut t = [0.0; 101];
    for (k, v) in t.iter_mut().enumerate() {
        *v = k as f64 * 0.01;
    }
    t[100] = 1.0;
    t
}

/// 101-point interpolated AP of a score-ordered label list. `Ignored` entries
/// are skipped. `None` when `n_gt == 0`.
pub fn average_precision(labels: &[MatchLabel], n_gt: usize) -> Option<f64> {
    if n_gt == 0 {
        return None;
    }
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut recall = Vec::with_capacity(labels.len());
    let mut precision = Vec::with_capacity(labels.len());
    for l in labels {
        match l {
            MatchLabel::TruePositive => tp += 1,
            MatchLabel::FalsePositive => fp += 1,
            MatchLabel::Ignored => continue,
        }
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (1..precision.len()).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }
    let total: f64 = recall_thresholds()
        .iter()
        .map(|&r| {
            let idx = recall.partition_point(|&x| x < r);
            precision.get(idx).copied().unwrap_or(0.0)
        })
        .sum();
    Some(total / 101.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub iou_threshold: f64,
    /// Highest-scoring detections kept per (image, category); unlimited when
    /// `None`. COCO uses 100.
    pub max_dets: Option<usize>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            max_dets: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CategoryResult {
    pub category_id: CategoryId,
    #[serde(serialize_with = "serialize_split")]
    pub split: Option<SplitKind>,
    pub n_gt: usize,
    pub n_det: usize,
    /// `None` when the category has no non-crowd ground truth.
    pub ap: Option<f64>,
}

fn serialize_split<S: serde::Serializer>(
    v: &Option<SplitKind>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(match v {
        Some(SplitKind::Base) => "base",
        Some(SplitKind::Novel) => "novel",
        None => "unassigned",
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct EvalCounts {
    pub n_images: usize,
    pub n_gts: usize,
    pub n_dets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub iou_threshold: f64,
    pub categories: Vec<CategoryResult>,
    /// Mean AP over base categories with ground truth; `None` if there are none.
    pub map_base: Option<f64>,
    pub map_novel: Option<f64>,
    pub map_all: Option<f64>,
    pub counts: EvalCounts,
}

impl EvalReport {
    pub fn per_category_ap(&self) -> BTreeMap<CategoryId, f64> {
        self.categories
            .iter()
            .filter_map(|c| c.ap.map(|ap| (c.category_id, ap)))
            .collect()
    }

    /// Names of splits with no evaluable category.
    pub fn empty_splits(&self) -> Vec<&'static str> {
        [
            ("base", self.map_base),
            ("novel", self.map_novel),
            ("all", self.map_all),
        ]
        .into_iter()
        .filter_map(|(n, v)| v.is_none().then_some(n))
        .collect()
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// AP per category and split means.
pub fn evaluate(
    dets: &[Detection],
    gts: &[GroundTruth],
    split: &CategorySplit,
    opts: &EvalOptions,
    exec: Exec,
) -> EvalReport {
    let mut det_groups: BTreeMap<CategoryId, BTreeMap<ImageId, Vec<usize>>> = BTreeMap::new();
    for (i, d) in dets.iter().enumerate() {
        det_groups
            .entry(d.category_id)
            .or_default()
            .entry(d.image_id)
            .or_default()
            .push(i);
    }
    let mut gt_groups: BTreeMap<CategoryId, BTreeMap<ImageId, Vec<GroundTruth>>> = BTreeMap::new();
    for g in gts {
        gt_groups
            .entry(g.category_id)
            .or_default()
            .entry(g.image_id)
            .or_default()
            .push(*g);
    }
    let categories: Vec<CategoryId> = det_groups
        .keys()
        .chain(gt_groups.keys())
        .copied()
        .chain(split.all())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let empty_dets = BTreeMap::new();
    let empty_gts = BTreeMap::new();
    let results = exec.map(&categories, |&cat| {
        let by_image_dets = det_groups.get(&cat).unwrap_or(&empty_dets);
        let by_image_gts = gt_groups.get(&cat).unwrap_or(&empty_gts);
        let n_gt = by_image_gts.values().flatten().filter(|g| !g.crowd).count();

        // (score, input index, label) over all images
        let mut scored: Vec<(f64, usize, MatchLabel)> = Vec::new();
        for (image, idx) in by_image_dets {
            let mut idx = idx.clone();
            idx.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
            if let Some(cap) = opts.max_dets {
                idx.truncate(cap);
            }
            let group: Vec<Detection> = idx.iter().map(|&i| dets[i]).collect();
            let image_gts = by_image_gts.get(image).map_or(&[][..], Vec::as_slice);
            let labels = match_detections(&group, image_gts, opts.iou_threshold);
            scored.extend(idx.iter().zip(labels).map(|(&i, l)| (dets[i].score, i, l)));
        }
        let n_det = scored.len();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let labels: Vec<MatchLabel> = scored.into_iter().map(|(_, _, l)| l).collect();
        CategoryResult {
            category_id: cat,
            split: split.kind(cat),
            n_gt,
            n_det,
            ap: average_precision(&labels, n_gt),
        }
    });

    let split_mean = |kind: Option<SplitKind>| {
        mean(
            results
                .iter()
                .filter(|c| kind.is_none() || c.split == kind)
                .filter_map(|c| c.ap),
        )
    };
    let images: BTreeSet<ImageId> = dets
        .iter()
        .map(|d| d.image_id)
        .chain(gts.iter().map(|g| g.image_id))
        .collect();
    EvalReport {
        iou_threshold: opts.iou_threshold,
        map_base: split_mean(Some(SplitKind::Base)),
        map_novel: split_mean(Some(SplitKind::Novel)),
        map_all: split_mean(None),
        counts: EvalCounts {
            n_images: images.len(),
            n_gts: gts.iter().filter(|g| !g.crowd).count(),
            n_dets: dets.len(),
        },
        categories: results,
    }
}
