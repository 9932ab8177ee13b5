//! Greedy IoU suppression (NMS) and overlap-area-ratio partial object
//! suppression (POS).
//!
//! Both run on one (image, category) group at a time; detections of different
//! categories never suppress each other. Candidates are visited in a fixed
//! order: score descending, then box area descending, then input index
//! ascending.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geometry::{iou_with_areas, oar_with_area, BBox};

pub type ImageId = u64;
pub type CategoryId = u64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub image_id: ImageId,
    pub category_id: CategoryId,
    pub bbox: BBox,
    pub score: f64,
}

impl Detection {
    /// Rejects scores outside `[0, 1]` and zero-area boxes.
    pub fn new(image_id: ImageId, category_id: CategoryId, bbox: BBox, score: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::Domain {
                name: "score",
                value: score,
                expected: "[0, 1]",
            });
        }
        if bbox.area() <= 0.0 {
            return Err(Error::Validation(format!(
                "detection on image {image_id} has a zero-area box"
            )));
        }
        Ok(Self {
            image_id,
            category_id,
            bbox,
            score,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    Base,
    Novel,
}

/// Disjoint base and novel vocabularies. Background is not a category.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorySplit {
    base: BTreeSet<CategoryId>,
    novel: BTreeSet<CategoryId>,
}

impl CategorySplit {
    pub fn new(
        base: impl IntoIterator<Item = CategoryId>,
        novel: impl IntoIterator<Item = CategoryId>,
    ) -> Result<Self> {
        let base: BTreeSet<_> = base.into_iter().collect();
        let novel: BTreeSet<_> = novel.into_iter().collect();
        if let Some(&id) = base.intersection(&novel).next() {
            return Err(Error::OverlappingSplit(id));
        }
        Ok(Self { base, novel })
    }

    pub fn base(&self) -> &BTreeSet<CategoryId> {
        &self.base
    }

    pub fn novel(&self) -> &BTreeSet<CategoryId> {
        &self.novel
    }

    pub fn kind(&self, id: CategoryId) -> Option<SplitKind> {
        if self.novel.contains(&id) {
            Some(SplitKind::Novel)
        } else if self.base.contains(&id) {
            Some(SplitKind::Base)
        } else {
            None
        }
    }

    pub fn all(&self) -> impl Iterator<Item = CategoryId> + '_ {
        self.base.union(&self.novel).copied()
    }
}

/// Which categories POS runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosScope {
    #[default]
    NovelOnly,
    AllCategories,
    /// POS switched off; every detection passes through.
    Disabled,
}

impl std::str::FromStr for PosScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "novel_only" | "novel" => Ok(Self::NovelOnly),
            "all_categories" | "all" => Ok(Self::AllCategories),
            "disabled" | "off" | "none" => Ok(Self::Disabled),
            other => Err(Error::Validation(format!("unknown POS scope `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PosOutcome {
    pub detections: Vec<Detection>,
    /// Detections left untouched because their category is in neither split.
    pub unknown_category_detections: usize,
}

pub(crate) fn check_unit_threshold(value: f64) -> Result<()> {
    if value > 0.0 && value <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidThreshold {
            value,
            expected: "(0, 1]",
        })
    }
}

/// Visiting order for greedy suppression: score desc, area desc, index asc.
pub fn suppression_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        let (da, db) = (&dets[a], &dets[b]);
        db.score
            .total_cmp(&da.score)
            .then_with(|| db.bbox.area().total_cmp(&da.bbox.area()))
            .then(a.cmp(&b))
    });
    order
}

fn greedy_keep<F>(dets: &[Detection], suppresses: F) -> Vec<usize>
where
    F: Fn(usize, usize, &[f64]) -> bool,
{
    let areas: Vec<f64> = dets.iter().map(|d| d.bbox.area()).collect();
    let mut kept: Vec<usize> = Vec::with_capacity(dets.len());
    for cand in suppression_order(dets) {
        if !kept.iter().any(|&m| suppresses(cand, m, &areas)) {
            kept.push(cand);
        }
    }
    kept
}

/// Indices kept by NMS, in visiting order.
pub fn nms_indices(dets: &[Detection], iou_threshold: f64) -> Result<Vec<usize>> {
    check_unit_threshold(iou_threshold)?;
    Ok(greedy_keep(dets, |cand, m, areas| {
        iou_with_areas(&dets[cand].bbox, &dets[m].bbox, areas[cand], areas[m]) >= iou_threshold
    }))
}

/// Classic greedy NMS over one (image, category) group. Output is sorted by
/// descending score.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Result<Vec<Detection>> {
    Ok(nms_indices(dets, iou_threshold)?
        .into_iter()
        .map(|i| dets[i])
        .collect())
}

/// Indices kept by POS, in visiting order.
pub fn pos_indices(dets: &[Detection], theta: f64) -> Result<Vec<usize>> {
    check_unit_threshold(theta)?;
    // A candidate is dropped once OAR(candidate, kept) >= theta for any box
    // kept before it. Same survivors as repeated argmax-then-remove.
    Ok(greedy_keep(dets, |cand, m, areas| {
        oar_with_area(&dets[cand].bbox, &dets[m].bbox, areas[cand]) >= theta
    }))
}

/// Partial object suppression over one (image, category) group.
///
/// The highest-ranked box is always kept. Every later box `b` is discarded if
/// `OAR(b, M) >= theta` for some kept box `M`. Output is sorted by descending
/// score.
pub fn pos_suppress(dets: &[Detection], theta: f64) -> Result<Vec<Detection>> {
    Ok(pos_indices(dets, theta)?
        .into_iter()
        .map(|i| dets[i])
        .collect())
}

fn group_indices<K: Ord>(
    dets: &[Detection],
    key: impl Fn(&Detection) -> K,
) -> BTreeMap<K, Vec<usize>> {
    let mut groups: BTreeMap<K, Vec<usize>> = BTreeMap::new();
    for (i, d) in dets.iter().enumerate() {
        groups.entry(key(d)).or_default().push(i);
    }
    groups
}

fn in_scope(split: &CategorySplit, scope: PosScope, id: CategoryId) -> (bool, bool) {
    let known = split.kind(id).is_some();
    let run = match scope {
        PosScope::NovelOnly => split.kind(id) == Some(SplitKind::Novel),
        PosScope::AllCategories => true,
        PosScope::Disabled => false,
    };
    (run, known)
}

/// Runs POS per (image, category) group over an arbitrary detection list.
///
/// Categories outside `scope` pass through unchanged. Survivors keep their
/// input order. Detections whose category is in neither split are counted
/// (under `NovelOnly` scope) but never dropped.
pub fn pos_batch(
    dets: &[Detection],
    split: &CategorySplit,
    theta: f64,
    scope: PosScope,
    exec: Exec,
) -> Result<PosOutcome> {
    check_unit_threshold(theta)?;
    let groups: Vec<((ImageId, CategoryId), Vec<usize>)> =
        group_indices(dets, |d| (d.image_id, d.category_id))
            .into_iter()
            .collect();

    let mut unknown = 0usize;
    let mut keep = vec![true; dets.len()];
    let work: Vec<&Vec<usize>> = groups
        .iter()
        .filter_map(|((_, cat), idx)| {
            let (run, known) = in_scope(split, scope, *cat);
            if !known && scope == PosScope::NovelOnly {
                unknown += idx.len();
            }
            run.then_some(idx)
        })
        .collect();

    let survivors = exec.map(&work, |idx| {
        let group: Vec<Detection> = idx.iter().map(|&i| dets[i]).collect();
        pos_indices(&group, theta).expect("threshold checked above")
    });
    for (idx, kept) in work.iter().zip(survivors) {
        for &i in idx.iter() {
            keep[i] = false;
        }
        for k in kept {
            keep[idx[k]] = true;
        }
    }
    if unknown > 0 {
        log::warn!("{unknown} detections belong to categories outside the split; passed through");
    }

    Ok(PosOutcome {
        detections: dets
            .iter()
            .zip(keep)
            .filter_map(|(d, k)| k.then_some(*d))
            .collect(),
        unknown_category_detections: unknown,
    })
}

/// POS over all categories of one image. See [`pos_batch`].
pub fn apply_pos(
    dets: &[Detection],
    split: &CategorySplit,
    theta: f64,
    scope: PosScope,
) -> Result<PosOutcome> {
    debug_assert!(dets.windows(2).all(|w| w[0].image_id == w[1].image_id));
    pos_batch(dets, split, theta, scope, Exec::Sequential)
}

/// Class-aware NMS per (image, category) group; survivors keep input order.
pub fn nms_batch(dets: &[Detection], iou_threshold: f64, exec: Exec) -> Result<Vec<Detection>> {
    check_unit_threshold(iou_threshold)?;
    let groups: Vec<Vec<usize>> = group_indices(dets, |d| (d.image_id, d.category_id))
        .into_values()
        .collect();
    let survivors = exec.map(&groups, |idx| {
        let group: Vec<Detection> = idx.iter().map(|&i| dets[i]).collect();
        let kept = nms_indices(&group, iou_threshold).expect("threshold checked above");
        kept.into_iter().map(|k| idx[k]).collect::<Vec<_>>()
    });
    let mut keep = vec![false; dets.len()];
    for i in survivors.into_iter().flatten() {
        keep[i] = true;
    }
    Ok(dets
        .iter()
        .zip(keep)
        .filter_map(|(d, k)| k.then_some(*d))
        .collect())
}

/// Sorts detections by (image, category, score desc) for stable output files.
pub fn sort_for_output(dets: &mut [Detection]) {
    dets.sort_by(|a, b| {
        a.image_id
            .cmp(&b.image_id)
            .then(a.category_id.cmp(&b.category_id))
            .then_with(|| b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal))
    });
}
