//! Reference implementations used as oracles. None of them calls into the
//! library's geometry, suppression or evaluation code.

#![allow(dead_code)]

use ovpost::geometry::BBox;
use ovpost::rng::SampleRng;
use ovpost::suppression::Detection;

/// Integer cells `[a, b)` of one axis counted one by one.
fn cells(a: i64, b: i64) -> Vec<i64> {
    (a..b).collect()
}

fn count_shared(a: &[i64], b: &[i64]) -> u64 {
    a.iter().filter(|x| b.binary_search(x).is_ok()).count() as u64
}

/// Pixel counts `(|b1|, |b2|, |b1 ∩ b2|)` for integer-coordinate boxes.
/// Rectangles are products of axis intervals, so the 2-D count is the
/// product of per-axis cell counts.
pub fn pixel_counts(b1: [i64; 4], b2: [i64; 4]) -> (u64, u64, u64) {
    let (x1, y1) = (cells(b1[0], b1[2]), cells(b1[1], b1[3]));
    let (x2, y2) = (cells(b2[0], b2[2]), cells(b2[1], b2[3]));
    let inter = count_shared(&x1, &x2) * count_shared(&y1, &y2);
    (
        x1.len() as u64 * y1.len() as u64,
        x2.len() as u64 * y2.len() as u64,
        inter,
    )
}

/// Full 2-D raster count, for small boxes.
pub fn raster_counts(b1: [i64; 4], b2: [i64; 4]) -> (u64, u64, u64) {
    let inside = |b: &[i64; 4], x: i64, y: i64| x >= b[0] && x < b[2] && y >= b[1] && y < b[3];
    let lo_x = b1[0].min(b2[0]);
    let hi_x = b1[2].max(b2[2]);
    let lo_y = b1[1].min(b2[1]);
    let hi_y = b1[3].max(b2[3]);
    let (mut a1, mut a2, mut both) = (0, 0, 0);
    for x in lo_x..hi_x {
        for y in lo_y..hi_y {
            let (i1, i2) = (inside(&b1, x, y), inside(&b2, x, y));
            a1 += i1 as u64;
            a2 += i2 as u64;
            both += (i1 && i2) as u64;
        }
    }
    (a1, a2, both)
}

pub fn pixel_iou(b1: [i64; 4], b2: [i64; 4]) -> f64 {
    let (a1, a2, i) = pixel_counts(b1, b2);
    i as f64 / (a1 + a2 - i) as f64
}

pub fn pixel_oar(b1: [i64; 4], b2: [i64; 4]) -> f64 {
    let (a1, _, i) = pixel_counts(b1, b2);
    i as f64 / a1 as f64
}

pub fn bbox(c: [i64; 4]) -> BBox {
    BBox::new(c[0] as f64, c[1] as f64, c[2] as f64, c[3] as f64).unwrap()
}

/// Box with positive integer extent inside `[0, max]²`.
pub fn random_int_box(rng: &mut SampleRng, max: i64) -> [i64; 4] {
    let span = |rng: &mut SampleRng| {
        let a = rng.below(max as usize) as i64;
        let b = a + 1 + rng.below((max - a) as usize) as i64;
        (a, b)
    };
    let (x0, x1) = span(rng);
    let (y0, y1) = span(rng);
    [x0, y0, x1, y1]
}

fn plain_area(b: &BBox) -> f64 {
    (b.x_max - b.x_min) * (b.y_max - b.y_min)
}

fn plain_intersection(a: &BBox, b: &BBox) -> f64 {
    let w = a.x_max.min(b.x_max) - a.x_min.max(b.x_min);
    let h = a.y_max.min(b.y_max) - a.y_min.max(b.y_min);
    if w <= 0.0 || h <= 0.0 {
        0.0
    } else {
        w * h
    }
}

pub fn plain_oar(a: &BBox, b: &BBox) -> f64 {
    plain_intersection(a, b) / plain_area(a)
}

pub fn plain_iou(a: &BBox, b: &BBox) -> f64 {
    let i = plain_intersection(a, b);
    i / (plain_area(a) + plain_area(b) - i)
}

/// Partial object suppression transcribed line by line: take the argmax
/// box M into the output, remove it, then drop every remaining b_j with
/// OAR(b_j, M) >= theta. Argmax ties go to the larger box, then the lower
/// input index. Returns the input indices kept.
pub fn literal_pos(dets: &[Detection], theta: f64) -> Vec<usize> {
    let mut b: Vec<usize> = (0..dets.len()).collect();
    let mut d = Vec::new();
    while !b.is_empty() {
        let mut m_pos = 0;
        for p in 1..b.len() {
            let (cand, best) = (&dets[b[p]], &dets[b[m_pos]]);
            let better = cand.score > best.score
                || (cand.score == best.score && plain_area(&cand.bbox) > plain_area(&best.bbox))
                || (cand.score == best.score
                    && plain_area(&cand.bbox) == plain_area(&best.bbox)
                    && b[p] < b[m_pos]);
            if better {
                m_pos = p;
            }
        }
        let m = b.remove(m_pos);
        d.push(m);
        let mbox = dets[m].bbox;
        b.retain(|&j| plain_oar(&dets[j].bbox, &mbox) < theta);
    }
    d
}

/// Reference ground truth for the AP oracle.
#[derive(Debug, Clone, Copy)]
pub struct RefGt {
    pub image: u64,
    pub category: u64,
    pub bbox: BBox,
    pub crowd: bool,
}

/// 101-point interpolated AP50 of one category by brute force. Returns
/// `None` without non-crowd ground truth.
pub fn reference_ap(dets: &[Detection], gts: &[RefGt], category: u64, thr: f64) -> Option<f64> {
    let n_gt = gts
        .iter()
        .filter(|g| g.category == category && !g.crowd)
        .count();
    if n_gt == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..dets.len())
        .filter(|&i| dets[i].category_id == category)
        .collect();
    // stable sort keeps input order among equal scores
    order.sort_by(|&a, &b| dets[b].score.partial_cmp(&dets[a].score).unwrap());

    let mut used = vec![false; gts.len()];
    // None = ignored, Some(true) = TP, Some(false) = FP
    let mut outcome: Vec<Option<bool>> = Vec::new();
    for &i in &order {
        let d = &dets[i];
        let mut best: Option<usize> = None;
        let mut best_iou = 0.0;
        for (g, gt) in gts.iter().enumerate() {
            if gt.category != category || gt.image != d.image_id || gt.crowd || used[g] {
                continue;
            }
            let v = plain_iou(&d.bbox, &gt.bbox);
            if v >= thr && (best.is_none() || v > best_iou) {
                best = Some(g);
                best_iou = v;
            }
        }
        if let Some(g) = best {
            used[g] = true;
            outcome.push(Some(true));
            continue;
        }
        let absorbed = gts.iter().any(|gt| {
            gt.category == category
                && gt.image == d.image_id
                && gt.crowd
                && plain_intersection(&d.bbox, &gt.bbox) / plain_area(&d.bbox) >= thr
        });
        outcome.push(if absorbed { None } else { Some(false) });
    }

    let mut points: Vec<(f64, f64)> = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for o in outcome.into_iter().flatten() {
        if o {
            tp += 1;
        } else {
            fp += 1;
        }
        points.push((tp as f64 / n_gt as f64, tp as f64 / (tp + fp) as f64));
    }
    let mut total = 0.0;
    for k in 0..=100 {
        let t = if k == 100 { 1.0 } else { k as f64 * 0.01 };
        let best = points
            .iter()
            .filter(|(r, _)| *r >= t)
            .map(|(_, p)| *p)
            .fold(None, |acc: Option<f64>, p| {
                Some(acc.map_or(p, |a| a.max(p)))
            });
        total += best.unwrap_or(0.0);
    }
    Some(total / 101.0)
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Cosine similarity computed from scratch.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

pub fn gaussian_vec(rng: &mut SampleRng, dim: usize) -> Vec<f64> {
    // Box-Muller
    (0..dim)
        .map(|_| {
            let u1 = rng.uniform().max(1e-300);
            let u2 = rng.uniform();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect()
}
