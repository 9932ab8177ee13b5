//! Sampling of oversized regions (supersets of a ground-truth box) and partial
//! regions (subsets) at a prescribed IoU.
//!
//! Because one box contains the other, IoU reduces to an area ratio, so each
//! sampler draws a target IoU `t`, fixes the region area analytically, draws
//! a log-uniform aspect ratio (clamped to what is feasible) and then a
//! uniform placement. A candidate is re-checked with exact containment and
//! the geometric IoU before it is returned.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geometry::{iou, BBox};
use crate::rng::SampleRng;
use crate::suppression::ImageId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    Oversized,
    Partial,
}

impl std::str::FromStr for SampleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oversized" => Ok(Self::Oversized),
            "partial" => Ok(Self::Partial),
            other => Err(Error::Validation(format!("unknown sample kind `{other}`"))),
        }
    }
}

/// Closed IoU interval with `0 < lo <= hi <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct IouRange {
    lo: f64,
    hi: f64,
}

impl IouRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::Validation(format!(
                "IoU range ({lo}, {hi}) must satisfy 0 < lo <= hi <= 1"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }

    /// `n` consecutive bins of equal width covering `[start, end]`.
    pub fn bins(start: f64, end: f64, n: usize) -> Result<Vec<Self>> {
        let width = (end - start) / n as f64;
        (0..n)
            .map(|i| {
                let lo = start + width * i as f64;
                let hi = if i + 1 == n {
                    end
                } else {
                    start + width * (i + 1) as f64
                };
                Self::new(lo, hi)
            })
            .collect()
    }
}

impl TryFrom<[f64; 2]> for IouRange {
    type Error = Error;

    fn try_from(v: [f64; 2]) -> Result<Self> {
        Self::new(v[0], v[1])
    }
}

impl From<IouRange> for [f64; 2] {
    fn from(r: IouRange) -> Self {
        [r.lo, r.hi]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerOptions {
    /// Width/height ratio bounds for the log-uniform aspect draw.
    pub aspect_range: (f64, f64),
    pub max_attempts: usize,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        Self {
            aspect_range: (1.0 / 3.0, 3.0),
            max_attempts: 1000,
        }
    }
}

// Internal acceptance slack on the achieved IoU; errors are O(ulp).
const IOU_SLACK: f64 = 1e-12;

fn positive_area(gt: &BBox) -> Result<()> {
    if gt.width() > 0.0 && gt.height() > 0.0 {
        Ok(())
    } else {
        Err(Error::Validation("ground-truth box has zero area".into()))
    }
}

/// A box `R` with `gt ⊆ R ⊆ [0, image_w] × [0, image_h]` and
/// `iou(gt, R) ∈ range`.
pub fn sample_oversized(
    gt: &BBox,
    image_w: f64,
    image_h: f64,
    range: IouRange,
    rng: &mut SampleRng,
    opts: &SamplerOptions,
) -> Result<BBox> {
    positive_area(gt)?;
    let image = BBox::new(0.0, 0.0, image_w, image_h)?;
    if !gt.is_inside(&image) {
        return Err(Error::Validation(format!(
            "ground truth {:?} lies outside the {image_w}x{image_h} image",
            gt.to_array()
        )));
    }
    if range.lo == 1.0 {
        return Ok(*gt);
    }
    let (gw, gh) = (gt.width(), gt.height());
    let gt_area = gt.area();
    for _ in 0..opts.max_attempts {
        let t = rng.uniform_in(range.lo, range.hi);
        let target = gt_area / t;
        let aspect = rng.log_uniform(opts.aspect_range.0, opts.aspect_range.1);
        let w_lo = gw.max(target / image_h);
        let w_hi = image_w.min(target / gh);
        let x_draw = rng.uniform();
        let y_draw = rng.uniform();
        if w_lo > w_hi {
            continue;
        }
        let w = (target * aspect).sqrt().clamp(w_lo, w_hi);
        let h = target / w;
        let x_range = ((gt.x_max - w).max(0.0), gt.x_min.min(image_w - w));
        let y_range = ((gt.y_max - h).max(0.0), gt.y_min.min(image_h - h));
        let x = x_range.0 + (x_range.1 - x_range.0).max(0.0) * x_draw;
        let y = y_range.0 + (y_range.1 - y_range.0).max(0.0) * y_draw;
        // snap edges that rounding pushed across the gt or image border
        let Ok(region) = BBox::new(
            x.min(gt.x_min).max(0.0),
            y.min(gt.y_min).max(0.0),
            (x + w).max(gt.x_max).min(image_w),
            (y + h).max(gt.y_max).min(image_h),
        ) else {
            continue;
        };
        if gt.is_inside(&region)
            && region.is_inside(&image)
            && range.contains(iou(gt, &region)?, IOU_SLACK)
        {
            return Ok(region);
        }
    }
    Err(Error::InfeasibleSample {
        attempts: opts.max_attempts,
        reason: format!(
            "no box containing {:?} at IoU in [{}, {}] fits a {image_w}x{image_h} image",
            gt.to_array(),
            range.lo,
            range.hi
        ),
    })
}

/// A box `R ⊆ gt` with `iou(gt, R) = |R| / |gt| ∈ range`.
pub fn sample_partial(
    gt: &BBox,
    range: IouRange,
    rng: &mut SampleRng,
    opts: &SamplerOptions,
) -> Result<BBox> {
    positive_area(gt)?;
    if range.lo == 1.0 {
        return Ok(*gt);
    }
    let (gw, gh) = (gt.width(), gt.height());
    let gt_area = gt.area();
    for _ in 0..opts.max_attempts {
        let t = rng.uniform_in(range.lo, range.hi);
        let target = gt_area * t;
        let aspect = rng.log_uniform(opts.aspect_range.0, opts.aspect_range.1);
        let x_draw = rng.uniform();
        let y_draw = rng.uniform();
        let w = (target * aspect).sqrt().clamp(target / gh, gw);
        let h = target / w;
        let x = gt.x_min + (gw - w).max(0.0) * x_draw;
        let y = gt.y_min + (gh - h).max(0.0) * y_draw;
        let Ok(region) = BBox::new(
            x.max(gt.x_min),
            y.max(gt.y_min),
            (x + w).min(gt.x_max),
            (y + h).min(gt.y_max),
        ) else {
            continue;
        };
        if region.is_inside(gt) && range.contains(iou(gt, &region)?, IOU_SLACK) {
            return Ok(region);
        }
    }
    Err(Error::InfeasibleSample {
        attempts: opts.max_attempts,
        reason: format!(
            "no sub-box of {:?} at IoU in [{}, {}]",
            gt.to_array(),
            range.lo,
            range.hi
        ),
    })
}

/// Ground-truth box with the dimensions of its image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeTarget {
    pub image_id: ImageId,
    pub image_w: f64,
    pub image_h: f64,
    pub gt: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSample {
    pub region_id: String,
    pub image_id: ImageId,
    pub kind: SampleKind,
    pub bin: IouRange,
    pub gt_xyxy: [f64; 4],
    pub region_xyxy: [f64; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeFailure {
    pub target_index: usize,
    pub bin_index: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProbeOutput {
    /// One entry per requested bin, in bin order.
    pub bins: Vec<(IouRange, Vec<RegionSample>)>,
    pub failures: Vec<ProbeFailure>,
}

impl ProbeOutput {
    pub fn samples(&self) -> impl Iterator<Item = &RegionSample> {
        self.bins.iter().flat_map(|(_, s)| s.iter())
    }
}

/// `per_bin` samples of `kind` per target and per bin.
///
/// Target `i` and bin `b` draw from the stream `derive_seed(seed, [i, b])`,
/// so output is independent of scheduling. An infeasible item is recorded in
/// `failures` and the probe carries on.
pub fn probe_bins(
    targets: &[ProbeTarget],
    bins: &[IouRange],
    per_bin: usize,
    kind: SampleKind,
    seed: u64,
    opts: &SamplerOptions,
    exec: Exec,
) -> Result<ProbeOutput> {
    if bins.windows(2).any(|w| w[0].hi > w[1].lo) {
        return Err(Error::Validation(
            "probe bins must be ordered and disjoint".into(),
        ));
    }
    let per_target = exec.map_indexed(targets, |ti, target| {
        let mut out: Vec<(usize, std::result::Result<Vec<RegionSample>, ProbeFailure>)> =
            Vec::with_capacity(bins.len());
        for (bi, bin) in bins.iter().enumerate() {
            let mut rng = SampleRng::derived(seed, &[ti as u64, bi as u64]);
            let drawn: Result<Vec<RegionSample>> = (0..per_bin)
                .map(|j| {
                    let region = match kind {
                        SampleKind::Oversized => sample_oversized(
                            &target.gt,
                            target.image_w,
                            target.image_h,
                            *bin,
                            &mut rng,
                            opts,
                        ),
                        SampleKind::Partial => sample_partial(&target.gt, *bin, &mut rng, opts),
                    }?;
                    Ok(RegionSample {
                        region_id: format!("{ti}-{bi}-{j}"),
                        image_id: target.image_id,
                        kind,
                        bin: *bin,
                        gt_xyxy: target.gt.to_array(),
                        region_xyxy: region.to_array(),
                    })
                })
                .collect();
            out.push((
                bi,
                drawn.map_err(|e| ProbeFailure {
                    target_index: ti,
                    bin_index: bi,
                    message: e.to_string(),
                }),
            ));
        }
        out
    });

    let mut output = ProbeOutput {
        bins: bins.iter().map(|b| (*b, Vec::new())).collect(),
        failures: Vec::new(),
    };
    for (bi, result) in per_target.into_iter().flatten() {
        match result {
            Ok(samples) => output.bins[bi].1.extend(samples),
            Err(f) => output.failures.push(f),
        }
    }
    Ok(output)
}
