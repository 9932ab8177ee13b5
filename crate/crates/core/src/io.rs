//! File formats.
//!
//! * Detections: COCO results JSON, an array of
//!   `{image_id, category_id, bbox: [x, y, w, h], score}`.
//! * Ground truth: COCO instances JSON (`images`, `annotations`,
//!   `categories`). A category may carry `"split": "base" | "novel"` (also
//!   accepted: `"seen"` / `"unseen"`).
//! * Embedding tables, text: header `embtab v1 <dim> <count> <normalized:0|1>`
//!   then one `<name>\t<v1> <v2> ...` line per entry, numbers in shortest
//!   round-trip decimal.
//! * Embedding tables, binary: `EMB1`, `u32 dim`, `u32 count`,
//!   `u8 normalized`, then per entry `u32 name_len`, UTF-8 name, `dim` x
//!   `f32`. All little-endian.
//! * Scene contexts: header `scenectx v1 <count>` then one
//!   `<image_id>\t<scene>\t<prob>\t<scene>\t<prob>...` line per image,
//!   scenes sorted by descending probability.
//! * Region manifests and metrics: JSON, see [`RegionManifest`] and
//!   [`MetricsFile`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::bim::{l2_norm, EmbeddingTable, SceneContext};
use crate::error::{Error, Result};
use crate::eval::{CategoryResult, EvalCounts, EvalReport, GroundTruth};
use crate::geometry::BBox;
use crate::region_sampler::RegionSample;
use crate::suppression::{CategoryId, CategorySplit, Detection, ImageId, SplitKind};

const NORM_TOLERANCE: f64 = 1e-5;

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())]
        .bytes()
        .filter(|&b| b == b'\n')
        .count()
        + 1
}

/// A record dropped at load time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub index: usize,
    pub line: usize,
    pub reason: String,
}

impl std::fmt::Display for Rejection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "record {} (line {}): {}",
            self.index, self.line, self.reason
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Loaded<T> {
    pub items: Vec<T>,
    pub rejected: Vec<Rejection>,
}

impl<T> Default for Loaded<T> {
    fn default() -> Self {
        Self {
            items: Vec::new(),
            rejected: Vec::new(),
        }
    }
}

impl<T> Loaded<T> {
    /// With `strict`, any rejection fails the whole load.
    pub fn into_checked(self, strict: bool, what: &str) -> Result<Vec<T>> {
        if strict && !self.rejected.is_empty() {
            let detail: Vec<String> = self.rejected.iter().map(|r| r.to_string()).collect();
            return Err(Error::Validation(format!(
                "{} {what} rejected: {}",
                self.rejected.len(),
                detail.join("; ")
            )));
        }
        for r in &self.rejected {
            log::warn!("skipped {what} {r}");
        }
        Ok(self.items)
    }
}

fn json_error(e: &serde_json::Error) -> Error {
    Error::parse(format!("line {} column {}", e.line(), e.column()), e)
}

#[derive(Debug, Serialize, Deserialize)]
struct DetectionRecord {
    image_id: ImageId,
    category_id: CategoryId,
    bbox: [f64; 4],
    score: f64,
}

fn xywh_box(b: [f64; 4]) -> Result<BBox> {
    if !(b[2] > 0.0 && b[3] > 0.0) {
        return Err(Error::Validation(format!(
            "non-positive width/height in bbox {b:?}"
        )));
    }
    BBox::from_xywh(b[0], b[1], b[2], b[3])
}

pub fn parse_detections(text: &str) -> Result<Loaded<Detection>> {
    let raw: Vec<&RawValue> = serde_json::from_str(text).map_err(|e| json_error(&e))?;
    let mut out = Loaded::default();
    for (index, value) in raw.into_iter().enumerate() {
        let offset = value.get().as_ptr() as usize - text.as_ptr() as usize;
        let parsed = serde_json::from_str::<DetectionRecord>(value.get())
            .map_err(|e| e.to_string())
            .and_then(|r| {
                xywh_box(r.bbox)
                    .and_then(|b| Detection::new(r.image_id, r.category_id, b, r.score))
                    .map_err(|e| e.to_string())
            });
        match parsed {
            Ok(d) => out.items.push(d),
            Err(reason) => out.rejected.push(Rejection {
                index,
                line: line_of(text, offset),
                reason,
            }),
        }
    }
    Ok(out)
}

pub fn load_detections(path: &Path) -> Result<Loaded<Detection>> {
    parse_detections(&read_text(path)?)
}

/// One record per line inside a JSON array.
pub fn format_detections(dets: &[Detection]) -> String {
    let mut s = String::from("[");
    for (i, d) in dets.iter().enumerate() {
        let rec = DetectionRecord {
            image_id: d.image_id,
            category_id: d.category_id,
            bbox: d.bbox.to_xywh(),
            score: d.score,
        };
        s.push_str(if i == 0 { "\n" } else { ",\n" });
        s.push_str(&serde_json::to_string(&rec).expect("plain record serializes"));
    }
    s.push_str(if dets.is_empty() { "]\n" } else { "\n]\n" });
    s
}

pub fn save_detections(path: &Path, dets: &[Detection]) -> Result<()> {
    write_bytes(path, format_detections(dets).as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub id: ImageId,
    pub width: f64,
    pub height: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryInfo {
    pub id: CategoryId,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
}

impl CategoryInfo {
    pub fn split_kind(&self) -> Result<Option<SplitKind>> {
        match self.split.as_deref() {
            None => Ok(None),
            Some("base" | "seen") => Ok(Some(SplitKind::Base)),
            Some("novel" | "unseen") => Ok(Some(SplitKind::Novel)),
            Some(other) => Err(Error::Validation(format!(
                "category {} has unknown split `{other}`",
                self.id
            ))),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct AnnotationRecord {
    #[serde(default)]
    id: u64,
    image_id: ImageId,
    category_id: CategoryId,
    bbox: [f64; 4],
    #[serde(default)]
    iscrowd: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    area: Option<f64>,
}

#[derive(Deserialize)]
struct RawInstances<'a> {
    #[serde(default)]
    images: Vec<ImageInfo>,
    #[serde(borrow, default)]
    annotations: Vec<&'a RawValue>,
    #[serde(default)]
    categories: Vec<CategoryInfo>,
}

#[derive(Serialize)]
struct InstancesOut<'a> {
    images: &'a [ImageInfo],
    annotations: Vec<AnnotationRecord>,
    categories: &'a [CategoryInfo],
}

/// COCO instances file contents.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub images: Vec<ImageInfo>,
    pub categories: Vec<CategoryInfo>,
    pub ground_truths: Vec<GroundTruth>,
}

impl Dataset {
    /// Split taken from per-category `split` fields.
    pub fn split(&self) -> Result<CategorySplit> {
        let mut base = Vec::new();
        let mut novel = Vec::new();
        for c in &self.categories {
            match c.split_kind()? {
                Some(SplitKind::Base) => base.push(c.id),
                Some(SplitKind::Novel) => novel.push(c.id),
                None => {}
            }
        }
        CategorySplit::new(base, novel)
    }

    pub fn category_names(&self) -> BTreeMap<CategoryId, String> {
        self.categories
            .iter()
            .map(|c| (c.id, c.name.clone()))
            .collect()
    }

    pub fn image(&self, id: ImageId) -> Option<&ImageInfo> {
        self.images.iter().find(|i| i.id == id)
    }
}

pub fn parse_annotations(text: &str) -> Result<Loaded<Dataset>> {
    let raw: RawInstances = serde_json::from_str(text).map_err(|e| json_error(&e))?;
    let mut gts = Vec::with_capacity(raw.annotations.len());
    let mut rejected = Vec::new();
    for (index, value) in raw.annotations.into_iter().enumerate() {
        let offset = value.get().as_ptr() as usize - text.as_ptr() as usize;
        let parsed = serde_json::from_str::<AnnotationRecord>(value.get())
            .map_err(|e| e.to_string())
            .and_then(|r| {
                xywh_box(r.bbox)
                    .and_then(|b| GroundTruth::new(r.image_id, r.category_id, b, r.iscrowd != 0))
                    .map_err(|e| e.to_string())
            });
        match parsed {
            Ok(g) => gts.push(g),
            Err(reason) => rejected.push(Rejection {
                index,
                line: line_of(text, offset),
                reason,
            }),
        }
    }
    Ok(Loaded {
        items: vec![Dataset {
            images: raw.images,
            categories: raw.categories,
            ground_truths: gts,
        }],
        rejected,
    })
}

pub fn load_annotations(path: &Path, strict: bool) -> Result<Dataset> {
    let loaded = parse_annotations(&read_text(path)?)?;
    Ok(loaded
        .into_checked(strict, "annotations")?
        .pop()
        .expect("one dataset per file"))
}

pub fn format_annotations(ds: &Dataset) -> String {
    let annotations = ds
        .ground_truths
        .iter()
        .enumerate()
        .map(|(i, g)| AnnotationRecord {
            id: i as u64 + 1,
            image_id: g.image_id,
            category_id: g.category_id,
            bbox: g.bbox.to_xywh(),
            iscrowd: g.crowd as u8,
            area: Some(g.bbox.area()),
        })
        .collect();
    let out = InstancesOut {
        images: &ds.images,
        annotations,
        categories: &ds.categories,
    };
    let mut s = serde_json::to_string_pretty(&out).expect("plain records serialize");
    s.push('\n');
    s
}

pub fn save_annotations(path: &Path, ds: &Dataset) -> Result<()> {
    write_bytes(path, format_annotations(ds).as_bytes())
}

#[derive(Serialize, Deserialize)]
struct SplitFile {
    base: Vec<CategoryId>,
    novel: Vec<CategoryId>,
}

/// `{"base": [...], "novel": [...]}`.
pub fn load_split(path: &Path) -> Result<CategorySplit> {
    let text = read_text(path)?;
    let f: SplitFile = serde_json::from_str(&text).map_err(|e| json_error(&e))?;
    CategorySplit::new(f.base, f.novel)
}

pub fn save_split(path: &Path, split: &CategorySplit) -> Result<()> {
    let f = SplitFile {
        base: split.base().iter().copied().collect(),
        novel: split.novel().iter().copied().collect(),
    };
    let mut s = serde_json::to_string(&f).expect("plain record serializes");
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

fn check_name(name: &str) -> Result<()> {
    if name.is_empty() || name.contains(['\t', '\n', '\r']) {
        return Err(Error::Validation(format!(
            "name {name:?} is empty or contains a tab or newline"
        )));
    }
    Ok(())
}

fn check_norms(table: &EmbeddingTable) -> Result<()> {
    if !table.is_normalized() {
        return Ok(());
    }
    for (name, v) in table.iter() {
        let n = l2_norm(v);
        if (n - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::Validation(format!(
                "table is flagged normalized but `{name}` has norm {n}"
            )));
        }
    }
    Ok(())
}

pub fn format_embtab(table: &EmbeddingTable) -> Result<String> {
    let mut s = format!(
        "embtab v1 {} {} {}\n",
        table.dim(),
        table.len(),
        table.is_normalized() as u8
    );
    for (name, v) in table.iter() {
        check_name(name)?;
        s.push_str(name);
        s.push('\t');
        for (i, x) in v.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            write!(s, "{x}").expect("write to String");
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn parse_embtab(text: &str) -> Result<EmbeddingTable> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse("line 1", "empty file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (dim, count, normalized) = match fields.as_slice() {
        ["embtab", "v1", dim, count, flag] => {
            let bad = |what: &str| Error::parse("line 1", format!("bad {what} in header"));
            let dim: usize = dim.parse().map_err(|_| bad("dim"))?;
            let count: usize = count.parse().map_err(|_| bad("count"))?;
            let flag = match *flag {
                "0" => false,
                "1" => true,
                _ => return Err(bad("normalized flag")),
            };
            (dim, count, flag)
        }
        _ => {
            return Err(Error::parse(
                "line 1",
                "expected `embtab v1 <dim> <count> <0|1>`",
            ))
        }
    };
    let mut table = EmbeddingTable::new(dim);
    for (i, line) in lines {
        let pos = format!("line {}", i + 1);
        if line.is_empty() {
            continue;
        }
        let (name, values) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(&pos, "missing tab after name"))?;
        let v = values
            .split(' ')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::parse(&pos, format!("`{t}`: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::parse(&pos, "non-finite value"));
        }
        table.insert(name, v).map_err(|e| match e {
            Error::DimensionMismatch {
                expected, found, ..
            } => Error::DimensionMismatch {
                expected,
                found,
                context: pos.clone(),
            },
            other => other,
        })?;
    }
    if table.len() != count {
        return Err(Error::parse(
            "end of file",
            format!("header declares {count} entries, found {}", table.len()),
        ));
    }
    table.set_normalized_flag(normalized);
    check_norms(&table)?;
    Ok(table)
}

pub const EMB_MAGIC: &[u8; 4] = b"EMB1";

/// Binary layout; values are stored as `f32`.
pub fn encode_embtab_bin(table: &EmbeddingTable) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(13 + table.len() * (8 + 4 * table.dim()));
    out.extend_from_slice(EMB_MAGIC);
    out.extend_from_slice(&(table.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(table.len() as u32).to_le_bytes());
    out.push(table.is_normalized() as u8);
    for (name, v) in table.iter() {
        check_name(name)?;
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        for &x in v {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_embtab_bin(bytes: &[u8]) -> Result<EmbeddingTable> {
    let mut at = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes
            .get(at..at + n)
            .ok_or_else(|| Error::parse(format!("byte {at}"), "unexpected end of data"))?;
        at += n;
        Ok(s)
    };
    if take(4)? != EMB_MAGIC {
        return Err(Error::parse("byte 0", "missing EMB1 magic"));
    }
    let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().expect("4 bytes")) as usize;
    let dim = u32_at(take(4)?);
    let count = u32_at(take(4)?);
    let normalized = match take(1)?[0] {
        0 => false,
        1 => true,
        f => return Err(Error::parse("byte 12", format!("bad normalized flag {f}"))),
    };
    let mut table = EmbeddingTable::new(dim);
    for _ in 0..count {
        let len = u32_at(take(4)?);
        let name = std::str::from_utf8(take(len)?)
            .map_err(|e| Error::parse("entry name", e))?
            .to_string();
        let raw = take(4 * dim)?;
        let v: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        table.insert(name, v)?;
    }
    if at != bytes.len() {
        return Err(Error::parse(format!("byte {at}"), "trailing data"));
    }
    table.set_normalized_flag(normalized);
    check_norms(&table)?;
    Ok(table)
}

/// Reads either table variant, chosen by the leading magic bytes. With
/// `normalize`, vectors are rescaled to unit norm after loading.
pub fn load_embedding_table(path: &Path, normalize: bool) -> Result<EmbeddingTable> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let table = if bytes.starts_with(EMB_MAGIC) {
        decode_embtab_bin(&bytes)?
    } else {
        let text = std::str::from_utf8(&bytes).map_err(|e| Error::parse("file", e))?;
        parse_embtab(text)?
    };
    if normalize && !table.is_normalized() {
        crate::bim::normalize_table(&table)
    } else {
        Ok(table)
    }
}

/// Text unless the path ends in `.bin` / `.embbin`.
pub fn save_embedding_table(path: &Path, table: &EmbeddingTable) -> Result<()> {
    let binary = matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("bin" | "embbin")
    );
    let bytes = if binary {
        encode_embtab_bin(table)?
    } else {
        format_embtab(table)?.into_bytes()
    };
    write_bytes(path, &bytes)
}

pub fn format_scene_contexts(contexts: &[SceneContext]) -> Result<String> {
    let mut s = format!("scenectx v1 {}\n", contexts.len());
    for ctx in contexts {
        write!(s, "{}", ctx.image_id).expect("write to String");
        for (name, p) in ctx.scenes() {
            check_name(name)?;
            write!(s, "\t{name}\t{p}").expect("write to String");
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn parse_scene_contexts(text: &str) -> Result<Vec<SceneContext>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse("line 1", "empty file"))?;
    let count: usize = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["scenectx", "v1", n] => n
            .parse()
            .map_err(|_| Error::parse("line 1", "bad count in header"))?,
        _ => return Err(Error::parse("line 1", "expected `scenectx v1 <count>`")),
    };
    let mut out = Vec::with_capacity(count);
    for (i, line) in lines {
        let pos = format!("line {}", i + 1);
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let image_id: ImageId = fields
            .next()
            .unwrap_or_default()
            .parse()
            .map_err(|e| Error::parse(&pos, format!("image id: {e}")))?;
        let rest: Vec<&str> = fields.collect();
        if !rest.len().is_multiple_of(2) {
            return Err(Error::parse(&pos, "scene without probability"));
        }
        let scenes = rest
            .chunks(2)
            .map(|pair| {
                let p: f64 = pair[1]
                    .parse()
                    .map_err(|e| Error::parse(&pos, format!("`{}`: {e}", pair[1])))?;
                Ok((pair[0].to_string(), p))
            })
            .collect::<Result<Vec<_>>>()?;
        let ctx = SceneContext::new(image_id, scenes)
            .map_err(|e| Error::Validation(format!("{pos}: {e}")))?;
        if out.iter().any(|c: &SceneContext| c.image_id == image_id) {
            return Err(Error::DuplicateName(format!("image {image_id} ({pos})")));
        }
        out.push(ctx);
    }
    if out.len() != count {
        return Err(Error::parse(
            "end of file",
            format!("header declares {count} records, found {}", out.len()),
        ));
    }
    Ok(out)
}

pub fn load_scene_contexts(path: &Path) -> Result<Vec<SceneContext>> {
    parse_scene_contexts(&read_text(path)?)
}

pub fn save_scene_contexts(path: &Path, contexts: &[SceneContext]) -> Result<()> {
    write_bytes(path, format_scene_contexts(contexts)?.as_bytes())
}

/// Sampled regions for the external crop-and-embed step. Boxes are corner
/// format `[x_min, y_min, x_max, y_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionManifest {
    pub version: u32,
    pub seed: u64,
    pub regions: Vec<RegionSample>,
}

pub fn save_manifest(path: &Path, manifest: &RegionManifest) -> Result<()> {
    let mut s = serde_json::to_string_pretty(manifest).expect("plain records serialize");
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

pub fn load_manifest(path: &Path) -> Result<RegionManifest> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| json_error(&e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryMetrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(flatten)]
    pub result: CategoryResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitSummary {
    pub map50_base: Option<f64>,
    pub map50_novel: Option<f64>,
    pub map50_all: Option<f64>,
}

/// Structured metrics: one record per category plus split summaries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsFile {
    pub iou_threshold: f64,
    pub counts: EvalCounts,
    pub categories: Vec<CategoryMetrics>,
    pub summary: SplitSummary,
}

impl MetricsFile {
    pub fn new(report: &EvalReport, names: &BTreeMap<CategoryId, String>) -> Self {
        Self {
            iou_threshold: report.iou_threshold,
            counts: report.counts,
            categories: report
                .categories
                .iter()
                .map(|c| CategoryMetrics {
                    name: names.get(&c.category_id).cloned(),
                    result: *c,
                })
                .collect(),
            summary: SplitSummary {
                map50_base: report.map_base,
                map50_novel: report.map_novel,
                map50_all: report.map_all,
            },
        }
    }
}

pub fn save_metrics(
    path: &Path,
    report: &EvalReport,
    names: &BTreeMap<CategoryId, String>,
) -> Result<()> {
    let mut s = serde_json::to_string_pretty(&MetricsFile::new(report, names))
        .expect("plain records serialize");
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.1}", 100.0 * x))
}

/// Aligned human-readable table, AP values in percent.
pub fn metrics_table(report: &EvalReport, names: &BTreeMap<CategoryId, String>) -> String {
    let name_w = report
        .categories
        .iter()
        .map(|c| names.get(&c.category_id).map_or(0, |n| n.len()))
        .max()
        .unwrap_or(0)
        .max(8);
    let mut s = String::new();
    writeln!(
        s,
        "{:>8}  {:<name_w$}  {:<10}  {:>6}  {:>6}  {:>6}",
        "id", "category", "split", "n_gt", "n_det", "AP50"
    )
    .unwrap();
    for c in &report.categories {
        let split = match c.split {
            Some(SplitKind::Base) => "base",
            Some(SplitKind::Novel) => "novel",
            None => "unassigned",
        };
        writeln!(
            s,
            "{:>8}  {:<name_w$}  {:<10}  {:>6}  {:>6}  {:>6}",
            c.category_id,
            names.get(&c.category_id).map_or("", String::as_str),
            split,
            c.n_gt,
            c.n_det,
            pct(c.ap)
        )
        .unwrap();
    }
    writeln!(
        s,
        "\nmAP50  base {}  novel {}  all {}   ({} images, {} gts, {} dets)",
        pct(report.map_base),
        pct(report.map_novel),
        pct(report.map_all),
        report.counts.n_images,
        report.counts.n_gts,
        report.counts.n_dets
    )
    .unwrap();
    s
}
