//! End-to-end post-processing: ingest, re-score, NMS, POS, evaluate.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::bim::{
    build_background_embedding, rescore_coefficients, rescore_detections, score_regions, ClassBank,
    EmbeddingTable, Normalization, RescoreTable, SceneContext,
};
use crate::config::{Config, StageOrder};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalOptions, EvalReport, GroundTruth};
use crate::exec::Exec;
use crate::geometry::BBox;
use crate::io::RegionManifest;
use crate::suppression::{nms_batch, pos_batch, CategoryId, CategorySplit, Detection, ImageId};

/// Sampled regions plus their image embeddings, keyed by region id.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionInputs {
    pub manifest: RegionManifest,
    pub embeddings: EmbeddingTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineInputs {
    pub ground_truths: Vec<GroundTruth>,
    pub split: CategorySplit,
    pub category_names: BTreeMap<CategoryId, String>,
    pub class_table: EmbeddingTable,
    /// Keyed by prompted scene name.
    pub scene_table: EmbeddingTable,
    pub contexts: BTreeMap<ImageId, SceneContext>,
    pub detections: Vec<Detection>,
    /// When present, detections are produced by classifying these regions
    /// and `detections` is ignored.
    pub regions: Option<RegionInputs>,
}

impl PipelineInputs {
    pub fn from_world(world: &crate::synth::SyntheticWorld) -> Self {
        Self {
            ground_truths: world.dataset.ground_truths.clone(),
            split: world.split.clone(),
            category_names: world.dataset.category_names(),
            class_table: world.class_table.clone(),
            scene_table: world.scene_table.clone(),
            contexts: world
                .contexts
                .iter()
                .map(|c| (c.image_id, c.clone()))
                .collect(),
            detections: world.detections.clone(),
            regions: None,
        }
    }
}

pub const STAGE_INGEST: &str = "ingest";
pub const STAGE_RESCORE: &str = "rescore";
pub const STAGE_NMS: &str = "nms";
pub const STAGE_POS: &str = "pos";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StageArtifacts {
    /// Detections after each stage, in execution order.
    pub detections: Vec<(&'static str, Vec<Detection>)>,
    pub rescore_tables: BTreeMap<ImageId, RescoreTable>,
}

impl StageArtifacts {
    /// Writes `NN_<stage>.json` detection files (COCO results format) and,
    /// when re-scoring ran, `rescore_tables.json`.
    pub fn save(&self, dir: &std::path::Path) -> Result<()> {
        for (i, (name, dets)) in self.detections.iter().enumerate() {
            crate::io::save_detections(&dir.join(format!("{:02}_{name}.json", i + 1)), dets)?;
        }
        if !self.rescore_tables.is_empty() {
            let mut s = serde_json::to_string_pretty(&self.rescore_tables)
                .expect("plain records serialize");
            s.push('\n');
            crate::io::write_bytes(&dir.join("rescore_tables.json"), s.as_bytes())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub detections: Vec<Detection>,
    pub report: EvalReport,
    pub unknown_category_detections: usize,
    pub stages: Option<StageArtifacts>,
}

fn class_bank(inputs: &PipelineInputs) -> Result<ClassBank> {
    ClassBank::from_table(&inputs.class_table, &inputs.category_names)
}

fn context(inputs: &PipelineInputs, image_id: ImageId) -> Result<&SceneContext> {
    inputs
        .contexts
        .get(&image_id)
        .ok_or(Error::MissingSceneContext(image_id))
}

fn image_ids(dets: &[Detection]) -> Vec<ImageId> {
    let mut ids: Vec<ImageId> = dets.iter().map(|d| d.image_id).collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Classifies every manifest region against classes plus the image's
/// background embedding. Each class whose probability reaches the floor
/// yields one detection on the region box.
pub fn detections_from_regions(
    config: &Config,
    inputs: &PipelineInputs,
    regions: &RegionInputs,
    exec: Exec,
) -> Result<Vec<Detection>> {
    let bank = class_bank(inputs)?;
    let mut by_image: BTreeMap<ImageId, Vec<usize>> = BTreeMap::new();
    for (i, r) in regions.manifest.regions.iter().enumerate() {
        by_image.entry(r.image_id).or_default().push(i);
    }
    let groups: Vec<(ImageId, Vec<usize>)> = by_image.into_iter().collect();
    let per_image = exec.map(&groups, |(image_id, idx)| -> Result<Vec<Detection>> {
        let bg = build_background_embedding(
            context(inputs, *image_id)?,
            &inputs.scene_table,
            config.k,
            &config.prompt_template,
            config.renormalize_bg,
        )?;
        let vectors = idx
            .iter()
            .map(|&i| {
                let id = &regions.manifest.regions[i].region_id;
                regions
                    .embeddings
                    .get(id)
                    .map(<[f64]>::to_vec)
                    .ok_or_else(|| Error::Validation(format!("no embedding for region {id}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let probs = score_regions(&vectors, &bank, &bg, config.temperature)?;
        let mut out = Vec::new();
        for (&i, row) in idx.iter().zip(&probs) {
            let r = &regions.manifest.regions[i];
            let [x0, y0, x1, y1] = r.region_xyxy;
            let bbox = BBox::new(x0, y0, x1, y1)?;
            for (&cat, &p) in bank.ids().iter().zip(row) {
                if p >= config.region_score_floor && p > 0.0 {
                    out.push(Detection::new(*image_id, cat, bbox, p.min(1.0))?);
                }
            }
        }
        Ok(out)
    });
    let mut dets = Vec::new();
    for d in per_image {
        dets.extend(d?);
    }
    Ok(dets)
}

/// Per-image re-score coefficient tables for every image in `dets`.
pub fn rescore_tables(
    config: &Config,
    inputs: &PipelineInputs,
    dets: &[Detection],
    exec: Exec,
) -> Result<BTreeMap<ImageId, RescoreTable>> {
    let bank = class_bank(inputs)?;
    let ids = image_ids(dets);
    let tables = exec.map(&ids, |&image_id| -> Result<RescoreTable> {
        let bg = build_background_embedding(
            context(inputs, image_id)?,
            &inputs.scene_table,
            config.k,
            &config.prompt_template,
            config.renormalize_bg,
        )?;
        rescore_coefficients(&bank, &bg, config.normalization)
    });
    ids.into_iter()
        .zip(tables)
        .map(|(id, t)| Ok((id, t?)))
        .collect()
}

/// Re-scores every detection against its image's background. A no-op when
/// `alpha` is 0, in which case no scene context is needed.
pub fn rescore_batch(
    config: &Config,
    inputs: &PipelineInputs,
    dets: &[Detection],
    exec: Exec,
) -> Result<(Vec<Detection>, BTreeMap<ImageId, RescoreTable>)> {
    if config.alpha == 0.0 {
        return Ok((dets.to_vec(), BTreeMap::new()));
    }
    let tables = rescore_tables(config, inputs, dets, exec)?;
    let mut out = Vec::with_capacity(dets.len());
    for d in dets {
        let table = &tables[&d.image_id];
        out.extend(rescore_detections(
            std::slice::from_ref(d),
            table,
            config.alpha,
        )?);
    }
    Ok((out, tables))
}

/// Runs every stage. With `keep_stages`, intermediate detections and
/// re-score tables are returned as well.
pub fn run_pipeline(
    config: &Config,
    inputs: &PipelineInputs,
    exec: Exec,
    keep_stages: bool,
) -> Result<PipelineOutput> {
    config.validate()?;
    let mut stages = StageArtifacts::default();
    let mut record = |name: &'static str, dets: &[Detection]| {
        if keep_stages {
            stages.detections.push((name, dets.to_vec()));
        }
    };

    let ingested = match &inputs.regions {
        Some(regions) => detections_from_regions(config, inputs, regions, exec)
            .map_err(|e| e.in_stage(STAGE_INGEST))?,
        None => inputs.detections.clone(),
    };
    record(STAGE_INGEST, &ingested);

    let mut tables = BTreeMap::new();
    let mut current = ingested;
    let order: [&'static str; 2] = match config.stage_order {
        StageOrder::RescoreThenNms => [STAGE_RESCORE, STAGE_NMS],
        StageOrder::NmsThenRescore => [STAGE_NMS, STAGE_RESCORE],
    };
    for stage in order {
        current = if stage == STAGE_RESCORE {
            let (d, t) = rescore_batch(config, inputs, &current, exec)
                .map_err(|e| e.in_stage(STAGE_RESCORE))?;
            tables = t;
            d
        } else {
            nms_batch(&current, config.nms_iou, exec).map_err(|e| e.in_stage(STAGE_NMS))?
        };
        record(stage, &current);
    }

    let pos = pos_batch(
        &current,
        &inputs.split,
        config.theta,
        config.pos_scope,
        exec,
    )
    .map_err(|e| e.in_stage(STAGE_POS))?;
    record(STAGE_POS, &pos.detections);

    let opts = EvalOptions {
        iou_threshold: config.eval_iou,
        max_dets: config.max_dets,
    };
    let report = evaluate(
        &pos.detections,
        &inputs.ground_truths,
        &inputs.split,
        &opts,
        exec,
    );
    stages.rescore_tables = tables;
    Ok(PipelineOutput {
        detections: pos.detections,
        report,
        unknown_category_detections: pos.unknown_category_detections,
        stages: keep_stages.then_some(stages),
    })
}

/// Parameter values to sweep. An empty list keeps the config value and
/// leaves that parameter out of the output columns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepGrid {
    pub alpha: Vec<f64>,
    pub theta: Vec<f64>,
    pub k: Vec<usize>,
    pub normalization: Vec<Normalization>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub theta: f64,
    pub k: usize,
    pub normalization: Normalization,
    pub map50_novel: Option<f64>,
    pub map50_base: Option<f64>,
    pub map50_all: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    /// Swept parameter names, in grid nesting order.
    pub params: Vec<&'static str>,
    pub rows: Vec<SweepRow>,
}

impl SweepGrid {
    fn axes(&self, config: &Config) -> (Vec<&'static str>, Vec<Config>) {
        let mut params = Vec::new();
        let alpha = if self.alpha.is_empty() {
            vec![config.alpha]
        } else {
            params.push("alpha");
            self.alpha.clone()
        };
        let theta = if self.theta.is_empty() {
            vec![config.theta]
        } else {
            params.push("theta");
            self.theta.clone()
        };
        let k = if self.k.is_empty() {
            vec![config.k]
        } else {
            params.push("k");
            self.k.clone()
        };
        let norm = if self.normalization.is_empty() {
            vec![config.normalization]
        } else {
            params.push("normalization");
            self.normalization.clone()
        };
        let mut cells = Vec::new();
        for &a in &alpha {
            for &t in &theta {
                for &kk in &k {
                    for &n in &norm {
                        cells.push(Config {
                            alpha: a,
                            theta: t,
                            k: kk,
                            normalization: n,
                            ..config.clone()
                        });
                    }
                }
            }
        }
        (params, cells)
    }

    /// Number of grid points.
    pub fn cell_count(&self) -> usize {
        [
            self.alpha.len(),
            self.theta.len(),
            self.k.len(),
            self.normalization.len(),
        ]
        .iter()
        .map(|&n| n.max(1))
        .product()
    }
}

/// One pipeline run per grid point over shared inputs. A failing cell is
/// recorded in its row and the sweep carries on.
pub fn sweep(config: &Config, grid: &SweepGrid, inputs: &PipelineInputs, exec: Exec) -> SweepTable {
    let (params, cells) = grid.axes(config);
    let rows = exec.map(&cells, |cell| {
        let result = run_pipeline(cell, inputs, Exec::Sequential, false);
        let (novel, base, all, error) = match result {
            Ok(out) => (
                out.report.map_novel,
                out.report.map_base,
                out.report.map_all,
                None,
            ),
            Err(e) => {
                log::warn!(
                    "sweep cell alpha={} theta={} k={} failed: {e}",
                    cell.alpha,
                    cell.theta,
                    cell.k
                );
                (None, None, None, Some(e.to_string()))
            }
        };
        SweepRow {
            alpha: cell.alpha,
            theta: cell.theta,
            k: cell.k,
            normalization: cell.normalization,
            map50_novel: novel,
            map50_base: base,
            map50_all: all,
            error,
        }
    });
    SweepTable { params, rows }
}

pub const MAP_COLUMNS: [&str; 3] = ["map50_novel", "map50_base", "map50_all"];

impl SweepRow {
    fn param(&self, name: &str) -> String {
        match name {
            "alpha" => format!("{}", self.alpha),
            "theta" => format!("{}", self.theta),
            "k" => self.k.to_string(),
            "normalization" => self.normalization.to_string(),
            _ => unreachable!("unknown sweep parameter {name}"),
        }
    }

    fn maps(&self) -> [Option<f64>; 3] {
        [self.map50_novel, self.map50_base, self.map50_all]
    }
}

impl SweepTable {
    pub fn header(&self) -> Vec<&'static str> {
        let mut h = self.params.clone();
        h.extend(MAP_COLUMNS);
        h.push("error");
        h
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    /// Machine-readable table; mAP values are fractions in [0, 1], blank
    /// for failed cells or empty splits.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header()).expect("in-memory write");
        for r in &self.rows {
            let mut rec: Vec<String> = self.params.iter().map(|p| r.param(p)).collect();
            rec.extend(
                r.maps()
                    .iter()
                    .map(|m| m.map_or_else(String::new, |v| format!("{v}"))),
            );
            rec.push(r.error.clone().unwrap_or_default());
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }

    /// Aligned text table with mAP in percent.
    pub fn to_text(&self) -> String {
        let header = self.header();
        let body: Vec<Vec<String>> =
            self.rows
                .iter()
                .map(|r| {
                    let mut cells: Vec<String> = self.params.iter().map(|p| r.param(p)).collect();
                    cells.extend(r.maps().iter().map(|m| {
                        m.map_or_else(|| "-".to_string(), |v| format!("{:.1}", 100.0 * v))
                    }));
                    cells.push(r.error.clone().unwrap_or_default());
                    cells
                })
                .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|c| {
                body.iter()
                    .map(|row| row[c].len())
                    .chain([header[c].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        let line = |cells: Vec<&str>, out: &mut String| {
            let s: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect();
            let _ = writeln!(out, "{}", s.join("  ").trim_end());
        };
        line(header.clone(), &mut out);
        for row in &body {
            line(row.iter().map(String::as_str).collect(), &mut out);
        }
        out
    }
}
