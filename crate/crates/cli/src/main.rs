use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ovpost::bim::Normalization;
use ovpost::config::{Config, StageOrder};
use ovpost::error::{Error, Result};
use ovpost::eval::{evaluate, EvalOptions};
use ovpost::exec::Exec;
use ovpost::io;
use ovpost::pipeline::{self, PipelineInputs, RegionInputs, SweepGrid};
use ovpost::region_sampler::{probe_bins, IouRange, ProbeTarget, SampleKind, SamplerOptions};
use ovpost::suppression::{nms_batch, pos_batch, CategorySplit, Detection, PosScope};
use ovpost::synth::{self, SyntheticWorldSpec};

#[derive(Parser, Debug)]
#[command(
    name = "ovpost",
    version,
    about = "Post-processing for open-vocabulary detection output"
)]
struct Cli {
    /// TOML file with pipeline hyperparameters.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Fail on any rejected input record instead of skipping it.
    #[arg(long, global = true)]
    strict: bool,
    /// Directory for intermediate stage outputs.
    #[arg(long, global = true, value_name = "DIR")]
    emit_stages: Option<PathBuf>,
    /// Run on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Blend detection scores with scene-background coefficients.
    Rescore(RescoreArgs),
    /// Partial object suppression.
    Suppress(SuppressArgs),
    /// Per-category greedy NMS.
    Nms(NmsArgs),
    /// Sample oversized or partial regions around ground truths.
    Sample(SampleArgs),
    /// AP50 per category and mAP per split.
    Eval(EvalArgs),
    /// Generate a synthetic world.
    Synth(SynthArgs),
    /// Run the pipeline over a parameter grid.
    Sweep(SweepArgs),
    /// Re-score, NMS, POS and evaluate in one go.
    Pipeline(PipelineArgs),
}

#[derive(Args, Debug, Clone, Default)]
struct Inputs {
    /// Directory written by `synth`; fills in any missing input path.
    #[arg(long)]
    world: Option<PathBuf>,
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long)]
    detections: Option<PathBuf>,
    /// Class embedding table, one entry per category name.
    #[arg(long)]
    classes: Option<PathBuf>,
    /// Prompted scene embedding table.
    #[arg(long)]
    scenes: Option<PathBuf>,
    #[arg(long)]
    contexts: Option<PathBuf>,
    /// Base/novel split file; defaults to the split recorded in the annotations.
    #[arg(long)]
    split: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
struct Overrides {
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    scope: Option<PosScope>,
    #[arg(long)]
    nms_iou: Option<f64>,
    #[arg(long)]
    normalization: Option<Normalization>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    nms_first: bool,
    #[arg(long)]
    max_dets: Option<usize>,
}

#[derive(Args, Debug)]
struct RescoreArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SuppressArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct NmsArgs {
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    iou: Option<f64>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long, default_value = "oversized")]
    kind: SampleKind,
    /// Equal-width IoU bins spanning [0.1, 1.0].
    #[arg(long, default_value_t = 9)]
    bins: usize,
    #[arg(long, default_value_t = 10)]
    per_bin: usize,
    /// Region manifest (JSON).
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    overrides: Overrides,
    /// Structured metrics file (JSON).
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// TOML world spec; flags below override it.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    n_images: Option<usize>,
    #[arg(long)]
    partial_fp_rate: Option<f64>,
    #[arg(long)]
    oversized_fp_rate: Option<f64>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long = "grid-alpha", value_delimiter = ',')]
    grid_alpha: Vec<f64>,
    #[arg(long = "grid-theta", value_delimiter = ',')]
    grid_theta: Vec<f64>,
    #[arg(long = "grid-k", value_delimiter = ',')]
    grid_k: Vec<usize>,
    #[arg(long = "grid-normalization", value_delimiter = ',')]
    grid_normalization: Vec<Normalization>,
    /// CSV output; the text table always goes to stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    overrides: Overrides,
    /// Region manifest; with --region-embeddings, detections come from
    /// classifying these regions.
    #[arg(long, requires = "region_embeddings")]
    manifest: Option<PathBuf>,
    #[arg(long)]
    region_embeddings: Option<PathBuf>,
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long)]
    metrics: Option<PathBuf>,
}

struct Ctx {
    config: Config,
    strict: bool,
    emit_stages: Option<PathBuf>,
    exec: Exec,
}

impl Overrides {
    fn apply(&self, c: &mut Config) {
        macro_rules! set {
            ($($f:ident => $g:ident),*) => {$(if let Some(v) = self.$f { c.$g = v; })*};
        }
        set!(k => k, alpha => alpha, theta => theta, scope => pos_scope, nms_iou => nms_iou,
             normalization => normalization, temperature => temperature);
        if self.max_dets.is_some() {
            c.max_dets = self.max_dets;
        }
        if self.nms_first {
            c.stage_order = StageOrder::NmsThenRescore;
        }
    }
}

impl Ctx {
    fn with(&self, o: &Overrides) -> Result<Config> {
        let mut c = self.config.clone();
        o.apply(&mut c);
        c.validate()?;
        Ok(c)
    }
}

impl Inputs {
    fn path(&self, given: &Option<PathBuf>, file: &str, what: &str) -> Result<PathBuf> {
        given
            .clone()
            .or_else(|| self.world.as_ref().map(|w| w.join(file)))
            .ok_or_else(|| Error::Validation(format!("missing --{what} (or --world)")))
    }

    fn detections(&self, strict: bool) -> Result<Vec<Detection>> {
        let path = self.path(&self.detections, synth::DETECTIONS_FILE, "detections")?;
        load_detections(&path, strict)
    }

    fn dataset(&self, strict: bool) -> Result<io::Dataset> {
        io::load_annotations(
            &self.path(&self.annotations, synth::ANNOTATIONS_FILE, "annotations")?,
            strict,
        )
    }

    fn split(&self, ds: &io::Dataset) -> Result<CategorySplit> {
        match &self.split {
            Some(p) => io::load_split(p),
            None => ds.split(),
        }
    }

    /// Everything the pipeline needs. Embedding tables and contexts are only
    /// required when `need_scenes` is set.
    fn pipeline(&self, strict: bool, need_scenes: bool) -> Result<PipelineInputs> {
        let dataset = self.dataset(strict)?;
        let split = self.split(&dataset)?;
        let (class_table, scene_table, contexts) = if need_scenes {
            let classes = io::load_embedding_table(
                &self.path(&self.classes, synth::CLASSES_FILE, "classes")?,
                false,
            )?;
            let scenes = io::load_embedding_table(
                &self.path(&self.scenes, synth::SCENES_FILE, "scenes")?,
                false,
            )?;
            let contexts = io::load_scene_contexts(&self.path(
                &self.contexts,
                synth::CONTEXTS_FILE,
                "contexts",
            )?)?;
            (
                classes,
                scenes,
                contexts.into_iter().map(|c| (c.image_id, c)).collect(),
            )
        } else {
            (
                ovpost::bim::EmbeddingTable::new(0),
                ovpost::bim::EmbeddingTable::new(0),
                BTreeMap::new(),
            )
        };
        Ok(PipelineInputs {
            ground_truths: dataset.ground_truths.clone(),
            split,
            category_names: dataset.category_names(),
            class_table,
            scene_table,
            contexts,
            detections: Vec::new(),
            regions: None,
        })
    }
}

fn load_detections(path: &Path, strict: bool) -> Result<Vec<Detection>> {
    let loaded = io::load_detections(path)?;
    eprintln!(
        "{}: {} detections accepted, {} rejected",
        path.display(),
        loaded.items.len(),
        loaded.rejected.len()
    );
    for r in &loaded.rejected {
        log::warn!("{r}");
    }
    loaded.into_checked(strict, "detections")
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let ctx = Ctx {
        config,
        strict: cli.strict,
        emit_stages: cli.emit_stages,
        exec: if cli.sequential {
            Exec::Sequential
        } else {
            Exec::Parallel
        },
    };
    match cli.command {
        Command::Rescore(a) => rescore(&ctx, a),
        Command::Suppress(a) => suppress(&ctx, a),
        Command::Nms(a) => nms(&ctx, a),
        Command::Sample(a) => sample(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Synth(a) => synth_world(&ctx, a),
        Command::Sweep(a) => sweep(&ctx, a),
        Command::Pipeline(a) => run_pipeline(&ctx, a),
    }
}

fn rescore(ctx: &Ctx, a: RescoreArgs) -> Result<()> {
    let config = ctx.with(&a.overrides)?;
    let inputs = a.inputs.pipeline(ctx.strict, config.alpha > 0.0)?;
    let dets = a.inputs.detections(ctx.strict)?;
    let (out, tables) = pipeline::rescore_batch(&config, &inputs, &dets, ctx.exec)?;
    if let Some(dir) = &ctx.emit_stages {
        pipeline::StageArtifacts {
            detections: vec![("rescore", out.clone())],
            rescore_tables: tables,
        }
        .save(dir)?;
    }
    io::save_detections(&a.out, &out)
}

fn suppress(ctx: &Ctx, a: SuppressArgs) -> Result<()> {
    let config = ctx.with(&a.overrides)?;
    let dataset = a.inputs.dataset(ctx.strict)?;
    let split = a.inputs.split(&dataset)?;
    let dets = a.inputs.detections(ctx.strict)?;
    let outcome = pos_batch(&dets, &split, config.theta, config.pos_scope, ctx.exec)?;
    eprintln!(
        "kept {} of {} detections ({} in categories outside the split)",
        outcome.detections.len(),
        dets.len(),
        outcome.unknown_category_detections
    );
    io::save_detections(&a.out, &outcome.detections)
}

fn nms(ctx: &Ctx, a: NmsArgs) -> Result<()> {
    let thr = a.iou.unwrap_or(ctx.config.nms_iou);
    let dets = load_detections(&a.detections, ctx.strict)?;
    let out = nms_batch(&dets, thr, ctx.exec)?;
    eprintln!("kept {} of {} detections", out.len(), dets.len());
    io::save_detections(&a.out, &out)
}

fn sample(ctx: &Ctx, a: SampleArgs) -> Result<()> {
    if a.bins == 0 {
        return Err(Error::Validation("--bins must be positive".into()));
    }
    let ds = io::load_annotations(&a.annotations, ctx.strict)?;
    let targets = ds
        .ground_truths
        .iter()
        .filter(|g| !g.crowd)
        .map(|g| {
            let img = ds.image(g.image_id).ok_or_else(|| {
                Error::Validation(format!("ground truth on unknown image {}", g.image_id))
            })?;
            Ok(ProbeTarget {
                image_id: g.image_id,
                image_w: img.width,
                image_h: img.height,
                gt: g.bbox,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let bins = IouRange::bins(0.1, 1.0, a.bins)?;
    let out = probe_bins(
        &targets,
        &bins,
        a.per_bin,
        a.kind,
        ctx.config.seed,
        &SamplerOptions::default(),
        ctx.exec,
    )?;
    for f in &out.failures {
        log::warn!(
            "target {} bin {}: {}",
            f.target_index,
            f.bin_index,
            f.message
        );
    }
    let regions: Vec<_> = out.samples().cloned().collect();
    eprintln!(
        "{} regions sampled, {} target/bin pairs infeasible",
        regions.len(),
        out.failures.len()
    );
    if ctx.strict && !out.failures.is_empty() {
        return Err(Error::InfeasibleSample {
            attempts: SamplerOptions::default().max_attempts,
            reason: format!(
                "{} target/bin pairs could not be sampled",
                out.failures.len()
            ),
        });
    }
    io::save_manifest(
        &a.out,
        &io::RegionManifest {
            version: 1,
            seed: ctx.config.seed,
            regions,
        },
    )
}

fn eval(ctx: &Ctx, a: EvalArgs) -> Result<()> {
    let config = ctx.with(&a.overrides)?;
    let ds = a.inputs.dataset(ctx.strict)?;
    let split = a.inputs.split(&ds)?;
    let dets = a.inputs.detections(ctx.strict)?;
    let opts = EvalOptions {
        iou_threshold: config.eval_iou,
        max_dets: config.max_dets,
    };
    let report = evaluate(&dets, &ds.ground_truths, &split, &opts, ctx.exec);
    let names = ds.category_names();
    report_empty_splits(&report);
    print!("{}", io::metrics_table(&report, &names));
    if let Some(p) = &a.metrics {
        io::save_metrics(p, &report, &names)?;
    }
    Ok(())
}

fn report_empty_splits(report: &ovpost::eval::EvalReport) {
    for s in report.empty_splits() {
        log::warn!("split `{s}` has no evaluable category; its mAP is reported as absent");
    }
}

fn synth_world(ctx: &Ctx, a: SynthArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(p) => SyntheticWorldSpec::from_toml_str(&io::read_text(p)?)?,
        None => SyntheticWorldSpec::default(),
    };
    spec.seed = ctx.config.seed;
    if let Some(n) = a.n_images {
        spec.n_images = n;
    }
    if let Some(r) = a.partial_fp_rate {
        spec.detector_noise.partial_fp_rate = r;
    }
    if let Some(r) = a.oversized_fp_rate {
        spec.detector_noise.oversized_fp_rate = r;
    }
    let world = synth::generate_synthetic_world(&spec, ctx.exec)?;
    world.save(&a.out)?;
    eprintln!(
        "{} images, {} ground truths, {} detections written to {}",
        world.dataset.images.len(),
        world.dataset.ground_truths.len(),
        world.detections.len(),
        a.out.display()
    );
    Ok(())
}

fn full_inputs(ctx: &Ctx, inputs: &Inputs, need_scenes: bool) -> Result<PipelineInputs> {
    let mut p = inputs.pipeline(ctx.strict, need_scenes)?;
    p.detections = inputs.detections(ctx.strict)?;
    Ok(p)
}

fn sweep(ctx: &Ctx, a: SweepArgs) -> Result<()> {
    let config = ctx.with(&a.overrides)?;
    let grid = SweepGrid {
        alpha: a.grid_alpha,
        theta: a.grid_theta,
        k: a.grid_k,
        normalization: a.grid_normalization,
    };
    let need_scenes = config.alpha > 0.0 || grid.alpha.iter().any(|&x| x > 0.0);
    let inputs = full_inputs(ctx, &a.inputs, need_scenes)?;
    let table = pipeline::sweep(&config, &grid, &inputs, ctx.exec);
    print!("{}", table.to_text());
    if let Some(p) = &a.out {
        io::write_bytes(p, table.to_csv().as_bytes())?;
    }
    if table.failures() > 0 {
        eprintln!(
            "{} of {} sweep cells failed",
            table.failures(),
            table.rows.len()
        );
    }
    Ok(())
}

fn run_pipeline(ctx: &Ctx, a: PipelineArgs) -> Result<()> {
    let config = ctx.with(&a.overrides)?;
    let from_regions = a.manifest.is_some();
    let need_scenes = config.alpha > 0.0 || from_regions;
    let mut inputs = if from_regions {
        a.inputs.pipeline(ctx.strict, true)?
    } else {
        full_inputs(ctx, &a.inputs, need_scenes)?
    };
    if let (Some(m), Some(e)) = (&a.manifest, &a.region_embeddings) {
        inputs.regions = Some(RegionInputs {
            manifest: io::load_manifest(m)?,
            embeddings: io::load_embedding_table(e, false)?,
        });
    }
    let out = pipeline::run_pipeline(&config, &inputs, ctx.exec, ctx.emit_stages.is_some())?;
    if let (Some(dir), Some(stages)) = (&ctx.emit_stages, &out.stages) {
        stages.save(dir)?;
    }
    if out.unknown_category_detections > 0 {
        eprintln!(
            "{} detections in categories outside the split passed POS untouched",
            out.unknown_category_detections
        );
    }
    io::save_detections(&a.out, &out.detections)?;
    report_empty_splits(&out.report);
    print!("{}", io::metrics_table(&out.report, &inputs.category_names));
    if let Some(p) = &a.metrics {
        io::save_metrics(p, &out.report, &inputs.category_names)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
