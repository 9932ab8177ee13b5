//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line for
//! each and exits non-zero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use ovpost::bim::{
    blend_scores, normalize_table, rescore_coefficients, rescore_detections, BackgroundEmbedding,
    ClassBank, EmbeddingTable, Normalization, RescoreTable, SceneContext,
};
use ovpost::config::Config;
use ovpost::eval::{evaluate, EvalOptions, GroundTruth};
use ovpost::exec::Exec;
use ovpost::geometry::{iou, oar, BBox};
use ovpost::io;
use ovpost::pipeline::{run_pipeline, sweep, PipelineInputs, SweepGrid};
use ovpost::region_sampler::{probe_bins, IouRange, ProbeTarget, SampleKind, SamplerOptions};
use ovpost::rng::SampleRng;
use ovpost::suppression::{pos_indices, CategorySplit, Detection, PosScope};
use ovpost::synth::{generate_synthetic_world, DetectorNoise, FpTarget, SyntheticWorldSpec};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn pos_oracle() -> Check {
    let start = Instant::now();
    let thetas = [0.3, 0.5, 0.7, 0.9, 1.0];
    let mut kept_total = 0;
    for seed in 0..1000u64 {
        let mut rng = SampleRng::new(seed);
        let n = 1 + rng.below(6);
        let dets: Vec<Detection> = (0..n)
            .map(|_| {
                let b = random_int_box(&mut rng, 40);
                // coarse scores so ties occur
                let score = (1 + rng.below(5)) as f64 / 5.0;
                Detection::new(1, 7, bbox(b), score).unwrap()
            })
            .collect();
        let theta = thetas[rng.below(thetas.len())];
        let mut got = pos_indices(&dets, theta).map_err(|e| e.to_string())?;
        let mut want = literal_pos(&dets, theta);
        kept_total += want.len();
        got.sort_unstable();
        want.sort_unstable();
        ensure(got == want, || {
            format!("seed {seed}: kept {got:?}, reference kept {want:?}")
        })?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "1000 seeds exact, {kept_total} boxes kept in total, {elapsed:.2?}"
    ))
}

fn geometry_oracle() -> Check {
    let mut rng = SampleRng::new(2024);
    let rel = |a: f64, b: f64| if b == 0.0 { a.abs() } else { (a - b).abs() / b };
    let mut worst: f64 = 0.0;
    for i in 0..10_000 {
        let (c1, c2) = (
            random_int_box(&mut rng, 1000),
            random_int_box(&mut rng, 1000),
        );
        let (b1, b2) = (bbox(c1), bbox(c2));
        let got = [
            iou(&b1, &b2).unwrap(),
            oar(&b1, &b2).unwrap(),
            oar(&b2, &b1).unwrap(),
        ];
        let want = [pixel_iou(c1, c2), pixel_oar(c1, c2), pixel_oar(c2, c1)];
        for (g, w) in got.iter().zip(want) {
            let e = rel(*g, w);
            worst = worst.max(e);
            ensure(e <= 0.02, || {
                format!("pair {i} {c1:?} {c2:?}: {g} vs pixel count {w}")
            })?;
        }
    }
    // full raster on small boxes
    for i in 0..500 {
        let (c1, c2) = (random_int_box(&mut rng, 60), random_int_box(&mut rng, 60));
        let (a1, _, inter) = raster_counts(c1, c2);
        let got = oar(&bbox(c1), &bbox(c2)).unwrap();
        let want = inter as f64 / a1 as f64;
        ensure(rel(got, want) <= 0.02, || {
            format!("raster pair {i}: {got} vs {want}")
        })?;
    }
    let inner = bbox([100, 100, 200, 150]);
    let outer = bbox([50, 50, 450, 350]);
    let fwd = oar(&inner, &outer).unwrap();
    let back = oar(&outer, &inner).unwrap();
    let ratio = inner.area() / outer.area();
    ensure(fwd == 1.0 && (back - ratio).abs() < 1e-15, || {
        format!("containment: oar(inner, outer) = {fwd}, oar(outer, inner) = {back}, expected 1 and {ratio}")
    })?;
    Ok(format!(
        "10000 pairs, max relative error {worst:.2e}; containment gives 1.0 vs {back:.5}"
    ))
}

fn region_sampler() -> Check {
    let (w, h) = (640.0, 480.0);
    let mut rng = SampleRng::new(77);
    let targets: Vec<ProbeTarget> = (0..100)
        .map(|i| {
            let bw = rng.uniform_in(20.0, 120.0);
            let bh = rng.uniform_in(20.0, 100.0);
            let x = rng.uniform_in(0.0, w - bw);
            let y = rng.uniform_in(0.0, h - bh);
            ProbeTarget {
                image_id: i,
                image_w: w,
                image_h: h,
                gt: BBox::new(x, y, x + bw, y + bh).unwrap(),
            }
        })
        .collect();
    let bins = IouRange::bins(0.1, 1.0, 9).map_err(|e| e.to_string())?;
    let mut checked = 0usize;
    for kind in [SampleKind::Oversized, SampleKind::Partial] {
        let out = probe_bins(
            &targets,
            &bins,
            100,
            kind,
            5,
            &SamplerOptions::default(),
            Exec::Parallel,
        )
        .map_err(|e| e.to_string())?;
        ensure(out.failures.is_empty(), || {
            format!(
                "{kind:?}: {} infeasible target/bin pairs, first: {}",
                out.failures.len(),
                out.failures[0].message
            )
        })?;
        for (bin, samples) in &out.bins {
            ensure(samples.len() == 10_000, || {
                format!("{kind:?} bin {bin:?}: {} samples", samples.len())
            })?;
            for s in samples {
                let gt = BBox::new(s.gt_xyxy[0], s.gt_xyxy[1], s.gt_xyxy[2], s.gt_xyxy[3]).unwrap();
                let r = BBox::new(
                    s.region_xyxy[0],
                    s.region_xyxy[1],
                    s.region_xyxy[2],
                    s.region_xyxy[3],
                )
                .unwrap();
                let v = iou(&gt, &r).unwrap();
                ensure(v >= bin.lo() - 1e-9 && v <= bin.hi() + 1e-9, || {
                    format!("{kind:?} {}: IoU {v} outside {bin:?}", s.region_id)
                })?;
                let contained = match kind {
                    SampleKind::Oversized => {
                        r.x_min <= gt.x_min
                            && r.y_min <= gt.y_min
                            && r.x_max >= gt.x_max
                            && r.y_max >= gt.y_max
                            && r.x_min >= 0.0
                            && r.y_min >= 0.0
                            && r.x_max <= w
                            && r.y_max <= h
                    }
                    SampleKind::Partial => {
                        r.x_min >= gt.x_min
                            && r.y_min >= gt.y_min
                            && r.x_max <= gt.x_max
                            && r.y_max <= gt.y_max
                    }
                };
                ensure(contained, || {
                    format!("{kind:?} {}: containment broken", s.region_id)
                })?;
                checked += 1;
            }
        }
    }
    Ok(format!(
        "{checked} samples across 9 bins, all inside their bin, containment exact"
    ))
}

fn rescore_math() -> Check {
    let grid: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
    for &s in &grid {
        for &r in &grid {
            ensure(blend_scores(s, r, 0.0).unwrap() == s, || {
                format!("alpha 0 at s={s} r={r}")
            })?;
            ensure(blend_scores(s, r, 1.0).unwrap() == r, || {
                format!("alpha 1 at s={s} r={r}")
            })?;
        }
    }
    for alpha in [0.1, 0.2, 0.5, 0.8] {
        for i in 0..100 {
            for j in 1..100 {
                let v = |s, r| blend_scores(s, r, alpha).unwrap();
                let (fixed, lo, hi) = (grid[i], grid[j - 1], grid[j]);
                ensure(v(hi, fixed) >= v(lo, fixed), || {
                    format!("not monotone in s at alpha {alpha}, r {fixed}")
                })?;
                ensure(v(fixed, hi) >= v(fixed, lo), || {
                    format!("not monotone in r at alpha {alpha}, s {fixed}")
                })?;
            }
        }
    }

    let norms = [
        Normalization::Zscore,
        Normalization::Minmax,
        Normalization::None,
    ];
    for t in 0..1000u64 {
        let mut rng = SampleRng::new(10_000 + t);
        let dim = 4 + rng.below(60);
        let n = 2 + rng.below(30);
        let classes: Vec<(u64, Vec<f64>)> = (0..n)
            .map(|i| (i as u64 + 1, gaussian_vec(&mut rng, dim)))
            .collect();
        let bg_raw = gaussian_vec(&mut rng, dim);
        let nb = bg_raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        let bg = BackgroundEmbedding {
            vector: bg_raw.iter().map(|x| x / nb).collect(),
            source_scenes: vec!["s".into()],
            k: 1,
        };
        let bank = ClassBank::new(classes.clone()).map_err(|e| e.to_string())?;
        let table =
            rescore_coefficients(&bank, &bg, norms[t as usize % 3]).map_err(|e| e.to_string())?;
        let sims: Vec<(f64, f64)> = classes
            .iter()
            .map(|(id, v)| (cosine(v, &bg_raw), table.coefficient(*id).unwrap()))
            .collect();
        for a in &sims {
            for b in &sims {
                if a.0 < b.0 {
                    ensure(a.1 <= b.1, || {
                        format!(
                            "table {t}: similarity order {} < {} but r {} > {}",
                            a.0, b.0, a.1, b.1
                        )
                    })?;
                }
                if a.0 + 1e-9 < b.0 {
                    ensure(a.1 < b.1, || format!("table {t}: strict order lost"))?;
                }
            }
        }
    }

    let mut rng = SampleRng::new(4);
    let mut regions = 0usize;
    for image in 0..200u64 {
        let n_cls = 2 + rng.below(10);
        let r = rng.uniform_in(0.01, 1.0);
        let alpha = rng.uniform_in(0.05, 0.95);
        let table = RescoreTable::uniform(1..=n_cls as u64, r);
        let mut all_dets = Vec::new();
        for region in 0..(1 + rng.below(8)) {
            let b = BBox::new(region as f64, 0.0, region as f64 + 10.0, 10.0).unwrap();
            let dets: Vec<Detection> = (1..=n_cls as u64)
                .map(|c| Detection::new(image, c, b, rng.uniform_in(0.001, 1.0)).unwrap())
                .collect();
            let out = rescore_detections(&dets, &table, alpha).map_err(|e| e.to_string())?;
            let argmax = |d: &[Detection]| {
                (0..d.len()).fold(0, |m, i| if d[i].score > d[m].score { i } else { m })
            };
            ensure(argmax(&dets) == argmax(&out), || {
                format!("image {image} region {region}: argmax changed")
            })?;
            all_dets.extend(dets);
            regions += 1;
        }
        let out = rescore_detections(&all_dets, &table, alpha).map_err(|e| e.to_string())?;
        let best = |d: &[Detection]| {
            (0..d.len()).fold(0, |m, i| if d[i].score > d[m].score { i } else { m })
        };
        ensure(best(&all_dets) == best(&out), || {
            format!("image {image}: per-image argmax changed")
        })?;
    }
    Ok(format!(
        "endpoints exact, monotone on 100x100 grid, order kept on 1000 tables, argmax kept for {regions} regions"
    ))
}

fn evaluator() -> Check {
    let mut compared = 0usize;
    for inst in 0..500u64 {
        let mut rng = SampleRng::new(90_000 + inst);
        let n_img = 1 + rng.below(5) as u64;
        let n_cat = 1 + rng.below(5) as u64;
        let cut = rng.below(n_cat as usize + 1) as u64;
        let split = CategorySplit::new(1..=cut, cut + 1..=n_cat).unwrap();
        let mut ref_gts = Vec::new();
        for img in 1..=n_img {
            for _ in 0..rng.below(4) {
                let c = random_int_box(&mut rng, 30);
                ref_gts.push(RefGt {
                    image: img,
                    category: 1 + rng.below(n_cat as usize) as u64,
                    bbox: bbox(c),
                    crowd: rng.bernoulli(0.15),
                });
            }
        }
        let n_det = rng.below(11);
        let dets: Vec<Detection> = (0..n_det)
            .map(|_| {
                let score = (1 + rng.below(10)) as f64 / 10.0;
                if !ref_gts.is_empty() && rng.bernoulli(0.6) {
                    let g = ref_gts[rng.below(ref_gts.len())];
                    let j = |rng: &mut SampleRng| rng.below(5) as f64 - 2.0;
                    let b = &g.bbox;
                    let (x0, y0) = (b.x_min + j(&mut rng), b.y_min + j(&mut rng));
                    let (x1, y1) = (
                        (b.x_max + j(&mut rng)).max(x0 + 1.0),
                        (b.y_max + j(&mut rng)).max(y0 + 1.0),
                    );
                    let cat = if rng.bernoulli(0.8) {
                        g.category
                    } else {
                        1 + rng.below(n_cat as usize) as u64
                    };
                    Detection::new(g.image, cat, BBox::new(x0, y0, x1, y1).unwrap(), score).unwrap()
                } else {
                    let img = 1 + rng.below(n_img as usize) as u64;
                    let cat = 1 + rng.below(n_cat as usize) as u64;
                    Detection::new(img, cat, bbox(random_int_box(&mut rng, 30)), score).unwrap()
                }
            })
            .collect();
        let gts: Vec<GroundTruth> = ref_gts
            .iter()
            .map(|g| GroundTruth::new(g.image, g.category, g.bbox, g.crowd).unwrap())
            .collect();
        let report = evaluate(
            &dets,
            &gts,
            &split,
            &EvalOptions::default(),
            Exec::Sequential,
        );
        let mut ap_all = Vec::new();
        let (mut ap_base, mut ap_novel) = (Vec::new(), Vec::new());
        for cat in 1..=n_cat {
            let want = reference_ap(&dets, &ref_gts, cat, 0.5);
            let got = report
                .categories
                .iter()
                .find(|c| c.category_id == cat)
                .and_then(|c| c.ap);
            ensure(got == want, || {
                format!("instance {inst} category {cat}: AP {got:?}, reference {want:?}")
            })?;
            if let Some(v) = want {
                ap_all.push(v);
                if cat <= cut {
                    ap_base.push(v)
                } else {
                    ap_novel.push(v)
                }
                compared += 1;
            }
        }
        let maps = (report.map_base, report.map_novel, report.map_all);
        let want = (mean(&ap_base), mean(&ap_novel), mean(&ap_all));
        ensure(maps == want, || {
            format!("instance {inst}: mAP {maps:?}, reference {want:?}")
        })?;

        // perfect detector on the same instance
        let perfect: Vec<Detection> = ref_gts
            .iter()
            .filter(|g| !g.crowd)
            .map(|g| Detection::new(g.image, g.category, g.bbox, 1.0).unwrap())
            .collect();
        if !perfect.is_empty() {
            let r = evaluate(
                &perfect,
                &gts,
                &split,
                &EvalOptions::default(),
                Exec::Sequential,
            );
            ensure(r.map_all == Some(1.0), || {
                format!("instance {inst}: perfect detections give {:?}", r.map_all)
            })?;
        }
    }
    for seed in 0..5 {
        let spec = SyntheticWorldSpec {
            n_images: 40,
            seed,
            detector_noise: DetectorNoise::noiseless(),
            ..Default::default()
        };
        let w = generate_synthetic_world(&spec, Exec::Parallel).map_err(|e| e.to_string())?;
        let r = evaluate(
            &w.detections,
            &w.dataset.ground_truths,
            &w.split,
            &EvalOptions::default(),
            Exec::Parallel,
        );
        ensure(r.map_all == Some(1.0), || {
            format!("noiseless world {seed}: mAP_all {:?}", r.map_all)
        })?;
    }
    Ok(format!(
        "500 instances, {compared} category APs exact; perfect worlds give mAP_all = 1.0"
    ))
}

fn end_to_end() -> Check {
    let start = Instant::now();
    let cfg = Config::default();
    ensure((cfg.k, cfg.alpha, cfg.theta) == (5, 0.2, 0.5), || {
        "config defaults changed".into()
    })?;
    let no_pos = Config {
        pos_scope: PosScope::Disabled,
        ..cfg.clone()
    };
    let mut margins = Vec::new();
    for seed in 0..20 {
        let spec = SyntheticWorldSpec {
            n_images: 100,
            seed,
            fp_target: FpTarget::Novel,
            detector_noise: DetectorNoise {
                partial_fp_rate: 0.5,
                ..Default::default()
            },
            ..Default::default()
        };
        let world = generate_synthetic_world(&spec, Exec::Parallel).map_err(|e| e.to_string())?;
        let inputs = PipelineInputs::from_world(&world);
        let with = run_pipeline(&cfg, &inputs, Exec::Parallel, false).map_err(|e| e.to_string())?;
        let without =
            run_pipeline(&no_pos, &inputs, Exec::Parallel, false).map_err(|e| e.to_string())?;
        let (a, b) = (
            with.report.map_novel.unwrap(),
            without.report.map_novel.unwrap(),
        );
        ensure(a > b, || {
            format!("seed {seed}: mAP_novel {a:.4} with POS, {b:.4} without")
        })?;
        margins.push(a - b);
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || {
        format!("took {elapsed:?}")
    })?;
    let min = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let avg = margins.iter().sum::<f64>() / margins.len() as f64;
    Ok(format!(
        "POS wins on 20/20 seeds, mAP_novel gain mean {:.1} min {:.1} points, {elapsed:.2?}",
        100.0 * avg,
        100.0 * min
    ))
}

fn ablation_sweep() -> Check {
    let spec = SyntheticWorldSpec {
        n_images: 60,
        seed: 21,
        detector_noise: DetectorNoise {
            partial_fp_rate: 0.5,
            ..Default::default()
        },
        ..Default::default()
    };
    let cfg = Config::default();
    let thetas = vec![1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4];
    let alphas = vec![0.0, 0.1, 0.2, 0.3, 0.4];
    let run = |exec: Exec| -> Result<(String, String, usize, usize), String> {
        let world = generate_synthetic_world(&spec, exec).map_err(|e| e.to_string())?;
        let inputs = PipelineInputs::from_world(&world);
        let theta = sweep(
            &cfg,
            &SweepGrid {
                theta: thetas.clone(),
                ..Default::default()
            },
            &inputs,
            exec,
        );
        let alpha = sweep(
            &cfg,
            &SweepGrid {
                alpha: alphas.clone(),
                ..Default::default()
            },
            &inputs,
            exec,
        );
        for (t, name, values) in [(&theta, "theta", &thetas), (&alpha, "alpha", &alphas)] {
            ensure(
                t.header() == [name, "map50_novel", "map50_base", "map50_all", "error"],
                || format!("{name} header {:?}", t.header()),
            )?;
            ensure(t.failures() == 0, || {
                format!("{name}: {} failed cells", t.failures())
            })?;
            let got: Vec<f64> = t
                .rows
                .iter()
                .map(|r| if name == "theta" { r.theta } else { r.alpha })
                .collect();
            ensure(&got == values, || format!("{name} rows {got:?}"))?;
            ensure(
                t.rows
                    .iter()
                    .all(|r| r.map50_novel.is_some() && r.map50_all.is_some()),
                || format!("{name}: missing mAP values"),
            )?;
        }
        Ok((
            theta.to_csv(),
            alpha.to_csv(),
            theta.rows.len(),
            alpha.rows.len(),
        ))
    };
    let a = run(Exec::Parallel)?;
    let b = run(Exec::Sequential)?;
    ensure(a == b, || "sweep output differs between runs".into())?;
    Ok(format!(
        "theta sweep {} rows, alpha sweep {} rows, byte-identical across runs",
        a.2, a.3
    ))
}

fn random_name(rng: &mut SampleRng, i: usize) -> String {
    const CHARS: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 _-.,/()'";
    let len = 1 + rng.below(16);
    let s: String = (0..len)
        .map(|_| CHARS[rng.below(CHARS.len())] as char)
        .collect();
    format!("{}#{i}", s.trim())
}

fn format_roundtrips() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name);
    let mut bytes = 0usize;
    for t in 0..100u64 {
        let mut rng = SampleRng::new(500 + t);
        let dim = 1 + rng.below(32);
        let mut table = EmbeddingTable::new(dim);
        for i in 0..1 + rng.below(20) {
            let mut v = gaussian_vec(&mut rng, dim);
            v[0] += 1e-3;
            table.insert(random_name(&mut rng, i), v).unwrap();
        }
        if rng.bernoulli(0.5) {
            table = normalize_table(&table).map_err(|e| e.to_string())?;
        }

        for (ext, name) in [("embtab", "text"), ("bin", "binary")] {
            let (f1, f2) = (p(&format!("a.{ext}")), p(&format!("b.{ext}")));
            io::save_embedding_table(&f1, &table).map_err(|e| e.to_string())?;
            let loaded = io::load_embedding_table(&f1, false)
                .map_err(|e| format!("table {t} {name}: {e}"))?;
            io::save_embedding_table(&f2, &loaded).map_err(|e| e.to_string())?;
            let (b1, b2) = (std::fs::read(&f1).unwrap(), std::fs::read(&f2).unwrap());
            ensure(b1 == b2, || {
                format!("table {t}: {name} save/load/save differs")
            })?;
            if name == "text" {
                let same = table.iter().zip(loaded.iter()).all(|((n1, v1), (n2, v2))| {
                    n1 == n2 && v1.iter().zip(v2).all(|(a, b)| a.to_bits() == b.to_bits())
                });
                ensure(same, || format!("table {t}: text load changed vectors"))?;
            }
            bytes += b1.len();
        }

        let contexts: Vec<SceneContext> = (0..1 + rng.below(10))
            .map(|i| {
                let n = 1 + rng.below(8);
                let mut w: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
                let total: f64 = w.iter().sum::<f64>() * rng.uniform_in(1.0, 2.0);
                w.iter_mut().for_each(|x| *x /= total);
                w.sort_by(|a, b| b.total_cmp(a));
                let scenes = w
                    .into_iter()
                    .enumerate()
                    .map(|(j, x)| (random_name(&mut rng, j), x))
                    .collect();
                SceneContext::new(i as u64 * 3 + 1, scenes).unwrap()
            })
            .collect();
        io::save_scene_contexts(&p("a.ctx"), &contexts).map_err(|e| e.to_string())?;
        let back =
            io::load_scene_contexts(&p("a.ctx")).map_err(|e| format!("contexts {t}: {e}"))?;
        io::save_scene_contexts(&p("b.ctx"), &back).map_err(|e| e.to_string())?;
        ensure(
            std::fs::read(p("a.ctx")).unwrap() == std::fs::read(p("b.ctx")).unwrap(),
            || format!("contexts {t}: save/load/save differs"),
        )?;

        let dets: Vec<Detection> = (0..rng.below(30))
            .map(|_| {
                let x = rng.uniform_in(0.0, 600.0);
                let y = rng.uniform_in(0.0, 400.0);
                let b = BBox::new(
                    x,
                    y,
                    x + rng.uniform_in(0.5, 300.0),
                    y + rng.uniform_in(0.5, 300.0),
                )
                .unwrap();
                Detection::new(
                    1 + rng.below(50) as u64,
                    1 + rng.below(90) as u64,
                    b,
                    rng.uniform(),
                )
                .unwrap()
            })
            .collect();
        io::save_detections(&p("a.json"), &dets).map_err(|e| e.to_string())?;
        let back = io::load_detections(&p("a.json")).map_err(|e| e.to_string())?;
        ensure(back.rejected.is_empty(), || {
            format!("detections {t}: rejected records on reload")
        })?;
        io::save_detections(&p("b.json"), &back.items).map_err(|e| e.to_string())?;
        let (b1, b2) = (
            std::fs::read(p("a.json")).unwrap(),
            std::fs::read(p("b.json")).unwrap(),
        );
        ensure(b1 == b2, || {
            format!("detections {t}: save/load/save differs")
        })?;
        bytes += b1.len();
    }
    Ok(format!(
        "100 random tables, contexts and detection files byte-identical ({bytes} bytes compared)"
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("POS oracle equivalence", pos_oracle),
        ("geometry pixel oracle", geometry_oracle),
        ("region sampler bins and containment", region_sampler),
        ("re-score math", rescore_math),
        ("evaluator vs brute-force AP", evaluator),
        ("end-to-end POS gain on novel categories", end_to_end),
        ("ablation sweep schema and determinism", ablation_sweep),
        ("format round-trips", format_roundtrips),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let (tag, detail) = match result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        let line = format!(
            "[{tag}] criterion {}: {name} ({detail}) [{:.2?}]",
            i + 1,
            start.elapsed()
        );
        println!("{line}");
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
