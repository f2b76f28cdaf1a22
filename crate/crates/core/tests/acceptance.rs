//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vistaloop::config::MIN_CROP_AREA;
use vistaloop::control::{DecisionKind, LoopStatus};
use vistaloop::encoder::{identity_code, FeatureTag, FeatureVector, ObjectEmbedding};
use vistaloop::evaluator::{assess_object, crop_object_batch, evaluate, index_consistency, Crop, ObjectBatch};
use vistaloop::geometry::Intrinsics;
use vistaloop::heads::{heads, ProjectionHeads};
use vistaloop::image::{IdBuffer, Mask, RgbImage};
use vistaloop::metrics::compute_metrics;
use vistaloop::refine::{composite, dilate, refine_object, MaskSequence, RgbaLayer};
use vistaloop::scenario_file::load_scenario;
use vistaloop::scenarios::{object_fault, random_scenario, RandomOptions};
use vistaloop::vocab::Attribute;
use vistaloop::{
    build_conditions, project_box, render_scene, route, run_closed_loop, BoxPose3D, Camera, FaultKind, Frame,
    LoopConfig, MultiviewVideo, Scenario,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn bundled(name: &str) -> Scenario {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name);
    load_scenario(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn clean_demo_loop() -> Outcome {
    let scenario = bundled("demo.json");
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| e.to_string())?;
    let start = Instant::now();
    let (_video, log, metrics) = pool
        .install(|| {
            let (video, log) = run_closed_loop(&scenario, &LoopConfig::default(), heads())?;
            let metrics = compute_metrics(&video, &scenario, heads())?;
            Ok::<_, vistaloop::Error>((video, log, metrics))
        })
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    ensure(log.iterations.len() == 1, || {
        format!("{} iterations", log.iterations.len())
    })?;
    let it = &log.iterations[0];
    ensure(it.decision.kind == DecisionKind::Pass, || {
        format!("decision {:?}", it.decision.kind)
    })?;
    ensure(it.report.s_macro >= 0.9, || format!("s_macro {}", it.report.s_macro))?;
    let min_obj = scenario
        .objects
        .iter()
        .map(|o| it.report.s_obj(o.index).unwrap_or(f64::NEG_INFINITY))
        .fold(f64::INFINITY, f64::min);
    ensure(min_obj >= 0.8, || format!("min s_obj {min_obj}"))?;
    ensure(metrics.layout_iou_mean >= 0.9, || {
        format!("layout IoU {}", metrics.layout_iou_mean)
    })?;
    ensure(elapsed < 10.0, || format!("runtime {elapsed:.2} s"))?;
    Ok(format!(
        "1 iteration, s_macro {:.3}, min s_obj {min_obj:.3}, layout IoU {:.3}, {elapsed:.2} s on one thread",
        it.report.s_macro, metrics.layout_iou_mean
    ))
}

fn regeneration_loop() -> Outcome {
    let scenario = bundled("demo_weather_tint.json");
    let config = LoopConfig {
        alpha_emphasis: 2.0,
        ..LoopConfig::default()
    };
    let (_, log) = run_closed_loop(&scenario, &config, heads()).map_err(|e| e.to_string())?;
    ensure(log.iterations.len() == 2, || {
        format!("{} iterations", log.iterations.len())
    })?;
    let first = &log.iterations[0].decision;
    ensure(
        first.kind == DecisionKind::Regenerate && first.flagged_attributes == [Attribute::Weather],
        || format!("iteration 1 decision {first:?}"),
    )?;
    let weights = log.weight_history(Attribute::Weather);
    ensure(weights == [1.0, 2.0], || format!("weather weights {weights:?}"))?;
    let second = &log.iterations[1].decision;
    ensure(second.kind == DecisionKind::Pass, || {
        format!("iteration 2 decision {second:?}")
    })?;
    ensure(log.status == LoopStatus::Passed, || format!("status {:?}", log.status))?;
    Ok(format!("regenerate {{weather}} then pass, weather weights {weights:?}"))
}

fn refinement_loop() -> Outcome {
    let config = LoopConfig::default();
    let opts = RandomOptions {
        moving: false,
        separated: true,
        framed: true,
        ..RandomOptions::default()
    };
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let mut min_gain = f64::INFINITY;
    let mut min_post = f64::INFINITY;
    let mut problems = Vec::new();
    for seed in 0..20u64 {
        let mut scenario = random_scenario(seed, &opts);
        let target = (seed % 5) as u32;
        scenario
            .fault_plan
            .push(object_fault(FaultKind::WrongColor, target, 1.0));
        let conditions = build_conditions(&scenario).map_err(|e| e.to_string())?;
        let video = render_scene(
            &conditions,
            &scenario.rig,
            scenario.num_frames,
            config.seed,
            &scenario.fault_plan,
            1,
        );
        let report = evaluate(&video, &conditions, &scenario.rig, config.lambda, heads()).map_err(|e| e.to_string())?;
        let decision = route(&report, &config);
        let flagged: BTreeSet<u32> = decision.flagged_objects.iter().copied().collect();
        tp += usize::from(flagged.contains(&target));
        fn_ += usize::from(!flagged.contains(&target));
        fp += flagged.iter().filter(|i| **i != target).count();
        if decision.kind != DecisionKind::Refine || flagged.len() != 1 || !flagged.contains(&target) {
            problems.push(format!(
                "seed {seed}: decision {:?} {:?}",
                decision.kind, decision.flagged_objects
            ));
            continue;
        }

        let (refined, refinement) =
            refine_object(&video, &conditions, &scenario.rig, target, config.feather).map_err(|e| e.to_string())?;
        let after =
            evaluate(&refined, &conditions, &scenario.rig, config.lambda, heads()).map_err(|e| e.to_string())?;
        let pre = report.s_obj(target).unwrap_or(f64::NAN);
        let post = after.s_obj(target).unwrap_or(f64::NAN);
        min_gain = min_gain.min(post - pre);
        min_post = min_post.min(post);
        if !(post - pre >= 0.2 && post > config.gamma_o) {
            problems.push(format!("seed {seed}: s_obj {pre:.3} -> {post:.3}"));
        }

        // blending reaches `feather` pixels past the compositing mask
        for (k, (a, b)) in video.frames.iter().zip(&refined.frames).enumerate() {
            let key = (a.view, a.frame_index);
            let reach = refinement.masks.masks.get(&key).map(|m| dilate(m, config.feather));
            let w = a.pixels.width;
            for (p, (pa, pb)) in a.pixels.data.chunks(3).zip(b.pixels.data.chunks(3)).enumerate() {
                let inside = reach.as_ref().is_some_and(|m| m.get(p as u32 % w, p as u32 / w));
                if !inside && pa != pb {
                    problems.push(format!(
                        "seed {seed}: frame {k} pixel {p} changed outside the dilated mask"
                    ));
                    break;
                }
            }
        }
    }
    let precision = tp as f64 / (tp + fp).max(1) as f64;
    let recall = tp as f64 / (tp + fn_) as f64;
    let summary =
        format!("precision {precision:.2}, recall {recall:.2}, min gain {min_gain:.3}, min post s_obj {min_post:.3}");
    if problems.is_empty() {
        Ok(format!("20 scenarios, {summary}, outside-mask pixels byte-identical"))
    } else {
        Err(format!("{summary}; {}", problems.join("; ")))
    }
}

fn oracle_luma(p: &[u8]) -> f64 {
    0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])
}

fn oracle_sharpness(img: &RgbImage) -> f64 {
    let (w, h) = (img.width as usize, img.height as usize);
    if w < 3 || h < 3 {
        return 0.0;
    }
    let l = |x: usize, y: usize| oracle_luma(&img.data[3 * (y * w + x)..3 * (y * w + x) + 3]);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut n = 0.0;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let v = l(x - 1, y) + l(x + 1, y) + l(x, y - 1) + l(x, y + 1) - 4.0 * l(x, y);
            sum += v;
            sum_sq += v * v;
            n += 1.0;
        }
    }
    let mean = sum / n;
    (sum_sq / n - mean * mean).max(0.0)
}

fn oracle_score(batch: &ObjectBatch, appearance: &[f64], embedding: &[f64], lambda: f64, h: &ProjectionHeads) -> f64 {
    let project = |m: &nalgebra::DMatrix<f64>, x: &[f64]| -> Vec<f64> {
        (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * x[j]).sum())
            .collect()
    };
    let a = project(&h.visual, appearance);
    let b = project(&h.embedding, embedding);
    let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let cos = if na * nb > 0.0 { dot / (na * nb) } else { 0.0 };
    let raw: Vec<f64> = batch.crops.iter().map(|c| oracle_sharpness(&c.image)).collect();
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let q = if hi == lo {
        1.0
    } else {
        raw.iter().map(|r| (r - lo) / (hi - lo)).sum::<f64>() / raw.len() as f64
    };
    lambda * cos + (1.0 - lambda) * q
}

fn random_image(rng: &mut ChaCha8Rng, w: u32, h: u32) -> RgbImage {
    let base = [rng.gen::<u8>(), rng.gen::<u8>(), rng.gen::<u8>()];
    let spread = rng.gen_range(0..=255u32);
    RgbImage::from_fn(w, h, |_, _| {
        base.map(|c| (u32::from(c) + rng.gen_range(0..=spread)).min(255) as u8)
    })
}

fn score_oracle() -> Outcome {
    let h = heads();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let lambda = rng.gen_range(0.01..0.99);
        let n = rng.gen_range(1..=4);
        let mut crops = Vec::new();
        for c in 0..n {
            let (w, hh) = (rng.gen_range(2..14), rng.gen_range(2..14));
            let image = if c > 0 && rng.gen_bool(0.2) {
                crops.last().map(|p: &Crop| p.image.clone()).expect("previous crop")
            } else {
                random_image(&mut rng, w, hh)
            };
            crops.push(Crop {
                view: c,
                frame: 0,
                region: (0, 0, image.width, image.height),
                image,
            });
        }
        let batch = ObjectBatch { object_index: 0, crops };
        let values: Vec<f64> = (0..h.embedding.ncols()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let embedding = ObjectEmbedding {
            object_index: 0,
            vector: FeatureVector::new(values.clone(), FeatureTag::Fused),
            identity_code: identity_code(0),
        };
        let score = assess_object(&batch, &embedding, lambda, h)
            .map_err(|e| e.to_string())?
            .ok_or("empty batch")?;
        let appearance = vistaloop::evaluator::batch_appearance(&batch).map_err(|e| e.to_string())?;
        let expected = oracle_score(&batch, &appearance.values, &values, lambda, h);
        let err = (score.s_obj - expected).abs();
        worst = worst.max(err);
        ensure(err <= 1e-9, || {
            format!("tuple {k}: s_obj {} vs oracle {expected}", score.s_obj)
        })?;
        ensure((-lambda..=1.0).contains(&score.s_obj), || {
            format!("tuple {k}: s_obj {} outside [-λ, 1]", score.s_obj)
        })?;
    }
    Ok(format!("1000 tuples, max deviation {worst:.2e}, all within [-λ, 1]"))
}

fn oracle_corners(b: &BoxPose3D) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    for sx in [-0.5, 0.5] {
        for sy in [-0.5, 0.5] {
            for sz in [-0.5, 0.5] {
                let (lx, ly) = (sx * b.size[0], sy * b.size[1]);
                out.push([
                    b.center[0] + lx * b.yaw.cos() - ly * b.yaw.sin(),
                    b.center[1] + lx * b.yaw.sin() + ly * b.yaw.cos(),
                    b.center[2] + sz * b.size[2],
                ]);
            }
        }
    }
    out
}

/// Bounding rectangle of the projected box through the 3×4 matrix `K [R | t]`,
/// with edges crossing the near plane cut at the plane.
fn oracle_projection(b: &BoxPose3D, cam: &Camera) -> Option<[f64; 4]> {
    let k = &cam.intrinsics;
    let kmat = nalgebra::Matrix3::new(k.fx, 0.0, k.cx, 0.0, k.fy, k.cy, 0.0, 0.0, 1.0);
    let mut rt = nalgebra::Matrix3x4::zeros();
    rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&cam.rotation);
    rt.set_column(3, &cam.translation);
    let p = kmat * rt;
    let hom = |x: [f64; 3]| p * nalgebra::Vector4::new(x[0], x[1], x[2], 1.0);
    let corners = oracle_corners(b);
    let depth = |x: [f64; 3]| (rt * nalgebra::Vector4::new(x[0], x[1], x[2], 1.0)).z;
    let mut pts = Vec::new();
    for (i, &a) in corners.iter().enumerate() {
        if depth(a) > cam.near {
            let h = hom(a);
            pts.push([h.x / h.z, h.y / h.z]);
        }
        for (j, &c) in corners.iter().enumerate().skip(i + 1) {
            // corner indices carry one bit per local axis, so edges differ in one bit
            if (i ^ j).count_ones() != 1 {
                continue;
            }
            let (da, dc) = (depth(a), depth(c));
            if (da > cam.near) != (dc > cam.near) {
                let s = (cam.near - da) / (dc - da);
                let x = [0, 1, 2].map(|d| a[d] + s * (c[d] - a[d]));
                let h = hom(x);
                pts.push([h.x / h.z, h.y / h.z]);
            }
        }
    }
    if pts.is_empty() {
        return None;
    }
    let xs = pts.iter().map(|q| q[0]);
    let ys = pts.iter().map(|q| q[1]);
    Some([
        xs.clone().fold(f64::INFINITY, f64::min),
        ys.clone().fold(f64::INFINITY, f64::min),
        xs.fold(f64::NEG_INFINITY, f64::max),
        ys.fold(f64::NEG_INFINITY, f64::max),
    ])
}

fn random_camera(rng: &mut ChaCha8Rng) -> Camera {
    let f = rng.gen_range(40.0..400.0);
    let (w, h) = (rng.gen_range(32..256), rng.gen_range(32..256));
    let k = Intrinsics {
        fx: f,
        fy: f * rng.gen_range(0.8..1.25),
        cx: f64::from(w) * rng.gen_range(0.3..0.7),
        cy: f64::from(h) * rng.gen_range(0.3..0.7),
    };
    let pos = [
        rng.gen_range(-5.0..5.0),
        rng.gen_range(-5.0..5.0),
        rng.gen_range(0.5..3.0),
    ];
    let mut cam = Camera::looking(pos, rng.gen_range(-PI..PI), k, w, h);
    cam.near = rng.gen_range(0.05..1.0);
    cam
}

fn geometry_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    let mut straddling = 0;
    for k in 0..10_000 {
        let cam = random_camera(&mut rng);
        let b = BoxPose3D::new(
            [
                rng.gen_range(-30.0..30.0),
                rng.gen_range(-30.0..30.0),
                rng.gen_range(-1.0..4.0),
            ],
            [
                rng.gen_range(0.3..12.0),
                rng.gen_range(0.3..4.0),
                rng.gen_range(0.3..4.0),
            ],
            rng.gen_range(-PI..PI),
        );
        let got = project_box(&b, &cam).map(|p| [p.rect.x0, p.rect.y0, p.rect.x1, p.rect.y1]);
        let want = oracle_projection(&b, &cam);
        match (got, want) {
            (None, None) => {}
            (Some(g), Some(w)) => {
                let err = g
                    .iter()
                    .zip(&w)
                    .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
                    .fold(0.0, f64::max);
                worst = worst.max(err);
                ensure(err <= 1e-6, || format!("box {k}: {g:?} vs oracle {w:?}"))?;
                let depths: Vec<f64> = b.corners().iter().map(|c| cam.depth_of(*c)).collect();
                straddling += usize::from(depths.iter().any(|d| *d <= cam.near));
            }
            (g, w) => {
                return Err(format!(
                    "box {k}: presence {:?} vs oracle {:?}",
                    g.is_some(),
                    w.is_some()
                ))
            }
        }
    }
    for k in 0..10_000 {
        let cam = random_camera(&mut rng);
        let size: [f64; 3] = [
            rng.gen_range(0.3..12.0),
            rng.gen_range(0.3..4.0),
            rng.gen_range(0.3..4.0),
        ];
        let radius = 0.5 * (size[0] * size[0] + size[1] * size[1] + size[2] * size[2]).sqrt();
        // push the center straight back along the optical axis, then sideways
        let back = cam.near + radius + rng.gen_range(0.0..20.0);
        let axis = cam.ray(cam.intrinsics.cx, cam.intrinsics.cy);
        let side = [-axis[1], axis[0], 0.0];
        let s = rng.gen_range(-30.0..30.0);
        let c = cam.center();
        let center = [0, 1, 2]
            .map(|d| c[d] - back * axis[d] + s * side[d] + if d == 2 { rng.gen_range(-2.0..2.0) } else { 0.0 });
        let b = BoxPose3D::new(center, size, rng.gen_range(-PI..PI));
        ensure(project_box(&b, &cam).is_none(), || {
            format!("box {k} behind the near plane projected")
        })?;
    }
    Ok(format!(
        "10^4 boxes within {worst:.1e} of the homogeneous oracle ({straddling} straddle the near plane), 10^4 behind-plane boxes absent"
    ))
}

fn one_view_video(rng: &mut ChaCha8Rng, frames: u32, w: u32, h: u32) -> MultiviewVideo {
    MultiviewVideo {
        num_views: 1,
        num_frames: frames,
        frames: (0..frames)
            .map(|t| Frame {
                pixels: RgbImage::from_fn(w, h, |_, _| [rng.gen(), rng.gen(), rng.gen()]),
                instance_ids: IdBuffer::new(w, h),
                view: 0,
                frame_index: t,
            })
            .collect(),
        seed: 0,
        conditions_fingerprint: 0,
    }
}

fn random_mask(rng: &mut ChaCha8Rng, w: u32, h: u32, p: f64) -> Mask {
    let mut m = Mask::new(w, h);
    for v in m.data.iter_mut() {
        *v = rng.gen_bool(p);
    }
    m
}

fn compositing_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for case in 0..300 {
        let (w, h, n) = (rng.gen_range(1..24), rng.gen_range(1..24), rng.gen_range(1..4));
        let video = one_view_video(&mut rng, n, w, h);
        let layers: Vec<RgbaLayer> = (0..n)
            .map(|_| RgbaLayer {
                rgb: RgbImage::from_fn(w, h, |_, _| [rng.gen(), rng.gen(), rng.gen()]),
                alpha: random_mask(&mut rng, w, h, 0.7),
            })
            .collect();
        let masks_with = |f: &mut dyn FnMut() -> Mask| MaskSequence {
            object_index: 0,
            masks: (0..n).map(|t| ((0, t), f())).collect::<BTreeMap<_, _>>(),
        };
        let feather = rng.gen_range(0..4);

        let zero = masks_with(&mut || Mask::new(w, h));
        let out = composite(&video, &layers, &zero, feather).map_err(|e| e.to_string())?;
        ensure(out == video, || format!("case {case}: zero mask changed the video"))?;

        let full = masks_with(&mut || Mask::full(w, h));
        let out = composite(&video, &layers, &full, 0).map_err(|e| e.to_string())?;
        for (t, (f, layer)) in out.frames.iter().zip(&layers).enumerate() {
            for y in 0..h {
                for x in 0..w {
                    if layer.alpha.get(x, y) {
                        ensure(f.pixels.get(x, y) == layer.rgb.get(x, y), || {
                            format!("case {case}: full mask frame {t} ({x},{y}) differs from the object layer")
                        })?;
                    }
                }
            }
        }

        let random = masks_with(&mut || random_mask(&mut rng, w, h, 0.5));
        let out = composite(&video, &layers, &random, 0).map_err(|e| e.to_string())?;
        for t in 0..n {
            let (src, dst, layer, m) = (
                video.frame(0, t),
                out.frame(0, t),
                &layers[t as usize],
                &random.masks[&(0, t)],
            );
            for y in 0..h {
                for x in 0..w {
                    let a = if m.get(x, y) && layer.alpha.get(x, y) { 1.0 } else { 0.0 };
                    let (xo, xb) = (layer.rgb.get(x, y), src.pixels.get(x, y));
                    let want = [0, 1, 2].map(|c| (a * f64::from(xo[c]) + (1.0 - a) * f64::from(xb[c])).round() as u8);
                    ensure(dst.pixels.get(x, y) == want, || {
                        format!(
                            "case {case}: random mask frame {t} ({x},{y}) {:?} vs oracle {want:?}",
                            dst.pixels.get(x, y)
                        )
                    })?;
                }
            }
        }
    }
    Ok("300 random cases: zero-mask identity, full-mask replacement, per-pixel blend oracle".into())
}

fn index_consistency_sensitivity() -> Outcome {
    let config = LoopConfig::default();
    let clean = bundled("demo.json");
    let clean_video = {
        let c = build_conditions(&clean).map_err(|e| e.to_string())?;
        render_scene(&c, &clean.rig, clean.num_frames, config.seed, &clean.fault_plan, 1)
    };
    let mut base = BTreeMap::new();
    for o in &clean.objects {
        let ic = index_consistency(&clean_video, o, &clean.rig)
            .map_err(|e| e.to_string())?
            .ok_or_else(|| format!("object {} seen fewer than twice", o.index))?;
        ensure(ic >= 0.95, || {
            format!("clean object {} index consistency {ic:.3}", o.index)
        })?;
        base.insert(o.index, ic);
    }
    let mut notes = Vec::new();
    for kind in [FaultKind::DropObject, FaultKind::WrongColor] {
        for target in clean.objects.iter().map(|o| o.index) {
            let mut s = clean.clone();
            s.fault_plan.push(object_fault(kind, target, 1.0));
            let c = build_conditions(&s).map_err(|e| e.to_string())?;
            let video = render_scene(&c, &s.rig, s.num_frames, config.seed, &s.fault_plan, 1);
            let spec = s.object(target).expect("target exists");
            let ic = index_consistency(&video, spec, &s.rig)
                .map_err(|e| e.to_string())?
                .unwrap_or(0.0);
            let drop = base[&target] - ic;
            ensure(drop >= 0.1, || {
                format!("{} on {target}: index consistency fell by {drop:.3}", kind.token())
            })?;
            let report = evaluate(&video, &c, &s.rig, config.lambda, heads()).map_err(|e| e.to_string())?;
            let d = route(&report, &config);
            ensure(d.kind == DecisionKind::Refine && d.flagged_objects == [target], || {
                format!(
                    "{} on {target}: decision {:?} {:?}",
                    kind.token(),
                    d.kind,
                    d.flagged_objects
                )
            })?;
            notes.push(drop);
        }
    }
    let min_drop = notes.iter().copied().fold(f64::INFINITY, f64::min);
    let min_clean = base.values().copied().fold(f64::INFINITY, f64::min);
    Ok(format!(
        "clean min {min_clean:.3}; drop_object and wrong_color on each object lower it by at least {min_drop:.3} and flag it"
    ))
}

fn run_cli(args: &[&str], threads: &str) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_vistaloop"))
        .args(args)
        .env("VISTALOOP_THREADS", threads)
        .output()
        .expect("spawn the CLI")
}

fn read_tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).expect("read output dir") {
            let p = entry.expect("dir entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).expect("under root").to_path_buf();
                out.insert(rel, std::fs::read(&p).expect("read output file"));
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scenario = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/demo_wrong_color.json");
    let mut trees = Vec::new();
    for (k, threads) in ["1", "1", "4", "4"].iter().enumerate() {
        let out = tmp.path().join(format!("run{k}"));
        let o = run_cli(
            &[
                "run",
                "--scenario",
                scenario.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--export-masks",
            ],
            threads,
        );
        ensure(o.status.code() == Some(0), || {
            format!(
                "run {k} exited {:?}: {}",
                o.status.code(),
                String::from_utf8_lossy(&o.stderr)
            )
        })?;
        trees.push(read_tree(&out));
    }
    for name in ["audit.json", "report.json", "metrics.json"] {
        ensure(trees[0].contains_key(Path::new(name)), || format!("missing {name}"))?;
    }
    ensure(
        trees[0].keys().any(|p| p.extension().is_some_and(|e| e == "ppm")),
        || "no frame files".into(),
    )?;
    for (k, t) in trees.iter().enumerate().skip(1) {
        ensure(t.keys().eq(trees[0].keys()), || {
            format!("run {k} wrote a different file set")
        })?;
        for (p, bytes) in t {
            ensure(trees[0][p] == *bytes, || format!("run {k}: {} differs", p.display()))?;
        }
    }
    Ok(format!(
        "4 runs (threads 1, 1, 4, 4) wrote {} byte-identical files",
        trees[0].len()
    ))
}

fn batch_bound() -> Outcome {
    let mut objects = 0;
    let mut crops = 0;
    for seed in 0..100u64 {
        let opts = RandomOptions {
            num_objects: 3 + (seed % 6) as usize,
            ..RandomOptions::default()
        };
        let s = random_scenario(1000 + seed, &opts);
        let c = build_conditions(&s).map_err(|e| e.to_string())?;
        let video = render_scene(&c, &s.rig, s.num_frames, seed, &s.fault_plan, 1);
        let cap = s.rig.len() * s.num_frames as usize;
        for o in &s.objects {
            let batch = crop_object_batch(&video, o, &s.rig);
            ensure(batch.len() <= cap, || {
                format!("seed {seed} object {}: {} crops > {cap}", o.index, batch.len())
            })?;
            let got: BTreeSet<(u32, u32)> = batch.crops.iter().map(|c| (c.view, c.frame)).collect();
            ensure(got.len() == batch.len(), || {
                format!("seed {seed} object {}: repeated cell", o.index)
            })?;
            let mut want = BTreeSet::new();
            for (v, cam) in s.rig.iter().enumerate() {
                for t in 0..s.num_frames {
                    let Some(p) = o.box_at(t).and_then(|b| project_box(&b, cam)) else {
                        continue;
                    };
                    let x0 = p.rect.x0.max(0.0);
                    let y0 = p.rect.y0.max(0.0);
                    let x1 = p.rect.x1.min(f64::from(cam.width));
                    let y1 = p.rect.y1.min(f64::from(cam.height));
                    if x1 > x0 && y1 > y0 && (x1 - x0) * (y1 - y0) >= MIN_CROP_AREA as f64 {
                        want.insert((v as u32, t));
                    }
                }
            }
            ensure(got == want, || {
                format!("seed {seed} object {}: cells {got:?} vs visible {want:?}", o.index)
            })?;
            objects += 1;
            crops += batch.len();
        }
    }
    Ok(format!(
        "{objects} objects in 100 scenarios, {crops} crops, every batch within V·T and matching visibility"
    ))
}

fn termination() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scenario = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/demo_unfixable.json");
    let out = tmp.path().join("run");
    let o = run_cli(
        &[
            "run",
            "--scenario",
            scenario.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        "0",
    );
    ensure(o.status.code() == Some(2), || {
        format!("exit code {:?}", o.status.code())
    })?;
    let audit: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("audit.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let status = audit["status"].as_str().unwrap_or_default().to_string();
    let iterations = audit["iterations"].as_array().map_or(0, Vec::len);
    ensure(status == "budget_exhausted", || format!("status {status}"))?;
    ensure(iterations == LoopConfig::default().max_iterations as usize, || {
        format!("{iterations} iterations")
    })?;

    let s = bundled("demo_unfixable.json");
    for max_iterations in [1, 3, 7] {
        let config = LoopConfig {
            max_iterations,
            ..LoopConfig::default()
        };
        let (_, log) = run_closed_loop(&s, &config, heads()).map_err(|e| e.to_string())?;
        ensure(
            log.iterations.len() == max_iterations as usize && log.status == LoopStatus::BudgetExhausted,
            || {
                format!(
                    "max_iterations {max_iterations}: {} iterations, {:?}",
                    log.iterations.len(),
                    log.status
                )
            },
        )?;
    }
    Ok(format!(
        "exit code 2, status {status} after {iterations} iterations; budgets 1, 3, 7 honored"
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("clean demo loop", clean_demo_loop),
        ("regeneration loop", regeneration_loop),
        ("refinement loop", refinement_loop),
        ("object score oracle", score_oracle),
        ("geometry oracle", geometry_oracle),
        ("compositing identities", compositing_identities),
        ("index consistency sensitivity", index_consistency_sensitivity),
        ("determinism", determinism),
        ("batch bound", batch_bound),
        ("termination", termination),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {detail}", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
