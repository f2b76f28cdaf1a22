//! Layout, detection, category and alignment metrics against the scenario's ground truth.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::config::{D_VIS, K_FREQ, MIN_CROP_AREA};
use crate::encoder::{
    cosine, embed_appearance, embed_text, fourier_encode_box, fuse_object_embedding, FeatureTag, FeatureVector,
};
use crate::error::Result;
use crate::evaluator::{batch_appearance, batch_index_consistency, crop_object_batch};
use crate::geometry::{project_box, Camera, Rect};
use crate::heads::ProjectionHeads;
use crate::image::{luma, RgbImage};
use crate::refine::proxy::{assembly, draw_parts};
use crate::render::signature::Lighting;
use crate::render::MultiviewVideo;
use crate::scene::{ObjectSpec, Scenario};
use crate::vocab::Category;

/// Ground-truth rectangle of an object in one cell, clipped to the image.
pub fn ground_truth_rect(spec: &ObjectSpec, camera: &Camera, frame: u32) -> Option<Rect> {
    let rect = project_box(&spec.box_at(frame)?, camera)?.clipped_rect(camera.width, camera.height)?;
    (rect.area() >= MIN_CROP_AREA as f64).then_some(rect)
}

fn id_rect(b: (u32, u32, u32, u32)) -> Rect {
    Rect {
        x0: f64::from(b.0),
        y0: f64::from(b.1),
        x1: f64::from(b.2),
        y1: f64::from(b.3),
    }
}

/// Per-cell IoU between the instance-buffer bbox and the projected box, for
/// every cell where the projected box is visible. A missing instance counts as 0.
pub fn layout_observations(video: &MultiviewVideo, spec: &ObjectSpec, rig: &[Camera]) -> Vec<f64> {
    let id = spec.index as u16 + 1;
    let mut out = Vec::new();
    for (v, cam) in rig.iter().enumerate().take(video.num_views as usize) {
        for t in 0..video.num_frames {
            let Some(gt) = ground_truth_rect(spec, cam, t) else {
                continue;
            };
            let iou = video
                .frame(v as u32, t)
                .instance_ids
                .bounds_of(id)
                .map_or(0.0, |b| id_rect(b).iou(&gt));
            out.push(iou);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub cell: (u32, u32),
    pub rect: Rect,
    pub confidence: f64,
}

/// Every instance in every instance buffer, scored by its pixel fraction.
pub fn detections(video: &MultiviewVideo) -> Vec<Detection> {
    let mut out = Vec::new();
    for v in 0..video.num_views {
        for t in 0..video.num_frames {
            let ids = &video.frame(v, t).instance_ids;
            let total = f64::from(ids.width) * f64::from(ids.height);
            let mut present: Vec<u16> = ids.data.iter().copied().filter(|&i| i != 0).collect();
            present.sort_unstable();
            present.dedup();
            for id in present {
                let b = ids.bounds_of(id).expect("id is present");
                out.push(Detection {
                    cell: (v, t),
                    rect: id_rect(b),
                    confidence: ids.count(id) as f64 / total,
                });
            }
        }
    }
    out
}

/// Single-class average precision at IoU 0.5 with all-point interpolation.
///
/// Detections are ranked by confidence (ties by cell, then position); each
/// takes the best-overlapping unmatched ground truth in its cell.
pub fn average_precision(dets: &[Detection], truths: &BTreeMap<(u32, u32), Vec<Rect>>) -> f64 {
    let n_gt: usize = truths.values().map(Vec::len).sum();
    if n_gt == 0 {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .confidence
            .total_cmp(&dets[a].confidence)
            .then(dets[a].cell.cmp(&dets[b].cell))
            .then(a.cmp(&b))
    });
    let mut used: BTreeMap<(u32, u32), Vec<bool>> = truths.iter().map(|(k, v)| (*k, vec![false; v.len()])).collect();
    let mut tp = 0usize;
    let mut curve = Vec::with_capacity(order.len());
    for (rank, &k) in order.iter().enumerate() {
        let d = &dets[k];
        let mut best: Option<(usize, f64)> = None;
        if let Some(gts) = truths.get(&d.cell) {
            for (j, g) in gts.iter().enumerate() {
                let iou = d.rect.iou(g);
                if iou >= 0.5 && !used[&d.cell][j] && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((j, iou));
                }
            }
        }
        if let Some((j, _)) = best {
            used.get_mut(&d.cell).expect("cell has truths")[j] = true;
            tp += 1;
        }
        curve.push((tp as f64 / n_gt as f64, tp as f64 / (rank + 1) as f64));
    }
    // precision envelope, integrated over recall steps
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for i in 0..curve.len() {
        let (recall, _) = curve[i];
        if recall > prev_recall {
            let envelope = curve[i..].iter().map(|c| c.1).fold(0.0, f64::max);
            ap += (recall - prev_recall) * envelope;
            prev_recall = recall;
        }
    }
    ap
}

pub fn ground_truths(scenario: &Scenario) -> BTreeMap<(u32, u32), Vec<Rect>> {
    let mut out = BTreeMap::new();
    for (v, cam) in scenario.rig.iter().enumerate() {
        for t in 0..scenario.num_frames {
            let rects: Vec<Rect> = scenario
                .objects
                .iter()
                .filter_map(|o| ground_truth_rect(o, cam, t))
                .collect();
            if !rects.is_empty() {
                out.insert((v as u32, t), rects);
            }
        }
    }
    out
}

pub fn ap_at_50(video: &MultiviewVideo, scenario: &Scenario) -> f64 {
    average_precision(&detections(video), &ground_truths(scenario))
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Classify an object by correlating the luminance of its most visible
/// observation with each category's rendering at the same pose. `None` if never seen.
pub fn classify_category(
    video: &MultiviewVideo,
    spec: &ObjectSpec,
    rig: &[Camera],
    lighting: &Lighting,
) -> Option<Category> {
    let id = spec.index as u16 + 1;
    let mut best: Option<(usize, u32, u32)> = None;
    for v in 0..video.num_views {
        for t in 0..video.num_frames {
            let n = video.frame(v, t).instance_ids.count(id);
            if n > 0 && best.is_none_or(|b| n > b.0) {
                best = Some((n, v, t));
            }
        }
    }
    let (_, v, t) = best?;
    let pose = spec.box_at(t)?;
    let cam = &rig[v as usize];
    let frame = video.frame(v, t);
    let (w, h) = (frame.pixels.width, frame.pixels.height);
    let visible: Vec<usize> = (0..(w * h) as usize)
        .filter(|&k| frame.instance_ids.data[k] == id)
        .collect();
    let observed: Vec<f64> = visible
        .iter()
        .map(|&k| luma(frame.pixels.get(k as u32 % w, k as u32 / w)))
        .collect();
    let mut scored: Vec<(f64, Category)> = Category::ALL
        .iter()
        .map(|&c| {
            let parts = assembly(c, spec.color, &spec.style_tokens, pose.size);
            let mut template = RgbImage::new(w, h);
            draw_parts(&parts, &pose, cam, lighting, None, (0.0, 0.0), |x, y, rgb| {
                template.put(x, y, rgb)
            });
            let rendered: Vec<f64> = visible
                .iter()
                .map(|&k| luma(template.get(k as u32 % w, k as u32 / w)))
                .collect();
            (correlation(&observed, &rendered), c)
        })
        .collect();
    // highest correlation, ties to the lower ordinal
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.ordinal().cmp(&b.1.ordinal())));
    Some(scored[0].1)
}

/// The spec's own embedding without any visual reference.
fn text_embedding(spec: &ObjectSpec, scenario: &Scenario) -> Result<Vec<f64>> {
    let mid = spec.mid_box().expect("validated objects have trajectories");
    let f_geo = fourier_encode_box(&mid, &scenario.scene_bounds, K_FREQ)?;
    let f_txt = embed_text(spec.category, spec.color, &spec.style_tokens);
    let f_vis = FeatureVector::zeros(D_VIS, FeatureTag::Vis);
    Ok(fuse_object_embedding(&f_geo, &f_txt, &f_vis, spec.index)?.vector.values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectMetrics {
    /// Mean over visible cells; `None` if the object is never visible.
    pub layout_iou: Option<f64>,
    pub observations: usize,
    pub category_correct: Option<bool>,
    pub text_alignment: Option<f64>,
    /// `None` means no reference image.
    pub image_alignment: Option<f64>,
    pub index_consistency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub layout_iou_mean: f64,
    pub ap_at_50: f64,
    pub category_accuracy: f64,
    pub text_alignment_mean: f64,
    pub image_alignment_mean: Option<f64>,
    pub index_consistency_mean: f64,
    pub never_visible: Vec<u32>,
    pub per_object: BTreeMap<u32, ObjectMetrics>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn object_metrics(
    video: &MultiviewVideo,
    scenario: &Scenario,
    spec: &ObjectSpec,
    heads: &ProjectionHeads,
) -> Result<ObjectMetrics> {
    let rig = &scenario.rig;
    let lighting = Lighting::new(scenario.global.weather, scenario.global.time_of_day);
    let layout = layout_observations(video, spec, rig);
    let batch = crop_object_batch(video, spec, rig);
    let (text_alignment, image_alignment) = if batch.is_empty() {
        (None, None)
    } else {
        let appearance = batch_appearance(&batch)?;
        let text = cosine(
            &heads.project_embedding(&text_embedding(spec, scenario)?),
            &heads.project_visual(&appearance.values),
        );
        let image = match &spec.reference_appearance {
            Some(img) => Some(cosine(&appearance.values, &embed_appearance(img)?.values)),
            None => None,
        };
        (Some(text), image)
    };
    Ok(ObjectMetrics {
        layout_iou: mean(layout.iter().copied()),
        observations: layout.len(),
        category_correct: classify_category(video, spec, rig, &lighting).map(|c| c == spec.category),
        text_alignment,
        image_alignment,
        index_consistency: batch_index_consistency(&batch)?,
    })
}

pub fn compute_metrics(video: &MultiviewVideo, scenario: &Scenario, heads: &ProjectionHeads) -> Result<MetricsReport> {
    let per_object: BTreeMap<u32, ObjectMetrics> = scenario
        .objects
        .par_iter()
        .map(|o| Ok((o.index, object_metrics(video, scenario, o, heads)?)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .collect();
    let never_visible = per_object
        .iter()
        .filter(|(_, m)| m.observations == 0)
        .map(|(i, _)| *i)
        .collect();
    let category = mean(per_object.values().filter(|m| m.observations > 0).map(|m| {
        if m.category_correct == Some(true) {
            1.0
        } else {
            0.0
        }
    }));
    Ok(MetricsReport {
        layout_iou_mean: mean(per_object.values().filter_map(|m| m.layout_iou)).unwrap_or(0.0),
        ap_at_50: ap_at_50(video, scenario),
        category_accuracy: category.unwrap_or(0.0),
        text_alignment_mean: mean(per_object.values().filter_map(|m| m.text_alignment)).unwrap_or(0.0),
        image_alignment_mean: mean(per_object.values().filter_map(|m| m.image_alignment)),
        index_consistency_mean: mean(per_object.values().filter_map(|m| m.index_consistency)).unwrap_or(0.0),
        never_visible,
        per_object,
    })
}
