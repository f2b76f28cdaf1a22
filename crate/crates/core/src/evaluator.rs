//! Scene-level and object-level auditing of a rendered multiview video.
//!
//! Scene level compares robust sky statistics of the front view against the
//! signature of the requested weather and time of day. Object level gathers
//! every visible crop of an object into a batch and blends semantic agreement
//! between the batch appearance and the object's fused embedding with a
//! min-max normalized sharpness score.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::MIN_CROP_AREA;
use crate::encoder::{cosine, embed_appearance, ConditionSet, FeatureTag, FeatureVector, ObjectEmbedding};
use crate::error::{Error, Result};
use crate::geometry::{project_box, Camera};
use crate::heads::ProjectionHeads;
use crate::image::RgbImage;
use crate::render::signature::Lighting;
use crate::render::MultiviewVideo;
use crate::scene::{GlobalConditions, ObjectSpec};
use crate::vocab::Attribute;

/// Weather distance normalizer, in sky chromaticity units.
pub const TAU_WEATHER: f64 = 0.02;
/// Time-of-day distance normalizer, in natural-log sky luminance.
pub const TAU_TIME: f64 = 0.4;
/// Fraction of rows, from the top of the front view, treated as sky.
pub const SKY_FRACTION: f64 = 0.25;
pub const DEFAULT_LAMBDA: f64 = 0.6;

#[derive(Debug, Clone, PartialEq)]
pub struct Crop {
    pub view: u32,
    pub frame: u32,
    /// Pixel bounds `(x0, y0, x1, y1)` of the crop in its source frame.
    pub region: (u32, u32, u32, u32),
    pub image: RgbImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectBatch {
    pub object_index: u32,
    pub crops: Vec<Crop>,
}

impl ObjectBatch {
    pub fn is_empty(&self) -> bool {
        self.crops.is_empty()
    }

    pub fn len(&self) -> usize {
        self.crops.len()
    }
}

/// Crop the object's projected box from every view and frame where at least
/// 16 px² of the box rectangle lies inside the image.
pub fn crop_object_batch(video: &MultiviewVideo, spec: &ObjectSpec, rig: &[Camera]) -> ObjectBatch {
    let mut crops = Vec::new();
    for (v, cam) in rig.iter().enumerate().take(video.num_views as usize) {
        for t in 0..video.num_frames {
            let Some(rect) = spec
                .box_at(t)
                .and_then(|b| project_box(&b, cam))
                .and_then(|p| p.clipped_rect(cam.width, cam.height))
            else {
                continue;
            };
            if rect.area() < MIN_CROP_AREA as f64 {
                continue;
            }
            let frame = video.frame(v as u32, t);
            let Some(region) = crate::render::pixel_region(&rect, frame.pixels.width, frame.pixels.height) else {
                continue;
            };
            crops.push(Crop {
                view: v as u32,
                frame: t,
                region,
                image: frame.pixels.crop(region.0, region.1, region.2, region.3),
            });
        }
    }
    ObjectBatch {
        object_index: spec.index,
        crops,
    }
}

/// Population variance of the 4-neighbour Laplacian of luminance over interior pixels.
pub fn laplacian_variance(img: &RgbImage) -> f64 {
    let (w, h) = (img.width as usize, img.height as usize);
    if w < 3 || h < 3 {
        return 0.0;
    }
    let lum = img.luminance();
    let mut vals = Vec::with_capacity((w - 2) * (h - 2));
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let c = lum[y * w + x];
            vals.push(lum[y * w + x - 1] + lum[y * w + x + 1] + lum[(y - 1) * w + x] + lum[(y + 1) * w + x] - 4.0 * c);
        }
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// Min-max normalized sharpness per crop. All-equal batches score 1.
pub fn clarity_scores(batch: &ObjectBatch) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::Contract("clarity of an empty batch".into()));
    }
    let raw: Vec<f64> = batch.crops.iter().map(|c| laplacian_variance(&c.image)).collect();
    Ok(min_max_normalize(&raw))
}

pub fn min_max_normalize(raw: &[f64]) -> Vec<f64> {
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return vec![1.0; raw.len()];
    }
    raw.iter().map(|r| (r - min) / (max - min)).collect()
}

pub fn batch_clarity(batch: &ObjectBatch) -> Result<f64> {
    let q = clarity_scores(batch)?;
    Ok(q.iter().sum::<f64>() / q.len() as f64)
}

/// Mean appearance embedding over the batch.
pub fn batch_appearance(batch: &ObjectBatch) -> Result<FeatureVector> {
    if batch.is_empty() {
        return Err(Error::Contract("appearance of an empty batch".into()));
    }
    let feats = batch
        .crops
        .iter()
        .map(|c| embed_appearance(&c.image))
        .collect::<Result<Vec<_>>>()?;
    let mut mean = vec![0.0; feats[0].len()];
    for f in &feats {
        for (m, v) in mean.iter_mut().zip(&f.values) {
            *m += v;
        }
    }
    let n = feats.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(FeatureVector::new(mean, FeatureTag::Vis))
}

/// `λ·semantic + (1−λ)·clarity`.
pub fn blend_score(semantic: f64, clarity: f64, lambda: f64) -> f64 {
    lambda * semantic + (1.0 - lambda) * clarity
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObjectScore {
    pub s_obj: f64,
    pub semantic: f64,
    pub clarity: f64,
}

/// Score one object's batch against its embedding. `None` when the batch is empty.
pub fn assess_object(
    batch: &ObjectBatch,
    embedding: &ObjectEmbedding,
    lambda: f64,
    heads: &ProjectionHeads,
) -> Result<Option<ObjectScore>> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Contract(format!("lambda {lambda} outside (0, 1)")));
    }
    if batch.is_empty() {
        return Ok(None);
    }
    let appearance = batch_appearance(batch)?;
    let semantic = cosine(
        &heads.project_visual(&appearance.values),
        &heads.project_embedding(&embedding.vector.values),
    );
    let clarity = batch_clarity(batch)?;
    Ok(Some(ObjectScore {
        s_obj: blend_score(semantic, clarity, lambda),
        semantic,
        clarity,
    }))
}

/// Mean pairwise cosine of crop appearances. `None` with fewer than two crops.
pub fn batch_index_consistency(batch: &ObjectBatch) -> Result<Option<f64>> {
    if batch.len() < 2 {
        return Ok(None);
    }
    let feats = batch
        .crops
        .iter()
        .map(|c| embed_appearance(&c.image))
        .collect::<Result<Vec<_>>>()?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..feats.len() {
        for j in i + 1..feats.len() {
            sum += feats[i].cosine(&feats[j]);
            n += 1;
        }
    }
    Ok(Some(sum / n as f64))
}

pub fn index_consistency(video: &MultiviewVideo, spec: &ObjectSpec, rig: &[Camera]) -> Result<Option<f64>> {
    batch_index_consistency(&crop_object_batch(video, spec, rig))
}

/// Robust sky statistics of the front view: per-channel median over the top rows of every frame.
pub fn sky_median(video: &MultiviewVideo) -> [f64; 3] {
    let mut channels: [Vec<u8>; 3] = Default::default();
    for t in 0..video.num_frames {
        let img = &video.frame(0, t).pixels;
        let rows = ((f64::from(img.height) * SKY_FRACTION).floor() as u32).max(1);
        for y in 0..rows {
            for x in 0..img.width {
                let p = img.get(x, y);
                for c in 0..3 {
                    channels[c].push(p[c]);
                }
            }
        }
    }
    channels.map(|mut v| {
        v.sort_unstable();
        let n = v.len();
        if n == 0 {
            0.0
        } else if n % 2 == 1 {
            f64::from(v[n / 2])
        } else {
            (f64::from(v[n / 2 - 1]) + f64::from(v[n / 2])) / 2.0
        }
    })
}

fn chromaticity(rgb: [f64; 3]) -> [f64; 3] {
    let s = rgb[0] + rgb[1] + rgb[2];
    if s <= 0.0 {
        [1.0 / 3.0; 3]
    } else {
        rgb.map(|c| c / s)
    }
}

/// Sky color an empty render of the conditions produces.
pub fn signature_sky(global: &GlobalConditions) -> [f64; 3] {
    let l = Lighting::new(global.weather, global.time_of_day);
    l.shade(l.sky()).map(f64::from)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroAssessment {
    pub s_macro: f64,
    pub per_attribute: BTreeMap<Attribute, f64>,
}

/// Score weather (sky chromaticity) and time of day (log sky luminance) against the conditions' signature.
pub fn assess_macro(video: &MultiviewVideo, global: &GlobalConditions) -> MacroAssessment {
    let observed = sky_median(video);
    let expected = signature_sky(global);
    let (co, ce) = (chromaticity(observed), chromaticity(expected));
    let d_weather = (0..3).map(|k| (co[k] - ce[k]).powi(2)).sum::<f64>().sqrt();
    let lo = luma_f(observed).max(0.5);
    let le = luma_f(expected).max(0.5);
    let d_time = (lo.ln() - le.ln()).abs();
    let mut per_attribute = BTreeMap::new();
    per_attribute.insert(Attribute::Weather, (1.0 - d_weather / TAU_WEATHER).max(0.0));
    per_attribute.insert(Attribute::TimeOfDay, (1.0 - d_time / TAU_TIME).max(0.0));
    let s_macro = per_attribute.values().sum::<f64>() / per_attribute.len() as f64;
    MacroAssessment { s_macro, per_attribute }
}

fn luma_f(p: [f64; 3]) -> f64 {
    0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectStatus {
    Scored,
    Unobservable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectReport {
    pub status: ObjectStatus,
    pub score: Option<ObjectScore>,
    /// `None` means fewer than two observations.
    pub index_consistency: Option<f64>,
    pub crops: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssessmentReport {
    pub s_macro: f64,
    pub per_attribute_macro: BTreeMap<Attribute, f64>,
    pub objects: BTreeMap<u32, ObjectReport>,
    pub lambda: f64,
}

impl AssessmentReport {
    pub fn s_obj(&self, index: u32) -> Option<f64> {
        self.objects.get(&index).and_then(|o| o.score).map(|s| s.s_obj)
    }

    /// The report's arithmetic identities.
    pub fn check(&self) -> Result<()> {
        let mean = self.per_attribute_macro.values().sum::<f64>() / self.per_attribute_macro.len().max(1) as f64;
        if (mean - self.s_macro).abs() > 1e-12 {
            return Err(Error::Contract("s_macro differs from the attribute mean".into()));
        }
        for (i, o) in &self.objects {
            if let Some(s) = o.score {
                if (blend_score(s.semantic, s.clarity, self.lambda) - s.s_obj).abs() > 1e-12 {
                    return Err(Error::Contract(format!("object {i} score is not the λ blend")));
                }
            }
        }
        Ok(())
    }
}

pub fn assess_objects(
    video: &MultiviewVideo,
    conditions: &ConditionSet,
    rig: &[Camera],
    lambda: f64,
    heads: &ProjectionHeads,
    which: Option<&[u32]>,
) -> Result<BTreeMap<u32, ObjectReport>> {
    let selected: Vec<_> = conditions
        .locals
        .iter()
        .filter(|l| which.is_none_or(|w| w.contains(&l.spec.index)))
        .collect();
    let reports = selected
        .par_iter()
        .map(|l| {
            let batch = crop_object_batch(video, &l.spec, rig);
            let score = assess_object(&batch, &l.embedding, lambda, heads)?;
            Ok((
                l.spec.index,
                ObjectReport {
                    status: if score.is_some() {
                        ObjectStatus::Scored
                    } else {
                        ObjectStatus::Unobservable
                    },
                    score,
                    index_consistency: batch_index_consistency(&batch)?,
                    crops: batch.len(),
                },
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(reports.into_iter().collect())
}

/// Full audit of a video against its conditions.
pub fn evaluate(
    video: &MultiviewVideo,
    conditions: &ConditionSet,
    rig: &[Camera],
    lambda: f64,
    heads: &ProjectionHeads,
) -> Result<AssessmentReport> {
    let m = assess_macro(video, &conditions.global);
    Ok(AssessmentReport {
        s_macro: m.s_macro,
        per_attribute_macro: m.per_attribute,
        objects: assess_objects(video, conditions, rig, lambda, heads, None)?,
        lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch_of(images: Vec<RgbImage>) -> ObjectBatch {
        ObjectBatch {
            object_index: 0,
            crops: images
                .into_iter()
                .enumerate()
                .map(|(k, image)| Crop {
                    view: 0,
                    frame: k as u32,
                    region: (0, 0, image.width, image.height),
                    image,
                })
                .collect(),
        }
    }

    fn checker(n: u32, period: u32) -> RgbImage {
        RgbImage::from_fn(n, n, |x, y| {
            if (x / period + y / period).is_multiple_of(2) {
                [250; 3]
            } else {
                [10; 3]
            }
        })
    }

    #[test]
    fn uniform_crop_is_least_clear() {
        let b = batch_of(vec![RgbImage::filled(8, 8, [90, 90, 90]), checker(8, 1), checker(8, 2)]);
        let q = clarity_scores(&b).unwrap();
        assert_eq!(q[0], 0.0);
        // period-1 checker: every interior Laplacian is ±8·120 → highest variance
        assert_eq!(q[1], 1.0);
        assert!(q[2] > 0.0 && q[2] < 1.0);
    }

    #[test]
    fn identical_crops_all_clear() {
        let b = batch_of(vec![checker(6, 2); 4]);
        assert_eq!(clarity_scores(&b).unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn empty_batch_clarity_is_a_contract_error() {
        assert!(matches!(clarity_scores(&batch_of(vec![])), Err(Error::Contract(_))));
    }

    #[test]
    fn laplacian_of_unit_checker() {
        // direct: a 4×4 interior alternates ±(4·240), zero mean
        let v = laplacian_variance(&checker(6, 1));
        assert!((v - 960.0f64.powi(2)).abs() < 1e-6, "{v}");
    }

    #[test]
    fn blend_examples() {
        assert!((blend_score(0.5, 1.0, 0.6) - 0.7).abs() < 1e-15);
        assert!((blend_score(1.0, 1.0, 0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identical_crops_are_consistent() {
        let b = batch_of(vec![checker(9, 3); 3]);
        assert!((batch_index_consistency(&b).unwrap().unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(batch_index_consistency(&batch_of(vec![checker(4, 1)])).unwrap(), None);
    }
}
