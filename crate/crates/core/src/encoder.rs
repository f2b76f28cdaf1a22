//! Hierarchical condition encoding: per-object geometric, text and appearance
//! features fused into identity-tagged embeddings, plus the scene's global conditions.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::config::{BOX_PARAMS, D_E, D_FUSED_IN, D_GEO, D_TOK, D_VIS, FUSION_SEED, K_FREQ};
use crate::error::{Error, Result};
use crate::image::{luma, RgbImage};
use crate::scene::{BoxPose3D, GlobalConditions, ObjectSpec, Scenario, SceneBounds};
use crate::vocab::{category_basis, color_basis, style_basis, Category, Color, Style};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureTag {
    Geo,
    Txt,
    Vis,
    Fused,
    Scene,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub tag: FeatureTag,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, tag: FeatureTag) -> Self {
        Self { values, tag }
    }

    pub fn zeros(len: usize, tag: FeatureTag) -> Self {
        Self::new(vec![0.0; len], tag)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }

    pub fn cosine(&self, other: &FeatureVector) -> f64 {
        cosine(&self.values, &other.values)
    }

    /// Expected length for the tag, if the tag has a fixed dimension.
    pub fn expected_len(tag: FeatureTag) -> Option<usize> {
        match tag {
            FeatureTag::Geo => Some(D_GEO),
            FeatureTag::Txt => Some(D_TOK),
            FeatureTag::Vis => Some(D_VIS),
            FeatureTag::Fused => Some(D_E),
            FeatureTag::Scene => None,
        }
    }

    pub fn check(&self) -> Result<()> {
        if let Some(n) = Self::expected_len(self.tag) {
            if self.values.len() != n {
                return Err(Error::Contract(format!(
                    "{:?} feature has length {}, expected {n}",
                    self.tag,
                    self.values.len()
                )));
            }
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract(format!(
                "{:?} feature has non-finite entries",
                self.tag
            )));
        }
        Ok(())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let d = norm(a) * norm(b);
    if d > 0.0 {
        (dot(a, b) / d).clamp(-1.0, 1.0)
    } else {
        0.0
    }
}

fn l2_normalized(mut v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

/// Normalize box parameters to `[0, 1]` against the scene bounds.
pub fn normalized_box(b: &BoxPose3D, bounds: &SceneBounds) -> Result<[f64; BOX_PARAMS]> {
    const AXES: [&str; 3] = ["x", "y", "z"];
    let mut out = [0.0; BOX_PARAMS];
    for k in 0..3 {
        let extent = bounds.max[k] - bounds.min[k];
        let c = b.center[k];
        if !(c >= bounds.min[k] && c <= bounds.max[k]) {
            return Err(Error::Domain(format!(
                "box center {} = {c} outside scene bounds [{}, {}]",
                AXES[k], bounds.min[k], bounds.max[k]
            )));
        }
        out[k] = (c - bounds.min[k]) / extent;
        out[3 + k] = (b.size[k] / extent).clamp(0.0, 1.0);
    }
    out[6] = (b.yaw + PI) / (2.0 * PI);
    Ok(out)
}

/// Sinusoidal features of a normalized box, octave-major, then parameter, sine before cosine.
pub fn fourier_encode_normalized(b: &[f64; BOX_PARAMS], k_freq: usize) -> FeatureVector {
    let mut values = Vec::with_capacity(2 * BOX_PARAMS * k_freq);
    for k in 0..k_freq {
        let scale = (1u64 << k) as f64 * PI;
        for v in b {
            let (s, c) = (scale * v).sin_cos();
            values.push(s);
            values.push(c);
        }
    }
    FeatureVector::new(values, FeatureTag::Geo)
}

pub fn fourier_encode_box(b: &BoxPose3D, bounds: &SceneBounds, k_freq: usize) -> Result<FeatureVector> {
    if k_freq == 0 {
        return Err(Error::Domain("k_freq must be at least 1".into()));
    }
    Ok(fourier_encode_normalized(&normalized_box(b, bounds)?, k_freq))
}

/// Normalized sum of one-hot token vectors. Repeated tokens count once.
pub fn embed_text(category: Category, color: Color, style_tokens: &[Style]) -> FeatureVector {
    let mut v = vec![0.0; D_TOK];
    v[category_basis(category)] = 1.0;
    v[color_basis(color)] = 1.0;
    for s in style_tokens {
        v[style_basis(*s)] = 1.0;
    }
    FeatureVector::new(l2_normalized(v), FeatureTag::Txt)
}

/// Same as [`embed_text`] but from raw tokens, rejecting anything outside the vocabularies.
pub fn embed_text_tokens(category: &str, color: &str, style_tokens: &[&str]) -> Result<FeatureVector> {
    let styles = style_tokens
        .iter()
        .map(|s| Style::parse(s))
        .collect::<Result<Vec<_>>>()?;
    Ok(embed_text(Category::parse(category)?, Color::parse(color)?, &styles))
}

pub const HUE_BINS: usize = 8;
/// Pixels below this HSV saturation carry no hue.
pub const HUE_MIN_SATURATION: f64 = 0.15;

/// Hue in `[0, 1)` and saturation of an RGB triple (any positive scale).
pub fn hue_saturation(r: f64, g: f64, b: f64) -> (f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let chroma = max - min;
    if max <= 0.0 || chroma <= 0.0 {
        return (0.0, 0.0);
    }
    let h = if max == r {
        ((g - b) / chroma).rem_euclid(6.0)
    } else if max == g {
        (b - r) / chroma + 2.0
    } else {
        (r - g) / chroma + 4.0
    };
    (h / 6.0, chroma / max)
}

/// Appearance descriptor over an `f64` RGB raster in row-major order.
pub fn embed_appearance_f64(width: u32, height: u32, rgb: &[[f64; 3]]) -> Result<FeatureVector> {
    if width == 0 || height == 0 || rgb.is_empty() {
        return Err(Error::Domain("appearance of a zero-pixel image".into()));
    }
    let n = rgb.len() as f64;
    let mut mean = [0.0; 3];
    for p in rgb {
        for c in 0..3 {
            mean[c] += p[c];
        }
    }
    let mean: Vec<f64> = mean.iter().map(|m| m / n).collect();

    let (w, h) = (width as usize, height as usize);
    let cell = |i: usize, len: usize| {
        let a = i * len / 4;
        let b = ((i + 1) * len / 4).max(a + 1).min(len);
        (a.min(len - 1), b)
    };
    let mut grid = Vec::with_capacity(16);
    for gy in 0..4 {
        let (y0, y1) = cell(gy, h);
        for gx in 0..4 {
            let (x0, x1) = cell(gx, w);
            let mut s = 0.0;
            for y in y0..y1 {
                for x in x0..x1 {
                    let p = rgb[y * w + x];
                    s += 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
                }
            }
            grid.push(s / ((y1 - y0) * (x1 - x0)) as f64);
        }
    }

    let mut hist = vec![0.0; HUE_BINS];
    for p in rgb {
        let (hue, sat) = hue_saturation(p[0], p[1], p[2]);
        if sat >= HUE_MIN_SATURATION {
            hist[((hue * HUE_BINS as f64) as usize).min(HUE_BINS - 1)] += 1.0;
        }
    }

    let mut values = l2_normalized(mean);
    values.extend(l2_normalized(grid));
    values.extend(l2_normalized(hist));
    Ok(FeatureVector::new(values, FeatureTag::Vis))
}

pub fn embed_appearance(image: &RgbImage) -> Result<FeatureVector> {
    let rgb: Vec<[f64; 3]> = image
        .pixels()
        .map(|p| [f64::from(p[0]), f64::from(p[1]), f64::from(p[2])])
        .collect();
    embed_appearance_f64(image.width, image.height, &rgb)
}

/// Luma of an 8-bit pixel, re-exported for callers computing appearance statistics.
pub fn pixel_luma(p: [u8; 3]) -> f64 {
    luma(p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectEmbedding {
    pub object_index: u32,
    pub vector: FeatureVector,
    pub identity_code: FeatureVector,
}

/// Sinusoidal identity code for an object index.
pub fn identity_code(index: u32) -> FeatureVector {
    let mut v = vec![0.0; D_E];
    for d in 0..D_E / 2 {
        let angle = f64::from(index) / 10000f64.powf(2.0 * d as f64 / D_E as f64);
        v[2 * d] = angle.sin();
        v[2 * d + 1] = angle.cos();
    }
    FeatureVector::new(v, FeatureTag::Fused)
}

/// Row-major `D_E × D_FUSED_IN` fusion weights drawn from uniform(−a, a), `a = 1/sqrt(fan_in)`.
pub fn fusion_weights() -> &'static [f64] {
    static W: OnceLock<Vec<f64>> = OnceLock::new();
    W.get_or_init(|| {
        let a = 1.0 / (D_FUSED_IN as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(FUSION_SEED);
        (0..D_E * D_FUSED_IN).map(|_| rng.gen_range(-a..a)).collect()
    })
}

pub fn fuse_object_embedding(
    f_geo: &FeatureVector,
    f_txt: &FeatureVector,
    f_vis: &FeatureVector,
    object_index: u32,
) -> Result<ObjectEmbedding> {
    for (f, tag) in [
        (f_geo, FeatureTag::Geo),
        (f_txt, FeatureTag::Txt),
        (f_vis, FeatureTag::Vis),
    ] {
        if f.tag != tag {
            return Err(Error::Contract(format!("expected {tag:?} feature, got {:?}", f.tag)));
        }
        f.check()?;
    }
    let input: Vec<f64> = f_geo
        .values
        .iter()
        .chain(&f_txt.values)
        .chain(&f_vis.values)
        .copied()
        .collect();
    let w = fusion_weights();
    let code = identity_code(object_index);
    let values = (0..D_E)
        .map(|r| {
            let row = &w[r * D_FUSED_IN..(r + 1) * D_FUSED_IN];
            // ascending-index accumulation
            let mut acc = 0.0;
            for (wi, xi) in row.iter().zip(&input) {
                acc += wi * xi;
            }
            acc.tanh() + code.values[r]
        })
        .collect();
    Ok(ObjectEmbedding {
        object_index,
        vector: FeatureVector::new(values, FeatureTag::Fused),
        identity_code: code,
    })
}

/// Embedding of one object from its spec; geometry from the mid-trajectory box.
pub fn embed_object(spec: &ObjectSpec, bounds: &SceneBounds) -> Result<ObjectEmbedding> {
    let mid = spec
        .mid_box()
        .ok_or_else(|| Error::Contract(format!("object {} has no trajectory", spec.index)))?;
    let f_geo = fourier_encode_box(&mid, bounds, K_FREQ)?;
    let f_txt = embed_text(spec.category, spec.color, &spec.style_tokens);
    let f_vis = match &spec.reference_appearance {
        Some(img) => embed_appearance(img)?,
        None => FeatureVector::zeros(D_VIS, FeatureTag::Vis),
    };
    fuse_object_embedding(&f_geo, &f_txt, &f_vis, spec.index)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalCondition {
    pub spec: ObjectSpec,
    pub embedding: ObjectEmbedding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSet {
    pub global: GlobalConditions,
    pub bounds: SceneBounds,
    /// One entry per object, ascending by index.
    pub locals: Vec<LocalCondition>,
}

impl ConditionSet {
    pub fn local(&self, index: u32) -> Option<&LocalCondition> {
        self.locals.iter().find(|l| l.spec.index == index)
    }

    /// Stable 64-bit digest of the conditions that drive rendering.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Sha256::new();
        let g = &self.global;
        h.update(g.weather.token());
        h.update(g.time_of_day.token());
        for (a, w) in &g.emphasis_weights {
            h.update(a.name());
            h.update(w.to_bits().to_le_bytes());
        }
        for e in &g.ego_trajectory {
            for v in [f64::from(e.frame), e.x, e.y, e.yaw] {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        for line in &g.road_map {
            h.update((line.len() as u64).to_le_bytes());
            for p in line {
                h.update(p[0].to_bits().to_le_bytes());
                h.update(p[1].to_bits().to_le_bytes());
            }
        }
        for l in &self.locals {
            h.update(l.spec.index.to_le_bytes());
            for v in &l.embedding.vector.values {
                h.update(v.to_bits().to_le_bytes());
            }
            for (f, b) in &l.spec.trajectory {
                h.update(f.to_le_bytes());
                for v in b.center.iter().chain(&b.size).chain(std::iter::once(&b.yaw)) {
                    h.update(v.to_bits().to_le_bytes());
                }
            }
        }
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
    }
}

/// Assemble the global and per-object conditions of a scenario.
pub fn build_conditions(scenario: &Scenario) -> Result<ConditionSet> {
    let locals = scenario
        .objects_by_index()
        .into_iter()
        .map(|spec| {
            Ok(LocalCondition {
                embedding: embed_object(spec, &scenario.scene_bounds)?,
                spec: spec.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConditionSet {
        global: scenario.global.clone(),
        bounds: scenario.scene_bounds,
        locals,
    })
}
