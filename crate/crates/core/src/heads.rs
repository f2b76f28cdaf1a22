//! Projection heads mapping batch appearance and fused object embeddings into a
//! shared space where their cosine measures semantic agreement.
//!
//! Both heads are linear and fitted once, deterministically, on objects sampled
//! from a seeded stream and rendered by the generator. Each head is a ridge
//! regression onto centered one-hot color classes; a seeded orthonormal map
//! then lifts the class scores into the shared space. The appearance features
//! are brightness invariant, so white, silver and black share one class.
//!
//! `visual = R·Aᵀ`, `embedding = R·Cᵀ`, with `A` and `C` the ridge coefficients.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{D_E, D_SHARED, D_VIS, EMBEDDING_HEAD_SEED, K_FREQ, VISUAL_HEAD_SEED};
use crate::encoder::{build_conditions, embed_appearance, embed_text, fourier_encode_box, fuse_object_embedding};
use crate::evaluator::{batch_appearance, crop_object_batch};
use crate::geometry::Camera;
use crate::render::render_scene;
use crate::scenarios::{default_bounds, nominal_size, parked_ego};
use crate::scene::{BoxPose3D, GlobalConditions, ObjectSpec, Scenario};
use crate::vocab::{Category, Color, Style, TimeOfDay, Weather};

pub const CALIBRATION_SAMPLES: usize = 768;
pub const COLOR_CLASSES: usize = 5;
const RIDGE: f64 = 1e-4;

/// Color class resolvable from appearance: the four hues, then the achromatic colors.
pub fn color_class(color: Color) -> usize {
    match color {
        Color::Red => 0,
        Color::Yellow => 1,
        Color::Green => 2,
        Color::Blue => 3,
        Color::White | Color::Silver | Color::Black => 4,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHeads {
    /// `D_SHARED × D_VIS`.
    pub visual: DMatrix<f64>,
    /// `D_SHARED × D_E`.
    pub embedding: DMatrix<f64>,
}

impl ProjectionHeads {
    pub fn project_visual(&self, appearance: &[f64]) -> Vec<f64> {
        (&self.visual * DVector::from_column_slice(appearance))
            .as_slice()
            .to_vec()
    }

    pub fn project_embedding(&self, embedding: &[f64]) -> Vec<f64> {
        (&self.embedding * DVector::from_column_slice(embedding))
            .as_slice()
            .to_vec()
    }
}

/// The calibrated heads, fitted on first use.
pub fn heads() -> &'static ProjectionHeads {
    static HEADS: OnceLock<ProjectionHeads> = OnceLock::new();
    HEADS.get_or_init(|| calibrate(CALIBRATION_SAMPLES))
}

/// One calibration pair: fused embedding and the mean appearance of its rendered crops.
pub struct CalibrationSample {
    pub embedding: Vec<f64>,
    pub appearance: Vec<f64>,
    pub class: usize,
}

fn sample(k: usize) -> Option<CalibrationSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(EMBEDDING_HEAD_SEED.wrapping_add(k as u64 * 0x9E37_79B9));
    let category = Category::ALL[rng.gen_range(0..Category::ALL.len())];
    let color = Color::ALL[rng.gen_range(0..Color::ALL.len())];
    let styles: Vec<Style> = Style::ALL.iter().copied().filter(|_| rng.gen_bool(0.3)).collect();
    let index = rng.gen_range(0..64u32);
    let nominal = nominal_size(category);
    let scale = rng.gen_range(0.85..1.15);
    let size = nominal.map(|s| s * scale);
    let range = rng.gen_range(8.0..35.0);
    let bearing: f64 = rng.gen_range(0.0..360.0f64).to_radians();
    let yaw = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    let pose = BoxPose3D::new([range * bearing.cos(), range * bearing.sin(), size[2] / 2.0], size, yaw);
    // the rig camera whose axis is closest to the object
    let view = ((bearing.to_degrees() / 60.0).round() as usize) % 6;
    let weather = Weather::ALL[rng.gen_range(0..Weather::ALL.len())];
    let time = TimeOfDay::ALL[rng.gen_range(0..TimeOfDay::ALL.len())];
    let with_reference = rng.gen_bool(0.25);
    let seed = rng.gen::<u64>();

    let spec = ObjectSpec {
        index,
        category,
        color,
        style_tokens: styles,
        trajectory: [(0, pose)].into_iter().collect(),
        reference_appearance: None,
        reference_path: None,
    };
    let scenario = Scenario {
        global: GlobalConditions {
            ego_trajectory: parked_ego(1),
            ..GlobalConditions::new(weather, time)
        },
        objects: vec![spec.clone()],
        rig: vec![Camera::surround_rig(128, 128).swap_remove(view)],
        num_frames: 1,
        scene_bounds: default_bounds(),
        fault_plan: Vec::new(),
    };
    let conditions = build_conditions(&scenario).ok()?;
    let video = render_scene(&conditions, &scenario.rig, 1, seed, &[], 0);
    let batch = crop_object_batch(&video, &spec, &scenario.rig);
    if batch.is_empty() {
        return None;
    }
    let appearance = batch_appearance(&batch).ok()?;

    let embedding = if with_reference {
        let f_vis = embed_appearance(&batch.crops[0].image).ok()?;
        let f_geo = fourier_encode_box(&pose, &scenario.scene_bounds, K_FREQ).ok()?;
        let f_txt = embed_text(category, color, &spec.style_tokens);
        fuse_object_embedding(&f_geo, &f_txt, &f_vis, index).ok()?
    } else {
        conditions.locals[0].embedding.clone()
    };
    Some(CalibrationSample {
        embedding: embedding.vector.values,
        appearance: appearance.values,
        class: color_class(color),
    })
}

pub fn calibration_set(n: usize) -> Vec<CalibrationSample> {
    (0..n).into_par_iter().filter_map(sample).collect()
}

pub fn calibrate(n: usize) -> ProjectionHeads {
    fit(&calibration_set(n))
}

pub fn fit(samples: &[CalibrationSample]) -> ProjectionHeads {
    fit_with_ridge(samples, RIDGE)
}

/// Ridge solution of `features · W ≈ targets`, regularized relative to the mean Gram diagonal.
fn ridge(features: &DMatrix<f64>, targets: &DMatrix<f64>, strength: f64) -> DMatrix<f64> {
    let d = features.ncols();
    let gram = features.transpose() * features;
    let reg = strength * gram.trace() / d as f64;
    (gram + DMatrix::identity(d, d) * reg)
        .cholesky()
        .expect("ridge system is positive definite")
        .solve(&(features.transpose() * targets))
}

/// [`fit`] with an explicit ridge strength.
pub fn fit_with_ridge(samples: &[CalibrationSample], strength: f64) -> ProjectionHeads {
    let n = samples.len();
    let k = COLOR_CLASSES;
    let e = DMatrix::from_fn(n, D_E, |i, j| samples[i].embedding[j]);
    let x = DMatrix::from_fn(n, D_VIS, |i, j| samples[i].appearance[j]);
    let y = DMatrix::from_fn(n, k, |i, c| f64::from(u8::from(samples[i].class == c)) - 1.0 / k as f64);

    let a = ridge(&x, &y, strength);
    let c = ridge(&e, &y, strength);

    let mut rng = ChaCha8Rng::seed_from_u64(VISUAL_HEAD_SEED);
    let g = DMatrix::from_fn(D_SHARED, k, |_, _| rng.gen_range(-1.0..1.0));
    let r = g.qr().q();

    ProjectionHeads {
        visual: &r * a.transpose(),
        embedding: &r * c.transpose(),
    }
}

/// Heads from explicit matrices, e.g. for tests that need a known shared space.
pub fn from_matrices(visual: DMatrix<f64>, embedding: DMatrix<f64>) -> ProjectionHeads {
    assert_eq!(visual.ncols(), D_VIS);
    assert_eq!(embedding.ncols(), D_E);
    assert_eq!(visual.nrows(), embedding.nrows());
    ProjectionHeads { visual, embedding }
}
