//! Procedural multiview generator.
//!
//! Renders a [`ConditionSet`] into a dense views × frames grid of RGB frames and
//! instance-ID buffers. Output is a pure function of the arguments: per-frame
//! sensor grain comes from a PRNG stream keyed by `(seed, view, frame)`.

pub mod signature;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::encoder::ConditionSet;
use crate::error::{Error, Result};
use crate::geometry::{project_box, Camera, Rect};
use crate::image::{write_file, IdBuffer, RgbImage};
use crate::raster::{clip_segment, line_pixels};
use crate::refine::proxy::{assembly, draw_parts};
use crate::scene::{FaultKind, FaultSpec, FaultTarget};
use crate::vocab::Attribute;
use signature::{to_u8, Lighting};

/// Grain amplitude in 8-bit levels.
pub const GRAIN_AMPLITUDE: i32 = 3;
/// Color-wheel steps applied by the recolor fault.
pub const RECOLOR_STEPS: usize = 3;
/// Luminance-neutral chroma shift of the weather tint fault at severity 1.
pub const TINT_SHIFT: [f64; 3] = [60.0, -42.0, 60.0];
const LANE_PAINT: [f64; 3] = [225.0, 225.0, 205.0];

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Frame {
    pub pixels: RgbImage,
    pub instance_ids: IdBuffer,
    pub view: u32,
    pub frame_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiviewVideo {
    pub num_views: u32,
    pub num_frames: u32,
    /// View-major: `frames[v * num_frames + t]`.
    pub frames: Vec<Frame>,
    pub seed: u64,
    pub conditions_fingerprint: u64,
}

impl MultiviewVideo {
    pub fn frame(&self, view: u32, t: u32) -> &Frame {
        &self.frames[(view * self.num_frames + t) as usize]
    }

    pub fn frame_mut(&mut self, view: u32, t: u32) -> &mut Frame {
        &mut self.frames[(view * self.num_frames + t) as usize]
    }

    pub fn is_complete(&self) -> bool {
        self.frames.len() == (self.num_views * self.num_frames) as usize
            && self
                .frames
                .iter()
                .enumerate()
                .all(|(k, f)| f.view * self.num_frames + f.frame_index == k as u32)
    }

    /// Write `view{v}_frame{t}.ppm` and `view{v}_frame{t}_ids.pgm` for every cell.
    pub fn export(&self, dir: &Path) -> Result<()> {
        for f in &self.frames {
            let stem = format!("view{}_frame{}", f.view, f.frame_index);
            write_file(&dir.join(format!("{stem}.ppm")), &f.pixels.encode_ppm())?;
            write_file(&dir.join(format!("{stem}_ids.pgm")), &f.instance_ids.encode_pgm16())?;
        }
        Ok(())
    }

    /// Read back a grid written by [`MultiviewVideo::export`].
    pub fn import(dir: &Path, num_views: u32, num_frames: u32) -> Result<MultiviewVideo> {
        let mut frames = Vec::with_capacity((num_views * num_frames) as usize);
        for v in 0..num_views {
            for t in 0..num_frames {
                let stem = format!("view{v}_frame{t}");
                let read = |name: String| std::fs::read(dir.join(&name)).map_err(|e| Error::Io(format!("{name}: {e}")));
                let pixels = RgbImage::decode_ppm(&read(format!("{stem}.ppm"))?)?;
                let instance_ids = IdBuffer::decode_pgm16(&read(format!("{stem}_ids.pgm"))?)?;
                frames.push(Frame {
                    pixels,
                    instance_ids,
                    view: v,
                    frame_index: t,
                });
            }
        }
        Ok(MultiviewVideo {
            num_views,
            num_frames,
            frames,
            seed: 0,
            conditions_fingerprint: 0,
        })
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-pixel sensor grain of one camera, row-major. The pattern is fixed per
/// camera, so a static scene renders identical frames.
pub fn grain_field(seed: u64, view: u32, width: u32, height: u32) -> Vec<i16> {
    let key = splitmix(seed ^ splitmix(u64::from(view)));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    (0..width as usize * height as usize)
        .map(|_| rng.gen_range(-GRAIN_AMPLITUDE..=GRAIN_AMPLITUDE) as i16)
        .collect()
}

pub fn add_grain(img: &mut RgbImage, grain: &[i16]) {
    for (px, g) in img.data.chunks_exact_mut(3).zip(grain) {
        for c in px {
            *c = (i16::from(*c) + g).clamp(0, 255) as u8;
        }
    }
}

/// Static background of one view: sky above the horizon, ground below, lane markings.
pub fn background(camera: &Camera, lighting: &Lighting, road_map: &[Vec<[f64; 2]>]) -> RgbImage {
    let eye = camera.center();
    let mut img = RgbImage::from_fn(camera.width, camera.height, |x, y| {
        let d = camera.ray(f64::from(x) + 0.5, f64::from(y) + 0.5);
        let rgb = if d[2] < 0.0 && eye[2] > 0.0 {
            let s = -eye[2] / d[2];
            lighting.ground(s * d[0].hypot(d[1]))
        } else {
            lighting.sky()
        };
        lighting.shade(rgb)
    });
    for line in road_map {
        for seg in line.windows(2) {
            draw_ground_segment(&mut img, camera, lighting, seg[0], seg[1]);
        }
    }
    img
}

fn draw_ground_segment(img: &mut RgbImage, camera: &Camera, lighting: &Lighting, a: [f64; 2], b: [f64; 2]) {
    let qa = camera.to_camera([a[0], a[1], 0.0]);
    let qb = camera.to_camera([b[0], b[1], 0.0]);
    let near = camera.near.max(0.5);
    let (qa, qb) = match (qa[2] > near, qb[2] > near) {
        (false, false) => return,
        (true, true) => (qa, qb),
        (ina, _) => {
            let t = (near - qa[2]) / (qb[2] - qa[2]);
            let q = [0, 1, 2].map(|k| qa[k] + t * (qb[k] - qa[k]));
            if ina {
                (qa, q)
            } else {
                (q, qb)
            }
        }
    };
    let pa = camera.project_camera_point(qa);
    let pb = camera.project_camera_point(qb);
    let (w, h) = (f64::from(img.width), f64::from(img.height));
    let Some((pa, pb)) = clip_segment(pa, pb, [0.0, 0.0], [w - 1e-9, h - 1e-9]) else {
        return;
    };
    let depth = (qa[2] + qb[2]) / 2.0;
    let rgb = lighting.shade(lighting.surface(LANE_PAINT, depth));
    for (x, y) in line_pixels(pa, pb, img.width, img.height) {
        img.put(x, y, rgb);
    }
}

/// Mean over a `(2r+1)²` window, applied inside `region` only.
pub fn box_blur_region(img: &mut RgbImage, region: (u32, u32, u32, u32), radius: u32) {
    let src = img.clone();
    let (x0, y0, x1, y1) = region;
    let r = radius as i64;
    for y in y0..y1 {
        for x in x0..x1 {
            let mut acc = [0u32; 3];
            let mut n = 0u32;
            for yy in (y as i64 - r).max(0)..=(y as i64 + r).min(i64::from(src.height) - 1) {
                for xx in (x as i64 - r).max(0)..=(x as i64 + r).min(i64::from(src.width) - 1) {
                    let p = src.get(xx as u32, yy as u32);
                    for c in 0..3 {
                        acc[c] += u32::from(p[c]);
                    }
                    n += 1;
                }
            }
            img.put(x, y, acc.map(|a| to_u8(f64::from(a) / f64::from(n))));
        }
    }
}

/// Pixel bounds `(x0, y0, x1, y1)` of a rectangle clipped to the image.
pub fn pixel_region(rect: &Rect, width: u32, height: u32) -> Option<(u32, u32, u32, u32)> {
    let x0 = rect.x0.floor().max(0.0);
    let y0 = rect.y0.floor().max(0.0);
    let x1 = rect.x1.ceil().min(f64::from(width));
    let y1 = rect.y1.ceil().min(f64::from(height));
    (x0 < x1 && y0 < y1).then_some((x0 as u32, y0 as u32, x1 as u32, y1 as u32))
}

/// Whether a scripted fault is active on this render.
pub fn fault_fires(fault: &FaultSpec, conditions: &ConditionSet) -> bool {
    match fault.kind {
        FaultKind::WeatherTint => conditions.global.emphasis(Attribute::Weather) < fault.deactivation_weight,
        _ => true,
    }
}

fn object_faults(plan: &[FaultSpec], index: u32) -> impl Iterator<Item = &FaultSpec> {
    plan.iter().filter(move |f| f.target == FaultTarget::Object(index))
}

/// Render every view and frame. `iteration` only tags the call; faults react to the emphasis weights.
pub fn render_scene(
    conditions: &ConditionSet,
    rig: &[Camera],
    num_frames: u32,
    seed: u64,
    fault_plan: &[FaultSpec],
    iteration: u32,
) -> MultiviewVideo {
    let _ = iteration;
    let g = &conditions.global;
    let lighting = Lighting::new(g.weather, g.time_of_day);
    let backgrounds: Vec<RgbImage> = rig
        .par_iter()
        .map(|cam| background(cam, &lighting, &g.road_map))
        .collect();
    let parts: Vec<_> = conditions
        .locals
        .iter()
        .map(|l| {
            let s = &l.spec;
            let size = s.trajectory.values().next().map_or([1.0; 3], |b| b.size);
            assembly(s.category, s.color, &s.style_tokens, size)
        })
        .collect();
    let tint: Option<f64> = fault_plan
        .iter()
        .filter(|f| f.kind == FaultKind::WeatherTint && fault_fires(f, conditions))
        .map(|f| f.severity)
        .reduce(f64::max);

    let cells: Vec<(u32, u32)> = (0..rig.len() as u32)
        .flat_map(|v| (0..num_frames).map(move |t| (v, t)))
        .collect();
    let frames = cells
        .par_iter()
        .map(|&(v, t)| {
            let cam = &rig[v as usize];
            let mut pixels = backgrounds[v as usize].clone();
            let mut ids = IdBuffer::new(cam.width, cam.height);

            let mut order: Vec<(f64, usize)> = conditions
                .locals
                .iter()
                .enumerate()
                .filter_map(|(k, l)| l.spec.box_at(t).map(|b| (cam.depth_of(b.center), k)))
                .collect();
            order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

            for (_, k) in &order {
                let local = &conditions.locals[*k];
                let spec = &local.spec;
                let pose = spec.box_at(t).expect("filtered above");
                let mut paint = None;
                let mut shift = (0.0, 0.0);
                let mut dropped = false;
                for f in object_faults(fault_plan, spec.index) {
                    match f.kind {
                        FaultKind::WrongColor if t % 2 == 1 => {
                            paint = Some(spec.color.rotated(RECOLOR_STEPS).rgb());
                        }
                        FaultKind::DropObject if t % 2 == 1 => dropped = true,
                        FaultKind::JitterBox => {
                            let d = (10.0 * f.severity).ceil();
                            shift.0 += if t % 2 == 0 { d } else { -d };
                        }
                        _ => {}
                    }
                }
                if dropped {
                    continue;
                }
                let id = spec.index as u16 + 1;
                draw_parts(&parts[*k], &pose, cam, &lighting, paint, shift, |x, y, rgb| {
                    pixels.put(x, y, rgb);
                    ids.put(x, y, id);
                });
            }

            add_grain(&mut pixels, &grain_field(seed, v, cam.width, cam.height));

            for local in &conditions.locals {
                for f in object_faults(fault_plan, local.spec.index) {
                    if f.kind != FaultKind::BlurObject {
                        continue;
                    }
                    let region = local
                        .spec
                        .box_at(t)
                        .and_then(|b| project_box(&b, cam))
                        .and_then(|p| pixel_region(&p.rect, cam.width, cam.height));
                    if let Some(region) = region {
                        box_blur_region(&mut pixels, region, (3.0 * f.severity).ceil() as u32);
                    }
                }
            }

            if let Some(severity) = tint {
                for px in pixels.data.chunks_exact_mut(3) {
                    for c in 0..3 {
                        px[c] = to_u8(f64::from(px[c]) + severity * TINT_SHIFT[c]);
                    }
                }
            }

            Frame {
                pixels,
                instance_ids: ids,
                view: v,
                frame_index: t,
            }
        })
        .collect();

    MultiviewVideo {
        num_views: rig.len() as u32,
        num_frames,
        frames,
        seed,
        conditions_fingerprint: conditions.fingerprint(),
    }
}
