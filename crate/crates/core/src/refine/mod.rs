//! Object-level refinement: localize a flagged object with projected box masks,
//! re-render it from a rigid proxy at its trajectory, and composite the proxy
//! back with a feathered blend that leaves the rest of the frame untouched.

pub mod proxy;

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::encoder::ConditionSet;
use crate::error::{Error, Result};
use crate::geometry::{project_box, Camera};
use crate::image::{Mask, RgbImage};
use crate::raster::convex_spans;
use crate::render::signature::Lighting;
use crate::render::{add_grain, grain_field, MultiviewVideo};
use crate::scene::ObjectSpec;
use proxy::{draw_parts, synthesize_proxy, ProxyMesh};

#[derive(Debug, Clone, PartialEq)]
pub struct MaskSequence {
    pub object_index: u32,
    /// Present exactly where the object's box projects into the view.
    pub masks: BTreeMap<(u32, u32), Mask>,
}

/// Fill of the projected box hull on every `(view, frame)` where the projection exists.
pub fn make_masks(spec: &ObjectSpec, rig: &[Camera], num_frames: u32) -> MaskSequence {
    let mut masks = BTreeMap::new();
    for (v, cam) in rig.iter().enumerate() {
        for t in 0..num_frames {
            let Some(poly) = spec.box_at(t).and_then(|b| project_box(&b, cam)) else {
                continue;
            };
            let mut m = Mask::new(cam.width, cam.height);
            for s in convex_spans(&poly.hull, cam.width, cam.height) {
                for x in s.x0..s.x1 {
                    m.set(x, s.y, true);
                }
            }
            masks.insert((v as u32, t), m);
        }
    }
    MaskSequence {
        object_index: spec.index,
        masks,
    }
}

/// RGB raster with a binary alpha channel.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbaLayer {
    pub rgb: RgbImage,
    pub alpha: Mask,
}

impl RgbaLayer {
    pub fn transparent(width: u32, height: u32) -> Self {
        Self {
            rgb: RgbImage::new(width, height),
            alpha: Mask::new(width, height),
        }
    }

    pub fn is_transparent(&self) -> bool {
        self.alpha.area() == 0
    }
}

/// Shading context for proxy renders. `grain_seed` reproduces the generator's sensor grain.
#[derive(Debug, Clone, Copy)]
pub struct ProxyShading {
    pub lighting: Lighting,
    pub grain_seed: Option<u64>,
}

/// Render the proxy on every `(view, frame)`, view-major. Alpha is 1 inside the silhouette.
pub fn render_proxy(mesh: &ProxyMesh, rig: &[Camera], num_frames: u32, shading: &ProxyShading) -> Vec<RgbaLayer> {
    let cells: Vec<(u32, u32)> = (0..rig.len() as u32)
        .flat_map(|v| (0..num_frames).map(move |t| (v, t)))
        .collect();
    cells
        .par_iter()
        .map(|&(v, t)| {
            let cam = &rig[v as usize];
            let mut layer = RgbaLayer::transparent(cam.width, cam.height);
            if let Some(pose) = mesh.pose_at(t) {
                draw_parts(
                    &mesh.parts,
                    &pose,
                    cam,
                    &shading.lighting,
                    None,
                    (0.0, 0.0),
                    |x, y, rgb| {
                        layer.rgb.put(x, y, rgb);
                        layer.alpha.set(x, y, true);
                    },
                );
            }
            if let Some(seed) = shading.grain_seed {
                add_grain(&mut layer.rgb, &grain_field(seed, v, cam.width, cam.height));
            }
            layer
        })
        .collect()
}

/// Chebyshev distance from each pixel to the nearest pixel of the opposite label,
/// capped at `cap`. Pixels beyond the image border count as the same label.
fn boundary_distance(mask: &Mask, cap: u32) -> Vec<u32> {
    let (w, h) = (mask.width as i64, mask.height as i64);
    let mut out = vec![cap; mask.data.len()];
    for y in 0..h {
        for x in 0..w {
            let here = mask.get(x as u32, y as u32);
            'rings: for r in 1..i64::from(cap) {
                for yy in (y - r).max(0)..=(y + r).min(h - 1) {
                    for xx in (x - r).max(0)..=(x + r).min(w - 1) {
                        if (yy - y).abs().max((xx - x).abs()) == r && mask.get(xx as u32, yy as u32) != here {
                            out[(y * w + x) as usize] = r as u32;
                            break 'rings;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Blend weight of the object layer per pixel: 1 inside the mask eroded by
/// `feather`, 0 outside the mask dilated by `feather`, linear in between.
pub fn feather_weights(mask: &Mask, feather: u32) -> Vec<f64> {
    let d = boundary_distance(mask, feather + 1);
    let span = f64::from(2 * feather + 1);
    mask.data
        .iter()
        .zip(d)
        .map(|(inside, d)| {
            let s = f64::from(d) - 0.5;
            let s = if *inside { s } else { -s };
            ((s + f64::from(feather) + 0.5) / span).clamp(0.0, 1.0)
        })
        .collect()
}

/// Composite object layers into the video under the masks.
///
/// Where the mask covers pixels still attributed to the object but the layer is
/// transparent, the nearest earlier frame of the same view that shows something
/// else at that pixel supplies the fill.
pub fn composite(
    video: &MultiviewVideo,
    layers: &[RgbaLayer],
    masks: &MaskSequence,
    feather: u32,
) -> Result<MultiviewVideo> {
    if layers.len() != video.frames.len() {
        return Err(Error::Contract(format!(
            "{} layers for {} frames",
            layers.len(),
            video.frames.len()
        )));
    }
    let id = masks.object_index as u16 + 1;
    let mut out = video.clone();
    let frames: Vec<_> = (0..video.frames.len())
        .into_par_iter()
        .map(|k| {
            let src = &video.frames[k];
            let Some(mask) = masks.masks.get(&(src.view, src.frame_index)) else {
                return Ok(src.clone());
            };
            let layer = &layers[k];
            let (w, h) = (src.pixels.width, src.pixels.height);
            if mask.width != w || mask.height != h || layer.rgb.width != w || layer.rgb.height != h {
                return Err(Error::Contract(format!(
                    "dimension mismatch at view {} frame {}",
                    src.view, src.frame_index
                )));
            }
            let weights = feather_weights(mask, feather);
            let mut f = src.clone();
            for y in 0..h {
                for x in 0..w {
                    let p = (y * w + x) as usize;
                    let t = weights[p];
                    if t <= 0.0 {
                        continue;
                    }
                    if layer.alpha.get(x, y) {
                        let a = src.pixels.get(x, y);
                        let b = layer.rgb.get(x, y);
                        let px = if t >= 1.0 {
                            b
                        } else {
                            [0, 1, 2].map(|c| (f64::from(a[c]) * (1.0 - t) + f64::from(b[c]) * t).round() as u8)
                        };
                        f.pixels.put(x, y, px);
                        if mask.get(x, y) {
                            f.instance_ids.put(x, y, id);
                        }
                    } else if mask.get(x, y) && src.instance_ids.get(x, y) == id {
                        let prior = (0..src.frame_index)
                            .rev()
                            .map(|pt| video.frame(src.view, pt))
                            .find(|pf| {
                                pf.pixels.width == w && pf.pixels.height == h && pf.instance_ids.get(x, y) != id
                            });
                        if let Some(pf) = prior {
                            f.pixels.put(x, y, pf.pixels.get(x, y));
                            f.instance_ids.put(x, y, pf.instance_ids.get(x, y));
                        }
                    }
                }
            }
            Ok(f)
        })
        .collect::<Result<_>>()?;
    out.frames = frames;
    Ok(out)
}

/// Grow a mask by `r` pixels in Chebyshev distance.
pub fn dilate(mask: &Mask, r: u32) -> Mask {
    if r == 0 {
        return mask.clone();
    }
    let d = boundary_distance(mask, r + 1);
    let mut out = mask.clone();
    for (k, inside) in mask.data.iter().enumerate() {
        if !inside && d[k] <= r {
            out.data[k] = true;
        }
    }
    out
}

/// What a refinement touched.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub object_index: u32,
    pub masks: MaskSequence,
    /// Cells where the object's mask was non-empty.
    pub cells: Vec<(u32, u32)>,
}

/// Repair one object across all views and frames.
///
/// The compositing masks are the projected hulls dilated by `feather`. Pixels that belong to objects nearer to the camera are removed from the
/// compositing mask so the proxy never paints over an occluder.
pub fn refine_object(
    video: &MultiviewVideo,
    conditions: &ConditionSet,
    rig: &[Camera],
    index: u32,
    feather: u32,
) -> Result<(MultiviewVideo, Refinement)> {
    let local = conditions
        .local(index)
        .ok_or_else(|| Error::Contract(format!("no object with index {index}")))?;
    let spec = &local.spec;
    let mesh = synthesize_proxy(spec, Some(&local.embedding));
    let g = &conditions.global;
    let shading = ProxyShading {
        lighting: Lighting::new(g.weather, g.time_of_day),
        grain_seed: Some(video.seed),
    };
    let layers = render_proxy(&mesh, rig, video.num_frames, &shading);
    let mut masks = make_masks(spec, rig, video.num_frames);
    // widen by the feather so the blend band lands on background, not on the object
    for mask in masks.masks.values_mut() {
        *mask = dilate(mask, feather);
    }

    for (&(v, t), mask) in masks.masks.iter_mut() {
        let cam = &rig[v as usize];
        let Some(own) = spec.box_at(t) else { continue };
        let own_depth = cam.depth_of(own.center);
        let nearer: Vec<u16> = conditions
            .locals
            .iter()
            .filter(|l| l.spec.index != index)
            .filter_map(|l| {
                let b = l.spec.box_at(t)?;
                let d = cam.depth_of(b.center);
                (d < own_depth || (d == own_depth && l.spec.index > index)).then_some(l.spec.index as u16 + 1)
            })
            .collect();
        if nearer.is_empty() {
            continue;
        }
        let ids = &video.frame(v, t).instance_ids;
        for y in 0..mask.height {
            for x in 0..mask.width {
                if mask.get(x, y) && nearer.contains(&ids.get(x, y)) {
                    mask.set(x, y, false);
                }
            }
        }
    }

    let refined = composite(video, &layers, &masks, feather)?;
    let cells = masks
        .masks
        .iter()
        .filter(|(_, m)| m.area() > 0)
        .map(|(k, _)| *k)
        .collect();
    Ok((
        refined,
        Refinement {
            object_index: index,
            masks,
            cells,
        },
    ))
}
