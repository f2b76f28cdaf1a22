//! Parametric primitive assemblies standing in for generated 3D object meshes.
//!
//! The generator draws every object through the same assembly, so a proxy
//! rendered at the object's trajectory reproduces its clean appearance.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::encoder::ObjectEmbedding;
use crate::geometry::{project_box, project_convex, Camera, ScreenPolygon};
use crate::raster::convex_spans;
use crate::render::signature::Lighting;
use crate::scene::{BoxPose3D, ObjectSpec};
use crate::vocab::{Category, Color, Style};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shape {
    Box,
    /// Axis along local x.
    Cylinder,
    /// Axis along local z, hemispherical ends.
    Capsule,
}

/// One convex part, placed in the object frame (x forward, y left, z up, origin at the box center).
#[derive(Debug, Clone, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    pub offset: [f64; 3],
    /// Extent along local x, y, z.
    pub extent: [f64; 3],
    /// Rotation about the local y axis, radians; positive lifts the +x end.
    pub pitch: f64,
    pub color: [u8; 3],
    pub shade: f64,
}

const RING: usize = 12;
/// Shade of the box volume behind the parts.
pub const HULL_SHADE: f64 = 0.55;

impl Primitive {
    fn local_points(&self) -> Vec<[f64; 3]> {
        let [l, w, h] = self.extent;
        match self.shape {
            Shape::Box => {
                let mut pts = Vec::with_capacity(8);
                for sz in [-0.5, 0.5] {
                    for (sx, sy) in [(0.5, 0.5), (-0.5, 0.5), (-0.5, -0.5), (0.5, -0.5)] {
                        pts.push([sx * l, sy * w, sz * h]);
                    }
                }
                pts
            }
            Shape::Cylinder => {
                let r = w.min(h) / 2.0;
                let mut pts = Vec::with_capacity(2 * RING);
                for sx in [-0.5, 0.5] {
                    for k in 0..RING {
                        let a = 2.0 * PI * k as f64 / RING as f64;
                        pts.push([sx * l, r * a.cos(), r * a.sin()]);
                    }
                }
                pts
            }
            Shape::Capsule => {
                let r = (l.min(w) / 2.0).min(h / 2.0);
                let half = h / 2.0 - r;
                let mut pts = Vec::with_capacity(6 * RING + 2);
                for (z0, dir) in [(half, 1.0), (-half, -1.0)] {
                    for lat in [0.0f64, 30.0, 60.0] {
                        let (s, c) = lat.to_radians().sin_cos();
                        for k in 0..RING {
                            let a = 2.0 * PI * k as f64 / RING as f64;
                            pts.push([r * c * a.cos(), r * c * a.sin(), z0 + dir * r * s]);
                        }
                    }
                    pts.push([0.0, 0.0, z0 + dir * r]);
                }
                pts
            }
        }
    }

    /// Vertices in world coordinates for an object at `pose`.
    pub fn world_points(&self, pose: &BoxPose3D) -> Vec<[f64; 3]> {
        let (sp, cp) = self.pitch.sin_cos();
        let (sy, cy) = pose.yaw.sin_cos();
        self.local_points()
            .into_iter()
            .map(|p| {
                // pitch about local y, then offset, then object yaw and center
                let x = cp * p[0] - sp * p[2] + self.offset[0];
                let z = sp * p[0] + cp * p[2] + self.offset[2];
                let y = p[1] + self.offset[1];
                [
                    pose.center[0] + cy * x - sy * y,
                    pose.center[1] + sy * x + cy * y,
                    pose.center[2] + z,
                ]
            })
            .collect()
    }

    pub fn world_center(&self, pose: &BoxPose3D) -> [f64; 3] {
        let (sy, cy) = pose.yaw.sin_cos();
        let [x, y, z] = self.offset;
        [
            pose.center[0] + cy * x - sy * y,
            pose.center[1] + sy * x + cy * y,
            pose.center[2] + z,
        ]
    }

    pub fn project(&self, pose: &BoxPose3D, camera: &Camera) -> Option<ScreenPolygon> {
        let pts = self.world_points(pose);
        let edges: Vec<(usize, usize)> = (0..pts.len())
            .flat_map(|a| (a + 1..pts.len()).map(move |b| (a, b)))
            .collect();
        project_convex(&pts, &edges, camera)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyMesh {
    pub object_index: u32,
    pub category: Category,
    pub color: Color,
    pub parts: Vec<Primitive>,
    /// Keyframed trajectory the mesh follows.
    pub anchor: BTreeMap<u32, BoxPose3D>,
    /// Fused embedding the mesh was requested with.
    pub provenance: Option<Vec<f64>>,
}

struct Layout {
    body_height: f64,
    cabin_length: f64,
    cabin_offset: f64,
}

fn notch_layout(category: Category, styles: &[Style]) -> Layout {
    let mut l = match category {
        Category::Car => Layout {
            body_height: 0.55,
            cabin_length: 0.5,
            cabin_offset: -0.08,
        },
        Category::Bus => Layout {
            body_height: 0.8,
            cabin_length: 0.9,
            cabin_offset: -0.05,
        },
        _ => Layout {
            body_height: 0.45,
            cabin_length: 0.7,
            cabin_offset: -0.15,
        },
    };
    if styles.contains(&Style::Boxy) {
        l.cabin_length = (l.cabin_length + 0.15).min(0.95);
    }
    if styles.contains(&Style::Long) {
        l.cabin_length = (l.cabin_length - 0.1).max(0.3);
    }
    l.cabin_offset = l
        .cabin_offset
        .clamp(-(1.0 - l.cabin_length) / 2.0, (1.0 - l.cabin_length) / 2.0);
    l
}

/// Primitive assembly for a category, scaled to `size` (length, width, height).
pub fn assembly(category: Category, color: Color, styles: &[Style], size: [f64; 3]) -> Vec<Primitive> {
    let [l, w, h] = size;
    let rgb = color.rgb();
    let dirty = if styles.contains(&Style::Dirty) { 0.8 } else { 1.0 };
    let cabin_shade = if styles.contains(&Style::Modern) { 0.6 } else { 0.85 } * dirty;
    let part = |shape, offset, extent, pitch, shade| Primitive {
        shape,
        offset,
        extent,
        pitch,
        color: rgb,
        shade,
    };
    match category {
        Category::Car | Category::Bus | Category::Truck => {
            let lay = notch_layout(category, styles);
            let body_h = lay.body_height * h;
            let cabin_h = h - body_h;
            vec![
                part(
                    Shape::Box,
                    [0.0, 0.0, -h / 2.0 + body_h / 2.0],
                    [l, w, body_h],
                    0.0,
                    dirty,
                ),
                part(
                    Shape::Box,
                    [lay.cabin_offset * l, 0.0, h / 2.0 - cabin_h / 2.0],
                    [lay.cabin_length * l, w, cabin_h],
                    0.0,
                    cabin_shade,
                ),
            ]
        }
        Category::ConstructionVehicle => {
            let body_h = 0.55 * h;
            // arm rises from the rear of the body toward the front top corner
            let arm_r = 0.12 * w.min(h);
            let run = 0.7 * l - 2.0 * arm_r;
            let rise = h - body_h - 2.0 * arm_r;
            let pitch = rise.atan2(run);
            let arm_len = (run * run + rise * rise).sqrt();
            vec![
                part(
                    Shape::Box,
                    [0.0, 0.0, -h / 2.0 + body_h / 2.0],
                    [l, w, body_h],
                    0.0,
                    dirty,
                ),
                part(
                    Shape::Box,
                    [-0.3 * l, 0.0, -h / 2.0 + body_h + 0.15 * h],
                    [0.4 * l, w, 0.3 * h],
                    0.0,
                    cabin_shade,
                ),
                part(
                    Shape::Cylinder,
                    [0.15 * l, 0.0, -h / 2.0 + body_h + arm_r + rise / 2.0],
                    [arm_len, 2.0 * arm_r, 2.0 * arm_r],
                    pitch,
                    0.7 * dirty,
                ),
            ]
        }
        Category::Pedestrian => vec![part(Shape::Capsule, [0.0; 3], [l, w, h], 0.0, dirty)],
        Category::Trailer => vec![
            part(Shape::Box, [0.0, 0.0, 0.1 * h], [l, w, 0.8 * h], 0.0, dirty),
            part(
                Shape::Box,
                [0.0, 0.0, -0.4 * h],
                [0.96 * l, 0.9 * w, 0.2 * h],
                0.0,
                0.6 * dirty,
            ),
        ],
    }
}

/// Build the proxy for an object. The embedding is kept as provenance; geometry keys off the structured tokens.
pub fn synthesize_proxy(spec: &ObjectSpec, embedding: Option<&ObjectEmbedding>) -> ProxyMesh {
    let size = spec.trajectory.values().next().map_or([1.0; 3], |b| b.size);
    ProxyMesh {
        object_index: spec.index,
        category: spec.category,
        color: spec.color,
        parts: assembly(spec.category, spec.color, &spec.style_tokens, size),
        anchor: spec.trajectory.clone(),
        provenance: embedding.map(|e| e.vector.values.clone()),
    }
}

impl ProxyMesh {
    /// Pose on `frame`, interpolated like the object's trajectory.
    pub fn pose_at(&self, frame: u32) -> Option<BoxPose3D> {
        let tmp = ObjectSpec {
            index: self.object_index,
            category: self.category,
            color: self.color,
            style_tokens: Vec::new(),
            trajectory: self.anchor.clone(),
            reference_appearance: None,
            reference_path: None,
        };
        tmp.box_at(frame)
    }
}

/// Fill the projected box, then rasterize primitives far-to-near, calling `put(x, y, rgb)` per covered pixel.
///
/// `paint` replaces the primitives' own color; `shift` translates the projected
/// silhouettes in pixels.
pub fn draw_parts(
    parts: &[Primitive],
    pose: &BoxPose3D,
    camera: &Camera,
    lighting: &Lighting,
    paint: Option<[u8; 3]>,
    shift: (f64, f64),
    mut put: impl FnMut(u32, u32, [u8; 3]),
) {
    let distance = camera.depth_of(pose.center).max(0.0);
    let Some(first) = parts.first() else { return };
    if let Some(hull) = project_box(pose, camera) {
        // the body volume fills the whole projected box, dimmer than the parts
        let base = paint.unwrap_or(first.color).map(|c| f64::from(c) * HULL_SHADE);
        let rgb = lighting.shade(lighting.surface(base, distance));
        let hull = if shift == (0.0, 0.0) {
            hull
        } else {
            hull.translated(shift.0, shift.1)
        };
        for s in convex_spans(&hull.hull, camera.width, camera.height) {
            for x in s.x0..s.x1 {
                put(x, s.y, rgb);
            }
        }
    }
    let mut order: Vec<(f64, usize)> = parts
        .iter()
        .enumerate()
        .map(|(k, p)| (camera.depth_of(p.world_center(pose)), k))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for (_, k) in order {
        let p = &parts[k];
        let Some(poly) = p.project(pose, camera) else {
            continue;
        };
        let base = paint.unwrap_or(p.color).map(|c| f64::from(c) * p.shade);
        let rgb = lighting.shade(lighting.surface(base, distance));
        let poly = if shift == (0.0, 0.0) {
            poly
        } else {
            poly.translated(shift.0, shift.1)
        };
        for s in convex_spans(&poly.hull, camera.width, camera.height) {
            for x in s.x0..s.x1 {
                put(x, s.y, rgb);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::BoxPose3D;

    fn inside_box(p: [f64; 3], b: &BoxPose3D) -> bool {
        let dx = p[0] - b.center[0];
        let dy = p[1] - b.center[1];
        let (s, c) = b.yaw.sin_cos();
        let lx = c * dx + s * dy;
        let ly = -s * dx + c * dy;
        let lz = p[2] - b.center[2];
        let eps = 1e-9;
        lx.abs() <= b.size[0] / 2.0 + eps && ly.abs() <= b.size[1] / 2.0 + eps && lz.abs() <= b.size[2] / 2.0 + eps
    }

    #[test]
    fn assemblies_stay_inside_their_box() {
        let b = BoxPose3D::new([3.0, -2.0, 1.0], [6.0, 2.5, 3.0], 0.7);
        for cat in Category::ALL {
            for styles in [
                vec![],
                vec![Style::Boxy, Style::Dirty],
                vec![Style::Long, Style::Modern],
            ] {
                for p in assembly(*cat, Color::Red, &styles, b.size) {
                    for q in p.world_points(&b) {
                        assert!(inside_box(q, &b), "{cat:?} {:?} {q:?}", p.shape);
                    }
                }
            }
        }
    }

    #[test]
    fn red_car_is_red_boxes() {
        let parts = assembly(Category::Car, Color::Red, &[], [4.0, 2.0, 1.5]);
        assert_eq!(parts.len(), 2);
        assert!(parts
            .iter()
            .all(|p| p.shape == Shape::Box && p.color == Color::Red.rgb()));
    }

    #[test]
    fn construction_vehicle_has_arm() {
        let parts = assembly(Category::ConstructionVehicle, Color::Yellow, &[], [6.0, 2.5, 3.0]);
        assert!(parts.iter().any(|p| p.shape == Shape::Cylinder));
    }
}
