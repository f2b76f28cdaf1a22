//! Pinhole cameras and 3D box projection.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::scene::BoxPose3D;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// Pinhole camera with a world→camera rigid transform.
///
/// Camera axes: x right, y down, z forward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub width: u32,
    pub height: u32,
    pub near: f64,
}

impl Camera {
    /// Camera at `position` looking horizontally along world heading `yaw`, world z up.
    pub fn looking(position: [f64; 3], yaw: f64, intrinsics: Intrinsics, width: u32, height: u32) -> Self {
        let (s, c) = yaw.sin_cos();
        let rotation = Matrix3::new(
            s, -c, 0.0, //
            0.0, 0.0, -1.0, //
            c, s, 0.0,
        );
        let center = Vector3::from(position);
        Camera {
            intrinsics,
            rotation,
            translation: -(rotation * center),
            width,
            height,
            near: 0.1,
        }
    }

    /// The six-camera surround rig used by the bundled scenarios: front, front-left,
    /// back-left, back, back-right, front-right, 60° apart, mounted 1.5 m above the origin.
    pub fn surround_rig(width: u32, height: u32) -> Vec<Camera> {
        let f = 100.0 * f64::from(width) / 128.0;
        let k = Intrinsics {
            fx: f,
            fy: f,
            cx: f64::from(width) / 2.0,
            cy: f64::from(height) / 2.0,
        };
        (0..6)
            .map(|v| {
                let yaw = (f64::from(v) * 60.0).to_radians();
                Camera::looking([0.0, 0.0, 1.5], yaw, k, width, height)
            })
            .collect()
    }

    pub fn check(&self) -> Result<()> {
        let r = &self.rotation;
        let orthonormal = (r.transpose() * r - Matrix3::identity()).abs().max() <= 1e-9;
        if !orthonormal || (r.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::semantic("rotation", "must be orthonormal with determinant +1"));
        }
        let k = &self.intrinsics;
        if !(k.fx > 0.0 && k.fy > 0.0) {
            return Err(Error::semantic("intrinsics", "fx and fy must be positive"));
        }
        if !(k.cx >= 0.0 && k.cx < f64::from(self.width) && k.cy >= 0.0 && k.cy < f64::from(self.height)) {
            return Err(Error::semantic("intrinsics", "principal point outside the image"));
        }
        if !(self.near > 0.0) {
            return Err(Error::semantic("near", "must be positive"));
        }
        Ok(())
    }

    pub fn to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        let q = self.rotation * Vector3::from(p) + self.translation;
        [q.x, q.y, q.z]
    }

    /// Pinhole projection of a camera-space point with positive depth.
    pub fn project_camera_point(&self, q: [f64; 3]) -> [f64; 2] {
        let k = &self.intrinsics;
        [k.fx * q[0] / q[2] + k.cx, k.fy * q[1] / q[2] + k.cy]
    }

    /// World-space center of projection.
    pub fn center(&self) -> [f64; 3] {
        let c = -(self.rotation.transpose() * self.translation);
        [c.x, c.y, c.z]
    }

    /// World-space direction of the ray through pixel coordinates `(u, v)`.
    pub fn ray(&self, u: f64, v: f64) -> [f64; 3] {
        let k = &self.intrinsics;
        let d = Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
        let w = self.rotation.transpose() * d;
        [w.x, w.y, w.z]
    }

    /// Depth of a world point along the optical axis.
    pub fn depth_of(&self, p: [f64; 3]) -> f64 {
        self.to_camera(p)[2]
    }
}

/// Axis-aligned rectangle in pixel coordinates, `x0 <= x1`, `y0 <= y1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn area(&self) -> f64 {
        (self.x1 - self.x0).max(0.0) * (self.y1 - self.y0).max(0.0)
    }

    pub fn intersect(&self, o: &Rect) -> Option<Rect> {
        let r = Rect {
            x0: self.x0.max(o.x0),
            y0: self.y0.max(o.y0),
            x1: self.x1.min(o.x1),
            y1: self.y1.min(o.y1),
        };
        (r.x1 > r.x0 && r.y1 > r.y0).then_some(r)
    }

    pub fn iou(&self, o: &Rect) -> f64 {
        let inter = self.intersect(o).map_or(0.0, |r| r.area());
        let union = self.area() + o.area() - inter;
        if union > 0.0 {
            inter / union
        } else {
            0.0
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Rect {
        Rect {
            x0: self.x0 + dx,
            y0: self.y0 + dy,
            x1: self.x1 + dx,
            y1: self.y1 + dy,
        }
    }
}

/// Projected silhouette of a box: convex hull (counter-clockwise in pixel space) and its bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreenPolygon {
    pub hull: Vec<[f64; 2]>,
    pub rect: Rect,
}

impl ScreenPolygon {
    pub fn from_points(points: &[[f64; 2]]) -> Option<ScreenPolygon> {
        let hull = convex_hull(points);
        if hull.is_empty() {
            return None;
        }
        let mut rect = Rect {
            x0: f64::INFINITY,
            y0: f64::INFINITY,
            x1: f64::NEG_INFINITY,
            y1: f64::NEG_INFINITY,
        };
        for p in &hull {
            rect.x0 = rect.x0.min(p[0]);
            rect.y0 = rect.y0.min(p[1]);
            rect.x1 = rect.x1.max(p[0]);
            rect.y1 = rect.y1.max(p[1]);
        }
        Some(ScreenPolygon { hull, rect })
    }

    pub fn translated(&self, dx: f64, dy: f64) -> ScreenPolygon {
        ScreenPolygon {
            hull: self.hull.iter().map(|p| [p[0] + dx, p[1] + dy]).collect(),
            rect: self.rect.translated(dx, dy),
        }
    }

    /// Intersection of the bounding rectangle with the image plane.
    pub fn clipped_rect(&self, width: u32, height: u32) -> Option<Rect> {
        self.rect.intersect(&Rect {
            x0: 0.0,
            y0: 0.0,
            x1: f64::from(width),
            y1: f64::from(height),
        })
    }
}

/// Box edges as corner index pairs, matching [`BoxPose3D::corners`].
pub const BOX_EDGES: [(usize, usize); 12] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (3, 0),
    (4, 5),
    (5, 6),
    (6, 7),
    (7, 4),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// Project a convex point set given in world space, clipping at the near plane.
///
/// `edges` must cover the polytope's edges so that clipping can introduce the
/// vertices where the near plane cuts the solid.
pub fn project_convex(world: &[[f64; 3]], edges: &[(usize, usize)], camera: &Camera) -> Option<ScreenPolygon> {
    let cam: Vec<[f64; 3]> = world.iter().map(|p| camera.to_camera(*p)).collect();
    let near = camera.near;
    if cam.iter().all(|q| q[2] <= near) {
        return None;
    }
    let mut pts = Vec::with_capacity(24);
    for q in &cam {
        if q[2] > near {
            pts.push(camera.project_camera_point(*q));
        }
    }
    for &(a, b) in edges {
        let (qa, qb) = (cam[a], cam[b]);
        if (qa[2] > near) != (qb[2] > near) {
            let t = (near - qa[2]) / (qb[2] - qa[2]);
            let q = [0, 1, 2].map(|k| qa[k] + t * (qb[k] - qa[k]));
            pts.push(camera.project_camera_point([q[0], q[1], near]));
        }
    }
    ScreenPolygon::from_points(&pts)
}

/// Project a 3D box into a camera. Absent when the box lies entirely at or behind the near plane.
pub fn project_box(b: &BoxPose3D, camera: &Camera) -> Option<ScreenPolygon> {
    project_convex(&b.corners(), &BOX_EDGES, camera)
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain. Collinear points are dropped.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points
        .iter()
        .copied()
        .filter(|p| p[0].is_finite() && p[1].is_finite())
        .collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(pts.len() * 2);
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}
