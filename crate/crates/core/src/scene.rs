//! Scenario domain types: global conditions, object specs with keyframed
//! trajectories, camera rig and the scripted fault plan.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::config::W_MAX;
use crate::error::{Error, Result};
use crate::geometry::Camera;
use crate::image::RgbImage;
use crate::vocab::{Attribute, Category, Color, Style, TimeOfDay, Weather};

/// Wrap an angle into `[-π, π)`.
pub fn normalize_yaw(yaw: f64) -> f64 {
    if (-PI..PI).contains(&yaw) {
        return yaw;
    }
    let mut a = (yaw + PI).rem_euclid(2.0 * PI) - PI;
    if a >= PI {
        a -= 2.0 * PI;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoPose {
    pub frame: u32,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalConditions {
    pub weather: Weather,
    pub time_of_day: TimeOfDay,
    pub ego_trajectory: Vec<EgoPose>,
    pub road_map: Vec<Vec<[f64; 2]>>,
    pub emphasis_weights: BTreeMap<Attribute, f64>,
}

impl GlobalConditions {
    pub fn new(weather: Weather, time_of_day: TimeOfDay) -> Self {
        Self {
            weather,
            time_of_day,
            ego_trajectory: Vec::new(),
            road_map: Vec::new(),
            emphasis_weights: Attribute::ALL.iter().map(|a| (*a, 1.0)).collect(),
        }
    }

    pub fn emphasis(&self, attribute: Attribute) -> f64 {
        self.emphasis_weights.get(&attribute).copied().unwrap_or(1.0)
    }

    pub fn check(&self, num_frames: u32) -> Result<()> {
        let mut frames: Vec<u32> = self.ego_trajectory.iter().map(|p| p.frame).collect();
        frames.sort_unstable();
        if frames != (0..num_frames).collect::<Vec<_>>() {
            return Err(Error::semantic(
                "global.ego_trajectory",
                format!("must cover frames 0..{num_frames} exactly once"),
            ));
        }
        for (attr, w) in &self.emphasis_weights {
            if !(1.0..=W_MAX).contains(w) {
                return Err(Error::semantic(
                    format!("global.emphasis_weights.{}", attr.name()),
                    format!("weight {w} outside [1, {W_MAX}]"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxPose3D {
    pub center: [f64; 3],
    /// Length (along heading), width, height.
    pub size: [f64; 3],
    pub yaw: f64,
}

impl BoxPose3D {
    pub fn new(center: [f64; 3], size: [f64; 3], yaw: f64) -> Self {
        Self {
            center,
            size,
            yaw: normalize_yaw(yaw),
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.size.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::semantic("size", "components must be strictly positive"));
        }
        if !(-PI..PI).contains(&self.yaw) {
            return Err(Error::semantic("yaw", "must lie in [-pi, pi)"));
        }
        Ok(())
    }

    /// The eight corners in world coordinates. Bottom face first, counter-clockwise.
    pub fn corners(&self) -> [[f64; 3]; 8] {
        let (s, c) = self.yaw.sin_cos();
        let [l, w, h] = self.size;
        let mut out = [[0.0; 3]; 8];
        let signs = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];
        for (k, (sx, sy)) in signs.iter().enumerate() {
            let lx = sx * l / 2.0;
            let ly = sy * w / 2.0;
            let wx = self.center[0] + c * lx - s * ly;
            let wy = self.center[1] + s * lx + c * ly;
            out[k] = [wx, wy, self.center[2] - h / 2.0];
            out[k + 4] = [wx, wy, self.center[2] + h / 2.0];
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneBounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl SceneBounds {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    pub fn check(&self) -> Result<()> {
        if (0..3).any(|k| !(self.max[k] > self.min[k])) {
            return Err(Error::semantic("scene_bounds", "max must exceed min on every axis"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSpec {
    /// Tracked identity.
    pub index: u32,
    pub category: Category,
    pub color: Color,
    pub style_tokens: Vec<Style>,
    /// Keyframes; `box_at` interpolates between them.
    pub trajectory: BTreeMap<u32, BoxPose3D>,
    pub reference_appearance: Option<RgbImage>,
    /// Source path of the reference image as written in the scenario file.
    pub reference_path: Option<String>,
}

impl ObjectSpec {
    /// Inclusive frame range covered by the trajectory.
    pub fn frame_range(&self) -> Option<(u32, u32)> {
        let first = *self.trajectory.keys().next()?;
        let last = *self.trajectory.keys().next_back()?;
        Some((first, last))
    }

    /// Trajectory sample at `frame`; absent outside the keyframed range.
    pub fn box_at(&self, frame: u32) -> Option<BoxPose3D> {
        if let Some(b) = self.trajectory.get(&frame) {
            return Some(*b);
        }
        let (f0, b0) = self.trajectory.range(..frame).next_back()?;
        let (f1, b1) = self.trajectory.range(frame..).next()?;
        let t = f64::from(frame - f0) / f64::from(f1 - f0);
        let lerp = |a: f64, b: f64| a + (b - a) * t;
        let dyaw = normalize_yaw(b1.yaw - b0.yaw);
        Some(BoxPose3D {
            center: [0, 1, 2].map(|k| lerp(b0.center[k], b1.center[k])),
            size: [0, 1, 2].map(|k| lerp(b0.size[k], b1.size[k])),
            yaw: normalize_yaw(b0.yaw + dyaw * t),
        })
    }

    /// Box at the middle of the trajectory's frame range.
    pub fn mid_box(&self) -> Option<BoxPose3D> {
        let (a, b) = self.frame_range()?;
        self.box_at(a + (b - a) / 2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FaultKind {
    WeatherTint,
    WrongColor,
    BlurObject,
    DropObject,
    JitterBox,
}

impl FaultKind {
    pub fn token(self) -> &'static str {
        match self {
            FaultKind::WeatherTint => "weather_tint",
            FaultKind::WrongColor => "wrong_color",
            FaultKind::BlurObject => "blur_object",
            FaultKind::DropObject => "drop_object",
            FaultKind::JitterBox => "jitter_box",
        }
    }

    pub fn parse(token: &str) -> Result<Self> {
        Ok(match token {
            "weather_tint" => FaultKind::WeatherTint,
            "wrong_color" => FaultKind::WrongColor,
            "blur_object" => FaultKind::BlurObject,
            "drop_object" => FaultKind::DropObject,
            "jitter_box" => FaultKind::JitterBox,
            other => {
                return Err(Error::Vocabulary {
                    vocabulary: "fault kind",
                    token: other.to_string(),
                })
            }
        })
    }

    pub fn is_global(self) -> bool {
        matches!(self, FaultKind::WeatherTint)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultTarget {
    Global,
    Object(u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultSpec {
    pub kind: FaultKind,
    pub target: FaultTarget,
    /// Emphasis weight at or above which a weather fault stops firing.
    pub deactivation_weight: f64,
    pub severity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub global: GlobalConditions,
    pub objects: Vec<ObjectSpec>,
    pub rig: Vec<Camera>,
    pub num_frames: u32,
    pub scene_bounds: SceneBounds,
    pub fault_plan: Vec<FaultSpec>,
}

impl Scenario {
    pub fn num_views(&self) -> usize {
        self.rig.len()
    }

    pub fn object(&self, index: u32) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.index == index)
    }

    /// Objects sorted by index.
    pub fn objects_by_index(&self) -> Vec<&ObjectSpec> {
        let mut v: Vec<&ObjectSpec> = self.objects.iter().collect();
        v.sort_by_key(|o| o.index);
        v
    }

    /// Checks every invariant of the scenario and its parts. Pure.
    pub fn validate(&self) -> Result<()> {
        if self.rig.is_empty() {
            return Err(Error::semantic("rig", "at least one camera is required"));
        }
        if self.num_frames == 0 {
            return Err(Error::semantic("num_frames", "must be at least 1"));
        }
        self.scene_bounds.check()?;
        self.global.check(self.num_frames)?;
        for (v, cam) in self.rig.iter().enumerate() {
            cam.check().map_err(|e| prefix(e, &format!("rig[{v}]")))?;
        }
        let mut seen = std::collections::BTreeSet::new();
        for obj in &self.objects {
            if !seen.insert(obj.index) {
                return Err(Error::semantic(
                    format!("objects[{}].index", obj.index),
                    format!("duplicate object index {}", obj.index),
                ));
            }
            let field = format!("objects[{}].trajectory", obj.index);
            if obj.trajectory.is_empty() {
                return Err(Error::semantic(field, "trajectory is empty"));
            }
            for (frame, b) in &obj.trajectory {
                if *frame >= self.num_frames {
                    return Err(Error::semantic(
                        field,
                        format!("keyframe {frame} outside 0..{}", self.num_frames),
                    ));
                }
                b.check().map_err(|e| prefix(e, &field))?;
                if !self.scene_bounds.contains(b.center) {
                    return Err(Error::semantic(
                        field,
                        format!("box at frame {frame} lies outside scene_bounds"),
                    ));
                }
            }
        }
        for (k, fault) in self.fault_plan.iter().enumerate() {
            let field = format!("faults[{k}]");
            match (fault.kind.is_global(), fault.target) {
                (true, FaultTarget::Global) => {}
                (false, FaultTarget::Object(i)) if seen.contains(&i) => {}
                (false, FaultTarget::Object(i)) => {
                    return Err(Error::semantic(field, format!("targets missing object {i}")))
                }
                _ => {
                    return Err(Error::semantic(
                        field,
                        format!("target inconsistent with kind {}", fault.kind.token()),
                    ))
                }
            }
            if !(fault.severity > 0.0 && fault.severity <= 1.0) {
                return Err(Error::semantic(field, "severity must lie in (0, 1]"));
            }
        }
        Ok(())
    }
}

fn prefix(e: Error, field: &str) -> Error {
    match e {
        Error::Semantic { field: f, message } => Error::semantic(format!("{field}.{f}"), message),
        other => other,
    }
}
