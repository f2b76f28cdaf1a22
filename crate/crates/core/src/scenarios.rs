//! Bundled scenario builders: the six-camera demo and seeded random variants.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{project_box, Camera};
use crate::scene::{
    BoxPose3D, EgoPose, FaultKind, FaultSpec, FaultTarget, GlobalConditions, ObjectSpec, Scenario, SceneBounds,
};
use crate::vocab::{Category, Color, Style, TimeOfDay, Weather};

/// Typical length, width, height in meters.
pub fn nominal_size(category: Category) -> [f64; 3] {
    match category {
        Category::Car => [4.5, 1.9, 1.5],
        Category::Bus => [11.0, 2.6, 3.2],
        Category::Truck => [7.0, 2.5, 3.0],
        Category::ConstructionVehicle => [6.5, 2.6, 3.2],
        Category::Pedestrian => [0.6, 0.6, 1.8],
        Category::Trailer => [9.0, 2.5, 3.4],
    }
}

pub fn default_bounds() -> SceneBounds {
    SceneBounds {
        min: [-60.0, -60.0, -2.0],
        max: [60.0, 60.0, 8.0],
    }
}

/// Ego held at the origin, where the world-fixed rig is mounted.
pub fn parked_ego(num_frames: u32) -> Vec<EgoPose> {
    (0..num_frames)
        .map(|f| EgoPose {
            frame: f,
            x: 0.0,
            y: 0.0,
            yaw: 0.0,
        })
        .collect()
}

/// Four lane lines along +x.
pub fn straight_road() -> Vec<Vec<[f64; 2]>> {
    [-5.25, -1.75, 1.75, 5.25]
        .iter()
        .map(|y| vec![[-55.0, *y], [0.0, *y], [55.0, *y]])
        .collect()
}

/// Object moving in a straight line from `start` by `velocity` meters per frame.
#[allow(clippy::too_many_arguments)]
pub fn moving_object(
    index: u32,
    category: Category,
    color: Color,
    styles: Vec<Style>,
    start: [f64; 2],
    velocity: [f64; 2],
    yaw: f64,
    num_frames: u32,
) -> ObjectSpec {
    let size = nominal_size(category);
    let z = size[2] / 2.0;
    let last = num_frames - 1;
    let mut trajectory = BTreeMap::new();
    trajectory.insert(0, BoxPose3D::new([start[0], start[1], z], size, yaw));
    if last > 0 {
        let end = [
            start[0] + velocity[0] * f64::from(last),
            start[1] + velocity[1] * f64::from(last),
            z,
        ];
        trajectory.insert(last, BoxPose3D::new(end, size, yaw));
    }
    ObjectSpec {
        index,
        category,
        color,
        style_tokens: styles,
        trajectory,
        reference_appearance: None,
        reference_path: None,
    }
}

/// Six views, eight frames, five objects, sunny day, no faults.
///
/// Traffic is stopped, so every object holds its pose; each sits fully inside one view.
pub fn demo_scenario() -> Scenario {
    let t = 8;
    let parked = |index, category, color, styles, at: [f64; 2], yaw| {
        moving_object(index, category, color, styles, at, [0.0, 0.0], yaw, t)
    };
    let objects = vec![
        parked(0, Category::Car, Color::Red, vec![Style::Clean], [16.0, -2.0], 0.0),
        parked(1, Category::Bus, Color::Yellow, vec![Style::Boxy], [14.0, 24.2], 0.0),
        parked(
            2,
            Category::ConstructionVehicle,
            Color::Yellow,
            vec![Style::Modern],
            [-9.0, 16.0],
            0.5,
        ),
        parked(3, Category::Truck, Color::Blue, vec![Style::Dirty], [-20.0, 3.0], 0.3),
        parked(
            4,
            Category::Trailer,
            Color::Green,
            vec![Style::Long],
            [10.0, -17.3],
            0.0,
        ),
    ];
    Scenario {
        global: GlobalConditions {
            ego_trajectory: parked_ego(t),
            road_map: straight_road(),
            ..GlobalConditions::new(Weather::Sunny, TimeOfDay::Day)
        },
        objects,
        rig: Camera::surround_rig(128, 128),
        num_frames: t,
        scene_bounds: default_bounds(),
        fault_plan: Vec::new(),
    }
}

/// Options for [`random_scenario`].
#[derive(Debug, Clone)]
pub struct RandomOptions {
    pub num_objects: usize,
    pub num_frames: u32,
    pub allow_pedestrians: bool,
    pub randomize_conditions: bool,
    /// Objects drive; otherwise they hold their first pose.
    pub moving: bool,
    /// Resample placements until no two projected boxes overlap in any view and frame.
    pub separated: bool,
    /// Place objects near camera axes, each wholly inside exactly one view
    /// with a projected rectangle at least [`FRAMED_MIN_SIDE`] pixels on a side.
    pub framed: bool,
    /// Keep every object at least this far from the rig, meters.
    pub min_range: f64,
    pub max_range: f64,
}

impl Default for RandomOptions {
    fn default() -> Self {
        Self {
            num_objects: 5,
            num_frames: 8,
            allow_pedestrians: true,
            randomize_conditions: true,
            moving: true,
            separated: false,
            framed: false,
            min_range: 9.0,
            max_range: 28.0,
        }
    }
}

const MAX_PLACEMENT_ATTEMPTS: usize = 64;

pub const FRAMED_MIN_SIDE: f64 = 12.0;

/// True when every frame shows the object in exactly one view, unclipped and large enough.
fn well_framed(o: &ObjectSpec, rig: &[Camera], num_frames: u32) -> bool {
    (0..num_frames).all(|t| {
        let Some(bx) = o.box_at(t) else { return false };
        let mut views = 0;
        for cam in rig {
            let Some(poly) = project_box(&bx, cam) else { continue };
            let Some(clip) = poly.clipped_rect(cam.width, cam.height) else {
                continue;
            };
            views += 1;
            let r = poly.rect;
            let inside = clip == r;
            if !inside || (r.x1 - r.x0).min(r.y1 - r.y0) < FRAMED_MIN_SIDE {
                return false;
            }
        }
        views == 1
    })
}

/// Whether two objects' projected rectangles intersect in any view and frame.
fn overlaps(a: &ObjectSpec, b: &ObjectSpec, rig: &[Camera], num_frames: u32) -> bool {
    rig.iter().any(|cam| {
        (0..num_frames).any(|t| {
            let rect = |o: &ObjectSpec| {
                o.box_at(t)
                    .and_then(|bx| project_box(&bx, cam))
                    .and_then(|p| p.clipped_rect(cam.width, cam.height))
            };
            matches!((rect(a), rect(b)), (Some(ra), Some(rb)) if ra.intersect(&rb).is_some())
        })
    })
}

/// Seeded random scenario on the surround rig. Objects sit in distinct angular sectors.
pub fn random_scenario(seed: u64, opts: &RandomOptions) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = opts.num_objects;
    let mut sectors: Vec<usize> = (0..if opts.framed { 6 } else { 12 }).collect();
    for i in (1..sectors.len()).rev() {
        sectors.swap(i, rng.gen_range(0..=i));
    }
    let categories: Vec<Category> = Category::ALL
        .iter()
        .copied()
        .filter(|c| opts.allow_pedestrians || *c != Category::Pedestrian)
        .collect();
    let rig = Camera::surround_rig(128, 128);
    let mut objects: Vec<ObjectSpec> = Vec::with_capacity(n);
    for k in 0..n {
        let sector = sectors[k % sectors.len()];
        let category = categories[rng.gen_range(0..categories.len())];
        let color = Color::ALL[rng.gen_range(0..Color::ALL.len())];
        let styles: Vec<Style> = Style::ALL.iter().copied().filter(|_| rng.gen_bool(0.3)).collect();
        let mut candidate = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let bearing = if opts.framed {
                ((sector % 6) as f64 * 60.0 + rng.gen_range(-12.0..12.0)).to_radians()
            } else {
                (sector as f64 * 30.0 + rng.gen_range(-8.0..8.0)).to_radians()
            };
            let range = rng.gen_range(opts.min_range..opts.max_range);
            let speed = rng.gen_range(0.0..0.4) * if opts.moving { 1.0 } else { 0.0 };
            let heading = rng.gen_range(-PI..PI);
            let o = moving_object(
                k as u32,
                category,
                color,
                styles.clone(),
                [range * bearing.cos(), range * bearing.sin()],
                [speed * heading.cos(), speed * heading.sin()],
                heading,
                opts.num_frames,
            );
            let clear = (!opts.framed || well_framed(&o, &rig, opts.num_frames))
                && (!opts.separated || objects.iter().all(|p| !overlaps(p, &o, &rig, opts.num_frames)));
            candidate = Some(o);
            if clear {
                break;
            }
        }
        objects.push(candidate.expect("at least one placement attempt"));
    }
    let (weather, time) = if opts.randomize_conditions {
        (
            Weather::ALL[rng.gen_range(0..Weather::ALL.len())],
            TimeOfDay::ALL[rng.gen_range(0..TimeOfDay::ALL.len())],
        )
    } else {
        (Weather::Sunny, TimeOfDay::Day)
    };
    Scenario {
        global: GlobalConditions {
            ego_trajectory: parked_ego(opts.num_frames),
            road_map: straight_road(),
            ..GlobalConditions::new(weather, time)
        },
        objects,
        rig,
        num_frames: opts.num_frames,
        scene_bounds: default_bounds(),
        fault_plan: Vec::new(),
    }
}

pub fn object_fault(kind: FaultKind, index: u32, severity: f64) -> FaultSpec {
    FaultSpec {
        kind,
        target: FaultTarget::Object(index),
        deactivation_weight: 1.0,
        severity,
    }
}

pub fn weather_tint(deactivation_weight: f64, severity: f64) -> FaultSpec {
    FaultSpec {
        kind: FaultKind::WeatherTint,
        target: FaultTarget::Global,
        deactivation_weight,
        severity,
    }
}
