//! JSON scenario files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Camera, Intrinsics};
use crate::image::RgbImage;
use crate::scene::{
    BoxPose3D, EgoPose, FaultKind, FaultSpec, FaultTarget, GlobalConditions, ObjectSpec, Scenario, SceneBounds,
};
use crate::vocab::{Attribute, Category, Color, Style, TimeOfDay, Weather};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileScenario {
    global: FileGlobal,
    #[serde(default)]
    objects: Vec<FileObject>,
    rig: Vec<FileCamera>,
    num_frames: u32,
    scene_bounds: FileBounds,
    #[serde(default)]
    faults: Vec<FileFault>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileGlobal {
    weather: String,
    time_of_day: String,
    ego_trajectory: Vec<FileEgo>,
    #[serde(default)]
    road_map: Vec<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    emphasis_weights: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileEgo {
    frame: u32,
    x: f64,
    y: f64,
    yaw: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileObject {
    index: u32,
    category: String,
    color: String,
    #[serde(default)]
    style_tokens: Vec<String>,
    size: [f64; 3],
    trajectory: Vec<FileKey>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reference_appearance: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileKey {
    frame: u32,
    x: f64,
    y: f64,
    z: f64,
    yaw: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileCamera {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    rotation: [f64; 9],
    translation: [f64; 3],
    near: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileBounds {
    min: [f64; 3],
    max: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum FileTarget {
    Object(u32),
    Named(String),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileFault {
    kind: String,
    target: FileTarget,
    #[serde(default = "default_deactivation")]
    deactivation_weight: f64,
    severity: f64,
}

fn default_deactivation() -> f64 {
    1.0
}

/// Parse and validate scenario text. Relative reference-image paths resolve against the working directory.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    parse_scenario_in(text, None)
}

/// Read a scenario file; reference images resolve relative to the file's directory.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_scenario_in(&text, path.parent())
}

pub fn parse_scenario_in(text: &str, base: Option<&Path>) -> Result<Scenario> {
    let file: FileScenario = serde_json::from_str(text).map_err(|e| Error::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let scenario = from_file(file, base)?;
    scenario.validate()?;
    Ok(scenario)
}

fn from_file(f: FileScenario, base: Option<&Path>) -> Result<Scenario> {
    let mut global = GlobalConditions::new(
        Weather::parse(&f.global.weather)?,
        TimeOfDay::parse(&f.global.time_of_day)?,
    );
    global.ego_trajectory = f
        .global
        .ego_trajectory
        .iter()
        .map(|e| EgoPose {
            frame: e.frame,
            x: e.x,
            y: e.y,
            yaw: e.yaw,
        })
        .collect();
    global.road_map = f.global.road_map;
    if let Some(weights) = f.global.emphasis_weights {
        for (name, w) in weights {
            let attr = Attribute::parse(&name)
                .map_err(|_| Error::semantic(format!("global.emphasis_weights.{name}"), "unknown attribute"))?;
            global.emphasis_weights.insert(attr, w);
        }
    }

    let mut objects = Vec::with_capacity(f.objects.len());
    for o in f.objects {
        let mut trajectory = BTreeMap::new();
        for k in &o.trajectory {
            let b = BoxPose3D::new([k.x, k.y, k.z], o.size, k.yaw);
            if trajectory.insert(k.frame, b).is_some() {
                return Err(Error::semantic(
                    format!("objects[{}].trajectory", o.index),
                    format!("frame {} listed twice", k.frame),
                ));
            }
        }
        let reference_appearance = match &o.reference_appearance {
            Some(p) => {
                let path = resolve(base, p);
                Some(RgbImage::load(&path)?)
            }
            None => None,
        };
        if let Some(img) = &reference_appearance {
            if img.is_empty() || img.width > 64 || img.height > 64 {
                return Err(Error::semantic(
                    format!("objects[{}].reference_appearance", o.index),
                    "image must be non-empty and at most 64x64",
                ));
            }
        }
        objects.push(ObjectSpec {
            index: o.index,
            category: Category::parse(&o.category)?,
            color: Color::parse(&o.color)?,
            style_tokens: o.style_tokens.iter().map(|s| Style::parse(s)).collect::<Result<_>>()?,
            trajectory,
            reference_appearance,
            reference_path: o.reference_appearance,
        });
    }

    let rig = f
        .rig
        .iter()
        .map(|c| Camera {
            intrinsics: Intrinsics {
                fx: c.fx,
                fy: c.fy,
                cx: c.cx,
                cy: c.cy,
            },
            rotation: Matrix3::from_row_slice(&c.rotation),
            translation: Vector3::from(c.translation),
            width: c.width,
            height: c.height,
            near: c.near,
        })
        .collect();

    let mut fault_plan = Vec::with_capacity(f.faults.len());
    for (k, fault) in f.faults.iter().enumerate() {
        let target = match &fault.target {
            FileTarget::Object(i) => FaultTarget::Object(*i),
            FileTarget::Named(s) if s == "global" => FaultTarget::Global,
            FileTarget::Named(s) => {
                return Err(Error::semantic(
                    format!("faults[{k}].target"),
                    format!("unknown target `{s}`"),
                ))
            }
        };
        fault_plan.push(FaultSpec {
            kind: FaultKind::parse(&fault.kind)?,
            target,
            deactivation_weight: fault.deactivation_weight,
            severity: fault.severity,
        });
    }

    Ok(Scenario {
        global,
        objects,
        rig,
        num_frames: f.num_frames,
        scene_bounds: SceneBounds {
            min: f.scene_bounds.min,
            max: f.scene_bounds.max,
        },
        fault_plan,
    })
}

fn resolve(base: Option<&Path>, p: &str) -> PathBuf {
    let path = Path::new(p);
    match base {
        Some(b) if path.is_relative() => b.join(path),
        _ => path.to_path_buf(),
    }
}

/// Serialize to the scenario file format. Every keyframe is written explicitly.
pub fn serialize_scenario(s: &Scenario) -> String {
    let file = FileScenario {
        global: FileGlobal {
            weather: s.global.weather.token().into(),
            time_of_day: s.global.time_of_day.token().into(),
            ego_trajectory: s
                .global
                .ego_trajectory
                .iter()
                .map(|e| FileEgo {
                    frame: e.frame,
                    x: e.x,
                    y: e.y,
                    yaw: e.yaw,
                })
                .collect(),
            road_map: s.global.road_map.clone(),
            emphasis_weights: if s.global.emphasis_weights.values().all(|w| *w == 1.0) {
                None
            } else {
                Some(
                    s.global
                        .emphasis_weights
                        .iter()
                        .map(|(a, w)| (a.name().to_string(), *w))
                        .collect(),
                )
            },
        },
        objects: s
            .objects
            .iter()
            .map(|o| FileObject {
                index: o.index,
                category: o.category.token().into(),
                color: o.color.token().into(),
                style_tokens: o.style_tokens.iter().map(|t| t.token().to_string()).collect(),
                size: o.trajectory.values().next().map_or([1.0; 3], |b| b.size),
                trajectory: o
                    .trajectory
                    .iter()
                    .map(|(f, b)| FileKey {
                        frame: *f,
                        x: b.center[0],
                        y: b.center[1],
                        z: b.center[2],
                        yaw: b.yaw,
                    })
                    .collect(),
                reference_appearance: o.reference_path.clone(),
            })
            .collect(),
        rig: s
            .rig
            .iter()
            .map(|c| {
                let r = &c.rotation;
                FileCamera {
                    fx: c.intrinsics.fx,
                    fy: c.intrinsics.fy,
                    cx: c.intrinsics.cx,
                    cy: c.intrinsics.cy,
                    width: c.width,
                    height: c.height,
                    rotation: [
                        r[(0, 0)],
                        r[(0, 1)],
                        r[(0, 2)],
                        r[(1, 0)],
                        r[(1, 1)],
                        r[(1, 2)],
                        r[(2, 0)],
                        r[(2, 1)],
                        r[(2, 2)],
                    ],
                    translation: [c.translation.x, c.translation.y, c.translation.z],
                    near: c.near,
                }
            })
            .collect(),
        num_frames: s.num_frames,
        scene_bounds: FileBounds {
            min: s.scene_bounds.min,
            max: s.scene_bounds.max,
        },
        faults: s
            .fault_plan
            .iter()
            .map(|f| FileFault {
                kind: f.kind.token().into(),
                target: match f.target {
                    FaultTarget::Global => FileTarget::Named("global".into()),
                    FaultTarget::Object(i) => FileTarget::Object(i),
                },
                deactivation_weight: f.deactivation_weight,
                severity: f.severity,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("scenario serialization is infallible")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "global": {"weather": "sunny", "time_of_day": "day",
                   "ego_trajectory": [{"frame": 0, "x": 0, "y": 0, "yaw": 0}], "road_map": []},
        "objects": [],
        "rig": [{"fx": 100, "fy": 100, "cx": 64, "cy": 64, "width": 128, "height": 128,
                 "rotation": [1,0,0, 0,1,0, 0,0,1], "translation": [0,0,0], "near": 0.1}],
        "num_frames": 1,
        "scene_bounds": {"min": [-50,-50,-5], "max": [50,50,10]},
        "faults": []
    }"#;

    #[test]
    fn minimal_file() {
        let s = parse_scenario(MINIMAL).unwrap();
        assert_eq!((s.num_views(), s.num_frames, s.objects.len()), (1, 1, 0));
    }

    fn with_objects(objects: &str) -> String {
        MINIMAL.replace(r#""objects": []"#, &format!(r#""objects": {objects}"#))
    }

    #[test]
    fn duplicate_index_is_named() {
        let obj = r#"{"index": 3, "category": "car", "color": "red", "size": [4,2,1.5],
                      "trajectory": [{"frame": 0, "x": 10, "y": 0, "z": 0.75, "yaw": 0}]}"#;
        let err = parse_scenario(&with_objects(&format!("[{obj}, {obj}]"))).unwrap_err();
        assert!(err.to_string().contains("duplicate object index 3"), "{err}");
    }

    #[test]
    fn out_of_bounds_box() {
        let obj = r#"[{"index": 0, "category": "car", "color": "red", "size": [4,2,1.5],
                      "trajectory": [{"frame": 0, "x": 100, "y": 0, "z": 0.75, "yaw": 0}]}]"#;
        let err = parse_scenario(&with_objects(obj)).unwrap_err();
        assert!(
            matches!(&err, Error::Semantic { field, .. } if field.contains("objects[0].trajectory")),
            "{err}"
        );
    }

    #[test]
    fn unknown_token_rejected() {
        let obj = r#"[{"index": 0, "category": "spaceship", "color": "red", "size": [4,2,1.5],
                      "trajectory": [{"frame": 0, "x": 1, "y": 0, "z": 0.75, "yaw": 0}]}]"#;
        assert!(matches!(
            parse_scenario(&with_objects(obj)),
            Err(Error::Vocabulary { .. })
        ));
    }

    #[test]
    fn syntax_error_has_position() {
        match parse_scenario("{\n  \"global\": ,") {
            Err(Error::Syntax { line, column, .. }) => {
                assert_eq!(line, 2);
                assert!(column > 0);
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn bad_rotation_rejected() {
        let text = MINIMAL.replace("[1,0,0, 0,1,0, 0,0,1]", "[1,0,0, 0,1,0, 0,0,-1]");
        assert!(matches!(parse_scenario(&text), Err(Error::Semantic { .. })));
    }

    #[test]
    fn ego_gap_rejected() {
        let text = MINIMAL.replace("\"num_frames\": 1", "\"num_frames\": 2");
        assert!(parse_scenario(&text).is_err());
    }
}
