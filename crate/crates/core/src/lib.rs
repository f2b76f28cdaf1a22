//! Closed-loop multiview driving-scene synthesis.
//!
//! A procedural multiview generator renders a scenario from hierarchical
//! conditions, an evaluator audits scene-level and object-level consistency,
//! and a loop controller routes scene flaws to regeneration with emphasized
//! conditions and object flaws to proxy-based refinement.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod control;
pub mod encoder;
pub mod error;
pub mod evaluator;
pub mod geometry;
pub mod heads;
pub mod image;
pub mod json;
pub mod metrics;
pub mod parallel;
pub mod raster;
pub mod refine;
pub mod render;
pub mod scenario_file;
pub mod scenarios;
pub mod scene;
pub mod vocab;

pub use control::{emphasize, route, run_closed_loop, AuditLog, Decision, DecisionKind, LoopConfig};
pub use encoder::{build_conditions, ConditionSet, FeatureVector, ObjectEmbedding};
pub use error::{Error, Result};
pub use evaluator::{AssessmentReport, ObjectBatch};
pub use geometry::{project_box, Camera, ScreenPolygon};
pub use render::{render_scene, Frame, MultiviewVideo};
pub use scene::{BoxPose3D, FaultKind, FaultSpec, GlobalConditions, ObjectSpec, Scenario};
