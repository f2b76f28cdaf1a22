//! Byte-stable JSON output: keys sorted, floats rounded to nine significant digits.

use std::path::Path;

use serde_json::{json, Map, Value};

use crate::control::{AuditLog, Decision, IterationRecord};
use crate::error::Result;
use crate::evaluator::{AssessmentReport, ObjectReport};
use crate::image::write_file;
use crate::metrics::MetricsReport;

/// Round to nine significant digits.
pub fn round9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

pub fn num(x: f64) -> Value {
    json!(round9(x))
}

fn opt_num(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

pub fn object_report_json(o: &ObjectReport) -> Value {
    let mut m = Map::new();
    m.insert("status".into(), json!(o.status));
    m.insert("crops".into(), json!(o.crops));
    m.insert("index_consistency".into(), opt_num(o.index_consistency));
    if let Some(s) = o.score {
        m.insert("s_obj".into(), num(s.s_obj));
        m.insert("semantic".into(), num(s.semantic));
        m.insert("clarity".into(), num(s.clarity));
    }
    Value::Object(m)
}

pub fn report_json(r: &AssessmentReport) -> Value {
    let per_attr: Map<String, Value> = r
        .per_attribute_macro
        .iter()
        .map(|(a, s)| (a.name().to_string(), num(*s)))
        .collect();
    let objects: Map<String, Value> = r
        .objects
        .iter()
        .map(|(i, o)| (i.to_string(), object_report_json(o)))
        .collect();
    json!({
        "s_macro": num(r.s_macro),
        "per_attribute_macro": per_attr,
        "objects": objects,
        "lambda": num(r.lambda),
    })
}

fn decision_json(d: &Decision) -> Value {
    json!({
        "kind": d.kind.token(),
        "flagged_attributes": d.flagged_attributes.iter().map(|a| a.name()).collect::<Vec<_>>(),
        "flagged_objects": d.flagged_objects,
    })
}

fn iteration_json(r: &IterationRecord) -> Value {
    let weights: Map<String, Value> = r
        .emphasis_weights
        .iter()
        .map(|(a, w)| (a.name().to_string(), num(*w)))
        .collect();
    json!({
        "iteration": r.iteration,
        "emphasis_weights": weights,
        "report": report_json(&r.report),
        "decision": decision_json(&r.decision),
        "refinements": r.refinements,
        "refined_report": r.refined_report.as_ref().map_or(Value::Null, report_json),
        "outcome": decision_json(&r.outcome),
    })
}

pub fn audit_json(log: &AuditLog) -> Value {
    let c = &log.config;
    json!({
        "status": log.status.token(),
        "config": {
            "gamma_g": num(c.gamma_g),
            "gamma_o": num(c.gamma_o),
            "lambda": num(c.lambda),
            "alpha": num(c.alpha_emphasis),
            "max_iterations": c.max_iterations,
            "seed": c.seed,
            "feather": c.feather,
        },
        "iterations": log.iterations.iter().map(iteration_json).collect::<Vec<_>>(),
    })
}

pub fn metrics_json(m: &MetricsReport) -> Value {
    let per_object: Map<String, Value> = m
        .per_object
        .iter()
        .map(|(i, o)| {
            (
                i.to_string(),
                json!({
                    "layout_iou": opt_num(o.layout_iou),
                    "observations": o.observations,
                    "category_correct": o.category_correct,
                    "text_alignment": opt_num(o.text_alignment),
                    "image_alignment": o.image_alignment.map_or(json!("no_reference"), num),
                    "index_consistency": opt_num(o.index_consistency),
                }),
            )
        })
        .collect();
    json!({
        "layout_iou_mean": num(m.layout_iou_mean),
        "ap_at_50": num(m.ap_at_50),
        "category_accuracy": num(m.category_accuracy),
        "text_alignment_mean": num(m.text_alignment_mean),
        "image_alignment_mean": opt_num(m.image_alignment_mean),
        "index_consistency_mean": num(m.index_consistency_mean),
        "never_visible": m.never_visible,
        "per_object": per_object,
    })
}

/// Pretty-printed with a trailing newline.
pub fn to_string(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values always serialize");
    s.push('\n');
    s
}

pub fn write_json(path: &Path, v: &Value) -> Result<()> {
    write_file(path, to_string(v).as_bytes())
}
