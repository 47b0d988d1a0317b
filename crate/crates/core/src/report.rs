//! Plan report JSON with canonical key order and 9-significant-digit floats.

use std::path::Path;

use serde_json::{json, Map, Number, Value};

use crate::candidate::{CandidateSource, GraspCandidate};
use crate::config::PlannerConfig;
use crate::error::{Error, Result};
use crate::gripper::GripperSpec;
use crate::planner::PlanOutcome;
use crate::rank::ScoreBreakdown;
use crate::real::Real;

pub const SCHEMA_VERSION: u64 = 1;
pub const DEFAULT_RANKING_LIMIT: usize = 1000;

/// Rounds to 9 significant digits.
pub fn round_sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

/// Rounds every float in `v` to 9 significant digits. Non-finite floats
/// become null.
pub fn canonicalize(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => n
            .as_f64()
            .and_then(|x| Number::from_f64(round_sig9(x)))
            .map_or(Value::Null, Value::Number),
        Value::Array(a) => Value::Array(a.into_iter().map(canonicalize).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, canonicalize(v))).collect()),
        other => other,
    }
}

/// Pretty-printed canonical text with sorted keys and a trailing newline.
pub fn to_canonical_string(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(&canonicalize(v.clone())).expect("json value serializes");
    s.push('\n');
    s
}

pub fn write_report(path: &Path, report: &Value) -> Result<()> {
    std::fs::write(path, to_canonical_string(report)).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn vec3<T: Real>(v: &nalgebra::Vector3<T>) -> Value {
    json!([v.x.as_f64(), v.y.as_f64(), v.z.as_f64()])
}

fn grasp<T: Real>(c: &GraspCandidate<T>, score: Option<&ScoreBreakdown<T>>) -> Value {
    let o = &c.orientation;
    let rows: Vec<f64> = (0..3).flat_map(|r| (0..3).map(move |k| o[(r, k)].as_f64())).collect();
    let source = match c.source {
        CandidateSource::MultiCup { orientation, cell } => {
            json!({"kind": c.source.name(), "orientation_index": orientation, "cell": cell})
        }
        CandidateSource::SingleCupFallback { pixel } => {
            json!({"kind": c.source.name(), "pixel": [pixel.u, pixel.v]})
        }
    };
    let mut m = Map::new();
    m.insert("position".into(), vec3(&c.position));
    m.insert("orientation".into(), json!(rows));
    m.insert("cup_centers".into(), Value::Array(c.cup_centers.iter().map(vec3).collect()));
    m.insert("activation".into(), json!(c.activation_bits()));
    m.insert("source".into(), source);
    match score {
        Some(s) => {
            m.insert("max_obj".into(), json!(s.max_obj));
            m.insert("j".into(), json!(s.j.as_f64()));
            m.insert(
                "breakdown".into(),
                json!({
                    "labels": s.labels,
                    "j_dist": s.j_dist.as_f64(),
                    "j_var": s.j_var.as_f64(),
                    "j_orient": s.j_orient.as_f64(),
                }),
            );
        }
        None => {
            m.insert("max_obj".into(), Value::Null);
            m.insert("j".into(), Value::Null);
            m.insert("breakdown".into(), Value::Null);
        }
    }
    Value::Object(m)
}

/// Builds the report document. `ranking_limit` caps the listed ranking
/// entries (0 lists all); `ranking_total` always holds the full count.
pub fn build_report<T: Real>(
    outcome: &PlanOutcome<T>,
    config: &PlannerConfig<T>,
    gripper: &GripperSpec<T>,
    ranking_limit: usize,
) -> Value {
    let ranking = outcome.plan.as_ref().map_or(&[][..], |p| &p.ranking[..]);
    let listed = if ranking_limit == 0 { ranking.len() } else { ranking.len().min(ranking_limit) };
    let optimal = match (&outcome.plan, &outcome.fallback) {
        (Some(p), _) => grasp(&p.optimal().candidate, Some(&p.optimal().score)),
        (None, Some(f)) => grasp(f, None),
        (None, None) => Value::Null,
    };
    let c = &outcome.counters;
    json!({
        "schema_version": SCHEMA_VERSION,
        "config": serde_json::to_value(config.to_file_form()).expect("config serializes"),
        "gripper": serde_json::to_value(gripper.to_file_form()).expect("gripper serializes"),
        "outcome": outcome.kind.name(),
        "optimal": optimal,
        "ranking": ranking[..listed].iter().map(|e| grasp(&e.candidate, Some(&e.score))).collect::<Vec<_>>(),
        "ranking_total": ranking.len(),
        "timings": outcome.timings.iter().map(|t| json!({"stage": t.stage, "millis": t.millis})).collect::<Vec<_>>(),
        "counters": {
            "masked_pixels": c.masked_pixels,
            "grid_cells": c.grid_cells,
            "occupied_cells": c.occupied_cells,
            "orientations": c.orientations,
            "kernels_built": c.kernels_built,
            "kernels_dropped": c.kernels_dropped,
            "cells_convolved": c.cells_convolved,
            "clusters": c.clusters,
            "candidates_decoded": c.candidates_decoded,
            "candidates_after_normal_check": c.candidates_after_normal_check,
            "candidates_scored": c.candidates_scored,
        },
    })
}

/// Grasps whose cups are drawn as markers: the listed ranking, or the
/// fallback grasp.
pub fn reported_grasps<T: Real>(outcome: &PlanOutcome<T>, ranking_limit: usize) -> Vec<&GraspCandidate<T>> {
    match (&outcome.plan, &outcome.fallback) {
        (Some(p), _) => {
            let n = if ranking_limit == 0 { p.ranking.len() } else { p.ranking.len().min(ranking_limit) };
            p.ranking[..n].iter().map(|e| &e.candidate).collect()
        }
        (None, Some(f)) => vec![f],
        (None, None) => vec![],
    }
}
