//! Browser demo: three operations exported through wasm-bindgen, each
//! returning a JSON document. `{"error": "..."}` on bad input.

use fscforge::check::{check, mdp_optimize, SolverConfig, Verdict};
use fscforge::fsc::parse_fsc;
use fscforge::model::{gen_grid, gen_maze, parse_pomdp, GridLayout, Pomdp};
use fscforge::num::format_real;
use fscforge::spec::parse_spec;
use fscforge::synth::{critical_pairs, decide, entropy_of, induce_dtmc};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

pub const EXAMPLE_MODEL: &str = include_str!("../../../models/example1.pomdp");
const EXAMPLE_SPEC: &str = r#"P>=0.9 [ F "s3" ]"#;
const ETA: f64 = 0.5;

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Sat => "SAT",
        Verdict::Unsat => "UNSAT",
        Verdict::Value(_) => "value",
    }
}

fn finish(r: Result<Value, String>) -> String {
    r.unwrap_or_else(|e| json!({ "error": e })).to_string()
}

/// One-node controller on the blue-corridor example choosing `up` with
/// probability `p`: reachability of s3, critical pairs, their entropy and
/// the loop's next move.
#[wasm_bindgen]
pub fn example_slider(p: f64) -> String {
    finish(slider(p))
}

fn slider(p: f64) -> Result<Value, String> {
    if !(0.0..=1.0).contains(&p) {
        return Err(format!("p must lie in [0, 1], got {p}"));
    }
    let model = parse_pomdp(EXAMPLE_MODEL).map_err(|e| e.to_string())?;
    let text = format!(
        "fsc\nnodes 1\nA 0 blue up:{} down:{}\nA 0 s3 a:1\nA 0 s4 a:1\n",
        format_real(p),
        format_real(1.0 - p)
    );
    let fsc = parse_fsc(&text).map_err(|e| e.to_string())?;
    let spec = parse_spec(EXAMPLE_SPEC).map_err(|e| e.to_string())?;
    let product = induce_dtmc(&model, &fsc).map_err(|e| e.to_string())?;
    let r = check(&product.dtmc, &spec, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let sat = r.verdict == Verdict::Sat;
    let crit = critical_pairs(&product, &r, &spec).map_err(|e| e.to_string())?;
    let entropy = if crit.is_empty() { None } else { Some(entropy_of(&model, &fsc, &crit).map_err(|e| e.to_string())?) };
    let pairs: Vec<Value> = crit
        .pairs
        .iter()
        .map(|c| json!({ "node": c.node, "state": model.state_names()[c.state], "value": c.value }))
        .collect();
    Ok(json!({
        "p": p,
        "value": r.value,
        "verdict": verdict_name(r.verdict),
        "critical": pairs,
        "entropy": entropy,
        "action": decide(sat, entropy, ETA).to_string(),
    }))
}

/// Fully observable optimal expected steps to the goal for `maze` or
/// `grid` of size `c`, laid out on the benchmark's cells.
#[wasm_bindgen]
pub fn value_heatmap(kind: &str, c: usize) -> String {
    finish(heatmap(kind, c))
}

fn heatmap(kind: &str, c: usize) -> Result<Value, String> {
    let (p, layout): (Pomdp, GridLayout) = match kind {
        "maze" => (gen_maze(c).map_err(|e| e.to_string())?, GridLayout::maze(c)),
        "grid" => (gen_grid(c).map_err(|e| e.to_string())?, GridLayout::grid(c)),
        _ => return Err(format!("unknown benchmark `{kind}`; expected maze or grid")),
    };
    let spec = parse_spec(r#"Rmin=? [ F "goal" ]"#).map_err(|e| e.to_string())?;
    let sol = mdp_optimize(p.mdp(), &spec, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let goal = p.label("goal").map_err(|e| e.to_string())?;
    let cells: Vec<Value> = layout
        .cells
        .iter()
        .enumerate()
        .map(|(s, &(x, y))| {
            json!({
                "x": x,
                "y": y,
                "value": sol.values[s],
                "action": p.action_names()[sol.policy[s]],
                "obs": p.obs_names()[p.observation(s)],
                "goal": goal.contains(&s),
            })
        })
        .collect();
    Ok(json!({
        "width": layout.width,
        "height": layout.height,
        "states": p.num_states(),
        "observations": p.num_observations(),
        "cells": cells,
    }))
}

/// Checks a controller against a POMDP and a specification, all given as text.
#[wasm_bindgen]
pub fn check_text(model: &str, fsc: &str, spec: &str) -> String {
    finish(check_inputs(model, fsc, spec))
}

fn check_inputs(model: &str, fsc: &str, spec: &str) -> Result<Value, String> {
    let p = parse_pomdp(model).map_err(|e| format!("model: {e}"))?;
    let f = parse_fsc(fsc).map_err(|e| format!("controller: {e}"))?;
    let spec = parse_spec(spec).map_err(|e| format!("specification: {e}"))?;
    let product = induce_dtmc(&p, &f).map_err(|e| e.to_string())?;
    let r = check(&product.dtmc, &spec, &SolverConfig::default()).map_err(|e| e.to_string())?;
    Ok(json!({
        "verdict": verdict_name(r.verdict),
        "value": r.value,
        "product_states": product.dtmc.num_states(),
        "nodes": f.num_nodes(),
    }))
}
