//! Browser bindings. Every entry point takes plain numbers or a JSON config and
//! returns a JSON string with `metrics` and `report`, so the page stays a thin
//! plotting layer.

use memsim_core::harness::{parse_config, run_experiment};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Runs a full experiment config given as JSON text.
pub fn run_config(text: &str) -> Result<String, String> {
    let (cfg, _warnings) = parse_config(text).map_err(|e| e.to_string())?;
    let out = run_experiment(&cfg).map_err(|e| e.to_string())?;
    Ok(json!({ "metrics": out.records, "report": out.report }).to_string())
}

fn run_value(v: Value) -> Result<String, String> {
    run_config(&v.to_string())
}

/// SET pulse staircase of one device at the given programming noise.
pub fn staircase(prog_noise_rel: f64, seed: u64) -> Result<String, String> {
    run_value(json!({
        "experiment": "device_programming",
        "seed": seed,
        "device_profile": "ideal",
        "device": { "prog_noise_rel": prog_noise_rel },
    }))
}

/// Mean AMP error curves for ideal and noisy crossbars.
pub fn cs_curves(prog_noise_rel: f64, iters: usize, seeds: usize, seed: u64) -> Result<String, String> {
    run_value(json!({
        "experiment": "fig4_cs_recovery",
        "seed": seed,
        "device_profile": "ideal",
        "device": { "prog_noise_rel": prog_noise_rel },
        "cs": { "iters": iters, "seeds": seeds },
    }))
}

/// NARMA-10 prediction of an echo-state network.
pub fn reservoir(nodes: usize, rho: f64, volatile: bool, seed: u64) -> Result<String, String> {
    let kind = if volatile { "volatile" } else { "tanh" };
    run_value(json!({
        "experiment": "fig14_reservoir",
        "seed": seed,
        "reservoir": { "reservoir": { "n_nodes": nodes, "rho": rho, "node_kind": kind } },
    }))
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = runConfig)]
pub fn run_config_js(text: &str) -> Result<String, JsValue> {
    js(run_config(text))
}

#[wasm_bindgen(js_name = staircase)]
pub fn staircase_js(prog_noise_rel: f64, seed: u32) -> Result<String, JsValue> {
    js(staircase(prog_noise_rel, u64::from(seed)))
}

#[wasm_bindgen(js_name = csCurves)]
pub fn cs_curves_js(prog_noise_rel: f64, iters: u32, seeds: u32, seed: u32) -> Result<String, JsValue> {
    js(cs_curves(prog_noise_rel, iters as usize, seeds as usize, u64::from(seed)))
}

#[wasm_bindgen(js_name = reservoir)]
pub fn reservoir_js(nodes: u32, rho: f64, volatile: bool, seed: u32) -> Result<String, JsValue> {
    js(reservoir(nodes as usize, rho, volatile, u64::from(seed)))
}
