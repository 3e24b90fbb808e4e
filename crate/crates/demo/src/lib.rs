//! Browser bindings. Every export has a plain-Rust twin that the native
//! tests call; the exported wrappers only convert errors to `JsValue`.

use evil_core::env::{Cell, Gridworld, TabularMdp};
use evil_core::evo::{evolve_shaping, EsConfig};
use evil_core::policy::{pg_train, value_iteration, PgConfig};
use evil_core::reward::RewardSource;
use evil_core::shaping::Potential;
use wasm_bindgen::prelude::*;

fn gridworld(width: usize, height: usize, horizon: usize) -> Result<TabularMdp, String> {
    if width == 0 || height == 0 {
        return Err("grid must be at least 1x1".into());
    }
    Gridworld::new(width, height, Cell::new(0, height - 1), -0.01, 1.0)
        .with_horizon(horizon)
        .build()
        .map_err(|e| e.to_string())
}

/// Optimal values at the first step, row-major with row 0 at the top.
pub fn oracle_values(width: usize, height: usize, horizon: usize) -> Result<Vec<f64>, String> {
    Ok(value_iteration(&gridworld(width, height, horizon)?).potential_table())
}

/// A tabular potential evolved against the ground-truth reward.
pub fn evolved_potential(
    width: usize,
    height: usize,
    horizon: usize,
    generations: usize,
    seed: u64,
) -> Result<Vec<f64>, String> {
    let env = gridworld(width, height, horizon)?;
    let config = EsConfig {
        generations,
        ..EsConfig::gridworld()
    };
    let evo = evolve_shaping(&env, &RewardSource::GroundTruth, &config, seed).map_err(|e| e.to_string())?;
    Ok(evo.potential.params().to_vec())
}

/// Ground-truth training curves without and with `potential`, one point
/// per update: the first half is unshaped, the second half shaped.
pub fn shaping_curves(
    width: usize,
    height: usize,
    horizon: usize,
    potential: &[f64],
    seed: u64,
) -> Result<Vec<f64>, String> {
    let env = gridworld(width, height, horizon)?;
    if potential.len() != width * height {
        return Err(format!("potential has {} values for {} cells", potential.len(), width * height));
    }
    let config = PgConfig::tabular();
    let shaped = RewardSource::shaped(RewardSource::GroundTruth, Potential::Table(potential.to_vec()));
    let mut out = Vec::with_capacity(2 * config.updates);
    for reward in [RewardSource::GroundTruth, shaped] {
        let run = pg_train(&env, &reward, &config, seed, None).map_err(|e| e.to_string())?;
        out.extend(run.true_curve.performances());
    }
    Ok(out)
}

fn js(r: Result<Vec<f64>, String>) -> Result<Vec<f64>, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = oracleValues)]
pub fn oracle_values_js(width: usize, height: usize, horizon: usize) -> Result<Vec<f64>, JsValue> {
    js(oracle_values(width, height, horizon))
}

#[wasm_bindgen(js_name = evolvedPotential)]
pub fn evolved_potential_js(
    width: usize,
    height: usize,
    horizon: usize,
    generations: usize,
    seed: u32,
) -> Result<Vec<f64>, JsValue> {
    js(evolved_potential(width, height, horizon, generations, seed as u64))
}

#[wasm_bindgen(js_name = shapingCurves)]
pub fn shaping_curves_js(
    width: usize,
    height: usize,
    horizon: usize,
    potential: &[f64],
    seed: u32,
) -> Result<Vec<f64>, JsValue> {
    js(shaping_curves(width, height, horizon, potential, seed as u64))
}
