//! Browser bindings: three small experiments that run in a few seconds.

use csl_diffusion::config::FpeConfig;
use csl_diffusion::dynamics::{simulate_ensemble, SimConfig, SimMode};
use csl_diffusion::estimators::excess_moments;
use csl_diffusion::fokker_planck::{fpe_init, fpe_run};
use csl_diffusion::pipeline::noise_variance;
use csl_diffusion::{analytic_rates, CslError, PhysParams};
use wasm_bindgen::prelude::*;

fn js(e: CslError) -> JsError {
    JsError::new(&e.to_string())
}

/// Excess position and momentum variance over the λ = 0 baseline, effective
/// mode. Rows of `[t, excess_var_x, excess_var_p]`, flattened.
#[wasm_bindgen]
pub fn excess_msd_curve(
    alpha: f64,
    lambda: f64,
    n_trajectories: usize,
    n_steps: usize,
    dt: f64,
    seed: u64,
) -> Result<Vec<f64>, JsError> {
    let cfg = SimConfig {
        params: PhysParams::new(1.0, 1.0, alpha, lambda).map_err(js)?,
        seed,
        mode: SimMode::Effective,
        n_trajectories,
        n_steps,
        dt,
        output_every: (n_steps / 50).max(1),
        ..SimConfig::default()
    };
    cfg.validate().map_err(js)?;
    let full = simulate_ensemble(&cfg, 1).map_err(js)?.moments;
    let base = simulate_ensemble(&cfg.baseline(), 1).map_err(js)?.moments;
    let excess = excess_moments(&full, &base).map_err(js)?;
    Ok(excess
        .iter()
        .flat_map(|e| [e.t, e.excess_var_x, e.excess_var_p])
        .collect())
}

/// Closed-form `[t³ coefficient of excess <x²>, rate of excess <p²>]`.
#[wasm_bindgen]
pub fn analytic_coefficients(alpha: f64, lambda: f64) -> Result<Vec<f64>, JsError> {
    let r = analytic_rates(&PhysParams::new(1.0, 1.0, alpha, lambda).map_err(js)?).map_err(js)?;
    Ok(vec![r.msd_cubic_coeff, r.p_var_rate])
}

/// Phase-space density at `t_final` from a Gaussian of width 0.5 in x and p.
/// Returns `[n_x, n_p, x_min, x_max, p_min, p_max]` followed by the density,
/// x-major.
#[wasm_bindgen]
pub fn fpe_density(alpha: f64, lambda: f64, t_final: f64, n: usize) -> Result<Vec<f64>, JsError> {
    let params = PhysParams::new(1.0, 1.0, alpha, lambda).map_err(js)?;
    let cfg = FpeConfig {
        n_x: n,
        n_p: n,
        t_final,
        ..FpeConfig::default()
    };
    let grid = cfg.resolved_grid(&params).map_err(js)?;
    let init = fpe_init(&grid, cfg.x0, cfg.p_mean, cfg.sigma_x, cfg.sigma_p).map_err(js)?;
    let run = fpe_run(&init, &params, t_final, None, 0, 0).map_err(js)?;
    let mut out = vec![
        grid.n_x as f64,
        grid.n_p as f64,
        grid.x_min,
        grid.x_max,
        grid.p_min,
        grid.p_max,
    ];
    out.extend_from_slice(&run.final_state.density);
    Ok(out)
}

/// Var(B(t)) of the integrated affine noise, one value per step.
#[wasm_bindgen]
pub fn fbm_variance(
    a: f64,
    n_realizations: usize,
    n_steps: usize,
    dt: f64,
    seed: u64,
) -> Result<Vec<f64>, JsError> {
    noise_variance(a, n_realizations, n_steps, dt, seed, 1).map_err(js)
}
