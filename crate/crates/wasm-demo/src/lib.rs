//! Browser bindings for three small views of the library: the rotationally
//! symmetric stable density, the envelope function ρ of a variable-order
//! model, and a Monte Carlo histogram of the same model.

use stablelike::mc_sim;
use stablelike::model::{AlphaFn, Bounds, KappaFn};
use stablelike::rho_calculus::{rho, RhoParams};
use stablelike::stable_density::single_slice;
use stablelike::ModelSpec;
use wasm_bindgen::prelude::*;

fn grid(x_max: f64, n: usize) -> Result<Vec<f64>, String> {
    if !(x_max > 0.0) || n < 2 || n > 20_000 {
        return Err("need x_max > 0 and 2 <= n <= 20000".into());
    }
    Ok((0..n).map(|i| -x_max + 2.0 * x_max * i as f64 / (n - 1) as f64).collect())
}

/// α(x) = 1 + b/(1 + x²), κ ≡ 1 on the line.
pub fn bump_model(b: f64) -> Result<ModelSpec, String> {
    if !(0.0..=0.9).contains(&b) {
        return Err("b must lie in [0, 0.9]".into());
    }
    ModelSpec::new(
        1,
        AlphaFn::Bump {
            a: 1.0,
            b,
            c: [0.0, 0.0],
            w: 1.0,
        },
        KappaFn::Constant { value: 1.0 },
        Bounds {
            alpha_lo: 1.0,
            alpha_hi: 1.0 + b,
            kappa_lo: 1.0,
            kappa_hi: 1.0,
            beta0: 1.0,
            c_alpha: b,
            c_kappa: 0.0,
        },
    )
    .map_err(|e| e.to_string())
}

/// Density of the symbol |ξ|^α at time t on n points of [-x_max, x_max].
pub fn density_profile(alpha: f64, t: f64, x_max: f64, n: usize) -> Result<Vec<f64>, String> {
    if !(0.3..=1.95).contains(&alpha) || !(t > 0.0) {
        return Err("need 0.3 <= alpha <= 1.95 and t > 0".into());
    }
    let slice = single_slice(1, alpha);
    Ok(grid(x_max, n)?.into_iter().map(|x| slice.density(1.0, t, x.abs())).collect())
}

/// ρ^{0,β}_γ(t, x) for the bump model.
pub fn rho_profile(b: f64, gamma: f64, beta: f64, t: f64, x_max: f64, n: usize) -> Result<Vec<f64>, String> {
    let spec = bump_model(b)?;
    if !(t > 0.0 && t <= 1.0) || !(0.0..=1.0).contains(&beta) {
        return Err("need 0 < t <= 1 and 0 <= beta <= 1".into());
    }
    let p = RhoParams::new(gamma, beta, [0.0, 0.0]);
    Ok(grid(x_max, n)?.into_iter().map(|x| rho(&p, &spec, t, &[x, 0.0])).collect())
}

/// Histogram density of X_t started at x0 for the bump model, `bins` cells
/// on [x0 - x_max, x0 + x_max].
pub fn path_histogram(
    b: f64,
    x0: f64,
    t: f64,
    n_paths: usize,
    seed: u64,
    bins: usize,
    x_max: f64,
) -> Result<Vec<f64>, String> {
    let spec = bump_model(b)?;
    if n_paths == 0 || n_paths > 200_000 || bins == 0 || !(x_max > 0.0) {
        return Err("need 1 <= n_paths <= 200000, bins >= 1 and x_max > 0".into());
    }
    let h = (t / 64.0).max(1e-4);
    let ens = mc_sim::simulate(&spec, &[x0, 0.0], t, n_paths, h, seed, 1).map_err(|e| e.to_string())?;
    let width = 2.0 * x_max / bins as f64;
    let mut counts = vec![0.0; bins];
    for p in &ens.terminal {
        let k = ((p[0] - x0 + x_max) / width).floor();
        if k >= 0.0 && (k as usize) < bins {
            counts[k as usize] += 1.0;
        }
    }
    let norm = 1.0 / (n_paths as f64 * width);
    Ok(counts.into_iter().map(|c| c * norm).collect())
}

#[wasm_bindgen]
pub fn stable_density(alpha: f64, t: f64, x_max: f64, n: usize) -> Result<Vec<f64>, JsError> {
    density_profile(alpha, t, x_max, n).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn envelope(b: f64, gamma: f64, beta: f64, t: f64, x_max: f64, n: usize) -> Result<Vec<f64>, JsError> {
    rho_profile(b, gamma, beta, t, x_max, n).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn histogram(b: f64, x0: f64, t: f64, n_paths: usize, seed: u32, bins: usize, x_max: f64) -> Result<Vec<f64>, JsError> {
    path_histogram(b, x0, t, n_paths, seed as u64, bins, x_max).map_err(|e| JsError::new(&e))
}
