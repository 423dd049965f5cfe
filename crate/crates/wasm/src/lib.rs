//! Bindings behind the demo page in `www/`. Every export takes plain numbers
//! and returns a flat `Vec<f64>` so the page can draw it without glue code.

use std::sync::Arc;

use smallball::coefficients::{DriftSpec, SigmaSpec};
use smallball::estimator::{direct_sweep, BallEvent};
use smallball::kernel::{eval_neumann, KernelParams};
use smallball::noise::{derive_stream, MasterSeed};
use smallball::profile::Profile;
use smallball::solver::{solve, Field, GridSpec};
use wasm_bindgen::prelude::*;

const NU: f64 = 0.5;

fn msg(e: smallball::Error) -> String {
    e.to_string()
}

fn constant_sigma(value: f64) -> Result<SigmaSpec, String> {
    let s = SigmaSpec::constant(value);
    s.validate().map_err(msg)?;
    Ok(s)
}

/// `y ↦ G(t, x, y)` on `points` evenly spaced nodes of `[0, 1]`.
#[wasm_bindgen]
pub fn heat_kernel_curve(t: f64, x: f64, points: usize) -> Result<Vec<f64>, String> {
    if points < 2 {
        return Err("need at least two points".into());
    }
    let params = KernelParams::with_nu(NU);
    (0..points)
        .map(|i| eval_neumann(t, x, i as f64 / (points - 1) as f64, &params).map_err(msg))
        .collect()
}

/// One path of the equation with constant `sigma` started from zero; returns
/// the field at `t_end` on the `nx + 1` grid nodes.
#[wasm_bindgen]
pub fn sample_field(nx: usize, t_end: f64, sigma: f64, seed: u64) -> Result<Vec<f64>, String> {
    let grid = GridSpec::desk(nx, t_end, NU).map_err(msg)?;
    let sigma = constant_sigma(sigma)?;
    let mut stream = derive_stream(MasterSeed(seed), 0);
    let run = solve(&Field::zeros(&grid), &sigma, &DriftSpec::Zero, &grid, &mut stream, &Profile::Zero, None, &[])
        .map_err(msg)?;
    Ok(run.final_field.values)
}

/// Direct estimates of `P(sup |u| ≤ ε)` at each radius in `eps`, sharing
/// one set of `replicas` paths.
#[wasm_bindgen]
pub fn smallball_curve(nx: usize, t_end: f64, sigma: f64, eps: Vec<f64>, replicas: usize, seed: u64) -> Result<Vec<f64>, String> {
    let grid = GridSpec::desk(nx, t_end, NU).map_err(msg)?;
    let sigma = constant_sigma(sigma)?;
    let widest = eps.iter().copied().fold(0.0, f64::max);
    let zero = Arc::new(Profile::Zero);
    let ball = BallEvent::new(widest, t_end, zero.clone(), zero).map_err(msg)?;
    let sweep = direct_sweep(&ball, &eps, &sigma, &DriftSpec::Zero, &grid, replicas, MasterSeed(seed)).map_err(msg)?;
    Ok(sweep.estimates.iter().map(|e| e.p_hat).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_curve_has_unit_mass() {
        let g = heat_kernel_curve(0.05, 0.3, 401).unwrap();
        let h = 1.0 / 400.0;
        let mass = h * (g.iter().sum::<f64>() - 0.5 * (g[0] + g[400]));
        assert!((mass - 1.0).abs() < 1e-4, "{mass}");
        assert!(heat_kernel_curve(0.0, 0.3, 10).is_err());
    }

    #[test]
    fn field_is_reproducible() {
        let a = sample_field(32, 0.01, 1.0, 7).unwrap();
        assert_eq!(a.len(), 33);
        assert_eq!(a, sample_field(32, 0.01, 1.0, 7).unwrap());
        assert_ne!(a, sample_field(32, 0.01, 1.0, 8).unwrap());
    }

    #[test]
    fn smallball_curve_is_monotone() {
        let p = smallball_curve(32, 0.004, 1.0, vec![0.3, 0.5, 0.8], 300, 1).unwrap();
        assert!(p.windows(2).all(|w| w[0] <= w[1]), "{p:?}");
        assert!(p[2] > 0.0);
        assert!(smallball_curve(32, 0.004, 1.0, vec![0.5], 0, 1).is_err());
    }
}
