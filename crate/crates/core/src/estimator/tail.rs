use serde::Serialize;

use super::collect_replicas;
use crate::coefficients::{Diffusion, DriftSpec};
use crate::noise::{derive_stream, MasterSeed};
use crate::parallel;
use crate::solver::{Field, GridSpec, Stepper};
use crate::stats::clopper_pearson;
use crate::{Error, Result};

/// Tail frequencies of `sup |N|` over the box `[0, a·ε⁴] × [(k−1)ε², kε²]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailCurve {
    pub a: f64,
    pub eps: f64,
    pub box_index: usize,
    pub box_time: f64,
    pub box_space: (f64, f64),
    pub lambdas: Vec<f64>,
    /// `P(sup |N| > λε)`.
    pub p: Vec<f64>,
    pub se: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub replicas: usize,
}

/// Simulates the linear equation (`g = 0`, `u₀ = 0`) and records tail
/// frequencies of its box supremum. All thresholds share the same paths, so
/// the curve is nonincreasing by construction.
#[allow(clippy::too_many_arguments)]
pub fn tail_curve<S: Diffusion + ?Sized>(
    a: f64,
    eps: f64,
    lambdas: &[f64],
    sigma: &S,
    grid: &GridSpec,
    n: usize,
    master: MasterSeed,
    box_index: usize,
) -> Result<TailCurve> {
    if n == 0 {
        return Err(Error::Validation("replica count must be at least 1".into()));
    }
    if !(a > 0.0 && eps > 0.0) {
        return Err(Error::Validation(format!("a and eps must be positive, got {a}, {eps}")));
    }
    if lambdas.is_empty() || lambdas[0] < 0.0 || lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Validation("lambda list must be nonnegative and increasing".into()));
    }
    if box_index == 0 {
        return Err(Error::Config("box index starts at 1".into()));
    }
    let box_time = a * eps.powi(4);
    let lo = (box_index - 1) as f64 * eps * eps;
    let hi = box_index as f64 * eps * eps;
    if hi > 1.0 + 1e-12 {
        return Err(Error::Config(format!("space box [{lo}, {hi}] leaves [0, 1]")));
    }
    if box_time > grid.t_end * (1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "time box {box_time} exceeds the horizon {}",
            grid.t_end
        )));
    }
    let local = GridSpec::new(grid.nx, grid.dt.min(box_time), box_time, grid.nu, grid.theta)?;
    let nx = local.nx as f64;
    let first = ((lo * nx) - 1e-9).ceil().max(0.0) as usize;
    let last = (((hi * nx) + 1e-9).floor() as usize).min(local.nx);
    if first > last {
        return Err(Error::Config("space box contains no grid node".into()));
    }

    let sups = parallel::map_indexed(n, |r| -> Result<f64> {
        let mut stream = derive_stream(master, r as u64);
        let mut stepper = Stepper::new(&local);
        let mut slice = stepper.new_slice();
        let mut field = Field::zeros(&local);
        let mut m: f64 = 0.0;
        for s in 0..local.n_steps() {
            slice.resample(&mut stream);
            stepper.apply(&mut field, sigma, &DriftSpec::Zero, &slice, s)?;
            for v in &field.values[first..=last] {
                m = m.max(v.abs());
            }
        }
        Ok(m)
    });
    let sups = collect_replicas(sups, None)?;

    let mut curve = TailCurve {
        a,
        eps,
        box_index,
        box_time,
        box_space: (lo, hi),
        lambdas: lambdas.to_vec(),
        p: Vec::new(),
        se: Vec::new(),
        ci_low: Vec::new(),
        ci_high: Vec::new(),
        replicas: n,
    };
    for &l in lambdas {
        let k = sups.iter().filter(|&&m| m > l * eps).count() as u64;
        let p = k as f64 / n as f64;
        let (cl, ch) = clopper_pearson(k, n as u64, 0.95);
        curve.p.push(p);
        curve.se.push((p * (1.0 - p) / n as f64).sqrt());
        curve.ci_low.push(cl);
        curve.ci_high.push(ch);
    }
    Ok(curve)
}
