use std::f64::consts::PI;

use serde::Serialize;

use super::PathModel;
use crate::noise::NoiseStream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleValue {
    pub value: f64,
    pub converged: bool,
}

/// `P(sup_{s ≤ t} |B_s| < ε)` from the first `terms` terms of
/// `(4/π) Σ (−1)^k/(2k+1) · exp(−(2k+1)²π²t/(8ε²))`.
pub fn brownian_oracle(t: f64, eps: f64, terms: usize) -> Result<OracleValue> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::domain(format!("time must be positive, got {t}")));
    }
    if !(eps > 0.0) {
        return Err(Error::domain(format!("radius must be positive, got {eps}")));
    }
    if terms == 0 {
        return Err(Error::domain("need at least one series term"));
    }
    let rate = PI * PI * t / (8.0 * eps * eps);
    let mut sum = 0.0;
    let mut last = f64::INFINITY;
    for k in 0..terms {
        let m = (2 * k + 1) as f64;
        let term = (-m * m * rate).exp() / m;
        sum += if k % 2 == 0 { term } else { -term };
        last = term;
        if term == 0.0 {
            break;
        }
    }
    Ok(OracleValue {
        value: (4.0 / PI * sum).clamp(0.0, 1.0),
        converged: 4.0 / PI * last < 1e-12,
    })
}

/// Standard Brownian motion on `[0, t]` with a two-sided barrier at `±ε`.
///
/// Between grid points the path is a Brownian bridge; its probability of
/// staying inside is applied exactly (image series), so the indicator has the
/// law of the continuous-time event regardless of the step count.
#[derive(Debug, Clone, Copy)]
pub struct BrownianToy {
    pub t: f64,
    pub eps: f64,
    pub steps: usize,
}

impl BrownianToy {
    fn bridge_stays_inside(&self, a: f64, b: f64, tau: f64) -> f64 {
        let w = 2.0 * self.eps;
        let upper = self.eps;
        let d0 = (b - a) * (b - a);
        let mut p = 0.0;
        for k in -2i32..=2 {
            let s = 2.0 * k as f64 * w;
            let direct = b - a + s;
            let image = b + a - 2.0 * upper + s;
            p += (-(direct * direct - d0) / (2.0 * tau)).exp() - (-(image * image - d0) / (2.0 * tau)).exp();
        }
        p.clamp(0.0, 1.0)
    }
}

impl PathModel for BrownianToy {
    fn inside(&self, stream: &mut NoiseStream) -> Result<bool> {
        if self.eps <= 0.0 {
            return Ok(false);
        }
        let tau = self.t / self.steps as f64;
        let sd = tau.sqrt();
        let mut a = 0.0;
        for _ in 0..self.steps {
            let b = a + sd * stream.standard_normal();
            if b.abs() >= self.eps {
                return Ok(false);
            }
            if stream.uniform() >= self.bridge_stays_inside(a, b, tau) {
                return Ok(false);
            }
            a = b;
        }
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::direct_mc_model;
    use crate::noise::MasterSeed;

    #[test]
    fn limits() {
        assert!(brownian_oracle(100.0, 0.1, 100).unwrap().value < 1e-12);
        assert!((brownian_oracle(1e-3, 10.0, 100_000).unwrap().value - 1.0).abs() < 1e-12);
        assert!(brownian_oracle(0.0, 1.0, 10).is_err());
        assert!(brownian_oracle(1.0, -1.0, 10).is_err());
        assert!(brownian_oracle(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn unit_case_and_convergence_flag() {
        let v = brownian_oracle(1.0, 1.0, 50).unwrap();
        assert!(v.converged);
        assert!((v.value - 0.370_777).abs() < 1e-6, "{}", v.value);
        assert!(!brownian_oracle(1.0, 1.0, 1).unwrap().converged);
    }

    #[test]
    fn bridge_factor_is_one_far_from_barrier() {
        let toy = BrownianToy { t: 1.0, eps: 1.0, steps: 100 };
        assert!((toy.bridge_stays_inside(0.0, 0.0, 1e-4) - 1.0).abs() < 1e-12);
        assert!(toy.bridge_stays_inside(0.99, 0.99, 1e-2) < 0.2);
    }

    #[test]
    fn coarse_toy_is_unbiased() {
        // Even with 20 steps the bridge correction keeps the estimate on target.
        let toy = BrownianToy { t: 1.0, eps: 1.0, steps: 20 };
        let e = direct_mc_model(&toy, 20_000, MasterSeed(12)).unwrap();
        let want = brownian_oracle(1.0, 1.0, 50).unwrap().value;
        let se = (want * (1.0 - want) / 20_000.0).sqrt();
        assert!((e.p_hat - want).abs() < 3.0 * se, "{} vs {want}", e.p_hat);
    }
}
