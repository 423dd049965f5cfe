//! Small-ball probability estimation: direct Monte Carlo, fixed-effort
//! splitting over a time mesh, tail curves of the linear equation, and
//! coupling diagnostics.

mod brownian;
mod coupling;
mod direct;
mod splitting;
mod tail;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::profile::{initial_gap, SpaceTimeProfile};
use crate::stats::clopper_pearson;
use crate::{Error, Result};

pub use brownian::{brownian_oracle, BrownianToy, OracleValue};
pub use coupling::{clipped_agreement, coupling_diagnostic, ClipReport, CouplingStats};
pub use direct::{direct_mc, direct_mc_model, direct_sweep, PathModel, SpdeBall, Sweep};
pub use splitting::{
    direct_mc_staged, splitting_mc, splitting_model, BernoulliStages, SpdeStages, StageEvent, StagedModel,
};
pub use tail::{tail_curve, TailCurve};

/// `{ sup_{t ≤ T, x} |u − h| ≤ ε }` started from `u₀`.
#[derive(Clone)]
pub struct BallEvent {
    pub eps: f64,
    pub t_end: f64,
    pub h: Arc<dyn SpaceTimeProfile>,
    pub u0: Arc<dyn SpaceTimeProfile>,
}

impl fmt::Debug for BallEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BallEvent")
            .field("eps", &self.eps)
            .field("t_end", &self.t_end)
            .finish_non_exhaustive()
    }
}

/// Points used to check the initial gap.
pub const GAP_SAMPLES: usize = 4096;

impl BallEvent {
    /// Checks `sup |u₀ − h(0, ·)| < ε/2`.
    pub fn new(eps: f64, t_end: f64, h: Arc<dyn SpaceTimeProfile>, u0: Arc<dyn SpaceTimeProfile>) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::Validation(format!("radius must be positive, got {eps}")));
        }
        let gap = initial_gap(&*u0, &*h, GAP_SAMPLES);
        if gap >= eps / 2.0 {
            return Err(Error::HypothesisViolation(format!(
                "initial gap sup|u0 - h(0,.)| = {gap} is not below eps/2 = {}",
                eps / 2.0
            )));
        }
        Self::new_unchecked(eps, t_end, h, u0)
    }

    /// Skips the initial-gap check; used for degenerate radii such as 0.
    pub fn new_unchecked(
        eps: f64,
        t_end: f64,
        h: Arc<dyn SpaceTimeProfile>,
        u0: Arc<dyn SpaceTimeProfile>,
    ) -> Result<Self> {
        if !(eps >= 0.0) {
            return Err(Error::Validation(format!("radius must be nonnegative, got {eps}")));
        }
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::Validation(format!("horizon must be positive, got {t_end}")));
        }
        Ok(Self { eps, t_end, h, u0 })
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        Self { eps, ..self.clone() }
    }
}

/// Time and space meshes scaled to the radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub c0: f64,
    pub theta: f64,
    pub beta: f64,
    pub eps: f64,
}

impl MeshSpec {
    pub fn new(c0: f64, theta: f64, beta: f64, eps: f64) -> Result<Self> {
        let m = Self { c0, theta, beta, eps };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c0 > 0.0 && self.c0 < 1.0) {
            return Err(Error::Validation(format!("c0 must lie in (0, 1), got {}", self.c0)));
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::Validation(format!("mesh theta must be positive, got {}", self.theta)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Validation(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Validation(format!("mesh radius must be positive, got {}", self.eps)));
        }
        Ok(())
    }

    /// `c1 = √(θ·c0)`.
    pub fn c1(&self) -> f64 {
        (self.theta * self.c0).sqrt()
    }

    pub fn t_n(&self, n: usize) -> f64 {
        n as f64 * self.c0 * self.eps.powi(4)
    }

    pub fn x_n(&self, n: usize) -> f64 {
        n as f64 * self.c1() * self.eps * self.eps
    }

    pub fn t_hat_n(&self, n: usize) -> f64 {
        n as f64 * self.c0 * self.eps.powf(4.0 * self.beta)
    }

    /// `min{n : t_n > T}`.
    pub fn n1(&self, t_end: f64) -> usize {
        first_exceeding(|n| self.t_n(n), t_end)
    }

    /// `min{n : x_n > 1}`.
    pub fn n2(&self) -> usize {
        first_exceeding(|n| self.x_n(n), 1.0)
    }

    /// `⌊T/ε^{4β}⌋`.
    pub fn n_hat_1(&self, t_end: f64) -> usize {
        (t_end / self.eps.powf(4.0 * self.beta)).floor() as usize
    }

    /// Number of stretched intervals `Î_n` needed to cover `[0, T]`.
    pub fn stage_count(&self, t_end: f64) -> usize {
        ((t_end / self.t_hat_n(1)) - 1e-9).ceil().max(1.0) as usize
    }
}

// Smallest n ≥ 1 with f(n) > limit, for increasing linear f.
fn first_exceeding(f: impl Fn(usize) -> f64, limit: f64) -> usize {
    let mut n = ((limit / f(1)).floor() as usize).max(1);
    while n > 1 && f(n - 1) > limit {
        n -= 1;
    }
    while f(n) <= limit {
        n += 1;
    }
    n
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Direct,
    Splitting,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Direct => "direct",
            Method::Splitting => "splitting",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbabilityEstimate {
    pub p_hat: f64,
    /// `ln p̂`; `-inf` when nothing survived.
    pub log_p_hat: f64,
    /// Standard error of `ln p̂` (delta method); `inf` when `p̂ = 0`.
    pub std_err_log: f64,
    pub method: Method,
    /// Replicas for direct estimates, particles per stage for splitting.
    pub replicas: usize,
    /// 95% interval: exact binomial for direct, log-normal for splitting.
    pub ci_low: f64,
    pub ci_high: f64,
    /// Per-stage survival fractions (splitting only).
    pub stage_survival: Vec<f64>,
    /// Stage at which every particle died (splitting only).
    pub extinct_stage: Option<usize>,
}

impl ProbabilityEstimate {
    pub fn from_binomial(successes: u64, n: u64) -> Self {
        let p = successes as f64 / n as f64;
        let (lo, hi) = clopper_pearson(successes, n, 0.95);
        Self {
            p_hat: p,
            log_p_hat: p.ln(),
            std_err_log: if p > 0.0 {
                ((1.0 - p) / (n as f64 * p)).sqrt()
            } else {
                f64::INFINITY
            },
            method: Method::Direct,
            replicas: n as usize,
            ci_low: lo,
            ci_high: hi,
            stage_survival: Vec::new(),
            extinct_stage: None,
        }
    }

    pub fn ci_overlaps(&self, other: &Self) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }
}

pub(crate) fn collect_replicas<T>(results: Vec<Result<T>>, stage: Option<usize>) -> Result<Vec<T>> {
    results
        .into_iter()
        .enumerate()
        .map(|(r, x)| x.map_err(|e| e.at_replica(r, stage)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::Profile;

    #[test]
    fn initial_gap_enforced() {
        let h = Arc::new(Profile::SineCosine { amplitude: 0.3 });
        let far = Arc::new(Profile::Constant { value: 0.4 });
        let r = BallEvent::new(0.5, 1.0, h.clone(), far);
        assert!(matches!(r, Err(Error::HypothesisViolation(_))));
        let near = Arc::new(Profile::SineMode { amplitude: 0.3, mode: 1 });
        assert!(BallEvent::new(0.5, 1.0, h, near).is_ok());
    }

    #[test]
    fn mesh_quantities() {
        let m = MeshSpec::new(0.1, 4.0, 1.0, 0.5).unwrap();
        assert!((m.c1() - 0.4f64.sqrt()).abs() < 1e-15);
        assert!((m.t_n(2) - 2.0 * 0.1 * 0.0625).abs() < 1e-15);
        assert!((m.x_n(1) - 0.4f64.sqrt() * 0.25).abs() < 1e-15);
        // t_1 = 0.00625, so the first n with t_n > 0.05 is 9.
        assert_eq!(m.n1(0.05), 9);
        // x_1 ≈ 0.158, so the first n with x_n > 1 is 7.
        assert_eq!(m.n2(), 7);
        assert_eq!(m.n_hat_1(1.0), 16);
        assert_eq!(m.stage_count(0.05), 8);
        assert!(MeshSpec::new(1.0, 4.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn binomial_estimate_fields() {
        let e = ProbabilityEstimate::from_binomial(0, 1000);
        assert_eq!(e.p_hat, 0.0);
        assert!(e.ci_high > 0.0 && e.ci_high < 0.004);
        let e = ProbabilityEstimate::from_binomial(250, 1000);
        assert!((e.std_err_log - (0.75f64 / 250.0).sqrt()).abs() < 1e-15);
        assert!(e.ci_low < 0.25 && e.ci_high > 0.25);
    }
}
