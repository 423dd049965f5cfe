use serde::Serialize;

use super::{collect_replicas, BallEvent, ProbabilityEstimate};
use crate::coefficients::{Diffusion, Drift};
use crate::noise::{derive_stream, MasterSeed, NoiseStream};
use crate::parallel;
use crate::solver::{Field, GridSpec, Reference, Stepper};
use crate::{Error, Result};

/// A path model whose ball indicator can be sampled from a stream.
pub trait PathModel: Sync {
    fn inside(&self, stream: &mut NoiseStream) -> Result<bool>;
}

/// The SPDE started at `u₀`, observed against `h` on the grid.
pub struct SpdeBall<'a, S: ?Sized, G: ?Sized> {
    sigma: &'a S,
    drift: &'a G,
    grid: GridSpec,
    reference: Reference<'a>,
    u0: Field,
    eps: f64,
}

impl<'a, S, G> SpdeBall<'a, S, G>
where
    S: Diffusion + ?Sized,
    G: Drift + ?Sized,
{
    pub fn new(event: &'a BallEvent, sigma: &'a S, drift: &'a G, grid: &GridSpec) -> Result<Self> {
        let grid = if (grid.t_end - event.t_end).abs() <= 1e-12 * event.t_end {
            *grid
        } else {
            grid.with_horizon(event.t_end)?
        };
        Ok(Self {
            sigma,
            drift,
            reference: Reference::build(&*event.h, &grid, grid.n_steps()),
            u0: Field::from_profile(&grid, &*event.u0, 0.0),
            grid,
            eps: event.eps,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// `sup |u − h|` over the grid, stopping once it exceeds `stop`.
    pub fn sup_deviation(&self, stream: &mut NoiseStream, stop: f64) -> Result<f64> {
        let initial = self.reference.deviation(&self.u0, 0);
        if initial > stop {
            return Ok(initial);
        }
        let mut stepper = Stepper::new(&self.grid);
        let mut slice = stepper.new_slice();
        let mut field = self.u0.clone();
        let adv = stepper.advance(
            &mut field,
            0..self.grid.n_steps(),
            stream,
            &mut slice,
            self.sigma,
            self.drift,
            &self.reference,
            Some(stop),
        )?;
        Ok(adv.sup_dev.max(initial))
    }
}

impl<S, G> PathModel for SpdeBall<'_, S, G>
where
    S: Diffusion + ?Sized,
    G: Drift + ?Sized,
{
    fn inside(&self, stream: &mut NoiseStream) -> Result<bool> {
        Ok(self.sup_deviation(stream, self.eps)? <= self.eps)
    }
}

/// Fraction of replicas whose path stays in the ball. Replica `r` uses
/// stream `r` of `master`.
pub fn direct_mc_model<M: PathModel + ?Sized>(model: &M, n: usize, master: MasterSeed) -> Result<ProbabilityEstimate> {
    if n == 0 {
        return Err(Error::Validation("replica count must be at least 1".into()));
    }
    let hits = parallel::map_indexed(n, |r| model.inside(&mut derive_stream(master, r as u64)));
    let hits = collect_replicas(hits, None)?;
    let k = hits.iter().filter(|&&b| b).count() as u64;
    Ok(ProbabilityEstimate::from_binomial(k, n as u64))
}

pub fn direct_mc<S, G>(
    event: &BallEvent,
    sigma: &S,
    drift: &G,
    grid: &GridSpec,
    n: usize,
    master: MasterSeed,
) -> Result<ProbabilityEstimate>
where
    S: Diffusion + ?Sized,
    G: Drift + ?Sized,
{
    let model = SpdeBall::new(event, sigma, drift, grid)?;
    direct_mc_model(&model, n, master)
}

/// Direct estimates at several radii from one set of paths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sweep {
    pub eps: Vec<f64>,
    pub estimates: Vec<ProbabilityEstimate>,
    /// Per replica: `sup |u − h|`, or a value above the largest radius.
    pub sup_dev: Vec<f64>,
}

impl Sweep {
    pub fn inside(&self, replica: usize, eps_index: usize) -> bool {
        self.sup_dev[replica] <= self.eps[eps_index]
    }
}

/// Runs each replica once and reads off the indicator for every radius, so
/// the estimates share random numbers. Matches [`direct_mc`] exactly at each
/// radius for the same seed.
pub fn direct_sweep<S, G>(
    event: &BallEvent,
    eps: &[f64],
    sigma: &S,
    drift: &G,
    grid: &GridSpec,
    n: usize,
    master: MasterSeed,
) -> Result<Sweep>
where
    S: Diffusion + ?Sized,
    G: Drift + ?Sized,
{
    if n == 0 {
        return Err(Error::Validation("replica count must be at least 1".into()));
    }
    if eps.is_empty() || eps.iter().any(|e| !(*e >= 0.0)) {
        return Err(Error::Validation("radius sweep must be a nonempty list of nonnegative values".into()));
    }
    let stop = eps.iter().copied().fold(0.0, f64::max);
    let model = SpdeBall::new(event, sigma, drift, grid)?;
    let sups = parallel::map_indexed(n, |r| model.sup_deviation(&mut derive_stream(master, r as u64), stop));
    let sups = collect_replicas(sups, None)?;
    let estimates = eps
        .iter()
        .map(|&e| {
            let k = sups.iter().filter(|&&s| s <= e).count() as u64;
            ProbabilityEstimate::from_binomial(k, n as u64)
        })
        .collect();
    Ok(Sweep {
        eps: eps.to_vec(),
        estimates,
        sup_dev: sups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{DriftSpec, SigmaSpec};
    use crate::profile::Profile;
    use std::sync::Arc;

    fn event(eps: f64, t: f64) -> BallEvent {
        BallEvent::new_unchecked(eps, t, Arc::new(Profile::Zero), Arc::new(Profile::Zero)).unwrap()
    }

    #[test]
    fn certain_and_null_events() {
        let g = GridSpec::new(16, 1e-4, 0.001, 0.5, 0.5).unwrap();
        let s = SigmaSpec::constant(1.0);
        let big = direct_mc(&event(100.0, 0.001), &s, &DriftSpec::Zero, &g, 50, MasterSeed(1)).unwrap();
        assert_eq!(big.p_hat, 1.0);
        let null = direct_mc(&event(0.0, 0.001), &s, &DriftSpec::Zero, &g, 50, MasterSeed(1)).unwrap();
        assert_eq!(null.p_hat, 0.0);
        assert!(null.ci_high > 0.0);
        assert!(direct_mc(&event(1.0, 0.001), &s, &DriftSpec::Zero, &g, 0, MasterSeed(1)).is_err());
    }

    #[test]
    fn sweep_agrees_with_single_runs_and_is_monotone() {
        let g = GridSpec::desk(16, 0.02, 0.5).unwrap();
        let s = SigmaSpec::holder_power(1.0, 2.0, 0.5, 0.8);
        let eps = [0.25, 0.35, 0.5];
        let ev = event(0.5, 0.02);
        let sweep = direct_sweep(&ev, &eps, &s, &DriftSpec::Zero, &g, 200, MasterSeed(4)).unwrap();
        for (k, &e) in eps.iter().enumerate() {
            let single = direct_mc(&ev.with_eps(e), &s, &DriftSpec::Zero, &g, 200, MasterSeed(4)).unwrap();
            assert_eq!(single, sweep.estimates[k]);
        }
        for r in 0..200 {
            assert!(!sweep.inside(r, 0) || sweep.inside(r, 1));
            assert!(!sweep.inside(r, 1) || sweep.inside(r, 2));
        }
    }
}
