use serde::{Deserialize, Serialize};

use super::{collect_replicas, BallEvent, Method, MeshSpec, ProbabilityEstimate};
use crate::coefficients::{Diffusion, Drift};
use crate::noise::{derive_stream, MasterSeed, NoiseStream};
use crate::parallel;
use crate::solver::{Field, GridSpec, Reference, Stepper};
use crate::{Error, Result};

/// What a particle must do to survive a stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageEvent {
    /// Stay within `ε` over the stage and end within `ε/3`.
    #[default]
    Pinned,
    /// Stay within `ε` over the stage.
    PathOnly,
}

/// A Markov model observed over consecutive stages.
pub trait StagedModel: Sync {
    type State: Clone + Send + Sync;
    fn initial(&self) -> Self::State;
    fn stages(&self) -> usize;
    /// Advances `state` through `stage` and reports survival.
    fn advance(&self, state: &mut Self::State, stage: usize, stream: &mut NoiseStream) -> Result<bool>;
}

/// Independent per-stage survival with probability `q`.
#[derive(Debug, Clone, Copy)]
pub struct BernoulliStages {
    pub q: f64,
    pub stages: usize,
}

impl StagedModel for BernoulliStages {
    type State = ();

    fn initial(&self) {}

    fn stages(&self) -> usize {
        self.stages
    }

    fn advance(&self, _: &mut (), _: usize, stream: &mut NoiseStream) -> Result<bool> {
        Ok(stream.uniform() < self.q)
    }
}

/// The SPDE ball event cut into the stretched intervals `Î_n`.
pub struct SpdeStages<'a, S: ?Sized, G: ?Sized> {
    sigma: &'a S,
    drift: &'a G,
    grid: GridSpec,
    reference: Reference<'a>,
    u0: Field,
    eps: f64,
    boundaries: Vec<usize>,
    event: StageEvent,
}

impl<'a, S, G> SpdeStages<'a, S, G>
where
    S: Diffusion + ?Sized,
    G: Drift + ?Sized,
{
    pub fn new(
        ball: &'a BallEvent,
        sigma: &'a S,
        drift: &'a G,
        grid: &GridSpec,
        mesh: &MeshSpec,
        event: StageEvent,
    ) -> Result<Self> {
        mesh.validate()?;
        if (mesh.eps - ball.eps).abs() > 1e-12 * ball.eps.max(1.0) {
            return Err(Error::Validation(format!(
                "mesh radius {} does not match event radius {}",
                mesh.eps, ball.eps
            )));
        }
        let grid = if (grid.t_end - ball.t_end).abs() <= 1e-12 * ball.t_end {
            *grid
        } else {
            grid.with_horizon(ball.t_end)?
        };
        let n_steps = grid.n_steps();
        let stages = mesh.stage_count(ball.t_end);
        let mut boundaries = vec![0usize];
        for n in 1..stages {
            let k = ((mesh.t_hat_n(n) / grid.dt).round() as usize).min(n_steps);
            if k > *boundaries.last().unwrap() && k < n_steps {
                boundaries.push(k);
            }
        }
        boundaries.push(n_steps);
        Ok(Self {
            sigma,
            drift,
            reference: Reference::build(&*ball.h, &grid, n_steps),
            u0: Field::from_profile(&grid, &*ball.u0, 0.0),
            grid,
            eps: ball.eps,
            boundaries,
            event,
        })
    }

    /// Grid step indices of the stage boundaries, `0` through `n_steps`.
    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }
}

impl<S, G> StagedModel for SpdeStages<'_, S, G>
where
    S: Diffusion + ?Sized,
    G: Drift + ?Sized,
{
    type State = Field;

    fn initial(&self) -> Field {
        self.u0.clone()
    }

    fn stages(&self) -> usize {
        self.boundaries.len() - 1
    }

    fn advance(&self, state: &mut Field, stage: usize, stream: &mut NoiseStream) -> Result<bool> {
        let (start, end) = (self.boundaries[stage], self.boundaries[stage + 1]);
        if stage == 0 && self.reference.deviation(state, 0) > self.eps {
            return Ok(false);
        }
        let mut stepper = Stepper::new(&self.grid);
        let mut slice = stepper.new_slice();
        let adv = stepper.advance(
            state,
            start..end,
            stream,
            &mut slice,
            self.sigma,
            self.drift,
            &self.reference,
            Some(self.eps),
        )?;
        if adv.exit_step.is_some() {
            return Ok(false);
        }
        Ok(match self.event {
            StageEvent::PathOnly => true,
            StageEvent::Pinned => self.reference.deviation(state, end) <= self.eps / 3.0,
        })
    }
}

/// Fixed-effort splitting: `k` particles per stage, survivors resampled
/// uniformly back to `k`. Particle `j` of stage `n` uses stream `j` of
/// `master.child(n + 1)`; the resampling of stage `n` uses stream `n` of
/// `master.child(0)`.
pub fn splitting_model<M: StagedModel + ?Sized>(model: &M, k: usize, master: MasterSeed) -> Result<ProbabilityEstimate> {
    if k < 2 {
        return Err(Error::Validation(format!("splitting needs at least 2 particles, got {k}")));
    }
    let stages = model.stages();
    let mut particles = vec![model.initial(); k];
    let mut survival = Vec::with_capacity(stages);
    let mut log_p: f64 = 0.0;
    let mut var_log = 0.0;
    for n in 0..stages {
        let seed = master.child(n as u64 + 1);
        let runs = parallel::map_indexed(k, |j| {
            let mut state = particles[j].clone();
            let ok = model.advance(&mut state, n, &mut derive_stream(seed, j as u64))?;
            Ok((state, ok))
        });
        let runs = collect_replicas(runs, Some(n))?;
        let survivors: Vec<usize> = (0..k).filter(|&j| runs[j].1).collect();
        let q = survivors.len() as f64 / k as f64;
        survival.push(q);
        if survivors.is_empty() {
            // Upper bound: product so far times the one-sided bound at this stage.
            let hi = log_p.exp() * (1.0 - 0.05f64.powf(1.0 / k as f64));
            return Ok(ProbabilityEstimate {
                p_hat: 0.0,
                log_p_hat: f64::NEG_INFINITY,
                std_err_log: f64::INFINITY,
                method: Method::Splitting,
                replicas: k,
                ci_low: 0.0,
                ci_high: hi,
                stage_survival: survival,
                extinct_stage: Some(n),
            });
        }
        log_p += q.ln();
        var_log += (1.0 - q) / (k as f64 * q);
        if n + 1 < stages {
            let mut rs = derive_stream(master.child(0), n as u64);
            particles = (0..k)
                .map(|_| runs[survivors[rs.index(survivors.len())]].0.clone())
                .collect();
        }
    }
    let p = log_p.exp();
    let se = var_log.sqrt();
    Ok(ProbabilityEstimate {
        p_hat: p,
        log_p_hat: log_p,
        std_err_log: se,
        method: Method::Splitting,
        replicas: k,
        ci_low: (log_p - 1.96 * se).exp(),
        ci_high: (log_p + 1.96 * se).exp().min(1.0),
        stage_survival: survival,
        extinct_stage: None,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn splitting_mc<S, G>(
    event: &BallEvent,
    sigma: &S,
    drift: &G,
    grid: &GridSpec,
    mesh: &MeshSpec,
    k: usize,
    master: MasterSeed,
    stage_event: StageEvent,
) -> Result<ProbabilityEstimate>
where
    S: Diffusion + ?Sized,
    G: Drift + ?Sized,
{
    let model = SpdeStages::new(event, sigma, drift, grid, mesh, stage_event)?;
    splitting_model(&model, k, master)
}

/// Plain Monte Carlo of the chained stage events, without resampling.
pub fn direct_mc_staged<M: StagedModel + ?Sized>(model: &M, n: usize, master: MasterSeed) -> Result<ProbabilityEstimate> {
    if n == 0 {
        return Err(Error::Validation("replica count must be at least 1".into()));
    }
    let hits = parallel::map_indexed(n, |r| {
        let mut stream = derive_stream(master, r as u64);
        let mut state = model.initial();
        for s in 0..model.stages() {
            if !model.advance(&mut state, s, &mut stream)? {
                return Ok(false);
            }
        }
        Ok(true)
    });
    let hits = collect_replicas(hits, None)?;
    let k = hits.iter().filter(|&&b| b).count() as u64;
    Ok(ProbabilityEstimate::from_binomial(k, n as u64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{DriftSpec, SigmaSpec};
    use crate::profile::Profile;
    use crate::stats::Moments;
    use std::sync::Arc;

    #[test]
    fn product_of_bernoullis() {
        let model = BernoulliStages { q: 0.5, stages: 5 };
        let e = splitting_model(&model, 2000, MasterSeed(8)).unwrap();
        let want: f64 = 0.03125;
        assert!((e.log_p_hat - want.ln()).abs() < 3.0 * e.std_err_log, "{e:?}");
        let prod: f64 = e.stage_survival.iter().product();
        assert!((prod - e.p_hat).abs() < 1e-15);
    }

    #[test]
    fn unbiased_over_repetitions() {
        let model = BernoulliStages { q: 0.3, stages: 4 };
        let m: Moments = (0..400)
            .map(|s| splitting_model(&model, 100, MasterSeed(1000 + s)).unwrap().p_hat)
            .collect();
        let want = 0.3f64.powi(4);
        assert!((m.mean() - want).abs() < 3.0 * m.std_err(), "{} vs {want}", m.mean());
    }

    #[test]
    fn extinction_reports_stage() {
        let model = BernoulliStages { q: 0.0, stages: 3 };
        let e = splitting_model(&model, 10, MasterSeed(1)).unwrap();
        assert_eq!(e.p_hat, 0.0);
        assert_eq!(e.extinct_stage, Some(0));
        assert!(splitting_model(&model, 1, MasterSeed(1)).is_err());
    }

    #[test]
    fn stage_boundaries_cover_horizon() {
        let ev = BallEvent::new(0.5, 0.05, Arc::new(Profile::Zero), Arc::new(Profile::Zero)).unwrap();
        let g = GridSpec::desk(32, 0.05, 0.5).unwrap();
        let mesh = MeshSpec::new(0.1, 4.0, 1.0, 0.5).unwrap();
        let s = SigmaSpec::constant(1.0);
        let m = SpdeStages::new(&ev, &s, &DriftSpec::Zero, &g, &mesh, StageEvent::Pinned).unwrap();
        let b = m.boundaries();
        assert_eq!(b.len(), 9);
        assert_eq!(*b.last().unwrap(), g.n_steps());
        assert!(b.windows(2).all(|w| w[0] < w[1]));
        let bad = MeshSpec::new(0.1, 4.0, 1.0, 0.4).unwrap();
        assert!(SpdeStages::new(&ev, &s, &DriftSpec::Zero, &g, &bad, StageEvent::Pinned).is_err());
    }

    #[test]
    fn single_stage_matches_plain_monte_carlo() {
        let ev = BallEvent::new(0.5, 0.01, Arc::new(Profile::Zero), Arc::new(Profile::Zero)).unwrap();
        let g = GridSpec::desk(32, 0.01, 0.5).unwrap();
        let mesh = MeshSpec::new(0.5, 4.0, 1.0, 0.5).unwrap();
        let s = SigmaSpec::constant(1.0);
        let m = SpdeStages::new(&ev, &s, &DriftSpec::Zero, &g, &mesh, StageEvent::Pinned).unwrap();
        assert_eq!(m.stages(), 1);
        let split = splitting_model(&m, 2000, MasterSeed(3)).unwrap();
        let direct = direct_mc_staged(&m, 2000, MasterSeed(4)).unwrap();
        assert!(split.ci_overlaps(&direct), "{split:?} {direct:?}");
    }
}
