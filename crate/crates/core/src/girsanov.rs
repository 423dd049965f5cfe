//! Drift removal by change of measure, and the shift that moves the
//! reference path to zero.
//!
//! With `θ = g/σ` evaluated at the start of each step, the discrete
//! exponential martingale over the recorded noise is
//!
//! ```text
//! log D = Σₖ Σᵢ θ(tₖ, xᵢ, uᵢ) ΔWᵢ − ½ Σₖ Σᵢ θ² Δt wᵢ
//! ```
//!
//! where `ΔWᵢ ~ N(0, Δt·wᵢ)` is the white-noise mass of node `i`'s control
//! volume. `E[D] = 1` holds exactly for the discrete sum.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coefficients::{Diffusion, Drift, DriftSpec, Negated, Shifted};
use crate::noise::{derive_stream, MasterSeed, NoiseSlice, NoiseStream};
use crate::parallel;
use crate::profile::SpaceTimeProfile;
use crate::solver::{Field, GridSpec, Reference, Stepper};
use crate::stats::Moments;
use crate::{Error, Result};

/// `s(t, x) = u₀(x) + h(t, x) − h(0, x)`, so that `w = u − s` starts at 0.
#[derive(Clone)]
pub struct ShiftProfile {
    pub u0: Arc<dyn SpaceTimeProfile>,
    pub h: Arc<dyn SpaceTimeProfile>,
}

impl fmt::Debug for ShiftProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ShiftProfile(..)")
    }
}

impl SpaceTimeProfile for ShiftProfile {
    fn value(&self, t: f64, x: f64) -> f64 {
        self.u0.value(0.0, x) + self.h.value(t, x) - self.h.value(0.0, x)
    }

    fn time_derivative(&self, t: f64, x: f64) -> Option<f64> {
        self.h.time_derivative(t, x)
    }

    fn space_second_derivative(&self, t: f64, x: f64) -> Option<f64> {
        Some(
            self.u0.space_second_derivative(0.0, x)? + self.h.space_second_derivative(t, x)?
                - self.h.space_second_derivative(0.0, x)?,
        )
    }

    fn is_zero(&self) -> bool {
        self.u0.is_zero() && self.h.is_zero()
    }
}

/// How `H = ∂ₜ − ν∂²ₓ` is applied to the shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftOperator {
    /// Closed-form derivatives of the profiles, or central differences when
    /// those are missing and the fallback is enabled.
    #[default]
    Analytic,
    /// The solver's own discrete operator, so that the shifted run matches
    /// the direct run up to rounding.
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ShiftOptions {
    pub operator: ShiftOperator,
    pub finite_difference_fallback: bool,
}

#[derive(Debug, Clone, Copy)]
enum Correction {
    Exact { nu: f64 },
    Differences { nu: f64 },
    Grid { nu: f64, dt: f64, nx: usize, theta: f64 },
}

/// `g₁(t, x, w) = g(t, x, w + s) − Hs(t, x)`.
pub struct ShiftedDrift {
    base: DriftSpec,
    shift: Arc<ShiftProfile>,
    correction: Correction,
    bound: f64,
}

impl fmt::Debug for ShiftedDrift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ShiftedDrift")
            .field("base", &self.base)
            .field("correction", &self.correction)
            .field("bound", &self.bound)
            .finish()
    }
}

impl ShiftedDrift {
    pub fn shift(&self) -> Arc<ShiftProfile> {
        self.shift.clone()
    }

    /// `Hs(t, x)` under the chosen operator.
    pub fn heat_of_shift(&self, t: f64, x: f64) -> f64 {
        let s = &*self.shift;
        match self.correction {
            Correction::Exact { nu } => s.heat_operator(t, x, nu).unwrap_or(f64::NAN),
            Correction::Differences { nu } => {
                let ht = 1e-5;
                let hx = 1e-4;
                let dt = if t >= ht {
                    (s.value(t + ht, x) - s.value(t - ht, x)) / (2.0 * ht)
                } else {
                    (s.value(t + ht, x) - s.value(t, x)) / ht
                };
                let dxx = (s.value(t, x + hx) - 2.0 * s.value(t, x) + s.value(t, x - hx)) / (hx * hx);
                dt - nu * dxx
            }
            Correction::Grid { nu, dt, nx, theta } => {
                let i = (x * nx as f64).round() as usize;
                let dx = 1.0 / nx as f64;
                let lap = |tt: f64| {
                    let left = if i == 0 { 1 } else { i - 1 };
                    let right = if i == nx { nx - 1 } else { i + 1 };
                    let xi = i as f64 / nx as f64;
                    (s.value(tt, left as f64 / nx as f64) - 2.0 * s.value(tt, xi)
                        + s.value(tt, right as f64 / nx as f64))
                        / (dx * dx)
                };
                let xi = i as f64 / nx as f64;
                (s.value(t + dt, xi) - s.value(t, xi)) / dt - nu * (theta * lap(t + dt) + (1.0 - theta) * lap(t))
            }
        }
    }
}

impl Drift for ShiftedDrift {
    fn eval(&self, t: f64, x: f64, w: f64) -> f64 {
        let u = w + self.shift.value(t, x);
        self.base.eval(t, x, u) - self.heat_of_shift(t, x)
    }

    fn bound(&self) -> f64 {
        self.bound
    }
}

/// The drift of the equation for `w = u − u₀ − h + h₀`, which starts at zero
/// and is compared against the zero profile.
pub fn shift_to_zero(
    u0: Arc<dyn SpaceTimeProfile>,
    h: Arc<dyn SpaceTimeProfile>,
    g: DriftSpec,
    grid: &GridSpec,
    options: ShiftOptions,
) -> Result<DriftSpec> {
    g.validate()?;
    let shift = Arc::new(ShiftProfile { u0, h });
    let nu = grid.nu;
    let correction = match options.operator {
        ShiftOperator::Grid => Correction::Grid {
            nu,
            dt: grid.dt,
            nx: grid.nx,
            theta: grid.theta,
        },
        ShiftOperator::Analytic => {
            if shift.heat_operator(0.0, 0.5, nu).is_some() {
                Correction::Exact { nu }
            } else if options.finite_difference_fallback {
                Correction::Differences { nu }
            } else {
                return Err(Error::Config(
                    "profile lacks closed-form derivatives and the finite-difference fallback is disabled".into(),
                ));
            }
        }
    };

    let mut drift = ShiftedDrift {
        base: g,
        shift,
        correction,
        bound: 0.0,
    };

    let n_steps = grid.n_steps();
    let samples = n_steps.min(2000);
    let times: Vec<f64> = (0..=samples)
        .map(|k| {
            let last = if matches!(correction, Correction::Grid { .. }) {
                grid.time(n_steps.saturating_sub(1))
            } else {
                grid.t_end
            };
            last * k as f64 / samples.max(1) as f64
        })
        .collect();
    let sup = |f: &dyn Fn(f64, f64) -> f64| {
        let mut m: f64 = 0.0;
        for &t in &times {
            for i in 0..grid.nodes() {
                m = m.max(f(t, grid.x(i)).abs());
            }
        }
        m
    };

    let s = drift.shift.clone();
    let extra = match correction {
        Correction::Exact { nu } => {
            let u0 = &s.u0;
            let h = &s.h;
            sup(&|_, x| -nu * u0.space_second_derivative(0.0, x).unwrap_or(0.0))
                + sup(&|t, x| h.heat_operator(t, x, nu).unwrap_or(0.0))
                + sup(&|_, x| -nu * h.space_second_derivative(0.0, x).unwrap_or(0.0))
        }
        _ => sup(&|t, x| drift.heat_of_shift(t, x)),
    };
    drift.bound = drift.base.bound() + extra;
    if !drift.bound.is_finite() {
        return Err(Error::Validation("shifted drift is unbounded on the grid".into()));
    }
    Ok(DriftSpec::ShiftInduced(Arc::new(drift)))
}

/// `σ₁(t, x, w) = σ(t, x, w + s(t, x))` for the shift behind `drift`.
pub fn shifted_sigma<S: Diffusion>(sigma: S, drift: &ShiftedDrift) -> Shifted<S> {
    Shifted {
        inner: sigma,
        shift: drift.shift(),
    }
}

/// Start-of-step fields and the noise slices that drove each step.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub grid: GridSpec,
    pub fields: Vec<Field>,
    pub slices: Vec<NoiseSlice>,
}

/// Runs a full path over `[0, T]` and keeps every step's input.
pub fn record_path<S, G>(u0: &Field, sigma: &S, drift: &G, grid: &GridSpec, stream: &mut NoiseStream) -> Result<TrajectoryRecord>
where
    S: Diffusion + ?Sized,
    G: Drift + ?Sized,
{
    let n = grid.n_steps();
    let mut stepper = Stepper::new(grid);
    let mut slice = stepper.new_slice();
    let mut field = Field {
        values: u0.values.clone(),
        time: 0.0,
    };
    let mut fields = Vec::with_capacity(n);
    let mut slices = Vec::with_capacity(n);
    for s in 0..n {
        slice.resample(stream);
        fields.push(field.clone());
        slices.push(slice.clone());
        stepper.apply(&mut field, sigma, drift, &slice, s)?;
    }
    Ok(TrajectoryRecord {
        grid: *grid,
        fields,
        slices,
    })
}

/// Contribution of one step to `log D`.
pub fn log_density_increment<S, G>(field: &Field, slice: &NoiseSlice, sigma: &S, g: &G, grid: &GridSpec) -> Result<f64>
where
    S: Diffusion + ?Sized,
    G: Drift + ?Sized,
{
    if g.is_zero() {
        return Ok(0.0);
    }
    let dx = grid.dx();
    let mut acc = 0.0;
    for (i, (&u, &xi)) in field.values.iter().zip(&slice.values).enumerate() {
        let x = grid.x(i);
        let s = sigma.eval(field.time, x, u);
        if s == 0.0 || !s.is_finite() {
            return Err(Error::InvariantViolation(format!(
                "diffusion coefficient is {s} at t = {}, x = {x}",
                field.time
            )));
        }
        let theta = g.eval(field.time, x, u) / s;
        let w = grid.cell_weight(i);
        let dw = xi * (w / dx).sqrt();
        acc += theta * dw - 0.5 * theta * theta * slice.dt * w;
    }
    Ok(acc)
}

/// `exp(Σ θ ΔW − ½ Σ θ² Δt w)` along a recorded path.
pub fn density<S, G>(record: &TrajectoryRecord, sigma: &S, g: &G) -> Result<f64>
where
    S: Diffusion + ?Sized,
    G: Drift + ?Sized,
{
    Ok(log_density(record, sigma, g)?.exp())
}

pub fn log_density<S, G>(record: &TrajectoryRecord, sigma: &S, g: &G) -> Result<f64>
where
    S: Diffusion + ?Sized,
    G: Drift + ?Sized,
{
    if record.fields.len() != record.slices.len() {
        return Err(Error::Config("record has mismatched fields and slices".into()));
    }
    let mut total = 0.0;
    for (f, s) in record.fields.iter().zip(&record.slices) {
        total += log_density_increment(f, s, sigma, g, &record.grid)?;
    }
    Ok(total)
}

/// Outcome of one path run with a density accumulated alongside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightedPath {
    pub sup_dev: f64,
    pub log_density: f64,
}

/// Streams a full path driven by `drift`, accumulating the density of the
/// `tilt` drift against the same noise.
#[allow(clippy::too_many_arguments)]
pub fn weighted_path<S, G, T>(
    u0: &Field,
    sigma: &S,
    drift: &G,
    tilt: &T,
    grid: &GridSpec,
    stream: &mut NoiseStream,
    reference: &Reference<'_>,
) -> Result<WeightedPath>
where
    S: Diffusion + ?Sized,
    G: Drift + ?Sized,
    T: Drift + ?Sized,
{
    let mut stepper = Stepper::new(grid);
    let mut slice = stepper.new_slice();
    let mut field = Field {
        values: u0.values.clone(),
        time: 0.0,
    };
    let mut sup_dev = reference.deviation(&field, 0);
    let mut log_d = 0.0;
    for s in 0..grid.n_steps() {
        slice.resample(stream);
        log_d += log_density_increment(&field, &slice, sigma, tilt, grid)?;
        stepper.apply(&mut field, sigma, drift, &slice, s)?;
        sup_dev = sup_dev.max(reference.deviation(&field, s + 1));
    }
    Ok(WeightedPath {
        sup_dev,
        log_density: log_d,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CsVerdict {
    pub holds: bool,
    /// `√p·M·(1 + 3·se) − q`; nonnegative iff the inequality holds.
    pub margin: f64,
}

/// Checks `Q(A) ≤ √P(A)·M` with slack `1 + 3·combined_se`.
pub fn cs_check(q_prob: f64, p_prob: f64, m_bound: f64, combined_se: f64) -> CsVerdict {
    let rhs = p_prob.max(0.0).sqrt() * m_bound * (1.0 + 3.0 * combined_se.max(0.0));
    CsVerdict {
        holds: q_prob <= rhs,
        margin: rhs - q_prob,
    }
}

/// `M = √E[D²]` from log-density samples, with a delta-method error.
pub fn second_moment_bound(log_densities: &[f64]) -> (f64, f64) {
    let m: Moments = log_densities.iter().map(|l| (2.0 * l).exp()).collect();
    let root = m.mean().sqrt();
    let se = if root > 0.0 { m.std_err() / (2.0 * root) } else { 0.0 };
    (root, se)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CsReport {
    /// Driftless ball probability, simulated directly.
    pub q_hat: f64,
    pub q_se: f64,
    /// Ball probability with the drift, simulated directly.
    pub p_hat: f64,
    pub p_se: f64,
    /// `Q(A)` recomputed as `E_P[1_A D]`.
    pub q_reweighted: f64,
    pub q_reweighted_se: f64,
    pub m_hat: f64,
    pub m_se: f64,
    pub mean_density: f64,
    pub mean_density_se: f64,
    pub combined_se: f64,
    pub verdict: CsVerdict,
    pub replicas: usize,
}

/// Simulates both measures of the Cauchy–Schwarz comparison: `P` drives the
/// path with drift `g`, `Q` removes it. `dQ/dP` is the density of `−g`
/// along `P`-paths.
#[allow(clippy::too_many_arguments)]
pub fn cs_experiment<S, G>(
    u0: &Field,
    h: &dyn SpaceTimeProfile,
    eps: f64,
    sigma: &S,
    g: &G,
    grid: &GridSpec,
    replicas: usize,
    master: MasterSeed,
) -> Result<CsReport>
where
    S: Diffusion + ?Sized,
    G: Drift + ?Sized,
{
    if replicas < 2 {
        return Err(Error::Validation("need at least two replicas".into()));
    }
    let reference = Reference::build(h, grid, grid.n_steps());
    let tilt = Negated(g);
    let p_runs = parallel::map_indexed(replicas, |r| {
        let mut stream = derive_stream(master.child(1), r as u64);
        weighted_path(u0, sigma, g, &tilt, grid, &mut stream, &reference)
    });
    let q_runs = parallel::map_indexed(replicas, |r| {
        let mut stream = derive_stream(master.child(2), r as u64);
        weighted_path(u0, sigma, &DriftSpec::Zero, &DriftSpec::Zero, grid, &mut stream, &reference)
    });
    let p_runs: Vec<WeightedPath> = p_runs.into_iter().collect::<Result<_>>()?;
    let q_runs: Vec<WeightedPath> = q_runs.into_iter().collect::<Result<_>>()?;

    let inside = |w: &WeightedPath| if w.sup_dev <= eps { 1.0 } else { 0.0 };
    let p: Moments = p_runs.iter().map(inside).collect();
    let q: Moments = q_runs.iter().map(inside).collect();
    let reweighted: Moments = p_runs.iter().map(|w| inside(w) * w.log_density.exp()).collect();
    let dens: Moments = p_runs.iter().map(|w| w.log_density.exp()).collect();
    let logs: Vec<f64> = p_runs.iter().map(|w| w.log_density).collect();
    let (m_hat, m_se) = second_moment_bound(&logs);

    let rhs = p.mean().sqrt() * m_hat;
    let combined_se = if rhs > 0.0 {
        let rel_q = q.std_err() / rhs;
        let rel_p = if p.mean() > 0.0 { p.std_err() / (2.0 * p.mean()) } else { 0.0 };
        let rel_m = m_se / m_hat;
        (rel_q * rel_q + rel_p * rel_p + rel_m * rel_m).sqrt()
    } else {
        0.0
    };
    Ok(CsReport {
        q_hat: q.mean(),
        q_se: q.std_err(),
        p_hat: p.mean(),
        p_se: p.std_err(),
        q_reweighted: reweighted.mean(),
        q_reweighted_se: reweighted.std_err(),
        m_hat,
        m_se,
        mean_density: dens.mean(),
        mean_density_se: dens.std_err(),
        combined_se,
        verdict: cs_check(q.mean(), p.mean(), m_hat, combined_se),
        replicas,
    })
}

/// Sample mean of the density over driftless paths, for a martingale check.
pub fn density_mean<S, G>(
    sigma: &S,
    g: &G,
    grid: &GridSpec,
    replicas: usize,
    master: MasterSeed,
) -> Result<Moments>
where
    S: Diffusion + ?Sized,
    G: Drift + ?Sized,
{
    let u0 = Field::zeros(grid);
    let runs = parallel::map_indexed(replicas, |r| {
        let mut stream = derive_stream(master, r as u64);
        weighted_path(&u0, sigma, &DriftSpec::Zero, g, grid, &mut stream, &Reference::Zero)
    });
    let mut m = Moments::default();
    for w in runs {
        m.push(w?.log_density.exp());
    }
    Ok(m)
}
