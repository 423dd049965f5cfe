use serde::Serialize;

use super::{collect_replicas, MeshSpec};
use crate::coefficients::{Clipped, Diffusion, DriftSpec, Frozen};
use crate::noise::{derive_stream, MasterSeed, NoiseStream};
use crate::parallel;
use crate::profile::Profile;
use crate::solver::{Field, GridSpec, Stepper};
use crate::stats::{clopper_pearson, quantile_sorted};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingStats {
    pub replicas: usize,
    /// Grid steps covering `[0, t̂₁]`.
    pub steps: usize,
    pub horizon: f64,
    /// Per replica `sup |u − u_g|`, in replica order.
    pub sups: Vec<f64>,
    pub median: f64,
    /// `(level, value)` pairs at 10, 25, 75 and 90 percent.
    pub quantiles: Vec<(f64, f64)>,
    pub max: f64,
    /// `ε/6`.
    pub threshold: f64,
    pub fraction_within: f64,
    pub fraction_ci: (f64, f64),
}

/// Runs `u` (coefficient `σ(u)`) and the Gaussian comparison `u_g`
/// (coefficient frozen at `u₀ = 0`) on common noise over `[0, t̂₁]` and
/// summarizes `sup |u − u_g|`.
pub fn coupling_diagnostic<S: Diffusion + ?Sized>(
    sigma: &S,
    mesh: &MeshSpec,
    grid: &GridSpec,
    n: usize,
    master: MasterSeed,
) -> Result<CouplingStats> {
    mesh.validate()?;
    if n == 0 {
        return Err(Error::Validation("replica count must be at least 1".into()));
    }
    let horizon = mesh.t_hat_n(1);
    let steps = ((horizon / grid.dt) - 1e-9).ceil().max(1.0) as usize;
    let frozen = Frozen {
        inner: sigma,
        u0: Profile::Zero,
    };

    let sups = parallel::map_indexed(n, |r| -> Result<f64> {
        let mut stream = derive_stream(master, r as u64);
        let mut stepper = Stepper::new(grid);
        let mut slice = stepper.new_slice();
        let mut u = Field::zeros(grid);
        let mut ug = Field::zeros(grid);
        let mut m: f64 = 0.0;
        for s in 0..steps {
            slice.resample(&mut stream);
            stepper.apply(&mut u, sigma, &DriftSpec::Zero, &slice, s)?;
            stepper.apply(&mut ug, &frozen, &DriftSpec::Zero, &slice, s)?;
            m = m.max(u.sup_abs_diff(&ug));
        }
        Ok(m)
    });
    let sups = collect_replicas(sups, None)?;

    let mut sorted = sups.clone();
    sorted.sort_by(f64::total_cmp);
    let threshold = mesh.eps / 6.0;
    let within = sups.iter().filter(|&&s| s <= threshold).count() as u64;
    Ok(CouplingStats {
        replicas: n,
        steps,
        horizon,
        median: quantile_sorted(&sorted, 0.5),
        quantiles: [0.1, 0.25, 0.75, 0.9]
            .iter()
            .map(|&q| (q, quantile_sorted(&sorted, q)))
            .collect(),
        max: *sorted.last().unwrap(),
        threshold,
        fraction_within: within as f64 / n as f64,
        fraction_ci: clopper_pearson(within, n as u64, 0.95),
        sups,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClipReport {
    /// Fields coincide (to `1e-12`) at every step up to and including the
    /// exit step, or over the whole run if there is no exit.
    pub agree: bool,
    /// First step with `sup |u − v| > 1e-12`.
    pub first_divergence: Option<usize>,
    /// First step with `sup |u| > ε`.
    pub exit_step: Option<usize>,
    /// Largest `sup |u − v|` seen up to the exit step.
    pub max_diff_before_exit: f64,
}

/// Solves `u` with `σ(u)` and `v` with `σ(f_ε(v))` on the same noise from
/// zero initial data, over the whole grid horizon.
pub fn clipped_agreement<S: Diffusion + ?Sized>(
    sigma: &S,
    eps: f64,
    grid: &GridSpec,
    stream: &mut NoiseStream,
) -> Result<ClipReport> {
    if !(eps >= 0.0) {
        return Err(Error::Validation(format!("radius must be nonnegative, got {eps}")));
    }
    let clipped = Clipped { inner: sigma, eps };
    let mut stepper = Stepper::new(grid);
    let mut slice = stepper.new_slice();
    let mut u = Field::zeros(grid);
    let mut v = Field::zeros(grid);
    let mut exit_step = None;
    let mut first_divergence = None;
    let mut max_before = 0.0f64;
    for s in 0..grid.n_steps() {
        slice.resample(stream);
        stepper.apply(&mut u, sigma, &DriftSpec::Zero, &slice, s)?;
        stepper.apply(&mut v, &clipped, &DriftSpec::Zero, &slice, s)?;
        let k = s + 1;
        let diff = u.sup_abs_diff(&v);
        if exit_step.is_none() {
            max_before = max_before.max(diff);
        }
        if first_divergence.is_none() && diff > 1e-12 {
            first_divergence = Some(k);
        }
        if exit_step.is_none() && u.sup_abs() > eps {
            exit_step = Some(k);
        }
        if first_divergence.is_some() && exit_step.is_some() {
            break;
        }
    }
    let agree = match (first_divergence, exit_step) {
        (None, _) => true,
        (Some(d), Some(e)) => d > e,
        (Some(_), None) => false,
    };
    Ok(ClipReport {
        agree,
        first_divergence,
        exit_step,
        max_diff_before_exit: max_before,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::SigmaSpec;

    #[test]
    fn constant_sigma_couples_exactly() {
        let g = GridSpec::desk(32, 0.05, 0.5).unwrap();
        let mesh = MeshSpec::new(0.1, 4.0, 1.0, 0.5).unwrap();
        let c = coupling_diagnostic(&SigmaSpec::constant(1.0), &mesh, &g, 20, MasterSeed(1)).unwrap();
        assert!(c.sups.iter().all(|&s| s == 0.0));
        assert_eq!(c.fraction_within, 1.0);
    }

    #[test]
    fn shorter_window_shrinks_difference() {
        let g = GridSpec::desk(32, 0.05, 0.5).unwrap();
        let s = SigmaSpec::holder_power(1.0, 2.0, 0.5, 0.8);
        let wide = coupling_diagnostic(&s, &MeshSpec::new(0.1, 4.0, 1.0, 0.5).unwrap(), &g, 50, MasterSeed(2)).unwrap();
        let narrow = coupling_diagnostic(&s, &MeshSpec::new(0.1, 4.0, 1.5, 0.5).unwrap(), &g, 50, MasterSeed(2)).unwrap();
        assert!(narrow.steps < wide.steps);
        for (a, b) in narrow.sups.iter().zip(&wide.sups) {
            assert!(a <= b);
        }
        assert!(narrow.median <= wide.median);
    }

    #[test]
    fn clip_is_inactive_inside_the_ball() {
        let g = GridSpec::desk(32, 0.01, 0.5).unwrap();
        let s = SigmaSpec::holder_power(1.0, 2.0, 0.5, 0.8);
        let r = clipped_agreement(&s, 100.0, &g, &mut derive_stream(MasterSeed(5), 0)).unwrap();
        assert!(r.agree);
        assert_eq!(r.first_divergence, None);
        assert_eq!(r.exit_step, None);
    }

    #[test]
    fn tiny_radius_diverges_right_after_exit() {
        let g = GridSpec::desk(32, 0.01, 0.5).unwrap();
        let s = SigmaSpec::holder_power(1.0, 2.0, 0.5, 0.8);
        let r = clipped_agreement(&s, 1e-9, &g, &mut derive_stream(MasterSeed(5), 0)).unwrap();
        assert_eq!(r.exit_step, Some(1));
        assert_eq!(r.first_divergence, Some(2));
        assert!(r.agree);
        assert_eq!(r.max_diff_before_exit, 0.0);
    }
}
