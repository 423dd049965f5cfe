//! The pipelines behind each subcommand.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use smallball::analysis::{bound_window_check, fit_exponent, tail_fit, ExponentFit, TailFit, WindowVerdict};
use smallball::coefficients::{Diffusion, DriftSpec};
use smallball::estimator::{
    clipped_agreement, coupling_diagnostic, direct_sweep, splitting_mc, tail_curve, ClipReport, CouplingStats,
    ProbabilityEstimate, TailCurve,
};
use smallball::girsanov::{cs_experiment, density_mean, CsReport};
use smallball::noise::{derive_stream, MasterSeed};
use smallball::solver::{solve, Field};

use crate::config::{check, ExperimentConfig};
use crate::output::{write_manifest, Sink};
use crate::plotdata::{emit_plotdata, PlotKind};
use crate::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Simulate,
    Smallball,
    Tail,
    Couple,
    ClipCheck,
    GirsanovCheck,
    /// Reads a small-ball CSV; defaults to `smallball.csv` in the output directory.
    Fit { input: Option<PathBuf> },
    Plotdata { input: PathBuf, kind: PlotKind },
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Simulate => "simulate",
            Task::Smallball => "smallball",
            Task::Tail => "tail",
            Task::Couple => "couple",
            Task::ClipCheck => "clip_check",
            Task::GirsanovCheck => "girsanov_check",
            Task::Fit { .. } => "fit",
            Task::Plotdata { .. } => "plotdata",
        }
    }
}

/// Runs `task`, writes its files and manifest, and returns the paths written.
pub fn execute(task: &Task, config: &ExperimentConfig) -> CliResult<Vec<PathBuf>> {
    let issues = check(config);
    if !issues.is_empty() {
        return Err(CliError::Invalid(issues));
    }
    let started = Instant::now();
    let mut sink = Sink::new(&config.output.directory, config.output.format)?;
    match task {
        Task::Simulate => simulate(config, &mut sink)?,
        Task::Smallball => {
            smallball(config, &mut sink)?;
        }
        Task::Tail => tail(config, &mut sink)?,
        Task::Couple => couple(config, &mut sink)?,
        Task::ClipCheck => clip_check(config, &mut sink)?,
        Task::GirsanovCheck => girsanov_check(config, &mut sink)?,
        Task::Fit { input } => {
            let input = input.clone().unwrap_or_else(|| sink.dir().join("smallball.csv"));
            fit(config, &input, &mut sink)?
        }
        Task::Plotdata { input, kind } => emit_plotdata(input, *kind, &mut sink)?,
    }
    write_manifest(&mut sink, task.name(), config, started.elapsed().as_secs_f64())?;
    Ok(sink.written().iter().map(|f| sink.dir().join(f)).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FieldRow {
    t: f64,
    x: f64,
    u: f64,
}

fn simulate(c: &ExperimentConfig, sink: &mut Sink) -> CliResult<()> {
    let grid = c.grid.resolve()?;
    let drift = c.drift.spec();
    let u0 = Field::from_profile(&grid, &c.event.u0, 0.0);
    let marks = if c.output.checkpoints.is_empty() {
        vec![0.0, grid.t_end]
    } else {
        c.output.checkpoints.clone()
    };
    let mut stream = derive_stream(MasterSeed(c.seed), 0);
    let run = solve(&u0, &c.sigma, &drift, &grid, &mut stream, &c.event.h, None, &marks)?;
    let rows: Vec<FieldRow> = run
        .checkpoints
        .iter()
        .flat_map(|f| {
            f.values
                .iter()
                .enumerate()
                .map(|(i, &u)| FieldRow { t: f.time, x: grid.x(i), u })
        })
        .collect();
    sink.table("simulate", &rows, &["t", "x", "u"])?;
    #[derive(Serialize)]
    struct Summary {
        nx: usize,
        dt: f64,
        steps: usize,
        sup_dev: f64,
        final_mean: f64,
        final_sup: f64,
    }
    sink.json(
        "simulate",
        &Summary {
            nx: grid.nx,
            dt: grid.dt,
            steps: grid.n_steps(),
            sup_dev: run.sup_dev,
            final_mean: run.final_field.mean(),
            final_sup: run.final_field.sup_abs(),
        },
    )?;
    Ok(())
}

/// One line of the small-ball results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallBallRow {
    pub eps: f64,
    pub method: String,
    pub p_hat: f64,
    pub log_p: f64,
    pub se_log: f64,
    pub replicas: usize,
    pub seed: u64,
}

pub const SMALLBALL_HEADER: [&str; 7] = ["eps", "method", "p_hat", "log_p", "se_log", "replicas", "seed"];

#[derive(Debug, Clone, Serialize)]
pub struct SmallBallRecord {
    pub eps: f64,
    pub estimate: ProbabilityEstimate,
}

/// Direct estimates share one set of paths across radii; each splitting run
/// gets its own child seed.
pub fn smallball_estimates(c: &ExperimentConfig) -> CliResult<Vec<SmallBallRecord>> {
    let grid = c.grid.resolve()?;
    let drift = c.drift.spec();
    let radii = c.event.radii();
    let master = MasterSeed(c.seed);
    let mut direct = Vec::new();
    if c.estimator.method.direct() {
        let widest = radii.iter().copied().fold(0.0, f64::max);
        let ball = c.event.ball(widest, grid.t_end)?;
        let sweep = direct_sweep(&ball, &radii, &c.sigma, &drift, &grid, c.estimator.replicas, master)?;
        direct = sweep.estimates;
    }
    let mut out = Vec::new();
    for (k, &eps) in radii.iter().enumerate() {
        if let Some(d) = direct.get(k) {
            out.push(SmallBallRecord {
                eps,
                estimate: d.clone(),
            });
        }
        if c.estimator.method.splitting() {
            let ball = c.event.ball(eps, grid.t_end)?;
            let mesh = c.mesh.spec(eps)?;
            let est = splitting_mc(
                &ball,
                &c.sigma,
                &drift,
                &grid,
                &mesh,
                c.estimator.particles,
                master.child(100 + k as u64),
                c.estimator.stage_event,
            )?;
            out.push(SmallBallRecord { eps, estimate: est });
        }
    }
    Ok(out)
}

fn smallball(c: &ExperimentConfig, sink: &mut Sink) -> CliResult<Vec<SmallBallRecord>> {
    let records = smallball_estimates(c)?;
    let rows: Vec<SmallBallRow> = records
        .iter()
        .map(|r| SmallBallRow {
            eps: r.eps,
            method: r.estimate.method.to_string(),
            p_hat: r.estimate.p_hat,
            log_p: r.estimate.log_p_hat,
            se_log: r.estimate.std_err_log,
            replicas: r.estimate.replicas,
            seed: c.seed,
        })
        .collect();
    sink.table("smallball", &rows, &SMALLBALL_HEADER)?;
    sink.json("smallball", &records)?;
    Ok(records)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailRow {
    pub lambda: f64,
    pub p: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub replicas: usize,
    pub seed: u64,
}

pub const TAIL_HEADER: [&str; 7] = ["lambda", "p", "se", "ci_low", "ci_high", "replicas", "seed"];

/// The tail curve on a grid whose horizon is the box time `a·ε⁴`.
pub fn tail_estimate(c: &ExperimentConfig) -> CliResult<TailCurve> {
    let t = &c.tail;
    let grid = c.grid.resolve()?.with_horizon(t.a * t.eps.powi(4))?;
    Ok(tail_curve(
        t.a,
        t.eps,
        &t.lambdas,
        &c.sigma,
        &grid,
        c.estimator.replicas,
        MasterSeed(c.seed),
        t.box_index,
    )?)
}

fn tail(c: &ExperimentConfig, sink: &mut Sink) -> CliResult<()> {
    let curve = tail_estimate(c)?;
    let rows: Vec<TailRow> = (0..curve.lambdas.len())
        .map(|i| TailRow {
            lambda: curve.lambdas[i],
            p: curve.p[i],
            se: curve.se[i],
            ci_low: curve.ci_low[i],
            ci_high: curve.ci_high[i],
            replicas: curve.replicas,
            seed: c.seed,
        })
        .collect();
    sink.table("tail", &rows, &TAIL_HEADER)?;
    #[derive(Serialize)]
    struct Report<'a> {
        curve: &'a TailCurve,
        fit: Option<TailFit>,
        fit_error: Option<String>,
    }
    let (fit, fit_error) = match tail_fit(&curve, c.sigma.bounds().1) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    sink.json(
        "tail",
        &Report {
            curve: &curve,
            fit,
            fit_error,
        },
    )?;
    Ok(())
}

pub fn coupling_estimate(c: &ExperimentConfig) -> CliResult<CouplingStats> {
    let grid = c.grid.resolve()?;
    let mesh = c.mesh.spec(c.event.eps)?;
    Ok(coupling_diagnostic(
        &c.sigma,
        &mesh,
        &grid,
        c.estimator.replicas,
        MasterSeed(c.seed),
    )?)
}

fn couple(c: &ExperimentConfig, sink: &mut Sink) -> CliResult<()> {
    let stats = coupling_estimate(c)?;
    let rows: Vec<(usize, f64)> = stats.sups.iter().copied().enumerate().collect();
    sink.table("couple", &rows, &["replica", "sup_diff"])?;
    sink.json("couple", &stats)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClipRow {
    pub replica: usize,
    pub agree: bool,
    pub first_divergence: Option<usize>,
    pub exit_step: Option<usize>,
    pub max_diff_before_exit: f64,
}

pub fn clip_reports(c: &ExperimentConfig) -> CliResult<Vec<ClipReport>> {
    let grid = c.grid.resolve()?;
    let master = MasterSeed(c.seed);
    let runs: Vec<smallball::Result<ClipReport>> = (0..c.estimator.replicas)
        .into_par_iter()
        .map(|r| clipped_agreement(&c.sigma, c.event.eps, &grid, &mut derive_stream(master, r as u64)))
        .collect();
    Ok(runs.into_iter().collect::<smallball::Result<_>>()?)
}

fn clip_check(c: &ExperimentConfig, sink: &mut Sink) -> CliResult<()> {
    let reports = clip_reports(c)?;
    let rows: Vec<ClipRow> = reports
        .iter()
        .enumerate()
        .map(|(replica, r)| ClipRow {
            replica,
            agree: r.agree,
            first_divergence: r.first_divergence,
            exit_step: r.exit_step,
            max_diff_before_exit: r.max_diff_before_exit,
        })
        .collect();
    sink.table(
        "clip_check",
        &rows,
        &["replica", "agree", "first_divergence", "exit_step", "max_diff_before_exit"],
    )?;
    #[derive(Serialize)]
    struct Summary {
        replicas: usize,
        all_agree: bool,
        exited: usize,
        max_diff_before_exit: f64,
    }
    sink.json(
        "clip_check",
        &Summary {
            replicas: rows.len(),
            all_agree: rows.iter().all(|r| r.agree),
            exited: rows.iter().filter(|r| r.exit_step.is_some()).count(),
            max_diff_before_exit: rows.iter().map(|r| r.max_diff_before_exit).fold(0.0, f64::max),
        },
    )?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct GirsanovReport {
    pub g_bound: f64,
    pub density_mean: f64,
    pub density_se: f64,
    /// `(mean − 1)/se`.
    pub martingale_z: f64,
    pub cs: CsReport,
}

pub fn girsanov_report(c: &ExperimentConfig) -> CliResult<GirsanovReport> {
    let grid = c.grid.resolve()?;
    let g = DriftSpec::Constant {
        value: c.girsanov.g_bound,
    };
    let reps = c.girsanov.replicas;
    let master = MasterSeed(c.seed);
    let m = density_mean(&c.sigma, &g, &grid, reps, master.child(1))?;
    let u0 = Field::from_profile(&grid, &c.event.u0, 0.0);
    let cs = cs_experiment(&u0, &c.event.h, c.event.eps, &c.sigma, &g, &grid, reps, master.child(2))?;
    Ok(GirsanovReport {
        g_bound: c.girsanov.g_bound,
        density_mean: m.mean(),
        density_se: m.std_err(),
        martingale_z: if m.std_err() > 0.0 {
            (m.mean() - 1.0) / m.std_err()
        } else {
            0.0
        },
        cs,
    })
}

fn girsanov_check(c: &ExperimentConfig, sink: &mut Sink) -> CliResult<()> {
    let report = girsanov_report(c)?;
    sink.json("girsanov", &report)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodFit {
    pub method: String,
    pub fit: Option<ExponentFit>,
    pub window: Option<WindowVerdict>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitRow {
    pub eps: f64,
    pub method: String,
    pub log_p: f64,
    pub fitted: f64,
    pub fitted_lo: f64,
    pub fitted_hi: f64,
}

pub const FIT_HEADER: [&str; 6] = ["eps", "method", "log_p", "fitted", "fitted_lo", "fitted_hi"];

pub fn read_smallball(path: &Path) -> CliResult<Vec<SmallBallRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let missing: Vec<&str> = SMALLBALL_HEADER
        .iter()
        .copied()
        .filter(|h| !headers.iter().any(|x| x == *h))
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Schema(format!("missing columns: {}", missing.join(", "))));
    }
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// Exponent fits per method, with `log p` curves for plotting. The band uses
/// exponents `e ± 2·se` pivoted at the weighted centroid of the fitted points.
pub fn fit_rows(rows: &[SmallBallRow], alpha: f64, beta: f64) -> (Vec<MethodFit>, Vec<FitRow>) {
    let mut methods: Vec<&str> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    let mut fits = Vec::new();
    let mut curve = Vec::new();
    for m in methods {
        let mine: Vec<&SmallBallRow> = rows.iter().filter(|r| r.method == m).collect();
        let points: Vec<(f64, f64, f64)> = mine.iter().map(|r| (r.eps, r.log_p, r.se_log)).collect();
        match fit_exponent(&points) {
            Ok(fit) => {
                let xbar = centroid(&points, fit.weighted);
                let at = |e: f64, x: f64| -(fit.log_prefactor + fit.exponent * xbar + e * (x - xbar)).exp();
                for r in &mine {
                    let x = (1.0 / r.eps).ln();
                    let a = at(fit.exponent - 2.0 * fit.std_err_e, x);
                    let b = at(fit.exponent + 2.0 * fit.std_err_e, x);
                    curve.push(FitRow {
                        eps: r.eps,
                        method: m.to_string(),
                        log_p: r.log_p,
                        fitted: at(fit.exponent, x),
                        fitted_lo: a.min(b),
                        fitted_hi: a.max(b),
                    });
                }
                let (window, error) = match bound_window_check(&fit, alpha, beta) {
                    Ok(w) => (Some(w), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                fits.push(MethodFit {
                    method: m.to_string(),
                    fit: Some(fit),
                    window,
                    error,
                });
            }
            Err(e) => fits.push(MethodFit {
                method: m.to_string(),
                fit: None,
                window: None,
                error: Some(e.to_string()),
            }),
        }
    }
    (fits, curve)
}

/// Weighted mean of `log(1/ε)` over the points the fit used.
fn centroid(points: &[(f64, f64, f64)], weighted: bool) -> f64 {
    let (mut sw, mut sx) = (0.0, 0.0);
    for &(eps, log_p, se) in points {
        if !log_p.is_finite() || log_p >= 0.0 {
            continue;
        }
        let w = if weighted {
            let s = se / log_p.abs();
            1.0 / (s * s)
        } else {
            1.0
        };
        sw += w;
        sx += w * (1.0 / eps).ln();
    }
    sx / sw
}

fn fit(c: &ExperimentConfig, input: &Path, sink: &mut Sink) -> CliResult<()> {
    let rows = read_smallball(input)?;
    let (fits, curve) = fit_rows(&rows, c.sigma.holder_exponent(), c.mesh.beta);
    sink.table("fit_curve", &curve, &FIT_HEADER)?;
    #[derive(Serialize)]
    struct Report<'a> {
        input: String,
        alpha: f64,
        beta: f64,
        window: (f64, f64),
        fits: &'a [MethodFit],
    }
    let alpha = c.sigma.holder_exponent();
    sink.json(
        "fit",
        &Report {
            input: input.display().to_string(),
            alpha,
            beta: c.mesh.beta,
            window: (4.0 + 2.0 * alpha, 2.0 + 4.0 * c.mesh.beta),
            fits: &fits,
        },
    )?;
    if fits.iter().all(|f| f.fit.is_none()) {
        let why = fits
            .first()
            .and_then(|f| f.error.clone())
            .unwrap_or_else(|| "no rows to fit".into());
        return Err(smallball::Error::Fit(why).into());
    }
    Ok(())
}

