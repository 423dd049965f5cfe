//! Finite-difference θ-scheme for `∂ₜu = ν∂²ₓu + g(t,x,u) + σ(t,x,u)Ẇ` on
//! [0, 1] with zero-flux walls.
//!
//! Nodes sit at `xᵢ = i/nx`, `i = 0..=nx`. The walls are handled with a
//! reflected ghost node (`u₋₁ = u₁`), which makes the discrete Laplacian
//! symmetric with respect to trapezoid weights (`dx` inside, `dx/2` at the
//! walls) and conserves the trapezoid mean exactly. Each step solves
//!
//! ```text
//! (I − θνΔt L) u⁺ = (I + (1−θ)νΔt L) u + Δt g(u) + σ(u) ΔWᵢ / wᵢ
//! ```
//!
//! where `wᵢ` is the trapezoid weight of node `i` and `ΔWᵢ ~ N(0, Δt·wᵢ)` is
//! the white-noise mass of its control volume. Drift and noise coefficient are
//! frozen at the start of the step.

use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coefficients::{Diffusion, Drift};
use crate::noise::{NoiseSlice, NoiseStream};
use crate::profile::SpaceTimeProfile;
use crate::{Error, Result};

/// Space-time discretization. `dt` is normalized so that `t_end` is reached
/// in a whole number of steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub nu: f64,
    pub theta: f64,
}

impl GridSpec {
    pub fn new(nx: usize, dt: f64, t_end: f64, nu: f64, theta: f64) -> Result<Self> {
        if nx < 4 {
            return Err(Error::Validation(format!("grid needs at least 4 cells, got {nx}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Validation(format!("time step must be positive, got {dt}")));
        }
        if !(t_end.is_finite() && t_end >= dt * (1.0 - 1e-9)) {
            return Err(Error::Validation(format!("horizon T = {t_end} shorter than one step {dt}")));
        }
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::Validation(format!("diffusivity must be positive, got {nu}")));
        }
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::Validation(format!("implicitness weight must lie in [0, 1], got {theta}")));
        }
        let steps = ((t_end / dt) - 1e-9).ceil().max(1.0);
        Ok(Self {
            nx,
            dt: t_end / steps,
            t_end,
            nu,
            theta,
        })
    }

    /// Crank–Nicolson grid with `dt = dx²/(2ν)`.
    pub fn desk(nx: usize, t_end: f64, nu: f64) -> Result<Self> {
        let dx = 1.0 / nx as f64;
        Self::new(nx, dx * dx / (2.0 * nu), t_end, nu, 0.5)
    }

    /// Same spacing and step size (shrunk if needed) on a new horizon.
    pub fn with_horizon(&self, t_end: f64) -> Result<Self> {
        Self::new(self.nx, self.dt.min(t_end), t_end, self.nu, self.theta)
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        1.0 / self.nx as f64
    }

    #[inline]
    pub fn nodes(&self) -> usize {
        self.nx + 1
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        i as f64 / self.nx as f64
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    #[inline]
    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }

    /// Trapezoid (control-volume) weight of node `i`.
    #[inline]
    pub fn cell_weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.nx {
            0.5 * self.dx()
        } else {
            self.dx()
        }
    }

    /// Index of the grid time closest to `t`, if `t ∈ [0, T]`.
    pub fn step_of(&self, t: f64) -> Result<usize> {
        if !(t >= -1e-12 && t <= self.t_end * (1.0 + 1e-12) + 1e-12) {
            return Err(Error::Config(format!(
                "time {t} lies outside the horizon [0, {}]",
                self.t_end
            )));
        }
        Ok(((t / self.dt).round() as usize).min(self.n_steps()))
    }
}

/// Nodal values of `u(t, ·)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Field {
    pub values: Vec<f64>,
    pub time: f64,
}

impl Field {
    pub fn zeros(grid: &GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &GridSpec, c: f64) -> Self {
        Self {
            values: vec![c; grid.nodes()],
            time: 0.0,
        }
    }

    pub fn from_fn(grid: &GridSpec, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: (0..grid.nodes()).map(|i| f(grid.x(i))).collect(),
            time: 0.0,
        }
    }

    pub fn from_profile(grid: &GridSpec, p: &dyn SpaceTimeProfile, t: f64) -> Self {
        Self {
            values: (0..grid.nodes()).map(|i| p.value(t, grid.x(i))).collect(),
            time: t,
        }
    }

    /// Trapezoid-rule spatial mean.
    pub fn mean(&self) -> f64 {
        let n = self.values.len() - 1;
        let inner: f64 = self.values[1..n].iter().sum();
        (inner + 0.5 * (self.values[0] + self.values[n])) / n as f64
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_abs_diff(&self, other: &Field) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// `h` on the grid: nothing for `h ≡ 0`, a precomputed table when it fits,
/// otherwise point evaluation.
#[derive(Clone)]
pub enum Reference<'a> {
    Zero,
    Table { nodes: usize, values: Arc<Vec<f64>> },
    Live(&'a dyn SpaceTimeProfile, GridSpec),
}

const TABLE_LIMIT: usize = 1 << 22;

impl<'a> Reference<'a> {
    pub fn build(h: &'a dyn SpaceTimeProfile, grid: &GridSpec, steps: usize) -> Self {
        if h.is_zero() {
            return Reference::Zero;
        }
        let nodes = grid.nodes();
        if (steps + 1) * nodes > TABLE_LIMIT {
            return Reference::Live(h, *grid);
        }
        let mut values = Vec::with_capacity((steps + 1) * nodes);
        for s in 0..=steps {
            let t = grid.time(s);
            values.extend((0..nodes).map(|i| h.value(t, grid.x(i))));
        }
        Reference::Table {
            nodes,
            values: Arc::new(values),
        }
    }

    /// `maxᵢ |uᵢ − h(t_step, xᵢ)|`.
    pub fn deviation(&self, field: &Field, step: usize) -> f64 {
        match self {
            Reference::Zero => field.sup_abs(),
            Reference::Table { nodes, values } => {
                let row = &values[step * nodes..(step + 1) * nodes];
                field
                    .values
                    .iter()
                    .zip(row)
                    .fold(0.0, |m, (u, h)| m.max((u - h).abs()))
            }
            Reference::Live(h, grid) => {
                let t = grid.time(step);
                field
                    .values
                    .iter()
                    .enumerate()
                    .fold(0.0, |m, (i, u)| m.max((u - h.value(t, grid.x(i))).abs()))
            }
        }
    }
}

/// Reusable θ-scheme stepper with a prefactored tridiagonal matrix.
#[derive(Debug, Clone)]
pub struct Stepper {
    grid: GridSpec,
    r_explicit: f64,
    c_prime: Vec<f64>,
    inv_denom: Vec<f64>,
    lower: Vec<f64>,
    noise_scale: Vec<f64>,
    xs: Vec<f64>,
    rhs: Vec<f64>,
}

impl Stepper {
    pub fn new(grid: &GridSpec) -> Self {
        Self::with_dt(grid, grid.dt)
    }

    fn with_dt(grid: &GridSpec, dt: f64) -> Self {
        let n = grid.nodes();
        let dx = grid.dx();
        let r_implicit = grid.theta * grid.nu * dt / (dx * dx);
        let r_explicit = (1.0 - grid.theta) * grid.nu * dt / (dx * dx);

        let diag = 1.0 + 2.0 * r_implicit;
        let mut lower = vec![-r_implicit; n];
        let mut upper = vec![-r_implicit; n];
        lower[0] = 0.0;
        upper[n - 1] = 0.0;
        upper[0] = -2.0 * r_implicit;
        lower[n - 1] = -2.0 * r_implicit;

        let mut c_prime = vec![0.0; n];
        let mut inv_denom = vec![0.0; n];
        let mut prev = 0.0;
        for i in 0..n {
            let denom = diag - lower[i] * prev;
            inv_denom[i] = 1.0 / denom;
            c_prime[i] = upper[i] / denom;
            prev = c_prime[i];
        }

        let wall = std::f64::consts::SQRT_2 / dx;
        let mut noise_scale = vec![1.0 / dx; n];
        noise_scale[0] = wall;
        noise_scale[n - 1] = wall;

        Self {
            grid: GridSpec { dt, ..*grid },
            r_explicit,
            c_prime,
            inv_denom,
            lower,
            noise_scale,
            xs: (0..n).map(|i| grid.x(i)).collect(),
            rhs: vec![0.0; n],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn new_slice(&self) -> NoiseSlice {
        NoiseSlice::zeros(self.grid.nodes(), self.grid.dt, self.grid.dx())
    }

    /// Scale turning a raw slice entry into the node's noise forcing.
    pub fn noise_scale(&self, i: usize) -> f64 {
        self.noise_scale[i]
    }

    /// One θ-step in place. `step` only labels errors.
    pub fn apply<S, G>(&mut self, field: &mut Field, sigma: &S, drift: &G, slice: &NoiseSlice, step: usize) -> Result<()>
    where
        S: Diffusion + ?Sized,
        G: Drift + ?Sized,
    {
        let n = self.grid.nodes();
        debug_assert_eq!(field.values.len(), n);
        let u = &field.values;
        let t = field.time;
        let dt = self.grid.dt;
        let re = self.r_explicit;
        let drift_zero = drift.is_zero();
        for i in 0..n {
            let left = if i == 0 { u[1] } else { u[i - 1] };
            let right = if i == n - 1 { u[n - 2] } else { u[i + 1] };
            let x = self.xs[i];
            let mut r = u[i] + re * (left - 2.0 * u[i] + right);
            if !drift_zero {
                r += dt * drift.eval(t, x, u[i]);
            }
            r += sigma.eval(t, x, u[i]) * slice.values[i] * self.noise_scale[i];
            self.rhs[i] = r;
        }
        self.solve_into(&mut field.values);
        field.time = t + dt;
        if !field.values.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericalBlowup {
                step,
                time: field.time,
            });
        }
        Ok(())
    }

    fn apply_deterministic(&mut self, field: &mut Field, step: usize) -> Result<()> {
        let n = self.grid.nodes();
        let u = &field.values;
        let re = self.r_explicit;
        for i in 0..n {
            let left = if i == 0 { u[1] } else { u[i - 1] };
            let right = if i == n - 1 { u[n - 2] } else { u[i + 1] };
            self.rhs[i] = u[i] + re * (left - 2.0 * u[i] + right);
        }
        self.solve_into(&mut field.values);
        field.time += self.grid.dt;
        if !field.is_finite() {
            return Err(Error::NumericalBlowup {
                step,
                time: field.time,
            });
        }
        Ok(())
    }

    // Thomas algorithm against the prefactored matrix.
    fn solve_into(&mut self, out: &mut [f64]) {
        let n = out.len();
        let mut prev = 0.0;
        for i in 0..n {
            let d = (self.rhs[i] - self.lower[i] * prev) * self.inv_denom[i];
            self.rhs[i] = d;
            prev = d;
        }
        out[n - 1] = self.rhs[n - 1];
        for i in (0..n - 1).rev() {
            out[i] = self.rhs[i] - self.c_prime[i] * out[i + 1];
        }
    }

    /// Advances `field` over `steps`, drawing a fresh slice per step and
    /// tracking the deviation from `reference` after every step. Stops early
    /// once the deviation exceeds `eps`.
    #[allow(clippy::too_many_arguments)]
    pub fn advance<S, G>(
        &mut self,
        field: &mut Field,
        steps: Range<usize>,
        stream: &mut NoiseStream,
        slice: &mut NoiseSlice,
        sigma: &S,
        drift: &G,
        reference: &Reference<'_>,
        eps: Option<f64>,
    ) -> Result<Advance>
    where
        S: Diffusion + ?Sized,
        G: Drift + ?Sized,
    {
        let mut sup_dev: f64 = 0.0;
        for s in steps {
            slice.resample(stream);
            self.apply(field, sigma, drift, slice, s)?;
            let dev = reference.deviation(field, s + 1);
            sup_dev = sup_dev.max(dev);
            if let Some(e) = eps {
                if dev > e {
                    return Ok(Advance {
                        sup_dev,
                        exit_step: Some(s + 1),
                    });
                }
            }
        }
        Ok(Advance {
            sup_dev,
            exit_step: None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Advance {
    pub sup_dev: f64,
    /// Index of the first grid time whose deviation exceeded `eps`.
    pub exit_step: Option<usize>,
}

/// One θ-scheme step with an explicit noise slice.
pub fn step<S, G>(field: &Field, slice: &NoiseSlice, sigma: &S, drift: &G, grid: &GridSpec) -> Result<Field>
where
    S: Diffusion + ?Sized,
    G: Drift + ?Sized,
{
    if slice.len() != grid.nodes() {
        return Err(Error::Config(format!(
            "noise slice has {} entries, grid has {} nodes",
            slice.len(),
            grid.nodes()
        )));
    }
    if (slice.dt - grid.dt).abs() > 1e-12 * grid.dt || (slice.dx - grid.dx()).abs() > 1e-12 {
        return Err(Error::Config("noise slice cell does not match grid".into()));
    }
    if field.values.len() != grid.nodes() || !field.is_finite() {
        return Err(Error::Config("field does not match grid or is not finite".into()));
    }
    let mut out = field.clone();
    let step_index = (field.time / grid.dt).round() as usize;
    Stepper::new(grid).apply(&mut out, sigma, drift, slice, step_index)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectorySummary {
    /// Running sup over grid times and nodes of `|u − h|`.
    pub sup_dev: f64,
    pub exit_time: Option<f64>,
    pub exit_step: Option<usize>,
    /// Fields at the requested times that were reached before any exit.
    pub checkpoints: Vec<Field>,
    pub final_field: Field,
}

/// Runs one path over `[0, T]`, tracking `sup |u − h|`.
#[allow(clippy::too_many_arguments)]
pub fn solve<S, G>(
    u0: &Field,
    sigma: &S,
    drift: &G,
    grid: &GridSpec,
    stream: &mut NoiseStream,
    h: &dyn SpaceTimeProfile,
    eps: Option<f64>,
    checkpoints: &[f64],
) -> Result<TrajectorySummary>
where
    S: Diffusion + ?Sized,
    G: Drift + ?Sized,
{
    let n_steps = grid.n_steps();
    let reference = Reference::build(h, grid, n_steps);
    solve_with_reference(u0, sigma, drift, grid, stream, &reference, eps, checkpoints)
}

#[allow(clippy::too_many_arguments)]
pub fn solve_with_reference<S, G>(
    u0: &Field,
    sigma: &S,
    drift: &G,
    grid: &GridSpec,
    stream: &mut NoiseStream,
    reference: &Reference<'_>,
    eps: Option<f64>,
    checkpoints: &[f64],
) -> Result<TrajectorySummary>
where
    S: Diffusion + ?Sized,
    G: Drift + ?Sized,
{
    if u0.values.len() != grid.nodes() {
        return Err(Error::Config(format!(
            "initial field has {} values, grid has {} nodes",
            u0.values.len(),
            grid.nodes()
        )));
    }
    let mut marks: Vec<usize> = checkpoints.iter().map(|&t| grid.step_of(t)).collect::<Result<_>>()?;
    marks.sort_unstable();

    let n_steps = grid.n_steps();
    let mut stepper = Stepper::new(grid);
    let mut slice = stepper.new_slice();
    let mut field = Field {
        values: u0.values.clone(),
        time: 0.0,
    };
    let mut saved = Vec::with_capacity(marks.len());
    let mut next_mark = 0;
    let save = |step: usize, f: &Field, saved: &mut Vec<Field>, next: &mut usize| {
        while *next < marks.len() && marks[*next] == step {
            saved.push(f.clone());
            *next += 1;
        }
    };

    let mut sup_dev = reference.deviation(&field, 0);
    let mut exit_step = match eps {
        Some(e) if sup_dev > e => Some(0),
        _ => None,
    };
    save(0, &field, &mut saved, &mut next_mark);

    if exit_step.is_none() {
        for s in 0..n_steps {
            slice.resample(stream);
            stepper.apply(&mut field, sigma, drift, &slice, s)?;
            let dev = reference.deviation(&field, s + 1);
            sup_dev = sup_dev.max(dev);
            save(s + 1, &field, &mut saved, &mut next_mark);
            if let Some(e) = eps {
                if dev > e {
                    exit_step = Some(s + 1);
                    break;
                }
            }
        }
    }

    Ok(TrajectorySummary {
        sup_dev,
        exit_time: exit_step.map(|s| grid.time(s)),
        exit_step,
        checkpoints: saved,
        final_field: field,
    })
}

/// Pure heat flow (σ = 0, g = 0) of `u0` up to time `t`.
pub fn heat_deterministic(u0: &Field, grid: &GridSpec, t: f64) -> Result<Field> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::domain(format!("evolution time must be nonnegative, got {t}")));
    }
    if u0.values.len() != grid.nodes() {
        return Err(Error::Config("initial field does not match grid".into()));
    }
    let mut field = u0.clone();
    if t == 0.0 {
        return Ok(field);
    }
    let local = grid.with_horizon(t)?;
    let mut stepper = Stepper::with_dt(&local, local.dt);
    for s in 0..local.n_steps() {
        stepper.apply_deterministic(&mut field, s)?;
    }
    field.time = u0.time + t;
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{DriftSpec, SigmaSpec};
    use crate::noise::{derive_stream, MasterSeed};
    use crate::profile::Profile;
    use std::f64::consts::PI;

    /// σ ≡ 0, used to exercise the deterministic part of `step`.
    struct NoNoise;
    impl Diffusion for NoNoise {
        fn eval(&self, _: f64, _: f64, _: f64) -> f64 {
            0.0
        }
        fn bounds(&self) -> (f64, f64) {
            (0.0, 0.0)
        }
    }

    fn grid(nx: usize, t: f64) -> GridSpec {
        GridSpec::desk(nx, t, 0.5).unwrap()
    }

    #[test]
    fn grid_validation_and_normalization() {
        assert!(GridSpec::new(3, 1e-3, 1.0, 0.5, 0.5).is_err());
        assert!(GridSpec::new(8, 0.0, 1.0, 0.5, 0.5).is_err());
        assert!(GridSpec::new(8, 0.1, 0.01, 0.5, 0.5).is_err());
        assert!(GridSpec::new(8, 0.01, 1.0, 0.5, 1.5).is_err());
        let g = GridSpec::new(8, 0.03, 0.1, 0.5, 0.5).unwrap();
        assert_eq!(g.n_steps(), 4);
        assert!((g.dt - 0.025).abs() < 1e-15);
        assert!(g.step_of(0.2).is_err());
    }

    #[test]
    fn constants_are_invariant() {
        let g = grid(32, 0.01);
        let f = Field::constant(&g, 3.25);
        let slice = NoiseSlice::zeros(g.nodes(), g.dt, g.dx());
        let out = step(&f, &slice, &NoNoise, &DriftSpec::Zero, &g).unwrap();
        for v in &out.values {
            assert!((v - 3.25).abs() < 1e-14);
        }
        assert!((out.time - g.dt).abs() < 1e-18);
    }

    #[test]
    fn step_rejects_mismatched_slice() {
        let g = grid(32, 0.01);
        let f = Field::zeros(&g);
        let slice = NoiseSlice::zeros(g.nx, g.dt, g.dx());
        assert!(matches!(step(&f, &slice, &NoNoise, &DriftSpec::Zero, &g), Err(Error::Config(_))));
    }

    #[test]
    fn cosine_mode_decays_at_heat_rate() {
        let g = GridSpec::new(64, 1e-4, 0.1, 0.5, 0.5).unwrap();
        let u0 = Field::from_fn(&g, |x| (PI * x).cos());
        let out = heat_deterministic(&u0, &g, 0.1).unwrap();
        let decay = (-0.5 * PI * PI * 0.1f64).exp();
        let err = (0..g.nodes())
            .map(|i| (out.values[i] - decay * (PI * g.x(i)).cos()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-4, "err {err}");
    }

    #[test]
    fn second_mode_at_desk_resolution() {
        let g = GridSpec::new(256, 1e-4, 0.1, 0.5, 0.5).unwrap();
        let u0 = Field::from_fn(&g, |x| (2.0 * PI * x).cos());
        let out = heat_deterministic(&u0, &g, 0.1).unwrap();
        let decay = (-0.5 * 4.0 * PI * PI * 0.1f64).exp();
        for i in 0..g.nodes() {
            assert!((out.values[i] - decay * (2.0 * PI * g.x(i)).cos()).abs() < 1e-3);
        }
    }

    #[test]
    fn deterministic_flow_is_linear_and_keeps_constants() {
        let g = grid(64, 0.05);
        let a = Field::from_fn(&g, |x| (3.0 * x).sin() + x * x);
        let b = Field::from_fn(&g, |x| (-x).exp());
        let sum = Field {
            values: a.values.iter().zip(&b.values).map(|(p, q)| p + q).collect(),
            time: 0.0,
        };
        let ea = heat_deterministic(&a, &g, 0.05).unwrap();
        let eb = heat_deterministic(&b, &g, 0.05).unwrap();
        let es = heat_deterministic(&sum, &g, 0.05).unwrap();
        for i in 0..g.nodes() {
            assert!((es.values[i] - ea.values[i] - eb.values[i]).abs() < 1e-13);
        }
        let five = heat_deterministic(&Field::constant(&g, 5.0), &g, 0.05).unwrap();
        assert!(five.values.iter().all(|v| (v - 5.0).abs() < 1e-13));
        assert_eq!(heat_deterministic(&a, &g, 0.0).unwrap(), a);
    }

    #[test]
    fn mean_is_conserved_without_forcing() {
        let g = grid(64, 0.02);
        let mut f = Field::from_fn(&g, |x| (7.0 * x).sin() + (x - 0.3).abs());
        let m0 = f.mean();
        let mut st = Stepper::new(&g);
        let slice = st.new_slice();
        for s in 0..g.n_steps() {
            st.apply(&mut f, &NoNoise, &DriftSpec::Zero, &slice, s).unwrap();
            assert!((f.mean() - m0).abs() < 1e-14);
        }
    }

    #[test]
    fn pure_drift_integrates_linearly() {
        let g = grid(16, 0.1);
        let mut stream = derive_stream(MasterSeed(1), 0);
        let out = solve(
            &Field::zeros(&g),
            &NoNoise,
            &DriftSpec::Constant { value: 1.0 },
            &g,
            &mut stream,
            &Profile::Zero,
            None,
            &[0.05, 0.1],
        )
        .unwrap();
        assert_eq!(out.checkpoints.len(), 2);
        for cp in &out.checkpoints {
            assert!(cp.values.iter().all(|v| (v - cp.time).abs() < 1e-12));
        }
    }

    #[test]
    fn quiet_run_has_zero_deviation() {
        let g = grid(16, 0.1);
        let mut stream = derive_stream(MasterSeed(1), 0);
        let out = solve(
            &Field::zeros(&g),
            &NoNoise,
            &DriftSpec::Zero,
            &g,
            &mut stream,
            &Profile::Zero,
            Some(f64::INFINITY),
            &[],
        )
        .unwrap();
        assert_eq!(out.sup_dev, 0.0);
        assert_eq!(out.exit_time, None);
    }

    #[test]
    fn zero_radius_exits_on_first_step() {
        let g = grid(16, 0.1);
        let mut stream = derive_stream(MasterSeed(1), 0);
        let out = solve(
            &Field::zeros(&g),
            &SigmaSpec::constant(1.0),
            &DriftSpec::Zero,
            &g,
            &mut stream,
            &Profile::Zero,
            Some(0.0),
            &[],
        )
        .unwrap();
        assert_eq!(out.exit_step, Some(1));
    }

    #[test]
    fn checkpoint_outside_horizon_is_config_error() {
        let g = grid(16, 0.1);
        let mut stream = derive_stream(MasterSeed(1), 0);
        let r = solve(
            &Field::zeros(&g),
            &SigmaSpec::constant(1.0),
            &DriftSpec::Zero,
            &g,
            &mut stream,
            &Profile::Zero,
            None,
            &[0.5],
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn explicit_scheme_blows_up_with_step_label() {
        let g = GridSpec::new(64, 1e-2, 4.0, 0.5, 0.0).unwrap();
        let mut stream = derive_stream(MasterSeed(1), 0);
        let r = solve(
            &Field::zeros(&g),
            &SigmaSpec::constant(1.0),
            &DriftSpec::Zero,
            &g,
            &mut stream,
            &Profile::Zero,
            None,
            &[],
        );
        assert!(matches!(r, Err(Error::NumericalBlowup { .. })), "{r:?}");
    }

    #[test]
    fn shifted_initial_data_stays_shifted_under_common_noise() {
        let g = grid(32, 0.05);
        let sigma = SigmaSpec::constant(1.3);
        let run = |c: f64| {
            let mut stream = derive_stream(MasterSeed(9), 4);
            solve(
                &Field::constant(&g, c),
                &sigma,
                &DriftSpec::Zero,
                &g,
                &mut stream,
                &Profile::Zero,
                None,
                &[0.05],
            )
            .unwrap()
            .final_field
        };
        let a = run(0.0);
        let b = run(0.75);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((y - x - 0.75).abs() < 1e-12);
        }
    }
}
