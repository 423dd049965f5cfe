//! Heat kernels on the unit interval.
//!
//! Two geometries are provided: the circle (1-periodic image sum) and the
//! interval with zero-flux (Neumann) walls. Each can be evaluated either as a
//! sum over Gaussian images or as an eigenfunction (cosine) series. The image
//! sum converges fast at short times and the cosine series at long times;
//! [`Representation::Auto`] picks whichever is cheaper.
//!
//! The kernels solve `∂ₜG = ν ∂²ₓG`, so the Gaussian images have variance
//! `2νt`. With the default `ν = 1/2` the periodic kernel is
//! `G(t,x) = Σₙ (2πt)^{-1/2} exp(-(x+n)²/(2t))`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Hard cap on the number of series terms before giving up.
pub const MAX_TERMS: usize = 200_000;

/// Image sum below this value of `ν·t`, cosine series above.
pub const CROSSOVER_NU_T: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    ImageSum,
    Spectral,
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub nu: f64,
    pub tol: f64,
    #[serde(default)]
    pub representation: Representation,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            nu: 0.5,
            tol: 1e-12,
            representation: Representation::Auto,
        }
    }
}

impl KernelParams {
    pub fn with_nu(nu: f64) -> Self {
        Self {
            nu,
            ..Self::default()
        }
    }

    pub fn with_representation(self, representation: Representation) -> Self {
        Self {
            representation,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::domain(format!("diffusivity must be positive, got {}", self.nu)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::domain(format!("tolerance must be positive, got {}", self.tol)));
        }
        Ok(())
    }

    /// The representation actually used at time `t`.
    pub fn resolve(&self, t: f64) -> Representation {
        match self.representation {
            Representation::Auto if self.nu * t < CROSSOVER_NU_T => Representation::ImageSum,
            Representation::Auto => Representation::Spectral,
            r => r,
        }
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::domain(format!("kernel time must be positive, got {t}")));
    }
    Ok(())
}

/// Periodic (circle) heat kernel `G(t, x)`.
pub fn eval_periodic(t: f64, x: f64, params: &KernelParams) -> Result<f64> {
    params.validate()?;
    check_time(t)?;
    if !x.is_finite() {
        return Err(Error::domain("position must be finite"));
    }
    // Fold onto [0, 1/2] using periodicity and evenness.
    let r = x.rem_euclid(1.0);
    let r = r.min(1.0 - r);
    match params.resolve(t) {
        Representation::ImageSum => periodic_images(t, r, params),
        _ => periodic_spectral(t, r, params),
    }
}

fn periodic_images(t: f64, r: f64, params: &KernelParams) -> Result<f64> {
    let var = 2.0 * params.nu * t;
    let c = (2.0 * PI * var).powf(-0.5);
    let g = |z: f64| c * (-z * z / (2.0 * var)).exp();
    let mut sum = g(r);
    for n in 1..MAX_TERMS {
        let nf = n as f64;
        sum += g(r + nf) + g(r - nf);
        let next = nf + 0.5;
        if 2.0 * c * (-next * next / (2.0 * var)).exp() < params.tol {
            return Ok(sum);
        }
    }
    Err(Error::Convergence { terms: MAX_TERMS })
}

fn periodic_spectral(t: f64, r: f64, params: &KernelParams) -> Result<f64> {
    let rate = 4.0 * PI * PI * params.nu * t;
    let mut sum = 1.0;
    for k in 1..MAX_TERMS {
        let kf = k as f64;
        let envelope = 2.0 * (-rate * kf * kf).exp();
        if envelope < params.tol {
            return Ok(sum);
        }
        sum += envelope * (2.0 * PI * kf * r).cos();
    }
    Err(Error::Convergence { terms: MAX_TERMS })
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::domain(format!("{name} = {v} lies outside [0, 1]")));
    }
    Ok(())
}

/// Neumann heat kernel `G_N(t, x, y)` on [0, 1].
pub fn eval_neumann(t: f64, x: f64, y: f64, params: &KernelParams) -> Result<f64> {
    params.validate()?;
    check_time(t)?;
    check_unit("x", x)?;
    check_unit("y", y)?;
    match params.resolve(t) {
        Representation::ImageSum => neumann_images(t, x, y, params),
        _ => neumann_spectral(t, x, y, params),
    }
}

fn neumann_images(t: f64, x: f64, y: f64, params: &KernelParams) -> Result<f64> {
    let var = 2.0 * params.nu * t;
    let c = (2.0 * PI * var).powf(-0.5);
    let g = |z: f64| c * (-z * z / (2.0 * var)).exp();
    // Both arguments are symmetric in (x, y), so the sum is too.
    let d = (x - y).abs();
    let s = x + y;
    let mut sum = g(d) + g(s);
    for m in 1..MAX_TERMS {
        let shift = 2.0 * m as f64;
        sum += g(d + shift) + g(d - shift) + g(s + shift) + g(s - shift);
        // Closest image in ring m+1 is at distance at least 2m.
        if 4.0 * c * (-shift * shift / (2.0 * var)).exp() < params.tol {
            return Ok(sum);
        }
    }
    Err(Error::Convergence { terms: MAX_TERMS })
}

fn neumann_spectral(t: f64, x: f64, y: f64, params: &KernelParams) -> Result<f64> {
    let rate = PI * PI * params.nu * t;
    let mut sum = 1.0;
    for k in 1..MAX_TERMS {
        let kf = k as f64;
        let envelope = 2.0 * (-rate * kf * kf).exp();
        if envelope < params.tol {
            return Ok(sum);
        }
        sum += envelope * ((PI * kf * x).cos() * (PI * kf * y).cos());
    }
    Err(Error::Convergence { terms: MAX_TERMS })
}

/// Term cap for the transient part of [`she_variance`].
const VARIANCE_MAX_TERMS: usize = 10_000_000;

/// `Var u(t, x)` for `∂ₜu = ν∂²ₓu + Ẇ`, `u(0,·) = 0`, Neumann walls.
///
/// Equals `t + Σ_{k≥1} 2cos²(kπx) (1 − e^{−2ν(kπ)²t}) / (2ν(kπ)²)`. The
/// time-independent half of the series is summed in closed form, leaving a
/// transient part that decays like a Gaussian in `k`.
pub fn she_variance(t: f64, x: f64, params: &KernelParams) -> Result<f64> {
    params.validate()?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::domain(format!("variance time must be nonnegative, got {t}")));
    }
    if !x.is_finite() {
        return Err(Error::domain("position must be finite"));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let nu = params.nu;
    // Σ_{k≥1} cos(kθ)/k² = π²/6 − πθ/2 + θ²/4 on [0, 2π].
    let theta = 2.0 * PI * x.rem_euclid(1.0);
    let cos_series = PI * PI / 6.0 - PI * theta / 2.0 + theta * theta / 4.0;
    let stationary = (PI * PI / 6.0 + cos_series) / (2.0 * nu * PI * PI);

    let mut transient = 0.0;
    let mut converged = false;
    for k in 1..VARIANCE_MAX_TERMS {
        let lam = (k as f64 * PI).powi(2);
        let envelope = 2.0 * (-2.0 * nu * lam * t).exp() / (2.0 * nu * lam);
        if envelope < params.tol * 1e-3 {
            converged = true;
            break;
        }
        let c = (k as f64 * PI * x).cos();
        transient += envelope * c * c;
    }
    if !converged {
        return Err(Error::Convergence {
            terms: VARIANCE_MAX_TERMS,
        });
    }
    Ok(t + stationary - transient)
}
