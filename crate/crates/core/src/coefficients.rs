//! Diffusion coefficients σ(t, x, u), drifts g(t, x, u), the radial clipping
//! map and sampled certificates for the structural hypotheses
//! (two-sided ellipticity, Hölder modulus in `u`, bounded drift).

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::girsanov::ShiftedDrift;
use crate::noise::{derive_stream, MasterSeed};
use crate::profile::SpaceTimeProfile;
use crate::{Error, Result};

pub trait Diffusion: Send + Sync {
    fn eval(&self, t: f64, x: f64, u: f64) -> f64;
    /// Certified `(C1, C2)` with `C1 ≤ σ ≤ C2`.
    fn bounds(&self) -> (f64, f64);
}

pub trait Drift: Send + Sync {
    fn eval(&self, t: f64, x: f64, u: f64) -> f64;
    /// Certified sup norm.
    fn bound(&self) -> f64;
    fn is_zero(&self) -> bool {
        false
    }
}

impl<T: Diffusion + ?Sized> Diffusion for &T {
    fn eval(&self, t: f64, x: f64, u: f64) -> f64 {
        (**self).eval(t, x, u)
    }
    fn bounds(&self) -> (f64, f64) {
        (**self).bounds()
    }
}

impl<T: Drift + ?Sized> Drift for &T {
    fn eval(&self, t: f64, x: f64, u: f64) -> f64 {
        (**self).eval(t, x, u)
    }
    fn bound(&self) -> f64 {
        (**self).bound()
    }
    fn is_zero(&self) -> bool {
        (**self).is_zero()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaFamily {
    /// `σ ≡ C1`.
    Constant,
    /// `C1 + min(D·min(|u|, M), C2 − C1)`; Lipschitz with constant D.
    LipschitzAffine,
    /// `C1 + min(D·min(|u|, M)^α, C2 − C1)`; α-Hölder with constant D.
    HolderPower,
    /// `C1 + (C2 − C1)(1 − cos πx)/2`, independent of `u`.
    FrozenProfile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaSpec {
    pub family: SigmaFamily,
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    #[serde(rename = "D", default)]
    pub d: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(rename = "M", default = "default_clip_level")]
    pub m: f64,
}

fn default_alpha() -> f64 {
    1.0
}

fn default_clip_level() -> f64 {
    10.0
}

impl SigmaSpec {
    pub fn constant(value: f64) -> Self {
        Self {
            family: SigmaFamily::Constant,
            c1: value,
            c2: value,
            d: 0.0,
            alpha: 1.0,
            m: default_clip_level(),
        }
    }

    pub fn holder_power(c1: f64, c2: f64, d: f64, alpha: f64) -> Self {
        Self {
            family: SigmaFamily::HolderPower,
            c1,
            c2,
            d,
            alpha,
            m: default_clip_level(),
        }
    }

    pub fn lipschitz_affine(c1: f64, c2: f64, d: f64) -> Self {
        Self {
            family: SigmaFamily::LipschitzAffine,
            c1,
            c2,
            d,
            alpha: 1.0,
            m: default_clip_level(),
        }
    }

    pub fn frozen_profile(c1: f64, c2: f64) -> Self {
        Self {
            family: SigmaFamily::FrozenProfile,
            c1,
            c2,
            d: 0.0,
            alpha: 1.0,
            m: default_clip_level(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.c1, self.c2, self.d, self.alpha, self.m]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Validation("sigma parameters must be finite".into()));
        }
        if self.c1 <= 0.0 {
            return Err(Error::Validation(format!(
                "ellipticity lower bound C1 must be positive, got {}",
                self.c1
            )));
        }
        if self.c1 > self.c2 {
            return Err(Error::Validation(format!(
                "ellipticity bounds inverted: C1 = {} > C2 = {}",
                self.c1, self.c2
            )));
        }
        if self.d < 0.0 {
            return Err(Error::Validation(format!("Hölder constant D must be nonnegative, got {}", self.d)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Validation(format!(
                "Hölder exponent alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if self.m <= 0.0 {
            return Err(Error::Validation(format!("clipping level M must be positive, got {}", self.m)));
        }
        Ok(())
    }

    /// Effective Hölder exponent of the `u`-dependence.
    pub fn holder_exponent(&self) -> f64 {
        match self.family {
            SigmaFamily::HolderPower => self.alpha,
            _ => 1.0,
        }
    }

    /// Effective Hölder constant of the `u`-dependence.
    pub fn holder_constant(&self) -> f64 {
        match self.family {
            SigmaFamily::Constant | SigmaFamily::FrozenProfile => 0.0,
            _ => self.d,
        }
    }
}

impl Diffusion for SigmaSpec {
    #[inline]
    fn eval(&self, _t: f64, x: f64, u: f64) -> f64 {
        match self.family {
            SigmaFamily::Constant => self.c1,
            SigmaFamily::LipschitzAffine => self.c1 + (self.d * u.abs().min(self.m)).min(self.c2 - self.c1),
            SigmaFamily::HolderPower => {
                self.c1 + (self.d * u.abs().min(self.m).powf(self.alpha)).min(self.c2 - self.c1)
            }
            SigmaFamily::FrozenProfile => self.c1 + (self.c2 - self.c1) * 0.5 * (1.0 - (PI * x).cos()),
        }
    }

    fn bounds(&self) -> (f64, f64) {
        match self.family {
            SigmaFamily::Constant => (self.c1, self.c1),
            _ => (self.c1, self.c2),
        }
    }
}

pub fn sigma_eval(spec: &SigmaSpec, t: f64, x: f64, u: f64) -> Result<f64> {
    spec.validate()?;
    Ok(spec.eval(t, x, u))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftFamily {
    Zero,
    Constant,
    BoundedProfile,
    ShiftInduced,
}

#[derive(Debug, Clone, Default)]
pub enum DriftSpec {
    #[default]
    Zero,
    /// `g ≡ value`.
    Constant { value: f64 },
    /// `amplitude · sin(πx) · cos(t)`.
    BoundedProfile { amplitude: f64 },
    /// Drift of the shifted equation, built by
    /// [`shift_to_zero`](crate::girsanov::shift_to_zero).
    ShiftInduced(Arc<ShiftedDrift>),
}

impl DriftSpec {
    pub fn family(&self) -> DriftFamily {
        match self {
            DriftSpec::Zero => DriftFamily::Zero,
            DriftSpec::Constant { .. } => DriftFamily::Constant,
            DriftSpec::BoundedProfile { .. } => DriftFamily::BoundedProfile,
            DriftSpec::ShiftInduced(_) => DriftFamily::ShiftInduced,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            DriftSpec::Zero => true,
            DriftSpec::Constant { value } => value.is_finite(),
            DriftSpec::BoundedProfile { amplitude } => amplitude.is_finite(),
            DriftSpec::ShiftInduced(s) => s.bound().is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Validation("drift parameters must be finite".into()))
        }
    }
}

impl Drift for DriftSpec {
    #[inline]
    fn eval(&self, t: f64, x: f64, u: f64) -> f64 {
        match self {
            DriftSpec::Zero => 0.0,
            DriftSpec::Constant { value } => *value,
            DriftSpec::BoundedProfile { amplitude } => amplitude * (PI * x).sin() * t.cos(),
            DriftSpec::ShiftInduced(s) => s.eval(t, x, u),
        }
    }

    fn bound(&self) -> f64 {
        match self {
            DriftSpec::Zero => 0.0,
            DriftSpec::Constant { value } => value.abs(),
            DriftSpec::BoundedProfile { amplitude } => amplitude.abs(),
            DriftSpec::ShiftInduced(s) => s.bound(),
        }
    }

    fn is_zero(&self) -> bool {
        matches!(self, DriftSpec::Zero)
    }
}

pub fn drift_eval(spec: &DriftSpec, t: f64, x: f64, u: f64) -> Result<f64> {
    spec.validate()?;
    Ok(spec.eval(t, x, u))
}

/// Radial truncation `f_ε`: identity inside `[-ε, ε]`, `ε·z/|z|` outside.
#[inline]
pub fn clip(eps: f64, z: f64) -> f64 {
    if z.abs() < eps {
        z
    } else {
        eps.copysign(z)
    }
}

/// `σ(t, x, f_ε(u))`.
#[derive(Debug, Clone, Copy)]
pub struct Clipped<S> {
    pub inner: S,
    pub eps: f64,
}

impl<S: Diffusion> Diffusion for Clipped<S> {
    #[inline]
    fn eval(&self, t: f64, x: f64, u: f64) -> f64 {
        self.inner.eval(t, x, clip(self.eps, u))
    }
    fn bounds(&self) -> (f64, f64) {
        self.inner.bounds()
    }
}

/// `σ(t, x, u₀(x))`: the coefficient frozen along an initial profile, which
/// turns the equation into a Gaussian one.
#[derive(Debug, Clone, Copy)]
pub struct Frozen<S, P> {
    pub inner: S,
    pub u0: P,
}

impl<S: Diffusion, P: SpaceTimeProfile> Diffusion for Frozen<S, P> {
    #[inline]
    fn eval(&self, t: f64, x: f64, _u: f64) -> f64 {
        self.inner.eval(t, x, self.u0.value(0.0, x))
    }
    fn bounds(&self) -> (f64, f64) {
        self.inner.bounds()
    }
}

/// `σ₁(t, x, w) = σ(t, x, w + s(t, x))` for a deterministic shift `s`.
#[derive(Clone)]
pub struct Shifted<S> {
    pub inner: S,
    pub shift: Arc<dyn SpaceTimeProfile>,
}

impl<S: Diffusion> Diffusion for Shifted<S> {
    #[inline]
    fn eval(&self, t: f64, x: f64, w: f64) -> f64 {
        self.inner.eval(t, x, w + self.shift.value(t, x))
    }
    fn bounds(&self) -> (f64, f64) {
        self.inner.bounds()
    }
}

/// `−g`.
#[derive(Debug, Clone, Copy)]
pub struct Negated<G>(pub G);

impl<G: Drift> Drift for Negated<G> {
    #[inline]
    fn eval(&self, t: f64, x: f64, u: f64) -> f64 {
        -self.0.eval(t, x, u)
    }
    fn bound(&self) -> f64 {
        self.0.bound()
    }
    fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderReport {
    pub max_ratio: f64,
    pub violations: usize,
    pub pairs: usize,
    pub constant: f64,
    pub exponent: f64,
}

impl HolderReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

const CERTIFICATE_SEED: MasterSeed = MasterSeed(0x4f1d_e5c3_a9b2_7701);

/// Samples pairs `(u, v)` and checks `|σ(u) − σ(v)| ≤ D|u − v|^α` with the
/// spec's own constants.
pub fn holder_certificate(spec: &SigmaSpec, sample_count: usize) -> Result<HolderReport> {
    holder_certificate_against(spec, spec.holder_constant(), spec.holder_exponent(), sample_count)
}

/// As [`holder_certificate`], but against an arbitrary `(D, α)`.
///
/// A third of the pairs straddle `u = 0` at separations down to `1e-6`,
/// where a too-large exponent shows up as a diverging ratio.
pub fn holder_certificate_against(
    spec: &SigmaSpec,
    d: f64,
    alpha: f64,
    sample_count: usize,
) -> Result<HolderReport> {
    spec.validate()?;
    if sample_count < 2 {
        return Err(Error::Validation("holder certificate needs at least two samples".into()));
    }
    let mut rng = derive_stream(CERTIFICATE_SEED, 0);
    let span = 1.5 * spec.m;
    let mut max_ratio: f64 = 0.0;
    let mut violations = 0;
    for i in 0..sample_count {
        let t = 10.0 * rng.uniform();
        let x = rng.uniform();
        let sep = 10f64.powf(-6.0 * rng.uniform());
        let (u, v) = match i % 3 {
            0 => {
                let u = span * (2.0 * rng.uniform() - 1.0);
                (u, span * (2.0 * rng.uniform() - 1.0))
            }
            1 => {
                let u = span * (2.0 * rng.uniform() - 1.0);
                (u, u + sep)
            }
            _ => {
                let u = -sep * rng.uniform();
                (u, u + sep)
            }
        };
        let gap = (u - v).abs();
        if gap == 0.0 {
            continue;
        }
        let ratio = (spec.eval(t, x, u) - spec.eval(t, x, v)).abs() / gap.powf(alpha);
        max_ratio = max_ratio.max(ratio);
        if ratio > d * (1.0 + 1e-9) {
            violations += 1;
        }
    }
    Ok(HolderReport {
        max_ratio,
        violations,
        pairs: sample_count,
        constant: d,
        exponent: alpha,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EllipticityReport {
    pub min: f64,
    pub max: f64,
    pub violations: usize,
}

/// Dense sampling of `σ` against its declared `[C1, C2]`.
pub fn ellipticity_certificate(spec: &SigmaSpec, sample_count: usize) -> Result<EllipticityReport> {
    spec.validate()?;
    let mut rng = derive_stream(CERTIFICATE_SEED, 1);
    let (lo, hi) = spec.bounds();
    let span = 3.0 * spec.m;
    let mut report = EllipticityReport {
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
        violations: 0,
    };
    for _ in 0..sample_count {
        let t = 10.0 * rng.uniform();
        let x = rng.uniform();
        let u = span * (2.0 * rng.uniform() - 1.0);
        let s = spec.eval(t, x, u);
        report.min = report.min.min(s);
        report.max = report.max.max(s);
        if s < lo || s > hi {
            report.violations += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_family() {
        let s = SigmaSpec::constant(1.0);
        for &(t, x, u) in &[(0.0, 0.0, 0.0), (3.0, 0.4, -7.0), (1e3, 1.0, 1e9)] {
            assert_eq!(sigma_eval(&s, t, x, u).unwrap(), 1.0);
        }
    }

    #[test]
    fn holder_power_values() {
        let s = SigmaSpec::holder_power(1.0, 2.0, 0.5, 0.8);
        assert_eq!(sigma_eval(&s, 0.3, 0.2, 0.0).unwrap(), 1.0);
        assert!((sigma_eval(&s, 0.3, 0.2, 1.0).unwrap() - 1.5).abs() < 1e-15);
        // Saturates at C2.
        assert_eq!(sigma_eval(&s, 0.0, 0.5, 100.0).unwrap(), 2.0);
    }

    #[test]
    fn validation_errors() {
        let mut s = SigmaSpec::holder_power(2.0, 1.0, 0.5, 0.8);
        let err = s.validate().unwrap_err().to_string();
        assert!(err.contains("ellipticity bounds inverted"), "{err}");
        s = SigmaSpec::holder_power(1.0, 2.0, 0.5, 1.2);
        assert!(s.validate().is_err());
        s = SigmaSpec::holder_power(0.0, 2.0, 0.5, 0.5);
        assert!(sigma_eval(&s, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn drift_families() {
        assert_eq!(drift_eval(&DriftSpec::Zero, 1.0, 0.3, 5.0).unwrap(), 0.0);
        let g = DriftSpec::BoundedProfile { amplitude: 0.3 };
        for &u in &[-4.0, 0.0, 9.0] {
            assert!((drift_eval(&g, 0.0, 0.5, u).unwrap() - 0.3).abs() < 1e-15);
        }
        assert!(drift_eval(&DriftSpec::Constant { value: f64::NAN }, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn clip_branches() {
        assert_eq!(clip(0.5, 0.3), 0.3);
        assert_eq!(clip(0.5, 2.0), 0.5);
        assert_eq!(clip(0.5, -2.0), -0.5);
        assert_eq!(clip(0.0, 0.0), 0.0);
    }

    #[test]
    fn certificates() {
        let c = holder_certificate(&SigmaSpec::constant(1.0), 10_000).unwrap();
        assert_eq!(c.max_ratio, 0.0);
        assert_eq!(c.violations, 0);

        let h = SigmaSpec::holder_power(1.0, 2.0, 0.5, 0.8);
        let r = holder_certificate(&h, 100_000).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.max_ratio <= 0.5 * (1.0 + 1e-9));

        let l = SigmaSpec::lipschitz_affine(1.0, 3.0, 0.7);
        assert!(holder_certificate(&l, 50_000).unwrap().passed());

        let e = ellipticity_certificate(&h, 100_000).unwrap();
        assert_eq!(e.violations, 0);
        assert!(e.min >= 1.0 && e.max <= 2.0);
    }

    #[test]
    fn wrong_exponent_is_flagged() {
        let h = SigmaSpec::holder_power(1.0, 2.0, 0.5, 0.8);
        let r = holder_certificate_against(&h, 0.5, 1.0, 100_000).unwrap();
        assert!(!r.passed());
        // Ratio grows like sep^(α−α') near u = 0, i.e. up to (1e-6)^(-0.2) ≈ 16.
        assert!(r.max_ratio > 5.0 * 0.5, "{r:?}");
        let coarse = holder_certificate_against(&h, 0.5, 0.9, 100_000).unwrap();
        assert!(coarse.max_ratio < r.max_ratio);
    }

    proptest! {
        #[test]
        fn clip_properties(eps in 1e-6f64..10.0, z in -100.0f64..100.0, w in -100.0f64..100.0) {
            let c = clip(eps, z);
            prop_assert!(c.abs() <= eps);
            prop_assert_eq!(clip(eps, -z), -c);
            prop_assert_eq!(clip(eps, c), c);
            prop_assert!((c - clip(eps, w)).abs() <= (z - w).abs() + 1e-15);
        }

        #[test]
        fn holder_power_stays_in_band(u in -1e3f64..1e3, x in 0.0f64..1.0, t in 0.0f64..10.0) {
            let h = SigmaSpec::holder_power(1.0, 2.0, 0.5, 0.8);
            let s = h.eval(t, x, u);
            prop_assert!((1.0..=2.0).contains(&s));
        }

        #[test]
        fn holder_power_modulus(u in -12.0f64..12.0, v in -12.0f64..12.0, alpha in 0.1f64..1.0) {
            let h = SigmaSpec { m: 100.0, ..SigmaSpec::holder_power(1.0, 5.0, 0.7, alpha) };
            let lhs = (h.eval(0.0, 0.5, u) - h.eval(0.0, 0.5, v)).abs();
            prop_assert!(lhs <= 0.7 * (u - v).abs().powf(alpha) * (1.0 + 1e-9) + 1e-15);
        }
    }
}
