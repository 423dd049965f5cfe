//! Deterministic space-time profiles used as reference paths `h(t, x)` and
//! initial data `u₀(x)`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// A function of `(t, x)`, optionally with closed-form derivatives.
pub trait SpaceTimeProfile: Send + Sync {
    fn value(&self, t: f64, x: f64) -> f64;

    /// `∂ₜf(t, x)` when known in closed form.
    fn time_derivative(&self, _t: f64, _x: f64) -> Option<f64> {
        None
    }

    /// `∂²ₓf(t, x)` when known in closed form.
    fn space_second_derivative(&self, _t: f64, _x: f64) -> Option<f64> {
        None
    }

    /// `(∂ₜ − ν∂²ₓ) f (t, x)` when both derivatives are known.
    fn heat_operator(&self, t: f64, x: f64, nu: f64) -> Option<f64> {
        Some(self.time_derivative(t, x)? - nu * self.space_second_derivative(t, x)?)
    }

    fn is_zero(&self) -> bool {
        false
    }
}

macro_rules! forward_profile {
    ($($ty:ty),*) => {$(
        impl<T: SpaceTimeProfile + ?Sized> SpaceTimeProfile for $ty {
            fn value(&self, t: f64, x: f64) -> f64 {
                (**self).value(t, x)
            }
            fn time_derivative(&self, t: f64, x: f64) -> Option<f64> {
                (**self).time_derivative(t, x)
            }
            fn space_second_derivative(&self, t: f64, x: f64) -> Option<f64> {
                (**self).space_second_derivative(t, x)
            }
            fn is_zero(&self) -> bool {
                (**self).is_zero()
            }
        }
    )*};
}

forward_profile!(&T, Arc<T>, Box<T>);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    /// `rate · t`
    Linear {
        rate: f64,
    },
    /// `amplitude · sin(πx) · cos(t)`
    SineCosine {
        amplitude: f64,
    },
    /// `amplitude · sin(mode·πx)`
    SineMode {
        amplitude: f64,
        mode: u32,
    },
    /// `amplitude · cos(mode·πx)`
    CosineMode {
        amplitude: f64,
        mode: u32,
    },
}

impl Profile {
    /// The time-zero slice `x ↦ h(0, x)` as a profile of its own, when it is
    /// one of the supported shapes.
    pub fn initial_slice(&self) -> Profile {
        match *self {
            Profile::Linear { .. } => Profile::Zero,
            Profile::SineCosine { amplitude } => Profile::SineMode { amplitude, mode: 1 },
            p => p,
        }
    }
}

impl SpaceTimeProfile for Profile {
    fn value(&self, t: f64, x: f64) -> f64 {
        match *self {
            Profile::Zero => 0.0,
            Profile::Constant { value } => value,
            Profile::Linear { rate } => rate * t,
            Profile::SineCosine { amplitude } => amplitude * (PI * x).sin() * t.cos(),
            Profile::SineMode { amplitude, mode } => amplitude * (mode as f64 * PI * x).sin(),
            Profile::CosineMode { amplitude, mode } => amplitude * (mode as f64 * PI * x).cos(),
        }
    }

    fn time_derivative(&self, t: f64, x: f64) -> Option<f64> {
        Some(match *self {
            Profile::Linear { rate } => rate,
            Profile::SineCosine { amplitude } => -amplitude * (PI * x).sin() * t.sin(),
            _ => 0.0,
        })
    }

    fn space_second_derivative(&self, t: f64, x: f64) -> Option<f64> {
        Some(match *self {
            Profile::Zero | Profile::Constant { .. } | Profile::Linear { .. } => 0.0,
            Profile::SineCosine { amplitude } => -PI * PI * amplitude * (PI * x).sin() * t.cos(),
            Profile::SineMode { amplitude, mode } => {
                let k = mode as f64 * PI;
                -k * k * amplitude * (k * x).sin()
            }
            Profile::CosineMode { amplitude, mode } => {
                let k = mode as f64 * PI;
                -k * k * amplitude * (k * x).cos()
            }
        })
    }

    fn is_zero(&self) -> bool {
        matches!(self, Profile::Zero)
    }
}

/// A profile given only by point values; derivatives must come from
/// finite differences.
#[derive(Clone)]
pub struct FnProfile(pub Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>);

impl FnProfile {
    pub fn new<F: Fn(f64, f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        FnProfile(Arc::new(f))
    }
}

impl fmt::Debug for FnProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FnProfile(..)")
    }
}

impl SpaceTimeProfile for FnProfile {
    fn value(&self, t: f64, x: f64) -> f64 {
        (self.0)(t, x)
    }
}

/// Sup over `[0, 1]` of `|u₀(x) − h(0, x)|`, sampled on `samples + 1` points.
pub fn initial_gap(u0: &dyn SpaceTimeProfile, h: &dyn SpaceTimeProfile, samples: usize) -> f64 {
    (0..=samples)
        .map(|i| {
            let x = i as f64 / samples as f64;
            (u0.value(0.0, x) - h.value(0.0, x)).abs()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Central differences as an independent check of the closed forms.
    fn fd_heat(p: &Profile, t: f64, x: f64, nu: f64) -> f64 {
        let h = 1e-4;
        let dt = (p.value(t + h, x) - p.value(t - h, x)) / (2.0 * h);
        let dxx = (p.value(t, x + h) - 2.0 * p.value(t, x) + p.value(t, x - h)) / (h * h);
        dt - nu * dxx
    }

    #[test]
    fn closed_form_heat_operator_matches_differences() {
        let profiles = [
            Profile::Constant { value: 2.0 },
            Profile::Linear { rate: 1.5 },
            Profile::SineCosine { amplitude: 0.3 },
            Profile::SineMode { amplitude: 0.3, mode: 2 },
            Profile::CosineMode { amplitude: -0.7, mode: 3 },
        ];
        for p in &profiles {
            for &(t, x) in &[(0.1, 0.2), (0.7, 0.55), (1.3, 0.9)] {
                let exact = p.heat_operator(t, x, 0.5).unwrap();
                assert!((exact - fd_heat(p, t, x, 0.5)).abs() < 1e-5, "{p:?}");
            }
        }
    }

    #[test]
    fn initial_slice_agrees_at_time_zero() {
        let h = Profile::SineCosine { amplitude: 0.3 };
        assert_eq!(initial_gap(&h.initial_slice(), &h, 1000), 0.0);
        let h = Profile::Linear { rate: 2.0 };
        assert_eq!(initial_gap(&h.initial_slice(), &h, 1000), 0.0);
    }

    #[test]
    fn profile_json_shape() {
        let p: Profile = serde_json::from_str(r#"{"kind":"sine_cosine","amplitude":0.3}"#).unwrap();
        assert_eq!(p, Profile::SineCosine { amplitude: 0.3 });
    }
}
