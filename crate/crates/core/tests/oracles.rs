//! Independent reference computations checked against the library.

// Frozen values keep every digit they were computed with.
#![allow(clippy::excessive_precision)]

use smallball::estimator::brownian_oracle;
use smallball::kernel::{eval_neumann, she_variance, KernelParams, Representation};
use smallball::quadrature::GaussLegendre;
use libm::erfc;

/// Neumann kernel as a plain image sum, written out independently.
fn neumann_images(s: f64, x: f64, y: f64) -> f64 {
    let var = s; // 2νs with ν = 1/2
    let g = |z: f64| (-z * z / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
    (-6..=6)
        .map(|n| {
            let shift = 2.0 * n as f64;
            g(x - y + shift) + g(x + y + shift)
        })
        .sum()
}

/// `∫₀ᵗ ∫₀¹ G(s, x, y)² dy ds` with `s = r²` to remove the `s^{-1/2}`
/// singularity.
fn variance_by_quadrature(t: f64, x: f64) -> f64 {
    let gl = GaussLegendre::new(16);
    gl.integrate(0.0, t.sqrt(), 256, |r| {
        let s = r * r;
        if s == 0.0 {
            return 0.0;
        }
        // Resolve the peak at y = x finely; away from it every image is
        // below e^{-50}, walls included, since the window reaches them.
        let half = 10.0 * s.sqrt();
        let (lo, hi) = ((x - half).max(0.0), (x + half).min(1.0));
        let sq = |y: f64| neumann_images(s, x, y).powi(2);
        let peak = gl.integrate(lo, hi, 64, sq);
        let rest = gl.integrate(0.0, lo, 8, sq) + gl.integrate(hi, 1.0, 8, sq);
        2.0 * r * (peak + rest)
    })
}

#[test]
fn she_variance_matches_double_integral() {
    let p = KernelParams::default();
    for &(t, x) in &[(0.01, 0.5), (0.05, 0.25), (0.05, 0.0), (0.2, 0.9)] {
        let quad = variance_by_quadrature(t, x);
        let lib = she_variance(t, x, &p).unwrap();
        assert!((quad - lib).abs() < 1e-8 * lib, "t={t} x={x}: {quad} vs {lib}");
    }
}

#[test]
fn she_variance_frozen_values() {
    // 30-digit evaluations of t + Σ 2cos²(kπx)(1 − e^{−(kπ)²t})/(kπ)².
    let p = KernelParams::default();
    let cases = [
        (0.01, 0.5, 0.056_418_958_354_805_256),
        (0.05, 0.25, 0.133_839_595_024_930_18),
        (0.05, 0.0, 0.252_313_252_226_277_32),
        (1.0, 0.3, 1.123_329_712_130_171_5),
        (0.2, 0.9, 0.417_859_723_240_923_28),
    ];
    for (t, x, want) in cases {
        let got = she_variance(t, x, &p).unwrap();
        assert!((got - want).abs() < 1e-11, "t={t} x={x}: {got}");
    }
}

#[test]
fn neumann_kernel_matches_independent_images() {
    for rep in [Representation::ImageSum, Representation::Spectral] {
        let p = KernelParams::default().with_representation(rep);
        for &(t, x, y) in &[(1e-3, 0.1, 0.12), (0.05, 0.0, 0.3), (0.5, 0.7, 1.0)] {
            let a = eval_neumann(t, x, y, &p).unwrap();
            let b = neumann_images(t, x, y);
            assert!((a - b).abs() < 1e-10 * b.max(1.0), "{rep:?} {t} {x} {y}: {a} vs {b}");
        }
    }
}

/// `Σ_k (−1)^k [Φ((2k+1)ε/√t) − Φ((2k−1)ε/√t)]`, the reflection principle
/// written in the Gaussian-tail form.
fn brownian_dual(t: f64, eps: f64) -> f64 {
    // Φ(b) − Φ(a) for a < b, taken from whichever tail avoids cancellation.
    let mass = |a: f64, b: f64| {
        let r = std::f64::consts::SQRT_2;
        if a >= 0.0 {
            0.5 * (erfc(a / r) - erfc(b / r))
        } else if b <= 0.0 {
            0.5 * (erfc(-b / r) - erfc(-a / r))
        } else {
            1.0 - 0.5 * (erfc(-a / r) + erfc(b / r))
        }
    };
    let z = eps / t.sqrt();
    (-40i32..=40)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign * mass((2 * k - 1) as f64 * z, (2 * k + 1) as f64 * z)
        })
        .sum()
}

#[test]
fn brownian_series_matches_dual_form() {
    for &(t, eps) in &[(1.0, 1.0), (0.3, 1.0), (2.0, 0.7), (1.0, 3.0)] {
        let a = brownian_oracle(t, eps, 200).unwrap();
        assert!(a.converged);
        let b = brownian_dual(t, eps);
        assert!((a.value - b).abs() < 1e-12, "t={t} eps={eps}: {} vs {b}", a.value);
    }
    let v = brownian_oracle(1.0, 1.0, 200).unwrap().value;
    assert!((v - 0.370_777_429_799_523_9).abs() < 1e-14);
}
