//! Decay-exponent fits of `−log P` against `ε`, the exponent window check,
//! and the Gaussian-form tail fit.

use serde::{Deserialize, Serialize};

use crate::estimator::TailCurve;
use crate::stats::{ordinary_line, weighted_line, LineFit};
use crate::{Error, Result};

/// `−log p ≈ C·ε^{−e}`, fitted as `log(−log p) = log C + e·log(1/ε)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub exponent: f64,
    /// `log C`.
    pub log_prefactor: f64,
    pub r_squared: f64,
    pub std_err_e: f64,
    pub eps_range: (f64, f64),
    pub points_used: usize,
    /// Radii dropped because their estimate was 0 or 1.
    pub excluded: Vec<f64>,
    pub weighted: bool,
}

/// Weighted least squares on `(ε, log p̂, se of log p̂)` triples.
///
/// Weights are `1/se_y²` with `se_y = se/|log p̂|` (delta method). If any
/// usable point has no positive finite error the fit is unweighted. The
/// slope error is inflated by `√χ²_red` when the scatter exceeds the
/// stated errors.
pub fn fit_exponent(points: &[(f64, f64, f64)]) -> Result<ExponentFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ses = Vec::new();
    let mut excluded = Vec::new();
    for &(eps, log_p, se) in points {
        if !(eps > 0.0) {
            return Err(Error::Fit(format!("radius must be positive, got {eps}")));
        }
        if !log_p.is_finite() || log_p >= 0.0 {
            excluded.push(eps);
            continue;
        }
        xs.push((1.0 / eps).ln());
        ys.push((-log_p).ln());
        ses.push(se / log_p.abs());
    }
    if xs.len() < 3 {
        return Err(Error::Fit(format!(
            "need at least 3 points with 0 < p < 1, got {}",
            xs.len()
        )));
    }
    let weighted = ses.iter().all(|s| s.is_finite() && *s > 0.0);
    let fit = if weighted {
        let ws: Vec<f64> = ses.iter().map(|s| 1.0 / (s * s)).collect();
        let mut f = weighted_line(&xs, &ys, &ws)?;
        let inflate = f.chi2_reduced.max(1.0).sqrt();
        f.se_slope *= inflate;
        f.se_intercept *= inflate;
        f
    } else {
        ordinary_line(&xs, &ys)?
    };
    let used_eps = xs.iter().map(|x| (-x).exp());
    let lo = used_eps.clone().fold(f64::INFINITY, f64::min);
    let hi = used_eps.fold(0.0, f64::max);
    Ok(ExponentFit {
        exponent: fit.slope,
        log_prefactor: fit.intercept,
        r_squared: fit.r_squared,
        std_err_e: fit.se_slope,
        eps_range: (lo, hi),
        points_used: xs.len(),
        excluded,
        weighted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowPosition {
    Inside,
    Below,
    Above,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowVerdict {
    pub position: WindowPosition,
    /// Distance to the nearest violated (negative) or binding (positive)
    /// edge, after the ±2 SE allowance.
    pub margin: f64,
    /// `4 + 2α`.
    pub lower: f64,
    /// `2 + 4β`.
    pub upper: f64,
}

/// Places a fitted exponent relative to `[4 + 2α, 2 + 4β]`.
///
/// `β < 2 − α` is rejected.
pub fn bound_window_check(fit: &ExponentFit, alpha: f64, beta: f64) -> Result<WindowVerdict> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Validation(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    check_beta(alpha, beta)?;
    let lower = 4.0 + 2.0 * alpha;
    let upper = 2.0 + 4.0 * beta;
    let e = fit.exponent;
    let s = 2.0 * fit.std_err_e;
    let (position, margin) = if e + s < lower {
        (WindowPosition::Below, e + s - lower)
    } else if e - s > upper {
        (WindowPosition::Above, upper - (e - s))
    } else {
        (WindowPosition::Inside, (upper - (e - s)).min(e + s - lower))
    };
    Ok(WindowVerdict {
        position,
        margin,
        lower,
        upper,
    })
}

/// `β ≥ 2 − α`. The boundary `β = 2 − α` is the small-constant regime;
/// whether it applies is not checked here.
pub fn check_beta(alpha: f64, beta: f64) -> Result<()> {
    let edge = 2.0 - alpha;
    if beta < edge - 1e-12 {
        return Err(Error::HypothesisViolation(format!("beta < 2 - alpha ({beta} < {edge})")));
    }
    Ok(())
}

/// True when `β` sits on the boundary `2 − α`.
pub fn beta_on_boundary(alpha: f64, beta: f64) -> bool {
    (beta - (2.0 - alpha)).abs() <= 1e-12
}

/// `p(λ) ≤ K₁/(1∧√a) · exp(−K₂ λ²/(C²√a))` fitted to a tail curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailFit {
    pub k1_hat: f64,
    pub k2_hat: f64,
    /// Least-squares line `log p = intercept + slope·λ²`, before the lift.
    pub slope: f64,
    pub intercept: f64,
    pub se_slope: f64,
    /// Intercept increase that makes the bound majorize every fitted point
    /// within `1 + 2·se_rel`.
    pub lift: f64,
    /// Per point: `log p − log bound` (after the lift); `NaN` for `p = 0`.
    pub residuals: Vec<f64>,
    /// Every point with `p > 0` lies below `bound·(1 + 2·se_rel)`,
    /// including points left out of the fit.
    pub majorizes: bool,
    pub points_used: usize,
    pub scale_c: f64,
}

impl TailFit {
    /// The bound at `λ` (with the lift).
    pub fn log_bound(&self, lambda: f64) -> f64 {
        self.intercept + self.lift + self.slope * lambda * lambda
    }
}

/// Weighted least squares of `log p` on `λ²` over points with `0 < p < 1`,
/// then an intercept lift so the curve majorizes the data. `scale_c` is the
/// constant `C` in the exponent.
pub fn tail_fit(curve: &TailCurve, scale_c: f64) -> Result<TailFit> {
    if !(scale_c > 0.0) {
        return Err(Error::Fit(format!("scale constant must be positive, got {scale_c}")));
    }
    let n = curve.replicas as f64;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut rel = Vec::new();
    for (i, &p) in curve.p.iter().enumerate() {
        if p > 0.0 && p < 1.0 {
            let l = curve.lambdas[i];
            xs.push(l * l);
            ys.push(p.ln());
            rel.push(relative_error(curve, i, n));
        }
    }
    if xs.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 tail points with 0 < p < 1, got {}", xs.len())));
    }
    let ws: Vec<f64> = rel.iter().map(|r| 1.0 / (r * r)).collect();
    let mut fit: LineFit = weighted_line(&xs, &ys, &ws)?;
    fit.se_slope *= fit.chi2_reduced.max(1.0).sqrt();
    if fit.slope >= 0.0 {
        return Err(Error::Fit(format!(
            "tail is not Gaussian-like: fitted lambda^2 coefficient {} is nonnegative",
            fit.slope
        )));
    }
    let lift = (0..xs.len())
        .map(|i| ys[i] - fit.intercept - fit.slope * xs[i] - (1.0 + 2.0 * rel[i]).ln())
        .fold(0.0, f64::max);

    let mut out = TailFit {
        k1_hat: 0.0,
        k2_hat: 0.0,
        slope: fit.slope,
        intercept: fit.intercept,
        se_slope: fit.se_slope,
        lift,
        residuals: Vec::new(),
        majorizes: true,
        points_used: xs.len(),
        scale_c,
    };
    for (i, &p) in curve.p.iter().enumerate() {
        if p > 0.0 {
            let r = p.ln() - out.log_bound(curve.lambdas[i]);
            out.residuals.push(r);
            if r > (1.0 + 2.0 * relative_error(curve, i, n)).ln() + 1e-12 {
                out.majorizes = false;
            }
        } else {
            out.residuals.push(f64::NAN);
        }
    }
    let sa = curve.a.sqrt();
    out.k1_hat = (out.intercept + out.lift).exp() * sa.min(1.0);
    out.k2_hat = -out.slope * scale_c * scale_c * sa;
    Ok(out)
}

// Relative standard error of p at point i; zero at p = 1.
fn relative_error(curve: &TailCurve, i: usize, n: f64) -> f64 {
    let p = curve.p[i];
    if curve.se[i] > 0.0 {
        curve.se[i] / p
    } else {
        ((1.0 - p) / (n * p)).max(0.0).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic_curve(lambdas: &[f64], f: impl Fn(f64) -> f64) -> TailCurve {
        let p: Vec<f64> = lambdas.iter().map(|&l| f(l)).collect();
        TailCurve {
            a: 1.0,
            eps: 0.25,
            box_index: 1,
            box_time: 0.25f64.powi(4),
            box_space: (0.0, 0.0625),
            lambdas: lambdas.to_vec(),
            se: p.iter().map(|p| 1e-3 * p).collect(),
            ci_low: p.clone(),
            ci_high: p.clone(),
            p,
            replicas: 1_000_000,
        }
    }

    #[test]
    fn exact_power_laws() {
        let pts: Vec<(f64, f64, f64)> = [0.5, 0.4, 0.3]
            .iter()
            .map(|&e: &f64| (e, -e.powf(-6.0), 0.01))
            .collect();
        let f = fit_exponent(&pts).unwrap();
        assert!((f.exponent - 6.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(f.log_prefactor.abs() < 1e-12);

        let pts: Vec<(f64, f64, f64)> = [0.5, 0.4, 0.3, 0.25]
            .iter()
            .map(|&e: &f64| (e, -2.0 * e.powf(-4.0), 0.0))
            .collect();
        let f = fit_exponent(&pts).unwrap();
        assert!(!f.weighted);
        assert!((f.exponent - 4.0).abs() < 1e-12);
        assert!((f.log_prefactor - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_points_excluded() {
        let pts = [
            (0.6, 0.0, 0.0),
            (0.5, -0.5, 0.1),
            (0.4, -1.0, 0.1),
            (0.2, f64::NEG_INFINITY, f64::INFINITY),
        ];
        let r = fit_exponent(&pts);
        assert!(matches!(r, Err(Error::Fit(_))));
    }

    #[test]
    fn window_examples() {
        let fit = |e: f64, se: f64| ExponentFit {
            exponent: e,
            log_prefactor: 0.0,
            r_squared: 1.0,
            std_err_e: se,
            eps_range: (0.2, 0.5),
            points_used: 5,
            excluded: vec![],
            weighted: true,
        };
        let v = bound_window_check(&fit(6.0, 0.15), 1.0, 1.0).unwrap();
        assert_eq!(v.position, WindowPosition::Inside);
        let v = bound_window_check(&fit(5.6, 0.0), 0.8, 1.2).unwrap();
        assert_eq!(v.position, WindowPosition::Inside);
        assert!((v.lower - 5.6).abs() < 1e-12 && (v.upper - 6.8).abs() < 1e-12);
        let v = bound_window_check(&fit(9.0, 0.05), 0.8, 1.2).unwrap();
        assert_eq!(v.position, WindowPosition::Above);
        assert!(v.margin < 0.0);
        let v = bound_window_check(&fit(4.0, 0.1), 0.8, 1.2).unwrap();
        assert_eq!(v.position, WindowPosition::Below);
        let err = bound_window_check(&fit(6.0, 0.1), 0.8, 1.1).unwrap_err();
        assert!(err.to_string().contains("beta < 2 - alpha"), "{err}");
        assert!(bound_window_check(&fit(6.0, 0.1), 0.8, 1.2).is_ok());
        assert!(bound_window_check(&fit(6.0, 0.1), 1.0, 0.9).is_err());
    }

    #[test]
    fn window_monotone_in_beta() {
        let f = ExponentFit {
            exponent: 8.0,
            log_prefactor: 0.0,
            r_squared: 1.0,
            std_err_e: 0.1,
            eps_range: (0.2, 0.5),
            points_used: 5,
            excluded: vec![],
            weighted: true,
        };
        let mut seen_inside = false;
        for k in 0..40 {
            let beta = 1.21 + 0.05 * k as f64;
            let v = bound_window_check(&f, 0.8, beta).unwrap();
            if seen_inside {
                assert_eq!(v.position, WindowPosition::Inside);
            }
            seen_inside |= v.position == WindowPosition::Inside;
        }
        assert!(seen_inside);
    }

    #[test]
    fn exact_gaussian_tail() {
        let c = synthetic_curve(&[0.5, 1.0, 1.5, 2.0], |l| 2.0 * (-3.0 * l * l).exp());
        let t = tail_fit(&c, 1.0).unwrap();
        assert!((t.k1_hat - 2.0).abs() < 1e-9, "{t:?}");
        assert!((t.k2_hat - 3.0).abs() < 1e-9);
        assert!(t.majorizes);
        assert_eq!(t.lift, 0.0);
    }

    #[test]
    fn increasing_tail_is_rejected() {
        let c = synthetic_curve(&[0.5, 1.0, 1.5], |l| 0.1 * (0.5 * l).exp());
        assert!(matches!(tail_fit(&c, 1.0), Err(Error::Fit(_))));
    }
}
