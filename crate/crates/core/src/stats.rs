//! Small statistical helpers: running moments, exact binomial intervals,
//! weighted straight-line fits and empirical quantiles.

use serde::Serialize;
use statrs::distribution::{Beta, ContinuousCDF};

use crate::{Error, Result};

/// Welford running mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_err(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    /// Standard error of the sample variance under a Gaussian law.
    pub fn variance_std_err(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.variance() * (2.0 / (self.n - 1) as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::default();
        for x in iter {
            m.push(x);
        }
        m
    }
}

/// Exact two-sided binomial interval for `k` successes in `n` trials at
/// confidence `level`. For `k = 0` the upper end is the one-sided bound
/// `1 − (1 − level)^{1/n}`; symmetrically for `k = n`.
pub fn clopper_pearson(k: u64, n: u64, level: f64) -> (f64, f64) {
    assert!(n > 0 && k <= n);
    let alpha = 1.0 - level;
    let nf = n as f64;
    let kf = k as f64;
    if k == 0 {
        return (0.0, 1.0 - alpha.powf(1.0 / nf));
    }
    if k == n {
        return (alpha.powf(1.0 / nf), 1.0);
    }
    let lo = Beta::new(kf, nf - kf + 1.0)
        .map(|b| b.inverse_cdf(alpha / 2.0))
        .unwrap_or(0.0);
    let hi = Beta::new(kf + 1.0, nf - kf)
        .map(|b| b.inverse_cdf(1.0 - alpha / 2.0))
        .unwrap_or(1.0);
    (lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub se_slope: f64,
    pub se_intercept: f64,
    pub r_squared: f64,
    /// χ² per degree of freedom of the weighted residuals (0 for two points).
    pub chi2_reduced: f64,
}

/// Weighted least squares for `y = intercept + slope·x` with weights `w`
/// (typically `1/se²`). Standard errors are the model-based ones from the
/// weights, without rescaling by the residual scatter.
pub fn weighted_line(xs: &[f64], ys: &[f64], ws: &[f64]) -> Result<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n || ws.len() != n {
        return Err(Error::Fit(format!("line fit needs at least two matched points, got {n}")));
    }
    if ws.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::Fit("line fit weights must be positive and finite".into()));
    }
    let sw: f64 = ws.iter().sum();
    let mx = xs.iter().zip(ws).map(|(x, w)| w * x).sum::<f64>() / sw;
    let my = ys.iter().zip(ws).map(|(y, w)| w * y).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = xs[i] - mx;
        let dy = ys[i] - my;
        sxx += ws[i] * dx * dx;
        sxy += ws[i] * dx * dy;
        syy += ws[i] * dy * dy;
    }
    if sxx <= 0.0 {
        return Err(Error::Fit("line fit abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = (0..n)
        .map(|i| ws[i] * (ys[i] - intercept - slope * xs[i]).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { (1.0 - rss / syy).clamp(0.0, 1.0) } else { 1.0 };
    let chi2_reduced = if n > 2 { rss / (n - 2) as f64 } else { 0.0 };
    Ok(LineFit {
        slope,
        intercept,
        se_slope: (1.0 / sxx).sqrt(),
        se_intercept: (1.0 / sw + mx * mx / sxx).sqrt(),
        r_squared,
        chi2_reduced,
    })
}

/// Ordinary least squares; standard errors from the residual scatter.
pub fn ordinary_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    let ws = vec![1.0; xs.len()];
    let mut fit = weighted_line(xs, ys, &ws)?;
    let scale = if xs.len() > 2 { fit.chi2_reduced.sqrt() } else { 0.0 };
    fit.se_slope *= scale;
    fit.se_intercept *= scale;
    Ok(fit)
}

/// Linear-interpolated empirical quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_match_two_pass() {
        let xs = [1.0, 4.0, 2.5, -3.0, 7.25];
        let m: Moments = xs.iter().copied().collect();
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((m.mean() - mean).abs() < 1e-14);
        assert!((m.variance() - var).abs() < 1e-13);
    }

    #[test]
    fn clopper_pearson_reference_values() {
        // k = 5, n = 10 at 95%: (0.187086, 0.812914) from the Beta quantiles.
        let (lo, hi) = clopper_pearson(5, 10, 0.95);
        assert!((lo - 0.187_086_4).abs() < 1e-6, "{lo}");
        assert!((hi - 0.812_913_6).abs() < 1e-6, "{hi}");
        let (lo, hi) = clopper_pearson(0, 100, 0.95);
        assert_eq!(lo, 0.0);
        assert!((hi - (1.0 - 0.05f64.powf(0.01))).abs() < 1e-15);
        let (lo, hi) = clopper_pearson(100, 100, 0.95);
        assert_eq!(hi, 1.0);
        assert!(lo > 0.97);
    }

    #[test]
    fn exact_line_recovered() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let f = weighted_line(&xs, &ys, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-14);
        assert!((f.intercept - 2.0).abs() < 1e-14);
        assert!((f.r_squared - 1.0).abs() < 1e-14);
        let o = ordinary_line(&xs, &ys).unwrap();
        assert!(o.se_slope.abs() < 1e-7);
    }

    #[test]
    fn degenerate_fits_rejected() {
        assert!(weighted_line(&[1.0], &[1.0], &[1.0]).is_err());
        assert!(weighted_line(&[1.0, 1.0], &[1.0, 2.0], &[1.0, 1.0]).is_err());
        assert!(weighted_line(&[1.0, 2.0], &[1.0, 2.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
        assert!((quantile_sorted(&s, 0.5) - 2.5).abs() < 1e-15);
    }
}
