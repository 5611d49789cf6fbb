//! Reusable statistical estimators: weighted log-log power-law regression,
//! Hill tail-index estimation, sign autocorrelation with power-law decay fit,
//! and Gaussian moment fitting with a Kolmogorov-Smirnov diagnostic.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("need at least {needed} valid points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("zero variance in log x: all abscissae equal")]
    DegenerateAbscissa,
    #[error("need at least {needed} exceedances above threshold, got {got}")]
    TooFewExceedances { needed: usize, got: usize },
    #[error("sign sequence of length {n} is too short for max_lag {max_lag}")]
    SequenceTooShort { n: usize, max_lag: usize },
    #[error("constant sequence: autocorrelation undefined")]
    ConstantSequence,
}

/// Result of a weighted least-squares fit of `log y` on `log x`.
///
/// Conventions: weights are treated as relative precisions; the residual
/// scale is estimated with `n - 2` degrees of freedom; `prefactor` is
/// `exp(intercept)` with its standard error propagated by the delta method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub exponent_stderr: f64,
    pub prefactor_stderr: f64,
    /// Coefficient of determination in log-log space.
    pub r_squared: f64,
    /// The x-range actually used.
    pub fit_range: (f64, f64),
    pub n_points: usize,
}

impl PowerLawFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.prefactor * x.powf(self.exponent)
    }
}

/// Weighted least squares of `log y` on `log x` over points with positive
/// `x`, `y` and weight, restricted to `range` when given.
pub fn fit_power_law(
    points: &[(f64, f64, f64)],
    range: Option<(f64, f64)>,
) -> Result<PowerLawFit, EstimatorError> {
    let in_range = |x: f64| range.is_none_or(|(lo, hi)| x >= lo && x <= hi);
    let valid: Vec<(f64, f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(x, y, w)| x > 0.0 && y > 0.0 && w > 0.0 && in_range(x))
        .collect();
    if valid.len() < 3 {
        return Err(EstimatorError::TooFewPoints {
            needed: 3,
            got: valid.len(),
        });
    }
    let n = valid.len();
    let sw: f64 = valid.iter().map(|p| p.2).sum();
    let mean_u = valid.iter().map(|&(x, _, w)| w * x.ln()).sum::<f64>() / sw;
    let mean_v = valid.iter().map(|&(_, y, w)| w * y.ln()).sum::<f64>() / sw;
    let mut suu = 0.0;
    let mut suv = 0.0;
    for &(x, y, w) in &valid {
        let du = x.ln() - mean_u;
        let dv = y.ln() - mean_v;
        suu += w * du * du;
        suv += w * du * dv;
    }
    if suu <= 0.0 {
        return Err(EstimatorError::DegenerateAbscissa);
    }
    let slope = suv / suu;
    let intercept = mean_v - slope * mean_u;

    let mut rss = 0.0;
    let mut tss = 0.0;
    for &(x, y, w) in &valid {
        let r = y.ln() - (intercept + slope * x.ln());
        rss += w * r * r;
        let dv = y.ln() - mean_v;
        tss += w * dv * dv;
    }
    // Normalize weights to mean 1 so the residual scale matches OLS when all
    // weights are equal.
    let rss_norm = rss * n as f64 / sw;
    let dof = (n - 2) as f64;
    let s2 = if dof > 0.0 { rss_norm / dof } else { 0.0 };
    let suu_norm = suu * n as f64 / sw;
    let exponent_stderr = (s2 / suu_norm).sqrt();
    let intercept_stderr = (s2 * (1.0 / n as f64 + mean_u * mean_u / suu_norm)).sqrt();
    let prefactor = intercept.exp();
    let r_squared = if tss > 1e-300 { 1.0 - rss / tss } else { 1.0 };

    let xs = valid.iter().map(|p| p.0);
    let lo = xs.clone().fold(f64::INFINITY, f64::min);
    let hi = xs.fold(f64::NEG_INFINITY, f64::max);
    Ok(PowerLawFit {
        exponent: slope,
        prefactor,
        exponent_stderr,
        prefactor_stderr: prefactor * intercept_stderr,
        r_squared,
        fit_range: (lo, hi),
        n_points: n,
    })
}

/// Hill tail-index fit in the complementary-CDF convention: `alpha = 1` means
/// a probability density decaying like `x^-2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailFit {
    pub hill_alpha: f64,
    /// Number of order statistics (exceedances) used.
    pub k: usize,
    pub threshold: f64,
}

const MIN_EXCEEDANCES: usize = 10;

/// Hill estimator over the exceedances strictly above `threshold`:
/// `alpha = k / sum(log(x_i / threshold))`.
pub fn hill_tail(samples: &[f64], threshold: f64) -> Result<TailFit, EstimatorError> {
    let mut log_sum = 0.0;
    let mut k = 0usize;
    for &x in samples {
        if x > threshold {
            log_sum += (x / threshold).ln();
            k += 1;
        }
    }
    if k < MIN_EXCEEDANCES {
        return Err(EstimatorError::TooFewExceedances {
            needed: MIN_EXCEEDANCES,
            got: k,
        });
    }
    Ok(TailFit {
        hill_alpha: k as f64 / log_sum,
        k,
        threshold,
    })
}

/// Sample autocorrelation of a sign sequence with a power-law decay fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcfFit {
    /// Lags 1..=max_lag.
    pub lags: Vec<usize>,
    pub values: Vec<f64>,
    /// Decay exponent gamma in `C(l) ~ l^-gamma`, when the fit succeeded.
    pub gamma: Option<f64>,
    pub fit: Option<PowerLawFit>,
    /// Lag range used for the decay fit.
    pub fit_range: (usize, usize),
}

impl AcfFit {
    pub fn value_at(&self, lag: usize) -> Option<f64> {
        if lag == 0 {
            return Some(1.0);
        }
        self.lags
            .iter()
            .position(|&l| l == lag)
            .map(|i| self.values[i])
    }
}

/// Sample ACF at lags `1..=max_lag` (standard biased estimator normalized so
/// `C(0) = 1`), with `C(l) ~ l^-gamma` fitted over `fit_range` using the lags
/// where `C > 0`.
pub fn sign_acf(
    signs: &[i8],
    max_lag: usize,
    fit_range: (usize, usize),
) -> Result<AcfFit, EstimatorError> {
    let n = signs.len();
    if n <= max_lag {
        return Err(EstimatorError::SequenceTooShort { n, max_lag });
    }
    let mean = signs.iter().map(|&s| s as f64).sum::<f64>() / n as f64;
    let var: f64 = signs.iter().map(|&s| (s as f64 - mean).powi(2)).sum();
    if var == 0.0 {
        return Err(EstimatorError::ConstantSequence);
    }
    let centered: Vec<f64> = signs.iter().map(|&s| s as f64 - mean).collect();
    let mut lags = Vec::with_capacity(max_lag);
    let mut values = Vec::with_capacity(max_lag);
    for lag in 1..=max_lag {
        let mut cov = 0.0;
        for t in 0..n - lag {
            cov += centered[t] * centered[t + lag];
        }
        lags.push(lag);
        values.push(cov / var);
    }

    let points: Vec<(f64, f64, f64)> = lags
        .iter()
        .zip(&values)
        .filter(|&(&l, &c)| l >= fit_range.0 && l <= fit_range.1 && c > 0.0)
        .map(|(&l, &c)| (l as f64, c, 1.0))
        .collect();
    let fit = fit_power_law(&points, None).ok();
    let gamma = fit.as_ref().map(|f| -f.exponent);
    Ok(AcfFit {
        lags,
        values,
        gamma,
        fit,
        fit_range,
    })
}

/// Gaussian moment fit with a KS-distance diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianFit {
    pub mean: f64,
    /// Unbiased (n-1) standard deviation.
    pub std: f64,
    /// Kolmogorov-Smirnov distance to `N(mean, std)`.
    pub ks_distance: f64,
    pub n: usize,
}

/// Sample mean, unbiased standard deviation, and the KS distance of the
/// sample against the fitted normal.
pub fn fit_gaussian(samples: &[f64]) -> Result<GaussianFit, EstimatorError> {
    let n = samples.len();
    if n < 2 {
        return Err(EstimatorError::TooFewPoints { needed: 2, got: n });
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let ss: f64 = samples.iter().map(|&x| (x - mean).powi(2)).sum();
    let std = (ss / (n - 1) as f64).sqrt();

    let ks_distance = if std == 0.0 {
        // Degenerate sample; every point sits at the mean.
        0.0
    } else {
        let normal = Normal::new(mean, std).expect("std > 0");
        let mut sorted = samples.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut d: f64 = 0.0;
        for (i, &x) in sorted.iter().enumerate() {
            let cdf = normal.cdf(x);
            d = d.max((i + 1) as f64 / n as f64 - cdf);
            d = d.max(cdf - i as f64 / n as f64);
        }
        d
    };
    Ok(GaussianFit {
        mean,
        std,
        ks_distance,
        n,
    })
}
