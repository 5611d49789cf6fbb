//! Versioned pipeline manifest: every fitted parameter with its estimator
//! metadata, in one stable JSON document.

use impactlab::estimators::{AcfFit, GaussianFit, PowerLawFit, TailFit};
use impactlab::impact::{IsolationLabel, PeakImpactCurve, SurfaceFit};
use impactlab::segmenter::MetaOrder;
use impactlab::tape::{DailyAggregate, ParseReport, Tape};
use serde::Serialize;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// One fit plus the conventions it was computed under.
#[derive(Debug, Serialize)]
pub struct EstimatorRecord {
    pub estimator: &'static str,
    pub conventions: &'static str,
    pub n: usize,
    #[serde(flatten)]
    pub values: serde_json::Value,
}

impl EstimatorRecord {
    pub fn power_law(fit: &PowerLawFit, curve: &PeakImpactCurve) -> Self {
        EstimatorRecord {
            estimator: "weighted_log_log_ols",
            conventions: "bin means weighted by counts; prefactor = exp(intercept)",
            n: curve.n_entries,
            values: serde_json::json!({
                "exponent": fit.exponent,
                "exponent_stderr": fit.exponent_stderr,
                "prefactor": fit.prefactor,
                "prefactor_stderr": fit.prefactor_stderr,
                "r_squared": fit.r_squared,
                "fit_range_btc": fit.fit_range,
                "bins": curve.points.len(),
                "in_trajectory": curve.in_trajectory,
            }),
        }
    }

    pub fn gaussian(fit: &GaussianFit) -> Self {
        EstimatorRecord {
            estimator: "gaussian_moments",
            conventions: "unbiased (n-1) standard deviation; KS against fitted normal",
            n: fit.n,
            values: serde_json::json!({
                "mean": fit.mean,
                "std": fit.std,
                "ks_distance": fit.ks_distance,
            }),
        }
    }

    pub fn acf(fit: &AcfFit) -> Self {
        EstimatorRecord {
            estimator: "sign_acf_power_law",
            conventions: "biased ACF normalized to C(0)=1; decay fitted on positive lags",
            n: fit.lags.len(),
            values: serde_json::json!({
                "gamma": fit.gamma,
                "fit_range": fit.fit_range,
            }),
        }
    }

    pub fn hill(fit: &TailFit) -> Self {
        EstimatorRecord {
            estimator: "hill",
            conventions: "CCDF tail index over exceedances strictly above threshold",
            n: fit.k,
            values: serde_json::json!({
                "hill_alpha": fit.hill_alpha,
                "threshold": fit.threshold,
            }),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: String,
    pub counts: serde_json::Value,
    pub fits: serde_json::Value,
}

impl Manifest {
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        tape: &Tape,
        report: &ParseReport,
        metaorders: &[MetaOrder],
        daily: &[DailyAggregate],
        curve: &PeakImpactCurve,
        peak_fit: &PowerLawFit,
        traj_fit: Option<&PowerLawFit>,
        gaussian: Option<&GaussianFit>,
        surface_fit: Option<&SurfaceFit>,
        acf: Option<&AcfFit>,
        hill: Option<&TailFit>,
        isolation: &[IsolationLabel],
    ) -> Self {
        let isolated = isolation.iter().filter(|l| **l == IsolationLabel::Isolated).count();
        let informed = isolation.iter().filter(|l| **l == IsolationLabel::Informed).count();
        let fits = serde_json::json!({
            "delta": peak_fit.exponent,
            "y_tilde": peak_fit.prefactor,
            "delta_in_trajectory": traj_fit.map(|f| f.exponent),
            "y0": gaussian.map(|g| g.mean),
            "sigma_y": gaussian.map(|g| g.std),
            "delta_prime": surface_fit.map(|s| s.delta_prime),
            "gamma": acf.and_then(|a| a.gamma),
            "hill_alpha": hill.map(|h| h.hill_alpha),
            "records": {
                "peak_power_law": EstimatorRecord::power_law(peak_fit, curve),
                "y_ratio_gaussian": gaussian.map(EstimatorRecord::gaussian),
                "surface": surface_fit,
                "sign_acf": acf.map(EstimatorRecord::acf),
                "hill_tail": hill.map(EstimatorRecord::hill),
            },
        });
        Manifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            tool: format!("impactlab {}", env!("CARGO_PKG_VERSION")),
            counts: serde_json::json!({
                "trades": tape.len(),
                "rows_ingested": report.rows,
                "reorder_warnings": report.reorder_warnings,
                "quote_warnings": report.quote_warnings,
                "metaorders": metaorders.len(),
                "days": daily.len(),
                "isolated": isolated,
                "informed": informed,
            }),
            fits,
        }
    }
}
