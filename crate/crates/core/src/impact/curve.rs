//! Binned peak-impact curve over metaorder volume.

use std::collections::BTreeMap;

use super::{ImpactError, ImpactPath, ImpactSummary};
use crate::estimators::{fit_power_law, EstimatorError, PowerLawFit};

/// Logarithmic binning parameters shared by the volume-binned statistics.
#[derive(Debug, Clone, Copy)]
pub struct LogBins {
    pub bins_per_decade: usize,
    /// Bins holding fewer entries are masked.
    pub n_min: usize,
}

impl Default for LogBins {
    fn default() -> Self {
        LogBins {
            bins_per_decade: 8,
            n_min: 50,
        }
    }
}

impl LogBins {
    pub fn bin_of(&self, x: f64) -> i32 {
        (x.log10() * self.bins_per_decade as f64).floor() as i32
    }

    /// Geometric center of a bin.
    pub fn center(&self, bin: i32) -> f64 {
        10f64.powf((bin as f64 + 0.5) / self.bins_per_decade as f64)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CurvePoint {
    /// Geometric bin center in BTC.
    pub center: f64,
    pub mean: f64,
    /// Standard error of the bin mean.
    pub stderr: f64,
    pub n: usize,
}

#[derive(Debug, Clone)]
pub struct PeakImpactCurve {
    pub points: Vec<CurvePoint>,
    pub binning: LogBins,
    /// Total entries contributed, including masked bins.
    pub n_entries: usize,
    pub in_trajectory: bool,
}

impl PeakImpactCurve {
    /// Linear interpolation of the bin means in log-volume, clamped to the
    /// outermost bins.
    pub fn eval(&self, q: f64) -> Option<f64> {
        if self.points.is_empty() || q <= 0.0 {
            return None;
        }
        let lq = q.log10();
        let pts = &self.points;
        if lq <= pts[0].center.log10() {
            return Some(pts[0].mean);
        }
        if lq >= pts[pts.len() - 1].center.log10() {
            return Some(pts[pts.len() - 1].mean);
        }
        let j = pts.partition_point(|p| p.center.log10() <= lq);
        let (a, b) = (&pts[j - 1], &pts[j]);
        let (xa, xb) = (a.center.log10(), b.center.log10());
        Some(a.mean + (b.mean - a.mean) * (lq - xa) / (xb - xa))
    }
}

/// Mean peak impact per logarithmic volume bin. With `include_in_trajectory`,
/// every trajectory sample `(r, impact)` with `r > 0` also contributes at
/// volume `r * |Q|`, as it would have been the peak of the metaorder had it
/// stopped there.
pub fn peak_impact_curve(
    summaries: &[ImpactSummary],
    paths: &[ImpactPath],
    binning: LogBins,
    include_in_trajectory: bool,
) -> Result<PeakImpactCurve, ImpactError> {
    struct Acc {
        n: usize,
        sum: f64,
        sum_sq: f64,
    }
    let mut bins: BTreeMap<i32, Acc> = BTreeMap::new();
    let mut n_entries = 0usize;
    let mut push = |q: f64, impact: f64| {
        if q <= 0.0 {
            return;
        }
        let acc = bins.entry(binning.bin_of(q)).or_insert(Acc {
            n: 0,
            sum: 0.0,
            sum_sq: 0.0,
        });
        acc.n += 1;
        acc.sum += impact;
        acc.sum_sq += impact * impact;
        n_entries += 1;
    };

    if include_in_trajectory {
        for p in paths {
            for s in &p.samples {
                if s.r > 0.0 {
                    push(s.r * p.q_btc, s.impact);
                }
            }
        }
    } else {
        for s in summaries {
            push(s.q_btc, s.peak);
        }
    }

    let points: Vec<CurvePoint> = bins
        .iter()
        .filter(|(_, acc)| acc.n >= binning.n_min.max(1))
        .map(|(&bin, acc)| {
            let n = acc.n as f64;
            let mean = acc.sum / n;
            let var = (acc.sum_sq / n - mean * mean).max(0.0);
            let stderr = if acc.n > 1 {
                (var * n / (n - 1.0)).sqrt() / n.sqrt()
            } else {
                0.0
            };
            CurvePoint {
                center: binning.center(bin),
                mean,
                stderr,
                n: acc.n,
            }
        })
        .collect();
    if points.is_empty() {
        return Err(ImpactError::AllBinsUnderPopulated { n_min: binning.n_min });
    }
    Ok(PeakImpactCurve {
        points,
        binning,
        n_entries,
        in_trajectory: include_in_trajectory,
    })
}

/// Power-law fit of the curve's bin means, weighted by bin counts.
pub fn fit_peak_curve(curve: &PeakImpactCurve) -> Result<PowerLawFit, EstimatorError> {
    let pts: Vec<(f64, f64, f64)> = curve
        .points
        .iter()
        .map(|p| (p.center, p.mean, p.n as f64))
        .collect();
    fit_power_law(&pts, None)
}
