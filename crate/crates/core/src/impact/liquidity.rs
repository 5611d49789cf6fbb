//! Daily impact prefactor and its volatility-per-root-volume normalization.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::Serialize;

use super::ImpactSummary;
use crate::tape::{DailyAggregate, TapeMeta, NS_PER_DAY};

/// One day's volume-weighted impact prefactor and Y-ratio.
#[derive(Debug, Clone, Serialize)]
pub struct DailyLiquidity {
    pub date: NaiveDate,
    pub day_index: i64,
    /// Volume-weighted mean of `Y_i = impact_i / sqrt(|Q_i|)`, per sqrt(BTC).
    /// Impact is sign-adjusted, so no extra sign factor is applied.
    pub y_tilde: f64,
    pub sigma_d: f64,
    /// Daily traded volume in BTC.
    pub v_d: f64,
    /// `y_tilde / (sigma_d / sqrt(v_d))`; unset when `sigma_d` is zero.
    pub y_ratio: Option<f64>,
    pub n_metaorders: usize,
}

/// Per-day volume-weighted prefactor series. A metaorder belongs to the UTC
/// day its last fill ends on; days without an aggregate record or without
/// metaorders are absent.
pub fn daily_liquidity_series(
    summaries: &[ImpactSummary],
    daily: &[DailyAggregate],
    meta: &TapeMeta,
) -> Vec<DailyLiquidity> {
    let mut acc: BTreeMap<i64, (f64, f64, usize)> = BTreeMap::new();
    for s in summaries {
        if s.q_btc <= 0.0 {
            continue;
        }
        let day = s.t_end.div_euclid(NS_PER_DAY);
        let weight = s.q_btc;
        let y_i = s.peak / s.q_btc.sqrt();
        let e = acc.entry(day).or_insert((0.0, 0.0, 0));
        e.0 += weight * y_i;
        e.1 += weight;
        e.2 += 1;
    }
    daily
        .iter()
        .filter_map(|d| {
            let &(wy, w, n) = acc.get(&d.day_index)?;
            if n == 0 || w <= 0.0 {
                return None;
            }
            let y_tilde = wy / w;
            let v_d = d.v_d(meta);
            let y_ratio = if d.sigma_d > 0.0 && v_d > 0.0 {
                Some(y_tilde / (d.sigma_d / v_d.sqrt()))
            } else {
                None
            };
            Some(DailyLiquidity {
                date: d.date,
                day_index: d.day_index,
                y_tilde,
                sigma_d: d.sigma_d,
                v_d,
                y_ratio,
                n_metaorders: n,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::VolEstimator;

    fn aggregate(day: i64, sigma: f64, v_raw: i128) -> DailyAggregate {
        DailyAggregate {
            date: NaiveDate::from_num_days_from_ce_opt(day as i32 + 719_163).unwrap(),
            day_index: day,
            v_d_raw: v_raw,
            sigma_d: sigma,
            n_trades: 1,
            estimator: VolEstimator::CloseToClose5Min,
        }
    }

    fn summary(day: i64, q: f64, peak: f64) -> ImpactSummary {
        ImpactSummary {
            metaorder_id: 0,
            sign: 1,
            q_btc: q,
            mu_v: 1.0,
            mu: Some(1.0),
            t_start: day * NS_PER_DAY,
            t_end: day * NS_PER_DAY + 1,
            n_children: 2,
            peak,
            exec: peak / 2.0,
            perm: None,
            perm_mech: None,
        }
    }

    #[test]
    fn single_metaorder_day() {
        // I = 0.02, |Q| = 4 -> y_tilde = 0.01.
        let meta = TapeMeta::default();
        let days = vec![aggregate(0, 0.05, 100 * 100_000_000)];
        let series =
            daily_liquidity_series(&[summary(0, 4.0, 0.02)], &days, &meta);
        assert_eq!(series.len(), 1);
        assert!((series[0].y_tilde - 0.01).abs() < 1e-15);
        // y_ratio = 0.01 / (0.05 / sqrt(100)) = 2.0
        assert!((series[0].y_ratio.unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn volume_weighting_and_zero_sigma() {
        let meta = TapeMeta::default();
        let days = vec![aggregate(0, 0.0, 100 * 100_000_000)];
        // weights 1 and 4; y_i = 0.01 and 0.02
        let series = daily_liquidity_series(
            &[summary(0, 1.0, 0.01), summary(0, 4.0, 0.04)],
            &days,
            &meta,
        );
        assert_eq!(series.len(), 1);
        let expected = (1.0 * 0.01 + 4.0 * 0.02) / 5.0;
        assert!((series[0].y_tilde - expected).abs() < 1e-15);
        assert_eq!(series[0].y_ratio, None); // sigma_d = 0
        assert_eq!(series[0].n_metaorders, 2);
    }

    #[test]
    fn days_without_metaorders_are_absent() {
        let meta = TapeMeta::default();
        let days = vec![
            aggregate(0, 0.1, 100_000_000),
            aggregate(1, 0.1, 100_000_000),
        ];
        let series = daily_liquidity_series(&[summary(1, 1.0, 0.01)], &days, &meta);
        assert_eq!(series.len(), 1);
        assert_eq!(series[0].day_index, 1);
    }
}
