//! Naive reference statistics computed directly from ground truth, bypassing
//! the pipeline's indexed implementations. Deliberately O(n^2)-where-needed
//! and capped to desk-scale tapes.

use thiserror::Error;

use super::GroundTruth;
use crate::impact::ImpactSummary;
use crate::segmenter::MetaOrder;
use crate::tape::{Tape, TimeWindow, NS_PER_SEC};

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("tape has {len} trades, above the oracle cap of {cap}")]
    TapeTooLarge { len: usize, cap: usize },
    #[error("ground truth labels do not match the tape length")]
    LabelMismatch,
}

pub const ORACLE_TRADE_CAP: usize = 100_000;

/// Reference values produced by [`brute_force_stats`].
#[derive(Debug, Clone)]
pub struct OracleStats {
    /// Per planted metaorder, from ground-truth labels (segmenter bypassed).
    pub summaries: Vec<ImpactSummary>,
    /// Signed volume per requested window, naive rescan.
    pub windowed_imbalance: Vec<i128>,
    /// Sign ACF at lags 1..=max_lag of planted metaorder signs, direct sums.
    pub sign_acf: Vec<f64>,
    /// Active (buy, sell) metaorder counts per grid point.
    pub active_counts: Vec<(u32, u32)>,
}

/// Exact signed volume over the closed window by full rescan.
pub fn naive_imbalance(tape: &Tape, window: TimeWindow) -> i128 {
    tape.trades()
        .iter()
        .filter(|t| window.contains(t.timestamp))
        .map(|t| t.signed_volume() as i128)
        .sum()
}

/// Interval-overlap counts at `t0 + k * resolution`, O(N * grid).
pub fn naive_active_counts(
    metaorders: &[MetaOrder],
    t0: i64,
    resolution_ns: i64,
    n_points: usize,
) -> Vec<(u32, u32)> {
    (0..n_points)
        .map(|k| {
            let t = t0 + k as i64 * resolution_ns;
            let mut buy = 0;
            let mut sell = 0;
            for m in metaorders {
                if m.t_start <= t && t <= m.t_end {
                    if m.sign > 0 {
                        buy += 1;
                    } else {
                        sell += 1;
                    }
                }
            }
            (buy, sell)
        })
        .collect()
}

/// Direct-sum autocorrelation of a sign sequence at lags 1..=max_lag.
pub fn naive_sign_acf(signs: &[i8], max_lag: usize) -> Vec<f64> {
    let n = signs.len();
    let mean = signs.iter().map(|&s| s as f64).sum::<f64>() / n as f64;
    let var: f64 = signs.iter().map(|&s| (s as f64 - mean).powi(2)).sum();
    (1..=max_lag)
        .map(|lag| {
            let mut cov = 0.0;
            for t in 0..n - lag {
                cov += (signs[t] as f64 - mean) * (signs[t + lag] as f64 - mean);
            }
            cov / var
        })
        .collect()
}

/// Reassemble metaorder structures from ground-truth labels, with naive
/// window rescans for the participation rate.
pub fn metaorders_from_labels(tape: &Tape, gt: &GroundTruth) -> Result<Vec<MetaOrder>, OracleError> {
    if gt.labels.len() != tape.len() {
        return Err(OracleError::LabelMismatch);
    }
    let trades = tape.trades();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); gt.metaorders.len()];
    for (i, label) in gt.labels.iter().enumerate() {
        if let Some(id) = label {
            children[*id as usize].push(i);
        }
    }
    Ok(children
        .into_iter()
        .enumerate()
        .filter(|(_, c)| !c.is_empty())
        .map(|(id, child_trades)| {
            let first = &trades[child_trades[0]];
            let last = &trades[*child_trades.last().unwrap()];
            let q_raw: i128 = child_trades.iter().map(|&i| trades[i].volume as i128).sum();
            let window = TimeWindow::new(first.timestamp, last.timestamp);
            let v_m: i128 = trades
                .iter()
                .filter(|t| window.contains(t.timestamp))
                .map(|t| t.volume as i128)
                .sum();
            MetaOrder {
                id: id as u64,
                trader_id: first.aggressor_id,
                sign: first.side.sign() as i8,
                child_trades,
                q_raw,
                t_start: first.timestamp,
                t_end: last.timestamp,
                mu_v: if v_m > 0 { q_raw as f64 / v_m as f64 } else { 0.0 },
            }
        })
        .collect())
}

/// Impact summary of one metaorder by direct scans (no prefix sums).
fn naive_summary(tape: &Tape, m: &MetaOrder) -> ImpactSummary {
    let trades = tape.trades();
    let meta = tape.meta();
    let p0 = trades[m.child_trades[0]].price as f64;
    let sign = m.sign as f64;
    let last = &trades[*m.child_trades.last().unwrap()];
    let peak = sign * (last.price as f64 / p0).ln();
    let mut exec = 0.0;
    for &i in &m.child_trades {
        let t = &trades[i];
        exec += t.volume as f64 * (t.price as f64 / p0).ln();
    }
    exec *= sign / m.q_raw as f64;
    let duration = m.t_end - m.t_start;
    let perm = if duration > 0 {
        let window = TimeWindow::new(m.t_end + 9 * duration, m.t_end + 10 * duration);
        let in_tape = tape
            .time_range()
            .is_some_and(|(_, last_ts)| window.end <= last_ts);
        if in_tape {
            let mut pv = 0.0;
            let mut v = 0.0;
            for t in trades.iter().filter(|t| window.contains(t.timestamp)) {
                pv += t.price as f64 * t.volume as f64;
                v += t.volume as f64;
            }
            if v > 0.0 {
                Some(sign * ((pv / v) / p0).ln())
            } else {
                None
            }
        } else {
            None
        }
    } else {
        None
    };
    ImpactSummary {
        metaorder_id: m.id,
        sign: m.sign,
        q_btc: m.q_btc(meta),
        mu_v: m.mu_v,
        mu: m.mu(meta),
        t_start: m.t_start,
        t_end: m.t_end,
        n_children: m.n_children(),
        peak,
        exec,
        perm,
        perm_mech: perm.map(|p| peak - p),
    }
}

/// Reference statistics for a desk-scale tape: ground-truth impact summaries,
/// naive windowed imbalances, the planted-sign ACF, and interval-overlap
/// active counts on a grid spanning the planted metaorders.
pub fn brute_force_stats(
    tape: &Tape,
    gt: &GroundTruth,
    windows: &[TimeWindow],
    acf_max_lag: usize,
    active_resolution_secs: f64,
) -> Result<OracleStats, OracleError> {
    if tape.len() > ORACLE_TRADE_CAP {
        return Err(OracleError::TapeTooLarge {
            len: tape.len(),
            cap: ORACLE_TRADE_CAP,
        });
    }
    let metaorders = metaorders_from_labels(tape, gt)?;
    let summaries: Vec<ImpactSummary> = metaorders.iter().map(|m| naive_summary(tape, m)).collect();
    let windowed_imbalance: Vec<i128> = windows.iter().map(|w| naive_imbalance(tape, *w)).collect();
    let signs: Vec<i8> = metaorders.iter().map(|m| m.sign).collect();
    let sign_acf = if signs.len() > acf_max_lag && acf_max_lag > 0 {
        naive_sign_acf(&signs, acf_max_lag)
    } else {
        Vec::new()
    };
    let active_counts = if metaorders.is_empty() {
        Vec::new()
    } else {
        let t0 = metaorders.iter().map(|m| m.t_start).min().unwrap();
        let t1 = metaorders.iter().map(|m| m.t_end).max().unwrap();
        let res = (active_resolution_secs * NS_PER_SEC as f64).round() as i64;
        let n_points = ((t1 - t0) / res) as usize + 1;
        naive_active_counts(&metaorders, t0, res, n_points)
    };
    Ok(OracleStats {
        summaries,
        windowed_imbalance,
        sign_acf,
        active_counts,
    })
}
