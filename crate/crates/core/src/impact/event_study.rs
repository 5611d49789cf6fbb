//! Normalized-time event studies around metaorder executions.
//!
//! Each metaorder's study window spans `[-pre, 1 + post]` in units of its
//! duration, with execution mapped to `[0, 1]`. Price curves are signed
//! log-returns gauged to zero at execution start; flow curves are cumulative
//! signed volumes gauged the same way.

use std::collections::BTreeMap;

use super::isolate::{select_isolated, IsolationConfig, IsolationLabel};
use super::LogBins;
use crate::segmenter::MetaOrder;
use crate::tape::{Tape, TapeIndex};

#[derive(Debug, Clone, Copy)]
pub struct EventStudyConfig {
    /// Pre-window length in units of T.
    pub pre_mult: f64,
    /// Post-window length in units of T.
    pub post_mult: f64,
    /// Grid points across the execution phase [0, 1]; the same spacing
    /// extends into the pre and post windows.
    pub n_exec_points: usize,
    /// Buckets with fewer metaorders are omitted.
    pub n_min: usize,
}

impl Default for EventStudyConfig {
    fn default() -> Self {
        EventStudyConfig {
            pre_mult: 1.0,
            post_mult: 10.0,
            n_exec_points: 21,
            n_min: 50,
        }
    }
}

/// How metaorders are grouped before averaging.
#[derive(Debug, Clone)]
pub enum BucketSpec {
    /// One unconditioned bucket.
    All,
    /// Log-volume buckets.
    QBins(LogBins),
    /// Trending vs mean-reverting pre-window price, relative to the
    /// metaorder direction.
    TrendRegime,
    /// Isolated vs informed under the given selection.
    Isolation(IsolationConfig),
}

/// Mean curves of one bucket, aligned on the normalized grid.
#[derive(Debug, Clone, Default)]
pub struct CurveSet {
    /// Signed log-return of the last traded price.
    pub traded: Vec<f64>,
    /// Signed log-return of the best bid (empty without quote coverage).
    pub best_bid: Vec<f64>,
    /// Signed log-return of the best ask (empty without quote coverage).
    pub best_ask: Vec<f64>,
    /// Signed log-return of the market VWAP accumulated from the window
    /// start, gauged at execution start.
    pub vwap: Vec<f64>,
    /// Sign-adjusted cumulative signed market flow since execution start, BTC.
    pub total_flow: Vec<f64>,
    /// `total_flow - own_volume`, pointwise.
    pub residual_flow: Vec<f64>,
    /// Own executed volume since execution start, BTC.
    pub own_volume: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EventStudyCurve {
    pub bucket: String,
    /// Normalized times; `grid[exec_start] = 0`, `grid[exec_end] = 1`.
    pub grid: Vec<f64>,
    pub exec_start: usize,
    pub exec_end: usize,
    pub n: usize,
    /// Metaorders with bid/ask coverage (contributors to the quote curves).
    pub n_quotes: usize,
    pub curves: CurveSet,
}

impl EventStudyCurve {
    /// Mean traded-price impact at the end of execution.
    pub fn peak_level(&self) -> f64 {
        self.curves.traded[self.exec_end]
    }

    /// Mean traded-price impact at the end of the post window.
    pub fn permanent_level(&self) -> f64 {
        *self.curves.traded.last().unwrap()
    }
}

struct BucketAcc {
    n: usize,
    n_quotes: usize,
    traded: Vec<f64>,
    bid: Vec<f64>,
    ask: Vec<f64>,
    vwap: Vec<f64>,
    total_flow: Vec<f64>,
    own: Vec<f64>,
}

impl BucketAcc {
    fn new(len: usize) -> Self {
        BucketAcc {
            n: 0,
            n_quotes: 0,
            traded: vec![0.0; len],
            bid: vec![0.0; len],
            ask: vec![0.0; len],
            vwap: vec![0.0; len],
            total_flow: vec![0.0; len],
            own: vec![0.0; len],
        }
    }
}

/// Average the study curves per bucket. Metaorders with zero duration or
/// whose full window leaves the tape are skipped; buckets below `n_min` are
/// omitted.
pub fn event_study(
    metaorders: &[MetaOrder],
    tape: &Tape,
    index: &TapeIndex,
    spec: &BucketSpec,
    cfg: &EventStudyConfig,
) -> Vec<EventStudyCurve> {
    assert!(cfg.n_exec_points >= 2);
    let trades = tape.trades();
    let Some((first_ts, last_ts)) = tape.time_range() else {
        return Vec::new();
    };
    let meta = tape.meta();

    let du = 1.0 / (cfg.n_exec_points - 1) as f64;
    let n_pre = (cfg.pre_mult / du - 1e-9).ceil().max(0.0) as usize;
    let n_post = (cfg.post_mult / du - 1e-9).ceil().max(0.0) as usize;
    let n_grid = n_pre + cfg.n_exec_points + n_post;
    let grid: Vec<f64> = (0..n_grid)
        .map(|k| (k as f64 - n_pre as f64) * du)
        .collect();
    let exec_start = n_pre;
    let exec_end = n_pre + cfg.n_exec_points - 1;

    // Carry-forward quote state per trade index; -1 marks "not yet seen".
    let mut last_bid = vec![-1i64; trades.len()];
    let mut last_ask = vec![-1i64; trades.len()];
    let (mut b, mut a) = (-1i64, -1i64);
    for (i, t) in trades.iter().enumerate() {
        if let Some(x) = t.best_bid {
            b = x;
        }
        if let Some(x) = t.best_ask {
            a = x;
        }
        last_bid[i] = b;
        last_ask[i] = a;
    }

    let isolation_labels = match spec {
        BucketSpec::Isolation(icfg) => Some(select_isolated(metaorders, tape, index, icfg)),
        _ => None,
    };

    let mut buckets: BTreeMap<String, BucketAcc> = BTreeMap::new();

    for (mi, m) in metaorders.iter().enumerate() {
        let duration = m.t_end - m.t_start;
        if duration <= 0 {
            continue;
        }
        let t_of = |u: f64| m.t_start + (u * duration as f64).round() as i64;
        let w_start = t_of(-cfg.pre_mult);
        let w_end = t_of(1.0 + cfg.post_mult);
        if w_start < first_ts || w_end > last_ts {
            continue;
        }
        let sign = m.sign as f64;

        let bucket = match spec {
            BucketSpec::All => "all".to_string(),
            BucketSpec::QBins(bins) => {
                let q = m.q_btc(meta);
                if q <= 0.0 {
                    continue;
                }
                format!("Q={:.3e}", bins.center(bins.bin_of(q)))
            }
            BucketSpec::TrendRegime => {
                let p_start = trades[tape.upper_bound(m.t_start) - 1].price as f64;
                let p_pre = trades[tape.upper_bound(w_start) - 1].price as f64;
                let drift = sign * (p_start / p_pre).ln();
                if drift > 0.0 {
                    "trending".to_string()
                } else if drift < 0.0 {
                    "mean_reverting".to_string()
                } else {
                    "neutral".to_string()
                }
            }
            BucketSpec::Isolation(_) => {
                match isolation_labels.as_ref().unwrap()[mi] {
                    IsolationLabel::Excluded => continue,
                    label => label.as_str().to_string(),
                }
            }
        };

        // Reference quantities at execution start.
        let start_idx = tape.upper_bound(m.t_start); // exclusive
        let ln_p_start = (trades[start_idx - 1].price as f64).ln();
        let cum_signed_start = index.cum_signed_at(start_idx);
        let w_lo = tape.lower_bound(w_start);
        let has_quotes = last_bid[start_idx - 1] > 0 && last_ask[start_idx - 1] > 0;
        let (ln_bid_start, ln_ask_start) = if has_quotes {
            (
                (last_bid[start_idx - 1] as f64).ln(),
                (last_ask[start_idx - 1] as f64).ln(),
            )
        } else {
            (0.0, 0.0)
        };
        let vwap_at = |ub: usize| -> f64 {
            let v = index.cum_volume_at(ub) - index.cum_volume_at(w_lo);
            if v > 0 {
                let pv = index.cum_price_volume_at(ub) - index.cum_price_volume_at(w_lo);
                (pv as f64 / v as f64).ln()
            } else {
                // No trades accumulated yet; fall back to the last price.
                (trades[ub.max(1) - 1].price as f64).ln()
            }
        };
        let ln_vwap_start = vwap_at(start_idx);

        let acc = buckets
            .entry(bucket)
            .or_insert_with(|| BucketAcc::new(n_grid));
        acc.n += 1;
        if has_quotes {
            acc.n_quotes += 1;
        }

        let mut ptr = tape.upper_bound(t_of(grid[0]));
        let mut own_ptr = 0usize;
        let mut own_cum: i128 = 0;
        let children = &m.child_trades;
        for (k, &u) in grid.iter().enumerate() {
            let t = t_of(u);
            while ptr < trades.len() && trades[ptr].timestamp <= t {
                ptr += 1;
            }
            let at = ptr - 1; // window start >= first_ts keeps this valid
            acc.traded[k] += sign * ((trades[at].price as f64).ln() - ln_p_start);
            if has_quotes {
                acc.bid[k] += sign * ((last_bid[at] as f64).ln() - ln_bid_start);
                acc.ask[k] += sign * ((last_ask[at] as f64).ln() - ln_ask_start);
            }
            acc.vwap[k] += sign * (vwap_at(ptr) - ln_vwap_start);
            let flow = index.cum_signed_at(ptr) - cum_signed_start;
            acc.total_flow[k] += sign * meta.volume_i128_to_f64(flow);
            // Own volume strictly after execution start (the gauge excludes
            // everything at or before t_start, own fills included).
            while own_ptr < children.len() {
                let c = &trades[children[own_ptr]];
                if c.timestamp > m.t_start && c.timestamp <= t {
                    own_cum += c.volume as i128;
                    own_ptr += 1;
                } else if c.timestamp <= m.t_start {
                    own_ptr += 1;
                } else {
                    break;
                }
            }
            acc.own[k] += if t >= m.t_start {
                meta.volume_i128_to_f64(own_cum)
            } else {
                0.0
            };
        }
    }

    buckets
        .into_iter()
        .filter(|(_, acc)| acc.n >= cfg.n_min.max(1))
        .map(|(bucket, acc)| {
            let n = acc.n as f64;
            let nq = acc.n_quotes as f64;
            let avg = |v: &[f64], d: f64| -> Vec<f64> {
                if d > 0.0 {
                    v.iter().map(|x| x / d).collect()
                } else {
                    Vec::new()
                }
            };
            let traded = avg(&acc.traded, n);
            let total_flow = avg(&acc.total_flow, n);
            let own_volume = avg(&acc.own, n);
            let residual_flow: Vec<f64> = total_flow
                .iter()
                .zip(&own_volume)
                .map(|(t, o)| t - o)
                .collect();
            EventStudyCurve {
                bucket,
                grid: grid.clone(),
                exec_start,
                exec_end,
                n: acc.n,
                n_quotes: acc.n_quotes,
                curves: CurveSet {
                    traded,
                    best_bid: avg(&acc.bid, nq),
                    best_ask: avg(&acc.ask, nq),
                    vwap: avg(&acc.vwap, n),
                    total_flow,
                    residual_flow,
                    own_volume,
                },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::impact::tests::{tape_of, trade};
    use crate::segmenter::{segment, SegmentationConfig};
    use crate::tape::Side;

    fn no_drop() -> SegmentationConfig {
        SegmentationConfig {
            drop_mean_reverting: false,
            ..SegmentationConfig::default()
        }
    }

    fn cfg(n_min: usize) -> EventStudyConfig {
        EventStudyConfig {
            pre_mult: 1.0,
            post_mult: 10.0,
            n_exec_points: 11,
            n_min,
        }
    }

    /// Constant price before and after a two-fill metaorder: pre curve flat
    /// at zero, post curve flat at the peak.
    #[test]
    fn constructed_tape_has_flat_pre_and_post() {
        let p0 = 100.0;
        let p1 = 101.0;
        let mut rows = vec![
            trade(0.0, 1, 9, Side::Sell, p0, 0.001),
            trade(50.0, 2, 9, Side::Sell, p0, 0.001),
            trade(100.0, 3, 7, Side::Buy, p0, 1.0),
            trade(110.0, 4, 7, Side::Buy, p1, 1.0),
        ];
        // Post-window background at the peak price out to t_end + 10T.
        for k in 0..25 {
            rows.push(trade(115.0 + 5.0 * k as f64, 5 + k, 9, Side::Sell, p1, 0.001));
        }
        let tape = tape_of(rows);
        let metas = segment(&tape, &no_drop());
        let target: Vec<MetaOrder> = metas
            .into_iter()
            .filter(|m| m.trader_id == crate::tape::TraderId(7))
            .collect();
        let index = TapeIndex::new(&tape);
        let out = event_study(&target, &tape, &index, &BucketSpec::All, &cfg(1));
        assert_eq!(out.len(), 1);
        let c = &out[0];
        assert_eq!(c.n, 1);
        let peak = (p1 / p0).ln();
        for (k, u) in c.grid.iter().enumerate() {
            let v = c.curves.traded[k];
            if *u <= 0.0 {
                assert!(v.abs() < 1e-12, "u={u} v={v}");
            }
            if *u >= 1.0 {
                assert!((v - peak).abs() < 1e-9, "u={u} v={v}");
            }
        }
        assert!((c.peak_level() - peak).abs() < 1e-9);
        assert!((c.permanent_level() - peak).abs() < 1e-9);
        // Own volume reaches Q minus the gauge fill.
        assert!((c.curves.own_volume[c.exec_end] - 1.0).abs() < 1e-9);
        // Residual equals total minus own at every grid point.
        for k in 0..c.grid.len() {
            let d = c.curves.total_flow[k] - c.curves.own_volume[k] - c.curves.residual_flow[k];
            assert!(d.abs() < 1e-12);
        }
    }

    #[test]
    fn curves_are_zero_at_execution_start() {
        let mut rows = vec![
            trade(0.0, 1, 9, Side::Sell, 99.8, 0.01),
            trade(100.0, 2, 7, Side::Buy, 100.0, 1.0),
            trade(105.0, 3, 8, Side::Sell, 100.1, 0.4),
            trade(110.0, 4, 7, Side::Buy, 100.2, 1.0),
        ];
        for k in 0..30 {
            rows.push(trade(
                115.0 + 5.0 * k as f64,
                5 + k,
                9,
                if k % 2 == 0 { Side::Buy } else { Side::Sell },
                100.1,
                0.05,
            ));
        }
        let tape = tape_of(rows);
        let metas = segment(&tape, &no_drop());
        let target: Vec<MetaOrder> = metas
            .into_iter()
            .filter(|m| m.trader_id == crate::tape::TraderId(7))
            .collect();
        let index = TapeIndex::new(&tape);
        let out = event_study(&target, &tape, &index, &BucketSpec::All, &cfg(1));
        let c = &out[0];
        let k0 = c.exec_start;
        assert_eq!(c.grid[k0], 0.0);
        assert_eq!(c.curves.traded[k0], 0.0);
        assert_eq!(c.curves.vwap[k0], 0.0);
        assert_eq!(c.curves.total_flow[k0], 0.0);
        assert_eq!(c.curves.own_volume[k0], 0.0);
    }

    #[test]
    fn quote_curves_follow_the_planted_book() {
        let with_quotes = |mut t: crate::tape::Trade, bid: f64, ask: f64| {
            t.best_bid = Some((bid * 1e5).round() as i64);
            t.best_ask = Some((ask * 1e5).round() as i64);
            t
        };
        let mut rows = vec![
            with_quotes(trade(0.0, 1, 9, Side::Sell, 100.0, 0.01), 100.0, 100.4),
            with_quotes(trade(100.0, 2, 7, Side::Buy, 100.4, 1.0), 100.0, 100.4),
            with_quotes(trade(110.0, 3, 7, Side::Buy, 100.9, 1.0), 100.2, 100.9),
        ];
        for k in 0..30 {
            rows.push(with_quotes(
                trade(115.0 + 5.0 * k as f64, 4 + k, 9, Side::Sell, 100.2, 0.01),
                100.2,
                100.9,
            ));
        }
        let tape = tape_of(rows);
        let metas = segment(&tape, &no_drop());
        let target: Vec<MetaOrder> = metas
            .into_iter()
            .filter(|m| m.trader_id == crate::tape::TraderId(7))
            .collect();
        let index = TapeIndex::new(&tape);
        let out = event_study(&target, &tape, &index, &BucketSpec::All, &cfg(1));
        let c = &out[0];
        assert_eq!(c.n_quotes, 1);
        let ask_peak = (100.9f64 / 100.4).ln();
        let bid_peak = (100.2f64 / 100.0).ln();
        assert!((c.curves.best_ask[c.exec_end] - ask_peak).abs() < 1e-9);
        assert!((c.curves.best_bid[c.exec_end] - bid_peak).abs() < 1e-9);
    }

    #[test]
    fn trend_regime_splits_by_pre_window_drift() {
        let mut rows = Vec::new();
        let mut id = 1u64;
        // Rising pre-window then a buy metaorder: trending.
        rows.push(trade(0.0, id, 9, Side::Buy, 99.0, 0.01));
        id += 1;
        rows.push(trade(90.0, id, 9, Side::Buy, 99.8, 0.01));
        id += 1;
        rows.push(trade(100.0, id, 7, Side::Buy, 100.0, 1.0));
        id += 1;
        rows.push(trade(110.0, id, 7, Side::Buy, 100.2, 1.0));
        id += 1;
        for k in 0..30 {
            rows.push(trade(112.0 + 5.0 * k as f64, id, 9, Side::Sell, 100.1, 0.01));
            id += 1;
        }
        // Falling pre-window then a buy metaorder: mean-reverting.
        let base = 400.0;
        rows.push(trade(base, id, 9, Side::Sell, 100.6, 0.01));
        id += 1;
        rows.push(trade(base + 90.0, id, 9, Side::Sell, 100.1, 0.01));
        id += 1;
        rows.push(trade(base + 100.0, id, 8, Side::Buy, 100.0, 1.0));
        id += 1;
        rows.push(trade(base + 110.0, id, 8, Side::Buy, 100.3, 1.0));
        id += 1;
        for k in 0..30 {
            rows.push(trade(base + 112.0 + 5.0 * k as f64, id, 9, Side::Buy, 100.2, 0.01));
            id += 1;
        }
        let tape = tape_of(rows);
        let metas = segment(&tape, &no_drop());
        let target: Vec<MetaOrder> = metas
            .into_iter()
            .filter(|m| m.trader_id.0 == 7 || m.trader_id.0 == 8)
            .collect();
        assert_eq!(target.len(), 2);
        let index = TapeIndex::new(&tape);
        let out = event_study(&target, &tape, &index, &BucketSpec::TrendRegime, &cfg(1));
        let names: Vec<&str> = out.iter().map(|c| c.bucket.as_str()).collect();
        assert!(names.contains(&"trending"), "{names:?}");
        assert!(names.contains(&"mean_reverting"), "{names:?}");
    }

    #[test]
    fn underpopulated_buckets_are_omitted() {
        let mut rows = vec![
            trade(100.0, 1, 7, Side::Buy, 100.0, 1.0),
            trade(110.0, 2, 7, Side::Buy, 100.2, 1.0),
        ];
        for k in 0..30 {
            rows.push(trade(115.0 + 5.0 * k as f64, 3 + k, 9, Side::Sell, 100.1, 0.01));
        }
        rows.push(trade(0.0, 99, 9, Side::Sell, 100.0, 0.01));
        let tape = tape_of(rows);
        let metas = segment(&tape, &no_drop());
        let index = TapeIndex::new(&tape);
        let out = event_study(&metas, &tape, &index, &BucketSpec::All, &cfg(50));
        assert!(out.is_empty());
    }
}
