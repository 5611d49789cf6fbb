//! Metaorder reconstruction from aggressive trades.
//!
//! For each trader, a metaorder opens at the first aggressive trade after an
//! inactivity gap of at least `t_inact` (or at the trader's first trade) and
//! closes at the last trade before the next such gap, or at the last trade
//! before the trader trades in the opposite direction. Passive fills never
//! join a trader's metaorders but do count toward market volume.

use std::collections::HashMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::tape::{Tape, TapeIndex, TimeWindow, TraderId, NS_PER_SEC};

#[derive(Debug, Error, PartialEq)]
pub enum SegmenterError {
    #[error("no metaorders in input")]
    EmptyInput,
    #[error("no eligible metaorders (need duration > 0 and at least 2 children)")]
    NoEligibleMetaOrders,
    #[error("resolution must be positive")]
    BadResolution,
}

/// Segmentation parameters.
#[derive(Debug, Clone)]
pub struct SegmentationConfig {
    /// Inactivity threshold in seconds (wall-clock).
    pub t_inact_secs: f64,
    /// Discard reversal metaorders that fully offset the previous one within
    /// the inactivity threshold (round-trip trades carry a conditioning bias).
    pub drop_mean_reverting: bool,
    /// A direction-reversing trade closes the current metaorder and opens a
    /// new one. When false the reversing trade is left unassigned instead.
    pub reversal_starts_new: bool,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            t_inact_secs: 3600.0,
            drop_mean_reverting: true,
            reversal_starts_new: true,
        }
    }
}

impl SegmentationConfig {
    pub fn t_inact_ns(&self) -> i64 {
        (self.t_inact_secs * NS_PER_SEC as f64).round() as i64
    }
}

/// A reconstructed sequence of same-direction child trades by one trader.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaOrder {
    /// Position in the global (t_start, first trade id) order.
    pub id: u64,
    pub trader_id: TraderId,
    /// +1 buy, -1 sell.
    pub sign: i8,
    /// Indices into the tape's trade slice, time-ordered.
    pub child_trades: Vec<usize>,
    /// Exact total child volume |Q| in raw units.
    pub q_raw: i128,
    pub t_start: i64,
    pub t_end: i64,
    /// Participation rate |Q| / V_M over the execution window.
    pub mu_v: f64,
}

impl MetaOrder {
    pub fn n_children(&self) -> usize {
        self.child_trades.len()
    }

    /// Duration in seconds.
    pub fn duration_secs(&self) -> f64 {
        (self.t_end - self.t_start) as f64 / NS_PER_SEC as f64
    }

    pub fn q_btc(&self, meta: &crate::tape::TapeMeta) -> f64 {
        meta.volume_i128_to_f64(self.q_raw)
    }

    /// Execution speed |Q|/T in BTC/s; unset for single-instant metaorders.
    pub fn mu(&self, meta: &crate::tape::TapeMeta) -> Option<f64> {
        let t = self.duration_secs();
        if t > 0.0 {
            Some(self.q_btc(meta) / t)
        } else {
            None
        }
    }

    pub fn window(&self) -> TimeWindow {
        TimeWindow::new(self.t_start, self.t_end)
    }
}

/// Reconstruct all metaorders of a tape. Output is globally ordered by
/// `(t_start, first child trade id)` and ids are positions in that order,
/// deterministically, regardless of worker count.
pub fn segment(tape: &Tape, cfg: &SegmentationConfig) -> Vec<MetaOrder> {
    let trades = tape.trades();
    let mut by_trader: HashMap<TraderId, Vec<usize>> = HashMap::new();
    for (i, t) in trades.iter().enumerate() {
        by_trader.entry(t.aggressor_id).or_default().push(i);
    }
    let mut groups: Vec<(TraderId, Vec<usize>)> = by_trader.into_iter().collect();
    groups.sort_by_key(|(id, _)| *id);

    let index = TapeIndex::new(tape);
    let mut metaorders: Vec<MetaOrder> = groups
        .par_iter()
        .flat_map_iter(|(trader, indices)| segment_trader(tape, *trader, indices, cfg))
        .collect();

    metaorders.sort_by_key(|m| (m.t_start, trades[m.child_trades[0]].trade_id));
    for (i, m) in metaorders.iter_mut().enumerate() {
        m.id = i as u64;
        let v_m = index.volume_in(tape, m.window());
        m.mu_v = if v_m > 0 {
            m.q_raw as f64 / v_m as f64
        } else {
            0.0
        };
    }
    metaorders
}

/// One trader's metaorders (structure only; ids and mu_v are filled by the
/// global pass).
fn segment_trader(
    tape: &Tape,
    trader: TraderId,
    indices: &[usize],
    cfg: &SegmentationConfig,
) -> Vec<MetaOrder> {
    let trades = tape.trades();
    let t_inact = cfg.t_inact_ns();
    let mut segments: Vec<Vec<usize>> = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    let mut current_sign = 0i8;

    for &i in indices {
        let t = &trades[i];
        let sign = t.side.sign() as i8;
        if current.is_empty() {
            current.push(i);
            current_sign = sign;
            continue;
        }
        let prev = &trades[*current.last().unwrap()];
        let gap = t.timestamp - prev.timestamp;
        if gap >= t_inact {
            segments.push(std::mem::take(&mut current));
            current.push(i);
            current_sign = sign;
        } else if sign != current_sign {
            segments.push(std::mem::take(&mut current));
            if cfg.reversal_starts_new {
                current.push(i);
                current_sign = sign;
            }
            // else: the reversing trade stays unassigned; the next trade
            // opens a fresh metaorder.
        } else {
            current.push(i);
        }
    }
    if !current.is_empty() {
        segments.push(current);
    }

    let build = |children: &Vec<usize>| -> MetaOrder {
        let first = &trades[children[0]];
        let last = &trades[*children.last().unwrap()];
        let q_raw: i128 = children.iter().map(|&i| trades[i].volume as i128).sum();
        MetaOrder {
            id: 0,
            trader_id: trader,
            sign: first.side.sign() as i8,
            child_trades: children.clone(),
            q_raw,
            t_start: first.timestamp,
            t_end: last.timestamp,
            mu_v: 0.0,
        }
    };
    let built: Vec<MetaOrder> = segments.iter().map(build).collect();

    if !cfg.drop_mean_reverting {
        return built;
    }
    // Round-trip rule: a metaorder whose opener reverses the previous
    // metaorder less than t_inact after it closed, and whose volume is fully
    // offset (|Q| no larger than the reversed one) within t_inact of that
    // close, is flagged unassigned.
    built
        .iter()
        .enumerate()
        .filter(|(k, m)| {
            if *k == 0 {
                return true;
            }
            let prev = &built[k - 1];
            let reverses = m.sign != prev.sign && m.t_start - prev.t_end < t_inact;
            let offset_in_time = m.t_end - prev.t_end < t_inact;
            !(reverses && offset_in_time && m.q_raw <= prev.q_raw)
        })
        .map(|(_, m)| m.clone())
        .collect()
}

/// Child-count histogram over the buckets `{1, 2-4, 5-9, >=10}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChildCountTable {
    pub counts: [usize; 4],
    pub fractions: [f64; 4],
}

pub const CHILD_COUNT_BUCKETS: [&str; 4] = ["1", "2-4", "5-9", ">=10"];

pub fn child_count_table(metaorders: &[MetaOrder]) -> Result<ChildCountTable, SegmenterError> {
    if metaorders.is_empty() {
        return Err(SegmenterError::EmptyInput);
    }
    let mut counts = [0usize; 4];
    for m in metaorders {
        let bucket = match m.n_children() {
            1 => 0,
            2..=4 => 1,
            5..=9 => 2,
            _ => 3,
        };
        counts[bucket] += 1;
    }
    let total = metaorders.len() as f64;
    let fractions = counts.map(|c| c as f64 / total);
    Ok(ChildCountTable { counts, fractions })
}

/// Counts and execution-speed totals of simultaneously active metaorders,
/// sampled on a regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSeries {
    pub t0: i64,
    pub resolution_ns: i64,
    /// Per grid point: (n_buy, n_sell, mu-sum buy in BTC/s, mu-sum sell).
    pub points: Vec<(u32, u32, f64, f64)>,
}

impl ActiveSeries {
    pub fn grid_time(&self, i: usize) -> i64 {
        self.t0 + i as i64 * self.resolution_ns
    }
}

/// A metaorder is active at grid time `t` iff `t_start <= t <= t_end`.
/// Volume rates sum the execution speeds of active metaorders with positive
/// duration.
pub fn active_metaorder_series(
    metaorders: &[MetaOrder],
    tape_meta: &crate::tape::TapeMeta,
    resolution_secs: f64,
) -> Result<ActiveSeries, SegmenterError> {
    if metaorders.is_empty() {
        return Err(SegmenterError::EmptyInput);
    }
    let resolution_ns = (resolution_secs * NS_PER_SEC as f64).round() as i64;
    if resolution_ns <= 0 {
        return Err(SegmenterError::BadResolution);
    }
    let t0 = metaorders.iter().map(|m| m.t_start).min().unwrap();
    let t_max = metaorders.iter().map(|m| m.t_end).max().unwrap();
    let n_points = ((t_max - t0) / resolution_ns) as usize + 1;

    // Difference arrays over grid indices.
    let mut d_count = vec![(0i64, 0i64); n_points + 1];
    let mut d_rate = vec![(0f64, 0f64); n_points + 1];
    for m in metaorders {
        let lo = (m.t_start - t0 + resolution_ns - 1).div_euclid(resolution_ns);
        let hi = (m.t_end - t0).div_euclid(resolution_ns);
        if lo > hi {
            continue; // falls entirely between grid points
        }
        let (lo, hi) = (lo as usize, hi as usize);
        let mu = m.mu(tape_meta).unwrap_or(0.0);
        if m.sign > 0 {
            d_count[lo].0 += 1;
            d_count[hi + 1].0 -= 1;
            d_rate[lo].0 += mu;
            d_rate[hi + 1].0 -= mu;
        } else {
            d_count[lo].1 += 1;
            d_count[hi + 1].1 -= 1;
            d_rate[lo].1 += mu;
            d_rate[hi + 1].1 -= mu;
        }
    }
    let mut points = Vec::with_capacity(n_points);
    let (mut nb, mut ns) = (0i64, 0i64);
    let (mut rb, mut rs) = (0f64, 0f64);
    for i in 0..n_points {
        nb += d_count[i].0;
        ns += d_count[i].1;
        rb += d_rate[i].0;
        rs += d_rate[i].1;
        points.push((nb as u32, ns as u32, rb, rs));
    }
    Ok(ActiveSeries {
        t0,
        resolution_ns,
        points,
    })
}

/// Average executed-volume fraction against normalized elapsed time.
#[derive(Debug, Clone)]
pub struct ExecutionProfile {
    /// Normalized time grid over [0, 1].
    pub grid: Vec<f64>,
    /// Cross-metaorder mean cumulative-volume fraction at each grid point.
    pub mean: Vec<f64>,
    /// Maximum |mean - diagonal| over the grid.
    pub max_abs_deviation: f64,
    pub n: usize,
}

/// Per-metaorder cumulative-volume fraction, linearly interpolated at the
/// grid points and averaged over metaorders with positive duration and at
/// least two children.
///
/// The first fill anchors both the clock and the zero of the fraction (it is
/// the gauge fill of the impact path), so an equal-volume, equally spaced
/// schedule yields exactly the diagonal.
pub fn execution_profile(
    metaorders: &[MetaOrder],
    tape: &Tape,
    n_points: usize,
) -> Result<ExecutionProfile, SegmenterError> {
    let grid: Vec<f64> = (0..n_points)
        .map(|k| k as f64 / (n_points - 1) as f64)
        .collect();
    let trades = tape.trades();
    let mut sums = vec![0.0f64; n_points];
    let mut n = 0usize;
    for m in metaorders {
        if m.t_end <= m.t_start || m.n_children() < 2 {
            continue;
        }
        let v0 = trades[m.child_trades[0]].volume as i128;
        let denom = (m.q_raw - v0) as f64;
        if denom <= 0.0 {
            continue;
        }
        let span = (m.t_end - m.t_start) as f64;
        // Knots (u, F): normalized fill time against post-first-fill
        // cumulative fraction. Fills sharing a timestamp collapse onto the
        // last (completed) fraction.
        let mut knots: Vec<(f64, f64)> = Vec::with_capacity(m.n_children());
        let mut cum: i128 = 0;
        for (j, &idx) in m.child_trades.iter().enumerate() {
            if j > 0 {
                cum += trades[idx].volume as i128;
            }
            let u = (trades[idx].timestamp - m.t_start) as f64 / span;
            let f = cum as f64 / denom;
            match knots.last_mut() {
                Some(last) if last.0 == u => last.1 = f,
                _ => knots.push((u, f)),
            }
        }
        for (k, &u) in grid.iter().enumerate() {
            sums[k] += interp(&knots, u);
        }
        n += 1;
    }
    if n == 0 {
        return Err(SegmenterError::NoEligibleMetaOrders);
    }
    let mean: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
    let max_abs_deviation = grid
        .iter()
        .zip(&mean)
        .map(|(u, m)| (m - u).abs())
        .fold(0.0, f64::max);
    Ok(ExecutionProfile {
        grid,
        mean,
        max_abs_deviation,
        n,
    })
}

fn interp(knots: &[(f64, f64)], u: f64) -> f64 {
    if u <= knots[0].0 {
        return knots[0].1;
    }
    if u >= knots[knots.len() - 1].0 {
        return knots[knots.len() - 1].1;
    }
    let j = knots.partition_point(|&(x, _)| x <= u);
    let (x0, y0) = knots[j - 1];
    let (x1, y1) = knots[j];
    y0 + (y1 - y0) * (u - x0) / (x1 - x0)
}
