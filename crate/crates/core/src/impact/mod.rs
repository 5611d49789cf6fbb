//! Impact measurement: trajectories, per-metaorder summaries, binned peak
//! curves, daily liquidity, the impact surface, isolation labeling, and
//! event studies.
//!
//! Impact is measured in signed log-returns `s * log(p / p_first)`, which
//! makes sign symmetry and price-scale invariance exact.

mod curve;
mod event_study;
mod isolate;
mod liquidity;
mod surface;

pub use curve::{fit_peak_curve, peak_impact_curve, CurvePoint, LogBins, PeakImpactCurve};
pub use event_study::{
    event_study, BucketSpec, CurveSet, EventStudyConfig, EventStudyCurve,
};
pub use isolate::{select_isolated, IsolationConfig, IsolationLabel};
pub use liquidity::{daily_liquidity_series, DailyLiquidity};
pub use surface::{impact_surface, ImpactSurface, SurfaceBinning, SurfaceCell, SurfaceFit};

use rayon::prelude::*;
use thiserror::Error;

use crate::segmenter::MetaOrder;
use crate::tape::{Tape, TapeIndex, TimeWindow, NS_PER_SEC};

#[derive(Debug, Error, PartialEq)]
pub enum ImpactError {
    #[error("no input metaorders")]
    EmptyInput,
    #[error("every bin holds fewer than {n_min} entries")]
    AllBinsUnderPopulated { n_min: usize },
}

/// One point of an impact trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpactSample {
    pub metaorder_id: u64,
    /// Executed-volume fraction in [0, 1].
    pub r: f64,
    /// Signed log-return `s * log(p(r) / p_first)`; exactly 0 at r = 0.
    pub impact: f64,
    /// Elapsed seconds at the sampled fill.
    pub clock: f64,
}

/// An impact trajectory sampled on an even volume-fraction grid.
#[derive(Debug, Clone)]
pub struct ImpactPath {
    pub metaorder_id: u64,
    /// |Q| in BTC, for volume placement of in-trajectory points.
    pub q_btc: f64,
    pub samples: Vec<ImpactSample>,
}

/// Sample the impact trajectory at `n_points` even volume quantiles
/// (`r = 0, 1/(n-1), ..., 1`). The impact at quantile `r` is the signed
/// log-return of the fill price at which cumulative child volume first
/// reaches `r * |Q|`, against the first fill price.
pub fn impact_path(tape: &Tape, metaorder: &MetaOrder, n_points: usize) -> ImpactPath {
    assert!(n_points >= 2, "need at least the r = 0 and r = 1 samples");
    let trades = tape.trades();
    let children = &metaorder.child_trades;
    let first = &trades[children[0]];
    let p0 = first.price as f64;
    let sign = metaorder.sign as f64;
    let denom = (n_points - 1) as i128;

    let mut samples = Vec::with_capacity(n_points);
    let mut j = 0usize; // fill pointer
    let mut cum: i128 = trades[children[0]].volume as i128;
    for k in 0..n_points {
        // First fill j with cum_j * (n-1) >= k * |Q|, in exact integers.
        while cum * denom < k as i128 * metaorder.q_raw {
            j += 1;
            cum += trades[children[j]].volume as i128;
        }
        let fill = &trades[children[j]];
        let impact = if k == 0 {
            0.0 // gauge
        } else {
            sign * (fill.price as f64 / p0).ln()
        };
        samples.push(ImpactSample {
            metaorder_id: metaorder.id,
            r: k as f64 / (n_points - 1) as f64,
            impact,
            clock: (fill.timestamp - metaorder.t_start) as f64 / NS_PER_SEC as f64,
        });
    }
    ImpactPath {
        metaorder_id: metaorder.id,
        q_btc: metaorder.q_btc(tape.meta()),
        samples,
    }
}

/// Scalar impact measures of one metaorder.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpactSummary {
    pub metaorder_id: u64,
    pub sign: i8,
    /// |Q| in BTC.
    pub q_btc: f64,
    pub mu_v: f64,
    /// Execution speed in BTC/s; unset when the duration is zero.
    pub mu: Option<f64>,
    pub t_start: i64,
    pub t_end: i64,
    pub n_children: usize,
    /// Peak impact: trajectory value at r = 1.
    pub peak: f64,
    /// Execution impact: the exact volume-weighted mean of fill impacts,
    /// i.e. the integral of the (step) trajectory over r.
    pub exec: f64,
    /// Permanent impact: signed log-return from the first fill to the mean
    /// traded price over `[t_end + 9T, t_end + 10T]`. Unset for zero-duration
    /// metaorders, or when the window leaves the tape or holds no trades.
    pub perm: Option<f64>,
    /// Mechanical permanent impact, exactly `peak - perm`.
    pub perm_mech: Option<f64>,
}

/// Compute the scalar impact measures of one metaorder.
pub fn summarize(tape: &Tape, index: &TapeIndex, metaorder: &MetaOrder) -> ImpactSummary {
    let trades = tape.trades();
    let children = &metaorder.child_trades;
    let p0 = trades[children[0]].price as f64;
    let sign = metaorder.sign as f64;

    let last = &trades[*children.last().unwrap()];
    let peak = sign * (last.price as f64 / p0).ln();

    let mut exec = 0.0;
    for &i in children {
        let t = &trades[i];
        exec += t.volume as f64 * (t.price as f64 / p0).ln();
    }
    exec *= sign / metaorder.q_raw as f64;

    let duration = metaorder.t_end - metaorder.t_start;
    let perm = if duration > 0 {
        let window = TimeWindow::new(
            metaorder.t_end + 9 * duration,
            metaorder.t_end + 10 * duration,
        );
        let inside = tape
            .time_range()
            .is_some_and(|(_, last_ts)| window.end <= last_ts);
        if inside {
            index
                .vwap_in(tape, window)
                .map(|vwap| sign * (vwap / p0).ln())
        } else {
            None
        }
    } else {
        None
    };

    ImpactSummary {
        metaorder_id: metaorder.id,
        sign: metaorder.sign,
        q_btc: metaorder.q_btc(tape.meta()),
        mu_v: metaorder.mu_v,
        mu: metaorder.mu(tape.meta()),
        t_start: metaorder.t_start,
        t_end: metaorder.t_end,
        n_children: metaorder.n_children(),
        peak,
        exec,
        perm,
        perm_mech: perm.map(|p| peak - p),
    }
}

/// Summaries for a whole metaorder population, in input order. Per-metaorder
/// work runs in parallel; the result does not depend on the worker count.
pub fn summarize_all(tape: &Tape, index: &TapeIndex, metaorders: &[MetaOrder]) -> Vec<ImpactSummary> {
    metaorders
        .par_iter()
        .map(|m| summarize(tape, index, m))
        .collect()
}

/// Impact paths for a whole population, in input order.
pub fn impact_paths(tape: &Tape, metaorders: &[MetaOrder], n_points: usize) -> Vec<ImpactPath> {
    metaorders
        .par_iter()
        .map(|m| impact_path(tape, m, n_points))
        .collect()
}

/// Exact signed market-order volume `sum(v_i * epsilon_i)` over the closed
/// window, in raw units (prefix-sum implementation).
pub fn market_imbalance(tape: &Tape, index: &TapeIndex, window: TimeWindow) -> i128 {
    index.signed_volume_in(tape, window)
}
