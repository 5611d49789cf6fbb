//! Plot-ready CSV and JSON artifact writers.

use std::io::Write;

use crate::impact::{
    DailyLiquidity, EventStudyCurve, ImpactSummary, ImpactSurface, PeakImpactCurve,
};
use crate::segmenter::{ChildCountTable, ExecutionProfile, MetaOrder, CHILD_COUNT_BUCKETS};
use crate::tape::{DailyAggregate, Tape, TapeMeta};

type IoResult = std::io::Result<()>;

/// Metaorder table: `id, trader_id, sign, Q, t_start, t_end, T, mu, mu_V,
/// n_children`. Q in BTC; `mu` empty when the duration is zero.
pub fn write_metaorders<W: Write>(out: &mut W, metaorders: &[MetaOrder], tape: &Tape) -> IoResult {
    writeln!(out, "id,trader_id,sign,Q,t_start,t_end,T,mu,mu_V,n_children")?;
    let meta = tape.meta();
    for m in metaorders {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            m.id,
            m.trader_id,
            m.sign,
            fmt(m.q_btc(meta)),
            m.t_start,
            m.t_end,
            fmt(m.duration_secs()),
            m.mu(meta).map_or(String::new(), fmt),
            fmt(m.mu_v),
            m.n_children()
        )?;
    }
    Ok(())
}

/// Per-metaorder impact summary table.
pub fn write_summaries<W: Write>(out: &mut W, summaries: &[ImpactSummary]) -> IoResult {
    writeln!(out, "metaorder_id,sign,Q,mu_V,n_children,peak,exec,perm,perm_mech")?;
    for s in summaries {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            s.metaorder_id,
            s.sign,
            fmt(s.q_btc),
            fmt(s.mu_v),
            s.n_children,
            fmt(s.peak),
            fmt(s.exec),
            s.perm.map_or(String::new(), fmt),
            s.perm_mech.map_or(String::new(), fmt)
        )?;
    }
    Ok(())
}

/// Peak-impact curve: `bin_center, mean, stderr, n`.
pub fn write_peak_curve<W: Write>(out: &mut W, curve: &PeakImpactCurve) -> IoResult {
    writeln!(out, "q_bin_center,mean_impact,stderr,n")?;
    for p in &curve.points {
        writeln!(out, "{},{},{},{}", fmt(p.center), fmt(p.mean), fmt(p.stderr), p.n)?;
    }
    Ok(())
}

/// Daily aggregates: `date, v_d, sigma_d, n_trades`.
pub fn write_daily_aggregates<W: Write>(
    out: &mut W,
    days: &[DailyAggregate],
    meta: &TapeMeta,
) -> IoResult {
    writeln!(out, "date,v_d,sigma_d,n_trades")?;
    for d in days {
        writeln!(
            out,
            "{},{},{},{}",
            d.date,
            fmt(d.v_d(meta)),
            fmt(d.sigma_d),
            d.n_trades
        )?;
    }
    Ok(())
}

/// Daily liquidity series: `date, y_tilde, sigma_d, v_d, y_ratio, n`.
pub fn write_daily_liquidity<W: Write>(out: &mut W, series: &[DailyLiquidity]) -> IoResult {
    writeln!(out, "date,y_tilde,sigma_d,v_d,y_ratio,n_metaorders")?;
    for d in series {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            d.date,
            fmt(d.y_tilde),
            fmt(d.sigma_d),
            fmt(d.v_d),
            d.y_ratio.map_or(String::new(), fmt),
            d.n_metaorders
        )?;
    }
    Ok(())
}

/// Impact surface in long format: `q_bin, muv_bin, mean_exec,
/// mean_imbalance, n`, one row per unmasked cell.
pub fn write_surface<W: Write>(out: &mut W, surface: &ImpactSurface) -> IoResult {
    writeln!(out, "q_bin,muv_bin,q_center,muv_center,mean_exec,mean_imbalance,n")?;
    for c in &surface.cells {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            c.q_bin,
            c.muv_bin,
            fmt(c.q_center),
            fmt(c.muv_center),
            fmt(c.mean_exec),
            fmt(c.mean_imbalance),
            c.n
        )?;
    }
    Ok(())
}

/// Event-study curves in long format: `bucket, grid_t, curve_name, value, n`.
pub fn write_event_study<W: Write>(out: &mut W, curves: &[EventStudyCurve]) -> IoResult {
    writeln!(out, "bucket,grid_t,curve_name,value,n")?;
    for c in curves {
        let mut emit = |name: &str, values: &[f64], n: usize| -> IoResult {
            for (k, v) in values.iter().enumerate() {
                writeln!(out, "{},{},{},{},{}", c.bucket, fmt(c.grid[k]), name, fmt(*v), n)?;
            }
            Ok(())
        };
        emit("traded", &c.curves.traded, c.n)?;
        emit("best_bid", &c.curves.best_bid, c.n_quotes)?;
        emit("best_ask", &c.curves.best_ask, c.n_quotes)?;
        emit("vwap", &c.curves.vwap, c.n)?;
        emit("total_flow", &c.curves.total_flow, c.n)?;
        emit("residual_flow", &c.curves.residual_flow, c.n)?;
        emit("own_volume", &c.curves.own_volume, c.n)?;
    }
    Ok(())
}

/// Child-count histogram: `bucket, count, fraction`.
pub fn write_child_counts<W: Write>(out: &mut W, table: &ChildCountTable) -> IoResult {
    writeln!(out, "bucket,count,fraction")?;
    for (i, name) in CHILD_COUNT_BUCKETS.iter().enumerate() {
        writeln!(out, "{},{},{}", name, table.counts[i], fmt(table.fractions[i]))?;
    }
    Ok(())
}

/// Execution profile: `grid_t, mean_fraction`.
pub fn write_execution_profile<W: Write>(out: &mut W, profile: &ExecutionProfile) -> IoResult {
    writeln!(out, "grid_t,mean_fraction")?;
    for (u, m) in profile.grid.iter().zip(&profile.mean) {
        writeln!(out, "{},{}", fmt(*u), fmt(*m))?;
    }
    Ok(())
}

/// Shortest round-trippable decimal rendering.
pub fn fmt(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{x:.1}")
    } else {
        format!("{x}")
    }
}
