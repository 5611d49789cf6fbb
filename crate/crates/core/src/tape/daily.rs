//! Per-day aggregates: exact traded volume and realized volatility.

use chrono::NaiveDate;
use serde::Serialize;

use super::{Tape, TapeError, NS_PER_DAY, NS_PER_SEC};

const BIN_NS: i64 = 300 * NS_PER_SEC; // 5-minute bins

/// Realized-volatility estimator choice, recorded in outputs so alternative
/// estimators can be compared later.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VolEstimator {
    /// Square root of the sum of squared close-to-close log returns of the
    /// last trade price in 5-minute bins, within the day.
    CloseToClose5Min,
}

/// One UTC calendar day of tape activity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DailyAggregate {
    pub date: NaiveDate,
    /// Days since the Unix epoch (the grouping key).
    pub day_index: i64,
    /// Exact traded volume in raw units.
    pub v_d_raw: i128,
    /// Daily realized volatility, dimensionless.
    pub sigma_d: f64,
    pub n_trades: usize,
    pub estimator: VolEstimator,
}

impl DailyAggregate {
    pub fn v_d(&self, meta: &super::TapeMeta) -> f64 {
        meta.volume_i128_to_f64(self.v_d_raw)
    }
}

fn date_of_day_index(day_index: i64) -> NaiveDate {
    NaiveDate::from_num_days_from_ce_opt(day_index as i32 + 719_163)
        .expect("day index out of chrono range")
}

/// One record per UTC day containing at least one trade. `sigma_d` is the
/// close-to-close realized volatility over 5-minute bins; `v_d_raw` is the
/// exact volume sum, so the total over all days equals the tape total.
pub fn daily_aggregates(tape: &Tape, _estimator: VolEstimator) -> Result<Vec<DailyAggregate>, TapeError> {
    if tape.is_empty() {
        return Err(TapeError::EmptyTape);
    }
    let mut out: Vec<DailyAggregate> = Vec::new();
    let mut current_day = i64::MIN;
    let mut v_d_raw: i128 = 0;
    let mut n_trades = 0usize;
    // (bin index, last price in bin) for bins that saw trades, in order.
    let mut bin_closes: Vec<(i64, i64)> = Vec::new();

    let flush = |day: i64, v: i128, n: usize, closes: &mut Vec<(i64, i64)>, out: &mut Vec<DailyAggregate>| {
        if n == 0 {
            return;
        }
        let mut sq_sum = 0.0f64;
        for pair in closes.windows(2) {
            let r = (pair[1].1 as f64 / pair[0].1 as f64).ln();
            sq_sum += r * r;
        }
        out.push(DailyAggregate {
            date: date_of_day_index(day),
            day_index: day,
            v_d_raw: v,
            sigma_d: sq_sum.sqrt(),
            n_trades: n,
            estimator: VolEstimator::CloseToClose5Min,
        });
        closes.clear();
    };

    for t in tape.trades() {
        let day = t.timestamp.div_euclid(NS_PER_DAY);
        if day != current_day {
            flush(current_day, v_d_raw, n_trades, &mut bin_closes, &mut out);
            current_day = day;
            v_d_raw = 0;
            n_trades = 0;
        }
        v_d_raw += t.volume as i128;
        n_trades += 1;
        let bin = (t.timestamp - day * NS_PER_DAY) / BIN_NS;
        match bin_closes.last_mut() {
            Some(last) if last.0 == bin => last.1 = t.price,
            _ => bin_closes.push((bin, t.price)),
        }
    }
    flush(current_day, v_d_raw, n_trades, &mut bin_closes, &mut out);
    Ok(out)
}
