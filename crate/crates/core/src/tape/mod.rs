//! Trade-tape data model: the canonical, immutable record of what traded.
//!
//! A [`Tape`] is a fully time-ordered sequence of [`Trade`]s plus instrument
//! metadata. Prices and volumes are scaled 64-bit integers (see
//! [`crate::decimal`]) so downstream volume sums are exact. Construction
//! canonicalizes input order, repairs timestamp inversions with a warning
//! counter, and rejects duplicate trade ids.

mod binary;
mod csv_io;
mod daily;

pub use binary::{parse_binary, write_binary, BINARY_MAGIC, BINARY_RECORD_LEN, BINARY_VERSION};
pub use csv_io::{parse_csv, write_csv, CsvSchema};
pub use daily::{daily_aggregates, DailyAggregate, VolEstimator};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const NS_PER_SEC: i64 = 1_000_000_000;
pub const NS_PER_DAY: i64 = 86_400 * NS_PER_SEC;

/// Opaque numeric trader identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TraderId(pub u32);

impl std::fmt::Display for TraderId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// Aggressor direction of a trade. The trade sign is the aggressor's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    /// +1 for an aggressive buy, -1 for an aggressive sell.
    pub fn sign(self) -> i64 {
        match self {
            Side::Buy => 1,
            Side::Sell => -1,
        }
    }

    pub fn flipped(self) -> Side {
        match self {
            Side::Buy => Side::Sell,
            Side::Sell => Side::Buy,
        }
    }
}

/// One tape row. `price` and `volume` are raw scaled integers under the
/// exponents declared in [`TapeMeta`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trade {
    /// Nanoseconds since the Unix epoch.
    pub timestamp: i64,
    /// Unique within a tape.
    pub trade_id: u64,
    pub aggressor_id: TraderId,
    pub passive_id: Option<TraderId>,
    pub side: Side,
    pub price: i64,
    pub volume: i64,
    /// Best bid sampled immediately before the trade, if recorded.
    pub best_bid: Option<i64>,
    /// Best ask sampled immediately before the trade, if recorded.
    pub best_ask: Option<i64>,
}

impl Trade {
    /// Signed volume `v * epsilon` in raw units.
    pub fn signed_volume(&self) -> i64 {
        self.volume * self.side.sign()
    }
}

/// Instrument metadata shared by every trade of a tape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TapeMeta {
    pub instrument: String,
    /// Tick size in raw price units (1 = one unit of the price exponent).
    pub tick_size: i64,
    pub time_zone: String,
    /// `price = raw * 10^price_exponent`.
    pub price_exponent: i8,
    /// `volume = raw * 10^volume_exponent`.
    pub volume_exponent: i8,
}

impl Default for TapeMeta {
    fn default() -> Self {
        TapeMeta {
            instrument: "BTCUSD".to_string(),
            tick_size: 1,
            time_zone: "UTC".to_string(),
            price_exponent: -5,
            volume_exponent: -8,
        }
    }
}

impl TapeMeta {
    pub fn price_to_f64(&self, raw: i64) -> f64 {
        crate::decimal::to_f64(raw, self.price_exponent)
    }

    pub fn volume_to_f64(&self, raw: i64) -> f64 {
        crate::decimal::to_f64(raw, self.volume_exponent)
    }

    pub fn volume_i128_to_f64(&self, raw: i128) -> f64 {
        crate::decimal::i128_to_f64(raw, self.volume_exponent)
    }
}

/// Closed time interval `[start, end]` in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeWindow {
    pub start: i64,
    pub end: i64,
}

impl TimeWindow {
    pub fn new(start: i64, end: i64) -> Self {
        TimeWindow { start, end }
    }

    pub fn contains(&self, t: i64) -> bool {
        self.start <= t && t <= self.end
    }
}

#[derive(Debug, Error)]
pub enum TapeError {
    #[error("line {line}: {message}")]
    MalformedRow { line: u64, message: String },
    #[error("duplicate trade_id {trade_id} (lines {first_line} and {second_line})")]
    DuplicateTradeId {
        trade_id: u64,
        first_line: u64,
        second_line: u64,
    },
    #[error("missing required column {0:?}")]
    MissingColumn(String),
    #[error("bad magic bytes (expected IMPT)")]
    BadMagic,
    #[error("unsupported binary version {0}")]
    VersionMismatch(u16),
    #[error("truncated record: {trailing} trailing bytes after {records} records")]
    TruncatedRecord { records: usize, trailing: usize },
    #[error("tape is empty")]
    EmptyTape,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Non-fatal observations collected while building a tape.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ParseReport {
    /// Rows accepted.
    pub rows: usize,
    /// Rows that arrived with a timestamp below the running maximum and were
    /// repositioned by the canonical sort.
    pub reorder_warnings: usize,
    /// Rows whose price is inconsistent with the attached best bid/ask beyond
    /// one tick, or whose quotes are crossed. Advisory only.
    pub quote_warnings: usize,
}

/// A canonical tape plus the report produced while parsing it.
#[derive(Debug, Clone)]
pub struct ParsedTape {
    pub tape: Tape,
    pub report: ParseReport,
}

/// Immutable, fully ordered trade tape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tape {
    meta: TapeMeta,
    trades: Vec<Trade>,
}

impl Tape {
    /// Canonicalize raw rows into a tape: sort by `(timestamp, trade_id)`,
    /// reject duplicate ids, count inversion and quote warnings. `lines`
    /// carries the 1-based source line of each row for error messages; pass
    /// an empty slice when rows have no source lines.
    pub fn from_rows(
        meta: TapeMeta,
        mut rows: Vec<Trade>,
        lines: &[u64],
    ) -> Result<ParsedTape, TapeError> {
        let line_of = |idx: usize| lines.get(idx).copied().unwrap_or(idx as u64 + 1);

        let mut reorder_warnings = 0usize;
        let mut max_ts = i64::MIN;
        for t in &rows {
            if t.timestamp < max_ts {
                reorder_warnings += 1;
            } else {
                max_ts = t.timestamp;
            }
        }

        let already_sorted = rows
            .windows(2)
            .all(|w| (w[0].timestamp, w[0].trade_id) <= (w[1].timestamp, w[1].trade_id));
        if already_sorted {
            for (i, w) in rows.windows(2).enumerate() {
                if w[0].trade_id == w[1].trade_id {
                    return Err(TapeError::DuplicateTradeId {
                        trade_id: w[0].trade_id,
                        first_line: line_of(i),
                        second_line: line_of(i + 1),
                    });
                }
            }
        } else {
            // Stable sort over an index permutation so source lines follow rows.
            let mut order: Vec<usize> = (0..rows.len()).collect();
            order.sort_by_key(|&i| (rows[i].timestamp, rows[i].trade_id));
            for w in order.windows(2) {
                let (a, b) = (&rows[w[0]], &rows[w[1]]);
                if a.trade_id == b.trade_id {
                    return Err(TapeError::DuplicateTradeId {
                        trade_id: a.trade_id,
                        first_line: line_of(w[0].min(w[1])),
                        second_line: line_of(w[0].max(w[1])),
                    });
                }
            }
            let sorted: Vec<Trade> = order.iter().map(|&i| rows[i]).collect();
            rows = sorted;
        }

        let mut quote_warnings = 0usize;
        for t in &rows {
            if let (Some(bid), Some(ask)) = (t.best_bid, t.best_ask) {
                let crossed = bid >= ask;
                let off_quote = match t.side {
                    Side::Buy => t.price < ask - meta.tick_size,
                    Side::Sell => t.price > bid + meta.tick_size,
                };
                if crossed || off_quote {
                    quote_warnings += 1;
                }
            }
        }

        let report = ParseReport {
            rows: rows.len(),
            reorder_warnings,
            quote_warnings,
        };
        Ok(ParsedTape {
            tape: Tape { meta, trades: rows },
            report,
        })
    }

    pub fn meta(&self) -> &TapeMeta {
        &self.meta
    }

    pub fn trades(&self) -> &[Trade] {
        &self.trades
    }

    pub fn len(&self) -> usize {
        self.trades.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trades.is_empty()
    }

    /// Timestamps of the first and last trade.
    pub fn time_range(&self) -> Option<(i64, i64)> {
        match (self.trades.first(), self.trades.last()) {
            (Some(a), Some(b)) => Some((a.timestamp, b.timestamp)),
            _ => None,
        }
    }

    /// Exact total traded volume in raw units.
    pub fn total_volume(&self) -> i128 {
        self.trades.iter().map(|t| t.volume as i128).sum()
    }

    /// Index of the first trade with `timestamp >= t`.
    pub fn lower_bound(&self, t: i64) -> usize {
        self.trades.partition_point(|tr| tr.timestamp < t)
    }

    /// Index one past the last trade with `timestamp <= t`.
    pub fn upper_bound(&self, t: i64) -> usize {
        self.trades.partition_point(|tr| tr.timestamp <= t)
    }

    /// Contiguous index range of trades inside the closed window.
    pub fn window_range(&self, window: TimeWindow) -> std::ops::Range<usize> {
        self.lower_bound(window.start)..self.upper_bound(window.end)
    }
}

/// Prefix-sum index over a tape for O(log n) exact windowed volume queries.
#[derive(Debug, Clone)]
pub struct TapeIndex {
    cum_volume: Vec<i128>,
    cum_signed: Vec<i128>,
    cum_price_volume: Vec<i128>,
}

impl TapeIndex {
    pub fn new(tape: &Tape) -> Self {
        let n = tape.len();
        let mut cum_volume = Vec::with_capacity(n + 1);
        let mut cum_signed = Vec::with_capacity(n + 1);
        let mut cum_price_volume = Vec::with_capacity(n + 1);
        cum_volume.push(0i128);
        cum_signed.push(0i128);
        cum_price_volume.push(0i128);
        for t in tape.trades() {
            cum_volume.push(cum_volume.last().unwrap() + t.volume as i128);
            cum_signed.push(cum_signed.last().unwrap() + t.signed_volume() as i128);
            cum_price_volume
                .push(cum_price_volume.last().unwrap() + t.price as i128 * t.volume as i128);
        }
        TapeIndex {
            cum_volume,
            cum_signed,
            cum_price_volume,
        }
    }

    /// Exact total volume over the closed window, in raw units.
    pub fn volume_in(&self, tape: &Tape, window: TimeWindow) -> i128 {
        let r = tape.window_range(window);
        self.cum_volume[r.end] - self.cum_volume[r.start]
    }

    /// Exact signed volume (sum of `v * epsilon`) over the closed window.
    pub fn signed_volume_in(&self, tape: &Tape, window: TimeWindow) -> i128 {
        let r = tape.window_range(window);
        self.cum_signed[r.end] - self.cum_signed[r.start]
    }

    /// Volume-weighted mean traded price over the closed window, in raw price
    /// units. `None` when the window holds no trades.
    pub fn vwap_in(&self, tape: &Tape, window: TimeWindow) -> Option<f64> {
        let r = tape.window_range(window);
        let v = self.cum_volume[r.end] - self.cum_volume[r.start];
        if v == 0 {
            return None;
        }
        let pv = self.cum_price_volume[r.end] - self.cum_price_volume[r.start];
        Some(pv as f64 / v as f64)
    }

    /// Prefix volume through trade index `i` (exclusive), raw units.
    pub fn cum_volume_at(&self, i: usize) -> i128 {
        self.cum_volume[i]
    }

    /// Prefix signed volume through trade index `i` (exclusive), raw units.
    pub fn cum_signed_at(&self, i: usize) -> i128 {
        self.cum_signed[i]
    }

    /// Prefix price*volume through trade index `i` (exclusive).
    pub fn cum_price_volume_at(&self, i: usize) -> i128 {
        self.cum_price_volume[i]
    }
}
