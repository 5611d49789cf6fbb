//! CSV ingestion and export.
//!
//! Canonical header:
//! `timestamp,trade_id,aggressor_id,passive_id,side,price,volume,best_bid,best_ask`
//! with `side` in `{B, S}`, timestamps in integer nanoseconds, and empty
//! strings for absent optionals. Column names can be remapped through
//! [`CsvSchema`]; optional columns missing from the header leave the fields
//! unset.

use std::io::{Read, Write};

use super::{ParsedTape, Side, Tape, TapeError, TapeMeta, Trade, TraderId};
use crate::decimal::{format_scaled, parse_scaled};

/// Column map plus the instrument metadata the resulting tape will carry.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub timestamp: String,
    pub trade_id: String,
    pub aggressor_id: String,
    pub passive_id: String,
    pub side: String,
    pub price: String,
    pub volume: String,
    pub best_bid: String,
    pub best_ask: String,
    pub meta: TapeMeta,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            timestamp: "timestamp".into(),
            trade_id: "trade_id".into(),
            aggressor_id: "aggressor_id".into(),
            passive_id: "passive_id".into(),
            side: "side".into(),
            price: "price".into(),
            volume: "volume".into(),
            best_bid: "best_bid".into(),
            best_ask: "best_ask".into(),
            meta: TapeMeta::default(),
        }
    }
}

struct Columns {
    timestamp: usize,
    trade_id: usize,
    aggressor_id: usize,
    passive_id: Option<usize>,
    side: usize,
    price: usize,
    volume: usize,
    best_bid: Option<usize>,
    best_ask: Option<usize>,
}

impl Columns {
    fn resolve(headers: &csv::StringRecord, schema: &CsvSchema) -> Result<Self, TapeError> {
        let find = |name: &str| headers.iter().position(|h| h == name);
        let require = |name: &str| {
            find(name).ok_or_else(|| TapeError::MissingColumn(name.to_string()))
        };
        Ok(Columns {
            timestamp: require(&schema.timestamp)?,
            trade_id: require(&schema.trade_id)?,
            aggressor_id: require(&schema.aggressor_id)?,
            passive_id: find(&schema.passive_id),
            side: require(&schema.side)?,
            price: require(&schema.price)?,
            volume: require(&schema.volume)?,
            best_bid: find(&schema.best_bid),
            best_ask: find(&schema.best_ask),
        })
    }
}

fn malformed(line: u64, message: impl Into<String>) -> TapeError {
    TapeError::MalformedRow {
        line,
        message: message.into(),
    }
}

fn field<'r>(record: &'r csv::StringRecord, idx: usize, name: &str, line: u64) -> Result<&'r str, TapeError> {
    record
        .get(idx)
        .ok_or_else(|| malformed(line, format!("missing field {name}")))
}

/// Parse a UTF-8 CSV stream into a canonical tape.
///
/// Rows out of time order are sorted with a warning counter; a duplicate
/// `trade_id` is a hard error naming both lines.
pub fn parse_csv<R: Read>(source: R, schema: &CsvSchema) -> Result<ParsedTape, TapeError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(source);
    let headers = reader
        .headers()
        .map_err(|e| malformed(1, format!("bad header: {e}")))?
        .clone();
    let cols = Columns::resolve(&headers, schema)?;

    let mut rows: Vec<Trade> = Vec::new();
    let mut lines: Vec<u64> = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let at_line = reader.position().line();
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(malformed(at_line, e.to_string())),
        }
        let line = record.position().map_or(at_line, |p| p.line());
        rows.push(parse_row(&record, &cols, schema, line)?);
        lines.push(line);
    }
    Tape::from_rows(schema.meta.clone(), rows, &lines)
}

fn parse_row(
    record: &csv::StringRecord,
    cols: &Columns,
    schema: &CsvSchema,
    line: u64,
) -> Result<Trade, TapeError> {
    let meta = &schema.meta;
    let timestamp: i64 = field(record, cols.timestamp, "timestamp", line)?
        .trim()
        .parse()
        .map_err(|_| malformed(line, "timestamp is not an integer"))?;
    let trade_id: u64 = field(record, cols.trade_id, "trade_id", line)?
        .trim()
        .parse()
        .map_err(|_| malformed(line, "trade_id is not a non-negative integer"))?;
    let aggressor_id = parse_trader(field(record, cols.aggressor_id, "aggressor_id", line)?, line)?
        .ok_or_else(|| malformed(line, "aggressor_id is empty"))?;
    let passive_id = match cols.passive_id {
        Some(idx) => parse_trader(field(record, idx, "passive_id", line)?, line)?,
        None => None,
    };
    let side = match field(record, cols.side, "side", line)?.trim() {
        "B" => Side::Buy,
        "S" => Side::Sell,
        other => return Err(malformed(line, format!("side must be B or S, got {other:?}"))),
    };
    let price = parse_scaled(field(record, cols.price, "price", line)?, meta.price_exponent)
        .map_err(|e| malformed(line, format!("price: {e}")))?;
    if price <= 0 {
        return Err(malformed(line, "price must be positive"));
    }
    let volume = parse_scaled(field(record, cols.volume, "volume", line)?, meta.volume_exponent)
        .map_err(|e| malformed(line, format!("volume: {e}")))?;
    if volume <= 0 {
        return Err(malformed(line, "volume must be positive"));
    }
    let best_bid = parse_opt_price(record, cols.best_bid, meta, "best_bid", line)?;
    let best_ask = parse_opt_price(record, cols.best_ask, meta, "best_ask", line)?;

    Ok(Trade {
        timestamp,
        trade_id,
        aggressor_id,
        passive_id,
        side,
        price,
        volume,
        best_bid,
        best_ask,
    })
}

fn parse_trader(text: &str, line: u64) -> Result<Option<TraderId>, TapeError> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(None);
    }
    text.parse::<u32>()
        .map(|id| Some(TraderId(id)))
        .map_err(|_| malformed(line, format!("trader id {text:?} is not a 32-bit integer")))
}

fn parse_opt_price(
    record: &csv::StringRecord,
    idx: Option<usize>,
    meta: &TapeMeta,
    name: &str,
    line: u64,
) -> Result<Option<i64>, TapeError> {
    let Some(idx) = idx else { return Ok(None) };
    let text = field(record, idx, name, line)?.trim();
    if text.is_empty() {
        return Ok(None);
    }
    let raw = parse_scaled(text, meta.price_exponent)
        .map_err(|e| malformed(line, format!("{name}: {e}")))?;
    if raw <= 0 {
        return Err(malformed(line, format!("{name} must be positive")));
    }
    Ok(Some(raw))
}

/// Write a tape using the canonical header and column order.
pub fn write_csv<W: Write>(tape: &Tape, out: W) -> Result<(), TapeError> {
    let meta = tape.meta();
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "timestamp",
        "trade_id",
        "aggressor_id",
        "passive_id",
        "side",
        "price",
        "volume",
        "best_bid",
        "best_ask",
    ])
    .map_err(io_like)?;
    for t in tape.trades() {
        let opt_price = |p: Option<i64>| p.map_or(String::new(), |v| format_scaled(v, meta.price_exponent));
        w.write_record([
            t.timestamp.to_string(),
            t.trade_id.to_string(),
            t.aggressor_id.to_string(),
            t.passive_id.map_or(String::new(), |p| p.to_string()),
            match t.side {
                Side::Buy => "B".to_string(),
                Side::Sell => "S".to_string(),
            },
            format_scaled(t.price, meta.price_exponent),
            format_scaled(t.volume, meta.volume_exponent),
            opt_price(t.best_bid),
            opt_price(t.best_ask),
        ])
        .map_err(io_like)?;
    }
    w.flush()?;
    Ok(())
}

fn io_like(e: csv::Error) -> TapeError {
    TapeError::Io(std::io::Error::other(e))
}
