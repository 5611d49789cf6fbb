//! Fixed-width binary tape format.
//!
//! Layout: magic `IMPT`, version `u16`, price and volume decimal exponents
//! (`i8` each), then 64-byte little-endian records in the CSV column order.
//! Absent optionals are encoded as all-ones sentinels.

use std::io::{Read, Write};

use super::{ParsedTape, Side, Tape, TapeError, TapeMeta, Trade, TraderId};

pub const BINARY_MAGIC: [u8; 4] = *b"IMPT";
pub const BINARY_VERSION: u16 = 1;
pub const BINARY_RECORD_LEN: usize = 64;

const HEADER_LEN: usize = 8;
const PASSIVE_ABSENT: u32 = u32::MAX;
const PRICE_ABSENT: i64 = -1; // all-ones two's complement

/// Record layout (offsets in bytes):
/// 0 timestamp i64, 8 trade_id u64, 16 aggressor_id u32, 20 passive_id u32,
/// 24 side u8 (0 buy / 1 sell), 25..32 zero padding, 32 price i64,
/// 40 volume i64, 48 best_bid i64, 56 best_ask i64.
fn encode_record(t: &Trade, buf: &mut [u8; BINARY_RECORD_LEN]) {
    buf.fill(0);
    buf[0..8].copy_from_slice(&t.timestamp.to_le_bytes());
    buf[8..16].copy_from_slice(&t.trade_id.to_le_bytes());
    buf[16..20].copy_from_slice(&t.aggressor_id.0.to_le_bytes());
    let passive = t.passive_id.map_or(PASSIVE_ABSENT, |p| p.0);
    buf[20..24].copy_from_slice(&passive.to_le_bytes());
    buf[24] = match t.side {
        Side::Buy => 0,
        Side::Sell => 1,
    };
    buf[32..40].copy_from_slice(&t.price.to_le_bytes());
    buf[40..48].copy_from_slice(&t.volume.to_le_bytes());
    buf[48..56].copy_from_slice(&t.best_bid.unwrap_or(PRICE_ABSENT).to_le_bytes());
    buf[56..64].copy_from_slice(&t.best_ask.unwrap_or(PRICE_ABSENT).to_le_bytes());
}

fn decode_record(buf: &[u8], record_index: usize) -> Result<Trade, TapeError> {
    let read_i64 = |o: usize| i64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
    let read_u64 = |o: usize| u64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
    let read_u32 = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());

    let side = match buf[24] {
        0 => Side::Buy,
        1 => Side::Sell,
        other => {
            return Err(TapeError::MalformedRow {
                line: record_index as u64 + 1,
                message: format!("invalid side byte {other}"),
            })
        }
    };
    let passive = read_u32(20);
    let opt_price = |raw: i64| if raw == PRICE_ABSENT { None } else { Some(raw) };
    Ok(Trade {
        timestamp: read_i64(0),
        trade_id: read_u64(8),
        aggressor_id: TraderId(read_u32(16)),
        passive_id: if passive == PASSIVE_ABSENT {
            None
        } else {
            Some(TraderId(passive))
        },
        side,
        price: read_i64(32),
        volume: read_i64(40),
        best_bid: opt_price(read_i64(48)),
        best_ask: opt_price(read_i64(56)),
    })
}

/// Serialize a tape. The header carries the metadata exponents; instrument
/// name, tick size and time zone are not part of the wire format.
pub fn write_binary<W: Write>(tape: &Tape, mut out: W) -> Result<(), TapeError> {
    let meta = tape.meta();
    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(&BINARY_MAGIC);
    header[4..6].copy_from_slice(&BINARY_VERSION.to_le_bytes());
    header[6] = meta.price_exponent as u8;
    header[7] = meta.volume_exponent as u8;
    out.write_all(&header)?;
    let mut buf = [0u8; BINARY_RECORD_LEN];
    for t in tape.trades() {
        encode_record(t, &mut buf);
        out.write_all(&buf)?;
    }
    Ok(())
}

/// Parse a binary stream produced by [`write_binary`]. The result goes
/// through the same canonicalization as the CSV path, so both parsers yield
/// element-wise equal tapes for the same logical records.
pub fn parse_binary<R: Read>(mut source: R) -> Result<ParsedTape, TapeError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    if bytes.len() < HEADER_LEN {
        return Err(TapeError::BadMagic);
    }
    if bytes[0..4] != BINARY_MAGIC {
        return Err(TapeError::BadMagic);
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != BINARY_VERSION {
        return Err(TapeError::VersionMismatch(version));
    }
    let meta = TapeMeta {
        price_exponent: bytes[6] as i8,
        volume_exponent: bytes[7] as i8,
        ..TapeMeta::default()
    };
    let body = &bytes[HEADER_LEN..];
    let records = body.len() / BINARY_RECORD_LEN;
    let trailing = body.len() % BINARY_RECORD_LEN;
    if trailing != 0 {
        return Err(TapeError::TruncatedRecord { records, trailing });
    }
    let mut rows = Vec::with_capacity(records);
    for i in 0..records {
        let chunk = &body[i * BINARY_RECORD_LEN..(i + 1) * BINARY_RECORD_LEN];
        rows.push(decode_record(chunk, i)?);
    }
    Tape::from_rows(meta, rows, &[])
}
