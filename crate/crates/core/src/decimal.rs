//! Scaled-decimal helpers.
//!
//! Prices and volumes are carried as `i64` raw values with a fixed decimal
//! exponent declared in the tape metadata (`value = raw * 10^exponent`), so
//! volume sums accumulate exactly in integer arithmetic.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DecimalError {
    #[error("empty decimal literal")]
    Empty,
    #[error("invalid decimal literal {0:?}")]
    Invalid(String),
    #[error("decimal literal {0:?} has more than {1} fractional digits")]
    TooPrecise(String, u32),
    #[error("decimal literal {0:?} overflows the scaled 64-bit range")]
    Overflow(String),
}

/// Number of fractional digits implied by a (non-positive) exponent.
pub fn scale_of(exponent: i8) -> u32 {
    if exponent >= 0 {
        0
    } else {
        (-(exponent as i32)) as u32
    }
}

/// Parse a plain decimal literal (`"123"`, `"0.045"`, `"-1.5"`) into a raw
/// scaled integer under the given exponent. Exact: literals with more
/// fractional digits than the exponent permits are rejected rather than
/// rounded.
pub fn parse_scaled(text: &str, exponent: i8) -> Result<i64, DecimalError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(DecimalError::Empty);
    }
    let (neg, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.strip_prefix('+').unwrap_or(text)),
    };
    if body.is_empty() {
        return Err(DecimalError::Invalid(text.to_string()));
    }
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(DecimalError::Invalid(text.to_string()));
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit())
    {
        return Err(DecimalError::Invalid(text.to_string()));
    }
    let scale = scale_of(exponent);
    let frac_trimmed = frac_part.trim_end_matches('0');
    if frac_trimmed.len() as u32 > scale {
        return Err(DecimalError::TooPrecise(text.to_string(), scale));
    }

    let mut raw: i128 = 0;
    for b in int_part.bytes() {
        raw = raw * 10 + (b - b'0') as i128;
        if raw > i64::MAX as i128 {
            return Err(DecimalError::Overflow(text.to_string()));
        }
    }
    for i in 0..scale {
        let digit = frac_part.as_bytes().get(i as usize).map_or(0, |b| b - b'0');
        raw = raw * 10 + digit as i128;
        if raw > i64::MAX as i128 {
            return Err(DecimalError::Overflow(text.to_string()));
        }
    }
    if neg {
        raw = -raw;
    }
    Ok(raw as i64)
}

/// Format a raw scaled integer back to a plain decimal literal. Inverse of
/// [`parse_scaled`] for in-range values.
pub fn format_scaled(raw: i64, exponent: i8) -> String {
    let scale = scale_of(exponent) as usize;
    if scale == 0 {
        return raw.to_string();
    }
    let neg = raw < 0;
    let abs = (raw as i128).unsigned_abs();
    let pow = 10u128.pow(scale as u32);
    let int = abs / pow;
    let frac = abs % pow;
    let sign = if neg { "-" } else { "" };
    format!("{sign}{int}.{frac:0width$}", width = scale)
}

/// Convert a raw scaled integer to `f64` units.
pub fn to_f64(raw: i64, exponent: i8) -> f64 {
    raw as f64 * 10f64.powi(exponent as i32)
}

/// Convert a raw scaled accumulator (`i128`) to `f64` units.
pub fn i128_to_f64(raw: i128, exponent: i8) -> f64 {
    raw as f64 * 10f64.powi(exponent as i32)
}

/// Round an `f64` in natural units to the nearest raw scaled integer.
pub fn from_f64(value: f64, exponent: i8) -> i64 {
    (value * 10f64.powi(-(exponent as i32))).round() as i64
}
