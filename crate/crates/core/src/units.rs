//! Integer-nanosecond time arithmetic: decimal parsing with round-half-to-even,
//! human duration strings and unit auto-scaled formatting.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum UnitError {
    #[error("invalid decimal number {0:?}")]
    BadNumber(String),
    #[error("invalid duration {0:?} (expected e.g. \"90ms\", \"1.5s\" or integer nanoseconds)")]
    BadDuration(String),
    #[error("value {0:?} does not fit in 64-bit nanoseconds")]
    OutOfRange(String),
}

/// Divide `num` by `den` (den > 0), rounding half to even.
pub fn div_round_half_even(num: i128, den: i128) -> i128 {
    debug_assert!(den > 0);
    let q = num.div_euclid(den);
    let r = num.rem_euclid(den);
    match (2 * r).cmp(&den) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => {
            if q % 2 == 0 {
                q
            } else {
                q + 1
            }
        }
    }
}

/// Parse a decimal literal (optionally signed, optionally with exponent) and
/// scale it by `10^scale_pow10`, rounding the result half to even.
///
/// `decimal_scaled("1.5", 3) == Ok(1500)`, `decimal_scaled("0.0005", 3) == Ok(0)`.
pub fn decimal_scaled(text: &str, scale_pow10: i32) -> Result<i64, UnitError> {
    let bad = || UnitError::BadNumber(text.to_string());
    let s = text.trim();
    let (negative, s) = match s.as_bytes().first() {
        Some(b'-') => (true, &s[1..]),
        Some(b'+') => (false, &s[1..]),
        _ => (false, s),
    };
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => {
            let exp: i32 = s[pos + 1..].parse().map_err(|_| bad())?;
            (&s[..pos], exp)
        }
        None => (s, 0),
    };
    let (int_part, frac_part) = match mantissa.find('.') {
        Some(pos) => (&mantissa[..pos], &mantissa[pos + 1..]),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let digits: String = format!("{int_part}{frac_part}");
    let digits = digits.trim_start_matches('0');
    // value = digits * 10^(shift)
    let shift = exponent as i64 + scale_pow10 as i64 - frac_part.len() as i64;
    let magnitude: i128 = if digits.is_empty() {
        0
    } else if shift >= 0 {
        if digits.len() as i64 + shift > 36 {
            return Err(UnitError::OutOfRange(text.to_string()));
        }
        let base: i128 = digits.parse().map_err(|_| bad())?;
        base * 10i128.pow(shift as u32)
    } else {
        let drop = (-shift) as usize;
        if drop > digits.len() {
            // Leading digit of the dropped part is an implicit zero: rounds down.
            0
        } else {
            let keep_len = digits.len() - drop;
            if keep_len > 36 {
                return Err(UnitError::OutOfRange(text.to_string()));
            }
            let kept: i128 = if keep_len == 0 { 0 } else { digits[..keep_len].parse().map_err(|_| bad())? };
            let rest = &digits.as_bytes()[keep_len..];
            let tail_nonzero = rest[1..].iter().any(|&b| b != b'0');
            let round_up = match rest[0].cmp(&b'5') {
                std::cmp::Ordering::Less => false,
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Equal => tail_nonzero || kept % 2 == 1,
            };
            kept + round_up as i128
        }
    };
    let value = if negative { -magnitude } else { magnitude };
    i64::try_from(value).map_err(|_| UnitError::OutOfRange(text.to_string()))
}

/// Microseconds (as written in span traces) to nanoseconds.
pub fn micros_to_ns(text: &str) -> Result<i64, UnitError> {
    decimal_scaled(text, 3)
}

/// Seconds (as written by interpreter-level profilers) to nanoseconds.
pub fn seconds_to_ns(text: &str) -> Result<i64, UnitError> {
    decimal_scaled(text, 9)
}

/// Parse `"90ms"`, `"1.5s"`, `"250us"`, `"12ns"` or a bare integer (nanoseconds).
pub fn parse_duration(text: &str) -> Result<i64, UnitError> {
    let s = text.trim();
    let bad = || UnitError::BadDuration(text.to_string());
    let split = s
        .find(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E')
        .unwrap_or(s.len());
    let (number, unit) = s.split_at(split);
    if number.is_empty() {
        return Err(bad());
    }
    let pow = match unit.trim() {
        "" | "ns" => 0,
        "us" | "µs" => 3,
        "ms" => 6,
        "s" => 9,
        _ => return Err(bad()),
    };
    if unit.is_empty() && number.contains(['.', 'e', 'E']) {
        return Err(bad());
    }
    decimal_scaled(number, pow).map_err(|e| match e {
        UnitError::BadNumber(_) => bad(),
        other => other,
    })
}

/// Time units used by the auto-scaling formatter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeUnit {
    Ns,
    Us,
    Ms,
    S,
}

impl TimeUnit {
    pub fn nanos(self) -> i64 {
        match self {
            TimeUnit::Ns => 1,
            TimeUnit::Us => 1_000,
            TimeUnit::Ms => 1_000_000,
            TimeUnit::S => 1_000_000_000,
        }
    }

    pub fn suffix(self) -> &'static str {
        match self {
            TimeUnit::Ns => "ns",
            TimeUnit::Us => "us",
            TimeUnit::Ms => "ms",
            TimeUnit::S => "s",
        }
    }

    /// Largest unit that keeps `ns` at or above 1.
    pub fn auto(ns: i64) -> TimeUnit {
        let a = ns.unsigned_abs();
        if a >= 1_000_000_000 {
            TimeUnit::S
        } else if a >= 1_000_000 {
            TimeUnit::Ms
        } else if a >= 1_000 {
            TimeUnit::Us
        } else {
            TimeUnit::Ns
        }
    }
}

impl fmt::Display for TimeUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.suffix())
    }
}

/// Format a duration with unit auto-scaling, rounded to `sig_figs`
/// significant figures with trailing fractional zeros trimmed. Zero renders
/// as `"0"`.
pub fn format_duration(ns: i64, sig_figs: u32) -> String {
    if ns == 0 {
        return "0".to_string();
    }
    let sig_figs = sig_figs.max(1);
    let mut unit = TimeUnit::auto(ns);
    let mut text = format_sig(ns as f64 / unit.nanos() as f64, sig_figs);
    // Rounding can carry into the next unit (999.96us -> 1000us).
    if unit != TimeUnit::S {
        let value: f64 = text.parse().unwrap_or(0.0);
        if value.abs() >= 1000.0 {
            unit = match unit {
                TimeUnit::Ns => TimeUnit::Us,
                TimeUnit::Us => TimeUnit::Ms,
                _ => TimeUnit::S,
            };
            text = format_sig(ns as f64 / unit.nanos() as f64, sig_figs);
        }
    }
    format!("{text}{unit}")
}

fn format_sig(value: f64, sig_figs: u32) -> String {
    let magnitude = if value == 0.0 { 0 } else { value.abs().log10().floor() as i32 };
    let decimals = (sig_figs as i32 - 1 - magnitude).max(0) as usize;
    let mut text = format!("{value:.decimals$}");
    if text.contains('.') {
        while text.ends_with('0') {
            text.pop();
        }
        if text.ends_with('.') {
            text.pop();
        }
    }
    text
}
