//! Machine-readable output: JSON with keys in sorted order and every
//! floating-point number rounded to 9 significant digits. Documents are
//! pretty-printed with two-space indentation; streams are one compact
//! object per line. Non-finite numbers become `null`.

use serde::Serialize;
use serde_json::{Number, Value};

use crate::error::{Error, Result};

/// Significant digits kept for floats.
pub const SIGNIFICANT_DIGITS: usize = 9;

/// Rounds to [`SIGNIFICANT_DIGITS`] significant digits.
pub fn round_significant(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, v)
        .parse()
        .expect("exponent form parses")
}

/// Serialises `value` and rounds its floats. Map keys come out sorted
/// because `serde_json::Map` is ordered.
pub fn canonical<T: Serialize>(value: &T) -> Result<Value> {
    let v = serde_json::to_value(value).map_err(|e| Error::invalid(format!("serialisation: {e}")))?;
    Ok(round_floats(v))
}

fn round_floats(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let f = n.as_f64().expect("f64 number");
            Number::from_f64(round_significant(f)).map_or(Value::Null, Value::Number)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(round_floats).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, round_floats(v))).collect()),
        other => other,
    }
}

/// Pretty document followed by a newline.
pub fn document<T: Serialize>(value: &T) -> Result<String> {
    let v = canonical(value)?;
    let mut s = serde_json::to_string_pretty(&v).expect("Value always serialises");
    s.push('\n');
    Ok(s)
}

/// Single-line record followed by a newline.
pub fn line<T: Serialize>(value: &T) -> Result<String> {
    let v = canonical(value)?;
    let mut s = serde_json::to_string(&v).expect("Value always serialises");
    s.push('\n');
    Ok(s)
}

/// Fixed-point float for text listings.
pub fn fixed(v: f64, decimals: usize) -> String {
    format!("{v:.decimals$}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn rounding() {
        assert_eq!(round_significant(0.23), 0.23);
        assert_eq!(round_significant(1.0 / 3.0), 0.333333333);
        assert_eq!(round_significant(123456789012.0), 123456789000.0);
        assert_eq!(round_significant(-2.0 / 3.0), -0.666666667);
        assert_eq!(round_significant(0.0), 0.0);
    }

    #[test]
    fn keys_sorted_and_floats_rounded() {
        let mut m = HashMap::new();
        m.insert("zeta", 1.0 / 3.0);
        m.insert("alpha", 2.0);
        assert_eq!(line(&m).unwrap(), "{\"alpha\":2.0,\"zeta\":0.333333333}\n");
    }

    #[test]
    fn integers_untouched_and_nan_is_null() {
        #[derive(Serialize)]
        struct S {
            n: u64,
            x: f64,
        }
        assert_eq!(line(&S { n: 12345678901, x: f64::NAN }).unwrap(), "{\"n\":12345678901,\"x\":null}\n");
    }
}
