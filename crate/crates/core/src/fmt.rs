//! Deterministic numeric formatting for report files.
//!
//! Reports are compared byte-for-byte across runs and thread counts, so all
//! floats are rendered through one fixed 12-significant-digit formatter.

/// g-style rendering with `sig` significant digits: fixed notation for
/// moderate exponents, scientific otherwise, trailing zeros trimmed.
/// Output is always a valid JSON number (non-finite values become "null").
pub fn fmt_sig(x: f64, sig: usize) -> String {
    assert!(sig >= 1);
    if !x.is_finite() {
        return "null".to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{:.*e}", sig - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("exponent digits");
    if exp < -4 || exp >= sig as i32 {
        let mantissa = trim_zeros(mantissa);
        return format!("{mantissa}e{exp}");
    }
    // fixed notation with sig significant digits total
    let decimals = (sig as i32 - 1 - exp).max(0) as usize;
    let fixed = format!("{:.*}", decimals, x);
    let trimmed = trim_zeros(&fixed);
    if trimmed == "-0" {
        "0".to_string()
    } else {
        trimmed
    }
}

fn trim_zeros(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    let s = s.trim_end_matches('0');
    s.trim_end_matches('.').to_string()
}

/// Default report precision.
pub fn fmt12(x: f64) -> String {
    fmt_sig(x, 12)
}

struct Fmt12Formatter;

impl serde_json::ser::Formatter for Fmt12Formatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        writer.write_all(fmt12(value).as_bytes())
    }
}

/// Serializes any value to JSON with every float at 12 significant digits
/// and a trailing newline; byte-stable across runs.
pub fn to_json_12<T: serde::Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Fmt12Formatter);
    value.serialize(&mut ser).expect("json serialization");
    let mut s = String::from_utf8(buf).expect("json is utf-8");
    s.push('\n');
    s
}
