//! CSV cells: 9 significant digits, positional notation for exponents in
//! `[-4, 9)`, scientific otherwise.

use std::fmt::Write;

const DIGITS: usize = 9;

pub fn number(x: f64) -> String {
    if x == 0.0 {
        return "0.0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.*e}", DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..DIGITS as i32).contains(&exp) {
        let decimals = (DIGITS as i32 - 1 - exp).max(0) as usize;
        trim(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim(mantissa.to_string()))
    }
}

pub fn optional(x: Option<f64>) -> String {
    x.map(number).unwrap_or_default()
}

/// Drops trailing zeros but keeps one digit after the point.
fn trim(mut s: String) -> String {
    if !s.contains('.') {
        s.push_str(".0");
        return s;
    }
    while s.ends_with('0') && !s.ends_with(".0") {
        s.pop();
    }
    s
}

/// Header plus rows, newline-terminated.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", header.join(","));
    for row in rows {
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats() {
        assert_eq!(number(1.0), "1.0");
        assert_eq!(number(0.75), "0.75");
        assert_eq!(number(1.0 / 3.0), "0.333333333");
        assert_eq!(number(4.0 * 6f64.sqrt() / 9.0), "1.08866211");
        assert_eq!(number(-2.5), "-2.5");
        assert_eq!(number(123456789.0), "123456789.0");
        assert_eq!(number(1234567890.0), "1.23456789e9");
        assert_eq!(number(0.0001), "0.0001");
        assert_eq!(number(0.00001234), "1.234e-5");
        assert_eq!(number(0.9999999999), "1.0");
        assert_eq!(number(0.0), "0.0");
        assert_eq!(optional(None), "");
    }
}
