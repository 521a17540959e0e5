//! Text output shared by the CSV writers: C-compatible `%.17g` formatting.

use std::io::{self, Write};

/// Formats like C's `printf("%.17g", v)`, which round-trips every `f64`.
pub fn fmt_g17(v: f64) -> String {
    if v.is_nan() {
        return "nan".to_string();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0" } else { "0" }.to_string();
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let mantissa = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (16 - exp) as usize;
        trim_fraction(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// One CSV row of `%.17g` values, LF-terminated.
pub fn write_row<W: Write>(out: &mut W, values: &[f64]) -> io::Result<()> {
    let line: Vec<String> = values.iter().map(|v| fmt_g17(*v)).collect();
    writeln!(out, "{}", line.join(","))
}

pub fn write_header<W: Write, S: AsRef<str>>(out: &mut W, columns: &[S]) -> io::Result<()> {
    let cols: Vec<&str> = columns.iter().map(|c| c.as_ref()).collect();
    writeln!(out, "{}", cols.join(","))
}

/// `prefix1 .. prefixd`.
pub fn indexed_columns(prefix: &str, dim: usize) -> Vec<String> {
    (1..=dim).map(|i| format!("{prefix}{i}")).collect()
}
