//! Float text rendering that parses back to the same bits.

/// Shortest decimal that round-trips (`1e-8`, `0.1`, `NaN`, `inf`).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// `fmt_f64` for an optional value; `None` renders as the empty string.
pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Inverse of [`fmt_f64`]. Accepts anything `f64::from_str` does.
pub fn parse_f64(s: &str) -> Option<f64> {
    s.trim().parse().ok()
}
