//! CSV formatting helpers shared by every exporter.

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

pub fn csv_row(values: &[String]) -> String {
    values.join(",")
}

/// Splits one CSV line into trimmed fields; no quoting is supported.
pub fn split_fields(line: &str) -> Vec<&str> {
    line.split(',').map(str::trim).collect()
}
