//! Decibel conversions for reporting.

/// Linear ratio to dB, `10·log10(x)`.
pub fn to_db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

/// dB to linear ratio.
pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Signed, one-decimal dB string as used in human-readable reports.
pub fn fmt_db(ratio: f64) -> String {
    format!("{:+.1} dB", to_db(ratio))
}

/// Whether `x` is a valid efficiency, i.e. in `(0, 1]`.
pub fn is_efficiency(x: f64) -> bool {
    x > 0.0 && x <= 1.0
}
