//! Decibel conversions and fixed-precision number formatting.
//!
//! Variances are vacuum-normalized, so `0 dB` is the vacuum level and
//! squeezing reads negative.

/// `10·log10(v)`.
pub fn to_db(variance: f64) -> f64 {
    10.0 * variance.log10()
}

pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Number of significant digits used for every serialized number.
pub const SIG_DIGITS: usize = 12;

/// Round to [`SIG_DIGITS`] significant digits.
pub fn round_sig(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{:.*e}", SIG_DIGITS - 1, v).parse().unwrap_or(v)
}

/// Format with [`SIG_DIGITS`] significant digits, `%g` style: plain decimal
/// for moderate exponents, scientific otherwise, trailing zeros trimmed.
pub fn fmt_sig(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIG_DIGITS - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..SIG_DIGITS as i32).contains(&exp) {
        let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, v))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}
