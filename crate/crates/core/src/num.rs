//! Locale-independent number rendering shared by the text formats.

/// Renders a real so that parsing it back yields the identical `f64`.
///
/// Short decimals ("0.25", "1") are kept as written; anything needing more
/// than 15 significant digits is emitted in scientific notation with 17
/// significant digits.
pub fn format_real(x: f64) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let short = format!("{x}");
    if significant_digits(&short) <= 15 {
        short
    } else {
        format!("{x:.16e}")
    }
}

fn significant_digits(s: &str) -> usize {
    let digits: String = s.chars().filter(|c| c.is_ascii_digit()).collect();
    let trimmed = digits.trim_start_matches('0').trim_end_matches('0');
    trimmed.len()
}

/// Parses a decimal literal or a rational `p/q`.
pub fn parse_real(s: &str) -> Option<f64> {
    if let Some((p, q)) = s.split_once('/') {
        let p: f64 = p.trim().parse().ok()?;
        let q: f64 = q.trim().parse().ok()?;
        if q == 0.0 {
            return None;
        }
        return Some(p / q);
    }
    match s {
        "inf" | "+inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok().filter(|x: &f64| x.is_finite()),
    }
}

/// Fixed significant-digit rendering used in reports (`0.3333333333`, `1.000000000`).
pub fn format_sig(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return format!("{:.*}", digits.saturating_sub(1), 0.0);
    }
    let exponent = x.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - exponent).max(0) as usize;
    let out = format!("{x:.decimals$}");
    // Rounding may carry into a new leading digit (9.99.. -> 10.0..).
    let carried = out.parse::<f64>().is_ok_and(|r| r.abs() >= 10f64.powi(exponent as i32 + 1));
    if carried && decimals > 0 {
        format!("{x:.prec$}", prec = decimals - 1)
    } else {
        out
    }
}
