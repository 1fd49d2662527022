//! Fixed-width numeric formatting shared by every CSV writer.

/// Formats `x` with 12 significant digits, trailing zeros trimmed, switching
/// to scientific notation outside `[1e-5, 1e12)`.
pub fn fmt_num(x: f64) -> String {
    const DIGITS: i32 = 12;
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    // round first so 9.9999999999996 picks the exponent of 10
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..DIGITS).contains(&exp) {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim(mantissa.to_string()))
    }
}

fn trim(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::fmt_num;

    #[test]
    fn formatting() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(0.1), "0.1");
        assert_eq!(fmt_num(-2.5), "-2.5");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_num(2.0f64.sqrt() * 100.0), "141.421356237");
        assert_eq!(fmt_num(1e-4), "0.0001");
        assert_eq!(fmt_num(1.234e-7), "1.234e-7");
        assert_eq!(fmt_num(9.99999999999996), "10");
        assert_eq!(fmt_num(3e15), "3e15");
    }
}
