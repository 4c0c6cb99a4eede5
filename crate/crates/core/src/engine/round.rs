//! Decimal rounding on the shortest round-trip representation of a double,
//! so ROUND(2.675, 2) gives 2.68 as a reader of the cell would expect.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundMode {
    /// Half away from zero.
    Nearest,
    /// Away from zero.
    Up,
    /// Toward zero.
    Down,
}

/// Rounds `x` to `digits` places after the decimal point (negative `digits`
/// round to tens, hundreds, ...).
pub fn round_decimal(x: f64, digits: i64, mode: RoundMode) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let sci = format!("{:e}", x.abs());
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i64 = exp.parse().expect("integer exponent");
    let digits_str: Vec<u8> = mantissa.bytes().filter(u8::is_ascii_digit).map(|b| b - b'0').collect();

    // digit k has place value 10^(exp - k); keep those at or above 10^(-digits)
    let keep = exp.saturating_add(digits).saturating_add(1);
    if keep >= digits_str.len() as i64 {
        return x;
    }
    let (kept, rest): (&[u8], &[u8]) = if keep <= 0 { (&[], &digits_str[..]) } else { digits_str.split_at(keep as usize) };
    let bump = match mode {
        RoundMode::Down => false,
        RoundMode::Up => rest.iter().any(|&d| d != 0),
        // when keep < 0 the first discarded digit is an implicit leading zero
        RoundMode::Nearest => keep >= 0 && rest.first().is_some_and(|&d| d >= 5),
    };
    let mut n: u128 = kept.iter().fold(0, |acc, &d| acc * 10 + u128::from(d));
    if bump {
        n += 1;
    }
    if n == 0 {
        return 0.0;
    }
    let magnitude: f64 = format!("{n}e{}", -digits).parse().expect("decimal literal");
    x.signum() * magnitude
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_away_from_zero() {
        assert_eq!(round_decimal(2.5, 0, RoundMode::Nearest), 3.0);
        assert_eq!(round_decimal(-2.5, 0, RoundMode::Nearest), -3.0);
        assert_eq!(round_decimal(2.675, 2, RoundMode::Nearest), 2.68);
        assert_eq!(round_decimal(1234.5678, -2, RoundMode::Nearest), 1200.0);
        assert_eq!(round_decimal(0.4, 0, RoundMode::Nearest), 0.0);
        assert_eq!(round_decimal(0.04, -1, RoundMode::Nearest), 0.0);
        assert_eq!(round_decimal(9.99, 1, RoundMode::Nearest), 10.0);
        assert_eq!(round_decimal(1.25, 5, RoundMode::Nearest), 1.25);
    }

    #[test]
    fn up_and_down() {
        assert_eq!(round_decimal(3.14159, 3, RoundMode::Up), 3.142);
        assert_eq!(round_decimal(-3.14159, 3, RoundMode::Up), -3.142);
        assert_eq!(round_decimal(3.14159, 3, RoundMode::Down), 3.141);
        assert_eq!(round_decimal(0.001, 0, RoundMode::Up), 1.0);
        assert_eq!(round_decimal(0.001, -2, RoundMode::Up), 100.0);
        assert_eq!(round_decimal(-7.9, 0, RoundMode::Down), -7.0);
        assert_eq!(round_decimal(31415.0, -2, RoundMode::Up), 31500.0);
    }
}
