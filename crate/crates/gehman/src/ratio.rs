//! Exact rational helpers. All lengths, cutpoints, and distances in this
//! crate are `BigRational`; nothing is ever rounded to floating point.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub type Rational = BigRational;

pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn rat_int(n: i64) -> Rational {
    Rational::from(BigInt::from(n))
}

/// 4^(-depth): the length of an arc at tree depth `depth`.
pub fn arc_len(depth: usize) -> Rational {
    Rational::new(BigInt::one(), BigInt::one() << (2 * depth))
}

/// Sum of 4^(-k) for k > depth: how far below a depth-`depth` node any point
/// of its subtree can lie. Equals (1/3) * 4^(-depth).
pub fn tail_below(depth: usize) -> Rational {
    Rational::new(BigInt::one(), BigInt::from(3) * (BigInt::one() << (2 * depth)))
}

/// Always "p/q", reduced, q > 0. Integers render as "n/1".
pub fn format_ratio(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

pub fn parse_ratio(s: &str) -> Result<Rational, String> {
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s.trim(), "1"),
    };
    let n: BigInt = n.parse().map_err(|e| format!("bad numerator {n:?}: {e}"))?;
    let d: BigInt = d.parse().map_err(|e| format!("bad denominator {d:?}: {e}"))?;
    if d.is_zero() {
        return Err("zero denominator".into());
    }
    Ok(Rational::new(n, d))
}

pub fn is_nonnegative(r: &Rational) -> bool {
    !r.is_negative()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arc_lengths_shrink_by_four() {
        assert_eq!(arc_len(1), rat(1, 4));
        assert_eq!(arc_len(2), rat(1, 16));
        assert_eq!(arc_len(3), arc_len(2) / rat_int(4));
    }

    #[test]
    fn tail_is_geometric_sum() {
        // 4^-3 + 4^-4 + ... = (1/3) 4^-2
        assert_eq!(tail_below(2), rat(1, 48));
        let by_hand: Rational = (3..40).map(arc_len).sum();
        assert!(tail_below(2) > by_hand);
        assert!((tail_below(2) - by_hand) < rat(1, 1 << 60));
    }

    #[test]
    fn ratio_strings_round_trip() {
        for r in [rat(0, 1), rat(5, 16), rat(-3, 7), rat_int(12)] {
            assert_eq!(parse_ratio(&format_ratio(&r)).unwrap(), r);
        }
        assert_eq!(parse_ratio("3").unwrap(), rat_int(3));
        assert!(parse_ratio("1/0").is_err());
    }
}
