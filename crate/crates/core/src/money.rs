//! Integer minor-unit money and the exact rounding helpers used by every ledger.
//!
//! Rates arrive from configuration as `f64` and are converted once to parts per
//! billion, so ledger arithmetic stays in integers (`i128` intermediates).

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// Denominator of the fixed-point rate representation.
pub const PPB: i128 = 1_000_000_000;

/// An amount of currency in minor units (cents for USD).
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Money(pub i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn minor(self) -> i64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    /// `self × rate`, rounded half-to-even to the nearest minor unit.
    pub fn mul_rate(self, rate: f64) -> Money {
        let ppb = rate_to_ppb(rate) as i128;
        Money(div_round_half_even(self.0 as i128 * ppb, PPB) as i64)
    }

    /// `self / (1 + rate)`, rounded half-to-even.
    pub fn div_one_plus(self, rate: f64) -> Money {
        let den = PPB + rate_to_ppb(rate) as i128;
        Money(div_round_half_even(self.0 as i128 * PPB, den) as i64)
    }

    /// `self × (1 + rate)`, rounded half-to-even.
    pub fn mul_one_plus(self, rate: f64) -> Money {
        let num = PPB + rate_to_ppb(rate) as i128;
        Money(div_round_half_even(self.0 as i128 * num, PPB) as i64)
    }

    /// Rounds an `f64` amount of minor units half-to-even.
    pub fn from_f64_rounded(value: f64) -> Money {
        Money(value.round_ties_even() as i64)
    }

    pub fn max(self, other: Money) -> Money {
        Money(self.0.max(other.0))
    }

    pub fn min(self, other: Money) -> Money {
        Money(self.0.min(other.0))
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money(-self.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl SubAssign for Money {
    fn sub_assign(&mut self, rhs: Money) {
        self.0 -= rhs.0;
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        Money(iter.map(|m| m.0).sum())
    }
}

impl<'a> Sum<&'a Money> for Money {
    fn sum<I: Iterator<Item = &'a Money>>(iter: I) -> Money {
        Money(iter.map(|m| m.0).sum())
    }
}

/// Converts a dimensionless rate to parts per billion.
pub fn rate_to_ppb(rate: f64) -> i64 {
    (rate * PPB as f64).round() as i64
}

/// `num / den` rounded half-to-even. `den` must be positive.
pub fn div_round_half_even(num: i128, den: i128) -> i128 {
    debug_assert!(den > 0);
    let q = num.div_euclid(den);
    let r = num.rem_euclid(den);
    match (2 * r).cmp(&den) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => {
            if q % 2 == 0 {
                q
            } else {
                q + 1
            }
        }
    }
}

/// Splits `total` across `weights` with the largest-remainder method.
///
/// Each share gets `floor(total·w/W)`; the leftover units go one each to the
/// largest fractional remainders, ties to the lower index. Callers order
/// `weights` by their tie-break key (e.g. ascending member id). Returns `None`
/// when all weights are zero. `total` must be non-negative.
pub fn largest_remainder(total: Money, weights: &[u128]) -> Option<Vec<Money>> {
    debug_assert!(total.0 >= 0);
    let sum: u128 = weights.iter().sum();
    if sum == 0 {
        return None;
    }
    let t = total.0 as u128;
    let mut shares = Vec::with_capacity(weights.len());
    let mut rems = Vec::with_capacity(weights.len());
    let mut assigned: u128 = 0;
    for (i, &w) in weights.iter().enumerate() {
        let prod = t * w;
        let q = prod / sum;
        assigned += q;
        shares.push(q);
        rems.push((prod % sum, i));
    }
    let mut leftover = t - assigned;
    // Stable sort keeps lower index first among equal remainders.
    rems.sort_by(|a, b| b.0.cmp(&a.0));
    for &(_, i) in &rems {
        if leftover == 0 {
            break;
        }
        shares[i] += 1;
        leftover -= 1;
    }
    Some(shares.into_iter().map(|s| Money(s as i64)).collect())
}
