use std::fmt;

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::rational::Rational;

/// Face value of a claim. `Unbounded` only appears on relay edges created
/// by [`crate::max_clearing::to_priority_proportional`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Liability {
    Finite(Rational),
    Unbounded,
}

impl Liability {
    pub fn finite(&self) -> Option<&Rational> {
        match self {
            Liability::Finite(x) => Some(x),
            Liability::Unbounded => None,
        }
    }

    pub fn is_unbounded(&self) -> bool {
        matches!(self, Liability::Unbounded)
    }

    /// `a >= self`, treating `Unbounded` as +infinity.
    pub fn is_covered_by(&self, a: &Rational) -> bool {
        match self {
            Liability::Finite(x) => a >= x,
            Liability::Unbounded => false,
        }
    }

    pub(crate) fn add(&self, other: &Liability) -> Liability {
        match (self, other) {
            (Liability::Finite(a), Liability::Finite(b)) => Liability::Finite(a + b),
            _ => Liability::Unbounded,
        }
    }
}

impl fmt::Display for Liability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Liability::Finite(x) => write!(f, "{x}"),
            Liability::Unbounded => write!(f, "unbounded"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PaymentFunctionError {
    #[error("borders must start at 0")]
    FirstBorderNotZero,
    #[error("borders must be strictly increasing")]
    NotIncreasing,
    #[error("expected {expected} slopes for {borders} borders, got {got}")]
    SlopeCount { borders: usize, expected: usize, got: usize },
    #[error("negative slope {0}")]
    NegativeSlope(Rational),
}

/// Monotone piecewise-linear payment function.
///
/// Stored as the finite borders `x_1 < .. < x_k` (with `x_0 = 0` implicit)
/// and the slope on each half-open interval `[x_{i-1}, x_i)`. Values at the
/// borders are accumulated from the slopes, so the function is continuous by
/// construction. Past `x_k` the function continues with `tail_slope`, which
/// is 0 for ordinary claims and 1 for the identity function of relay edges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaymentFunction {
    borders: Vec<Rational>,
    slopes: Vec<Rational>,
    values: Vec<Rational>,
    tail_slope: Rational,
}

impl PaymentFunction {
    /// Builds a function from the full border list `0 = x_0 < .. < x_k` and
    /// the `k` slopes between consecutive borders.
    pub fn from_segments(
        borders: &[Rational],
        slopes: &[Rational],
    ) -> Result<Self, PaymentFunctionError> {
        match borders.first() {
            Some(first) if first.is_zero() => {}
            _ => return Err(PaymentFunctionError::FirstBorderNotZero),
        }
        if borders.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PaymentFunctionError::NotIncreasing);
        }
        if slopes.len() + 1 != borders.len() {
            return Err(PaymentFunctionError::SlopeCount {
                borders: borders.len(),
                expected: borders.len() - 1,
                got: slopes.len(),
            });
        }
        if let Some(bad) = slopes.iter().find(|m| m.is_negative()) {
            return Err(PaymentFunctionError::NegativeSlope(bad.clone()));
        }
        Ok(Self::build(borders[1..].to_vec(), slopes.to_vec(), Rational::zero()))
    }

    /// The constant zero function (a bank without outstanding liabilities).
    pub fn zero() -> Self {
        Self::build(Vec::new(), Vec::new(), Rational::zero())
    }

    /// `p(a) = a`, the only admissible function for a single edge of
    /// unbounded liability.
    pub fn identity() -> Self {
        Self::build(Vec::new(), Vec::new(), Rational::one())
    }

    fn build(borders: Vec<Rational>, slopes: Vec<Rational>, tail_slope: Rational) -> Self {
        let mut values = Vec::with_capacity(borders.len() + 1);
        values.push(Rational::zero());
        let mut prev = Rational::zero();
        for (x, m) in borders.iter().zip(&slopes) {
            let next = values.last().unwrap() + m * (x - &prev);
            values.push(next);
            prev = x.clone();
        }
        Self { borders, slopes, values, tail_slope }
    }

    /// Number of finite positive borders (`k_e`).
    pub fn border_count(&self) -> usize {
        self.borders.len()
    }

    /// Finite positive borders `x_1..x_k`.
    pub fn borders(&self) -> &[Rational] {
        &self.borders
    }

    /// Slopes `m_1..m_k` on the finite intervals.
    pub fn slopes(&self) -> &[Rational] {
        &self.slopes
    }

    pub fn tail_slope(&self) -> &Rational {
        &self.tail_slope
    }

    /// Largest finite border, `L^+` of the debtor for ordinary claims.
    pub fn last_border(&self) -> Option<&Rational> {
        self.borders.last()
    }

    /// Value at the last finite border (the liability for ordinary claims).
    pub fn terminal_value(&self) -> &Rational {
        self.values.last().unwrap()
    }

    /// Index `i` of the interval `[x_i, x_{i+1})` containing `a`; `k` means
    /// `a` lies past the last finite border.
    pub fn interval_index(&self, a: &Rational) -> usize {
        self.borders.partition_point(|x| x <= a)
    }

    pub fn eval(&self, a: &Rational) -> Rational {
        let i = self.interval_index(a);
        let start = if i == 0 { Rational::zero() } else { self.borders[i - 1].clone() };
        let slope = self.slopes.get(i).unwrap_or(&self.tail_slope);
        if slope.is_zero() {
            self.values[i].clone()
        } else {
            &self.values[i] + slope * (a - start)
        }
    }

    /// Slope of the interval containing `a` (right-hand slope at borders).
    pub fn slope_at(&self, a: &Rational) -> &Rational {
        let i = self.interval_index(a);
        self.slopes.get(i).unwrap_or(&self.tail_slope)
    }

    /// Distance to the next border strictly above `a`; `None` once `a` has
    /// passed the last finite border.
    pub fn next_border_delta(&self, a: &Rational) -> Option<Rational> {
        let i = self.interval_index(a);
        self.borders.get(i).map(|x| x - a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    fn ranking_first() -> PaymentFunction {
        PaymentFunction::from_segments(&[int(0), int(20), int(100)], &[int(1), int(0)]).unwrap()
    }

    #[test]
    fn evaluates_by_accumulating_slopes() {
        let f = ranking_first();
        assert_eq!(f.eval(&int(0)), int(0));
        assert_eq!(f.eval(&int(10)), int(10));
        assert_eq!(f.eval(&int(60)), int(20));
        assert_eq!(f.eval(&int(500)), int(20));
        assert_eq!(f.terminal_value(), &int(20));
    }

    #[test]
    fn slope_uses_the_right_segment_at_borders() {
        let f = ranking_first();
        assert_eq!(f.slope_at(&int(10)), &int(1));
        assert_eq!(f.slope_at(&int(20)), &int(0));
        assert_eq!(f.slope_at(&int(100)), &int(0));
    }

    #[test]
    fn next_border_delta_is_strictly_ahead() {
        let f = ranking_first();
        assert_eq!(f.next_border_delta(&int(5)), Some(int(15)));
        assert_eq!(f.next_border_delta(&int(20)), Some(int(80)));
        assert_eq!(f.next_border_delta(&int(100)), None);
        assert_eq!(f.next_border_delta(&ratio(201, 2)), None);
    }

    #[test]
    fn identity_and_zero() {
        let id = PaymentFunction::identity();
        assert_eq!(id.eval(&ratio(7, 3)), ratio(7, 3));
        assert_eq!(id.slope_at(&int(5)), &int(1));
        assert_eq!(id.next_border_delta(&int(5)), None);
        let z = PaymentFunction::zero();
        assert_eq!(z.eval(&int(9)), int(0));
    }

    #[test]
    fn rejects_malformed_segments() {
        assert_eq!(
            PaymentFunction::from_segments(&[int(1), int(2)], &[int(1)]),
            Err(PaymentFunctionError::FirstBorderNotZero)
        );
        assert_eq!(
            PaymentFunction::from_segments(&[int(0), int(2), int(2)], &[int(1), int(0)]),
            Err(PaymentFunctionError::NotIncreasing)
        );
        assert!(matches!(
            PaymentFunction::from_segments(&[int(0), int(2)], &[]),
            Err(PaymentFunctionError::SlopeCount { .. })
        ));
        assert!(matches!(
            PaymentFunction::from_segments(&[int(0), int(2)], &[int(-1)]),
            Err(PaymentFunctionError::NegativeSlope(_))
        ));
    }
}
