//! Closed intervals: the uncertainty pair [μ̲, μ̄], products of such pairs,
//! and the interval arithmetic used to bound expressions over boxes.

use crate::error::{Error, Result};

/// A closed interval [lo, hi] of mean values.  `lo == hi` is allowed and
/// collapses the axis wherever the interval is used as a search domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyInterval {
    lo: f64,
    hi: f64,
}

impl UncertaintyInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::NonFinite("interval endpoint"));
        }
        if lo > hi {
            return Err(Error::InvalidInterval { lo, hi });
        }
        // Normalize -0.0 so structurally equal intervals compare bit-equal.
        Ok(Self { lo: lo + 0.0, hi: hi + 0.0 })
    }

    pub fn point(v: f64) -> Result<Self> {
        Self::new(v, v)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    /// Largest absolute value attained on the interval.
    pub fn abs_max(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    /// Scale by a nonnegative factor, keeping endpoint order.
    pub fn scale(&self, factor: f64) -> Result<Self> {
        debug_assert!(factor >= 0.0);
        Self::new(self.lo * factor, self.hi * factor)
    }

    pub(crate) fn as_arith(&self) -> Interval {
        Interval { lo: self.lo, hi: self.hi }
    }
}

/// A product of uncertainty intervals: the compact box Λ over which a maximal
/// random vector spreads its values.
#[derive(Debug, Clone, PartialEq)]
pub struct MaximalVector {
    intervals: Vec<UncertaintyInterval>,
}

impl MaximalVector {
    pub fn new(intervals: Vec<UncertaintyInterval>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::invalid("maximal vector needs at least one interval"));
        }
        Ok(Self { intervals })
    }

    /// Convenience constructor from (lo, hi) pairs.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|&(lo, hi)| UncertaintyInterval::new(lo, hi))
                .collect::<Result<_>>()?,
        )
    }

    pub fn dim(&self) -> usize {
        self.intervals.len()
    }

    pub fn intervals(&self) -> &[UncertaintyInterval] {
        &self.intervals
    }

    pub fn interval(&self, axis: usize) -> UncertaintyInterval {
        self.intervals[axis]
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.intervals.iter().map(|i| i.midpoint()).collect()
    }
}

/// Plain interval arithmetic over f64.  No directed rounding: certified
/// tolerances in this crate sit many orders of magnitude above one ulp of the
/// quantities involved, so ordinary rounding slack is immaterial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub const ZERO: Interval = Interval { lo: 0.0, hi: 0.0 };

    pub fn abs_max(self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn add(self, o: Self) -> Self {
        Self { lo: self.lo + o.lo, hi: self.hi + o.hi }
    }

    pub fn sub(self, o: Self) -> Self {
        Self { lo: self.lo - o.hi, hi: self.hi - o.lo }
    }

    pub fn neg(self) -> Self {
        Self { lo: -self.hi, hi: -self.lo }
    }

    pub fn mul(self, o: Self) -> Self {
        let c = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi];
        let mut lo = c[0];
        let mut hi = c[0];
        for &v in &c[1..] {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Self { lo, hi }
    }

    pub fn scale(self, k: f64) -> Self {
        if k >= 0.0 {
            Self { lo: self.lo * k, hi: self.hi * k }
        } else {
            Self { lo: self.hi * k, hi: self.lo * k }
        }
    }

    pub fn min(self, o: Self) -> Self {
        Self { lo: self.lo.min(o.lo), hi: self.hi.min(o.hi) }
    }

    pub fn max(self, o: Self) -> Self {
        Self { lo: self.lo.max(o.lo), hi: self.hi.max(o.hi) }
    }

    pub fn abs(self) -> Self {
        if self.lo >= 0.0 {
            self
        } else if self.hi <= 0.0 {
            self.neg()
        } else {
            Self { lo: 0.0, hi: (-self.lo).max(self.hi) }
        }
    }

    /// Smallest interval containing both operands.
    pub fn hull(self, o: Self) -> Self {
        Self { lo: self.lo.min(o.lo), hi: self.hi.max(o.hi) }
    }

    pub fn pow(self, k: u32) -> Self {
        debug_assert!(k >= 1);
        if k % 2 == 1 {
            Self { lo: powi(self.lo, k), hi: powi(self.hi, k) }
        } else if self.lo >= 0.0 {
            Self { lo: powi(self.lo, k), hi: powi(self.hi, k) }
        } else if self.hi <= 0.0 {
            Self { lo: powi(self.hi, k), hi: powi(self.lo, k) }
        } else {
            Self { lo: 0.0, hi: powi(self.abs_max(), k) }
        }
    }
}

/// Integer power by repeated multiplication; matches the evaluator exactly.
pub(crate) fn powi(base: f64, k: u32) -> f64 {
    let mut acc = base;
    for _ in 1..k {
        acc *= base;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_rejects_inverted_endpoints() {
        assert!(UncertaintyInterval::new(1.0, 0.0).is_err());
        assert!(UncertaintyInterval::new(0.0, 0.0).is_ok());
        assert!(UncertaintyInterval::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn arith_mul_covers_sign_cases() {
        let a = Interval { lo: -1.0, hi: 2.0 };
        let b = Interval { lo: -3.0, hi: 0.5 };
        let p = a.mul(b);
        assert_eq!(p.lo, -6.0);
        assert_eq!(p.hi, 3.0);
    }

    #[test]
    fn arith_abs_straddles_zero() {
        let a = Interval { lo: -2.0, hi: 1.0 };
        assert_eq!(a.abs().lo, 0.0);
        assert_eq!(a.abs().hi, 2.0);
    }

    #[test]
    fn arith_even_pow_straddling_zero_starts_at_zero() {
        let a = Interval { lo: -2.0, hi: 1.0 };
        let p = a.pow(2);
        assert_eq!(p.lo, 0.0);
        assert_eq!(p.hi, 4.0);
        let q = a.pow(3);
        assert_eq!(q.lo, -8.0);
        assert_eq!(q.hi, 1.0);
    }
}
