//! Compensated (double-double) arithmetic for prefix sums.
//!
//! Segment moments are differences of prefix sums that can be many orders of
//! magnitude larger than the result; carrying the rounding error alongside
//! each prefix keeps those differences accurate to working precision.

use std::ops::{Add, Mul, Sub};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Dd {
    hi: f64,
    lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn fast_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

impl Add<f64> for Dd {
    type Output = Dd;

    #[inline]
    fn add(self, x: f64) -> Dd {
        let (s, e) = two_sum(self.hi, x);
        let (hi, lo) = fast_two_sum(s, e + self.lo);
        Dd { hi, lo }
    }
}

impl Add for Dd {
    type Output = Dd;

    #[inline]
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (hi, lo) = fast_two_sum(s, e + self.lo + o.lo);
        Dd { hi, lo }
    }
}

impl Sub for Dd {
    type Output = Dd;

    #[inline]
    fn sub(self, o: Dd) -> Dd {
        self + Dd {
            hi: -o.hi,
            lo: -o.lo,
        }
    }
}

impl Mul<f64> for Dd {
    type Output = Dd;

    #[inline]
    fn mul(self, x: f64) -> Dd {
        let p = self.hi * x;
        let err = self.hi.mul_add(x, -p);
        let (hi, lo) = fast_two_sum(p, err + self.lo * x);
        Dd { hi, lo }
    }
}
