//! Closed real intervals with the natural interval extension of the
//! operators used by dynamics expressions.
//!
//! Arithmetic is performed in plain double precision. No outward rounding is
//! applied, so enclosures may miss the exact range by a few ulps.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use super::ExprError;

/// Closed interval `[lo, hi]` with finite bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    lo: f64,
    hi: f64,
}

/// Row-major square matrix of intervals.
pub type IntervalMatrix = Vec<Vec<Interval>>;

impl Interval {
    /// Panics if `lo > hi` or either bound is not finite.
    pub fn new(lo: f64, hi: f64) -> Self {
        Self::try_new(lo, hi).unwrap_or_else(|| panic!("invalid interval [{lo}, {hi}]"))
    }

    pub fn try_new(lo: f64, hi: f64) -> Option<Self> {
        (lo.is_finite() && hi.is_finite() && lo <= hi).then_some(Self { lo, hi })
    }

    pub fn point(x: f64) -> Self {
        Self::new(x, x)
    }

    /// `[c - r, c + r]`.
    pub fn centered(c: f64, r: f64) -> Self {
        Self::new(c - r, c + r)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn rad(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Largest absolute value attained.
    pub fn mag(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn intersects(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval::new(self.lo.min(other.lo), self.hi.max(other.hi))
    }

    pub fn inflate(&self, r: f64) -> Interval {
        Interval::new(self.lo - r, self.hi + r)
    }

    pub fn scale(&self, k: f64) -> Interval {
        let (a, b) = (self.lo * k, self.hi * k);
        Interval::new(a.min(b), a.max(b))
    }

    /// Range of `x^2`, tighter than `x * x` when the interval straddles zero.
    pub fn sqr(&self) -> Interval {
        self.powi(2)
    }

    pub fn powi(&self, n: u32) -> Interval {
        if n == 0 {
            return Interval::point(1.0);
        }
        let e = n as i32;
        let (a, b) = (self.lo.powi(e), self.hi.powi(e));
        if n % 2 == 1 {
            Interval::new(a, b)
        } else if self.lo >= 0.0 {
            Interval::new(a, b)
        } else if self.hi <= 0.0 {
            Interval::new(b, a)
        } else {
            Interval::new(0.0, a.max(b))
        }
    }

    pub fn try_div(&self, rhs: &Interval) -> Result<Interval, ExprError> {
        if rhs.contains(0.0) {
            return Err(ExprError::domain("division", format!("divisor {rhs} contains 0")));
        }
        let inv = Interval::new(1.0 / rhs.hi, 1.0 / rhs.lo);
        Ok(*self * inv)
    }

    pub fn sin(&self) -> Interval {
        if self.width() >= TAU {
            return Interval::new(-1.0, 1.0);
        }
        let (a, b) = (self.lo.sin(), self.hi.sin());
        let mut lo = a.min(b);
        let mut hi = a.max(b);
        if hits_lattice(self.lo, self.hi, FRAC_PI_2, TAU) {
            hi = 1.0;
        }
        if hits_lattice(self.lo, self.hi, -FRAC_PI_2, TAU) {
            lo = -1.0;
        }
        Interval::new(lo, hi)
    }

    pub fn cos(&self) -> Interval {
        if self.width() >= TAU {
            return Interval::new(-1.0, 1.0);
        }
        let (a, b) = (self.lo.cos(), self.hi.cos());
        let mut lo = a.min(b);
        let mut hi = a.max(b);
        if hits_lattice(self.lo, self.hi, 0.0, TAU) {
            hi = 1.0;
        }
        if hits_lattice(self.lo, self.hi, PI, TAU) {
            lo = -1.0;
        }
        Interval::new(lo, hi)
    }

    pub fn tan(&self) -> Result<Interval, ExprError> {
        if self.width() >= PI || hits_lattice(self.lo, self.hi, FRAC_PI_2, PI) {
            return Err(ExprError::domain("tan", format!("{self} contains a pole")));
        }
        Ok(Interval::new(self.lo.tan(), self.hi.tan()))
    }

    pub fn exp(&self) -> Result<Interval, ExprError> {
        Interval::try_new(self.lo.exp(), self.hi.exp())
            .ok_or_else(|| ExprError::domain("exp", format!("overflow on {self}")))
    }

    pub fn ln(&self) -> Result<Interval, ExprError> {
        if self.lo <= 0.0 {
            return Err(ExprError::domain("ln", format!("{self} is not positive")));
        }
        Ok(Interval::new(self.lo.ln(), self.hi.ln()))
    }

    pub fn sqrt(&self) -> Result<Interval, ExprError> {
        if self.lo < 0.0 {
            return Err(ExprError::domain("sqrt", format!("{self} has negative part")));
        }
        Ok(Interval::new(self.lo.sqrt(), self.hi.sqrt()))
    }
}

/// Whether some point `offset + k * period` lies in `[lo, hi]`.
fn hits_lattice(lo: f64, hi: f64, offset: f64, period: f64) -> bool {
    let k = ((lo - offset) / period).ceil();
    offset + k * period <= hi
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, rhs: Interval) -> Interval {
        Interval::new(self.lo + rhs.lo, self.hi + rhs.hi)
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, rhs: Interval) -> Interval {
        Interval::new(self.lo - rhs.hi, self.hi - rhs.lo)
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, rhs: Interval) -> Interval {
        let p = [
            self.lo * rhs.lo,
            self.lo * rhs.hi,
            self.hi * rhs.lo,
            self.hi * rhs.hi,
        ];
        let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Interval::new(lo, hi)
    }
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval::new(-self.hi, -self.lo)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

impl TryFrom<[f64; 2]> for Interval {
    type Error = String;
    fn try_from(v: [f64; 2]) -> Result<Self, Self::Error> {
        Interval::try_new(v[0], v[1]).ok_or_else(|| format!("invalid interval [{}, {}]", v[0], v[1]))
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}
