//! Iterated-logarithm numbers.
//!
//! The innermost scales of a bubble tree grow like iterated exponentials, so
//! even `log λ` can overflow an `f64`. A [`Tower`] stores a real number as
//! `exp^h(top)` — `h` nested exponentials applied to an `f64` — and keeps the
//! representation canonical: `h = 0` whenever the value fits below
//! [`PROMOTE`], and `top` is always large enough that demotion is impossible
//! otherwise. Arithmetic is exact up to the resolution of the top level; a
//! perturbation that is invisible at that level (say adding `1` to `e^{1e4}`)
//! is dropped, which is the only sensible behaviour at this dynamic range.

use std::cmp::Ordering;
use std::fmt;

use crate::numerics::{log_add_exp, log_sub_exp};

/// Plain values above this threshold are promoted one level.
pub const PROMOTE: f64 = 1e300;

fn ln_promote() -> f64 {
    PROMOTE.ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tower {
    height: u32,
    top: f64,
}

impl Tower {
    pub const ZERO: Tower = Tower {
        height: 0,
        top: 0.0,
    };
    pub const NEG_INFINITY: Tower = Tower {
        height: 0,
        top: f64::NEG_INFINITY,
    };

    /// A plain real number (promoted if it exceeds [`PROMOTE`]).
    pub fn new(x: f64) -> Self {
        if x > PROMOTE && x.is_finite() {
            Tower {
                height: 1,
                top: x.ln(),
            }
        } else {
            Tower { height: 0, top: x }
        }
    }

    /// `e^x` for a plain exponent.
    pub fn exp_of(x: f64) -> Self {
        if x > ln_promote() {
            Tower { height: 1, top: x }
        } else {
            Tower {
                height: 0,
                top: x.exp(),
            }
        }
    }

    /// `e^t` for a tower exponent.
    pub fn exp(self) -> Self {
        if self.height == 0 {
            Tower::exp_of(self.top)
        } else {
            Tower {
                height: self.height + 1,
                top: self.top,
            }
        }
    }

    /// Natural logarithm; the value must be positive.
    pub fn ln(self) -> Self {
        match self.height {
            0 => Tower::new(self.top.ln()),
            1 => Tower {
                height: 0,
                top: self.top,
            },
            h => Tower {
                height: h - 1,
                top: self.top,
            },
        }
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn top(&self) -> f64 {
        self.top
    }

    pub fn is_plain(&self) -> bool {
        self.height == 0
    }

    /// Value as `f64` (`+inf` when promoted).
    pub fn to_f64(self) -> f64 {
        if self.height == 0 {
            self.top
        } else {
            f64::INFINITY
        }
    }

    /// `ln` of the value as `f64` (`+inf` when that overflows too).
    pub fn ln_f64(self) -> f64 {
        match self.height {
            0 => self.top.ln(),
            1 => self.top,
            _ => f64::INFINITY,
        }
    }

    /// `ln ln` of the value as `f64`; meaningful for values above `e`.
    pub fn ln_ln_f64(self) -> f64 {
        match self.height {
            0 => self.top.ln().ln(),
            1 => self.top.ln(),
            2 => self.top,
            _ => f64::INFINITY,
        }
    }

    /// `self + c` for a plain constant.
    pub fn add_f64(self, c: f64) -> Self {
        match self.height {
            0 => Tower::new(self.top + c),
            1 => Tower {
                height: 1,
                top: self.top + (c * (-self.top).exp()).ln_1p(),
            },
            _ => self,
        }
    }

    /// Sum of two positive towers.
    pub fn add(self, other: Tower) -> Self {
        if self.height == 0 && other.height == 0 {
            return Tower::new(self.top + other.top);
        }
        if self.height.max(other.height) == 1 {
            let l = log_add_exp(self.ln_f64(), other.ln_f64());
            return Tower::exp_of(l);
        }
        if self > other {
            self
        } else {
            other
        }
    }

    /// Difference `self − other` for positive `self ≥ other`.
    pub fn sub(self, other: Tower) -> Self {
        if self.height == 0 && other.height == 0 {
            return Tower::new(self.top - other.top);
        }
        if other.height == 0 && other.top <= 0.0 {
            return self.add_f64(-other.top);
        }
        if self.height == 1 {
            let l = log_sub_exp(self.top, other.ln_f64());
            return Tower::exp_of(l);
        }
        if self.height > other.height {
            self
        } else if self == other {
            Tower::ZERO
        } else {
            // Equal heights ≥ 2 with distinct tops: the difference is itself
            // astronomically large; it equals `self` to top-level resolution
            // only when the tops differ, which is the case here.
            self
        }
    }

    /// `ln(self/other)` as `f64` for positive values (may be `±inf`).
    pub fn ln_ratio(self, other: Tower) -> f64 {
        let (a, b) = (self.ln_f64(), other.ln_f64());
        if a.is_finite() && b.is_finite() {
            return a - b;
        }
        // Both logarithms overflow: the ratio is infinite when the heights
        // differ, and not resolvable at top-level precision otherwise.
        match self.height.cmp(&other.height) {
            Ordering::Greater => f64::INFINITY,
            Ordering::Less => f64::NEG_INFINITY,
            Ordering::Equal => f64::NAN,
        }
    }

    /// `exp(other − self)` for `self ≥ other` (the ratio `e^{other}/e^{self}`),
    /// which underflows to zero whenever the gap is astronomically large.
    pub fn exp_gap_below(self, other: Tower) -> f64 {
        if self.height == 0 && other.height == 0 {
            return (other.top - self.top).exp();
        }
        if self.height == 1 && other.height <= 1 {
            let lo = other.ln_f64();
            if lo == self.top {
                return 1.0;
            }
            // self − other = e^{top}(1 − e^{lo − top}) > 0 and huge.
            let gap = self.top + (-(lo - self.top).exp()).ln_1p();
            return if gap > 709.0 { 0.0 } else { (-gap.exp()).exp() };
        }
        if self == other {
            1.0
        } else {
            0.0
        }
    }
}

impl PartialOrd for Tower {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        // Canonical form: a promoted value always exceeds every plain value,
        // and greater height means greater value.
        match self.height.cmp(&other.height) {
            Ordering::Equal => self.top.partial_cmp(&other.top),
            o => Some(o),
        }
    }
}

impl fmt::Display for Tower {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.height {
            0 => write!(f, "{}", self.top),
            1 => write!(f, "exp({})", self.top),
            h => write!(f, "exp^{}({})", h, self.top),
        }
    }
}
