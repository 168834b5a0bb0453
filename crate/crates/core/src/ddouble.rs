//! Double-double arithmetic: an unevaluated sum `hi + lo` with `|lo| ≤ ulp(hi) / 2`,
//! about 106 bits of precision.
//!
//! Used where the stiffness map must round each torque once from an exact
//! intermediate, since its inverse amplifies a last-bit error by the ratio of
//! the gimbal stiffnesses.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let t = s - a;
    Dd { hi: s, lo: (a - (s - t)) + (b - t) }
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd { hi: s, lo: b - (s - a) }
}

impl Dd {
    /// Exact product of two doubles.
    pub fn prod(a: f64, b: f64) -> Self {
        let p = a * b;
        Dd { hi: p, lo: a.mul_add(b, -p) }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn scale(self, b: f64) -> Self {
        let p = Self::prod(self.hi, b);
        quick_two_sum(p.hi, self.lo.mul_add(b, p.lo))
    }
}

impl From<f64> for Dd {
    fn from(hi: f64) -> Self {
        Dd { hi, lo: 0.0 }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let s = two_sum(self.hi, o.hi);
        let t = two_sum(self.lo, o.lo);
        let s = quick_two_sum(s.hi, s.lo + t.hi);
        quick_two_sum(s.hi, s.lo + t.lo)
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + -o
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let p = Self::prod(self.hi, o.hi);
        let cross = self.hi.mul_add(o.lo, self.lo * o.hi);
        quick_two_sum(p.hi, p.lo + cross)
    }
}

impl Mul<f64> for Dd {
    type Output = Dd;
    fn mul(self, b: f64) -> Dd {
        self.scale(b)
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self - o * Dd::from(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Dd::from(q2);
        let q3 = r.hi / o.hi;
        quick_two_sum(q1, q2) + Dd::from(q3)
    }
}

impl Div<f64> for Dd {
    type Output = Dd;
    fn div(self, b: f64) -> Dd {
        self / Dd::from(b)
    }
}

// π/2 split over three doubles.
const PIO2: [f64; 3] = [1.5707963267948966, 6.123233995736766e-17, -1.4973849048591698e-33];

/// Sine and cosine of a double, accurate to a few units in 1e-32 for `|x|`
/// up to about 1e5.
pub(crate) fn sin_cos(x: f64) -> (Dd, Dd) {
    let k = (x / PIO2[0]).round();
    let r = Dd::from(x) - Dd::prod(k, PIO2[0]) - Dd::prod(k, PIO2[1]) - Dd::from(k * PIO2[2]);
    let r2 = r * r;
    // Horner in the nested form 1 - r²/(n(n+1)) (1 - ...), |r| ≤ π/4.
    let (mut s, mut c) = (Dd::from(1.0), Dd::from(1.0));
    for n in (1..=13).rev() {
        let n = n as f64;
        s = Dd::from(1.0) - r2 * s / (2.0 * n * (2.0 * n + 1.0));
        c = Dd::from(1.0) - r2 * c / ((2.0 * n - 1.0) * 2.0 * n);
    }
    let s = r * s;
    match (k as i64).rem_euclid(4) {
        0 => (s, c),
        1 => (c, -s),
        2 => (-s, -c),
        _ => (-c, s),
    }
}

/// Sine and cosine of a double-double, to first order in `x.lo`.
pub(crate) fn sin_cos_dd(x: Dd) -> (Dd, Dd) {
    let (s, c) = sin_cos(x.hi);
    (s + c * x.lo, c - s * x.lo)
}
