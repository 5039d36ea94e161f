//! Rational external angles mod 1 with exact arithmetic.

use num_rational::Rational64;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use std::fmt;

/// A rational angle in `[0, 1)`, stored reduced. Multiplication by the map
/// degree acts as `theta -> l theta mod 1` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Angle(Rational64);

impl Angle {
    pub fn new(num: i64, den: i64) -> Self {
        assert!(den > 0, "angle denominator must be positive");
        let mut r = Rational64::new(num, den);
        r -= r.floor();
        if r.is_negative() {
            r += Rational64::new(1, 1);
        }
        Angle(r)
    }

    pub fn zero() -> Self {
        Angle(Rational64::zero())
    }

    pub fn numer(&self) -> i64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i64 {
        *self.0.denom()
    }

    pub fn to_f64(&self) -> f64 {
        self.numer() as f64 / self.denom() as f64
    }

    /// `l * theta mod 1`, exact.
    pub fn times(&self, l: u32) -> Angle {
        let mut r = self.0 * Rational64::from_integer(l as i64);
        r -= r.floor();
        Angle(r)
    }

    /// The `l` preimages `(theta + k) / l`, in increasing order.
    pub fn preimages(&self, l: u32) -> Vec<Angle> {
        let l64 = l as i64;
        (0..l64)
            .map(|k| Angle((self.0 + Rational64::from_integer(k)) / Rational64::from_integer(l64)))
            .collect()
    }

    /// Is `self` strictly inside the counterclockwise open arc from `a` to `b`?
    /// When `a == b` the arc is the full circle minus the point.
    pub fn in_open_arc(&self, a: Angle, b: Angle) -> bool {
        if a == b {
            return *self != a;
        }
        if a < b {
            a < *self && *self < b
        } else {
            *self > a || *self < b
        }
    }

    /// Counterclockwise arc length from `a` to `b` in `[0, 1)`.
    pub fn arc_len(a: Angle, b: Angle) -> f64 {
        let d = b.to_f64() - a.to_f64();
        if d >= 0.0 {
            d
        } else {
            d + 1.0
        }
    }

    /// Midpoint of the counterclockwise arc from `a` to `b` (exact).
    pub fn arc_midpoint(a: Angle, b: Angle) -> Angle {
        let half = Rational64::new(1, 2);
        let mut d = b.0 - a.0;
        if d.is_negative() || (d.is_zero() && a == b) {
            d += Rational64::from_integer(1);
        }
        let mut m = a.0 + d * half;
        m -= m.floor();
        Angle(m)
    }

    /// Point at fraction `num/den` along the counterclockwise arc from `a`
    /// to `b` (exact).
    pub fn arc_interp(a: Angle, b: Angle, num: i64, den: i64) -> Angle {
        assert!(den > 0 && (0..=den).contains(&num));
        let mut d = b.0 - a.0;
        if d.is_negative() || d.is_zero() {
            d += Rational64::from_integer(1);
        }
        let mut m = a.0 + d * Rational64::new(num, den);
        m -= m.floor();
        Angle(m)
    }

    /// Circular distance in `[0, 1/2]`.
    pub fn circ_dist(a: Angle, b: Angle) -> f64 {
        let d = (a.to_f64() - b.to_f64()).abs();
        d.min(1.0 - d)
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numer(), self.denom())
    }
}

/// The forward orbit of `theta` under `theta -> l theta` until it repeats;
/// returns the cycle when `theta` is periodic, `None` when merely preperiodic
/// within the probe bound.
pub fn doubling_cycle(theta: Angle, l: u32, max_period: usize) -> Option<Vec<Angle>> {
    let mut orbit = vec![theta];
    let mut t = theta;
    for _ in 0..max_period {
        t = t.times(l);
        if t == theta {
            return Some(orbit);
        }
        orbit.push(t);
    }
    None
}

/// All periodic cycles of `theta -> l theta` with exact period `q`,
/// enumerated as orbits of `k / (l^q - 1)`. Each cycle is reported once,
/// starting from its smallest member.
pub fn cycles_of_period(l: u32, q: u32) -> Vec<Vec<Angle>> {
    let den = (l as i64).pow(q) - 1;
    let mut seen = vec![false; den as usize];
    let mut out = Vec::new();
    for k in 1..den {
        if seen[k as usize] {
            continue;
        }
        let start = Angle::new(k, den);
        let mut cycle = vec![start];
        let mut t = start.times(l);
        while t != start {
            cycle.push(t);
            t = t.times(l);
        }
        for a in &cycle {
            // Orbit members have the same denominator dividing l^q - 1.
            let idx = a.numer() * (den / a.denom());
            seen[idx as usize] = true;
        }
        if cycle.len() == q as usize {
            out.push(cycle);
        }
    }
    out
}

/// Does the cycle map by a rigid rotation of the circular order? Returns the
/// combinatorial rotation number `p/q` when it does.
pub fn rotation_number(cycle: &[Angle], l: u32) -> Option<(usize, usize)> {
    let q = cycle.len();
    let mut sorted: Vec<Angle> = cycle.to_vec();
    sorted.sort();
    let pos = |a: Angle| sorted.iter().position(|&x| x == a).unwrap();
    let first_shift = (pos(sorted[0].times(l)) + q - 0) % q;
    for (i, &a) in sorted.iter().enumerate() {
        let img = a.times(l);
        if !sorted.contains(&img) {
            return None;
        }
        if (pos(img) + q - i) % q != first_shift {
            return None;
        }
    }
    Some((first_shift, q))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn times_is_exact() {
        let a = Angle::new(1, 7);
        assert_eq!(a.times(2), Angle::new(2, 7));
        assert_eq!(a.times(2).times(2), Angle::new(4, 7));
        assert_eq!(a.times(2).times(2).times(2), Angle::new(1, 7));
    }

    #[test]
    fn preimages_roundtrip() {
        let a = Angle::new(3, 14);
        for p in a.preimages(2) {
            assert_eq!(p.times(2), a);
        }
        for p in a.preimages(4) {
            assert_eq!(p.times(4), a);
        }
    }

    #[test]
    fn arcs_and_wrap() {
        let a = Angle::new(4, 7);
        let b = Angle::new(1, 7);
        // Wrapping arc (4/7, 8/7) contains 0 and 1/14.
        assert!(Angle::zero().in_open_arc(a, b));
        assert!(Angle::new(1, 14).in_open_arc(a, b));
        assert!(!Angle::new(2, 7).in_open_arc(a, b));
        assert!((Angle::arc_len(a, b) - 4.0 / 7.0).abs() < 1e-15);
        assert_eq!(Angle::arc_midpoint(a, b), Angle::new(6, 7));
        assert_eq!(
            Angle::arc_midpoint(Angle::new(1, 7), Angle::new(2, 7)),
            Angle::new(3, 14)
        );
    }

    #[test]
    fn alpha_cycle_rotation_numbers() {
        // {1/7, 2/7, 4/7} is the rotation-number-1/3 doubling cycle.
        let c = doubling_cycle(Angle::new(1, 7), 2, 10).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(rotation_number(&c, 2), Some((1, 3)));
        // {1/3, 2/3} has rotation number 1/2.
        let c = doubling_cycle(Angle::new(1, 3), 2, 10).unwrap();
        assert_eq!(rotation_number(&c, 2), Some((1, 2)));
        // {1/5, 2/5, 4/5, 3/5} is periodic of period 4 but not rotational.
        let c = doubling_cycle(Angle::new(1, 5), 2, 10).unwrap();
        assert_eq!(c.len(), 4);
        assert_eq!(rotation_number(&c, 2), None);
    }

    #[test]
    fn cycle_enumeration_counts() {
        // Period-2 doubling cycles: only {1/3, 2/3}.
        let cs = cycles_of_period(2, 2);
        assert_eq!(cs.len(), 1);
        // Period-3: {1/7,...} and {3/7,...}.
        let cs = cycles_of_period(2, 3);
        assert_eq!(cs.len(), 2);
    }
}
