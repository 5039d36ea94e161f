//! Exact evaluation, differentiation, iteration, and fixed/periodic-point
//! classification for unicritical polynomials `f(z) = z^l + c`.

use crate::complex::{cx, is_finite, nth_roots, Cx, OVERFLOW_GUARD};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Relative fixed-point residual tolerance.
pub const TOL_FIX: f64 = 1e-9;
/// Root-of-unity denominator cap for parabolic detection.
pub const Q_MAX: u32 = 64;
/// Degree budget for the periodic-point root finder (`l^p` roots).
pub const PERIODIC_DEGREE_CAP: usize = 4096;

/// The map `f(z) = z^l + c` with even degree `l >= 2`. The critical point is
/// exactly 0 and `Df(z) = l z^{l-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnicriticalMap {
    degree: u32,
    c: Cx,
}

impl UnicriticalMap {
    pub fn new(degree: u32, c: Cx) -> Result<Self> {
        if degree < 2 || degree % 2 != 0 {
            return Err(Error::Config(format!(
                "degree must be even and >= 2, got {degree}"
            )));
        }
        if !is_finite(c) {
            return Err(Error::Config("parameter c must be finite".into()));
        }
        Ok(UnicriticalMap { degree, c })
    }

    /// Standard quadratic family member `z^2 + c`.
    pub fn quadratic(c: Cx) -> Self {
        UnicriticalMap { degree: 2, c }
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn param(&self) -> Cx {
        self.c
    }

    /// Unchecked application; hot loops use this directly.
    #[inline]
    pub fn step(&self, z: Cx) -> Cx {
        z.powu(self.degree) + self.c
    }

    /// `z^l + c` as powers-and-add, rejecting non-finite results.
    pub fn evaluate(&self, z: Cx) -> Result<Cx> {
        let w = self.step(z);
        if is_finite(w) {
            Ok(w)
        } else {
            Err(Error::Diverged { step: 1 })
        }
    }

    /// `Df(z) = l z^{l-1}`.
    #[inline]
    pub fn derivative(&self, z: Cx) -> Cx {
        cx(self.degree as f64, 0.0) * z.powu(self.degree - 1)
    }

    /// `f^n(z)` with the overflow guard.
    pub fn iterate(&self, z: Cx, n: usize) -> Result<Cx> {
        let mut w = z;
        for k in 0..n {
            w = self.step(w);
            if !is_finite(w) || w.norm_sqr() > OVERFLOW_GUARD * OVERFLOW_GUARD {
                return Err(Error::Diverged { step: k + 1 });
            }
        }
        Ok(w)
    }

    /// `D(f^n)(z)` by the chain rule along the orbit.
    pub fn derivative_of_iterate(&self, z: Cx, n: usize) -> Result<Cx> {
        let mut w = z;
        let mut d = cx(1.0, 0.0);
        for k in 0..n {
            d *= self.derivative(w);
            w = self.step(w);
            if !is_finite(w) || w.norm_sqr() > OVERFLOW_GUARD * OVERFLOW_GUARD {
                return Err(Error::Diverged { step: k + 1 });
            }
        }
        Ok(d)
    }

    /// Preimages `f^{-1}(w)`, the `l`-th roots of `w - c`.
    pub fn preimages(&self, w: Cx) -> Vec<Cx> {
        nth_roots(w - self.c, self.degree)
    }
}

/// Orbit `z, f(z), ..., f^n(z)`; stops early when the overflow guard trips,
/// returning the finite prefix and the step index that diverged.
pub fn orbit_prefix(f: &UnicriticalMap, z: Cx, n: usize) -> (Vec<Cx>, Option<usize>) {
    let mut pts = Vec::with_capacity(n + 1);
    pts.push(z);
    let mut w = z;
    for k in 0..n {
        w = f.step(w);
        if !is_finite(w) || w.norm_sqr() > OVERFLOW_GUARD * OVERFLOW_GUARD {
            return (pts, Some(k + 1));
        }
        pts.push(w);
    }
    (pts, None)
}

/// Orbit of length `n + 1` starting at `z`; errors as "diverged" when an
/// iterate exceeds the overflow guard (use [`orbit_prefix`] to keep the prefix).
pub fn orbit(f: &UnicriticalMap, z: Cx, n: usize) -> Result<Vec<Cx>> {
    let (pts, diverged) = orbit_prefix(f, z, n);
    match diverged {
        Some(step) => Err(Error::Diverged { step }),
        None => Ok(pts),
    }
}

/// Multiplier classes of periodic points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointClass {
    Superattracting,
    Attracting,
    Repelling,
    Parabolic,
    IrrationallyIndifferent,
}

/// Role of a fixed point relative to the puzzle construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FixedPointRole {
    /// The dividing fixed point (several rays co-land).
    Alpha,
    /// The non-dividing fixed point, landing point of the angle-0 ray.
    Beta,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FixedPointInfo {
    pub location: Cx,
    pub multiplier: Cx,
    pub class: PointClass,
    pub role: Option<FixedPointRole>,
}

/// Classify a multiplier. Pure in `m`: attracting below `1 - tol`, repelling
/// above `1 + tol`, parabolic on the unit band when within `tol` of a root of
/// unity with denominator at most [`Q_MAX`], else irrationally indifferent.
pub fn classify_multiplier(m: Cx, tol: f64) -> PointClass {
    let r = m.norm();
    if r <= tol {
        return PointClass::Superattracting;
    }
    if r < 1.0 - tol {
        return PointClass::Attracting;
    }
    if r > 1.0 + tol {
        return PointClass::Repelling;
    }
    let theta = m.arg();
    for q in 1..=Q_MAX {
        let p = (theta * q as f64 / std::f64::consts::TAU).round();
        let root = Cx::from_polar(1.0, std::f64::consts::TAU * p / q as f64);
        if (m - root).norm() <= tol {
            return PointClass::Parabolic;
        }
    }
    PointClass::IrrationallyIndifferent
}

/// All roots of `f^p(z) - z = 0` by Durand-Kerner iteration with Newton
/// polish. The polynomial is monic of degree `l^p` and is evaluated by
/// iterating `f`, so no coefficient expansion is needed.
fn periodic_equation_roots(f: &UnicriticalMap, p: usize) -> Result<Vec<Cx>> {
    let degree = (f.degree() as usize).checked_pow(p as u32).unwrap_or(usize::MAX);
    if degree > PERIODIC_DEGREE_CAP {
        return Err(Error::DegreeTooLarge { degree });
    }
    let eval = |z: Cx| -> Cx {
        let mut w = z;
        for _ in 0..p {
            w = f.step(w);
        }
        w - z
    };
    let eval_deriv = |z: Cx| -> Cx {
        let mut w = z;
        let mut d = cx(1.0, 0.0);
        for _ in 0..p {
            d *= f.derivative(w);
            w = f.step(w);
        }
        d - cx(1.0, 0.0)
    };

    // Initial guesses on a circle just outside the filled Julia set, with an
    // irrational rotation offset so no guess hits a symmetry axis.
    let radius = (1.0 + f.param().norm()).powf(1.0 / (f.degree() as f64 - 1.0)) + 0.5;
    let golden = 0.618_033_988_749_894_9_f64;
    let mut roots: Vec<Cx> = (0..degree)
        .map(|k| Cx::from_polar(radius, std::f64::consts::TAU * (k as f64 / degree as f64 + golden)))
        .collect();

    let max_sweeps = 400;
    for _ in 0..max_sweeps {
        let mut max_move = 0.0_f64;
        for i in 0..degree {
            let zi = roots[i];
            let mut denom = cx(1.0, 0.0);
            for (j, &zj) in roots.iter().enumerate() {
                if j != i {
                    denom *= zi - zj;
                }
            }
            if denom.norm_sqr() == 0.0 {
                continue;
            }
            let delta = eval(zi) / denom;
            roots[i] = zi - delta;
            max_move = max_move.max(delta.norm());
        }
        if max_move < 1e-13 * radius.max(1.0) {
            break;
        }
    }
    // Newton polish; harmless near multiple roots, quadratic near simple ones.
    for r in roots.iter_mut() {
        for _ in 0..8 {
            let v = eval(*r);
            let d = eval_deriv(*r);
            if d.norm_sqr() < 1e-30 {
                break;
            }
            let step = v / d;
            *r -= step;
            if step.norm() < 1e-15 * (1.0 + r.norm()) {
                break;
            }
        }
    }
    Ok(roots)
}

/// All `l` fixed points counted with multiplicity, classified, roles left
/// unassigned (role assignment needs the angle-0 ray; see
/// [`crate::ray::fixed_points_with_roles`]).
pub fn fixed_points(f: &UnicriticalMap) -> Result<Vec<FixedPointInfo>> {
    let locations: Vec<Cx> = if f.degree() == 2 {
        // z^2 - z + c = 0 in closed form.
        let disc = (cx(1.0, 0.0) - 4.0 * f.param()).sqrt();
        vec![(cx(1.0, 0.0) + disc) / 2.0, (cx(1.0, 0.0) - disc) / 2.0]
    } else {
        periodic_equation_roots(f, 1)?
    };
    Ok(locations
        .into_iter()
        .map(|z| {
            let m = f.derivative(z);
            FixedPointInfo {
                location: z,
                multiplier: m,
                class: classify_multiplier(m, TOL_FIX.sqrt()),
                role: None,
            }
        })
        .collect())
}

/// Periodic points of exact period `p`: roots of `f^p(z) - z` with the
/// multiplier of `f^p`, filtered to exclude points of period properly
/// dividing `p`.
pub fn periodic_points(f: &UnicriticalMap, p: usize) -> Result<Vec<FixedPointInfo>> {
    if p == 0 {
        return Err(Error::Config("period must be >= 1".into()));
    }
    if p == 1 {
        return fixed_points(f);
    }
    let roots = periodic_equation_roots(f, p)?;
    let tol = 1e-7;
    let mut out = Vec::new();
    for z in roots {
        // Exact-period filter: reject roots fixed by a proper divisor iterate.
        let mut proper = false;
        for d in 1..p {
            if p % d == 0 {
                if let Ok(w) = f.iterate(z, d) {
                    if (w - z).norm() <= tol * (1.0 + z.norm()) {
                        proper = true;
                        break;
                    }
                }
            }
        }
        if proper {
            continue;
        }
        if let Ok(m) = f.derivative_of_iterate(z, p) {
            out.push(FixedPointInfo {
                location: z,
                multiplier: m,
                class: classify_multiplier(m, TOL_FIX.sqrt()),
                role: None,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::cx;

    fn close(a: Cx, b: Cx, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn evaluate_known_values() {
        // (1+i)^2 = 2i for z^2.
        let f = UnicriticalMap::quadratic(cx(0.0, 0.0));
        assert!(close(f.evaluate(cx(1.0, 1.0)).unwrap(), cx(0.0, 2.0), 1e-15));
        // z = 2 is fixed for z^2 - 2.
        let g = UnicriticalMap::quadratic(cx(-2.0, 0.0));
        assert!(close(g.evaluate(cx(2.0, 0.0)).unwrap(), cx(2.0, 0.0), 1e-15));
        // (-1)^4 = 1 for z^4.
        let h = UnicriticalMap::new(4, cx(0.0, 0.0)).unwrap();
        assert!(close(h.evaluate(cx(-1.0, 0.0)).unwrap(), cx(1.0, 0.0), 1e-15));
    }

    #[test]
    fn derivative_known_values() {
        let f = UnicriticalMap::quadratic(cx(0.4, -0.2));
        assert!(close(f.derivative(cx(3.0, 0.0)), cx(6.0, 0.0), 1e-15));
        assert!(close(f.derivative(cx(0.0, 0.0)), cx(0.0, 0.0), 1e-15));
        let h = UnicriticalMap::new(4, cx(0.3, 0.1)).unwrap();
        assert!(close(h.derivative(cx(1.0, 0.0)), cx(4.0, 0.0), 1e-15));
    }

    #[test]
    fn orbit_known_values() {
        let f = UnicriticalMap::quadratic(cx(0.0, 0.0));
        let o = orbit(&f, cx(2.0, 0.0), 2).unwrap();
        assert_eq!(o.len(), 3);
        assert!(close(o[2], cx(16.0, 0.0), 1e-12));

        // n = 0 is the identity case.
        let o0 = orbit(&f, cx(0.3, 0.4), 0).unwrap();
        assert_eq!(o0.len(), 1);

        // Superattracting 2-cycle of z^2 - 1.
        let g = UnicriticalMap::quadratic(cx(-1.0, 0.0));
        let o = orbit(&g, cx(0.0, 0.0), 4).unwrap();
        let expect = [0.0, -1.0, 0.0, -1.0, 0.0];
        for (p, e) in o.iter().zip(expect) {
            assert!(close(*p, cx(e, 0.0), 1e-15));
        }
    }

    #[test]
    fn orbit_diverges_with_prefix() {
        let f = UnicriticalMap::quadratic(cx(0.0, 0.0));
        let (prefix, diverged) = orbit_prefix(&f, cx(10.0, 0.0), 100);
        assert!(diverged.is_some());
        assert!(prefix.len() > 1);
        assert!(orbit(&f, cx(10.0, 0.0), 100).is_err());
    }

    #[test]
    fn fixed_points_c0() {
        let f = UnicriticalMap::quadratic(cx(0.0, 0.0));
        let mut pts = fixed_points(&f).unwrap();
        pts.sort_by(|a, b| a.location.re.partial_cmp(&b.location.re).unwrap());
        assert!(close(pts[0].location, cx(0.0, 0.0), 1e-12));
        assert_eq!(pts[0].class, PointClass::Superattracting);
        assert!(close(pts[1].location, cx(1.0, 0.0), 1e-12));
        assert!(close(pts[1].multiplier, cx(2.0, 0.0), 1e-12));
        assert_eq!(pts[1].class, PointClass::Repelling);
    }

    #[test]
    fn fixed_points_parabolic_quarter() {
        let f = UnicriticalMap::quadratic(cx(0.25, 0.0));
        let pts = fixed_points(&f).unwrap();
        assert_eq!(pts.len(), 2); // counted with multiplicity
        for p in &pts {
            assert!(close(p.location, cx(0.5, 0.0), 1e-6));
            assert_eq!(p.class, PointClass::Parabolic);
        }
    }

    #[test]
    fn fixed_points_chebyshev() {
        let f = UnicriticalMap::quadratic(cx(-2.0, 0.0));
        let mut pts = fixed_points(&f).unwrap();
        pts.sort_by(|a, b| a.location.re.partial_cmp(&b.location.re).unwrap());
        assert!(close(pts[0].location, cx(-1.0, 0.0), 1e-12));
        assert!(close(pts[0].multiplier, cx(-2.0, 0.0), 1e-12));
        assert_eq!(pts[0].class, PointClass::Repelling);
        assert!(close(pts[1].location, cx(2.0, 0.0), 1e-12));
        assert!(close(pts[1].multiplier, cx(4.0, 0.0), 1e-12));
    }

    #[test]
    fn fixed_point_residual_bound() {
        for c in [cx(0.1, 0.3), cx(-1.2, 0.4), cx(0.25, 0.0)] {
            let f = UnicriticalMap::quadratic(c);
            let pts = fixed_points(&f).unwrap();
            assert_eq!(pts.len(), 2);
            for p in &pts {
                let res = (f.step(p.location) - p.location).norm();
                assert!(res <= 1e-9 * p.location.norm().max(1.0));
            }
        }
        let h = UnicriticalMap::new(4, cx(0.2, 0.1)).unwrap();
        let pts = fixed_points(&h).unwrap();
        assert_eq!(pts.len(), 4);
        for p in &pts {
            let res = (h.step(p.location) - p.location).norm();
            assert!(res <= 1e-9 * p.location.norm().max(1.0));
        }
    }

    #[test]
    fn classify_multiplier_cases() {
        let tol = 1e-6;
        assert_eq!(classify_multiplier(cx(2.0, 0.0), tol), PointClass::Repelling);
        assert_eq!(classify_multiplier(cx(1.0, 0.0), tol), PointClass::Parabolic);
        assert_eq!(
            classify_multiplier(cx(0.0, 0.0), tol),
            PointClass::Superattracting
        );
        assert_eq!(classify_multiplier(cx(0.5, 0.1), tol), PointClass::Attracting);
        // e^{2 pi i / 3} is a root of unity with q = 3 <= Q_MAX.
        let m = Cx::from_polar(1.0, std::f64::consts::TAU / 3.0);
        assert_eq!(classify_multiplier(m, tol), PointClass::Parabolic);
        // Golden-mean rotation number: not within tol of any low-order root.
        let m = Cx::from_polar(1.0, std::f64::consts::TAU * 0.618_033_988_749);
        assert_eq!(
            classify_multiplier(m, tol),
            PointClass::IrrationallyIndifferent
        );
    }

    #[test]
    fn periodic_points_c0_period2() {
        // z^4 - z = z (z - 1)(z^2 + z + 1): the primitive 2-cycle is the pair
        // of primitive cube roots of unity, multiplier 4.
        let f = UnicriticalMap::quadratic(cx(0.0, 0.0));
        let pts = periodic_points(&f, 2).unwrap();
        assert_eq!(pts.len(), 2);
        for p in &pts {
            assert!(close(p.multiplier, cx(4.0, 0.0), 1e-8));
            assert_eq!(p.class, PointClass::Repelling);
            let poly = p.location * p.location + p.location + cx(1.0, 0.0);
            assert!(poly.norm() < 1e-8, "not a root of z^2+z+1: {}", p.location);
        }
    }

    #[test]
    fn periodic_points_basilica_superattracting() {
        let f = UnicriticalMap::quadratic(cx(-1.0, 0.0));
        let mut pts = periodic_points(&f, 2).unwrap();
        assert_eq!(pts.len(), 2);
        pts.sort_by(|a, b| a.location.re.partial_cmp(&b.location.re).unwrap());
        assert!(close(pts[0].location, cx(-1.0, 0.0), 1e-8));
        assert!(close(pts[1].location, cx(0.0, 0.0), 1e-8));
        for p in &pts {
            assert!(p.multiplier.norm() < 1e-7);
            assert_eq!(p.class, PointClass::Superattracting);
        }
    }

    #[test]
    fn periodic_points_p1_matches_fixed_points() {
        let f = UnicriticalMap::quadratic(cx(-2.0, 0.0));
        let a = fixed_points(&f).unwrap();
        let b = periodic_points(&f, 1).unwrap();
        assert_eq!(a.len(), b.len());
    }

    #[test]
    fn periodic_degree_budget() {
        let f = UnicriticalMap::quadratic(cx(0.0, 0.0));
        assert!(matches!(
            periodic_points(&f, 13),
            Err(Error::DegreeTooLarge { .. })
        ));
    }

    #[test]
    fn chain_rule_matches_dual_number_route() {
        // |D(f^n)(z)| equals the product of |Df| along the orbit; cross-check
        // the chain product against forward-mode differentiation.
        #[derive(Clone, Copy)]
        struct Dual {
            v: Cx,
            d: Cx,
        }
        let f = UnicriticalMap::quadratic(cx(-0.4, 0.35));
        let step_dual = |x: Dual| -> Dual {
            // (v + d eps)^2 + c
            Dual {
                v: x.v * x.v + f.param(),
                d: 2.0 * x.v * x.d,
            }
        };
        let samples = [cx(0.1, 0.2), cx(-0.3, 0.1), cx(0.05, -0.4), cx(0.2, 0.0)];
        for &z in &samples {
            let n = 50;
            if f.iterate(z, n).is_err() {
                continue;
            }
            let chain = f.derivative_of_iterate(z, n).unwrap();
            let mut x = Dual {
                v: z,
                d: cx(1.0, 0.0),
            };
            for _ in 0..n {
                x = step_dual(x);
            }
            let rel = (chain - x.d).norm() / x.d.norm().max(1e-300);
            assert!(rel <= 1e-10, "chain rule mismatch: rel={rel:e}");
        }
    }
}
