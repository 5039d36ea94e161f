//! Green's function of the filled Julia set and Boettcher-coordinate
//! machinery: escape-time potential, external angles of escaping points, and
//! the Newton solver for points with prescribed angle and potential.

use crate::angle::Angle;
use crate::complex::{cx, is_finite, Cx, OVERFLOW_GUARD};
use crate::dynamics::UnicriticalMap;
use crate::error::{Error, Result};

/// Iterated-coordinate magnitude at which the Boettcher map is treated as the
/// identity. exp(27.6) ~ 1e12, far beyond the escape radius, still far from
/// f64 overflow after one more doubling.
const L_TARGET: f64 = 27.631;

/// Relative Newton residual for ray/equipotential points, measured on
/// `f^n(z)` against its target.
pub const NEWTON_RESIDUAL: f64 = 1e-10;

/// Potential field of a unicritical map: Green's function evaluation and the
/// escape radius `R` with `|z| > R` guaranteeing escape.
#[derive(Debug, Clone, Copy)]
pub struct PotentialField {
    map: UnicriticalMap,
    escape_radius: f64,
    /// Iteration budget before a point is declared non-escaping.
    pub n_max: usize,
}

/// Green's function value; `value == 0.0` with `escaped == false` is the
/// in-set answer by convention.
#[derive(Debug, Clone, Copy)]
pub struct GreenValue {
    pub value: f64,
    pub escaped: bool,
}

impl PotentialField {
    pub fn new(map: UnicriticalMap) -> Self {
        let l = map.degree() as f64;
        let c_abs = map.param().norm();
        let escape_radius = ((1.0 + c_abs).powf(1.0 / (l - 1.0)) + 1.0)
            .max(2.0)
            .max(2.0 * c_abs.powf(1.0 / (l - 1.0)));
        PotentialField {
            map,
            escape_radius,
            n_max: 2048,
        }
    }

    pub fn map(&self) -> &UnicriticalMap {
        &self.map
    }

    pub fn escape_radius(&self) -> f64 {
        self.escape_radius
    }

    /// `G(z) = l^{-n} log|f^n(z)|` at the first escaping iterate, plus the
    /// telescoped tail correction `sum_k l^{-(k+1)} log|1 + c/f^k(z)^l|`
    /// truncated at machine precision.
    pub fn green(&self, z: Cx) -> GreenValue {
        let l = self.map.degree() as f64;
        let c = self.map.param();
        let mut w = z;
        let mut n = 0usize;
        while w.norm_sqr() <= self.escape_radius * self.escape_radius {
            if n >= self.n_max {
                return GreenValue {
                    value: 0.0,
                    escaped: false,
                };
            }
            w = self.map.step(w);
            n += 1;
        }
        let mut g = w.norm().ln() / l.powi(n as i32);
        // Tail: each extra iterate contributes l^{-(k+1)} log|1 + c w_k^{-l}|.
        let mut scale = l.powi(-(n as i32 + 1));
        for _ in 0..64 {
            let wl = w.powu(self.map.degree());
            if !is_finite(wl) || wl.norm() > OVERFLOW_GUARD {
                break;
            }
            let term = (cx(1.0, 0.0) + c / wl).norm().ln() * scale;
            g += term;
            if term.abs() < f64::EPSILON * g.abs() {
                break;
            }
            w = wl + c;
            scale /= l;
        }
        GreenValue {
            value: g,
            escaped: true,
        }
    }

    /// External angle of an escaping point, as a fraction of a full turn in
    /// `[0, 1)`. Forward-iterates to the Boettcher identity zone, reads the
    /// angle there through the convergent product, then walks the angle back
    /// down with `theta -> (theta + j)/l` branch bookkeeping keyed to the
    /// principal argument at each step.
    pub fn external_angle(&self, z: Cx) -> Result<f64> {
        let l = self.map.degree();
        let lf = l as f64;
        let g = self.green(z);
        if !g.escaped {
            return Err(Error::BranchLost { step: 0 });
        }
        // Zone where |c / z^l| < 1/4 so the product formula converges fast.
        let r_safe = (4.0 * (1.0 + self.map.param().norm()))
            .powf(1.0 / lf)
            .max(self.escape_radius);
        let mut orbit = vec![z];
        let mut w = z;
        let mut m = 0usize;
        while w.norm() <= r_safe {
            w = self.map.step(w);
            m += 1;
            orbit.push(w);
            if m > self.n_max {
                return Err(Error::BranchLost { step: m });
            }
        }
        // Angle of the Boettcher coordinate at orbit[m]:
        // arg phi(w) = arg w + sum_k l^{-(k+1)} arg(1 + c/w_k^l).
        let mut theta = w.arg() / std::f64::consts::TAU;
        let mut scale = 1.0 / lf;
        let mut wk = w;
        for _ in 0..64 {
            let wl = wk.powu(l);
            if !is_finite(wl) || wl.norm() > OVERFLOW_GUARD {
                break;
            }
            let corr = (cx(1.0, 0.0) + self.map.param() / wl).arg() / std::f64::consts::TAU;
            theta += corr * scale;
            if (corr * scale).abs() < 1e-18 {
                break;
            }
            wk = wl + self.map.param();
            scale /= lf;
        }
        theta = theta.rem_euclid(1.0);
        // Walk back: at each step pick the preimage branch circularly closest
        // to the principal argument of the orbit point.
        for k in (0..m).rev() {
            let a = orbit[k].arg().rem_euclid(std::f64::consts::TAU) / std::f64::consts::TAU;
            let mut best = (f64::INFINITY, 0.0);
            for j in 0..l {
                let cand = (theta + j as f64) / lf;
                let d = (cand - a).rem_euclid(1.0);
                let d = d.min(1.0 - d);
                if d < best.0 {
                    best = (d, cand);
                }
            }
            if best.0 > 0.4 / lf {
                return Err(Error::BranchLost { step: k });
            }
            theta = best.1;
        }
        Ok(theta)
    }

    /// Boettcher-asymptotic seed for the point at `(theta, g)`; accurate for
    /// potentials well above the escape level.
    pub fn asymptotic_point(&self, theta: Angle, g: f64) -> Cx {
        Cx::from_polar(g.exp(), std::f64::consts::TAU * theta.to_f64())
    }

    /// Iteration count lifting potential `g` into the Boettcher identity zone.
    fn lift_count(&self, g: f64) -> u32 {
        let lf = self.map.degree() as f64;
        let mut n = 0u32;
        let mut lifted = g;
        while lifted < L_TARGET {
            lifted *= lf;
            n += 1;
            if n > 200 {
                break;
            }
        }
        n
    }

    /// Newton-solve for the point with external angle `theta` and potential
    /// `g`, i.e. `f^n(z) = exp(l^n (g + 2 pi i theta))` with `n` chosen so the
    /// right side sits in the Boettcher identity zone. The residual is
    /// relative, measured in the iterated coordinate.
    pub fn ray_point(&self, theta: Angle, g: f64, seed: Cx) -> Result<Cx> {
        self.ray_point_trusted(theta, g, seed, f64::INFINITY)
    }

    /// [`Self::ray_point`] with a trust radius: the equation has `l^n`
    /// solution branches, so continuation must reject Newton runs that wander
    /// farther from the seed than the local mesh — they converge to a
    /// neighboring ray.
    pub fn ray_point_trusted(&self, theta: Angle, g: f64, seed: Cx, trust: f64) -> Result<Cx> {
        debug_assert!(g > 0.0);
        let l = self.map.degree();
        let n = self.lift_count(g);
        let lifted_g = g * (l as f64).powi(n as i32);
        if lifted_g > 400.0 {
            return Err(Error::NewtonStall { potential: g });
        }
        let mut lifted_theta = theta;
        for _ in 0..n {
            lifted_theta = lifted_theta.times(l);
        }
        let target = Cx::from_polar(
            lifted_g.exp(),
            std::f64::consts::TAU * lifted_theta.to_f64(),
        );
        // Newton in log coordinates: solve log f^n(z) - log w = 0. The
        // landscape of f^n is exponential, so plain Newton crawls from any
        // seed whose lifted potential is off by more than ~1; the log form
        // converges in a handful of steps. The principal branch of the log
        // is correct as long as the seed is within half a solution branch,
        // which the trust radius enforces for continuation callers. The
        // derivative is accumulated in log form: |Df^n| overflows f64 (and
        // complex division silently underflows past 1e154) well before the
        // iterates themselves do.
        let mut z = seed;
        for it in 0..60 {
            let mut w = z;
            let mut ld = cx(0.0, 0.0); // (ln |Df^n|, summed arg)
            let mut degenerate = false;
            for _ in 0..n {
                let dw = self.map.derivative(w);
                if dw.norm_sqr() == 0.0 {
                    degenerate = true;
                    break;
                }
                ld += cx(dw.norm().ln(), dw.arg());
                w = self.map.step(w);
                if !is_finite(w) || w.norm() > 1e200 {
                    degenerate = true;
                    break;
                }
            }
            if degenerate || w.norm_sqr() == 0.0 {
                return Err(Error::NewtonStall { potential: g });
            }
            let lr = (w / target).ln();
            if !is_finite(lr) {
                return Err(Error::NewtonStall { potential: g });
            }
            // |log ratio| is the relative residual in the iterated coordinate.
            if lr.norm() <= NEWTON_RESIDUAL {
                return Ok(z);
            }
            // step = lr * f^n(z) / Df^n(z), assembled from logs.
            let ln_mag = lr.norm().ln() + w.norm().ln() - ld.re;
            if ln_mag > 200.0 {
                return Err(Error::NewtonStall { potential: g });
            }
            let step = Cx::from_polar(ln_mag.exp(), lr.arg() + w.arg() - ld.im);
            // Evaluating f^n amplifies rounding by the orbit's derivative, so
            // the residual bottoms out at eps * |Df^n| * |z| near the Julia
            // set. Accept once the z-step is at machine scale: Newton has
            // then converged to the representable solution.
            if it >= 1 && step.norm() <= 1e-12 * (1.0 + z.norm()) {
                return Ok(z);
            }
            z -= step;
            if (z - seed).norm() > trust {
                return Err(Error::NewtonStall { potential: g });
            }
        }
        Err(Error::NewtonStall { potential: g })
    }
}
