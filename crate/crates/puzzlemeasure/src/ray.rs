//! External rays: Newton-continuation tracing, landing-point extrapolation,
//! the co-landing cycle search at the dividing fixed point, and
//! equipotential curves.

use crate::angle::{cycles_of_period, rotation_number, Angle};
use crate::complex::{cx, Cx};
use crate::dynamics::{
    fixed_points, FixedPointInfo, FixedPointRole, PointClass, UnicriticalMap,
};
use crate::error::{Error, Result};
use crate::potential::PotentialField;

/// Default potential-step subdivision: steps per halving of the potential.
pub const STEPS_PER_HALVING: u32 = 24;
/// Potential above which the Boettcher asymptotic seed is reliable.
const G_SEED_SAFE: f64 = 4.0;

#[derive(Debug, Clone, Copy)]
pub struct RayPoint {
    pub z: Cx,
    pub potential: f64,
}

/// A traced external ray: a rational angle plus a polyline descending from
/// high potential toward the Julia set.
#[derive(Debug, Clone)]
pub struct ExternalRay {
    pub angle: Angle,
    /// Strictly decreasing potentials.
    pub points: Vec<RayPoint>,
    /// Extrapolated landing point, when certified.
    pub landing: Option<Cx>,
    /// Potential at which Newton continuation stalled, if it did; the
    /// polyline then holds the prefix above that level.
    pub stalled_at: Option<f64>,
}

/// Continue a ray through a strictly decreasing potential schedule. The walk
/// starts from the Boettcher asymptotic seed above the first schedule entry;
/// stalls subdivide the potential step a few times before giving up and
/// returning the prefix. Newton runs are confined to a trust radius scaled
/// from the local continuation velocity |dz/dG| so they cannot hop to a
/// neighboring solution branch of `f^n(z) = w`.
pub fn trace_schedule(
    field: &PotentialField,
    theta: Angle,
    schedule: &[f64],
) -> (Vec<RayPoint>, Option<f64>) {
    let mut points: Vec<RayPoint> = Vec::with_capacity(schedule.len());
    if schedule.is_empty() {
        return (points, None);
    }
    // Pre-walk from the safe zone down to the first scheduled potential;
    // adjacent rays are far apart up here, so untrusted solves are safe.
    let mut g_cur = schedule[0].max(G_SEED_SAFE);
    let mut z = field.asymptotic_point(theta, g_cur);
    let ratio = 0.85_f64;
    loop {
        match field.ray_point(theta, g_cur, z) {
            Ok(p) => z = p,
            Err(_) => return (points, Some(g_cur)),
        }
        if g_cur <= schedule[0] {
            break;
        }
        let g_next = (g_cur * ratio).max(schedule[0]);
        z *= (g_next - g_cur).exp();
        g_cur = g_next;
    }
    points.push(RayPoint {
        z,
        potential: schedule[0],
    });

    let mut vel = z; // dz/dG estimate; exactly z for c = 0
    let mut tiny_steps = 0u32;
    for &g in &schedule[1..] {
        let (pz, pg) = points
            .last()
            .map(|p| (p.z, p.potential))
            .unwrap_or((z, g_cur));
        match continue_step(field, theta, pz, pg, g, vel, 10) {
            Some((p, v)) => {
                vel = v;
                // Once steps shrink to machine scale the polyline has reached
                // its landing point as far as f64 can represent it; deeper
                // solves would only fit noise.
                if (p - pz).norm() <= 1e-13 * (1.0 + p.norm()) {
                    tiny_steps += 1;
                } else {
                    tiny_steps = 0;
                }
                points.push(RayPoint { z: p, potential: g });
                if tiny_steps >= 3 {
                    break;
                }
            }
            None => return (points, Some(g)),
        }
    }
    (points, None)
}

/// One continuation step from `(pz, pg)` down to potential `g` using a
/// secant seed `pz + vel (g - pg)`, bisecting the potential interval on
/// stalls. Returns the point and the updated velocity `dz/dG`.
fn continue_step(
    field: &PotentialField,
    theta: Angle,
    pz: Cx,
    pg: f64,
    g: f64,
    vel: Cx,
    depth: u32,
) -> Option<(Cx, Cx)> {
    let dg = pg - g;
    let seed = pz + vel * (g - pg);
    let speed = vel.norm();
    let trust = (8.0 * speed * dg).max(64.0 * f64::EPSILON * (1.0 + pz.norm()));
    if let Ok(p) = field.ray_point_trusted(theta, g, seed, trust + (seed - pz).norm()) {
        // Trust is anchored at the previous accepted point, not the seed.
        if (p - pz).norm() <= trust {
            let new_vel = if dg > 0.0 { (p - pz) / (g - pg) } else { vel };
            return Some((p, new_vel));
        }
    }
    if depth == 0 {
        return None;
    }
    let mid = (pg * g).sqrt();
    let (pm, v) = continue_step(field, theta, pz, pg, mid, vel, depth - 1)?;
    continue_step(field, theta, pm, mid, g, v, depth - 1)
}

/// Trace the ray at `theta` from `g_hi` down to `g_lo` on the dyadic grid
/// `g_hi * 2^{-k/steps}`.
pub fn trace_ray(
    field: &PotentialField,
    theta: Angle,
    g_hi: f64,
    g_lo: f64,
    steps_per_halving: u32,
) -> Result<ExternalRay> {
    if !(g_hi > g_lo && g_lo > 0.0) {
        return Err(Error::Config(format!(
            "trace_ray requires G_hi > G_lo > 0, got {g_hi}, {g_lo}"
        )));
    }
    let steps = steps_per_halving.max(1) as f64;
    let mut schedule = Vec::new();
    let mut k = 0u32;
    loop {
        let g = g_hi * (2.0_f64).powf(-(k as f64) / steps);
        schedule.push(g);
        if g <= g_lo {
            break;
        }
        k += 1;
        if k > 1_000_000 {
            break;
        }
    }
    let (points, stalled_at) = trace_schedule(field, theta, &schedule);
    if points.is_empty() {
        return Err(Error::NewtonStall {
            potential: stalled_at.unwrap_or(g_hi),
        });
    }
    let mut ray = ExternalRay {
        angle: theta,
        points,
        landing: None,
        stalled_at,
    };
    if let Ok(p) = land_ray(&ray, 1e-6) {
        ray.landing = Some(p);
    }
    Ok(ray)
}

/// Geometric extrapolation of a point sequence: `p_last + d r/(1-r)` with the
/// complex step ratio `r` averaged over the window. `None` when the tail does
/// not contract consistently.
fn geometric_limit(tail: &[Cx]) -> Option<(Cx, f64)> {
    let m = tail.len();
    if m < 5 {
        return None;
    }
    let diffs: Vec<Cx> = (0..m - 1).map(|i| tail[i + 1] - tail[i]).collect();
    let scale = tail[m - 1].norm().max(1.0);
    let mut ratios = Vec::new();
    for i in 0..diffs.len() - 1 {
        if diffs[i].norm() > 1e-300 * scale {
            ratios.push(diffs[i + 1] / diffs[i]);
        }
    }
    if ratios.len() < 3 {
        return None;
    }
    let mean: Cx = ratios.iter().sum::<Cx>() / ratios.len() as f64;
    let r = mean.norm();
    if r >= 0.995 {
        return None;
    }
    for q in &ratios {
        if (q - mean).norm() > 0.25 * r + 0.05 {
            return None;
        }
    }
    let d_last = *diffs.last().unwrap();
    let limit = tail[m - 1] + d_last * mean / (cx(1.0, 0.0) - mean);
    Some((limit, r))
}

/// Extrapolate the landing point from the ray tail. Requires at least 10 tail
/// points; accepts when consecutive steps contract geometrically and two
/// extrapolation windows agree within `tol`.
pub fn land_ray(ray: &ExternalRay, tol: f64) -> Result<Cx> {
    let n = ray.points.len();
    if n < 10 {
        return Err(Error::NotLanded { ratio: f64::NAN });
    }
    let zs: Vec<Cx> = ray.points.iter().map(|p| p.z).collect();
    let last = zs[n - 1];
    // Already numerically converged?
    let converged = (1..=3).all(|i| (zs[n - i] - zs[n - i - 1]).norm() < 1e-13 * (1.0 + last.norm()));
    if converged {
        return Ok(last);
    }
    let recent = geometric_limit(&zs[n - 8..]);
    let older = geometric_limit(&zs[n - 12..n - 4]);
    match (recent, older) {
        (Some((l1, r1)), Some((l2, _))) => {
            // Two-window agreement is the a-posteriori error estimate; the
            // crude remaining-tail bound is far too conservative for slowly
            // contracting (kappa < 1) landings.
            let err_est = (l1 - l2).norm() * 2.0 + 1e-14 * (1.0 + last.norm());
            if err_est <= tol {
                Ok(l1)
            } else {
                Err(Error::NotLanded { ratio: r1 })
            }
        }
        (Some((l1, r1)), None) => {
            let d = (zs[n - 1] - zs[n - 2]).norm();
            let err_est = 2.0 * d * r1 / (1.0 - r1);
            if err_est <= tol {
                Ok(l1)
            } else {
                Err(Error::NotLanded { ratio: r1 })
            }
        }
        _ => Err(Error::NotLanded { ratio: f64::NAN }),
    }
}

/// Trace deep and land in one call.
pub fn trace_and_land(
    field: &PotentialField,
    theta: Angle,
    g_lo: f64,
    tol: f64,
) -> Result<Cx> {
    let ray = trace_ray(field, theta, G_SEED_SAFE, g_lo, STEPS_PER_HALVING)?;
    land_ray(&ray, tol)
}

/// Fixed points with alpha/beta roles for connected-Julia parameters:
/// beta is the landing point of the angle-0 ray, alpha the other (degree 2).
/// When the ray-0 landing fails the roles stay empty and the error is
/// reported alongside the still-valid locations.
pub fn fixed_points_with_roles(
    f: &UnicriticalMap,
) -> Result<(Vec<FixedPointInfo>, Option<Error>)> {
    let mut pts = fixed_points(f)?;
    let field = PotentialField::new(*f);
    let landing = trace_and_land(&field, Angle::zero(), 1e-10, 1e-5);
    match landing {
        Ok(beta) => {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (i, p) in pts.iter().enumerate() {
                let d = (p.location - beta).norm();
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            if best_d > 1e-3 * beta.norm().max(1.0) {
                return Ok((pts, Some(Error::RoleUndetermined)));
            }
            pts[best].role = Some(FixedPointRole::Beta);
            if f.degree() == 2 {
                let other = 1 - best;
                pts[other].role = Some(FixedPointRole::Alpha);
            }
            Ok((pts, None))
        }
        Err(_) => Ok((pts, Some(Error::RoleUndetermined))),
    }
}

/// Result of the co-landing search at the dividing fixed point.
#[derive(Debug, Clone)]
pub struct AlphaRays {
    /// Number of rays landing at alpha.
    pub q: usize,
    /// Rotation-ordered (ascending) angle cycle.
    pub angles: Vec<Angle>,
    /// The alpha fixed point.
    pub alpha: Cx,
    /// The beta fixed point.
    pub beta: Cx,
    /// Combinatorial rotation number of the cycle.
    pub rotation: (usize, usize),
}

/// Find the cycle of angles under `theta -> l theta` whose rays co-land at
/// the dividing fixed point. Candidates are the rotational cycles of period
/// `q <= q_max`, tested by tracing and landing; the first cycle landing at a
/// non-beta repelling fixed point within `tol` wins.
pub fn rays_at_alpha(f: &UnicriticalMap, q_max: u32, tol: f64) -> Result<AlphaRays> {
    let (pts, role_err) = fixed_points_with_roles(f)?;
    for p in &pts {
        if p.class != PointClass::Repelling {
            return Err(Error::NoDividingFixedPoint {
                reason: format!(
                    "fixed point at {:.6}+{:.6}i is {:?}, not repelling",
                    p.location.re, p.location.im, p.class
                ),
            });
        }
    }
    if role_err.is_some() {
        return Err(Error::NoDividingFixedPoint {
            reason: "angle-0 ray landing failed; beta unidentified".into(),
        });
    }
    let beta = pts
        .iter()
        .find(|p| p.role == Some(FixedPointRole::Beta))
        .unwrap()
        .location;
    let alphas: Vec<Cx> = pts
        .iter()
        .filter(|p| p.role != Some(FixedPointRole::Beta))
        .map(|p| p.location)
        .collect();

    let field = PotentialField::new(*f);
    let g_tail = 1e-12;
    for q in 2..=q_max {
        for cycle in cycles_of_period(f.degree(), q) {
            let Some(rot) = rotation_number(&cycle, f.degree()) else {
                continue;
            };
            let probe = cycle.iter().copied().min().unwrap();
            let Ok(land) = trace_and_land(&field, probe, g_tail, tol * 0.5) else {
                continue;
            };
            let Some(&alpha) = alphas.iter().find(|a| (*a - land).norm() <= tol) else {
                continue;
            };
            // Verify every ray of the cycle lands at alpha.
            let mut all_land = true;
            for &a in &cycle {
                match trace_and_land(&field, a, g_tail, tol * 0.5) {
                    Ok(p) if (p - alpha).norm() <= tol => {}
                    _ => {
                        all_land = false;
                        break;
                    }
                }
            }
            if all_land {
                let mut angles = cycle.clone();
                angles.sort();
                return Ok(AlphaRays {
                    q: q as usize,
                    angles,
                    alpha,
                    beta,
                    rotation: rot,
                });
            }
        }
    }
    Err(Error::NoCycleFound {
        q_max: q_max as usize,
    })
}

/// Closed equipotential polyline at level `g0`, parameterized by angle with
/// `n_samples` Newton-corrected points. Each sample descends its own ray:
/// marching along the curve can silently slip a solution branch at folds
/// where the curve hugs the Julia set, while ray descent cannot.
pub fn equipotential(field: &PotentialField, g0: f64, n_samples: usize) -> Result<Vec<Cx>> {
    if g0 <= 0.0 {
        return Err(Error::Config("equipotential requires G0 > 0".into()));
    }
    let n = n_samples.max(8);
    let denom = n as i64;
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let theta = Angle::new(k as i64, denom);
        let ray = trace_ray(field, theta, G_SEED_SAFE.max(g0), g0, STEPS_PER_HALVING)?;
        let near = ray
            .points
            .last()
            .ok_or(Error::NewtonStall { potential: g0 })?;
        // The dyadic trace grid need not hit g0 exactly; anchor with a
        // dedicated solve seeded by the last trace point.
        let z = field
            .ray_point_trusted(theta, g0, near.z, 0.5 * (1.0 + near.z.norm()))
            .map_err(|_| Error::NewtonStall { potential: g0 })?;
        out.push(z);
    }
    Ok(out)
}

/// March along the equipotential from the solved point at angle `a` to angle
/// `b`, halving the angular step on stalls.
pub(crate) fn equipotential_step(
    field: &PotentialField,
    g0: f64,
    a: Angle,
    b: Angle,
    za: Cx,
    depth: u32,
) -> Option<Cx> {
    let arc = Angle::arc_len(a, b);
    // Rotated seed: exact for c = 0, close elsewhere; folds are handled by
    // the angular subdivision below.
    let seed = za * Cx::from_polar(1.0, std::f64::consts::TAU * arc);
    let trust = (8.0 * za.norm().max(1.0) * std::f64::consts::TAU * arc)
        .max(48.0 * f64::EPSILON * (1.0 + za.norm()));
    if let Ok(p) = field.ray_point_trusted(b, g0, seed, trust) {
        return Some(p);
    }
    if depth == 0 {
        return None;
    }
    let mid = Angle::arc_midpoint(a, b);
    let zm = equipotential_step(field, g0, a, mid, za, depth - 1)?;
    equipotential_step(field, g0, mid, b, zm, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::cx;

    #[test]
    fn trace_ray_c0_real_axis() {
        let f = UnicriticalMap::quadratic(cx(0.0, 0.0));
        let field = PotentialField::new(f);
        let ray = trace_ray(&field, Angle::zero(), 2.0, 0.5, 24).unwrap();
        assert!(ray.stalled_at.is_none());
        // Points sit on the real axis between e^{0.5} and e^2.
        for p in &ray.points {
            assert!(p.z.im.abs() < 1e-9);
            assert!((p.z.re.ln() - p.potential).abs() < 1e-9);
        }
        // Potentials strictly decreasing.
        for w in ray.points.windows(2) {
            assert!(w[1].potential < w[0].potential);
        }
    }

    #[test]
    fn trace_ray_chebyshev_beta() {
        // theta = 0 for z^2 - 2 descends along (2, inf) toward beta = 2.
        let f = UnicriticalMap::quadratic(cx(-2.0, 0.0));
        let field = PotentialField::new(f);
        let ray = trace_ray(&field, Angle::zero(), 2.0, 1e-10, 24).unwrap();
        assert!(ray.stalled_at.is_none());
        for p in &ray.points {
            assert!(p.z.im.abs() < 1e-8);
            assert!(p.z.re > 2.0 - 1e-9);
        }
        let landing = land_ray(&ray, 1e-6).unwrap();
        assert!((landing - cx(2.0, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn land_ray_examples() {
        let f = UnicriticalMap::quadratic(cx(0.0, 0.0));
        let field = PotentialField::new(f);
        let ray = trace_ray(&field, Angle::zero(), 1.0, 1e-9, 24).unwrap();
        assert!((land_ray(&ray, 1e-6).unwrap() - cx(1.0, 0.0)).norm() < 1e-6);
        let ray = trace_ray(&field, Angle::new(1, 2), 1.0, 1e-9, 24).unwrap();
        assert!((land_ray(&ray, 1e-6).unwrap() - cx(-1.0, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn ray_equivariance() {
        // f maps the theta-ray into the (l theta)-ray after potential
        // re-indexing.
        let f = UnicriticalMap::quadratic(cx(0.0, 1.0));
        let field = PotentialField::new(f);
        let theta = Angle::new(1, 7);
        let g_hi = 1.0;
        let ray = trace_ray(&field, theta, g_hi, 0.01, 24).unwrap();
        let ray2 = trace_ray(&field, theta.times(2), 2.0 * g_hi, 0.02, 24).unwrap();
        let mut checked = 0;
        for p in &ray.points {
            let target_g = 2.0 * p.potential;
            if let Some(q) = ray2
                .points
                .iter()
                .find(|q| (q.potential - target_g).abs() < 1e-9 * target_g)
            {
                let img = f.step(p.z);
                assert!(
                    (img - q.z).norm() < 1e-7 * q.z.norm().max(1.0),
                    "equivariance off at G={}",
                    p.potential
                );
                checked += 1;
            }
        }
        assert!(checked > 10, "schedules should share many levels");
    }

    #[test]
    fn rays_at_alpha_c_i() {
        let f = UnicriticalMap::quadratic(cx(0.0, 1.0));
        let rays = rays_at_alpha(&f, 12, 1e-4).unwrap();
        assert_eq!(rays.q, 3);
        assert_eq!(
            rays.angles,
            vec![Angle::new(1, 7), Angle::new(2, 7), Angle::new(4, 7)]
        );
        assert_eq!(rays.rotation, (1, 3));
        // alpha is the fixed point with negative real part.
        assert!(rays.alpha.re < 0.0);
        let residual = (f.step(rays.alpha) - rays.alpha).norm();
        assert!(residual < 1e-8);
    }

    #[test]
    fn rays_at_alpha_chebyshev() {
        let f = UnicriticalMap::quadratic(cx(-2.0, 0.0));
        let rays = rays_at_alpha(&f, 12, 1e-4).unwrap();
        assert_eq!(rays.q, 2);
        assert_eq!(rays.angles, vec![Angle::new(1, 3), Angle::new(2, 3)]);
        assert!((rays.alpha - cx(-1.0, 0.0)).norm() < 1e-4);
        assert!((rays.beta - cx(2.0, 0.0)).norm() < 1e-4);
    }

    #[test]
    fn rays_at_alpha_rejects_non_repelling() {
        // c = 0: superattracting fixed point at 0.
        let f = UnicriticalMap::quadratic(cx(0.0, 0.0));
        assert!(matches!(
            rays_at_alpha(&f, 8, 1e-4),
            Err(Error::NoDividingFixedPoint { .. })
        ));
        // c = 1/4: parabolic.
        let f = UnicriticalMap::quadratic(cx(0.25, 0.0));
        assert!(matches!(
            rays_at_alpha(&f, 8, 1e-4),
            Err(Error::NoDividingFixedPoint { .. })
        ));
    }

    #[test]
    fn landing_of_periodic_cycle_is_periodic() {
        // Landing points of periodic angle cycles are periodic points.
        let f = UnicriticalMap::quadratic(cx(0.0, 1.0));
        let field = PotentialField::new(f);
        for (theta, q) in [(Angle::new(1, 7), 3usize), (Angle::new(1, 3), 2)] {
            let p = trace_and_land(&field, theta, 1e-12, 1e-5).unwrap();
            let mut w = p;
            for _ in 0..q {
                w = f.step(w);
            }
            assert!(
                (w - p).norm() <= 1e-6,
                "landing of {theta} not {q}-periodic: residual {}",
                (w - p).norm()
            );
        }
    }

    #[test]
    fn equipotential_c0_circle() {
        let f = UnicriticalMap::quadratic(cx(0.0, 0.0));
        let field = PotentialField::new(f);
        let g0 = 2.0_f64.ln();
        let poly = equipotential(&field, g0, 64).unwrap();
        assert_eq!(poly.len(), 64);
        for z in &poly {
            assert!((z.norm() - 2.0).abs() < 1e-9);
        }
        // G0 -> 0+ approaches the unit circle.
        let poly = equipotential(&field, 1e-6, 32).unwrap();
        for z in &poly {
            assert!((z.norm() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn equipotential_chebyshev_hugs_interval() {
        let f = UnicriticalMap::quadratic(cx(-2.0, 0.0));
        let field = PotentialField::new(f);
        let g0 = 1e-4;
        let poly = equipotential(&field, g0, 128).unwrap();
        // The exact curve is w + 1/w over |w| = e^{g0}: an ellipse with
        // semi-axes 2 cosh(g0) and 2 sinh(g0).
        for z in &poly {
            assert!(z.re.abs() <= 2.0 * g0.cosh() + 1e-9);
            assert!(z.im.abs() <= 2.0 * g0.sinh() + 1e-9);
        }
        let max_im = poly.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        assert!(max_im > g0, "curve should reach its minor axis scale");
    }

    #[test]
    fn beta_role_assignment() {
        let f = UnicriticalMap::quadratic(cx(-2.0, 0.0));
        let (pts, err) = fixed_points_with_roles(&f).unwrap();
        assert!(err.is_none());
        let beta = pts.iter().find(|p| p.role == Some(FixedPointRole::Beta)).unwrap();
        let alpha = pts.iter().find(|p| p.role == Some(FixedPointRole::Alpha)).unwrap();
        assert!((beta.location - cx(2.0, 0.0)).norm() < 1e-8);
        assert!((alpha.location - cx(-1.0, 0.0)).norm() < 1e-8);
    }
}
