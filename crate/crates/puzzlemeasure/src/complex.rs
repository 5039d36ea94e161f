//! Complex scalar type and small helpers.

use num_complex::Complex64;

/// Ambient complex scalar. All dynamical quantities live in this type.
pub type Cx = Complex64;

/// Overflow guard for iterated orbits. Iterates past this magnitude abort as
/// diverged so downstream derivative products stay finite.
pub const OVERFLOW_GUARD: f64 = 1e150;

pub fn cx(re: f64, im: f64) -> Cx {
    Cx::new(re, im)
}

/// Finite in both components (no NaN/inf admitted into downstream ops).
pub fn is_finite(z: Cx) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

/// All `l`-th roots of `w`, in increasing order of principal argument.
pub fn nth_roots(w: Cx, l: u32) -> Vec<Cx> {
    let r = w.norm().powf(1.0 / l as f64);
    let base = w.arg() / l as f64;
    let step = std::f64::consts::TAU / l as f64;
    (0..l)
        .map(|k| Cx::from_polar(r, base + step * k as f64))
        .collect()
}

/// Squared Euclidean distance.
pub fn dist2(a: Cx, b: Cx) -> f64 {
    let d = a - b;
    d.norm_sqr()
}
