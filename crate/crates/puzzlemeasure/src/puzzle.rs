//! Yoccoz puzzle pieces of all depths and the Markov dynamics on them.
//!
//! Depth-n pieces are the complementary faces of a finite lamination: every
//! landing class of boundary rays is a star (a landing point together with
//! the angles of the rays meeting it), and refinement pulls stars back
//! through the map. All combinatorics — faces, containment, dynamics links —
//! are exact rational-angle arithmetic; geometry (ray polylines, landing
//! points, polygons) is produced on demand and cached.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::angle::Angle;
use crate::complex::{cx, Cx};
use crate::dynamics::UnicriticalMap;
use crate::error::{Error, Result};
use crate::potential::PotentialField;
use crate::ray::{self, trace_schedule, ExternalRay};

/// Equipotential level of the depth-0 pieces; an arbitrary positive constant.
pub const DEFAULT_G0: f64 = 1.0;
/// Trace-grid steps per depth level (potential shrinks by 1/l per level).
const STEPS_PER_LEVEL: usize = 24;
/// Levels traced below the deepest requested face before extrapolating the
/// landing.
const LANDING_PAD_LEVELS: usize = 12;
/// Equipotential arc samples per full turn when polygonalizing.
const ARC_SAMPLES_PER_TURN: f64 = 256.0;
/// Relative boundary tolerance band: points closer to a piece boundary than
/// this fraction of its diameter are rejected rather than classified.
pub const EPS_BOUNDARY_REL: f64 = 1e-6;

/// Identifies a puzzle piece as (depth, face index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PieceRef {
    pub depth: usize,
    pub face: usize,
}

/// A landing class: the rays at `angles` co-land at one point.
#[derive(Debug, Clone)]
struct Star {
    /// Sorted indices into the level's angle list.
    angle_idx: Vec<usize>,
    /// Smallest angle of the class; stable across depths, used as identity.
    key: Angle,
    /// Key of the image star one depth up (self-key at depth 0).
    image_key: Angle,
}

#[derive(Debug, Clone)]
struct Face {
    /// Arcs (start angle index, end angle index) in face-traversal order;
    /// the boundary continues from each arc end through its star to the next
    /// arc start.
    arcs: Vec<(usize, usize)>,
    parent: usize,
    image: usize,
    children: Vec<usize>,
    critical: bool,
}

struct Level {
    angles: Vec<Angle>,
    class_of: Vec<usize>,
    stars: Vec<Star>,
    faces: Vec<Face>,
    /// face_of_arc[i] owns the arc starting at angles[i].
    face_of_arc: Vec<usize>,
    critical_face: usize,
}

/// Polygonalized piece boundary.
#[derive(Debug, Clone)]
pub struct Polygon {
    pub points: Vec<Cx>,
    pub diameter: f64,
    /// True when some arc samples fell back to chord interpolation.
    pub approx: bool,
}

impl Polygon {
    /// Even-odd containment test plus distance to the boundary.
    pub fn locate_point(&self, p: Cx) -> (bool, f64) {
        let n = self.points.len();
        let mut inside = false;
        let mut min_d2 = f64::INFINITY;
        for i in 0..n {
            let a = self.points[i];
            let b = self.points[(i + 1) % n];
            // Crossing test for the horizontal ray to +infinity.
            if (a.im > p.im) != (b.im > p.im) {
                let t = (p.im - a.im) / (b.im - a.im);
                let x = a.re + t * (b.re - a.re);
                if x > p.re {
                    inside = !inside;
                }
            }
            // Distance to segment.
            let ab = b - a;
            let len2 = ab.norm_sqr();
            let t = if len2 > 0.0 {
                ((p - a).re * ab.re + (p - a).im * ab.im) / len2
            } else {
                0.0
            }
            .clamp(0.0, 1.0);
            let q = a + ab * t;
            min_d2 = min_d2.min((p - q).norm_sqr());
        }
        (inside, min_d2.sqrt())
    }
}

/// Summary view of a puzzle piece.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PieceInfo {
    pub depth: usize,
    /// Depth-0 face id followed by child indices down the containment chain.
    pub address: Vec<usize>,
    /// Boundary ray angles in increasing order.
    pub angles: Vec<Angle>,
    /// Equipotential level of the boundary arcs.
    pub potential: f64,
    pub critical: bool,
    pub diameter: f64,
}

struct RayData {
    /// Points on the l-adic grid g0 * l^{-k/STEPS_PER_LEVEL}, k = 0.., plus
    /// early termination when the polyline converges at machine scale.
    ray: ExternalRay,
    /// Deepest level (in depth units) the schedule covered.
    levels: usize,
}

/// The puzzle graph: pieces by depth with containment and dynamics links.
pub struct PuzzleGraph {
    map: UnicriticalMap,
    field: PotentialField,
    g0: f64,
    levels: Vec<Level>,
    /// Face of the critical point per depth.
    crit_faces: Vec<usize>,
    /// Face of the critical value per depth.
    value_faces: Vec<usize>,
    /// Critical orbit f^k(0).
    orbit_pts: Vec<Cx>,
    /// orbit_rows[k][d] = face of f^k(0) at depth d (triangular table).
    orbit_rows: Vec<Vec<usize>>,
    /// Star landing points by class key.
    star_points: Mutex<HashMap<Angle, Cx>>,
    stars_by_key: HashMap<Angle, (usize, usize)>,
    rays: Mutex<HashMap<Angle, Arc<RayData>>>,
    polygons: Mutex<HashMap<PieceRef, Arc<Polygon>>>,
}

impl PuzzleGraph {
    /// Build the depth-0 puzzle from the rays co-landing at the dividing
    /// fixed point.
    pub fn build(map: UnicriticalMap, g0: f64) -> Result<Self> {
        let rays = ray::rays_at_alpha(&map, 12, 1e-4)?;
        Self::build_with_classes(map, g0, vec![(rays.angles, Some(rays.alpha))])
    }

    /// Build the depth-0 puzzle from explicit co-landing angle classes (the
    /// finitely-renormalizable variant passes the rays at the whole periodic
    /// orbit of the dividing fixed point here). Each class is verified to
    /// co-land; a class landing point may be supplied when already known.
    pub fn build_with_classes(
        map: UnicriticalMap,
        g0: f64,
        classes: Vec<(Vec<Angle>, Option<Cx>)>,
    ) -> Result<Self> {
        if g0 <= 0.0 {
            return Err(Error::Config("G0 must be positive".into()));
        }
        if classes.is_empty() || classes.iter().any(|(c, _)| c.is_empty()) {
            return Err(Error::Config("depth-0 classes must be nonempty".into()));
        }
        let field = PotentialField::new(map);
        if field.green(cx(0.0, 0.0)).escaped {
            return Err(Error::NoDividingFixedPoint {
                reason: "critical orbit escapes; Julia set is disconnected".into(),
            });
        }

        // Angle list and classes.
        let mut angles: Vec<Angle> = classes.iter().flat_map(|(c, _)| c.iter().copied()).collect();
        angles.sort();
        angles.dedup();
        let total: usize = classes.iter().map(|(c, _)| c.len()).sum();
        if angles.len() != total {
            return Err(Error::Config("depth-0 classes overlap".into()));
        }

        let mut class_of = vec![usize::MAX; angles.len()];
        let mut stars = Vec::new();
        let mut star_points = HashMap::new();
        let mut stars_by_key = HashMap::new();
        for (sid, (class, point_hint)) in classes.iter().enumerate() {
            let mut sorted = class.clone();
            sorted.sort();
            let idx: Vec<usize> = sorted
                .iter()
                .map(|a| angles.binary_search(a).unwrap())
                .collect();
            for &i in &idx {
                class_of[i] = sid;
            }
            let key = sorted[0];
            // Verify co-landing and fix the star point.
            let point = match point_hint {
                Some(p) => *p,
                None => {
                    let mut landings = Vec::new();
                    for &a in &sorted {
                        let p = ray::trace_and_land(&field, a, 1e-12, 1e-4)?;
                        landings.push(p);
                    }
                    for w in landings.windows(2) {
                        if (w[0] - w[1]).norm() > 1e-4 {
                            return Err(Error::AssemblyFailure {
                                address: format!("class {key} does not co-land"),
                            });
                        }
                    }
                    landings[0]
                }
            };
            // The image class under multiplication by l must exist.
            let image_angle = sorted[0].times(map.degree());
            star_points.insert(key, point);
            stars.push(Star {
                angle_idx: idx,
                key,
                image_key: image_angle, // resolved to a key below
            });
            stars_by_key.insert(key, (0usize, sid));
        }
        // Resolve image keys to actual class keys.
        for s in 0..stars.len() {
            let img = stars[s].image_key;
            let target = angles
                .binary_search(&img)
                .map_err(|_| Error::Config("depth-0 classes not forward-closed".into()))?;
            let owner = class_of[target];
            stars[s].image_key = stars[owner].key;
        }

        let (faces, face_of_arc) = extract_faces(&angles, &class_of, &stars);
        let mut level = Level {
            angles,
            class_of,
            stars,
            faces,
            face_of_arc,
            critical_face: usize::MAX,
        };
        for f in level.faces.iter_mut() {
            f.parent = usize::MAX;
            f.image = usize::MAX;
        }

        let mut graph = PuzzleGraph {
            map,
            field,
            g0,
            levels: vec![level],
            crit_faces: Vec::new(),
            value_faces: Vec::new(),
            orbit_pts: vec![cx(0.0, 0.0), map.param()],
            orbit_rows: Vec::new(),
            star_points: Mutex::new(star_points),
            stars_by_key,
            rays: Mutex::new(HashMap::new()),
            polygons: Mutex::new(HashMap::new()),
        };
        let crit0 = graph.locate_depth0(cx(0.0, 0.0))?;
        let val0 = graph.locate_depth0(map.param())?;
        graph.levels[0].critical_face = crit0;
        graph.levels[0].faces[crit0].critical = true;
        graph.crit_faces.push(crit0);
        graph.value_faces.push(val0);
        graph.orbit_rows.push(vec![crit0]);
        graph.orbit_rows.push(vec![val0]);
        Ok(graph)
    }

    pub fn map(&self) -> &UnicriticalMap {
        &self.map
    }

    pub fn field(&self) -> &PotentialField {
        &self.field
    }

    pub fn g0(&self) -> f64 {
        self.g0
    }

    /// Deepest refined depth.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    /// Equipotential level of depth-`d` boundaries: `g0 l^{-d}`.
    pub fn level_potential(&self, d: usize) -> f64 {
        self.g0 * (self.map.degree() as f64).powi(-(d as i32))
    }

    pub fn face_count(&self, depth: usize) -> usize {
        self.levels[depth].faces.len()
    }

    pub fn critical_piece(&self, depth: usize) -> PieceRef {
        PieceRef {
            depth,
            face: self.levels[depth].critical_face,
        }
    }

    pub fn is_critical(&self, p: PieceRef) -> bool {
        self.levels[p.depth].faces[p.face].critical
    }

    /// Image piece under f (depth drops by one). None at depth 0.
    pub fn map_piece(&self, p: PieceRef) -> Option<PieceRef> {
        if p.depth == 0 {
            return None;
        }
        Some(PieceRef {
            depth: p.depth - 1,
            face: self.levels[p.depth].faces[p.face].image,
        })
    }

    /// Containing piece one depth up. None at depth 0.
    pub fn parent_piece(&self, p: PieceRef) -> Option<PieceRef> {
        if p.depth == 0 {
            return None;
        }
        Some(PieceRef {
            depth: p.depth - 1,
            face: self.levels[p.depth].faces[p.face].parent,
        })
    }

    pub fn children(&self, p: PieceRef) -> Vec<PieceRef> {
        if p.depth >= self.depth() {
            return Vec::new();
        }
        self.levels[p.depth].faces[p.face]
            .children
            .iter()
            .map(|&f| PieceRef {
                depth: p.depth + 1,
                face: f,
            })
            .collect()
    }

    /// Ancestor of `p` at shallower depth `d`.
    pub fn ancestor(&self, p: PieceRef, d: usize) -> PieceRef {
        let mut cur = p;
        while cur.depth > d {
            cur = self.parent_piece(cur).unwrap();
        }
        cur
    }

    /// Boundary ray angles of a piece, ascending.
    pub fn piece_angles(&self, p: PieceRef) -> Vec<Angle> {
        let level = &self.levels[p.depth];
        let mut out: Vec<Angle> = level.faces[p.face]
            .arcs
            .iter()
            .flat_map(|&(i, j)| [level.angles[i], level.angles[j]])
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Angular arcs (start, end) of a piece at its equipotential.
    pub fn piece_arcs(&self, p: PieceRef) -> Vec<(Angle, Angle)> {
        let level = &self.levels[p.depth];
        level.faces[p.face]
            .arcs
            .iter()
            .map(|&(i, j)| (level.angles[i], level.angles[j]))
            .collect()
    }

    /// Containment chain address: depth-0 face id, then child indices.
    pub fn address(&self, p: PieceRef) -> Vec<usize> {
        let mut chain = vec![p];
        let mut cur = p;
        while let Some(q) = self.parent_piece(cur) {
            chain.push(q);
            cur = q;
        }
        chain.reverse();
        let mut addr = vec![chain[0].face];
        for w in chain.windows(2) {
            let idx = self.levels[w[0].depth].faces[w[0].face]
                .children
                .iter()
                .position(|&f| f == w[1].face)
                .unwrap();
            addr.push(idx);
        }
        addr
    }

    pub fn piece_info(&self, p: PieceRef) -> Result<PieceInfo> {
        let poly = self.polygon(p)?;
        Ok(PieceInfo {
            depth: p.depth,
            address: self.address(p),
            angles: self.piece_angles(p),
            potential: self.level_potential(p.depth),
            critical: self.is_critical(p),
            diameter: poly.diameter,
        })
    }

    /// Refine the puzzle to `target` depth. Pure angle combinatorics: stars
    /// pull back through the map, grouped by the critical-value chord; the
    /// critical-orbit face table resolves which face holds the critical
    /// value at each depth.
    pub fn refine_to(&mut self, target: usize) -> Result<()> {
        while self.depth() < target {
            self.refine_once(target)?;
        }
        Ok(())
    }

    fn refine_once(&mut self, target: usize) -> Result<()> {
        let d = self.depth();
        let l = self.map.degree();
        // Representative angle of the critical-value face at depth d: the
        // chord {nu/l + k/l} separates preimage branches.
        let nu = {
            let level = &self.levels[d];
            let face = &level.faces[self.value_faces[d]];
            let (i, j) = face.arcs[0];
            Angle::arc_midpoint(level.angles[i], level.angles[j])
        };
        let sector_bounds: Vec<Angle> = {
            let mut b = nu.preimages(l);
            b.sort();
            b
        };
        let sector_of = |a: Angle| -> usize {
            // Index of the sector arc (cyclic) containing a.
            match sector_bounds.binary_search(&a) {
                Ok(_) => usize::MAX, // collision with a bound; caller errors
                Err(pos) => (pos + sector_bounds.len() - 1) % sector_bounds.len(),
            }
        };

        // New angle set: all preimages of the current one.
        let old = &self.levels[d];
        let mut new_angles: Vec<Angle> = old
            .angles
            .iter()
            .flat_map(|a| a.preimages(l))
            .collect();
        new_angles.sort();
        new_angles.dedup();
        if new_angles.len() != old.angles.len() * l as usize {
            return Err(Error::AssemblyFailure {
                address: format!("depth {}: preimage angles collide", d + 1),
            });
        }

        // Pull back each star: group its preimage angles by sector.
        let mut class_of = vec![usize::MAX; new_angles.len()];
        let mut stars: Vec<Star> = Vec::with_capacity(old.stars.len() * l as usize);
        for star in &old.stars {
            let q = star.angle_idx.len();
            let mut groups: Vec<Vec<usize>> = vec![Vec::new(); l as usize];
            for &ai in &star.angle_idx {
                for pre in old.angles[ai].preimages(l) {
                    let s = sector_of(pre);
                    if s == usize::MAX {
                        return Err(Error::AssemblyFailure {
                            address: format!(
                                "depth {}: preimage angle {pre} hits the critical chord",
                                d + 1
                            ),
                        });
                    }
                    let idx = new_angles.binary_search(&pre).unwrap();
                    groups[s].push(idx);
                }
            }
            for mut g in groups {
                if g.is_empty() {
                    continue;
                }
                if g.len() != q {
                    return Err(Error::AssemblyFailure {
                        address: format!(
                            "depth {}: star {} pulls back into a sector with {} of {} angles",
                            d + 1,
                            star.key,
                            g.len(),
                            q
                        ),
                    });
                }
                g.sort();
                let sid = stars.len();
                for &i in &g {
                    class_of[i] = sid;
                }
                stars.push(Star {
                    angle_idx: g.clone(),
                    key: new_angles[g[0]],
                    image_key: star.key,
                });
            }
        }
        if class_of.iter().any(|&c| c == usize::MAX) {
            return Err(Error::AssemblyFailure {
                address: format!("depth {}: unassigned preimage angle", d + 1),
            });
        }

        let (mut faces, face_of_arc) = extract_faces(&new_angles, &class_of, &stars);

        // Containment and dynamics links via exact angular midpoints.
        let mut children_of: Vec<Vec<usize>> = vec![Vec::new(); old.faces.len()];
        for (fid, face) in faces.iter_mut().enumerate() {
            let mut parent = usize::MAX;
            let mut image = usize::MAX;
            for &(i, j) in &face.arcs {
                let mid = Angle::arc_midpoint(new_angles[i], new_angles[j]);
                let par = face_at_angle(old, mid);
                let img = face_at_angle(old, mid.times(l));
                if parent == usize::MAX {
                    parent = par;
                    image = img;
                } else if parent != par || image != img {
                    return Err(Error::AssemblyFailure {
                        address: format!(
                            "depth {}: face {} arcs disagree on parent/image",
                            d + 1,
                            fid
                        ),
                    });
                }
            }
            face.parent = parent;
            face.image = image;
            children_of[parent].push(fid);
        }
        for (pid, ch) in children_of.into_iter().enumerate() {
            self.levels[d].faces[pid].children = ch;
        }

        // The critical face is the unique face mapping onto the
        // critical-value face one depth up.
        let crit: Vec<usize> = faces
            .iter()
            .enumerate()
            .filter(|(_, f)| f.image == self.value_faces[d])
            .map(|(i, _)| i)
            .collect();
        if crit.len() != 1 {
            return Err(Error::AssemblyFailure {
                address: format!(
                    "depth {}: {} candidate critical faces",
                    d + 1,
                    crit.len()
                ),
            });
        }
        let critical_face = crit[0];
        faces[critical_face].critical = true;

        for (sid, star) in stars.iter().enumerate() {
            self.stars_by_key
                .entry(star.key)
                .or_insert((d + 1, sid));
        }
        self.levels.push(Level {
            angles: new_angles,
            class_of,
            stars,
            faces,
            face_of_arc,
            critical_face,
        });
        self.crit_faces.push(critical_face);

        // Extend the critical-orbit table to depth d+1. Row k needs rows
        // k and k+1 at depth d; base row entries are geometric.
        let new_depth = d + 1;
        let rows_needed = target - new_depth + 2;
        while self.orbit_rows.len() < rows_needed + new_depth {
            let k = self.orbit_rows.len();
            while self.orbit_pts.len() <= k {
                let last = *self.orbit_pts.last().unwrap();
                self.orbit_pts.push(self.map.step(last));
            }
            let base = self.locate_depth0(self.orbit_pts[k]).map_err(|e| {
                Error::AssemblyFailure {
                    address: format!("critical orbit point {k} at depth 0: {e}"),
                }
            })?;
            self.orbit_rows.push(vec![base]);
        }
        let max_row = self.orbit_rows.len() - 1;
        for k in (0..max_row).rev() {
            if self.orbit_rows[k].len() == new_depth && self.orbit_rows[k + 1].len() >= new_depth {
                let parent = self.orbit_rows[k][new_depth - 1];
                let image = self.orbit_rows[k + 1][new_depth - 1];
                let face =
                    self.resolve_child(new_depth, parent, image, self.orbit_pts[k])?;
                self.orbit_rows[k].push(face);
            }
        }
        debug_assert_eq!(self.orbit_rows[0][new_depth], critical_face);
        self.value_faces.push(self.orbit_rows[1][new_depth]);
        Ok(())
    }

    /// Child of `parent` (a face at `depth - 1`) that maps onto `image`,
    /// falling back to geometry when the combinatorial pair is ambiguous.
    fn resolve_child(&self, depth: usize, parent: usize, image: usize, point: Cx) -> Result<usize> {
        let level = &self.levels[depth];
        let candidates: Vec<usize> = self.levels[depth - 1].faces[parent]
            .children
            .iter()
            .copied()
            .filter(|&f| level.faces[f].image == image)
            .collect();
        match candidates.len() {
            1 => Ok(candidates[0]),
            0 => Err(Error::AssemblyFailure {
                address: format!("depth {depth}: no child of {parent} maps onto {image}"),
            }),
            _ => {
                for &f in &candidates {
                    let piece = PieceRef { depth, face: f };
                    let poly = self.polygon(piece)?;
                    let (inside, dist) = poly.locate_point(point);
                    if inside && dist > EPS_BOUNDARY_REL * poly.diameter {
                        return Ok(f);
                    }
                }
                Err(Error::OnBoundary)
            }
        }
    }

    /// Locate a point among the depth-0 faces by winding test.
    fn locate_depth0(&self, x: Cx) -> Result<usize> {
        let g = self.field.green(x);
        if g.escaped && g.value >= self.g0 {
            return Err(Error::OutsidePotential { g: g.value, depth: 0 });
        }
        let mut hit = None;
        for f in 0..self.levels[0].faces.len() {
            let poly = self.polygon(PieceRef { depth: 0, face: f })?;
            let (inside, dist) = poly.locate_point(x);
            if dist <= EPS_BOUNDARY_REL * poly.diameter {
                return Err(Error::OnBoundary);
            }
            if inside {
                if hit.is_some() {
                    return Err(Error::AssemblyFailure {
                        address: "depth-0 faces overlap".into(),
                    });
                }
                hit = Some(f);
            }
        }
        hit.ok_or(Error::OnBoundary)
    }

    /// Geometric point location: descend the containment tree with winding
    /// tests against polygonalized boundaries. Points within the boundary
    /// band are rejected as "on-boundary".
    pub fn locate(&self, x: Cx, n: usize) -> Result<PieceRef> {
        if n > self.depth() {
            return Err(Error::AddressUnderflow {
                needed: n,
                available: self.depth(),
            });
        }
        let g = self.field.green(x);
        if g.escaped && g.value >= self.level_potential(n) {
            return Err(Error::OutsidePotential { g: g.value, depth: n });
        }
        let mut cur = PieceRef {
            depth: 0,
            face: self.locate_depth0(x)?,
        };
        for d in 1..=n {
            let mut found = None;
            for child in self.children(cur) {
                let poly = self.polygon(child)?;
                let (inside, dist) = poly.locate_point(x);
                if dist <= EPS_BOUNDARY_REL * poly.diameter {
                    return Err(Error::OnBoundary);
                }
                if inside {
                    if found.is_some() {
                        return Err(Error::AssemblyFailure {
                            address: format!("depth {d}: overlapping children"),
                        });
                    }
                    found = Some(child);
                }
            }
            cur = found.ok_or(Error::OnBoundary)?;
        }
        Ok(cur)
    }

    /// Symbolic point location by address arithmetic: the depth-0 itinerary
    /// of the orbit combined with the (parent, image) recursion. Geometry is
    /// only consulted at depth 0 and for rare ambiguities.
    pub fn locate_symbolic(&self, x: Cx, n: usize) -> Result<PieceRef> {
        let table = self.orbit_faces(x, 0, n)?;
        Ok(PieceRef {
            depth: n,
            face: table[0][n],
        })
    }

    /// Faces of `x, f(x), ..., f^steps(x)` at all depths up to
    /// `max_depth - k` for orbit index k: `rows[k][d]` is the face of
    /// `f^k(x)` at depth `d`. Row k is filled while k + d <= steps + ...
    /// enough to resolve row 0 at `max_depth`.
    pub fn orbit_faces(&self, x: Cx, steps: usize, max_depth: usize) -> Result<Vec<Vec<usize>>> {
        if max_depth > self.depth() {
            return Err(Error::AddressUnderflow {
                needed: max_depth,
                available: self.depth(),
            });
        }
        let rows_n = steps + max_depth + 1;
        let mut pts = Vec::with_capacity(rows_n);
        let mut w = x;
        for k in 0..rows_n {
            if k > 0 {
                w = self.map.step(w);
            }
            pts.push(w);
        }
        let mut rows: Vec<Vec<usize>> = Vec::with_capacity(rows_n);
        for &p in &pts {
            rows.push(vec![self.locate_depth0(p)?]);
        }
        for d in 1..=max_depth {
            for k in 0..rows_n - d {
                let parent = rows[k][d - 1];
                let image = rows[k + 1][d - 1];
                let face = self.resolve_child(d, parent, image, pts[k])?;
                rows[k].push(face);
            }
        }
        Ok(rows)
    }

    /// Nested critical pieces `Y^0(0) .. Y^N(0)` with diameters.
    pub fn critical_nest(&self, n: usize) -> Result<Vec<(PieceRef, f64)>> {
        if n > self.depth() {
            return Err(Error::AddressUnderflow {
                needed: n,
                available: self.depth(),
            });
        }
        let mut out = Vec::with_capacity(n + 1);
        for d in 0..=n {
            let p = self.critical_piece(d);
            let poly = self.polygon(p)?;
            out.push((p, poly.diameter));
        }
        Ok(out)
    }

    /// Landing point of a star, resolved through the preimage chain and a
    /// disambiguating ray trace, then snapped to the exact root.
    pub fn star_point(&self, key: Angle) -> Result<Cx> {
        if let Some(&p) = self.star_points.lock().unwrap().get(&key) {
            return Ok(p);
        }
        let &(depth, sid) = self
            .stars_by_key
            .get(&key)
            .ok_or_else(|| Error::AssemblyFailure {
                address: format!("unknown star {key}"),
            })?;
        let image_key = self.levels[depth].stars[sid].image_key;
        let parent_point = self.star_point(image_key)?;
        let candidates = self.map.preimages(parent_point);
        let mut sep = f64::INFINITY;
        for i in 0..candidates.len() {
            for j in 0..i {
                sep = sep.min((candidates[i] - candidates[j]).norm());
            }
        }
        if !sep.is_finite() || sep == 0.0 {
            return Err(Error::AssemblyFailure {
                address: format!("star {key}: critical-value degeneracy"),
            });
        }
        // Trace the key ray far enough to tell the candidates apart.
        let probe = self.ray_data(key, depth + LANDING_PAD_LEVELS)?;
        let anchor = match &probe.ray.landing {
            Some(p) => *p,
            None => probe.ray.points.last().unwrap().z,
        };
        let mut best = candidates[0];
        let mut best_d = f64::INFINITY;
        for &c in &candidates {
            let dd = (c - anchor).norm();
            if dd < best_d {
                best_d = dd;
                best = c;
            }
        }
        if best_d > sep / 3.0 {
            return Err(Error::AssemblyFailure {
                address: format!("star {key}: landing {best_d:.2e} vs separation {sep:.2e}"),
            });
        }
        self.star_points.lock().unwrap().insert(key, best);
        Ok(best)
    }

    /// Traced ray polyline on the l-adic grid, deep enough for `levels`
    /// depth units below g0, cached by angle.
    fn ray_data(&self, angle: Angle, levels: usize) -> Result<Arc<RayData>> {
        {
            let cache = self.rays.lock().unwrap();
            if let Some(r) = cache.get(&angle) {
                if r.levels >= levels || r.ray.stalled_at.is_none() && r.ray.landing.is_some() {
                    return Ok(Arc::clone(r));
                }
            }
        }
        let lf = self.map.degree() as f64;
        let total = levels * STEPS_PER_LEVEL;
        let schedule: Vec<f64> = (0..=total)
            .map(|k| self.g0 * lf.powf(-(k as f64) / STEPS_PER_LEVEL as f64))
            .collect();
        let (points, stalled_at) = trace_schedule(&self.field, angle, &schedule);
        if points.is_empty() {
            return Err(Error::NewtonStall {
                potential: self.g0,
            });
        }
        let mut ray = ExternalRay {
            angle,
            points,
            landing: None,
            stalled_at,
        };
        if let Ok(p) = ray::land_ray(&ray, 1e-9) {
            ray.landing = Some(p);
        } else if let Ok(p) = ray::land_ray(&ray, 1e-6) {
            ray.landing = Some(p);
        }
        let data = Arc::new(RayData { ray, levels });
        self.rays.lock().unwrap().insert(angle, Arc::clone(&data));
        Ok(data)
    }

    /// Polygonal boundary of a piece, cached. Boundary = equipotential arcs
    /// at the piece level joined by ray segments meeting at star points.
    pub fn polygon(&self, p: PieceRef) -> Result<Arc<Polygon>> {
        if let Some(poly) = self.polygons.lock().unwrap().get(&p) {
            return Ok(Arc::clone(poly));
        }
        let poly = Arc::new(self.build_polygon(p)?);
        self.polygons.lock().unwrap().insert(p, Arc::clone(&poly));
        Ok(poly)
    }

    fn build_polygon(&self, p: PieceRef) -> Result<Polygon> {
        let level = &self.levels[p.depth];
        let face = &level.faces[p.face];
        let g_level = self.level_potential(p.depth);
        let trace_levels = p.depth + LANDING_PAD_LEVELS;
        let mut pts: Vec<Cx> = Vec::new();
        let mut approx = false;

        for (arc_pos, &(i, j)) in face.arcs.iter().enumerate() {
            let a = level.angles[i];
            let b = level.angles[j];
            // Equipotential arc from a to b at g_level.
            let ray_a = self.ray_data(a, trace_levels)?;
            let ray_b = self.ray_data(b, trace_levels)?;
            let za = point_at_potential(&ray_a.ray, g_level).ok_or_else(|| {
                Error::AssemblyFailure {
                    address: format!("ray {a} lacks level {}", p.depth),
                }
            })?;
            let zb = point_at_potential(&ray_b.ray, g_level).ok_or_else(|| {
                Error::AssemblyFailure {
                    address: format!("ray {b} lacks level {}", p.depth),
                }
            })?;
            pts.push(za);
            let inner = ((Angle::arc_len(a, b) * ARC_SAMPLES_PER_TURN).ceil() as usize)
                .clamp(3, 64);
            let mut z = za;
            let mut good = true;
            let mut arc_pts = Vec::with_capacity(inner);
            for s in 1..inner {
                let t = Angle::arc_interp(a, b, s as i64, inner as i64);
                let prev_t = Angle::arc_interp(a, b, s as i64 - 1, inner as i64);
                match ray::equipotential_step(&self.field, g_level, prev_t, t, z, 12) {
                    Some(w) => {
                        arc_pts.push(w);
                        z = w;
                    }
                    None => {
                        good = false;
                        break;
                    }
                }
            }
            if good {
                pts.extend(arc_pts);
            } else {
                // Chord fallback; flagged so callers can treat the polygon
                // as approximate near this arc.
                approx = true;
                for s in 1..inner {
                    let t = s as f64 / inner as f64;
                    pts.push(za + (zb - za) * t);
                }
            }
            pts.push(zb);
            // Ray segment from (b, g_level) down to the star point.
            for q in ray_b.ray.points.iter() {
                if q.potential < g_level * (1.0 - 1e-12) {
                    pts.push(q.z);
                }
            }
            let star_key = level.stars[level.class_of[j]].key;
            let star_pt = self.star_point(star_key)?;
            pts.push(star_pt);
            // Ray segment back up along the next arc's start angle.
            let next_arc = face.arcs[(arc_pos + 1) % face.arcs.len()];
            let up_angle = level.angles[next_arc.0];
            let ray_up = self.ray_data(up_angle, trace_levels)?;
            for q in ray_up.ray.points.iter().rev() {
                if q.potential < g_level * (1.0 - 1e-12) {
                    pts.push(q.z);
                }
            }
        }
        // Deduplicate consecutive repeats.
        pts.dedup_by(|a, b| (*a - *b).norm() < 1e-15);
        let mut diameter = 0.0;
        for i in 0..pts.len() {
            for j in 0..i {
                diameter = f64::max(diameter, (pts[i] - pts[j]).norm());
            }
        }
        Ok(Polygon {
            points: pts,
            diameter,
            approx,
        })
    }
}

/// Point on a traced ray at exactly the given potential (grid-aligned).
fn point_at_potential(ray: &ExternalRay, g: f64) -> Option<Cx> {
    ray.points
        .iter()
        .find(|p| (p.potential - g).abs() <= 1e-9 * g)
        .map(|p| p.z)
}

/// Face of `level` whose angular trace contains `theta` (not a marked angle).
fn face_at_angle(level: &Level, theta: Angle) -> usize {
    let n = level.angles.len();
    let idx = match level.angles.binary_search(&theta) {
        Ok(i) => i, // theta marked: arc starting at theta is fine for midpoints
        Err(pos) => (pos + n - 1) % n,
    };
    level.face_of_arc[idx]
}

/// Extract the complementary faces of the lamination given by `stars` on the
/// sorted `angles`. Each angle starts exactly one equipotential arc (to its
/// cyclic successor); a face continues from the end of an arc through the
/// star there, leaving along the star's cyclically previous angle.
fn extract_faces(
    angles: &[Angle],
    class_of: &[usize],
    stars: &[Star],
) -> (Vec<Face>, Vec<usize>) {
    let m = angles.len();
    let mut face_of_arc = vec![usize::MAX; m];
    let mut faces = Vec::new();
    for start in 0..m {
        if face_of_arc[start] != usize::MAX {
            continue;
        }
        let fid = faces.len();
        let mut arcs = Vec::new();
        let mut i = start;
        loop {
            let j = (i + 1) % m;
            arcs.push((i, j));
            face_of_arc[i] = fid;
            // Enter the star at angles[j]; leave along its cyclic
            // predecessor.
            let star = &stars[class_of[j]];
            let pos = star.angle_idx.iter().position(|&k| k == j).unwrap();
            let prev = star.angle_idx[(pos + star.angle_idx.len() - 1) % star.angle_idx.len()];
            i = prev;
            if i == start {
                break;
            }
        }
        faces.push(Face {
            arcs,
            parent: usize::MAX,
            image: usize::MAX,
            children: Vec::new(),
            critical: false,
        });
    }
    (faces, face_of_arc)
}
