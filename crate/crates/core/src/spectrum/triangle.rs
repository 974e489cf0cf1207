//! Enclosing triangles for convex hulls.
//!
//! Candidates are built from supporting lines of the hull. Every ordered pair
//! of supporting lines spans a wedge; the third side is either another
//! supporting line or the line through a hull vertex that is the midpoint of
//! the cut segment (the area-optimal contact for a wedge). Taking the smallest
//! valid candidate gives an area no larger than the best triangle whose three
//! sides are flush with hull edges.

use serde::{Deserialize, Serialize};

use super::hull::{cross, segment_distance, Hull};
use super::SpectrumError;
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triangle {
    pub v: [C64; 3],
}

impl Triangle {
    pub fn new(a: C64, b: C64, c: C64) -> Self {
        // keep counter-clockwise order
        if cross(b - a, c - a) < 0.0 {
            Triangle { v: [a, c, b] }
        } else {
            Triangle { v: [a, b, c] }
        }
    }

    pub fn area(&self) -> f64 {
        let [a, b, c] = self.v;
        cross(b - a, c - a).abs() / 2.0
    }

    pub fn centroid(&self) -> C64 {
        (self.v[0] + self.v[1] + self.v[2]) / 3.0
    }

    pub fn diameter(&self) -> f64 {
        let [a, b, c] = self.v;
        (a - b).norm().max((b - c).norm()).max((c - a).norm())
    }

    pub fn max_im(&self) -> f64 {
        self.v.iter().map(|z| z.im).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_im(&self) -> f64 {
        self.v.iter().map(|z| z.im).fold(f64::INFINITY, f64::min)
    }

    pub fn conj(&self) -> Self {
        Triangle::new(self.v[0].conj(), self.v[1].conj(), self.v[2].conj())
    }

    /// Inside or within distance `tol` of the boundary.
    pub fn contains(&self, z: C64, tol: f64) -> bool {
        (0..3).all(|e| {
            let a = self.v[e];
            let b = self.v[(e + 1) % 3];
            let d = b - a;
            cross(d, z - a) >= -tol * d.norm()
        })
    }

    /// Euclidean distance from `z` to the closed triangle.
    pub fn distance(&self, z: C64) -> f64 {
        if self.contains(z, 0.0) {
            return 0.0;
        }
        (0..3)
            .map(|e| segment_distance(z, self.v[e], self.v[(e + 1) % 3]))
            .fold(f64::INFINITY, f64::min)
    }

    /// `per_edge` points per edge, starting at each vertex.
    pub fn boundary_samples(&self, per_edge: usize) -> Vec<C64> {
        let mut out = Vec::with_capacity(3 * per_edge);
        for e in 0..3 {
            let a = self.v[e];
            let b = self.v[(e + 1) % 3];
            for s in 0..per_edge {
                out.push(a + (b - a) * (s as f64 / per_edge as f64));
            }
        }
        out
    }

    /// Scales about `anchor`; the result contains `self` whenever the anchor does.
    pub fn scaled_about(&self, anchor: C64, factor: f64) -> Self {
        Triangle {
            v: self.v.map(|z| anchor + (z - anchor) * factor),
        }
    }
}

/// Half-plane to the left of the directed line through `p` along `d`.
#[derive(Debug, Clone, Copy)]
struct Line {
    p: C64,
    d: C64,
}

impl Line {
    fn side(&self, z: C64) -> f64 {
        cross(self.d, z - self.p)
    }

    fn intersect(&self, other: &Line) -> Option<C64> {
        let denom = cross(self.d, other.d);
        if denom.abs() <= 1e-14 * self.d.norm() * other.d.norm() {
            return None;
        }
        let t = cross(other.p - self.p, other.d) / denom;
        Some(self.p + self.d * t)
    }
}

/// Turns degenerate hulls into small proper polygons. Segments are thickened
/// by `1e-6` of their length towards the side with non-positive imaginary
/// normal; single points become a tiny equilateral triangle around the point.
fn thickened(hull: &Hull) -> Vec<C64> {
    let v = &hull.vertices;
    match v.len() {
        1 => {
            let r = 1e-6 * v[0].norm().max(1.0);
            (0..3)
                .map(|q| {
                    let ang = -std::f64::consts::FRAC_PI_2 + q as f64 * 2.0 * std::f64::consts::PI / 3.0;
                    v[0] + C64::from_polar(r, ang)
                })
                .collect()
        }
        2 => {
            let (a, b) = (v[0], v[1]);
            let d = b - a;
            let len = d.norm();
            let mut n = C64::new(-d.im, d.re) / len;
            if n.im > 0.0 {
                n = -n;
            }
            let off = n * (1e-6 * len);
            let mut quad = vec![a, b, b + off, a + off];
            let area: f64 = (0..4).map(|e| cross(quad[e], quad[(e + 1) % 4])).sum();
            if area < 0.0 {
                quad.reverse();
            }
            quad
        }
        _ => v.clone(),
    }
}

fn edge_lines(poly: &[C64]) -> Vec<Line> {
    (0..poly.len())
        .map(|e| Line {
            p: poly[e],
            d: poly[(e + 1) % poly.len()] - poly[e],
        })
        .collect()
}

/// All candidate triangles from pairs of supporting lines.
fn candidates(poly: &[C64], lines: &[Line], mut visit: impl FnMut(Triangle)) {
    let m = poly.len();
    let scale = poly
        .iter()
        .map(|z| (z - poly[0]).norm())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale;
    let inside = |l: &Line, z: C64| l.side(z) >= -tol * l.d.norm();
    for a in 0..lines.len() {
        for b in a + 1..lines.len() {
            let (la, lb) = (lines[a], lines[b]);
            let Some(apex) = la.intersect(&lb) else {
                continue;
            };
            // third side flush with another supporting line
            for lc in &lines[b + 1..] {
                let (Some(p), Some(q)) = (la.intersect(lc), lb.intersect(lc)) else {
                    continue;
                };
                if inside(lc, apex) && inside(&la, q) && inside(&lb, p) {
                    let t = Triangle::new(apex, p, q);
                    if t.area() > 0.0 {
                        visit(t);
                    }
                }
            }
            // third side touching the hull at the midpoint of the cut segment
            let ra = if cross(lb.d, la.d) > 0.0 { la.d } else { -la.d };
            let rb = if cross(la.d, lb.d) > 0.0 { lb.d } else { -lb.d };
            let det = cross(ra, rb);
            if det.abs() <= 1e-14 * ra.norm() * rb.norm() {
                continue;
            }
            for (k, &v) in poly.iter().enumerate() {
                let w = (v - apex) * 2.0;
                let s = cross(w, rb) / det;
                let t = cross(ra, w) / det;
                if s <= 0.0 || t <= 0.0 {
                    continue;
                }
                let p = apex + ra * s;
                let q = apex + rb * t;
                let cut = Line { p, d: q - p };
                let apex_side = cut.side(apex).signum();
                let prev = poly[(k + m - 1) % m];
                let next = poly[(k + 1) % m];
                let ok = |z: C64| cut.side(z) * apex_side >= -tol * cut.d.norm();
                if ok(prev) && ok(next) {
                    let tri = Triangle::new(apex, p, q);
                    if tri.area() > 0.0 {
                        visit(tri);
                    }
                }
            }
        }
    }
}

/// Valid candidates in generation order.
fn valid_candidates(poly: &[C64], lines: &[Line], accept: impl Fn(&Triangle) -> bool) -> Vec<Triangle> {
    let scale = poly
        .iter()
        .map(|z| (z - poly[0]).norm())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut out = Vec::new();
    candidates(poly, lines, |t| {
        if accept(&t) && poly.iter().all(|z| t.contains(*z, 1e-12 * scale)) {
            out.push(t);
        }
    });
    out
}

/// The `limit` lowest-scoring triangles, stable in generation order on ties.
fn lowest(ts: &[Triangle], limit: usize, score: impl Fn(&Triangle) -> f64) -> Vec<Triangle> {
    let mut scored: Vec<(f64, usize)> = ts.iter().enumerate().map(|(i, t)| (score(t), i)).collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(limit).map(|(_, i)| ts[i]).collect()
}

fn bounding_box_triangle(poly: &[C64]) -> Triangle {
    // fallback never expected for proper polygons: a right triangle around the box
    let (mut lo, mut hi) = (poly[0], poly[0]);
    for z in poly {
        lo = C64::new(lo.re.min(z.re), lo.im.min(z.im));
        hi = C64::new(hi.re.max(z.re), hi.im.max(z.im));
    }
    let w = hi.re - lo.re;
    let h = hi.im - lo.im;
    Triangle::new(lo, C64::new(lo.re + 2.0 * w, lo.im), C64::new(lo.re, lo.im + 2.0 * h))
}

/// Smallest triangle (over supporting-line candidates) enclosing the hull,
/// scaled about its centroid by `1 + inflate`.
pub fn min_enclosing_triangle(hull: &Hull, inflate: f64) -> Triangle {
    let poly = thickened(hull);
    let lines = edge_lines(&poly);
    let t = lowest(&valid_candidates(&poly, &lines, |_| true), 1, Triangle::area)
        .pop()
        .unwrap_or_else(|| bounding_box_triangle(&poly));
    t.scaled_about(t.centroid(), 1.0 + inflate)
}

/// Smallest enclosing triangle that stays at or below the hull's topmost
/// point, inflated about its top. See [`lower_half_candidates`].
pub fn lower_half_triangle(hull: &Hull, inflate: f64) -> Triangle {
    lower_half_candidates(hull, inflate, 1)[0]
}

/// Enclosing triangles that stay at or below the hull's topmost point.
///
/// The horizontal supporting line through the top point is added to the
/// hull's edge lines as a candidate side. Returned are the `limit` smallest
/// valid candidates by area, followed by the `limit` best by
/// `area / dist(0, T)^2` (the origin is where `p(0) = 1` is pinned) that are
/// not already listed; the first entry is the smallest. Inflation is anchored
/// on the top of each triangle so no vertex rises above it. Segment hulls give
/// a single thin sliver along the segment.
pub fn lower_half_candidates(hull: &Hull, inflate: f64, limit: usize) -> Vec<Triangle> {
    let finish = |t: Triangle| t.scaled_about(top_anchor(&t), 1.0 + inflate);
    if let Some(t) = segment_sliver(hull) {
        return vec![finish(t)];
    }
    let poly = thickened(hull);
    let ceiling = poly.iter().map(|z| z.im).fold(f64::NEG_INFINITY, f64::max);
    let top = *poly
        .iter()
        .find(|z| z.im == ceiling)
        .expect("non-empty polygon");
    let mut lines = edge_lines(&poly);
    lines.push(Line {
        p: top,
        d: C64::new(-1.0, 0.0),
    });
    let scale = hull.diameter().max(f64::MIN_POSITIVE);
    let valid = valid_candidates(&poly, &lines, |t| t.max_im() <= ceiling + 1e-13 * scale);
    if valid.is_empty() {
        return vec![finish(bounding_box_triangle(&poly))];
    }
    let limit = limit.max(1);
    let mut out = lowest(&valid, limit, Triangle::area);
    let origin = C64::new(0.0, 0.0);
    let far = lowest(&valid, limit, |t| {
        let d = t.distance(origin);
        if d > 0.0 {
            t.area() / (d * d)
        } else {
            f64::INFINITY
        }
    });
    for t in far {
        if t.distance(origin) > 0.0 && !out.contains(&t) {
            out.push(t);
        }
    }
    out.into_iter().map(finish).collect()
}

/// Thin triangle around a segment hull, or `None` for other hulls.
///
/// A horizontal segment hangs a shallow triangle below itself whose top edge
/// overhangs each end by 5% of the length. Any other segment gets its apex at
/// the upper end and a base of half-width `1e-6 * len` across the lower end.
/// Either way points short of the segment (the origin in particular) stay
/// outside and no vertex rises above the segment.
fn segment_sliver(hull: &Hull) -> Option<Triangle> {
    let v = &hull.vertices;
    if v.len() != 2 {
        return None;
    }
    let (hi, lo) = if v[0].im >= v[1].im { (v[0], v[1]) } else { (v[1], v[0]) };
    let d = lo - hi;
    let len = d.norm();
    let thick = 1e-6 * len;
    if hi.im - lo.im > 2.0 * thick {
        let n = C64::new(-d.im, d.re) / len * thick;
        return Some(Triangle::new(hi, lo + n, lo - n));
    }
    let (a, b) = if v[0].re <= v[1].re { (v[0], v[1]) } else { (v[1], v[0]) };
    let y = hi.im;
    let over = 0.05 * len;
    // deep enough that the segment, up to `2 thick` below `y`, is inside
    let depth = 2.0 * thick * (len / 2.0 + over) / over;
    Some(Triangle::new(
        C64::new(a.re - over, y),
        C64::new(b.re + over, y),
        C64::new((a.re + b.re) / 2.0, y - depth),
    ))
}

/// Highest point of the triangle: midpoint of a horizontal top edge, else the top vertex.
fn top_anchor(t: &Triangle) -> C64 {
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| t.v[b].im.total_cmp(&t.v[a].im));
    let (a, b) = (t.v[idx[0]], t.v[idx[1]]);
    if a.im == b.im {
        (a + b) / 2.0
    } else {
        a
    }
}

/// Result of bringing a triangle into the lower half-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Oriented {
    pub triangle: Triangle,
    /// The triangle was conjugated; smoother weights must be conjugated too.
    pub flipped: bool,
}

/// Conjugates the triangle when it reaches further above the real axis than
/// below. Fails when it sticks out on both sides by more than 5% of its
/// diameter, in which case no cubic with `p(0) = 1` can damp it usefully.
pub fn orient_lower_half(t: &Triangle) -> Result<Oriented, SpectrumError> {
    let (hi, lo) = (t.max_im(), t.min_im());
    let flipped = hi > lo.abs();
    let triangle = if flipped { t.conj() } else { *t };
    let margin = 0.05 * t.diameter();
    if hi > margin && lo < -margin {
        return Err(SpectrumError::NotHalfPlaneBounded {
            above: hi,
            below: lo,
        });
    }
    Ok(Oriented { triangle, flipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::hull::convex_hull;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    /// Exhaustive search over triangles whose three sides lie on hull edges.
    fn flush_edge_oracle(v: &[C64]) -> f64 {
        let m = v.len();
        let line = |e: usize| (v[e], v[(e + 1) % m] - v[e]);
        let meet = |(p1, d1): (C64, C64), (p2, d2): (C64, C64)| -> Option<C64> {
            let den = cross(d1, d2);
            if den.abs() < 1e-300 {
                return None;
            }
            Some(p1 + d1 * (cross(p2 - p1, d2) / den))
        };
        let mut best = f64::INFINITY;
        for a in 0..m {
            for b in a + 1..m {
                for cc in b + 1..m {
                    let (la, lb, lc) = (line(a), line(b), line(cc));
                    let (Some(x), Some(y), Some(z)) = (meet(la, lb), meet(lb, lc), meet(lc, la)) else {
                        continue;
                    };
                    let t = Triangle::new(x, y, z);
                    if v.iter().all(|p| t.contains(*p, 1e-9)) {
                        best = best.min(t.area());
                    }
                }
            }
        }
        best
    }

    #[test]
    fn single_point_gives_small_triangle() {
        let z0 = c(0.3, -0.7);
        let h = convex_hull(&[z0]).unwrap();
        let t = min_enclosing_triangle(&h, 0.05);
        assert!(t.area() > 0.0);
        assert!(t.contains(z0, 0.0));
        assert!((t.centroid() - z0).norm() < 1e-12);
        assert!(t.diameter() < 1e-5);
    }

    #[test]
    fn equilateral_encloses_itself() {
        let v: Vec<C64> = (0..3)
            .map(|q| C64::from_polar(1.0, 0.3 + q as f64 * 2.0 * std::f64::consts::PI / 3.0))
            .collect();
        let h = convex_hull(&v).unwrap();
        let t = min_enclosing_triangle(&h, 0.0);
        let tri = Triangle::new(v[0], v[1], v[2]);
        assert!((t.area() - tri.area()).abs() < 1e-12);
        let inflated = min_enclosing_triangle(&h, 0.1);
        assert!((inflated.area() - 1.21 * tri.area()).abs() < 1e-12);
        for z in &v {
            assert!(inflated.contains(*z, 0.0));
        }
    }

    #[test]
    fn square_needs_twice_its_area() {
        let h = convex_hull(&[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 1.0), c(0.0, 1.0)]).unwrap();
        let t = min_enclosing_triangle(&h, 0.0);
        assert!((t.area() - 2.0).abs() < 1e-12, "{}", t.area());
    }

    #[test]
    fn random_hulls_against_flush_edge_oracle() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<C64> = (0..200)
                .map(|_| {
                    let r: f64 = rng.gen_range(0.0..1.0f64).sqrt();
                    let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    c(2.0 * r * a.cos() + 0.5, r * a.sin() - 1.0)
                })
                .collect();
            let h = convex_hull(&pts).unwrap();
            let t = min_enclosing_triangle(&h, 0.0);
            let oracle = flush_edge_oracle(&h.vertices);
            assert!(t.area() <= 1.1 * oracle, "seed {seed}: {} vs {oracle}", t.area());
            for p in &pts {
                assert!(t.contains(*p, 1e-10));
            }
        }
    }

    #[test]
    fn segment_hull_is_thickened() {
        let h = convex_hull(&[c(0.5, 0.0), c(2.0, 0.0)]).unwrap();
        let t = lower_half_triangle(&h, 0.05);
        assert!(t.area() > 0.0);
        assert!(t.max_im() <= 1e-12);
        assert!(t.contains(c(0.5, 0.0), 1e-10) && t.contains(c(2.0, 0.0), 1e-10));
        // the sliver does not reach back to the origin
        assert!(!t.contains(c(0.0, 0.0), 1e-10));
    }

    #[test]
    fn lower_half_triangle_stays_below_top_point() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<C64> = (0..150)
                .map(|_| c(rng.gen_range(-1.0..2.0), -rng.gen_range(0.01..1.5f64)))
                .collect();
            let h = convex_hull(&pts).unwrap();
            let top = h.max_im();
            let t = lower_half_triangle(&h, 0.05);
            assert!(t.max_im() <= top + 1e-12);
            for p in &pts {
                assert!(t.contains(*p, 1e-10));
            }
        }
    }

    #[test]
    fn orientation_rules() {
        let low = Triangle::new(c(0.0, -0.1), c(1.0, -1.0), c(2.0, -0.2));
        let o = orient_lower_half(&low).unwrap();
        assert!(!o.flipped);
        assert_eq!(o.triangle, low);

        let o = orient_lower_half(&low.conj()).unwrap();
        assert!(o.flipped);
        for z in &o.triangle.v {
            assert!(low.v.contains(z));
        }

        let flat = Triangle::new(c(0.0, 0.0), c(1.0, 0.0), c(2.0, 0.0));
        let o = orient_lower_half(&flat).unwrap();
        assert!(!o.flipped);
        assert_eq!(o.triangle, flat);

        let straddle = Triangle::new(c(0.0, 1.0), c(1.0, -1.0), c(2.0, 0.0));
        assert!(matches!(
            orient_lower_half(&straddle),
            Err(SpectrumError::NotHalfPlaneBounded { .. })
        ));
    }
}
