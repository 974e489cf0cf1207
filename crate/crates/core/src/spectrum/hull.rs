//! Convex hulls of point sets in the complex plane (monotone chain).

use serde::{Deserialize, Serialize};

use super::SpectrumError;
use crate::C64;

#[inline]
pub(crate) fn cross(a: C64, b: C64) -> f64 {
    a.re * b.im - a.im * b.re
}

/// Counter-clockwise hull vertices with collinear points removed.
///
/// `degenerate` is set when the input has no three non-collinear points; the
/// vertex list then holds the one or two extreme points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hull {
    pub vertices: Vec<C64>,
    pub degenerate: bool,
}

impl Hull {
    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (a, p) in self.vertices.iter().enumerate() {
            for q in &self.vertices[a + 1..] {
                d = d.max((p - q).norm());
            }
        }
        d
    }

    pub fn max_im(&self) -> f64 {
        self.vertices.iter().map(|z| z.im).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_im(&self) -> f64 {
        self.vertices.iter().map(|z| z.im).fold(f64::INFINITY, f64::min)
    }

    /// Point-in-polygon test with absolute slack `tol` (degenerate hulls
    /// fall back to distance from the segment or point).
    pub fn contains(&self, z: C64, tol: f64) -> bool {
        let v = &self.vertices;
        match v.len() {
            0 => false,
            1 => (z - v[0]).norm() <= tol,
            2 => segment_distance(z, v[0], v[1]) <= tol,
            m => (0..m).all(|e| {
                let a = v[e];
                let b = v[(e + 1) % m];
                let d = b - a;
                cross(d, z - a) >= -tol * d.norm()
            }),
        }
    }

    /// Points along the boundary: every vertex plus interior edge points,
    /// at least `total` in all, spread by edge length.
    pub fn boundary_samples(&self, total: usize) -> Vec<C64> {
        let v = &self.vertices;
        if v.len() == 1 {
            return v.clone();
        }
        let edges: Vec<(C64, C64)> = if v.len() == 2 {
            vec![(v[0], v[1]), (v[1], v[0])]
        } else {
            (0..v.len()).map(|e| (v[e], v[(e + 1) % v.len()])).collect()
        };
        let perimeter: f64 = edges.iter().map(|(a, b)| (b - a).norm()).sum();
        let mut out = Vec::with_capacity(total + edges.len());
        for (a, b) in edges {
            let count = if perimeter > 0.0 {
                ((b - a).norm() / perimeter * total as f64).ceil() as usize
            } else {
                1
            }
            .max(1);
            for s in 0..count {
                out.push(a + (b - a) * (s as f64 / count as f64));
            }
        }
        out
    }
}

pub(crate) fn segment_distance(z: C64, a: C64, b: C64) -> f64 {
    let d = b - a;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return (z - a).norm();
    }
    let t = ((z - a).re * d.re + (z - a).im * d.im) / len2;
    let t = t.clamp(0.0, 1.0);
    (z - (a + d * t)).norm()
}

fn lexicographic(a: &C64, b: &C64) -> std::cmp::Ordering {
    a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im))
}

pub fn convex_hull(points: &[C64]) -> Result<Hull, SpectrumError> {
    if points.is_empty() {
        return Err(SpectrumError::EmptyPointSet);
    }
    if points.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(SpectrumError::NonFinite);
    }
    let mut pts = points.to_vec();
    pts.sort_by(lexicographic);
    pts.dedup();
    if pts.len() == 1 {
        return Ok(Hull {
            vertices: pts,
            degenerate: true,
        });
    }
    let scale = pts
        .iter()
        .map(|z| (z - pts[0]).norm())
        .fold(0.0, f64::max);
    // collinear within rounding of the coordinates
    let eps = 1e-14 * scale * scale;
    let mut lower: Vec<C64> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2
            && cross(lower[lower.len() - 1] - lower[lower.len() - 2], p - lower[lower.len() - 2])
                <= eps
        {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<C64> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2
            && cross(upper[upper.len() - 1] - upper[upper.len() - 2], p - upper[upper.len() - 2])
                <= eps
        {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() < 3 {
        // all collinear: keep the two extreme points
        let a = pts[0];
        let b = *pts.last().unwrap();
        return Ok(Hull {
            vertices: vec![a, b],
            degenerate: true,
        });
    }
    Ok(Hull {
        vertices: lower,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn signed_area(v: &[C64]) -> f64 {
        (0..v.len()).map(|e| cross(v[e], v[(e + 1) % v.len()])).sum::<f64>() / 2.0
    }

    #[test]
    fn unit_square() {
        let pts = [c(0.0, 0.0), c(1.0, 0.0), c(1.0, 1.0), c(0.0, 1.0), c(0.5, 0.5), c(0.5, 0.0)];
        let h = convex_hull(&pts).unwrap();
        assert!(!h.degenerate);
        assert_eq!(h.vertices.len(), 4);
        for p in &pts[..4] {
            assert!(h.vertices.contains(p));
        }
        assert!(signed_area(&h.vertices) > 0.0);
    }

    #[test]
    fn duplicates_removed() {
        let pts = [c(0.0, 0.0), c(0.0, 0.0), c(2.0, 0.0), c(0.0, 2.0), c(2.0, 0.0)];
        let h = convex_hull(&pts).unwrap();
        assert_eq!(h.vertices.len(), 3);
    }

    #[test]
    fn collinear_is_degenerate() {
        let pts: Vec<C64> = (0..10).map(|t| c(t as f64, 2.0 * t as f64)).collect();
        let h = convex_hull(&pts).unwrap();
        assert!(h.degenerate);
        assert_eq!(h.vertices, vec![c(0.0, 0.0), c(9.0, 18.0)]);
        let one = convex_hull(&[c(1.0, 1.0), c(1.0, 1.0)]).unwrap();
        assert!(one.degenerate);
        assert_eq!(one.vertices.len(), 1);
        assert!(convex_hull(&[]).is_err());
    }

    #[test]
    fn boundary_samples_cover_vertices() {
        let h = convex_hull(&[c(0.0, 0.0), c(3.0, 0.0), c(0.0, 4.0)]).unwrap();
        let s = h.boundary_samples(256);
        assert!(s.len() >= 256);
        for v in &h.vertices {
            assert!(s.contains(v));
        }
        for z in &s {
            assert!(h.contains(*z, 1e-12));
        }
    }

    proptest! {
        #[test]
        fn random_points_inside_hull(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<C64> = (0..100)
                .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-3.0..0.5)))
                .collect();
            let h = convex_hull(&pts).unwrap();
            prop_assert!(signed_area(&h.vertices) > 0.0);
            for p in &pts {
                prop_assert!(h.contains(*p, 1e-12));
            }
            // strictly convex: every vertex turn is a left turn
            let v = &h.vertices;
            for e in 0..v.len() {
                let a = v[e];
                let b = v[(e + 1) % v.len()];
                let d = v[(e + 2) % v.len()];
                prop_assert!(cross(b - a, d - b) > 0.0);
            }
        }
    }
}
