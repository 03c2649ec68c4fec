//! Convex PQ capability charts in half-space form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Convex capability polygon of one DG. Facet rows have unit-length
/// outward normals, so `a_pq · [p, q] - b_pq` is a signed distance in MW.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PQChart {
    /// Counter-clockwise vertices, MW / MVAr.
    pub vertices: Vec<[f64; 2]>,
    pub a_pq: Vec<[f64; 2]>,
    pub b_pq: Vec<f64>,
    /// `(p_min, p_max, q_min, q_max)` axis-aligned hull.
    pub bbox: (f64, f64, f64, f64),
}

impl PQChart {
    pub fn rectangle(p_min: f64, p_max: f64, q_min: f64, q_max: f64) -> Result<Self> {
        polygon_from_vertices(&[[p_min, q_min], [p_max, q_min], [p_max, q_max], [p_min, q_max]])
    }

    pub fn n_facets(&self) -> usize {
        self.b_pq.len()
    }

    /// Largest facet violation at `(p, q)`; non-positive inside.
    pub fn max_violation(&self, p: f64, q: f64) -> f64 {
        self.a_pq
            .iter()
            .zip(&self.b_pq)
            .map(|(a, b)| a[0] * p + a[1] * q - b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, p: f64, q: f64, tol: f64) -> bool {
        self.max_violation(p, q) <= tol
    }

    /// Polygon area by the shoelace formula.
    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        let twice: f64 = (0..n)
            .map(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                a[0] * b[1] - b[0] * a[1]
            })
            .sum();
        twice.abs() / 2.0
    }

    pub fn box_area(&self) -> f64 {
        let (p0, p1, q0, q1) = self.bbox;
        (p1 - p0) * (q1 - q0)
    }

    pub fn centroid(&self) -> [f64; 2] {
        let n = self.vertices.len() as f64;
        let (sp, sq) = self.vertices.iter().fold((0.0, 0.0), |(a, b), v| (a + v[0], b + v[1]));
        [sp / n, sq / n]
    }

    /// True when the polygon coincides with its bounding box.
    pub fn is_rectangle(&self) -> bool {
        (self.area() - self.box_area()).abs() <= 1e-12 * self.box_area().max(1.0)
    }
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Builds a chart from an unordered vertex set: orders the points
/// counter-clockwise, verifies strict convexity and derives facet rows.
pub fn polygon_from_vertices(vertices: &[[f64; 2]]) -> Result<PQChart> {
    if vertices.len() < 3 {
        return Err(Error::DegeneratePolygon(format!("{} vertices, need at least 3", vertices.len())));
    }
    if vertices.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
        return Err(Error::DegeneratePolygon("non-finite vertex".into()));
    }
    let n = vertices.len() as f64;
    let cx = vertices.iter().map(|v| v[0]).sum::<f64>() / n;
    let cy = vertices.iter().map(|v| v[1]).sum::<f64>() / n;
    let mut ordered = vertices.to_vec();
    ordered.sort_by(|a, b| {
        let ta = (a[1] - cy).atan2(a[0] - cx);
        let tb = (b[1] - cy).atan2(b[0] - cx);
        ta.total_cmp(&tb)
    });

    let scale = ordered
        .iter()
        .map(|v| (v[0] - cx).abs().max((v[1] - cy).abs()))
        .fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::DegeneratePolygon("all vertices coincide".into()));
    }
    let eps = 1e-12 * scale * scale;
    let m = ordered.len();
    let turns: Vec<f64> = (0..m).map(|i| cross(ordered[i], ordered[(i + 1) % m], ordered[(i + 2) % m])).collect();
    if turns.iter().all(|t| t.abs() <= eps) {
        return Err(Error::DegeneratePolygon("vertices are collinear".into()));
    }
    if turns.iter().any(|t| *t < -eps) {
        return Err(Error::NonConvexPolygon);
    }
    if turns.iter().any(|t| t.abs() <= eps) {
        return Err(Error::DegeneratePolygon("repeated or collinear consecutive vertices".into()));
    }

    let mut a_pq = Vec::with_capacity(m);
    let mut b_pq = Vec::with_capacity(m);
    for i in 0..m {
        let v0 = ordered[i];
        let v1 = ordered[(i + 1) % m];
        let (dx, dy) = (v1[0] - v0[0], v1[1] - v0[1]);
        let len = dx.hypot(dy);
        let normal = [dy / len, -dx / len];
        a_pq.push(normal);
        b_pq.push(normal[0] * v0[0] + normal[1] * v0[1]);
    }
    let bbox = ordered.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |(p0, p1, q0, q1), v| (p0.min(v[0]), p1.max(v[0]), q0.min(v[1]), q1.max(v[1])),
    );
    Ok(PQChart { vertices: ordered, a_pq, b_pq, bbox })
}

/// Inclusive membership test: `max(a_pq·[p,q] − b_pq) ≤ tol`.
pub fn polygon_contains(chart: &PQChart, p: f64, q: f64, tol: f64) -> bool {
    chart.contains(p, q, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Winding number of a closed polygon around `pt`; non-zero means inside.
    fn winding_number(poly: &[[f64; 2]], pt: [f64; 2]) -> i32 {
        let mut wn = 0;
        for i in 0..poly.len() {
            let a = poly[i];
            let b = poly[(i + 1) % poly.len()];
            let side = (b[0] - a[0]) * (pt[1] - a[1]) - (pt[0] - a[0]) * (b[1] - a[1]);
            if a[1] <= pt[1] {
                if b[1] > pt[1] && side > 0.0 {
                    wn += 1;
                }
            } else if b[1] <= pt[1] && side < 0.0 {
                wn -= 1;
            }
        }
        wn
    }

    fn random_convex(rng: &mut ChaCha8Rng, k: usize) -> Vec<[f64; 2]> {
        let mut angles: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
        angles.sort_by(f64::total_cmp);
        let (cx, cy, r) = (rng.gen_range(0.5..1.5), rng.gen_range(0.5..1.5), rng.gen_range(0.3..1.0));
        angles.iter().map(|t| [cx + r * t.cos(), cy + r * t.sin()]).collect()
    }

    #[test]
    fn rectangle_facets_match_box() {
        let chart = polygon_from_vertices(&[[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]]).unwrap();
        assert_eq!(chart.n_facets(), 4);
        assert_eq!(chart.bbox, (0.0, 2.0, 0.0, 2.0));
        let mut rows: Vec<(i64, i64, i64)> = chart
            .a_pq
            .iter()
            .zip(&chart.b_pq)
            .map(|(a, b)| ((a[0] * 1e6).round() as i64, (a[1] * 1e6).round() as i64, (b * 1e6).round() as i64))
            .collect();
        rows.sort();
        assert_eq!(rows, vec![(-1_000_000, 0, 0), (0, -1_000_000, 0), (0, 1_000_000, 2_000_000), (1_000_000, 0, 2_000_000)]);
    }

    #[test]
    fn triangle_normals() {
        let chart = polygon_from_vertices(&[[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]]).unwrap();
        assert_eq!(chart.n_facets(), 3);
        assert_eq!(chart.bbox, (0.0, 2.0, 0.0, 2.0));
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let hyp = chart.a_pq.iter().zip(&chart.b_pq).find(|(a, _)| a[0] > 0.5 && a[1] > 0.5).unwrap();
        assert!((hyp.0[0] - s).abs() < 1e-12 && (hyp.0[1] - s).abs() < 1e-12);
        assert!((hyp.1 - 2.0 * s).abs() < 1e-12);
        assert!(!chart.contains(2.0, 2.0, 1e-9));
        assert!(chart.contains(chart.centroid()[0], chart.centroid()[1], 0.0));
    }

    #[test]
    fn vertices_reordered_ccw() {
        let chart = polygon_from_vertices(&[[0.0, 2.0], [2.0, 0.0], [2.0, 2.0], [0.0, 0.0]]).unwrap();
        let v = &chart.vertices;
        for i in 0..v.len() {
            assert!(cross(v[i], v[(i + 1) % 4], v[(i + 2) % 4]) > 0.0);
        }
    }

    #[test]
    fn rejects_degenerate_and_nonconvex() {
        assert!(matches!(polygon_from_vertices(&[[0.0, 0.0], [1.0, 1.0]]), Err(Error::DegeneratePolygon(_))));
        assert!(matches!(
            polygon_from_vertices(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]),
            Err(Error::DegeneratePolygon(_))
        ));
        // Interior point makes the set non-convex as a vertex list.
        assert!(matches!(
            polygon_from_vertices(&[[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0], [1.0, 0.3]]),
            Err(Error::NonConvexPolygon)
        ));
    }

    #[test]
    fn random_pentagon_vertices_lie_on_two_facets() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let chart = polygon_from_vertices(&random_convex(&mut rng, 5)).unwrap();
            for v in &chart.vertices {
                let mut tight = 0;
                for (a, b) in chart.a_pq.iter().zip(&chart.b_pq) {
                    let s = a[0] * v[0] + a[1] * v[1] - b;
                    assert!(s <= 1e-9);
                    if s.abs() <= 1e-9 {
                        tight += 1;
                    }
                }
                assert_eq!(tight, 2);
            }
        }
    }

    #[test]
    fn agrees_with_winding_number() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let chart = polygon_from_vertices(&random_convex(&mut rng, 6)).unwrap();
            let (p0, p1, q0, q1) = chart.bbox;
            for _ in 0..10_000 {
                let pt = [rng.gen_range(p0..p1), rng.gen_range(q0..q1)];
                let inside = chart.contains(pt[0], pt[1], 0.0);
                let wn = winding_number(&chart.vertices, pt) != 0;
                if chart.max_violation(pt[0], pt[1]).abs() > 1e-12 {
                    assert_eq!(inside, wn, "point {pt:?}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn rectangle_membership_is_box_membership(
            p0 in -5.0..0.0f64, w in 0.1..5.0f64, q0 in -5.0..0.0f64, h in 0.1..5.0f64,
            p in -6.0..6.0f64, q in -6.0..6.0f64,
        ) {
            let chart = PQChart::rectangle(p0, p0 + w, q0, q0 + h).unwrap();
            let in_box = p >= p0 && p <= p0 + w && q >= q0 && q <= q0 + h;
            prop_assert_eq!(chart.contains(p, q, 0.0), in_box);
        }

        #[test]
        fn box_is_tight_hull(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = random_convex(&mut rng, 7);
            let chart = polygon_from_vertices(&pts).unwrap();
            let (p0, p1, q0, q1) = chart.bbox;
            prop_assert!(pts.iter().all(|v| v[0] >= p0 && v[0] <= p1 && v[1] >= q0 && v[1] <= q1));
            prop_assert!(pts.iter().any(|v| v[0] == p0) && pts.iter().any(|v| v[0] == p1));
            prop_assert!(pts.iter().any(|v| v[1] == q0) && pts.iter().any(|v| v[1] == q1));
        }
    }
}
