//! Numerical integration rules.
//!
//! Uncut squares use a 3x3 tensor Gauss rule, clipped regions are
//! triangulated and use a 7-point degree-5 rule per triangle, and all line
//! integrals (interface pieces, boundary edges, ghost faces) use 3-point
//! Gauss. Weights are always positive.

use crate::error::{Error, Result};
use crate::mesh::EPS_GEO;

/// 3-point Gauss-Legendre rule on [0, 1]: (point, weight), weights sum to 1.
pub fn gauss3() -> [(f64, f64); 3] {
    let d = 0.5 * (3.0f64 / 5.0).sqrt();
    [
        (0.5 - d, 5.0 / 18.0),
        (0.5, 8.0 / 18.0),
        (0.5 + d, 5.0 / 18.0),
    ]
}

/// Tensor 3x3 Gauss rule on the square `[x0, x0+h] x [y0, y0+h]`.
pub fn square_rule(x0: f64, y0: f64, h: f64) -> (Vec<[f64; 2]>, Vec<f64>) {
    let g = gauss3();
    let mut pts = Vec::with_capacity(9);
    let mut wts = Vec::with_capacity(9);
    for &(gy, wy) in &g {
        for &(gx, wx) in &g {
            pts.push([x0 + gx * h, y0 + gy * h]);
            wts.push(wx * wy * h * h);
        }
    }
    (pts, wts)
}

/// 3-point Gauss rule on the segment from `a` to `b`; weights sum to the
/// segment length.
pub fn line_rule(a: [f64; 2], b: [f64; 2]) -> ([[f64; 2]; 3], [f64; 3]) {
    let g = gauss3();
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    let mut pts = [[0.0; 2]; 3];
    let mut wts = [0.0; 3];
    for (k, &(t, w)) in g.iter().enumerate() {
        pts[k] = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        wts[k] = w * len;
    }
    (pts, wts)
}

/// 7-point degree-5 rule on the triangle `(a, b, c)`; weights sum to the
/// triangle area.
pub fn triangle_rule(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> ([[f64; 2]; 7], [f64; 7]) {
    let s15 = 15.0f64.sqrt();
    let w_center = 9.0 / 40.0;
    let w_minor = (155.0 - s15) / 1200.0;
    let w_major = (155.0 + s15) / 1200.0;
    let a_minor = (6.0 - s15) / 21.0;
    let a_major = (6.0 + s15) / 21.0;
    let bary: [([f64; 3], f64); 7] = [
        ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], w_center),
        ([1.0 - 2.0 * a_minor, a_minor, a_minor], w_minor),
        ([a_minor, 1.0 - 2.0 * a_minor, a_minor], w_minor),
        ([a_minor, a_minor, 1.0 - 2.0 * a_minor], w_minor),
        ([1.0 - 2.0 * a_major, a_major, a_major], w_major),
        ([a_major, 1.0 - 2.0 * a_major, a_major], w_major),
        ([a_major, a_major, 1.0 - 2.0 * a_major], w_major),
    ];
    let area = 0.5
        * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
            .abs();
    let mut pts = [[0.0; 2]; 7];
    let mut wts = [0.0; 7];
    for (k, &(l, w)) in bary.iter().enumerate() {
        pts[k] = [
            l[0] * a[0] + l[1] * b[0] + l[2] * c[0],
            l[0] * a[1] + l[1] * b[1] + l[2] * c[1],
        ];
        wts[k] = w * area;
    }
    (pts, wts)
}

/// Signed shoelace area of a polygon (positive when counterclockwise).
pub fn shoelace(pts: &[[f64; 2]]) -> f64 {
    let m = pts.len();
    let mut acc = 0.0;
    for i in 0..m {
        let a = pts[i];
        let b = pts[(i + 1) % m];
        acc += a[0] * b[1] - b[0] * a[1];
    }
    0.5 * acc
}

fn cross(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Drop consecutive duplicates and collinear vertices.
fn clean_polygon(pts: &[[f64; 2]], scale: f64) -> Vec<[f64; 2]> {
    let tol = EPS_GEO.max(1e-14 * scale);
    let mut out: Vec<[f64; 2]> = Vec::with_capacity(pts.len());
    for &p in pts {
        if let Some(&last) = out.last() {
            if (p[0] - last[0]).abs() <= tol && (p[1] - last[1]).abs() <= tol {
                continue;
            }
        }
        out.push(p);
    }
    while out.len() > 1 {
        let first = out[0];
        let last = *out.last().unwrap();
        if (first[0] - last[0]).abs() <= tol && (first[1] - last[1]).abs() <= tol {
            out.pop();
        } else {
            break;
        }
    }
    // Remove collinear vertices; the area tolerance is relative to the
    // polygon scale.
    let area_tol = tol * scale;
    let mut changed = true;
    while changed && out.len() > 3 {
        changed = false;
        let m = out.len();
        for i in 0..m {
            let a = out[(i + m - 1) % m];
            let b = out[i];
            let c = out[(i + 1) % m];
            if cross(a, b, c).abs() <= area_tol {
                out.remove(i);
                changed = true;
                break;
            }
        }
    }
    out
}

fn point_in_triangle(p: [f64; 2], a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> bool {
    let d1 = cross(a, b, p);
    let d2 = cross(b, c, p);
    let d3 = cross(c, a, p);
    let has_neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
    let has_pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
    !(has_neg && has_pos)
}

/// Triangulate a simple counterclockwise polygon. Convex polygons are fanned
/// from the centroid; the rest go through ear clipping.
pub fn triangulate(pts: &[[f64; 2]]) -> Result<Vec<[[f64; 2]; 3]>> {
    let scale = pts
        .iter()
        .flat_map(|p| p.iter())
        .fold(0.0f64, |m, &v| m.max(v.abs()))
        .max(1.0);
    let poly = clean_polygon(pts, scale);
    if poly.len() < 3 {
        return Ok(Vec::new());
    }
    let m = poly.len();
    let convex = (0..m).all(|i| {
        cross(poly[i], poly[(i + 1) % m], poly[(i + 2) % m]) >= -EPS_GEO * scale
    });
    if convex {
        let cx = poly.iter().map(|p| p[0]).sum::<f64>() / m as f64;
        let cy = poly.iter().map(|p| p[1]).sum::<f64>() / m as f64;
        let c = [cx, cy];
        return Ok((0..m)
            .map(|i| [c, poly[i], poly[(i + 1) % m]])
            .collect());
    }

    // Ear clipping.
    let mut verts = poly;
    let mut tris = Vec::with_capacity(verts.len() - 2);
    let mut guard = 0usize;
    while verts.len() > 3 {
        let m = verts.len();
        let mut clipped = false;
        for i in 0..m {
            let a = verts[(i + m - 1) % m];
            let b = verts[i];
            let c = verts[(i + 1) % m];
            if cross(a, b, c) <= 0.0 {
                continue; // reflex or degenerate corner
            }
            let mut ear = true;
            for (k, &q) in verts.iter().enumerate() {
                if k == (i + m - 1) % m || k == i || k == (i + 1) % m {
                    continue;
                }
                if point_in_triangle(q, a, b, c) {
                    ear = false;
                    break;
                }
            }
            if ear {
                tris.push([a, b, c]);
                verts.remove(i);
                clipped = true;
                break;
            }
        }
        if !clipped {
            return Err(Error::Geometry(
                "ear clipping failed: polygon is not simple".into(),
            ));
        }
        guard += 1;
        if guard > 10_000 {
            return Err(Error::Geometry("ear clipping did not terminate".into()));
        }
    }
    tris.push([verts[0], verts[1], verts[2]]);
    Ok(tris)
}

/// Quadrature for a simple polygon: triangulate, then apply the degree-5
/// triangle rule on each part.
pub fn polygon_rule(pts: &[[f64; 2]]) -> Result<(Vec<[f64; 2]>, Vec<f64>)> {
    let tris = triangulate(pts)?;
    let mut points = Vec::with_capacity(7 * tris.len());
    let mut weights = Vec::with_capacity(7 * tris.len());
    for t in tris {
        let (p, w) = triangle_rule(t[0], t[1], t[2]);
        points.extend_from_slice(&p);
        weights.extend_from_slice(&w);
    }
    Ok((points, weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn integrate(pts: &[[f64; 2]], wts: &[f64], f: impl Fn(f64, f64) -> f64) -> f64 {
        pts.iter()
            .zip(wts)
            .map(|(p, w)| w * f(p[0], p[1]))
            .sum()
    }

    #[test]
    fn line_rule_length_and_moments() {
        let (_, w) = line_rule([0.0, 0.0], [2.0, 0.0]);
        assert_relative_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-15);

        let (p, w) = line_rule([0.0, 0.0], [1.0, 0.0]);
        let x2 = integrate(&p, &w, |x, _| x * x);
        assert_relative_eq!(x2, 1.0 / 3.0, epsilon = 1e-15);
        // Degree 6 exceeds the rule's exactness; the analytic value is 1/7.
        let x6 = integrate(&p, &w, |x, _| x.powi(6));
        assert!((x6 - 1.0 / 7.0).abs() < 5e-4);
        assert!((x6 - 1.0 / 7.0).abs() > 0.0);
    }

    #[test]
    fn square_rule_moments() {
        let (p, w) = square_rule(0.0, 0.0, 1.0);
        assert_relative_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        let x2y2 = integrate(&p, &w, |x, y| x * x * y * y);
        assert_relative_eq!(x2y2, 1.0 / 9.0, epsilon = 1e-14);
        let x4y4 = integrate(&p, &w, |x, y| x.powi(4) * y.powi(4));
        assert!((x4y4 - 1.0 / 25.0).abs() < 1e-3);
    }

    #[test]
    fn triangle_rule_moments() {
        let (p, w) = triangle_rule([0.0, 0.0], [1.0, 0.0], [0.0, 1.0]);
        assert_relative_eq!(w.iter().sum::<f64>(), 0.5, epsilon = 1e-15);
        let x = integrate(&p, &w, |x, _| x);
        assert_relative_eq!(x, 1.0 / 6.0, epsilon = 1e-15);
        // Degree-5 exactness: x^3 y^2 over the reference triangle is 1/420.
        let x3y2 = integrate(&p, &w, |x, y| x.powi(3) * y * y);
        assert_relative_eq!(x3y2, 1.0 / 420.0, epsilon = 1e-15);
    }

    #[test]
    fn polygon_rule_constant_is_area() {
        let quad = vec![[0.0, 0.0], [0.4, 0.0], [0.4, 1.0], [0.0, 1.0]];
        let (p, w) = polygon_rule(&quad).unwrap();
        assert_relative_eq!(
            integrate(&p, &w, |_, _| 1.0),
            shoelace(&quad),
            epsilon = 1e-14
        );
        // A non-convex polygon.
        let arrow = vec![[0.0, 0.0], [1.0, 0.0], [0.3, 0.3], [0.0, 1.0]];
        let (p, w) = polygon_rule(&arrow).unwrap();
        assert!(w.iter().all(|&x| x > 0.0));
        assert_relative_eq!(
            integrate(&p, &w, |_, _| 1.0),
            shoelace(&arrow),
            epsilon = 1e-14
        );
    }

    #[test]
    fn polygon_rule_degree_four_exact() {
        // Compare against analytic moments from the divergence theorem,
        // integrating x^a y^b exactly along the boundary with 5-point Gauss.
        let poly = vec![[0.1, 0.0], [0.9, 0.2], [1.0, 0.8], [0.4, 1.1], [-0.1, 0.5]];
        let (p, w) = polygon_rule(&poly).unwrap();
        for a in 0..=4usize {
            for b in 0..=(4 - a) {
                let exact = polygon_moment(&poly, a as i32, b as i32);
                let got = integrate(&p, &w, |x, y| x.powi(a as i32) * y.powi(b as i32));
                assert!(
                    (got - exact).abs() <= 1e-12 * exact.abs().max(1.0),
                    "moment x^{a} y^{b}: {got} vs {exact}"
                );
            }
        }
    }

    /// Exact monomial moment over a polygon via the divergence theorem:
    /// integral of x^a y^b dA = boundary integral of x^(a+1) y^b / (a+1) dy.
    pub fn polygon_moment(pts: &[[f64; 2]], a: i32, b: i32) -> f64 {
        // 5-point Gauss on [0,1] integrates polynomials of degree <= 9.
        let x: [f64; 5] = [
            0.5 - 0.5 * 0.9061798459386640,
            0.5 - 0.5 * 0.5384693101056831,
            0.5,
            0.5 + 0.5 * 0.5384693101056831,
            0.5 + 0.5 * 0.9061798459386640,
        ];
        let w: [f64; 5] = [
            0.5 * 0.2369268850561891,
            0.5 * 0.4786286704993665,
            0.5 * 0.5688888888888889,
            0.5 * 0.4786286704993665,
            0.5 * 0.2369268850561891,
        ];
        let m = pts.len();
        let mut acc = 0.0;
        for i in 0..m {
            let p = pts[i];
            let q = pts[(i + 1) % m];
            let dy = q[1] - p[1];
            for k in 0..5 {
                let t = x[k];
                let xx = p[0] + t * (q[0] - p[0]);
                let yy = p[1] + t * (q[1] - p[1]);
                acc += w[k] * xx.powi(a + 1) * yy.powi(b) / (a as f64 + 1.0) * dy;
            }
        }
        acc
    }
}
