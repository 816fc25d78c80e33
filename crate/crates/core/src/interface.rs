//! Lagrangian description of the immersed membrane.
//!
//! The membrane is a closed polygon with `m` vertices `X_j` carrying fixed
//! reference coordinates `s_j` in `[0, L]`. The reference parameter is in
//! general not arc length, so the per-segment derivative `dX/ds` encodes
//! stretching and drives the elastic force.

use crate::error::{Error, Result};
use std::f64::consts::PI;
use std::io::{BufRead, Write};

/// Initial curve families used by the experiments.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CurveSpec {
    Ellipse {
        a: f64,
        b: f64,
        center: [f64; 2],
    },
    Circle {
        r: f64,
        center: [f64; 2],
        /// Sample at parameters remapped by the cubic `(16s^3-24s^2+13s)/5`,
        /// which prescribes a nonuniform initial tension on a circle.
        #[serde(default)]
        cubic_reparam: bool,
    },
    /// Sum of two translated cardioids. The printed prefactor 1/20 puts the
    /// curve outside the unit square; the default 1/40 keeps it inside.
    Heart {
        #[serde(default = "default_heart_scale")]
        scale: f64,
    },
    /// Explicit vertex list (counterclockwise), e.g. reloaded from a snapshot.
    Points {
        points: Vec<[f64; 2]>,
        #[serde(default)]
        s: Option<Vec<f64>>,
    },
}

fn default_heart_scale() -> f64 {
    1.0 / 40.0
}

impl CurveSpec {
    /// Evaluate the parametric curve at `s` in `[0, 1]`. Not defined for
    /// `Points`.
    pub fn eval(&self, s: f64) -> Option<[f64; 2]> {
        let w = 2.0 * PI * s;
        match *self {
            CurveSpec::Ellipse { a, b, center } => {
                Some([a * w.cos() + center[0], b * w.sin() + center[1]])
            }
            CurveSpec::Circle { r, center, .. } => {
                Some([r * w.cos() + center[0], r * w.sin() + center[1]])
            }
            CurveSpec::Heart { scale } => {
                let (sn, cs) = w.sin_cos();
                let x = cs * (7.0 * (1.0 - sn) + 3.0 * (1.0 - cs)) + 24.0;
                let y = sn * (3.0 * (1.0 - sn) + 7.0 * (1.0 - cs)) + 24.0;
                Some([scale * x, scale * y])
            }
            CurveSpec::Points { .. } => None,
        }
    }

    fn reparam(&self, s: f64) -> f64 {
        match self {
            CurveSpec::Circle {
                cubic_reparam: true,
                ..
            } => (16.0 * s * s * s - 24.0 * s * s + 13.0 * s) / 5.0,
            _ => s,
        }
    }
}

/// Closed polygonal membrane with reference coordinates.
#[derive(Debug, Clone)]
pub struct InterfacePolygon {
    /// `m` vertices; vertex `m` is identified with vertex 0.
    points: Vec<[f64; 2]>,
    /// `m + 1` strictly increasing reference coordinates, `s[0] = 0`,
    /// `s[m] = L`.
    s: Vec<f64>,
}

impl InterfacePolygon {
    /// Build from vertices and reference coordinates, validating closure
    /// conventions, orientation, and simplicity.
    pub fn new(points: Vec<[f64; 2]>, s: Vec<f64>) -> Result<InterfacePolygon> {
        if points.len() < 3 {
            return Err(Error::Geometry(format!(
                "polygon needs at least 3 vertices, got {}",
                points.len()
            )));
        }
        if s.len() != points.len() + 1 {
            return Err(Error::Geometry(format!(
                "expected {} reference coordinates for {} vertices, got {}",
                points.len() + 1,
                points.len(),
                s.len()
            )));
        }
        if s[0] != 0.0 {
            return Err(Error::Geometry("reference coordinates must start at 0".into()));
        }
        for j in 0..points.len() {
            if s[j + 1] <= s[j] {
                return Err(Error::Geometry(format!(
                    "reference coordinates must be strictly increasing at index {j}"
                )));
            }
        }
        let poly = InterfacePolygon { points, s };
        if poly.signed_area() <= 0.0 {
            return Err(Error::Geometry(
                "polygon must be oriented counterclockwise".into(),
            ));
        }
        if let Some((i, j)) = poly.first_self_intersection() {
            return Err(Error::Geometry(format!(
                "polygon self-intersects (segments {i} and {j})"
            )));
        }
        Ok(poly)
    }

    /// Sample an initial curve at `m` uniformly spaced reference coordinates
    /// in `[0, total_len]`.
    pub fn sample_initial(spec: &CurveSpec, m: usize, total_len: f64) -> Result<InterfacePolygon> {
        if let CurveSpec::Points { points, s } = spec {
            let s = match s {
                Some(s) => s.clone(),
                None => (0..=points.len())
                    .map(|j| total_len * j as f64 / points.len() as f64)
                    .collect(),
            };
            return InterfacePolygon::new(points.clone(), s);
        }
        if m < 8 {
            return Err(Error::Config(format!(
                "interface needs at least 8 segments, got {m}"
            )));
        }
        let mut points = Vec::with_capacity(m);
        for j in 0..m {
            let s = j as f64 / m as f64;
            let st = spec.reparam(s);
            points.push(spec.eval(st).expect("parametric curve"));
        }
        let s = (0..=m)
            .map(|j| total_len * j as f64 / m as f64)
            .collect();
        InterfacePolygon::new(points, s)
    }

    pub fn m(&self) -> usize {
        self.points.len()
    }

    pub fn total_len(&self) -> f64 {
        *self.s.last().unwrap()
    }

    /// Vertex `j`, indices taken modulo `m`.
    pub fn point(&self, j: usize) -> [f64; 2] {
        self.points[j % self.points.len()]
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn ref_coord(&self, j: usize) -> f64 {
        self.s[j]
    }

    /// Reference length `s_{j+1} - s_j` of segment `j`.
    pub fn ref_len(&self, j: usize) -> f64 {
        self.s[j + 1] - self.s[j]
    }

    /// Segment derivative `dX_j/ds = (X_{j+1} - X_j) / (s_{j+1} - s_j)`.
    pub fn tangent(&self, j: usize) -> [f64; 2] {
        let a = self.point(j);
        let b = self.point(j + 1);
        let ds = self.ref_len(j);
        [(b[0] - a[0]) / ds, (b[1] - a[1]) / ds]
    }

    pub fn tangents(&self) -> Vec<[f64; 2]> {
        (0..self.m()).map(|j| self.tangent(j)).collect()
    }

    /// Unit normal of segment `j`, the left-hand rotation of the unit
    /// tangent. For counterclockwise polygons it points into the enclosed
    /// region (from the exterior side to the interior side).
    pub fn segment_normal(&self, j: usize) -> [f64; 2] {
        let t = self.tangent(j);
        let len = (t[0] * t[0] + t[1] * t[1]).sqrt();
        [-t[1] / len, t[0] / len]
    }

    /// Elastic vertex forces `G_j = kappa (dX_j/ds - dX_{j-1}/ds)`.
    /// The discrete force functional is `<F, v> = sum_j G_j . {v(X_j)}`,
    /// and the sum of all `G_j` telescopes to zero.
    pub fn force_coefficients(&self, kappa: f64) -> Vec<[f64; 2]> {
        let m = self.m();
        (0..m)
            .map(|j| {
                let t_out = self.tangent(j);
                let t_in = self.tangent((j + m - 1) % m);
                [kappa * (t_out[0] - t_in[0]), kappa * (t_out[1] - t_in[1])]
            })
            .collect()
    }

    /// Move every vertex by `dt * velocity[j]`, keeping reference
    /// coordinates. Rejects vertices that leave the one-element safety
    /// margin at the boundary of the unit square or move farther than `h/2`,
    /// and checks the moved polygon for self-intersection.
    pub fn advect(&self, velocity: &[[f64; 2]], dt: f64, h: f64) -> Result<InterfacePolygon> {
        if velocity.len() != self.m() {
            return Err(Error::Dimension(format!(
                "expected {} vertex velocities, got {}",
                self.m(),
                velocity.len()
            )));
        }
        let margin = h;
        let max_move = 0.5 * h;
        let mut points = Vec::with_capacity(self.m());
        for (j, (&p, &v)) in self.points.iter().zip(velocity.iter()).enumerate() {
            let d = [dt * v[0], dt * v[1]];
            let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
            if len > max_move {
                return Err(Error::StepFailure {
                    step: 0,
                    reason: format!(
                        "vertex {j} moved {len:.3e}, more than h/2 = {max_move:.3e}"
                    ),
                });
            }
            let q = [p[0] + d[0], p[1] + d[1]];
            let dist = q[0].min(q[1]).min(1.0 - q[0]).min(1.0 - q[1]);
            if dist <= margin {
                return Err(Error::StepFailure {
                    step: 0,
                    reason: format!(
                        "vertex {j} at ({:.4}, {:.4}) inside the boundary margin",
                        q[0], q[1]
                    ),
                });
            }
            points.push(q);
        }
        let poly = InterfacePolygon {
            points,
            s: self.s.clone(),
        };
        if let Some((i, j)) = poly.first_self_intersection() {
            return Err(Error::Geometry(format!(
                "advected polygon self-intersects (segments {i} and {j})"
            )));
        }
        Ok(poly)
    }

    fn signed_area(&self) -> f64 {
        let m = self.m();
        let mut acc = 0.0;
        for j in 0..m {
            let a = self.points[j];
            let b = self.points[(j + 1) % m];
            acc += a[0] * b[1] - b[0] * a[1];
        }
        0.5 * acc
    }

    /// Shoelace area, positive for the counterclockwise orientation.
    pub fn enclosed_area(&self) -> f64 {
        self.signed_area()
    }

    /// Elastic energy `kappa/2 sum_j |dX_j/ds|^2 (s_{j+1} - s_j)`.
    pub fn membrane_energy(&self, kappa: f64) -> f64 {
        let mut acc = 0.0;
        for j in 0..self.m() {
            let t = self.tangent(j);
            acc += (t[0] * t[0] + t[1] * t[1]) * self.ref_len(j);
        }
        0.5 * kappa * acc
    }

    pub fn perimeter(&self) -> f64 {
        (0..self.m()).map(|j| self.chord_len(j)).sum()
    }

    pub fn chord_len(&self, j: usize) -> f64 {
        let a = self.point(j);
        let b = self.point(j + 1);
        ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
    }

    pub fn max_chord_len(&self) -> f64 {
        (0..self.m()).map(|j| self.chord_len(j)).fold(0.0, f64::max)
    }

    /// Area centroid of the enclosed region.
    pub fn centroid(&self) -> [f64; 2] {
        let m = self.m();
        let mut cx = 0.0;
        let mut cy = 0.0;
        for j in 0..m {
            let a = self.points[j];
            let b = self.points[(j + 1) % m];
            let cross = a[0] * b[1] - b[0] * a[1];
            cx += (a[0] + b[0]) * cross;
            cy += (a[1] + b[1]) * cross;
        }
        let area = self.signed_area();
        [cx / (6.0 * area), cy / (6.0 * area)]
    }

    /// Minimum distance from any vertex to the boundary of the unit square.
    /// The distance along a straight segment is concave, so the vertex
    /// minimum is the segment minimum as well.
    pub fn boundary_distance(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p[0].min(p[1]).min(1.0 - p[0]).min(1.0 - p[1]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Even-odd membership test of a point against the polygon.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let m = self.m();
        let mut inside = false;
        let mut a = self.points[m - 1];
        for &b in &self.points {
            if (a[1] > p[1]) != (b[1] > p[1])
                && p[0] < (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0]
            {
                inside = !inside;
            }
            a = b;
        }
        inside
    }

    /// First pair of non-adjacent segments that intersect, if any.
    fn first_self_intersection(&self) -> Option<(usize, usize)> {
        let m = self.m();
        for i in 0..m {
            let (a, b) = (self.point(i), self.point(i + 1));
            let (lo_x, hi_x) = (a[0].min(b[0]), a[0].max(b[0]));
            let (lo_y, hi_y) = (a[1].min(b[1]), a[1].max(b[1]));
            for j in i + 2..m {
                if i == 0 && j == m - 1 {
                    continue; // adjacent through the wrap-around
                }
                let (c, d) = (self.point(j), self.point(j + 1));
                if c[0].max(d[0]) < lo_x
                    || c[0].min(d[0]) > hi_x
                    || c[1].max(d[1]) < lo_y
                    || c[1].min(d[1]) > hi_y
                {
                    continue;
                }
                if segments_intersect(a, b, c, d) {
                    return Some((i, j));
                }
            }
        }
        None
    }

    /// Write one row per vertex as `j,s,x,y`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "j,s,x,y")?;
        for j in 0..self.m() {
            let p = self.points[j];
            writeln!(w, "{},{:.17e},{:.17e},{:.17e}", j, self.s[j], p[0], p[1])?;
        }
        Ok(())
    }

    /// Read back a polygon written by [`write_csv`](Self::write_csv).
    pub fn read_csv<R: BufRead>(r: R) -> Result<InterfacePolygon> {
        let mut points = Vec::new();
        let mut s = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if lineno == 0 || line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::Config(format!(
                    "interface csv line {} has {} fields, expected 4",
                    lineno + 1,
                    fields.len()
                )));
            }
            let parse = |f: &str, name: &str| {
                f.parse::<f64>().map_err(|_| {
                    Error::Config(format!(
                        "interface csv line {}: bad {name} value {f:?}",
                        lineno + 1
                    ))
                })
            };
            s.push(parse(fields[1], "s")?);
            points.push([parse(fields[2], "x")?, parse(fields[3], "y")?]);
        }
        if points.len() < 3 {
            return Err(Error::Config("interface csv has fewer than 3 points".into()));
        }
        // The closing coordinate s_m is not stored; reconstruct it from the
        // uniform tail spacing.
        let m = points.len();
        let last = s[m - 1] + (s[m - 1] - s[m - 2]);
        s.push(last);
        InterfacePolygon::new(points, s)
    }
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Proper or improper intersection of closed segments `ab` and `cd`.
fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| {
        orient(p, q, r) == 0.0
            && r[0] >= p[0].min(q[0])
            && r[0] <= p[0].max(q[0])
            && r[1] >= p[1].min(q[1])
            && r[1] <= p[1].max(q[1])
    };
    on(a, b, c) || on(a, b, d) || on(c, d, a) || on(c, d, b)
}
