//! Structured background grid on the unit square.
//!
//! The mesh is a uniform partition of (0,1)^2 into `n x n` squares of side
//! `h = 1/n`. It never changes during a simulation; the moving interface only
//! reclassifies elements and faces.

use crate::error::{Error, Result};

/// Absolute tolerance for point classification against grid lines and
/// intersection parameter snapping.
pub const EPS_GEO: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct Element {
    pub ix: usize,
    pub iy: usize,
    /// Lower-left corner.
    pub x0: f64,
    pub y0: f64,
}

impl Element {
    pub fn corners(&self, h: f64) -> [[f64; 2]; 4] {
        [
            [self.x0, self.y0],
            [self.x0 + h, self.y0],
            [self.x0 + h, self.y0 + h],
            [self.x0, self.y0 + h],
        ]
    }

    pub fn center(&self, h: f64) -> [f64; 2] {
        [self.x0 + 0.5 * h, self.y0 + 0.5 * h]
    }

    /// True if the point lies in the closed square (within `EPS_GEO`).
    pub fn contains(&self, p: [f64; 2], h: f64) -> bool {
        p[0] >= self.x0 - EPS_GEO
            && p[0] <= self.x0 + h + EPS_GEO
            && p[1] >= self.y0 - EPS_GEO
            && p[1] <= self.y0 + h + EPS_GEO
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Face {
    /// Endpoints of the face segment.
    pub a: [f64; 2],
    pub b: [f64; 2],
    /// Unit normal; for interior faces it points from `left` to `right`,
    /// for boundary faces outward from the domain.
    pub normal: [f64; 2],
    pub left: usize,
    /// `None` for boundary faces.
    pub right: Option<usize>,
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.right.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub n: usize,
    pub h: f64,
    pub elements: Vec<Element>,
    pub faces: Vec<Face>,
    /// Lattice of biquadratic node coordinates, `(2n+1)^2` points in row-major
    /// order with spacing `h/2`.
    pub q2_nodes: Vec<[f64; 2]>,
}

impl Mesh {
    pub fn build(n: usize) -> Result<Mesh> {
        if n < 2 {
            return Err(Error::Config(format!(
                "mesh requires at least 2 cells per side, got {n}"
            )));
        }
        let h = 1.0 / n as f64;
        let mut elements = Vec::with_capacity(n * n);
        for iy in 0..n {
            for ix in 0..n {
                elements.push(Element {
                    ix,
                    iy,
                    x0: ix as f64 * h,
                    y0: iy as f64 * h,
                });
            }
        }

        let mut faces = Vec::new();
        // Interior vertical faces between (ix,iy) and (ix+1,iy).
        for iy in 0..n {
            for ix in 0..n - 1 {
                let x = (ix + 1) as f64 * h;
                let y0 = iy as f64 * h;
                faces.push(Face {
                    a: [x, y0],
                    b: [x, y0 + h],
                    normal: [1.0, 0.0],
                    left: iy * n + ix,
                    right: Some(iy * n + ix + 1),
                });
            }
        }
        // Interior horizontal faces between (ix,iy) and (ix,iy+1).
        for iy in 0..n - 1 {
            for ix in 0..n {
                let y = (iy + 1) as f64 * h;
                let x0 = ix as f64 * h;
                faces.push(Face {
                    a: [x0, y],
                    b: [x0 + h, y],
                    normal: [0.0, 1.0],
                    left: iy * n + ix,
                    right: Some((iy + 1) * n + ix),
                });
            }
        }
        // Boundary faces with outward normals.
        for ix in 0..n {
            let x0 = ix as f64 * h;
            faces.push(Face {
                a: [x0, 0.0],
                b: [x0 + h, 0.0],
                normal: [0.0, -1.0],
                left: ix,
                right: None,
            });
            faces.push(Face {
                a: [x0, 1.0],
                b: [x0 + h, 1.0],
                normal: [0.0, 1.0],
                left: (n - 1) * n + ix,
                right: None,
            });
        }
        for iy in 0..n {
            let y0 = iy as f64 * h;
            faces.push(Face {
                a: [0.0, y0],
                b: [0.0, y0 + h],
                normal: [-1.0, 0.0],
                left: iy * n,
                right: None,
            });
            faces.push(Face {
                a: [1.0, y0],
                b: [1.0, y0 + h],
                normal: [1.0, 0.0],
                left: iy * n + n - 1,
                right: None,
            });
        }

        let side = 2 * n + 1;
        let mut q2_nodes = Vec::with_capacity(side * side);
        for j in 0..side {
            for i in 0..side {
                q2_nodes.push([i as f64 * h / 2.0, j as f64 * h / 2.0]);
            }
        }

        Ok(Mesh {
            n,
            h,
            elements,
            faces,
            q2_nodes,
        })
    }

    pub fn elem_id(&self, ix: usize, iy: usize) -> usize {
        iy * self.n + ix
    }

    pub fn n_elements(&self) -> usize {
        self.n * self.n
    }

    pub fn interior_face_count(&self) -> usize {
        self.faces.iter().filter(|f| !f.is_boundary()).count()
    }

    pub fn boundary_face_count(&self) -> usize {
        self.faces.iter().filter(|f| f.is_boundary()).count()
    }

    /// Indices along one axis of elements whose closed extent contains `x`.
    /// Away from grid lines this is a single index; on a grid line both
    /// neighbors are returned (lower first).
    fn axis_candidates(&self, x: f64) -> Vec<usize> {
        let n = self.n;
        let t = x / self.h;
        let k = t.round();
        if (x - k * self.h).abs() <= EPS_GEO {
            // On the grid line x = k*h.
            let k = k as i64;
            let mut out = Vec::new();
            if k >= 1 && (k - 1) < n as i64 {
                out.push((k - 1) as usize);
            }
            if k >= 0 && k < n as i64 {
                out.push(k as usize);
            }
            out
        } else {
            let k = t.floor() as i64;
            if k < 0 || k >= n as i64 {
                Vec::new()
            } else {
                vec![k as usize]
            }
        }
    }

    /// All elements whose closed square contains `p`, sorted by element id.
    /// Generic points yield one element; points on grid lines or lattice
    /// points yield two or four.
    pub fn elements_containing(&self, p: [f64; 2]) -> Vec<usize> {
        let xs = self.axis_candidates(p[0]);
        let ys = self.axis_candidates(p[1]);
        let mut out = Vec::with_capacity(xs.len() * ys.len());
        for &iy in &ys {
            for &ix in &xs {
                out.push(self.elem_id(ix, iy));
            }
        }
        out.sort_unstable();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_n4() {
        let mesh = Mesh::build(4).unwrap();
        assert_eq!(mesh.n_elements(), 16);
        assert_eq!(mesh.q2_nodes.len(), 81);
    }

    #[test]
    fn face_counts_n2() {
        let mesh = Mesh::build(2).unwrap();
        assert_eq!(mesh.interior_face_count(), 4);
        assert_eq!(mesh.boundary_face_count(), 8);
    }

    #[test]
    fn stores_side_length() {
        let mesh = Mesh::build(32).unwrap();
        assert_eq!(mesh.h, 0.03125);
    }

    #[test]
    fn rejects_tiny_mesh() {
        assert!(Mesh::build(1).is_err());
    }

    #[test]
    fn corners_on_lattice() {
        let mesh = Mesh::build(5).unwrap();
        for e in &mesh.elements {
            let sx = e.x0 * mesh.n as f64;
            let sy = e.y0 * mesh.n as f64;
            assert!((sx - sx.round()).abs() < 1e-14);
            assert!((sy - sy.round()).abs() < 1e-14);
        }
        assert_eq!(mesh.interior_face_count(), 2 * 5 * 4);
        for f in &mesh.faces {
            let len = (f.normal[0] * f.normal[0] + f.normal[1] * f.normal[1]).sqrt();
            assert!((len - 1.0).abs() < 1e-15);
            assert!(f.normal[0] == 0.0 || f.normal[1] == 0.0);
        }
    }

    #[test]
    fn locate_candidates() {
        let mesh = Mesh::build(4).unwrap();
        assert_eq!(mesh.elements_containing([0.1, 0.1]), vec![0]);
        // On a vertical grid line: two neighbors.
        assert_eq!(mesh.elements_containing([0.25, 0.1]), vec![0, 1]);
        // On a lattice corner: four neighbors.
        assert_eq!(mesh.elements_containing([0.25, 0.25]), vec![0, 1, 4, 5]);
        // Domain corner point belongs to one element.
        assert_eq!(mesh.elements_containing([0.0, 0.0]), vec![0]);
    }
}
