//! Velocity and pressure spaces on the two overlapping subdomains.
//!
//! Velocity: continuous vector biquadratics on the active elements of each
//! side; pressure: discontinuous linears (three modes per element). Cut
//! elements carry degrees of freedom for both sides. One extra scalar
//! unknown enforces the global zero-mean pressure condition.

use crate::classify::Classification;
use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// 1D quadratic Lagrange basis on {0, 1/2, 1}: values and first/second
/// derivatives at `x`.
fn lagrange3(x: f64) -> ([f64; 3], [f64; 3], [f64; 3]) {
    let v = [
        2.0 * x * x - 3.0 * x + 1.0,
        4.0 * x - 4.0 * x * x,
        2.0 * x * x - x,
    ];
    let d = [4.0 * x - 3.0, 4.0 - 8.0 * x, 4.0 * x - 1.0];
    let dd = [4.0, -8.0, 4.0];
    (v, d, dd)
}

/// Biquadratic basis on the reference square `[0,1]^2`. Local node `k`
/// corresponds to `(ix, iy) = (k % 3, k / 3)` on the `{0, 1/2, 1}^2` lattice.
/// Returns values and reference-coordinate gradients.
pub fn q2_shape(xi: f64, eta: f64) -> ([f64; 9], [[f64; 2]; 9]) {
    let (lx, dx, _) = lagrange3(xi);
    let (ly, dy, _) = lagrange3(eta);
    let mut vals = [0.0; 9];
    let mut grads = [[0.0; 2]; 9];
    for iy in 0..3 {
        for ix in 0..3 {
            let k = iy * 3 + ix;
            vals[k] = lx[ix] * ly[iy];
            grads[k] = [dx[ix] * ly[iy], lx[ix] * dy[iy]];
        }
    }
    (vals, grads)
}

/// Reference second derivatives `(d_xixi, d_xieta, d_etaeta)` of the
/// biquadratic basis.
pub fn q2_shape_hessian(xi: f64, eta: f64) -> [[f64; 3]; 9] {
    let (lx, dx, ddx) = lagrange3(xi);
    let (ly, dy, ddy) = lagrange3(eta);
    let mut out = [[0.0; 3]; 9];
    for iy in 0..3 {
        for ix in 0..3 {
            let k = iy * 3 + ix;
            out[k] = [ddx[ix] * ly[iy], dx[ix] * dy[iy], lx[ix] * ddy[iy]];
        }
    }
    out
}

/// Pressure basis on an element: `{1, (x - cx)/h, (y - cy)/h}` with `c` the
/// element center. The scaled-monomial form keeps coefficients O(1).
pub fn p1_shape(center: [f64; 2], h: f64, p: [f64; 2]) -> [f64; 3] {
    [1.0, (p[0] - center[0]) / h, (p[1] - center[1]) / h]
}

/// Constant gradients of the pressure basis.
pub fn p1_gradients(h: f64) -> [[f64; 2]; 3] {
    [[0.0, 0.0], [1.0 / h, 0.0], [0.0, 1.0 / h]]
}

const ABSENT: usize = usize::MAX;

/// Global unknown numbering over both subdomain spaces.
#[derive(Debug, Clone)]
pub struct DofMap {
    side_nodes: usize,
    /// Lattice node -> compact velocity node per side.
    vel_node: [Vec<usize>; 2],
    pub n_vel_nodes: [usize; 2],
    /// Element -> pressure block per side.
    pres_elem: [Vec<usize>; 2],
    pub n_pres_elems: [usize; 2],
    offsets: [usize; 5],
    total: usize,
}

impl DofMap {
    pub fn build(mesh: &Mesh, class: &Classification) -> DofMap {
        let side_nodes = 2 * mesh.n + 1;
        let mut vel_node = [
            vec![ABSENT; side_nodes * side_nodes],
            vec![ABSENT; side_nodes * side_nodes],
        ];
        let mut pres_elem = [
            vec![ABSENT; mesh.n_elements()],
            vec![ABSENT; mesh.n_elements()],
        ];
        let mut n_vel_nodes = [0usize; 2];
        let mut n_pres_elems = [0usize; 2];
        for side in 0..2 {
            for &k in &class.active_elems[side] {
                let e = mesh.elements[k];
                for iy in 0..3 {
                    for ix in 0..3 {
                        let node = (2 * e.iy + iy) * side_nodes + 2 * e.ix + ix;
                        if vel_node[side][node] == ABSENT {
                            vel_node[side][node] = n_vel_nodes[side];
                            n_vel_nodes[side] += 1;
                        }
                    }
                }
                pres_elem[side][k] = n_pres_elems[side];
                n_pres_elems[side] += 1;
            }
        }
        let u1 = 0;
        let u2 = u1 + 2 * n_vel_nodes[0];
        let p1 = u2 + 2 * n_vel_nodes[1];
        let p2 = p1 + 3 * n_pres_elems[0];
        let lambda = p2 + 3 * n_pres_elems[1];
        DofMap {
            side_nodes,
            vel_node,
            n_vel_nodes,
            pres_elem,
            n_pres_elems,
            offsets: [u1, u2, p1, p2, lambda],
            total: lambda + 1,
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn mean_constraint_dof(&self) -> usize {
        self.offsets[4]
    }

    pub fn block_of(&self, index: usize) -> &'static str {
        let o = self.offsets;
        if index < o[1] {
            "u1"
        } else if index < o[2] {
            "u2"
        } else if index < o[3] {
            "p1"
        } else if index < o[4] {
            "p2"
        } else {
            "mean"
        }
    }

    fn lattice_node(&self, mesh: &Mesh, elem: usize, ix: usize, iy: usize) -> usize {
        let e = mesh.elements[elem];
        (2 * e.iy + iy) * self.side_nodes + 2 * e.ix + ix
    }

    /// Velocity unknown for component `comp` at a lattice node of one side.
    pub fn vel_dof_at_node(&self, side: usize, node: usize, comp: usize) -> Option<usize> {
        let c = self.vel_node[side - 1][node];
        if c == ABSENT {
            None
        } else {
            Some(self.offsets[side - 1] + 2 * c + comp)
        }
    }

    /// The 18 velocity unknowns of an element (node-major, components
    /// interleaved). The element must be active on this side.
    pub fn elem_vel_dofs(&self, mesh: &Mesh, side: usize, elem: usize) -> [usize; 18] {
        let mut out = [0usize; 18];
        for iy in 0..3 {
            for ix in 0..3 {
                let k = iy * 3 + ix;
                let node = self.lattice_node(mesh, elem, ix, iy);
                let c = self.vel_node[side - 1][node];
                debug_assert!(c != ABSENT, "element {elem} inactive on side {side}");
                out[2 * k] = self.offsets[side - 1] + 2 * c;
                out[2 * k + 1] = out[2 * k] + 1;
            }
        }
        out
    }

    /// The 3 pressure unknowns of an element.
    pub fn elem_pres_dofs(&self, side: usize, elem: usize) -> [usize; 3] {
        let b = self.pres_elem[side - 1][elem];
        debug_assert!(b != ABSENT, "element {elem} inactive on side {side}");
        let base = self.offsets[side + 1] + 3 * b;
        [base, base + 1, base + 2]
    }

    /// Lattice nodes carrying velocity unknowns of one side.
    pub fn velocity_nodes(&self, side: usize) -> impl Iterator<Item = usize> + '_ {
        self.vel_node[side - 1]
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != ABSENT)
            .map(|(node, _)| node)
    }
}

/// Read-only evaluation of discrete fields on the two subdomain spaces.
pub struct FeEval<'a> {
    pub mesh: &'a Mesh,
    pub class: &'a Classification,
    pub dofs: &'a DofMap,
}

impl<'a> FeEval<'a> {
    pub fn new(mesh: &'a Mesh, class: &'a Classification, dofs: &'a DofMap) -> Self {
        FeEval { mesh, class, dofs }
    }

    /// Lowest-index active element of `side` whose closed square contains
    /// `p`. Points on shared edges resolve to the lower element id.
    pub fn locate(&self, side: usize, p: [f64; 2]) -> Result<usize> {
        self.mesh
            .elements_containing(p)
            .into_iter()
            .find(|&k| self.class.is_active(side, k))
            .ok_or_else(|| {
                Error::Evaluation(format!(
                    "point ({:.6}, {:.6}) is outside the side-{side} extended subdomain",
                    p[0], p[1]
                ))
            })
    }

    fn ref_coords(&self, elem: usize, p: [f64; 2]) -> (f64, f64) {
        let e = self.mesh.elements[elem];
        let h = self.mesh.h;
        ((p[0] - e.x0) / h, (p[1] - e.y0) / h)
    }

    pub fn vel_value(&self, side: usize, elem: usize, p: [f64; 2], sol: &[f64]) -> [f64; 2] {
        let (xi, eta) = self.ref_coords(elem, p);
        let (vals, _) = q2_shape(xi, eta);
        let dofs = self.dofs.elem_vel_dofs(self.mesh, side, elem);
        let mut out = [0.0; 2];
        for k in 0..9 {
            out[0] += vals[k] * sol[dofs[2 * k]];
            out[1] += vals[k] * sol[dofs[2 * k + 1]];
        }
        out
    }

    /// Velocity gradient; `grad[i][j] = d u_i / d x_j`.
    pub fn vel_grad(&self, side: usize, elem: usize, p: [f64; 2], sol: &[f64]) -> [[f64; 2]; 2] {
        let (xi, eta) = self.ref_coords(elem, p);
        let (_, grads) = q2_shape(xi, eta);
        let h = self.mesh.h;
        let dofs = self.dofs.elem_vel_dofs(self.mesh, side, elem);
        let mut out = [[0.0; 2]; 2];
        for k in 0..9 {
            let g = [grads[k][0] / h, grads[k][1] / h];
            for comp in 0..2 {
                let c = sol[dofs[2 * k + comp]];
                out[comp][0] += c * g[0];
                out[comp][1] += c * g[1];
            }
        }
        out
    }

    pub fn pres_value(&self, side: usize, elem: usize, p: [f64; 2], sol: &[f64]) -> f64 {
        let e = self.mesh.elements[elem];
        let h = self.mesh.h;
        let vals = p1_shape(e.center(h), h, p);
        let dofs = self.dofs.elem_pres_dofs(side, elem);
        vals[0] * sol[dofs[0]] + vals[1] * sol[dofs[1]] + vals[2] * sol[dofs[2]]
    }

    pub fn pres_grad(&self, side: usize, elem: usize, sol: &[f64]) -> [f64; 2] {
        let h = self.mesh.h;
        let dofs = self.dofs.elem_pres_dofs(side, elem);
        [sol[dofs[1]] / h, sol[dofs[2]] / h]
    }

    /// Locate-and-evaluate convenience for velocity.
    pub fn vel_at(&self, side: usize, p: [f64; 2], sol: &[f64]) -> Result<[f64; 2]> {
        let elem = self.locate(side, p)?;
        Ok(self.vel_value(side, elem, p, sol))
    }

    /// Average of the two side velocities at an interface point.
    pub fn vel_avg_at(&self, p: [f64; 2], sol: &[f64]) -> Result<[f64; 2]> {
        let v1 = self.vel_at(1, p, sol)?;
        let v2 = self.vel_at(2, p, sol)?;
        Ok([0.5 * (v1[0] + v2[0]), 0.5 * (v1[1] + v2[1])])
    }

    /// Jump (side 1 minus side 2) and average of the velocity at an
    /// interface point inside a cut element.
    pub fn vel_jump_avg(&self, p: [f64; 2], sol: &[f64]) -> Result<([f64; 2], [f64; 2])> {
        let v1 = self.vel_at(1, p, sol)?;
        let v2 = self.vel_at(2, p, sol)?;
        Ok((
            [v1[0] - v2[0], v1[1] - v2[1]],
            [0.5 * (v1[0] + v2[0]), 0.5 * (v1[1] + v2[1])],
        ))
    }

    /// Traction `(mu eps(u) - p I) n` of one side at a point.
    pub fn stress_vector(
        &self,
        side: usize,
        elem: usize,
        p: [f64; 2],
        normal: [f64; 2],
        mu: f64,
        sol: &[f64],
    ) -> [f64; 2] {
        let g = self.vel_grad(side, elem, p, sol);
        let pr = self.pres_value(side, elem, p, sol);
        let eps = [
            [g[0][0], 0.5 * (g[0][1] + g[1][0])],
            [0.5 * (g[0][1] + g[1][0]), g[1][1]],
        ];
        [
            mu * (eps[0][0] * normal[0] + eps[0][1] * normal[1]) - pr * normal[0],
            mu * (eps[1][0] * normal[0] + eps[1][1] * normal[1]) - pr * normal[1],
        ]
    }

    /// Jump and average of the traction across the interface.
    pub fn stress_jump_avg(
        &self,
        p: [f64; 2],
        normal: [f64; 2],
        mu: f64,
        sol: &[f64],
    ) -> Result<([f64; 2], [f64; 2])> {
        let e1 = self.locate(1, p)?;
        let e2 = self.locate(2, p)?;
        let t1 = self.stress_vector(1, e1, p, normal, mu, sol);
        let t2 = self.stress_vector(2, e2, p, normal, mu, sol);
        Ok((
            [t1[0] - t2[0], t1[1] - t2[1]],
            [0.5 * (t1[0] + t2[0]), 0.5 * (t1[1] + t2[1])],
        ))
    }
}

/// Interpolate closed-form fields into a full coefficient vector. Velocity
/// nodes take point values; pressure takes value and scaled gradient at the
/// element center (exact for linear pressures).
pub fn interpolate(
    mesh: &Mesh,
    class: &Classification,
    dofs: &DofMap,
    vel: impl Fn(usize, [f64; 2]) -> [f64; 2],
    pres: impl Fn(usize, [f64; 2]) -> (f64, [f64; 2]),
) -> Vec<f64> {
    let mut sol = vec![0.0; dofs.total()];
    for side in 1..=2 {
        for node in dofs.velocity_nodes(side) {
            let p = mesh.q2_nodes[node];
            let v = vel(side, p);
            sol[dofs.vel_dof_at_node(side, node, 0).unwrap()] = v[0];
            sol[dofs.vel_dof_at_node(side, node, 1).unwrap()] = v[1];
        }
        for &k in &class.active_elems[side - 1] {
            let c = mesh.elements[k].center(mesh.h);
            let (v, g) = pres(side, c);
            let pd = dofs.elem_pres_dofs(side, k);
            sol[pd[0]] = v;
            sol[pd[1]] = g[0] * mesh.h;
            sol[pd[2]] = g[1] * mesh.h;
        }
    }
    sol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::classify_elements;
    use crate::interface::{CurveSpec, InterfacePolygon};
    use approx::assert_relative_eq;

    fn setup(n: usize) -> (Mesh, Classification) {
        let mesh = Mesh::build(n).unwrap();
        let poly = InterfacePolygon::sample_initial(
            &CurveSpec::Circle {
                r: 0.3,
                center: [0.5, 0.5],
                cubic_reparam: false,
            },
            128,
            1.0,
        )
        .unwrap();
        let class = classify_elements(&mesh, &poly).unwrap();
        (mesh, class)
    }

    #[test]
    fn q2_lagrange_property() {
        let nodes = [0.0, 0.5, 1.0];
        for (k, (&ny, &nx)) in nodes
            .iter()
            .flat_map(|y| nodes.iter().map(move |x| (y, x)))
            .enumerate()
        {
            let (vals, _) = q2_shape(nx, ny);
            for j in 0..9 {
                let expect = if j == k { 1.0 } else { 0.0 };
                assert_relative_eq!(vals[j], expect, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn q2_partition_of_unity() {
        for &(xi, eta) in &[(0.3, 0.7), (0.11, 0.93), (0.5, 0.25)] {
            let (vals, grads) = q2_shape(xi, eta);
            assert_relative_eq!(vals.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
            let gx: f64 = grads.iter().map(|g| g[0]).sum();
            let gy: f64 = grads.iter().map(|g| g[1]).sum();
            assert!(gx.abs() < 1e-13 && gy.abs() < 1e-13);
        }
    }

    #[test]
    fn p1_centering() {
        let vals = p1_shape([0.5, 0.5], 0.25, [0.5, 0.5]);
        assert_eq!(vals, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn p1_linear_field_coefficients() {
        let (mesh, class) = setup(4);
        let dofs = DofMap::build(&mesh, &class);
        // p = x in the scaled basis: coefficients (cx, h, 0) with cx the
        // element center; on a mesh with h = 1/4 the slope coefficient is
        // h * dp/dx = 0.25.
        let sol = interpolate(
            &mesh,
            &class,
            &dofs,
            |_, _| [0.0, 0.0],
            |_, p| (p[0], [1.0, 0.0]),
        );
        let eval = FeEval::new(&mesh, &class, &dofs);
        let k = eval.locate(1, [0.1, 0.1]).unwrap();
        let pd = dofs.elem_pres_dofs(1, k);
        let c = mesh.elements[k].center(mesh.h);
        assert_relative_eq!(sol[pd[0]], c[0], epsilon = 1e-15);
        assert_relative_eq!(sol[pd[1]], 0.25, epsilon = 1e-15);
        assert_relative_eq!(sol[pd[2]], 0.0, epsilon = 1e-15);
        assert_relative_eq!(
            eval.pres_value(1, k, [0.11, 0.07], &sol),
            0.11,
            epsilon = 1e-14
        );

        // A constant field is (c, 0, 0) on every element.
        let sol = interpolate(
            &mesh,
            &class,
            &dofs,
            |_, _| [0.0, 0.0],
            |_, _| (3.25, [0.0, 0.0]),
        );
        for &k in &class.active_elems[0] {
            let pd = dofs.elem_pres_dofs(1, k);
            assert_eq!(sol[pd[0]], 3.25);
            assert_eq!(sol[pd[1]], 0.0);
            assert_eq!(sol[pd[2]], 0.0);
        }
    }

    #[test]
    fn p1_cannot_represent_quadratics() {
        let (mesh, class) = setup(8);
        let dofs = DofMap::build(&mesh, &class);
        let sol = interpolate(
            &mesh,
            &class,
            &dofs,
            |_, _| [0.0, 0.0],
            |_, p| (p[0] * p[0], [2.0 * p[0], 0.0]),
        );
        let eval = FeEval::new(&mesh, &class, &dofs);
        let k = eval.locate(1, [0.1, 0.1]).unwrap();
        // Away from the center the linear interpolant misses x^2.
        let p = [mesh.elements[k].x0 + 0.01, mesh.elements[k].y0 + 0.01];
        let err = (eval.pres_value(1, k, p, &sol) - p[0] * p[0]).abs();
        assert!(err > 1e-8);
    }

    #[test]
    fn dof_counts_partition() {
        let (mesh, class) = setup(8);
        let dofs = DofMap::build(&mesh, &class);
        // Side 1 touches the whole boundary ring; side 2 only the disk.
        assert!(dofs.n_vel_nodes[0] > dofs.n_vel_nodes[1]);
        let total = 2 * (dofs.n_vel_nodes[0] + dofs.n_vel_nodes[1])
            + 3 * (dofs.n_pres_elems[0] + dofs.n_pres_elems[1])
            + 1;
        assert_eq!(dofs.total(), total);
        assert_eq!(dofs.n_pres_elems[0], class.active_elems[0].len());
        assert_eq!(dofs.n_pres_elems[1], class.active_elems[1].len());
    }

    #[test]
    fn q2_reproduces_biquadratics() {
        let (mesh, class) = setup(8);
        let dofs = DofMap::build(&mesh, &class);
        let f = |p: [f64; 2]| [p[0] * p[0], p[0] * p[1]];
        let sol = interpolate(&mesh, &class, &dofs, |_, p| f(p), |_, _| (0.0, [0.0, 0.0]));
        let eval = FeEval::new(&mesh, &class, &dofs);
        for &p in &[[0.3, 0.7], [0.301, 0.699], [0.111, 0.232], [0.5, 0.5]] {
            for side in 1..=2 {
                if let Ok(elem) = eval.locate(side, p) {
                    let v = eval.vel_value(side, elem, p, &sol);
                    let expect = f(p);
                    assert_relative_eq!(v[0], expect[0], epsilon = 1e-13);
                    assert_relative_eq!(v[1], expect[1], epsilon = 1e-13);
                    let g = eval.vel_grad(side, elem, p, &sol);
                    assert_relative_eq!(g[0][0], 2.0 * p[0], epsilon = 1e-12);
                    assert_relative_eq!(g[0][1], 0.0, epsilon = 1e-12);
                    assert_relative_eq!(g[1][0], p[1], epsilon = 1e-12);
                    assert_relative_eq!(g[1][1], p[0], epsilon = 1e-12);
                }
            }
        }
        // Linear fields evaluate exactly anywhere, including points seen
        // through the extension of a cut element.
        let lin = interpolate(
            &mesh,
            &class,
            &dofs,
            |_, p| [p[0], p[1]],
            |_, _| (0.0, [0.0, 0.0]),
        );
        let v = eval.vel_at(1, [0.3, 0.7], &lin).unwrap();
        assert_relative_eq!(v[0], 0.3, epsilon = 1e-14);
        assert_relative_eq!(v[1], 0.7, epsilon = 1e-14);
    }

    #[test]
    fn strain_is_symmetric() {
        let (mesh, class) = setup(8);
        let dofs = DofMap::build(&mesh, &class);
        let sol = interpolate(
            &mesh,
            &class,
            &dofs,
            |_, p| [p[0] * p[1], p[1] * p[1] - p[0]],
            |_, _| (0.0, [0.0, 0.0]),
        );
        let eval = FeEval::new(&mesh, &class, &dofs);
        let p = [0.4, 0.55];
        let elem = eval.locate(2, p).unwrap();
        let g = eval.vel_grad(2, elem, p, &sol);
        let eps01 = 0.5 * (g[0][1] + g[1][0]);
        let eps10 = 0.5 * (g[1][0] + g[0][1]);
        assert_eq!(eps01, eps10);
    }

    #[test]
    fn jump_and_average() {
        let (mesh, class) = setup(8);
        let dofs = DofMap::build(&mesh, &class);
        // Equal fields on both sides: zero jump, same average.
        let sol = interpolate(
            &mesh,
            &class,
            &dofs,
            |_, p| [p[0], p[1]],
            |_, _| (0.0, [0.0, 0.0]),
        );
        let eval = FeEval::new(&mesh, &class, &dofs);
        let p = [0.5 + 0.3, 0.5]; // on the circle
        let (jump, avg) = eval.vel_jump_avg(p, &sol).unwrap();
        assert!(jump[0].abs() < 1e-13 && jump[1].abs() < 1e-13);
        assert_relative_eq!(avg[0], p[0], epsilon = 1e-13);

        // Side 1 double of side 2.
        let sol = interpolate(
            &mesh,
            &class,
            &dofs,
            |side, _| {
                if side == 1 {
                    [2.0, 4.0]
                } else {
                    [1.0, 2.0]
                }
            },
            |_, _| (0.0, [0.0, 0.0]),
        );
        let (jump, avg) = eval.vel_jump_avg(p, &sol).unwrap();
        assert_relative_eq!(jump[0], 1.0, epsilon = 1e-13);
        assert_relative_eq!(jump[1], 2.0, epsilon = 1e-13);
        assert_relative_eq!(avg[0], 1.5, epsilon = 1e-13);
        assert_relative_eq!(avg[1], 3.0, epsilon = 1e-13);
    }

    #[test]
    fn evaluation_outside_extended_domain_errors() {
        let (mesh, class) = setup(8);
        let dofs = DofMap::build(&mesh, &class);
        let eval = FeEval::new(&mesh, &class, &dofs);
        // A corner of the domain is far from the enclosed side.
        assert!(eval.locate(2, [0.05, 0.05]).is_err());
        assert!(eval.locate(1, [0.05, 0.05]).is_ok());
    }
}
