//! Assembly of the saddle-point system.
//!
//! All interface and boundary conditions enter weakly: consistent flux terms
//! plus penalties, symmetrized so the assembled matrix stays symmetric
//! indefinite. Face-jump penalties on derivatives near the cut keep both the
//! velocity and pressure blocks well behaved however small the cut
//! fractions are. The resulting blocks are (u1, u2, p1, p2, mean-multiplier).

use crate::classify::Classification;
use crate::cutcell::CutGeometry;
use crate::error::{Error, Result};
use crate::exact::ExactSolution;
use crate::interface::InterfacePolygon;
use crate::mesh::Mesh;
use crate::spaces::{p1_gradients, p1_shape, q2_shape, q2_shape_hessian, DofMap, FeEval};

/// Penalty scalars of one solve. `time_dependent` switches between the
/// dynamic form (mass term, normal-jump penalty, time-dependent weights) and
/// the steady form used by the manufactured-solution study.
#[derive(Debug, Clone, Copy)]
pub struct PenaltyParams {
    pub mu: f64,
    pub kappa: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    /// 0 = explicit membrane force, 1 = semi-implicit.
    pub nu: f64,
    pub dt: f64,
    pub h: f64,
    pub time_dependent: bool,
}

impl PenaltyParams {
    pub fn dynamic(mu: f64, kappa: f64, gamma1: f64, gamma2: f64, nu: f64, h: f64, dt: f64) -> Self {
        PenaltyParams {
            mu,
            kappa,
            gamma1,
            gamma2,
            nu,
            dt,
            h,
            time_dependent: true,
        }
    }

    pub fn steady(mu: f64, gamma1: f64, h: f64) -> Self {
        PenaltyParams {
            mu,
            kappa: 0.0,
            gamma1,
            gamma2: 0.0,
            nu: 0.0,
            dt: f64::INFINITY,
            h,
            time_dependent: false,
        }
    }

    /// Weight of the velocity face penalties.
    pub fn gamma_u(&self) -> f64 {
        if self.time_dependent {
            self.gamma1 * self.mu + self.gamma2 * self.h * self.h / self.dt
        } else {
            self.gamma1 * self.mu
        }
    }

    /// Weight of the pressure face penalties.
    pub fn gamma_p(&self) -> f64 {
        let visc = 1.0 / (4.0 * self.gamma1 * self.mu);
        if self.time_dependent {
            visc.min(self.dt / (4.0 * self.gamma2 * self.h * self.h))
        } else {
            visc
        }
    }
}

/// Sparse symmetric indefinite matrix in triplet form; duplicate entries
/// sum on conversion.
#[derive(Debug, Clone)]
pub struct SystemMatrix {
    pub dim: usize,
    pub triplets: Vec<(usize, usize, f64)>,
}

impl SystemMatrix {
    pub fn new(dim: usize) -> Self {
        SystemMatrix {
            dim,
            triplets: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        if val != 0.0 {
            self.triplets.push((row, col, val));
        }
    }

    /// Dense matrix-vector product (test support and residual checks).
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        for &(r, c, v) in &self.triplets {
            y[r] += v * x[c];
        }
        y
    }
}

/// Everything an assembly pass needs to see.
#[derive(Clone, Copy)]
pub struct AssemblyCtx<'a> {
    pub mesh: &'a Mesh,
    pub class: &'a Classification,
    pub geom: &'a CutGeometry,
    pub dofs: &'a DofMap,
    pub params: &'a PenaltyParams,
}

impl<'a> AssemblyCtx<'a> {
    fn eval(&self) -> FeEval<'a> {
        FeEval::new(self.mesh, self.class, self.dofs)
    }
}

/// Linear functional at one quadrature point: pairs of (local slot, weight).
type Functional = Vec<(usize, f64)>;

/// Dense local matrix scattered into the global triplets at the end of an
/// element/face/segment loop.
struct LocalBlock {
    n: usize,
    a: Vec<f64>,
    map: Vec<usize>,
}

impl LocalBlock {
    fn new(map: Vec<usize>) -> Self {
        let n = map.len();
        LocalBlock {
            n,
            a: vec![0.0; n * n],
            map,
        }
    }

    fn add_outer(&mut self, w: f64, rows: &Functional, cols: &Functional) {
        for &(r, rv) in rows {
            let wr = w * rv;
            for &(c, cv) in cols {
                self.a[r * self.n + c] += wr * cv;
            }
        }
    }

    fn add_symmetric_outer(&mut self, w: f64, f: &Functional) {
        self.add_outer(w, f, f);
    }

    fn scatter(&self, mat: &mut SystemMatrix) {
        for r in 0..self.n {
            let gr = self.map[r];
            for c in 0..self.n {
                let v = self.a[r * self.n + c];
                if v != 0.0 {
                    mat.push(gr, self.map[c], v);
                }
            }
        }
    }
}

/// Physical basis data of one element at one point.
struct ElemBasis {
    vals: [f64; 9],
    grads: [[f64; 2]; 9],
}

fn elem_basis(mesh: &Mesh, elem: usize, p: [f64; 2]) -> ElemBasis {
    let e = mesh.elements[elem];
    let h = mesh.h;
    let (vals, g) = q2_shape((p[0] - e.x0) / h, (p[1] - e.y0) / h);
    let mut grads = [[0.0; 2]; 9];
    for k in 0..9 {
        grads[k] = [g[k][0] / h, g[k][1] / h];
    }
    ElemBasis { vals, grads }
}

/// Physical second derivatives `(d_xx, d_xy, d_yy)`.
fn elem_hessian(mesh: &Mesh, elem: usize, p: [f64; 2]) -> [[f64; 3]; 9] {
    let e = mesh.elements[elem];
    let h = mesh.h;
    let mut out = q2_shape_hessian((p[0] - e.x0) / h, (p[1] - e.y0) / h);
    let s = 1.0 / (h * h);
    for row in &mut out {
        for v in row.iter_mut() {
            *v *= s;
        }
    }
    out
}

/// Component `c` of `eps(phi_k e_i) n` as coefficients over the 18 local
/// velocity slots (node-major, components interleaved), scaled by `scale`.
fn eps_n_functional(
    basis: &ElemBasis,
    normal: [f64; 2],
    comp: usize,
    slot_offset: usize,
    scale: f64,
    out: &mut Functional,
) {
    let [nx, ny] = normal;
    for k in 0..9 {
        let [gx, gy] = basis.grads[k];
        // trial component x
        let vx = if comp == 0 {
            gx * nx + 0.5 * gy * ny
        } else {
            0.5 * gy * nx
        };
        // trial component y
        let vy = if comp == 0 {
            0.5 * gx * ny
        } else {
            0.5 * gx * nx + gy * ny
        };
        if vx != 0.0 {
            out.push((slot_offset + 2 * k, scale * vx));
        }
        if vy != 0.0 {
            out.push((slot_offset + 2 * k + 1, scale * vy));
        }
    }
}

/// Component `c` of the normal derivative of `eps(phi_k e_i) n` (needs the
/// basis Hessian).
fn eps_n_normal_derivative_functional(
    hess: &[[f64; 3]; 9],
    normal: [f64; 2],
    comp: usize,
    slot_offset: usize,
    scale: f64,
    out: &mut Functional,
) {
    let [nx, ny] = normal;
    for k in 0..9 {
        let [hxx, hxy, hyy] = hess[k];
        // Gradient of each strain-flux component, contracted with n.
        let (vx, vy) = if comp == 0 {
            (
                (hxx * nx + 0.5 * hxy * ny) * nx + (hxy * nx + 0.5 * hyy * ny) * ny,
                (0.5 * hxx * ny) * nx + (0.5 * hxy * ny) * ny,
            )
        } else {
            (
                (0.5 * hxy * nx) * nx + (0.5 * hyy * nx) * ny,
                (0.5 * hxx * nx + hxy * ny) * nx + (0.5 * hxy * nx + hyy * ny) * ny,
            )
        };
        if vx != 0.0 {
            out.push((slot_offset + 2 * k, scale * vx));
        }
        if vy != 0.0 {
            out.push((slot_offset + 2 * k + 1, scale * vy));
        }
    }
}

/// Bulk Stokes blocks: optional mass, viscous strain form, and the
/// pressure-divergence coupling, integrated with the cut quadrature of each
/// side.
pub fn assemble_stokes_blocks(ctx: &AssemblyCtx, mat: &mut SystemMatrix) {
    let h = ctx.mesh.h;
    let inv_dt = if ctx.params.time_dependent {
        1.0 / ctx.params.dt
    } else {
        0.0
    };
    let mu = ctx.params.mu;
    for elem in 0..ctx.mesh.n_elements() {
        for side in 1..=2usize {
            let Some(q) = ctx.geom.bulk[elem][side - 1].as_ref() else {
                continue;
            };
            let vd = ctx.dofs.elem_vel_dofs(ctx.mesh, side, elem);
            let pd = ctx.dofs.elem_pres_dofs(side, elem);
            let center = ctx.mesh.elements[elem].center(h);
            let mut a_vv = [0.0f64; 18 * 18];
            let mut a_vp = [0.0f64; 18 * 3];
            for (pt, &w) in q.points.iter().zip(&q.weights) {
                let basis = elem_basis(ctx.mesh, elem, *pt);
                let pv = p1_shape(center, h, *pt);
                for a in 0..9 {
                    let na = basis.vals[a];
                    let [gxa, gya] = basis.grads[a];
                    for b in 0..9 {
                        let nb = basis.vals[b];
                        let [gxb, gyb] = basis.grads[b];
                        let mass = inv_dt * na * nb;
                        // Frobenius products of the per-component strains:
                        // rows are test (a, i), columns trial (b, j).
                        let xx = mu * (gxa * gxb + 0.5 * gya * gyb) + mass;
                        let xy = mu * 0.5 * gya * gxb; // test (a,x), trial (b,y)
                        let yx = mu * 0.5 * gxa * gyb; // test (a,y), trial (b,x)
                        let yy = mu * (gya * gyb + 0.5 * gxa * gxb) + mass;
                        a_vv[(2 * a) * 18 + 2 * b] += w * xx;
                        a_vv[(2 * a) * 18 + 2 * b + 1] += w * xy;
                        a_vv[(2 * a + 1) * 18 + 2 * b] += w * yx;
                        a_vv[(2 * a + 1) * 18 + 2 * b + 1] += w * yy;
                    }
                    for m in 0..3 {
                        // -(p, div v) rows.
                        a_vp[(2 * a) * 3 + m] -= w * pv[m] * gxa;
                        a_vp[(2 * a + 1) * 3 + m] -= w * pv[m] * gya;
                    }
                }
            }
            for a in 0..18 {
                for b in 0..18 {
                    let v = a_vv[a * 18 + b];
                    if v != 0.0 {
                        mat.push(vd[a], vd[b], v);
                    }
                }
                for m in 0..3 {
                    let v = a_vp[a * 3 + m];
                    if v != 0.0 {
                        mat.push(vd[a], pd[m], v);
                        mat.push(pd[m], vd[a], v);
                    }
                }
            }
        }
    }
}

/// Per-quadrature-point workspace for the interface terms.
struct InterfacePointOps {
    jump: [Functional; 2],
    avg_mu_eps_n: [Functional; 2],
    avg_p_n: [Functional; 2],
    jump_normal: Functional,
    avg_val: [Functional; 2],
}

fn interface_point_ops(
    mesh: &Mesh,
    e1: usize,
    e2: usize,
    pt: [f64; 2],
    normal: [f64; 2],
    mu: f64,
) -> InterfacePointOps {
    let b1 = elem_basis(mesh, e1, pt);
    let b2 = elem_basis(mesh, e2, pt);
    let h = mesh.h;
    let p1v = p1_shape(mesh.elements[e1].center(h), h, pt);
    let p2v = p1_shape(mesh.elements[e2].center(h), h, pt);
    // Local slots: [0,18) side-1 velocity, [18,36) side-2 velocity,
    // [36,39) side-1 pressure, [39,42) side-2 pressure.
    let mut ops = InterfacePointOps {
        jump: [Vec::new(), Vec::new()],
        avg_mu_eps_n: [Vec::new(), Vec::new()],
        avg_p_n: [Vec::new(), Vec::new()],
        jump_normal: Vec::new(),
        avg_val: [Vec::new(), Vec::new()],
    };
    for c in 0..2 {
        for k in 0..9 {
            if b1.vals[k] != 0.0 {
                ops.jump[c].push((2 * k + c, b1.vals[k]));
                ops.avg_val[c].push((2 * k + c, 0.5 * b1.vals[k]));
                ops.jump_normal.push((2 * k + c, normal[c] * b1.vals[k]));
            }
            if b2.vals[k] != 0.0 {
                ops.jump[c].push((18 + 2 * k + c, -b2.vals[k]));
                ops.avg_val[c].push((18 + 2 * k + c, 0.5 * b2.vals[k]));
                ops.jump_normal
                    .push((18 + 2 * k + c, -normal[c] * b2.vals[k]));
            }
        }
        eps_n_functional(&b1, normal, c, 0, 0.5 * mu, &mut ops.avg_mu_eps_n[c]);
        eps_n_functional(&b2, normal, c, 18, 0.5 * mu, &mut ops.avg_mu_eps_n[c]);
        for m in 0..3 {
            ops.avg_p_n[c].push((36 + m, 0.5 * p1v[m] * normal[c]));
            ops.avg_p_n[c].push((39 + m, 0.5 * p2v[m] * normal[c]));
        }
    }
    ops
}

/// Consistent flux terms and penalties on the moving interface.
pub fn assemble_nitsche_interface(ctx: &AssemblyCtx, mat: &mut SystemMatrix) -> Result<()> {
    let eval = ctx.eval();
    let p = ctx.params;
    let pen_u = p.gamma1 * p.mu / p.h;
    let pen_n = if p.time_dependent {
        p.gamma2 * p.h / p.dt
    } else {
        0.0
    };
    for seg in &ctx.geom.interface {
        let mid = [0.5 * (seg.a[0] + seg.b[0]), 0.5 * (seg.a[1] + seg.b[1])];
        let e1 = eval.locate(1, mid)?;
        let e2 = eval.locate(2, mid)?;
        let vd1 = ctx.dofs.elem_vel_dofs(ctx.mesh, 1, e1);
        let vd2 = ctx.dofs.elem_vel_dofs(ctx.mesh, 2, e2);
        let pd1 = ctx.dofs.elem_pres_dofs(1, e1);
        let pd2 = ctx.dofs.elem_pres_dofs(2, e2);
        let mut map = Vec::with_capacity(42);
        map.extend_from_slice(&vd1);
        map.extend_from_slice(&vd2);
        map.extend_from_slice(&pd1);
        map.extend_from_slice(&pd2);
        let mut local = LocalBlock::new(map);
        for (pt, &w) in seg.points.iter().zip(&seg.weights) {
            let ops = interface_point_ops(ctx.mesh, e1, e2, *pt, seg.normal, p.mu);
            for c in 0..2 {
                // -({mu eps(u) n}, [v]) and its adjoint.
                local.add_outer(-w, &ops.jump[c], &ops.avg_mu_eps_n[c]);
                local.add_outer(-w, &ops.avg_mu_eps_n[c], &ops.jump[c]);
                // +({p n}, [v]) and +([u], {q n}).
                local.add_outer(w, &ops.jump[c], &ops.avg_p_n[c]);
                local.add_outer(w, &ops.avg_p_n[c], &ops.jump[c]);
                // Interface jump penalty.
                local.add_symmetric_outer(w * pen_u, &ops.jump[c]);
            }
            if pen_n > 0.0 {
                local.add_symmetric_outer(w * pen_n, &ops.jump_normal);
            }
        }
        local.scatter(mat);
    }
    Ok(())
}

/// Weak Dirichlet condition on the outer boundary (side 1 only).
pub fn assemble_nitsche_boundary(ctx: &AssemblyCtx, mat: &mut SystemMatrix) {
    let p = ctx.params;
    let pen_u = p.gamma1 * p.mu / p.h;
    let pen_n = if p.time_dependent {
        p.gamma2 * p.h / p.dt
    } else {
        0.0
    };
    for edge in &ctx.geom.boundary {
        let elem = edge.element;
        let vd = ctx.dofs.elem_vel_dofs(ctx.mesh, 1, elem);
        let pd = ctx.dofs.elem_pres_dofs(1, elem);
        let mut map = Vec::with_capacity(21);
        map.extend_from_slice(&vd);
        map.extend_from_slice(&pd);
        let mut local = LocalBlock::new(map);
        let center = ctx.mesh.elements[elem].center(ctx.mesh.h);
        for (pt, &w) in edge.points.iter().zip(&edge.weights) {
            let basis = elem_basis(ctx.mesh, elem, *pt);
            let pv = p1_shape(center, ctx.mesh.h, *pt);
            for c in 0..2 {
                let mut val: Functional = Vec::new();
                for k in 0..9 {
                    if basis.vals[k] != 0.0 {
                        val.push((2 * k + c, basis.vals[k]));
                    }
                }
                let mut mu_eps_n: Functional = Vec::new();
                eps_n_functional(&basis, edge.normal, c, 0, p.mu, &mut mu_eps_n);
                let mut p_n: Functional = Vec::new();
                for m in 0..3 {
                    p_n.push((18 + m, pv[m] * edge.normal[c]));
                }
                local.add_outer(-w, &val, &mu_eps_n);
                local.add_outer(-w, &mu_eps_n, &val);
                local.add_outer(w, &val, &p_n);
                local.add_outer(w, &p_n, &val);
                local.add_symmetric_outer(w * pen_u, &val);
            }
            if pen_n > 0.0 {
                let mut val_n: Functional = Vec::new();
                for k in 0..9 {
                    for c in 0..2 {
                        let v = basis.vals[k] * edge.normal[c];
                        if v != 0.0 {
                            val_n.push((2 * k + c, v));
                        }
                    }
                }
                local.add_symmetric_outer(w * pen_n, &val_n);
            }
        }
        local.scatter(mat);
    }
}

/// Face-jump penalties near the cut: first and second normal derivatives of
/// the strain flux for velocity, value and normal-derivative jumps for
/// pressure (subtracted, keeping the matrix symmetric).
pub fn assemble_ghost_penalties(ctx: &AssemblyCtx, mat: &mut SystemMatrix) {
    let p = ctx.params;
    let h = ctx.mesh.h;
    let gamma_u = p.gamma_u();
    let gamma_p = p.gamma_p();
    for side in 1..=2usize {
        for face in &ctx.geom.ghost[side - 1] {
            let (ka, kb) = face.elems;
            let vda = ctx.dofs.elem_vel_dofs(ctx.mesh, side, ka);
            let vdb = ctx.dofs.elem_vel_dofs(ctx.mesh, side, kb);
            let pda = ctx.dofs.elem_pres_dofs(side, ka);
            let pdb = ctx.dofs.elem_pres_dofs(side, kb);
            let mut map = Vec::with_capacity(42);
            map.extend_from_slice(&vda);
            map.extend_from_slice(&vdb);
            map.extend_from_slice(&pda);
            map.extend_from_slice(&pdb);
            let mut local = LocalBlock::new(map);
            let ca = ctx.mesh.elements[ka].center(h);
            let cb = ctx.mesh.elements[kb].center(h);
            let pga = p1_gradients(h);
            for (pt, &w) in face.points.iter().zip(&face.weights) {
                let ba = elem_basis(ctx.mesh, ka, *pt);
                let bb = elem_basis(ctx.mesh, kb, *pt);
                let ha = elem_hessian(ctx.mesh, ka, *pt);
                let hb = elem_hessian(ctx.mesh, kb, *pt);
                for c in 0..2 {
                    let mut jump0: Functional = Vec::new();
                    eps_n_functional(&ba, face.normal, c, 0, 1.0, &mut jump0);
                    eps_n_functional(&bb, face.normal, c, 18, -1.0, &mut jump0);
                    local.add_symmetric_outer(w * gamma_u * h, &jump0);
                    let mut jump1: Functional = Vec::new();
                    eps_n_normal_derivative_functional(
                        &ha,
                        face.normal,
                        c,
                        0,
                        1.0,
                        &mut jump1,
                    );
                    eps_n_normal_derivative_functional(
                        &hb,
                        face.normal,
                        c,
                        18,
                        -1.0,
                        &mut jump1,
                    );
                    local.add_symmetric_outer(w * gamma_u * h * h * h, &jump1);
                }
                let pva = p1_shape(ca, h, *pt);
                let pvb = p1_shape(cb, h, *pt);
                let mut pj0: Functional = Vec::new();
                let mut pj1: Functional = Vec::new();
                for m in 0..3 {
                    pj0.push((36 + m, pva[m]));
                    pj0.push((39 + m, -pvb[m]));
                    let dn = pga[m][0] * face.normal[0] + pga[m][1] * face.normal[1];
                    if dn != 0.0 {
                        pj1.push((36 + m, dn));
                        pj1.push((39 + m, -dn));
                    }
                }
                local.add_symmetric_outer(-w * gamma_p * h, &pj0);
                local.add_symmetric_outer(-w * gamma_p * h * h * h, &pj1);
            }
            local.scatter(mat);
        }
    }
}

/// Velocity-coupling block of the semi-implicit membrane force: a Gram form
/// of averaged vertex-value differences weighted by the reference segment
/// lengths.
pub fn assemble_membrane_semi_implicit(
    ctx: &AssemblyCtx,
    poly: &InterfacePolygon,
    mat: &mut SystemMatrix,
) -> Result<()> {
    let p = ctx.params;
    if p.nu == 0.0 || p.kappa == 0.0 {
        return Ok(());
    }
    let eval = ctx.eval();
    let scale = p.nu * p.kappa * p.dt;
    let m = poly.m();
    // Element and basis data per vertex.
    let mut vertex: Vec<([usize; 2], ElemBasis, ElemBasis)> = Vec::with_capacity(m);
    for j in 0..m {
        let x = poly.point(j);
        let e1 = eval.locate(1, x)?;
        let e2 = eval.locate(2, x)?;
        vertex.push(([e1, e2], elem_basis(ctx.mesh, e1, x), elem_basis(ctx.mesh, e2, x)));
    }
    for j in 0..m {
        let jn = (j + 1) % m;
        let (ea, ba1, ba2) = &vertex[j];
        let (eb, bb1, bb2) = &vertex[jn];
        let mut map = Vec::with_capacity(72);
        map.extend_from_slice(&ctx.dofs.elem_vel_dofs(ctx.mesh, 1, ea[0]));
        map.extend_from_slice(&ctx.dofs.elem_vel_dofs(ctx.mesh, 2, ea[1]));
        map.extend_from_slice(&ctx.dofs.elem_vel_dofs(ctx.mesh, 1, eb[0]));
        map.extend_from_slice(&ctx.dofs.elem_vel_dofs(ctx.mesh, 2, eb[1]));
        let mut local = LocalBlock::new(map);
        let w = scale / poly.ref_len(j);
        for c in 0..2 {
            // {u(X_{j+1})} - {u(X_j)} over the 72 slots.
            let mut diff: Functional = Vec::with_capacity(36);
            for k in 0..9 {
                if ba1.vals[k] != 0.0 {
                    diff.push((2 * k + c, -0.5 * ba1.vals[k]));
                }
                if ba2.vals[k] != 0.0 {
                    diff.push((18 + 2 * k + c, -0.5 * ba2.vals[k]));
                }
                if bb1.vals[k] != 0.0 {
                    diff.push((36 + 2 * k + c, 0.5 * bb1.vals[k]));
                }
                if bb2.vals[k] != 0.0 {
                    diff.push((54 + 2 * k + c, 0.5 * bb2.vals[k]));
                }
            }
            local.add_symmetric_outer(w, &diff);
        }
        local.scatter(mat);
    }
    Ok(())
}

/// One extra symmetric row/column forcing the combined pressure mean over
/// both physical subdomains to zero.
pub fn assemble_mean_constraint(ctx: &AssemblyCtx, mat: &mut SystemMatrix) {
    let lambda = ctx.dofs.mean_constraint_dof();
    let h = ctx.mesh.h;
    for elem in 0..ctx.mesh.n_elements() {
        for side in 1..=2usize {
            let Some(q) = ctx.geom.bulk[elem][side - 1].as_ref() else {
                continue;
            };
            let pd = ctx.dofs.elem_pres_dofs(side, elem);
            let center = ctx.mesh.elements[elem].center(h);
            let mut c = [0.0f64; 3];
            for (pt, &w) in q.points.iter().zip(&q.weights) {
                let pv = p1_shape(center, h, *pt);
                for m in 0..3 {
                    c[m] += w * pv[m];
                }
            }
            for m in 0..3 {
                if c[m] != 0.0 {
                    mat.push(lambda, pd[m], c[m]);
                    mat.push(pd[m], lambda, c[m]);
                }
            }
        }
    }
}

/// The previous velocity viewed as a function on the whole domain: a point
/// takes the side-1 field if it lies outside the previous interface and the
/// side-2 field otherwise.
pub struct CarriedVelocity<'a> {
    pub mesh: &'a Mesh,
    pub class: &'a Classification,
    pub dofs: &'a DofMap,
    pub sol: &'a [f64],
    pub poly: &'a InterfacePolygon,
}

impl CarriedVelocity<'_> {
    pub fn velocity(&self, p: [f64; 2]) -> Result<[f64; 2]> {
        let side = if self.poly.contains(p) { 2 } else { 1 };
        let eval = FeEval::new(self.mesh, self.class, self.dofs);
        let elem = eval.locate(side, p).map_err(|_| {
            Error::StepFailure {
                step: 0,
                reason: format!(
                    "previous side-{side} field undefined at ({:.4}, {:.4}); the interface moved too far",
                    p[0], p[1]
                ),
            }
        })?;
        Ok(eval.vel_value(side, elem, p, self.sol))
    }
}

/// Time-step right-hand side: carried-over momentum plus the membrane
/// force paired with averaged test values at the vertices.
pub fn assemble_rhs_dynamic(
    ctx: &AssemblyCtx,
    prev: &CarriedVelocity,
    poly: &InterfacePolygon,
    rhs: &mut [f64],
) -> Result<()> {
    let inv_dt = 1.0 / ctx.params.dt;
    for elem in 0..ctx.mesh.n_elements() {
        for side in 1..=2usize {
            let Some(q) = ctx.geom.bulk[elem][side - 1].as_ref() else {
                continue;
            };
            let vd = ctx.dofs.elem_vel_dofs(ctx.mesh, side, elem);
            for (pt, &w) in q.points.iter().zip(&q.weights) {
                let uo = prev.velocity(*pt)?;
                let basis = elem_basis(ctx.mesh, elem, *pt);
                for k in 0..9 {
                    let s = w * inv_dt * basis.vals[k];
                    rhs[vd[2 * k]] += s * uo[0];
                    rhs[vd[2 * k + 1]] += s * uo[1];
                }
            }
        }
    }

    let eval = ctx.eval();
    let forces = poly.force_coefficients(ctx.params.kappa);
    for (j, g) in forces.iter().enumerate() {
        let x = poly.point(j);
        for side in 1..=2usize {
            let elem = eval.locate(side, x)?;
            let vd = ctx.dofs.elem_vel_dofs(ctx.mesh, side, elem);
            let basis = elem_basis(ctx.mesh, elem, x);
            for k in 0..9 {
                rhs[vd[2 * k]] += 0.5 * g[0] * basis.vals[k];
                rhs[vd[2 * k + 1]] += 0.5 * g[1] * basis.vals[k];
            }
        }
    }
    Ok(())
}

/// Right-hand side of the steady problem: bulk sources plus interface and
/// boundary data entering through the consistent flux, adjoint, and penalty
/// terms.
pub fn assemble_rhs_manufactured(
    ctx: &AssemblyCtx,
    exact: &dyn ExactSolution,
    rhs: &mut [f64],
) -> Result<()> {
    let p = ctx.params;
    let pen_u = p.gamma1 * p.mu / p.h;
    let eval = ctx.eval();

    for elem in 0..ctx.mesh.n_elements() {
        for side in 1..=2usize {
            let Some(q) = ctx.geom.bulk[elem][side - 1].as_ref() else {
                continue;
            };
            let vd = ctx.dofs.elem_vel_dofs(ctx.mesh, side, elem);
            for (pt, &w) in q.points.iter().zip(&q.weights) {
                let f = exact.source(side, *pt, p.mu);
                let basis = elem_basis(ctx.mesh, elem, *pt);
                for k in 0..9 {
                    rhs[vd[2 * k]] += w * f[0] * basis.vals[k];
                    rhs[vd[2 * k + 1]] += w * f[1] * basis.vals[k];
                }
            }
        }
    }

    for seg in &ctx.geom.interface {
        let mid = [0.5 * (seg.a[0] + seg.b[0]), 0.5 * (seg.a[1] + seg.b[1])];
        let e1 = eval.locate(1, mid)?;
        let e2 = eval.locate(2, mid)?;
        let vd1 = ctx.dofs.elem_vel_dofs(ctx.mesh, 1, e1);
        let vd2 = ctx.dofs.elem_vel_dofs(ctx.mesh, 2, e2);
        let pd1 = ctx.dofs.elem_pres_dofs(1, e1);
        let pd2 = ctx.dofs.elem_pres_dofs(2, e2);
        let map: Vec<usize> = vd1
            .iter()
            .chain(vd2.iter())
            .chain(pd1.iter())
            .chain(pd2.iter())
            .copied()
            .collect();
        for (pt, &w) in seg.points.iter().zip(&seg.weights) {
            let ops = interface_point_ops(ctx.mesh, e1, e2, *pt, seg.normal, p.mu);
            let g_n = exact.traction_jump(*pt, seg.normal, p.mu);
            let g_j = exact.velocity_jump(*pt);
            let g_j_n = g_j[0] * seg.normal[0] + g_j[1] * seg.normal[1];
            for c in 0..2 {
                // (g_N, {v})
                for &(slot, v) in &ops.avg_val[c] {
                    rhs[map[slot]] += w * g_n[c] * v;
                }
                // -(g_J, {mu eps(v) n})
                for &(slot, v) in &ops.avg_mu_eps_n[c] {
                    rhs[map[slot]] -= w * g_j[c] * v;
                }
                // +(g_J, {q n})
                for &(slot, v) in &ops.avg_p_n[c] {
                    rhs[map[slot]] += w * g_j[c] * v;
                }
                // Penalty data.
                for &(slot, v) in &ops.jump[c] {
                    rhs[map[slot]] += w * pen_u * g_j[c] * v;
                }
            }
            if p.time_dependent {
                let pen_n = p.gamma2 * p.h / p.dt;
                for &(slot, v) in &ops.jump_normal {
                    rhs[map[slot]] += w * pen_n * g_j_n * v;
                }
            }
        }
    }

    for edge in &ctx.geom.boundary {
        let elem = edge.element;
        let vd = ctx.dofs.elem_vel_dofs(ctx.mesh, 1, elem);
        let pd = ctx.dofs.elem_pres_dofs(1, elem);
        let center = ctx.mesh.elements[elem].center(ctx.mesh.h);
        for (pt, &w) in edge.points.iter().zip(&edge.weights) {
            let g = exact.boundary_velocity(*pt);
            let basis = elem_basis(ctx.mesh, elem, *pt);
            let pv = p1_shape(center, ctx.mesh.h, *pt);
            for c in 0..2 {
                let mut mu_eps_n: Functional = Vec::new();
                eps_n_functional(&basis, edge.normal, c, 0, p.mu, &mut mu_eps_n);
                for &(slot, v) in &mu_eps_n {
                    rhs[vd[slot]] -= w * g[c] * v;
                }
                for k in 0..9 {
                    rhs[vd[2 * k + c]] += w * pen_u * g[c] * basis.vals[k];
                }
            }
            let g_dot_n = g[0] * edge.normal[0] + g[1] * edge.normal[1];
            for m in 0..3 {
                rhs[pd[m]] += w * g_dot_n * pv[m];
            }
        }
    }
    Ok(())
}

/// Raw quadratic forms of one solution used by the per-step energy budget.
/// Penalty weights are not applied here; callers scale by the gamma factors.
#[derive(Debug, Clone, Copy, Default)]
pub struct PenaltyEnergies {
    /// Interface integral of the squared velocity jump.
    pub interface_jump: f64,
    /// Interface integral of the squared normal-velocity jump.
    pub interface_normal_jump: f64,
    /// Outer-boundary integral of the squared side-1 velocity.
    pub boundary: f64,
    /// Outer-boundary integral of the squared side-1 normal velocity.
    pub boundary_normal: f64,
    /// Per side: the velocity face-jump form (h and h^3 weighted terms).
    pub ghost_velocity: [f64; 2],
    /// Per side: the pressure face-jump form.
    pub ghost_pressure: [f64; 2],
    /// Viscous form `mu int eps(u):eps(u)` over both physical sides.
    pub strain: f64,
}

/// Evaluate the penalty and dissipation quadratic forms of a solution with
/// exactly the quadratures used in assembly.
pub fn penalty_energies(ctx: &AssemblyCtx, sol: &[f64]) -> Result<PenaltyEnergies> {
    let eval = ctx.eval();
    let mu = ctx.params.mu;
    let h = ctx.mesh.h;
    let mut out = PenaltyEnergies::default();

    for elem in 0..ctx.mesh.n_elements() {
        for side in 1..=2usize {
            let Some(q) = ctx.geom.bulk[elem][side - 1].as_ref() else {
                continue;
            };
            for (pt, &w) in q.points.iter().zip(&q.weights) {
                let g = eval.vel_grad(side, elem, *pt, sol);
                let exy = 0.5 * (g[0][1] + g[1][0]);
                out.strain +=
                    w * mu * (g[0][0] * g[0][0] + 2.0 * exy * exy + g[1][1] * g[1][1]);
            }
        }
    }

    for seg in &ctx.geom.interface {
        let mid = [0.5 * (seg.a[0] + seg.b[0]), 0.5 * (seg.a[1] + seg.b[1])];
        let e1 = eval.locate(1, mid)?;
        let e2 = eval.locate(2, mid)?;
        for (pt, &w) in seg.points.iter().zip(&seg.weights) {
            let v1 = eval.vel_value(1, e1, *pt, sol);
            let v2 = eval.vel_value(2, e2, *pt, sol);
            let jump = [v1[0] - v2[0], v1[1] - v2[1]];
            out.interface_jump += w * (jump[0] * jump[0] + jump[1] * jump[1]);
            let jn = jump[0] * seg.normal[0] + jump[1] * seg.normal[1];
            out.interface_normal_jump += w * jn * jn;
        }
    }

    for edge in &ctx.geom.boundary {
        for (pt, &w) in edge.points.iter().zip(&edge.weights) {
            let v = eval.vel_value(1, edge.element, *pt, sol);
            out.boundary += w * (v[0] * v[0] + v[1] * v[1]);
            let vn = v[0] * edge.normal[0] + v[1] * edge.normal[1];
            out.boundary_normal += w * vn * vn;
        }
    }

    let mut workspace: Functional = Vec::new();
    for side in 1..=2usize {
        for face in &ctx.geom.ghost[side - 1] {
            let (ka, kb) = face.elems;
            let vda = ctx.dofs.elem_vel_dofs(ctx.mesh, side, ka);
            let vdb = ctx.dofs.elem_vel_dofs(ctx.mesh, side, kb);
            let mut local = [0.0f64; 36];
            for (i, &d) in vda.iter().chain(vdb.iter()).enumerate() {
                local[i] = sol[d];
            }
            let pda = ctx.dofs.elem_pres_dofs(side, ka);
            let pdb = ctx.dofs.elem_pres_dofs(side, kb);
            let ca = ctx.mesh.elements[ka].center(h);
            let cb = ctx.mesh.elements[kb].center(h);
            let pga = p1_gradients(h);
            for (pt, &w) in face.points.iter().zip(&face.weights) {
                let ba = elem_basis(ctx.mesh, ka, *pt);
                let bb = elem_basis(ctx.mesh, kb, *pt);
                let ha = elem_hessian(ctx.mesh, ka, *pt);
                let hb = elem_hessian(ctx.mesh, kb, *pt);
                for c in 0..2 {
                    workspace.clear();
                    eps_n_functional(&ba, face.normal, c, 0, 1.0, &mut workspace);
                    eps_n_functional(&bb, face.normal, c, 18, -1.0, &mut workspace);
                    let v0: f64 = workspace.iter().map(|&(s, v)| v * local[s]).sum();
                    out.ghost_velocity[side - 1] += w * h * v0 * v0;
                    workspace.clear();
                    eps_n_normal_derivative_functional(
                        &ha,
                        face.normal,
                        c,
                        0,
                        1.0,
                        &mut workspace,
                    );
                    eps_n_normal_derivative_functional(
                        &hb,
                        face.normal,
                        c,
                        18,
                        -1.0,
                        &mut workspace,
                    );
                    let v1: f64 = workspace.iter().map(|&(s, v)| v * local[s]).sum();
                    out.ghost_velocity[side - 1] += w * h * h * h * v1 * v1;
                }
                let pva = p1_shape(ca, h, *pt);
                let pvb = p1_shape(cb, h, *pt);
                let mut j0 = 0.0;
                let mut j1 = 0.0;
                for m in 0..3 {
                    j0 += pva[m] * sol[pda[m]] - pvb[m] * sol[pdb[m]];
                    let dn = pga[m][0] * face.normal[0] + pga[m][1] * face.normal[1];
                    j1 += dn * (sol[pda[m]] - sol[pdb[m]]);
                }
                out.ghost_pressure[side - 1] += w * (h * j0 * j0 + h * h * h * j1 * j1);
            }
        }
    }
    Ok(out)
}

/// Assemble the full steady system for the manufactured problem.
pub fn assemble_system_steady(
    ctx: &AssemblyCtx,
    exact: &dyn ExactSolution,
) -> Result<(SystemMatrix, Vec<f64>)> {
    let mut mat = SystemMatrix::new(ctx.dofs.total());
    let mut rhs = vec![0.0; ctx.dofs.total()];
    assemble_stokes_blocks(ctx, &mut mat);
    assemble_nitsche_interface(ctx, &mut mat)?;
    assemble_nitsche_boundary(ctx, &mut mat);
    assemble_ghost_penalties(ctx, &mut mat);
    assemble_mean_constraint(ctx, &mut mat);
    assemble_rhs_manufactured(ctx, exact, &mut rhs)?;
    Ok((mat, rhs))
}

/// Assemble the full dynamic system for one time step on the geometry of the
/// current interface.
pub fn assemble_system_dynamic(
    ctx: &AssemblyCtx,
    prev: &CarriedVelocity,
    poly: &InterfacePolygon,
) -> Result<(SystemMatrix, Vec<f64>)> {
    let mut mat = SystemMatrix::new(ctx.dofs.total());
    let mut rhs = vec![0.0; ctx.dofs.total()];
    assemble_stokes_blocks(ctx, &mut mat);
    assemble_nitsche_interface(ctx, &mut mat)?;
    assemble_nitsche_boundary(ctx, &mut mat);
    assemble_ghost_penalties(ctx, &mut mat);
    assemble_membrane_semi_implicit(ctx, poly, &mut mat)?;
    assemble_mean_constraint(ctx, &mut mat);
    assemble_rhs_dynamic(ctx, prev, poly, &mut rhs)?;
    Ok((mat, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::classify_elements;
    use crate::cutcell::build_cut_geometry;
    use crate::interface::CurveSpec;
    use crate::spaces::interpolate;
    use approx::assert_relative_eq;
    use std::collections::BTreeMap;

    struct Fixture {
        mesh: Mesh,
        poly: InterfacePolygon,
        class: Classification,
        geom: CutGeometry,
        dofs: DofMap,
    }

    fn fixture(n: usize, m: usize) -> Fixture {
        let mesh = Mesh::build(n).unwrap();
        let poly = InterfacePolygon::sample_initial(
            &CurveSpec::Circle {
                r: 0.3,
                center: [0.5, 0.5],
                cubic_reparam: false,
            },
            m,
            1.0,
        )
        .unwrap();
        let class = classify_elements(&mesh, &poly).unwrap();
        let geom = build_cut_geometry(&mesh, &class, &poly).unwrap();
        let dofs = DofMap::build(&mesh, &class);
        Fixture {
            mesh,
            poly,
            class,
            geom,
            dofs,
        }
    }

    fn quad_form(mat: &SystemMatrix, x: &[f64]) -> f64 {
        mat.triplets.iter().map(|&(r, c, v)| x[r] * v * x[c]).sum()
    }

    fn summed(mat: &SystemMatrix) -> BTreeMap<(usize, usize), f64> {
        let mut map = BTreeMap::new();
        for &(r, c, v) in &mat.triplets {
            *map.entry((r, c)).or_insert(0.0) += v;
        }
        map
    }

    #[test]
    fn strain_energy_of_linear_field() {
        // u = (x, -y) has strain diag(1, -1); mu * int eps:eps = 2 mu.
        let f = fixture(16, 150);
        let params = PenaltyParams::steady(1.3, 10.0, f.mesh.h);
        let ctx = AssemblyCtx {
            mesh: &f.mesh,
            class: &f.class,
            geom: &f.geom,
            dofs: &f.dofs,
            params: &params,
        };
        let mut mat = SystemMatrix::new(f.dofs.total());
        assemble_stokes_blocks(&ctx, &mut mat);
        let sol = interpolate(
            &f.mesh,
            &f.class,
            &f.dofs,
            |_, p| [p[0], -p[1]],
            |_, _| (0.0, [0.0, 0.0]),
        );
        assert_relative_eq!(quad_form(&mat, &sol), 2.0 * 1.3, epsilon = 1e-10);

        // Constant and rigid-rotation fields carry no strain energy.
        for field in [[1.0, 0.0], [0.0, 0.0]] {
            let sol = interpolate(
                &f.mesh,
                &f.class,
                &f.dofs,
                |_, _| field,
                |_, _| (0.0, [0.0, 0.0]),
            );
            assert!(quad_form(&mat, &sol).abs() < 1e-12);
        }
        let rot = interpolate(
            &f.mesh,
            &f.class,
            &f.dofs,
            |_, p| [-p[1], p[0]],
            |_, _| (0.0, [0.0, 0.0]),
        );
        assert!(quad_form(&mat, &rot).abs() < 1e-10);
    }

    #[test]
    fn global_matrix_symmetry() {
        let f = fixture(16, 150);
        let params = PenaltyParams::dynamic(1.0, 6.0, 10.0, 10.0, 1.0, f.mesh.h, 0.01);
        let ctx = AssemblyCtx {
            mesh: &f.mesh,
            class: &f.class,
            geom: &f.geom,
            dofs: &f.dofs,
            params: &params,
        };
        let mut mat = SystemMatrix::new(f.dofs.total());
        assemble_stokes_blocks(&ctx, &mut mat);
        assemble_nitsche_interface(&ctx, &mut mat).unwrap();
        assemble_nitsche_boundary(&ctx, &mut mat);
        assemble_ghost_penalties(&ctx, &mut mat);
        assemble_membrane_semi_implicit(&ctx, &f.poly, &mut mat).unwrap();
        assemble_mean_constraint(&ctx, &mut mat);
        let map = summed(&mat);
        let amax = map.values().fold(0.0f64, |m, &v| m.max(v.abs()));
        let mut worst = 0.0f64;
        for (&(r, c), &v) in &map {
            let vt = map.get(&(c, r)).copied().unwrap_or(0.0);
            worst = worst.max((v - vt).abs());
        }
        assert!(worst <= 1e-12 * amax, "asymmetry {worst:.3e} vs {amax:.3e}");
    }

    #[test]
    fn continuous_field_kills_jump_terms() {
        let f = fixture(16, 150);
        let params = PenaltyParams::dynamic(1.0, 6.0, 10.0, 10.0, 0.0, f.mesh.h, 0.01);
        let ctx = AssemblyCtx {
            mesh: &f.mesh,
            class: &f.class,
            geom: &f.geom,
            dofs: &f.dofs,
            params: &params,
        };
        let mut mat = SystemMatrix::new(f.dofs.total());
        assemble_nitsche_interface(&ctx, &mut mat).unwrap();
        // Same smooth field on both sides: every jump functional vanishes,
        // so the interface block contributes nothing against itself beyond
        // consistency terms pairing jumps; the pure penalty energy is zero.
        let sol = interpolate(
            &f.mesh,
            &f.class,
            &f.dofs,
            |_, p| [p[0] * p[1], p[1]],
            |_, _| (0.0, [0.0, 0.0]),
        );
        // The full interface bilinear form applied to a continuous velocity
        // with zero pressure reduces to 0 (all terms pair a jump with
        // something).
        assert!(quad_form(&mat, &sol).abs() < 1e-11);
    }

    #[test]
    fn interface_penalty_energy_of_constant_jump() {
        let f = fixture(16, 150);
        let params = PenaltyParams::steady(2.0, 10.0, f.mesh.h);
        let ctx = AssemblyCtx {
            mesh: &f.mesh,
            class: &f.class,
            geom: &f.geom,
            dofs: &f.dofs,
            params: &params,
        };
        let mut mat = SystemMatrix::new(f.dofs.total());
        assemble_nitsche_interface(&ctx, &mut mat).unwrap();
        // Constant velocities c1 on side 1 and c2 on side 2: only the
        // penalty term survives (eps = 0, p = 0), giving
        // gamma1 mu / h * |Gamma| * |c1 - c2|^2.
        let c = [0.3, -0.2];
        let sol = interpolate(
            &f.mesh,
            &f.class,
            &f.dofs,
            |side, _| {
                if side == 1 {
                    [c[0], c[1]]
                } else {
                    [0.0, 0.0]
                }
            },
            |_, _| (0.0, [0.0, 0.0]),
        );
        let expect =
            10.0 * 2.0 / f.mesh.h * f.poly.perimeter() * (c[0] * c[0] + c[1] * c[1]);
        assert_relative_eq!(quad_form(&mat, &sol), expect, epsilon = 1e-9 * expect);
    }

    #[test]
    fn ghost_penalties_vanish_on_global_polynomials() {
        let f = fixture(16, 150);
        let params = PenaltyParams::dynamic(1.0, 6.0, 10.0, 10.0, 0.0, f.mesh.h, 0.01);
        let ctx = AssemblyCtx {
            mesh: &f.mesh,
            class: &f.class,
            geom: &f.geom,
            dofs: &f.dofs,
            params: &params,
        };
        let mut mat = SystemMatrix::new(f.dofs.total());
        assemble_ghost_penalties(&ctx, &mut mat);
        // A globally biquadratic velocity and linear pressure have no jumps
        // across faces.
        let sol = interpolate(
            &f.mesh,
            &f.class,
            &f.dofs,
            |_, p| [p[0] * p[0] + p[1], p[0] * p[1] - 2.0],
            |_, p| (3.0 * p[0] - p[1], [3.0, -1.0]),
        );
        assert!(quad_form(&mat, &sol).abs() < 1e-10);
        // An element-wise indicator pressure on one cut element jumps.
        let probe = f.class.cut_elems[0];
        let mut ind = vec![0.0; f.dofs.total()];
        ind[f.dofs.elem_pres_dofs(1, probe)[0]] = 1.0;
        let energy = -quad_form(&mat, &ind);
        // - gamma_p sum over the element's ghost faces of h |F|.
        let faces = f.geom.ghost[0]
            .iter()
            .filter(|g| g.elems.0 == probe || g.elems.1 == probe)
            .count() as f64;
        let expect = params.gamma_p() * faces * f.mesh.h * f.mesh.h;
        assert_relative_eq!(energy, expect, epsilon = 1e-10 * expect);
    }

    #[test]
    fn membrane_block_is_positive_semidefinite_gram() {
        let f = fixture(16, 150);
        let params = PenaltyParams::dynamic(1.0, 6.0, 10.0, 10.0, 1.0, f.mesh.h, 0.01);
        let ctx = AssemblyCtx {
            mesh: &f.mesh,
            class: &f.class,
            geom: &f.geom,
            dofs: &f.dofs,
            params: &params,
        };
        let mut mat = SystemMatrix::new(f.dofs.total());
        assemble_membrane_semi_implicit(&ctx, &f.poly, &mut mat).unwrap();
        // Constant field: zero contribution.
        let sol = interpolate(
            &f.mesh,
            &f.class,
            &f.dofs,
            |_, _| [0.7, -0.4],
            |_, _| (0.0, [0.0, 0.0]),
        );
        assert!(quad_form(&mat, &sol).abs() < 1e-12);
        // Random coefficients: nonnegative energy.
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let x: Vec<f64> = (0..f.dofs.total())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            assert!(quad_form(&mat, &x) >= -1e-10);
        }
        // nu = 0 disables the block.
        let params0 = PenaltyParams::dynamic(1.0, 6.0, 10.0, 10.0, 0.0, f.mesh.h, 0.01);
        let ctx0 = AssemblyCtx { params: &params0, ..ctx };
        let mut mat0 = SystemMatrix::new(f.dofs.total());
        assemble_membrane_semi_implicit(&ctx0, &f.poly, &mut mat0).unwrap();
        assert!(mat0.triplets.is_empty());
    }

    #[test]
    fn dynamic_rhs_constant_carryover() {
        // Previous velocity c everywhere and kappa = 0: pairing the rhs with
        // the interpolant of c gives |Omega| |c|^2 / dt.
        let f = fixture(16, 150);
        let dt = 0.01;
        let params = PenaltyParams::dynamic(1.0, 0.0, 10.0, 10.0, 1.0, f.mesh.h, dt);
        let ctx = AssemblyCtx {
            mesh: &f.mesh,
            class: &f.class,
            geom: &f.geom,
            dofs: &f.dofs,
            params: &params,
        };
        let c = [0.4, -0.3];
        let prev_sol = interpolate(
            &f.mesh,
            &f.class,
            &f.dofs,
            |_, _| c,
            |_, _| (0.0, [0.0, 0.0]),
        );
        let prev = CarriedVelocity {
            mesh: &f.mesh,
            class: &f.class,
            dofs: &f.dofs,
            sol: &prev_sol,
            poly: &f.poly,
        };
        let mut rhs = vec![0.0; f.dofs.total()];
        assemble_rhs_dynamic(&ctx, &prev, &f.poly, &mut rhs).unwrap();
        let dot: f64 = rhs.iter().zip(&prev_sol).map(|(a, b)| a * b).sum();
        let expect = (c[0] * c[0] + c[1] * c[1]) / dt;
        assert_relative_eq!(dot, expect, epsilon = 1e-9 * expect);
    }

    #[test]
    fn dynamic_rhs_force_terms_telescope() {
        // Zero previous velocity: the rhs is the pure membrane force; paired
        // with a constant test field it telescopes to zero.
        let f = fixture(16, 150);
        let params = PenaltyParams::dynamic(1.0, 5.0, 10.0, 10.0, 1.0, f.mesh.h, 0.01);
        let ctx = AssemblyCtx {
            mesh: &f.mesh,
            class: &f.class,
            geom: &f.geom,
            dofs: &f.dofs,
            params: &params,
        };
        let zero = vec![0.0; f.dofs.total()];
        let prev = CarriedVelocity {
            mesh: &f.mesh,
            class: &f.class,
            dofs: &f.dofs,
            sol: &zero,
            poly: &f.poly,
        };
        let mut rhs = vec![0.0; f.dofs.total()];
        assemble_rhs_dynamic(&ctx, &prev, &f.poly, &mut rhs).unwrap();
        let ones = interpolate(
            &f.mesh,
            &f.class,
            &f.dofs,
            |_, _| [1.0, 1.0],
            |_, _| (0.0, [0.0, 0.0]),
        );
        let dot: f64 = rhs.iter().zip(&ones).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-10, "{dot:.3e}");

        // Consistency: the same rhs reproduces the vertex forces paired with
        // averaged basis evaluations.
        let forces = f.poly.force_coefficients(params.kappa);
        let eval = FeEval::new(&f.mesh, &f.class, &f.dofs);
        let test = interpolate(
            &f.mesh,
            &f.class,
            &f.dofs,
            |_, p| [p[0], p[1] * p[0]],
            |_, _| (0.0, [0.0, 0.0]),
        );
        let mut expect = 0.0;
        for (j, g) in forces.iter().enumerate() {
            let v = eval.vel_avg_at(f.poly.point(j), &test).unwrap();
            expect += g[0] * v[0] + g[1] * v[1];
        }
        let dot: f64 = rhs.iter().zip(&test).map(|(a, b)| a * b).sum();
        assert_relative_eq!(dot, expect, epsilon = 1e-10 * expect.abs().max(1.0));
    }

    #[test]
    fn mean_constraint_column_integrates_pressure() {
        let f = fixture(16, 150);
        let params = PenaltyParams::steady(1.0, 10.0, f.mesh.h);
        let ctx = AssemblyCtx {
            mesh: &f.mesh,
            class: &f.class,
            geom: &f.geom,
            dofs: &f.dofs,
            params: &params,
        };
        let mut mat = SystemMatrix::new(f.dofs.total());
        assemble_mean_constraint(&ctx, &mut mat);
        // lambda row applied to the constant pressure 1 integrates |Omega|.
        let sol = interpolate(
            &f.mesh,
            &f.class,
            &f.dofs,
            |_, _| [0.0, 0.0],
            |_, _| (1.0, [0.0, 0.0]),
        );
        let y = mat.apply(&sol);
        assert_relative_eq!(y[f.dofs.mean_constraint_dof()], 1.0, epsilon = 1e-12);
    }
}
