//! Intersection of the interface polygon with the background grid.
//!
//! The polygon is first split into *pieces*: maximal sub-segments that do not
//! cross any grid line. Pieces are computed once per geometry so that their
//! reference intervals tile `[0, L]` exactly and every piece has a unique
//! owning element. Chains of pieces inside one element then split the square
//! into sub-polygons per side via a boundary traversal.

use crate::error::{Error, Result};
use crate::interface::InterfacePolygon;
use crate::mesh::{Mesh, EPS_GEO};
use crate::quadrature::{line_rule, polygon_rule, shoelace, square_rule};

/// Sub-polygons smaller than this fraction of the element area are dropped;
/// ghost penalties carry the stability burden for arbitrarily small cuts.
pub const SLIVER_FRACTION: f64 = 1e-10;

/// A maximal straight run of the interface that stays inside one element.
#[derive(Debug, Clone, Copy)]
pub struct Piece {
    /// Polygon segment index.
    pub seg: usize,
    /// Reference interval `[s0, s1]`, a sub-interval of `[s_j, s_{j+1}]`.
    pub s0: f64,
    pub s1: f64,
    pub a: [f64; 2],
    pub b: [f64; 2],
    /// Owning element.
    pub element: usize,
    /// True when the piece runs along a grid line; such pieces do not cut
    /// either neighbor.
    pub grazing: bool,
}

fn snap_to_grid(x: f64, h: f64) -> f64 {
    let k = (x / h).round();
    let g = k * h;
    if (x - g).abs() <= EPS_GEO {
        g
    } else {
        x
    }
}

/// Split every polygon segment at grid-line crossings and assign each piece
/// to the element containing its midpoint.
pub fn interface_pieces(mesh: &Mesh, poly: &InterfacePolygon) -> Result<Vec<Piece>> {
    let h = mesh.h;
    let n = mesh.n;
    let mut pieces = Vec::with_capacity(2 * poly.m());
    for j in 0..poly.m() {
        let p = poly.point(j);
        let q = poly.point(j + 1);
        let chord = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt();
        if chord < 1e-9 {
            return Err(Error::Geometry(format!(
                "interface segment {j} has near-zero length {chord:.3e}"
            )));
        }
        let mut ts = vec![0.0, 1.0];
        for axis in 0..2 {
            let (lo, hi) = (p[axis].min(q[axis]), p[axis].max(q[axis]));
            if hi - lo <= EPS_GEO {
                continue;
            }
            let k0 = (lo / h).ceil() as i64;
            let k1 = (hi / h).floor() as i64;
            for k in k0..=k1 {
                let t = (k as f64 * h - p[axis]) / (q[axis] - p[axis]);
                if t > 0.0 && t < 1.0 {
                    ts.push(t);
                }
            }
        }
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Merge parameters closer than 1e-12; snap the first and last to the
        // endpoints.
        let mut merged: Vec<f64> = vec![0.0];
        for &t in &ts[1..] {
            let last = *merged.last().unwrap();
            if t - last <= 1e-12 {
                continue;
            }
            if 1.0 - t <= 1e-12 {
                continue;
            }
            merged.push(t);
        }
        merged.push(1.0);

        let sj = poly.ref_coord(j);
        let sj1 = poly.ref_coord(j + 1);
        let at = |t: f64| -> [f64; 2] {
            if t == 0.0 {
                p
            } else if t == 1.0 {
                q
            } else {
                [
                    snap_to_grid(p[0] + t * (q[0] - p[0]), h),
                    snap_to_grid(p[1] + t * (q[1] - p[1]), h),
                ]
            }
        };
        let sat = |t: f64| -> f64 {
            if t == 0.0 {
                sj
            } else if t == 1.0 {
                sj1
            } else {
                sj + t * (sj1 - sj)
            }
        };
        for w in merged.windows(2) {
            let a = at(w[0]);
            let b = at(w[1]);
            let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
            let on_x = (a[0] - b[0]).abs() <= 2.0 * EPS_GEO
                && (a[0] / h - (a[0] / h).round()).abs() * h <= EPS_GEO;
            let on_y = (a[1] - b[1]).abs() <= 2.0 * EPS_GEO
                && (a[1] / h - (a[1] / h).round()).abs() * h <= EPS_GEO;
            let clamp = |v: i64| -> usize { v.clamp(0, n as i64 - 1) as usize };
            let (ex, ey, grazing) = if on_x {
                let k = (a[0] / h).round() as i64;
                (clamp(k - 1), clamp((mid[1] / h).floor() as i64), true)
            } else if on_y {
                let k = (a[1] / h).round() as i64;
                (clamp((mid[0] / h).floor() as i64), clamp(k - 1), true)
            } else {
                (
                    clamp((mid[0] / h).floor() as i64),
                    clamp((mid[1] / h).floor() as i64),
                    false,
                )
            };
            pieces.push(Piece {
                seg: j,
                s0: sat(w[0]),
                s1: sat(w[1]),
                a,
                b,
                element: mesh.elem_id(ex, ey),
                grazing,
            });
        }
    }
    Ok(pieces)
}

/// Pieces inside one element stitched into polylines. Each chain enters and
/// leaves through the element boundary.
fn chains_for_element(pieces: &[&Piece]) -> Vec<Vec<[f64; 2]>> {
    if pieces.is_empty() {
        return Vec::new();
    }
    // Pieces arrive sorted by reference coordinate. Consecutive pieces with
    // matching reference endpoints belong to the same chain.
    let mut runs: Vec<Vec<&Piece>> = Vec::new();
    let mut current: Vec<&Piece> = vec![pieces[0]];
    for &p in &pieces[1..] {
        let prev = *current.last().unwrap();
        if p.s0 == prev.s1 {
            current.push(p);
        } else {
            runs.push(std::mem::take(&mut current));
            current.push(p);
        }
    }
    runs.push(current);
    // The polygon is closed: a run ending at s = L continues at s = 0.
    runs_to_chains(&mut runs);
    runs.iter()
        .map(|run| {
            let mut pts = Vec::with_capacity(run.len() + 1);
            pts.push(run[0].a);
            for p in run {
                pts.push(p.b);
            }
            pts
        })
        .collect()
}

/// Merge the first and last run when the chain wraps through s = 0.
fn runs_to_chains(runs: &mut Vec<Vec<&Piece>>) {
    if runs.len() < 2 {
        return;
    }
    let first = &runs[0];
    let last = runs.last().unwrap();
    let fa = first[0].a;
    let lb = last.last().unwrap().b;
    let first_starts_at_zero = first[0].s0 == 0.0 && first[0].seg == 0;
    let same_point = (fa[0] - lb[0]).abs() <= EPS_GEO && (fa[1] - lb[1]).abs() <= EPS_GEO;
    if first_starts_at_zero && same_point {
        let mut tail = runs.remove(0);
        let last = runs.last_mut().unwrap();
        last.append(&mut tail);
    }
}

/// Perimeter coordinate of a boundary point, counterclockwise from the
/// lower-left corner, in `[0, 4h)`.
fn perim_coord(x0: f64, y0: f64, h: f64, p: [f64; 2]) -> f64 {
    let d_bottom = (p[1] - y0).abs();
    let d_right = (p[0] - (x0 + h)).abs();
    let d_top = (p[1] - (y0 + h)).abs();
    let d_left = (p[0] - x0).abs();
    let m = d_bottom.min(d_right).min(d_top).min(d_left);
    let u = if m == d_bottom {
        p[0] - x0
    } else if m == d_right {
        h + (p[1] - y0)
    } else if m == d_top {
        2.0 * h + (x0 + h - p[0])
    } else {
        3.0 * h + (y0 + h - p[1])
    };
    u.rem_euclid(4.0 * h)
}

/// Split the square with corner `(x0, y0)` by the given chains and return the
/// sub-polygons on one side. Chains are oriented along the polygon; the
/// enclosed side (2) keeps that orientation, the exterior side (1) reverses
/// it.
fn element_regions(
    x0: f64,
    y0: f64,
    h: f64,
    chains: &[Vec<[f64; 2]>],
    side: usize,
) -> Result<Vec<Vec<[f64; 2]>>> {
    let wrap = 4.0 * h;
    let tol_u = 1e-9 * h;
    let cyc = |d: f64| -> f64 {
        let d = d.rem_euclid(wrap);
        if d > wrap - tol_u {
            0.0
        } else {
            d
        }
    };
    let entry = |c: &Vec<[f64; 2]>| -> [f64; 2] {
        if side == 2 {
            c[0]
        } else {
            *c.last().unwrap()
        }
    };
    let exit = |c: &Vec<[f64; 2]>| -> [f64; 2] {
        if side == 2 {
            *c.last().unwrap()
        } else {
            c[0]
        }
    };
    for c in chains {
        for p in [c[0], *c.last().unwrap()] {
            let on = (p[0] - x0).abs() <= 1e-9
                || (p[0] - (x0 + h)).abs() <= 1e-9
                || (p[1] - y0).abs() <= 1e-9
                || (p[1] - (y0 + h)).abs() <= 1e-9;
            if !on {
                return Err(Error::Geometry(
                    "interface component closed inside a single element".into(),
                ));
            }
        }
    }
    let u_in: Vec<f64> = chains.iter().map(|c| perim_coord(x0, y0, h, entry(c))).collect();
    let corners = [
        [x0, y0],
        [x0 + h, y0],
        [x0 + h, y0 + h],
        [x0, y0 + h],
    ];
    let mut used = vec![false; chains.len()];
    let mut regions = Vec::new();
    for start in 0..chains.len() {
        if used[start] {
            continue;
        }
        let mut pts: Vec<[f64; 2]> = Vec::new();
        let mut c = start;
        loop {
            used[c] = true;
            if side == 2 {
                pts.extend(chains[c].iter().copied());
            } else {
                pts.extend(chains[c].iter().rev().copied());
            }
            let u_exit = perim_coord(x0, y0, h, exit(&chains[c]));
            // Next chain entry encountered while walking the square boundary
            // counterclockwise.
            let mut next = usize::MAX;
            let mut best = f64::INFINITY;
            for (k, &u) in u_in.iter().enumerate() {
                if used[k] && k != start {
                    continue;
                }
                let d = cyc(u - u_exit);
                if d < best {
                    best = d;
                    next = k;
                }
            }
            if next == usize::MAX {
                return Err(Error::Geometry("element traversal lost its way".into()));
            }
            // Corners passed along the arc.
            let mut passed: Vec<(f64, [f64; 2])> = Vec::new();
            for (k, &corner) in corners.iter().enumerate() {
                let uc = k as f64 * h;
                let d = cyc(uc - u_exit);
                if d > tol_u && d < best - tol_u {
                    passed.push((d, corner));
                }
            }
            passed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            pts.extend(passed.into_iter().map(|(_, p)| p));
            if next == start {
                break;
            }
            c = next;
        }
        regions.push(pts);
    }

    // Clean up and drop slivers.
    let sliver = SLIVER_FRACTION * h * h;
    let mut out = Vec::new();
    for r in regions {
        let mut cleaned: Vec<[f64; 2]> = Vec::with_capacity(r.len());
        for p in r {
            if let Some(&last) = cleaned.last() {
                if (p[0] - last[0]).abs() <= EPS_GEO && (p[1] - last[1]).abs() <= EPS_GEO {
                    continue;
                }
            }
            cleaned.push(p);
        }
        while cleaned.len() > 1 {
            let f = cleaned[0];
            let l = *cleaned.last().unwrap();
            if (f[0] - l[0]).abs() <= EPS_GEO && (f[1] - l[1]).abs() <= EPS_GEO {
                cleaned.pop();
            } else {
                break;
            }
        }
        if cleaned.len() < 3 {
            continue;
        }
        let area = shoelace(&cleaned);
        if area < -1e-9 * h * h {
            return Err(Error::Geometry(format!(
                "element traversal produced a clockwise region (area {area:.3e})"
            )));
        }
        if area <= sliver {
            continue;
        }
        out.push(cleaned);
    }
    Ok(out)
}

/// Result of cutting one element with the interface.
#[derive(Debug, Clone)]
pub struct ElementCut {
    /// Sub-polygons on the exterior side.
    pub side1: Vec<Vec<[f64; 2]>>,
    /// Sub-polygons on the enclosed side.
    pub side2: Vec<Vec<[f64; 2]>>,
    /// Interface pieces owned by the element.
    pub pieces: Vec<Piece>,
}

/// Cut a single element against the polygon. Used for cut elements; the two
/// sides partition the square up to dropped slivers.
pub fn clip_element(mesh: &Mesh, elem: usize, poly: &InterfacePolygon) -> Result<ElementCut> {
    let pieces = interface_pieces(mesh, poly)?;
    let mine: Vec<Piece> = pieces
        .into_iter()
        .filter(|p| p.element == elem)
        .collect();
    clip_element_from_pieces(mesh, elem, &mine)
}

fn clip_element_from_pieces(mesh: &Mesh, elem: usize, mine: &[Piece]) -> Result<ElementCut> {
    let e = mesh.elements[elem];
    let h = mesh.h;
    let refs: Vec<&Piece> = mine.iter().filter(|p| !p.grazing).collect();
    if refs.is_empty() {
        return Err(Error::Geometry(format!(
            "element {elem} is not cut by the interface"
        )));
    }
    let chains = chains_for_element(&refs);
    let side1 = element_regions(e.x0, e.y0, h, &chains, 1)?;
    let side2 = element_regions(e.x0, e.y0, h, &chains, 2)?;
    let total: f64 = side1.iter().chain(side2.iter()).map(|p| shoelace(p)).sum();
    if (total - h * h).abs() > 1e-9 * h * h {
        return Err(Error::Geometry(format!(
            "element {elem}: cut sides sum to {total:.17e}, expected {:.17e}",
            h * h
        )));
    }
    Ok(ElementCut {
        side1,
        side2,
        pieces: mine.to_vec(),
    })
}

/// Bulk quadrature of one side of an element.
#[derive(Debug, Clone)]
pub struct SideQuad {
    /// Sub-polygons behind the rule (a single square for uncut elements).
    pub subpolys: Vec<Vec<[f64; 2]>>,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

/// Quadrature on one interface piece.
#[derive(Debug, Clone)]
pub struct InterfaceQuad {
    pub element: usize,
    pub poly_seg: usize,
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub s0: f64,
    pub s1: f64,
    /// Unit normal pointing from the exterior side into the enclosed side.
    pub normal: [f64; 2],
    pub points: [[f64; 2]; 3],
    pub weights: [f64; 3],
}

/// Quadrature on one ghost face.
#[derive(Debug, Clone)]
pub struct GhostFaceQuad {
    pub face: usize,
    pub elems: (usize, usize),
    pub normal: [f64; 2],
    pub points: [[f64; 2]; 3],
    pub weights: [f64; 3],
}

/// Quadrature on one outer-boundary edge.
#[derive(Debug, Clone)]
pub struct BoundaryEdgeQuad {
    pub element: usize,
    pub normal: [f64; 2],
    pub points: [[f64; 2]; 3],
    pub weights: [f64; 3],
}

/// All integration point sets for one interface position.
#[derive(Debug, Clone)]
pub struct CutGeometry {
    /// Per element, per side: bulk quadrature (None when the element is not
    /// active on that side).
    pub bulk: Vec<[Option<SideQuad>; 2]>,
    pub interface: Vec<InterfaceQuad>,
    pub ghost: [Vec<GhostFaceQuad>; 2],
    pub boundary: Vec<BoundaryEdgeQuad>,
}

impl CutGeometry {
    pub fn side_area(&self, side: usize) -> f64 {
        self.bulk
            .iter()
            .filter_map(|b| b[side - 1].as_ref())
            .flat_map(|q| q.weights.iter())
            .sum()
    }

    pub fn interface_length(&self) -> f64 {
        self.interface
            .iter()
            .flat_map(|s| s.weights.iter())
            .sum()
    }
}

use crate::classify::{Classification, ElementLabel};

/// Build all quadrature sets for the given classification.
pub fn build_cut_geometry(
    mesh: &Mesh,
    class: &Classification,
    poly: &InterfacePolygon,
) -> Result<CutGeometry> {
    let h = mesh.h;
    // Keep the outer ring of elements uncut so the weak Dirichlet terms
    // never see a cut element.
    let dist = poly.boundary_distance();
    if dist <= h {
        return Err(Error::Geometry(format!(
            "interface comes within {dist:.4e} of the outer boundary; needs more than h = {h:.4e}"
        )));
    }

    // Group pieces by element, keeping the global (reference) order.
    let mut by_elem: Vec<Vec<Piece>> = vec![Vec::new(); mesh.n_elements()];
    for p in &class.pieces {
        by_elem[p.element].push(*p);
    }

    let mut bulk: Vec<[Option<SideQuad>; 2]> = Vec::with_capacity(mesh.n_elements());
    for (k, e) in mesh.elements.iter().enumerate() {
        let entry = match class.labels[k] {
            ElementLabel::Interior1 | ElementLabel::Interior2 => {
                let (points, weights) = square_rule(e.x0, e.y0, h);
                let square = vec![
                    [e.x0, e.y0],
                    [e.x0 + h, e.y0],
                    [e.x0 + h, e.y0 + h],
                    [e.x0, e.y0 + h],
                ];
                let q = SideQuad {
                    subpolys: vec![square],
                    points,
                    weights,
                };
                if matches!(class.labels[k], ElementLabel::Interior1) {
                    [Some(q), None]
                } else {
                    [None, Some(q)]
                }
            }
            ElementLabel::Cut => {
                let cut = clip_element_from_pieces(mesh, k, &by_elem[k])?;
                let make = |polys: &Vec<Vec<[f64; 2]>>| -> Result<Option<SideQuad>> {
                    if polys.is_empty() {
                        return Ok(None);
                    }
                    let mut points = Vec::new();
                    let mut weights = Vec::new();
                    for p in polys {
                        let (pts, wts) = polygon_rule(p)?;
                        points.extend(pts);
                        weights.extend(wts);
                    }
                    Ok(Some(SideQuad {
                        subpolys: polys.clone(),
                        points,
                        weights,
                    }))
                };
                [make(&cut.side1)?, make(&cut.side2)?]
            }
        };
        bulk.push(entry);
    }

    let mut interface = Vec::with_capacity(class.pieces.len());
    for p in &class.pieces {
        let normal = poly.segment_normal(p.seg);
        let (points, weights) = line_rule(p.a, p.b);
        interface.push(InterfaceQuad {
            element: p.element,
            poly_seg: p.seg,
            a: p.a,
            b: p.b,
            s0: p.s0,
            s1: p.s1,
            normal,
            points,
            weights,
        });
    }

    let mut ghost = [Vec::new(), Vec::new()];
    for side in 0..2 {
        for &f in &class.ghost_faces[side] {
            let face = mesh.faces[f];
            let (points, weights) = line_rule(face.a, face.b);
            ghost[side].push(GhostFaceQuad {
                face: f,
                elems: (face.left, face.right.expect("ghost faces are interior")),
                normal: face.normal,
                points,
                weights,
            });
        }
    }

    let mut boundary = Vec::new();
    for face in &mesh.faces {
        if face.is_boundary() {
            if !matches!(class.labels[face.left], ElementLabel::Interior1) {
                return Err(Error::Geometry(format!(
                    "boundary element {} is not strictly exterior",
                    face.left
                )));
            }
            let (points, weights) = line_rule(face.a, face.b);
            boundary.push(BoundaryEdgeQuad {
                element: face.left,
                normal: face.normal,
                points,
                weights,
            });
        }
    }

    let geom = CutGeometry {
        bulk,
        interface,
        ghost,
        boundary,
    };

    // Partition invariants.
    let area = geom.side_area(1) + geom.side_area(2);
    if (area - 1.0).abs() > 1e-9 {
        return Err(Error::Geometry(format!(
            "bulk quadrature covers area {area:.17e}, expected 1"
        )));
    }
    let perim = geom.interface_length();
    let expected = poly.perimeter();
    if (perim - expected).abs() > 1e-9 * expected.max(1.0) {
        return Err(Error::Geometry(format!(
            "interface quadrature length {perim:.17e} does not match perimeter {expected:.17e}"
        )));
    }
    Ok(geom)
}
