//! Element and face classification against the interface.
//!
//! Each element is either strictly exterior, strictly enclosed, or cut. An
//! element is cut exactly when the interface crosses its open interior with
//! positive length; touching an element only along its closed boundary does
//! not cut it. Ghost-face sets collect the faces between a cut element and
//! any element active on the same side.

use crate::cutcell::{interface_pieces, Piece};
use crate::error::{Error, Result};
use crate::interface::InterfacePolygon;
use crate::mesh::Mesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementLabel {
    /// Strictly inside the exterior subdomain.
    Interior1,
    /// Strictly inside the enclosed subdomain.
    Interior2,
    Cut,
}

#[derive(Debug, Clone)]
pub struct Classification {
    pub labels: Vec<ElementLabel>,
    /// Interface pieces in reference order; shared with the cut-geometry
    /// construction so both stay consistent.
    pub pieces: Vec<Piece>,
    /// Per side: whether each element carries degrees of freedom.
    pub active: [Vec<bool>; 2],
    pub active_elems: [Vec<usize>; 2],
    pub interior_elems: [Vec<usize>; 2],
    pub cut_elems: Vec<usize>,
    /// Per side: indices into `mesh.faces` of the ghost-penalty faces.
    pub ghost_faces: [Vec<usize>; 2],
}

impl Classification {
    pub fn is_active(&self, side: usize, elem: usize) -> bool {
        self.active[side - 1][elem]
    }

    pub fn label(&self, elem: usize) -> ElementLabel {
        self.labels[elem]
    }
}

pub fn classify_elements(mesh: &Mesh, poly: &InterfacePolygon) -> Result<Classification> {
    if poly.boundary_distance() <= 0.0 {
        return Err(Error::Geometry(
            "interface touches or leaves the unit square".into(),
        ));
    }

    let pieces = interface_pieces(mesh, poly)?;
    let mut labels = vec![ElementLabel::Interior1; mesh.n_elements()];
    let mut is_cut = vec![false; mesh.n_elements()];
    for p in &pieces {
        if !p.grazing {
            is_cut[p.element] = true;
        }
    }
    for (k, e) in mesh.elements.iter().enumerate() {
        if is_cut[k] {
            labels[k] = ElementLabel::Cut;
        } else if poly.contains(e.center(mesh.h)) {
            labels[k] = ElementLabel::Interior2;
        }
    }

    let mut active = [vec![false; mesh.n_elements()], vec![false; mesh.n_elements()]];
    let mut active_elems = [Vec::new(), Vec::new()];
    let mut interior_elems = [Vec::new(), Vec::new()];
    let mut cut_elems = Vec::new();
    for (k, &label) in labels.iter().enumerate() {
        match label {
            ElementLabel::Interior1 => {
                active[0][k] = true;
                active_elems[0].push(k);
                interior_elems[0].push(k);
            }
            ElementLabel::Interior2 => {
                active[1][k] = true;
                active_elems[1].push(k);
                interior_elems[1].push(k);
            }
            ElementLabel::Cut => {
                active[0][k] = true;
                active[1][k] = true;
                active_elems[0].push(k);
                active_elems[1].push(k);
                cut_elems.push(k);
            }
        }
    }

    let mut ghost_faces = [Vec::new(), Vec::new()];
    for (f, face) in mesh.faces.iter().enumerate() {
        let Some(right) = face.right else { continue };
        let left = face.left;
        for side in 0..2 {
            let cut_left = labels[left] == ElementLabel::Cut;
            let cut_right = labels[right] == ElementLabel::Cut;
            if (cut_left && active[side][right]) || (cut_right && active[side][left]) {
                ghost_faces[side].push(f);
            }
        }
    }

    Ok(Classification {
        labels,
        pieces,
        active,
        active_elems,
        interior_elems,
        cut_elems,
        ghost_faces,
    })
}

/// Result of the cut-element connectivity diagnostic: every cut element must
/// reach a strictly interior element of each side through face neighbors
/// active on that side.
#[derive(Debug, Clone)]
pub struct ConnectivityReport {
    pub satisfied: bool,
    /// Longest shortest path (in face hops) from a cut element to an
    /// interior element, over both sides.
    pub worst_path_length: usize,
    /// (element, side) pairs that cannot reach an interior element within
    /// `max_path` hops.
    pub failures: Vec<(usize, usize)>,
}

pub fn cut_connectivity_report(
    mesh: &Mesh,
    class: &Classification,
    max_path: usize,
) -> ConnectivityReport {
    // Face-neighbor lists.
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); mesh.n_elements()];
    for face in &mesh.faces {
        if let Some(right) = face.right {
            neighbors[face.left].push(right);
            neighbors[right].push(face.left);
        }
    }

    let mut worst = 0usize;
    let mut failures = Vec::new();
    for side in 0..2 {
        // Multi-source BFS from the interior elements through elements
        // active on this side.
        let mut dist = vec![usize::MAX; mesh.n_elements()];
        let mut queue = std::collections::VecDeque::new();
        for &k in &class.interior_elems[side] {
            dist[k] = 0;
            queue.push_back(k);
        }
        while let Some(k) = queue.pop_front() {
            for &nb in &neighbors[k] {
                if class.active[side][nb] && dist[nb] == usize::MAX {
                    dist[nb] = dist[k] + 1;
                    queue.push_back(nb);
                }
            }
        }
        for &k in &class.cut_elems {
            if dist[k] == usize::MAX || dist[k] > max_path {
                failures.push((k, side + 1));
            }
            if dist[k] != usize::MAX {
                worst = worst.max(dist[k]);
            }
        }
    }
    ConnectivityReport {
        satisfied: failures.is_empty(),
        worst_path_length: worst,
        failures,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interface::CurveSpec;

    fn circle(r: f64, m: usize) -> InterfacePolygon {
        InterfacePolygon::sample_initial(
            &CurveSpec::Circle {
                r,
                center: [0.5, 0.5],
                cubic_reparam: false,
            },
            m,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn circle_n4_labels() {
        let mesh = Mesh::build(4).unwrap();
        let poly = circle(0.3, 64);
        let class = classify_elements(&mesh, &poly).unwrap();
        // Element [0, 0.25]^2: its nearest corner (0.25, 0.25) is at distance
        // 0.3536 > 0.3 from the center, so it is exterior.
        assert_eq!(class.label(mesh.elem_id(0, 0)), ElementLabel::Interior1);
        // Element [0.25, 0.5]^2 contains both inside and outside points.
        assert_eq!(class.label(mesh.elem_id(1, 1)), ElementLabel::Cut);
    }

    #[test]
    fn tiny_polygon_single_cut_element() {
        let mesh = Mesh::build(4).unwrap();
        let poly = InterfacePolygon::new(
            vec![[0.3, 0.3], [0.45, 0.3], [0.45, 0.45], [0.3, 0.45]],
            vec![0.0, 0.25, 0.5, 0.75, 1.0],
        )
        .unwrap();
        let class = classify_elements(&mesh, &poly).unwrap();
        assert_eq!(class.cut_elems.len(), 1);
        assert_eq!(class.interior_elems[1].len(), 0);
    }

    #[test]
    fn partition_and_ghost_symmetry() {
        let mesh = Mesh::build(8).unwrap();
        let poly = circle(0.3, 100);
        let class = classify_elements(&mesh, &poly).unwrap();
        for side in 0..2 {
            let split = class.interior_elems[side].len() + class.cut_elems.len();
            assert_eq!(split, class.active_elems[side].len());
            for &f in &class.ghost_faces[side] {
                let face = mesh.faces[f];
                let right = face.right.unwrap();
                let touches_cut = class.labels[face.left] == ElementLabel::Cut
                    || class.labels[right] == ElementLabel::Cut;
                assert!(touches_cut);
                assert!(class.active[side][face.left] && class.active[side][right]);
            }
        }
        let n1: usize = class
            .labels
            .iter()
            .filter(|&&l| l == ElementLabel::Interior1)
            .count();
        let n2 = class
            .labels
            .iter()
            .filter(|&&l| l == ElementLabel::Interior2)
            .count();
        assert_eq!(n1 + n2 + class.cut_elems.len(), mesh.n_elements());
    }

    #[test]
    fn labels_stable_under_start_vertex_shift() {
        let mesh = Mesh::build(8).unwrap();
        let poly = circle(0.3, 96);
        let class = classify_elements(&mesh, &poly).unwrap();
        let mut pts = poly.points().to_vec();
        pts.rotate_left(17);
        let shifted = InterfacePolygon::new(
            pts,
            (0..=96).map(|j| j as f64 / 96.0).collect(),
        )
        .unwrap();
        let class2 = classify_elements(&mesh, &shifted).unwrap();
        assert_eq!(class.labels, class2.labels);
    }

    #[test]
    fn connectivity_circle() {
        let mesh = Mesh::build(32).unwrap();
        let poly = circle(0.3, 400);
        let class = classify_elements(&mesh, &poly).unwrap();
        let report = cut_connectivity_report(&mesh, &class, 10);
        assert!(report.satisfied);
        assert!(report.worst_path_length <= 3, "{}", report.worst_path_length);

        // Cross-check the worst distance with a brute-force shortest path on
        // the element adjacency graph.
        let brute = brute_force_worst(&mesh, &class);
        assert_eq!(report.worst_path_length, brute);
    }

    #[test]
    fn connectivity_fails_without_interior() {
        let mesh = Mesh::build(4).unwrap();
        let poly = InterfacePolygon::new(
            vec![[0.3, 0.3], [0.45, 0.3], [0.45, 0.45], [0.3, 0.45]],
            vec![0.0, 0.25, 0.5, 0.75, 1.0],
        )
        .unwrap();
        let class = classify_elements(&mesh, &poly).unwrap();
        // No enclosed interior elements exist, so side 2 cannot be reached.
        let report = cut_connectivity_report(&mesh, &class, 10);
        assert!(!report.satisfied);
        assert!(report.failures.iter().any(|&(_, side)| side == 2));
    }

    #[test]
    fn adjacent_interior_gives_path_one() {
        let mesh = Mesh::build(8).unwrap();
        let poly = circle(0.3, 100);
        let class = classify_elements(&mesh, &poly).unwrap();
        let report = cut_connectivity_report(&mesh, &class, 10);
        assert!(report.satisfied);
        assert!(report.worst_path_length >= 1);
    }

    fn brute_force_worst(mesh: &Mesh, class: &Classification) -> usize {
        let n = mesh.n_elements();
        let mut worst = 0;
        for side in 0..2 {
            for &start in &class.cut_elems {
                // Dijkstra-style relaxation over the full adjacency matrix.
                let mut dist = vec![usize::MAX; n];
                dist[start] = 0;
                loop {
                    let mut changed = false;
                    for (f, face) in mesh.faces.iter().enumerate() {
                        let _ = f;
                        let Some(right) = face.right else { continue };
                        let (a, b) = (face.left, right);
                        if !(class.active[side][a] && class.active[side][b]) {
                            continue;
                        }
                        if dist[a] != usize::MAX && dist[a] + 1 < dist[b] {
                            dist[b] = dist[a] + 1;
                            changed = true;
                        }
                        if dist[b] != usize::MAX && dist[b] + 1 < dist[a] {
                            dist[a] = dist[b] + 1;
                            changed = true;
                        }
                    }
                    if !changed {
                        break;
                    }
                }
                let best = class.interior_elems[side]
                    .iter()
                    .map(|&k| dist[k])
                    .min()
                    .unwrap_or(usize::MAX);
                if best != usize::MAX {
                    worst = worst.max(best);
                }
            }
        }
        worst
    }

    #[test]
    fn cut_geometry_rejects_polygon_near_boundary() {
        let mesh = Mesh::build(8).unwrap();
        let poly = circle(0.45, 200);
        let class = classify_elements(&mesh, &poly).unwrap();
        assert!(matches!(
            crate::cutcell::build_cut_geometry(&mesh, &class, &poly),
            Err(Error::Geometry(_))
        ));
    }
}
