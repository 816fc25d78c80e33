//! File emitters: CSV ledgers and tables, SVG interface plots, grid-sampled
//! field dumps (CSV or legacy VTK), MatrixMarket matrix dumps, and the
//! quadrature debug dump.

use crate::assembly::SystemMatrix;
use crate::cutcell::CutGeometry;
use crate::diagnostics::ConvergenceRow;
use crate::error::Result;
use crate::interface::InterfacePolygon;
use crate::mesh::Mesh;
use crate::spaces::FeEval;
use crate::stepper::{DiscreteState, EnergyRecord};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.12e}")
    }
}

/// `energy.csv`: one row per time step.
pub fn write_energy_csv(path: &Path, records: &[EnergyRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "n,t,kinetic,elastic,total,slack,area,area_deviation")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.step,
            fmt(r.time),
            fmt(r.kinetic),
            fmt(r.elastic),
            fmt(r.total),
            fmt(r.slack),
            fmt(r.area),
            fmt(r.area_deviation)
        )?;
    }
    Ok(())
}

/// `area.csv`: the area column alone, for the conservation tables.
pub fn write_area_csv(path: &Path, records: &[EnergyRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "n,t,area,area_deviation")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{}",
            r.step,
            fmt(r.time),
            fmt(r.area),
            fmt(r.area_deviation)
        )?;
    }
    Ok(())
}

/// Convergence table CSV with the fixed column layout
/// `inv_h,L2,k_L2,H1,k_H1,Linf,k_Linf,W1inf,k_W1inf`.
pub fn write_convergence_csv(
    path: &Path,
    rows: &[ConvergenceRow],
    velocity: bool,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "inv_h,L2,k_L2,H1,k_H1,Linf,k_Linf,W1inf,k_W1inf")?;
    for r in rows {
        let (n, k) = if velocity {
            (r.velocity, r.velocity_rates)
        } else {
            (r.pressure, r.pressure_rates)
        };
        let kf = |o: Option<f64>| o.map(|v| format!("{v:.4}")).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.inv_h,
            fmt(n.l2),
            kf(k[0]),
            fmt(n.h1),
            kf(k[1]),
            fmt(n.linf),
            kf(k[2]),
            fmt(n.w1inf),
            kf(k[3])
        )?;
    }
    Ok(())
}

/// `richardson.csv`: one row per time-step pair.
pub fn write_richardson_csv(
    path: &Path,
    dts: &[f64],
    diffs: &[f64],
    ratios: &[Option<f64>],
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "dt,difference,ratio")?;
    for (k, &d) in diffs.iter().enumerate() {
        let ratio = ratios
            .get(k)
            .copied()
            .flatten()
            .map(|r| format!("{r:.6}"))
            .unwrap_or_else(|| "undefined".to_string());
        writeln!(w, "{},{},{}", fmt(dts[k]), fmt(d), ratio)?;
    }
    Ok(())
}

/// Interface snapshot CSV (re-readable for restarts).
pub fn write_interface_csv(path: &Path, poly: &InterfacePolygon) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    poly.write_csv(w)
}

/// Interface snapshot as an SVG polyline in the unit viewBox (y flipped so
/// the origin sits at the lower left).
pub fn write_interface_svg(path: &Path, poly: &InterfacePolygon) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 1 1">"#
    )?;
    let pts: Vec<String> = (0..poly.m())
        .map(|j| {
            let p = poly.point(j);
            format!("{:.6},{:.6}", p[0], 1.0 - p[1])
        })
        .collect();
    writeln!(
        w,
        r#"<polygon points="{}" fill="none" stroke="black" stroke-width="0.004"/>"#,
        pts.join(" ")
    )?;
    writeln!(w, "</svg>")?;
    Ok(())
}

/// Energy-versus-time SVG polyline.
pub fn write_energy_svg(path: &Path, records: &[EnergyRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let t_max = records.last().map(|r| r.time).unwrap_or(1.0).max(1e-12);
    let e_max = records.iter().map(|r| r.total).fold(0.0f64, f64::max).max(1e-12);
    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 1 1">"#
    )?;
    let pts: Vec<String> = records
        .iter()
        .map(|r| format!("{:.6},{:.6}", r.time / t_max, 1.0 - r.total / (1.05 * e_max)))
        .collect();
    writeln!(
        w,
        r#"<polyline points="{}" fill="none" stroke="black" stroke-width="0.004"/>"#,
        pts.join(" ")
    )?;
    writeln!(w, "</svg>")?;
    Ok(())
}

/// Velocity and pressure sampled at the element centers of the background
/// grid, written as CSV.
pub fn write_field_csv(path: &Path, mesh: &Mesh, state: &DiscreteState) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "x,y,side,ux,uy,p")?;
    let geom = &state.geometry;
    let eval = FeEval::new(mesh, &geom.class, &geom.dofs);
    for elem in 0..mesh.n_elements() {
        let c = mesh.elements[elem].center(mesh.h);
        let side = if geom.polygon.contains(c) { 2 } else { 1 };
        let k = match eval.locate(side, c) {
            Ok(k) => k,
            Err(_) => continue,
        };
        let u = eval.vel_value(side, k, c, &state.sol);
        let p = eval.pres_value(side, k, c, &state.sol);
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt(c[0]),
            fmt(c[1]),
            side,
            fmt(u[0]),
            fmt(u[1]),
            fmt(p)
        )?;
    }
    Ok(())
}

/// Velocity and pressure on the cell-center grid in legacy VTK
/// STRUCTURED_POINTS format.
pub fn write_field_vtk(path: &Path, mesh: &Mesh, state: &DiscreteState) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let n = mesh.n;
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "velocity and pressure on cell centers")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {n} {n} 1")?;
    writeln!(w, "ORIGIN {} {} 0", 0.5 * mesh.h, 0.5 * mesh.h)?;
    writeln!(w, "SPACING {} {} 1", mesh.h, mesh.h)?;
    writeln!(w, "POINT_DATA {}", n * n)?;
    let geom = &state.geometry;
    let eval = FeEval::new(mesh, &geom.class, &geom.dofs);
    let mut us = Vec::with_capacity(n * n);
    let mut ps = Vec::with_capacity(n * n);
    for elem in 0..mesh.n_elements() {
        let c = mesh.elements[elem].center(mesh.h);
        let side = if geom.polygon.contains(c) { 2 } else { 1 };
        match eval.locate(side, c) {
            Ok(k) => {
                us.push(eval.vel_value(side, k, c, &state.sol));
                ps.push(eval.pres_value(side, k, c, &state.sol));
            }
            Err(_) => {
                us.push([0.0, 0.0]);
                ps.push(0.0);
            }
        }
    }
    writeln!(w, "VECTORS velocity double")?;
    for u in &us {
        writeln!(w, "{} {} 0", fmt(u[0]), fmt(u[1]))?;
    }
    writeln!(w, "SCALARS pressure double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for p in &ps {
        writeln!(w, "{}", fmt(*p))?;
    }
    Ok(())
}

/// MatrixMarket coordinate dump of an assembled system (entries summed).
pub fn write_matrix_market(path: &Path, mat: &SystemMatrix) -> Result<()> {
    let mut summed = std::collections::BTreeMap::new();
    for &(r, c, v) in &mat.triplets {
        *summed.entry((r, c)).or_insert(0.0) += v;
    }
    summed.retain(|_, v| *v != 0.0);
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", mat.dim, mat.dim, summed.len())?;
    for ((r, c), v) in summed {
        writeln!(w, "{} {} {}", r + 1, c + 1, fmt(v))?;
    }
    Ok(())
}

/// Debug dump of every quadrature point: kind is bulk1, bulk2, interface,
/// boundary, ghost1, or ghost2.
pub fn write_quadrature_csv(path: &Path, geom: &CutGeometry) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "kind,element,x,y,weight")?;
    for (elem, sides) in geom.bulk.iter().enumerate() {
        for (s, q) in sides.iter().enumerate() {
            if let Some(q) = q {
                for (pt, wt) in q.points.iter().zip(&q.weights) {
                    writeln!(
                        w,
                        "bulk{},{},{},{},{}",
                        s + 1,
                        elem,
                        fmt(pt[0]),
                        fmt(pt[1]),
                        fmt(*wt)
                    )?;
                }
            }
        }
    }
    for seg in &geom.interface {
        for (pt, wt) in seg.points.iter().zip(&seg.weights) {
            writeln!(
                w,
                "interface,{},{},{},{}",
                seg.element,
                fmt(pt[0]),
                fmt(pt[1]),
                fmt(*wt)
            )?;
        }
    }
    for edge in &geom.boundary {
        for (pt, wt) in edge.points.iter().zip(&edge.weights) {
            writeln!(
                w,
                "boundary,{},{},{},{}",
                edge.element,
                fmt(pt[0]),
                fmt(pt[1]),
                fmt(*wt)
            )?;
        }
    }
    for side in 0..2 {
        for face in &geom.ghost[side] {
            for (pt, wt) in face.points.iter().zip(&face.weights) {
                writeln!(
                    w,
                    "ghost{},{},{},{},{}",
                    side + 1,
                    face.elems.0,
                    fmt(pt[0]),
                    fmt(pt[1]),
                    fmt(*wt)
                )?;
            }
        }
    }
    Ok(())
}
