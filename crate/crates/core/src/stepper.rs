//! Time integration: per step, rebuild the cut geometry on the current
//! interface, assemble and solve the saddle-point system, move the interface
//! with the averaged vertex velocities, and account the energy budget.

use crate::assembly::{
    assemble_system_dynamic, penalty_energies, AssemblyCtx, CarriedVelocity, PenaltyParams,
    SystemMatrix,
};
use crate::classify::{classify_elements, Classification};
use crate::config::{RichardsonConfig, RunConfig};
use crate::cutcell::{build_cut_geometry, CutGeometry};
use crate::diagnostics::{richardson_ratio, velocity_l2_difference};
use crate::error::{Error, Result};
use crate::interface::InterfacePolygon;
use crate::mesh::Mesh;
use crate::solver::factor;
use crate::spaces::{DofMap, FeEval};
use std::sync::Arc;

/// Geometry a solution vector lives on: the interface position the system
/// was assembled with and the derived classification, quadrature, and
/// numbering.
pub struct SolveGeometry {
    pub polygon: InterfacePolygon,
    pub class: Classification,
    pub geom: CutGeometry,
    pub dofs: DofMap,
}

impl SolveGeometry {
    pub fn build(mesh: &Mesh, polygon: InterfacePolygon) -> Result<SolveGeometry> {
        let class = classify_elements(mesh, &polygon)?;
        let geom = build_cut_geometry(mesh, &class, &polygon)?;
        let dofs = DofMap::build(mesh, &class);
        Ok(SolveGeometry {
            polygon,
            class,
            geom,
            dofs,
        })
    }
}

/// State after `step` backward-Euler steps: the interface position and the
/// coefficient vector of the latest solve (zeros before the first step).
pub struct DiscreteState {
    pub step: usize,
    pub time: f64,
    /// Current interface.
    pub polygon: InterfacePolygon,
    /// Geometry the coefficients were solved on (one step behind `polygon`
    /// once the run is moving).
    pub geometry: Arc<SolveGeometry>,
    pub sol: Vec<f64>,
}

impl DiscreteState {
    pub fn initial(mesh: &Mesh, polygon: InterfacePolygon) -> Result<DiscreteState> {
        let geometry = Arc::new(SolveGeometry::build(mesh, polygon.clone())?);
        let sol = vec![0.0; geometry.dofs.total()];
        Ok(DiscreteState {
            step: 0,
            time: 0.0,
            polygon,
            geometry,
            sol,
        })
    }

    /// The carried-over velocity field defined by this state.
    pub fn carried<'a>(&'a self, mesh: &'a Mesh) -> CarriedVelocity<'a> {
        CarriedVelocity {
            mesh,
            class: &self.geometry.class,
            dofs: &self.geometry.dofs,
            sol: &self.sol,
            poly: &self.geometry.polygon,
        }
    }
}

/// Per-step energy accounting. `slack` is the margin of the per-step energy
/// inequality (nonnegative up to roundoff for the semi-implicit scheme).
#[derive(Debug, Clone, Copy)]
pub struct EnergyRecord {
    pub step: usize,
    pub time: f64,
    pub kinetic: f64,
    pub elastic: f64,
    pub total: f64,
    pub slack: f64,
    pub area: f64,
    pub area_deviation: f64,
    /// Squared L2 norm of the velocity increment.
    pub velocity_increment: f64,
    /// Viscous dissipation of the step, `dt mu |eps(u)|^2`.
    pub strain_dissipation: f64,
    /// Squared reference norm of the tangent increment, times kappa/2.
    pub tangent_increment: f64,
    /// Sum of all penalty and face-jump forms, times dt.
    pub penalty_total: f64,
}

impl EnergyRecord {
    fn initial(state: &DiscreteState, kappa: f64, area0: f64) -> EnergyRecord {
        let elastic = state.polygon.membrane_energy(kappa);
        EnergyRecord {
            step: 0,
            time: 0.0,
            kinetic: 0.0,
            elastic,
            total: elastic,
            slack: f64::NAN,
            area: area0,
            area_deviation: 0.0,
            velocity_increment: 0.0,
            strain_dissipation: 0.0,
            tangent_increment: 0.0,
            penalty_total: 0.0,
        }
    }
}

/// Squared reference-norm of the difference of segment tangents.
fn tangent_diff_sq(a: &InterfacePolygon, b: &InterfacePolygon) -> f64 {
    let mut acc = 0.0;
    for j in 0..a.m() {
        let ta = a.tangent(j);
        let tb = b.tangent(j);
        let d = [tb[0] - ta[0], tb[1] - ta[1]];
        acc += (d[0] * d[0] + d[1] * d[1]) * a.ref_len(j);
    }
    acc
}

pub struct StepOutcome {
    pub state: DiscreteState,
    pub record: EnergyRecord,
}

/// Advance one backward-Euler step from `state` on the geometry of its
/// current interface.
pub fn step(mesh: &Mesh, state: &DiscreteState, cfg: &RunConfig) -> Result<StepOutcome> {
    let params = PenaltyParams::dynamic(
        cfg.mu,
        cfg.kappa,
        cfg.gamma1,
        cfg.gamma2,
        cfg.nu as f64,
        mesh.h,
        cfg.dt,
    );
    let geometry = Arc::new(SolveGeometry::build(mesh, state.polygon.clone())?);
    let ctx = AssemblyCtx {
        mesh,
        class: &geometry.class,
        geom: &geometry.geom,
        dofs: &geometry.dofs,
        params: &params,
    };
    let prev = state.carried(mesh);
    let (mat, rhs) = assemble_system_dynamic(&ctx, &prev, &geometry.polygon)?;
    let fac = factor(&mat, Some(&geometry.dofs))?;
    let sol = fac.solve(&rhs)?;
    fac.check_residual(&sol, &rhs, 1e-9)?;

    // Move the interface with the averaged vertex velocities of the new
    // solution.
    let eval = FeEval::new(mesh, &geometry.class, &geometry.dofs);
    let mut vel = Vec::with_capacity(state.polygon.m());
    for j in 0..state.polygon.m() {
        vel.push(eval.vel_avg_at(state.polygon.point(j), &sol)?);
    }
    let new_polygon = state.polygon.advect(&vel, cfg.dt, mesh.h)?;

    // Energy budget, with every term integrated by the assembly quadrature.
    let mut kin_new = 0.0;
    let mut kin_old = 0.0;
    let mut increment = 0.0;
    for elem in 0..mesh.n_elements() {
        for side in 1..=2usize {
            let Some(q) = geometry.geom.bulk[elem][side - 1].as_ref() else {
                continue;
            };
            for (pt, &w) in q.points.iter().zip(&q.weights) {
                let un = eval.vel_value(side, elem, *pt, &sol);
                let uo = prev.velocity(*pt)?;
                kin_new += w * (un[0] * un[0] + un[1] * un[1]);
                kin_old += w * (uo[0] * uo[0] + uo[1] * uo[1]);
                let d = [un[0] - uo[0], un[1] - uo[1]];
                increment += w * (d[0] * d[0] + d[1] * d[1]);
            }
        }
    }
    let pen = penalty_energies(&ctx, &sol)?;
    let elastic_old = state.polygon.membrane_energy(cfg.kappa);
    let elastic_new = new_polygon.membrane_energy(cfg.kappa);
    let tangent_inc = 0.5 * cfg.kappa * tangent_diff_sq(&state.polygon, &new_polygon);
    let penalty_total = cfg.dt
        * (params.gamma1 * params.mu / params.h * (pen.interface_jump + pen.boundary)
            + params.gamma2 * params.h / params.dt
                * (pen.interface_normal_jump + pen.boundary_normal)
            + params.gamma_u() * (pen.ghost_velocity[0] + pen.ghost_velocity[1])
            + params.gamma_p() * (pen.ghost_pressure[0] + pen.ghost_pressure[1]));
    let energy_old = 0.5 * kin_old + elastic_old;
    let energy_new = 0.5 * kin_new + elastic_new;
    let bound = energy_old - 0.5 * increment + tangent_inc + penalty_total;
    let slack = bound - energy_new;

    let time_new = (state.step + 1) as f64 * cfg.dt;
    let record = EnergyRecord {
        step: state.step + 1,
        time: time_new,
        kinetic: 0.5 * kin_new,
        elastic: elastic_new,
        total: energy_new,
        slack,
        area: new_polygon.enclosed_area(),
        area_deviation: 0.0, // filled by the run loop
        velocity_increment: increment,
        strain_dissipation: cfg.dt * pen.strain,
        tangent_increment: tangent_inc,
        penalty_total,
    };
    Ok(StepOutcome {
        state: DiscreteState {
            step: state.step + 1,
            time: time_new,
            polygon: new_polygon,
            geometry,
            sol,
        },
        record,
    })
}

/// Recompute the per-step energy-budget slack of a completed step (the
/// quantity recorded by the run loop).
pub fn energy_budget_slack(
    mesh: &Mesh,
    before: &DiscreteState,
    after: &DiscreteState,
    cfg: &RunConfig,
) -> Result<f64> {
    debug_assert_eq!(before.step + 1, after.step);
    let params = PenaltyParams::dynamic(
        cfg.mu,
        cfg.kappa,
        cfg.gamma1,
        cfg.gamma2,
        cfg.nu as f64,
        mesh.h,
        cfg.dt,
    );
    let ctx = AssemblyCtx {
        mesh,
        class: &after.geometry.class,
        geom: &after.geometry.geom,
        dofs: &after.geometry.dofs,
        params: &params,
    };
    let prev = before.carried(mesh);
    let eval = FeEval::new(mesh, &after.geometry.class, &after.geometry.dofs);
    let mut kin_new = 0.0;
    let mut kin_old = 0.0;
    let mut increment = 0.0;
    for elem in 0..mesh.n_elements() {
        for side in 1..=2usize {
            let Some(q) = after.geometry.geom.bulk[elem][side - 1].as_ref() else {
                continue;
            };
            for (pt, &w) in q.points.iter().zip(&q.weights) {
                let un = eval.vel_value(side, elem, *pt, &after.sol);
                let uo = prev.velocity(*pt)?;
                kin_new += w * (un[0] * un[0] + un[1] * un[1]);
                kin_old += w * (uo[0] * uo[0] + uo[1] * uo[1]);
                let d = [un[0] - uo[0], un[1] - uo[1]];
                increment += w * (d[0] * d[0] + d[1] * d[1]);
            }
        }
    }
    let pen = penalty_energies(&ctx, &after.sol)?;
    let penalty_total = cfg.dt
        * (params.gamma1 * params.mu / params.h * (pen.interface_jump + pen.boundary)
            + params.gamma2 * params.h / params.dt
                * (pen.interface_normal_jump + pen.boundary_normal)
            + params.gamma_u() * (pen.ghost_velocity[0] + pen.ghost_velocity[1])
            + params.gamma_p() * (pen.ghost_pressure[0] + pen.ghost_pressure[1]));
    let energy_old = 0.5 * kin_old + before.polygon.membrane_energy(cfg.kappa);
    let energy_new = 0.5 * kin_new + after.polygon.membrane_energy(cfg.kappa);
    let tangent_inc = 0.5 * cfg.kappa * tangent_diff_sq(&before.polygon, &after.polygon);
    Ok(energy_old - 0.5 * increment + tangent_inc + penalty_total - energy_new)
}

/// How a run ended.
#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    /// Blow-up diagnosed: the energy passed 1e6 of its initial value or the
    /// geometry failed (vertex escape, oversized move, self-intersection).
    Unstable { step: usize, reason: String },
}

pub struct RunSummary {
    pub status: RunStatus,
    pub records: Vec<EnergyRecord>,
    /// (step index, interface) at the requested snapshot times, always
    /// including the initial interface.
    pub snapshots: Vec<(usize, InterfacePolygon)>,
    pub final_state: DiscreteState,
    /// Matrix of the first step when requested by the config.
    pub first_matrix: Option<SystemMatrix>,
}

/// Smallest segment count for which the sampled initial polygon satisfies
/// the max-chord < h/2 rule.
pub fn auto_segment_count(cfg: &RunConfig, h: f64) -> Result<usize> {
    if let Some(m) = cfg.m {
        return Ok(m);
    }
    let probe = InterfacePolygon::sample_initial(&cfg.curve, 1024, cfg.total_len)?;
    let mut m = ((2.0 * probe.perimeter() / h).ceil() as usize).max(8);
    loop {
        let poly = InterfacePolygon::sample_initial(&cfg.curve, m, cfg.total_len)?;
        if poly.max_chord_len() < 0.5 * h {
            return Ok(m);
        }
        m += (m / 20).max(1);
        if m > 1_000_000 {
            return Err(Error::Config(
                "cannot satisfy the max-chord rule with a reasonable segment count".into(),
            ));
        }
    }
}

/// Run a configured experiment to its final time or to a diagnosed
/// instability.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let mesh = Mesh::build(cfg.n_cells)?;
    let m = auto_segment_count(cfg, mesh.h)?;
    let polygon = InterfacePolygon::sample_initial(&cfg.curve, m, cfg.total_len)?;
    if polygon.max_chord_len() >= 0.5 * mesh.h {
        return Err(Error::Config(format!(
            "m = {m} leaves a chord of {:.3e}, above h/2 = {:.3e}",
            polygon.max_chord_len(),
            0.5 * mesh.h
        )));
    }
    let mut state = DiscreteState::initial(&mesh, polygon)?;
    let area0 = state.polygon.enclosed_area();
    let mut records = vec![EnergyRecord::initial(&state, cfg.kappa, area0)];
    let energy0 = records[0].total;
    let mut snapshots = vec![(0, state.polygon.clone())];
    let snapshot_steps: Vec<usize> = cfg
        .snapshot_times
        .iter()
        .map(|&t| (t / cfg.dt).round() as usize)
        .collect();
    let mut first_matrix = None;

    let n_steps = cfg.steps();
    let mut status = RunStatus::Completed;
    for k in 1..=n_steps {
        if cfg.dump_matrix && k == 1 {
            // Re-assemble the first system for the dump without disturbing
            // the run.
            let params = PenaltyParams::dynamic(
                cfg.mu,
                cfg.kappa,
                cfg.gamma1,
                cfg.gamma2,
                cfg.nu as f64,
                mesh.h,
                cfg.dt,
            );
            let geometry = SolveGeometry::build(&mesh, state.polygon.clone())?;
            let ctx = AssemblyCtx {
                mesh: &mesh,
                class: &geometry.class,
                geom: &geometry.geom,
                dofs: &geometry.dofs,
                params: &params,
            };
            let prev = state.carried(&mesh);
            let (mat, _) = assemble_system_dynamic(&ctx, &prev, &geometry.polygon)?;
            first_matrix = Some(mat);
        }
        match step(&mesh, &state, cfg) {
            Ok(outcome) => {
                let mut record = outcome.record;
                record.area_deviation = (record.area - area0) / area0;
                let diverged = record.total > 1e6 * energy0;
                records.push(record);
                state = outcome.state;
                if snapshot_steps.contains(&k) {
                    snapshots.push((k, state.polygon.clone()));
                }
                if diverged {
                    status = RunStatus::Unstable {
                        step: k,
                        reason: format!(
                            "energy {:.3e} exceeds 1e6 x initial {:.3e}",
                            record.total, energy0
                        ),
                    };
                    break;
                }
            }
            Err(e) => {
                let e = e.at_step(k);
                status = RunStatus::Unstable {
                    step: k,
                    reason: e.to_string(),
                };
                break;
            }
        }
    }
    Ok(RunSummary {
        status,
        records,
        snapshots,
        final_state: state,
        first_matrix,
    })
}

/// Signed relative change of the enclosed area at a probe time.
pub fn area_deviation_at(records: &[EnergyRecord], t_probe: f64) -> Option<f64> {
    records
        .iter()
        .find(|r| (r.time - t_probe).abs() < 1e-9)
        .map(|r| r.area_deviation)
}

pub struct RichardsonResult {
    /// Per halving level: the time step used.
    pub dts: Vec<f64>,
    /// L2 differences between consecutive levels at the probe time.
    pub differences: Vec<f64>,
    /// `log2` ratios of consecutive differences; `None` where degenerate.
    pub ratios: Vec<Option<f64>>,
}

/// Estimate the temporal order by comparing velocity fields at the probe
/// time under repeated halving of the time step. All fields are integrated
/// on the finest run's final geometry; each field selects its side by its
/// own interface.
pub fn richardson_study(cfg: &RichardsonConfig) -> Result<RichardsonResult> {
    cfg.validate()?;
    let mesh = Mesh::build(cfg.n_cells)?;
    let mut states = Vec::new();
    let mut dts = Vec::new();
    for level in 0..=cfg.halvings {
        let rc = cfg.run_config(level);
        let summary = run(&rc)?;
        if let RunStatus::Unstable { step, reason } = &summary.status {
            return Err(Error::StepFailure {
                step: *step,
                reason: format!("halving level {level}: {reason}"),
            });
        }
        dts.push(rc.dt);
        states.push(summary.final_state);
    }
    // Reference geometry: the finest run's final interface.
    let reference = SolveGeometry::build(&mesh, states.last().unwrap().polygon.clone())?;
    let mut differences = Vec::new();
    for pair in states.windows(2) {
        let a = pair[0].carried(&mesh);
        let b = pair[1].carried(&mesh);
        let d = velocity_l2_difference(
            &reference.geom,
            &mut |p| a.velocity(p),
            &mut |p| b.velocity(p),
        )?;
        differences.push(d);
    }
    let ratios = differences
        .windows(2)
        .map(|w| richardson_ratio(w[0], w[1]))
        .collect();
    Ok(RichardsonResult {
        dts,
        differences,
        ratios,
    })
}
