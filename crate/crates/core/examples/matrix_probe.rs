use memstokes::assembly::*;
use memstokes::config::RunConfig;
use memstokes::interface::CurveSpec;
use memstokes::mesh::Mesh;
use memstokes::report::write_matrix_market;
use memstokes::stepper::{step, auto_segment_count, DiscreteState};
use memstokes::interface::InterfacePolygon;
use std::io::Write;

fn main() {
    let n = 32usize;
    let cfg = RunConfig {
        n_cells: n, m: None, dt: 0.01, t_final: 1.0, mu: 1.0, kappa: 6.0,
        gamma1: 10.0, gamma2: 10.0, nu: 1,
        curve: CurveSpec::Ellipse { a: 0.3, b: 0.4, center: [0.5, 0.5] },
        total_len: 1.0, snapshot_times: vec![], output_dir: None,
        field_dump: None, dump_matrix: false, dump_quadrature: false,
    };
    let mesh = Mesh::build(n).unwrap();
    let m = auto_segment_count(&cfg, mesh.h).unwrap();
    let poly = InterfacePolygon::sample_initial(&cfg.curve, m, 1.0).unwrap();
    let mut state = DiscreteState::initial(&mesh, poly).unwrap();
    for k in 1..=11 {
        match step(&mesh, &state, &cfg) {
            Ok(o) => state = o.state,
            Err(e) => { println!("failed early at {k}: {e}"); return; }
        }
    }
    let params = PenaltyParams::dynamic(1.0, 6.0, 10.0, 10.0, 1.0, mesh.h, 0.01);
    let g = memstokes::stepper::SolveGeometry::build(&mesh, state.polygon.clone()).unwrap();
    let ctx = AssemblyCtx { mesh: &mesh, class: &g.class, geom: &g.geom, dofs: &g.dofs, params: &params };
    let prev = state.carried(&mesh);
    let (mat, rhs) = assemble_system_dynamic(&ctx, &prev, &state.polygon).unwrap();
    write_matrix_market(std::path::Path::new("/tmp/failing.mtx"), &mat).unwrap();
    let mut f = std::fs::File::create("/tmp/failing_rhs.txt").unwrap();
    for v in &rhs { writeln!(f, "{v:.17e}").unwrap(); }
    println!("dumped dim {}", mat.dim);
}
