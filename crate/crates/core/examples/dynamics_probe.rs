use memstokes::config::RunConfig;
use memstokes::interface::CurveSpec;
use memstokes::stepper::{run, RunStatus};

fn cfg(nu: u8, dt: f64, t_final: f64, kappa: f64, mu: f64) -> RunConfig {
    RunConfig {
        n_cells: 32, m: None, dt, t_final, mu, kappa,
        gamma1: 10.0, gamma2: 10.0, nu,
        curve: CurveSpec::Ellipse { a: 0.3, b: 0.4, center: [0.5, 0.5] },
        total_len: 1.0, snapshot_times: vec![], output_dir: None,
        field_dump: None, dump_matrix: false, dump_quadrature: false,
    }
}

fn main() {
    // Semi-implicit, dt = 0.05, kappa 6: stability probe (20 steps).
    let t0 = std::time::Instant::now();
    let s = run(&cfg(1, 0.05, 1.0, 6.0, 1.0)).unwrap();
    let e0 = s.records[0].total;
    let min_slack = s.records[1..].iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
    let max_rise = s.records.windows(2).map(|w| w[1].total - w[0].total).fold(f64::NEG_INFINITY, f64::max);
    println!("semi dt=0.05: status {:?}, E0 {:.4e}, final E {:.4e}, min slack {:.3e}, max dE {:.3e}, steps {} in {:.1?}",
        s.status, e0, s.records.last().unwrap().total, min_slack, max_rise, s.records.len()-1, t0.elapsed());

    // Semi-implicit dt = 0.01 (100 steps at n=32) with timing.
    let t0 = std::time::Instant::now();
    let s = run(&cfg(1, 0.01, 1.0, 6.0, 1.0)).unwrap();
    let min_slack = s.records[1..].iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
    let max_rise = s.records.windows(2).map(|w| w[1].total - w[0].total).fold(f64::NEG_INFINITY, f64::max);
    println!("semi dt=0.01: status {:?}, final E {:.4e}, min slack {:.3e}, max dE {:.3e}, {} steps in {:.1?} ({:.0} ms/step)",
        s.status, s.records.last().unwrap().total, min_slack, max_rise,
        s.records.len()-1, t0.elapsed(), t0.elapsed().as_millis() as f64 / (s.records.len()-1) as f64);

    // Explicit dt = 0.05: expect diagnosed instability.
    let s = run(&cfg(0, 0.05, 1.0, 6.0, 1.0)).unwrap();
    match &s.status {
        RunStatus::Unstable { step, reason } => println!("explicit dt=0.05: unstable at step {step}: {reason}"),
        RunStatus::Completed => {
            println!("explicit dt=0.05: COMPLETED?! final E {:.3e} vs E0 {:.3e}", s.records.last().unwrap().total, s.records[0].total);
        }
    }

    // Area conservation probe: mu=1, kappa=10, dt=2.5e-3 to t=0.5.
    let t0 = std::time::Instant::now();
    let s = run(&cfg(1, 2.5e-3, 0.5, 10.0, 1.0)).unwrap();
    let dev = memstokes::stepper::area_deviation_at(&s.records, 0.5).unwrap();
    println!("area: status {:?}, dev(t=0.5) = {:.4e} (paper -5.1587e-4), {} steps in {:.1?}",
        s.status, dev, s.records.len()-1, t0.elapsed());
}
