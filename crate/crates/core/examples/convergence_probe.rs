use memstokes::diagnostics::{convergence_table, fitted_rate};
use memstokes::exact::TrigExpSolution;

fn main() {
    let t0 = std::time::Instant::now();
    let rows = convergence_table(&[8, 16, 32, 64], 400, 1.0, 10.0, &TrigExpSolution).unwrap();
    for r in &rows {
        println!(
            "1/h={:3}  vel L2 {:.4e} (k={:?})  H1 {:.4e} (k={:?})  Linf {:.4e}  W1inf {:.4e}",
            r.inv_h,
            r.velocity.l2,
            r.velocity_rates[0].map(|x| (x * 10.0).round() / 10.0),
            r.velocity.h1,
            r.velocity_rates[1].map(|x| (x * 10.0).round() / 10.0),
            r.velocity.linf,
            r.velocity.w1inf
        );
    }
    for r in &rows {
        println!(
            "1/h={:3}  pre L2 {:.4e} (k={:?})  H1 {:.4e} (k={:?})  Linf {:.4e}  W1inf {:.4e}",
            r.inv_h,
            r.pressure.l2,
            r.pressure_rates[0].map(|x| (x * 10.0).round() / 10.0),
            r.pressure.h1,
            r.pressure_rates[1].map(|x| (x * 10.0).round() / 10.0),
            r.pressure.linf,
            r.pressure.w1inf
        );
    }
    println!(
        "fitted: vel L2 {:.2} H1 {:.2}  pre L2 {:.2} H1 {:.2}",
        fitted_rate(&rows, |r| r.velocity.l2),
        fitted_rate(&rows, |r| r.velocity.h1),
        fitted_rate(&rows, |r| r.pressure.l2),
        fitted_rate(&rows, |r| r.pressure.h1)
    );
    println!("elapsed {:.1?}", t0.elapsed());
}
