//! `v(T, 0)/T → λ` from the parabolic solver, and the renormalized gap
//! `w(T, x) = v(T, x) − λT − φ(x)` with `h = φ`.

use std::sync::Arc;

use ergodic_hjb::asymptotics::{long_run_curve, parabolic_fields, renormalized_gap};
use ergodic_hjb::pde::{solve_ergodic_vanishing_discount, Grid};
use ergodic_hjb::run::builtins;

fn main() -> ergodic_hjb::Result<()> {
    let grid = Grid::uniform_1d(-6.0, 6.0, 0.02)?;
    let ts = [5.0, 10.0, 20.0, 50.0];
    let problem = builtins::ou_singleton_quadratic()?;
    let fields = parabolic_fields(&problem, &grid, &ts, 0.01)?;
    let curve = long_run_curve(&fields, &[0.0], Some(1.0));
    println!("{:>5} {:>10} {:>10}", "T", "v(T,0)/T", "exact");
    for p in &curve.points {
        let exact = 1.0 - (1.0 - (-2.0 * p.t).exp()) / (2.0 * p.t);
        println!("{:>5} {:>10.5} {:>10.5}", p.t, p.value, exact);
    }

    // with h = φ = x²/2 the gap vanishes identically
    let problem = problem.with_data(Arc::new(|x: &[f64]| x[0] * x[0] / 2.0));
    let pair = solve_ergodic_vanishing_discount(&problem, &grid, &[0.4, 0.2, 0.1, 0.05], 1e-9)?;
    let fields = parabolic_fields(&problem, &grid, &ts, 0.01)?;
    let gap = renormalized_gap(&pair, &fields)?;
    println!("{:>5} {:>14} {:>12}", "T", "sup|w|/(1+|x|)", "osc w");
    for p in &gap.points {
        println!("{:>5} {:>14.5} {:>12.2e}", p.t, p.value, p.aux);
    }
    Ok(())
}
