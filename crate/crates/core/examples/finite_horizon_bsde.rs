//! Finite-horizon BSDE `Y_0 ≈ v(T, x)` against the parabolic grid solver.

use ergodic_hjb::bsde::{solve_finite_horizon_bsde, BsdeConfig};
use ergodic_hjb::pde::{solve_parabolic, Grid};
use ergodic_hjb::run::builtins;

fn main() -> ergodic_hjb::Result<()> {
    let problem = builtins::ou_singleton_quadratic()?;
    let grid = Grid::uniform_1d(-6.0, 6.0, 0.02)?;
    let ts = [1.0, 5.0, 20.0];
    let fields = solve_parabolic(&problem, &grid, 20.0, 0.01, &ts)?;
    println!("{:>5} {:>10} {:>8} {:>10} {:>10}", "T", "Y0", "SE", "grid", "exact");
    for (t, field) in ts.iter().zip(&fields) {
        let cfg = BsdeConfig::new(*t, 0.02, 10_000);
        let sol = solve_finite_horizon_bsde(&problem, &[0.0], 0, 0.0, &cfg, 4)?;
        let exact = t - (1.0 - (-2.0 * t).exp()) / 2.0;
        println!("{t:>5} {:>10.4} {:>8.4} {:>10.4} {exact:>10.4}", sol.y0.mean, sol.y0.se, field.at(&[0.0]));
    }
    Ok(())
}
