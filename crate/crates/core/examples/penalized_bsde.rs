//! Penalized BSDE on the two-control OU problem: `Y_0` as the penalty grows,
//! next to the grid solution of the same penalized system and the HJB value.

use ergodic_hjb::bsde::{jump_constraint_gap, penalization_sweep, BasisFamily, BsdeConfig, RegressionBasis};
use ergodic_hjb::pde::{solve_discounted, solve_penalized_system, Grid};
use ergodic_hjb::run::builtins;

fn main() -> ergodic_hjb::Result<()> {
    let problem = builtins::ou_two_control()?;
    let beta = 0.5;
    let x = [0.0];
    let grid = Grid::uniform_1d(-6.0, 6.0, 0.01)?;
    let hjb = solve_discounted(&problem, &grid, beta, 1e-9, 200)?.at(&x);

    let mut cfg = BsdeConfig::for_discount(beta, 0.02, 20_000);
    cfg.basis = RegressionBasis::new(BasisFamily::TensorRegime, 5, 6.0)?;
    let ns = [0.0, 2.0, 10.0, 50.0];
    let sols = penalization_sweep(&problem, &x, 1, beta, &ns, &cfg, 7)?;
    println!("HJB value v(0) = {hjb:.4}");
    println!("{:>6} {:>10} {:>8} {:>10} {:>10}", "n", "Y0", "SE", "grid", "gap");
    for (n, sol) in ns.iter().zip(&sols) {
        let grid_value = solve_penalized_system(&problem, &grid, beta, *n, 1e-10, 1_000_000)?[1].at(&x);
        println!(
            "{n:>6} {:>10.4} {:>8.4} {:>10.4} {:>10.5}",
            sol.y0.mean,
            sol.y0.se,
            grid_value,
            jump_constraint_gap(sol)
        );
    }
    Ok(())
}
