//! Discounted HJB on the scalar OU instance against the closed form
//! `v^β(x) = x²/(β+2) + 2/(β(β+2))`.

use ergodic_hjb::pde::{solve_discounted, Grid};
use ergodic_hjb::run::builtins;

fn main() -> ergodic_hjb::Result<()> {
    let problem = builtins::ou_singleton_quadratic()?;
    let grid = Grid::uniform_1d(-6.0, 6.0, 0.01)?;
    println!("{:>6} {:>12} {:>12} {:>10} {:>6}", "beta", "v(0)", "exact", "error", "iters");
    for beta in [0.5, 0.25, 0.1] {
        let field = solve_discounted(&problem, &grid, beta, 1e-10, 200)?;
        let exact = 2.0 / (beta * (beta + 2.0));
        let v = field.at(&[0.0]);
        println!("{beta:>6} {v:>12.6} {exact:>12.6} {:>10.2e} {:>6}", (v - exact).abs(), field.info().iterations);
    }
    let field = solve_discounted(&problem, &grid, 0.5, 1e-10, 200)?;
    for x in [-2.0, 1.0, 3.0] {
        println!("v^0.5({x}) = {:.5}  (exact {:.5})", field.at(&[x]), x * x / 2.5 + 1.6);
    }
    Ok(())
}
