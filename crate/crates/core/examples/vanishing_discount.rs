//! Ergodic pair `(λ, φ)` by vanishing discount, for both OU builtins.

use ergodic_hjb::pde::{ergodic_residual, solve_ergodic_vanishing_discount, Grid};
use ergodic_hjb::run::builtins;

fn main() -> ergodic_hjb::Result<()> {
    let grid = Grid::uniform_1d(-6.0, 6.0, 0.01)?;
    let betas = [0.4, 0.2, 0.1, 0.05];

    let quad = builtins::ou_singleton_quadratic()?;
    let pair = solve_ergodic_vanishing_discount(&quad, &grid, &betas, 1e-9)?;
    println!("singleton: lambda = {:.5} (exact 1), residual {:.2e}", pair.lambda, pair.residual);
    for (b, l) in pair.betas.iter().zip(&pair.lambda_betas) {
        println!("  beta {b:<5} beta*v(0) = {l:.5}");
    }
    for x in [-3.0, -1.0, 2.0] {
        println!("  phi({x}) = {:.4}  (x^2/2 = {:.4})", pair.phi_at(&[x]), x * x / 2.0);
    }

    let two = builtins::ou_two_control()?;
    let pair = solve_ergodic_vanishing_discount(&two, &grid, &betas, 1e-9)?;
    println!(
        "two-control: lambda = {:.5} (fine-grid oracle 0.61277), residual {:.2e}",
        pair.lambda,
        ergodic_residual(&two, &grid, &pair)?
    );
    for w in &pair.warnings {
        println!("  warning: {w}");
    }
    Ok(())
}
