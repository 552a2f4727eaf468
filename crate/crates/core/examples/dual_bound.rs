//! Tilted Monte Carlo estimates of `E^ν[(h − φ)(X_T)]` over a small family of
//! constant intensity tilts, next to the grid value of the gap
//! `w(T, x) = v(T, x) − λT − φ(x)`.

use std::sync::Arc;

use ergodic_hjb::asymptotics::{gap_at, parabolic_fields};
use ergodic_hjb::bsde::{dual_bound_estimate, PayoffSpec};
use ergodic_hjb::pde::{solve_ergodic_vanishing_discount, Grid};
use ergodic_hjb::run::builtins;
use ergodic_hjb::sim::TiltSpec;

fn main() -> ergodic_hjb::Result<()> {
    let problem = builtins::ou_two_control()?;
    let grid = Grid::uniform_1d(-6.0, 6.0, 0.02)?;
    let pair = Arc::new(solve_ergodic_vanishing_discount(&problem, &grid, &[0.4, 0.2, 0.1, 0.05], 1e-9)?);
    let ts = [1.0, 2.0, 4.0];
    let fields = parabolic_fields(&problem, &grid, &ts, 0.01)?;

    let tilts = vec![TiltSpec::constant(1.0, 8)?, TiltSpec::constant(4.0, 8)?, TiltSpec::constant(8.0, 8)?];
    let phi = {
        let pair = pair.clone();
        move |x: &[f64]| pair.phi_at(x)
    };
    let payoff = PayoffSpec::sandwich(|_| 0.0, phi, pair.lambda, 0.0);
    let x = [0.5];
    for (t, field) in ts.iter().zip(&fields) {
        let est = dual_bound_estimate(&problem, &x, 1, &tilts, &payoff, *t, 0.01, 4000, 9)?;
        let cells: Vec<String> = est.per_tilt.iter().map(|e| format!("{:+.4}±{:.4}", e.mean, e.se)).collect();
        println!(
            "T = {t}: max over tilts {:+.4} (tilt {}), per tilt [{}], grid w(T, x) = {:+.4}",
            est.value,
            est.best,
            cells.join(" "),
            gap_at(&pair, field, &x)?
        );
    }
    Ok(())
}
