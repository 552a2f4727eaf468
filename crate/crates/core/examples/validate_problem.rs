//! Sampled checks of the standing assumptions, on a valid problem and on one
//! whose drift is not dissipative.

use ergodic_hjb::model::validate_problem;
use ergodic_hjb::run::builtins;
use ergodic_hjb::ControlProblem;

fn main() -> ergodic_hjb::Result<()> {
    let good = builtins::ou_two_control()?;
    let report = validate_problem(&good, 10_000, 6.0, 1)?;
    for c in &report.checks {
        println!("{:<28} passed={:<5} margin={:.4}", c.name, c.passed, c.worst_margin);
    }

    // a double-well drift only dissipates outside the wells
    let bad = ControlProblem::builder(1)
        .controls(vec![vec![0.0]])
        .drift(|x, _, out| out[0] = x[0] - x[0].powi(3))
        .diffusion(|_, _, out| out[0] = 1.0)
        .gamma(1.0)
        .build()?;
    let report = validate_problem(&bad, 10_000, 3.0, 1)?;
    println!("double well: all passed = {}", report.all_passed());
    for c in report.checks.iter().filter(|c| !c.passed) {
        println!("  {} fails, worst margin {:.3}", c.name, c.worst_margin);
    }
    Ok(())
}
