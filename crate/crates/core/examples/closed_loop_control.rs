//! `λ` as the value of the ergodic control problem: the extracted feedback
//! against every constant policy.

use ergodic_hjb::asymptotics::{constant_policy_average, verify_lambda_via_control};
use ergodic_hjb::pde::{extract_feedback, solve_ergodic_vanishing_discount, Grid};
use ergodic_hjb::run::builtins;

fn main() -> ergodic_hjb::Result<()> {
    let problem = builtins::ou_two_control()?;
    let grid = Grid::uniform_1d(-6.0, 6.0, 0.01)?;
    let pair = solve_ergodic_vanishing_discount(&problem, &grid, &[0.4, 0.2, 0.1, 0.05], 1e-9)?;
    let policy = extract_feedback(&problem, &grid, &pair)?;
    for x in [-1.0, -0.1, 0.1, 1.0] {
        println!("feedback({x:+}) = a{}", policy.feedback(&[x]));
    }
    let est = verify_lambda_via_control(&problem, &policy, &[0.0], 100.0, 0.01, 1000, 3)?;
    println!("lambda (vanishing discount) {:.4}", pair.lambda);
    println!("feedback average            {:.4} ± {:.4}", est.mean, est.se);
    for a in 0..problem.n_controls() {
        let c = constant_policy_average(&problem, a, &[0.0], 100.0, 0.01, 1000, 3)?;
        println!("constant a = {:+}          {:.4} ± {:.4}", problem.control(a)[0], c.mean, c.se);
    }
    Ok(())
}
