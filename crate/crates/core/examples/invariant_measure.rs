//! Long-run samples of the closed-loop OU under each constant control:
//! mean `D/γ`, variance `Σ²/(2γ)`.

use ergodic_hjb::run::builtins;
use ergodic_hjb::sim::{estimate_invariant_measure, InvariantSampling};

fn main() -> ergodic_hjb::Result<()> {
    let problem = builtins::ou_two_control()?;
    let cfg = InvariantSampling::new(1);
    for a in 0..problem.n_controls() {
        let mu = estimate_invariant_measure(&problem, &|_| a, &cfg, 5)?;
        println!(
            "control {:>4}: mean {:+.4} ± {:.4} (exact {:+.1}), variance {:.4} (exact 0.5), {} samples",
            problem.control(a)[0],
            mu.mean()[0],
            mu.mean_se()[0],
            problem.control(a)[0],
            mu.variance(0),
            mu.len()
        );
    }
    Ok(())
}
