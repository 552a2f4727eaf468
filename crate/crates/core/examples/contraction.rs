//! Synchronous coupling: `E|X_t^x − X_t^{x'}|²` decays like `e^{−2γt}`.

use ergodic_hjb::run::builtins;
use ergodic_hjb::sim::{contraction_log_slope, estimate_contraction};

fn main() -> ergodic_hjb::Result<()> {
    let problem = builtins::ou_two_control()?;
    let ts: Vec<f64> = (1..=6).map(|k| k as f64 * 0.5).collect();
    let pts = estimate_contraction(&problem, &[2.0], &[-1.0], 1, 1e-3, &ts, 10_000, 11)?;
    println!("{:>5} {:>12} {:>12}", "t", "E|dX|^2", "9 e^{-2t}");
    for p in &pts {
        println!("{:>5} {:>12.6} {:>12.6}", p.t, p.mean, 9.0 * (-2.0 * p.t).exp());
    }
    println!("log slope {:.4} (bound -2)", contraction_log_slope(&pts));
    Ok(())
}
