//! A full config-driven run into a temporary directory: stages, checks and
//! the written artifacts.
//!
//! Usage: `cargo run --release --example run_config [CONFIG]`, where CONFIG
//! is a TOML path or `builtin:NAME` (default `builtin:ou_constant_cost`).

use ergodic_hjb::run::{list_builtins, run_experiment, RunOptions};

fn main() -> ergodic_hjb::Result<()> {
    print!("{}", list_builtins());
    let config = std::env::args().nth(1).unwrap_or_else(|| "builtin:ou_constant_cost".into());
    let out = std::env::temp_dir().join("hjb-lab-example");
    let mut opts = RunOptions::new(config);
    opts.out_dir = Some(out.clone());
    let report = run_experiment(&opts)?;
    println!("config hash {}", report.config_hash);
    for s in &report.stages {
        println!("{:<12} {:?} ({:.1} s)", s.stage.name(), s.status, s.seconds);
        for c in &s.checks {
            println!("    {:<40} {:>12.4e} vs {:>12.4e} {}", c.name, c.value, c.bound, if c.passed { "ok" } else { "FAIL" });
        }
    }
    println!("artifacts in {}:", out.display());
    for a in &report.artifacts {
        println!("    {a}");
    }
    println!("exit code {}", report.exit_code);
    Ok(())
}
