//! Catalog of ready-made problem instances with known reference values.

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::model::ControlProblem;

pub struct Builtin {
    pub name: &'static str,
    /// Short tag shown next to the name.
    pub tag: &'static str,
    pub provenance: &'static str,
    pub text: &'static str,
}

pub const CATALOG: [Builtin; 3] = [
    Builtin {
        name: "ou_singleton_quadratic",
        tag: "λ=1 closed form",
        provenance: "closed form: v^β(x) = x²/(β+2) + 2/(β(β+2)), φ = x²/2",
        text: include_str!("../../configs/ou_singleton_quadratic.toml"),
    },
    Builtin {
        name: "ou_two_control",
        tag: "λ≈0.61277 fine-grid oracle",
        provenance: "policy iteration at h = 5e-4, β = 1e-3 on [-10, 10]",
        text: include_str!("../../configs/ou_two_control.toml"),
    },
    Builtin {
        name: "ou_constant_cost",
        tag: "λ=0.7 trivial",
        provenance: "constant running cost integrates exactly",
        text: include_str!("../../configs/ou_constant_cost.toml"),
    },
];

pub fn names() -> Vec<&'static str> {
    CATALOG.iter().map(|b| b.name).collect()
}

fn entry(name: &str) -> Result<&'static Builtin> {
    CATALOG.iter().find(|b| b.name == name).ok_or_else(|| Error::Config(format!("unknown builtin `{name}`")))
}

pub fn config(name: &str) -> Result<RunConfig> {
    RunConfig::from_toml(entry(name)?.text)
}

pub fn problem(name: &str) -> Result<ControlProblem> {
    config(name)?.build_problem()
}

/// `dX = −X dt + √2 dW`, `f = x²`, `h = 0`.
pub fn ou_singleton_quadratic() -> Result<ControlProblem> {
    problem("ou_singleton_quadratic")
}

/// `dX = (−X + a) dt + dW`, `a ∈ {−1, 1}`, `f = −x² + 2ax`.
pub fn ou_two_control() -> Result<ControlProblem> {
    problem("ou_two_control")
}

pub fn ou_constant_cost() -> Result<ControlProblem> {
    problem("ou_constant_cost")
}

/// One line per entry, in catalog order.
pub fn list_builtins() -> String {
    let mut out = String::new();
    for b in &CATALOG {
        out.push_str(&format!("{} ({})  [{}]\n", b.name, b.tag, b.provenance));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_lists_closed_form_instance() {
        let text = list_builtins();
        assert!(text.contains("ou_singleton_quadratic (λ=1 closed form)"));
        assert_eq!(text.lines().count(), CATALOG.len());
    }

    #[test]
    fn every_entry_builds() {
        for name in names() {
            let cfg = config(name).unwrap();
            cfg.build_problem().unwrap();
            cfg.build_problem().unwrap();
            assert!(cfg.reference.lambda.is_some());
        }
        assert!(problem("nope").is_err());
    }

    #[test]
    fn two_control_coefficients() {
        let p = ou_two_control().unwrap();
        let mut out = [0.0];
        p.drift_at(&[2.0], 0, &mut out);
        assert_eq!(out[0], -3.0);
        assert_eq!(p.cost(&[2.0], 1, 0.0), 0.0);
        assert_eq!(p.lip_f(), 14.0);
    }
}
