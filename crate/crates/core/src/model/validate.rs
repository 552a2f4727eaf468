use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::ControlProblem;
use crate::error::{Error, Result};

pub(crate) const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Worst sampled slack; negative means the assumption was violated.
    pub worst_margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
    /// Largest sampled dissipativity quotient; valid problems have `gamma <= -worst_dissipativity`.
    pub worst_dissipativity: f64,
    pub n_samples: usize,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// `[(x−x')·(b(x,a)−b(x',a)) + ½‖σ(x,a)−σ(x',a)‖²] / |x−x'|²`.
pub fn dissipativity_margin(problem: &ControlProblem, x: &[f64], x_prime: &[f64], control: usize) -> Result<f64> {
    let d = problem.dim();
    if x.len() != d || x_prime.len() != d {
        return Err(Error::InvalidArgument(format!("points must have dimension {d}")));
    }
    let dist2: f64 = x.iter().zip(x_prime).map(|(u, v)| (u - v) * (u - v)).sum();
    if dist2 == 0.0 {
        return Err(Error::InvalidArgument("dissipativity margin needs x != x'".into()));
    }
    let mut b1 = vec![0.0; d];
    let mut b2 = vec![0.0; d];
    let mut s1 = vec![0.0; d * d];
    let mut s2 = vec![0.0; d * d];
    problem.drift_at(x, control, &mut b1);
    problem.drift_at(x_prime, control, &mut b2);
    problem.diffusion_at(x, control, &mut s1);
    problem.diffusion_at(x_prime, control, &mut s2);
    let inner: f64 = (0..d).map(|i| (x[i] - x_prime[i]) * (b1[i] - b2[i])).sum();
    let hs: f64 = s1.iter().zip(&s2).map(|(u, v)| (u - v) * (u - v)).sum();
    Ok((inner + 0.5 * hs) / dist2)
}

/// Samples the standing assumptions in the box `[-box_radius, box_radius]^d`
/// (and `y ∈ [-box_radius, box_radius]`). Violations are reported, not raised.
pub fn validate_problem(problem: &ControlProblem, n_samples: usize, box_radius: f64, seed: u64) -> Result<ValidationReport> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    if !(box_radius > 0.0) {
        return Err(Error::InvalidArgument("box_radius must be positive".into()));
    }
    let d = problem.dim();
    let m = problem.n_controls();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..d).map(|_| rng.random_range(-box_radius..=box_radius)).collect()
    };

    let mut worst_dissip = f64::NEG_INFINITY;
    let mut worst_lip_bs = 0.0_f64;
    let mut worst_lip_f = 0.0_f64;
    let mut worst_mono = f64::INFINITY;
    let mut worst_h3 = f64::INFINITY;

    let mut b1 = vec![0.0; d];
    let mut b2 = vec![0.0; d];
    let mut s1 = vec![0.0; d * d];
    let mut s2 = vec![0.0; d * d];

    for _ in 0..n_samples {
        let x = point(&mut rng);
        let mut xp = point(&mut rng);
        if x == xp {
            xp[0] += box_radius * 1e-3;
        }
        let a = rng.random_range(0..m);
        let ap = rng.random_range(0..m);
        let mut y = rng.random_range(-box_radius..=box_radius);
        let mut yp = rng.random_range(-box_radius..=box_radius);
        if y > yp {
            std::mem::swap(&mut y, &mut yp);
        }
        if y == yp {
            yp += box_radius * 1e-3;
        }

        worst_dissip = worst_dissip.max(dissipativity_margin(problem, &x, &xp, a)?);

        let dx = dist(&x, &xp);
        let da = dist(problem.control(a), problem.control(ap));
        problem.drift_at(&x, a, &mut b1);
        problem.drift_at(&xp, ap, &mut b2);
        problem.diffusion_at(&x, a, &mut s1);
        problem.diffusion_at(&xp, ap, &mut s2);
        let change = dist(&b1, &b2) + dist(&s1, &s2);
        worst_lip_bs = worst_lip_bs.max(change / (dx + da));

        let f1 = problem.cost(&x, a, y);
        let f2 = problem.cost(&xp, ap, yp);
        worst_lip_f = worst_lip_f.max((f1 - f2).abs() / (dx + da + (yp - y)));

        // monotonicity and strict decay at a fixed (x, a)
        let lo = problem.cost(&x, a, y);
        let hi = problem.cost(&x, a, yp);
        worst_mono = worst_mono.min(lo - hi);
        match problem.kappa() {
            Some(k) => {
                let slack = (-k * (yp - y) - (hi - lo)) / (yp - y);
                worst_h3 = worst_h3.min(slack);
            }
            None => worst_h3 = worst_h3.min(-(hi - lo).abs()),
        }
    }

    let lip_bs_margin = problem.lip_b_sigma() - worst_lip_bs;
    let lip_f_margin = problem.lip_f() - worst_lip_f;
    let dissip_margin = -problem.gamma() - worst_dissip;
    let scale = |v: f64| TOLERANCE * (1.0 + v.abs());
    let checks = vec![
        AssumptionCheck {
            name: "H1(i) lipschitz b, sigma",
            passed: lip_bs_margin >= -scale(problem.lip_b_sigma()),
            worst_margin: lip_bs_margin,
        },
        AssumptionCheck {
            name: "H1(ii) dissipativity",
            passed: dissip_margin >= -scale(problem.gamma()),
            worst_margin: dissip_margin,
        },
        AssumptionCheck {
            name: "H2(i) lipschitz f",
            passed: lip_f_margin >= -scale(problem.lip_f()),
            worst_margin: lip_f_margin,
        },
        AssumptionCheck {
            name: "H2(ii) f nonincreasing in y",
            passed: worst_mono >= -TOLERANCE,
            worst_margin: worst_mono,
        },
        AssumptionCheck {
            name: "H3 strict decay in y",
            passed: worst_h3 >= -TOLERANCE,
            worst_margin: worst_h3,
        },
    ];
    Ok(ValidationReport {
        checks,
        worst_dissipativity: worst_dissip,
        n_samples,
    })
}

/// Largest sampled `|f(x,a,y) − f(x,a,y')|`.
pub(crate) fn cost_y_spread(problem: &ControlProblem, radius: f64, n_samples: usize, seed: u64) -> f64 {
    let d = problem.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..n_samples {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-radius..=radius)).collect();
        let a = rng.random_range(0..problem.n_controls());
        let y = rng.random_range(-radius..=radius);
        let yp = rng.random_range(-radius..=radius);
        worst = worst.max((problem.cost(&x, a, y) - problem.cost(&x, a, yp)).abs());
    }
    worst
}

fn dist(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(drift: fn(f64) -> f64, cost: fn(f64, f64) -> f64) -> ControlProblem {
        ControlProblem::builder(1)
            .controls(vec![vec![0.0]])
            .drift(move |x, _, out| out[0] = drift(x[0]))
            .diffusion(|_, _, out| out[0] = 2f64.sqrt())
            .running_cost(move |x, _, y| cost(x[0], y))
            .gamma(1.0)
            .lipschitz(1.0, 1.0)
            .build()
            .unwrap()
    }

    #[test]
    fn margin_of_linear_and_cubic_drift() {
        let ou = scalar(|x| -x, |_, _| 0.0);
        assert_eq!(dissipativity_margin(&ou, &[1.0], &[0.0], 0).unwrap(), -1.0);
        assert_eq!(dissipativity_margin(&ou, &[2.0], &[-2.0], 0).unwrap(), -1.0);
        let cubic = scalar(|x| -x * x * x, |_, _| 0.0);
        // (1 - 0)(-1 - 0) / 1
        assert_eq!(dissipativity_margin(&cubic, &[1.0], &[0.0], 0).unwrap(), -1.0);
    }

    #[test]
    fn margin_rejects_equal_points() {
        let ou = scalar(|x| -x, |_, _| 0.0);
        assert!(dissipativity_margin(&ou, &[1.0], &[1.0], 0).is_err());
    }

    #[test]
    fn ou_passes_dissipativity() {
        let ou = scalar(|x| -x, |_, _| 0.0);
        let report = validate_problem(&ou, 2000, 10.0, 3).unwrap();
        let check = report.check("H1(ii) dissipativity").unwrap();
        assert!(check.passed);
        assert!(check.worst_margin.abs() < 1e-12);
        assert!(report.all_passed());
    }

    #[test]
    fn decreasing_cost_passes_increasing_fails() {
        let good = scalar(|x| -x, |x, y| -y + x.cos());
        let report = validate_problem(&good, 2000, 10.0, 5).unwrap();
        assert!(report.check("H2(ii) f nonincreasing in y").unwrap().passed);
        assert!(report.check("H2(i) lipschitz f").unwrap().passed);

        let bad = scalar(|x| -x, |_, y| y);
        let report = validate_problem(&bad, 2000, 10.0, 5).unwrap();
        assert!(!report.check("H2(ii) f nonincreasing in y").unwrap().passed);
        assert!(!report.all_passed());
    }

    #[test]
    fn deterministic_under_seed() {
        let p = scalar(|x| -x - x * x * x, |x, _| x.sin());
        let a = validate_problem(&p, 500, 3.0, 11).unwrap();
        let b = validate_problem(&p, 500, 3.0, 11).unwrap();
        assert_eq!(a.worst_dissipativity, b.worst_dissipativity);
        assert_eq!(a.checks[0].worst_margin, b.checks[0].worst_margin);
    }
}
