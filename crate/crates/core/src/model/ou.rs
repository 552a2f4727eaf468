use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{ControlProblem, CostFn, DataFn};
use crate::error::{Error, Result};

/// Per-control coefficients of a controlled Ornstein-Uhlenbeck process,
/// `b(x, a) = B(a) x + D(a)` and `σ(x, a) = Σ(a)`.
#[derive(Debug, Clone)]
pub struct OuCoefficients {
    pub b: Vec<DMatrix<f64>>,
    pub d: Vec<DVector<f64>>,
    pub sigma: Vec<DMatrix<f64>>,
}

impl OuCoefficients {
    fn find(&self, controls: &[Vec<f64>], a: &[f64]) -> usize {
        // Coefficients are tabulated on the control list; off-list points snap
        // to the nearest control.
        controls
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let d2: f64 = c.iter().zip(a).map(|(u, v)| (u - v) * (u - v)).sum();
                (i, d2)
            })
            .min_by(|l, r| l.1.total_cmp(&r.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

/// Builds the controlled OU problem with uncertain mean reversion `B`,
/// mean shift `D` and volatility `Σ`.
///
/// `B` must be uniformly stable on the control list: the largest eigenvalue of
/// its symmetric part is at most `-gamma`. The `x`-Lipschitz constant is taken
/// from `max ‖B(a)‖` and the control differences; `lip_f` defaults to 1 and
/// should be set by the caller with [`ControlProblem::with_lip_f`].
pub fn make_ou_problem<B, D, S>(
    b: B,
    d: D,
    sigma: S,
    controls: Vec<Vec<f64>>,
    gamma: f64,
    cost: CostFn,
    data: DataFn,
) -> Result<ControlProblem>
where
    B: Fn(&[f64]) -> DMatrix<f64>,
    D: Fn(&[f64]) -> DVector<f64>,
    S: Fn(&[f64]) -> DMatrix<f64>,
{
    if controls.is_empty() {
        return Err(Error::InvalidProblem("control list is empty".into()));
    }
    let coeffs = OuCoefficients {
        b: controls.iter().map(|a| b(a)).collect(),
        d: controls.iter().map(|a| d(a)).collect(),
        sigma: controls.iter().map(|a| sigma(a)).collect(),
    };
    let dim = coeffs.b[0].nrows();
    for i in 0..controls.len() {
        let shapes_ok = coeffs.b[i].shape() == (dim, dim)
            && coeffs.d[i].len() == dim
            && coeffs.sigma[i].shape() == (dim, dim);
        if !shapes_ok {
            return Err(Error::InvalidProblem(format!(
                "OU coefficients for control {i} do not match dimension {dim}"
            )));
        }
        let sym = (&coeffs.b[i] + coeffs.b[i].transpose()) * 0.5;
        let top = sym.symmetric_eigenvalues().max();
        if top > -gamma + 1e-12 {
            return Err(Error::StabilityViolated {
                control: i,
                quotient: top,
                bound: -gamma,
            });
        }
    }

    let mut lip = coeffs
        .b
        .iter()
        .map(|m| m.norm())
        .fold(0.0_f64, f64::max);
    for i in 0..controls.len() {
        for j in 0..i {
            let da: f64 = controls[i]
                .iter()
                .zip(&controls[j])
                .map(|(u, v)| (u - v) * (u - v))
                .sum::<f64>()
                .sqrt();
            let shift = (&coeffs.d[i] - &coeffs.d[j]).norm() + (&coeffs.sigma[i] - &coeffs.sigma[j]).norm();
            lip = lip.max(shift / da);
        }
    }
    let lip = if lip > 0.0 { lip } else { 1.0 };

    let coeffs = Arc::new(coeffs);
    let table = Arc::new(controls.clone());
    let (cd, td) = (coeffs.clone(), table.clone());
    let (cs, ts) = (coeffs, table);
    ControlProblem::builder(dim)
        .controls(controls)
        .drift(move |x, a, out| {
            let k = cd.find(&td, a);
            let (m, shift) = (&cd.b[k], &cd.d[k]);
            for (r, o) in out.iter_mut().enumerate() {
                let mut acc = shift[r];
                for (c, xc) in x.iter().enumerate() {
                    acc += m[(r, c)] * xc;
                }
                *o = acc;
            }
        })
        .diffusion(move |_, a, out| {
            let k = cs.find(&ts, a);
            let s = &cs.sigma[k];
            let n = s.nrows();
            for r in 0..n {
                for c in 0..n {
                    out[r * n + c] = s[(r, c)];
                }
            }
        })
        .running_cost_arc(cost)
        .data_arc(data)
        .gamma(gamma)
        .lipschitz(lip, 1.0)
        .build()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_cost() -> CostFn {
        Arc::new(|_, _, _| 0.0)
    }

    fn zero_data() -> DataFn {
        Arc::new(|_| 0.0)
    }

    #[test]
    fn scalar_ou_unrolls() {
        let p = make_ou_problem(
            |_| DMatrix::from_element(1, 1, -1.0),
            |_| DVector::from_element(1, 0.0),
            |_| DMatrix::from_element(1, 1, 2f64.sqrt()),
            vec![vec![0.0]],
            1.0,
            zero_cost(),
            zero_data(),
        )
        .unwrap();
        let mut out = [0.0];
        p.drift_at(&[3.0], 0, &mut out);
        assert_eq!(out[0], -3.0);
        p.diffusion_at(&[3.0], 0, &mut out);
        assert_eq!(out[0], 2f64.sqrt());
        assert_eq!(p.gamma(), 1.0);
    }

    #[test]
    fn additive_control_keeps_margin() {
        let p = make_ou_problem(
            |_| DMatrix::from_element(1, 1, -1.0),
            |a| DVector::from_element(1, a[0]),
            |_| DMatrix::from_element(1, 1, 1.0),
            vec![vec![-1.0], vec![1.0]],
            1.0,
            zero_cost(),
            zero_data(),
        )
        .unwrap();
        let mut out = [0.0];
        p.drift_at(&[0.5], 1, &mut out);
        assert_eq!(out[0], 0.5);
        let m = crate::model::dissipativity_margin(&p, &[2.0], &[0.0], 1).unwrap();
        assert!((m + 1.0).abs() < 1e-15);
    }

    #[test]
    fn unstable_b_rejected() {
        let err = make_ou_problem(
            |_| DMatrix::from_element(1, 1, 1.0),
            |_| DVector::from_element(1, 0.0),
            |_| DMatrix::from_element(1, 1, 1.0),
            vec![vec![0.0]],
            1.0,
            zero_cost(),
            zero_data(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::StabilityViolated { control: 0, .. }));
    }

    #[test]
    fn stable_but_weaker_than_gamma_rejected() {
        let err = make_ou_problem(
            |_| DMatrix::from_element(1, 1, -0.5),
            |_| DVector::from_element(1, 0.0),
            |_| DMatrix::from_element(1, 1, 1.0),
            vec![vec![0.0]],
            1.0,
            zero_cost(),
            zero_data(),
        );
        assert!(err.is_err());
    }
}
