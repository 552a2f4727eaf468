use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest accepted condition number of the (Jacobi-scaled) Gram matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// Paths required per basis function.
pub const PATHS_PER_FUNCTION: usize = 50;

const CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisFamily {
    /// Polynomials in `x` only; the fitted surface ignores the regime.
    Polynomial,
    /// Polynomials in `x` fitted separately on each regime.
    TensorRegime,
}

/// Monomials of total degree `<= degree` in `x` clipped to
/// `[-clip_radius, clip_radius]` and scaled by `1 / clip_radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionBasis {
    pub family: BasisFamily,
    pub degree: u32,
    pub clip_radius: f64,
}

impl Default for RegressionBasis {
    fn default() -> Self {
        Self { family: BasisFamily::TensorRegime, degree: 3, clip_radius: 6.0 }
    }
}

impl RegressionBasis {
    pub fn new(family: BasisFamily, degree: u32, clip_radius: f64) -> Result<Self> {
        let b = Self { family, degree, clip_radius };
        b.check()?;
        Ok(b)
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.degree == 0 {
            return Err(Error::InvalidArgument("basis degree must be at least 1".into()));
        }
        if !(self.clip_radius > 0.0 && self.clip_radius.is_finite()) {
            return Err(Error::InvalidArgument(format!("clip radius must be positive, got {}", self.clip_radius)));
        }
        Ok(())
    }

    /// Exponent vectors, graded by total degree.
    pub fn exponents(&self, dim: usize) -> Vec<Vec<u32>> {
        let mut out = Vec::new();
        for total in 0..=self.degree {
            push_compositions(dim, total, &mut Vec::new(), &mut out);
        }
        out
    }

    pub fn n_functions(&self, dim: usize) -> usize {
        self.exponents(dim).len()
    }

    pub fn n_groups(&self, n_controls: usize) -> usize {
        match self.family {
            BasisFamily::Polynomial => 1,
            BasisFamily::TensorRegime => n_controls,
        }
    }

    /// Total number of regression coefficients.
    pub fn size(&self, dim: usize, n_controls: usize) -> usize {
        self.n_functions(dim) * self.n_groups(n_controls)
    }

    pub(crate) fn group(&self, regime: usize) -> usize {
        match self.family {
            BasisFamily::Polynomial => 0,
            BasisFamily::TensorRegime => regime,
        }
    }
}

fn push_compositions(dim: usize, remaining: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if prefix.len() + 1 == dim {
        prefix.push(remaining);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for k in (0..=remaining).rev() {
        prefix.push(k);
        push_compositions(dim, remaining - k, prefix, out);
        prefix.pop();
    }
}

/// Evaluates the basis with precomputed exponents.
pub(crate) struct FeatureMap {
    exponents: Vec<Vec<u32>>,
    radius: f64,
}

impl FeatureMap {
    pub(crate) fn new(basis: &RegressionBasis, dim: usize) -> Self {
        Self { exponents: basis.exponents(dim), radius: basis.clip_radius }
    }

    pub(crate) fn len(&self) -> usize {
        self.exponents.len()
    }

    pub(crate) fn eval(&self, x: &[f64], out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.exponents) {
            *o = e
                .iter()
                .zip(x)
                .map(|(&k, &xi)| (xi.clamp(-self.radius, self.radius) / self.radius).powi(k as i32))
                .product();
        }
    }

    pub(crate) fn dot(&self, x: &[f64], coef: &[f64], scratch: &mut [f64]) -> f64 {
        self.eval(x, scratch);
        scratch.iter().zip(coef).map(|(a, b)| a * b).sum()
    }
}

/// Least-squares fit of several targets per group.
pub(crate) struct GroupFit {
    /// `coef[g][t]`, one vector of basis coefficients per group and target.
    pub coef: Vec<Vec<Vec<f64>>>,
    /// Inverse Gram matrices, for prediction variances.
    pub gram_inv: Vec<DMatrix<f64>>,
    pub counts: Vec<usize>,
    pub condition: f64,
}

/// Regresses each target column on the features, separately per group.
/// Sums are formed over fixed-size path chunks and combined in order, so the
/// result does not depend on the thread count.
pub(crate) fn fit_groups(
    features: &FeatureMap,
    xs: &[f64],
    dim: usize,
    groups: &[usize],
    n_groups: usize,
    targets: &[&[f64]],
    step: usize,
) -> Result<GroupFit> {
    let p = features.len();
    let nt = targets.len();
    let n = groups.len();
    // per chunk: gram (g, p, p), rhs (g, t, p), counts (g)
    let partials: Vec<(Vec<f64>, Vec<f64>, Vec<usize>)> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut gram = vec![0.0; n_groups * p * p];
            let mut rhs = vec![0.0; n_groups * nt * p];
            let mut counts = vec![0usize; n_groups];
            let mut phi = vec![0.0; p];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let g = groups[i];
                features.eval(&xs[i * dim..(i + 1) * dim], &mut phi);
                counts[g] += 1;
                let gg = &mut gram[g * p * p..(g + 1) * p * p];
                for r in 0..p {
                    for s in r..p {
                        gg[r * p + s] += phi[r] * phi[s];
                    }
                }
                for (t, target) in targets.iter().enumerate() {
                    let y = target[i];
                    let rr = &mut rhs[(g * nt + t) * p..(g * nt + t + 1) * p];
                    for r in 0..p {
                        rr[r] += phi[r] * y;
                    }
                }
            }
            (gram, rhs, counts)
        })
        .collect();
    let mut gram = vec![0.0; n_groups * p * p];
    let mut rhs = vec![0.0; n_groups * nt * p];
    let mut counts = vec![0usize; n_groups];
    for (g2, r2, c2) in partials {
        gram.iter_mut().zip(&g2).for_each(|(a, b)| *a += b);
        rhs.iter_mut().zip(&r2).for_each(|(a, b)| *a += b);
        counts.iter_mut().zip(&c2).for_each(|(a, b)| *a += b);
    }

    let mut coef = Vec::with_capacity(n_groups);
    let mut gram_inv = Vec::with_capacity(n_groups);
    let mut condition = 1.0_f64;
    for g in 0..n_groups {
        if counts[g] < p {
            return Err(Error::InsufficientSamples { have: counts[g], need: p, what: "paths in a regression group" });
        }
        let gg = &gram[g * p * p..(g + 1) * p * p];
        let mut m = DMatrix::zeros(p, p);
        for r in 0..p {
            for s in r..p {
                m[(r, s)] = gg[r * p + s];
                m[(s, r)] = gg[r * p + s];
            }
        }
        let scale: Vec<f64> = (0..p).map(|r| if m[(r, r)] > 0.0 { 1.0 / m[(r, r)].sqrt() } else { 0.0 }).collect();
        if scale.contains(&0.0) {
            return Err(Error::IllConditioned { step, condition: f64::INFINITY });
        }
        let scaled = DMatrix::from_fn(p, p, |r, s| m[(r, s)] * scale[r] * scale[s]);
        let eig = SymmetricEigen::new(scaled.clone());
        let lo = eig.eigenvalues.min();
        let hi = eig.eigenvalues.max();
        let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(cond <= MAX_CONDITION) {
            return Err(Error::IllConditioned { step, condition: cond });
        }
        condition = condition.max(cond);
        let chol = scaled.cholesky().ok_or(Error::IllConditioned { step, condition: cond })?;
        let mut per_target = Vec::with_capacity(nt);
        for t in 0..nt {
            let b = DVector::from_fn(p, |r, _| rhs[(g * nt + t) * p + r] * scale[r]);
            let sol = chol.solve(&b);
            per_target.push((0..p).map(|r| sol[r] * scale[r]).collect());
        }
        let inv_scaled = chol.inverse();
        gram_inv.push(DMatrix::from_fn(p, p, |r, s| inv_scaled[(r, s)] * scale[r] * scale[s]));
        coef.push(per_target);
    }
    Ok(GroupFit { coef, gram_inv, counts, condition })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_counts() {
        let b = RegressionBasis::default();
        assert_eq!(b.n_functions(1), 4);
        assert_eq!(b.n_functions(2), 10);
        assert_eq!(b.size(1, 2), 8);
        assert!(RegressionBasis::new(BasisFamily::Polynomial, 0, 1.0).is_err());
    }

    #[test]
    fn recovers_cubic_exactly() {
        let basis = RegressionBasis::new(BasisFamily::Polynomial, 3, 5.0).unwrap();
        let fm = FeatureMap::new(&basis, 1);
        let xs: Vec<f64> = (0..200).map(|i| -3.0 + 6.0 * i as f64 / 199.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 - 2.0 * x + 0.5 * x * x * x).collect();
        let fit = fit_groups(&fm, &xs, 1, &vec![0; 200], 1, &[&ys], 0).unwrap();
        let mut scratch = vec![0.0; 4];
        for x in [-2.5, 0.0, 1.7] {
            let got = fm.dot(&[x], &fit.coef[0][0], &mut scratch);
            assert!((got - (1.0 - 2.0 * x + 0.5 * x * x * x)).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_sample_is_rejected() {
        let basis = RegressionBasis::default();
        let fm = FeatureMap::new(&basis, 1);
        let xs = vec![1.0; 100];
        let ys = vec![0.0; 100];
        assert!(matches!(
            fit_groups(&fm, &xs, 1, &vec![0; 100], 1, &[&ys], 7),
            Err(Error::IllConditioned { step: 7, .. })
        ));
    }
}
