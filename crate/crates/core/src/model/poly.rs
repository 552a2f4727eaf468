use serde::{Deserialize, Serialize};

/// `coef · Π x_i^{x[i]} · Π a_j^{a[j]}`; missing exponents are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    #[serde(default)]
    pub x: Vec<u32>,
    #[serde(default)]
    pub a: Vec<u32>,
}

impl Monomial {
    pub fn eval(&self, x: &[f64], a: &[f64]) -> f64 {
        let px: f64 = self
            .x
            .iter()
            .enumerate()
            .map(|(i, &p)| x.get(i).copied().unwrap_or(0.0).powi(p as i32))
            .product();
        let pa: f64 = self
            .a
            .iter()
            .enumerate()
            .map(|(i, &p)| a.get(i).copied().unwrap_or(0.0).powi(p as i32))
            .product();
        self.coef * px * pa
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial(pub Vec<Monomial>);

impl Polynomial {
    pub fn eval(&self, x: &[f64], a: &[f64]) -> f64 {
        self.0.iter().map(|m| m.eval(x, a)).sum()
    }

    pub fn max_x_power(&self) -> usize {
        self.0
            .iter()
            .flat_map(|m| m.x.iter().chain(&m.a))
            .map(|&p| p as usize)
            .max()
            .unwrap_or(0)
    }
}
