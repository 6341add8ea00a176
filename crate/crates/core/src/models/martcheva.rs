//! Cholera model with vaccination and an environmental pathogen reservoir B.

use std::sync::Arc;

use super::{check_finite, require_positive, ModelSystem};
use crate::error::{Error, Result};
use crate::params::names;

#[derive(Debug, Clone)]
pub struct Martcheva5d {
    states: Vec<String>,
    params: Arc<[String]>,
}

impl Martcheva5d {
    pub fn new() -> Self {
        Self {
            states: ["S", "V", "I", "R", "B"].map(String::from).to_vec(),
            params: names(&[
                "Lambda", "beta", "D", "mu", "psi", "w", "sigma", "gamma", "eta", "delta",
            ]),
        }
    }
}

impl Default for Martcheva5d {
    fn default() -> Self {
        Self::new()
    }
}

impl ModelSystem for Martcheva5d {
    fn id(&self) -> &str {
        "martcheva5d"
    }
    fn state_names(&self) -> &[String] {
        &self.states
    }
    fn param_names(&self) -> &Arc<[String]> {
        &self.params
    }
    fn infected(&self) -> &[usize] {
        &[2, 4]
    }

    fn rhs_into(&self, x: &[f64], p: &[f64], out: &mut [f64]) -> Result<()> {
        let [lambda, beta, d, mu, psi, w, sigma, gamma, eta, delta] = p[..] else {
            unreachable!()
        };
        let [s, v, i, r, b] = x[..] else {
            unreachable!()
        };
        if b + d == 0.0 {
            return Err(Error::Domain("B + D = 0 in the force of infection".into()));
        }
        let force = beta * b / (b + d);
        out[0] = lambda - force * s - (mu + psi) * s + w * r;
        out[1] = psi * s - sigma * force * v - mu * v;
        out[2] = force * s + sigma * force * v - (mu + gamma) * i;
        out[3] = gamma * i - (mu + w) * r;
        out[4] = eta * i - delta * b;
        check_finite(self.id(), x, out)
    }

    fn dfe(&self, p: &[f64]) -> Result<Vec<f64>> {
        let (lambda, mu, psi) = (p[0], p[3], p[4]);
        Ok(vec![
            lambda / (mu + psi),
            lambda * psi / (mu * (mu + psi)),
            0.0,
            0.0,
            0.0,
        ])
    }

    fn check_admissible(&self, p: &[f64]) -> Result<()> {
        require_positive(&self.params, p, &["sigma"])?;
        if !(0.0..=1.0).contains(&p[6]) {
            return Err(Error::Inadmissible(format!(
                "sigma = {} must lie in [0, 1]",
                p[6]
            )));
        }
        Ok(())
    }

    fn new_infections(&self, x: &[f64], p: &[f64]) -> Option<Result<Vec<f64>>> {
        let (beta, d, sigma) = (p[1], p[2], p[6]);
        let (s, v, b) = (x[0], x[1], x[4]);
        if b + d == 0.0 {
            return Some(Err(Error::Domain("B + D = 0".into())));
        }
        Some(Ok(vec![beta * (s + sigma * v) * b / (b + d), 0.0]))
    }

    fn default_params(&self) -> Option<Vec<f64>> {
        Some(vec![0.02, 100.0, 1.0, 0.1, 2.4, 0.5, 0.1, 5.0, 1.0, 1.0])
    }
}
