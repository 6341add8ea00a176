//! Brauer's SIS model with imperfect vaccination.

use std::sync::Arc;

use super::{check_finite, require_positive, ModelSystem};
use crate::error::{Error, Result};
use crate::params::names;

fn check_sigma(sigma: f64) -> Result<()> {
    if (0.0..=1.0).contains(&sigma) {
        Ok(())
    } else {
        Err(Error::Inadmissible(format!("sigma = {sigma} must lie in [0, 1]")))
    }
}

/// Reduced system in (I, V) with total population K.
#[derive(Debug, Clone)]
pub struct Brauer2d {
    states: Vec<String>,
    params: Arc<[String]>,
}

impl Brauer2d {
    pub fn new() -> Self {
        Self {
            states: vec!["I".into(), "V".into()],
            params: names(&["beta", "K", "mu", "gamma", "sigma", "phi", "theta"]),
        }
    }
}

impl Default for Brauer2d {
    fn default() -> Self {
        Self::new()
    }
}

impl ModelSystem for Brauer2d {
    fn id(&self) -> &str {
        "brauer2d"
    }
    fn state_names(&self) -> &[String] {
        &self.states
    }
    fn param_names(&self) -> &Arc<[String]> {
        &self.params
    }
    fn infected(&self) -> &[usize] {
        &[0]
    }

    fn rhs_into(&self, x: &[f64], p: &[f64], out: &mut [f64]) -> Result<()> {
        let [beta, k, mu, gamma, sigma, phi, theta] = p[..] else {
            unreachable!()
        };
        let (i, v) = (x[0], x[1]);
        out[0] = beta * (k - i - v) * i + sigma * beta * v * i - (mu + gamma) * i;
        out[1] = phi * (k - i - v) - sigma * beta * v * i - (mu + theta) * v;
        check_finite(self.id(), x, out)
    }

    fn dfe(&self, p: &[f64]) -> Result<Vec<f64>> {
        let (k, mu, phi, theta) = (p[1], p[2], p[5], p[6]);
        Ok(vec![0.0, phi * k / (mu + theta + phi)])
    }

    fn check_admissible(&self, p: &[f64]) -> Result<()> {
        require_positive(&self.params, p, &["sigma"])?;
        check_sigma(p[4])
    }

    fn new_infections(&self, x: &[f64], p: &[f64]) -> Option<Result<Vec<f64>>> {
        let (beta, k, sigma) = (p[0], p[1], p[4]);
        let (i, v) = (x[0], x[1]);
        Some(Ok(vec![beta * (k - i - (1.0 - sigma) * v) * i]))
    }

    fn default_params(&self) -> Option<Vec<f64>> {
        Some(vec![0.05, 10.0, 0.1, 1.0, 0.2, 0.5, 0.1])
    }
}

/// Full system in (S, I, V) with recruitment Lambda.
#[derive(Debug, Clone)]
pub struct Brauer3d {
    states: Vec<String>,
    params: Arc<[String]>,
}

impl Brauer3d {
    pub fn new() -> Self {
        Self {
            states: vec!["S".into(), "I".into(), "V".into()],
            params: names(&["Lambda", "beta", "mu", "gamma", "sigma", "phi", "theta"]),
        }
    }
}

impl Default for Brauer3d {
    fn default() -> Self {
        Self::new()
    }
}

impl ModelSystem for Brauer3d {
    fn id(&self) -> &str {
        "brauer3d"
    }
    fn state_names(&self) -> &[String] {
        &self.states
    }
    fn param_names(&self) -> &Arc<[String]> {
        &self.params
    }
    fn infected(&self) -> &[usize] {
        &[1]
    }

    fn rhs_into(&self, x: &[f64], p: &[f64], out: &mut [f64]) -> Result<()> {
        let [lambda, beta, mu, gamma, sigma, phi, theta] = p[..] else {
            unreachable!()
        };
        let (s, i, v) = (x[0], x[1], x[2]);
        out[0] = lambda - beta * s * i - (mu + phi) * s + gamma * i + theta * v;
        out[1] = beta * s * i + sigma * beta * v * i - (mu + gamma) * i;
        out[2] = phi * s - sigma * beta * v * i - (mu + theta) * v;
        check_finite(self.id(), x, out)
    }

    fn dfe(&self, p: &[f64]) -> Result<Vec<f64>> {
        let (lambda, mu, phi, theta) = (p[0], p[2], p[5], p[6]);
        let denom = mu * (mu + phi + theta);
        Ok(vec![(mu + theta) * lambda / denom, 0.0, phi * lambda / denom])
    }

    fn check_admissible(&self, p: &[f64]) -> Result<()> {
        require_positive(&self.params, p, &["sigma"])?;
        check_sigma(p[4])
    }

    fn new_infections(&self, x: &[f64], p: &[f64]) -> Option<Result<Vec<f64>>> {
        let (beta, sigma) = (p[1], p[4]);
        let (s, i, v) = (x[0], x[1], x[2]);
        Some(Ok(vec![beta * s * i + sigma * beta * v * i]))
    }

    fn default_params(&self) -> Option<Vec<f64>> {
        Some(vec![1.0, 0.05, 0.1, 1.0, 0.2, 0.5, 0.1])
    }
}
