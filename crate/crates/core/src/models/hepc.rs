//! In-host hepatitis C model: healthy cells T, infected cells I, virions V.

use std::sync::Arc;

use serde::Serialize;

use super::{check_finite, require_positive, ModelSystem};
use crate::error::{Error, Result};
use crate::params::{names, ParamMap};

const S: usize = 0;
const R_T: usize = 1;
const T_MAX: usize = 2;
const D: usize = 3;
const B: usize = 4;
const DELTA: usize = 6;
const R_I: usize = 9;

/// Closed-form DFE quantities: the healthy-cell level `p0` and the Jacobian entries
/// `-a11`, `-a12` (row T) and `a22` (diagonal entry of row I).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HepcDfe {
    pub p0: f64,
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

pub(crate) fn dfe_quantities(p: &[f64]) -> HepcDfe {
    let (s, r_t, t_max, d) = (p[S], p[R_T], p[T_MAX], p[D]);
    let a11 = ((r_t - d).powi(2) + 4.0 * s * r_t / t_max).sqrt();
    let p0 = (r_t - d + a11) * t_max / (2.0 * r_t);
    let a12 = p0 * r_t / t_max;
    let a22 = -(p[DELTA] + p[R_I] * (p0 / t_max - 1.0));
    HepcDfe { p0, a11, a12, a22 }
}

/// `(p0, a11, a12, a22)` for admissible hepc3d parameters.
pub fn hepc_dfe_quantities(params: &ParamMap) -> Result<HepcDfe> {
    HepC::new(false).check_admissible(params.values())?;
    Ok(dfe_quantities(params.values()))
}

#[derive(Debug, Clone)]
pub struct HepC {
    truncated: bool,
    states: Vec<String>,
    params: Arc<[String]>,
}

impl HepC {
    pub fn new(truncated: bool) -> Self {
        Self {
            truncated,
            states: ["T", "I", "V"].map(String::from).to_vec(),
            params: names(&[
                "s", "r_T", "T_max", "d", "b", "c", "delta", "rho", "R_star", "r_I",
            ]),
        }
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }
}

impl ModelSystem for HepC {
    fn id(&self) -> &str {
        if self.truncated {
            "hepc3d-truncated"
        } else {
            "hepc3d"
        }
    }
    fn state_names(&self) -> &[String] {
        &self.states
    }
    fn param_names(&self) -> &Arc<[String]> {
        &self.params
    }
    fn infected(&self) -> &[usize] {
        &[1, 2]
    }

    fn rhs_into(&self, x: &[f64], p: &[f64], out: &mut [f64]) -> Result<()> {
        let [s, r_t, t_max, d, b, c, delta, rho, r_star, r_i] = p[..] else {
            unreachable!()
        };
        let (s, d) = if self.truncated { (0.0, 0.0) } else { (s, d) };
        let (t, i, v) = (x[0], x[1], x[2]);
        let n = t + i;
        if n <= 1e-300 {
            return Err(Error::Domain(format!(
                "T + I = {n:e} is not positive (standard incidence undefined)"
            )));
        }
        let infection = b * t * v / n;
        let crowding = 1.0 - n / t_max;
        out[0] = s + r_t * t * crowding - d * t - infection;
        out[1] = r_i * i * crowding + infection - delta * i;
        out[2] = rho * r_star * i - c * v - infection;
        check_finite(self.id(), x, out)
    }

    fn dfe(&self, p: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![dfe_quantities(p).p0, 0.0, 0.0])
    }

    fn check_admissible(&self, p: &[f64]) -> Result<()> {
        require_positive(&self.params, p, &["s", "d"])?;
        if p[S] < 0.0 || p[D] < 0.0 {
            return Err(Error::Inadmissible("s and d must be non-negative".into()));
        }
        if self.truncated && (p[S] != 0.0 || p[D] != 0.0) {
            return Err(Error::Inadmissible(
                "the truncated model requires s = 0 and d = 0".into(),
            ));
        }
        if dfe_quantities(p).p0 <= 0.0 {
            return Err(Error::Inadmissible(
                "no positive healthy-cell equilibrium (s = 0 and d >= r_T)".into(),
            ));
        }
        Ok(())
    }

    fn check_analysis(&self, p: &[f64]) -> Result<()> {
        self.check_admissible(p)?;
        let q = dfe_quantities(p);
        let floor = p[R_I] * (1.0 - q.p0 / p[T_MAX]);
        if p[DELTA] <= floor {
            return Err(Error::Inadmissible(format!(
                "analysis requires delta > r_I (1 - p0/T_max) = {floor}"
            )));
        }
        Ok(())
    }

    fn new_infections(&self, x: &[f64], p: &[f64]) -> Option<Result<Vec<f64>>> {
        let n = x[0] + x[1];
        if n <= 1e-300 {
            return Some(Err(Error::Domain("T + I is not positive".into())));
        }
        Some(Ok(vec![p[B] * x[0] * x[2] / n, 0.0]))
    }

    fn default_params(&self) -> Option<Vec<f64>> {
        let (s, d) = if self.truncated { (0.0, 0.0) } else { (0.7, 0.4) };
        Some(vec![s, 1.3, 2.0, d, 0.9, 1.1, 1.0, 1.0, 1.0, 0.5])
    }
}
