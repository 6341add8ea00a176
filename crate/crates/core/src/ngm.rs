//! Next-generation matrix, R0, and stability of the disease-free equilibrium.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, ser_complex_vec, ser_matrix, C64};
use crate::models::{check_params, ModelSystem};
use crate::numdiff::jacobian_raw;
use crate::params::ParamMap;

#[derive(Debug, Clone, Serialize)]
pub struct R0Report {
    pub r0: f64,
    #[serde(rename = "F", serialize_with = "ser_matrix")]
    pub f: DMatrix<f64>,
    #[serde(rename = "V", serialize_with = "ser_matrix")]
    pub v: DMatrix<f64>,
    pub dfe: Vec<f64>,
    /// Spectrum of the full Jacobian at the DFE.
    #[serde(serialize_with = "ser_complex_vec")]
    pub dfe_eigenvalues: Vec<C64>,
    /// Spectrum of F - V.
    #[serde(serialize_with = "ser_complex_vec")]
    pub infected_eigenvalues: Vec<C64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DfeStability {
    Stable,
    Unstable,
    Marginal,
}

/// The new-infection part embedded in the full state space, so the shared
/// differentiation engine can take its Jacobian.
#[derive(Debug)]
struct NewInfections<'a>(&'a dyn ModelSystem);

impl ModelSystem for NewInfections<'_> {
    fn id(&self) -> &str {
        self.0.id()
    }
    fn state_names(&self) -> &[String] {
        self.0.state_names()
    }
    fn param_names(&self) -> &Arc<[String]> {
        self.0.param_names()
    }
    fn infected(&self) -> &[usize] {
        self.0.infected()
    }
    fn rhs_into(&self, x: &[f64], p: &[f64], out: &mut [f64]) -> Result<()> {
        let f = self
            .0
            .new_infections(x, p)
            .ok_or_else(|| Error::NoSplit(self.0.id().into()))??;
        out.iter_mut().for_each(|o| *o = 0.0);
        for (k, &i) in self.0.infected().iter().enumerate() {
            out[i] = f[k];
        }
        Ok(())
    }
    fn dfe(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.0.dfe(p)
    }
    fn check_admissible(&self, p: &[f64]) -> Result<()> {
        self.0.check_admissible(p)
    }
}

fn restrict(full: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| full[(idx[r], idx[c])])
}

pub(crate) fn r0_raw(model: &dyn ModelSystem, p: &[f64]) -> Result<R0Report> {
    let x0 = model.dfe(p)?;
    if model.new_infections(&x0, p).is_none() {
        return Err(Error::NoSplit(model.id().into()));
    }
    let idx = model.infected();
    let jac = jacobian_raw(model, &x0, p)?;
    let f_full = jacobian_raw(&NewInfections(model), &x0, p)?;
    let f = restrict(&f_full, idx);
    let j1 = restrict(&jac, idx);
    let v = &f - &j1;
    let v_inv = v.clone().try_inverse().ok_or(Error::SingularTransition)?;
    let scale = linalg::mat_inf_norm(&v).max(f64::MIN_POSITIVE);
    if v.determinant().abs() <= 1e-14 * scale.powi(idx.len() as i32) {
        return Err(Error::SingularTransition);
    }
    let ngm = &f * v_inv;
    Ok(R0Report {
        r0: linalg::spectral_radius(&ngm),
        f,
        v,
        dfe_eigenvalues: linalg::eigenvalues(&jac),
        infected_eigenvalues: linalg::eigenvalues(&j1),
        dfe: x0,
    })
}

/// R0 as the spectral radius of F V^-1 at the DFE.
pub fn r0(model: &dyn ModelSystem, params: &ParamMap) -> Result<R0Report> {
    check_params(model, params)?;
    model.check_analysis(params.values())?;
    r0_raw(model, params.values())
}

pub(crate) fn classify_spectrum(ev: &[C64], jac_norm: f64) -> DfeStability {
    let m = linalg::max_real_part(ev);
    if m.abs() <= 1e-8 * (1.0 + jac_norm) {
        DfeStability::Marginal
    } else if m < 0.0 {
        DfeStability::Stable
    } else {
        DfeStability::Unstable
    }
}

pub fn dfe_stability(model: &dyn ModelSystem, params: &ParamMap) -> Result<DfeStability> {
    check_params(model, params)?;
    let p = params.values();
    let x0 = model.dfe(p)?;
    let jac = jacobian_raw(model, &x0, p)?;
    Ok(classify_spectrum(
        &linalg::eigenvalues(&jac),
        linalg::mat_inf_norm(&jac),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{builtin, hepc_dfe_quantities};
    use crate::sampling::sample_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn closed_form_r0(id: &str, p: &ParamMap) -> f64 {
        let g = |n: &str| p.get(n).unwrap();
        match id {
            "martcheva5d" => {
                let s0 = g("Lambda") / (g("mu") + g("psi"));
                let v0 = g("Lambda") * g("psi") / (g("mu") * (g("mu") + g("psi")));
                g("eta") * g("beta") * (s0 + g("sigma") * v0)
                    / (g("D") * g("delta") * (g("mu") + g("gamma")))
            }
            "hepc3d" | "hepc3d-truncated" => {
                let q = hepc_dfe_quantities(p).unwrap();
                g("b") * g("rho") * g("R_star")
                    / ((g("b") + g("c")) * (g("delta") - g("r_I") * (1.0 - q.p0 / g("T_max"))))
            }
            "brauer2d" | "brauer3d" => {
                let k = if id == "brauer2d" { g("K") } else { g("Lambda") / g("mu") };
                g("beta") * k * (g("mu") + g("theta") + g("sigma") * g("phi"))
                    / ((g("mu") + g("gamma")) * (g("mu") + g("theta") + g("phi")))
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn closed_forms_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for id in crate::models::BUILTIN_IDS {
            let m = builtin(id).unwrap();
            for _ in 0..100 {
                let p = sample_params(m.as_ref(), &mut rng);
                let rep = r0(m.as_ref(), &p).unwrap();
                let expect = closed_form_r0(id, &p);
                assert!((rep.r0 - expect).abs() <= 1e-9 * expect, "{id}: {} vs {expect}", rep.r0);
            }
        }
    }

    #[test]
    fn threshold_sign_matches_infected_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for id in crate::models::BUILTIN_IDS {
            let m = builtin(id).unwrap();
            for _ in 0..100 {
                let p = sample_params(m.as_ref(), &mut rng);
                let rep = r0(m.as_ref(), &p).unwrap();
                if (rep.r0 - 1.0).abs() < 1e-6 {
                    continue;
                }
                let mr = linalg::max_real_part(&rep.infected_eigenvalues);
                assert_eq!(mr > 0.0, rep.r0 > 1.0, "{id}");
            }
        }
    }

    #[test]
    fn brauer3d_sigma_one() {
        let m = builtin("brauer3d").unwrap();
        let p = m.defaults().unwrap().with("sigma", 1.0).unwrap();
        let g = |n: &str| p.get(n).unwrap();
        let expect = g("beta") * g("Lambda") / g("mu") / (g("mu") + g("gamma"));
        assert!((r0(m.as_ref(), &p).unwrap().r0 - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn brauer2d_below_threshold_is_stable() {
        let m = builtin("brauer2d").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut seen = [0; 2];
        for _ in 0..200 {
            let p = sample_params(m.as_ref(), &mut rng);
            let r = closed_form_r0("brauer2d", &p);
            let st = dfe_stability(m.as_ref(), &p).unwrap();
            if r < 1.0 - 1e-6 {
                assert_eq!(st, DfeStability::Stable);
                seen[0] += 1;
            } else if r > 1.0 + 1e-6 {
                assert_eq!(st, DfeStability::Unstable);
                seen[1] += 1;
            }
        }
        assert!(seen[0] > 10 && seen[1] > 10);
    }

    #[test]
    fn hepc_delta_at_threshold_is_marginal() {
        let m = builtin("hepc3d").unwrap();
        let mut p = m.defaults().unwrap();
        let q = hepc_dfe_quantities(&p).unwrap();
        let g = |n: &str| p.get(n).unwrap();
        let delta = g("b") * g("rho") * g("R_star") / (g("b") + g("c"))
            + g("r_I") * (1.0 - q.p0 / g("T_max"));
        p.set("delta", delta).unwrap();
        assert_eq!(dfe_stability(m.as_ref(), &p).unwrap(), DfeStability::Marginal);
    }

    #[test]
    fn missing_split_is_an_error() {
        let m = crate::models::UserModel::from_json(
            r#"{"id":"nosplit","states":["x"],"params":["k"],"infected":["x"],
                "rhs":["k*x"],"dfe":["0"]}"#,
        )
        .unwrap();
        let p = m.params(vec![1.0]).unwrap();
        assert!(matches!(r0(&m, &p), Err(Error::NoSplit(_))));
    }

    #[test]
    fn singular_transition_is_an_error() {
        let m = crate::models::UserModel::from_json(
            r#"{"id":"flat","states":["x"],"params":["k"],"infected":["x"],
                "rhs":["k*x"],"dfe":["0"],"new_infections":["k*x"]}"#,
        )
        .unwrap();
        let p = m.params(vec![1.0]).unwrap();
        assert!(matches!(r0(&m, &p), Err(Error::SingularTransition)));
    }
}
