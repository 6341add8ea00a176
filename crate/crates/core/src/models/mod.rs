//! Parameterized ODE models with a designated set of infected variables.
//!
//! Every model exposes its right-hand side only; derivatives are taken
//! numerically by [`crate::numdiff`]. The built-in catalog covers the
//! Brauer vaccination model (reduced and full), the Martcheva cholera model
//! and the in-host hepatitis C model, the latter with a truncated variant
//! in which the source and death terms of healthy cells are switched off.

mod brauer;
pub mod expr;
pub(crate) mod hepc;
mod martcheva;
pub mod user;

use std::fmt;
use std::sync::Arc;

pub use brauer::{Brauer2d, Brauer3d};
pub use hepc::{hepc_dfe_quantities, HepC, HepcDfe};
pub use martcheva::Martcheva5d;
pub use user::UserModel;

use crate::error::{Error, Result};
use crate::params::ParamMap;

/// A parameterized vector field `x' = f(x, p)` with a disease-free equilibrium.
///
/// Implementations must be pure: the same `(x, p)` always yields the same
/// output. `rhs_into` must not check admissibility (the differentiation
/// stencils step slightly outside admissible sets), only numerical domain.
pub trait ModelSystem: Send + Sync + fmt::Debug {
    fn id(&self) -> &str;
    fn state_names(&self) -> &[String];
    fn param_names(&self) -> &Arc<[String]>;
    /// Indices of the infected variables, in the order used for F and V.
    fn infected(&self) -> &[usize];

    fn dim(&self) -> usize {
        self.state_names().len()
    }

    fn rhs_into(&self, x: &[f64], p: &[f64], out: &mut [f64]) -> Result<()>;

    fn dfe(&self, p: &[f64]) -> Result<Vec<f64>>;

    fn check_admissible(&self, p: &[f64]) -> Result<()>;

    /// Extra conditions required before R0 or bifurcation analysis.
    fn check_analysis(&self, p: &[f64]) -> Result<()> {
        self.check_admissible(p)
    }

    /// New-infection terms F_i for each infected variable, if the model has the split.
    /// The transition terms are V_i = F_i - f_i.
    fn new_infections(&self, _x: &[f64], _p: &[f64]) -> Option<Result<Vec<f64>>> {
        None
    }

    fn default_params(&self) -> Option<Vec<f64>> {
        None
    }

    fn rhs(&self, x: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.rhs_into(x, p, &mut out)?;
        Ok(out)
    }

    fn params(&self, values: Vec<f64>) -> Result<ParamMap> {
        ParamMap::new(self.param_names().clone(), values)
    }

    fn params_from(&self, pairs: &[(&str, f64)]) -> Result<ParamMap> {
        ParamMap::from_pairs(self.param_names().clone(), pairs)
    }

    fn defaults(&self) -> Option<ParamMap> {
        self.default_params().and_then(|v| self.params(v).ok())
    }

    fn state_index(&self, name: &str) -> Option<usize> {
        self.state_names().iter().position(|n| n == name)
    }
}

/// Evaluates the right-hand side after validating dimensions and admissibility.
pub fn evaluate_rhs(model: &dyn ModelSystem, x: &[f64], params: &ParamMap) -> Result<Vec<f64>> {
    check_params(model, params)?;
    if x.len() != model.dim() {
        return Err(Error::Dimension {
            expected: model.dim(),
            got: x.len(),
        });
    }
    model.rhs(x, params.values())
}

/// Disease-free equilibrium for admissible parameters.
pub fn dfe(model: &dyn ModelSystem, params: &ParamMap) -> Result<Vec<f64>> {
    check_params(model, params)?;
    model.dfe(params.values())
}

pub fn check_params(model: &dyn ModelSystem, params: &ParamMap) -> Result<()> {
    if params.names() != &model.param_names()[..] {
        return Err(Error::Inadmissible(format!(
            "parameter set does not belong to model `{}`",
            model.id()
        )));
    }
    model.check_admissible(params.values())
}

/// Ids of the built-in models.
pub const BUILTIN_IDS: [&str; 5] = [
    "brauer2d",
    "brauer3d",
    "martcheva5d",
    "hepc3d",
    "hepc3d-truncated",
];

/// Looks up a built-in model by id.
pub fn builtin(id: &str) -> Result<Arc<dyn ModelSystem>> {
    Ok(match id {
        "brauer2d" => Arc::new(Brauer2d::new()),
        "brauer3d" => Arc::new(Brauer3d::new()),
        "martcheva5d" => Arc::new(Martcheva5d::new()),
        "hepc3d" => Arc::new(HepC::new(false)),
        "hepc3d-truncated" => Arc::new(HepC::new(true)),
        other => return Err(Error::UnknownModel(other.to_string())),
    })
}

pub(crate) fn require_positive(names: &[String], p: &[f64], skip: &[&str]) -> Result<()> {
    for (n, v) in names.iter().zip(p) {
        if !v.is_finite() {
            return Err(Error::Inadmissible(format!("{n} = {v} is not finite")));
        }
        if skip.contains(&n.as_str()) {
            continue;
        }
        if *v <= 0.0 {
            return Err(Error::Inadmissible(format!("{n} = {v} must be positive")));
        }
    }
    Ok(())
}

pub(crate) fn check_finite(id: &str, x: &[f64], out: &[f64]) -> Result<()> {
    if out.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "model `{id}` produced a non-finite value at x = {x:?}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::sampling::sample_params;

    #[test]
    fn dfe_is_a_steady_state_for_random_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for id in BUILTIN_IDS {
            let m = builtin(id).unwrap();
            for _ in 0..100 {
                let p = sample_params(m.as_ref(), &mut rng);
                let x0 = dfe(m.as_ref(), &p).unwrap();
                let f = evaluate_rhs(m.as_ref(), &x0, &p).unwrap();
                let norm = f.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
                assert!(norm <= 1e-10 * (1.0 + p.inf_norm()), "{id}: {f:?}");
                for &i in m.infected() {
                    assert_eq!(x0[i], 0.0);
                }
            }
        }
    }

    #[test]
    fn new_infections_nonnegative_and_vanish_at_dfe() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for id in BUILTIN_IDS {
            let m = builtin(id).unwrap();
            for _ in 0..20 {
                let p = sample_params(m.as_ref(), &mut rng);
                let x0 = dfe(m.as_ref(), &p).unwrap();
                let at_dfe = m.new_infections(&x0, p.values()).unwrap().unwrap();
                assert!(at_dfe.iter().all(|v| *v == 0.0), "{id}: {at_dfe:?}");
                let x: Vec<f64> = x0
                    .iter()
                    .map(|v| v + rng.random_range(1e-3..1e-2) * (1.0 + v))
                    .collect();
                let fi = m.new_infections(&x, p.values()).unwrap().unwrap();
                assert_eq!(fi.len(), m.infected().len());
                assert!(fi.iter().all(|v| *v >= 0.0), "{id}: {fi:?}");
            }
        }
    }

    #[test]
    fn dfe_independent_of_contact_parameters() {
        let cases: [(&str, &[&str]); 3] = [
            ("hepc3d", &["rho", "delta", "b", "c", "r_I", "R_star"]),
            ("martcheva5d", &["eta"]),
            ("brauer3d", &["beta"]),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (id, names) in cases {
            let m = builtin(id).unwrap();
            let p = sample_params(m.as_ref(), &mut rng);
            let x0 = dfe(m.as_ref(), &p).unwrap();
            for name in names {
                let q = p.with(name, p.get(name).unwrap() * 1.7).unwrap();
                assert_eq!(m.dfe(q.values()).unwrap(), x0, "{id} {name}");
            }
        }
    }

    #[test]
    fn brauer2d_states_lift_to_brauer3d() {
        let m2 = builtin("brauer2d").unwrap();
        let m3 = builtin("brauer3d").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..50 {
            let p3 = sample_params(m3.as_ref(), &mut rng);
            let k = p3.get("Lambda").unwrap() / p3.get("mu").unwrap();
            let p2 = m2
                .params_from(&[
                    ("beta", p3.get("beta").unwrap()),
                    ("K", k),
                    ("mu", p3.get("mu").unwrap()),
                    ("gamma", p3.get("gamma").unwrap()),
                    ("sigma", p3.get("sigma").unwrap()),
                    ("phi", p3.get("phi").unwrap()),
                    ("theta", p3.get("theta").unwrap()),
                ])
                .unwrap();
            for st in crate::steadystate::enumerate(m2.as_ref(), &p2).unwrap() {
                let (i, v) = (st.x[0], st.x[1]);
                let lifted = [k - i - v, i, v];
                let f = m3.rhs(&lifted, p3.values()).unwrap();
                let norm = f.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
                assert!(norm <= 1e-9 * (1.0 + k), "{f:?}");
            }
        }
    }

    #[test]
    fn dimension_and_admissibility_errors() {
        let m = builtin("brauer2d").unwrap();
        let p = m.defaults().unwrap();
        assert!(matches!(
            evaluate_rhs(m.as_ref(), &[0.0], &p),
            Err(Error::Dimension { .. })
        ));
        let bad = p.with("sigma", 1.5).unwrap();
        assert!(matches!(
            evaluate_rhs(m.as_ref(), &[0.0, 0.0], &bad),
            Err(Error::Inadmissible(_))
        ));
        assert!(matches!(builtin("sir"), Err(Error::UnknownModel(_))));
    }
}
