//! Models loaded from a declarative JSON description.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use super::expr::{parse, Expr, Scope};
use super::{check_finite, ModelSystem};
use crate::error::{Error, Result};

/// On-disk description of a user model. See the README for an example.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub id: String,
    pub states: Vec<String>,
    pub params: Vec<String>,
    pub infected: Vec<String>,
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
    pub rhs: Vec<String>,
    /// DFE components as expressions in parameters and constants.
    pub dfe: Vec<String>,
    /// New-infection terms, one per infected state.
    #[serde(default)]
    pub new_infections: Option<Vec<String>>,
    #[serde(default)]
    pub defaults: Option<BTreeMap<String, f64>>,
    /// Parameters allowed to be zero; all others must be strictly positive.
    #[serde(default)]
    pub nonnegative: Vec<String>,
    /// Optional closed intervals `[lo, hi]` for individual parameters.
    #[serde(default)]
    pub bounds: BTreeMap<String, [f64; 2]>,
}

#[derive(Debug, Clone)]
pub struct UserModel {
    id: String,
    states: Vec<String>,
    params: Arc<[String]>,
    infected: Vec<usize>,
    rhs: Vec<Expr>,
    dfe: Vec<Expr>,
    new_infections: Option<Vec<Expr>>,
    defaults: Option<Vec<f64>>,
    nonnegative: Vec<bool>,
    bounds: Vec<Option<[f64; 2]>>,
}

impl UserModel {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_spec(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn from_spec(spec: ModelSpec) -> Result<Self> {
        let n = spec.states.len();
        if n == 0 {
            return Err(Error::Parse("model needs at least one state".into()));
        }
        for list in [&spec.states, &spec.params] {
            let mut sorted = list.clone();
            sorted.sort();
            sorted.dedup();
            if sorted.len() != list.len() {
                return Err(Error::Parse("duplicate state or parameter name".into()));
            }
        }
        let dim_check = |what: &str, got: usize, expected: usize| {
            if got == expected {
                Ok(())
            } else {
                Err(Error::Parse(format!(
                    "`{what}` has {got} entries, expected {expected}"
                )))
            }
        };
        dim_check("rhs", spec.rhs.len(), n)?;
        dim_check("dfe", spec.dfe.len(), n)?;

        let infected = spec
            .infected
            .iter()
            .map(|name| {
                spec.states
                    .iter()
                    .position(|s| s == name)
                    .ok_or_else(|| Error::Parse(format!("infected `{name}` is not a state")))
            })
            .collect::<Result<Vec<_>>>()?;
        if infected.is_empty() {
            return Err(Error::Parse("at least one infected state is required".into()));
        }

        let scope = Scope {
            states: &spec.states,
            params: &spec.params,
            constants: &spec.constants,
        };
        let no_states = Scope {
            states: &[],
            ..scope
        };
        let rhs = spec
            .rhs
            .iter()
            .map(|s| parse(s, &scope))
            .collect::<Result<Vec<_>>>()?;
        let dfe = spec
            .dfe
            .iter()
            .map(|s| parse(s, &no_states))
            .collect::<Result<Vec<_>>>()?;
        let new_infections = match &spec.new_infections {
            Some(list) => {
                dim_check("new_infections", list.len(), infected.len())?;
                Some(
                    list.iter()
                        .map(|s| parse(s, &scope))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            None => None,
        };

        let index = |name: &str| {
            spec.params
                .iter()
                .position(|p| p == name)
                .ok_or_else(|| Error::UnknownParam(name.to_string()))
        };
        let mut nonnegative = vec![false; spec.params.len()];
        for name in &spec.nonnegative {
            nonnegative[index(name)?] = true;
        }
        let mut bounds = vec![None; spec.params.len()];
        for (name, b) in &spec.bounds {
            bounds[index(name)?] = Some(*b);
        }
        let params: Arc<[String]> = spec.params.clone().into();
        let defaults = match &spec.defaults {
            Some(map) => {
                let pairs: Vec<(&str, f64)> = map.iter().map(|(k, v)| (k.as_str(), *v)).collect();
                Some(
                    crate::params::ParamMap::from_pairs(params.clone(), &pairs)?
                        .values()
                        .to_vec(),
                )
            }
            None => None,
        };

        Ok(Self {
            id: spec.id,
            states: spec.states,
            params,
            infected,
            rhs,
            dfe,
            new_infections,
            defaults,
            nonnegative,
            bounds,
        })
    }
}

impl ModelSystem for UserModel {
    fn id(&self) -> &str {
        &self.id
    }
    fn state_names(&self) -> &[String] {
        &self.states
    }
    fn param_names(&self) -> &Arc<[String]> {
        &self.params
    }
    fn infected(&self) -> &[usize] {
        &self.infected
    }

    fn rhs_into(&self, x: &[f64], p: &[f64], out: &mut [f64]) -> Result<()> {
        for (o, e) in out.iter_mut().zip(&self.rhs) {
            *o = e.eval(x, p);
        }
        check_finite(&self.id, x, out)
    }

    fn dfe(&self, p: &[f64]) -> Result<Vec<f64>> {
        let mut x0: Vec<f64> = self.dfe.iter().map(|e| e.eval(&[], p)).collect();
        check_finite(&self.id, &x0, &x0)?;
        for &i in &self.infected {
            if x0[i] != 0.0 {
                return Err(Error::Domain(format!(
                    "DFE component `{}` of an infected state is {}",
                    self.states[i], x0[i]
                )));
            }
            x0[i] = 0.0;
        }
        Ok(x0)
    }

    fn check_admissible(&self, p: &[f64]) -> Result<()> {
        for (k, v) in p.iter().enumerate() {
            let name = &self.params[k];
            if !v.is_finite() {
                return Err(Error::Inadmissible(format!("{name} = {v} is not finite")));
            }
            if let Some([lo, hi]) = self.bounds[k] {
                if !(lo..=hi).contains(v) {
                    return Err(Error::Inadmissible(format!(
                        "{name} = {v} outside [{lo}, {hi}]"
                    )));
                }
            } else if *v < 0.0 || (*v == 0.0 && !self.nonnegative[k]) {
                return Err(Error::Inadmissible(format!("{name} = {v} must be positive")));
            }
        }
        Ok(())
    }

    fn new_infections(&self, x: &[f64], p: &[f64]) -> Option<Result<Vec<f64>>> {
        self.new_infections.as_ref().map(|list| {
            let out: Vec<f64> = list.iter().map(|e| e.eval(x, p)).collect();
            check_finite(&self.id, x, &out).map(|_| out)
        })
    }

    fn default_params(&self) -> Option<Vec<f64>> {
        self.defaults.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SIR: &str = r#"{
        "id": "sir",
        "states": ["S", "I"],
        "params": ["beta", "gamma", "mu", "N"],
        "infected": ["I"],
        "rhs": ["mu*N - beta*S*I/N - mu*S", "beta*S*I/N - (gamma + mu)*I"],
        "dfe": ["N", "0"],
        "new_infections": ["beta*S*I/N"],
        "defaults": {"beta": 2, "gamma": 0.5, "mu": 0.1, "N": 100}
    }"#;

    #[test]
    fn loads_and_evaluates() {
        let m = UserModel::from_json(SIR).unwrap();
        let p = m.defaults().unwrap();
        assert_eq!(m.dfe(p.values()).unwrap(), vec![100.0, 0.0]);
        let f = m.rhs(&[90.0, 10.0], p.values()).unwrap();
        assert!((f[1] - (2.0 * 90.0 * 10.0 / 100.0 - 0.6 * 10.0)).abs() < 1e-12);
        let r = crate::ngm::r0(&m, &p).unwrap();
        assert!((r.r0 - 2.0 / 0.6).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = SIR.replace(r#""infected": ["I"]"#, r#""infected": ["Q"]"#);
        assert!(UserModel::from_json(&bad).is_err());
        let bad = SIR.replace("beta*S*I/N - (gamma", "beta*S*I/Z - (gamma");
        assert!(matches!(UserModel::from_json(&bad), Err(Error::Parse(_))));
        let bad = SIR.replace(r#""dfe": ["N", "0"]"#, r#""dfe": ["S", "0"]"#);
        assert!(UserModel::from_json(&bad).is_err());
    }
}
