use std::fmt;
use std::sync::Arc;

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// Named parameter values in the order a model declares them.
#[derive(Clone, PartialEq)]
pub struct ParamMap {
    names: Arc<[String]>,
    values: Vec<f64>,
}

impl ParamMap {
    pub fn new(names: Arc<[String]>, values: Vec<f64>) -> Result<Self> {
        if names.len() != values.len() {
            return Err(Error::Dimension {
                expected: names.len(),
                got: values.len(),
            });
        }
        Ok(Self { names, values })
    }

    /// Builds a map from `(name, value)` pairs; every declared name must be present exactly once.
    pub fn from_pairs(names: Arc<[String]>, pairs: &[(&str, f64)]) -> Result<Self> {
        let mut values = vec![f64::NAN; names.len()];
        let mut seen = vec![false; names.len()];
        for (name, value) in pairs {
            let i = names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::UnknownParam((*name).to_string()))?;
            values[i] = *value;
            seen[i] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::MissingParam(names[i].clone()));
        }
        Ok(Self { names, values })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn shared_names(&self) -> &Arc<[String]> {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        Ok(self.values[self.index_of(name)?])
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let i = self.index_of(name)?;
        self.values[i] = value;
        Ok(())
    }

    /// Copy with one parameter replaced.
    pub fn with(&self, name: &str, value: f64) -> Result<Self> {
        let mut out = self.clone();
        out.set(name, value)?;
        Ok(out)
    }

    pub fn inf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.values.iter().copied())
    }
}

impl fmt::Debug for ParamMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.iter()).finish()
    }
}

impl Serialize for ParamMap {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.len()))?;
        for (k, v) in self.iter() {
            map.serialize_entry(k, &v)?;
        }
        map.end()
    }
}

pub(crate) fn names(list: &[&str]) -> Arc<[String]> {
    list.iter().map(|s| s.to_string()).collect::<Vec<_>>().into()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_pairs_rejects_unknown_and_missing() {
        let n = names(&["a", "b"]);
        assert_eq!(
            ParamMap::from_pairs(n.clone(), &[("a", 1.0), ("c", 2.0)]),
            Err(Error::UnknownParam("c".into()))
        );
        assert_eq!(
            ParamMap::from_pairs(n.clone(), &[("a", 1.0)]),
            Err(Error::MissingParam("b".into()))
        );
        let p = ParamMap::from_pairs(n, &[("b", 2.0), ("a", 1.0)]).unwrap();
        assert_eq!(p.values(), &[1.0, 2.0]);
        assert_eq!(p.with("a", 5.0).unwrap().get("a").unwrap(), 5.0);
    }
}
