//! Named parameter vectors.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Ordered parameter names with index lookup; shared between all vectors of a
/// model so cloning a [`ParamVector`] copies only the values.
#[derive(Debug, Clone)]
pub struct ParamLayout {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl ParamLayout {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::Param("parameter layout must not be empty".into()));
        }
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::Param(format!("duplicate parameter name '{name}'")));
            }
        }
        Ok(Self { names, index })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }
}

/// A point in parameter space: finite values aligned 1:1 with a layout.
#[derive(Debug, Clone)]
pub struct ParamVector {
    layout: Arc<ParamLayout>,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(layout: Arc<ParamLayout>, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::Param(format!(
                "expected {} values for layout, got {}",
                layout.len(),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Param(format!("non-finite parameter value {bad}")));
        }
        Ok(Self { layout, values })
    }

    /// Convenience constructor for tests and toy models.
    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, f64)>) -> Result<Self> {
        let (names, values): (Vec<String>, Vec<f64>) =
            pairs.into_iter().map(|(n, v)| (n.into(), v)).unzip();
        let layout = Arc::new(ParamLayout::new(names)?);
        Self::new(layout, values)
    }

    pub fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        self.layout.names()
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        self.layout
            .position(name)
            .map(|i| self.values[i])
            .ok_or_else(|| Error::Param(format!("unknown parameter '{name}'")))
    }

    /// Replaces the values, keeping the layout. Errors on length mismatch or
    /// non-finite entries.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(Arc::clone(&self.layout), values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicates_and_empty() {
        assert!(ParamLayout::new(["a", "a"]).is_err());
        assert!(ParamLayout::new(Vec::<String>::new()).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        assert!(ParamVector::from_pairs([("a", f64::NAN)]).is_err());
        assert!(ParamVector::from_pairs([("a", f64::INFINITY)]).is_err());
    }

    #[test]
    fn lookup_by_name() {
        let theta = ParamVector::from_pairs([("alpha0", 0.5), ("delta0", -2.0)]).unwrap();
        assert_eq!(theta.get("delta0").unwrap(), -2.0);
        assert!(theta.get("missing").is_err());
        assert_eq!(theta.len(), 2);
    }
}
