//! Coordinate charts, optionally adapted to a submanifold.
//!
//! A submanifold chart splits its coordinates into a transverse block
//! (coordinates along the submanifold N) and a normal block (coordinates
//! vanishing on N). Coordinates listed as units are allowed negative
//! exponents in scalar fields; this is how transversals sitting at a
//! distance from a linear structure's singular locus stay inside exact
//! arithmetic.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChartError {
    #[error("duplicate coordinate name `{0}`")]
    DuplicateName(String),
    #[error("invalid coordinate name `{0}`")]
    InvalidName(String),
    #[error("coordinate `{0}` shadows the differential of `{1}`")]
    ShadowsDifferential(String, String),
    #[error("unknown coordinate `{0}` in chart `{1}`")]
    UnknownCoordinate(String, String),
    #[error("charts `{0}` and `{1}` differ where equal charts are required")]
    Mismatch(String, String),
}

/// A named chart with an optional transverse/normal coordinate split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chart {
    name: String,
    coords: Vec<String>,
    transverse: Vec<usize>,
    normal: Vec<usize>,
    units: BTreeSet<usize>,
}

fn valid_name(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    let mut saw_tilde = false;
    for c in chars {
        if saw_tilde {
            return false; // tilde only as final marker
        }
        if c == '~' {
            saw_tilde = true;
        } else if !(c.is_ascii_alphanumeric() || c == '_') {
            return false;
        }
    }
    true
}

impl Chart {
    /// Plain chart with no submanifold split.
    pub fn new(name: &str, coords: &[&str]) -> Result<Arc<Self>, ChartError> {
        Self::build(name, coords, &[], &[], &[])
    }

    /// Chart adapted to a submanifold: `transverse` coordinates parameterize
    /// N, `normal` coordinates vanish on N. Order of `coords` is transverse
    /// block then normal block.
    pub fn submanifold(
        name: &str,
        transverse: &[&str],
        normal: &[&str],
    ) -> Result<Arc<Self>, ChartError> {
        let coords: Vec<&str> = transverse.iter().chain(normal.iter()).copied().collect();
        let t: Vec<usize> = (0..transverse.len()).collect();
        let n: Vec<usize> = (transverse.len()..coords.len()).collect();
        Self::build(name, &coords, &t, &n, &[])
    }

    /// Same as `submanifold` with a set of unit coordinates (allowed negative
    /// exponents).
    pub fn submanifold_with_units(
        name: &str,
        transverse: &[&str],
        normal: &[&str],
        units: &[&str],
    ) -> Result<Arc<Self>, ChartError> {
        let coords: Vec<&str> = transverse.iter().chain(normal.iter()).copied().collect();
        let t: Vec<usize> = (0..transverse.len()).collect();
        let n: Vec<usize> = (transverse.len()..coords.len()).collect();
        Self::build(name, &coords, &t, &n, units)
    }

    pub fn build(
        name: &str,
        coords: &[&str],
        transverse: &[usize],
        normal: &[usize],
        units: &[&str],
    ) -> Result<Arc<Self>, ChartError> {
        for (i, c) in coords.iter().enumerate() {
            if !valid_name(c) {
                return Err(ChartError::InvalidName(c.to_string()));
            }
            if coords[..i].contains(c) {
                return Err(ChartError::DuplicateName(c.to_string()));
            }
        }
        // A coordinate named like d<other coordinate> would collide with the
        // basis differential tokens of the tensor grammar.
        for c in coords {
            if let Some(rest) = c.strip_prefix('d') {
                if coords.contains(&rest) {
                    return Err(ChartError::ShadowsDifferential(
                        c.to_string(),
                        rest.to_string(),
                    ));
                }
            }
        }
        let mut unit_idx = BTreeSet::new();
        for u in units {
            let i = coords
                .iter()
                .position(|c| c == u)
                .ok_or_else(|| ChartError::UnknownCoordinate(u.to_string(), name.to_string()))?;
            unit_idx.insert(i);
        }
        Ok(Arc::new(Chart {
            name: name.to_string(),
            coords: coords.iter().map(|s| s.to_string()).collect(),
            transverse: transverse.to_vec(),
            normal: normal.to_vec(),
            units: unit_idx,
        }))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }

    pub fn coord(&self, i: usize) -> &str {
        &self.coords[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.coords.iter().position(|c| c == name)
    }

    pub fn transverse(&self) -> &[usize] {
        &self.transverse
    }

    pub fn normal(&self) -> &[usize] {
        &self.normal
    }

    pub fn is_submanifold(&self) -> bool {
        !self.normal.is_empty()
    }

    pub fn is_unit(&self, i: usize) -> bool {
        self.units.contains(&i)
    }

    pub fn units(&self) -> impl Iterator<Item = usize> + '_ {
        self.units.iter().copied()
    }

    pub fn unit_names(&self) -> Vec<&str> {
        self.units.iter().map(|&i| self.coords[i].as_str()).collect()
    }

    pub fn is_normal(&self, i: usize) -> bool {
        self.normal.contains(&i)
    }
}

impl fmt::Display for Chart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name, self.coords.join(","))
    }
}

/// Check that two chart handles refer to equal charts.
pub fn same_chart(a: &Arc<Chart>, b: &Arc<Chart>) -> Result<(), ChartError> {
    if Arc::ptr_eq(a, b) || a == b {
        Ok(())
    } else {
        Err(ChartError::Mismatch(a.name.clone(), b.name.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn submanifold_split() {
        let c = Chart::submanifold("m", &["x1", "x2"], &["y1"]).unwrap();
        assert_eq!(c.dim(), 3);
        assert_eq!(c.transverse(), &[0, 1]);
        assert_eq!(c.normal(), &[2]);
        assert!(c.is_normal(2));
        assert!(!c.is_normal(0));
    }

    #[test]
    fn rejects_duplicates_and_bad_names() {
        assert!(Chart::new("m", &["x", "x"]).is_err());
        assert!(Chart::new("m", &["1x"]).is_err());
        assert!(Chart::new("m", &["x", "dx"]).is_err());
        assert!(Chart::new("m", &["y~"]).is_ok());
        assert!(Chart::new("m", &["y~z"]).is_err());
    }

    #[test]
    fn units_resolved() {
        let c = Chart::submanifold_with_units("m", &["x"], &["y", "z"], &["x"]).unwrap();
        assert!(c.is_unit(0));
        assert!(!c.is_unit(1));
        assert!(Chart::submanifold_with_units("m", &["x"], &["y"], &["q"]).is_err());
    }

    #[test]
    fn chart_equality_by_value() {
        let a = Chart::submanifold("m", &["x"], &["y"]).unwrap();
        let b = Chart::submanifold("m", &["x"], &["y"]).unwrap();
        assert!(same_chart(&a, &b).is_ok());
        let c = Chart::submanifold("m", &["x"], &["z"]).unwrap();
        assert!(same_chart(&a, &c).is_err());
    }
}
