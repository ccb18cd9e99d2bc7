//! Typed parameter space: bounded float and integer parameters, the
//! values a trial is evaluated at, and the projection from the samplers'
//! continuous coordinates onto legal parameter values.

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Float,
    Integer,
}

/// Descriptive grouping of a parameter. It does not influence sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    #[default]
    Agent,
    Environment,
    Policy,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Agent => "agent",
            Category::Environment => "environment",
            Category::Policy => "policy",
        })
    }
}

/// One optimizable (or pinned) parameter. Bounds are inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub name: String,
    pub kind: Kind,
    pub category: Category,
    pub searchable: bool,
    pub lower: f64,
    pub upper: f64,
    /// Value used when the parameter is not searched.
    pub fixed_value: Option<f64>,
}

impl ParameterSpec {
    pub fn float(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        Self::new(name, Kind::Float, lower, upper)
    }

    pub fn integer(name: impl Into<String>, lower: i64, upper: i64) -> Self {
        Self::new(name, Kind::Integer, lower as f64, upper as f64)
    }

    fn new(name: impl Into<String>, kind: Kind, lower: f64, upper: f64) -> Self {
        ParameterSpec {
            name: name.into(),
            kind,
            category: Category::default(),
            searchable: true,
            lower,
            upper,
            fixed_value: None,
        }
    }

    pub fn with_category(mut self, category: Category) -> Self {
        self.category = category;
        self
    }

    pub fn with_preference(mut self, value: f64) -> Self {
        self.fixed_value = Some(value);
        self
    }

    pub fn fixed_at(mut self, value: f64) -> Self {
        self.searchable = false;
        self.fixed_value = Some(value);
        self
    }

    pub fn range(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn is_integer(&self) -> bool {
        self.kind == Kind::Integer
    }

    /// Projects a raw sampler coordinate onto a legal value of this parameter.
    pub fn decode(&self, raw: f64) -> f64 {
        let clamped = if raw.is_nan() {
            self.lower
        } else {
            raw.clamp(self.lower, self.upper)
        };
        match self.kind {
            Kind::Float => clamped,
            // f64::round rounds half away from zero
            Kind::Integer => clamped.round(),
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.lower
            && value <= self.upper
            && (self.kind == Kind::Float || value.fract() == 0.0)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !is_identifier(&self.name) {
            return Err(ConfigError::InvalidName(self.name.clone()));
        }
        if !self.lower.is_finite() || !self.upper.is_finite() {
            return Err(ConfigError::NonFiniteBound {
                name: self.name.clone(),
            });
        }
        if self.lower > self.upper {
            return Err(ConfigError::InvertedRange {
                name: self.name.clone(),
                lower: self.lower,
                upper: self.upper,
            });
        }
        if self.is_integer() && (self.lower.fract() != 0.0 || self.upper.fract() != 0.0) {
            return Err(ConfigError::NonIntegralBound {
                name: self.name.clone(),
                lower: self.lower,
                upper: self.upper,
            });
        }
        match self.fixed_value {
            None if !self.searchable => {
                return Err(ConfigError::MissingFixedValue(self.name.clone()));
            }
            None => {}
            Some(value) => {
                if !(value >= self.lower && value <= self.upper) {
                    return Err(ConfigError::FixedOutOfBounds {
                        name: self.name.clone(),
                        value,
                        lower: self.lower,
                        upper: self.upper,
                    });
                }
                if self.is_integer() && value.fract() != 0.0 {
                    return Err(ConfigError::NonIntegralFixed {
                        name: self.name.clone(),
                        value,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Clamps `raw` into the spec's bounds, rounding integer kinds half away
/// from zero after clamping.
pub fn decode_value(spec: &ParameterSpec, raw: f64) -> f64 {
    spec.decode(raw)
}

fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Ordered, validated collection of parameter specs (declaration order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ParameterSpec>", into = "Vec<ParameterSpec>")]
pub struct SearchSpace {
    params: Vec<ParameterSpec>,
}

impl TryFrom<Vec<ParameterSpec>> for SearchSpace {
    type Error = ConfigError;

    fn try_from(params: Vec<ParameterSpec>) -> Result<Self, Self::Error> {
        SearchSpace::new(params)
    }
}

impl From<SearchSpace> for Vec<ParameterSpec> {
    fn from(space: SearchSpace) -> Self {
        space.params
    }
}

impl SearchSpace {
    pub fn new(params: Vec<ParameterSpec>) -> Result<Self, ConfigError> {
        let mut seen = std::collections::HashSet::new();
        for spec in &params {
            spec.validate()?;
            if !seen.insert(spec.name.as_str()) {
                return Err(ConfigError::DuplicateName(spec.name.clone()));
            }
        }
        Ok(SearchSpace { params })
    }

    pub fn params(&self) -> &[ParameterSpec] {
        &self.params
    }

    pub fn get(&self, name: &str) -> Option<&ParameterSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Searchable specs in declaration order; the samplers' coordinate axes.
    pub fn searchable(&self) -> impl Iterator<Item = &ParameterSpec> {
        self.params.iter().filter(|p| p.searchable)
    }

    pub fn dimension(&self) -> usize {
        self.searchable().count()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Pins the named parameters at the given values, removing them from
    /// the search.
    pub fn fix_parameters(&self, overrides: &IndexMap<String, f64>) -> Result<SearchSpace, ConfigError> {
        for name in overrides.keys() {
            if self.get(name).is_none() {
                return Err(ConfigError::UnknownParameter(name.clone()));
            }
        }
        let mut params = self.params.clone();
        for spec in &mut params {
            if let Some(&value) = overrides.get(&spec.name) {
                if !spec.contains(value) {
                    return Err(ConfigError::FixedOutOfBounds {
                        name: spec.name.clone(),
                        value,
                        lower: spec.lower,
                        upper: spec.upper,
                    });
                }
                spec.searchable = false;
                spec.fixed_value = Some(value);
            }
        }
        SearchSpace::new(params)
    }

    /// Builds a parameter vector from continuous coordinates over the
    /// searchable dimensions (in declaration order). Coordinates are
    /// projected with [`decode_value`]; pinned parameters take their fixed
    /// value.
    ///
    /// Panics if `coords` does not have one entry per searchable dimension.
    pub fn assemble(&self, coords: &[f64]) -> ParamVector {
        assert_eq!(coords.len(), self.dimension(), "coordinate count must match dimension");
        let mut coords = coords.iter();
        let values = self
            .params
            .iter()
            .map(|spec| {
                let value = if spec.searchable {
                    spec.decode(*coords.next().unwrap())
                } else {
                    spec.fixed_value.expect("validated: pinned parameters carry a value")
                };
                (spec.name.clone(), value)
            })
            .collect();
        ParamVector { values }
    }

    /// Extracts the searchable coordinates of a vector produced for this space.
    pub fn coordinates(&self, params: &ParamVector) -> Vec<f64> {
        self.searchable()
            .map(|spec| params.get(&spec.name).unwrap_or(spec.lower))
            .collect()
    }

    /// Checks bounds, integrality, completeness and pinned values.
    pub fn check(&self, params: &ParamVector) -> Result<(), String> {
        if params.len() != self.params.len() {
            return Err(format!(
                "expected {} parameters, found {}",
                self.params.len(),
                params.len()
            ));
        }
        for spec in &self.params {
            let value = params
                .get(&spec.name)
                .ok_or_else(|| format!("missing parameter `{}`", spec.name))?;
            if !spec.contains(value) {
                return Err(format!("`{}` = {value} violates its bounds or kind", spec.name));
            }
            if !spec.searchable && Some(value) != spec.fixed_value {
                return Err(format!("`{}` is pinned but has value {value}", spec.name));
            }
        }
        Ok(())
    }

    /// Stable fingerprint of the space, used to refuse resuming a journal
    /// with an edited configuration.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(&self.params).expect("specs serialize");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One assignment of every parameter in a space, in declaration order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector {
    values: IndexMap<String, f64>,
}

impl ParamVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.values().copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Bitwise equality, so `-0.0`/`0.0` and NaN payloads are distinguished.
    pub fn bit_eq(&self, other: &ParamVector) -> bool {
        self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(other.values.iter())
                .all(|((ka, va), (kb, vb))| ka == kb && va.to_bits() == vb.to_bits())
    }

    /// JSON object keyed by parameter name; integer-kind values are written
    /// without a fractional part.
    pub fn to_json(&self, space: &SearchSpace) -> serde_json::Map<String, serde_json::Value> {
        self.values
            .iter()
            .map(|(name, &value)| {
                let json = match space.get(name) {
                    Some(spec) if spec.is_integer() => serde_json::Value::from(value as i64),
                    _ => serde_json::Value::from(value),
                };
                (name.clone(), json)
            })
            .collect()
    }
}

impl FromIterator<(String, f64)> for ParamVector {
    fn from_iter<T: IntoIterator<Item = (String, f64)>>(iter: T) -> Self {
        ParamVector {
            values: iter.into_iter().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space() -> SearchSpace {
        SearchSpace::new(vec![
            ParameterSpec::integer("epochs", 3, 10).with_preference(10.0),
            ParameterSpec::float("fov", 40.0, 92.0),
            ParameterSpec::float("gamma", 0.4, 0.8).with_preference(0.8),
        ])
        .unwrap()
    }

    #[test]
    fn decode_rounds_and_clamps() {
        let epochs = ParameterSpec::integer("epochs", 3, 10);
        assert_eq!(decode_value(&epochs, 6.4), 6.0);
        assert_eq!(decode_value(&epochs, 11.7), 10.0);
        assert_eq!(decode_value(&epochs, 6.5), 7.0);
        assert_eq!(decode_value(&epochs, -4.0), 3.0);
        let fov = ParameterSpec::float("fov", 40.0, 92.0);
        assert_eq!(decode_value(&fov, 71.0), 71.0);
        assert_eq!(decode_value(&fov, f64::NAN), 40.0);
    }

    #[test]
    fn degenerate_range_is_legal() {
        let spec = ParameterSpec::integer("k", 5, 5);
        spec.validate().unwrap();
        assert_eq!(spec.decode(17.0), 5.0);
    }

    #[test]
    fn validation_errors() {
        let inverted = ParameterSpec::float("x", 0.95, 0.9);
        let err = inverted.validate().unwrap_err();
        assert!(err.to_string().contains("lower > upper"));

        let mut frac = ParameterSpec::integer("n", 1, 4);
        frac.upper = 4.5;
        assert!(matches!(frac.validate(), Err(ConfigError::NonIntegralBound { .. })));

        let mut pinned = ParameterSpec::float("x", 0.0, 1.0);
        pinned.searchable = false;
        assert!(matches!(pinned.validate(), Err(ConfigError::MissingFixedValue(_))));

        let out = ParameterSpec::float("x", 0.0, 1.0).fixed_at(2.0);
        assert!(matches!(out.validate(), Err(ConfigError::FixedOutOfBounds { .. })));

        let dup = SearchSpace::new(vec![
            ParameterSpec::float("x", 0.0, 1.0),
            ParameterSpec::float("x", 0.0, 2.0),
        ]);
        assert_eq!(dup.unwrap_err(), ConfigError::DuplicateName("x".into()));

        assert!(matches!(
            ParameterSpec::float("2x", 0.0, 1.0).validate(),
            Err(ConfigError::InvalidName(_))
        ));
    }

    #[test]
    fn fix_parameters_shrinks_dimension() {
        let space = space();
        assert_eq!(space.dimension(), 3);

        let same = space.fix_parameters(&IndexMap::new()).unwrap();
        assert_eq!(same, space);

        let overrides: IndexMap<_, _> = [("gamma".to_string(), 0.8)].into_iter().collect();
        let fixed = space.fix_parameters(&overrides).unwrap();
        assert_eq!(fixed.dimension(), 2);
        let gamma = fixed.get("gamma").unwrap();
        assert!(!gamma.searchable);
        assert_eq!(gamma.fixed_value, Some(0.8));
        assert_eq!(fixed.get("fov"), space.get("fov"));
        // idempotent
        assert_eq!(fixed.fix_parameters(&overrides).unwrap(), fixed);

        let all: IndexMap<_, _> = [("gamma", 0.5), ("fov", 50.0), ("epochs", 4.0)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let none = space.fix_parameters(&all).unwrap();
        assert_eq!(none.dimension(), 0);
        let v = none.assemble(&[]);
        assert_eq!(v.get("fov"), Some(50.0));

        let unknown: IndexMap<_, _> = [("nope".to_string(), 1.0)].into_iter().collect();
        assert_eq!(
            space.fix_parameters(&unknown).unwrap_err(),
            ConfigError::UnknownParameter("nope".into())
        );
        let oob: IndexMap<_, _> = [("gamma".to_string(), 0.9)].into_iter().collect();
        assert!(space.fix_parameters(&oob).is_err());
        let frac: IndexMap<_, _> = [("epochs".to_string(), 4.5)].into_iter().collect();
        assert!(space.fix_parameters(&frac).is_err());
    }

    #[test]
    fn assemble_projects_and_serializes_integers_plainly() {
        let space = space();
        let v = space.assemble(&[6.4, 71.0, 0.55]);
        assert_eq!(v.get("epochs"), Some(6.0));
        space.check(&v).unwrap();
        let json = serde_json::Value::Object(v.to_json(&space)).to_string();
        assert_eq!(json, r#"{"epochs":6,"fov":71.0,"gamma":0.55}"#);
        assert_eq!(space.coordinates(&v), vec![6.0, 71.0, 0.55]);
    }

    #[test]
    fn fingerprint_tracks_edits() {
        let a = space();
        let mut params = a.params().to_vec();
        params[1].upper = 93.0;
        let b = SearchSpace::new(params).unwrap();
        assert_eq!(a.fingerprint(), space().fingerprint());
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
