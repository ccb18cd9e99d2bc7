//! The YAML experiment definition: a `parameters:` map and a `study:` block.
//!
//! ```yaml
//! parameters:
//!   gae_lambda:
//!     type: default
//!     searchable: true
//!     integer: false
//!     user_preference: 0.9
//!     start: 0.9
//!     stop: 0.95
//! study:
//!   optimizer: tpe
//!   direction: maximize
//!   n_trials: 400
//! ```
//!
//! Omitted study settings take the engine defaults (400 trials, 50 startup
//! trials, 80 candidates, multivariate TPE, median pruning after 50
//! completed trials and 48 reports, PSO 20x20 with w=0.9694, c1=c2=0.099381).

use std::fmt;
use std::path::PathBuf;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::ConfigError;
use crate::space::{Category, Kind, ParameterSpec, SearchSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Random,
    Tpe,
    Pso,
}

impl Optimizer {
    pub const ALL: [Optimizer; 3] = [Optimizer::Random, Optimizer::Tpe, Optimizer::Pso];

    pub fn as_str(self) -> &'static str {
        match self {
            Optimizer::Random => "random",
            Optimizer::Tpe => "tpe",
            Optimizer::Pso => "pso",
        }
    }
}

impl std::str::FromStr for Optimizer {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Optimizer::Random),
            "tpe" => Ok(Optimizer::Tpe),
            "pso" => Ok(Optimizer::Pso),
            other => Err(ConfigError::UnknownOptimizer(other.to_string())),
        }
    }
}

impl fmt::Display for Optimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Maximize,
    Minimize,
}

impl Direction {
    /// Maps an objective onto a "higher is better" scale. Non-finite values
    /// map to the worst possible score.
    pub fn score(self, value: f64) -> f64 {
        if !value.is_finite() {
            return f64::NEG_INFINITY;
        }
        match self {
            Direction::Maximize => value,
            Direction::Minimize => -value,
        }
    }

    /// True iff `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        self.score(a) > self.score(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruningConfig {
    pub enabled: bool,
    pub min_completed_trials: usize,
    pub min_reports: usize,
}

impl Default for PruningConfig {
    fn default() -> Self {
        PruningConfig {
            enabled: true,
            min_completed_trials: 50,
            min_reports: 48,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpeConfig {
    pub n_startup_trials: usize,
    pub n_ei_candidates: usize,
    pub multivariate: bool,
    pub gamma_cap: usize,
    pub gamma_fraction: f64,
}

impl Default for TpeConfig {
    fn default() -> Self {
        TpeConfig {
            n_startup_trials: 50,
            n_ei_candidates: 80,
            multivariate: true,
            gamma_cap: 25,
            gamma_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsoConfig {
    pub w: f64,
    pub c1: f64,
    pub c2: f64,
    pub population_size: usize,
    pub n_generations: usize,
    pub vmax_fraction: f64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        PsoConfig {
            w: 0.9694,
            c1: 0.099381,
            c2: 0.099381,
            population_size: 20,
            n_generations: 20,
            vmax_fraction: 0.5,
        }
    }
}

/// Everything about a study except the parameter space.
///
/// The study path is where the study lives, not what it is, so it is not
/// part of the serialized form embedded in the journal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub optimizer: Optimizer,
    pub direction: Direction,
    /// Trial budget for random search and TPE.
    pub n_trials: usize,
    pub pruning: Option<PruningConfig>,
    pub tpe: TpeConfig,
    /// PSO coefficients and the generations x population budget.
    pub pso: PsoConfig,
    pub workers: usize,
    pub seed: u64,
    pub evaluator_command: Option<String>,
    #[serde(skip)]
    pub study_path: PathBuf,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            optimizer: Optimizer::Tpe,
            direction: Direction::Maximize,
            n_trials: 400,
            pruning: Some(PruningConfig::default()),
            tpe: TpeConfig::default(),
            pso: PsoConfig::default(),
            workers: 1,
            seed: 0,
            evaluator_command: None,
            study_path: PathBuf::from("study"),
        }
    }
}

impl StudyConfig {
    /// A default configuration for `optimizer`, with pruning removed for PSO.
    pub fn for_optimizer(optimizer: Optimizer) -> Self {
        StudyConfig {
            optimizer,
            pruning: (optimizer != Optimizer::Pso).then(PruningConfig::default),
            ..StudyConfig::default()
        }
    }

    /// Total number of trials the study will run.
    pub fn budget(&self) -> usize {
        match self.optimizer {
            Optimizer::Random | Optimizer::Tpe => self.n_trials,
            Optimizer::Pso => self.pso.n_generations * self.pso.population_size,
        }
    }

    pub fn n_generations(&self) -> usize {
        self.pso.n_generations
    }

    pub fn population_size(&self) -> usize {
        self.pso.population_size
    }

    /// Active pruning settings, if pruning is configured and enabled.
    pub fn active_pruning(&self) -> Option<&PruningConfig> {
        self.pruning.as_ref().filter(|p| p.enabled)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: &str| Err(ConfigError::InvalidStudy(msg.to_string()));
        if self.workers == 0 {
            return invalid("workers must be positive");
        }
        match self.optimizer {
            Optimizer::Random | Optimizer::Tpe if self.n_trials == 0 => {
                return invalid("n_trials must be positive");
            }
            Optimizer::Pso => {
                if self.pso.n_generations == 0 || self.pso.population_size == 0 {
                    return invalid("n_generations and population_size must be positive");
                }
                if self.pruning.is_some() {
                    return invalid("pruning is not available for pso");
                }
            }
            _ => {}
        }
        if let Some(p) = &self.pruning {
            if p.min_completed_trials == 0 || p.min_reports == 0 {
                return invalid("pruning thresholds must be positive");
            }
        }
        let tpe = &self.tpe;
        if tpe.n_startup_trials == 0 || tpe.n_ei_candidates == 0 || tpe.gamma_cap == 0 {
            return invalid("tpe settings must be positive");
        }
        if !(tpe.gamma_fraction > 0.0 && tpe.gamma_fraction < 1.0) {
            return invalid("tpe gamma_fraction must lie in (0, 1)");
        }
        let pso = &self.pso;
        if ![pso.w, pso.c1, pso.c2, pso.vmax_fraction].iter().all(|v| v.is_finite()) || pso.vmax_fraction <= 0.0 {
            return invalid("pso coefficients must be finite and vmax_fraction positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParameter {
    #[serde(rename = "type", default, skip_serializing_if = "Option::is_none")]
    type_tag: Option<String>,
    #[serde(default = "default_true")]
    searchable: bool,
    #[serde(default)]
    integer: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    category: Option<Category>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    user_preference: Option<f64>,
    start: f64,
    stop: f64,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPruning {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    enabled: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    min_completed_trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    min_reports: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTpe {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_startup_trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_ei_candidates: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    multivariate: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPso {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c2: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStudy {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    optimizer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    direction: Option<Direction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_generations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    population_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    evaluator_command: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    study_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pruning: Option<RawPruning>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tpe: Option<RawTpe>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pso: Option<RawPso>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    #[serde(serialize_with = "serialize_entries")]
    parameters: Entries,
    #[serde(default)]
    study: RawStudy,
}

/// Parameter blocks in declaration order; duplicate names are rejected
/// rather than silently overwritten.
#[derive(Debug, Default)]
struct Entries(Vec<(String, RawParameter)>);

impl<'de> Deserialize<'de> for Entries {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct EntriesVisitor;

        impl<'de> Visitor<'de> for EntriesVisitor {
            type Value = Entries;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a map of parameter name to parameter block")
            }

            fn visit_unit<E: serde::de::Error>(self) -> Result<Entries, E> {
                Ok(Entries::default())
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Entries, A::Error> {
                let mut entries: Vec<(String, RawParameter)> = Vec::new();
                while let Some((name, block)) = map.next_entry::<String, RawParameter>()? {
                    if entries.iter().any(|(n, _)| *n == name) {
                        return Err(serde::de::Error::custom(format!(
                            "duplicate parameter name `{name}`"
                        )));
                    }
                    entries.push((name, block));
                }
                Ok(Entries(entries))
            }
        }

        deserializer.deserialize_map(EntriesVisitor)
    }
}

fn serialize_entries<S: serde::Serializer>(entries: &Entries, s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut map = s.serialize_map(Some(entries.0.len()))?;
    for (name, block) in &entries.0 {
        map.serialize_entry(name, block)?;
    }
    map.end()
}

/// Parses and validates a YAML experiment definition.
pub fn parse_config(yaml_text: &str) -> Result<(SearchSpace, StudyConfig), ConfigError> {
    let doc: RawDocument = serde_yaml::from_str(yaml_text).map_err(|e| {
        let msg = e.to_string();
        match msg.find("duplicate parameter name `") {
            Some(at) => {
                let rest = &msg[at + "duplicate parameter name `".len()..];
                ConfigError::DuplicateName(rest.split('`').next().unwrap_or_default().to_string())
            }
            None => ConfigError::Yaml(msg),
        }
    })?;

    let specs = doc
        .parameters
        .0
        .into_iter()
        .map(|(name, raw)| ParameterSpec {
            name,
            kind: if raw.integer { Kind::Integer } else { Kind::Float },
            category: raw.category.unwrap_or_default(),
            searchable: raw.searchable,
            lower: raw.start,
            upper: raw.stop,
            fixed_value: raw.user_preference,
        })
        .collect();
    let space = SearchSpace::new(specs)?;
    let study = study_from_raw(doc.study)?;
    Ok((space, study))
}

fn study_from_raw(raw: RawStudy) -> Result<StudyConfig, ConfigError> {
    let optimizer: Optimizer = raw.optimizer.as_deref().unwrap_or("tpe").parse()?;
    let defaults = StudyConfig::default();

    let uses_generations = raw.n_generations.is_some() || raw.population_size.is_some();
    match optimizer {
        Optimizer::Pso if raw.n_trials.is_some() => {
            return Err(ConfigError::InvalidStudy(
                "pso budgets are n_generations x population_size; n_trials is not allowed".into(),
            ));
        }
        Optimizer::Random | Optimizer::Tpe if uses_generations => {
            return Err(ConfigError::InvalidStudy(format!(
                "{optimizer} budgets are n_trials; n_generations/population_size are pso settings"
            )));
        }
        _ => {}
    }

    let pruning = match (optimizer, raw.pruning) {
        (Optimizer::Pso, Some(p)) if p.enabled.unwrap_or(true) => {
            return Err(ConfigError::InvalidStudy("pruning is not available for pso".into()));
        }
        (Optimizer::Pso, _) => None,
        (_, p) => {
            let p = p.unwrap_or_default();
            let d = PruningConfig::default();
            Some(PruningConfig {
                enabled: p.enabled.unwrap_or(d.enabled),
                min_completed_trials: p.min_completed_trials.unwrap_or(d.min_completed_trials),
                min_reports: p.min_reports.unwrap_or(d.min_reports),
            })
        }
    };

    let t = raw.tpe.unwrap_or_default();
    let td = TpeConfig::default();
    let tpe = TpeConfig {
        n_startup_trials: t.n_startup_trials.unwrap_or(td.n_startup_trials),
        n_ei_candidates: t.n_ei_candidates.unwrap_or(td.n_ei_candidates),
        multivariate: t.multivariate.unwrap_or(td.multivariate),
        ..td
    };

    let p = raw.pso.unwrap_or_default();
    let pd = PsoConfig::default();
    let pso = PsoConfig {
        w: p.w.unwrap_or(pd.w),
        c1: p.c1.unwrap_or(pd.c1),
        c2: p.c2.unwrap_or(pd.c2),
        population_size: raw.population_size.unwrap_or(pd.population_size),
        n_generations: raw.n_generations.unwrap_or(pd.n_generations),
        ..pd
    };

    let config = StudyConfig {
        optimizer,
        direction: raw.direction.unwrap_or_default(),
        n_trials: raw.n_trials.unwrap_or(defaults.n_trials),
        pruning,
        tpe,
        pso,
        workers: raw.workers.unwrap_or(defaults.workers),
        seed: raw.seed.unwrap_or(defaults.seed),
        evaluator_command: raw.evaluator_command,
        study_path: raw.study_path.unwrap_or(defaults.study_path),
    };
    config.validate()?;
    Ok(config)
}

/// Writes a space and study back out as YAML that [`parse_config`] accepts.
///
/// Settings with no YAML key (TPE gamma, PSO velocity clamp) are not
/// written and come back as defaults.
pub fn to_yaml(space: &SearchSpace, config: &StudyConfig) -> String {
    let parameters = Entries(
        space
            .params()
            .iter()
            .map(|spec| {
                (
                    spec.name.clone(),
                    RawParameter {
                        type_tag: None,
                        searchable: spec.searchable,
                        integer: spec.is_integer(),
                        category: Some(spec.category),
                        user_preference: spec.fixed_value,
                        start: spec.lower,
                        stop: spec.upper,
                    },
                )
            })
            .collect(),
    );
    let is_pso = config.optimizer == Optimizer::Pso;
    let study = RawStudy {
        optimizer: Some(config.optimizer.to_string()),
        direction: Some(config.direction),
        n_trials: (!is_pso).then_some(config.n_trials),
        n_generations: is_pso.then_some(config.pso.n_generations),
        population_size: is_pso.then_some(config.pso.population_size),
        workers: Some(config.workers),
        seed: Some(config.seed),
        evaluator_command: config.evaluator_command.clone(),
        study_path: Some(config.study_path.clone()),
        pruning: config.pruning.map(|p| RawPruning {
            enabled: Some(p.enabled),
            min_completed_trials: Some(p.min_completed_trials),
            min_reports: Some(p.min_reports),
        }),
        tpe: Some(RawTpe {
            n_startup_trials: Some(config.tpe.n_startup_trials),
            n_ei_candidates: Some(config.tpe.n_ei_candidates),
            multivariate: Some(config.tpe.multivariate),
        }),
        pso: Some(RawPso {
            w: Some(config.pso.w),
            c1: Some(config.pso.c1),
            c2: Some(config.pso.c2),
        }),
    };
    serde_yaml::to_string(&RawDocument { parameters, study }).expect("config serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    const GAE: &str = "
parameters:
  gae_lambda:
    type: default
    searchable: true
    integer: false
    user_preference: 0.9
    start: 0.9
    stop: 0.95
";

    #[test]
    fn gae_lambda_block() {
        let (space, study) = parse_config(GAE).unwrap();
        let spec = space.get("gae_lambda").unwrap();
        assert_eq!(spec.kind, Kind::Float);
        assert!(spec.searchable);
        assert_eq!((spec.lower, spec.upper), (0.9, 0.95));
        assert_eq!(spec.fixed_value, Some(0.9));
        assert_eq!(study, StudyConfig::default());
    }

    #[test]
    fn table2_defaults() {
        let (_, study) = parse_config(GAE).unwrap();
        assert_eq!(study.n_trials, 400);
        assert_eq!(study.tpe.n_startup_trials, 50);
        assert_eq!(study.tpe.n_ei_candidates, 80);
        assert!(study.tpe.multivariate);
        let pruning = study.pruning.unwrap();
        assert!(pruning.enabled);
        assert_eq!(pruning.min_completed_trials, 50);
        assert_eq!(pruning.min_reports, 48);
        let pso = PsoConfig::default();
        assert_eq!((pso.w, pso.c1, pso.c2), (0.9694, 0.099381, 0.099381));
        assert_eq!((pso.n_generations, pso.population_size), (20, 20));
    }

    #[test]
    fn degenerate_integer_range() {
        let (space, _) =
            parse_config("parameters:\n  k: {integer: true, start: 5, stop: 5}\n").unwrap();
        let k = space.get("k").unwrap();
        assert_eq!((k.kind, k.lower, k.upper), (Kind::Integer, 5.0, 5.0));
    }

    #[test]
    fn rejections() {
        let err = parse_config("parameters:\n  g: {start: 0.95, stop: 0.9}\n").unwrap_err();
        assert!(err.to_string().contains("lower > upper"), "{err}");

        let err = parse_config("parameters:\n  g: {start: 0.1, stop: 0.9, colour: red}\n").unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");

        let err = parse_config("parameters:\n  n: {integer: true, start: 0.5, stop: 3}\n").unwrap_err();
        assert!(matches!(err, ConfigError::NonIntegralBound { .. }));

        let err = parse_config("parameters:\n  a: {start: 0, stop: 1}\n  a: {start: 0, stop: 2}\n").unwrap_err();
        assert_eq!(err, ConfigError::DuplicateName("a".into()));

        let err = parse_config("parameters:\n  a: {searchable: false, start: 0, stop: 1}\n").unwrap_err();
        assert_eq!(err, ConfigError::MissingFixedValue("a".into()));

        let err = parse_config("parameters:\n  a: {start: 0, stop: 1}\nstudy:\n  optimizer: cmaes\n").unwrap_err();
        assert_eq!(err, ConfigError::UnknownOptimizer("cmaes".into()));

        let err = parse_config("parameters: [1, 2\n").unwrap_err();
        assert!(matches!(err, ConfigError::Yaml(_)));

        let err = parse_config("parameters:\n  a: {start: 0, stop: 1}\nstudy:\n  optimizer: pso\n  n_trials: 5\n").unwrap_err();
        assert!(matches!(err, ConfigError::InvalidStudy(_)));

        let err = parse_config(
            "parameters:\n  a: {start: 0, stop: 1}\nstudy:\n  optimizer: pso\n  pruning: {enabled: true}\n",
        )
        .unwrap_err();
        assert!(matches!(err, ConfigError::InvalidStudy(_)));
    }

    #[test]
    fn pso_has_no_pruning() {
        let (_, study) = parse_config(
            "parameters:\n  a: {start: 0, stop: 1}\nstudy:\n  optimizer: pso\n  n_generations: 3\n  population_size: 4\n",
        )
        .unwrap();
        assert!(study.pruning.is_none());
        assert_eq!(study.budget(), 12);
    }

    #[test]
    fn yaml_round_trip() {
        let text = "
parameters:
  fov: {integer: true, category: environment, start: 40, stop: 92, user_preference: 64}
  lr: {start: 0.00035, stop: 0.0035}
  clip: {searchable: false, category: policy, start: 0.01, stop: 0.3, user_preference: 0.2}
study:
  optimizer: random
  direction: minimize
  n_trials: 12
  workers: 3
  seed: 99
  evaluator_command: python3 eval.py --fast
  study_path: runs/a
  pruning: {enabled: false, min_reports: 5}
  tpe: {multivariate: false}
";
        let (space, study) = parse_config(text).unwrap();
        let again = parse_config(&to_yaml(&space, &study)).unwrap();
        assert_eq!(again, (space, study));
    }
}
