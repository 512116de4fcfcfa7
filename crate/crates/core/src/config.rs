//! Scenario configuration: per-scenario defaults, JSON files merged on top,
//! dotted `key=value` overrides, and validation that reports every problem.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::distribution::{DistributionSpec, Grid};
use crate::learning::FitOptions;
use crate::policy::{Audience, OfferGrid, Selection};
use crate::population::{GroupOverrides, Lever, PopulationConfig, ThresholdModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    SweepIncentives,
    SweepUsers,
    GroupTargeting,
    MeanVsIndividual,
    Altruism,
    Educate,
    Learn,
    GeneratePopulation,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 8] = [
        Self::SweepIncentives,
        Self::SweepUsers,
        Self::GroupTargeting,
        Self::MeanVsIndividual,
        Self::Altruism,
        Self::Educate,
        Self::Learn,
        Self::GeneratePopulation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::SweepIncentives => "sweep-incentives",
            Self::SweepUsers => "sweep-users",
            Self::GroupTargeting => "group-targeting",
            Self::MeanVsIndividual => "mean-vs-individual",
            Self::Altruism => "altruism",
            Self::Educate => "educate",
            Self::Learn => "learn",
            Self::GeneratePopulation => "generate-population",
        }
    }

    /// Key of the scenario's own section in a config file.
    pub fn section(self) -> &'static str {
        match self {
            Self::SweepIncentives => "sweep_incentives",
            Self::SweepUsers => "sweep_users",
            Self::GroupTargeting => "group_targeting",
            Self::MeanVsIndividual => "mean_vs_individual",
            Self::Altruism => "altruism",
            Self::Educate => "educate",
            Self::Learn => "learn",
            Self::GeneratePopulation => "generate_population",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepIncentives {
    pub grid: OfferGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepUsers {
    pub offer_law: DistributionSpec,
    /// Numbers of incentivized users.
    pub k: Grid,
    #[serde(default)]
    pub selection: Selection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupTargeting {
    /// Size of group A, the first `k` users.
    pub k: usize,
    pub group_a: GroupOverrides,
    pub group_b: GroupOverrides,
    pub grid: OfferGrid,
    #[serde(default)]
    pub audience: Audience,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanVsIndividual {
    pub grid: OfferGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Altruism {
    pub user_id: usize,
    pub beta: Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Educate {
    pub baseline: DistributionSpec,
    pub educated: DistributionSpec,
    pub savings: DistributionSpec,
    pub grid: OfferGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Learn {
    pub offer_law: DistributionSpec,
    pub m: Vec<usize>,
    #[serde(default)]
    pub fit: FitOptions,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratePopulation {}

/// Fully resolved scenario configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub n_replicates: usize,
    pub c_admin: f64,
    pub population: PopulationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_incentives: Option<SweepIncentives>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_users: Option<SweepUsers>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_targeting: Option<GroupTargeting>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_vs_individual: Option<MeanVsIndividual>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub altruism: Option<Altruism>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub educate: Option<Educate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learn: Option<Learn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate_population: Option<GeneratePopulation>,
}

impl ScenarioConfig {
    /// The defaults each scenario starts from.
    pub fn defaults(kind: ScenarioKind) -> Self {
        let mut c = ScenarioConfig {
            scenario: kind,
            seed: 42,
            n_replicates: 20,
            c_admin: 0.04,
            population: PopulationConfig::default(),
            sweep_incentives: None,
            sweep_users: None,
            group_targeting: None,
            mean_vs_individual: None,
            altruism: None,
            educate: None,
            learn: None,
            generate_population: None,
        };
        match kind {
            ScenarioKind::SweepIncentives => {
                c.sweep_incentives = Some(SweepIncentives {
                    grid: OfferGrid::UniformUpper {
                        a: 10.0,
                        b: Grid::linspace(10.0, 40.0, 31),
                    },
                })
            }
            ScenarioKind::SweepUsers => {
                c.sweep_users = Some(SweepUsers {
                    offer_law: DistributionSpec::normal(0.1, 0.05),
                    k: Grid::linspace(0.0, 1000.0, 41),
                    selection: Selection::Random,
                })
            }
            ScenarioKind::GroupTargeting => {
                c.group_targeting = Some(GroupTargeting {
                    k: 100,
                    group_a: GroupOverrides::r_min(DistributionSpec::normal(30.0, 25.0)),
                    group_b: GroupOverrides::r_min(DistributionSpec::normal(3.0, 0.25)),
                    grid: OfferGrid::NormalMean {
                        mu: Grid::linspace(0.0, 40.0, 81),
                        sigma: 1.0,
                    },
                    audience: Audience::Targeted,
                })
            }
            ScenarioKind::MeanVsIndividual => {
                c.population.delta = DistributionSpec::constant(100.0);
                c.population.threshold = ThresholdModel::Law {
                    law: DistributionSpec::uniform(3.5, 4.5),
                    lever: Lever::Savings,
                };
                c.mean_vs_individual = Some(MeanVsIndividual {
                    grid: OfferGrid::UniformUpper {
                        a: 1.0,
                        b: Grid::linspace(1.0, 6.0, 26),
                    },
                })
            }
            ScenarioKind::Altruism => {
                c.altruism = Some(Altruism {
                    user_id: 0,
                    beta: Grid::linspace(0.0, 1.0, 21),
                })
            }
            ScenarioKind::Educate => {
                c.population.delta = DistributionSpec::constant(100.0);
                c.educate = Some(Educate {
                    baseline: DistributionSpec::uniform(10.0, 100.0),
                    educated: DistributionSpec::uniform(5.0, 40.0),
                    savings: DistributionSpec::uniform(2.0, 5.0),
                    grid: OfferGrid::Constant {
                        r: Grid::linspace(0.5, 100.0, 200),
                    },
                })
            }
            ScenarioKind::Learn => {
                c.population.delta = DistributionSpec::uniform(0.5, 3.0);
                c.population.threshold = ThresholdModel::Law {
                    law: DistributionSpec::uniform(2.0, 8.0),
                    lever: Lever::Savings,
                };
                c.learn = Some(Learn {
                    offer_law: DistributionSpec::uniform(0.0, 10.0),
                    m: vec![5, 10, 20, 40, 80],
                    fit: FitOptions {
                        ridge: 0.03,
                        ..FitOptions::default()
                    },
                })
            }
            ScenarioKind::GeneratePopulation => c.generate_population = Some(GeneratePopulation {}),
        }
        c
    }

    /// The population with the run's master seed applied.
    pub fn seeded_population(&self) -> PopulationConfig {
        PopulationConfig {
            seed: self.seed,
            ..self.population.clone()
        }
    }
}

/// A problem at a dotted field path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config:\n{}", .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<FieldError>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub config: ScenarioConfig,
    pub warnings: Vec<String>,
}

const TAGS: [&str; 3] = ["kind", "family", "mode"];

/// Deep merge; a tagged object whose tag changes is replaced wholesale.
pub fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            let retagged = TAGS
                .iter()
                .any(|t| matches!((b.get(*t), o.get(*t)), (Some(x), Some(y)) if x != y));
            if retagged {
                *b = o;
                return;
            }
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Applies one `a.b.c=value` override. The value is read as JSON when it parses, else as a string.
pub fn apply_set(root: &mut Value, assignment: &str) -> Result<(), String> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| format!("override `{assignment}` is not of the form key=value"))?;
    let path = path.trim();
    if path.is_empty() {
        return Err(format!("override `{assignment}` has an empty key"));
    }
    let value =
        serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    let mut node = root;
    for k in &keys[..keys.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| format!("override `{path}`: `{k}` is not inside an object"))?;
        node = obj
            .entry(k.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| format!("override `{path}`: parent is not an object"))?;
    let last = keys[keys.len() - 1].to_string();
    match obj.get_mut(&last) {
        Some(slot) => merge(slot, value),
        None => {
            obj.insert(last, value);
        }
    }
    Ok(())
}

/// A run manifest carries its config under `config`; accept it in place of a config file.
fn unwrap_manifest(v: Value) -> Value {
    match v {
        Value::Object(mut m) if m.contains_key("manifest_version") && m.contains_key("config") => {
            m.remove("config").unwrap_or(Value::Null)
        }
        other => other,
    }
}

/// Command-line overrides on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n_replicates: Option<usize>,
    pub set: Vec<String>,
}

/// Builds the resolved config for `kind` from optional file text and overrides.
pub fn resolve(
    kind: ScenarioKind,
    text: Option<&str>,
    ov: &Overrides,
) -> Result<Resolved, ConfigError> {
    let mut root =
        serde_json::to_value(ScenarioConfig::defaults(kind)).expect("defaults serialize");
    if let Some(text) = text {
        let user: Value =
            serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let user = unwrap_manifest(user);
        if !user.is_object() {
            return Err(ConfigError::Parse("config must be a JSON object".into()));
        }
        if let Some(s) = user.get("scenario") {
            if s != &Value::String(kind.name().into()) {
                return Err(ConfigError::Invalid(vec![FieldError {
                    path: "scenario".into(),
                    message: format!("config is for {s}, but `{}` was requested", kind.name()),
                }]));
            }
        }
        merge(&mut root, user);
    }
    for s in &ov.set {
        apply_set(&mut root, s).map_err(ConfigError::Parse)?;
    }
    if let Some(seed) = ov.seed {
        root["seed"] = Value::from(seed);
    }
    if let Some(n) = ov.n_replicates {
        root["n_replicates"] = Value::from(n);
    }
    let mut config: ScenarioConfig =
        serde_json::from_value(root).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let warnings = normalize(&mut config);
    let errors = problems(&config);
    if !errors.is_empty() {
        return Err(ConfigError::Invalid(errors));
    }
    Ok(Resolved { config, warnings })
}

/// Parses and validates a config text for `kind` without running it.
pub fn validate_config(kind: ScenarioKind, text: &str) -> Result<Resolved, Vec<FieldError>> {
    resolve(kind, Some(text), &Overrides::default()).map_err(|e| match e {
        ConfigError::Parse(m) => vec![FieldError {
            path: "<root>".into(),
            message: m,
        }],
        ConfigError::Invalid(v) => v,
    })
}

fn normalize(c: &mut ScenarioConfig) -> Vec<String> {
    let mut notes = Vec::new();
    let mut fix = |path: &str, s: &mut DistributionSpec| {
        if let Some(n) = s.normalize() {
            notes.push(format!("{path}: {n}"));
        }
    };
    let p = &mut c.population;
    fix("population.high_bitrate", &mut p.high_bitrate);
    fix("population.low_bitrate", &mut p.low_bitrate);
    fix("population.gamma", &mut p.gamma);
    fix("population.delta", &mut p.delta);
    fix("population.beta", &mut p.beta);
    fix("population.savings", &mut p.savings);
    if let ThresholdModel::Law { law, .. } = &mut p.threshold {
        fix("population.threshold.law", law);
    }
    if let Some(s) = &mut c.sweep_users {
        fix("sweep_users.offer_law", &mut s.offer_law);
    }
    if let Some(g) = &mut c.group_targeting {
        for (name, ov) in [("group_a", &mut g.group_a), ("group_b", &mut g.group_b)] {
            for (f, s) in [
                ("gamma", &mut ov.gamma),
                ("delta", &mut ov.delta),
                ("beta", &mut ov.beta),
                ("savings", &mut ov.savings),
                ("r_min", &mut ov.r_min),
            ] {
                if let Some(s) = s {
                    fix(&format!("group_targeting.{name}.{f}"), s);
                }
            }
        }
    }
    if let Some(e) = &mut c.educate {
        fix("educate.baseline", &mut e.baseline);
        fix("educate.educated", &mut e.educated);
        fix("educate.savings", &mut e.savings);
    }
    if let Some(l) = &mut c.learn {
        fix("learn.offer_law", &mut l.offer_law);
    }
    notes
}

fn err(path: impl Into<String>, message: impl Into<String>) -> FieldError {
    FieldError {
        path: path.into(),
        message: message.into(),
    }
}

fn grid_problems(out: &mut Vec<FieldError>, path: &str, g: &OfferGrid) {
    if let Err(e) = g.points() {
        out.push(err(path, e.to_string()));
    }
}

/// Every validation problem of a parsed config.
pub fn problems(c: &ScenarioConfig) -> Vec<FieldError> {
    let mut out = Vec::new();
    if !(c.c_admin >= 0.0 && c.c_admin.is_finite()) {
        out.push(err(
            "c_admin",
            format!("must be finite and >= 0, got {}", c.c_admin),
        ));
    }
    if c.n_replicates == 0 {
        out.push(err("n_replicates", "must be at least 1"));
    }
    for (f, m) in c.population.problems() {
        out.push(err(format!("population.{f}"), m));
    }
    let n = c.population.n_users;
    let missing = |out: &mut Vec<FieldError>| {
        out.push(err(
            c.scenario.section(),
            "section missing for this scenario",
        ));
    };
    match c.scenario {
        ScenarioKind::SweepIncentives => match &c.sweep_incentives {
            Some(s) => grid_problems(&mut out, "sweep_incentives.grid", &s.grid),
            None => missing(&mut out),
        },
        ScenarioKind::SweepUsers => match &c.sweep_users {
            Some(s) => {
                if let Err(e) = s.offer_law.validate() {
                    out.push(err("sweep_users.offer_law", e.to_string()));
                }
                let ks = s.k.values();
                if ks.is_empty() {
                    out.push(err("sweep_users.k", "grid is empty"));
                }
                for k in ks {
                    if !(k >= 0.0 && k.fract() == 0.0 && k <= n as f64) {
                        out.push(err(
                            "sweep_users.k",
                            format!("{k} is not a whole number in [0, {n}]"),
                        ));
                    }
                }
            }
            None => missing(&mut out),
        },
        ScenarioKind::GroupTargeting => match &c.group_targeting {
            Some(g) => {
                if g.k > n {
                    out.push(err(
                        "group_targeting.k",
                        format!("{} exceeds n_users = {n}", g.k),
                    ));
                }
                for (name, ov) in [("group_a", &g.group_a), ("group_b", &g.group_b)] {
                    for (f, m) in ov.problems() {
                        out.push(err(format!("group_targeting.{name}.{f}"), m));
                    }
                }
                grid_problems(&mut out, "group_targeting.grid", &g.grid);
            }
            None => missing(&mut out),
        },
        ScenarioKind::MeanVsIndividual => match &c.mean_vs_individual {
            Some(s) => grid_problems(&mut out, "mean_vs_individual.grid", &s.grid),
            None => missing(&mut out),
        },
        ScenarioKind::Altruism => match &c.altruism {
            Some(a) => {
                if a.user_id >= n {
                    out.push(err(
                        "altruism.user_id",
                        format!("{} is not below n_users = {n}", a.user_id),
                    ));
                }
                let b = a.beta.values();
                if b.is_empty() {
                    out.push(err("altruism.beta", "grid is empty"));
                }
                if b.iter().any(|x| !(0.0..=1.0).contains(x)) {
                    out.push(err("altruism.beta", "values must lie in [0, 1]"));
                }
            }
            None => missing(&mut out),
        },
        ScenarioKind::Educate => match &c.educate {
            Some(e) => {
                for (f, s) in [
                    ("baseline", &e.baseline),
                    ("educated", &e.educated),
                    ("savings", &e.savings),
                ] {
                    if let Err(x) = s.validate() {
                        out.push(err(format!("educate.{f}"), x.to_string()));
                    }
                }
                grid_problems(&mut out, "educate.grid", &e.grid);
            }
            None => missing(&mut out),
        },
        ScenarioKind::Learn => match &c.learn {
            Some(l) => {
                if let Err(e) = l.offer_law.validate() {
                    out.push(err("learn.offer_law", e.to_string()));
                }
                if l.m.is_empty() || l.m.contains(&0) {
                    out.push(err("learn.m", "needs at least one value, all >= 1"));
                }
                if !(l.fit.ridge >= 0.0 && l.fit.ridge.is_finite()) {
                    out.push(err("learn.fit.ridge", "must be finite and >= 0"));
                }
                if l.fit.max_iter == 0 {
                    out.push(err("learn.fit.max_iter", "must be at least 1"));
                }
                if !(l.fit.grad_tol > 0.0) {
                    out.push(err("learn.fit.grad_tol", "must be positive"));
                }
            }
            None => missing(&mut out),
        },
        ScenarioKind::GeneratePopulation => {}
    }
    out
}
