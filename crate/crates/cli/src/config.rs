//! Run configuration: a TOML file, optionally patched with `--set` overrides,
//! resolved into concrete model, domain and solver settings.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use exittime::mesh::BoxDomain;
use exittime::model::{self, builtin_info, builtin_model, builtin_table, SdeModel, TransitionTable};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Default number of divisions per axis.
pub const DEFAULT_DIVISIONS: usize = 40;
/// Default number of implicit steps when `eta` is not given.
pub const DEFAULT_STEPS: f64 = 200.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Start points where fields are probed. Defaults to the built-in
    /// model's initial point.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probes: Vec<Vec<f64>>,
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "DomainConfig::is_empty")]
    pub domain: DomainConfig,
    #[serde(default)]
    pub mesh: MeshConfig,
    #[serde(default)]
    pub elliptic: EllipticConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parabolic: Option<ParabolicConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Exactly one of `builtin`, `drift`/`diffusion`, or `transitions` selects
/// the model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// State variable names, for custom and table models.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub variables: Vec<String>,
    /// Parameter values; for built-ins these override the defaults.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub parameters: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub drift: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diffusion: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transitions: Option<Vec<TransitionConfig>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionConfig {
    /// Change vector; components may use parameters.
    pub change: Vec<ChangeComponent>,
    /// Rate (probability per unit time) as an expression.
    pub rate: String,
}

/// A change-vector component written as a number or an expression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChangeComponent {
    Number(f64),
    Expr(String),
}

impl ChangeComponent {
    fn source(&self) -> String {
        match self {
            ChangeComponent::Number(v) => format!("{v:?}"),
            ChangeComponent::Expr(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    /// Named domain of a built-in model (e.g. `D2` for the tumor model).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
}

impl DomainConfig {
    fn is_empty(&self) -> bool {
        self.name.is_none() && self.lower.is_none() && self.upper.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Divisions {
    Uniform(usize),
    PerAxis(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    #[serde(default = "default_divisions")]
    pub divisions: Divisions,
}

fn default_divisions() -> Divisions {
    Divisions::Uniform(DEFAULT_DIVISIONS)
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig {
            divisions: default_divisions(),
        }
    }
}

/// Axis given by index or by variable name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisRef {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionConfig {
    pub axis: AxisRef,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipticConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sections: Vec<SectionConfig>,
    /// Also write every node as `x y [z] u`.
    #[serde(default)]
    pub write_field: bool,
}

fn yes() -> bool {
    true
}

impl Default for EllipticConfig {
    fn default() -> Self {
        EllipticConfig {
            enabled: true,
            sections: Vec::new(),
            write_field: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParabolicConfig {
    /// Time step; defaults to `horizon / 200`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshots: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    /// Euler-Maruyama step; when absent it is chosen so the monitoring-bias
    /// allowance is `allowance_fraction` of the finite element mean.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Censoring time; defaults to 100 times the finite element mean.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_cap: Option<f64>,
    #[serde(default = "default_z")]
    pub z_threshold: f64,
    #[serde(default = "default_fraction")]
    pub allowance_fraction: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub survival_times: Vec<f64>,
}

fn default_paths() -> usize {
    20_000
}
fn default_seed() -> u64 {
    1
}
fn default_z() -> f64 {
    3.0
}
fn default_fraction() -> f64 {
    0.04
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            dt: None,
            paths: default_paths(),
            seed: default_seed(),
            time_cap: None,
            z_threshold: default_z(),
            allowance_fraction: default_fraction(),
            survival_times: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub directory: PathBuf,
    /// File name prefix; defaults to the model name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix: Option<String>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: default_dir(),
            prefix: None,
        }
    }
}

/// Parses a `--set` value as a TOML value, falling back to a plain string.
fn parse_value(text: &str) -> toml::Value {
    let doc = format!("v = {text}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(text.to_owned())),
        Err(_) => toml::Value::String(text.to_owned()),
    }
}

/// Applies `path.to.leaf=value` to a TOML table, creating intermediate
/// tables as needed.
pub fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (path, value) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not of the form path=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("override `{assignment}` has an empty key")));
    }
    let mut table = root;
    for key in &keys[..keys.len() - 1] {
        let entry = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{assignment}`: `{key}` is not a table")))?;
    }
    table.insert(keys[keys.len() - 1].to_string(), parse_value(value.trim()));
    Ok(())
}

impl RunConfig {
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<RunConfig, CliError> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Config(format!("invalid TOML: {}", e.message())))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs serialize to TOML")
    }
}

/// A configuration with every default filled in and every input checked.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub model: SdeModel,
    pub table: Option<TransitionTable>,
    pub domain: BoxDomain,
    pub divisions: Vec<usize>,
    pub probes: Vec<Vec<f64>>,
    pub sections: Vec<(usize, f64)>,
    pub warnings: Vec<String>,
    pub prefix: String,
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn build_model(cfg: &ModelConfig) -> Result<(SdeModel, Option<TransitionTable>, Option<String>), CliError> {
    let has_custom = !cfg.drift.is_empty() || !cfg.diffusion.is_empty();
    let has_table = cfg.transitions.is_some();
    let selected = [cfg.builtin.is_some(), has_custom, has_table]
        .iter()
        .filter(|&&b| b)
        .count();
    if selected != 1 {
        return Err(CliError::Config(
            "model must set exactly one of `builtin`, `drift`/`diffusion`, or `transitions`".into(),
        ));
    }
    if let Some(name) = &cfg.builtin {
        if !cfg.variables.is_empty() {
            return Err(CliError::Config("built-in models fix their own variables".into()));
        }
        let model = builtin_model(name, &cfg.parameters).map_err(config_err)?;
        let table = builtin_table(name, &cfg.parameters).map_err(config_err)?;
        return Ok((model, table, Some(name.clone())));
    }
    if cfg.variables.is_empty() {
        return Err(CliError::Config("custom and table models need `variables`".into()));
    }
    let params: HashMap<String, f64> = cfg.parameters.iter().map(|(k, v)| (k.clone(), *v)).collect();
    let name = cfg.name.clone().unwrap_or_else(|| "custom".into());
    if let Some(transitions) = &cfg.transitions {
        let rows: Vec<(Vec<String>, String)> = transitions
            .iter()
            .map(|t| (t.change.iter().map(ChangeComponent::source).collect(), t.rate.clone()))
            .collect();
        let table = TransitionTable::parse(&cfg.variables, &params, &rows).map_err(config_err)?;
        let model = SdeModel::from_table(&name, &table).with_parameters(cfg.parameters.clone());
        return Ok((model, Some(table), None));
    }
    let drift: Vec<&str> = cfg.drift.iter().map(String::as_str).collect();
    let diffusion: Vec<Vec<&str>> = cfg
        .diffusion
        .iter()
        .map(|r| r.iter().map(String::as_str).collect())
        .collect();
    let model = SdeModel::from_strings(&name, &cfg.variables, &params, &drift, &diffusion).map_err(config_err)?;
    Ok((model, None, None))
}

/// Builds only the model (no domain needed), for `derive`.
pub fn resolve_model(cfg: &RunConfig) -> Result<(SdeModel, Option<TransitionTable>), CliError> {
    let (m, t, _) = build_model(&cfg.model)?;
    Ok((m, t))
}

impl RunConfig {
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let (model, table, builtin) = build_model(&self.model)?;
        let d = model.dim();
        let info = builtin.as_deref().and_then(builtin_info);

        let domain = match (&self.domain.name, &self.domain.lower, &self.domain.upper) {
            (None, Some(lo), Some(hi)) => BoxDomain::new(lo.clone(), hi.clone()).map_err(config_err)?,
            (Some(n), None, None) => info
                .as_ref()
                .and_then(|i| i.domain(n))
                .ok_or_else(|| CliError::Config(format!("unknown domain `{n}` for this model")))?,
            (None, None, None) => info
                .as_ref()
                .map(model::BuiltinInfo::default_domain)
                .ok_or_else(|| CliError::Config("custom models need `domain.lower` and `domain.upper`".into()))?,
            _ => {
                return Err(CliError::Config(
                    "domain takes either `name` or both `lower` and `upper`".into(),
                ))
            }
        };
        if domain.dim() != d {
            return Err(CliError::Config(format!(
                "domain is {}-dimensional but the model has {d} variables",
                domain.dim()
            )));
        }

        let divisions = match &self.mesh.divisions {
            Divisions::Uniform(k) => vec![*k; d],
            Divisions::PerAxis(v) => v.clone(),
        };
        if divisions.len() != d || divisions.iter().any(|&k| k < 2) {
            return Err(CliError::Config(format!(
                "mesh.divisions must give at least 2 divisions for each of the {d} axes (got {divisions:?})"
            )));
        }

        let probes = if self.probes.is_empty() {
            match &info {
                Some(i) => vec![i.probe.clone()],
                None => vec![domain.center()],
            }
        } else {
            self.probes.clone()
        };
        for p in &probes {
            if p.len() != d {
                return Err(CliError::Config(format!("probe {p:?} must have {d} coordinates")));
            }
            if !domain.is_interior(p) {
                return Err(CliError::Config(format!(
                    "probe {p:?} is not strictly inside the domain"
                )));
            }
        }

        let mut sections = Vec::new();
        for s in &self.elliptic.sections {
            let axis = match &s.axis {
                AxisRef::Index(i) if *i < d => *i,
                AxisRef::Name(n) => model
                    .variables()
                    .iter()
                    .position(|v| v == n)
                    .ok_or_else(|| CliError::Config(format!("section axis `{n}` is not a model variable")))?,
                AxisRef::Index(i) => return Err(CliError::Config(format!("section axis {i} out of range"))),
            };
            sections.push((axis, s.value));
        }

        if let Some(p) = &self.parabolic {
            let eta = p.eta.unwrap_or(p.horizon / DEFAULT_STEPS);
            if !(p.horizon > 0.0 && eta > 0.0 && eta <= p.horizon * (1.0 + 1e-12)) {
                return Err(CliError::Config(format!(
                    "parabolic settings need 0 < eta <= horizon (got eta {eta}, horizon {})",
                    p.horizon
                )));
            }
        }
        if let Some(mc) = &self.mc {
            if mc.paths == 0 || mc.dt.is_some_and(|dt| !(dt > 0.0)) || mc.time_cap.is_some_and(|t| !(t > 0.0)) {
                return Err(CliError::Config(
                    "mc needs paths >= 1 and positive dt and time_cap".into(),
                ));
            }
        }

        let mut warnings = Vec::new();
        if builtin.is_none() && table.is_none() {
            model.check_symmetry(&domain, 5).map_err(config_err)?;
        }
        if let Some(t) = &table {
            let bad = t.negative_rates(&domain, 10);
            if let Some(w) = bad.first() {
                warnings.push(format!(
                    "transition {} has a negative rate ({:e}) at {:?}; {} sampled points affected",
                    w.entry + 1,
                    w.rate,
                    w.point,
                    bad.len()
                ));
            }
        }
        let prefix = self.output.prefix.clone().unwrap_or_else(|| model.name().to_owned());
        Ok(Resolved {
            model,
            table,
            domain,
            divisions,
            probes,
            sections,
            warnings,
            prefix,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RUMOR: &str = r#"
probes = [[0.8, 0.2]]

[model]
builtin = "rumor"

[mesh]
divisions = 10

[parabolic]
horizon = 0.01
"#;

    #[test]
    fn parses_and_resolves() {
        let cfg = RunConfig::from_toml(RUMOR, &[]).unwrap();
        let r = cfg.resolve().unwrap();
        assert_eq!(r.divisions, vec![10, 10]);
        assert_eq!(r.domain.lower(), &[0.7, 0.1]);
        assert_eq!(r.prefix, "rumor");
        assert!(cfg.elliptic.enabled);
    }

    #[test]
    fn overrides() {
        let cfg = RunConfig::from_toml(
            RUMOR,
            &[
                "mesh.divisions=20".into(),
                "model.parameters.alpha=0.2".into(),
                "mc.seed=99".into(),
                "output.prefix=run1".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.mesh.divisions, Divisions::Uniform(20));
        assert_eq!(cfg.model.parameters["alpha"], 0.2);
        assert_eq!(cfg.mc.as_ref().unwrap().seed, 99);
        assert_eq!(cfg.output.prefix.as_deref(), Some("run1"));
        assert!(RunConfig::from_toml(RUMOR, &["nonsense".into()]).is_err());
        assert!(RunConfig::from_toml(RUMOR, &["mesh.bogus=1".into()]).is_err());
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::from_toml(RUMOR, &[]).unwrap();
        cfg.mc = Some(McConfig::default());
        cfg.elliptic.sections.push(SectionConfig {
            axis: AxisRef::Name("S".into()),
            value: 0.8,
        });
        let text = cfg.to_toml();
        assert_eq!(RunConfig::from_toml(&text, &[]).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_inputs() {
        let bad_probe = RunConfig::from_toml(RUMOR, &["probes=[[0.7, 0.2]]".into()]).unwrap();
        assert!(matches!(bad_probe.resolve(), Err(CliError::Config(_))));
        let bad_k = RunConfig::from_toml(RUMOR, &["mesh.divisions=1".into()]).unwrap();
        assert!(bad_k.resolve().is_err());
        let two_models = RunConfig::from_toml(RUMOR, &["model.drift=[\"1\", \"2\"]".into()]).unwrap();
        assert!(two_models.resolve().is_err());
        let unknown = RunConfig::from_toml(RUMOR, &["model.builtin=\"ebola\"".into()]).unwrap();
        assert!(unknown.resolve().is_err());
    }

    #[test]
    fn table_and_custom_models() {
        let table = r#"
[model]
name = "birth-death"
variables = ["x", "y"]
parameters = { c = 2.0 }
transitions = [
    { change = [1, 0], rate = "c" },
    { change = ["-c", "1"], rate = "x*y" },
]

[domain]
lower = [0.0, 0.0]
upper = [1.0, 1.0]
"#;
        let r = RunConfig::from_toml(table, &[]).unwrap().resolve().unwrap();
        assert!(r.table.is_some());
        assert_eq!(r.probes, vec![vec![0.5, 0.5]]);
        let a = r.model.diffusion_at(&[0.5, 0.5]).unwrap();
        assert!((a[0][0] - (2.0 + 4.0 * 0.25)).abs() < 1e-14);

        let asym = r#"
[model]
variables = ["x", "y"]
drift = ["0", "0"]
diffusion = [["1", "x"], ["0", "1"]]

[domain]
lower = [0.0, 0.0]
upper = [1.0, 1.0]
"#;
        let err = RunConfig::from_toml(asym, &[]).unwrap().resolve().unwrap_err();
        assert!(err.to_string().contains("symmetric"), "{err}");
    }

    #[test]
    fn tumor_named_domain_and_rate_warning() {
        let cfg = RunConfig::from_toml(
            "[model]\nbuiltin = \"tumor\"\n[domain]\nname = \"D2\"\n[[elliptic.sections]]\naxis = \"E\"\nvalue = 3.0\n",
            &[],
        )
        .unwrap();
        let r = cfg.resolve().unwrap();
        assert_eq!(r.domain.upper(), &[4.0, 2.0, 4.0]);
        assert_eq!(r.sections, vec![(0, 3.0)]);
        assert_eq!(r.probes, vec![vec![3.0, 1.5, 1.0]]);
        assert_eq!(r.warnings.len(), 1);
    }
}
