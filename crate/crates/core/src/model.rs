//! Stochastic models: drift vector `B`, diffusion matrix `A` and the column
//! derivatives `∂a_ij/∂x_j` used by the weak form.
//!
//! A model can be built from a transition table (a list of small-time state
//! changes `ΔY` with rates `p/Δt`), in which case
//!
//! ```text
//! B = Σ rate_i ΔY^i          A = Σ rate_i ΔY^i (ΔY^i)ᵀ
//! ```
//!
//! or from directly supplied coefficient expressions. The residual
//! "no change" state contributes nothing to either sum and is never stored.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::expr::{EvalError, ExprError, Expression, Node};
use crate::mesh::BoxDomain;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("transition table has no entries")]
    EmptyTable,
    #[error("only 2- and 3-dimensional models are supported (got {0} variables)")]
    Dimension(usize),
    #[error("entry {entry}: change vector has {found} components, expected {expected}")]
    ChangeLength {
        entry: usize,
        expected: usize,
        found: usize,
    },
    #[error("change vector component `{source_text}` of entry {entry} must be a constant")]
    NonConstantChange { entry: usize, source_text: String },
    #[error("expected {expected} drift components and a {expected}x{expected} diffusion matrix")]
    Shape { expected: usize },
    #[error("diffusion matrix is not symmetric: a[{i}][{j}] = {upper} but a[{j}][{i}] = {lower} at {point:?}")]
    Asymmetric {
        i: usize,
        j: usize,
        upper: f64,
        lower: f64,
        point: Vec<f64>,
    },
    #[error("unknown model `{0}` (available: rumor, gonorrhea, sir, tumor)")]
    UnknownModel(String),
    #[error("model `{model}` has no parameter `{name}`")]
    UnknownParameter { model: String, name: String },
}

/// One row of a transition table.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub change: Vec<f64>,
    /// Probability of this change per unit time.
    pub rate: Expression,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTable {
    variables: Arc<[String]>,
    entries: Vec<Transition>,
}

/// A sampled point where a transition rate was negative.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateWarning {
    pub entry: usize,
    pub point: Vec<f64>,
    pub rate: f64,
}

impl TransitionTable {
    pub fn new(variables: Arc<[String]>, entries: Vec<Transition>) -> Result<Self, ModelError> {
        let d = variables.len();
        if !(2..=3).contains(&d) {
            return Err(ModelError::Dimension(d));
        }
        if entries.is_empty() {
            return Err(ModelError::EmptyTable);
        }
        for (i, e) in entries.iter().enumerate() {
            if e.change.len() != d {
                return Err(ModelError::ChangeLength {
                    entry: i,
                    expected: d,
                    found: e.change.len(),
                });
            }
        }
        Ok(TransitionTable { variables, entries })
    }

    /// Builds a table from source strings. Change components may reference
    /// parameters but not state variables.
    pub fn parse<S: AsRef<str>>(
        variables: &[S],
        parameters: &HashMap<String, f64>,
        entries: &[(Vec<String>, String)],
    ) -> Result<Self, ModelError> {
        let vars: Arc<[String]> = variables.iter().map(|s| s.as_ref().to_owned()).collect();
        let no_vars: Arc<[String]> = Arc::from(Vec::<String>::new());
        let mut parsed = Vec::with_capacity(entries.len());
        for (i, (change, rate)) in entries.iter().enumerate() {
            let change = change
                .iter()
                .map(|c| {
                    let e = Expression::parse_shared(c, no_vars.clone(), parameters).map_err(|err| match err {
                        ExprError::UnknownIdentifier { .. } => ModelError::NonConstantChange {
                            entry: i,
                            source_text: c.clone(),
                        },
                        other => other.into(),
                    })?;
                    Ok(e.evaluate(&[])?)
                })
                .collect::<Result<Vec<f64>, ModelError>>()?;
            let rate = Expression::parse_shared(rate, vars.clone(), parameters)?;
            parsed.push(Transition { change, rate });
        }
        Self::new(vars, parsed)
    }

    pub fn dim(&self) -> usize {
        self.variables.len()
    }

    pub fn variables(&self) -> &Arc<[String]> {
        &self.variables
    }

    pub fn entries(&self) -> &[Transition] {
        &self.entries
    }

    /// Samples every rate on an interior grid of `domain` and reports the
    /// points where it is negative.
    pub fn negative_rates(&self, domain: &BoxDomain, samples_per_axis: usize) -> Vec<RateWarning> {
        let mut out = Vec::new();
        for point in interior_grid(domain, samples_per_axis) {
            for (i, e) in self.entries.iter().enumerate() {
                if let Ok(r) = e.rate.evaluate(&point) {
                    if r < 0.0 {
                        out.push(RateWarning {
                            entry: i,
                            point: point.clone(),
                            rate: r,
                        });
                    }
                }
            }
        }
        out
    }
}

fn weighted_sum(table: &TransitionTable, weight: impl Fn(&[f64]) -> f64) -> Expression {
    let node = table.entries.iter().fold(Node::Num(0.0), |acc, e| {
        let w = weight(&e.change);
        if w == 0.0 {
            acc
        } else {
            acc + Node::Num(w) * e.rate.node().clone()
        }
    });
    Expression::from_node(node, table.variables.clone())
}

/// `b_k = Σ_i rate_i ΔY^i_k`.
pub fn build_drift(table: &TransitionTable) -> Vec<Expression> {
    (0..table.dim()).map(|k| weighted_sum(table, |dy| dy[k])).collect()
}

/// `a_kl = Σ_i rate_i ΔY^i_k ΔY^i_l`, symmetric by construction.
pub fn build_diffusion(table: &TransitionTable) -> Vec<Vec<Expression>> {
    let d = table.dim();
    let mut a: Vec<Vec<Option<Expression>>> = vec![vec![None; d]; d];
    for k in 0..d {
        for l in k..d {
            let e = weighted_sum(table, |dy| dy[k] * dy[l]);
            a[l][k] = Some(e.clone());
            a[k][l] = Some(e);
        }
    }
    a.into_iter()
        .map(|row| row.into_iter().map(Option::unwrap).collect())
        .collect()
}

/// Coefficients of a model evaluated at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointCoefficients {
    pub drift: [f64; 3],
    pub diffusion: [[f64; 3]; 3],
    /// `Σ_j ∂a_ij/∂x_j` for each row `i`.
    pub divergence: [f64; 3],
}

/// Drift, diffusion matrix and derivative table of a diffusion process.
#[derive(Debug, Clone)]
pub struct SdeModel {
    name: String,
    variables: Arc<[String]>,
    parameters: BTreeMap<String, f64>,
    drift: Vec<Expression>,
    diffusion: Vec<Vec<Expression>>,
    derivatives: Vec<Vec<Expression>>,
}

impl SdeModel {
    /// Builds a model from a transition table.
    pub fn from_table(name: &str, table: &TransitionTable) -> SdeModel {
        Self::assemble(
            name,
            table.variables.clone(),
            build_drift(table),
            build_diffusion(table),
        )
    }

    /// Builds a model from drift and diffusion expressions. The diffusion
    /// matrix must be square and match the drift length; symmetry is checked
    /// separately with [`SdeModel::check_symmetry`].
    pub fn from_coefficients(
        name: &str,
        drift: Vec<Expression>,
        diffusion: Vec<Vec<Expression>>,
    ) -> Result<SdeModel, ModelError> {
        let d = drift.len();
        if !(2..=3).contains(&d) {
            return Err(ModelError::Dimension(d));
        }
        if diffusion.len() != d || diffusion.iter().any(|r| r.len() != d) {
            return Err(ModelError::Shape { expected: d });
        }
        let variables = drift[0].variables().clone();
        let same_vars = drift
            .iter()
            .chain(diffusion.iter().flatten())
            .all(|e| e.variables() == &variables);
        if !same_vars || variables.len() != d {
            return Err(ModelError::Shape { expected: d });
        }
        Ok(Self::assemble(name, variables, drift, diffusion))
    }

    /// Parses drift and diffusion sources over `variables`.
    pub fn from_strings<S: AsRef<str>>(
        name: &str,
        variables: &[S],
        parameters: &HashMap<String, f64>,
        drift: &[&str],
        diffusion: &[Vec<&str>],
    ) -> Result<SdeModel, ModelError> {
        let vars: Arc<[String]> = variables.iter().map(|s| s.as_ref().to_owned()).collect();
        let parse = |s: &str| Expression::parse_shared(s, vars.clone(), parameters);
        let drift = drift.iter().map(|s| parse(s)).collect::<Result<Vec<_>, _>>()?;
        let diffusion = diffusion
            .iter()
            .map(|row| row.iter().map(|s| parse(s)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        let mut model = Self::from_coefficients(name, drift, diffusion)?;
        model.parameters = parameters.iter().map(|(k, v)| (k.clone(), *v)).collect();
        Ok(model)
    }

    fn assemble(
        name: &str,
        variables: Arc<[String]>,
        drift: Vec<Expression>,
        diffusion: Vec<Vec<Expression>>,
    ) -> SdeModel {
        let derivatives = diffusion
            .iter()
            .map(|row| row.iter().enumerate().map(|(j, a)| a.differentiate_index(j)).collect())
            .collect();
        SdeModel {
            name: name.to_owned(),
            variables,
            parameters: BTreeMap::new(),
            drift,
            diffusion,
            derivatives,
        }
    }

    pub fn with_parameters(mut self, parameters: BTreeMap<String, f64>) -> SdeModel {
        self.parameters = parameters;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.variables.len()
    }

    pub fn variables(&self) -> &Arc<[String]> {
        &self.variables
    }

    /// Parameter values the model was built with (empty for custom models
    /// built from expressions).
    pub fn parameters(&self) -> &BTreeMap<String, f64> {
        &self.parameters
    }

    pub fn drift(&self) -> &[Expression] {
        &self.drift
    }

    pub fn diffusion(&self) -> &[Vec<Expression>] {
        &self.diffusion
    }

    /// `derivatives()[i][j]` is `∂a_ij/∂x_j`.
    pub fn derivatives(&self) -> &[Vec<Expression>] {
        &self.derivatives
    }

    /// Evaluates the diffusion matrix, filling the upper triangle and
    /// mirroring it.
    pub fn diffusion_at(&self, point: &[f64]) -> Result<[[f64; 3]; 3], EvalError> {
        let d = self.dim();
        let mut a = [[0.0; 3]; 3];
        for i in 0..d {
            for j in i..d {
                let v = self.diffusion[i][j].evaluate(point)?;
                a[i][j] = v;
                a[j][i] = v;
            }
        }
        Ok(a)
    }

    pub fn drift_at(&self, point: &[f64]) -> Result<[f64; 3], EvalError> {
        let mut b = [0.0; 3];
        for (bi, e) in b.iter_mut().zip(&self.drift) {
            *bi = e.evaluate(point)?;
        }
        Ok(b)
    }

    pub fn coefficients_at(&self, point: &[f64]) -> Result<PointCoefficients, EvalError> {
        let mut divergence = [0.0; 3];
        for (i, row) in self.derivatives.iter().enumerate() {
            for e in row {
                divergence[i] += e.evaluate(point)?;
            }
        }
        Ok(PointCoefficients {
            drift: self.drift_at(point)?,
            diffusion: self.diffusion_at(point)?,
            divergence,
        })
    }

    /// Checks `a_ij == a_ji` (relative 1e-12) on an interior sample grid.
    pub fn check_symmetry(&self, domain: &BoxDomain, samples_per_axis: usize) -> Result<(), ModelError> {
        let d = self.dim();
        for point in interior_grid(domain, samples_per_axis) {
            for i in 0..d {
                for j in i + 1..d {
                    let upper = self.diffusion[i][j].evaluate(&point)?;
                    let lower = self.diffusion[j][i].evaluate(&point)?;
                    if (upper - lower).abs() > 1e-12 * upper.abs().max(lower.abs()).max(1e-300) {
                        return Err(ModelError::Asymmetric {
                            i,
                            j,
                            upper,
                            lower,
                            point,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Points `lower + (i + 1)/(n + 1) · width` for `i < n` on every axis.
pub fn interior_grid(domain: &BoxDomain, n: usize) -> Vec<Vec<f64>> {
    let d = domain.dim();
    let total = n.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            (0..d)
                .map(|axis| {
                    let i = idx % n;
                    idx /= n;
                    domain.lower()[axis] + domain.width(axis) * (i + 1) as f64 / (n + 1) as f64
                })
                .collect()
        })
        .collect()
}

/// Eigenvalues of a symmetric 2×2 or 3×3 matrix, ascending.
pub fn symmetric_eigenvalues(a: &[[f64; 3]; 3], dim: usize) -> Vec<f64> {
    if dim == 2 {
        let mean = 0.5 * (a[0][0] + a[1][1]);
        let half_diff = 0.5 * (a[0][0] - a[1][1]);
        let r = half_diff.hypot(a[0][1]);
        return vec![mean - r, mean + r];
    }
    // Cyclic Jacobi rotations.
    let mut m = *a;
    for _sweep in 0..50 {
        let off = m[0][1].powi(2) + m[0][2].powi(2) + m[1][2].powi(2);
        let scale = m[0][0].powi(2) + m[1][1].powi(2) + m[2][2].powi(2);
        if off <= 1e-30 * scale.max(1e-300) {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if m[p][q] == 0.0 {
                continue;
            }
            let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut next = m;
            for k in 0..3 {
                next[k][p] = c * m[k][p] - s * m[k][q];
                next[k][q] = s * m[k][p] + c * m[k][q];
            }
            let cols = next;
            for k in 0..3 {
                next[p][k] = c * cols[p][k] - s * cols[q][k];
                next[q][k] = s * cols[p][k] + c * cols[q][k];
            }
            next[p][q] = 0.0;
            next[q][p] = 0.0;
            m = next;
        }
    }
    let mut eig = vec![m[0][0], m[1][1], m[2][2]];
    eig.sort_by(f64::total_cmp);
    eig
}

/// Result of sampling the smallest eigenvalue of `A` over a domain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpdReport {
    pub samples: usize,
    pub min_eigenvalue: f64,
    pub argmin: Vec<f64>,
    /// Number of samples whose smallest eigenvalue is `<= 0` or where `A`
    /// could not be evaluated.
    pub flagged: usize,
    /// First few flagged points.
    pub flagged_points: Vec<Vec<f64>>,
}

impl SpdReport {
    pub fn passed(&self) -> bool {
        self.flagged == 0
    }
}

/// Evaluates `A` on an interior grid of `samples_per_axis^d` points and
/// reports its smallest eigenvalue.
pub fn validate_spd(model: &SdeModel, domain: &BoxDomain, samples_per_axis: usize) -> SpdReport {
    let n = samples_per_axis.max(2);
    let mut report = SpdReport {
        samples: 0,
        min_eigenvalue: f64::INFINITY,
        argmin: Vec::new(),
        flagged: 0,
        flagged_points: Vec::new(),
    };
    for point in interior_grid(domain, n) {
        report.samples += 1;
        let lambda = match model.diffusion_at(&point) {
            Ok(a) => symmetric_eigenvalues(&a, model.dim())[0],
            Err(_) => f64::NAN,
        };
        if lambda < report.min_eigenvalue {
            report.min_eigenvalue = lambda;
            report.argmin = point.clone();
        }
        if !(lambda > 0.0) {
            report.flagged += 1;
            if report.flagged_points.len() < 10 {
                report.flagged_points.push(point);
            }
        }
    }
    report
}

/// A box with a label, e.g. the two tumor domains.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedDomain {
    pub name: String,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Registry entry describing a built-in model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuiltinInfo {
    pub name: String,
    pub description: String,
    pub variables: Vec<String>,
    pub parameters: Vec<(String, f64)>,
    /// Other parameter values studied for this model.
    pub variants: Vec<(String, Vec<f64>)>,
    pub domains: Vec<NamedDomain>,
    pub probe: Vec<f64>,
}

impl BuiltinInfo {
    pub fn dim(&self) -> usize {
        self.variables.len()
    }

    pub fn default_domain(&self) -> BoxDomain {
        let d = &self.domains[0];
        BoxDomain::new(d.lower.clone(), d.upper.clone()).expect("built-in domains are valid")
    }

    pub fn domain(&self, name: &str) -> Option<BoxDomain> {
        self.domains
            .iter()
            .find(|d| d.name == name)
            .map(|d| BoxDomain::new(d.lower.clone(), d.upper.clone()).expect("valid"))
    }
}

pub const BUILTIN_NAMES: [&str; 4] = ["rumor", "gonorrhea", "sir", "tumor"];

fn owned(pairs: &[(&str, f64)]) -> Vec<(String, f64)> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn domain(name: &str, lower: &[f64], upper: &[f64]) -> NamedDomain {
    NamedDomain {
        name: name.into(),
        lower: lower.to_vec(),
        upper: upper.to_vec(),
    }
}

pub fn builtin_info(name: &str) -> Option<BuiltinInfo> {
    let info = match name {
        "rumor" => BuiltinInfo {
            name: "rumor".into(),
            description: "rumor spreading, transition-table construction".into(),
            variables: vec!["S".into(), "I".into()],
            parameters: owned(&[
                ("Lambda", 0.5),
                ("mu", 0.3),
                ("eta", 0.2),
                ("alpha", 0.1),
                ("beta", 0.4),
            ]),
            variants: vec![],
            domains: vec![domain("D", &[0.7, 0.1], &[0.9, 0.3])],
            probe: vec![0.8, 0.2],
        },
        "gonorrhea" => BuiltinInfo {
            name: "gonorrhea".into(),
            description: "SIS gonorrhea model with a perturbed transmission parameter".into(),
            variables: vec!["S".into(), "I".into()],
            parameters: owned(&[
                ("N", 10000.0),
                ("mu", 6.84463e-5),
                ("gamma", 0.018182),
                ("beta", 2.55504e-6),
                ("alpha", 1e-4),
            ]),
            variants: vec![("alpha".into(), vec![1e-4, 1.5e-5])],
            domains: vec![domain("D", &[8500.0, 500.0], &[9500.0, 1500.0])],
            probe: vec![9000.0, 1000.0],
        },
        "sir" => BuiltinInfo {
            name: "sir".into(),
            description: "SIR epidemic with the displayed drift and diffusion".into(),
            variables: vec!["S".into(), "I".into(), "R".into()],
            parameters: owned(&[
                ("Lambda", 5.0),
                ("mu", 0.95),
                ("beta", 0.8),
                ("gamma", 0.8),
                ("epsilon", 0.6),
            ]),
            variants: vec![],
            domains: vec![domain("D", &[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0])],
            probe: vec![0.8, 0.1, 0.1],
        },
        "tumor" => BuiltinInfo {
            name: "tumor".into(),
            description: "effector/normal/tumor cell model, transition-table construction".into(),
            variables: vec!["E".into(), "N".into(), "T".into()],
            parameters: owned(&[
                ("s", 1.0),
                ("rho", 0.3),
                ("alpha", 0.8),
                ("beta1", 1.0),
                ("d1", 0.3),
                ("c1", 0.2),
                ("r1", 0.7),
                ("b1", 0.6),
                ("beta2", 0.1),
                ("c2", 0.2),
                ("r2", 2.3),
                ("b2", 0.2),
                ("beta3", 0.3),
                ("beta4", 0.3),
                ("c3", 0.2),
            ]),
            variants: vec![],
            domains: vec![
                domain("D1", &[0.0, 0.0, 0.0], &[4.0, 2.0, 2.0]),
                domain("D2", &[0.0, 0.0, 0.0], &[4.0, 2.0, 4.0]),
            ],
            probe: vec![3.0, 1.5, 1.0],
        },
        _ => return None,
    };
    Some(info)
}

fn entries(rows: &[(&[&str], &str)]) -> Vec<(Vec<String>, String)> {
    rows.iter()
        .map(|(c, r)| (c.iter().map(|s| s.to_string()).collect(), r.to_string()))
        .collect()
}

/// Transition table of a table-built model (rumor and tumor).
pub fn builtin_table(name: &str, overrides: &BTreeMap<String, f64>) -> Result<Option<TransitionTable>, ModelError> {
    let (info, params) = resolve_parameters(name, overrides)?;
    let rows = match name {
        "rumor" => entries(&[
            (&["-1", "0"], "mu*S"),
            (&["0", "-1"], "(mu + eta)*I + alpha*I^2"),
            (&["1", "0"], "Lambda + alpha*I^2"),
            (&["-1", "1"], "beta*S*I"),
        ]),
        "tumor" => entries(&[
            (&["1", "0", "0"], "s + rho*E*T/(alpha + T)"),
            (&["-beta1", "0", "-beta3"], "E*T"),
            (&["-1", "0", "0"], "(d1 + c1)*E"),
            (&["0", "1", "0"], "r1*N*(1 - b1*N)"),
            (&["0", "-beta2", "-beta4"], "N*T"),
            (&["0", "-1", "0"], "c2*N"),
            (&["0", "0", "1"], "r2*T*(1 - b2*T)"),
            (&["0", "0", "-1"], "c3*T"),
        ]),
        _ => return Ok(None),
    };
    TransitionTable::parse(&info.variables, &params, &rows).map(Some)
}

fn resolve_parameters(
    name: &str,
    overrides: &BTreeMap<String, f64>,
) -> Result<(BuiltinInfo, HashMap<String, f64>), ModelError> {
    let info = builtin_info(name).ok_or_else(|| ModelError::UnknownModel(name.to_owned()))?;
    let mut params: HashMap<String, f64> = info.parameters.iter().cloned().collect();
    for (k, v) in overrides {
        match params.get_mut(k) {
            Some(slot) => *slot = *v,
            None => {
                return Err(ModelError::UnknownParameter {
                    model: name.to_owned(),
                    name: k.clone(),
                })
            }
        }
    }
    Ok((info, params))
}

/// One of the four built-in models with optional parameter overrides.
pub fn builtin_model(name: &str, overrides: &BTreeMap<String, f64>) -> Result<SdeModel, ModelError> {
    let (info, params) = resolve_parameters(name, overrides)?;
    let sorted: BTreeMap<String, f64> = params.iter().map(|(k, v)| (k.clone(), *v)).collect();
    let model = match name {
        "rumor" | "tumor" => {
            let table = builtin_table(name, overrides)?.expect("table-built model");
            SdeModel::from_table(name, &table)
        }
        "gonorrhea" => SdeModel::from_strings(
            name,
            &info.variables,
            &params,
            &["mu*N - beta*S*I + gamma*I - mu*S", "beta*S*I - (mu + gamma)*I"],
            &[vec!["alpha^2*S^2*I^2", "0"], vec!["0", "alpha^2*S^2*I^2"]],
        )?,
        "sir" => SdeModel::from_strings(
            name,
            &info.variables,
            &params,
            &[
                "Lambda - mu*S - beta*S*I",
                "beta*S*I - (mu + gamma + epsilon)*I",
                "gamma*I - mu*R",
            ],
            &[
                vec!["Lambda + mu*S + beta*S*I", "-beta*S*I", "0"],
                vec![
                    "-beta*S*I",
                    "beta*S*I + (mu + gamma + epsilon)^2*I",
                    "(mu + gamma + epsilon)*gamma*I",
                ],
                vec!["0", "(mu + gamma + epsilon)*gamma*I", "gamma^2*I + mu*R"],
            ],
        )?,
        _ => unreachable!("resolve_parameters rejects unknown names"),
    };
    Ok(model.with_parameters(sorted))
}
