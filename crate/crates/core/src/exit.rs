//! Mean exit time and survival function of a diffusion on a box.
//!
//! `u(x) = E^x[τ]` solves `Lu = −1` with `u = 0` on the boundary, and
//! `v(x, t) = P^x[τ > t]` solves `∂v/∂t = Lv` with `v(·, 0) = 1` inside and
//! `v = 0` on the boundary. Both are discretized on a structured simplicial
//! mesh; the parabolic problem uses implicit Euler steps of length `η`.

use std::io::{self, Write};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::fem::{assemble_elliptic, assemble_parabolic_step, FemError};
use crate::linalg::{solve, SolveOptions, SolveReport};
use crate::mesh::{BoxDomain, Location, MeshError, SimplicialMesh};
use crate::model::{validate_spd, SdeModel, SpdReport};

/// Samples per axis used by the positive-definiteness pre-check.
pub const SPD_SAMPLES: usize = 10;
/// Half-width of the slab selected by [`extract_section`].
pub const SECTION_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExitError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("at least 2 divisions per axis are needed for an interior unknown (got {0:?})")]
    Resolution(Vec<usize>),
    #[error(
        "diffusion matrix is not positive definite at {} of {} sampled points (smallest eigenvalue {} at {:?})",
        .0.flagged, .0.samples, .0.min_eigenvalue, .0.argmin
    )]
    NotPositiveDefinite(SpdReport),
    #[error("linear solver did not converge{}: relative residual {:e} after {} iterations",
        .step.map(|s| format!(" at time step {s}")).unwrap_or_default(),
        .report.relative_residual, .report.iterations)]
    SolverFailed { step: Option<usize>, report: SolveReport },
    #[error("probe {0:?} is not strictly inside the domain")]
    ProbeNotInterior(Vec<f64>),
    #[error("need 0 < eta <= horizon (got eta {eta}, horizon {horizon})")]
    InvalidTimeStep { eta: f64, horizon: f64 },
    #[error("snapshot time {0} is outside [0, horizon]")]
    InvalidSnapshot(f64),
    #[error("axis {axis} does not exist in a {dim}-dimensional domain")]
    InvalidAxis { axis: usize, dim: usize },
    #[error("section value {value} lies outside the range of axis {axis}")]
    SectionOutOfRange { axis: usize, value: f64 },
    #[error("no grid nodes within {SECTION_EPS} of {value} on axis {axis}; nearest grid plane is {nearest}")]
    EmptySection { axis: usize, value: f64, nearest: f64 },
    #[error("point has {found} coordinates, expected {expected}")]
    Dimension { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    /// Expected exit time, in model time units.
    MeanExitTime,
    /// Survival probability, dimensionless.
    Survival,
}

/// Nodal values of a piecewise-linear function on a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    mesh: Arc<SimplicialMesh>,
    values: Vec<f64>,
    kind: FieldKind,
}

impl ScalarField {
    pub fn new(mesh: Arc<SimplicialMesh>, values: Vec<f64>, kind: FieldKind) -> ScalarField {
        assert_eq!(values.len(), mesh.num_nodes());
        ScalarField { mesh, values, kind }
    }

    pub fn mesh(&self) -> &Arc<SimplicialMesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Barycentric interpolation at a point of the closed box.
    pub fn evaluate(&self, point: &[f64]) -> Result<f64, ExitError> {
        check_len(self.mesh.dim(), point)?;
        Ok(interpolate(&self.mesh, &self.mesh.locate(point)?, &self.values))
    }

    /// Writes one `x y [z] value` row per node.
    pub fn write_nodes<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (i, v) in self.values.iter().enumerate() {
            for x in self.mesh.node(i) {
                write!(out, "{} ", tidy(*x))?;
            }
            writeln!(out, "{v}")?;
        }
        Ok(())
    }
}

fn check_len(dim: usize, point: &[f64]) -> Result<(), ExitError> {
    if point.len() != dim {
        return Err(ExitError::Dimension {
            expected: dim,
            found: point.len(),
        });
    }
    Ok(())
}

fn interpolate(mesh: &SimplicialMesh, loc: &Location, values: &[f64]) -> f64 {
    mesh.element(loc.element)
        .iter()
        .zip(&loc.barycentric)
        .map(|(&v, &l)| l * values[v])
        .sum()
}

/// Rounds to 12 significant digits so grid coordinates such as `3 · 0.1`
/// print as `0.3`.
pub(crate) fn tidy(x: f64) -> f64 {
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// Free-function form of [`ScalarField::evaluate`].
pub fn evaluate_field(field: &ScalarField, point: &[f64]) -> Result<f64, ExitError> {
    field.evaluate(point)
}

/// Nodes of a field on the plane `x_axis = value`.
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub axis: usize,
    pub value: f64,
    /// Remaining coordinates followed by the field value, ordered
    /// lexicographically in the coordinates.
    pub rows: Vec<Vec<f64>>,
}

impl Section {
    /// Whitespace-separated rows, e.g. `y z u` for a 3D field cut at fixed x.
    pub fn write_text<W: Write>(&self, mut out: W) -> io::Result<()> {
        for row in &self.rows {
            let (coords, value) = row.split_at(row.len() - 1);
            for c in coords {
                write!(out, "{} ", tidy(*c))?;
            }
            writeln!(out, "{}", value[0])?;
        }
        Ok(())
    }
}

/// Collects the nodes with `|x_axis − value| < 1e-6`.
pub fn extract_section(field: &ScalarField, axis: usize, value: f64) -> Result<Section, ExitError> {
    let mesh = &field.mesh;
    let d = mesh.dim();
    if axis >= d {
        return Err(ExitError::InvalidAxis { axis, dim: d });
    }
    let (lo, hi) = (mesh.domain().lower()[axis], mesh.domain().upper()[axis]);
    if !(lo - SECTION_EPS..=hi + SECTION_EPS).contains(&value) {
        return Err(ExitError::SectionOutOfRange { axis, value });
    }
    let nodes = mesh.nodes_near_plane(axis, value, SECTION_EPS);
    if nodes.is_empty() {
        let h = mesh.spacing(axis);
        let steps = ((value - lo) / h).round().clamp(0.0, mesh.divisions()[axis] as f64);
        return Err(ExitError::EmptySection {
            axis,
            value,
            nearest: tidy(lo + steps * h),
        });
    }
    let mut rows: Vec<Vec<f64>> = nodes
        .into_iter()
        .map(|i| {
            let mut row: Vec<f64> = mesh
                .node(i)
                .iter()
                .enumerate()
                .filter(|&(a, _)| a != axis)
                .map(|(_, &x)| x)
                .collect();
            row.push(field.values[i]);
            row
        })
        .collect();
    rows.sort_by(|a, b| {
        a[..d - 1]
            .iter()
            .zip(&b[..d - 1])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(Section { axis, value, rows })
}

/// Output of [`solve_mean_exit_time`].
#[derive(Debug, Clone)]
pub struct EllipticSolution {
    pub field: ScalarField,
    pub report: SolveReport,
    pub spd: SpdReport,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticOptions {
    pub spd_samples: usize,
    pub solver: SolveOptions,
}

impl Default for EllipticOptions {
    fn default() -> Self {
        EllipticOptions {
            spd_samples: SPD_SAMPLES,
            solver: SolveOptions::default(),
        }
    }
}

fn check_resolution(mesh: &SimplicialMesh) -> Result<(), ExitError> {
    if mesh.divisions().iter().any(|&k| k < 2) {
        return Err(ExitError::Resolution(mesh.divisions().to_vec()));
    }
    Ok(())
}

fn check_spd(model: &SdeModel, domain: &BoxDomain, samples: usize) -> Result<SpdReport, ExitError> {
    let spd = validate_spd(model, domain, samples);
    if spd.passed() {
        Ok(spd)
    } else {
        Err(ExitError::NotPositiveDefinite(spd))
    }
}

/// Solves `Lu = −1`, `u = 0` on the boundary, on a `k`-per-axis mesh.
pub fn mean_exit_time(model: &SdeModel, domain: &BoxDomain, k: usize) -> Result<EllipticSolution, ExitError> {
    let mesh = Arc::new(SimplicialMesh::uniform(domain, k)?);
    solve_mean_exit_time(model, mesh, &EllipticOptions::default())
}

pub fn solve_mean_exit_time(
    model: &SdeModel,
    mesh: Arc<SimplicialMesh>,
    options: &EllipticOptions,
) -> Result<EllipticSolution, ExitError> {
    check_resolution(&mesh)?;
    let spd = check_spd(model, mesh.domain(), options.spd_samples)?;
    let system = assemble_elliptic(&mesh, model)?.apply_dirichlet(0.0);
    let (u, report) = solve(&system.matrix, &system.rhs, None, &options.solver);
    if !report.converged {
        return Err(ExitError::SolverFailed { step: None, report });
    }
    let field = ScalarField::new(mesh, u, FieldKind::MeanExitTime);
    let mut warnings = Vec::new();
    let (min, max) = (field.min(), field.max());
    if min < -1e-8 * max.abs() {
        warnings.push(format!(
            "maximum principle violated: minimum nodal value {min:e} (maximum {max:e})"
        ));
    }
    Ok(EllipticSolution {
        field,
        report,
        spd,
        warnings,
    })
}

/// Survival probabilities at one probe point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalCurve {
    pub probe: Vec<f64>,
    pub eta: f64,
    pub horizon: f64,
    /// `t_m = m η`, starting with `t_0 = 0`.
    pub times: Vec<f64>,
    /// Raw solver values; `values[0]` is the initial value 1.
    pub values: Vec<f64>,
}

impl SurvivalCurve {
    /// Linear interpolation in time, clamped to the recorded range.
    pub fn value_at(&self, t: f64) -> f64 {
        let last = self.times.len() - 1;
        let pos = (t / self.eta).max(0.0);
        let m = (pos.floor() as usize).min(last);
        if m == last {
            return self.values[last];
        }
        let frac = pos - m as f64;
        (1.0 - frac) * self.values[m] + frac * self.values[m + 1]
    }

    /// `t v` rows for `t = η, 2η, ...`, with `v` clipped to `[0, 1]`.
    pub fn write_text<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (t, v) in self.times.iter().zip(&self.values).skip(1) {
            writeln!(out, "{} {}", tidy(*t), v.clamp(0.0, 1.0))?;
        }
        Ok(())
    }
}

/// Full field recorded at a requested time.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub time: f64,
    pub field: ScalarField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalOptions {
    pub eta: f64,
    pub horizon: f64,
    pub probes: Vec<Vec<f64>>,
    /// Times at which the whole field is kept; each is rounded to the
    /// nearest step.
    pub snapshots: Vec<f64>,
    /// Stop early once every probe value is below this threshold.
    pub stop_below: Option<f64>,
    pub spd_samples: usize,
    pub solver: SolveOptions,
}

impl SurvivalOptions {
    pub fn new(eta: f64, horizon: f64, probes: Vec<Vec<f64>>) -> SurvivalOptions {
        SurvivalOptions {
            eta,
            horizon,
            probes,
            snapshots: Vec::new(),
            stop_below: None,
            spd_samples: SPD_SAMPLES,
            solver: SolveOptions::default(),
        }
    }
}

/// Output of [`solve_survival`].
#[derive(Debug, Clone)]
pub struct SurvivalRun {
    pub curves: Vec<SurvivalCurve>,
    pub snapshots: Vec<Snapshot>,
    pub steps: usize,
    pub max_iterations: usize,
    pub worst_residual: f64,
    pub spd: SpdReport,
    pub warnings: Vec<String>,
}

/// Number of implicit steps covering `[0, horizon]`; the small slack keeps
/// `0.6 / 0.01` from rounding down to 59.
pub fn step_count(eta: f64, horizon: f64) -> usize {
    (horizon / eta + 1e-9).floor() as usize
}

/// Solves the survival problem on a `k`-per-axis mesh for one probe.
pub fn survival_function(
    model: &SdeModel,
    domain: &BoxDomain,
    k: usize,
    eta: f64,
    horizon: f64,
    probe: &[f64],
) -> Result<SurvivalCurve, ExitError> {
    let mesh = Arc::new(SimplicialMesh::uniform(domain, k)?);
    let run = solve_survival(model, mesh, &SurvivalOptions::new(eta, horizon, vec![probe.to_vec()]))?;
    Ok(run.curves.into_iter().next().expect("one probe"))
}

/// Implicit Euler stepping of the survival problem. The step matrix is
/// assembled once; each solve starts from the previous step's solution.
pub fn solve_survival(
    model: &SdeModel,
    mesh: Arc<SimplicialMesh>,
    options: &SurvivalOptions,
) -> Result<SurvivalRun, ExitError> {
    let (eta, horizon) = (options.eta, options.horizon);
    if !(eta > 0.0 && eta.is_finite() && horizon.is_finite() && horizon >= eta * (1.0 - 1e-9)) {
        return Err(ExitError::InvalidTimeStep { eta, horizon });
    }
    check_resolution(&mesh)?;
    let domain = mesh.domain().clone();
    let mut locations = Vec::with_capacity(options.probes.len());
    for p in &options.probes {
        check_len(mesh.dim(), p)?;
        if !domain.is_interior(p) {
            return Err(ExitError::ProbeNotInterior(p.clone()));
        }
        locations.push(mesh.locate(p)?);
    }
    let steps = step_count(eta, horizon);
    let mut snapshot_steps = Vec::with_capacity(options.snapshots.len());
    for &t in &options.snapshots {
        let m = (t / eta).round();
        if !(t >= 0.0 && m <= steps as f64) {
            return Err(ExitError::InvalidSnapshot(t));
        }
        snapshot_steps.push(m as usize);
    }

    let spd = check_spd(model, &domain, options.spd_samples)?;
    let system = assemble_parabolic_step(&mesh, model, eta)?;

    let mut u: Vec<f64> = mesh
        .boundary_mask()
        .iter()
        .map(|&b| if b { 0.0 } else { 1.0 })
        .collect();
    let mut curves: Vec<SurvivalCurve> = options
        .probes
        .iter()
        .map(|p| SurvivalCurve {
            probe: p.clone(),
            eta,
            horizon,
            times: vec![0.0],
            values: vec![1.0],
        })
        .collect();
    let mut snapshots = Vec::new();
    let take_snapshots = |m: usize, u: &[f64], out: &mut Vec<Snapshot>| {
        for (&s, &t) in snapshot_steps.iter().zip(&options.snapshots) {
            if s == m {
                out.push(Snapshot {
                    time: t,
                    field: ScalarField::new(mesh.clone(), u.to_vec(), FieldKind::Survival),
                });
            }
        }
    };
    take_snapshots(0, &u, &mut snapshots);

    let mut max_iterations = 0;
    let mut worst_residual: f64 = 0.0;
    let mut taken = 0;
    for m in 1..=steps {
        let rhs = system.rhs(&u);
        let (next, report) = solve(&system.step, &rhs, Some(&u), &options.solver);
        if !report.converged {
            return Err(ExitError::SolverFailed { step: Some(m), report });
        }
        u = next;
        taken = m;
        max_iterations = max_iterations.max(report.iterations);
        worst_residual = worst_residual.max(report.relative_residual);
        let t = m as f64 * eta;
        for (curve, loc) in curves.iter_mut().zip(&locations) {
            curve.times.push(t);
            curve.values.push(interpolate(&mesh, loc, &u));
        }
        take_snapshots(m, &u, &mut snapshots);
        if let Some(threshold) = options.stop_below {
            if curves.iter().all(|c| *c.values.last().unwrap() < threshold) {
                break;
            }
        }
    }

    let mut warnings = Vec::new();
    for c in &curves {
        if let Some(m) = c.values.windows(2).position(|w| w[1] > w[0] + 1e-8) {
            warnings.push(format!(
                "survival at {:?} increases between t = {} and t = {}",
                c.probe,
                tidy(c.times[m]),
                tidy(c.times[m + 1])
            ));
        }
        if c.values.iter().any(|&v| !(-1e-8..=1.0 + 1e-8).contains(&v)) {
            warnings.push(format!("survival at {:?} leaves [0, 1]", c.probe));
        }
    }
    Ok(SurvivalRun {
        curves,
        snapshots,
        steps: taken,
        max_iterations,
        worst_residual,
        spd,
        warnings,
    })
}

/// Trapezoidal estimate of `E[τ] = ∫ P[τ > t] dt` over the recorded range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurvivalIntegral {
    pub integral: f64,
    /// Last recorded survival value; a large value means the horizon cut off
    /// a significant tail.
    pub last_value: f64,
    /// `last_value · η`, a rough size of the omitted tail per step.
    pub tail_indicator: f64,
}

pub fn integrate_survival(curve: &SurvivalCurve) -> SurvivalIntegral {
    let integral = curve
        .times
        .windows(2)
        .zip(curve.values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum();
    let last_value = *curve.values.last().expect("curve is nonempty");
    SurvivalIntegral {
        integral,
        last_value,
        tail_indicator: last_value * curve.eta,
    }
}

/// Survival threshold and horizon cap used when comparing the survival
/// integral with the mean exit time.
pub const TAIL_THRESHOLD: f64 = 0.01;
pub const TAIL_CAP_FACTOR: f64 = 10.0;

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;

    fn laplace2() -> SdeModel {
        SdeModel::from_strings(
            "laplace",
            &["x", "y"],
            &HashMap::new(),
            &["0", "0"],
            &[vec!["1", "0"], vec!["0", "1"]],
        )
        .unwrap()
    }

    fn unit_square() -> BoxDomain {
        BoxDomain::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()
    }

    fn linear_field(mesh: Arc<SimplicialMesh>) -> ScalarField {
        let vals = (0..mesh.num_nodes())
            .map(|i| 2.0 * mesh.node(i)[0] - mesh.node(i)[1] + 0.5)
            .collect();
        ScalarField::new(mesh, vals, FieldKind::MeanExitTime)
    }

    #[test]
    fn evaluation_at_nodes_and_linear_reproduction() {
        let mesh = Arc::new(SimplicialMesh::uniform(&unit_square(), 5).unwrap());
        let f = linear_field(mesh.clone());
        assert_eq!(f.evaluate(mesh.node(7)).unwrap(), f.values()[7]);
        for p in [[0.13, 0.77], [0.5, 0.5], [0.999, 0.001], [0.0, 1.0]] {
            let want = 2.0 * p[0] - p[1] + 0.5;
            assert!((f.evaluate(&p).unwrap() - want).abs() < 1e-14);
        }
        assert!(matches!(
            f.evaluate(&[1.5, 0.5]),
            Err(ExitError::Mesh(MeshError::OutsideDomain(_)))
        ));
        assert!(matches!(f.evaluate(&[0.5]), Err(ExitError::Dimension { .. })));
    }

    #[test]
    fn sections() {
        let dom = BoxDomain::new(vec![0.0, 0.0, 0.0], vec![4.0, 2.0, 4.0]).unwrap();
        let mesh = Arc::new(SimplicialMesh::uniform(&dom, 10).unwrap());
        let vals = (0..mesh.num_nodes())
            .map(|i| mesh.node(i)[1] * 10.0 + mesh.node(i)[2])
            .collect();
        let f = ScalarField::new(mesh, vals, FieldKind::MeanExitTime);
        let s = extract_section(&f, 0, 1.2).unwrap();
        assert_eq!(s.rows.len(), 121);
        assert!(s.rows.windows(2).all(|w| (w[0][0], w[0][1]) < (w[1][0], w[1][1])));
        assert_eq!(s.rows[1][..2], [0.0, 0.4]);
        let mut text = Vec::new();
        s.write_text(&mut text).unwrap();
        let text = String::from_utf8(text).unwrap();
        assert_eq!(text.lines().count(), 121);
        assert_eq!(text.lines().nth(1).unwrap(), "0 0.4 0.4");
        match extract_section(&f, 0, 1.25).unwrap_err() {
            ExitError::EmptySection { nearest, .. } => assert_eq!(nearest, 1.2),
            e => panic!("{e}"),
        }
        assert!(matches!(
            extract_section(&f, 3, 1.0),
            Err(ExitError::InvalidAxis { .. })
        ));
        assert!(matches!(
            extract_section(&f, 1, 2.5),
            Err(ExitError::SectionOutOfRange { .. })
        ));
    }

    #[test]
    fn boundary_section_of_solution_is_zero() {
        let sol = mean_exit_time(&laplace2(), &unit_square(), 8).unwrap();
        let s = extract_section(&sol.field, 1, 0.0).unwrap();
        assert_eq!(s.rows.len(), 9);
        assert!(s.rows.iter().all(|r| r[1] == 0.0));
        assert_eq!(sol.field.evaluate(&[0.3, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn coarse_laplace_centre() {
        let sol = mean_exit_time(&laplace2(), &unit_square(), 2).unwrap();
        assert!((sol.field.evaluate(&[0.5, 0.5]).unwrap() - 0.125).abs() < 1e-12);
        assert!(sol.warnings.is_empty());
        assert!(matches!(
            mean_exit_time(&laplace2(), &unit_square(), 1),
            Err(ExitError::Resolution(_))
        ));
    }

    #[test]
    fn degenerate_diffusion_is_rejected() {
        let m = SdeModel::from_strings(
            "flat",
            &["x", "y"],
            &HashMap::new(),
            &["0", "0"],
            &[vec!["1", "1"], vec!["1", "1"]],
        )
        .unwrap();
        assert!(matches!(
            mean_exit_time(&m, &unit_square(), 4),
            Err(ExitError::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn survival_basics() {
        let curve = survival_function(&laplace2(), &unit_square(), 10, 0.01, 0.2, &[0.5, 0.5]).unwrap();
        assert_eq!(curve.times.len(), 21);
        assert_eq!(curve.values[0], 1.0);
        assert!(curve.values.windows(2).all(|w| w[1] <= w[0] + 1e-8));
        assert!(curve.values.iter().all(|v| (-1e-8..=1.0 + 1e-8).contains(v)));
        let mut text = Vec::new();
        curve.write_text(&mut text).unwrap();
        let text = String::from_utf8(text).unwrap();
        assert_eq!(text.lines().count(), 20);
        assert!(text.starts_with("0.01 "));
        assert!(text.lines().last().unwrap().starts_with("0.2 "));
        assert!(matches!(
            survival_function(&laplace2(), &unit_square(), 10, 0.01, 0.2, &[0.0, 0.5]),
            Err(ExitError::ProbeNotInterior(_))
        ));
        assert!(matches!(
            survival_function(&laplace2(), &unit_square(), 10, 0.5, 0.2, &[0.5, 0.5]),
            Err(ExitError::InvalidTimeStep { .. })
        ));
    }

    #[test]
    fn step_count_rounding() {
        assert_eq!(step_count(0.01, 0.6), 60);
        assert_eq!(step_count(0.1, 0.3), 3);
        assert_eq!(step_count(0.25, 1.0), 4);
        assert_eq!(step_count(0.3, 1.0), 3);
    }

    #[test]
    fn snapshots_and_early_stop() {
        let mesh = Arc::new(SimplicialMesh::uniform(&unit_square(), 8).unwrap());
        let mut opts = SurvivalOptions::new(0.01, 1.0, vec![vec![0.5, 0.5], vec![0.25, 0.5]]);
        opts.snapshots = vec![0.0, 0.05];
        opts.stop_below = Some(0.01);
        let run = solve_survival(&laplace2(), mesh.clone(), &opts).unwrap();
        assert!(run.steps < 100);
        assert!(run.curves.iter().all(|c| *c.values.last().unwrap() < 0.01));
        assert_eq!(run.snapshots.len(), 2);
        assert_eq!(
            run.snapshots[0].field.values().iter().filter(|&&v| v == 1.0).count(),
            49
        );
        let probe_at_snapshot = run.snapshots[1].field.evaluate(&[0.5, 0.5]).unwrap();
        assert_eq!(probe_at_snapshot, run.curves[0].values[5]);
        opts.snapshots = vec![2.0];
        assert!(matches!(
            solve_survival(&laplace2(), mesh, &opts),
            Err(ExitError::InvalidSnapshot(_))
        ));
    }

    #[test]
    fn trapezoid_oracles() {
        let ones = SurvivalCurve {
            probe: vec![0.5, 0.5],
            eta: 0.1,
            horizon: 1.0,
            times: (0..=10).map(|m| m as f64 * 0.1).collect(),
            values: vec![1.0; 11],
        };
        assert!((integrate_survival(&ones).integral - 1.0).abs() < 1e-14);
        let ramp = SurvivalCurve {
            values: ones.times.iter().map(|t| (1.0 - t).max(0.0)).collect(),
            ..ones.clone()
        };
        let r = integrate_survival(&ramp);
        assert!((r.integral - 0.5).abs() < 1e-14);
        assert!(r.last_value.abs() < 1e-15);
        assert!((ramp.value_at(0.25) - 0.75).abs() < 1e-14);
        assert_eq!(ramp.value_at(5.0), ramp.values[10]);
    }

    #[test]
    fn survival_integral_tracks_mean() {
        let mean = mean_exit_time(&laplace2(), &unit_square(), 16).unwrap();
        let u = mean.field.evaluate(&[0.5, 0.5]).unwrap();
        let mesh = mean.field.mesh().clone();
        let mut opts = SurvivalOptions::new(u / 200.0, TAIL_CAP_FACTOR * u, vec![vec![0.5, 0.5]]);
        opts.stop_below = Some(TAIL_THRESHOLD);
        let run = solve_survival(&laplace2(), mesh, &opts).unwrap();
        let i = integrate_survival(&run.curves[0]).integral;
        assert!((i - u).abs() < 0.1 * u, "{i} vs {u}");
    }
}
