//! The subcommands. Each one resolves the configuration, runs the solver,
//! and writes text tables, a JSON summary and `<prefix>_effective.toml`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use exittime::exit::{
    extract_section, integrate_survival, solve_mean_exit_time, solve_survival, EllipticOptions, EllipticSolution,
    ScalarField, SurvivalOptions, TAIL_CAP_FACTOR, TAIL_THRESHOLD,
};
use exittime::mc::{bias_allowance, compare, dt_for_allowance, simulate_exit, Comparison, ExitStats, SimulationConfig};
use exittime::mesh::SimplicialMesh;
use exittime::model::{builtin_info, SpdReport, BUILTIN_NAMES};
use serde::Serialize;
use serde_json::json;

use crate::config::{DomainConfig, McConfig, Resolved, RunConfig, DEFAULT_STEPS};
use crate::{CliError, Command, RunArgs, EXIT_OK, EXIT_VALIDATION};

/// Largest relative gap between the survival integral and the mean exit time
/// accepted by `validate`.
pub const INTEGRAL_TOLERANCE: f64 = 0.10;
/// Default censoring time for simulations, as a multiple of the mean.
pub const CAP_FACTOR: f64 = 100.0;

pub fn dispatch(command: &Command) -> Result<i32, CliError> {
    match command {
        Command::Models { json } => {
            models(*json);
            Ok(EXIT_OK)
        }
        Command::Derive(a) => derive(a),
        Command::Elliptic(a) => Run::new(a)?.elliptic().map(|_| EXIT_OK),
        Command::Parabolic(a) => Run::new(a)?.parabolic().map(|_| EXIT_OK),
        Command::Mc(a) => Run::new(a)?.mc().map(|_| EXIT_OK),
        Command::Validate(a) => Run::new(a)?.validate(),
    }
}

/// Prints a line, ignoring a closed stdout (e.g. when piped into `head`).
fn emit(line: &str) {
    let _ = writeln!(std::io::stdout(), "{line}");
}

fn models(as_json: bool) {
    let infos: Vec<_> = BUILTIN_NAMES.iter().filter_map(|n| builtin_info(n)).collect();
    if as_json {
        emit(&serde_json::to_string_pretty(&infos).expect("serializable"));
        return;
    }
    for info in infos {
        emit(&format!("{}: {}", info.name, info.description));
        emit(&format!("  variables: {}", info.variables.join(", ")));
        let params: Vec<String> = info.parameters.iter().map(|(k, v)| format!("{k} = {v}")).collect();
        emit(&format!("  parameters: {}", params.join(", ")));
        for (k, vals) in &info.variants {
            emit(&format!("  studied values of {k}: {vals:?}"));
        }
        for d in &info.domains {
            emit(&format!("  domain {}: {:?} to {:?}", d.name, d.lower, d.upper));
        }
        emit(&format!("  probe: {:?}", info.probe));
    }
}

fn derive(args: &RunArgs) -> Result<i32, CliError> {
    let cfg = RunConfig::load(&args.config, &args.set)?;
    let (model, table) = crate::config::resolve_model(&cfg)?;
    let vars = model.variables();
    let mut text = String::new();
    if let Some(t) = &table {
        text.push_str("transitions (change; rate):\n");
        for (i, e) in t.entries().iter().enumerate() {
            text.push_str(&format!("  {}: {:?}; {}\n", i + 1, e.change, e.rate));
        }
    }
    text.push_str("drift:\n");
    for (v, b) in vars.iter().zip(model.drift()) {
        text.push_str(&format!("  b_{v} = {b}\n"));
    }
    text.push_str("diffusion:\n");
    for i in 0..model.dim() {
        for j in i..model.dim() {
            text.push_str(&format!("  a_{}{} = {}\n", vars[i], vars[j], model.diffusion()[i][j]));
        }
    }
    text.push_str("derivatives (d a_ij / d x_j):\n");
    for i in 0..model.dim() {
        for j in 0..model.dim() {
            text.push_str(&format!(
                "  d a_{}{} / d {} = {}\n",
                vars[i],
                vars[j],
                vars[j],
                model.derivatives()[i][j]
            ));
        }
    }
    if !args.quiet {
        let _ = std::io::stdout().write_all(text.as_bytes());
    }
    if let Some(dir) = args.output.as_ref().or(Some(&cfg.output.directory)) {
        fs::create_dir_all(dir)?;
        let prefix = cfg.output.prefix.clone().unwrap_or_else(|| model.name().to_owned());
        fs::write(dir.join(format!("{prefix}_derive.txt")), text)?;
    }
    Ok(EXIT_OK)
}

/// Number formatting for file names: `0.8` becomes `0.8`, `-1` becomes `m1`.
fn tag(v: f64) -> String {
    format!("{v}").replace('-', "m")
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path)?))
}

#[derive(Debug, Serialize)]
struct ProbeValue {
    point: Vec<f64>,
    value: f64,
}

#[derive(Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

struct Run {
    cfg: RunConfig,
    res: Resolved,
    dir: PathBuf,
    quiet: bool,
    mesh: Option<Arc<SimplicialMesh>>,
}

impl Run {
    fn new(args: &RunArgs) -> Result<Run, CliError> {
        let mut cfg = RunConfig::load(&args.config, &args.set)?;
        if let Some(o) = &args.output {
            cfg.output.directory = o.clone();
        }
        let res = cfg.resolve()?;
        fs::create_dir_all(&cfg.output.directory)?;
        let dir = cfg.output.directory.clone();
        let run = Run {
            cfg,
            res,
            dir,
            quiet: args.quiet,
            mesh: None,
        };
        for w in &run.res.warnings {
            eprintln!("warning: {w}");
        }
        Ok(run)
    }

    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            emit(line.as_ref());
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{}_{name}", self.res.prefix))
    }

    fn var(&self, axis: usize) -> &str {
        &self.res.model.variables()[axis]
    }

    fn mesh(&mut self) -> Result<Arc<SimplicialMesh>, CliError> {
        if self.mesh.is_none() {
            let m = SimplicialMesh::new(&self.res.domain, &self.res.divisions)
                .map_err(|e| CliError::Config(e.to_string()))?;
            self.mesh = Some(Arc::new(m));
        }
        Ok(self.mesh.clone().expect("just built"))
    }

    fn write_json(&self, name: &str, value: &serde_json::Value) -> Result<(), CliError> {
        let mut f = create(&self.path(name))?;
        serde_json::to_writer_pretty(&mut f, value).map_err(std::io::Error::from)?;
        writeln!(f)?;
        Ok(())
    }

    /// Records the configuration with every default made explicit, so the
    /// run can be repeated exactly.
    fn write_effective(&mut self) -> Result<(), CliError> {
        let cfg = &mut self.cfg;
        cfg.probes = self.res.probes.clone();
        if cfg.domain.name.is_none() {
            cfg.domain = DomainConfig {
                name: None,
                lower: Some(self.res.domain.lower().to_vec()),
                upper: Some(self.res.domain.upper().to_vec()),
            };
        }
        if let Some(p) = &mut cfg.parabolic {
            p.eta.get_or_insert(p.horizon / DEFAULT_STEPS);
        }
        cfg.output.prefix = Some(self.res.prefix.clone());
        let text = cfg.to_toml();
        fs::write(self.path("effective.toml"), text)?;
        Ok(())
    }

    fn solve_elliptic(&mut self) -> Result<EllipticSolution, CliError> {
        let mesh = self.mesh()?;
        let sol = solve_mean_exit_time(&self.res.model, mesh, &EllipticOptions::default())?;
        for w in &sol.warnings {
            eprintln!("warning: {w}");
        }
        Ok(sol)
    }

    fn probe_values(&self, field: &ScalarField) -> Result<Vec<ProbeValue>, CliError> {
        self.res
            .probes
            .iter()
            .map(|p| {
                Ok(ProbeValue {
                    point: p.clone(),
                    value: field.evaluate(p)?,
                })
            })
            .collect()
    }

    fn write_sections(&self, field: &ScalarField, label: &str) -> Result<Vec<String>, CliError> {
        let mut files = Vec::new();
        for &(axis, value) in &self.res.sections {
            let section = extract_section(field, axis, value)?;
            let name = format!("{label}_{}_{}.txt", self.var(axis), tag(value));
            section.write_text(create(&self.path(&name))?)?;
            files.push(format!("{}_{name}", self.res.prefix));
        }
        Ok(files)
    }

    fn elliptic(&mut self) -> Result<EllipticSolution, CliError> {
        let sol = self.solve_elliptic()?;
        let probes = self.probe_values(&sol.field)?;
        for p in &probes {
            self.say(format!("mean exit time at {:?}: {}", p.point, p.value));
        }
        let sections = if self.cfg.elliptic.enabled {
            self.write_sections(&sol.field, "section")?
        } else {
            Vec::new()
        };
        if self.cfg.elliptic.write_field {
            sol.field.write_nodes(create(&self.path("mean_field.txt"))?)?;
        }
        self.write_json(
            "elliptic.json",
            &json!({
                "model": self.res.model.name(),
                "parameters": self.res.model.parameters(),
                "domain": { "lower": self.res.domain.lower(), "upper": self.res.domain.upper() },
                "divisions": self.res.divisions,
                "probes": probes,
                "minimum": sol.field.min(),
                "maximum": sol.field.max(),
                "solver": sol.report,
                "spd": sol.spd,
                "warnings": sol.warnings.iter().chain(&self.res.warnings).collect::<Vec<_>>(),
                "sections": sections,
            }),
        )?;
        self.write_effective()?;
        Ok(sol)
    }

    fn parabolic(&mut self) -> Result<(), CliError> {
        let p = self
            .cfg
            .parabolic
            .clone()
            .ok_or_else(|| CliError::Config("the parabolic command needs a [parabolic] section".into()))?;
        let eta = p.eta.unwrap_or(p.horizon / DEFAULT_STEPS);
        let mut opts = SurvivalOptions::new(eta, p.horizon, self.res.probes.clone());
        opts.snapshots = p.snapshots.clone();
        let mesh = self.mesh()?;
        let run = solve_survival(&self.res.model, mesh, &opts)?;
        for w in &run.warnings {
            eprintln!("warning: {w}");
        }
        let mut curves = Vec::new();
        for (i, c) in run.curves.iter().enumerate() {
            let name = format!("survival_{}.txt", i + 1);
            c.write_text(create(&self.path(&name))?)?;
            self.say(format!(
                "survival at {:?}: v({}) = {}",
                c.probe,
                c.times.last().expect("nonempty"),
                c.values.last().expect("nonempty")
            ));
            let integral = integrate_survival(c);
            curves.push(json!({
                "probe": c.probe,
                "file": format!("{}_{name}", self.res.prefix),
                "final_value": c.values.last(),
                "integral": integral,
            }));
        }
        let mut snaps = Vec::new();
        for s in &run.snapshots {
            let label = format!("snapshot_t{}", tag(s.time));
            let files = if self.res.sections.is_empty() {
                let name = format!("{label}.txt");
                s.field.write_nodes(create(&self.path(&name))?)?;
                vec![format!("{}_{name}", self.res.prefix)]
            } else {
                self.write_sections(&s.field, &label)?
            };
            snaps.push(json!({ "time": s.time, "files": files }));
        }
        self.write_json(
            "parabolic.json",
            &json!({
                "model": self.res.model.name(),
                "eta": eta,
                "horizon": p.horizon,
                "steps": run.steps,
                "max_iterations": run.max_iterations,
                "worst_residual": run.worst_residual,
                "spd": run.spd,
                "curves": curves,
                "snapshots": snaps,
                "warnings": run.warnings.iter().chain(&self.res.warnings).collect::<Vec<_>>(),
            }),
        )?;
        self.write_effective()
    }

    /// Runs the simulations for every probe and compares them with the
    /// finite element means.
    fn simulate(&mut self, sol: &EllipticSolution) -> Result<Vec<(ExitStats, Comparison)>, CliError> {
        let mc = self.cfg.mc.clone().unwrap_or_default();
        let means: Vec<f64> = self.probe_values(&sol.field)?.iter().map(|p| p.value).collect();
        let dt = match mc.dt {
            Some(dt) => dt,
            None => means
                .iter()
                .map(|&m| dt_for_allowance(&self.res.model, &sol.field, m, mc.allowance_fraction))
                .fold(f64::INFINITY, f64::min),
        };
        if !(dt.is_finite() && dt > 0.0) {
            return Err(CliError::Config(format!(
                "could not choose a simulation step (got {dt}); set mc.dt"
            )));
        }
        let cap = mc
            .time_cap
            .unwrap_or_else(|| CAP_FACTOR * means.iter().cloned().fold(0.0, f64::max));
        let mut out = Vec::new();
        for (p, &mean) in self.res.probes.iter().zip(&means) {
            let mut sim = SimulationConfig::new(dt, mc.paths, mc.seed, cap);
            sim.survival_times = mc.survival_times.clone();
            let stats = simulate_exit(&self.res.model, &self.res.domain, p, &sim)?;
            if let Some(reason) = &stats.abort_reason {
                eprintln!("warning: {} paths aborted ({reason})", stats.aborted);
            }
            let allowance = bias_allowance(&self.res.model, &sol.field, dt);
            let cmp = compare(mean, &stats, mc.z_threshold, allowance);
            self.say(format!(
                "probe {:?}: finite element {} simulated {} (SE {:e}, z {:.2}, allowance {:e}) seed {}",
                p, mean, stats.mean, stats.std_error, cmp.z, allowance, stats.seed
            ));
            out.push((stats, cmp));
        }
        let resolved = McConfig {
            dt: Some(dt),
            time_cap: Some(cap),
            ..mc
        };
        self.cfg.mc = Some(resolved);
        Ok(out)
    }

    fn write_mc(&self, results: &[(ExitStats, Comparison)]) -> Result<serde_json::Value, CliError> {
        let mut entries = Vec::new();
        for (i, ((stats, cmp), p)) in results.iter().zip(&self.res.probes).enumerate() {
            if !stats.survival.is_empty() {
                let mut f = create(&self.path(&format!("mc_survival_{}.txt", i + 1)))?;
                for (t, v) in &stats.survival {
                    writeln!(f, "{t} {v}")?;
                }
            }
            entries.push(json!({ "probe": p, "stats": stats, "comparison": cmp }));
        }
        Ok(serde_json::Value::Array(entries))
    }

    fn mc(&mut self) -> Result<(), CliError> {
        let sol = self.solve_elliptic()?;
        let results = self.simulate(&sol)?;
        let entries = self.write_mc(&results)?;
        let seed = self.cfg.mc.as_ref().map(|m| m.seed);
        self.write_json(
            "mc.json",
            &json!({ "model": self.res.model.name(), "seed": seed, "probes": entries }),
        )?;
        self.write_effective()
    }

    fn validate(&mut self) -> Result<i32, CliError> {
        let mut checks = Vec::new();
        let spd_report = exittime::model::validate_spd(&self.res.model, &self.res.domain, exittime::exit::SPD_SAMPLES);
        checks.push(spd_check(&spd_report));
        if !spd_report.passed() {
            return self.finish_validate(checks, serde_json::Value::Null);
        }

        let sol = self.solve_elliptic()?;
        let (min, max) = (sol.field.min(), sol.field.max());
        checks.push(Check {
            name: "maximum principle".into(),
            passed: min >= -1e-8 * max.abs(),
            detail: format!("nodal mean exit times lie in [{min:e}, {max:e}]"),
        });
        let means: Vec<f64> = self.probe_values(&sol.field)?.iter().map(|p| p.value).collect();

        // Survival run long enough for the integral to capture the tail.
        let longest = means.iter().cloned().fold(0.0, f64::max);
        let eta = match &self.cfg.parabolic {
            Some(p) => p.eta.unwrap_or(p.horizon / DEFAULT_STEPS),
            None => means.iter().cloned().fold(f64::INFINITY, f64::min) / 40.0,
        };
        let horizon = (TAIL_CAP_FACTOR * longest).max(eta);
        let mut opts = SurvivalOptions::new(eta, horizon, self.res.probes.clone());
        opts.stop_below = Some(TAIL_THRESHOLD);
        let mesh = self.mesh()?;
        let run = solve_survival(&self.res.model, mesh, &opts)?;
        let mut integrals = Vec::new();
        for (c, &mean) in run.curves.iter().zip(&means) {
            let increasing = c.values.windows(2).filter(|w| w[1] > w[0] + 1e-8).count();
            checks.push(Check {
                name: format!("survival monotone at {:?}", c.probe),
                passed: increasing == 0,
                detail: format!("{increasing} increasing steps out of {}", c.values.len() - 1),
            });
            let (lo, hi) = c
                .values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            checks.push(Check {
                name: format!("survival in [0, 1] at {:?}", c.probe),
                passed: lo >= -1e-8 && hi <= 1.0 + 1e-8,
                detail: format!("values lie in [{lo:e}, {hi}]"),
            });
            let integral = integrate_survival(c);
            let gap = (integral.integral - mean).abs() / mean;
            checks.push(Check {
                name: format!("survival integral at {:?}", c.probe),
                passed: gap <= INTEGRAL_TOLERANCE,
                detail: format!(
                    "integral {} vs mean {} (relative gap {:.4}, eta {}, last value {:e} at t = {})",
                    integral.integral,
                    mean,
                    gap,
                    eta,
                    integral.last_value,
                    c.times.last().expect("nonempty")
                ),
            });
            integrals.push(json!({ "probe": c.probe, "mean": mean, "integral": integral, "relative_gap": gap }));
        }

        let results = self.simulate(&sol)?;
        for ((_, cmp), p) in results.iter().zip(&self.res.probes) {
            checks.push(Check {
                name: format!("monte carlo at {p:?}"),
                passed: cmp.passed,
                detail: format!(
                    "z = {:.3}, |gap| {:e} vs {} SE + allowance {:e}; {}",
                    cmp.z,
                    (cmp.fem - cmp.mc_mean).abs(),
                    cmp.z_threshold,
                    cmp.allowance,
                    cmp.note
                ),
            });
        }
        let mc = self.write_mc(&results)?;
        let extra = json!({
            "survival_eta": eta,
            "survival_horizon": horizon,
            "survival_steps": run.steps,
            "integrals": integrals,
            "monte_carlo": mc,
            "seed": self.cfg.mc.as_ref().map(|m| m.seed),
        });
        self.finish_validate(checks, extra)
    }

    fn finish_validate(&mut self, checks: Vec<Check>, extra: serde_json::Value) -> Result<i32, CliError> {
        for c in &checks {
            self.say(format!(
                "{} {}: {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            ));
        }
        let passed = checks.iter().all(|c| c.passed);
        self.write_json(
            "validate.json",
            &json!({ "model": self.res.model.name(), "passed": passed, "checks": checks, "details": extra }),
        )?;
        self.write_effective()?;
        Ok(if passed { EXIT_OK } else { EXIT_VALIDATION })
    }
}

fn spd_check(r: &SpdReport) -> Check {
    Check {
        name: "diffusion positive definite".into(),
        passed: r.passed(),
        detail: format!(
            "{} of {} samples flagged; smallest eigenvalue {:e} at {:?}",
            r.flagged, r.samples, r.min_eigenvalue, r.argmin
        ),
    }
}
