//! Experiment runner behind the `fkf` binary: a JSON config selects one
//! experiment, every check it runs lands in a JSON report, and data series go
//! to CSV next to it.
//!
//! Defaults reproduce the settings of the acceptance suite, so a config holding
//! only `{"experiment": "functor"}` runs the full functor comparison.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feynman_kac_mc::{
    fk_estimate, ou_cell_kernel, row_total_variation, sewing_check, simulate, verify_functor, EmSettings,
    FunctorSettings, InitialCondition, SampleStats,
};
use crate::generator_pde::{cfl_limit, solve_backward, PdeProblem};
use crate::maxcal::{
    brute_force_paths, caliber, feasible_perturbations, gluing_factorization_check, maxcal_solve, maxent_density,
    total_variation, Builtin, CaliberDocument, MaxEntProblem, ObservableSpec, ObservableValues,
};
use crate::parameter_flow::{integrate_flow, OuParams, ParamPoint};
use crate::process::Process;
use crate::stat_manifold::{gaussian_pdf, Grid, GridDensity, GridFunction, Potential};

/// Random feasible perturbations tried against a max-caliber solution.
pub const PERTURBATIONS: usize = 100;
/// Query points of the Feynman-Kac comparison, spaced 0.5 around `q0`.
pub const FK_QUERY_POINTS: usize = 11;
/// Width of the Feynman-Kac acceptance band in standard errors.
pub const FK_BAND: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Moments,
    Functor,
    Sewing,
    FkBackward,
    Maxent,
    Maxcal,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Moments => "moments",
            Experiment::Functor => "functor",
            Experiment::Sewing => "sewing",
            Experiment::FkBackward => "fk-backward",
            Experiment::Maxent => "maxent",
            Experiment::Maxcal => "maxcal",
        }
    }

    fn fields(self) -> &'static [&'static str] {
        match self {
            Experiment::Moments => &["process", "b", "k", "lambda", "m0", "s0", "t", "dt", "n_paths", "seed"],
            Experiment::Functor => &[
                "process", "b", "k", "lambda", "m0", "s0", "t", "dt", "dx", "n_paths", "seed",
            ],
            Experiment::Sewing => &["b", "k", "lambda", "t", "dx", "grid_lo", "grid_hi"],
            Experiment::FkBackward => &[
                "process", "b", "k", "lambda", "q0", "t", "dt", "dx", "n_paths", "seed", "grid_lo", "grid_hi",
            ],
            Experiment::Maxent => &["m0", "s0", "dx", "grid_lo", "grid_hi"],
            Experiment::Maxcal => &["seed", "maxcal"],
        }
    }

    /// Default tolerance of every check the experiment reports.
    fn default_tolerances(self) -> &'static [(&'static str, f64)] {
        match self {
            Experiment::Moments => &[("rk4_vs_closed_form", 1e-8), ("mc_mean_z", 3.0), ("mc_variance_z", 3.0)],
            Experiment::Functor => &[
                ("l1_parameter_vs_pde", 1e-2),
                ("l1_parameter_vs_monte_carlo", 0.02),
                ("l1_pde_vs_monte_carlo", 0.02),
            ],
            Experiment::Sewing => &[("sewing_residual", 1e-3)],
            Experiment::FkBackward => &[
                ("points_outside_band_closed_form", 1.0),
                ("points_outside_band_pde", 1.0),
            ],
            Experiment::Maxent => &[("linf_vs_gaussian", 1e-6), ("max_constraint_residual", 1e-8)],
            Experiment::Maxcal => &[
                ("tv_vs_brute_force", 1e-8),
                ("gluing_residual", 1e-12),
                ("max_constraint_residual", 1e-8),
                ("perturbations_with_higher_caliber", 0.0),
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKind {
    Ou,
    Wiener,
}

/// One experiment. Unset fields take the experiment's defaults; fields the
/// experiment does not use are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub process: Option<ProcessKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s0: Option<f64>,
    /// Horizon: flow time, terminal time, or the two-step span of the sewing check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maxcal: Option<CaliberDocument>,
    /// Not echoed in reports, so moving the output does not change them.
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            process: None,
            b: None,
            k: None,
            lambda: None,
            q0: None,
            m0: None,
            s0: None,
            t: None,
            dt: None,
            dx: None,
            n_paths: None,
            seed: None,
            grid_lo: None,
            grid_hi: None,
            tolerances: None,
            maxcal: None,
            output_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    fn set_fields(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let mut mark = |name, set: bool| {
            if set {
                out.push(name)
            }
        };
        mark("process", self.process.is_some());
        mark("b", self.b.is_some());
        mark("k", self.k.is_some());
        mark("lambda", self.lambda.is_some());
        mark("q0", self.q0.is_some());
        mark("m0", self.m0.is_some());
        mark("s0", self.s0.is_some());
        mark("t", self.t.is_some());
        mark("dt", self.dt.is_some());
        mark("dx", self.dx.is_some());
        mark("n_paths", self.n_paths.is_some());
        mark("seed", self.seed.is_some());
        mark("grid_lo", self.grid_lo.is_some());
        mark("grid_hi", self.grid_hi.is_some());
        mark("maxcal", self.maxcal.is_some());
        out
    }

    /// Fills every field the experiment uses with its default.
    pub fn with_defaults(&self) -> Self {
        let mut c = self.clone();
        let fill = |slot: &mut Option<f64>, v: f64| {
            slot.get_or_insert(v);
        };
        match c.experiment {
            Experiment::Moments => {
                c.process.get_or_insert(ProcessKind::Ou);
                fill(&mut c.b, 2.0);
                fill(&mut c.lambda, 1.0);
                fill(&mut c.m0, 0.0);
                fill(&mut c.s0, 0.0);
                fill(&mut c.t, 10.0);
                fill(&mut c.dt, 1e-3);
                c.n_paths.get_or_insert(100_000);
                c.seed.get_or_insert(2024);
                if c.process == Some(ProcessKind::Ou) {
                    fill(&mut c.k, 0.5);
                }
            }
            Experiment::Functor => {
                c.process.get_or_insert(ProcessKind::Ou);
                fill(&mut c.b, 1.0);
                fill(&mut c.lambda, 1.0);
                fill(&mut c.m0, 1.0);
                fill(&mut c.s0, 1.0);
                fill(&mut c.t, 1.0);
                fill(&mut c.dt, 1e-3);
                fill(&mut c.dx, 0.01);
                c.n_paths.get_or_insert(100_000);
                c.seed.get_or_insert(2024);
                if c.process == Some(ProcessKind::Ou) {
                    fill(&mut c.k, 0.0);
                }
            }
            Experiment::Sewing => {
                fill(&mut c.b, 1.0);
                fill(&mut c.k, 0.0);
                fill(&mut c.lambda, 1.0);
                fill(&mut c.t, 0.5);
                fill(&mut c.dx, 0.05);
                fill(&mut c.grid_lo, -12.0);
                fill(&mut c.grid_hi, 12.0);
            }
            Experiment::FkBackward => {
                c.process.get_or_insert(ProcessKind::Wiener);
                fill(&mut c.b, 0.0);
                fill(&mut c.lambda, 0.5);
                fill(&mut c.q0, 0.0);
                fill(&mut c.t, 1.0);
                fill(&mut c.dt, 1e-3);
                fill(&mut c.dx, 0.02);
                c.n_paths.get_or_insert(100_000);
                c.seed.get_or_insert(2024);
                fill(&mut c.grid_lo, -10.0);
                fill(&mut c.grid_hi, 10.0);
                if c.process == Some(ProcessKind::Ou) {
                    fill(&mut c.k, 0.0);
                }
            }
            Experiment::Maxent => {
                fill(&mut c.m0, 0.0);
                fill(&mut c.s0, 1.0);
                fill(&mut c.dx, 0.01);
                fill(&mut c.grid_lo, -12.0);
                fill(&mut c.grid_hi, 12.0);
            }
            Experiment::Maxcal => {
                c.seed.get_or_insert(2024);
                c.maxcal.get_or_insert_with(default_caliber_document);
            }
        }
        let tolerances = c.tolerances.get_or_insert_with(BTreeMap::new);
        for (name, v) in c.experiment.default_tolerances() {
            tolerances.entry((*name).to_string()).or_insert(*v);
        }
        c
    }

    /// Every problem with the config, one message per field.
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        let allowed = self.experiment.fields();
        for f in self.set_fields() {
            if !allowed.contains(&f) {
                errors.push(format!("{f}: not used by experiment {}", self.experiment.name()));
            }
        }
        if self.process == Some(ProcessKind::Wiener) && self.k.is_some() {
            errors.push("k: not used by the wiener process".into());
        }
        let c = self.with_defaults();
        let mut check = |name: &str, v: Option<f64>, ok: fn(f64) -> bool, rule: &str| {
            if let Some(v) = v {
                if !ok(v) {
                    errors.push(format!("{name}: {v} {rule}"));
                }
            }
        };
        check("b", c.b, f64::is_finite, "must be finite");
        check("k", c.k, f64::is_finite, "must be finite");
        check("q0", c.q0, f64::is_finite, "must be finite");
        check("m0", c.m0, f64::is_finite, "must be finite");
        check("lambda", c.lambda, |v| v > 0.0 && v.is_finite(), "must be > 0");
        check("s0", c.s0, |v| v >= 0.0 && v.is_finite(), "must be >= 0");
        check("t", c.t, |v| v >= 0.0 && v.is_finite(), "must be >= 0");
        check("dt", c.dt, |v| v > 0.0 && v.is_finite(), "must be > 0");
        check("dx", c.dx, |v| v > 0.0 && v.is_finite(), "must be > 0");
        check("grid_lo", c.grid_lo, f64::is_finite, "must be finite");
        check("grid_hi", c.grid_hi, f64::is_finite, "must be finite");
        if let (Some(lo), Some(hi)) = (c.grid_lo, c.grid_hi) {
            if !(hi > lo) {
                errors.push(format!("grid_hi: {hi} must exceed grid_lo = {lo}"));
            }
        }
        if c.n_paths == Some(0) {
            errors.push("n_paths: must be >= 1".into());
        }
        if matches!(c.experiment, Experiment::Moments | Experiment::Functor) && c.process == Some(ProcessKind::Ou) {
            if let Some(b) = c.b {
                if !(b > 0.0) {
                    errors.push(format!("b: {b} must be > 0 for the ou process"));
                }
            }
        }
        if c.experiment == Experiment::Sewing {
            if let Some(b) = c.b {
                if !(b > 0.0) {
                    errors.push(format!("b: {b} must be > 0"));
                }
            }
        }
        if c.experiment == Experiment::Maxent && c.s0 == Some(0.0) {
            errors.push("s0: must be > 0 for a max-ent density".into());
        }
        if c.experiment == Experiment::FkBackward && c.t == Some(0.0) {
            errors.push("t: must be > 0".into());
        }
        let known: Vec<&str> = self.experiment.default_tolerances().iter().map(|(n, _)| *n).collect();
        for (name, v) in c.tolerances.iter().flatten() {
            if !known.contains(&name.as_str()) {
                errors.push(format!(
                    "tolerances.{name}: no such check (expected one of {})",
                    known.join(", ")
                ));
            } else if !(*v >= 0.0) {
                errors.push(format!("tolerances.{name}: {v} must be >= 0"));
            }
        }
        if let Some(doc) = &c.maxcal {
            if let Err(e) = doc.to_problem() {
                errors.push(format!("maxcal: {e}"));
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }
}

/// Three states over three steps with a sticky base chain; the mean state at
/// `t = 1` and the mean squared state at `t = 3` are constrained.
pub fn default_caliber_document() -> CaliberDocument {
    CaliberDocument {
        states: 3,
        horizon: 3,
        observables: vec![
            ObservableSpec {
                time: 1,
                values: ObservableValues::Builtin(Builtin::Identity),
            },
            ObservableSpec {
                time: 3,
                values: ObservableValues::Builtin(Builtin::Square),
            },
        ],
        targets: vec![0.8, 1.5],
        base_kernel: Some(vec![vec![0.6, 0.3, 0.1], vec![0.2, 0.5, 0.3], vec![0.1, 0.3, 0.6]]),
        initial: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub experiment: Experiment,
    pub config: ExperimentConfig,
    pub checks: Vec<Check>,
    pub seed: Option<u64>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Writes `report` as pretty JSON followed by a newline.
pub fn emit_report<W: Write>(report: &Report, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, report)?;
    writeln!(out)?;
    Ok(())
}

/// A data file produced by a run, keyed by its filename suffix.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub suffix: &'static str,
    pub contents: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: Report,
    pub artifacts: Vec<Artifact>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.report.passed()
    }

    /// Writes `<experiment>-<stamp>.json` and one file per artifact into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let stem = unique_stem(dir, self.report.experiment.name());
        let mut written = Vec::new();
        let path = dir.join(format!("{stem}.json"));
        let mut out = BufWriter::new(File::create(&path)?);
        emit_report(&self.report, &mut out)?;
        out.flush()?;
        written.push(path);
        for a in &self.artifacts {
            let path = dir.join(format!("{stem}-{}", a.suffix));
            fs::write(&path, &a.contents)?;
            written.push(path);
        }
        Ok(written)
    }
}

fn unique_stem(dir: &Path, experiment: &str) -> String {
    let millis = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    let base = format!("{experiment}-{millis}");
    let mut stem = base.clone();
    let mut i = 1;
    while dir.join(format!("{stem}.json")).exists() {
        stem = format!("{base}-{i}");
        i += 1;
    }
    stem
}

struct Checks<'a> {
    tolerances: &'a BTreeMap<String, f64>,
    list: Vec<Check>,
}

impl Checks<'_> {
    fn tolerance(&self, name: &str) -> f64 {
        self.tolerances[name]
    }

    /// Passes when `value < tolerance`.
    fn below(&mut self, name: &str, value: f64) {
        let tolerance = self.tolerance(name);
        self.push(name, value, tolerance, value < tolerance);
    }

    /// Passes when `value <= tolerance`; used for counts.
    fn at_most(&mut self, name: &str, value: f64) {
        let tolerance = self.tolerance(name);
        self.push(name, value, tolerance, value <= tolerance);
    }

    fn push(&mut self, name: &str, value: f64, tolerance: f64, pass: bool) {
        self.list.push(Check {
            name: name.to_string(),
            value,
            tolerance,
            pass,
        });
    }
}

fn module<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::in_module(name, e))
}

fn csv(suffix: &'static str, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Artifact> {
    let mut contents = Vec::new();
    write(&mut contents)?;
    Ok(Artifact { suffix, contents })
}

fn process_of(c: &ExperimentConfig) -> Result<Process> {
    let (b, lambda) = (c.b.unwrap_or_default(), c.lambda.unwrap_or_default());
    let p = match c.process.unwrap_or(ProcessKind::Ou) {
        ProcessKind::Ou => Process::Ou(OuParams::new(b, c.k.unwrap_or_default(), lambda)?),
        ProcessKind::Wiener => Process::Wiener { b, lambda },
    };
    p.validate()?;
    Ok(p)
}

/// Validates `config` (after applying `seed_override`), runs it, and returns
/// the report and data files without touching the filesystem.
pub fn run(config: &ExperimentConfig, seed_override: Option<u64>) -> Result<RunOutcome> {
    let mut config = config.clone();
    if seed_override.is_some() {
        config.seed = seed_override;
    }
    config.validate()?;
    let c = config.with_defaults();
    let tolerances = c.tolerances.clone().unwrap_or_default();
    let mut checks = Checks {
        tolerances: &tolerances,
        list: Vec::new(),
    };
    let artifacts = match c.experiment {
        Experiment::Moments => run_moments(&c, &mut checks)?,
        Experiment::Functor => run_functor(&c, &mut checks)?,
        Experiment::Sewing => run_sewing(&c, &mut checks)?,
        Experiment::FkBackward => run_fk_backward(&c, &mut checks)?,
        Experiment::Maxent => run_maxent(&c, &mut checks)?,
        Experiment::Maxcal => run_maxcal(&c, &mut checks)?,
    };
    let mut echo = c.clone();
    echo.output_dir = None;
    Ok(RunOutcome {
        report: Report {
            experiment: c.experiment,
            seed: c.seed,
            config: echo,
            checks: checks.list,
        },
        artifacts,
    })
}

fn run_moments(c: &ExperimentConfig, checks: &mut Checks) -> Result<Vec<Artifact>> {
    let process = process_of(c)?;
    let (t, dt) = (c.t.unwrap_or_default(), c.dt.unwrap_or_default());
    let x0 = ParamPoint::gaussian(c.m0.unwrap_or_default(), c.s0.unwrap_or_default())?;
    let flow = process.flow();

    // RK4 trajectory against the closed form at 100 evenly spaced times.
    let samples = 100;
    let mut rows = Vec::with_capacity(samples + 1);
    let mut x = x0.clone();
    let mut worst: f64 = 0.0;
    for i in 0..=samples {
        let ti = t * i as f64 / samples as f64;
        if i > 0 {
            x = module("parameter_flow", integrate_flow(&flow, &x, t / samples as f64, dt))?;
        }
        let exact = module("parameter_flow", process.moments(&x0, ti))?;
        worst = worst.max(x.sup_distance(&exact));
        rows.push((ti, x.clone(), exact));
    }
    checks.below("rk4_vs_closed_form", worst);
    let trajectory = csv("moments.csv", |out| {
        writeln!(out, "t,mean,variance,closed_mean,closed_variance")?;
        for (ti, x, e) in &rows {
            writeln!(out, "{ti},{},{},{},{}", x.mean(), x.variance(), e.mean(), e.variance())?;
        }
        Ok(())
    })?;
    if t == 0.0 {
        return Ok(vec![trajectory]);
    }

    let initial = if x0.variance() > 0.0 {
        InitialCondition::Gaussian {
            mean: x0.mean(),
            variance: x0.variance(),
        }
    } else {
        InitialCondition::Point(x0.mean())
    };
    let settings = EmSettings::new(0.0, t, dt, c.n_paths.unwrap_or_default(), c.seed.unwrap_or_default());
    let ensemble = module("feynman_kac_mc", simulate(&process.sde(), initial, &settings))?;
    let stats = SampleStats::from_slice(&ensemble.terminal());
    let exact = module("parameter_flow", process.moments(&x0, t))?;
    checks.at_most("mc_mean_z", (stats.mean - exact.mean()).abs() / stats.mean_std_error());
    checks.at_most(
        "mc_variance_z",
        (stats.variance - exact.variance()).abs() / stats.variance_std_error(),
    );
    let summary = csv("monte-carlo.csv", |out| ensemble.write_summary_csv(out))?;
    Ok(vec![trajectory, summary])
}

fn run_functor(c: &ExperimentConfig, checks: &mut Checks) -> Result<Vec<Artifact>> {
    let process = process_of(c)?;
    let x0 = ParamPoint::gaussian(c.m0.unwrap_or_default(), c.s0.unwrap_or_default())?;
    let settings = FunctorSettings {
        dx: c.dx.unwrap_or_default(),
        n_paths: c.n_paths.unwrap_or_default(),
        mc_dt: c.dt.unwrap_or_default(),
        seed: c.seed.unwrap_or_default(),
        param_pde_tolerance: checks.tolerance("l1_parameter_vs_pde"),
        mc_tolerance: checks.tolerance("l1_parameter_vs_monte_carlo"),
        ..Default::default()
    };
    let report = module(
        "feynman_kac_mc",
        verify_functor(process, &x0, c.t.unwrap_or_default(), settings),
    )?;
    checks.below("l1_parameter_vs_pde", report.distances.param_pde);
    checks.below("l1_parameter_vs_monte_carlo", report.distances.param_mc);
    checks.below("l1_pde_vs_monte_carlo", report.distances.pde_mc);
    Ok(vec![csv("densities.csv", |out| report.write_csv(out))?])
}

fn run_sewing(c: &ExperimentConfig, checks: &mut Checks) -> Result<Vec<Artifact>> {
    let p = OuParams::new(
        c.b.unwrap_or_default(),
        c.k.unwrap_or_default(),
        c.lambda.unwrap_or_default(),
    )?;
    let edges = Grid::with_spacing(
        c.grid_lo.unwrap_or_default(),
        c.grid_hi.unwrap_or_default(),
        c.dx.unwrap_or_default(),
    )?;
    let span = c.t.unwrap_or_default();
    let (k1, k12) = module(
        "feynman_kac_mc",
        ou_cell_kernel(p, edges, span / 2.0).and_then(|k1| Ok((k1, ou_cell_kernel(p, edges, span)?))),
    )?;
    let residual = module("feynman_kac_mc", sewing_check(&k1, &k1, &k12))?;
    checks.below("sewing_residual", residual);

    let two_step = k1.matrix() * k1.matrix();
    let rows = csv("rows.csv", |out| {
        writeln!(out, "row,q,total_variation")?;
        for i in 0..k12.len() {
            let q = edges.point(i) + 0.5 * edges.dx();
            let tv = row_total_variation(&two_step.rows(i, 1).into_owned(), &k12.matrix().rows(i, 1).into_owned());
            writeln!(out, "{i},{q},{tv}")?;
        }
        Ok(())
    })?;
    Ok(vec![rows])
}

fn run_fk_backward(c: &ExperimentConfig, checks: &mut Checks) -> Result<Vec<Artifact>> {
    let process = process_of(c)?;
    let t_end = c.t.unwrap_or_default();
    let dt = c.dt.unwrap_or_default();
    let grid = Grid::with_spacing(
        c.grid_lo.unwrap_or_default(),
        c.grid_hi.unwrap_or_default(),
        c.dx.unwrap_or_default(),
    )?;
    let terminal = |q: f64| gaussian_pdf(q, 0.0, 1.0);

    let data = GridFunction::sample(grid, terminal)?;
    let limit = cfl_limit(
        grid.dx(),
        &[process.max_drift(grid.lo(), grid.hi())],
        &[process.lambda()],
    );
    let problem = PdeProblem::backward(process.generator(), data, 0.0, t_end, 0.9 * limit);
    let pde = module("generator_pde", solve_backward(&problem))?;
    let u0 = pde.first();

    // E[N(0,1) pdf at Y_T | Y_0 = q] for the drift-free Wiener case, else the OU analogue.
    let closed = |q: f64| -> Result<f64> {
        let x = process.moments(&ParamPoint::gaussian(q, 0.0)?, t_end)?;
        Ok(gaussian_pdf(x.mean(), 0.0, 1.0 + x.variance()))
    };

    let sde = process.sde();
    let q0 = c.q0.unwrap_or_default();
    let half = (FK_QUERY_POINTS / 2) as f64;
    let mut outside_closed = 0;
    let mut outside_pde = 0;
    let mut rows = Vec::new();
    for i in 0..FK_QUERY_POINTS {
        let q = q0 + 0.5 * (i as f64 - half);
        let seed = c.seed.unwrap_or_default().wrapping_add(i as u64);
        let est = module(
            "feynman_kac_mc",
            fk_estimate(&sde, terminal, q, 0.0, t_end, dt, c.n_paths.unwrap_or_default(), seed),
        )?;
        let exact = module("parameter_flow", closed(q))?;
        let from_pde = u0.interpolate(q).ok_or_else(|| {
            Error::in_module(
                "generator_pde",
                Error::param("q", q, "query point outside the PDE grid"),
            )
        })?;
        let band = FK_BAND * est.std_error;
        outside_closed += usize::from((est.value - exact).abs() > band);
        outside_pde += usize::from((est.value - from_pde).abs() > band);
        rows.push((q, est, exact, from_pde));
    }
    checks.at_most("points_outside_band_closed_form", outside_closed as f64);
    checks.at_most("points_outside_band_pde", outside_pde as f64);
    Ok(vec![csv("points.csv", |out| {
        writeln!(out, "q,fk,std_error,closed_form,pde")?;
        for (q, est, exact, from_pde) in &rows {
            writeln!(out, "{q},{},{},{exact},{from_pde}", est.value, est.std_error)?;
        }
        Ok(())
    })?])
}

fn run_maxent(c: &ExperimentConfig, checks: &mut Checks) -> Result<Vec<Artifact>> {
    let (m, s) = (c.m0.unwrap_or_default(), c.s0.unwrap_or_default());
    let grid = Grid::with_spacing(
        c.grid_lo.unwrap_or_default(),
        c.grid_hi.unwrap_or_default(),
        c.dx.unwrap_or_default(),
    )?;
    let problem = MaxEntProblem::new(
        grid,
        vec![Potential::new("q", |q| q), Potential::new("q^2", |q| q * q)],
        vec![m, s + m * m],
    );
    let sol = module("maxcal", maxent_density(&problem))?;
    let exact = module(
        "stat_manifold",
        GridDensity::sample_normalized(grid, |q| gaussian_pdf(q, m, s)),
    )?;
    checks.below("linf_vs_gaussian", sol.density.sup_distance(&exact)?);
    checks.below(
        "max_constraint_residual",
        sol.residuals.iter().fold(0.0, |a: f64, r| a.max(r.abs())),
    );
    Ok(vec![csv("density.csv", |out| sol.density.write_csv("density", out))?])
}

#[derive(Serialize)]
struct CaliberSummary<'a> {
    multipliers: &'a [f64],
    expectations: Vec<f64>,
    caliber: f64,
    marginals: Vec<Vec<f64>>,
}

fn run_maxcal(c: &ExperimentConfig, checks: &mut Checks) -> Result<Vec<Artifact>> {
    let doc = c.maxcal.clone().unwrap_or_else(default_caliber_document);
    let problem = doc.to_problem()?;
    let sol = module("maxcal", maxcal_solve(&problem))?;
    let brute = module("maxcal", brute_force_paths(&problem, &sol.multipliers))?;
    checks.below("tv_vs_brute_force", total_variation(&sol.measure, &brute)?);
    checks.below(
        "gluing_residual",
        module("maxcal", gluing_factorization_check(&sol.measure))?.residual(),
    );
    checks.below(
        "max_constraint_residual",
        sol.residuals.iter().fold(0.0, |a: f64, r| a.max(r.abs())),
    );

    let base = problem.base_measure()?;
    let best = caliber(&sol.measure, &base)?;
    let perturbed = module(
        "maxcal",
        feasible_perturbations(&problem, &sol.measure, PERTURBATIONS, c.seed.unwrap_or_default()),
    )?;
    let mut higher = 0;
    for q in &perturbed {
        higher += usize::from(caliber(q, &base)? >= best);
    }
    checks.at_most("perturbations_with_higher_caliber", higher as f64);

    let summary = CaliberSummary {
        multipliers: &sol.multipliers,
        expectations: problem.observables.iter().map(|o| sol.measure.expectation(o)).collect(),
        caliber: best,
        marginals: sol.measure.marginals(),
    };
    let mut solution = serde_json::to_vec_pretty(&summary)?;
    solution.push(b'\n');
    Ok(vec![
        Artifact {
            suffix: "solution.json",
            contents: solution,
        },
        csv("marginals.csv", |out| sol.measure.write_marginals_csv(out))?,
    ])
}
