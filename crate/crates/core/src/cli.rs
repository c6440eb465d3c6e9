//! Command-line driver: scenario files, run modes and output writers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::greens::p0_closed_form;
use crate::model::{
    epsilon, validate, AlphaProfile, ChiObservable, ModelParams, PartitionFn, RampKind, Side, ValidationReport,
};
use crate::propagator::{
    observable_a, riesz_projector, stationary_error, DiscreteHamiltonian, Grid, GridField, ObservableSeries,
    STEP_BUDGET,
};
use crate::quadrature::Rule;
use crate::reduced::{reduced_model, ReducedSolution};
use crate::scattering::{propagation_rule, stationary_observable_on_rule};
use crate::spectra::{find_resonance, find_resonance_checked, resonance_trajectory, ResonanceTrajectory};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const SCHEMA: i32 = 2;
    pub const ASSUMPTION: i32 = 3;
    pub const NUMERICAL: i32 = 4;
}

/// Fixed tolerances reported with every run.
pub const TOLERANCES: [(&str, f64); 4] = [
    ("newton_residual_relative", 1e-12),
    ("norm_growth", crate::propagator::GROWTH_TOLERANCE),
    ("step_budget", STEP_BUDGET),
    ("box_sentinel", 1e-3),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Reduced relaxation model only.
    Reduced,
    /// Direct propagation of the observable.
    Full,
    /// Both, with the deviation table.
    Compare,
    /// Rescaled resonance deviation over a ladder of `h`.
    ConvergeH,
    /// Stationary field error over a ladder of `Δx` and Riesz trace over `m`.
    ConvergeGrid,
    /// Resonance along the coupling profile.
    ResonanceTable,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Reduced => "reduced",
            Mode::Full => "full",
            Mode::Compare => "compare",
            Mode::ConvergeH => "converge-h",
            Mode::ConvergeGrid => "converge-grid",
            Mode::ResonanceTable => "resonance-table",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub v0: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scales {
    pub h: f64,
    /// Interface parameter `θ0 = i tau0`.
    pub tau0: f64,
    #[serde(default = "one")]
    pub d0: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    pub alpha0: f64,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default = "constant_ramp")]
    pub ramp: RampKind,
    pub t_final: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionSpec {
    /// Centre energy; defaults to `V0 - α0²/4`.
    pub lambda0: Option<f64>,
    pub scale: f64,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        Self { lambda0: None, scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    /// Half-width `L` of the computational box.
    pub box_half_width: f64,
    /// Grid spacing; defaults to `h / 10`.
    pub dx: Option<f64>,
    /// Number of intervals on `[-L, L]`; overrides `dx`.
    pub intervals: Option<usize>,
    /// Upper bound on the time step (the stability budget still applies).
    pub dt: Option<f64>,
    pub k_nodes: usize,
    /// Exterior deformation `i tau` used by the propagator.
    pub tau: f64,
    pub output_samples: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Self { box_half_width: 2.5, dx: None, intervals: None, dt: None, k_nodes: 64, tau: 0.4, output_samples: 41 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSpec {
    pub mode: Mode,
    pub out: Option<PathBuf>,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self { mode: Mode::Reduced, out: None }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Study {
    pub h_ladder: Vec<f64>,
    /// Empty means `h/10, h/20, h/40`.
    pub dx_ladder: Vec<f64>,
    pub m_ladder: Vec<usize>,
}

impl Default for Study {
    fn default() -> Self {
        Self { h_ladder: vec![0.12, 0.1, 0.08, 0.06], dx_ladder: Vec::new(), m_ladder: vec![8, 16, 32, 64] }
    }
}

fn one() -> f64 {
    1.0
}

fn constant_ramp() -> RampKind {
    RampKind::Constant
}

/// A parsed scenario file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub geometry: Geometry,
    pub scales: Scales,
    pub profile: Profile,
    #[serde(default)]
    pub partition: PartitionSpec,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub run: RunSpec,
    #[serde(default)]
    pub study: Study,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let sc: Scenario = toml::from_str(text).map_err(|e| CliError::Schema(e.to_string()))?;
        sc.check_schema()?;
        Ok(sc)
    }

    fn check_schema(&self) -> Result<(), CliError> {
        let fields = [
            ("geometry.a", self.geometry.a),
            ("geometry.b", self.geometry.b),
            ("geometry.c", self.geometry.c),
            ("geometry.v0", self.geometry.v0),
            ("scales.h", self.scales.h),
            ("scales.tau0", self.scales.tau0),
            ("scales.d0", self.scales.d0),
            ("scales.eta", self.scales.eta),
            ("profile.alpha0", self.profile.alpha0),
            ("profile.amplitude", self.profile.amplitude),
            ("profile.t_final", self.profile.t_final),
            ("partition.scale", self.partition.scale),
            ("numerics.box_half_width", self.numerics.box_half_width),
            ("numerics.tau", self.numerics.tau),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(CliError::Schema(format!("{name}: value must be finite")));
            }
        }
        let positive = [
            ("scales.d0", self.scales.d0),
            ("profile.t_final", self.profile.t_final),
            ("partition.scale", self.partition.scale),
            ("numerics.box_half_width", self.numerics.box_half_width),
        ];
        for (name, v) in positive {
            if v <= 0.0 {
                return Err(CliError::Schema(format!("{name}: must be positive")));
            }
        }
        let n = &self.numerics;
        if n.dx.is_some() && n.intervals.is_some() {
            return Err(CliError::Schema("numerics: give either dx or intervals".into()));
        }
        if n.dx.is_some_and(|d| !(d > 0.0 && d.is_finite())) || n.dt.is_some_and(|d| !(d > 0.0 && d.is_finite())) {
            return Err(CliError::Schema("numerics.dx / numerics.dt: must be positive".into()));
        }
        if n.k_nodes < 4 {
            return Err(CliError::Schema("numerics.k_nodes: need at least 4".into()));
        }
        if n.output_samples < 2 {
            return Err(CliError::Schema("numerics.output_samples: need at least 2".into()));
        }
        if n.tau <= 0.0 {
            return Err(CliError::Schema("numerics.tau: must be positive".into()));
        }
        if self.study.h_ladder.iter().chain(&self.study.dx_ladder).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(CliError::Schema("study: ladder entries must be positive".into()));
        }
        if self.study.m_ladder.iter().any(|m| *m < 3) {
            return Err(CliError::Schema("study.m_ladder: need at least 3 nodes".into()));
        }
        Ok(())
    }

    pub fn params(&self) -> ModelParams<f64> {
        ModelParams {
            a: self.geometry.a,
            b: self.geometry.b,
            c: self.geometry.c,
            v0: self.geometry.v0,
            h: self.scales.h,
            theta0: Complex64::new(0.0, self.scales.tau0),
            eta: self.scales.eta,
            d0: self.scales.d0,
            t_final: self.profile.t_final,
        }
    }

    pub fn alpha(&self) -> AlphaProfile<f64> {
        AlphaProfile {
            alpha0: self.profile.alpha0,
            amplitude: self.profile.amplitude,
            ramp: self.profile.ramp,
            t_final: self.profile.t_final,
        }
    }

    pub fn partition(&self) -> PartitionFn<f64> {
        let a0 = self.profile.alpha0;
        let lambda0 = self.partition.lambda0.unwrap_or(self.geometry.v0 - a0 * a0 / 4.0);
        PartitionFn::new(lambda0, self.scales.h, self.scales.d0).scaled(self.partition.scale)
    }

    pub fn chi(&self) -> ChiObservable<f64> {
        ChiObservable::new(self.geometry.c, self.scales.eta)
    }

    pub fn grid(&self) -> Result<Grid<f64>, Error> {
        let p = self.params();
        match (self.numerics.intervals, self.numerics.dx) {
            (Some(n), _) => Grid::new(&p, self.numerics.box_half_width, n),
            (None, dx) => Grid::with_spacing(&p, self.numerics.box_half_width, dx.unwrap_or(p.h / 10.0)),
        }
    }

    pub fn output_times(&self) -> Vec<f64> {
        let n = self.numerics.output_samples - 1;
        (0..=n).map(|i| self.profile.t_final * i as f64 / n as f64).collect()
    }

    pub fn validation(&self) -> ValidationReport {
        validate(&self.params(), &self.alpha(), &self.partition())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("schema: {0}")]
    Schema(String),
    #[error("assumption {id} violated: {message}")]
    Assumption { id: &'static str, message: String },
    #[error("{context}: {source}")]
    Numerical { context: &'static str, source: Error },
    #[error("io: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) | CliError::Io(_) => exit::SCHEMA,
            CliError::Assumption { .. } => exit::ASSUMPTION,
            CliError::Numerical { .. } => exit::NUMERICAL,
        }
    }
}

fn numerical(context: &'static str) -> impl FnOnce(Error) -> CliError {
    move |source| CliError::Numerical { context, source }
}

/// Column table written as CSV with a provenance comment line.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub columns: Vec<(String, Vec<f64>)>,
}

impl TimeSeries {
    pub fn new() -> Self {
        Self { columns: Vec::new() }
    }

    pub fn with(mut self, name: &str, values: Vec<f64>) -> Self {
        self.columns.push((name.to_string(), values));
        self
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.1.len())
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|c| c.0 == name).map(|c| c.1.as_slice())
    }

    pub fn to_csv(&self, hash: &str) -> Result<String, CliError> {
        let n = self.rows();
        if self.columns.iter().any(|c| c.1.len() != n) {
            return Err(CliError::Numerical {
                context: "cli::write_csv",
                source: Error::Invalid("columns of unequal length".into()),
            });
        }
        let mut s = format!("# scenario sha256 {hash}\n");
        let names: Vec<&str> = self.columns.iter().map(|c| c.0.as_str()).collect();
        s.push_str(&names.join(","));
        s.push('\n');
        for i in 0..n {
            for (j, (_, col)) in self.columns.iter().enumerate() {
                if j > 0 {
                    s.push(',');
                }
                write!(s, "{:.16e}", col[i]).expect("writing to a String");
            }
            s.push('\n');
        }
        Ok(s)
    }
}

impl Default for TimeSeries {
    fn default() -> Self {
        Self::new()
    }
}

/// Outcome of one mode: a table plus summary fields for the JSON file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub table: TimeSeries,
    pub results: serde_json::Value,
}

#[derive(Debug, Clone, Serialize)]
struct Summary<'a> {
    version: &'static str,
    mode: &'a str,
    scenario_sha256: &'a str,
    tolerances: BTreeMap<&'static str, f64>,
    validation: &'a ValidationReport,
    results: &'a serde_json::Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Fails with the first violated assumption.
pub fn require_valid(report: &ValidationReport) -> Result<(), CliError> {
    match report.violations.first() {
        Some(v) => Err(CliError::Assumption { id: v.id, message: v.message.clone() }),
        None => Ok(()),
    }
}

/// Swept energy band and initial width of the resonance along the profile.
fn swept_band(traj: &ResonanceTrajectory<f64>) -> (f64, f64, f64) {
    let (lo, hi) = traj
        .resonances
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), r| (lo.min(r.e.re), hi.max(r.e.re)));
    (lo, hi, traj.resonances[0].gamma())
}

/// Energy quadrature used by the direct propagation.
pub fn full_rule(sc: &Scenario, traj: &ResonanceTrajectory<f64>) -> Rule<f64> {
    let (lo, hi, gamma) = swept_band(traj);
    propagation_rule(&sc.partition(), lo, hi, gamma, sc.numerics.k_nodes)
}

/// Reduced model on its own grid.
pub fn run_reduced(sc: &Scenario) -> Result<(ResonanceTrajectory<f64>, ReducedSolution), CliError> {
    reduced_model(&sc.alpha(), &sc.partition(), &sc.params()).map_err(numerical("reduced::reduced_model"))
}

/// Direct propagation of `A(t)` on the output times.
pub fn run_full(
    sc: &Scenario,
    traj: &ResonanceTrajectory<f64>,
    workers: usize,
) -> Result<(ObservableSeries, f64), CliError> {
    let p = sc.params();
    let alpha = sc.alpha();
    let g = sc.partition();
    let grid = sc.grid().map_err(numerical("propagator::grid"))?;
    let rule = full_rule(sc, traj);
    let eps = epsilon(&p, &alpha);
    let theta = Complex64::new(0.0, sc.numerics.tau);
    let times = sc.output_times();
    let series = observable_a(&alpha, &g, &sc.chi(), theta, eps, &grid, &p, &rule, &times, sc.numerics.dt, workers)
        .map_err(numerical("propagator::observable_a"))?;
    let stationary = stationary_observable_on_rule(alpha.alpha0, &g, &sc.chi(), &p, &rule)
        .map_err(numerical("scattering::stationary_observable_on_rule"))?;
    Ok((series, stationary))
}

fn reduced_output(sol: &ReducedSolution) -> RunOutput {
    let mut table = TimeSeries::new().with("t", sol.times.clone());
    if sol.side == Side::Left {
        table = table
            .with("a", sol.a.clone())
            .with("J1", sol.j1.clone())
            .with("J2", sol.j2.clone())
            .with("A_model", sol.a_model.clone())
            .with("mu_leading", sol.mu.iter().map(|m| m.leading).collect());
    }
    table = table.with("Gamma_over_eps", sol.gamma_over_eps.clone()).with("lambda_t", sol.lambda.clone());
    let results = serde_json::json!({
        "side": sol.side,
        "eps": sol.eps,
        "rk4_gap": sol.rk4_gap,
        "a0": sol.a.first(),
        "a_final": sol.a.last(),
        "right_case_bound": sol.right_bound,
    });
    RunOutput { table, results }
}

fn mode_reduced(sc: &Scenario) -> Result<RunOutput, CliError> {
    let (_, sol) = run_reduced(sc)?;
    Ok(reduced_output(&sol))
}

fn mode_full(sc: &Scenario, workers: usize) -> Result<RunOutput, CliError> {
    let times = crate::reduced::time_grid(sc.profile.t_final, crate::reduced::SAMPLES_PER_UNIT);
    let traj = resonance_trajectory(&sc.alpha(), &sc.params(), &times, 200)
        .map_err(numerical("spectra::resonance_trajectory"))?;
    let (series, stationary) = run_full(sc, &traj, workers)?;
    let table = TimeSeries::new().with("t", series.times.clone()).with("A_full", series.values.clone());
    let results = serde_json::json!({
        "dt": series.dt,
        "k_nodes": series.modes.len(),
        "steps_per_mode": series.modes.first().map_or(0, |m| m.steps),
        "box_sentinel": series.sentinel,
        "stationary_on_rule": stationary,
    });
    Ok(RunOutput { table, results })
}

fn mode_compare(sc: &Scenario, workers: usize) -> Result<RunOutput, CliError> {
    let (traj, sol) = run_reduced(sc)?;
    let (series, stationary) = run_full(sc, &traj, workers)?;
    let mut table = TimeSeries::new().with("t", series.times.clone()).with("A_full", series.values.clone());
    let mut results = serde_json::json!({
        "dt": series.dt,
        "k_nodes": series.modes.len(),
        "box_sentinel": series.sentinel,
        "stationary_on_rule": stationary,
        "eps": sol.eps,
    });
    match sol.side {
        Side::Left => {
            let model: Vec<f64> = series.times.iter().map(|t| sol.model_at(*t)).collect();
            let scale = sol.a_model.iter().cloned().fold(0.0, f64::max);
            let dev: Vec<f64> = series.values.iter().zip(&model).map(|(f, m)| (f - m).abs() / scale).collect();
            let worst = dev.iter().cloned().fold(0.0, f64::max);
            table = table.with("A_model", model).with("rel_dev", dev);
            results["max_rel_dev"] = serde_json::json!(worst);
        }
        Side::Right => {
            let bound = sol.right_bound.expect("right case carries a bound");
            table = table.with("bound", vec![bound.scaled_bound; series.times.len()]);
            let peak = series.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
            results["right_case_bound"] = serde_json::json!(bound);
            results["max_abs_a_full"] = serde_json::json!(peak);
        }
    }
    Ok(RunOutput { table, results })
}

/// Rescaled deviation `(E - E0) e^{|α| d/h}` of the constant-coupling
/// resonance and its limit `-(α²/2) p0`.
pub fn rescaled_deviation(alpha: f64, params: &ModelParams<f64>) -> Result<(Complex64, Complex64), Error> {
    let r = find_resonance(alpha, params, None)?;
    let e0 = params.v0 - alpha * alpha / 4.0;
    let scale = (alpha.abs() * params.dist() / params.h).exp();
    let target = -p0_closed_form(alpha, params.v0) * (alpha * alpha / 2.0);
    Ok(((r.e - e0) * scale, target))
}

fn observed_orders(xs: &[f64], errs: &[f64]) -> Vec<f64> {
    xs.windows(2)
        .zip(errs.windows(2))
        .map(|(x, e)| (e[0] / e[1]).ln() / (x[0] / x[1]).ln())
        .collect()
}

fn mode_converge_h(sc: &Scenario) -> Result<RunOutput, CliError> {
    let base = sc.params();
    let alpha = sc.profile.alpha0;
    let ladder = &sc.study.h_ladder;
    let mut cols: [Vec<f64>; 7] = Default::default();
    for &h in ladder {
        let p = base.with_h(h);
        let (dev, target) = rescaled_deviation(alpha, &p).map_err(numerical("spectra::find_resonance"))?;
        let err = (dev - target).norm() / target.norm();
        for (c, v) in cols.iter_mut().zip([h, (-alpha.abs() * p.dist() / h).exp(), dev.re, dev.im, target.re, target.im, err])
        {
            c.push(v);
        }
    }
    let orders = observed_orders(&cols[0], &cols[6]);
    let names = ["h", "eps", "rescaled_re", "rescaled_im", "target_re", "target_im", "rel_error"];
    let table = names.iter().zip(cols).fold(TimeSeries::new(), |t, (n, c)| t.with(n, c));
    Ok(RunOutput { table, results: serde_json::json!({ "alpha": alpha, "observed_orders": orders }) })
}

fn mode_converge_grid(sc: &Scenario) -> Result<RunOutput, CliError> {
    let p = sc.params();
    let alpha = sc.profile.alpha0;
    let theta = Complex64::new(0.0, sc.numerics.tau);
    let ladder = if sc.study.dx_ladder.is_empty() {
        vec![p.h / 10.0, p.h / 20.0, p.h / 40.0]
    } else {
        sc.study.dx_ladder.clone()
    };
    let res = find_resonance(alpha, &p, None).map_err(numerical("spectra::find_resonance"))?;
    let k = res.e.re.sqrt();
    let margin = sc.scales.eta.min(sc.numerics.box_half_width);
    let mut errs = Vec::with_capacity(ladder.len());
    for &dx in &ladder {
        let grid = Grid::with_spacing(&p, sc.numerics.box_half_width, dx).map_err(numerical("propagator::grid"))?;
        errs.push(stationary_error(k, alpha, theta, &grid, &p, margin).map_err(numerical("propagator::stationary"))?);
    }
    let orders = observed_orders(&ladder, &errs);

    let grid = sc.grid().map_err(numerical("propagator::grid"))?;
    let hd = DiscreteHamiltonian::assemble(alpha, theta, &grid, &p).map_err(numerical("propagator::assemble"))?;
    let probe = GridField::delta_c(&grid);
    let radius = 10.0 * res.gamma().max(p.h * p.h);
    let mut traces = Vec::new();
    for &m in &sc.study.m_ladder {
        let r = riesz_projector(&hd, res.e, radius, m, &probe).map_err(numerical("propagator::riesz_projector"))?;
        traces.push(serde_json::json!({ "m": m, "trace_re": r.trace.re, "trace_im": r.trace.im,
            "idempotency": r.idempotency }));
    }
    let table = TimeSeries::new().with("dx", ladder).with("stationary_rel_error", errs);
    Ok(RunOutput { table, results: serde_json::json!({ "k": k, "observed_orders": orders, "riesz": traces }) })
}

fn mode_resonance_table(sc: &Scenario) -> Result<RunOutput, CliError> {
    let p = sc.params();
    let alpha = sc.alpha();
    let times = sc.output_times();
    let traj = resonance_trajectory(&alpha, &p, &times, 1).map_err(numerical("spectra::resonance_trajectory"))?;
    let eps = epsilon(&p, &alpha);
    let table = TimeSeries::new()
        .with("t", times)
        .with("Re_E", traj.resonances.iter().map(|r| r.e.re).collect())
        .with("Gamma", traj.gammas())
        .with("Gamma_over_eps", traj.gammas().iter().map(|g| g / eps).collect())
        .with("residual", traj.resonances.iter().map(|r| r.residual).collect());
    let windings: Vec<Option<i64>> = traj.resonances.iter().map(|r| r.winding).collect();
    Ok(RunOutput { table, results: serde_json::json!({ "eps": eps, "max_jump": traj.max_jump, "winding": windings }) })
}

/// Checks the resonance seed and its uniqueness window at `t = 0` only.
pub fn seed_check(sc: &Scenario) -> Result<RunOutput, CliError> {
    let p = sc.params();
    let r = find_resonance_checked(sc.profile.alpha0, &p, None, true).map_err(numerical("spectra::find_resonance"))?;
    Ok(RunOutput { table: TimeSeries::new(), results: serde_json::to_value(r.report()).expect("plain struct") })
}

/// Runs `mode` on a parsed scenario.
pub fn execute(sc: &Scenario, mode: Mode, workers: usize) -> Result<RunOutput, CliError> {
    require_valid(&sc.validation())?;
    match mode {
        Mode::Reduced => mode_reduced(sc),
        Mode::Full => mode_full(sc, workers),
        Mode::Compare => mode_compare(sc, workers),
        Mode::ConvergeH => mode_converge_h(sc),
        Mode::ConvergeGrid => mode_converge_grid(sc),
        Mode::ResonanceTable => mode_resonance_table(sc),
    }
}

#[derive(Debug, Clone, Parser)]
#[command(name = "shaperes", version, about = "Adiabatic shape-resonance simulations")]
pub struct Args {
    /// Scenario file (TOML).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Overrides `run.mode`.
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Output directory; overrides `run.out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for the mode sweep.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Only validate the scenario and locate the initial resonance.
    #[arg(long)]
    pub seed_check: bool,
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Parses, runs and writes `<mode>.csv` and `<mode>.json`; returns the
/// directory written to.
pub fn run(args: &Args) -> Result<PathBuf, CliError> {
    let bytes =
        std::fs::read(&args.scenario).map_err(|e| CliError::Io(format!("{}: {e}", args.scenario.display())))?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| CliError::Schema(format!("scenario is not UTF-8: {e}")))?;
    let sc = Scenario::parse(&text)?;
    let hash = sha256_hex(&bytes);
    let mode = args.mode.unwrap_or(sc.run.mode);
    let out_dir = args.out.clone().or_else(|| sc.run.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let validation = sc.validation();
    let (name, output) = if args.seed_check {
        require_valid(&validation)?;
        ("seed-check", seed_check(&sc)?)
    } else {
        (mode.name(), execute(&sc, mode, args.workers)?)
    };
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
    if output.table.rows() > 0 {
        write_file(&out_dir.join(format!("{name}.csv")), &output.table.to_csv(&hash)?)?;
    }
    let summary = Summary {
        version: concat!("shaperes ", env!("CARGO_PKG_VERSION")),
        mode: name,
        scenario_sha256: &hash,
        tolerances: TOLERANCES.into_iter().collect(),
        validation: &validation,
        results: &output.results,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serialises");
    write_file(&out_dir.join(format!("{name}.json")), &(json + "\n"))?;
    Ok(out_dir)
}
