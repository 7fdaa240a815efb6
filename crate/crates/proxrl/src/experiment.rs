//! Reproducible experiment runner: builds benchmark environments, runs
//! algorithm configurations over seeds on a worker pool, aggregates, and
//! emits machine-readable CSV.
//!
//! Configs are flat `key = value` text (see [`ExperimentConfig::parse`]);
//! later command-line `key=value` pairs override file keys. Output is long
//! format `iteration,seed,metric,value` plus an aggregate file, UTF-8 with LF
//! line endings and C-style `%.12e` numbers, so identical configs produce
//! byte-identical files.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::envs::{self, RandomWalkBasis};
use crate::error::{Error, Result};
use crate::geometry::BregmanGeometry;
use crate::gtd::{self, expected, RotdIterate, SaddleIterate};
use crate::mdp::{build_gtd_system, ExpectedDynamics, FeatureBasis, IidSampler,
                 MarkovRewardProcess};
use crate::schedule::StepSize;
use crate::td_mirror::{self, TdIterate};

pub const ALGORITHMS: &[&str] = &[
    "td0",
    "mirror_td",
    "sparse_mirror_td",
    "composite_mirror_td",
    "gtd",
    "gtd2",
    "tdc",
    "residual_gradient",
    "gtd2_mp",
    "tdc_mp",
    "rotd",
];

pub const ENVIRONMENTS: &[&str] = &[
    "baird_star",
    "two_state",
    "random_walk_5",
    "random_mdp",
    "gridworld_noisy",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Mspbe,
    Neu,
    ValueError,
    Sparsity,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Mspbe => "mspbe",
            Metric::Neu => "neu",
            Metric::ValueError => "value_error",
            Metric::Sparsity => "sparsity",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "mspbe" => Ok(Metric::Mspbe),
            "neu" => Ok(Metric::Neu),
            "value_error" => Ok(Metric::ValueError),
            "sparsity" => Ok(Metric::Sparsity),
            other => Err(Error::ConfigParse(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Sampled,
    Expected,
}

/// A fully-resolved experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub environment: String,
    pub env_basis: RandomWalkBasis,
    pub env_n_states: usize,
    pub env_n_actions: usize,
    pub env_n_features: usize,
    pub env_size: usize,
    pub env_n_noise: usize,
    pub env_seed: u64,
    pub algorithm: String,
    pub alpha: f64,
    pub alpha_schedule: String,
    pub eta: f64,
    pub lambda: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub beta: f64,
    pub geometry: String,
    pub p: f64,
    pub init: String,
    pub n_iterations: usize,
    pub n_seeds: usize,
    pub seed0: u64,
    pub metrics: Vec<Metric>,
    pub mode: Mode,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            environment: "two_state".into(),
            env_basis: RandomWalkBasis::Tabular,
            env_n_states: 100,
            env_n_actions: 5,
            env_n_features: 51,
            env_size: 5,
            env_n_noise: 50,
            env_seed: 0,
            algorithm: "tdc".into(),
            alpha: 0.01,
            alpha_schedule: "constant".into(),
            eta: 10.0,
            lambda: 0.0,
            rho1: 0.0,
            rho2: 0.0,
            beta: 0.0,
            geometry: "euclidean".into(),
            p: 2.0,
            init: "zeros".into(),
            n_iterations: 1000,
            n_seeds: 1,
            seed0: 0,
            metrics: vec![Metric::Mspbe],
            mode: Mode::Sampled,
        }
    }
}

impl ExperimentConfig {
    /// Parses the flat `key = value` format. `#` starts a comment; blank
    /// lines are ignored. Unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::ConfigParse(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            config.set(key.trim(), value.trim())?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Applies `key=value` override pairs on top of the parsed file.
    pub fn apply_overrides<'a, I: IntoIterator<Item = &'a str>>(&mut self, pairs: I) -> Result<()> {
        for pair in pairs {
            let (key, value) = pair.split_once('=').ok_or_else(|| {
                Error::ConfigParse(format!("override `{pair}` is not key=value"))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        self.validate()
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::ConfigParse(format!("bad {what} value `{value}`"));
        match key {
            "environment" => self.environment = value.to_string(),
            "env.basis" => {
                self.env_basis = match value {
                    "tabular" => RandomWalkBasis::Tabular,
                    "inverted" => RandomWalkBasis::Inverted,
                    "dependent" => RandomWalkBasis::Dependent,
                    _ => return Err(bad("env.basis")),
                }
            }
            "env.n_states" => self.env_n_states = value.parse().map_err(|_| bad(key))?,
            "env.n_actions" => self.env_n_actions = value.parse().map_err(|_| bad(key))?,
            "env.n_features" => self.env_n_features = value.parse().map_err(|_| bad(key))?,
            "env.size" => self.env_size = value.parse().map_err(|_| bad(key))?,
            "env.n_noise" => self.env_n_noise = value.parse().map_err(|_| bad(key))?,
            "env.seed" => self.env_seed = value.parse().map_err(|_| bad(key))?,
            "algorithm" => self.algorithm = value.to_string(),
            "alpha" => self.alpha = value.parse().map_err(|_| bad(key))?,
            "alpha_schedule" => self.alpha_schedule = value.to_string(),
            "eta" => self.eta = value.parse().map_err(|_| bad(key))?,
            "lambda" => self.lambda = value.parse().map_err(|_| bad(key))?,
            "rho1" => self.rho1 = value.parse().map_err(|_| bad(key))?,
            "rho2" => self.rho2 = value.parse().map_err(|_| bad(key))?,
            "beta" => self.beta = value.parse().map_err(|_| bad(key))?,
            "geometry" => self.geometry = value.to_string(),
            "p" => self.p = value.parse().map_err(|_| bad(key))?,
            "init" => self.init = value.to_string(),
            "n_iterations" => self.n_iterations = value.parse().map_err(|_| bad(key))?,
            "n_seeds" => self.n_seeds = value.parse().map_err(|_| bad(key))?,
            "seed0" => self.seed0 = value.parse().map_err(|_| bad(key))?,
            "metrics" => {
                let parsed: Result<Vec<Metric>> =
                    value.split(',').map(|m| Metric::parse(m.trim())).collect();
                self.metrics = parsed?;
            }
            "mode" => {
                self.mode = match value {
                    "sampled" => Mode::Sampled,
                    "expected" => Mode::Expected,
                    _ => return Err(bad("mode")),
                }
            }
            other => return Err(Error::ConfigParse(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if !ALGORITHMS.contains(&self.algorithm.as_str()) {
            return Err(Error::UnknownAlgorithm(self.algorithm.clone()));
        }
        if !ENVIRONMENTS.contains(&self.environment.as_str()) {
            return Err(Error::UnknownEnvironment(self.environment.clone()));
        }
        if self.metrics.is_empty() {
            return Err(Error::ConfigParse("metrics list is empty".into()));
        }
        if self.n_seeds == 0 {
            return Err(Error::ConfigParse("n_seeds must be at least 1".into()));
        }
        if !matches!(self.alpha_schedule.as_str(), "constant" | "inv_sqrt") {
            return Err(Error::ConfigParse(format!(
                "unknown alpha_schedule `{}`",
                self.alpha_schedule
            )));
        }
        if !matches!(self.geometry.as_str(), "euclidean" | "p_norm" | "neg_entropy") {
            return Err(Error::ConfigParse(format!(
                "unknown geometry `{}`",
                self.geometry
            )));
        }
        if !matches!(self.init.as_str(), "zeros" | "baird") {
            return Err(Error::ConfigParse(format!("unknown init `{}`", self.init)));
        }
        if self.mode == Mode::Expected && self.is_mirror_family() {
            return Err(Error::ConfigParse(format!(
                "expected mode is not available for `{}`; mirror-descent algorithms run sampled",
                self.algorithm
            )));
        }
        Ok(())
    }

    fn is_mirror_family(&self) -> bool {
        matches!(
            self.algorithm.as_str(),
            "mirror_td" | "sparse_mirror_td" | "composite_mirror_td"
        )
    }

    pub fn stepsize(&self) -> StepSize {
        match self.alpha_schedule.as_str() {
            "inv_sqrt" => StepSize::InvSqrt(self.alpha),
            _ => StepSize::Constant(self.alpha),
        }
    }

    fn geometry(&self) -> Result<BregmanGeometry> {
        match self.geometry.as_str() {
            "euclidean" => Ok(BregmanGeometry::euclidean()),
            "p_norm" => BregmanGeometry::p_norm(self.p),
            "neg_entropy" => Ok(BregmanGeometry::neg_entropy()),
            other => Err(Error::ConfigParse(format!("unknown geometry `{other}`"))),
        }
    }

    pub fn build_environment(&self) -> Result<(MarkovRewardProcess, FeatureBasis)> {
        match self.environment.as_str() {
            "baird_star" => Ok(envs::baird_star()),
            "two_state" => Ok(envs::two_state()),
            "random_walk_5" => Ok(envs::random_walk_5(self.env_basis)),
            "random_mdp" => envs::random_mdp(
                self.env_n_states,
                self.env_n_actions,
                self.env_n_features,
                self.env_seed,
            ),
            "gridworld_noisy" => envs::gridworld_noisy(self.env_size, self.env_n_noise, self.env_seed),
            other => Err(Error::UnknownEnvironment(other.to_string())),
        }
    }

    fn initial_theta(&self, dim: usize) -> Result<DVector<f64>> {
        match self.init.as_str() {
            "zeros" => Ok(DVector::zeros(dim)),
            "baird" => {
                if dim != 8 {
                    return Err(Error::ConfigParse(format!(
                        "baird init needs 8 features, basis has {dim}"
                    )));
                }
                Ok(envs::baird_initial_theta())
            }
            other => Err(Error::ConfigParse(format!("unknown init `{other}`"))),
        }
    }
}

/// Per-iteration metric traces and their aggregates. Trace layout:
/// `traces[metric][seed][iteration]` with `n_iterations + 1` entries per
/// trace (the initial point is included).
#[derive(Debug, Clone)]
pub struct RunResult {
    pub algorithm: String,
    pub metrics: Vec<Metric>,
    pub seeds: Vec<u64>,
    pub n_iterations: usize,
    pub traces: Vec<Vec<Vec<f64>>>,
}

impl RunResult {
    pub fn mean_trace(&self, metric_idx: usize) -> Vec<f64> {
        let n = self.n_iterations + 1;
        let mut mean = vec![0.0; n];
        for trace in &self.traces[metric_idx] {
            for (m, v) in mean.iter_mut().zip(trace.iter()) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= self.seeds.len() as f64;
        }
        mean
    }

    pub fn std_trace(&self, metric_idx: usize) -> Vec<f64> {
        let n = self.n_iterations + 1;
        let k = self.seeds.len();
        if k < 2 {
            return vec![0.0; n];
        }
        let mean = self.mean_trace(metric_idx);
        let mut var = vec![0.0; n];
        for trace in &self.traces[metric_idx] {
            for (i, v) in trace.iter().enumerate() {
                var[i] += (v - mean[i]) * (v - mean[i]);
            }
        }
        var.into_iter().map(|v| (v / (k - 1) as f64).sqrt()).collect()
    }

    pub fn final_mean(&self, metric_idx: usize) -> f64 {
        *self.mean_trace(metric_idx).last().unwrap()
    }

    pub fn final_std(&self, metric_idx: usize) -> f64 {
        *self.std_trace(metric_idx).last().unwrap()
    }

    /// Long-format CSV: `iteration,seed,metric,value`, rows ordered by seed,
    /// then metric, then iteration.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,seed,metric,value\n");
        for (si, seed) in self.seeds.iter().enumerate() {
            for (mi, metric) in self.metrics.iter().enumerate() {
                for (it, v) in self.traces[mi][si].iter().enumerate() {
                    out.push_str(&format!(
                        "{it},{seed},{},{}\n",
                        metric.name(),
                        format_e12(*v)
                    ));
                }
            }
        }
        out
    }

    /// Aggregate CSV: `iteration,metric,mean,std` (sample standard deviation,
    /// zero for a single seed).
    pub fn aggregate_csv(&self) -> String {
        let mut out = String::from("iteration,metric,mean,std\n");
        for (mi, metric) in self.metrics.iter().enumerate() {
            let mean = self.mean_trace(mi);
            let std = self.std_trace(mi);
            for it in 0..=self.n_iterations {
                out.push_str(&format!(
                    "{it},{},{},{}\n",
                    metric.name(),
                    format_e12(mean[it]),
                    format_e12(std[it])
                ));
            }
        }
        out
    }
}

/// C-style `%.12e` formatting: 12 fractional digits, two-digit signed
/// exponent (wider only when needed).
pub fn format_e12(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return "0.000000000000e+00".into();
    }
    let s = format!("{v:.12e}");
    let (mantissa, exponent) = s.split_once('e').expect("exponential format");
    let exp: i32 = exponent.parse().expect("numeric exponent");
    format!(
        "{mantissa}e{}{:02}",
        if exp < 0 { "-" } else { "+" },
        exp.abs()
    )
}

struct MetricEvaluator {
    dynamics: ExpectedDynamics,
    true_values: DVector<f64>,
    phi: nalgebra::DMatrix<f64>,
    xi: DVector<f64>,
}

impl MetricEvaluator {
    fn new(mrp: &MarkovRewardProcess, basis: &FeatureBasis) -> Result<Self> {
        Ok(MetricEvaluator {
            dynamics: ExpectedDynamics::new(mrp, basis)?,
            true_values: mrp.true_values(),
            phi: basis.matrix()?,
            xi: mrp.xi().clone(),
        })
    }

    fn eval(&self, metric: Metric, theta: &DVector<f64>) -> f64 {
        match metric {
            Metric::Mspbe => self.dynamics.mspbe(theta),
            Metric::Neu => self.dynamics.neu(theta),
            Metric::ValueError => {
                let err = &self.true_values - &self.phi * theta;
                err.amax()
            }
            Metric::Sparsity => theta.iter().filter(|v| v.abs() > 1e-8).count() as f64,
        }
    }

    #[allow(dead_code)]
    fn xi(&self) -> &DVector<f64> {
        &self.xi
    }
}

enum AlgState {
    Td0(DVector<f64>),
    Mirror(TdIterate),
    Saddle(SaddleIterate),
    Rotd(RotdIterate),
}

impl AlgState {
    fn weights(&self) -> DVector<f64> {
        match self {
            AlgState::Td0(theta) => theta.clone(),
            AlgState::Mirror(it) => it.w.clone(),
            AlgState::Saddle(it) => it.theta.clone(),
            AlgState::Rotd(it) => it.theta(),
        }
    }
}

fn init_state(config: &ExperimentConfig, dim: usize) -> Result<AlgState> {
    let theta0 = config.initial_theta(dim)?;
    let stepsize = config.stepsize();
    Ok(match config.algorithm.as_str() {
        "td0" => AlgState::Td0(theta0),
        "mirror_td" | "sparse_mirror_td" | "composite_mirror_td" => {
            let mut it = TdIterate::new(dim, stepsize, config.lambda, config.geometry()?)?
                .with_sparsity(config.beta)?;
            it.w = theta0.clone();
            it.theta_dual = it.geom.link_forward(&theta0)?;
            AlgState::Mirror(it)
        }
        "gtd" | "gtd2" | "tdc" | "residual_gradient" | "gtd2_mp" | "tdc_mp" => {
            let mut it = SaddleIterate::new(dim, stepsize, config.eta)?;
            if config.rho1 > 0.0 {
                it = it.with_regularizer(crate::geometry::ProxFriendlyFunction::l1(config.rho1)?);
            }
            it.theta = theta0;
            AlgState::Saddle(it)
        }
        "rotd" => {
            let mut it = RotdIterate::new(dim, stepsize, config.eta, config.rho1, config.rho2)?;
            it.x.rows_mut(dim, dim).copy_from(&theta0);
            AlgState::Rotd(it)
        }
        other => return Err(Error::UnknownAlgorithm(other.to_string())),
    })
}

fn sampled_step(
    config: &ExperimentConfig,
    state: AlgState,
    sample: &crate::mdp::TransitionSample,
    gamma: f64,
    t: usize,
) -> Result<AlgState> {
    Ok(match state {
        AlgState::Td0(theta) => {
            let alpha = config.stepsize().at(t);
            let delta = sample.r + gamma * sample.phi_next.dot(&theta) - sample.phi.dot(&theta);
            AlgState::Td0(theta + &sample.phi * (alpha * delta))
        }
        AlgState::Mirror(it) => AlgState::Mirror(match config.algorithm.as_str() {
            "mirror_td" => td_mirror::mirror_td_step(&it, sample, gamma)?,
            "sparse_mirror_td" => td_mirror::sparse_mirror_td_step(&it, sample, gamma)?,
            _ => td_mirror::composite_mirror_td_step(&it, sample, gamma)?,
        }),
        AlgState::Saddle(it) => AlgState::Saddle(match config.algorithm.as_str() {
            "gtd" => gtd::gtd_step(&it, sample, gamma)?,
            "gtd2" => gtd::gtd2_step(&it, sample, gamma)?,
            "tdc" => gtd::tdc_step(&it, sample, gamma)?,
            "residual_gradient" => gtd::residual_gradient_step(&it, sample, gamma)?,
            "gtd2_mp" => gtd::gtd2_mp_step(&it, sample, gamma)?,
            _ => gtd::tdc_mp_step(&it, sample, gamma)?,
        }),
        AlgState::Rotd(it) => AlgState::Rotd(gtd::rotd_step(&it, sample, gamma)?),
    })
}

fn expected_step(
    config: &ExperimentConfig,
    state: AlgState,
    dynamics: &ExpectedDynamics,
    rg_affine: Option<&(DVector<f64>, nalgebra::DMatrix<f64>)>,
    system: Option<&crate::mdp::GtdLinearSystem>,
    t: usize,
) -> Result<AlgState> {
    Ok(match state {
        AlgState::Td0(theta) => {
            let alpha = config.stepsize().at(t);
            AlgState::Td0(expected::td0_step(dynamics, &theta, alpha))
        }
        AlgState::Saddle(it) => AlgState::Saddle(match config.algorithm.as_str() {
            "gtd" => expected::gtd_step(dynamics, &it)?,
            "gtd2" => expected::gtd2_step(dynamics, &it)?,
            "tdc" => expected::tdc_step(dynamics, &it)?,
            "gtd2_mp" => expected::gtd2_mp_step(dynamics, &it)?,
            "tdc_mp" => expected::tdc_mp_step(dynamics, &it)?,
            "residual_gradient" => {
                let (b_rg, c_rg) = rg_affine.expect("precomputed for residual gradient");
                let alpha = it.alpha.at(it.t);
                let dir = b_rg + c_rg * &it.theta;
                let mut next = it.clone();
                next.theta = it.reg.prox(&(&it.theta + dir * alpha), alpha)?;
                next.t += 1;
                next
            }
            other => return Err(Error::UnknownAlgorithm(other.to_string())),
        }),
        AlgState::Rotd(it) => {
            AlgState::Rotd(expected::rotd_step(system.expect("system built"), &it)?)
        }
        AlgState::Mirror(_) => unreachable!("validated: mirror algorithms are sampled-only"),
    })
}

/// Affine form of the expected residual-gradient direction: dir = b + C theta.
fn residual_gradient_affine(
    mrp: &MarkovRewardProcess,
    basis: &FeatureBasis,
) -> Result<(DVector<f64>, nalgebra::DMatrix<f64>)> {
    let phi = basis.matrix()?;
    let gamma = mrp.gamma();
    let d = phi.ncols();
    let n = mrp.n_states();
    let mut b = DVector::zeros(d);
    let mut c = nalgebra::DMatrix::zeros(d, d);
    for s in 0..n {
        let phi_s = phi.row(s).transpose();
        for s2 in 0..n {
            let p = mrp.transitions()[(s, s2)];
            if p == 0.0 {
                continue;
            }
            let diff = &phi_s - phi.row(s2).transpose() * gamma;
            let w = mrp.xi()[s] * p;
            b += &diff * (w * mrp.rewards()[s]);
            c -= &diff * diff.transpose() * w;
        }
    }
    Ok((b, c))
}

/// Runs the configuration: deterministic given config and seeds. In expected
/// mode the run is noise-free and a single trace is produced.
pub fn run(config: &ExperimentConfig) -> Result<RunResult> {
    let (mrp, basis) = config.build_environment()?;
    let dim = basis.dim();
    let evaluator = MetricEvaluator::new(&mrp, &basis)?;
    let gamma = mrp.gamma();

    let seeds: Vec<u64> = match config.mode {
        Mode::Expected => vec![config.seed0],
        Mode::Sampled => (0..config.n_seeds as u64).map(|k| config.seed0 + k).collect(),
    };

    let rg_affine = if config.algorithm == "residual_gradient" && config.mode == Mode::Expected {
        Some(residual_gradient_affine(&mrp, &basis)?)
    } else {
        None
    };
    let system = if config.algorithm == "rotd" && config.mode == Mode::Expected {
        Some(build_gtd_system(&mrp, &basis, config.eta)?)
    } else {
        None
    };
    let dynamics = if config.mode == Mode::Expected {
        Some(ExpectedDynamics::new(&mrp, &basis)?)
    } else {
        None
    };

    let per_seed: Result<Vec<Vec<Vec<f64>>>> = seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<Vec<f64>>> {
            let mut state = init_state(config, dim)?;
            let mut rows: Vec<Vec<f64>> = config
                .metrics
                .iter()
                .map(|m| {
                    let mut v = Vec::with_capacity(config.n_iterations + 1);
                    v.push(evaluator.eval(*m, &state.weights()));
                    v
                })
                .collect();
            let mut sampler = match config.mode {
                Mode::Sampled => Some(IidSampler::new(&mrp, &basis, seed)?),
                Mode::Expected => None,
            };
            for t in 0..config.n_iterations {
                state = match config.mode {
                    Mode::Sampled => {
                        let s = sampler.as_mut().unwrap().sample();
                        sampled_step(config, state, &s, gamma, t)?
                    }
                    Mode::Expected => expected_step(
                        config,
                        state,
                        dynamics.as_ref().unwrap(),
                        rg_affine.as_ref(),
                        system.as_ref(),
                        t,
                    )?,
                };
                let weights = state.weights();
                for (mi, m) in config.metrics.iter().enumerate() {
                    rows[mi].push(evaluator.eval(*m, &weights));
                }
            }
            Ok(rows)
        })
        .collect();
    let per_seed = per_seed?;

    // traces[metric][seed][iteration]
    let mut traces: Vec<Vec<Vec<f64>>> = config
        .metrics
        .iter()
        .map(|_| Vec::with_capacity(seeds.len()))
        .collect();
    for seed_rows in per_seed {
        for (mi, row) in seed_rows.into_iter().enumerate() {
            traces[mi].push(row);
        }
    }
    Ok(RunResult {
        algorithm: config.algorithm.clone(),
        metrics: config.metrics.clone(),
        seeds,
        n_iterations: config.n_iterations,
        traces,
    })
}

/// A column-aligned comparison of several runs at matched iterations.
#[derive(Debug, Clone)]
pub struct ComparisonTable {
    pub metrics: Vec<Metric>,
    pub columns: Vec<ComparisonColumn>,
}

#[derive(Debug, Clone)]
pub struct ComparisonColumn {
    pub algorithm: String,
    pub final_mean: Vec<f64>,
    pub final_std: Vec<f64>,
}

impl ComparisonTable {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<14}", "metric"));
        for col in &self.columns {
            out.push_str(&format!("{:>28}", col.algorithm));
        }
        out.push('\n');
        for (mi, metric) in self.metrics.iter().enumerate() {
            out.push_str(&format!("{:<14}", metric.name()));
            for col in &self.columns {
                out.push_str(&format!(
                    "{:>28}",
                    format!("{:.6e} +/- {:.3e}", col.final_mean[mi], col.final_std[mi])
                ));
            }
            out.push('\n');
        }
        out
    }
}

/// Runs each configuration and aligns final mean +/- std per algorithm.
/// All configs must request the same metrics and iteration count.
pub fn compare(configs: &[ExperimentConfig]) -> Result<ComparisonTable> {
    if configs.is_empty() {
        return Err(Error::ConfigParse("compare needs at least one config".into()));
    }
    let metrics = configs[0].metrics.clone();
    let n_iterations = configs[0].n_iterations;
    for c in configs {
        if c.metrics != metrics || c.n_iterations != n_iterations {
            return Err(Error::MismatchedMetrics);
        }
    }
    let mut columns = Vec::new();
    for config in configs {
        let result = run(config)?;
        columns.push(ComparisonColumn {
            algorithm: result.algorithm.clone(),
            final_mean: (0..metrics.len()).map(|mi| result.final_mean(mi)).collect(),
            final_std: (0..metrics.len()).map(|mi| result.final_std(mi)).collect(),
        });
    }
    Ok(ComparisonTable { metrics, columns })
}
