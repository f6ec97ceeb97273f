//! Experiment configuration: TOML schema, validation and hashing.

use std::path::{Path, PathBuf};

use asl_core::graph::{build_averaging_matrix, build_laplacian_matrix};
use asl_core::models::{parse_model_assignment, GaussianFamily};
use asl_core::nonstationary::{PerturbationModel, RegimeProcess};
use asl_core::presets::{self, REDUCED_LINKS, REFERENCE_LINKS};
use asl_core::{Adjacency, CombinationMatrix, Family, LaplaceFamily, StrategyKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Base seed of every random stream.
    #[serde(default)]
    pub seed: u64,
    /// True hypothesis (1-based) of stationary runs.
    #[serde(default = "one")]
    pub theta0: usize,
    /// Output directory; not part of the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub network: NetworkSpec,
    pub model: ModelSpec,
    #[serde(default)]
    pub strategy: StrategySpec,
    #[serde(default)]
    pub run: RunSpec,
    #[serde(default)]
    pub montecarlo: MonteCarloSpec,
    #[serde(default)]
    pub exponents: ExponentsSpec,
    #[serde(default)]
    pub steady_state: SteadyStateSpec,
    #[serde(default)]
    pub transient: TransientSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment: Option<EnvironmentSpec>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// The 10-agent reference network and identifiability table.
    Reference,
    /// The 5-agent reduced variant.
    Reduced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixRule {
    Averaging,
    Laplacian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agents: Option<usize>,
    /// Undirected links, 1-based; every agent gets a self-loop.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub links: Vec<[usize; 2]>,
    /// Directed edge-list file (`agents N` header, then `l k` rows).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_file: Option<PathBuf>,
    #[serde(default = "averaging")]
    pub rule: MatrixRule,
}

fn averaging() -> MatrixRule {
    MatrixRule::Averaging
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Laplace,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    /// Location spacing of a preset table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
    #[serde(default = "laplace")]
    pub family: FamilyName,
    /// Explicit `table[agent][hypothesis]` of locations or means.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub table: Vec<Vec<f64>>,
    /// Assignment file (`agent_range hypothesis value` rows).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignment_file: Option<PathBuf>,
}

fn laplace() -> FamilyName {
    FamilyName::Laplace
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyName {
    Traditional,
    Asl,
    AslFlattened,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySpec {
    pub kind: StrategyName,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn default_delta() -> f64 {
    0.1
}

impl Default for StrategySpec {
    fn default() -> Self {
        StrategySpec { kind: StrategyName::Asl, delta: default_delta() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "one")]
    pub thin: usize,
    /// Scripted changes `[first_step, hypothesis]`, 1-based.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub changes: Vec<[usize; 2]>,
}

fn default_horizon() -> usize {
    1000
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec { horizon: default_horizon(), thin: 1, changes: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSpacing {
    /// Logarithmic in `delta`.
    Log,
    /// Uniform in `1/delta`.
    Inverse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
    #[serde(default = "log_spacing")]
    pub spacing: GridSpacing,
}

fn log_spacing() -> GridSpacing {
    GridSpacing::Log
}

impl GridSpec {
    pub fn validate(&self, what: &str) -> Result<(), CliError> {
        if !(self.min > 0.0 && self.min < self.max && self.max <= 1.0) || self.points < 2 {
            return Err(CliError::Config(format!("{what}: grid needs 0 < min < max <= 1 and at least 2 points")));
        }
        Ok(())
    }

    /// Grid values in increasing order of `delta`.
    pub fn values(&self) -> Vec<f64> {
        let n = self.points;
        let mut v: Vec<f64> = (0..n)
            .map(|j| {
                let f = j as f64 / (n - 1) as f64;
                match self.spacing {
                    GridSpacing::Log => (self.min.ln() + f * (self.max.ln() - self.min.ln())).exp(),
                    GridSpacing::Inverse => 1.0 / (1.0 / self.max + f * (1.0 / self.min - 1.0 / self.max)),
                }
            })
            .collect();
        v.sort_by(f64::total_cmp);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deltas: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_horizon_factor")]
    pub horizon_factor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

fn default_reps() -> usize {
    100
}

fn default_horizon_factor() -> f64 {
    asl_core::montecarlo::DEFAULT_HORIZON_FACTOR
}

impl Default for MonteCarloSpec {
    fn default() -> Self {
        MonteCarloSpec {
            deltas: Vec::new(),
            grid: None,
            reps: default_reps(),
            horizon_factor: default_horizon_factor(),
            workers: None,
        }
    }
}

impl MonteCarloSpec {
    /// Explicit deltas when given, else the grid, else the default log grid.
    pub fn delta_values(&self) -> Vec<f64> {
        if !self.deltas.is_empty() {
            return self.deltas.clone();
        }
        self.grid
            .clone()
            .unwrap_or(GridSpec { min: 1.0 / 150.0, max: 0.1, points: 10, spacing: GridSpacing::Log })
            .values()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentsSpec {
    /// Run the Monte Carlo grid and fit the decay slope.
    #[serde(default)]
    pub monte_carlo: bool,
    /// Samples of each Gaussian-approximation probability.
    #[serde(default = "default_gaussian_samples")]
    pub gaussian_samples: usize,
}

fn default_gaussian_samples() -> usize {
    asl_core::analysis::GAUSSIAN_SAMPLES
}

impl Default for ExponentsSpec {
    fn default() -> Self {
        ExponentsSpec { monte_carlo: false, gaussian_samples: default_gaussian_samples() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadyStateSpec {
    /// Concentration sweep, one trajectory per point.
    #[serde(default = "default_concentration_grid")]
    pub sweep: GridSpec,
    #[serde(default = "default_sweep_horizon")]
    pub sweep_horizon: usize,
    /// Step sizes of the normality experiment.
    #[serde(default = "default_ellipse_deltas")]
    pub ellipse_deltas: Vec<f64>,
    #[serde(default = "default_reps")]
    pub ellipse_reps: usize,
}

fn default_concentration_grid() -> GridSpec {
    GridSpec { min: 0.001, max: 1.0, points: 50, spacing: GridSpacing::Log }
}

fn default_sweep_horizon() -> usize {
    8000
}

fn default_ellipse_deltas() -> Vec<f64> {
    vec![0.1, 0.05, 0.01, 0.005]
}

impl Default for SteadyStateSpec {
    fn default() -> Self {
        SteadyStateSpec {
            sweep: default_concentration_grid(),
            sweep_horizon: default_sweep_horizon(),
            ellipse_deltas: default_ellipse_deltas(),
            ellipse_reps: default_reps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransientSpec {
    #[serde(default = "default_transient_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    /// Length of the instantaneous-bound curves.
    #[serde(default = "default_bound_steps")]
    pub bound_steps: usize,
}

fn default_transient_deltas() -> Vec<f64> {
    vec![0.1, 0.05, 0.025, 0.01, 0.005]
}

fn default_epsilons() -> Vec<f64> {
    vec![asl_core::analysis::THREE_DB_EPSILON, 0.1]
}

fn default_bound_steps() -> usize {
    500
}

impl Default for TransientSpec {
    fn default() -> Self {
        TransientSpec {
            deltas: default_transient_deltas(),
            epsilons: default_epsilons(),
            bound_steps: default_bound_steps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSpec {
    pub q_hyp: f64,
    pub q_mat: f64,
    pub q_fun: f64,
    #[serde(default = "default_sigma_perturbed")]
    pub sigma_perturbed: f64,
    #[serde(default = "default_sigma_bad")]
    pub sigma_bad: f64,
    #[serde(default = "default_env_horizon")]
    pub horizon: usize,
    /// Matrix-chain states: the first and second policy.
    #[serde(default = "default_matrix_pair")]
    pub matrices: [MatrixRule; 2],
    /// Sojourns simulated to check the cycle-length formula.
    #[serde(default = "default_sojourns")]
    pub sojourns: usize,
}

fn default_sigma_perturbed() -> f64 {
    PerturbationModel::default().sigma_perturbed
}

fn default_sigma_bad() -> f64 {
    PerturbationModel::default().sigma_bad
}

fn default_env_horizon() -> usize {
    5000
}

fn default_matrix_pair() -> [MatrixRule; 2] {
    [MatrixRule::Averaging, MatrixRule::Laplacian]
}

fn default_sojourns() -> usize {
    10_000
}

impl EnvironmentSpec {
    pub fn process(&self, n_hypotheses: usize) -> Result<RegimeProcess, CliError> {
        Ok(RegimeProcess::new(self.q_hyp, self.q_mat, self.q_fun, n_hypotheses)?)
    }

    pub fn perturbation(&self) -> PerturbationModel {
        PerturbationModel { sigma_perturbed: self.sigma_perturbed, sigma_bad: self.sigma_bad }
    }
}

/// Command-line overrides applied before validation and hashing.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub delta: Option<f64>,
    pub reps: Option<usize>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

/// A validated configuration with its resolved inputs.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub hash: String,
    pub model: Family,
    pub adjacency: Adjacency,
    pub matrix: CombinationMatrix,
    pub theta0: usize,
    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("config serialization: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(inner) = p.as_mut() {
                if inner.is_relative() {
                    *inner = base.join(&*inner);
                }
            }
        };
        rebase(&mut cfg.network.edge_file);
        rebase(&mut cfg.model.assignment_file);
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(delta) = o.delta {
            self.strategy.delta = delta;
        }
        if let Some(reps) = o.reps {
            self.montecarlo.reps = reps;
            self.steady_state.ellipse_reps = reps;
        }
        if o.workers.is_some() {
            self.montecarlo.workers = o.workers;
        }
        if o.out.is_some() {
            self.out = o.out.clone();
        }
    }

    /// SHA-256 of the canonical serialization, output directory and worker
    /// count excluded (neither changes any result).
    pub fn hash(&self) -> Result<String, CliError> {
        let mut canonical = self.clone();
        canonical.out = None;
        canonical.montecarlo.workers = None;
        Ok(hex(&Sha256::digest(canonical.to_toml()?.as_bytes())))
    }

    pub fn strategy(&self) -> Result<StrategyKind, CliError> {
        Ok(match self.strategy.kind {
            StrategyName::Traditional => StrategyKind::Traditional,
            StrategyName::Asl => StrategyKind::asl(self.strategy.delta)?,
            StrategyName::AslFlattened => StrategyKind::flattened(self.strategy.delta)?,
        })
    }

    fn adjacency(&self) -> Result<Adjacency, CliError> {
        let net = &self.network;
        let sources = net.preset.is_some() as u8 + !net.links.is_empty() as u8 + net.edge_file.is_some() as u8;
        if sources != 1 {
            return Err(CliError::Config("network: give exactly one of `preset`, `links` or `edge_file`".into()));
        }
        if let Some(preset) = net.preset {
            return Ok(match preset {
                Preset::Reference => Adjacency::undirected_with_self_loops(10, &REFERENCE_LINKS)?,
                Preset::Reduced => Adjacency::undirected_with_self_loops(5, &REDUCED_LINKS)?,
            });
        }
        if let Some(path) = &net.edge_file {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            return Ok(Adjacency::parse(&text)?);
        }
        let n = net.agents.ok_or_else(|| CliError::Config("network: `links` needs `agents`".into()))?;
        let mut pairs = Vec::with_capacity(net.links.len());
        for &[a, b] in &net.links {
            if a == 0 || b == 0 || a > n || b > n {
                return Err(CliError::Config(format!("network: link ({a}, {b}) outside 1..={n}")));
            }
            pairs.push((a - 1, b - 1));
        }
        Ok(Adjacency::undirected_with_self_loops(n, &pairs)?)
    }

    pub fn build_matrix(adjacency: &Adjacency, rule: MatrixRule) -> Result<CombinationMatrix, CliError> {
        Ok(match rule {
            MatrixRule::Averaging => build_averaging_matrix(adjacency)?,
            MatrixRule::Laplacian => build_laplacian_matrix(adjacency)?,
        })
    }

    fn model(&self) -> Result<Family, CliError> {
        let m = &self.model;
        let sources = m.preset.is_some() as u8 + !m.table.is_empty() as u8 + m.assignment_file.is_some() as u8;
        if sources != 1 {
            return Err(CliError::Config("model: give exactly one of `preset`, `table` or `assignment_file`".into()));
        }
        if m.spacing.is_some() && m.preset.is_none() {
            return Err(CliError::Config("model: `spacing` applies to presets only".into()));
        }
        if let Some(path) = &m.assignment_file {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            return Ok(parse_model_assignment(&text)?);
        }
        let table = match m.preset {
            Some(Preset::Reference) => presets::table_one_locations(m.spacing.unwrap_or(0.1)),
            Some(Preset::Reduced) => {
                let all = presets::table_one_locations(m.spacing.unwrap_or(presets::REDUCED_SPACING));
                presets::REDUCED_ROWS.iter().map(|&r| all[r].clone()).collect()
            }
            None => m.table.clone(),
        };
        Ok(match m.family {
            FamilyName::Laplace => Family::Laplace(LaplaceFamily::new(table)?),
            FamilyName::Gaussian => Family::Gaussian(GaussianFamily::new(table)?),
        })
    }

    /// Validate every block and build the model and network.
    pub fn resolve(self) -> Result<Resolved, CliError> {
        use asl_core::LikelihoodModel;
        let adjacency = self.adjacency()?;
        let matrix = Self::build_matrix(&adjacency, self.network.rule)?;
        let model = self.model()?;
        if model.n_agents() != adjacency.n() {
            return Err(CliError::Config(format!(
                "model has {} agents, network has {}",
                model.n_agents(),
                adjacency.n()
            )));
        }
        let h = model.n_hypotheses();
        if self.theta0 == 0 || self.theta0 > h {
            return Err(CliError::Config(format!("theta0 = {} outside 1..={h}", self.theta0)));
        }
        self.strategy()?;
        if self.run.horizon < 1 {
            return Err(CliError::Config("run.horizon must be at least 1".into()));
        }
        let mut last = 1;
        for &[step, hyp] in &self.run.changes {
            if step <= last || hyp == 0 || hyp > h {
                return Err(CliError::Config(format!(
                    "run.changes: [{step}, {hyp}] must have increasing steps > 1 and a hypothesis in 1..={h}"
                )));
            }
            last = step;
        }
        let mc = &self.montecarlo;
        if let Some(g) = &mc.grid {
            g.validate("montecarlo.grid")?;
        }
        if mc.reps < 1 || !(mc.horizon_factor > 0.0) || mc.workers == Some(0) {
            return Err(CliError::Config("montecarlo: reps, horizon_factor and workers must be positive".into()));
        }
        check_deltas("montecarlo.deltas", &mc.deltas)?;
        if self.exponents.gaussian_samples < 1 {
            return Err(CliError::Config("exponents.gaussian_samples must be positive".into()));
        }
        self.steady_state.sweep.validate("steady_state.sweep")?;
        check_deltas("steady_state.ellipse_deltas", &self.steady_state.ellipse_deltas)?;
        if self.steady_state.sweep_horizon < 1 || self.steady_state.ellipse_reps < 2 {
            return Err(CliError::Config("steady_state: sweep_horizon >= 1 and ellipse_reps >= 2 required".into()));
        }
        check_deltas("transient.deltas", &self.transient.deltas)?;
        if self.transient.epsilons.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return Err(CliError::Config("transient.epsilons must lie in (0, 1)".into()));
        }
        if let Some(env) = &self.environment {
            env.process(h)?;
            env.perturbation().validate()?;
            if env.horizon < 1 {
                return Err(CliError::Config("environment.horizon must be at least 1".into()));
            }
        }
        let hash = self.hash()?;
        let out = self.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        Ok(Resolved { theta0: self.theta0 - 1, config: self, hash, model, adjacency, matrix, out })
    }
}

fn check_deltas(what: &str, deltas: &[f64]) -> Result<(), CliError> {
    if deltas.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
        return Err(CliError::Config(format!("{what}: step sizes must lie in (0, 1)")));
    }
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
