//! Experiment configuration, read from TOML.
//!
//! Only the seed and the output path can be overridden from the environment
//! (`PATHCTL_SEED`, `PATHCTL_OUT`); everything else lives in the file.

use std::path::{Path, PathBuf};

use pathctl_core::pimh::BurnIn;
use pathctl_core::smc::ResampleScheme;
use pathctl_core::{LqgParams, SivrParams};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Estimate,
    MseCost,
    Validate,
    SivrDemo,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Estimate => "estimate",
            Mode::MseCost => "mse-cost",
            Mode::Validate => "validate",
            Mode::SivrDemo => "sivr-demo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mc,
    Mlmc,
    Pimh,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Mc => "mc",
            Method::Pimh => "pimh",
            Method::Mlmc => "mlmc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resample {
    Multinomial,
    Systematic,
}

impl From<Resample> for ResampleScheme {
    fn from(r: Resample) -> Self {
        match r {
            Resample::Multinomial => ResampleScheme::Multinomial,
            Resample::Systematic => ResampleScheme::Systematic,
        }
    }
}

/// `"standard"`, `{ fixed = n }` or `{ fraction = f }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BurnInRule {
    Standard,
    Fixed(usize),
    Fraction(f64),
}

impl From<BurnInRule> for BurnIn {
    fn from(r: BurnInRule) -> Self {
        match r {
            BurnInRule::Standard => BurnIn::Standard,
            BurnInRule::Fixed(n) => BurnIn::Fixed(n),
            BurnInRule::Fraction(f) => BurnIn::Fraction(f),
        }
    }
}

/// Parameter overrides on top of the built-in defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqgOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

impl LqgOverrides {
    pub fn params(&self) -> LqgParams {
        let d = LqgParams::default();
        LqgParams {
            a: self.a.unwrap_or(d.a),
            b: self.b.unwrap_or(d.b),
            f: self.f.unwrap_or(d.f),
            q: self.q.unwrap_or(d.q),
            r: self.r.unwrap_or(d.r),
            x0: self.x0.unwrap_or(d.x0),
            horizon: self.horizon.unwrap_or(d.horizon),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SivrOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub varrho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_varrho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_weight: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_weight: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<[f64; 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

impl SivrOverrides {
    pub fn params(&self) -> SivrParams {
        let d = SivrParams::default();
        SivrParams {
            beta: self.beta.unwrap_or(d.beta),
            kappa: self.kappa.unwrap_or(d.kappa),
            lambda: self.lambda.unwrap_or(d.lambda),
            epsilon: self.epsilon.unwrap_or(d.epsilon),
            theta: self.theta.unwrap_or(d.theta),
            varrho: self.varrho.unwrap_or(d.varrho),
            sigma: self.sigma.unwrap_or(d.sigma),
            sigma_varrho: self.sigma_varrho.unwrap_or(d.sigma_varrho),
            q_weight: self.q_weight.unwrap_or(d.q_weight),
            r_weight: self.r_weight.unwrap_or(d.r_weight),
            x0: self.x0.unwrap_or(d.x0),
            horizon: self.horizon.unwrap_or(d.horizon),
        }
    }
}

/// Problem selected by name, with overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProblemConfig {
    Lqg(LqgOverrides),
    Sivr(SivrOverrides),
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig::Lqg(LqgOverrides::default())
    }
}

impl ProblemConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemConfig::Lqg(_) => "lqg",
            ProblemConfig::Sivr(_) => "sivr",
        }
    }

    pub fn horizon(&self) -> f64 {
        match self {
            ProblemConfig::Lqg(o) => o.params().horizon,
            ProblemConfig::Sivr(o) => o.params().horizon,
        }
    }
}

fn default_methods() -> Vec<Method> {
    vec![Method::Mlmc]
}
fn default_trunc() -> u32 {
    4
}
fn default_particles() -> usize {
    500
}
fn default_one() -> f64 {
    1.0
}
fn default_repetitions() -> usize {
    1
}
fn default_iterations() -> usize {
    1000
}
fn default_mc_samples() -> usize {
    100_000
}
fn default_burn_in() -> BurnInRule {
    BurnInRule::Standard
}
fn default_resample() -> Resample {
    Resample::Multinomial
}

/// Estimator settings shared by `estimate`, `mse-cost` and `sivr-demo`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// `M`
    #[serde(default = "default_trunc")]
    pub trunc: u32,
    /// `L` when no `epsilon` is given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finest: Option<u32>,
    /// Target accuracy; selects `L` and `N_l` from the schedule.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default = "default_one")]
    pub c_bias: f64,
    #[serde(default = "default_one")]
    pub c_var: f64,
    /// Explicit `N_M..N_L` for the multilevel estimator.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<usize>>,
    #[serde(default = "default_particles")]
    pub n_particles: usize,
    /// Retained chain length for single-level PIMH without a schedule.
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    /// Single-level PIMH retains `single_factor * N_M` states when a schedule is used.
    #[serde(default = "default_one")]
    pub single_factor: f64,
    /// Plain MC draws `mc_factor * N_M` paths when a schedule is used.
    #[serde(default = "default_one")]
    pub mc_factor: f64,
    #[serde(default = "default_burn_in")]
    pub burn_in: BurnInRule,
    #[serde(default = "default_resample")]
    pub resample: Resample,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults parse")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroundTruth {
    /// Long single-level PIMH run one level above the finest swept level.
    Pimh,
    /// Closed-form discrete target, LQG only.
    Exact,
}

fn default_ground_truth() -> GroundTruth {
    GroundTruth::Pimh
}
fn default_gt_factor() -> f64 {
    16.0
}
fn default_sweep_reps() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_sweep_reps")]
    pub repetitions: usize,
    #[serde(default = "default_ground_truth")]
    pub ground_truth: GroundTruth,
    /// Ground-truth cost as a multiple of the largest per-point cost.
    #[serde(default = "default_gt_factor")]
    pub ground_truth_factor: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults parse")
    }
}

fn default_paths() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    /// Coupled paths per check and level.
    #[serde(default = "default_paths")]
    pub paths: usize,
    /// Test hook: pair the wrong fine increments when building coarse paths.
    #[serde(default)]
    pub tamper_coupling: bool,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults parse")
    }
}

fn default_coarse_steps() -> usize {
    16
}
fn default_substeps() -> usize {
    8
}
fn default_demo_level() -> u32 {
    6
}
fn default_demo_trunc() -> u32 {
    3
}
fn default_demo_particles() -> usize {
    100
}
fn default_demo_iterations() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoConfig {
    /// Re-estimation points over `[0, T]`.
    #[serde(default = "default_coarse_steps")]
    pub coarse_steps: usize,
    /// Euler steps between re-estimations.
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default = "default_demo_level")]
    pub level: u32,
    #[serde(default = "default_demo_trunc")]
    pub trunc: u32,
    #[serde(default = "default_demo_particles")]
    pub n_particles: usize,
    #[serde(default = "default_demo_iterations")]
    pub iterations: usize,
    /// Apply `u = 0` instead of the estimate.
    #[serde(default)]
    pub force_zero_control: bool,
}

impl Default for DemoConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults parse")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Checked against the verb when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub problem: ProblemConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub validate: ValidateConfig,
    #[serde(default)]
    pub demo: DemoConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// The seed, which must be given explicitly.
    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Config("seed: no seed given (use --seed, PATHCTL_SEED or `seed =`)".into()))
    }

    /// Field-level checks for `mode`.
    pub fn check(&self, mode: Mode) -> Result<(), CliError> {
        let mut problems = Vec::new();
        if let Some(m) = self.mode {
            if m != mode {
                problems.push(format!("mode: file says `{}` but the verb is `{}`", m.name(), mode.name()));
            }
        }
        let e = &self.estimator;
        if e.trunc < 2 {
            problems.push("estimator.trunc: must be at least 2".into());
        }
        if e.n_particles == 0 {
            problems.push("estimator.n_particles: must be positive".into());
        }
        if e.repetitions == 0 {
            problems.push("estimator.repetitions: must be positive".into());
        }
        for (name, v) in [
            ("estimator.c_bias", e.c_bias),
            ("estimator.c_var", e.c_var),
            ("estimator.single_factor", e.single_factor),
            ("estimator.mc_factor", e.mc_factor),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                problems.push(format!("{name}: must be positive"));
            }
        }
        if let BurnInRule::Fraction(f) = e.burn_in {
            if !(0.0..1.0).contains(&f) {
                problems.push("estimator.burn_in.fraction: must lie in [0, 1)".into());
            }
        }
        if let Some(eps) = e.epsilon {
            if !(eps > 0.0 && eps.is_finite()) {
                problems.push("estimator.epsilon: must be positive".into());
            }
        }
        if let (Some(s), Some(l)) = (&e.samples, e.finest) {
            if l < e.trunc || s.len() != (l - e.trunc + 1) as usize {
                problems.push("estimator.samples: need one count per level trunc..=finest".into());
            }
        }
        match mode {
            Mode::Estimate => {
                if e.methods.is_empty() {
                    problems.push("estimator.methods: at least one method".into());
                }
                if e.finest.is_none() && e.epsilon.is_none() {
                    problems.push("estimator.finest: give `finest` or `epsilon`".into());
                }
                if e.methods.contains(&Method::Mlmc) && e.samples.is_none() && e.epsilon.is_none() {
                    problems.push("estimator.samples: mlmc needs `samples` or `epsilon`".into());
                }
            }
            Mode::MseCost => {
                let s = &self.sweep;
                if s.epsilons.is_empty() {
                    problems.push("sweep.epsilons: at least one value".into());
                }
                if s.epsilons.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    problems.push("sweep.epsilons: values must be positive".into());
                }
                if s.repetitions == 0 {
                    problems.push("sweep.repetitions: must be positive".into());
                }
                if !(s.ground_truth_factor > 0.0) {
                    problems.push("sweep.ground_truth_factor: must be positive".into());
                }
                if s.ground_truth == GroundTruth::Exact && !matches!(self.problem, ProblemConfig::Lqg(_)) {
                    problems.push("sweep.ground_truth: `exact` is only available for lqg".into());
                }
                if e.methods.is_empty() {
                    problems.push("estimator.methods: at least one method".into());
                }
            }
            Mode::Validate => {
                if self.validate.paths == 0 {
                    problems.push("validate.paths: must be positive".into());
                }
            }
            Mode::SivrDemo => {
                let d = &self.demo;
                if !matches!(self.problem, ProblemConfig::Sivr(_)) {
                    problems.push("problem.name: sivr-demo needs the sivr problem".into());
                }
                if d.coarse_steps == 0 || d.substeps == 0 || d.n_particles == 0 || d.iterations == 0 {
                    problems.push("demo: step counts, particles and iterations must be positive".into());
                }
                if d.trunc < 2 || d.trunc > d.level {
                    problems.push("demo.trunc: need 2 <= trunc <= level".into());
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(problems.join("; ")))
        }
    }

    /// SHA-256 of the effective configuration without the output path.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut c = self.clone();
        c.out = None;
        let digest = Sha256::digest(c.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
