//! Versioned JSON experiment configuration.
//!
//! A config file fully determines an experiment together with its seed list:
//! every random object (matrices drawn per instance, compliance draws, noise)
//! comes from the seed, so a (config, seeds) pair is reproducible
//! byte-for-byte. Unknown fields are rejected; the schema is versioned
//! through `spec_version`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::constraint::ConstraintSet;
use crate::engine::{AlgorithmConfig, RecoveryMode, Variant};
use crate::error::{Error, Result};
use crate::model::{
    ComplianceModel, DisturbanceGenerator, MeasurementModel, NoiseSpec, PhiDistribution,
    PlantModel, WaveSegment, WaveShape, World,
};
use crate::objective::{QuadraticForm, StageObjective};
use crate::rng::RandomStream;

/// Current config schema version; files must match exactly.
pub const SPEC_VERSION: u32 = 1;

/// Which experiment a spec drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Tracking,
    MseSweep,
    OpfCompare,
    ConstantsReport,
    ContractionTest,
}

impl ExperimentKind {
    /// Stable name used in manifests and file names.
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Tracking => "tracking",
            ExperimentKind::MseSweep => "mse_sweep",
            ExperimentKind::OpfCompare => "opf_compare",
            ExperimentKind::ConstantsReport => "constants_report",
            ExperimentKind::ContractionTest => "contraction_test",
        }
    }
}

/// One scalar compliance distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhiConfig {
    Constant { value: f64 },
    Uniform { lo: f64, hi: f64 },
    Beta { alpha: f64, beta: f64, lo: f64, hi: f64 },
}

impl PhiConfig {
    pub fn build(&self) -> Result<PhiDistribution> {
        let dist = match *self {
            PhiConfig::Constant { value } => PhiDistribution::Constant { value },
            PhiConfig::Uniform { lo, hi } => PhiDistribution::Uniform { lo, hi },
            PhiConfig::Beta { alpha, beta, lo, hi } => {
                PhiDistribution::Beta { alpha, beta, lo, hi }
            }
        };
        dist.validate()?;
        Ok(dist)
    }

    /// Family label for table rows, e.g. `beta(4,2)`.
    pub fn family(&self) -> String {
        match self {
            PhiConfig::Constant { value } => format!("constant({value})"),
            PhiConfig::Uniform { .. } => "uniform".to_string(),
            PhiConfig::Beta { alpha, beta, .. } => format!("beta({alpha},{beta})"),
        }
    }

    /// Support bounds, `(lo, hi)`.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            PhiConfig::Constant { value } => (value, value),
            PhiConfig::Uniform { lo, hi } | PhiConfig::Beta { lo, hi, .. } => (lo, hi),
        }
    }
}

/// A matrix that is either given or drawn once per experiment from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MatrixConfig {
    Explicit { rows: Vec<Vec<f64>> },
    Identity { dim: usize },
    /// Diagonal with i.i.d. `Unif[lo, hi]` entries.
    DiagonalUniform { dim: usize, lo: f64, hi: f64 },
    /// Dense with i.i.d. `Unif[lo, hi]` entries.
    Uniform { rows: usize, cols: usize, lo: f64, hi: f64 },
}

impl MatrixConfig {
    /// Materialize the matrix, consuming draws from `rng` for random kinds.
    pub fn realize(&self, rng: &mut RandomStream) -> Result<DMatrix<f64>> {
        match self {
            MatrixConfig::Explicit { rows } => {
                if rows.is_empty() || rows[0].is_empty() {
                    return Err(Error::InvalidConfig("explicit matrix must be nonempty".into()));
                }
                let cols = rows[0].len();
                if rows.iter().any(|r| r.len() != cols) {
                    return Err(Error::InvalidConfig("explicit matrix rows are ragged".into()));
                }
                if rows.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidConfig("explicit matrix must be finite".into()));
                }
                Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
            }
            MatrixConfig::Identity { dim } => {
                if *dim == 0 {
                    return Err(Error::InvalidConfig("identity matrix needs dim >= 1".into()));
                }
                Ok(DMatrix::identity(*dim, *dim))
            }
            MatrixConfig::DiagonalUniform { dim, lo, hi } => {
                if *dim == 0 || !(lo < hi) {
                    return Err(Error::InvalidConfig(
                        "diagonal_uniform needs dim >= 1 and lo < hi".into(),
                    ));
                }
                let diag = DVector::from_fn(*dim, |_, _| rng.uniform(*lo, *hi));
                Ok(DMatrix::from_diagonal(&diag))
            }
            MatrixConfig::Uniform { rows, cols, lo, hi } => {
                if *rows == 0 || *cols == 0 || !(lo < hi) {
                    return Err(Error::InvalidConfig(
                        "uniform matrix needs positive shape and lo < hi".into(),
                    ));
                }
                // Row-major draw order, fixed so re-runs agree.
                let mut m = DMatrix::zeros(*rows, *cols);
                for i in 0..*rows {
                    for j in 0..*cols {
                        m[(i, j)] = rng.uniform(*lo, *hi);
                    }
                }
                Ok(m)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveShapeConfig {
    Sine,
    Square,
    Triangle,
}

impl From<WaveShapeConfig> for WaveShape {
    fn from(value: WaveShapeConfig) -> Self {
        match value {
            WaveShapeConfig::Sine => WaveShape::Sine,
            WaveShapeConfig::Square => WaveShape::Square,
            WaveShapeConfig::Triangle => WaveShape::Triangle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentConfig {
    pub shape: WaveShapeConfig,
    pub omega: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceConfig {
    Constant { value: Vec<f64> },
    Waveform { segments: Vec<SegmentConfig> },
}

impl DisturbanceConfig {
    pub fn build(&self) -> Result<DisturbanceGenerator> {
        match self {
            DisturbanceConfig::Constant { value } => {
                Ok(DisturbanceGenerator::constant(DVector::from_vec(value.clone())))
            }
            DisturbanceConfig::Waveform { segments } => DisturbanceGenerator::waveform(
                segments
                    .iter()
                    .map(|s| WaveSegment {
                        shape: s.shape.into(),
                        omega: DVector::from_vec(s.omega.clone()),
                        amplitude: DVector::from_vec(s.amplitude.clone()),
                        len: s.len,
                    })
                    .collect(),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ComplianceConfig {
    /// Independent identical marginals on a diagonal gain.
    DiagonalIid { phi: PhiConfig, dim: usize },
    /// One marginal per coordinate.
    Diagonal { phis: Vec<PhiConfig> },
}

impl ComplianceConfig {
    pub fn build(&self) -> Result<ComplianceModel> {
        match self {
            ComplianceConfig::DiagonalIid { phi, dim } => {
                ComplianceModel::diagonal_iid(phi.build()?, *dim)
            }
            ComplianceConfig::Diagonal { phis } => {
                let phis: Result<Vec<PhiDistribution>> = phis.iter().map(|p| p.build()).collect();
                ComplianceModel::diagonal(phis?)
            }
        }
    }
}

/// The plant: compliance gain, sensor map, disturbance, measurement noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub compliance: ComplianceConfig,
    pub c: MatrixConfig,
    pub d: MatrixConfig,
    pub disturbance: DisturbanceConfig,
    /// Isotropic Gaussian std on the implemented-input measurement.
    #[serde(default)]
    pub x_noise_std: f64,
    /// Isotropic Gaussian std on the output measurement.
    #[serde(default)]
    pub y_noise_std: f64,
}

/// A materialized model plus the matrices that were actually drawn, so runs
/// can record them.
#[derive(Debug, Clone)]
pub struct RealizedModel {
    pub world: World,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl ModelConfig {
    /// Draw the instance matrices (in declaration order: `c`, then `d`) and
    /// assemble the world.
    pub fn realize(&self, rng: &mut RandomStream) -> Result<RealizedModel> {
        if !(self.x_noise_std >= 0.0 && self.x_noise_std.is_finite())
            || !(self.y_noise_std >= 0.0 && self.y_noise_std.is_finite())
        {
            return Err(Error::InvalidConfig(
                "noise standard deviations must be finite and nonnegative".into(),
            ));
        }
        let compliance = self.compliance.build()?;
        let c = self.c.realize(rng)?;
        let d = self.d.realize(rng)?;
        let disturbance = self.disturbance.build()?;
        let plant = PlantModel::new(c.clone(), d.clone(), disturbance)?;
        let x_noise = if self.x_noise_std > 0.0 {
            NoiseSpec::gaussian_iso(self.x_noise_std, plant.dim_state())
        } else {
            NoiseSpec::None
        };
        let y_noise = if self.y_noise_std > 0.0 {
            NoiseSpec::gaussian_iso(self.y_noise_std, plant.dim_output())
        } else {
            NoiseSpec::None
        };
        let world = World::new(compliance, plant, MeasurementModel { x_noise, y_noise })?;
        Ok(RealizedModel { world, c, d })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum QuadConfig {
    /// Identically zero cost of the given input dimension.
    Zero { dim: usize },
    /// `kappa * ||z - target||^2`.
    Isotropic { kappa: f64, target: Vec<f64> },
    /// `(z - target)' W (z - target)`.
    Weighted { weight: Vec<Vec<f64>>, target: Vec<f64> },
}

impl QuadConfig {
    pub fn build(&self) -> Result<QuadraticForm> {
        match self {
            QuadConfig::Zero { dim } => Ok(QuadraticForm::zero(*dim)),
            QuadConfig::Isotropic { kappa, target } => {
                QuadraticForm::isotropic(*kappa, DVector::from_vec(target.clone()))
            }
            QuadConfig::Weighted { weight, target } => {
                let rows = weight.len();
                if rows == 0 || weight.iter().any(|r| r.len() != rows) {
                    return Err(Error::InvalidConfig("weight must be square".into()));
                }
                let w = DMatrix::from_fn(rows, rows, |i, j| weight[i][j]);
                QuadraticForm::new(w, DVector::from_vec(target.clone()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub g_y: QuadConfig,
    pub g_x: QuadConfig,
    #[serde(default)]
    pub eta: f64,
}

impl ObjectiveConfig {
    pub fn build(&self) -> Result<StageObjective> {
        StageObjective::new(self.g_y.build()?, self.g_x.build()?, self.eta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetConfig {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl SetConfig {
    pub fn build(&self) -> Result<ConstraintSet> {
        match self {
            SetConfig::Ball { center, radius } => {
                ConstraintSet::ball(DVector::from_vec(center.clone()), *radius)
            }
            SetConfig::Box { lo, hi } => {
                ConstraintSet::hyper_box(DVector::from_vec(lo.clone()), DVector::from_vec(hi.clone()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantConfig {
    Sofo,
    Dofo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryConfig {
    Exact,
    Oracle,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSection {
    pub alpha: f64,
    #[serde(default)]
    pub eta: f64,
    #[serde(default = "default_variant")]
    pub variant: VariantConfig,
    pub horizon: usize,
    #[serde(default = "default_recovery")]
    pub recovery: RecoveryConfig,
}

fn default_variant() -> VariantConfig {
    VariantConfig::Sofo
}

fn default_recovery() -> RecoveryConfig {
    RecoveryConfig::Exact
}

impl AlgorithmSection {
    pub fn build(&self) -> Result<AlgorithmConfig> {
        let config = AlgorithmConfig {
            alpha: self.alpha,
            eta: self.eta,
            variant: match self.variant {
                VariantConfig::Sofo => Variant::Sofo,
                VariantConfig::Dofo => Variant::Dofo,
            },
            horizon: self.horizon,
            recovery: match self.recovery {
                RecoveryConfig::Exact => RecoveryMode::Exact,
                RecoveryConfig::Oracle => RecoveryMode::Oracle,
                RecoveryConfig::Identity => RecoveryMode::Identity,
            },
        };
        config.validate()?;
        Ok(config)
    }
}

/// Step-size sweep settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Step sizes to run, each an independent experiment.
    pub alphas: Vec<f64>,
    /// Steps per experiment.
    pub horizon: usize,
    /// Leading fraction of the run discarded before time-averaging.
    #[serde(default = "default_burn_fraction")]
    pub burn_fraction: f64,
}

fn default_burn_fraction() -> f64 {
    0.5
}

impl SweepSection {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() {
            return Err(Error::InvalidConfig("sweep needs at least one step size".into()));
        }
        if self.alphas.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::InvalidConfig("sweep step sizes must be positive".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("sweep horizon must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.burn_fraction) {
            return Err(Error::InvalidConfig("burn fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    /// External 1-based bus id.
    pub node: usize,
    pub s_max_kva: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfilesConfig {
    Synthetic {
        pv_peak_kw: f64,
        load_scale: f64,
        cloud_intensity: f64,
        day_start_hour: f64,
    },
    Files {
        loads: String,
        pv: String,
    },
}

/// Feeder experiment settings; one comparison per `phi_grid` entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpfSection {
    pub phi_grid: Vec<PhiConfig>,
    pub steps: usize,
    pub step_seconds: f64,
    pub profiles: ProfilesConfig,
    /// Inverter placements; `None` = embedded default agent set.
    #[serde(default)]
    pub agents: Option<Vec<AgentConfig>>,
    #[serde(default = "default_kappa_p")]
    pub kappa_p: f64,
    #[serde(default = "default_kappa_q")]
    pub kappa_q: f64,
    #[serde(default = "default_kappa_y")]
    pub kappa_y: f64,
    /// 0-based index into the agent list.
    #[serde(default = "default_trace_agent")]
    pub trace_agent: usize,
    #[serde(default = "default_pf_tol")]
    pub pf_tol: f64,
}

fn default_kappa_p() -> f64 {
    4.0
}
fn default_kappa_q() -> f64 {
    1.0
}
fn default_kappa_y() -> f64 {
    8.0
}
fn default_trace_agent() -> usize {
    3
}
fn default_pf_tol() -> f64 {
    1e-8
}

impl OpfSection {
    pub fn validate(&self) -> Result<()> {
        if self.phi_grid.is_empty() {
            return Err(Error::InvalidConfig("opf needs at least one compliance entry".into()));
        }
        for phi in &self.phi_grid {
            phi.build()?;
        }
        if self.steps == 0 || !(self.step_seconds > 0.0) {
            return Err(Error::InvalidConfig("opf needs steps >= 1 and a positive step".into()));
        }
        Ok(())
    }
}

/// Monte-Carlo budgets for constants estimation and the contraction check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationSection {
    #[serde(default = "default_times")]
    pub times: Vec<usize>,
    #[serde(default = "default_curvature_pairs")]
    pub curvature_pairs: usize,
    #[serde(default = "default_curvature_draws")]
    pub curvature_draws: usize,
    #[serde(default = "default_gradient_error_scales")]
    pub gradient_error_scales: Vec<f64>,
    #[serde(default = "default_gradient_error_states")]
    pub gradient_error_states: usize,
    #[serde(default = "default_gradient_error_draws")]
    pub gradient_error_draws: usize,
    #[serde(default = "default_forcing_states")]
    pub forcing_states: usize,
    #[serde(default = "default_forcing_draws")]
    pub forcing_draws: usize,
    /// States probed by the contraction check.
    #[serde(default = "default_check_states")]
    pub check_states: usize,
    /// Draws per state in the contraction check.
    #[serde(default = "default_check_draws")]
    pub check_draws: usize,
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
}

fn default_times() -> Vec<usize> {
    vec![0]
}
fn default_curvature_pairs() -> usize {
    64
}
fn default_curvature_draws() -> usize {
    256
}
fn default_gradient_error_scales() -> Vec<f64> {
    vec![0.05, 0.1, 0.2, 0.4]
}
fn default_gradient_error_states() -> usize {
    8
}
fn default_gradient_error_draws() -> usize {
    512
}
fn default_forcing_states() -> usize {
    8
}
fn default_forcing_draws() -> usize {
    4096
}
fn default_check_states() -> usize {
    8
}
fn default_check_draws() -> usize {
    20_000
}
fn default_solver_tol() -> f64 {
    1e-10
}

impl Default for EstimationSection {
    fn default() -> Self {
        EstimationSection {
            times: default_times(),
            curvature_pairs: default_curvature_pairs(),
            curvature_draws: default_curvature_draws(),
            gradient_error_scales: default_gradient_error_scales(),
            gradient_error_states: default_gradient_error_states(),
            gradient_error_draws: default_gradient_error_draws(),
            forcing_states: default_forcing_states(),
            forcing_draws: default_forcing_draws(),
            check_states: default_check_states(),
            check_draws: default_check_draws(),
            solver_tol: default_solver_tol(),
        }
    }
}

impl EstimationSection {
    pub fn to_options(&self) -> crate::analysis::ConstantsOptions {
        crate::analysis::ConstantsOptions {
            times: self.times.clone(),
            curvature_pairs: self.curvature_pairs,
            curvature_draws: self.curvature_draws,
            gradient_error_scales: self.gradient_error_scales.clone(),
            gradient_error_states: self.gradient_error_states,
            gradient_error_draws: self.gradient_error_draws,
            forcing_states: self.forcing_states,
            forcing_draws: self.forcing_draws,
            solver_tol: self.solver_tol,
        }
    }
}

/// One experiment, fully specified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub spec_version: u32,
    pub kind: ExperimentKind,
    /// Master seeds; one full experiment per entry.
    pub seeds: Vec<u64>,
    /// Monte-Carlo replications where the experiment uses them.
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<ObjectiveConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set: Option<SetConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<AlgorithmSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opf: Option<OpfSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimation: Option<EstimationSection>,
}

fn default_replications() -> usize {
    1
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Deterministic serialization used for hashing and for writing example
    /// configs; field order is declaration order.
    pub fn to_canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.spec_version != SPEC_VERSION {
            return Err(Error::InvalidConfig(format!(
                "config has spec_version {} but this build expects {SPEC_VERSION}",
                self.spec_version
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("seeds must be distinct".into()));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be >= 1".into()));
        }
        let require = |present: bool, section: &str| -> Result<()> {
            if present {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!(
                    "{} experiments require the `{section}` section",
                    self.kind.as_str()
                )))
            }
        };
        match self.kind {
            ExperimentKind::Tracking => {
                require(self.model.is_some(), "model")?;
                require(self.objective.is_some(), "objective")?;
                require(self.set.is_some(), "set")?;
                require(self.algorithm.is_some(), "algorithm")?;
            }
            ExperimentKind::MseSweep => {
                require(self.model.is_some(), "model")?;
                require(self.objective.is_some(), "objective")?;
                require(self.set.is_some(), "set")?;
                require(self.algorithm.is_some(), "algorithm")?;
                require(self.sweep.is_some(), "sweep")?;
                self.sweep.as_ref().unwrap().validate()?;
                // The sweep measures errors against a fixed optimizer, so the
                // exogenous input must not move.
                if let Some(m) = &self.model {
                    if !matches!(m.disturbance, DisturbanceConfig::Constant { .. }) {
                        return Err(Error::InvalidConfig(
                            "step-size sweeps need a constant disturbance".into(),
                        ));
                    }
                }
            }
            ExperimentKind::OpfCompare => {
                require(self.opf.is_some(), "opf")?;
                require(self.algorithm.is_some(), "algorithm")?;
                let opf = self.opf.as_ref().unwrap();
                opf.validate()?;
                if let Some(a) = &self.algorithm {
                    if a.horizon != opf.steps {
                        return Err(Error::InvalidConfig(format!(
                            "algorithm horizon {} must equal the profile length {}",
                            a.horizon, opf.steps
                        )));
                    }
                }
            }
            ExperimentKind::ConstantsReport | ExperimentKind::ContractionTest => {
                require(self.model.is_some(), "model")?;
                require(self.objective.is_some(), "objective")?;
                require(self.set.is_some(), "set")?;
                require(self.algorithm.is_some(), "algorithm")?;
            }
        }
        // Sections that participate must themselves build.
        if let Some(m) = &self.model {
            // Realization draws random matrices; validate with a throwaway
            // stream so config errors surface before any files are written.
            m.realize(&mut RandomStream::new(0))?;
        }
        if let Some(o) = &self.objective {
            o.build()?;
        }
        if let Some(s) = &self.set {
            s.build()?;
        }
        if let Some(a) = &self.algorithm {
            a.build()?;
        }
        Ok(())
    }
}

/// The built-in two-input instance behind the default tracking and sweep
/// configs: diagonal uniform compliance, a contracting random sensor map, and
/// a ball input set.
fn base_toy_model() -> ModelConfig {
    ModelConfig {
        compliance: ComplianceConfig::DiagonalIid {
            phi: PhiConfig::Uniform { lo: 0.0, hi: 1.0 },
            dim: 2,
        },
        c: MatrixConfig::DiagonalUniform { dim: 2, lo: -5.0, hi: 0.0 },
        d: MatrixConfig::Uniform { rows: 2, cols: 2, lo: 0.0, hi: 1.0 },
        disturbance: DisturbanceConfig::Constant { value: vec![2.0, 1.0] },
        x_noise_std: 0.0,
        y_noise_std: 0.0,
    }
}

fn base_toy_objective() -> ObjectiveConfig {
    ObjectiveConfig {
        g_y: QuadConfig::Isotropic { kappa: 1.0, target: vec![0.0, 0.0] },
        g_x: QuadConfig::Zero { dim: 2 },
        eta: 0.0,
    }
}

fn base_toy_set() -> SetConfig {
    SetConfig::Ball { center: vec![0.0, 0.0], radius: 3.0 }
}

/// Built-in defaults for each experiment kind; used when the CLI is invoked
/// without `--config` and exported as example files.
pub fn default_spec(kind: ExperimentKind) -> ExperimentSpec {
    let mut spec = ExperimentSpec {
        spec_version: SPEC_VERSION,
        kind,
        seeds: vec![1],
        replications: 1,
        model: None,
        objective: None,
        set: None,
        algorithm: None,
        sweep: None,
        opf: None,
        estimation: None,
    };
    match kind {
        ExperimentKind::Tracking => {
            let n = 300_000;
            let omega = vec![5e-4, 7e-4];
            spec.model = Some(ModelConfig {
                disturbance: DisturbanceConfig::Waveform {
                    segments: vec![
                        SegmentConfig {
                            shape: WaveShapeConfig::Triangle,
                            omega: omega.clone(),
                            amplitude: vec![10.0, 7.0],
                            len: n / 3,
                        },
                        SegmentConfig {
                            shape: WaveShapeConfig::Square,
                            omega: omega.clone(),
                            amplitude: vec![10.0, 15.0],
                            len: n / 3,
                        },
                        SegmentConfig {
                            shape: WaveShapeConfig::Sine,
                            omega,
                            amplitude: vec![10.0, 13.0],
                            len: n / 3,
                        },
                    ],
                },
                y_noise_std: 1.0,
                ..base_toy_model()
            });
            spec.objective = Some(base_toy_objective());
            spec.set = Some(base_toy_set());
            spec.algorithm = Some(AlgorithmSection {
                alpha: 2e-3,
                eta: 0.0,
                variant: VariantConfig::Sofo,
                horizon: n,
                recovery: RecoveryConfig::Exact,
            });
        }
        ExperimentKind::MseSweep => {
            spec.model = Some(base_toy_model());
            spec.objective = Some(base_toy_objective());
            spec.set = Some(base_toy_set());
            spec.algorithm = Some(AlgorithmSection {
                alpha: 2e-3,
                eta: 0.0,
                variant: VariantConfig::Sofo,
                horizon: 300_000,
                recovery: RecoveryConfig::Exact,
            });
            // Eight log-spaced points across two decades.
            let alphas =
                (0..8).map(|k| 1e-3 * 100f64.powf(k as f64 / 7.0)).collect::<Vec<_>>();
            spec.sweep =
                Some(SweepSection { alphas, horizon: 300_000, burn_fraction: 0.5 });
        }
        ExperimentKind::OpfCompare => {
            spec.replications = 100;
            let supports = [(0.0, 1.0), (-0.5, 1.0), (-1.0, 1.0)];
            let mut grid = Vec::new();
            for (lo, hi) in supports {
                grid.push(PhiConfig::Beta { alpha: 4.0, beta: 2.0, lo, hi });
                grid.push(PhiConfig::Beta { alpha: 2.0, beta: 4.0, lo, hi });
                grid.push(PhiConfig::Uniform { lo, hi });
            }
            spec.opf = Some(OpfSection {
                phi_grid: grid,
                steps: 2000,
                step_seconds: 18.0,
                profiles: ProfilesConfig::Synthetic {
                    pv_peak_kw: 900.0,
                    load_scale: 1.0,
                    cloud_intensity: 0.6,
                    day_start_hour: 8.0,
                },
                agents: None,
                kappa_p: default_kappa_p(),
                kappa_q: default_kappa_q(),
                kappa_y: default_kappa_y(),
                trace_agent: default_trace_agent(),
                pf_tol: default_pf_tol(),
            });
            spec.algorithm = Some(AlgorithmSection {
                alpha: 5e-2,
                eta: 1e-3,
                variant: VariantConfig::Sofo,
                horizon: 2000,
                recovery: RecoveryConfig::Exact,
            });
        }
        ExperimentKind::ConstantsReport | ExperimentKind::ContractionTest => {
            // Deterministic static instance so the report itself is static;
            // output noise exercises the measurement-error constants.
            spec.model = Some(ModelConfig {
                c: MatrixConfig::Explicit { rows: vec![vec![-1.0, 0.0], vec![0.0, -2.0]] },
                d: MatrixConfig::Identity { dim: 2 },
                y_noise_std: 1.0,
                ..base_toy_model()
            });
            spec.objective = Some(base_toy_objective());
            spec.set = Some(base_toy_set());
            spec.algorithm = Some(AlgorithmSection {
                alpha: 2e-3,
                eta: 0.0,
                variant: VariantConfig::Sofo,
                horizon: 1,
                recovery: RecoveryConfig::Exact,
            });
            spec.estimation = Some(EstimationSection::default());
        }
    }
    spec
}
