//! The online loop: measurement-driven gradient estimation, compliance
//! recovery, the projected update, and trajectory recording.
//!
//! Each step applies the current setpoint `u_n` to the plant, observes
//! `(x_hat, y_hat)`, recovers an estimate `A°_{n+1}` of the realized
//! compliance matrix, forms the surrogate gradient
//! ```text
//! grad_hat_n = A°' [C' grad g_y(y_hat) + grad g_x(x_hat)] + eta u_n
//! ```
//! and updates `u_{n+1} = Proj_{U_n}(u_n - alpha grad_hat_n)`. The stochastic
//! variant uses the recovered compliance; the deterministic variant assumes
//! full compliance (`A° = I`) and is otherwise identical, so the two coincide
//! bit for bit on a fully compliant system.

use nalgebra::{DMatrix, DVector};

use crate::constraint::ConstraintSet;
use crate::error::{Error, Result};
use crate::model::World;
use crate::objective::StageObjective;
use crate::rng::RandomStream;

/// Setpoints smaller than this are treated as zero during ratio recovery;
/// the mean-compliance prior substitutes for the undefined ratio.
pub const RATIO_RECOVERY_ZERO_TOL: f64 = 1e-8;

/// Which update the loop runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Stochastic variant: gradient built from the recovered compliance.
    Sofo,
    /// Deterministic variant: assumes full compliance, `A° = I`.
    Dofo,
}

/// How the per-step compliance estimate `A°_{n+1}` is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecoveryMode {
    /// Componentwise ratio `x_hat_i / u_i` (diagonal compliance only).
    Exact,
    /// The true sampled matrix — a diagnostic upper bound on recovery quality.
    Oracle,
    /// `A° = I`, the full-compliance assumption.
    Identity,
}

/// Step size, regularization, variant, and horizon for one run.
#[derive(Debug, Clone, Copy)]
pub struct AlgorithmConfig {
    pub alpha: f64,
    pub eta: f64,
    pub variant: Variant,
    pub horizon: usize,
    pub recovery: RecoveryMode,
}

impl AlgorithmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidConfig(format!("step size must be > 0, got {}", self.alpha)));
        }
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "regularization weight must be >= 0, got {}",
                self.eta
            )));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be >= 1".into()));
        }
        Ok(())
    }

    /// The deterministic variant always assumes full compliance, whatever the
    /// configured recovery mode says.
    pub fn effective_recovery(&self) -> RecoveryMode {
        match self.variant {
            Variant::Sofo => self.recovery,
            Variant::Dofo => RecoveryMode::Identity,
        }
    }
}

/// Recover the compliance estimate `A°` from the commanded `u` and the
/// measured implemented input `x_hat`.
///
/// `sampled_a` is the realized matrix (used only by `Oracle`);
/// `mean_diagonal` holds `E[Phi_i]`, substituted wherever `|u_i|` is below
/// [`RATIO_RECOVERY_ZERO_TOL`] — the ratio is undefined there and the prior
/// mean keeps the estimate bounded.
pub fn recover_a(
    u: &DVector<f64>,
    x_hat: &DVector<f64>,
    mode: RecoveryMode,
    sampled_a: &DMatrix<f64>,
    mean_diagonal: &DVector<f64>,
) -> DMatrix<f64> {
    let d = u.len();
    match mode {
        RecoveryMode::Identity => DMatrix::identity(d, d),
        RecoveryMode::Oracle => sampled_a.clone(),
        RecoveryMode::Exact => {
            let diag = DVector::from_fn(d, |i, _| {
                if u[i].abs() < RATIO_RECOVERY_ZERO_TOL {
                    mean_diagonal[i]
                } else {
                    x_hat[i] / u[i]
                }
            });
            DMatrix::from_diagonal(&diag)
        }
    }
}

/// The measurement-driven gradient surrogate
/// `A°' [C' grad g_y(y_hat) + grad g_x(x_hat)] + eta u`.
pub fn estimate_gradient(
    a_circ: &DMatrix<f64>,
    c: &DMatrix<f64>,
    y_hat: &DVector<f64>,
    x_hat: &DVector<f64>,
    u: &DVector<f64>,
    obj: &StageObjective,
    n: usize,
) -> DVector<f64> {
    a_circ.transpose() * (c.transpose() * obj.grad_gy(y_hat, n) + obj.grad_gx(x_hat, n))
        + u * obj.eta()
}

/// Everything one step produced, before any thinning or serialization.
#[derive(Debug, Clone)]
pub struct StepLog {
    pub n: usize,
    /// Setpoint applied at this step.
    pub u: DVector<f64>,
    /// Implemented input `A u + b`.
    pub x: DVector<f64>,
    pub x_hat: DVector<f64>,
    /// Plant output `C x + D r_n`.
    pub y: DVector<f64>,
    pub y_hat: DVector<f64>,
    pub grad_hat: DVector<f64>,
    /// Next setpoint, already projected onto `U_n`.
    pub u_next: DVector<f64>,
}

/// One simulated plant interaction plus the projected update.
pub fn step(
    u: &DVector<f64>,
    world: &World,
    obj: &StageObjective,
    set: &ConstraintSet,
    config: &AlgorithmConfig,
    n: usize,
    rng: &mut RandomStream,
) -> Result<StepLog> {
    let (a, b) = world.compliance.sample(rng);
    let x = &a * u + &b;
    let y = world.plant.output(&x, n);
    let (x_hat, y_hat) = world.measurement.measure(&x, &y, rng);
    let a_circ = match config.effective_recovery() {
        RecoveryMode::Exact => {
            let mean_diag = world.compliance.mean_diagonal()?;
            recover_a(u, &x_hat, RecoveryMode::Exact, &a, &mean_diag)
        }
        mode => recover_a(u, &x_hat, mode, &a, &DVector::zeros(u.len())),
    };
    let grad_hat = estimate_gradient(&a_circ, world.plant.c(), &y_hat, &x_hat, u, obj, n);
    let u_next = set.project(&(u - &grad_hat * config.alpha), n)?;
    Ok(StepLog { n, u: u.clone(), x, x_hat, y, y_hat, grad_hat, u_next })
}

/// Per-step row of a recorded trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryStep {
    pub n: usize,
    pub u: DVector<f64>,
    pub x: DVector<f64>,
    pub x_hat: DVector<f64>,
    pub y: DVector<f64>,
    pub y_hat: DVector<f64>,
    pub grad_hat: DVector<f64>,
    /// Instantaneous optimizer, when an oracle was supplied.
    pub u_star: Option<DVector<f64>>,
    /// `||u_n - u*_n||^2`, when an oracle was supplied.
    pub tracking_sq_error: Option<f64>,
    /// Realized stage cost `g_x(x) + g_y(y) + (eta/2)||u||^2`.
    pub stage_cost: f64,
}

/// Receives steps as they are produced. Rows arrive strictly in step order,
/// so sinks can stream to disk without buffering; the in-memory sink is the
/// right choice up to about 10^6 steps, the CSV sink beyond that.
pub trait StepSink {
    fn record(&mut self, row: &TrajectoryStep) -> Result<()>;
}

/// Buffers every step; backs [`TrajectoryRecord`].
#[derive(Debug, Default)]
pub struct MemorySink {
    pub steps: Vec<TrajectoryStep>,
}

impl StepSink for MemorySink {
    fn record(&mut self, row: &TrajectoryStep) -> Result<()> {
        self.steps.push(row.clone());
        Ok(())
    }
}

/// Discards rows; for throughput measurements and envelope-only runs where
/// the caller keeps its own reductions via the closure sink instead.
#[derive(Debug, Default)]
pub struct NullSink;

impl StepSink for NullSink {
    fn record(&mut self, _row: &TrajectoryStep) -> Result<()> {
        Ok(())
    }
}

/// Adapter so ad-hoc reductions can be written as closures.
pub struct FnSink<F: FnMut(&TrajectoryStep) -> Result<()>>(pub F);

impl<F: FnMut(&TrajectoryStep) -> Result<()>> StepSink for FnSink<F> {
    fn record(&mut self, row: &TrajectoryStep) -> Result<()> {
        (self.0)(row)
    }
}

/// Supplies the instantaneous optimizer `u*_n`; implementations may cache or
/// warm-start, hence `&mut self`.
pub trait OptimizerOracle {
    fn optimal_at(&mut self, n: usize) -> Result<DVector<f64>>;
}

/// A fully recorded run.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub steps: Vec<TrajectoryStep>,
    /// Setpoint after the final update, `u_N`.
    pub u_final: DVector<f64>,
}

/// Drive the loop for `config.horizon` steps, recording into memory.
/// `u0` is projected onto `U_0` on entry; infeasible starts are repaired,
/// not rejected, matching the loop's own feasibility maintenance.
pub fn run_trajectory(
    u0: &DVector<f64>,
    world: &World,
    obj: &StageObjective,
    set: &ConstraintSet,
    config: &AlgorithmConfig,
    rng: &mut RandomStream,
    oracle: Option<&mut dyn OptimizerOracle>,
) -> Result<TrajectoryRecord> {
    let mut sink = MemorySink::default();
    let u_final = run_trajectory_with_sink(u0, world, obj, set, config, rng, oracle, &mut sink)?;
    Ok(TrajectoryRecord { seed: rng.seed(), steps: sink.steps, u_final })
}

/// Streaming variant of [`run_trajectory`]; returns the final setpoint.
#[allow(clippy::too_many_arguments)]
pub fn run_trajectory_with_sink(
    u0: &DVector<f64>,
    world: &World,
    obj: &StageObjective,
    set: &ConstraintSet,
    config: &AlgorithmConfig,
    rng: &mut RandomStream,
    mut oracle: Option<&mut dyn OptimizerOracle>,
    sink: &mut dyn StepSink,
) -> Result<DVector<f64>> {
    config.validate()?;
    if (config.eta - obj.eta()).abs() > 1e-12 {
        return Err(Error::InvalidConfig(format!(
            "algorithm eta {} disagrees with objective eta {}; one source of truth required",
            config.eta,
            obj.eta()
        )));
    }
    if u0.len() != world.dim_input() || set.dim() != world.dim_input() {
        return Err(Error::DimensionMismatch(format!(
            "initial point ({}), feasible set ({}), and plant input ({}) dimensions must agree",
            u0.len(),
            set.dim(),
            world.dim_input()
        )));
    }
    if u0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("initial point must be finite".into()));
    }

    let mut u = set.project(u0, 0)?;
    for n in 0..config.horizon {
        let log = step(&u, world, obj, set, config, n, rng)?;
        let (u_star, tracking_sq_error) = match oracle.as_deref_mut() {
            Some(oracle) => {
                let star = oracle.optimal_at(n)?;
                let err = (&log.u - &star).norm_squared();
                (Some(star), Some(err))
            }
            None => (None, None),
        };
        let stage_cost = obj.value(&log.x, &log.y, &log.u, n);
        sink.record(&TrajectoryStep {
            n,
            u: log.u,
            x: log.x,
            x_hat: log.x_hat,
            y: log.y,
            y_hat: log.y_hat,
            grad_hat: log.grad_hat,
            u_star,
            tracking_sq_error,
            stage_cost,
        })?;
        u = log.u_next;
    }
    Ok(u)
}
