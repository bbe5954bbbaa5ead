//! Monte-Carlo estimation of the constants the bound evaluators need but no
//! closed form provides, each reported with a standard error.
//!
//! The estimates feed envelope computations, so the [`estimate_constants`]
//! driver stores every estimated constant at the upper edge of one standard
//! error: enlarging `l_f`, `sigma_f`, `b1`, or `b2` only widens the bounds
//! they enter, never fakes a tighter guarantee. Raw values and diagnostics
//! stay available on the per-estimator result types.
//!
//! Estimators parallelize over index-derived substreams with order-preserving
//! collection and pairwise reduction, so results do not depend on the number
//! of worker threads.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::constraint::ConstraintSet;
use crate::engine::{self, AlgorithmConfig};
use crate::error::{Error, Result};
use crate::model::{ComplianceModel, NoiseSpec, PlantModel, World};
use crate::numeric::{fit_slope_through_origin, mean_and_se};
use crate::objective::StageObjective;
use crate::rng::RandomStream;

use super::{solve_optimal, strong_monotonicity_constant, StrongMonotonicity, TheoryConstants};

/// Realized stage-cost gradient at `u` under one compliance draw `(a, b)`,
/// with exact state and output (no measurement error):
/// `a' [C' grad g_y(y) + grad g_x(x)] + eta u`.
pub fn sampled_gradient(
    obj: &StageObjective,
    plant: &PlantModel,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    u: &DVector<f64>,
    n: usize,
) -> DVector<f64> {
    let x = a * u + b;
    let y = plant.output(&x, n);
    engine::estimate_gradient(a, plant.c(), &y, &x, u, obj, n)
}

/// Monte-Carlo `E[grad f(u, Phi)' (u - u_star)] / ||u - u_star||^2` and its
/// standard error.
///
/// When `u_star` is the constrained optimizer, the variational inequality
/// makes the mean at least the strong-monotonicity constant for any feasible
/// `u`, which is the checkable form of the curvature guarantee.
pub fn strong_monotonicity_ratio(
    obj: &StageObjective,
    compliance: &ComplianceModel,
    plant: &PlantModel,
    u: &DVector<f64>,
    u_star: &DVector<f64>,
    n: usize,
    draws: usize,
    rng: &mut RandomStream,
) -> Result<(f64, f64)> {
    if draws < 2 {
        return Err(Error::InvalidConfig("monotonicity ratio needs at least 2 draws".into()));
    }
    let diff = u - u_star;
    let dist_sq = diff.norm_squared();
    if dist_sq < 1e-18 {
        return Err(Error::InvalidConfig("monotonicity probe coincides with the optimizer".into()));
    }
    let vals: Vec<f64> = (0..draws)
        .map(|_| {
            let (a, b) = compliance.sample(rng);
            sampled_gradient(obj, plant, &a, &b, u, n).dot(&diff) / dist_sq
        })
        .collect();
    Ok(mean_and_se(&vals))
}

/// Monte-Carlo estimates of the quadratic-mean gradient Lipschitz constant
/// and the gradient noise level at the optimizer.
#[derive(Debug, Clone, Copy)]
pub struct CurvatureEstimate {
    /// Max over probe states of `sqrt(E||grad f(u) - grad f(u*)||^2) / ||u - u*||`
    /// (common compliance draw in both gradients).
    pub l_f: f64,
    /// Delta-method standard error at the maximizing probe.
    pub l_f_se: f64,
    /// Max over probed times of
    /// `sqrt(E||grad f(u*, Phi) - E grad f(u*, Phi)||^2)`.
    pub sigma_f: f64,
    /// Delta-method standard error at the maximizing time.
    pub sigma_f_se: f64,
}

/// Estimate [`CurvatureEstimate`] by probing `pairs` feasible states per time
/// against the optimizer, `draws` compliance draws per probe.
///
/// Probes cycle through random feasible points, axis-aligned offsets from the
/// optimizer, and random-direction offsets (log-spaced lengths), so both
/// global and direction-aligned curvature are sampled. Requires
/// `pairs * draws >= 10^4`.
pub fn estimate_curvature(
    obj: &StageObjective,
    compliance: &ComplianceModel,
    plant: &PlantModel,
    set: &ConstraintSet,
    times: &[usize],
    pairs: usize,
    draws: usize,
    solver_tol: f64,
    rng: &mut RandomStream,
) -> Result<CurvatureEstimate> {
    if times.is_empty() {
        return Err(Error::InvalidConfig("curvature estimation needs at least one time".into()));
    }
    if draws < 2 || pairs == 0 || pairs * draws < 10_000 {
        return Err(Error::InvalidConfig(format!(
            "curvature estimation needs pairs * draws >= 10^4 with draws >= 2, got {pairs} x {draws}"
        )));
    }
    let d = set.dim();
    let mut l_f = (0.0f64, 0.0f64);
    let mut sigma = (0.0f64, 0.0f64);
    for (ti, &n) in times.iter().enumerate() {
        let u_star = solve_optimal(obj, compliance, plant, set, n, solver_tol)?;

        // Gradient noise at the optimizer: vector variance around the mean.
        let m = pairs * draws;
        let mut sig_rng = rng.substream(2 * ti as u64);
        let grads: Vec<DVector<f64>> = (0..m)
            .map(|_| {
                let (a, b) = compliance.sample(&mut sig_rng);
                sampled_gradient(obj, plant, &a, &b, &u_star, n)
            })
            .collect();
        let mut mean_grad = DVector::zeros(d);
        for g in &grads {
            mean_grad += g;
        }
        mean_grad /= m as f64;
        let sq: Vec<f64> = grads.iter().map(|g| (g - &mean_grad).norm_squared()).collect();
        let (var_mean, var_se) = mean_and_se(&sq);
        let var = var_mean * m as f64 / (m - 1) as f64;
        let s = var.max(0.0).sqrt();
        let s_se = if s > 0.0 { var_se / (2.0 * s) } else { 0.0 };
        if s > sigma.0 {
            sigma = (s, s_se);
        }

        // Quadratic-mean Lipschitz ratio, maximized over probes.
        let pair_base = rng.substream(2 * ti as u64 + 1);
        let probe_reach = set.uniform_bound().max(1.0);
        let ratios: Vec<(f64, f64)> = (0..pairs)
            .into_par_iter()
            .map(|j| {
                let mut prng = pair_base.substream(j as u64);
                let probe = match j % 3 {
                    0 => set.sample_feasible(&mut prng, n)?,
                    1 => {
                        let t = 10f64.powf(prng.uniform(-3.0, 0.0)) * probe_reach;
                        let axis = (j / 3) % d;
                        let mut p = u_star.clone();
                        p[axis] += if j % 2 == 0 { t } else { -t };
                        set.project(&p, n)?
                    }
                    _ => {
                        let t = 10f64.powf(prng.uniform(-3.0, 0.0)) * probe_reach;
                        let dir = DVector::from_fn(d, |_, _| prng.standard_normal());
                        let norm = dir.norm();
                        if norm < 1e-12 {
                            return Ok((0.0, 0.0));
                        }
                        set.project(&(&u_star + dir * (t / norm)), n)?
                    }
                };
                let dist = (&probe - &u_star).norm();
                if dist < 1e-9 {
                    // Projection collapsed the probe onto the optimizer.
                    return Ok((0.0, 0.0));
                }
                let sq: Vec<f64> = (0..draws)
                    .map(|_| {
                        let (a, b) = compliance.sample(&mut prng);
                        let gu = sampled_gradient(obj, plant, &a, &b, &probe, n);
                        let gs = sampled_gradient(obj, plant, &a, &b, &u_star, n);
                        (gu - gs).norm_squared()
                    })
                    .collect();
                let (mean, se) = mean_and_se(&sq);
                if mean <= 0.0 {
                    return Ok((0.0, 0.0));
                }
                let root = mean.sqrt();
                Ok((root / dist, se / (2.0 * root * dist)))
            })
            .collect::<Result<Vec<_>>>()?;
        for (r, se) in ratios {
            if r > l_f.0 {
                l_f = (r, se);
            }
        }
    }
    Ok(CurvatureEstimate { l_f: l_f.0, l_f_se: l_f.1, sigma_f: sigma.0, sigma_f_se: sigma.1 })
}

/// Fit of the gradient-estimation error factor: quadratic-mean error of the
/// measurement-driven gradient against the measurement-noise level.
#[derive(Debug, Clone)]
pub struct GradientErrorFit {
    /// Envelope factor: every probed scale satisfied
    /// `error + one SE <= b1 * epsilon_m`.
    pub b1: f64,
    /// Through-origin least-squares slope of error against noise level.
    pub slope: f64,
    /// One `(epsilon_m, error, error_se)` row per probed noise scale; the
    /// error is the largest quadratic-mean estimation error over the probe
    /// states at that scale.
    pub points: Vec<(f64, f64, f64)>,
    /// Largest relative deviation of a point from the regression line; small
    /// values confirm the linear-in-noise model the factor assumes.
    pub max_rel_residual: f64,
}

/// Measure `sqrt(E||grad_hat - grad f||^2)` under synthetic isotropic
/// Gaussian noise on both measurement channels and fit it against the noise
/// L4 level, giving the error factor `b1`.
///
/// The probe uses the true sampled compliance matrix in the estimate (oracle
/// recovery), so the recovery-error channel is exactly zero and the injected
/// noise level is the only error source — the same level bounds all error
/// channels by construction. Worlds whose real noise hits one channel only
/// are covered conservatively.
pub fn fit_gradient_error_factor(
    obj: &StageObjective,
    compliance: &ComplianceModel,
    plant: &PlantModel,
    set: &ConstraintSet,
    noise_scales: &[f64],
    states: usize,
    draws: usize,
    n: usize,
    rng: &mut RandomStream,
) -> Result<GradientErrorFit> {
    if noise_scales.is_empty() || noise_scales.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err(Error::InvalidConfig(
            "noise scales must be a nonempty list of positive reals".into(),
        ));
    }
    if states == 0 || draws < 2 {
        return Err(Error::InvalidConfig(
            "gradient-error fit needs states >= 1 and draws >= 2".into(),
        ));
    }
    let d = plant.dim_state();
    let m_out = plant.dim_output();
    // One shared probe cloud across scales, so every scale sees the same
    // geometry and the per-scale maxima are comparable.
    let mut probes = Vec::with_capacity(states);
    for _ in 0..states {
        probes.push(set.sample_feasible(rng, n)?);
    }
    let base = rng.split();
    let mut points = Vec::with_capacity(noise_scales.len());
    for (si, &scale) in noise_scales.iter().enumerate() {
        let per_state: Vec<(f64, f64)> = (0..states)
            .into_par_iter()
            .map(|j| {
                let mut prng = base.substream((si * states + j) as u64);
                let u = &probes[j];
                let sq: Vec<f64> = (0..draws)
                    .map(|_| {
                        let (a, b) = compliance.sample(&mut prng);
                        let x = &a * u + &b;
                        let y = plant.output(&x, n);
                        let x_hat =
                            DVector::from_fn(d, |i, _| x[i] + scale * prng.standard_normal());
                        let y_hat =
                            DVector::from_fn(m_out, |i, _| y[i] + scale * prng.standard_normal());
                        let g_hat = engine::estimate_gradient(&a, plant.c(), &y_hat, &x_hat, u, obj, n);
                        let g = engine::estimate_gradient(&a, plant.c(), &y, &x, u, obj, n);
                        (g_hat - g).norm_squared()
                    })
                    .collect();
                let (mean, se) = mean_and_se(&sq);
                if mean <= 0.0 {
                    (0.0, 0.0)
                } else {
                    let root = mean.sqrt();
                    (root, se / (2.0 * root))
                }
            })
            .collect();
        let (err, err_se) =
            per_state.into_iter().fold((0.0f64, 0.0f64), |acc, p| if p.0 > acc.0 { p } else { acc });
        let eps = NoiseSpec::gaussian_iso(scale, d)
            .l4_norm()
            .max(NoiseSpec::gaussian_iso(scale, m_out).l4_norm());
        points.push((eps, err, err_se));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let slope = fit_slope_through_origin(&xs, &ys);
    let b1 = points.iter().map(|(e, r, se)| (r + se) / e).fold(0.0, f64::max);
    let max_rel_residual = if slope > 0.0 {
        points.iter().map(|(e, r, _)| ((r - slope * e) / (slope * e)).abs()).fold(0.0, f64::max)
    } else {
        0.0
    };
    Ok(GradientErrorFit { b1, slope, points, max_rel_residual })
}

/// Fit of the one-step forcing factor `b2` at a measured operating point.
#[derive(Debug, Clone)]
pub struct ContractionFit {
    /// Fitted factor: `b2 * q_denominator` covers the worst measured one-step
    /// forcing plus one standard error (zero when even the worst is zero).
    pub b2: f64,
    /// `alpha^2 (xi + sqrt(xi)) + alpha epsilon_m` at the calibration constants.
    pub q_denominator: f64,
    /// Worst measured `E||u_next - u*||^2 - Upsilon ||u - u*||^2` over states.
    pub worst_q_hat: f64,
    pub worst_q_hat_se: f64,
    /// `||u - u*||` of the state with the worst forcing.
    pub worst_state_distance: f64,
    pub states_probed: usize,
}

fn check_calibration(algo: &AlgorithmConfig, constants: &TheoryConstants) -> Result<()> {
    if (algo.alpha - constants.alpha).abs() > 1e-15 * algo.alpha.abs().max(1.0)
        || (algo.eta - constants.eta).abs() > 1e-12
    {
        return Err(Error::InvalidConfig(
            "algorithm step size / regularization disagree with the calibration constants".into(),
        ));
    }
    Ok(())
}

/// Probe states for one-step diagnostics: the optimizer itself (where pure
/// forcing shows), far boundary pushes (where multiplicative noise is
/// largest), and random feasible points.
fn probe_cloud(
    u_star: &DVector<f64>,
    set: &ConstraintSet,
    states: usize,
    n: usize,
    rng: &mut RandomStream,
) -> Result<Vec<DVector<f64>>> {
    let d = set.dim();
    let reach = 4.0 * set.uniform_bound().max(1.0);
    let mut cloud = Vec::with_capacity(states);
    for j in 0..states {
        let state = if j == 0 {
            u_star.clone()
        } else if j % 2 == 1 {
            let dir = DVector::from_fn(d, |_, _| rng.standard_normal());
            let norm = dir.norm();
            if norm < 1e-12 {
                set.sample_feasible(rng, n)?
            } else {
                set.project(&(u_star + dir * (reach / norm)), n)?
            }
        } else {
            set.sample_feasible(rng, n)?
        };
        cloud.push(state);
    }
    Ok(cloud)
}

/// Measure the one-step forcing `E||u_next - u*||^2 - Upsilon ||u - u*||^2`
/// over a probe cloud and size `b2` so the forcing term covers the worst
/// state plus one standard error.
///
/// Runs the engine's own step at the configured operating point (recovery
/// mode included), so whatever error the real loop incurs — measurement,
/// recovery, compliance volatility — is what the factor absorbs. A zero
/// denominator with measurably positive forcing is rejected: it means the
/// declared noise levels claim an exact update that the measurement refutes.
pub fn fit_forcing_factor(
    world: &World,
    obj: &StageObjective,
    set: &ConstraintSet,
    algo: &AlgorithmConfig,
    constants: &TheoryConstants,
    n: usize,
    states: usize,
    draws: usize,
    solver_tol: f64,
    rng: &mut RandomStream,
) -> Result<ContractionFit> {
    check_calibration(algo, constants)?;
    if states == 0 || draws < 2 {
        return Err(Error::InvalidConfig("forcing fit needs states >= 1 and draws >= 2".into()));
    }
    let u_star = solve_optimal(obj, &world.compliance, &world.plant, set, n, solver_tol)?;
    let cloud = probe_cloud(&u_star, set, states, n, rng)?;
    let upsilon = constants.contraction_factor();
    let base = rng.split();
    let measured: Vec<(f64, f64, f64)> = cloud
        .par_iter()
        .enumerate()
        .map(|(j, state)| {
            let mut srng = base.substream(j as u64);
            let dist_sq = (state - &u_star).norm_squared();
            let sq: Vec<f64> = (0..draws)
                .map(|_| {
                    let log = engine::step(state, world, obj, set, algo, n, &mut srng)?;
                    Ok((log.u_next - &u_star).norm_squared())
                })
                .collect::<Result<Vec<f64>>>()?;
            let (mean, se) = mean_and_se(&sq);
            Ok((dist_sq, mean - upsilon * dist_sq, se))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut worst_idx = 0;
    let mut worst_val = f64::NEG_INFINITY;
    for (j, (_, q, se)) in measured.iter().enumerate() {
        if q + se > worst_val {
            worst_val = q + se;
            worst_idx = j;
        }
    }
    let (dist_sq, q_hat, q_se) = measured[worst_idx];
    let xi = constants.xi();
    let q_denominator = algo.alpha.powi(2) * (xi + xi.sqrt()) + algo.alpha * constants.epsilon_m;
    let b2 = if q_denominator > 0.0 {
        worst_val.max(0.0) / q_denominator
    } else if worst_val <= 1e-12 {
        0.0
    } else {
        return Err(Error::InvalidConfig(format!(
            "measured one-step forcing {worst_val:.3e} with a zero forcing denominator; \
             the declared noise levels (sigma_f = epsilon_m = 0) claim an exact update \
             that the measurement refutes"
        )));
    };
    Ok(ContractionFit {
        b2,
        q_denominator,
        worst_q_hat: q_hat,
        worst_q_hat_se: q_se,
        worst_state_distance: dist_sq.sqrt(),
        states_probed: states,
    })
}

/// One probed state of a contraction check.
#[derive(Debug, Clone)]
pub struct ContractionSample {
    /// `||u - u*||^2` of the probed state.
    pub state_distance_sq: f64,
    /// Monte-Carlo `E||u_next - u*||^2`.
    pub lhs_mean: f64,
    pub lhs_se: f64,
    /// `Upsilon ||u - u*||^2 + q_alpha`.
    pub rhs: f64,
}

impl ContractionSample {
    /// Bound margin; negative when the measured mean exceeds the bound.
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs_mean
    }

    /// Slack in units of the Monte-Carlo standard error; infinite when the
    /// measurement has no variance.
    pub fn normalized_slack(&self) -> f64 {
        if self.lhs_se > 0.0 {
            self.slack() / self.lhs_se
        } else if self.slack() >= 0.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Result of [`one_step_contraction_check`].
#[derive(Debug, Clone)]
pub struct ContractionCheck {
    pub samples: Vec<ContractionSample>,
    /// Smallest normalized slack over the probed states.
    pub min_normalized_slack: f64,
}

impl ContractionCheck {
    /// Whether every state satisfied the bound within `k_sigma` standard
    /// errors.
    pub fn holds(&self, k_sigma: f64) -> bool {
        self.min_normalized_slack >= -k_sigma
    }
}

/// Check the one-step mean-square contraction
/// `E||u_next - u*||^2 <= Upsilon ||u - u*||^2 + q_alpha` on a fresh probe
/// cloud, Monte-Carlo per state. Run it with an independent stream from the
/// one `b2` was fitted on, or the check is circular.
pub fn one_step_contraction_check(
    world: &World,
    obj: &StageObjective,
    set: &ConstraintSet,
    algo: &AlgorithmConfig,
    constants: &TheoryConstants,
    n: usize,
    states: usize,
    draws: usize,
    solver_tol: f64,
    rng: &mut RandomStream,
) -> Result<ContractionCheck> {
    check_calibration(algo, constants)?;
    if states == 0 || draws < 2 {
        return Err(Error::InvalidConfig(
            "contraction check needs states >= 1 and draws >= 2".into(),
        ));
    }
    let u_star = solve_optimal(obj, &world.compliance, &world.plant, set, n, solver_tol)?;
    let cloud = probe_cloud(&u_star, set, states, n, rng)?;
    let upsilon = constants.contraction_factor();
    let q = constants.forcing_term();
    let base = rng.split();
    let samples: Vec<ContractionSample> = cloud
        .par_iter()
        .enumerate()
        .map(|(j, state)| {
            let mut srng = base.substream(j as u64);
            let dist_sq = (state - &u_star).norm_squared();
            let sq: Vec<f64> = (0..draws)
                .map(|_| {
                    let log = engine::step(state, world, obj, set, algo, n, &mut srng)?;
                    Ok((log.u_next - &u_star).norm_squared())
                })
                .collect::<Result<Vec<f64>>>()?;
            let (lhs_mean, lhs_se) = mean_and_se(&sq);
            Ok(ContractionSample {
                state_distance_sq: dist_sq,
                lhs_mean,
                lhs_se,
                rhs: upsilon * dist_sq + q,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let min_normalized_slack =
        samples.iter().map(ContractionSample::normalized_slack).fold(f64::INFINITY, f64::min);
    Ok(ContractionCheck { samples, min_normalized_slack })
}

/// Sample budgets and probe settings for [`estimate_constants`].
#[derive(Debug, Clone)]
pub struct ConstantsOptions {
    /// Times the optimizer/noise are probed at; the first is also the fit time.
    pub times: Vec<usize>,
    pub curvature_pairs: usize,
    pub curvature_draws: usize,
    /// Synthetic noise scales for the gradient-error fit.
    pub gradient_error_scales: Vec<f64>,
    pub gradient_error_states: usize,
    pub gradient_error_draws: usize,
    pub forcing_states: usize,
    pub forcing_draws: usize,
    pub solver_tol: f64,
}

impl Default for ConstantsOptions {
    fn default() -> Self {
        Self {
            times: vec![0],
            curvature_pairs: 64,
            curvature_draws: 256,
            gradient_error_scales: vec![0.05, 0.1, 0.2, 0.4],
            gradient_error_states: 8,
            gradient_error_draws: 512,
            forcing_states: 8,
            forcing_draws: 4096,
            solver_tol: 1e-10,
        }
    }
}

/// Constants plus the estimator diagnostics they came from.
#[derive(Debug, Clone)]
pub struct EstimatedConstants {
    /// Ready-to-use bundle; estimated entries at their one-SE upper edges.
    pub constants: TheoryConstants,
    pub monotonicity: StrongMonotonicity,
    pub curvature: CurvatureEstimate,
    pub gradient_error: GradientErrorFit,
    pub forcing: ContractionFit,
}

/// Assemble [`TheoryConstants`] for one operating point: exact closed forms
/// where they exist (`mu_f`, `b_u`, `epsilon_m`, `sigma_delta`, `gamma_bar`
/// from `psi`), Monte-Carlo estimates at one-SE upper edges elsewhere.
///
/// `psi` is the per-step optimizer drift sequence; pass `&[]` for a static
/// problem.
pub fn estimate_constants(
    world: &World,
    obj: &StageObjective,
    set: &ConstraintSet,
    algo: &AlgorithmConfig,
    psi: &[f64],
    options: &ConstantsOptions,
    rng: &mut RandomStream,
) -> Result<EstimatedConstants> {
    algo.validate()?;
    if (algo.eta - obj.eta()).abs() > 1e-12 {
        return Err(Error::InvalidConfig(
            "algorithm regularization weight disagrees with the objective".into(),
        ));
    }
    if options.times.is_empty() {
        return Err(Error::InvalidConfig("constants estimation needs at least one time".into()));
    }
    let monotonicity = strong_monotonicity_constant(obj, &world.compliance, &world.plant)?;
    let mut curv_rng = rng.split();
    let curvature = estimate_curvature(
        obj,
        &world.compliance,
        &world.plant,
        set,
        &options.times,
        options.curvature_pairs,
        options.curvature_draws,
        options.solver_tol,
        &mut curv_rng,
    )?;
    let mut b1_rng = rng.split();
    let gradient_error = fit_gradient_error_factor(
        obj,
        &world.compliance,
        &world.plant,
        set,
        &options.gradient_error_scales,
        options.gradient_error_states,
        options.gradient_error_draws,
        options.times[0],
        &mut b1_rng,
    )?;
    let mut constants = TheoryConstants {
        alpha: algo.alpha,
        eta: obj.eta(),
        l_f: curvature.l_f + curvature.l_f_se,
        mu_f: monotonicity.value,
        sigma_f: curvature.sigma_f + curvature.sigma_f_se,
        b_u: set.uniform_bound(),
        epsilon_m: world.measurement.epsilon_m(),
        sigma_delta: world.sigma_delta()?,
        gamma_bar: psi.iter().copied().fold(0.0, f64::max),
        b1: gradient_error.b1,
        b2: 0.0,
    };
    let mut b2_rng = rng.split();
    let forcing = fit_forcing_factor(
        world,
        obj,
        set,
        algo,
        &constants,
        options.times[0],
        options.forcing_states,
        options.forcing_draws,
        options.solver_tol,
        &mut b2_rng,
    )?;
    constants.b2 = forcing.b2;
    Ok(EstimatedConstants { constants, monotonicity, curvature, gradient_error, forcing })
}
