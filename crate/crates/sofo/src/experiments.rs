//! Packaged experiments behind the command-line verbs.
//!
//! Each runner turns a validated [`ExperimentSpec`](crate::config::ExperimentSpec)
//! and an output directory into CSV files plus a manifest. Runs are
//! reproducible byte for byte: all randomness derives from the spec's seeds
//! through indexed substreams, parallel work is collected in index order, and
//! the writers in [`report`](crate::report) print floats exactly.
//!
//! One experiment is run per seed. With a single seed the files land directly
//! in the output directory; with several, each seed gets a `seed_<s>/`
//! subdirectory with its own manifest.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::analysis::{
    estimate_constants, one_step_contraction_check, solve_optimal, steady_state_bound,
    OptimalTracker,
};
use crate::config::{EstimationSection, ExperimentKind, ExperimentSpec, ProfilesConfig};
use crate::engine::{run_trajectory_with_sink, FnSink, OptimizerOracle, StepSink, TrajectoryStep};
use crate::error::{Error, Result};
use crate::grid::{
    run_opf_experiment, synthetic_profiles, AgentSpec, FeederCase, OpfSettings,
    SyntheticProfileSpec,
};
use crate::report::{
    write_contraction_csv, write_fit_csv, write_key_values, write_mse_csv, write_opf_table_csv,
    write_trace_csv, ContractionRow, Manifest, MseRow, OpfTableRow, SlopeFit, TraceRow,
    TrajectoryCsvSink,
};
use crate::rng::RandomStream;

/// Where one seed's results went and what they said.
#[derive(Debug)]
pub struct RunSummary {
    /// One directory per seed, each containing a verified manifest.
    pub out_dirs: Vec<PathBuf>,
    /// Human-readable result lines, in seed order.
    pub lines: Vec<String>,
}

/// The instance actually run: the matrices drawn from the seed and the start
/// point, recorded so a plot can be reproduced without re-running.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub seed: u64,
    pub c: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
    pub u0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_star: Option<Vec<f64>>,
}

pub const INSTANCE_FILE: &str = "instance.json";

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn write_instance(dir: &Path, record: &InstanceRecord) -> Result<()> {
    std::fs::write(dir.join(INSTANCE_FILE), serde_json::to_string_pretty(record)? + "\n")?;
    Ok(())
}

/// Run `spec` into `out_dir`, optionally on a worker pool of `threads`
/// threads. The thread count changes wall-clock time only, never results:
/// work items draw from indexed substreams and are aggregated in index order.
pub fn run_experiment(
    spec: &ExperimentSpec,
    out_dir: &Path,
    threads: Option<usize>,
) -> Result<RunSummary> {
    spec.validate()?;
    match threads {
        None => run_all_seeds(spec, out_dir),
        Some(t) => {
            if t == 0 {
                return Err(Error::InvalidConfig("thread count must be >= 1".into()));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
            pool.install(|| run_all_seeds(spec, out_dir))
        }
    }
}

fn run_all_seeds(spec: &ExperimentSpec, out_dir: &Path) -> Result<RunSummary> {
    std::fs::create_dir_all(out_dir)?;
    let mut summary = RunSummary { out_dirs: Vec::new(), lines: Vec::new() };
    for &seed in &spec.seeds {
        let dir = if spec.seeds.len() == 1 {
            out_dir.to_path_buf()
        } else {
            let sub = out_dir.join(format!("seed_{seed}"));
            std::fs::create_dir_all(&sub)?;
            sub
        };
        let (files, mut lines) = match spec.kind {
            ExperimentKind::Tracking => run_tracking(spec, &dir, seed)?,
            ExperimentKind::MseSweep => run_mse_sweep(spec, &dir, seed)?,
            ExperimentKind::OpfCompare => run_opf_compare(spec, &dir, seed)?,
            ExperimentKind::ConstantsReport => run_constants_report(spec, &dir, seed)?,
            ExperimentKind::ContractionTest => run_contraction_test(spec, &dir, seed)?,
        };
        let manifest = Manifest::build(spec, &dir, &files)?;
        manifest.write(&dir)?;
        summary.out_dirs.push(dir);
        summary.lines.append(&mut lines);
    }
    Ok(summary)
}

/// Fixed substream indices, so adding a consumer never shifts another's draws.
mod stream {
    /// Instance realization (drawn matrices, profiles).
    pub const INSTANCE: u64 = 0;
    /// The trajectory / estimation stream.
    pub const RUN: u64 = 1;
    /// An independent stream for checks that must not share draws with `RUN`.
    pub const CHECK: u64 = 2;
    /// Base offset for per-grid-point streams.
    pub const GRID: u64 = 100;
}

type SeedOutput = (Vec<String>, Vec<String>);

// ---------------------------------------------------------------------------
// Tracking

/// Accumulates the tracking summary while streaming rows to CSV.
struct TrackingSink {
    csv: TrajectoryCsvSink,
    burn: usize,
    sum_sq_error: f64,
    samples: usize,
}

impl StepSink for TrackingSink {
    fn record(&mut self, row: &TrajectoryStep) -> Result<()> {
        self.csv.record(row)?;
        if row.n >= self.burn {
            let err = row.tracking_sq_error.ok_or_else(|| {
                Error::InvalidConfig("tracking run expects an optimizer oracle".into())
            })?;
            self.sum_sq_error += err;
            self.samples += 1;
        }
        Ok(())
    }
}

/// One closed-loop run against the instantaneous-optimizer oracle. Writes the
/// full trajectory (setpoint, optimizer, squared error, stage cost per step),
/// the realized instance, and a scalar summary.
fn run_tracking(spec: &ExperimentSpec, dir: &Path, seed: u64) -> Result<SeedOutput> {
    let rng = RandomStream::new(seed);
    let realized = spec.model.as_ref().unwrap().realize(&mut rng.substream(stream::INSTANCE))?;
    let obj = spec.objective.as_ref().unwrap().build()?;
    let set = spec.set.as_ref().unwrap().build()?;
    let algo = spec.algorithm.as_ref().unwrap().build()?;

    let u0 = set.project(&DVector::zeros(set.dim()), 0)?;
    let mut oracle = OptimalTracker::new(
        &obj,
        &realized.world.compliance,
        &realized.world.plant,
        &set,
        OptimalTracker::DEFAULT_TOL,
    );
    let mut sink = TrackingSink {
        csv: TrajectoryCsvSink::create(&dir.join("trajectory.csv"), set.dim(), true)?,
        burn: algo.horizon / 2,
        sum_sq_error: 0.0,
        samples: 0,
    };
    let u_final = run_trajectory_with_sink(
        &u0,
        &realized.world,
        &obj,
        &set,
        &algo,
        &mut rng.substream(stream::RUN),
        Some(&mut oracle),
        &mut sink,
    )?;
    let final_sq_error = (&u_final - oracle.optimal_at(algo.horizon)?).norm_squared();
    let rows = sink.csv.finish()?;
    let mean_sq_error =
        if sink.samples > 0 { sink.sum_sq_error / sink.samples as f64 } else { f64::NAN };

    write_instance(
        dir,
        &InstanceRecord {
            seed,
            c: matrix_rows(&realized.c),
            d: matrix_rows(&realized.d),
            u0: u0.iter().copied().collect(),
            u_star: None,
        },
    )?;
    write_key_values(
        &dir.join("summary.csv"),
        &[
            ("steps", rows as f64),
            ("mean_tracking_sq_error_second_half", mean_sq_error),
            ("final_tracking_sq_error", final_sq_error),
        ],
    )?;
    let line = format!(
        "seed {seed}: tracked {rows} steps; mean squared tracking error over the \
         second half {mean_sq_error:.6e}, final {final_sq_error:.6e}"
    );
    Ok((
        vec!["trajectory.csv".into(), INSTANCE_FILE.into(), "summary.csv".into()],
        vec![line],
    ))
}

// ---------------------------------------------------------------------------
// Step-size sweep

/// Fit `ln mse = slope * ln alpha + intercept` over the stable points.
fn fit_loglog(rows: &[MseRow]) -> SlopeFit {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.stable && r.mse.is_finite() && r.mse > 0.0)
        .map(|r| (r.alpha.ln(), r.mse.ln()))
        .collect();
    if pts.len() < 2 {
        return SlopeFit { slope: f64::NAN, intercept: f64::NAN, points_used: pts.len() };
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    SlopeFit { slope, intercept: my - slope * mx, points_used: pts.len() }
}

/// Time-averaged squared distance to the fixed optimizer as a function of the
/// step size, under common random numbers: every step size replays the same
/// compliance and noise draws, so the curve is smooth in `alpha`.
///
/// Starts at the optimizer itself and discards `burn_fraction` of the run, so
/// the average measures the stationary wander, not the approach. A point is
/// marked unstable when some iterate strays beyond half of the worst-case
/// distance the feasible set allows; unstable points stay in the table but
/// are excluded from the slope fit.
fn run_mse_sweep(spec: &ExperimentSpec, dir: &Path, seed: u64) -> Result<SeedOutput> {
    let rng = RandomStream::new(seed);
    let realized = spec.model.as_ref().unwrap().realize(&mut rng.substream(stream::INSTANCE))?;
    let obj = spec.objective.as_ref().unwrap().build()?;
    let set = spec.set.as_ref().unwrap().build()?;
    let base = spec.algorithm.as_ref().unwrap();
    let sweep = spec.sweep.as_ref().unwrap();

    let world = &realized.world;
    let u_star =
        solve_optimal(&obj, &world.compliance, &world.plant, &set, 0, OptimalTracker::DEFAULT_TOL)?;
    let horizon = sweep.horizon;
    let burn = (sweep.burn_fraction * horizon as f64).floor() as usize;
    let confinement = 0.5 * (set.uniform_bound() + u_star.norm());

    let rows: Result<Vec<MseRow>> = sweep
        .alphas
        .par_iter()
        .map(|&alpha| {
            let mut algo = base.build()?;
            algo.alpha = alpha;
            algo.horizon = horizon;
            // Same substream for every alpha: common random numbers.
            let mut run_rng = rng.substream(stream::RUN);
            let mut sum = 0.0;
            let mut count = 0usize;
            let mut max_dev_sq = 0.0f64;
            let mut accumulate = |u: &DVector<f64>| {
                let err = (u - &u_star).norm_squared();
                sum += err;
                count += 1;
                max_dev_sq = max_dev_sq.max(err);
            };
            let mut sink = FnSink(|row: &TrajectoryStep| {
                if row.n >= burn {
                    accumulate(&row.u);
                }
                Ok(())
            });
            let u_final = run_trajectory_with_sink(
                &u_star, world, &obj, &set, &algo, &mut run_rng, None, &mut sink,
            )?;
            drop(sink);
            accumulate(&u_final);
            let mse = sum / count as f64;
            let stable = mse.is_finite() && max_dev_sq.sqrt() <= confinement;
            Ok(MseRow { alpha, mse, tau_linear: alpha, tau_quadratic: alpha * alpha, stable })
        })
        .collect();
    let rows = rows?;
    let fit = fit_loglog(&rows);

    write_mse_csv(&dir.join("mse.csv"), &rows)?;
    write_fit_csv(&dir.join("fit.csv"), &fit)?;
    write_instance(
        dir,
        &InstanceRecord {
            seed,
            c: matrix_rows(&realized.c),
            d: matrix_rows(&realized.d),
            u0: u_star.iter().copied().collect(),
            u_star: Some(u_star.iter().copied().collect()),
        },
    )?;
    let unstable = rows.iter().filter(|r| !r.stable).count();
    let line = format!(
        "seed {seed}: swept {} step sizes ({unstable} unstable); log-log slope {:.4} \
         through {} points",
        rows.len(),
        fit.slope,
        fit.points_used
    );
    Ok((vec!["mse.csv".into(), "fit.csv".into(), INSTANCE_FILE.into()], vec![line]))
}

// ---------------------------------------------------------------------------
// Feeder comparison

/// Compliance-recovering vs full-compliance control over a grid of compliance
/// distributions on one feeder day. One table row per (distribution,
/// algorithm) and one voltage-trace file per distribution, named by its grid
/// index in row order.
fn run_opf_compare(spec: &ExperimentSpec, dir: &Path, seed: u64) -> Result<SeedOutput> {
    let opf = spec.opf.as_ref().unwrap();
    let algo = spec.algorithm.as_ref().unwrap().build()?;
    let agents = match &opf.agents {
        Some(list) => list
            .iter()
            .map(|a| AgentSpec { node: a.node, s_max_kva: a.s_max_kva })
            .collect(),
        None => crate::grid::default_agents(),
    };
    let case = FeederCase::baran_wu_33(agents)?;
    let rng = RandomStream::new(seed);
    let profiles = match &opf.profiles {
        ProfilesConfig::Synthetic { pv_peak_kw, load_scale, cloud_intensity, day_start_hour } => {
            synthetic_profiles(
                &case,
                opf.steps,
                opf.step_seconds,
                &SyntheticProfileSpec {
                    pv_peak_kw: *pv_peak_kw,
                    load_scale: *load_scale,
                    cloud_intensity: *cloud_intensity,
                    day_start_hour: *day_start_hour,
                },
                &mut rng.substream(stream::INSTANCE),
            )?
        }
        ProfilesConfig::Files { loads, pv } => crate::grid::load_profiles(
            Path::new(loads),
            Path::new(pv),
            &case,
            opf.step_seconds,
        )?,
    };
    let settings = OpfSettings {
        kappa_p: opf.kappa_p,
        kappa_q: opf.kappa_q,
        kappa_y: opf.kappa_y,
        trace_agent: opf.trace_agent,
        pf_tol: opf.pf_tol,
    };

    let mut table: Vec<OpfTableRow> = Vec::with_capacity(2 * opf.phi_grid.len());
    let mut files: Vec<String> = Vec::new();
    let mut lines: Vec<String> = Vec::new();
    for (k, phi_cfg) in opf.phi_grid.iter().enumerate() {
        let phi = phi_cfg.build()?;
        // Per-distribution stream: grid entries are independent experiments.
        let mut grid_rng = rng.substream(stream::GRID + k as u64);
        let cmp = run_opf_experiment(
            &case,
            &profiles,
            &phi,
            &algo,
            &settings,
            spec.replications,
            &mut grid_rng,
        )?;
        let (support_lo, support_hi) = phi_cfg.support();
        for (name, metrics) in [("sofo", &cmp.sofo), ("dofo", &cmp.dofo)] {
            table.push(OpfTableRow {
                family: phi_cfg.family(),
                support_lo,
                support_hi,
                algorithm: name.to_string(),
                pc_kw2: metrics.pc_kw2,
                vd_pu2: metrics.vd_pu2,
                band_violation_fraction: metrics.band_violation_fraction,
                inverter_violation_steps: metrics.inverter_violation_steps,
                replications_used: cmp.replications_used,
                aborted_replications: cmp.aborted.len(),
                baseline_vd_pu2: cmp.baseline_vd_pu2,
                baseline_band_violation_fraction: cmp.baseline_band_violation_fraction,
            });
        }
        let trace_rows: Vec<TraceRow> = (0..cmp.trace.baseline.len())
            .map(|n| TraceRow {
                n,
                baseline: cmp.trace.baseline[n],
                sofo: cmp.trace.sofo[n],
                dofo: cmp.trace.dofo[n],
            })
            .collect();
        let trace_name = format!("trace_{k:02}.csv");
        write_trace_csv(&dir.join(&trace_name), &trace_rows)?;
        files.push(trace_name);
        lines.push(format!(
            "seed {seed}: {} on [{}, {}]: curtailment (kW^2) {:.4e} vs {:.4e}, voltage \
             deviation (pu^2) {:.4e} vs {:.4e} (recovering vs full-compliance, {} of {} \
             replications)",
            phi_cfg.family(),
            support_lo,
            support_hi,
            cmp.sofo.pc_kw2,
            cmp.dofo.pc_kw2,
            cmp.sofo.vd_pu2,
            cmp.dofo.vd_pu2,
            cmp.replications_used,
            spec.replications,
        ));
    }
    write_opf_table_csv(&dir.join("table.csv"), &table)?;
    files.insert(0, "table.csv".into());
    Ok((files, lines))
}

// ---------------------------------------------------------------------------
// Constants report

struct BuiltInstance {
    realized: crate::config::RealizedModel,
    obj: crate::objective::StageObjective,
    set: crate::constraint::ConstraintSet,
    algo: crate::engine::AlgorithmConfig,
    estimation: EstimationSection,
}

fn build_instance(spec: &ExperimentSpec, rng: &RandomStream) -> Result<BuiltInstance> {
    Ok(BuiltInstance {
        realized: spec.model.as_ref().unwrap().realize(&mut rng.substream(stream::INSTANCE))?,
        obj: spec.objective.as_ref().unwrap().build()?,
        set: spec.set.as_ref().unwrap().build()?,
        algo: spec.algorithm.as_ref().unwrap().build()?,
        estimation: spec.estimation.clone().unwrap_or_default(),
    })
}

fn constants_key_values(
    est: &crate::analysis::EstimatedConstants,
) -> Vec<(&'static str, f64)> {
    let mut kv = est.constants.report();
    kv.push(("l_f_se", est.curvature.l_f_se));
    kv.push(("sigma_f_se", est.curvature.sigma_f_se));
    kv.push(("b1_fit_slope", est.gradient_error.slope));
    kv.push(("b2_worst_q_se", est.forcing.worst_q_hat_se));
    if est.constants.steady_state_admissible() {
        let bound = steady_state_bound(&est.constants).expect("admissible step size");
        kv.push(("steady_state_eps_a", bound.eps_a));
        kv.push(("steady_state_eps_b", bound.eps_b));
        kv.push(("steady_state_eps_c", bound.eps_c));
        kv.push(("steady_state_total", bound.total));
    }
    kv
}

/// Estimate every constant in the tracking bounds for the configured
/// instance and write them as a flat `key,value` file.
fn run_constants_report(spec: &ExperimentSpec, dir: &Path, seed: u64) -> Result<SeedOutput> {
    let rng = RandomStream::new(seed);
    let inst = build_instance(spec, &rng)?;
    let est = estimate_constants(
        &inst.realized.world,
        &inst.obj,
        &inst.set,
        &inst.algo,
        &[],
        &inst.estimation.to_options(),
        &mut rng.substream(stream::RUN),
    )?;
    let kv = constants_key_values(&est);
    write_key_values(&dir.join("constants.csv"), &kv)?;
    let start = inst.set.project(&DVector::zeros(inst.set.dim()), 0)?;
    write_instance(
        dir,
        &InstanceRecord {
            seed,
            c: matrix_rows(&inst.realized.c),
            d: matrix_rows(&inst.realized.d),
            u0: start.iter().copied().collect(),
            u_star: None,
        },
    )?;
    let line = if est.constants.steady_state_admissible() {
        let total = kv.iter().find(|(k, _)| *k == "steady_state_total").unwrap().1;
        format!(
            "seed {seed}: contraction factor {:.6}, steady-state mean-square bound {:.6e}",
            est.constants.contraction_factor(),
            total
        )
    } else {
        format!(
            "seed {seed}: contraction factor {:.6}; step size too large for the \
             steady-state certificate",
            est.constants.contraction_factor()
        )
    };
    Ok((vec!["constants.csv".into(), INSTANCE_FILE.into()], vec![line]))
}

// ---------------------------------------------------------------------------
// Contraction test

/// Estimate the constants, then probe the one-step mean-square contraction on
/// a fresh state cloud with an independent stream. Writes the per-state
/// probes, the constants used, and a scalar verdict.
fn run_contraction_test(spec: &ExperimentSpec, dir: &Path, seed: u64) -> Result<SeedOutput> {
    let rng = RandomStream::new(seed);
    let inst = build_instance(spec, &rng)?;
    let est = estimate_constants(
        &inst.realized.world,
        &inst.obj,
        &inst.set,
        &inst.algo,
        &[],
        &inst.estimation.to_options(),
        &mut rng.substream(stream::RUN),
    )?;
    let check = one_step_contraction_check(
        &inst.realized.world,
        &inst.obj,
        &inst.set,
        &inst.algo,
        &est.constants,
        0,
        inst.estimation.check_states,
        inst.estimation.check_draws,
        inst.estimation.solver_tol,
        &mut rng.substream(stream::CHECK),
    )?;

    let rows: Vec<ContractionRow> = check
        .samples
        .iter()
        .map(|s| {
            let slack = s.slack();
            let normalized_slack = if s.lhs_se > 0.0 {
                slack / s.lhs_se
            } else if slack == 0.0 {
                0.0
            } else {
                slack.signum() * f64::INFINITY
            };
            ContractionRow {
                state_distance_sq: s.state_distance_sq,
                lhs_mean: s.lhs_mean,
                lhs_se: s.lhs_se,
                rhs: s.rhs,
                slack,
                normalized_slack,
            }
        })
        .collect();
    write_contraction_csv(&dir.join("contraction.csv"), &rows)?;
    write_key_values(&dir.join("constants.csv"), &constants_key_values(&est))?;
    write_key_values(
        &dir.join("summary.csv"),
        &[
            ("states", rows.len() as f64),
            ("draws_per_state", inst.estimation.check_draws as f64),
            ("min_normalized_slack", check.min_normalized_slack),
            ("holds_3_sigma", if check.holds(3.0) { 1.0 } else { 0.0 }),
        ],
    )?;
    let start = inst.set.project(&DVector::zeros(inst.set.dim()), 0)?;
    write_instance(
        dir,
        &InstanceRecord {
            seed,
            c: matrix_rows(&inst.realized.c),
            d: matrix_rows(&inst.realized.d),
            u0: start.iter().copied().collect(),
            u_star: None,
        },
    )?;
    let line = format!(
        "seed {seed}: one-step contraction over {} states x {} draws: minimum \
         normalized slack {:.3} ({})",
        rows.len(),
        inst.estimation.check_draws,
        check.min_normalized_slack,
        if check.holds(3.0) { "holds at 3 sigma" } else { "VIOLATED at 3 sigma" }
    );
    Ok((
        vec![
            "contraction.csv".into(),
            "constants.csv".into(),
            "summary.csv".into(),
            INSTANCE_FILE.into(),
        ],
        vec![line],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{
        default_spec, AlgorithmSection, DisturbanceConfig, RecoveryConfig, SweepSection,
        VariantConfig,
    };
    use crate::report::{
        read_contraction_csv, read_fit_csv, read_key_values, read_mse_csv, read_opf_table_csv,
        read_trace_csv, read_trajectory_csv,
    };

    /// The default tracking spec shrunk to test size.
    fn small_tracking_spec() -> ExperimentSpec {
        let mut spec = default_spec(ExperimentKind::Tracking);
        let model = spec.model.as_mut().unwrap();
        if let DisturbanceConfig::Waveform { segments } = &mut model.disturbance {
            for s in segments.iter_mut() {
                s.len = 200;
            }
        }
        spec.algorithm.as_mut().unwrap().horizon = 600;
        spec
    }

    fn small_sweep_spec() -> ExperimentSpec {
        let mut spec = default_spec(ExperimentKind::MseSweep);
        spec.sweep = Some(SweepSection {
            alphas: vec![1e-3, 3e-3, 1e-2, 3e-2],
            horizon: 4000,
            burn_fraction: 0.5,
        });
        spec
    }

    fn small_opf_spec() -> ExperimentSpec {
        let mut spec = default_spec(ExperimentKind::OpfCompare);
        spec.replications = 2;
        let opf = spec.opf.as_mut().unwrap();
        opf.steps = 30;
        opf.step_seconds = 600.0;
        opf.phi_grid = vec![
            crate::config::PhiConfig::Uniform { lo: 0.0, hi: 1.0 },
            crate::config::PhiConfig::Beta { alpha: 4.0, beta: 2.0, lo: -0.5, hi: 1.0 },
        ];
        spec.algorithm = Some(AlgorithmSection {
            alpha: 5e-2,
            eta: 1e-3,
            variant: VariantConfig::Sofo,
            horizon: 30,
            recovery: RecoveryConfig::Exact,
        });
        spec
    }

    fn small_estimation() -> EstimationSection {
        EstimationSection {
            curvature_pairs: 25,
            curvature_draws: 400,
            gradient_error_states: 4,
            gradient_error_draws: 96,
            forcing_states: 4,
            forcing_draws: 512,
            check_states: 4,
            check_draws: 2000,
            ..EstimationSection::default()
        }
    }

    #[test]
    fn tracking_run_writes_trajectory_instance_and_summary() {
        let dir = tempfile::tempdir().unwrap();
        let spec = small_tracking_spec();
        let summary = run_experiment(&spec, dir.path(), None).unwrap();
        assert_eq!(summary.out_dirs, vec![dir.path().to_path_buf()]);

        let table = read_trajectory_csv(&dir.path().join("trajectory.csv")).unwrap();
        assert_eq!(table.rows.len(), 600);
        assert!(table.with_oracle);
        assert!(table.rows.iter().all(|r| r.u.iter().all(|v| v.is_finite())));

        let kv = read_key_values(&dir.path().join("summary.csv")).unwrap();
        let mean = kv.iter().find(|(k, _)| k == "mean_tracking_sq_error_second_half").unwrap().1;
        assert!(mean.is_finite() && mean >= 0.0);

        let manifest = Manifest::read(dir.path()).unwrap();
        manifest.verify(dir.path()).unwrap();
        assert_eq!(manifest.kind, "tracking");
        assert_eq!(manifest.outputs.len(), 3);
    }

    #[test]
    fn tracking_reruns_are_byte_identical() {
        let spec = small_tracking_spec();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run_experiment(&spec, a.path(), None).unwrap();
        run_experiment(&spec, b.path(), Some(2)).unwrap();
        for file in ["trajectory.csv", "instance.json", "summary.csv", "manifest.json"] {
            assert_eq!(
                std::fs::read(a.path().join(file)).unwrap(),
                std::fs::read(b.path().join(file)).unwrap(),
                "{file} differs between reruns"
            );
        }
    }

    #[test]
    fn sweep_error_grows_with_step_size_and_fit_uses_stable_points() {
        let dir = tempfile::tempdir().unwrap();
        let spec = small_sweep_spec();
        run_experiment(&spec, dir.path(), None).unwrap();

        let rows = read_mse_csv(&dir.path().join("mse.csv")).unwrap();
        assert_eq!(rows.len(), 4);
        for r in &rows {
            assert_eq!(r.tau_linear, r.alpha);
            assert_eq!(r.tau_quadratic, r.alpha * r.alpha);
            assert!(r.mse.is_finite() && r.mse > 0.0);
        }
        // Stationary wander must grow with the step size across the sweep.
        let stable: Vec<&MseRow> = rows.iter().filter(|r| r.stable).collect();
        assert!(stable.len() >= 2, "sweep produced too few stable points");
        assert!(
            stable.last().unwrap().mse > stable.first().unwrap().mse,
            "mse did not grow with alpha"
        );

        let fit = read_fit_csv(&dir.path().join("fit.csv")).unwrap();
        assert_eq!(fit.points_used, stable.len());
        assert!(fit.slope.is_finite() && fit.slope > 0.0, "slope {}", fit.slope);
    }

    #[test]
    fn sweep_starts_at_the_optimizer_and_stays_near_it_for_small_steps() {
        let dir = tempfile::tempdir().unwrap();
        let spec = small_sweep_spec();
        run_experiment(&spec, dir.path(), None).unwrap();
        let rows = read_mse_csv(&dir.path().join("mse.csv")).unwrap();
        // At alpha = 1e-3 the iterate wanders O(alpha) around the optimizer;
        // anything near the set diameter would mean the start point was wrong.
        assert!(rows[0].mse < 1.0, "mse at the smallest step is {}", rows[0].mse);
        assert!(rows[0].stable);
    }

    #[test]
    fn opf_compare_writes_long_table_and_traces() {
        let dir = tempfile::tempdir().unwrap();
        let spec = small_opf_spec();
        run_experiment(&spec, dir.path(), None).unwrap();

        let table = read_opf_table_csv(&dir.path().join("table.csv")).unwrap();
        assert_eq!(table.len(), 4, "two distributions x two algorithms");
        assert_eq!(table[0].algorithm, "sofo");
        assert_eq!(table[1].algorithm, "dofo");
        assert_eq!(table[2].family, "beta(4,2)");
        for row in &table {
            assert!(row.pc_kw2.is_finite() && row.pc_kw2 >= 0.0);
            assert!(row.vd_pu2.is_finite() && row.vd_pu2 >= 0.0);
            assert_eq!(row.replications_used, 2);
        }
        for k in 0..2 {
            let trace = read_trace_csv(&dir.path().join(format!("trace_{k:02}.csv"))).unwrap();
            assert_eq!(trace.len(), 30);
            assert!(trace.iter().all(|t| t.baseline > 0.8 && t.baseline < 1.2));
        }
        Manifest::read(dir.path()).unwrap().verify(dir.path()).unwrap();
    }

    #[test]
    fn constants_report_covers_every_published_key() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = default_spec(ExperimentKind::ConstantsReport);
        spec.estimation = Some(small_estimation());
        run_experiment(&spec, dir.path(), None).unwrap();

        let kv = read_key_values(&dir.path().join("constants.csv")).unwrap();
        for key in [
            "alpha", "eta", "l_f", "mu_f", "sigma_f", "b_u", "epsilon_m", "sigma_delta",
            "gamma_bar", "b1", "b2", "upsilon_alpha", "q_alpha", "xi", "steady_state_b",
            "l_f_se", "sigma_f_se",
        ] {
            assert!(kv.iter().any(|(k, _)| k == key), "missing key {key}");
        }
        let get = |key: &str| kv.iter().find(|(k, _)| k == key).unwrap().1;
        assert!(get("mu_f") > 0.0);
        assert!(get("l_f") >= get("mu_f"));
    }

    #[test]
    fn contraction_test_reports_per_state_slack() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = default_spec(ExperimentKind::ContractionTest);
        spec.estimation = Some(small_estimation());
        run_experiment(&spec, dir.path(), None).unwrap();

        let rows = read_contraction_csv(&dir.path().join("contraction.csv")).unwrap();
        assert_eq!(rows.len(), 4);
        for r in &rows {
            assert!(r.lhs_mean >= 0.0 && r.lhs_se >= 0.0);
            assert_eq!(r.slack, r.rhs - r.lhs_mean);
        }
        let kv = read_key_values(&dir.path().join("summary.csv")).unwrap();
        let min_slack = kv.iter().find(|(k, _)| k == "min_normalized_slack").unwrap().1;
        assert_eq!(
            min_slack,
            rows.iter().map(|r| r.normalized_slack).fold(f64::INFINITY, f64::min)
        );
    }

    #[test]
    fn multiple_seeds_get_their_own_directories_and_manifests() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = default_spec(ExperimentKind::ConstantsReport);
        spec.estimation = Some(small_estimation());
        spec.seeds = vec![11, 12];
        let summary = run_experiment(&spec, dir.path(), None).unwrap();
        assert_eq!(summary.out_dirs.len(), 2);
        for seed in [11u64, 12] {
            let sub = dir.path().join(format!("seed_{seed}"));
            Manifest::read(&sub).unwrap().verify(&sub).unwrap();
            let text = std::fs::read_to_string(sub.join(INSTANCE_FILE)).unwrap();
            let record: InstanceRecord = serde_json::from_str(&text).unwrap();
            assert_eq!(record.seed, seed);
        }
        // Different seeds draw different estimation randomness.
        let a = std::fs::read(dir.path().join("seed_11/constants.csv")).unwrap();
        let b = std::fs::read(dir.path().join("seed_12/constants.csv")).unwrap();
        assert_ne!(a, b);
    }
}
