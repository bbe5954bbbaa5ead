//! Voltage-regulation experiment on the radial feeder: both feedback
//! variants drive inverter setpoints against the nonlinear power flow, with
//! partially compliant real-power commands, and are scored on curtailment
//! and voltage deviation under a paired noise design.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::constraint::{CapSchedule, ConstraintSet};
use crate::engine::{estimate_gradient, recover_a, AlgorithmConfig, RecoveryMode};
use crate::error::{Error, Result};
use crate::model::PhiDistribution;
use crate::objective::{QuadraticForm, StageObjective};
use crate::rng::RandomStream;

use super::feeder::FeederCase;
use super::lindistflow::{build_lindistflow, LinDistFlowModel};
use super::power_flow::solve_power_flow;
use super::profiles::ProfileSet;

/// Voltage band reported on (never enforced): flag fraction of samples
/// outside `[0.95, 1.05]` pu.
pub const VOLTAGE_BAND: (f64, f64) = (0.95, 1.05);

/// Apparent-power slack when flagging inverter limit violations, pu.
const INVERTER_FLAG_TOL: f64 = 1e-9;

/// Objective weights and bookkeeping knobs for the feeder experiment.
#[derive(Debug, Clone)]
pub struct OpfSettings {
    /// Weight on real-power curtailment `(x_P - P_avail)^2`.
    pub kappa_p: f64,
    /// Weight on reactive usage `x_Q^2`.
    pub kappa_q: f64,
    /// Weight on voltage deviation `(y - 1)^2`.
    pub kappa_y: f64,
    /// Agent index (0-based) whose voltage trace is recorded.
    pub trace_agent: usize,
    /// Power-flow convergence tolerance.
    pub pf_tol: f64,
}

impl Default for OpfSettings {
    fn default() -> Self {
        OpfSettings { kappa_p: 4.0, kappa_q: 1.0, kappa_y: 8.0, trace_agent: 3, pf_tol: 1e-8 }
    }
}

/// Averaged scores for one variant over all surviving replications.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct OpfMetrics {
    /// Mean squared curtailment per (replication, step, agent), kW^2.
    pub pc_kw2: f64,
    /// Mean squared voltage deviation from 1 pu per (replication, step, agent).
    pub vd_pu2: f64,
    /// Fraction of (replication, step, agent) samples outside [`VOLTAGE_BAND`].
    pub band_violation_fraction: f64,
    /// Total steps (summed over replications) where any implemented setpoint
    /// exceeded its inverter's apparent-power rating.
    pub inverter_violation_steps: usize,
}

/// Per-step voltage magnitudes at one agent bus, from the first surviving
/// replication.
#[derive(Debug, Clone)]
pub struct OpfTrace {
    /// External (1-based) bus id of the traced agent.
    pub agent_node: usize,
    /// Voltages under full injection of the available power.
    pub baseline: Vec<f64>,
    pub sofo: Vec<f64>,
    pub dofo: Vec<f64>,
}

/// Everything one experiment produces.
#[derive(Debug, Clone)]
pub struct OpfComparison {
    pub sofo: OpfMetrics,
    pub dofo: OpfMetrics,
    /// Voltage deviation score of the uncontrolled baseline.
    pub baseline_vd_pu2: f64,
    pub baseline_band_violation_fraction: f64,
    pub trace: OpfTrace,
    /// Replications that survived; metrics average over exactly these.
    pub replications_used: usize,
    /// `(replication index, reason)` for runs dropped mid-way, e.g. a
    /// diverged power flow.
    pub aborted: Vec<(usize, String)>,
}

/// Running sums behind [`OpfMetrics`]; one (step, agent) pair is one sample.
#[derive(Debug, Clone, Copy, Default)]
struct MetricAccumulator {
    pc_sum_kw2: f64,
    vd_sum_pu2: f64,
    band_hits: usize,
    samples: usize,
    inverter_violation_steps: usize,
}

impl MetricAccumulator {
    /// Fold in one step's implemented setpoints and measured voltages (pu).
    fn add_step(
        &mut self,
        x_p: &[f64],
        p_avail: &[f64],
        x_q: &[f64],
        y: &[f64],
        s_max: &[f64],
        s_base_kw: f64,
    ) {
        let mut violated = false;
        for i in 0..x_p.len() {
            let curt_kw = (x_p[i] - p_avail[i]) * s_base_kw;
            self.pc_sum_kw2 += curt_kw * curt_kw;
            let dv = y[i] - 1.0;
            self.vd_sum_pu2 += dv * dv;
            if y[i] < VOLTAGE_BAND.0 || y[i] > VOLTAGE_BAND.1 {
                self.band_hits += 1;
            }
            if x_p[i].hypot(x_q[i]) > s_max[i] + INVERTER_FLAG_TOL {
                violated = true;
            }
            self.samples += 1;
        }
        if violated {
            self.inverter_violation_steps += 1;
        }
    }

    fn merge(&mut self, other: &MetricAccumulator) {
        self.pc_sum_kw2 += other.pc_sum_kw2;
        self.vd_sum_pu2 += other.vd_sum_pu2;
        self.band_hits += other.band_hits;
        self.samples += other.samples;
        self.inverter_violation_steps += other.inverter_violation_steps;
    }

    fn finish(&self) -> OpfMetrics {
        let n = self.samples.max(1) as f64;
        OpfMetrics {
            pc_kw2: self.pc_sum_kw2 / n,
            vd_pu2: self.vd_sum_pu2 / n,
            band_violation_fraction: self.band_hits as f64 / n,
            inverter_violation_steps: self.inverter_violation_steps,
        }
    }
}

/// Precomputed per-step boundary data shared by every replication.
struct Stage {
    /// Net injections from uncontrollable loads (pu, generation positive).
    p_inj_load: Vec<DVector<f64>>,
    q_inj_load: Vec<DVector<f64>>,
    /// Available real power per agent, pu.
    p_avail: Vec<Vec<f64>>,
    s_max: Vec<f64>,
    agent_nodes: Vec<usize>,
    s_base_kw: f64,
}

struct VariantOutcome {
    acc: MetricAccumulator,
    trace_y: Vec<f64>,
}

/// One feedback loop against the nonlinear flow. `phi_draws` is the
/// realized compliance per (step, agent); both variants of a replication see
/// the same draws and the same start point, so their difference is purely
/// the recovery rule.
#[allow(clippy::too_many_arguments)]
fn run_variant(
    case: &FeederCase,
    stage: &Stage,
    c: &DMatrix<f64>,
    obj: &StageObjective,
    set: &ConstraintSet,
    alpha: f64,
    recovery: RecoveryMode,
    mean_diag: &DVector<f64>,
    phi_draws: &DMatrix<f64>,
    u0: &DVector<f64>,
    settings: &OpfSettings,
) -> std::result::Result<VariantOutcome, String> {
    let a = case.n_agents();
    let steps = phi_draws.nrows();
    let mut acc = MetricAccumulator::default();
    let mut trace_y = Vec::with_capacity(steps);
    let mut u = u0.clone();
    let mut x_hat = DVector::zeros(2 * a);
    let mut sampled = DMatrix::identity(2 * a, 2 * a);
    for n in 0..steps {
        // Implement: agents scale the real command, follow the reactive one.
        for i in 0..a {
            x_hat[i] = phi_draws[(n, i)] * u[i];
            x_hat[a + i] = u[a + i];
            sampled[(i, i)] = phi_draws[(n, i)];
        }
        let mut p_inj = stage.p_inj_load[n].clone();
        let mut q_inj = stage.q_inj_load[n].clone();
        for (i, &node) in stage.agent_nodes.iter().enumerate() {
            p_inj[node] += x_hat[i];
            q_inj[node] += x_hat[a + i];
        }
        let v = solve_power_flow(case, &p_inj, &q_inj, settings.pf_tol)
            .map_err(|e| format!("step {n}: {e}"))?;
        let y_hat = DVector::from_fn(a, |i, _| v[stage.agent_nodes[i]]);

        acc.add_step(
            &x_hat.as_slice()[..a],
            &stage.p_avail[n],
            &x_hat.as_slice()[a..],
            y_hat.as_slice(),
            &stage.s_max,
            stage.s_base_kw,
        );
        trace_y.push(y_hat[settings.trace_agent]);

        let a_circ = recover_a(&u, &x_hat, recovery, &sampled, mean_diag);
        let grad = estimate_gradient(&a_circ, c, &y_hat, &x_hat, &u, obj, n);
        u = set.project(&(&u - &grad * alpha), n).map_err(|e| format!("step {n}: {e}"))?;
    }
    Ok(VariantOutcome { acc, trace_y })
}

/// Uncontrolled reference: inject all available real power, no reactive
/// support. Returns its deviation score, band-violation fraction, and trace.
fn run_baseline(
    case: &FeederCase,
    stage: &Stage,
    steps: usize,
    settings: &OpfSettings,
) -> Result<(f64, f64, Vec<f64>)> {
    let a = case.n_agents();
    let mut acc = MetricAccumulator::default();
    let mut trace = Vec::with_capacity(steps);
    let x_q = vec![0.0; a];
    for n in 0..steps {
        let mut p_inj = stage.p_inj_load[n].clone();
        let q_inj = stage.q_inj_load[n].clone();
        for (i, &node) in stage.agent_nodes.iter().enumerate() {
            p_inj[node] += stage.p_avail[n][i];
        }
        let v = solve_power_flow(case, &p_inj, &q_inj, settings.pf_tol)?;
        let y: Vec<f64> = stage.agent_nodes.iter().map(|&node| v[node]).collect();
        acc.add_step(&stage.p_avail[n], &stage.p_avail[n], &x_q, &y, &stage.s_max, stage.s_base_kw);
        trace.push(y[settings.trace_agent]);
    }
    let m = acc.finish();
    Ok((m.vd_pu2, m.band_violation_fraction, trace))
}

/// Build the per-step boundary data from the profiles.
fn build_stage(case: &FeederCase, profiles: &ProfileSet) -> Stage {
    let steps = profiles.steps();
    let s_base = case.s_base_kw();
    let pf_ratio = case.load_power_factor_ratio();
    let mut p_inj_load = Vec::with_capacity(steps);
    let mut q_inj_load = Vec::with_capacity(steps);
    let mut p_avail = Vec::with_capacity(steps);
    for n in 0..steps {
        let load = profiles.load_kw_row(n);
        let p = DVector::from_fn(case.n_nodes(), |i, _| -load[i] / s_base);
        let q = DVector::from_fn(case.n_nodes(), |i, _| -load[i] * pf_ratio[i] / s_base);
        p_inj_load.push(p);
        q_inj_load.push(q);
        p_avail.push(profiles.pv_kw_row(n).iter().map(|kw| kw / s_base).collect());
    }
    Stage {
        p_inj_load,
        q_inj_load,
        p_avail,
        s_max: case.s_max_pu(),
        agent_nodes: case.agent_nodes0(),
        s_base_kw: s_base,
    }
}

/// Run the paired comparison: `replications` independent compliance
/// realizations, each driving both variants from the same start point, plus
/// one uncontrolled baseline pass.
///
/// `algo` supplies the step size, regularization, and horizon (which must
/// equal the profile length); its variant/recovery fields are ignored
/// because the comparison always runs the stochastic loop with ratio
/// recovery against the deterministic loop.
pub fn run_opf_experiment(
    case: &FeederCase,
    profiles: &ProfileSet,
    phi: &PhiDistribution,
    algo: &AlgorithmConfig,
    settings: &OpfSettings,
    replications: usize,
    rng: &mut RandomStream,
) -> Result<OpfComparison> {
    algo.validate()?;
    phi.validate()?;
    let a = case.n_agents();
    let steps = profiles.steps();
    if algo.horizon != steps {
        return Err(Error::InvalidConfig(format!(
            "horizon {} must match the profile length {steps}",
            algo.horizon
        )));
    }
    if profiles.n_buses() != case.n_nodes() || profiles.n_agents() != a {
        return Err(Error::DimensionMismatch(
            "profiles were built for a different feeder".into(),
        ));
    }
    if replications == 0 {
        return Err(Error::InvalidConfig("need at least one replication".into()));
    }
    if settings.trace_agent >= a {
        return Err(Error::InvalidConfig(format!(
            "trace agent {} out of range for {a} agents",
            settings.trace_agent
        )));
    }
    if !(settings.kappa_p >= 0.0 && settings.kappa_q >= 0.0 && settings.kappa_y >= 0.0) {
        return Err(Error::InvalidConfig("objective weights must be nonnegative".into()));
    }

    let lin: LinDistFlowModel = build_lindistflow(case)?;
    let c = lin.jacobian();
    let stage = build_stage(case, profiles);

    // Stage cost: curtailment and reactive-usage weights on the implemented
    // input, deviation-from-nominal weight on the voltages.
    let mut w_x = DVector::zeros(2 * a);
    for i in 0..a {
        w_x[i] = settings.kappa_p;
        w_x[a + i] = settings.kappa_q;
    }
    let g_x = QuadraticForm::new(DMatrix::from_diagonal(&w_x), DVector::zeros(2 * a))?;
    let g_y = QuadraticForm::isotropic(settings.kappa_y, DVector::from_element(a, 1.0))?;
    let x_targets: Vec<DVector<f64>> = (0..steps)
        .map(|n| {
            let mut t = DVector::zeros(2 * a);
            for i in 0..a {
                t[i] = stage.p_avail[n][i];
            }
            t
        })
        .collect();
    let obj = StageObjective::new(g_y, g_x, algo.eta)?.with_x_target_table(x_targets)?;

    // Feasible set: each agent's rating disk cut to the available power.
    let caps = CapSchedule::Table(Arc::new(stage.p_avail.clone()));
    let set = ConstraintSet::inverter_disks(case.s_max_pu(), caps)?;

    let mut mean_diag = DVector::from_element(2 * a, 1.0);
    for i in 0..a {
        mean_diag[i] = phi.mean();
    }

    let (baseline_vd, baseline_band, baseline_trace) =
        run_baseline(case, &stage, steps, settings)?;

    let parent = rng.split();
    let outcomes: Vec<std::result::Result<(VariantOutcome, VariantOutcome), String>> = (0
        ..replications)
        .into_par_iter()
        .map(|rep| {
            let mut rep_rng = parent.substream(rep as u64);
            let u0 = set.sample_feasible(&mut rep_rng, 0).map_err(|e| e.to_string())?;
            let mut phi_draws = DMatrix::zeros(steps, a);
            for n in 0..steps {
                for i in 0..a {
                    phi_draws[(n, i)] = phi.sample(&mut rep_rng);
                }
            }
            let sofo = run_variant(
                case,
                &stage,
                &c,
                &obj,
                &set,
                algo.alpha,
                RecoveryMode::Exact,
                &mean_diag,
                &phi_draws,
                &u0,
                settings,
            )?;
            let dofo = run_variant(
                case,
                &stage,
                &c,
                &obj,
                &set,
                algo.alpha,
                RecoveryMode::Identity,
                &mean_diag,
                &phi_draws,
                &u0,
                settings,
            )?;
            Ok((sofo, dofo))
        })
        .collect();

    let mut sofo_acc = MetricAccumulator::default();
    let mut dofo_acc = MetricAccumulator::default();
    let mut aborted = Vec::new();
    let mut traces: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut used = 0usize;
    for (rep, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok((s, d)) => {
                sofo_acc.merge(&s.acc);
                dofo_acc.merge(&d.acc);
                if traces.is_none() {
                    traces = Some((s.trace_y, d.trace_y));
                }
                used += 1;
            }
            Err(reason) => aborted.push((rep, reason)),
        }
    }
    let (sofo_trace, dofo_trace) = traces.ok_or_else(|| {
        Error::NoConvergence("every replication aborted; see the run log".into())
    })?;

    Ok(OpfComparison {
        sofo: sofo_acc.finish(),
        dofo: dofo_acc.finish(),
        baseline_vd_pu2: baseline_vd,
        baseline_band_violation_fraction: baseline_band,
        trace: OpfTrace {
            agent_node: case.agents()[settings.trace_agent].node,
            baseline: baseline_trace,
            sofo: sofo_trace,
            dofo: dofo_trace,
        },
        replications_used: used,
        aborted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Variant;
    use crate::grid::profiles::{synthetic_profiles, SyntheticProfileSpec};

    fn algo(steps: usize) -> AlgorithmConfig {
        AlgorithmConfig {
            alpha: 5e-2,
            eta: 1e-3,
            variant: Variant::Sofo,
            horizon: steps,
            recovery: RecoveryMode::Exact,
        }
    }

    #[test]
    fn zero_curtailment_and_flat_voltage_score_zero() {
        let mut acc = MetricAccumulator::default();
        acc.add_step(&[0.05, 0.02], &[0.05, 0.02], &[0.0, 0.0], &[1.0, 1.0], &[0.1, 0.1], 1e4);
        let m = acc.finish();
        assert_eq!(m.pc_kw2, 0.0);
        assert_eq!(m.vd_pu2, 0.0);
        assert_eq!(m.band_violation_fraction, 0.0);
        assert_eq!(m.inverter_violation_steps, 0);
    }

    #[test]
    fn doubling_deviations_quadruples_both_scores() {
        let mut one = MetricAccumulator::default();
        one.add_step(&[0.04], &[0.05], &[0.0], &[1.01], &[0.1], 1e4);
        let mut two = MetricAccumulator::default();
        two.add_step(&[0.03], &[0.05], &[0.0], &[1.02], &[0.1], 1e4);
        let (m1, m2) = (one.finish(), two.finish());
        assert!((m2.pc_kw2 / m1.pc_kw2 - 4.0).abs() < 1e-12);
        assert!((m2.vd_pu2 / m1.vd_pu2 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn band_and_rating_violations_are_counted() {
        let mut acc = MetricAccumulator::default();
        // One of two voltages out of band; apparent power 0.3 > 0.1 rating.
        acc.add_step(&[0.3], &[0.3], &[0.0], &[1.06], &[0.1], 1e4);
        acc.add_step(&[0.0], &[0.0], &[0.0], &[1.0], &[0.1], 1e4);
        let m = acc.finish();
        assert!((m.band_violation_fraction - 0.5).abs() < 1e-12);
        assert_eq!(m.inverter_violation_steps, 1);
    }

    #[test]
    fn overcompliance_beyond_ratings_is_flagged_not_clipped() {
        // Agents implementing 1.5-2x the command push past their rating disks;
        // the loop must record the violation and keep running.
        let case = FeederCase::baran_wu_33_default().unwrap();
        let mut rng = RandomStream::new(3);
        let profiles =
            synthetic_profiles(&case, 20, 600.0, &SyntheticProfileSpec::default(), &mut rng)
                .unwrap();
        let phi = PhiDistribution::Uniform { lo: 1.5, hi: 2.0 };
        let out = run_opf_experiment(
            &case,
            &profiles,
            &phi,
            &algo(20),
            &OpfSettings::default(),
            2,
            &mut rng,
        )
        .unwrap();
        assert!(out.sofo.inverter_violation_steps > 0);
    }

    #[test]
    fn small_run_produces_finite_paired_metrics_and_traces() {
        let case = FeederCase::baran_wu_33_default().unwrap();
        let mut rng = RandomStream::new(51);
        // 10-minute steps from 08:00: spans the midday PV peak.
        let profiles =
            synthetic_profiles(&case, 40, 600.0, &SyntheticProfileSpec::default(), &mut rng)
                .unwrap();
        let phi = PhiDistribution::Uniform { lo: 0.0, hi: 1.0 };
        let settings = OpfSettings::default();
        let out = run_opf_experiment(
            &case,
            &profiles,
            &phi,
            &algo(40),
            &settings,
            2,
            &mut RandomStream::new(7),
        )
        .unwrap();
        assert_eq!(out.replications_used, 2);
        assert!(out.aborted.is_empty());
        for m in [&out.sofo, &out.dofo] {
            assert!(m.pc_kw2.is_finite() && m.pc_kw2 >= 0.0);
            assert!(m.vd_pu2.is_finite() && m.vd_pu2 >= 0.0);
            assert!((0.0..=1.0).contains(&m.band_violation_fraction));
        }
        assert_eq!(out.trace.baseline.len(), 40);
        assert_eq!(out.trace.sofo.len(), 40);
        assert_eq!(out.trace.dofo.len(), 40);
        assert_eq!(out.trace.agent_node, 29);

        // Same seed, same results — the fan-out is replication-indexed.
        let again = run_opf_experiment(
            &case,
            &profiles,
            &phi,
            &algo(40),
            &settings,
            2,
            &mut RandomStream::new(7),
        )
        .unwrap();
        assert_eq!(out.sofo.pc_kw2, again.sofo.pc_kw2);
        assert_eq!(out.sofo.vd_pu2, again.sofo.vd_pu2);
        assert_eq!(out.dofo.pc_kw2, again.dofo.pc_kw2);
        assert_eq!(out.dofo.vd_pu2, again.dofo.vd_pu2);
    }

    #[test]
    fn uncontrolled_baseline_overvolts_on_the_default_synthetic_day() {
        // The default synthetic day is calibrated so full PV injection against
        // valley load pushes deep buses past the upper band limit: the
        // regulation problem must be nontrivial.
        let case = FeederCase::baran_wu_33_default().unwrap();
        let mut rng = RandomStream::new(9);
        let profiles =
            synthetic_profiles(&case, 60, 600.0, &SyntheticProfileSpec::default(), &mut rng)
                .unwrap();
        let phi = PhiDistribution::Uniform { lo: 0.0, hi: 1.0 };
        let out = run_opf_experiment(
            &case,
            &profiles,
            &phi,
            &algo(60),
            &OpfSettings::default(),
            1,
            &mut rng,
        )
        .unwrap();
        assert!(
            out.baseline_band_violation_fraction > 0.0,
            "baseline stayed in band: vd {}",
            out.baseline_vd_pu2
        );
        let peak = out.trace.baseline.iter().cloned().fold(f64::MIN, f64::max);
        assert!(peak > VOLTAGE_BAND.1, "baseline peak {peak} at the traced bus");
        // Feedback must improve on no control at all.
        assert!(out.sofo.vd_pu2 < out.baseline_vd_pu2);
    }

    #[test]
    fn horizon_and_profile_length_must_agree() {
        let case = FeederCase::baran_wu_33_default().unwrap();
        let mut rng = RandomStream::new(2);
        let profiles =
            synthetic_profiles(&case, 10, 600.0, &SyntheticProfileSpec::default(), &mut rng)
                .unwrap();
        let phi = PhiDistribution::Uniform { lo: 0.0, hi: 1.0 };
        let err = run_opf_experiment(
            &case,
            &profiles,
            &phi,
            &algo(11),
            &OpfSettings::default(),
            1,
            &mut rng,
        )
        .unwrap_err();
        assert!(err.to_string().contains("horizon"), "{err}");
    }
}
