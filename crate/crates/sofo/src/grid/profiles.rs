//! Load and generation time series for feeder experiments: CSV loaders with
//! resampling onto the simulation step, plus a synthetic day generator for
//! self-contained runs.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::rng::RandomStream;

use super::feeder::FeederCase;

/// Time-aligned boundary data for one simulated horizon: uncontrollable bus
/// loads and the available PV power at each agent, both in kW on the
/// simulation grid.
#[derive(Debug, Clone)]
pub struct ProfileSet {
    step_seconds: f64,
    /// steps x buses, consumption positive.
    load_kw: DMatrix<f64>,
    /// steps x agents, the upper limit on each agent's real output.
    pv_kw: DMatrix<f64>,
}

impl ProfileSet {
    pub fn new(step_seconds: f64, load_kw: DMatrix<f64>, pv_kw: DMatrix<f64>) -> Result<Self> {
        if !(step_seconds > 0.0) || !step_seconds.is_finite() {
            return Err(Error::InvalidConfig("profile step must be a positive duration".into()));
        }
        if load_kw.nrows() == 0 {
            return Err(Error::InvalidConfig("profiles need at least one step".into()));
        }
        if pv_kw.nrows() != load_kw.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "load profile has {} steps but the PV profile has {}",
                load_kw.nrows(),
                pv_kw.nrows()
            )));
        }
        if load_kw.iter().any(|v| !v.is_finite()) || pv_kw.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("profiles must be finite".into()));
        }
        if pv_kw.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidConfig("available PV power cannot be negative".into()));
        }
        Ok(ProfileSet { step_seconds, load_kw, pv_kw })
    }

    pub fn steps(&self) -> usize {
        self.load_kw.nrows()
    }

    pub fn step_seconds(&self) -> f64 {
        self.step_seconds
    }

    pub fn n_buses(&self) -> usize {
        self.load_kw.ncols()
    }

    pub fn n_agents(&self) -> usize {
        self.pv_kw.ncols()
    }

    /// Bus loads at one step, kW, consumption positive.
    pub fn load_kw_row(&self, step: usize) -> Vec<f64> {
        self.load_kw.row(step).iter().copied().collect()
    }

    /// Available PV at one step, kW per agent.
    pub fn pv_kw_row(&self, step: usize) -> Vec<f64> {
        self.pv_kw.row(step).iter().copied().collect()
    }

    pub fn pv_kw(&self) -> &DMatrix<f64> {
        &self.pv_kw
    }

    pub fn load_kw(&self) -> &DMatrix<f64> {
        &self.load_kw
    }
}

/// One parsed CSV: a strictly increasing uniform time column plus one value
/// column per named bus.
struct RawSeries {
    times: Vec<f64>,
    nodes: Vec<usize>,
    values: Vec<Vec<f64>>,
}

fn parse_series(csv_text: &str, what: &str) -> Result<RawSeries> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(csv_text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.len() < 2 || headers.get(0) != Some("time") {
        return Err(Error::InvalidConfig(format!(
            "{what} profile must start with a `time` column followed by bus ids"
        )));
    }
    let mut nodes = Vec::with_capacity(headers.len() - 1);
    for h in headers.iter().skip(1) {
        let node: usize = h.parse().map_err(|_| {
            Error::InvalidConfig(format!("{what} profile column `{h}` is not a bus id"))
        })?;
        nodes.push(node);
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::InvalidConfig(format!("ragged row in the {what} profile")));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("non-numeric entry `{s}` in {what}")))
        };
        times.push(parse(&record[0])?);
        let row: Result<Vec<f64>> = (1..record.len()).map(|i| parse(&record[i])).collect();
        values.push(row?);
    }
    if times.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "{what} profile needs at least two samples to define a time grid"
        )));
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) {
        return Err(Error::InvalidConfig(format!("{what} profile time must strictly increase")));
    }
    for w in times.windows(2) {
        let step = w[1] - w[0];
        if !(step > 0.0) || (step - dt).abs() > 1e-6 * dt.max(1.0) {
            return Err(Error::InvalidConfig(format!(
                "{what} profile time grid must be uniform and increasing"
            )));
        }
    }
    Ok(RawSeries { times, nodes, values })
}

/// Linear interpolation of one series column onto the target grid. The
/// target must lie inside the source span.
fn resample(times: &[f64], col: impl Fn(usize) -> f64, t: f64) -> f64 {
    let last = times.len() - 1;
    if t <= times[0] {
        return col(0);
    }
    if t >= times[last] {
        return col(last);
    }
    // Uniform grid: land directly in the right cell.
    let dt = times[1] - times[0];
    let k = (((t - times[0]) / dt).floor() as usize).min(last - 1);
    let w = (t - times[k]) / (times[k + 1] - times[k]);
    col(k) * (1.0 - w) + col(k + 1) * w
}

/// Parse textual load and PV tables and resample them onto a uniform grid of
/// `step_seconds`, covering the shared span of both files.
///
/// The load table may name any subset of buses (missing buses carry zero
/// load); the PV table must name exactly the case's agent buses. Both tables
/// must share the same time column.
pub fn parse_profiles(
    loads_csv: &str,
    pv_csv: &str,
    case: &FeederCase,
    step_seconds: f64,
) -> Result<ProfileSet> {
    if !(step_seconds > 0.0) {
        return Err(Error::InvalidConfig("simulation step must be positive".into()));
    }
    let loads = parse_series(loads_csv, "load")?;
    let pv = parse_series(pv_csv, "PV")?;

    if loads.times.len() != pv.times.len()
        || loads
            .times
            .iter()
            .zip(&pv.times)
            .any(|(a, b)| (a - b).abs() > 1e-9 * a.abs().max(1.0))
    {
        return Err(Error::InvalidConfig(
            "load and PV profiles must share the same time column".into(),
        ));
    }

    let n = case.n_nodes();
    let mut load_cols = Vec::with_capacity(loads.nodes.len());
    for &node in &loads.nodes {
        if node < 1 || node > n {
            return Err(Error::InvalidConfig(format!("load profile names unknown bus {node}")));
        }
        load_cols.push(node - 1);
    }
    {
        let mut seen = load_cols.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("load profile repeats a bus column".into()));
        }
    }

    let agent_ids: Vec<usize> = case.agents().iter().map(|a| a.node).collect();
    if pv.nodes.len() != agent_ids.len() {
        return Err(Error::DimensionMismatch(format!(
            "PV profile has {} columns but the case has {} agents",
            pv.nodes.len(),
            agent_ids.len()
        )));
    }
    // Column j of the PV matrix must be agent j; accept any file order.
    let mut pv_col_for_agent = Vec::with_capacity(agent_ids.len());
    for &id in &agent_ids {
        let pos = pv.nodes.iter().position(|&node| node == id).ok_or_else(|| {
            Error::InvalidConfig(format!("PV profile is missing agent bus {id}"))
        })?;
        pv_col_for_agent.push(pos);
    }
    if pv.values.iter().any(|row| row.iter().any(|&v| v < 0.0)) {
        return Err(Error::InvalidConfig("available PV power cannot be negative".into()));
    }

    let span = loads.times[loads.times.len() - 1] - loads.times[0];
    let steps = (span / step_seconds).floor() as usize + 1;
    let t0 = loads.times[0];
    let mut load_kw = DMatrix::zeros(steps, n);
    let mut pv_kw = DMatrix::zeros(steps, agent_ids.len());
    for s in 0..steps {
        let t = t0 + s as f64 * step_seconds;
        for (file_col, &bus0) in load_cols.iter().enumerate() {
            load_kw[(s, bus0)] = resample(&loads.times, |k| loads.values[k][file_col], t);
        }
        for (j, &file_col) in pv_col_for_agent.iter().enumerate() {
            pv_kw[(s, j)] = resample(&pv.times, |k| pv.values[k][file_col], t);
        }
    }
    ProfileSet::new(step_seconds, load_kw, pv_kw)
}

/// File-based variant of [`parse_profiles`].
pub fn load_profiles(
    loads_path: &Path,
    pv_path: &Path,
    case: &FeederCase,
    step_seconds: f64,
) -> Result<ProfileSet> {
    let loads_csv = std::fs::read_to_string(loads_path)?;
    let pv_csv = std::fs::read_to_string(pv_path)?;
    parse_profiles(&loads_csv, &pv_csv, case, step_seconds)
}

/// Shape parameters for the synthetic day used when no measured profiles are
/// supplied. Defaults produce afternoon overvoltage on the embedded feeder:
/// high PV against mid-day residential valley load.
#[derive(Debug, Clone)]
pub struct SyntheticProfileSpec {
    /// Clear-sky peak of each agent's PV plant, kW.
    pub pv_peak_kw: f64,
    /// Multiplier on the case's nominal bus loads.
    pub load_scale: f64,
    /// Depth of transient cloud dips, 0 = clear sky, 1 = full shading.
    pub cloud_intensity: f64,
    /// Hour of day the horizon starts at.
    pub day_start_hour: f64,
}

impl Default for SyntheticProfileSpec {
    fn default() -> Self {
        SyntheticProfileSpec {
            pv_peak_kw: 900.0,
            load_scale: 1.0,
            cloud_intensity: 0.6,
            day_start_hour: 8.0,
        }
    }
}

/// Generate a synthetic daytime horizon: a clear-sky bell around 13:00
/// modulated by smooth per-agent cloud dips, against a residential load shape
/// with a mid-day valley. Deterministic in the stream.
pub fn synthetic_profiles(
    case: &FeederCase,
    steps: usize,
    step_seconds: f64,
    spec: &SyntheticProfileSpec,
    rng: &mut RandomStream,
) -> Result<ProfileSet> {
    if steps == 0 {
        return Err(Error::InvalidConfig("profiles need at least one step".into()));
    }
    if !(step_seconds > 0.0) || !(spec.pv_peak_kw >= 0.0) || !(spec.load_scale >= 0.0) {
        return Err(Error::InvalidConfig("synthetic profile parameters must be nonnegative".into()));
    }
    if !(0.0..=1.0).contains(&spec.cloud_intensity) {
        return Err(Error::InvalidConfig("cloud intensity must lie in [0, 1]".into()));
    }
    let n = case.n_nodes();
    let a = case.n_agents();
    let hour = |s: usize| spec.day_start_hour + s as f64 * step_seconds / 3600.0;

    // Per-agent shading: a bounded state relaxing toward a target that is
    // redrawn every ~20 steps, so dips are smooth but not synchronized.
    let mut cloud_rngs: Vec<RandomStream> =
        (0..a).map(|j| rng.substream(1000 + j as u64)).collect();
    let mut shade = vec![0.0f64; a];
    let mut target = vec![0.0f64; a];
    let redraw_every = 20usize.max(1);

    let mut pv_kw = DMatrix::zeros(steps, a);
    let mut load_kw = DMatrix::zeros(steps, n);
    let mut load_rng = rng.substream(2000);

    for s in 0..steps {
        let t = hour(s);
        let clear = (-((t - 13.0) / 3.5).powi(2)).exp();
        for j in 0..a {
            if s % redraw_every == 0 {
                // Most windows are clear; occasionally a dip of random depth.
                let roll = cloud_rngs[j].uniform_unit();
                target[j] = if roll < 0.35 {
                    spec.cloud_intensity * cloud_rngs[j].uniform_unit()
                } else {
                    0.0
                };
            }
            shade[j] += 0.3 * (target[j] - shade[j]);
            let available = spec.pv_peak_kw * clear * (1.0 - shade[j]);
            pv_kw[(s, j)] = available.max(0.0);
        }
        // Residential shape: morning shoulder, mid-day valley, evening peak.
        let shape = 0.45
            + 0.30 * (-((t - 8.0) / 2.0).powi(2)).exp()
            + 0.55 * (-((t - 19.5) / 2.5).powi(2)).exp();
        for (bus0, &base) in case.p_load_kw().iter().enumerate() {
            let noise = 1.0 + 0.05 * load_rng.standard_normal();
            load_kw[(s, bus0)] = (base * spec.load_scale * shape * noise).max(0.0);
        }
    }
    ProfileSet::new(step_seconds, load_kw, pv_kw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::feeder::FeederCase;

    fn case() -> FeederCase {
        FeederCase::baran_wu_33_default().unwrap()
    }

    #[test]
    fn synthetic_day_peaks_near_noon_and_stays_nonnegative() {
        let case = case();
        let mut rng = RandomStream::new(7);
        // 8:00 to 18:00 at one-minute resolution.
        let profiles =
            synthetic_profiles(&case, 600, 60.0, &SyntheticProfileSpec::default(), &mut rng)
                .unwrap();
        assert_eq!(profiles.steps(), 600);
        assert_eq!(profiles.n_agents(), case.n_agents());
        assert!(profiles.pv_kw().iter().all(|&v| v >= 0.0));
        assert!(profiles.load_kw().iter().all(|&v| v >= 0.0));
        let peak = profiles.pv_kw().iter().cloned().fold(0.0, f64::max);
        assert!(peak > 0.0);
        // The clear-sky component peaks at 13:00 = step 300; the maximum can
        // shift under clouds but must stay in the mid-day band.
        let (argmax, _) = (0..profiles.steps())
            .map(|s| (s, profiles.pv_kw_row(s).iter().sum::<f64>()))
            .fold((0, f64::MIN), |acc, x| if x.1 > acc.1 { x } else { acc });
        let hour = 8.0 + argmax as f64 / 60.0;
        assert!((10.5..=15.5).contains(&hour), "aggregate PV peaked at {hour}h");
    }

    #[test]
    fn synthetic_day_is_deterministic_per_seed() {
        let case = case();
        let spec = SyntheticProfileSpec::default();
        let a = synthetic_profiles(&case, 50, 60.0, &spec, &mut RandomStream::new(11)).unwrap();
        let b = synthetic_profiles(&case, 50, 60.0, &spec, &mut RandomStream::new(11)).unwrap();
        let c = synthetic_profiles(&case, 50, 60.0, &spec, &mut RandomStream::new(12)).unwrap();
        assert_eq!(a.pv_kw(), b.pv_kw());
        assert_eq!(a.load_kw(), b.load_kw());
        assert_ne!(a.pv_kw(), c.pv_kw());
    }

    #[test]
    fn loader_reproduces_constant_columns_and_resamples_linearly() {
        let case = case();
        let loads = "time,7,30\n0,100,50\n600,100,60\n1200,100,70";
        let pv = "time,7,13,18,29,31,33\n0,0,0,0,0,0,0\n600,300,300,300,300,300,300\n1200,600,600,600,600,600,600";
        let profiles = parse_profiles(loads, pv, &case, 300.0).unwrap();
        assert_eq!(profiles.steps(), 5);
        // Constant column stays constant, unnamed buses stay zero.
        for s in 0..5 {
            let row = profiles.load_kw_row(s);
            assert_eq!(row[6], 100.0);
            assert_eq!(row[0], 0.0);
        }
        // Midpoint of the first span: linear blend.
        assert!((profiles.load_kw_row(1)[29] - 55.0).abs() < 1e-12);
        assert!((profiles.pv_kw_row(1)[0] - 150.0).abs() < 1e-12);
        assert!((profiles.pv_kw_row(3)[0] - 450.0).abs() < 1e-12);
    }

    #[test]
    fn loader_rejects_mismatched_time_columns() {
        let case = case();
        let loads = "time,7\n0,100\n600,100";
        let pv = "time,7,13,18,29,31,33\n0,0,0,0,0,0,0\n900,1,1,1,1,1,1";
        let err = parse_profiles(loads, pv, &case, 300.0).unwrap_err();
        assert!(err.to_string().contains("time column"), "{err}");
    }

    #[test]
    fn loader_rejects_wrong_agent_columns_and_negative_pv() {
        let case = case();
        let loads = "time,7\n0,100\n600,100";
        let missing = "time,7,13,18,29,31,32\n0,0,0,0,0,0,0\n600,1,1,1,1,1,1";
        assert!(parse_profiles(loads, missing, &case, 300.0).is_err());
        let negative = "time,7,13,18,29,31,33\n0,0,0,0,0,0,0\n600,1,1,-1,1,1,1";
        assert!(parse_profiles(loads, negative, &case, 300.0).is_err());
    }

    #[test]
    fn loader_rejects_unknown_buses_and_nonuniform_grids() {
        let case = case();
        let pv = "time,7,13,18,29,31,33\n0,0,0,0,0,0,0\n600,1,1,1,1,1,1\n1200,1,1,1,1,1,1";
        let unknown = "time,99\n0,1\n600,1\n1200,1";
        assert!(parse_profiles(unknown, pv, &case, 300.0).is_err());
        let nonuniform = "time,7\n0,1\n600,1\n1500,1";
        assert!(parse_profiles(nonuniform, pv, &case, 300.0).is_err());
    }
}
