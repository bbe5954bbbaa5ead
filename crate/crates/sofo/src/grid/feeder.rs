//! Radial distribution feeder description: branch/load tables, per-unit
//! conversion, tree topology, and the embedded 33-node benchmark case.

use nalgebra::DVector;
use serde::Deserialize;

use crate::error::{Error, Result};

/// Branch table of the embedded 33-node feeder (ohmic line constants).
pub const BW33_BRANCHES_CSV: &str = include_str!("../../data/bw33_branches.csv");
/// Node/load table of the embedded 33-node feeder (kW / kvar).
pub const BW33_LOADS_CSV: &str = include_str!("../../data/bw33_loads.csv");

/// One series branch. Bus ids are 1-based as in the data files; bus 1 is the
/// feeder head.
#[derive(Debug, Clone, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r_ohm: f64,
    pub x_ohm: f64,
}

#[derive(Debug, Clone, Deserialize)]
struct LoadRow {
    node: usize,
    p_load_kw: f64,
    q_load_kvar: f64,
}

/// A controllable PV unit: its bus (1-based) and inverter rating.
#[derive(Debug, Clone)]
pub struct AgentSpec {
    pub node: usize,
    pub s_max_kva: f64,
}

/// A validated radial feeder: tree topology, nominal loads, bases, agents.
///
/// Bus ids are 1-based externally (matching the data files); internal vectors
/// are indexed by `bus id - 1`.
#[derive(Debug, Clone)]
pub struct FeederCase {
    branches: Vec<Branch>,
    p_load_kw: Vec<f64>,
    q_load_kvar: Vec<f64>,
    base_mva: f64,
    base_kv: f64,
    agents: Vec<AgentSpec>,
    /// 0-based nodes in breadth-first order from the head; topological.
    order: Vec<usize>,
    /// Per 0-based node: `(parent 0-based, branch index)`; `None` at the head.
    parent: Vec<Option<(usize, usize)>>,
}

impl FeederCase {
    /// Parse and validate a case from CSV tables
    /// (`from,to,r_ohm,x_ohm` / `node,p_load_kw,q_load_kvar`).
    pub fn from_tables(
        branches_csv: &str,
        loads_csv: &str,
        base_mva: f64,
        base_kv: f64,
        agents: Vec<AgentSpec>,
    ) -> Result<Self> {
        if !(base_mva > 0.0) || !(base_kv > 0.0) {
            return Err(Error::InvalidConfig("base MVA and kV must be positive".into()));
        }
        let mut branches = Vec::new();
        let mut reader = csv::Reader::from_reader(branches_csv.as_bytes());
        for row in reader.deserialize() {
            let branch: Branch = row?;
            branches.push(branch);
        }
        let mut loads: Vec<LoadRow> = Vec::new();
        let mut reader = csv::Reader::from_reader(loads_csv.as_bytes());
        for row in reader.deserialize() {
            let load: LoadRow = row?;
            loads.push(load);
        }
        let n = loads.len();
        if n < 2 {
            return Err(Error::InvalidConfig("a feeder needs at least two buses".into()));
        }
        let mut p_load_kw = vec![f64::NAN; n];
        let mut q_load_kvar = vec![f64::NAN; n];
        for row in &loads {
            if row.node < 1 || row.node > n {
                return Err(Error::InvalidConfig(format!(
                    "load table bus ids must be 1..={n}, got {}",
                    row.node
                )));
            }
            if !p_load_kw[row.node - 1].is_nan() {
                return Err(Error::InvalidConfig(format!("duplicate load row for bus {}", row.node)));
            }
            if !(row.p_load_kw >= 0.0) || !(row.q_load_kvar >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "bus {}: nominal loads must be nonnegative",
                    row.node
                )));
            }
            p_load_kw[row.node - 1] = row.p_load_kw;
            q_load_kvar[row.node - 1] = row.q_load_kvar;
        }

        let (order, parent) = validate_tree(&branches, n)?;

        let mut seen = vec![false; n];
        for agent in &agents {
            if agent.node < 2 || agent.node > n {
                return Err(Error::InvalidConfig(format!(
                    "agent bus {} out of range (the head bus 1 is not controllable)",
                    agent.node
                )));
            }
            if !(agent.s_max_kva > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "agent bus {}: inverter rating must be positive",
                    agent.node
                )));
            }
            if seen[agent.node - 1] {
                return Err(Error::InvalidConfig(format!("duplicate agent at bus {}", agent.node)));
            }
            seen[agent.node - 1] = true;
        }

        Ok(Self { branches, p_load_kw, q_load_kvar, base_mva, base_kv, agents, order, parent })
    }

    /// The embedded 33-node benchmark case with the given agents.
    pub fn baran_wu_33(agents: Vec<AgentSpec>) -> Result<Self> {
        Self::from_tables(BW33_BRANCHES_CSV, BW33_LOADS_CSV, 10.0, 12.66, agents)
    }

    /// The embedded 33-node case with the six default PV agents
    /// (buses 7, 13, 18, 29, 31, 33 — bus 29 is the fourth agent).
    pub fn baran_wu_33_default() -> Result<Self> {
        Self::baran_wu_33(default_agents())
    }

    pub fn n_nodes(&self) -> usize {
        self.p_load_kw.len()
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn agents(&self) -> &[AgentSpec] {
        &self.agents
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn base_kv(&self) -> f64 {
        self.base_kv
    }

    /// Impedance base in ohms: `kV^2 / MVA`.
    pub fn z_base_ohm(&self) -> f64 {
        self.base_kv * self.base_kv / self.base_mva
    }

    /// Power base in kW (= kVA at unity power factor).
    pub fn s_base_kw(&self) -> f64 {
        self.base_mva * 1000.0
    }

    pub fn branch_r_pu(&self, branch: usize) -> f64 {
        self.branches[branch].r_ohm / self.z_base_ohm()
    }

    pub fn branch_x_pu(&self, branch: usize) -> f64 {
        self.branches[branch].x_ohm / self.z_base_ohm()
    }

    /// Nominal real loads in pu, indexed by `bus id - 1` (consumption positive).
    pub fn p_load_pu(&self) -> DVector<f64> {
        DVector::from_iterator(self.n_nodes(), self.p_load_kw.iter().map(|p| p / self.s_base_kw()))
    }

    /// Nominal reactive loads in pu, indexed by `bus id - 1`.
    pub fn q_load_pu(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.n_nodes(),
            self.q_load_kvar.iter().map(|q| q / self.s_base_kw()),
        )
    }

    pub fn p_load_kw(&self) -> &[f64] {
        &self.p_load_kw
    }

    pub fn q_load_kvar(&self) -> &[f64] {
        &self.q_load_kvar
    }

    /// Per-node `Q/P` ratio of the nominal load (zero where `P = 0`), used to
    /// derive reactive profiles from real-power series.
    pub fn load_power_factor_ratio(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.n_nodes(),
            self.p_load_kw
                .iter()
                .zip(&self.q_load_kvar)
                .map(|(p, q)| if *p > 0.0 { q / p } else { 0.0 }),
        )
    }

    /// 0-based nodes in breadth-first (topological) order, head first.
    pub fn bfs_order(&self) -> &[usize] {
        &self.order
    }

    /// `(parent 0-based, branch index)` of a 0-based node; `None` at the head.
    pub fn parent_of(&self, node: usize) -> Option<(usize, usize)> {
        self.parent[node]
    }

    /// 0-based node indices of the agents, in agent order.
    pub fn agent_nodes0(&self) -> Vec<usize> {
        self.agents.iter().map(|a| a.node - 1).collect()
    }

    /// Inverter ratings in pu, in agent order.
    pub fn s_max_pu(&self) -> Vec<f64> {
        self.agents.iter().map(|a| a.s_max_kva / self.s_base_kw()).collect()
    }
}

/// The six boxed PV buses of the benchmark figure; bus 29 is the fourth
/// agent. 1 MVA inverters scale with the utility-class PV profiles the
/// synthetic generator produces.
pub fn default_agents() -> Vec<AgentSpec> {
    [7, 13, 18, 29, 31, 33]
        .into_iter()
        .map(|node| AgentSpec { node, s_max_kva: 1000.0 })
        .collect()
}

/// Check the branch set forms a tree rooted at bus 1 covering all `n` buses;
/// return the breadth-first order and parent array (0-based).
fn validate_tree(
    branches: &[Branch],
    n: usize,
) -> Result<(Vec<usize>, Vec<Option<(usize, usize)>>)> {
    if branches.len() != n - 1 {
        return Err(Error::InvalidConfig(format!(
            "a radial feeder with {n} buses needs exactly {} branches, got {}",
            n - 1,
            branches.len()
        )));
    }
    let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (e, b) in branches.iter().enumerate() {
        if b.from < 1 || b.from > n || b.to < 1 || b.to > n || b.from == b.to {
            return Err(Error::InvalidConfig(format!(
                "branch {} connects invalid buses {} - {}",
                e + 1,
                b.from,
                b.to
            )));
        }
        if !(b.r_ohm > 0.0) || !(b.x_ohm > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "branch {}-{}: line constants must be positive",
                b.from, b.to
            )));
        }
        adjacency[b.from - 1].push((b.to - 1, e));
        adjacency[b.to - 1].push((b.from - 1, e));
    }
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = std::collections::VecDeque::from([0usize]);
    visited[0] = true;
    while let Some(i) = queue.pop_front() {
        order.push(i);
        for &(j, e) in &adjacency[i] {
            if !visited[j] {
                visited[j] = true;
                parent[j] = Some((i, e));
                queue.push_back(j);
            }
        }
    }
    if order.len() != n {
        // Branch count matches a tree, so unreached buses imply a cycle
        // elsewhere plus a disconnected component.
        return Err(Error::InvalidConfig(format!(
            "feeder graph is not connected: {} of {n} buses reachable from the head",
            order.len()
        )));
    }
    Ok((order, parent))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedded_case_totals_match_the_benchmark() {
        let case = FeederCase::baran_wu_33_default().unwrap();
        assert_eq!(case.n_nodes(), 33);
        assert_eq!(case.branches().len(), 32);
        let p: f64 = case.p_load_kw().iter().sum();
        let q: f64 = case.q_load_kvar().iter().sum();
        assert_eq!(p, 3715.0);
        assert_eq!(q, 2300.0);
        // 12.66 kV, 10 MVA: 12.66^2 / 10.
        assert!((case.z_base_ohm() - 16.02756).abs() < 1e-9);
        assert_eq!(case.s_base_kw(), 10_000.0);
        assert_eq!(case.agent_nodes0(), vec![6, 12, 17, 28, 30, 32]);
    }

    #[test]
    fn bfs_order_is_topological() {
        let case = FeederCase::baran_wu_33_default().unwrap();
        let order = case.bfs_order();
        assert_eq!(order[0], 0);
        let mut position = vec![0usize; 33];
        for (k, &i) in order.iter().enumerate() {
            position[i] = k;
        }
        for i in 1..33 {
            let (p, _) = case.parent_of(i).unwrap();
            assert!(position[p] < position[i], "parent of {i} comes later");
        }
        assert!(case.parent_of(0).is_none());
    }

    #[test]
    fn missing_branch_is_rejected() {
        let mut lines: Vec<&str> = BW33_BRANCHES_CSV.lines().collect();
        lines.remove(5);
        let broken = lines.join("\n");
        assert!(FeederCase::from_tables(&broken, BW33_LOADS_CSV, 10.0, 12.66, vec![]).is_err());
    }

    #[test]
    fn cycle_is_rejected() {
        // Replace the last branch with a duplicate of the first: branch count
        // still n-1, but buses 33 becomes unreachable and 1-2 doubles up.
        let mut lines: Vec<String> = BW33_BRANCHES_CSV.lines().map(String::from).collect();
        let last = lines.len() - 1;
        lines[last] = "1,2,0.5,0.5".into();
        let broken = lines.join("\n");
        let err = FeederCase::from_tables(&broken, BW33_LOADS_CSV, 10.0, 12.66, vec![]);
        assert!(err.is_err());
    }

    #[test]
    fn head_bus_cannot_be_an_agent() {
        let agents = vec![AgentSpec { node: 1, s_max_kva: 100.0 }];
        assert!(FeederCase::baran_wu_33(agents).is_err());
    }

    #[test]
    fn garbled_header_is_a_parse_error() {
        let bad = "source,sink,ohms\n1,2,0.1";
        assert!(FeederCase::from_tables(bad, BW33_LOADS_CSV, 10.0, 12.66, vec![]).is_err());
    }

    #[test]
    fn load_ratio_handles_zero_real_load() {
        let case = FeederCase::baran_wu_33_default().unwrap();
        let ratio = case.load_power_factor_ratio();
        assert_eq!(ratio[0], 0.0);
        assert!((ratio[29] - 3.0).abs() < 1e-12, "bus 30 is 200 kW / 600 kvar");
    }
}
