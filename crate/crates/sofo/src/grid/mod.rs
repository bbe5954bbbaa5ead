//! Radial distribution feeder testbed: benchmark network data, a nonlinear
//! power-flow solver used as the physical truth, the linearized voltage
//! model the controllers see, day-profile generation and loading, and the
//! paired curtailment-versus-regulation experiment.

pub mod feeder;
pub mod lindistflow;
pub mod opf;
pub mod power_flow;
pub mod profiles;

pub use feeder::{default_agents, AgentSpec, Branch, FeederCase};
pub use lindistflow::{build_lindistflow, LinDistFlowModel};
pub use opf::{
    run_opf_experiment, OpfComparison, OpfMetrics, OpfSettings, OpfTrace, VOLTAGE_BAND,
};
pub use power_flow::solve_power_flow;
pub use profiles::{
    load_profiles, parse_profiles, synthetic_profiles, ProfileSet, SyntheticProfileSpec,
};
