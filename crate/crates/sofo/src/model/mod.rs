//! The networked-system abstraction: compliance randomness, the affine plant
//! and sensor map, exogenous disturbances, and measurement corruption.
//!
//! The system evolves as
//! ```text
//! x_n = A_{n+1} u_n + b_{n+1},      A_{n+1} = A(Phi_{n+1}), b_{n+1} = b(Phi_{n+1})
//! y_n = C x_n + D r_n
//! ```
//! where `u_n` is the commanded setpoint, `x_n` the input the agents actually
//! implement, `{Phi_n}` an i.i.d. sequence of compliance draws, `r_n` a
//! deterministic exogenous disturbance, and `y_n` the measured output.
//! Controllers observe corrupted versions `(x_hat, y_hat)` of `(x, y)`.

mod compliance;
mod disturbance;
mod measurement;
mod plant;

pub use compliance::{ComplianceModel, ComplianceMoments, PhiDistribution};
pub use disturbance::{DisturbanceGenerator, WaveSegment, WaveShape};
pub use measurement::{MeasurementModel, NoiseSpec};
pub use plant::PlantModel;

use crate::error::{Error, Result};

/// Everything the online loop needs to simulate one plant: compliance draws,
/// the sensor map with its disturbance, and the measurement channel.
#[derive(Debug, Clone)]
pub struct World {
    pub compliance: ComplianceModel,
    pub plant: PlantModel,
    pub measurement: MeasurementModel,
}

impl World {
    pub fn new(
        compliance: ComplianceModel,
        plant: PlantModel,
        measurement: MeasurementModel,
    ) -> Result<Self> {
        if compliance.dim() != plant.dim_state() {
            return Err(Error::DimensionMismatch(format!(
                "compliance acts on R^{} but the sensor map takes states in R^{}",
                compliance.dim(),
                plant.dim_state()
            )));
        }
        measurement.validate(plant.dim_state(), plant.dim_output())?;
        Ok(Self { compliance, plant, measurement })
    }

    pub fn dim_input(&self) -> usize {
        self.compliance.dim()
    }

    /// The uniform disturbance/compliance bound: the largest of
    /// `sup ||A||`, `sup ||b||`, and `sup_n ||r_n||`, all finite because only
    /// bounded-support compliance distributions are admitted. Computed from
    /// the configuration rather than user-declared.
    pub fn sigma_delta(&self) -> Result<f64> {
        let a = self.compliance.sup_gain_norm()?;
        let b = self.compliance.sup_offset_norm()?;
        let r = self.plant.disturbance().sup_norm();
        Ok(a.max(b).max(r))
    }
}
