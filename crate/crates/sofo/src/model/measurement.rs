//! Measurement corruption of the implemented input `x` and the output `y`.
//!
//! Noise draws are independent across time and independent of the compliance
//! draws. The declared measurement-error scale `epsilon_m` is the exact L4
//! norm of the Gaussian noise vector: for `z ~ N(0, S)`,
//! `E||z||^4 = (tr S)^2 + 2 tr(S^2)`, so `epsilon_m = (E||z||^4)^(1/4)`, the
//! tightest constant satisfying the fourth-moment bound the analysis layer
//! assumes. Gaussian noise is unbounded, so any bound on the *recovery* error
//! of the gain matrix with the same constant is an approximation; the
//! analysis layer estimates that effect empirically instead of assuming it.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Additive noise on one measurement channel, independent per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    None,
    /// Zero-mean Gaussian with the given per-coordinate standard deviations.
    Gaussian { std: DVector<f64> },
}

impl NoiseSpec {
    /// Isotropic Gaussian `N(0, s^2 I)` in `dim` coordinates.
    pub fn gaussian_iso(s: f64, dim: usize) -> Self {
        NoiseSpec::Gaussian { std: DVector::from_element(dim, s) }
    }

    fn validate(&self, dim: usize, channel: &str) -> Result<()> {
        match self {
            NoiseSpec::None => Ok(()),
            NoiseSpec::Gaussian { std } => {
                if std.len() != dim {
                    return Err(Error::DimensionMismatch(format!(
                        "{channel} noise has {} stds but the channel is {dim}-dimensional",
                        std.len()
                    )));
                }
                if std.iter().any(|s| !s.is_finite() || *s < 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "{channel} noise stds must be finite and nonnegative"
                    )));
                }
                Ok(())
            }
        }
    }

    fn apply(&self, z: &DVector<f64>, rng: &mut RandomStream) -> DVector<f64> {
        match self {
            NoiseSpec::None => z.clone(),
            NoiseSpec::Gaussian { std } => {
                DVector::from_fn(z.len(), |i, _| z[i] + std[i] * rng.standard_normal())
            }
        }
    }

    /// Exact L4 norm of the noise vector; 0 for `None`.
    pub fn l4_norm(&self) -> f64 {
        match self {
            NoiseSpec::None => 0.0,
            NoiseSpec::Gaussian { std } => {
                let tr: f64 = std.iter().map(|s| s * s).sum();
                let tr_sq: f64 = std.iter().map(|s| s.powi(4)).sum();
                (tr * tr + 2.0 * tr_sq).powf(0.25)
            }
        }
    }
}

/// The measurement channel for `(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementModel {
    pub x_noise: NoiseSpec,
    pub y_noise: NoiseSpec,
}

impl MeasurementModel {
    /// Noise-free measurements on both channels.
    pub fn exact() -> Self {
        Self { x_noise: NoiseSpec::None, y_noise: NoiseSpec::None }
    }

    pub fn validate(&self, dim_x: usize, dim_y: usize) -> Result<()> {
        self.x_noise.validate(dim_x, "x")?;
        self.y_noise.validate(dim_y, "y")
    }

    /// One measurement draw `(x_hat, y_hat)`.
    pub fn measure(
        &self,
        x: &DVector<f64>,
        y: &DVector<f64>,
        rng: &mut RandomStream,
    ) -> (DVector<f64>, DVector<f64>) {
        (self.x_noise.apply(x, rng), self.y_noise.apply(y, rng))
    }

    /// The declared measurement-error scale: the larger of the two channels'
    /// L4 norms, and exactly 0 for noise-free measurement.
    pub fn epsilon_m(&self) -> f64 {
        self.x_noise.l4_norm().max(self.y_noise.l4_norm())
    }
}
