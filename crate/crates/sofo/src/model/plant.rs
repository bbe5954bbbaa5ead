//! The sensor map `y = C x + D r_n` with its disturbance sequence.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::DisturbanceGenerator;

/// Static sensor map plus the deterministic disturbance driving it.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    c: DMatrix<f64>,
    d: DMatrix<f64>,
    disturbance: DisturbanceGenerator,
}

impl PlantModel {
    pub fn new(c: DMatrix<f64>, d: DMatrix<f64>, disturbance: DisturbanceGenerator) -> Result<Self> {
        if c.nrows() != d.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "C has {} rows but D has {}",
                c.nrows(),
                d.nrows()
            )));
        }
        if d.ncols() != disturbance.dim() {
            return Err(Error::DimensionMismatch(format!(
                "D has {} columns but the disturbance is {}-dimensional",
                d.ncols(),
                disturbance.dim()
            )));
        }
        Ok(Self { c, d, disturbance })
    }

    /// State dimension `d` (columns of C).
    pub fn dim_state(&self) -> usize {
        self.c.ncols()
    }

    /// Output dimension `m` (rows of C).
    pub fn dim_output(&self) -> usize {
        self.c.nrows()
    }

    pub fn dim_disturbance(&self) -> usize {
        self.d.ncols()
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn disturbance(&self) -> &DisturbanceGenerator {
        &self.disturbance
    }

    /// `y = C x + D r_n`.
    pub fn output(&self, x: &DVector<f64>, n: usize) -> DVector<f64> {
        assert_eq!(x.len(), self.dim_state(), "state dimension mismatch");
        &self.c * x + &self.d * self.disturbance.at(n)
    }
}
