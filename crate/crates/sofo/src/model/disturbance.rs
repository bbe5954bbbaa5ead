//! Deterministic exogenous disturbance sequences `{r_n}`.
//!
//! Disturbances are either constant or piecewise periodic: a list of
//! segments, each with one wave shape shared by all coordinates, a
//! per-coordinate angular frequency, and a per-coordinate amplitude. The
//! sequence is fully determined by its configuration, so a given experiment
//! seed never influences it.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Unit wave shapes, all bounded by 1 in magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveShape {
    Sine,
    /// `sign(sin(theta))` with `sign(0) = 1`.
    Square,
    /// `(2/pi) * asin(sin(theta))`.
    Triangle,
}

impl WaveShape {
    pub fn eval(&self, theta: f64) -> f64 {
        match self {
            WaveShape::Sine => theta.sin(),
            WaveShape::Square => {
                if theta.sin() >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            WaveShape::Triangle => std::f64::consts::FRAC_2_PI * theta.sin().asin(),
        }
    }
}

/// One disturbance segment: `r_n[i] = amplitude[i] * shape(omega[i] * n)` for
/// `len` consecutive steps, with `n` the global time index.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveSegment {
    pub shape: WaveShape,
    pub omega: DVector<f64>,
    pub amplitude: DVector<f64>,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceGenerator {
    Constant { value: DVector<f64> },
    /// Consecutive segments partitioning the horizon; time past the last
    /// segment keeps evaluating the last segment's wave.
    Waveform { segments: Vec<WaveSegment> },
}

impl DisturbanceGenerator {
    pub fn constant(value: DVector<f64>) -> Self {
        DisturbanceGenerator::Constant { value }
    }

    pub fn waveform(segments: Vec<WaveSegment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidConfig("waveform disturbance needs at least one segment".into()));
        }
        let dim = segments[0].omega.len();
        for (k, s) in segments.iter().enumerate() {
            if s.omega.len() != dim || s.amplitude.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "segment {k}: omega/amplitude dimensions disagree with segment 0"
                )));
            }
            if s.len == 0 {
                return Err(Error::InvalidConfig(format!("segment {k} has zero length")));
            }
        }
        Ok(DisturbanceGenerator::Waveform { segments })
    }

    pub fn dim(&self) -> usize {
        match self {
            DisturbanceGenerator::Constant { value } => value.len(),
            DisturbanceGenerator::Waveform { segments } => segments[0].omega.len(),
        }
    }

    /// Total configured length; `None` for a constant disturbance.
    pub fn horizon(&self) -> Option<usize> {
        match self {
            DisturbanceGenerator::Constant { .. } => None,
            DisturbanceGenerator::Waveform { segments } => {
                Some(segments.iter().map(|s| s.len).sum())
            }
        }
    }

    /// `r_n`.
    pub fn at(&self, n: usize) -> DVector<f64> {
        match self {
            DisturbanceGenerator::Constant { value } => value.clone(),
            DisturbanceGenerator::Waveform { segments } => {
                let mut offset = 0usize;
                let mut chosen = segments.last().unwrap();
                for s in segments {
                    if n < offset + s.len {
                        chosen = s;
                        break;
                    }
                    offset += s.len;
                }
                let dim = chosen.omega.len();
                DVector::from_fn(dim, |i, _| {
                    chosen.amplitude[i] * chosen.shape.eval(chosen.omega[i] * n as f64)
                })
            }
        }
    }

    /// Upper bound on `sup_n ||r_n||`: unit waves are bounded by 1, so each
    /// segment contributes at most the norm of its amplitude vector.
    pub fn sup_norm(&self) -> f64 {
        match self {
            DisturbanceGenerator::Constant { value } => value.norm(),
            DisturbanceGenerator::Waveform { segments } => {
                segments.iter().map(|s| s.amplitude.norm()).fold(0.0, f64::max)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dvector;
    use std::f64::consts::PI;

    #[test]
    fn wave_shapes_are_unit_amplitude() {
        for shape in [WaveShape::Sine, WaveShape::Square, WaveShape::Triangle] {
            for k in 0..1000 {
                let theta = k as f64 * 0.037;
                assert!(shape.eval(theta).abs() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn triangle_hits_peaks_and_zeros() {
        // Peak 1 at theta = pi/2, zero at 0 and pi, trough -1 at 3pi/2.
        assert_relative_eq!(WaveShape::Triangle.eval(PI / 2.0), 1.0, epsilon = 1e-12);
        assert_relative_eq!(WaveShape::Triangle.eval(0.0), 0.0);
        assert_relative_eq!(WaveShape::Triangle.eval(PI), 0.0, epsilon = 1e-12);
        assert_relative_eq!(WaveShape::Triangle.eval(1.5 * PI), -1.0, epsilon = 1e-12);
        // Linear on the rising edge: value at pi/4 is 1/2.
        assert_relative_eq!(WaveShape::Triangle.eval(PI / 4.0), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn square_is_sign_of_sine() {
        assert_eq!(WaveShape::Square.eval(0.1), 1.0);
        assert_eq!(WaveShape::Square.eval(PI + 0.1), -1.0);
        assert_eq!(WaveShape::Square.eval(0.0), 1.0);
    }

    #[test]
    fn segments_partition_time_and_clamp_past_the_end() {
        let seg = |shape, len| WaveSegment {
            shape,
            omega: dvector![1.0],
            amplitude: dvector![2.0],
            len,
        };
        let gen = DisturbanceGenerator::waveform(vec![
            seg(WaveShape::Square, 10),
            seg(WaveShape::Sine, 10),
        ])
        .unwrap();
        assert_eq!(gen.horizon(), Some(20));
        // Global time index feeds the wave in every segment.
        assert_relative_eq!(gen.at(3)[0], 2.0);
        assert_relative_eq!(gen.at(12)[0], 2.0 * (12.0f64).sin());
        assert_relative_eq!(gen.at(25)[0], 2.0 * (25.0f64).sin());
    }

    #[test]
    fn sup_norm_bounds_every_sample() {
        let gen = DisturbanceGenerator::waveform(vec![WaveSegment {
            shape: WaveShape::Triangle,
            omega: dvector![5e-4, 7e-4],
            amplitude: dvector![10.0, 7.0],
            len: 1000,
        }])
        .unwrap();
        let bound = gen.sup_norm();
        assert_relative_eq!(bound, (100.0f64 + 49.0).sqrt());
        for n in 0..1000 {
            assert!(gen.at(n).norm() <= bound + 1e-12);
        }
    }

    #[test]
    fn constant_generator() {
        let gen = DisturbanceGenerator::constant(dvector![2.0, 1.0]);
        assert_eq!(gen.at(0), dvector![2.0, 1.0]);
        assert_eq!(gen.at(999), dvector![2.0, 1.0]);
        assert_relative_eq!(gen.sup_norm(), 5.0f64.sqrt());
        assert_eq!(gen.horizon(), None);
    }
}
