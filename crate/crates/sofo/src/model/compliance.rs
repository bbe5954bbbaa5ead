//! Compliance randomness: the random input gain `A(Phi)` and offset `b(Phi)`
//! describing how agents perturb their commanded setpoints.
//!
//! Only bounded-support scalar distributions are admitted, so all fourth
//! moments of `||A||` and `||b||` are finite by construction. The diagonal
//! kind models each coordinate's compliance independently; closed-form first
//! and second moments are available for it, which the analysis layer uses to
//! build exact expected objectives.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// A bounded-support scalar distribution for one compliance coordinate.
#[derive(Debug, Clone, PartialEq)]
pub enum PhiDistribution {
    /// Point mass; `Constant(1)` is a fully compliant coordinate.
    Constant { value: f64 },
    /// Uniform on `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// Beta(alpha, beta) rescaled from `[0, 1]` to `[lo, hi]`.
    Beta { alpha: f64, beta: f64, lo: f64, hi: f64 },
}

impl PhiDistribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PhiDistribution::Constant { value } => {
                if !value.is_finite() {
                    return Err(Error::InvalidConfig("constant compliance must be finite".into()));
                }
            }
            PhiDistribution::Uniform { lo, hi } => {
                if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::InvalidConfig(format!(
                        "uniform support needs lo < hi, got [{lo}, {hi}]"
                    )));
                }
            }
            PhiDistribution::Beta { alpha, beta, lo, hi } => {
                if !(alpha > 0.0 && beta > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "beta shapes must be positive, got ({alpha}, {beta})"
                    )));
                }
                if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::InvalidConfig(format!(
                        "beta support needs lo < hi, got [{lo}, {hi}]"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut RandomStream) -> f64 {
        match *self {
            PhiDistribution::Constant { value } => value,
            PhiDistribution::Uniform { lo, hi } => rng.uniform(lo, hi),
            PhiDistribution::Beta { alpha, beta, lo, hi } => lo + (hi - lo) * rng.beta(alpha, beta),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            PhiDistribution::Constant { value } => value,
            PhiDistribution::Uniform { lo, hi } => 0.5 * (lo + hi),
            PhiDistribution::Beta { alpha, beta, lo, hi } => lo + (hi - lo) * alpha / (alpha + beta),
        }
    }

    pub fn second_moment(&self) -> f64 {
        match *self {
            PhiDistribution::Constant { value } => value * value,
            PhiDistribution::Uniform { lo, hi } => (lo * lo + lo * hi + hi * hi) / 3.0,
            PhiDistribution::Beta { alpha, beta, lo, hi } => {
                // X = lo + (hi-lo) B with B ~ Beta(alpha, beta):
                // E[X^2] = lo^2 + 2 lo (hi-lo) E[B] + (hi-lo)^2 E[B^2].
                let s = alpha + beta;
                let eb = alpha / s;
                let eb2 = alpha * (alpha + 1.0) / (s * (s + 1.0));
                let w = hi - lo;
                lo * lo + 2.0 * lo * w * eb + w * w * eb2
            }
        }
    }

    /// Closed support `[lo, hi]` (a point for `Constant`).
    pub fn support(&self) -> (f64, f64) {
        match *self {
            PhiDistribution::Constant { value } => (value, value),
            PhiDistribution::Uniform { lo, hi } | PhiDistribution::Beta { lo, hi, .. } => (lo, hi),
        }
    }

    /// `sup |Phi|` over the support.
    pub fn sup_abs(&self) -> f64 {
        let (lo, hi) = self.support();
        lo.abs().max(hi.abs())
    }
}

/// Sampler signature for the general affine kind: returns one `(A, b)` draw.
pub type AffineSampler = Arc<dyn Fn(&mut RandomStream) -> (DMatrix<f64>, DVector<f64>) + Send + Sync>;

/// The random input-gain map of the agent population.
#[derive(Clone)]
pub enum ComplianceModel {
    /// Fully compliant agents: `A = I`, `b = 0` deterministically.
    Identity { dim: usize },
    /// `A = diag(Phi)`, `b = 0`, with independent per-coordinate marginals
    /// drawn i.i.d. across time.
    Diagonal { marginals: Vec<PhiDistribution> },
    /// Arbitrary affine compliance through a user-supplied sampler. Sampling
    /// works; moment-based analysis reports it as unsupported.
    AffineGeneral { dim: usize, sampler: AffineSampler },
}

impl fmt::Debug for ComplianceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ComplianceModel::Identity { dim } => write!(f, "Identity {{ dim: {dim} }}"),
            ComplianceModel::Diagonal { marginals } => {
                f.debug_struct("Diagonal").field("marginals", marginals).finish()
            }
            ComplianceModel::AffineGeneral { dim, .. } => {
                write!(f, "AffineGeneral {{ dim: {dim}, sampler: <fn> }}")
            }
        }
    }
}

/// Closed-form moments of the compliance map.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplianceMoments {
    /// `E[A]`.
    pub a_bar: DMatrix<f64>,
    /// `E[b]`.
    pub b_bar: DVector<f64>,
    /// Matrix with entries `E[Phi_i Phi_j]`; independence across coordinates
    /// makes off-diagonal entries products of means. For the identity kind
    /// `Phi = 1`, giving the all-ones matrix.
    pub second: DMatrix<f64>,
}

impl ComplianceModel {
    /// One shared marginal applied i.i.d. to every coordinate.
    pub fn diagonal_iid(marginal: PhiDistribution, dim: usize) -> Result<Self> {
        Self::diagonal(vec![marginal; dim])
    }

    /// Independent per-coordinate marginals. Mixing `Constant(1)` entries in
    /// expresses populations where only some coordinates are non-compliant.
    pub fn diagonal(marginals: Vec<PhiDistribution>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::InvalidConfig("diagonal compliance needs at least one coordinate".into()));
        }
        for m in &marginals {
            m.validate()?;
        }
        Ok(ComplianceModel::Diagonal { marginals })
    }

    pub fn dim(&self) -> usize {
        match self {
            ComplianceModel::Identity { dim } | ComplianceModel::AffineGeneral { dim, .. } => *dim,
            ComplianceModel::Diagonal { marginals } => marginals.len(),
        }
    }

    /// One i.i.d. draw of `(A, b)`.
    pub fn sample(&self, rng: &mut RandomStream) -> (DMatrix<f64>, DVector<f64>) {
        match self {
            ComplianceModel::Identity { dim } => {
                (DMatrix::identity(*dim, *dim), DVector::zeros(*dim))
            }
            ComplianceModel::Diagonal { marginals } => {
                let d = marginals.len();
                let mut a = DMatrix::zeros(d, d);
                for (i, m) in marginals.iter().enumerate() {
                    a[(i, i)] = m.sample(rng);
                }
                (a, DVector::zeros(d))
            }
            ComplianceModel::AffineGeneral { sampler, .. } => sampler(rng),
        }
    }

    /// Closed-form `(E[A], E[b], E[Phi_i Phi_j])`; errors for the general
    /// affine kind, whose moments are not declared.
    pub fn moments(&self) -> Result<ComplianceMoments> {
        match self {
            ComplianceModel::Identity { dim } => Ok(ComplianceMoments {
                a_bar: DMatrix::identity(*dim, *dim),
                b_bar: DVector::zeros(*dim),
                second: DMatrix::from_element(*dim, *dim, 1.0),
            }),
            ComplianceModel::Diagonal { marginals } => {
                let d = marginals.len();
                let means: Vec<f64> = marginals.iter().map(|m| m.mean()).collect();
                let mut second = DMatrix::zeros(d, d);
                for i in 0..d {
                    for j in 0..d {
                        second[(i, j)] = if i == j {
                            marginals[i].second_moment()
                        } else {
                            means[i] * means[j]
                        };
                    }
                }
                Ok(ComplianceMoments {
                    a_bar: DMatrix::from_diagonal(&DVector::from_vec(means)),
                    b_bar: DVector::zeros(d),
                    second,
                })
            }
            ComplianceModel::AffineGeneral { .. } => Err(Error::Unsupported(
                "general affine compliance has no declared moments".into(),
            )),
        }
    }

    /// Mean diagonal `E[Phi_i]`; the fallback gain used when ratio recovery
    /// hits a near-zero input coordinate.
    pub fn mean_diagonal(&self) -> Result<DVector<f64>> {
        match self {
            ComplianceModel::Identity { dim } => Ok(DVector::from_element(*dim, 1.0)),
            ComplianceModel::Diagonal { marginals } => {
                Ok(DVector::from_iterator(marginals.len(), marginals.iter().map(|m| m.mean())))
            }
            ComplianceModel::AffineGeneral { .. } => Err(Error::Unsupported(
                "general affine compliance has no declared moments".into(),
            )),
        }
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self, ComplianceModel::Identity { .. } | ComplianceModel::Diagonal { .. })
    }

    /// `sup ||A||_2` over the support (for diagonal kinds, the largest
    /// absolute support endpoint).
    pub fn sup_gain_norm(&self) -> Result<f64> {
        match self {
            ComplianceModel::Identity { .. } => Ok(1.0),
            ComplianceModel::Diagonal { marginals } => {
                Ok(marginals.iter().map(|m| m.sup_abs()).fold(0.0, f64::max))
            }
            ComplianceModel::AffineGeneral { .. } => Err(Error::Unsupported(
                "general affine compliance has no declared support bound".into(),
            )),
        }
    }

    /// `sup ||b||` over the support; zero for the kinds with `b = 0`.
    pub fn sup_offset_norm(&self) -> Result<f64> {
        match self {
            ComplianceModel::Identity { .. } | ComplianceModel::Diagonal { .. } => Ok(0.0),
            ComplianceModel::AffineGeneral { .. } => Err(Error::Unsupported(
                "general affine compliance has no declared support bound".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mc_mean_diag(model: &ComplianceModel, draws: usize, seed: u64) -> DVector<f64> {
        let mut rng = RandomStream::new(seed);
        let d = model.dim();
        let mut acc = DVector::zeros(d);
        for _ in 0..draws {
            let (a, _) = model.sample(&mut rng);
            acc += a.diagonal();
        }
        acc / draws as f64
    }

    #[test]
    fn identity_kind_is_deterministic() {
        let model = ComplianceModel::Identity { dim: 3 };
        let mut rng = RandomStream::new(1);
        let (a, b) = model.sample(&mut rng);
        assert_eq!(a, DMatrix::identity(3, 3));
        assert_eq!(b, DVector::zeros(3));
    }

    #[test]
    fn uniform_diagonal_sample_mean_matches_closed_form() {
        // Unif[0,1] mean is 1/2; over 1e5 draws the MC error is ~1e-3.
        let model =
            ComplianceModel::diagonal_iid(PhiDistribution::Uniform { lo: 0.0, hi: 1.0 }, 2).unwrap();
        let mean = mc_mean_diag(&model, 100_000, 7);
        assert!((mean[0] - 0.5).abs() < 0.01, "mean {}", mean[0]);
        assert!((mean[1] - 0.5).abs() < 0.01, "mean {}", mean[1]);
    }

    #[test]
    fn scaled_beta_sample_mean_matches_closed_form() {
        // Beta(4,2) on [-0.5, 1]: mean = -0.5 + 1.5 * 4/6 = 0.5.
        let dist = PhiDistribution::Beta { alpha: 4.0, beta: 2.0, lo: -0.5, hi: 1.0 };
        assert_relative_eq!(dist.mean(), 0.5, epsilon = 1e-12);
        let model = ComplianceModel::diagonal_iid(dist, 1).unwrap();
        let mean = mc_mean_diag(&model, 100_000, 11);
        assert!((mean[0] - 0.5).abs() < 0.01, "mean {}", mean[0]);
    }

    #[test]
    fn moments_match_closed_forms() {
        let model =
            ComplianceModel::diagonal_iid(PhiDistribution::Uniform { lo: 0.0, hi: 1.0 }, 2).unwrap();
        let m = model.moments().unwrap();
        assert_relative_eq!(m.a_bar[(0, 0)], 0.5);
        assert_relative_eq!(m.a_bar[(1, 1)], 0.5);
        assert_relative_eq!(m.a_bar[(0, 1)], 0.0);
        // E[Phi^2] = 1/3 on the diagonal, product of means 1/4 off it.
        assert_relative_eq!(m.second[(0, 0)], 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(m.second[(0, 1)], 0.25, epsilon = 1e-15);
        assert_eq!(m.b_bar, DVector::zeros(2));
    }

    #[test]
    fn symmetric_uniform_has_zero_mean_gain() {
        let model =
            ComplianceModel::diagonal_iid(PhiDistribution::Uniform { lo: -1.0, hi: 1.0 }, 2).unwrap();
        let m = model.moments().unwrap();
        assert_relative_eq!(m.a_bar[(0, 0)], 0.0);
        assert_relative_eq!(m.second[(0, 0)], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn identity_moments_are_ones() {
        let m = ComplianceModel::Identity { dim: 2 }.moments().unwrap();
        assert_eq!(m.a_bar, DMatrix::identity(2, 2));
        assert_eq!(m.second, DMatrix::from_element(2, 2, 1.0));
    }

    #[test]
    fn empirical_moments_within_three_standard_errors() {
        // Per-coordinate check of both first and second moments at 1e5 draws.
        let dist = PhiDistribution::Beta { alpha: 2.0, beta: 4.0, lo: -1.0, hi: 1.0 };
        let model = ComplianceModel::diagonal_iid(dist.clone(), 1).unwrap();
        let n = 100_000usize;
        let mut rng = RandomStream::new(23);
        let mut xs = Vec::with_capacity(n);
        for _ in 0..n {
            let (a, _) = model.sample(&mut rng);
            xs.push(a[(0, 0)]);
        }
        let (m1, se1) = crate::numeric::mean_and_se(&xs);
        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let (m2, se2) = crate::numeric::mean_and_se(&sq);
        assert!((m1 - dist.mean()).abs() < 3.0 * se1, "mean {m1} vs {}", dist.mean());
        assert!((m2 - dist.second_moment()).abs() < 3.0 * se2, "E[X^2] {m2} vs {}", dist.second_moment());
    }

    #[test]
    fn support_bounds_and_validation() {
        let d = PhiDistribution::Uniform { lo: -0.5, hi: 1.0 };
        assert_eq!(d.sup_abs(), 1.0);
        assert!(PhiDistribution::Uniform { lo: 1.0, hi: 0.0 }.validate().is_err());
        assert!(PhiDistribution::Beta { alpha: 0.0, beta: 1.0, lo: 0.0, hi: 1.0 }.validate().is_err());
        let model = ComplianceModel::diagonal(vec![
            PhiDistribution::Uniform { lo: -1.0, hi: 1.0 },
            PhiDistribution::Constant { value: 1.0 },
        ])
        .unwrap();
        assert_eq!(model.sup_gain_norm().unwrap(), 1.0);
        assert_eq!(model.sup_offset_norm().unwrap(), 0.0);
    }

    #[test]
    fn affine_general_samples_but_has_no_moments() {
        let sampler: AffineSampler = Arc::new(|rng: &mut RandomStream| {
            let g = rng.uniform(0.0, 1.0);
            (DMatrix::from_element(1, 1, g), DVector::from_element(1, 1.0))
        });
        let model = ComplianceModel::AffineGeneral { dim: 1, sampler };
        let mut rng = RandomStream::new(3);
        let (a, b) = model.sample(&mut rng);
        assert!((0.0..1.0).contains(&a[(0, 0)]));
        assert_eq!(b[0], 1.0);
        assert!(model.moments().is_err());
        assert!(model.sup_gain_norm().is_err());
    }
}
