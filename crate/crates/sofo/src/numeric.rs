//! Small numeric utilities shared across the crate: deterministic summation,
//! Monte-Carlo statistics, and least-squares fits used by the analysis layer.

use nalgebra::DMatrix;

/// Pairwise (tree) summation. Deterministic for a fixed input order and more
/// accurate than sequential accumulation on long Monte-Carlo vectors.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BASE: usize = 64;
    if xs.len() <= BASE {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty());
    pairwise_sum(xs) / xs.len() as f64
}

/// Sample mean and its standard error (sample std / sqrt(n)).
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    assert!(n >= 2, "standard error needs at least two samples");
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|&x| (x - m) * (x - m)).collect();
    let var = pairwise_sum(&sq) / (n as f64 - 1.0);
    (m, (var / n as f64).sqrt())
}

/// Ordinary least-squares line `y = slope * x + intercept`.
#[derive(Debug, Clone, Copy)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> LinearFit {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2);
    let n = xs.len() as f64;
    let mx = mean(xs);
    let my = mean(ys);
    let sxy = pairwise_sum(&xs.iter().zip(ys).map(|(&x, &y)| (x - mx) * (y - my)).collect::<Vec<_>>());
    let sxx = pairwise_sum(&xs.iter().map(|&x| (x - mx) * (x - mx)).collect::<Vec<_>>());
    assert!(sxx > 0.0 && n >= 2.0, "degenerate abscissae");
    let slope = sxy / sxx;
    LinearFit { slope, intercept: my - slope * mx }
}

/// Least-squares slope of `y = k * x` through the origin.
pub fn fit_slope_through_origin(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let sxy = pairwise_sum(&xs.iter().zip(ys).map(|(&x, &y)| x * y).collect::<Vec<_>>());
    let sxx = pairwise_sum(&xs.iter().map(|&x| x * x).collect::<Vec<_>>());
    assert!(sxx > 0.0, "degenerate abscissae");
    sxy / sxx
}

/// Log-log slope fit, used for scaling-law checks.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> LinearFit {
    let lx: Vec<f64> = xs.iter().map(|&x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|&y| y.ln()).collect();
    fit_line(&lx, &ly)
}

/// Smallest eigenvalue of a symmetric matrix. The input is symmetrized first
/// so tiny floating-point asymmetries cannot poison the decomposition.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(m).iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(m).iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    assert_eq!(m.nrows(), m.ncols(), "eigenvalues need a square matrix");
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen().eigenvalues.iter().cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    #[test]
    fn pairwise_sum_matches_exact_on_integers() {
        let xs: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 500_500.0);
    }

    #[test]
    fn mean_and_se_on_known_sample() {
        // Sample {1,2,3,4}: mean 2.5, sample var 5/3, SE = sqrt(5/12).
        let (m, se) = mean_and_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_relative_eq!(m, 2.5);
        assert_relative_eq!(se, (5.0f64 / 12.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let fit = fit_line(&xs, &ys);
        assert_relative_eq!(fit.slope, 2.0, epsilon = 1e-12);
        assert_relative_eq!(fit.intercept, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn origin_fit_recovers_slope() {
        let xs = [1.0, 2.0, 4.0];
        let ys = [3.0, 6.0, 12.0];
        assert_relative_eq!(fit_slope_through_origin(&xs, &ys), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn loglog_slope_of_power_law() {
        let xs = [1e-3, 1e-2, 1e-1];
        let ys: Vec<f64> = xs.iter().map(|&x| 5.0 * x * x).collect();
        let fit = fit_loglog(&xs, &ys);
        assert_relative_eq!(fit.slope, 2.0, epsilon = 1e-10);
    }

    #[test]
    fn symmetric_eigen_extremes() {
        let m = dmatrix![2.0, 1.0; 1.0, 2.0];
        assert_relative_eq!(min_symmetric_eigenvalue(&m), 1.0, epsilon = 1e-12);
        assert_relative_eq!(max_symmetric_eigenvalue(&m), 3.0, epsilon = 1e-12);
    }
}
