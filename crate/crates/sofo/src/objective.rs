//! Strongly convex per-step costs and their exact expectations over the
//! compliance randomness.
//!
//! The stage cost is
//! ```text
//! J(x, y, u) = g_x(x) + g_y(y) + (eta/2) ||u||^2
//! ```
//! with quadratic `g_x(x) = (x - x_ref_n)' W_x (x - x_ref_n)` and
//! `g_y(y) = (y - y_ref)' W_y (y - y_ref)`. Quadratics are all the shipped
//! experiments need, and they admit exact expected gradients: for diagonal
//! compliance `x = A u + b` with `A = diag(Phi)`, independent coordinates and
//! any symmetric `M`,
//! ```text
//! E[A' M A] = M .* S,   S_ij = E[Phi_i Phi_j]
//! ```
//! (entrywise product), which turns `E[J]` into an explicit quadratic in `u`.
//! The analysis layer builds its ground-truth optimizers from these formulas.
//!
//! Strong-convexity parameters are tracked per term (`mu_x`, `mu_y`) so a
//! zero `W_x` stays analyzable: only the output term then contributes to the
//! curvature constant.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{ComplianceModel, PlantModel};
use crate::numeric::{max_symmetric_eigenvalue, min_symmetric_eigenvalue};

/// `z -> (z - target)' W (z - target)` with symmetric positive semidefinite W.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    weight: DMatrix<f64>,
    target: DVector<f64>,
    mu: f64,
    lipschitz: f64,
}

impl QuadraticForm {
    pub fn new(weight: DMatrix<f64>, target: DVector<f64>) -> Result<Self> {
        if weight.nrows() != weight.ncols() {
            return Err(Error::DimensionMismatch("quadratic weight must be square".into()));
        }
        if weight.nrows() != target.len() {
            return Err(Error::DimensionMismatch(format!(
                "weight is {}x{} but target has length {}",
                weight.nrows(),
                weight.ncols(),
                target.len()
            )));
        }
        let asym = (&weight - weight.transpose()).abs().max();
        if asym > 1e-9 * (1.0 + weight.abs().max()) {
            return Err(Error::InvalidConfig("quadratic weight must be symmetric".into()));
        }
        let sym = (&weight + weight.transpose()) * 0.5;
        let min_eig = if sym.nrows() == 0 { 0.0 } else { min_symmetric_eigenvalue(&sym) };
        if min_eig < -1e-9 * (1.0 + sym.abs().max()) {
            return Err(Error::InvalidConfig(format!(
                "quadratic weight must be positive semidefinite (min eigenvalue {min_eig:.3e})"
            )));
        }
        let max_eig = if sym.nrows() == 0 { 0.0 } else { max_symmetric_eigenvalue(&sym) };
        // Curvature constants of z' W z: strong convexity 2*lambda_min,
        // gradient Lipschitz constant 2*lambda_max. Computed, never asserted.
        Ok(Self { weight: sym, target, mu: 2.0 * min_eig.max(0.0), lipschitz: 2.0 * max_eig.max(0.0) })
    }

    /// Zero form in `dim` variables (weight 0, target 0); identically zero.
    pub fn zero(dim: usize) -> Self {
        Self {
            weight: DMatrix::zeros(dim, dim),
            target: DVector::zeros(dim),
            mu: 0.0,
            lipschitz: 0.0,
        }
    }

    /// Isotropic form `kappa * ||z - target||^2`.
    pub fn isotropic(kappa: f64, target: DVector<f64>) -> Result<Self> {
        let dim = target.len();
        Self::new(DMatrix::from_diagonal_element(dim, dim, kappa), target)
    }

    pub fn dim(&self) -> usize {
        self.target.len()
    }

    pub fn weight(&self) -> &DMatrix<f64> {
        &self.weight
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }

    pub fn value(&self, z: &DVector<f64>) -> f64 {
        let e = z - &self.target;
        (&self.weight * &e).dot(&e)
    }

    pub fn value_with_target(&self, z: &DVector<f64>, target: &DVector<f64>) -> f64 {
        let e = z - target;
        (&self.weight * &e).dot(&e)
    }

    /// `2 W (z - target)`.
    pub fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        (&self.weight * (z - &self.target)) * 2.0
    }

    pub fn gradient_with_target(&self, z: &DVector<f64>, target: &DVector<f64>) -> DVector<f64> {
        (&self.weight * (z - target)) * 2.0
    }

    /// Strong-convexity parameter `2 lambda_min(W)`.
    pub fn strong_convexity(&self) -> f64 {
        self.mu
    }

    /// Gradient Lipschitz constant `2 lambda_max(W)`.
    pub fn gradient_lipschitz(&self) -> f64 {
        self.lipschitz
    }
}

/// Time schedule for the input-cost reference `x_ref_n`.
#[derive(Debug, Clone)]
pub enum TargetSchedule {
    /// The form's own target at every step.
    Static,
    /// Per-step targets; indices past the end keep the last entry.
    Table(Arc<Vec<DVector<f64>>>),
}

/// The per-step cost: output term, input term with a possibly time-varying
/// reference, and an optional Tikhonov input regularizer.
#[derive(Debug, Clone)]
pub struct StageObjective {
    g_y: QuadraticForm,
    g_x: QuadraticForm,
    x_targets: TargetSchedule,
    eta: f64,
}

impl StageObjective {
    pub fn new(g_y: QuadraticForm, g_x: QuadraticForm, eta: f64) -> Result<Self> {
        if !(eta >= 0.0) {
            return Err(Error::InvalidConfig(format!("regularization weight must be >= 0, got {eta}")));
        }
        Ok(Self { g_y, g_x, x_targets: TargetSchedule::Static, eta })
    }

    /// Replace the input-cost reference with a per-step table.
    pub fn with_x_target_table(mut self, table: Vec<DVector<f64>>) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::InvalidConfig("target table must not be empty".into()));
        }
        let dim = self.g_x.dim();
        if table.iter().any(|t| t.len() != dim) {
            return Err(Error::DimensionMismatch("target table entries must match g_x dimension".into()));
        }
        self.x_targets = TargetSchedule::Table(Arc::new(table));
        Ok(self)
    }

    pub fn g_y(&self) -> &QuadraticForm {
        &self.g_y
    }

    pub fn g_x(&self) -> &QuadraticForm {
        &self.g_x
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn dim_output(&self) -> usize {
        self.g_y.dim()
    }

    pub fn dim_state(&self) -> usize {
        self.g_x.dim()
    }

    /// The input-cost reference in force at step `n`.
    pub fn x_ref(&self, n: usize) -> DVector<f64> {
        match &self.x_targets {
            TargetSchedule::Static => self.g_x.target().clone(),
            TargetSchedule::Table(table) => table[n.min(table.len() - 1)].clone(),
        }
    }

    /// `grad g_y(y) = 2 W_y (y - y_ref)`.
    pub fn grad_gy(&self, y: &DVector<f64>, _n: usize) -> DVector<f64> {
        self.g_y.gradient(y)
    }

    /// `grad g_x(x) = 2 W_x (x - x_ref_n)`.
    pub fn grad_gx(&self, x: &DVector<f64>, n: usize) -> DVector<f64> {
        match &self.x_targets {
            TargetSchedule::Static => self.g_x.gradient(x),
            TargetSchedule::Table(_) => self.g_x.gradient_with_target(x, &self.x_ref(n)),
        }
    }

    /// Realized stage cost `g_x(x) + g_y(y) + (eta/2)||u||^2`.
    pub fn value(&self, x: &DVector<f64>, y: &DVector<f64>, u: &DVector<f64>, n: usize) -> f64 {
        let gx = match &self.x_targets {
            TargetSchedule::Static => self.g_x.value(x),
            TargetSchedule::Table(_) => self.g_x.value_with_target(x, &self.x_ref(n)),
        };
        gx + self.g_y.value(y) + 0.5 * self.eta * u.norm_squared()
    }

    /// Strong convexity of the output term.
    pub fn mu_y(&self) -> f64 {
        self.g_y.strong_convexity()
    }

    /// Strong convexity of the input term.
    pub fn mu_x(&self) -> f64 {
        self.g_x.strong_convexity()
    }

    /// Common gradient Lipschitz constant over both forms.
    pub fn gradient_lipschitz(&self) -> f64 {
        self.g_y.gradient_lipschitz().max(self.g_x.gradient_lipschitz())
    }
}

/// Pieces of the exact expected objective
/// `F_n(u) = E[J(Au + b, C(Au + b) + D r_n, u)]` for moment-tractable
/// compliance kinds: `F_n(u) = u' Q u + 2 l_n' u + c_n` with constant
/// `Q = (W_x + C' W_y C) .* S + (eta/2) I`.
#[derive(Debug, Clone)]
pub struct ExpectedQuadratic {
    /// Quadratic coefficient `Q` (symmetric positive semidefinite).
    pub q: DMatrix<f64>,
    /// Linear coefficient `l_n`.
    pub linear: DVector<f64>,
    /// Constant term `c_n`.
    pub constant: f64,
}

impl ExpectedQuadratic {
    pub fn value(&self, u: &DVector<f64>) -> f64 {
        (&self.q * u).dot(u) + 2.0 * self.linear.dot(u) + self.constant
    }

    pub fn gradient(&self, u: &DVector<f64>) -> DVector<f64> {
        (&self.q * u) * 2.0 + &self.linear * 2.0
    }

    /// Hessian `2 Q`.
    pub fn hessian(&self) -> DMatrix<f64> {
        &self.q * 2.0
    }
}

/// Assemble the exact expected objective at step `n`. Requires a
/// moment-tractable compliance kind and matching dimensions.
pub fn expected_quadratic(
    obj: &StageObjective,
    compliance: &ComplianceModel,
    plant: &PlantModel,
    n: usize,
) -> Result<ExpectedQuadratic> {
    let d = compliance.dim();
    if plant.dim_state() != d || obj.dim_state() != d || obj.dim_output() != plant.dim_output() {
        return Err(Error::DimensionMismatch(
            "objective, compliance, and sensor map dimensions disagree".into(),
        ));
    }
    let moments = compliance.moments()?;
    let c = plant.c();
    let w_y = obj.g_y().weight();
    let w_x = obj.g_x().weight();

    // v = C b_bar + D r_n - y_ref, w = b_bar - x_ref_n.
    let v = c * &moments.b_bar + plant.d() * plant.disturbance().at(n) - obj.g_y().target();
    let w = &moments.b_bar - obj.x_ref(n);

    let m = w_x + c.transpose() * w_y * c;
    let mut q = m.component_mul(&moments.second);
    for i in 0..d {
        q[(i, i)] += 0.5 * obj.eta();
    }
    let linear = moments.a_bar.transpose() * (c.transpose() * (w_y * &v) + w_x * &w);
    let constant = (w_y * &v).dot(&v) + (w_x * &w).dot(&w);
    Ok(ExpectedQuadratic { q, linear, constant })
}

/// Exact `grad_u E[J]` at step `n`, including the `eta u` regularizer term.
pub fn expected_gradient(
    obj: &StageObjective,
    compliance: &ComplianceModel,
    plant: &PlantModel,
    u: &DVector<f64>,
    n: usize,
) -> Result<DVector<f64>> {
    Ok(expected_quadratic(obj, compliance, plant, n)?.gradient(u))
}

/// Exact `E[J]` at step `n`.
pub fn expected_value(
    obj: &StageObjective,
    compliance: &ComplianceModel,
    plant: &PlantModel,
    u: &DVector<f64>,
    n: usize,
) -> Result<f64> {
    Ok(expected_quadratic(obj, compliance, plant, n)?.value(u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DisturbanceGenerator, PhiDistribution};
    use crate::rng::RandomStream;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    fn toy_instance() -> (StageObjective, ComplianceModel, PlantModel) {
        // C = diag(-1,-2), D r = [2,1], g_y = y'y, g_x = 0, Phi ~ Unif[0,1].
        let g_y = QuadraticForm::isotropic(1.0, dvector![0.0, 0.0]).unwrap();
        let g_x = QuadraticForm::zero(2);
        let obj = StageObjective::new(g_y, g_x, 0.0).unwrap();
        let compliance =
            ComplianceModel::diagonal_iid(PhiDistribution::Uniform { lo: 0.0, hi: 1.0 }, 2).unwrap();
        let plant = PlantModel::new(
            dmatrix![-1.0, 0.0; 0.0, -2.0],
            DMatrix::identity(2, 2),
            DisturbanceGenerator::constant(dvector![2.0, 1.0]),
        )
        .unwrap();
        (obj, compliance, plant)
    }

    #[test]
    fn grad_gy_basic_arithmetic() {
        let g_y = QuadraticForm::isotropic(1.0, dvector![0.0, 0.0]).unwrap();
        let obj = StageObjective::new(g_y, QuadraticForm::zero(2), 0.0).unwrap();
        assert_eq!(obj.grad_gy(&dvector![1.0, 2.0], 0), dvector![2.0, 4.0]);
        assert_eq!(obj.grad_gy(&dvector![0.0, 0.0], 0), dvector![0.0, 0.0]);
    }

    #[test]
    fn grad_gy_weighted_with_reference() {
        // W_y = diag(8,8), y_ref = 1: grad at [1.05, 0.95] is [0.8, -0.8].
        let g_y = QuadraticForm::isotropic(8.0, dvector![1.0, 1.0]).unwrap();
        let obj = StageObjective::new(g_y, QuadraticForm::zero(2), 0.0).unwrap();
        let g = obj.grad_gy(&dvector![1.05, 0.95], 0);
        assert_relative_eq!(g[0], 0.8, epsilon = 1e-12);
        assert_relative_eq!(g[1], -0.8, epsilon = 1e-12);
    }

    #[test]
    fn grad_gx_weighted_and_zero_cases() {
        // W_x = diag(4,1), x_ref = (2,0): grad at (1,1) is (-8, 2).
        let g_x = QuadraticForm::new(dmatrix![4.0, 0.0; 0.0, 1.0], dvector![2.0, 0.0]).unwrap();
        let obj = StageObjective::new(QuadraticForm::zero(2), g_x, 0.0).unwrap();
        // g_y is the zero form here, so only the x term is exercised.
        assert_eq!(obj.grad_gx(&dvector![1.0, 1.0], 0), dvector![-8.0, 2.0]);
        assert_eq!(obj.grad_gx(&dvector![2.0, 0.0], 0), dvector![0.0, 0.0]);

        let zero = StageObjective::new(QuadraticForm::zero(2), QuadraticForm::zero(2), 0.0).unwrap();
        assert_eq!(zero.grad_gx(&dvector![5.0, -5.0], 0), dvector![0.0, 0.0]);
    }

    #[test]
    fn expected_gradient_closed_form_example() {
        // Closed-form moments E[Phi] = 1/2, E[Phi^2] = 1/3 give grad [0, 6]
        // at u = [3, 3] and stationarity at the minimizer [3, 0.75].
        let (obj, compliance, plant) = toy_instance();
        let g = expected_gradient(&obj, &compliance, &plant, &dvector![3.0, 3.0], 0).unwrap();
        assert_relative_eq!(g[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(g[1], 6.0, epsilon = 1e-12);
        let g_star = expected_gradient(&obj, &compliance, &plant, &dvector![3.0, 0.75], 0).unwrap();
        assert!(g_star.norm() < 1e-12, "gradient at minimizer {g_star}");
    }

    #[test]
    fn identity_compliance_reduces_to_deterministic_gradient() {
        let g_y = QuadraticForm::isotropic(1.0, dvector![0.0, 0.0]).unwrap();
        let obj = StageObjective::new(g_y, QuadraticForm::zero(2), 0.0).unwrap();
        let compliance = ComplianceModel::Identity { dim: 2 };
        let plant = PlantModel::new(
            dmatrix![-1.0, 0.0; 0.0, -2.0],
            DMatrix::identity(2, 2),
            DisturbanceGenerator::constant(dvector![2.0, 1.0]),
        )
        .unwrap();
        // Deterministic problem: grad = 2 C'(Cu + Dr).
        let u = dvector![1.0, -1.0];
        let c = plant.c().clone();
        let want = c.transpose() * (&c * &u + dvector![2.0, 1.0]) * 2.0;
        let got = expected_gradient(&obj, &compliance, &plant, &u, 0).unwrap();
        assert!((got - want).norm() < 1e-12);
    }

    #[test]
    fn expected_gradient_matches_monte_carlo_sample_gradients() {
        // Sample gradient A'[C' grad g_y(y) + grad g_x(x)] averaged over Phi
        // draws must agree with the closed form within 3 standard errors.
        let (obj, compliance, plant) = toy_instance();
        let u = dvector![1.25, -2.0];
        let mut rng = RandomStream::new(41);
        let draws = 100_000;
        let mut per_draw: Vec<DVector<f64>> = Vec::with_capacity(draws);
        for _ in 0..draws {
            let (a, b) = compliance.sample(&mut rng);
            let x = &a * &u + &b;
            let y = plant.output(&x, 0);
            let g = a.transpose() * (plant.c().transpose() * obj.grad_gy(&y, 0) + obj.grad_gx(&x, 0));
            per_draw.push(g);
        }
        let exact = expected_gradient(&obj, &compliance, &plant, &u, 0).unwrap();
        for i in 0..2 {
            let coord: Vec<f64> = per_draw.iter().map(|g| g[i]).collect();
            let (mean, se) = crate::numeric::mean_and_se(&coord);
            assert!(
                (mean - exact[i]).abs() < 3.0 * se,
                "coord {i}: mc {mean} exact {} se {se}",
                exact[i]
            );
        }
    }

    #[test]
    fn expected_gradient_matches_finite_difference_of_expected_value() {
        let (obj, compliance, plant) = toy_instance();
        let u = dvector![0.5, 1.5];
        let h = 1e-6;
        let g = expected_gradient(&obj, &compliance, &plant, &u, 0).unwrap();
        for i in 0..2 {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (expected_value(&obj, &compliance, &plant, &up, 0).unwrap()
                - expected_value(&obj, &compliance, &plant, &dn, 0).unwrap())
                / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-3, "coord {i}: fd {fd} grad {}", g[i]);
        }
    }

    #[test]
    fn gradient_lipschitz_bound_holds_on_random_pairs() {
        let w = dmatrix![3.0, 1.0; 1.0, 2.0];
        let form = QuadraticForm::new(w, dvector![0.5, -0.5]).unwrap();
        let lg = form.gradient_lipschitz();
        let mut rng = RandomStream::new(9);
        for _ in 0..200 {
            let a = dvector![rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0)];
            let b = dvector![rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0)];
            let lhs = (form.gradient(&a) - form.gradient(&b)).norm();
            assert!(lhs <= lg * (&a - &b).norm() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn strong_convexity_is_twice_min_eigenvalue() {
        let form = QuadraticForm::new(dmatrix![2.0, 1.0; 1.0, 2.0], dvector![0.0, 0.0]).unwrap();
        assert_relative_eq!(form.strong_convexity(), 2.0, epsilon = 1e-10);
        assert_relative_eq!(form.gradient_lipschitz(), 6.0, epsilon = 1e-10);
    }

    #[test]
    fn time_varying_reference_table() {
        let g_x = QuadraticForm::isotropic(1.0, dvector![0.0]).unwrap();
        let obj = StageObjective::new(QuadraticForm::zero(1), g_x, 0.0)
            .unwrap()
            .with_x_target_table(vec![dvector![1.0], dvector![2.0]])
            .unwrap();
        assert_eq!(obj.x_ref(0), dvector![1.0]);
        assert_eq!(obj.x_ref(1), dvector![2.0]);
        // Past the table end the last target stays in force.
        assert_eq!(obj.x_ref(10), dvector![2.0]);
        assert_eq!(obj.grad_gx(&dvector![3.0], 1), dvector![2.0]);
    }

    #[test]
    fn stage_value_includes_regularizer() {
        let g_y = QuadraticForm::isotropic(1.0, dvector![0.0]).unwrap();
        let g_x = QuadraticForm::isotropic(1.0, dvector![0.0]).unwrap();
        let obj = StageObjective::new(g_y, g_x, 0.2).unwrap();
        let v = obj.value(&dvector![1.0], &dvector![2.0], &dvector![3.0], 0);
        assert_relative_eq!(v, 1.0 + 4.0 + 0.1 * 9.0, epsilon = 1e-12);
    }

    #[test]
    fn asymmetric_or_indefinite_weights_are_rejected() {
        assert!(QuadraticForm::new(dmatrix![1.0, 0.5; -0.5, 1.0], dvector![0.0, 0.0]).is_err());
        assert!(QuadraticForm::new(dmatrix![1.0, 0.0; 0.0, -1.0], dvector![0.0, 0.0]).is_err());
    }
}
