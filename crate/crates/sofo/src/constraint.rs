//! Exact Euclidean projections onto the (possibly time-varying) convex
//! feasible sets the update rule needs.
//!
//! Every kind here is nonempty, convex, and compact, and admits either a
//! closed-form projection (ball, box, inverter disks) or a convergent
//! alternating scheme (intersections via Dykstra). Compactness is what makes
//! the uniform input bound `b_U = sup_n sup_{u in U_n} ||u||` finite; that
//! constant feeds the tracking analysis.

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Tolerance for membership checks. Projections themselves are exact up to
/// rounding; `contains` only needs to absorb that rounding.
const MEMBERSHIP_TOL: f64 = 1e-9;

/// Per-step schedule for the active-power caps of the inverter-disk product.
#[derive(Debug, Clone)]
pub enum CapSchedule {
    /// Same caps at every step.
    Static(Vec<f64>),
    /// One row of caps per step; indices past the end keep the last row.
    Table(Arc<Vec<Vec<f64>>>),
}

impl CapSchedule {
    pub fn agents(&self) -> usize {
        match self {
            CapSchedule::Static(caps) => caps.len(),
            CapSchedule::Table(rows) => rows.first().map_or(0, Vec::len),
        }
    }

    pub fn at(&self, n: usize) -> &[f64] {
        match self {
            CapSchedule::Static(caps) => caps,
            CapSchedule::Table(rows) => &rows[n.min(rows.len() - 1)],
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            CapSchedule::Static(caps) => {
                if caps.is_empty() {
                    return Err(Error::InvalidConfig("cap schedule must cover at least one agent".into()));
                }
                if caps.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidConfig("cap schedule entries must be finite".into()));
                }
            }
            CapSchedule::Table(rows) => {
                if rows.is_empty() {
                    return Err(Error::InvalidConfig("cap table must have at least one row".into()));
                }
                let a = rows[0].len();
                if a == 0 {
                    return Err(Error::InvalidConfig("cap table rows must be nonempty".into()));
                }
                if rows.iter().any(|r| r.len() != a) {
                    return Err(Error::DimensionMismatch("cap table rows must have equal length".into()));
                }
                if rows.iter().flatten().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidConfig("cap table entries must be finite".into()));
                }
            }
        }
        Ok(())
    }

}

/// A feasible set `U_n`, fixed or time-varying.
#[derive(Debug, Clone)]
pub enum ConstraintSet {
    /// `{u : ||u - center|| <= radius}`.
    Ball { center: DVector<f64>, radius: f64 },
    /// `{u : lo <= u <= hi}` componentwise.
    Box { lo: DVector<f64>, hi: DVector<f64> },
    /// Product of per-agent inverter feasible regions in the stacked layout
    /// `u = [P_1..P_A, Q_1..Q_A]`: agent `i` couples coordinates `(i, A+i)`
    /// through `P^2 + Q^2 <= S_max^2` and `0 <= P <= cap_n`.
    InverterDisks { s_max: Vec<f64>, caps: CapSchedule },
    /// Intersection of the members, projected by Dykstra's alternating method.
    Intersection(Vec<ConstraintSet>),
}

impl ConstraintSet {
    pub fn ball(center: DVector<f64>, radius: f64) -> Result<Self> {
        let set = ConstraintSet::Ball { center, radius };
        set.validate()?;
        Ok(set)
    }

    /// Origin-centered ball, the common case.
    pub fn origin_ball(dim: usize, radius: f64) -> Result<Self> {
        Self::ball(DVector::zeros(dim), radius)
    }

    pub fn hyper_box(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        let set = ConstraintSet::Box { lo, hi };
        set.validate()?;
        Ok(set)
    }

    pub fn inverter_disks(s_max: Vec<f64>, caps: CapSchedule) -> Result<Self> {
        let set = ConstraintSet::InverterDisks { s_max, caps };
        set.validate()?;
        Ok(set)
    }

    pub fn intersection(members: Vec<ConstraintSet>) -> Result<Self> {
        let set = ConstraintSet::Intersection(members);
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ConstraintSet::Ball { center, radius } => {
                if !(radius.is_finite() && *radius >= 0.0) {
                    return Err(Error::InvalidConfig(format!("ball radius must be >= 0, got {radius}")));
                }
                if center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidConfig("ball center must be finite".into()));
                }
            }
            ConstraintSet::Box { lo, hi } => {
                if lo.len() != hi.len() {
                    return Err(Error::DimensionMismatch("box bounds must have equal length".into()));
                }
                if lo.iter().zip(hi.iter()).any(|(l, h)| !l.is_finite() || !h.is_finite() || l > h) {
                    return Err(Error::InvalidConfig("box requires finite lo <= hi componentwise".into()));
                }
            }
            ConstraintSet::InverterDisks { s_max, caps } => {
                caps.validate()?;
                if s_max.is_empty() {
                    return Err(Error::InvalidConfig("inverter product needs at least one agent".into()));
                }
                if s_max.len() != caps.agents() {
                    return Err(Error::DimensionMismatch(format!(
                        "{} apparent-power limits vs {} cap columns",
                        s_max.len(),
                        caps.agents()
                    )));
                }
                if s_max.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                    return Err(Error::InvalidConfig("apparent-power limits must be >= 0".into()));
                }
            }
            ConstraintSet::Intersection(members) => {
                if members.is_empty() {
                    return Err(Error::InvalidConfig("intersection must have at least one member".into()));
                }
                let d = members[0].dim();
                for m in members {
                    m.validate()?;
                    if m.dim() != d {
                        return Err(Error::DimensionMismatch("intersection members must share dimension".into()));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            ConstraintSet::Ball { center, .. } => center.len(),
            ConstraintSet::Box { lo, .. } => lo.len(),
            ConstraintSet::InverterDisks { s_max, .. } => 2 * s_max.len(),
            ConstraintSet::Intersection(members) => members.first().map_or(0, ConstraintSet::dim),
        }
    }

    /// Euclidean projection of `u` onto the set in force at step `n`.
    pub fn project(&self, u: &DVector<f64>, n: usize) -> Result<DVector<f64>> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "point has length {} but the set lives in dimension {}",
                u.len(),
                self.dim()
            )));
        }
        match self {
            ConstraintSet::Ball { center, radius } => {
                let offset = u - center;
                let norm = offset.norm();
                if norm <= *radius {
                    Ok(u.clone())
                } else {
                    Ok(center + offset * (*radius / norm))
                }
            }
            ConstraintSet::Box { lo, hi } => {
                Ok(DVector::from_fn(u.len(), |i, _| u[i].clamp(lo[i], hi[i])))
            }
            ConstraintSet::InverterDisks { s_max, caps } => {
                let a = s_max.len();
                let row = caps.at(n);
                let mut out = u.clone();
                for i in 0..a {
                    let (p, q) = project_inverter_disk(u[i], u[a + i], s_max[i], row[i])?;
                    out[i] = p;
                    out[a + i] = q;
                }
                Ok(out)
            }
            ConstraintSet::Intersection(members) => {
                if members.len() == 1 {
                    return members[0].project(u, n);
                }
                dykstra(members, u, n, 1e-12, 10_000)
            }
        }
    }

    /// Membership up to rounding tolerance.
    pub fn contains(&self, u: &DVector<f64>, n: usize) -> bool {
        if u.len() != self.dim() {
            return false;
        }
        match self {
            ConstraintSet::Ball { center, radius } => (u - center).norm() <= radius + MEMBERSHIP_TOL,
            ConstraintSet::Box { lo, hi } => (0..u.len())
                .all(|i| u[i] >= lo[i] - MEMBERSHIP_TOL && u[i] <= hi[i] + MEMBERSHIP_TOL),
            ConstraintSet::InverterDisks { s_max, caps } => {
                let a = s_max.len();
                let row = caps.at(n);
                (0..a).all(|i| {
                    let (p, q) = (u[i], u[a + i]);
                    p >= -MEMBERSHIP_TOL
                        && p <= row[i] + MEMBERSHIP_TOL
                        && p.hypot(q) <= s_max[i] + MEMBERSHIP_TOL
                })
            }
            ConstraintSet::Intersection(members) => members.iter().all(|m| m.contains(u, n)),
        }
    }

    /// `b_U = sup_n sup_{u in U_n} ||u||`, exact for every kind.
    pub fn uniform_bound(&self) -> f64 {
        match self {
            ConstraintSet::Ball { center, radius } => center.norm() + radius,
            ConstraintSet::Box { lo, hi } => lo
                .iter()
                .zip(hi.iter())
                .map(|(l, h)| l.abs().max(h.abs()).powi(2))
                .sum::<f64>()
                .sqrt(),
            ConstraintSet::InverterDisks { s_max, caps } => {
                // Per agent the farthest feasible point from the origin has
                // norm min(S, hypot(cap, sqrt(S^2 - cap^2))) = S whenever the
                // cap is positive, and stays S even for cap = 0 via (0, ±S).
                // Caps never shrink the radius, so the stacked bound is
                // sqrt(sum_i S_i^2); a negative cap makes the set empty and
                // is rejected at projection time, not here.
                let _ = caps;
                s_max.iter().map(|s| s * s).sum::<f64>().sqrt()
            }
            ConstraintSet::Intersection(members) => members
                .iter()
                .map(ConstraintSet::uniform_bound)
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// A feasible point at step `n`: a draw from the bounding cube pushed
    /// through the projection. Covers the set (every face is reachable) but
    /// is not uniform on it; sufficient for probing and oracle seeding.
    pub fn sample_feasible(&self, rng: &mut RandomStream, n: usize) -> Result<DVector<f64>> {
        let b = self.uniform_bound();
        let draw = DVector::from_fn(self.dim(), |_, _| rng.uniform(-b, b));
        self.project(&draw, n)
    }
}

/// Closed-form projection onto one agent's feasible region
/// `{(p, q) : p^2 + q^2 <= s^2, 0 <= p <= cap}`.
///
/// KKT case analysis gives four candidates: the strip-clamped point when it
/// falls inside the disk, the radial scaling when it lands inside the strip,
/// and the two strip faces with `q` clamped into the disk's chord. The true
/// projection is the feasible candidate nearest the query; the set is convex,
/// so that argmin is unique and ties are vacuous.
fn project_inverter_disk(p0: f64, q0: f64, s: f64, cap: f64) -> Result<(f64, f64)> {
    if cap < 0.0 {
        return Err(Error::InfeasibleSet(format!(
            "active-power cap {cap} is negative; the inverter region is empty"
        )));
    }
    let cap = cap.min(s);
    let mut best: Option<(f64, f64, f64)> = None;
    let mut consider = |p: f64, q: f64| {
        let d2 = (p - p0).powi(2) + (q - q0).powi(2);
        if best.map_or(true, |(_, _, bd2)| d2 < bd2) {
            best = Some((p, q, d2));
        }
    };

    // Strip clamp, kept only when the disk stays inactive.
    let pc = p0.clamp(0.0, cap);
    if pc.hypot(q0) <= s {
        consider(pc, q0);
    }
    // Radial scaling onto the circle, kept only when the strip stays inactive.
    let norm = p0.hypot(q0);
    if norm > s && s > 0.0 {
        let scale = s / norm;
        let (pr, qr) = (p0 * scale, q0 * scale);
        if (0.0..=cap).contains(&pr) {
            consider(pr, qr);
        }
    }
    // Strip faces with q clamped into the disk chord; always feasible.
    consider(0.0, q0.clamp(-s, s));
    let q_face = (s * s - cap * cap).max(0.0).sqrt();
    consider(cap, q0.clamp(-q_face, q_face));

    let (p, q, _) = best.expect("face candidates are always feasible");
    Ok((p, q))
}

/// Dykstra's alternating projections with correction terms. Converges to the
/// exact projection onto the intersection of convex sets (plain alternation
/// would only reach *some* intersection point, not the nearest one).
fn dykstra(
    members: &[ConstraintSet],
    u: &DVector<f64>,
    n: usize,
    tol: f64,
    max_cycles: usize,
) -> Result<DVector<f64>> {
    let mut x = u.clone();
    let mut corrections = vec![DVector::zeros(u.len()); members.len()];
    for _ in 0..max_cycles {
        let mut cycle_shift: f64 = 0.0;
        for (member, corr) in members.iter().zip(corrections.iter_mut()) {
            let target = &x + &*corr;
            let projected = member.project(&target, n)?;
            *corr = &target - &projected;
            cycle_shift = cycle_shift.max((&projected - &x).norm());
            x = projected;
        }
        if cycle_shift <= tol {
            // All members already agree; x is feasible and optimal.
            return Ok(x);
        }
    }
    Err(Error::NoConvergence(format!(
        "alternating projection did not settle within {max_cycles} cycles (tol {tol:.1e}); \
         the intersection may be empty or nearly so"
    )))
}
