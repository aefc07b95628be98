//! Which half of the flatness dichotomy a field between `q^+` and
//! `(q + eps)^+`, `q = x_n + sigma`, falls into at `x0 = e_n / 10`, and how
//! much of the conclusion holds on the closed half ball.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::px::exponent::ExponentField;
use crate::px::grid::{GridFunction, ScalarField};

/// Largest admissible `|sigma|`.
pub const SIGMA_BOUND: f64 = 1.0 / 20.0;
/// Slack in the envelope hypothesis.
pub const ENVELOPE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `u(x0) >= (q(x0) + eps/2)^+`: conclusion `u >= (q + c eps)^+`.
    Upper,
    /// Otherwise: conclusion `u <= (q + (1 - c) eps)^+`.
    Lower,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DichotomyReport {
    pub branch: Branch,
    pub x0: Vec<f64>,
    pub u_x0: f64,
    /// `(q(x0) + eps/2)^+`.
    pub midpoint: f64,
    /// Largest `c` for which the branch's conclusion holds on the lattice
    /// part of the closed half ball.
    pub c: f64,
    /// `min (u - q) / eps` over the positive nodes of the half ball: how far
    /// `u` is lifted above the lower envelope.
    pub lift: f64,
    /// Whether `||f|| <= eps^2`, `|g - 1| <= eps^2` and `|grad p| <= eps^2`
    /// on the unit ball.
    pub small_data: bool,
    pub nodes: usize,
}

/// Runs the dichotomy on the unit ball centered at the origin.
pub fn dichotomy_probe(
    u: &GridFunction,
    p: &ExponentField,
    f: &dyn ScalarField,
    g: &dyn ScalarField,
    sigma: f64,
    eps: f64,
) -> Result<DichotomyReport> {
    let grid = u.grid();
    let n = grid.dim();
    if sigma.abs() >= SIGMA_BOUND {
        return Err(Error::HypothesisViolated(format!("|sigma| = {} is not below 1/20", sigma.abs())));
    }
    if !(eps > 0.0) {
        return Err(Error::HypothesisViolated(format!("eps must be positive, got {eps}")));
    }
    let origin = vec![0.0; n];
    if !grid.contains_ball(&origin, 1.0) {
        return Err(Error::BallOutOfDomain { center: origin, radius: 1.0 });
    }
    let q = |x: &[f64]| x[n - 1] + sigma;
    let unit = grid.nodes_in_ball(&origin, 1.0);
    let eps2 = eps * eps;
    let mut small = true;
    for &i in &unit {
        let x = grid.point(i);
        let v = u.at(i);
        if q(&x).max(0.0) > v + ENVELOPE_TOLERANCE || v > (q(&x) + eps).max(0.0) + ENVELOPE_TOLERANCE {
            return Err(Error::HypothesisViolated(format!("q^+ <= u <= (q + eps)^+ fails at {x:?}")));
        }
        let grad_p: f64 = p.gradient(&x).iter().map(|v| v * v).sum::<f64>().sqrt();
        small &= f.value(&x).abs() <= eps2 && (g.value(&x) - 1.0).abs() <= eps2 && grad_p <= eps2;
    }
    let mut x0 = vec![0.0; n];
    x0[n - 1] = 0.1;
    let u_x0 = u.interpolate(&x0).expect("x0 lies in the unit ball");
    let midpoint = (q(&x0) + 0.5 * eps).max(0.0);
    let branch = if u_x0 >= midpoint { Branch::Upper } else { Branch::Lower };
    let half = grid.nodes_in_ball(&origin, 0.5);
    let mut c = f64::INFINITY;
    let mut lift = f64::INFINITY;
    for &i in &half {
        let x = grid.point(i);
        let v = u.at(i);
        let t = (v - q(&x)) / eps;
        if v > 0.0 {
            lift = lift.min(t);
        }
        c = c.min(match (branch, v > 0.0) {
            // (q + c eps)^+ <= u
            (Branch::Upper, true) => t,
            (Branch::Upper, false) => -q(&x) / eps,
            // u <= (q + (1 - c) eps)^+
            (Branch::Lower, true) => 1.0 - t,
            (Branch::Lower, false) => f64::INFINITY,
        });
    }
    if lift == f64::INFINITY {
        lift = 0.0;
    }
    Ok(DichotomyReport { branch, x0, u_x0, midpoint, c: c.min(1.0), lift, small_data: small, nodes: half.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::px::grid::{Analytic, Grid};

    fn setup() -> (Grid, ExponentField) {
        (Grid::cube(2, -1.0, 1.0, 64).unwrap(), ExponentField::constant(2, 2.0).unwrap())
    }

    #[test]
    fn envelopes() {
        let (g, p) = setup();
        let (sigma, eps) = (0.01, 0.1);
        let f = Analytic::new(2, |_: &[f64]| 0.0);
        let one = Analytic::new(2, |_: &[f64]| 1.0);
        let upper = GridFunction::from_fn(&g, "u", |x| (x[1] + sigma + eps).max(0.0));
        let r = dichotomy_probe(&upper, &p, &f, &one, sigma, eps).unwrap();
        assert_eq!(r.branch, Branch::Upper);
        assert!((r.c - 1.0).abs() < 1e-12 && (r.lift - 1.0).abs() < 1e-12);
        assert!(r.small_data);
        let lower = GridFunction::from_fn(&g, "u", |x| (x[1] + sigma).max(0.0));
        let r = dichotomy_probe(&lower, &p, &f, &one, sigma, eps).unwrap();
        assert_eq!(r.branch, Branch::Lower);
        assert_eq!(r.lift, 0.0);
    }

    #[test]
    fn field_above_the_midpoint() {
        let (g, p) = setup();
        let (sigma, eps) = (0.0, 0.1);
        let f = Analytic::new(2, |_: &[f64]| 0.0);
        let one = Analytic::new(2, |_: &[f64]| 1.0);
        // lifted by 0.8 eps near x0, decaying to the lower envelope far away
        let u = GridFunction::from_fn(&g, "u", |x| {
            let bump = 0.8 * eps * (-(x[0] * x[0] + (x[1] - 0.1).powi(2))).exp();
            (x[1] + sigma + bump).max(0.0)
        });
        let r = dichotomy_probe(&u, &p, &f, &one, sigma, eps).unwrap();
        assert_eq!(r.branch, Branch::Upper);
        assert!(r.c > 0.0 && r.c < 1.0);
    }

    #[test]
    fn hypotheses() {
        let (g, p) = setup();
        let f = Analytic::new(2, |_: &[f64]| 0.0);
        let one = Analytic::new(2, |_: &[f64]| 1.0);
        let u = GridFunction::from_fn(&g, "u", |x| (x[1] + 0.3).max(0.0));
        assert!(matches!(dichotomy_probe(&u, &p, &f, &one, 0.0, 0.1), Err(Error::HypothesisViolated(_))));
        assert!(matches!(dichotomy_probe(&u, &p, &f, &one, 0.06, 0.5), Err(Error::HypothesisViolated(_))));
        let big_f = Analytic::new(2, |_: &[f64]| 1.0);
        let ok = GridFunction::from_fn(&g, "u", |x| x[1].max(0.0));
        assert!(!dichotomy_probe(&ok, &p, &big_f, &one, 0.0, 0.1).unwrap().small_data);
    }
}
