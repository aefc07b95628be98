//! Empirical constant of `sup_{B_R} v <= C [inf_{B_R} v + R (||f||^(1/(p_max-1)) + C)]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::px::grid::GridFunction;

/// Nodes where `v` may dip this far below zero before it counts as negative.
pub const NEGATIVITY_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnackReport {
    pub center: Vec<f64>,
    pub radius: f64,
    pub sup: f64,
    pub inf: f64,
    /// `R ||f||^(1/(p_max - 1))`.
    pub rhs_term: f64,
    /// Positive root of `R C^2 + (inf + rhs) C - sup = 0`; `0` when `v`
    /// vanishes on the ball.
    pub c_emp: f64,
}

/// Smallest `C` for which the quasi-Harnack inequality holds with equality
/// on `B_R(center)`. `v` must be nonnegative on the lattice part of
/// `B_{4R}(center)`.
pub fn harnack_ratio(v: &GridFunction, center: &[f64], radius: f64, f_sup: f64, p_max: f64) -> Result<HarnackReport> {
    let grid = v.grid();
    if !(radius > 0.0) || !(f_sup >= 0.0) || !(p_max > 1.0) {
        return Err(Error::Domain(format!("need R > 0, ||f|| >= 0 and p_max > 1 (got {radius}, {f_sup}, {p_max})")));
    }
    if center.len() != grid.dim() || !grid.contains_ball(center, radius) {
        return Err(Error::BallOutOfDomain { center: center.to_vec(), radius });
    }
    let outer = grid.nodes_in_ball(center, 4.0 * radius);
    let min = outer.iter().map(|&i| v.at(i)).fold(f64::INFINITY, f64::min);
    if min < -NEGATIVITY_TOLERANCE {
        return Err(Error::Negativity { min });
    }
    let nodes = grid.nodes_in_ball(center, radius);
    let sup = nodes.iter().map(|&i| v.at(i)).fold(f64::NEG_INFINITY, f64::max).max(0.0);
    let inf = nodes.iter().map(|&i| v.at(i)).fold(f64::INFINITY, f64::min).max(0.0);
    let rhs_term = radius * f_sup.powf(1.0 / (p_max - 1.0));
    let b = inf + rhs_term;
    let c_emp = if sup == 0.0 {
        0.0
    } else {
        // 2 sup / (b + sqrt(b^2 + 4 R sup)) avoids cancellation
        2.0 * sup / (b + (b * b + 4.0 * radius * sup).sqrt())
    };
    Ok(HarnackReport { center: center.to_vec(), radius, sup, inf, rhs_term, c_emp })
}
