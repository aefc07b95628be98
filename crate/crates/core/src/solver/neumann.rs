//! `L u = sum_{d<n} u_dd + (p0 - 1) u_nn = 0` on the half box
//! `[-rho, rho]^(n-1) x [0, rho]` with `u_n = 0` on `{x_n = 0}` (ghost
//! reflection `u(-h) = u(h)`) and Dirichlet data elsewhere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::px::grid::{Grid, GridFunction};
use crate::solver::kernel::omega;
use crate::solver::{HistoryRow, SolveConfig, SolveOutcome};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeumannOptions {
    pub dim: usize,
    /// Cells per unit length.
    pub cells_per_unit: usize,
    /// When false the box is `[-rho, rho]^n` with Dirichlet data on every
    /// side (used to test reflection symmetry).
    pub neumann_bottom: bool,
    /// Exponent bounds `p0` must respect.
    pub p_bounds: Option<(f64, f64)>,
}

impl NeumannOptions {
    pub fn new(dim: usize, cells_per_unit: usize) -> Self {
        Self { dim, cells_per_unit, neumann_bottom: true, p_bounds: None }
    }
}

pub fn solve_neumann_linearized(
    p0: f64,
    rho: f64,
    data: &dyn Fn(&[f64]) -> f64,
    options: &NeumannOptions,
    config: &SolveConfig,
) -> Result<SolveOutcome> {
    config.validate()?;
    if !(p0 > 1.0 && p0.is_finite()) {
        return Err(Error::Domain(format!("requires 1 < p0 < inf, got {p0}")));
    }
    if let Some((lo, hi)) = options.p_bounds {
        if !(lo <= p0 && p0 <= hi) {
            return Err(Error::Domain(format!("p0 = {p0} outside [{lo}, {hi}]")));
        }
    }
    if !(rho > 0.0) {
        return Err(Error::Domain(format!("rho must be positive, got {rho}")));
    }
    let n = options.dim;
    if n == 0 {
        return Err(Error::Domain("dimension must be at least 1".into()));
    }
    let cells_side = ((rho * options.cells_per_unit as f64).round() as usize).max(2);
    let mut lower = vec![-rho; n];
    let upper = vec![rho; n];
    let mut cells = vec![2 * cells_side; n];
    if options.neumann_bottom {
        lower[n - 1] = 0.0;
        cells[n - 1] = cells_side;
    }
    let grid = Grid::new(lower, upper, &cells)?;
    let m = grid.shape()[n - 1];
    let strides = grid.strides().to_vec();
    let on_bottom = |i: usize| options.neumann_bottom && (i / strides[n - 1]).is_multiple_of(m);
    // unknown: interior, or on the flat bottom away from the lateral sides
    let unknown: Vec<bool> = (0..grid.len())
        .map(|i| {
            (0..n).all(|d| {
                let k = (i / strides[d]) % grid.shape()[d];
                k + 1 < grid.shape()[d] && (k > 0 || (d == n - 1 && on_bottom(i)))
            })
        })
        .collect();
    let free: Vec<usize> = (0..grid.len()).filter(|i| unknown[*i]).collect();
    let mut u: Vec<f64> = (0..grid.len()).map(|i| data(&grid.point(i))).collect();
    let fixed_mean = {
        let (s, c) = (0..grid.len()).filter(|i| !unknown[*i]).fold((0.0, 0usize), |(s, c), i| (s + u[i], c + 1));
        s / c.max(1) as f64
    };
    for &i in &free {
        u[i] = fixed_mean;
    }
    let h = grid.spacing().to_vec();
    let coef: Vec<f64> = (0..n).map(|d| if d == n - 1 { p0 - 1.0 } else { 1.0 } / (h[d] * h[d])).collect();
    let diag: f64 = 2.0 * coef.iter().sum::<f64>();
    // (sum of weighted neighbors, residual) at node i
    let neighbors = |u: &[f64], i: usize| -> f64 {
        let mut s = 0.0;
        for d in 0..n {
            let up = u[grid.neighbor(i, d, true).expect("unknown nodes have an upper neighbor")];
            let down = match grid.neighbor(i, d, false) {
                Some(j) => u[j],
                None => up, // ghost reflection across x_n = 0
            };
            s += coef[d] * (up + down);
        }
        s
    };
    let residual = |u: &[f64]| free.iter().fold(0.0f64, |r, &i| r.max((neighbors(u, i) - diag * u[i]).abs()));
    let w = omega(config.relaxation, &grid);
    let mut history = vec![HistoryRow { iteration: 0, residual: residual(&u), energy: f64::NAN }];
    let target = config.tolerance;
    if history[0].residual <= target {
        return Ok(SolveOutcome { field: GridFunction::new(grid, u, "u_tilde")?, history, iterations: 0, residual: 0.0 });
    }
    for it in 1..=config.max_iterations {
        for &i in &free {
            let gs = neighbors(&u, i) / diag;
            u[i] += w * (gs - u[i]);
        }
        let r = residual(&u);
        history.push(HistoryRow { iteration: it, residual: r, energy: f64::NAN });
        if r <= target {
            return Ok(SolveOutcome { field: GridFunction::new(grid, u, "u_tilde")?, history, iterations: it, residual: r });
        }
        if !r.is_finite() {
            break;
        }
    }
    let last = history.last().expect("nonempty history");
    Err(Error::NonConvergence { iterations: last.iteration, residual: last.residual })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemainderFit {
    pub radii: Vec<f64>,
    /// `max_{|x| <= r} |u(x) - u(0) - Du(0).x| / r^2` per radius.
    pub constants: Vec<f64>,
    pub gradient_at_origin: Vec<f64>,
    /// Factor applied so that `||u||_inf <= 1`.
    pub normalization: f64,
    /// `max / min` of the constants (1 when they agree).
    pub spread: f64,
}

/// Fits the quadratic remainder constant of `u` at the origin over balls of
/// the given radii. The origin must be a lattice node.
pub fn quadratic_remainder(u: &GridFunction, radii: &[f64]) -> Result<RemainderFit> {
    let grid = u.grid();
    let n = grid.dim();
    let origin = vec![0.0; n];
    if !grid.contains(&origin) {
        return Err(Error::Domain("origin outside the lattice".into()));
    }
    let o = grid.nearest_node(&origin);
    if grid.point(o).iter().any(|c| c.abs() > 1e-12) {
        return Err(Error::Domain("origin is not a lattice node".into()));
    }
    let sup = u.sup_norm();
    let scale = if sup > 1.0 { 1.0 / sup } else { 1.0 };
    let v = u.values();
    let grad: Vec<f64> = (0..n)
        .map(|d| {
            let h = grid.spacing()[d];
            match (grid.neighbor(o, d, false), grid.neighbor(o, d, true)) {
                (Some(m), Some(p)) => (v[p] - v[m]) / (2.0 * h) * scale,
                (None, Some(p)) => {
                    let pp = grid.neighbor(p, d, true).unwrap_or(p);
                    (-3.0 * v[o] + 4.0 * v[p] - v[pp]) / (2.0 * h) * scale
                }
                (Some(m), None) => {
                    let mm = grid.neighbor(m, d, false).unwrap_or(m);
                    (3.0 * v[o] - 4.0 * v[m] + v[mm]) / (2.0 * h) * scale
                }
                (None, None) => 0.0,
            }
        })
        .collect();
    let u0 = v[o] * scale;
    let mut constants = Vec::with_capacity(radii.len());
    for &r in radii {
        let nodes = grid.nodes_in_ball(&origin, r);
        if nodes.len() < 2 {
            return Err(Error::InsufficientSamples(format!("ball of radius {r} holds {} nodes", nodes.len())));
        }
        let mut c: f64 = 0.0;
        for i in nodes {
            let x = grid.point(i);
            let lin: f64 = grad.iter().zip(&x).map(|(g, x)| g * x).sum();
            c = c.max((v[i] * scale - u0 - lin).abs() / (r * r));
        }
        constants.push(c);
    }
    let max = constants.iter().cloned().fold(0.0, f64::max);
    let min = constants.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = if max == 0.0 { 1.0 } else { max / min };
    Ok(RemainderFit { radii: radii.to_vec(), constants, gradient_at_origin: grad, normalization: scale, spread })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_tangential_data_is_reproduced() {
        let out = solve_neumann_linearized(2.5, 1.0, &|x| x[0], &NeumannOptions::new(2, 16), &SolveConfig::default()).unwrap();
        assert!(out.field.sup_error_where(|x| x[0], |_| true) < 1e-9);
    }

    #[test]
    fn polynomial_solution_is_reproduced() {
        for p0 in [1.5, 2.0, 3.0] {
            let exact = move |x: &[f64]| x[0] * x[0] - x[1] * x[1] / (p0 - 1.0);
            let out = solve_neumann_linearized(p0, 1.0, &exact, &NeumannOptions::new(2, 32), &SolveConfig::default()).unwrap();
            assert!(out.field.sup_error_where(exact, |_| true) < 1e-9, "p0 = {p0}");
        }
    }

    #[test]
    fn remainder_constant_is_stable() {
        let p0 = 2.5;
        let k = 1.0 / (p0 - 1.0f64).sqrt();
        let exact = move |x: &[f64]| x[0].exp() * (k * x[1]).cos();
        let out = solve_neumann_linearized(p0, 1.0, &exact, &NeumannOptions::new(2, 64), &SolveConfig::default()).unwrap();
        let fit = quadratic_remainder(&out.field, &[1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0]).unwrap();
        assert!(fit.constants.iter().all(|c| c.is_finite() && *c > 0.0));
        assert!(fit.spread <= 2.0, "{fit:?}");
        assert!(fit.gradient_at_origin[1].abs() < 1e-3);
    }

    #[test]
    fn reflection_symmetry_of_even_data() {
        let p0 = 1.8;
        let data = |x: &[f64]| (2.0 * x[0]).sin() + x[1] * x[1] + 0.3 * x[0] * x[1] * x[1];
        let mut full = NeumannOptions::new(2, 16);
        full.neumann_bottom = false;
        let u = solve_neumann_linearized(p0, 1.0, &data, &full, &SolveConfig::default()).unwrap().field;
        let g = u.grid();
        for i in 0..g.len() {
            let mut x = g.point(i);
            x[1] = -x[1];
            let j = g.nearest_node(&x);
            assert!((u.at(i) - u.at(j)).abs() < 1e-8);
        }
        // the half-box solution agrees with the full solve on x_n >= 0
        let half = solve_neumann_linearized(p0, 1.0, &data, &NeumannOptions::new(2, 16), &SolveConfig::default()).unwrap().field;
        for i in 0..half.grid().len() {
            let x = half.grid().point(i);
            assert!((half.at(i) - u.interpolate(&x).unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn exponent_precondition() {
        let mut o = NeumannOptions::new(2, 8);
        o.p_bounds = Some((1.5, 2.0));
        assert!(solve_neumann_linearized(2.5, 1.0, &|_| 0.0, &o, &SolveConfig::default()).is_err());
        assert!(solve_neumann_linearized(2.0, -1.0, &|_| 0.0, &NeumannOptions::new(2, 8), &SolveConfig::default()).is_err());
    }
}
