//! `div(|Du + e|^(p-2) (Du + e)) = f` with Dirichlet data, by nonlinear
//! successive over-relaxation. Each node update solves its own scalar
//! residual equation exactly (the node residual is monotone in `u_i`).

use crate::error::{Error, Result};
use crate::px::exponent::ExponentField;
use crate::px::grid::{Grid, GridFunction};
use crate::px::operator::{Face, FluxStencil};
use crate::solver::kernel::{coarsen, inject, monotone_root, omega, prolong};
use crate::solver::{HistoryRow, SolveConfig, SolveOutcome};

/// Sweeps between checks that the relaxation factor still helps.
const STALL_WINDOW: usize = 50;

/// Everything the Dirichlet kernel needs besides the configuration.
#[derive(Clone, Debug)]
pub struct DirichletProblem<'a> {
    pub p: &'a ExponentField,
    pub f: &'a GridFunction,
    /// Values on the fixed nodes (the box boundary plus `fixed`). Values at
    /// free nodes are ignored unless `initial` is absent and no nested start
    /// is possible, in which case they seed the iteration.
    pub data: &'a GridFunction,
    /// Extra fixed nodes besides the box boundary.
    pub fixed: Option<Vec<bool>>,
    /// Constant shift `e` inside the flux.
    pub shift: Option<Vec<f64>>,
    pub initial: Option<&'a GridFunction>,
}

impl<'a> DirichletProblem<'a> {
    pub fn new(p: &'a ExponentField, f: &'a GridFunction, data: &'a GridFunction) -> Self {
        Self { p, f, data, fixed: None, shift: None, initial: None }
    }

    fn fixed_mask(&self) -> Vec<bool> {
        let g = self.data.grid();
        (0..g.len())
            .map(|i| g.is_boundary(i) || self.fixed.as_ref().is_some_and(|m| m[i]))
            .collect()
    }

    pub fn solve(&self, config: &SolveConfig) -> Result<SolveOutcome> {
        config.validate()?;
        let grid = self.data.grid();
        grid.ensure_matches(self.f.grid())?;
        if let Some(m) = &self.fixed {
            if m.len() != grid.len() {
                return Err(Error::GridMismatch(format!("fixed mask has {} entries for {} nodes", m.len(), grid.len())));
            }
        }
        if let Some(e) = &self.shift {
            if e.len() != grid.dim() {
                return Err(Error::Domain(format!("shift of dimension {} on a {}-dimensional grid", e.len(), grid.dim())));
            }
        }
        if let Some(u0) = self.initial {
            grid.ensure_matches(u0.grid())?;
        }
        self.p.validate_on(grid)?;
        let fixed = self.fixed_mask();
        let start = match self.initial {
            Some(u0) => merge(u0.values(), self.data.values(), &fixed),
            None => self.nested_start(grid, &fixed, config),
        };
        let (values, history, converged) = run(grid, self.p, self.f.values(), &fixed, self.shift.as_deref(), start, config);
        let last = history.last().copied().unwrap_or(HistoryRow { iteration: 0, residual: 0.0, energy: f64::NAN });
        if !converged {
            return Err(Error::NonConvergence { iterations: last.iteration, residual: last.residual });
        }
        Ok(SolveOutcome {
            field: GridFunction::new(grid.clone(), values, "u")?,
            iterations: last.iteration,
            residual: last.residual,
            history,
        })
    }

    /// Interior seed: a solve on the coarser lattice prolonged, or the data
    /// mean when the lattice cannot be coarsened.
    fn nested_start(&self, grid: &Grid, fixed: &[bool], config: &SolveConfig) -> Vec<f64> {
        if config.nested_start {
            if let Some(coarse) = coarsen(grid, 4) {
                let cf = GridFunction::new(coarse.clone(), inject(self.f.values(), grid, &coarse), "f");
                let cd = GridFunction::new(coarse.clone(), inject(self.data.values(), grid, &coarse), "data");
                if let (Ok(cf), Ok(cd)) = (cf, cd) {
                    let cfixed_raw: Vec<f64> =
                        inject(&fixed.iter().map(|b| if *b { 1.0 } else { 0.0 }).collect::<Vec<_>>(), grid, &coarse);
                    let cfixed: Vec<bool> = cfixed_raw.iter().map(|v| *v > 0.5).collect();
                    let cstart = {
                        let sub = DirichletProblem {
                            p: self.p,
                            f: &cf,
                            data: &cd,
                            fixed: Some(cfixed.clone()),
                            shift: self.shift.clone(),
                            initial: None,
                        };
                        sub.nested_start(&coarse, &sub.fixed_mask(), config)
                    };
                    let (cv, _, _) = run(&coarse, self.p, cf.values(), &cfixed, self.shift.as_deref(), cstart, config);
                    if let Ok(cu) = GridFunction::new(coarse, cv, "u") {
                        return merge(&prolong(&cu, grid), self.data.values(), fixed);
                    }
                }
            }
        }
        let (sum, count) = self
            .data
            .values()
            .iter()
            .zip(fixed)
            .filter(|(_, f)| **f)
            .fold((0.0, 0usize), |(s, c), (v, _)| (s + v, c + 1));
        let mean = if count > 0 { sum / count as f64 } else { 0.0 };
        let seed: Vec<f64> = vec![mean; grid.len()];
        merge(&seed, self.data.values(), fixed)
    }
}

fn merge(free: &[f64], data: &[f64], fixed: &[bool]) -> Vec<f64> {
    free.iter().zip(data).zip(fixed).map(|((a, b), f)| if *f { *b } else { *a }).collect()
}

fn sup_residual(stencil: &FluxStencil, u: &[f64], f: &[f64], free: &[usize]) -> f64 {
    free.iter().fold(0.0, |m, &i| m.max(stencil.residual_at(u, i, f[i]).abs()))
}

/// Nonlinear SOR sweeps in lexicographic order. Returns the iterate, the
/// residual history and whether the tolerance was met.
fn run(
    grid: &Grid,
    p: &ExponentField,
    f: &[f64],
    fixed: &[bool],
    shift: Option<&[f64]>,
    mut u: Vec<f64>,
    config: &SolveConfig,
) -> (Vec<f64>, Vec<HistoryRow>, bool) {
    let stencil = FluxStencil::new(grid, p, config.delta, shift);
    let free: Vec<usize> = (0..grid.len()).filter(|i| !fixed[*i]).collect();
    let f_sup = free.iter().fold(0.0f64, |m, &i| m.max(f[i].abs()));
    let target = config.tolerance * f_sup.max(1.0);
    let mut w = omega(config.relaxation, grid);
    let mut history = Vec::new();
    let mut residual = sup_residual(&stencil, &u, f, &free);
    history.push(HistoryRow { iteration: 0, residual, energy: f64::NAN });
    if residual <= target || free.is_empty() {
        return (u, history, true);
    }
    let mut faces = vec![(Face::default(), Face::default()); grid.dim()];
    let mut checkpoint = residual;
    for it in 1..=config.max_iterations {
        for &i in &free {
            for (d, slot) in faces.iter_mut().enumerate() {
                *slot = stencil.faces(&u, i, d);
            }
            let fi = f[i];
            let t = monotone_root(
                |t| {
                    let (r, dr) = stencil.node_residual(&faces, t, fi);
                    (-r, -dr)
                },
                u[i],
            );
            u[i] += w * (t - u[i]);
        }
        residual = sup_residual(&stencil, &u, f, &free);
        history.push(HistoryRow { iteration: it, residual, energy: f64::NAN });
        if residual <= target {
            return (u, history, true);
        }
        if !residual.is_finite() {
            return (u, history, false);
        }
        if it % STALL_WINDOW == 0 {
            if residual > 0.9 * checkpoint && w > 1.0 {
                w = 1.0 + 0.5 * (w - 1.0);
            }
            checkpoint = residual;
        }
    }
    (u, history, false)
}

/// Solves `div(|Du|^(p-2) Du) = f` with `u = data` on the box boundary.
pub fn solve_dirichlet(
    p: &ExponentField,
    f: &GridFunction,
    data: &GridFunction,
    config: &SolveConfig,
) -> Result<SolveOutcome> {
    DirichletProblem::new(p, f, data).solve(config)
}

/// As [`solve_dirichlet`] with additional fixed nodes (for example the hole
/// of an annulus).
pub fn solve_dirichlet_masked(
    p: &ExponentField,
    f: &GridFunction,
    data: &GridFunction,
    fixed: Vec<bool>,
    config: &SolveConfig,
) -> Result<SolveOutcome> {
    DirichletProblem { fixed: Some(fixed), ..DirichletProblem::new(p, f, data) }.solve(config)
}

/// Solves `div(|Dv + e|^(p-2) (Dv + e)) = f` with `v = data` on the box
/// boundary; `e` must be a unit vector.
pub fn solve_shifted(
    p: &ExponentField,
    f: &GridFunction,
    e: &[f64],
    data: &GridFunction,
    config: &SolveConfig,
) -> Result<SolveOutcome> {
    let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!("shift must be a unit vector, |e| = {norm}")));
    }
    DirichletProblem { shift: Some(e.to_vec()), ..DirichletProblem::new(p, f, data) }.solve(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::px::operator::{eval_p_laplacian_div, eval_p_laplacian_div_with};
    use proptest::prelude::*;

    fn radial_setup(cells: usize, p0: f64, gamma: f64) -> (ExponentField, GridFunction, GridFunction, Vec<bool>) {
        let g = Grid::cube(2, -1.0, 1.0, cells).unwrap();
        let p = ExponentField::constant(2, p0).unwrap();
        let r = |x: &[f64]| x[0].hypot(x[1]);
        let exact = |x: &[f64]| r(x).max(1e-3).powf(-gamma);
        let rhs = move |x: &[f64]| {
            let rr = r(x).max(1e-3);
            gamma.powf(p0 - 1.0) * rr.powf(-gamma * (p0 - 1.0) - p0) * (gamma * (p0 - 1.0) + p0 - 2.0)
        };
        let data = GridFunction::from_fn(&g, "data", exact);
        let f = GridFunction::from_fn(&g, "f", rhs);
        let fixed = (0..g.len()).map(|i| {
            let rr = r(&g.point(i));
            !(0.1..=1.0).contains(&rr)
        }).collect();
        (p, f, data, fixed)
    }

    #[test]
    fn linear_data_is_reproduced() {
        let g = Grid::cube(2, -1.0, 1.0, 16).unwrap();
        let p = ExponentField::constant(2, 2.0).unwrap();
        let data = GridFunction::from_fn(&g, "b", |x| x[1]);
        let f = GridFunction::constant(&g, "f", 0.0);
        let out = solve_dirichlet(&p, &f, &data, &SolveConfig::default()).unwrap();
        assert!(out.field.sup_distance(&data).unwrap() < 1e-9);
        assert!(eval_p_laplacian_div(&out.field, &p, &f).unwrap().sup_norm() <= 1e-9);
    }

    #[test]
    fn one_dimensional_degenerate_closed_form() {
        let p = ExponentField::constant(1, 3.0).unwrap();
        let exact = |x: f64| {
            let s = (0.5 - x).abs();
            2.0 / 3.0 * (s.powf(1.5) - 0.5f64.powf(1.5))
        };
        let mut errs = Vec::new();
        for cells in [64usize, 128, 256] {
            let g = Grid::cube(1, 0.0, 1.0, cells).unwrap();
            let f = GridFunction::constant(&g, "f", 1.0);
            let data = GridFunction::constant(&g, "b", 0.0);
            let out = solve_dirichlet(&p, &f, &data, &SolveConfig::default()).unwrap();
            errs.push(out.field.sup_error_where(|x| exact(x[0]), |_| true));
        }
        assert!(errs[2] < errs[0] && errs[2] < 2e-3, "{errs:?}");
    }

    #[test]
    fn manufactured_radial_solution_converges() {
        let mut errs = Vec::new();
        for cells in [32usize, 64] {
            let (p, f, data, fixed) = radial_setup(cells, 2.5, 1.0);
            let out = solve_dirichlet_masked(&p, &f, &data, fixed, &SolveConfig::default()).unwrap();
            errs.push(out.field.sup_distance(&data).unwrap());
        }
        assert!((errs[0] / errs[1]).log2() >= 1.0, "{errs:?}");
    }

    #[test]
    fn shifted_zero_data_is_zero() {
        let g = Grid::cube(2, -1.0, 1.0, 8).unwrap();
        let p = ExponentField::constant(2, 1.7).unwrap();
        let zero = GridFunction::constant(&g, "z", 0.0);
        let out = solve_shifted(&p, &zero, &[0.0, 1.0], &zero, &SolveConfig::default()).unwrap();
        assert!(out.field.sup_norm() < 1e-12);
        assert!(solve_shifted(&p, &zero, &[0.0, 2.0], &zero, &SolveConfig::default()).is_err());
    }

    #[test]
    fn shifted_matches_dirichlet_after_substitution() {
        let g = Grid::cube(2, -1.0, 1.0, 16).unwrap();
        let p = ExponentField::affine(2.5, vec![0.1, 0.05], vec![0.0, 0.0], 1.0).unwrap();
        let data = GridFunction::from_fn(&g, "b", |x| x[1] + 0.1 * x[0] * x[0]);
        let f = GridFunction::constant(&g, "f", 0.05);
        let u = solve_dirichlet(&p, &f, &data, &SolveConfig::default()).unwrap().field;
        let v = GridFunction::from_fn(&g, "v", |x| -x[1]).values().iter().zip(u.values()).map(|(a, b)| a + b).collect();
        let v = GridFunction::new(g.clone(), v, "v").unwrap();
        let r = eval_p_laplacian_div_with(&v, &p, &f, 1e-8, Some(&[0.0, 1.0])).unwrap();
        assert!(r.sup_norm() < 1e-8, "{}", r.sup_norm());
    }

    #[test]
    fn shift_drops_out_for_p_two() {
        let g = Grid::cube(2, -1.0, 1.0, 16).unwrap();
        let p = ExponentField::constant(2, 2.0).unwrap();
        let data = GridFunction::from_fn(&g, "b", |x| (x[0] * 2.0).sin() * x[1]);
        let f = GridFunction::from_fn(&g, "f", |x| x[0] - x[1]);
        let a = solve_dirichlet(&p, &f, &data, &SolveConfig::default()).unwrap().field;
        let b = solve_shifted(&p, &f, &[0.6, 0.8], &data, &SolveConfig::default()).unwrap().field;
        assert!(a.sup_distance(&b).unwrap() < 1e-9);
    }

    #[test]
    fn bad_exponent_is_rejected() {
        let g = Grid::cube(1, 0.0, 1.0, 8).unwrap();
        let p = ExponentField::from_fn(1, |x| 2.0 + x[0], 2.0, 2.5, 1.0).unwrap();
        let z = GridFunction::constant(&g, "z", 0.0);
        assert!(matches!(solve_dirichlet(&p, &z, &z, &SolveConfig::default()), Err(Error::Domain(_))));
    }

    #[test]
    fn nonconvergence_carries_residual() {
        let g = Grid::cube(2, -1.0, 1.0, 32).unwrap();
        let p = ExponentField::constant(2, 2.0).unwrap();
        let data = GridFunction::from_fn(&g, "b", |x| x[0] * x[0]);
        let f = GridFunction::constant(&g, "f", 0.0);
        let cfg = SolveConfig { max_iterations: 2, nested_start: false, ..SolveConfig::default() };
        match solve_dirichlet(&p, &f, &data, &cfg) {
            Err(Error::NonConvergence { iterations, residual }) => {
                assert_eq!(iterations, 2);
                assert!(residual > 0.0);
            }
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn discrete_comparison(
            p0 in 1.5f64..3.0,
            lift in 0.0f64..0.5,
            df in 0.0f64..1.0,
            a in -1.0f64..1.0,
        ) {
            let g = Grid::cube(2, -1.0, 1.0, 12).unwrap();
            let p = ExponentField::constant(2, p0).unwrap();
            let b1 = GridFunction::from_fn(&g, "b1", |x| a * x[0] + x[1]);
            let b2 = b1.map(|v| v + lift);
            let f1 = GridFunction::from_fn(&g, "f1", |x| 0.2 + 0.1 * x[0] + df);
            let f2 = GridFunction::from_fn(&g, "f2", |x| 0.2 + 0.1 * x[0]);
            let cfg = SolveConfig::default();
            let u1 = solve_dirichlet(&p, &f1, &b1, &cfg).unwrap().field;
            let u2 = solve_dirichlet(&p, &f2, &b2, &cfg).unwrap().field;
            for (a, b) in u1.values().iter().zip(u2.values()) {
                prop_assert!(*a <= b + 1e-8);
            }
        }
    }
}
