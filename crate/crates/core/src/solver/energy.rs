//! Pointwise cyclic minimization of the discrete free boundary energy
//! `sum |Dv|^p / p + Q^2 chi{v > 0} + f v` over nonnegative `v`.
//!
//! The gradient term is integrated per cell as the average over the cell's
//! corners of the one-sided corner gradients, which reduces to the standard
//! five-point Dirichlet energy for `p = 2` and carries no checkerboard mode.

use crate::error::{Error, Result};
use crate::px::exponent::ExponentField;
use crate::px::grid::{Grid, GridFunction};
use crate::solver::kernel::{coarsen, inject, monotone_root, omega, prolong};
use crate::solver::{HistoryRow, SolveConfig, SolveOutcome};

#[derive(Clone, Debug)]
pub struct EnergyProblem<'a> {
    pub p: &'a ExponentField,
    pub f: &'a GridFunction,
    pub q: &'a GridFunction,
    /// Dirichlet data on the box boundary.
    pub data: &'a GridFunction,
}

impl EnergyProblem<'_> {
    pub fn validate(&self) -> Result<()> {
        let g = self.data.grid();
        g.ensure_matches(self.f.grid())?;
        g.ensure_matches(self.q.grid())?;
        if let Some(v) = self.q.values().iter().find(|v| **v < 0.0) {
            return Err(Error::Domain(format!("Q must be nonnegative, found {v}")));
        }
        let min = self.data.min();
        if min < 0.0 {
            return Err(Error::Negativity { min });
        }
        self.p.validate_on(g)
    }
}

/// Per-lattice quantities reused by every node update.
struct Layout<'a> {
    grid: &'a Grid,
    /// Exponent at each cell center, indexed by the cell's lowest node.
    p_cell: Vec<f64>,
    delta2: f64,
    corner_weight: f64,
    node_weight: f64,
    offsets: Vec<usize>,
    /// Every cell has `p = 2`, so the local energy is quadratic.
    quadratic: bool,
}

impl<'a> Layout<'a> {
    fn new(grid: &'a Grid, p: &ExponentField, delta: f64) -> Self {
        let n = grid.dim();
        let corners = 1usize << n;
        let offsets = (0..corners)
            .map(|k| (0..n).filter(|d| k >> d & 1 == 1).map(|d| grid.strides()[d]).sum())
            .collect();
        let h = grid.spacing();
        let p_cell: Vec<f64> = (0..grid.len())
            .map(|i| {
                if Self::is_cell_base(grid, i) {
                    let x: Vec<f64> = grid.point(i).iter().zip(h).map(|(x, h)| x + 0.5 * h).collect();
                    p.p(&x)
                } else {
                    f64::NAN
                }
            })
            .collect();
        let vol = grid.cell_volume();
        let quadratic = p_cell.iter().all(|p: &f64| p.is_nan() || *p == 2.0);
        Self { grid, p_cell, delta2: delta * delta, corner_weight: vol / corners as f64, node_weight: vol, offsets, quadratic }
    }

    fn is_cell_base(grid: &Grid, i: usize) -> bool {
        (0..grid.dim()).all(|d| grid.neighbor(i, d, true).is_some())
    }

    /// Lowest nodes of the cells containing node `i`, with `i`'s corner
    /// mask in each.
    fn cells_of(&self, i: usize, out: &mut Vec<(usize, usize)>) {
        out.clear();
        let n = self.grid.dim();
        let (strides, shape) = (self.grid.strides(), self.grid.shape());
        'cells: for mask in 0..(1usize << n) {
            let mut base = i;
            for d in 0..n {
                let m = (i / strides[d]) % shape[d];
                if mask >> d & 1 == 1 {
                    if m == 0 {
                        continue 'cells;
                    }
                    base -= strides[d];
                } else if m + 1 >= shape[d] {
                    continue 'cells;
                }
            }
            out.push((base, mask));
        }
    }

    /// Gradient energy of one cell and its first two derivatives in the
    /// value at corner `own` (set to `t`).
    fn cell_terms(&self, v: &[f64], base: usize, own: usize, t: f64) -> (f64, f64, f64) {
        let n = self.grid.dim();
        let corners = 1usize << n;
        let h = self.grid.spacing();
        let p = self.p_cell[base];
        let val = |k: usize| if k == own { t } else { v[base + self.offsets[k]] };
        let (mut e, mut de, mut dde) = (0.0, 0.0, 0.0);
        for k in 0..corners {
            let mut g2 = 0.0;
            let mut gdg = 0.0;
            let mut dg2 = 0.0;
            for d in 0..n {
                let lo = k & !(1 << d);
                let hi = k | (1 << d);
                let g = (val(hi) - val(lo)) / h[d];
                g2 += g * g;
                let dg = if hi == own {
                    1.0 / h[d]
                } else if lo == own {
                    -1.0 / h[d]
                } else {
                    0.0
                };
                gdg += g * dg;
                dg2 += dg * dg;
            }
            if p == 2.0 {
                e += 0.5 * g2;
                de += gdg;
                dde += dg2;
            } else {
                let m = g2 + self.delta2;
                let a = m.powf(0.5 * p - 1.0);
                e += a * m / p;
                de += a * gdg;
                dde += a * dg2 + (p - 2.0) * a / m * gdg * gdg;
            }
        }
        (e * self.corner_weight, de * self.corner_weight, dde * self.corner_weight)
    }

    fn total(&self, v: &[f64], f: &[f64], q: &[f64]) -> f64 {
        let mut e = 0.0;
        for base in 0..self.grid.len() {
            if Self::is_cell_base(self.grid, base) {
                e += self.cell_terms(v, base, usize::MAX, 0.0).0;
            }
        }
        for i in 0..self.grid.len() {
            let jump = if v[i] > 0.0 { q[i] * q[i] } else { 0.0 };
            e += self.node_weight * (jump + f[i] * v[i]);
        }
        e
    }
}

/// The discrete energy of `v`.
pub fn discrete_energy(problem: &EnergyProblem, v: &GridFunction, delta: f64) -> Result<f64> {
    problem.validate()?;
    v.grid().ensure_matches(problem.data.grid())?;
    let layout = Layout::new(v.grid(), problem.p, delta);
    Ok(layout.total(v.values(), problem.f.values(), problem.q.values()))
}

/// Pointwise cyclic minimization. Smooth sweeps update every node inside
/// its current phase until the energy settles; phase passes then apply the
/// two-candidate comparison (stationary value against truncation to `0`),
/// with the set of nodes allowed to switch frozen at the start of the pass.
/// Passes after a few sweeps only truncate nodes with two vanishing axis
/// neighbours, which lets switches run along the free boundary; truncation
/// across it is decided on a settled profile, which keeps the free boundary
/// from running ahead of the slower smooth relaxation.
///
/// The start is a solve on the lattice with half the cells, prolonged, with
/// its positive phase widened by two coarse cells so that the fine free
/// boundary is approached from the positive side; on the coarsest lattice it
/// is the harmonic extension of the data.
pub fn minimize_energy(problem: &EnergyProblem, config: &SolveConfig) -> Result<SolveOutcome> {
    config.validate()?;
    problem.validate()?;
    let (v, history, converged) = solve_level(problem, config)?;
    let last = *history.last().expect("history has the initial row");
    if !converged {
        return Err(Error::NonConvergence { iterations: last.iteration, residual: last.residual });
    }
    Ok(SolveOutcome {
        field: GridFunction::new(problem.data.grid().clone(), v, "u")?,
        iterations: last.iteration,
        residual: last.residual,
        history,
    })
}

/// Sweep change, in units of `h^2` times the solution scale, below which a
/// profile is settled enough for an intermediate phase pass.
const LOOSE_SETTLE: f64 = 1e-4;
/// Smooth sweeps between phase passes while the free boundary moves.
const SHORT_SWEEPS: usize = 8;

#[derive(Clone, Copy, Debug)]
enum Stage {
    Short,
    Loose,
    Tight,
}

/// Coarsest lattice used by the nested start, in cells per axis.
const COARSEST_CELLS: usize = 8;
/// Widening of the prolonged positive phase, in coarse cells.
const PHASE_MARGIN: usize = 2;

fn solve_level(problem: &EnergyProblem, config: &SolveConfig) -> Result<(Vec<f64>, Vec<HistoryRow>, bool)> {
    let grid = problem.data.grid();
    let mut state = State::new(grid, problem, config);
    let coarse = if config.nested_start { coarsen(grid, COARSEST_CELLS) } else { None };
    match coarse {
        Some(coarse) => {
            let f = GridFunction::new(coarse.clone(), inject(problem.f.values(), grid, &coarse), "f")?;
            let q = GridFunction::new(coarse.clone(), inject(problem.q.values(), grid, &coarse), "q")?;
            let data = GridFunction::new(coarse.clone(), inject(problem.data.values(), grid, &coarse), "data")?;
            let sub = EnergyProblem { p: problem.p, f: &f, q: &q, data: &data };
            let (cv, _, _) = solve_level(&sub, config)?;
            let cu = GridFunction::new(coarse, cv, "u")?;
            let fine = prolong(&cu, grid);
            let positive = dilate(grid, fine.iter().map(|x| *x > 0.0).collect(), 2 * PHASE_MARGIN);
            for i in state.free.clone() {
                if positive[i] {
                    state.v[i] = fine[i].max(0.0);
                } else {
                    state.v[i] = 0.0;
                    state.held[i] = true;
                }
            }
            // settle the widened phase before the energy is tracked
            state.settle_phase(config);
        }
        None => {
            let zero = GridFunction::constant(grid, "zero", 0.0);
            let p2 = ExponentField::constant(grid.dim(), 2.0)?;
            state.v = crate::solver::solve_dirichlet(&p2, &zero, problem.data, config)?.field.into_values();
        }
    }
    Ok(state.run(config))
}

/// Nodes within `r` lattice steps (sup metric) of a marked node.
fn dilate(grid: &Grid, mut mask: Vec<bool>, r: usize) -> Vec<bool> {
    for d in 0..grid.dim() {
        for _ in 0..r {
            let prev = mask.clone();
            for i in 0..grid.len() {
                if prev[i] {
                    continue;
                }
                let hit = |fwd| grid.neighbor(i, d, fwd).is_some_and(|j| prev[j]);
                mask[i] = hit(true) || hit(false);
            }
        }
    }
    mask
}

struct State<'a> {
    layout: Layout<'a>,
    f: &'a [f64],
    q: &'a [f64],
    free: Vec<usize>,
    omega: f64,
    v: Vec<f64>,
    /// Nodes truncated to `0` by a phase pass; smooth sweeps skip them.
    held: Vec<bool>,
    cells: Vec<(usize, usize)>,
}

impl<'a> State<'a> {
    fn new(grid: &'a Grid, problem: &'a EnergyProblem, config: &SolveConfig) -> Self {
        Self {
            layout: Layout::new(grid, problem.p, config.delta),
            f: problem.f.values(),
            q: problem.q.values(),
            free: (0..grid.len()).filter(|i| !grid.is_boundary(*i)).collect(),
            omega: omega(config.relaxation, grid),
            v: problem.data.values().to_vec(),
            held: vec![false; grid.len()],
            cells: Vec::with_capacity(1 << grid.dim()),
        }
    }

    /// Smooth part of the energy as a function of `v_i = t`, with its first
    /// two derivatives.
    fn local(&self, i: usize, t: f64) -> (f64, f64, f64) {
        let w = self.layout.node_weight * self.f[i];
        let (mut e, mut de, mut dde) = (w * t, w, 0.0);
        for &(base, own) in &self.cells {
            let (a, b, c) = self.layout.cell_terms(&self.v, base, own, t);
            e += a;
            de += b;
            dde += c;
        }
        (e, de, dde)
    }

    fn jump(&self, i: usize, t: f64) -> f64 {
        if t > 0.0 {
            self.layout.node_weight * self.q[i] * self.q[i]
        } else {
            0.0
        }
    }

    /// Root of the local derivative; one Newton step when the local energy
    /// is quadratic.
    fn stationary(&self, i: usize) -> f64 {
        if self.layout.quadratic {
            let (_, d1, d2) = self.local(i, self.v[i]);
            if d2 > 0.0 {
                return self.v[i] - d1 / d2;
            }
        }
        monotone_root(
            |t| {
                let (_, d1, d2) = self.local(i, t);
                (d1, d2)
            },
            self.v[i],
        )
    }

    /// Two-candidate local minimizer over `t >= 0`: the stationary value or
    /// truncation to `0`.
    fn best(&self, i: usize) -> f64 {
        let star = self.stationary(i);
        if star <= 0.0 || self.local(i, star).0 + self.jump(i, star) >= self.local(i, 0.0).0 {
            0.0
        } else {
            star
        }
    }

    /// One smooth sweep inside the current phases. With `monotone` the
    /// local energy never increases; without it nodes move to their
    /// stationary values regardless of the jump term.
    fn smooth_sweep(&mut self, monotone: bool) -> f64 {
        let mut max_change: f64 = 0.0;
        for k in 0..self.free.len() {
            let i = self.free[k];
            if self.held[i] {
                continue;
            }
            self.layout.cells_of(i, &mut self.cells);
            let old = self.v[i];
            let star = self.stationary(i);
            let relaxed = old + self.omega * (star - old);
            let same = |t: f64| t >= 0.0 && (!monotone || (t > 0.0) == (old > 0.0));
            let next = if same(relaxed) && self.local(i, relaxed).0 <= self.local(i, old).0 {
                relaxed
            } else if same(star) {
                star
            } else {
                old
            };
            max_change = max_change.max((next - old).abs());
            self.v[i] = next;
        }
        max_change
    }

    /// Phase pass. Returns the number of nodes that switched phase and the
    /// largest change.
    /// With `along_boundary` a node may only be truncated when at least two
    /// of its axis neighbours vanish, so switches travel along the free
    /// boundary but not across it.
    fn phase_pass(&mut self, along_boundary: bool) -> (usize, f64) {
        let mut allowed = Vec::new();
        for k in 0..self.free.len() {
            let i = self.free[k];
            self.layout.cells_of(i, &mut self.cells);
            let b = self.best(i);
            if (b > 0.0) != (self.v[i] > 0.0) || self.held[i] != (b == 0.0) {
                allowed.push(i);
            }
        }
        let mut switched = 0;
        let mut max_change: f64 = 0.0;
        for i in allowed {
            self.layout.cells_of(i, &mut self.cells);
            let old = self.v[i];
            let b = self.best(i);
            let gain = self.local(i, old).0 + self.jump(i, old) - self.local(i, b).0 - self.jump(i, b);
            let permitted = !along_boundary || b > 0.0 || self.zero_neighbors(i) >= 2;
            if (b > 0.0) != (old > 0.0) && gain > 0.0 && permitted {
                self.v[i] = b;
                switched += 1;
                max_change = max_change.max((b - old).abs());
            }
            self.held[i] = self.v[i] == 0.0 && b == 0.0;
        }
        (switched, max_change)
    }

    fn zero_neighbors(&self, i: usize) -> usize {
        let grid = self.layout.grid;
        (0..grid.dim())
            .flat_map(|d| [grid.neighbor(i, d, true), grid.neighbor(i, d, false)])
            .filter(|j| j.is_some_and(|j| self.v[j] == 0.0))
            .count()
    }

    fn settle_phase(&mut self, config: &SolveConfig) {
        let scale = self.scale();
        for _ in 0..config.max_iterations {
            if self.smooth_sweep(false) <= config.tolerance * scale {
                break;
            }
        }
    }

    fn scale(&self) -> f64 {
        self.v.iter().fold(1.0f64, |m, x| m.max(x.abs()))
    }

    fn energy(&self) -> f64 {
        self.layout.total(&self.v, self.f, self.q)
    }

    fn run(mut self, config: &SolveConfig) -> (Vec<f64>, Vec<HistoryRow>, bool) {
        let mut energy = self.energy();
        let mut history = vec![HistoryRow { iteration: 0, residual: f64::INFINITY, energy }];
        let scale = self.scale();
        let h = self.layout.grid.h_max();
        // phase passes first follow a few sweeps each, so that switches can
        // travel along the free boundary; once a pass switches nothing they
        // run on a loosely and then a fully settled profile
        let loose = config.tolerance.max(LOOSE_SETTLE * h * h) * scale;
        let mut stage = Stage::Short;
        let mut since_pass = 0;
        let mut it = 0;
        while it < config.max_iterations {
            it += 1;
            since_pass += 1;
            let change = self.smooth_sweep(true);
            let e = self.energy();
            let decrease = energy - e;
            energy = e;
            history.push(HistoryRow { iteration: it, residual: change, energy });
            let settled = match stage {
                Stage::Short => since_pass >= SHORT_SWEEPS || change <= loose,
                Stage::Loose => change <= loose,
                Stage::Tight => {
                    decrease.abs() < config.tolerance * energy.abs().max(1.0) && change <= config.tolerance * scale
                }
            };
            if !settled {
                continue;
            }
            it += 1;
            since_pass = 0;
            let (switched, change) = self.phase_pass(matches!(stage, Stage::Short));
            energy = self.energy();
            history.push(HistoryRow { iteration: it, residual: change, energy });
            stage = match (switched, stage) {
                (0, Stage::Tight) => return (self.v, history, true),
                (0, Stage::Short) => Stage::Loose,
                (0, Stage::Loose) => Stage::Tight,
                _ => Stage::Short,
            };
        }
        (self.v, history, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::px::phase::extract_positive_phase;

    fn one_d(a: f64, q: f64, cells: usize) -> (Grid, GridFunction, GridFunction, GridFunction, ExponentField) {
        let g = Grid::cube(1, 0.0, 1.0, cells).unwrap();
        let f = GridFunction::constant(&g, "f", 0.0);
        let qf = GridFunction::constant(&g, "q", q);
        let data = GridFunction::from_fn(&g, "data", |x| if x[0] == 0.0 { a } else { 0.0 });
        (g, f, qf, data, ExponentField::constant(1, 2.0).unwrap())
    }

    #[test]
    fn dirichlet_energy_minimizer_is_linear() {
        let g = Grid::cube(2, 0.0, 1.0, 16).unwrap();
        let zero = GridFunction::constant(&g, "z", 0.0);
        let data = GridFunction::from_fn(&g, "data", |x| 1.0 + x[0] + 2.0 * x[1]);
        let p = ExponentField::constant(2, 2.0).unwrap();
        let prob = EnergyProblem { p: &p, f: &zero, q: &zero, data: &data };
        let out = minimize_energy(&prob, &SolveConfig::default()).unwrap();
        assert!(out.field.sup_distance(&data).unwrap() < 1e-7);
    }

    #[test]
    fn energy_never_increases() {
        let (_, f, q, data, p) = one_d(0.5, 1.0, 128);
        let prob = EnergyProblem { p: &p, f: &f, q: &q, data: &data };
        let out = minimize_energy(&prob, &SolveConfig::default()).unwrap();
        for w in out.history.windows(2) {
            assert!(w[1].energy <= w[0].energy + 1e-12 * w[0].energy.abs().max(1.0));
        }
    }

    #[test]
    fn one_dimensional_free_boundary() {
        for (a, qv) in [(0.5, 1.0), (0.5, 2.0)] {
            let (g, f, q, data, p) = one_d(a, qv, 256);
            let prob = EnergyProblem { p: &p, f: &f, q: &q, data: &data };
            let u = minimize_energy(&prob, &SolveConfig::default()).unwrap().field;
            let ph = extract_positive_phase(&u);
            let xs = ph.free_boundary.iter().map(|fb| fb.x[0]).fold(0.0, f64::max);
            let h = g.h_max();
            assert!((xs - a / qv).abs() <= 2.0 * h, "a={a} Q={qv} x*={xs}");
            let last = (0..g.len()).filter(|i| u.at(*i) > 0.0).max().unwrap();
            let slope = (u.at(last - 1) - u.at(last + 1)) / (2.0 * h);
            assert!((slope / qv - 1.0).abs() < 0.05, "slope {slope}");
        }
    }

    #[test]
    fn negative_q_is_rejected() {
        let (_, f, _, data, p) = one_d(0.5, 1.0, 8);
        let g = data.grid().clone();
        let q = GridFunction::constant(&g, "q", -1.0);
        let prob = EnergyProblem { p: &p, f: &f, q: &q, data: &data };
        assert!(minimize_energy(&prob, &SolveConfig::default()).is_err());
    }

    #[test]
    fn energy_of_variable_exponent_matches_quadrature() {
        // |Dv| = 1 everywhere, so the gradient term is sum 1/p(cell)
        let g = Grid::cube(1, 0.0, 1.0, 4).unwrap();
        let v = GridFunction::from_fn(&g, "v", |x| x[0]);
        let p = ExponentField::affine(2.0, vec![0.4], vec![0.5], 0.5).unwrap();
        let z = GridFunction::constant(&g, "z", 0.0);
        let prob = EnergyProblem { p: &p, f: &z, q: &z, data: &v };
        let e = discrete_energy(&prob, &v, 0.0).unwrap();
        let expect: f64 = [0.125, 0.375, 0.625, 0.875].iter().map(|x| 0.25 / (2.0 + 0.4 * (x - 0.5))).sum();
        assert!((e - expect).abs() < 1e-14);
    }
}
