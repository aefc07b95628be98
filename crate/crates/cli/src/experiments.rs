//! The eight experiment kinds. Each returns an [`Outcome`]; nothing here
//! touches the disk.

use pxfb::barriers::{
    barrier_constants, c5, c_bar, certify_barrier_w, gamma_exponent, Barrier, BarrierGeometry,
};
use pxfb::flatness::{flatness_iteration, harnack_ratio, IterationOptions, ProblemData};
use pxfb::px::{extract_positive_phase, luxemburg_norm, modular, norm_modular_bracket, Analytic};
use pxfb::solver::{
    minimize_energy, quadratic_remainder, solve_dirichlet, solve_dirichlet_masked, solve_neumann_linearized,
    solve_shifted, EnergyProblem, NeumannOptions, SolveOutcome,
};
use pxfb::viscosity::{viscosity_battery, BatteryOptions, Side};
use pxfb::{ExponentField, Grid, GridFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::artifacts::{Outcome, PlotSpec, Table};
use crate::config::{
    BarrierParams, CaseParams, DirichletCase, DirichletParams, EnergyParams, ExperimentConfig, FlatSource,
    FlatnessParams, HarnackParams, NeumannParams, NormParams, Params, ViscosityParams,
};
use crate::error::{CliError, CliResult, Context};

/// Sup error below which the Neumann polynomial counts as reproduced.
pub const NEUMANN_POLY_TOLERANCE: f64 = 1e-8;
/// Largest admissible max/min ratio of the remainder constants, and of
/// `C_emp` across grids.
pub const STABILITY_FACTOR: f64 = 2.0;
/// Relative slack of the norm-modular bracket and of homogeneity.
pub const NORM_TOLERANCE: f64 = 1e-9;

pub fn run_experiment(config: &ExperimentConfig) -> CliResult<Outcome> {
    match config.typed_params()? {
        Params::Dirichlet(p) => dirichlet_benchmark(config, &p),
        Params::Energy(p) => energy_benchmark(config, &p),
        Params::Barrier(p) => barrier_certification(config, &p),
        Params::Viscosity(p) => viscosity(config, &p),
        Params::Harnack(p) => harnack_study(config, &p),
        Params::Flatness(p) => flatness(config, &p),
        Params::Neumann(p) => neumann_check(config, &p),
        Params::Norm(p) => norm_suite(config, &p),
    }
}

fn plot(table: &str, x: &str, y: &[&str], log_x: bool, log_y: bool, title: &str) -> PlotSpec {
    PlotSpec {
        table: table.into(),
        x: x.into(),
        y: y.iter().map(|s| s.to_string()).collect(),
        log_x,
        log_y,
        title: title.into(),
        annotation: None,
    }
}

fn history_table(out: &SolveOutcome) -> Table {
    let mut t = Table::new(
        "history",
        &[
            ("iteration", "sweep number"),
            ("residual", "sup interior residual (energy solves: largest nodal change)"),
            ("energy", "discrete energy, NaN where undefined"),
        ],
    );
    for r in &out.history {
        t.push(vec![r.iteration as f64, r.residual, r.energy]);
    }
    t
}

fn exponent(config: &ExperimentConfig, grid: &Grid) -> CliResult<ExponentField> {
    config.exponent.build(grid.dim(), grid.lower()[0], grid.upper()[0])
}

/// A scalar function of a point.
pub type PointFn = Box<dyn Fn(&[f64]) -> f64 + Sync>;

/// A Dirichlet problem with a known solution.
pub struct Benchmark {
    pub p: ExponentField,
    pub f: GridFunction,
    pub data: GridFunction,
    pub fixed: Option<Vec<bool>>,
    pub exact: PointFn,
    pub rhs: PointFn,
}

impl Benchmark {
    pub fn new(case: DirichletCase, radial: &CaseParams, grid: &Grid, config: &ExperimentConfig) -> CliResult<Self> {
        let n = grid.dim();
        let (p, exact, rhs): (ExponentField, PointFn, PointFn) = match case {
            DirichletCase::Linear => (exponent(config, grid)?, Box::new(move |x| x[n - 1]), Box::new(|_| 0.0)),
            DirichletCase::OnedP3 => {
                let (lo, hi) = (grid.lower()[0], grid.upper()[0]);
                let (m, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
                // |u'| u' = x - m with u = 0 at both ends
                let exact = move |x: &[f64]| 2.0 / 3.0 * ((x[0] - m).abs().powf(1.5) - half.powf(1.5));
                (ExponentField::constant(1, 3.0).context("exponent")?, Box::new(exact), Box::new(|_| 1.0))
            }
            DirichletCase::Radial => {
                let CaseParams { p0, gamma, .. } = *radial;
                let r = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-3);
                let nf = n as f64;
                let rhs = move |x: &[f64]| {
                    gamma.powf(p0 - 1.0) * r(x).powf(-gamma * (p0 - 1.0) - p0) * (gamma * (p0 - 1.0) + p0 - nf)
                };
                (ExponentField::constant(n, p0).context("exponent")?, Box::new(move |x| r(x).powf(-gamma)), Box::new(rhs))
            }
        };
        let fixed = (case == DirichletCase::Radial).then(|| {
            (0..grid.len())
                .map(|i| {
                    let x = grid.point(i);
                    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                    !(radial.r1..=radial.r2).contains(&r)
                })
                .collect()
        });
        Ok(Self {
            f: GridFunction::from_fn(grid, "f", &rhs),
            data: GridFunction::from_fn(grid, "data", &exact),
            p,
            fixed,
            exact,
            rhs,
        })
    }

    /// The same problem with `u + s` in place of `u`; `s` makes the exact
    /// solution at least 1 on the grid, so every interior node lies in the
    /// positive phase.
    pub fn lifted_positive(mut self) -> (Self, f64) {
        let grid = self.data.grid();
        let lowest = (0..grid.len()).map(|i| (self.exact)(&grid.point(i))).fold(f64::INFINITY, f64::min);
        let s = (1.0 - lowest).max(0.0);
        if s > 0.0 {
            let exact = self.exact;
            self.exact = Box::new(move |x| exact(x) + s);
            self.data = self.data.map(|v| v + s);
        }
        (self, s)
    }

    pub fn solve(&self, config: &ExperimentConfig) -> CliResult<SolveOutcome> {
        match &self.fixed {
            Some(m) => solve_dirichlet_masked(&self.p, &self.f, &self.data, m.clone(), &config.solver),
            None => solve_dirichlet(&self.p, &self.f, &self.data, &config.solver),
        }
        .context("dirichlet solve")
    }
}

fn dirichlet_benchmark(config: &ExperimentConfig, params: &DirichletParams) -> CliResult<Outcome> {
    let spec = config.grid_spec()?;
    let mut out = Outcome::default();
    let mut conv = Table::new(
        "convergence",
        &[
            ("cells", "cells per axis"),
            ("h", "mesh size"),
            ("sup_error", "max nodal error against the exact solution"),
            ("iterations", "sweeps to tolerance"),
            ("residual", "final sup residual"),
        ],
    );
    let mut last = None;
    for level in 0..params.levels {
        let cells = spec.cells << level;
        let grid = spec.with_cells(cells)?;
        let b = Benchmark::new(params.case, &params.radial, &grid, config)?;
        let sol = b.solve(config)?;
        let err = sol.field.sup_error_where(&b.exact, |_| true);
        conv.push(vec![cells as f64, grid.h_max(), err, sol.iterations as f64, sol.residual]);
        last = Some(sol);
    }
    let sol = last.expect("at least one level");
    let errs: Vec<f64> = conv.rows.iter().map(|r| r[2]).collect();
    out.number("sup_error", *errs.last().expect("one level"));
    if errs.len() >= 2 {
        let k = errs.len();
        out.number("observed_order", (errs[k - 2] / errs[k - 1]).log2());
    }
    out.metric("iterations", sol.iterations);
    out.number("residual", sol.residual);
    out.fields.push(("solution".into(), sol.field.to_json().context("solution")?));
    out.tables.push(history_table(&sol));
    out.plots.push(plot("history", "iteration", &["residual"], false, true, "Convergence history"));
    if params.levels >= 2 {
        out.plots.push(plot("convergence", "h", &["sup_error"], true, true, "Error under refinement"));
    }
    out.tables.push(conv);
    Ok(out)
}

fn energy_benchmark(config: &ExperimentConfig, params: &EnergyParams) -> CliResult<Outcome> {
    let grid = config.grid_spec()?.build()?;
    let p = exponent(config, &grid)?;
    let lo = grid.lower()[0];
    let f = GridFunction::constant(&grid, "f", params.f);
    let q = GridFunction::constant(&grid, "q", params.q);
    let data = GridFunction::from_fn(&grid, "data", |x| if x[0] == lo { params.a } else { 0.0 });
    let sol = minimize_energy(&EnergyProblem { p: &p, f: &f, q: &q, data: &data }, &config.solver).context("energy minimization")?;
    let u = &sol.field;
    let h = grid.h_max();
    let mut out = Outcome::default();
    let mut profile = Table::new("profile", &[("x", "node coordinate"), ("u", "minimizer value")]);
    for i in 0..grid.len() {
        profile.push(vec![grid.point(i)[0], u.at(i)]);
    }
    let phase = extract_positive_phase(u);
    let x_star = phase.free_boundary.iter().map(|b| b.x[0]).fold(f64::NEG_INFINITY, f64::max);
    let last = (0..grid.len()).filter(|i| u.at(*i) > 0.0).max();
    let slope = match last {
        Some(l) if l > 0 && l + 1 < grid.len() => (u.at(l - 1) - u.at(l + 1)) / (2.0 * h),
        _ => f64::NAN,
    };
    let expected = lo + params.a / params.q;
    out.number("x_star", x_star);
    out.number("x_star_expected", expected);
    out.number("x_star_error_over_h", (x_star - expected).abs() / h);
    out.number("interface_slope", slope);
    out.number("slope_relative_error", (slope / params.q - 1.0).abs());
    out.number("energy", sol.history.last().map_or(f64::NAN, |r| r.energy));
    out.metric("iterations", sol.iterations);
    out.notes.push("x_star_expected = a/Q and slope = Q are the reference values for p = 2, f = 0".into());
    out.fields.push(("solution".into(), u.to_json().context("solution")?));
    out.tables.push(history_table(&sol));
    out.tables.push(profile);
    out.plots.push(plot("profile", "x", &["u"], false, false, "Energy minimizer"));
    out.plots.push(plot("history", "iteration", &["energy"], false, false, "Energy per sweep"));
    Ok(out)
}

fn barrier_certification(config: &ExperimentConfig, params: &BarrierParams) -> CliResult<Outcome> {
    let _ = config;
    let BarrierParams { dim, p_min, p_max, c0, c1, c2, c3, r1, r2, theta, samples, sweep } = *params;
    let gamma = gamma_exponent(dim, p_min, p_max).context("gamma")?;
    let cb = c_bar(p_min, p_max, c1);
    let p = ExponentField::constant(dim, 0.5 * (p_min + p_max)).context("exponent")?;
    let w = Barrier::radial_w(vec![0.0; dim], c1, c2, gamma, r1, r2).context("barrier w")?;
    let rep = certify_barrier_w(&w, &p, samples, Some(cb));
    let mut out = Outcome::default();
    out.number("gamma", gamma);
    out.number("c_bar", cb);
    out.number("c5", c5(p_min, p_max));
    out.number("w_min_margin", rep.min_margin);
    out.metric("w_pass", rep.pass);
    out.metric("w_samples", rep.samples);
    out.document("w_certificate", &rep)?;
    let mut certified = rep.pass;
    if sweep {
        let geometry = BarrierGeometry { center: vec![0.0; dim], r1, r2, c2, c3, samples };
        let constants = barrier_constants(dim, p_min, p_max, c0, c1, theta, &geometry).context("eps sweep")?;
        let mut t = Table::new(
            "eps_sweep",
            &[
                ("eps", "flatness parameter"),
                ("grad_p_sup", "Lipschitz constant of the synthetic exponent, eps^(1+theta)"),
                ("w_margin", "min of Delta_p w - c_bar over the annulus"),
                ("v_margin", "min slack of the v inequalities over the annulus"),
                ("w_pass", "1 when the w certificate holds"),
                ("v_pass", "1 when the v certificate holds"),
            ],
        );
        for r in &constants.sweep {
            t.push(vec![r.eps, r.grad_p_sup, r.w_margin, r.v_margin, f64::from(u8::from(r.w_pass)), f64::from(u8::from(r.v_pass))]);
        }
        let below = |thr: Option<f64>, pick: fn(&pxfb::barriers::EpsSweepRow) -> bool| {
            thr.is_some_and(|e| constants.sweep.iter().filter(|r| r.eps <= e).all(pick))
        };
        let v_ok = below(constants.eps1_empirical, |r| r.v_pass);
        out.metric("eps0_empirical", constants.eps0_empirical);
        out.metric("eps1_empirical", constants.eps1_empirical);
        out.metric("v_pass_below_threshold", v_ok);
        out.metric("w_pass_below_threshold", below(constants.eps0_empirical, |r| r.w_pass));
        certified &= v_ok;
        out.document("constants", &constants)?;
        out.tables.push(t);
        out.plots.push(plot("eps_sweep", "eps", &["w_margin", "v_margin"], true, false, "Certification margins"));
    }
    out.certified = Some(certified);
    Ok(out)
}

fn viscosity(config: &ExperimentConfig, params: &ViscosityParams) -> CliResult<Outcome> {
    let grid = config.grid_spec()?.build()?;
    let (b, lift) = Benchmark::new(params.source, &params.radial, &grid, config)?.lifted_positive();
    let sol = b.solve(config)?;
    let f = Analytic::new(grid.dim(), &b.rhs);
    let options = BatteryOptions {
        count: params.count,
        seed: config.seed,
        c_tol: params.c_tol,
        min_gradient: params.min_gradient,
        radius_cells: params.radius_cells,
        ..Default::default()
    };
    let rep = viscosity_battery(&sol.field, &b.p, &f, &options).context("viscosity battery")?;
    let mut t = Table::new(
        "verdicts",
        &[
            ("sample", "sample index"),
            ("node", "lattice index of the touching node"),
            ("side", "+1 touching from below, -1 from above"),
            ("gap", "min of u - phi (below) or phi - u (above) over the neighborhood"),
            ("inequality", "Delta_p phi - f at the touching point"),
            ("exempt", "1 when the sample is exempt"),
            ("pass", "1 when the one-sided inequality holds within tolerance"),
        ],
    );
    for (k, v) in rep.verdicts.iter().enumerate() {
        let side = if v.side == Side::Below { 1.0 } else { -1.0 };
        t.push(vec![k as f64, v.node as f64, side, v.gap, v.inequality, f64::from(u8::from(v.exempt)), f64::from(u8::from(v.pass))]);
    }
    let mut out = Outcome::default();
    out.metric("count", rep.count);
    out.metric("passed", rep.passed);
    out.metric("failed", rep.failed);
    out.metric("exempt", rep.exempt);
    out.number("worst_excess", rep.worst_excess);
    out.number("tolerance", rep.tolerance);
    out.metric("solver_iterations", sol.iterations);
    out.number("data_lift", lift);
    out.notes.push("the benchmark solution is lifted by data_lift so that the battery samples the whole domain".into());
    out.certified = Some(rep.failed == 0);
    out.tables.push(t);
    out.plots.push(plot("verdicts", "sample", &["inequality"], false, false, "Touching inequality per sample"));
    Ok(out)
}

fn harnack_study(config: &ExperimentConfig, params: &HarnackParams) -> CliResult<Outcome> {
    let spec = config.grid_spec()?;
    let n = spec.dim;
    let mut t = Table::new(
        "harnack",
        &[
            ("eps", "f = eps^2"),
            ("cells", "cells per axis"),
            ("h", "mesh size"),
            ("sup", "sup of v on B_R"),
            ("inf", "inf of v on B_R"),
            ("rhs_term", "R ||f||^(1/(p_max - 1))"),
            ("c_emp", "smallest C for which the quasi-Harnack inequality holds"),
            ("iterations", "solver sweeps"),
        ],
    );
    let mut out = Outcome::default();
    let mut stable = true;
    let mut e_n = vec![0.0; n];
    e_n[n - 1] = 1.0;
    for &eps in &params.eps {
        let mut cs = Vec::new();
        for level in 0..params.levels {
            let cells = spec.cells << level;
            let grid = spec.with_cells(cells)?;
            let p = exponent(config, &grid)?;
            let f = GridFunction::constant(&grid, "f", eps * eps);
            let data = GridFunction::from_fn(&grid, "data", |x| 1.0 + params.tilt * x[0] + params.curvature * x[n - 1] * x[n - 1]);
            let sol = solve_shifted(&p, &f, &e_n, &data, &config.solver).context("shifted solve")?;
            let r = harnack_ratio(&sol.field, &vec![0.0; n], params.radius, eps * eps, p.p_max()).context("harnack ratio")?;
            t.push(vec![eps, cells as f64, grid.h_max(), r.sup, r.inf, r.rhs_term, r.c_emp, sol.iterations as f64]);
            cs.push(r.c_emp);
        }
        let (lo, hi) = cs.iter().fold((f64::INFINITY, 0.0f64), |(a, b), c| (a.min(*c), b.max(*c)));
        let spread = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        stable &= cs.iter().all(|c| c.is_finite()) && spread <= STABILITY_FACTOR;
        out.number(&format!("c_emp_spread_eps_{eps}"), spread);
        out.number(&format!("c_emp_finest_eps_{eps}"), *cs.last().expect("one level"));
    }
    out.metric("stable", stable);
    out.certified = Some(stable);
    out.tables.push(t);
    out.plots.push(plot("harnack", "h", &["c_emp"], true, false, "Empirical Harnack constant"));
    Ok(out)
}

/// `u` recentered so that the free boundary point on the `x_n` axis sits at
/// the origin.
fn recenter_on_free_boundary(u: &GridFunction) -> CliResult<GridFunction> {
    let grid = u.grid();
    let n = grid.dim();
    let phase = extract_positive_phase(u);
    let on_axis = phase
        .free_boundary
        .iter()
        .filter(|b| b.x[..n - 1].iter().all(|v| v.abs() < 1e-12))
        .min_by(|a, b| a.x[n - 1].abs().total_cmp(&b.x[n - 1].abs()))
        .ok_or_else(|| CliError::Validation("the minimizer has no free boundary on the x_n axis".into()))?;
    let c = grid.point(grid.nearest_node(&on_axis.x));
    let lower: Vec<f64> = grid.lower().iter().zip(&c).map(|(a, b)| a - b).collect();
    let upper: Vec<f64> = grid.upper().iter().zip(&c).map(|(a, b)| a - b).collect();
    let cells: Vec<usize> = grid.shape().iter().map(|s| s - 1).collect();
    let shifted = Grid::new(lower, upper, &cells).context("recentered grid")?;
    GridFunction::new(shifted, u.values().to_vec(), "u").context("recentered field")
}

fn flatness(config: &ExperimentConfig, params: &FlatnessParams) -> CliResult<Outcome> {
    let grid = config.grid_spec()?.build()?;
    let n = grid.dim();
    let mut e_n = vec![0.0; n];
    e_n[n - 1] = 1.0;
    let mut out = Outcome::default();
    let mut seed = e_n.clone();
    let u = match params.source {
        FlatSource::HalfPlane => {
            let nu = if params.nu.is_empty() { e_n.clone() } else { params.nu.clone() };
            let norm = nu.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nu: Vec<f64> = nu.iter().map(|v| v / norm).collect();
            seed = nu.clone();
            GridFunction::from_fn(&grid, "u", |x| x.iter().zip(&nu).map(|(a, b)| a * b).sum::<f64>().max(0.0))
        }
        FlatSource::Paraboloid => {
            GridFunction::from_fn(&grid, "u", |x| (x[n - 1] + params.curvature * x[0] * x[0]).max(0.0))
        }
        FlatSource::EnergyMinimizer => {
            let p = exponent(config, &grid)?;
            let f = GridFunction::constant(&grid, "f", params.f);
            let q = GridFunction::constant(&grid, "q", params.q);
            let data = GridFunction::from_fn(&grid, "data", |x| {
                (x[n - 1] + params.amplitude * (params.frequency * x[0]).sin()).max(0.0)
            });
            let sol = minimize_energy(&EnergyProblem { p: &p, f: &f, q: &q, data: &data }, &config.solver)
                .context("energy minimization")?;
            out.metric("solver_iterations", sol.iterations);
            recenter_on_free_boundary(&sol.field)?
        }
    };
    let options = IterationOptions { rbar: params.rbar, steps: params.steps, seed, resampling: params.resampling, ..Default::default() };
    let trace = if params.source == FlatSource::EnergyMinimizer {
        let p = exponent(config, &grid)?;
        let f = Analytic::new(n, |_: &[f64]| params.f);
        let g = Analytic::new(n, |_: &[f64]| params.q);
        flatness_iteration(&u, &options, Some(&ProblemData { f: &f, g: &g, p: &p }))
    } else {
        flatness_iteration(&u, &options, None)
    }
    .context("flatness iteration")?;
    let eps = trace.epsilons();
    out.metric("alpha_hat", trace.alpha_hat);
    out.metric("mean_ratio", trace.mean_ratio());
    out.number("fit_residual", trace.fit_residual);
    out.number("direction_chain", trace.direction_chain);
    out.metric("epsilons", eps.clone());
    out.number("eps_max", eps.iter().cloned().fold(0.0, f64::max));
    let mut t = Table::new(
        "trace",
        &[
            ("k", "rescaling step"),
            ("rho", "rbar^k"),
            ("eps", "slab width of u_k on B_1"),
            ("effective_h", "mesh size of u_k"),
            ("alpha_running", "fitted exponent over the scales so far, NaN before two"),
        ],
    );
    for s in &trace.steps {
        t.push(vec![s.k as f64, s.rho, s.certificate.epsilon, s.effective_h, s.alpha_running.unwrap_or(f64::NAN)]);
    }
    let mut p = plot("trace", "k", &["eps"], false, true, "Flatness decay");
    p.annotation = trace.alpha_hat.map(|a| format!("alpha_hat = {a:.4}"));
    out.plots.push(p);
    out.document("trace", &trace)?;
    out.tables.push(t);
    Ok(out)
}

fn neumann_check(config: &ExperimentConfig, params: &NeumannParams) -> CliResult<Outcome> {
    let n = params.dim;
    let mut out = Outcome::default();
    let mut t = Table::new(
        "polynomial",
        &[("p0", "frozen exponent"), ("sup_error", "max error against x_1^2 - x_n^2/(p0 - 1)"), ("iterations", "sweeps")],
    );
    let mut worst: f64 = 0.0;
    for &p0 in &params.p0 {
        let exact = move |x: &[f64]| x[0] * x[0] - x[n - 1] * x[n - 1] / (p0 - 1.0);
        let sol = solve_neumann_linearized(p0, params.rho, &exact, &NeumannOptions::new(n, params.cells_per_unit), &config.solver)
            .context("linearized Neumann solve")?;
        let err = sol.field.sup_error_where(exact, |_| true);
        worst = worst.max(err);
        t.push(vec![p0, err, sol.iterations as f64]);
    }
    let p0 = params.remainder_p0;
    let k = 1.0 / (p0 - 1.0).sqrt();
    let data = move |x: &[f64]| x[0].exp() * (k * x[n - 1]).cos();
    let sol = solve_neumann_linearized(p0, params.rho, &data, &NeumannOptions::new(n, params.remainder_cells_per_unit), &config.solver)
        .context("linearized Neumann solve")?;
    let fit = quadratic_remainder(&sol.field, &params.radii).context("remainder fit")?;
    let mut r = Table::new("remainder", &[("r", "ball radius"), ("constant", "max |u - u(0) - Du(0).x| / r^2 on B_r")]);
    for (radius, c) in fit.radii.iter().zip(&fit.constants) {
        r.push(vec![*radius, *c]);
    }
    let finite = fit.constants.iter().all(|c| c.is_finite());
    out.number("polynomial_max_error", worst);
    out.number("remainder_spread", fit.spread);
    out.metric("remainder_constants", fit.constants.clone());
    out.document("remainder_fit", &fit)?;
    out.certified = Some(worst <= NEUMANN_POLY_TOLERANCE && finite && fit.spread <= STABILITY_FACTOR);
    out.tables.push(t);
    out.tables.push(r);
    out.plots.push(plot("remainder", "r", &["constant"], true, false, "Quadratic remainder constant"));
    Ok(out)
}

struct NormSample {
    lo: f64,
    hi: f64,
    axis: usize,
    values: Vec<f64>,
    lambda: f64,
}

fn norm_suite(config: &ExperimentConfig, params: &NormParams) -> CliResult<Outcome> {
    let grid = config.grid_spec()?.build()?;
    let n = grid.dim();
    let (lower, upper) = (grid.lower()[0], grid.upper()[0]);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let samples: Vec<NormSample> = (0..params.samples)
        .map(|_| {
            let a = rng.gen_range(params.p_min..=params.p_max);
            let b = rng.gen_range(params.p_min..=params.p_max);
            let amplitude = 10f64.powf(rng.gen_range(-2.0..2.0));
            let values = (0..grid.len()).map(|_| amplitude * rng.gen_range(-1.0..1.0)).collect();
            let lambda = rng.gen_range(0.1..5.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            NormSample { lo: a.min(b), hi: a.max(b), axis: rng.gen_range(0..n), values, lambda }
        })
        .collect();
    let rows: Vec<CliResult<Vec<f64>>> = samples
        .par_iter()
        .enumerate()
        .map(|(k, s)| {
            let mut slope = vec![0.0; n];
            slope[s.axis] = (s.hi - s.lo) / (upper - lower);
            let mid = 0.5 * (lower + upper);
            let p = ExponentField::affine(0.5 * (s.lo + s.hi), slope, vec![mid; n], 0.5 * (upper - lower)).context("exponent")?;
            let u = GridFunction::new(grid.clone(), s.values.clone(), "u").context("sample")?;
            let rho = modular(&u, &p);
            let norm = luxemburg_norm(&u, &p);
            let (lb, ub) = norm_modular_bracket(rho, p.p_min(), p.p_max());
            let ok = lb * (1.0 - NORM_TOLERANCE) <= norm && norm <= ub * (1.0 + NORM_TOLERANCE);
            let scaled = luxemburg_norm(&u.map(|v| s.lambda * v), &p);
            let hom = (scaled - s.lambda.abs() * norm).abs() / (s.lambda.abs() * norm).max(f64::MIN_POSITIVE);
            Ok(vec![k as f64, p.p_min(), p.p_max(), rho, norm, lb, ub, f64::from(u8::from(ok)), hom])
        })
        .collect();
    let mut t = Table::new(
        "norms",
        &[
            ("sample", "sample index"),
            ("p_min", "exponent minimum"),
            ("p_max", "exponent maximum"),
            ("modular", "rho(u)"),
            ("norm", "Luxemburg norm"),
            ("lower", "bracket lower bound"),
            ("upper", "bracket upper bound"),
            ("bracket_ok", "1 when lower <= norm <= upper"),
            ("homogeneity_error", "| ||lambda u|| - |lambda| ||u|| | / (|lambda| ||u||)"),
        ],
    );
    for r in rows {
        t.push(r?);
    }
    let passes = t.rows.iter().filter(|r| r[7] == 1.0).count();
    let hom = t.rows.iter().map(|r| r[8]).fold(0.0, f64::max);
    let mut out = Outcome::default();
    out.metric("samples", params.samples);
    out.metric("bracket_passes", passes);
    out.number("homogeneity_max_error", hom);
    out.certified = Some(passes == params.samples && hom <= NORM_TOLERANCE);
    out.tables.push(t);
    out.plots.push(plot("norms", "modular", &["norm", "lower", "upper"], true, true, "Norm-modular bracket"));
    Ok(out)
}
