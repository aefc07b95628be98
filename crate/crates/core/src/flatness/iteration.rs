//! Rescaling iteration `u_k(x) = u(rho_k x) / rho_k`, `rho_k = rbar^k`: at
//! every scale the best slab direction on `B_1` is measured, seeded by the
//! previous scale, and the decay of `eps_k` is fitted as `rho_k^alpha`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flatness::holder::least_squares;
use crate::flatness::measure::{best_direction, DirectionSearch, FlatnessCertificate};
use crate::px::exponent::ExponentField;
use crate::px::grid::{GridFunction, ScalarField};
use crate::px::phase::extract_positive_phase;

/// Smallest admissible `rho_k`, in cells.
pub const RESOLUTION_CELLS: f64 = 4.0;
/// Flatness at or below this level is treated as exact.
pub const FLAT: f64 = 1e-14;

/// How `u_k` is sampled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resampling {
    /// The lattice nodes of `B_{rho_k}`, mapped to `B_1` by `x / rho_k`.
    /// Exact: no interpolation error.
    Lattice,
    /// Multilinear interpolation of `u(rho_k x) / rho_k` at the lattice
    /// nodes of `B_1`.
    Multilinear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IterationOptions {
    pub rbar: f64,
    /// Number of rescalings `K`; scales `k = 0..=K` are measured.
    pub steps: usize,
    /// Seed direction at `k = 0`; `e_n` when empty.
    pub seed: Vec<f64>,
    pub search: DirectionSearch,
    pub resampling: Resampling,
}

impl Default for IterationOptions {
    fn default() -> Self {
        Self { rbar: 0.5, steps: 5, seed: Vec::new(), search: DirectionSearch::default(), resampling: Resampling::Lattice }
    }
}

/// Data of the rescaled problem at one scale, as sup norms over `B_1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleBounds {
    /// `||f_k|| = rho_k sup_{B_rho_k} |f|`.
    pub f: f64,
    /// `sup |g_k - 1|`.
    pub g: f64,
    /// `||grad p_k|| = rho_k sup_{B_rho_k} |grad p|`.
    pub grad_p: f64,
    /// All three are at most `eps_k^2`.
    pub small: bool,
}

/// Right hand side, free boundary datum and exponent of the problem `u`
/// solves, used to track the rescaled data.
pub struct ProblemData<'a> {
    pub f: &'a dyn ScalarField,
    pub g: &'a dyn ScalarField,
    pub p: &'a ExponentField,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationStep {
    pub k: usize,
    pub rho: f64,
    /// Certificate of `u_k` on `B_1` (rescaled offsets).
    pub certificate: FlatnessCertificate,
    /// Mesh size of `u_k`, `h / rho_k`.
    pub effective_h: f64,
    /// Fit of `alpha` over the scales `0..=k` measured so far.
    pub alpha_running: Option<f64>,
    pub bounds: Option<ScaleBounds>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub rbar: f64,
    pub resampling: Resampling,
    pub steps: Vec<IterationStep>,
    /// Fitted `alpha` in `eps_k ~ eps_0 rho_k^alpha`; `None` when fewer
    /// than two scales have `eps_k > 0`.
    pub alpha_hat: Option<f64>,
    pub fit_residual: f64,
    /// `sum_k |nu_k - nu_(k+1)|`.
    pub direction_chain: f64,
}

impl IterationTrace {
    pub fn epsilons(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.certificate.epsilon).collect()
    }

    pub fn rhos(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.rho).collect()
    }

    /// Geometric mean of `eps_(k+1) / eps_k` over consecutive scales with
    /// `eps_k > 0`.
    pub fn mean_ratio(&self) -> Option<f64> {
        let e = self.epsilons();
        let logs: Vec<f64> = e.windows(2).filter(|w| w[0] > FLAT && w[1] > FLAT).map(|w| (w[1] / w[0]).ln()).collect();
        (!logs.is_empty()).then(|| (logs.iter().sum::<f64>() / logs.len() as f64).exp())
    }

    /// Writes `k,rho,eps,nu_0..nu_(n-1),alpha_running`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let n = self.steps.first().map_or(0, |s| s.certificate.nu.len());
        let mut header = vec!["k".to_string(), "rho".into(), "eps".into()];
        header.extend((0..n).map(|d| format!("nu_{d}")));
        header.push("alpha_running".into());
        w.write_record(&header)?;
        for s in &self.steps {
            let mut row = vec![s.k.to_string(), s.rho.to_string(), s.certificate.epsilon.to_string()];
            row.extend(s.certificate.nu.iter().map(|v| v.to_string()));
            row.push(s.alpha_running.map_or_else(String::new, |a| a.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn fit_alpha(steps: &[IterationStep]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> =
        steps.iter().filter(|s| s.certificate.epsilon > FLAT).map(|s| (s.rho.ln(), s.certificate.epsilon.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let (slope, _, residual) = least_squares(&pts);
    Some((slope, residual))
}

fn scale_bounds(u: &GridFunction, data: &ProblemData, rho: f64, eps: f64) -> ScaleBounds {
    let grid = u.grid();
    let (mut f, mut g, mut gp) = (0.0f64, 0.0f64, 0.0f64);
    for i in grid.nodes_in_ball(&vec![0.0; grid.dim()], rho) {
        let x = grid.point(i);
        f = f.max(data.f.value(&x).abs());
        g = g.max((data.g.value(&x) - 1.0).abs());
        gp = gp.max(data.p.gradient(&x).iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    let (f, grad_p) = (rho * f, rho * gp);
    let e2 = eps * eps;
    ScaleBounds { f, g, grad_p, small: f <= e2 && g <= e2 && grad_p <= e2 }
}

/// Runs the iteration around the origin, which must lie within `h` of the
/// discrete free boundary.
pub fn flatness_iteration(u: &GridFunction, options: &IterationOptions, data: Option<&ProblemData>) -> Result<IterationTrace> {
    let grid = u.grid();
    let n = grid.dim();
    let h = grid.h_max();
    if !(options.rbar > 0.0 && options.rbar < 1.0) {
        return Err(Error::Domain(format!("rbar must lie in (0, 1), got {}", options.rbar)));
    }
    if options.steps < 1 {
        return Err(Error::Domain("the iteration needs K >= 1".into()));
    }
    let origin = vec![0.0; n];
    let rho_last = options.rbar.powi(options.steps as i32);
    if rho_last < RESOLUTION_CELLS * h {
        return Err(Error::ResolutionExhausted { rho: rho_last, limit: RESOLUTION_CELLS * h });
    }
    match extract_positive_phase(u).distance_to_free_boundary(&origin) {
        Some(d) if d <= h + 1e-12 => {}
        _ => return Err(Error::NotOnFreeBoundary { point: origin, tolerance: h }),
    }
    let mut seed = if options.seed.is_empty() {
        let mut e = vec![0.0; n];
        e[n - 1] = 1.0;
        e
    } else {
        options.seed.clone()
    };
    let mut steps: Vec<IterationStep> = Vec::with_capacity(options.steps + 1);
    for k in 0..=options.steps {
        let rho = options.rbar.powi(k as i32);
        let certificate = match options.resampling {
            Resampling::Lattice => {
                let (_, c) = best_direction(u, &origin, rho, &seed, &options.search)?;
                FlatnessCertificate { center: origin.clone(), radius: 1.0, a: c.a / rho, b: c.b / rho, k, ..c }
            }
            Resampling::Multilinear => {
                let uk = GridFunction::new(
                    grid.clone(),
                    (0..grid.len())
                        .map(|i| {
                            let x = grid.point(i);
                            let y: Vec<f64> = x.iter().map(|v| rho * v).collect();
                            u.interpolate(&y).map_or(0.0, |v| v / rho)
                        })
                        .collect(),
                    "u_k",
                )?;
                let (_, c) = best_direction(&uk, &origin, 1.0, &seed, &options.search)?;
                FlatnessCertificate { k, ..c }
            }
        };
        seed = certificate.nu.clone();
        let bounds = data.map(|d| scale_bounds(u, d, rho, certificate.epsilon));
        steps.push(IterationStep { k, rho, certificate, effective_h: h / rho, alpha_running: None, bounds });
        steps[k].alpha_running = fit_alpha(&steps).map(|(a, _)| a);
    }
    let fit = fit_alpha(&steps);
    let direction_chain = steps
        .windows(2)
        .map(|w| w[0].certificate.nu.iter().zip(&w[1].certificate.nu).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .sum();
    Ok(IterationTrace {
        rbar: options.rbar,
        resampling: options.resampling,
        steps,
        alpha_hat: fit.map(|f| f.0),
        fit_residual: fit.map_or(0.0, |f| f.1),
        direction_chain,
    })
}
