//! Discrete solvers: the fixed-phase Dirichlet problem, the shifted-gradient
//! equation, the free boundary energy and the linearized Neumann problem.

pub mod dirichlet;
pub mod energy;
pub mod kernel;
pub mod neumann;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::px::grid::GridFunction;
use crate::px::operator::FLUX_DELTA;

pub use dirichlet::{solve_dirichlet, solve_dirichlet_masked, solve_shifted, DirichletProblem};
pub use energy::{discrete_energy, minimize_energy, EnergyProblem};
pub use neumann::{quadratic_remainder, solve_neumann_linearized, NeumannOptions, RemainderFit};

/// Over-relaxation factor of the nonlinear Gauss-Seidel sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relaxation {
    /// Optimal SOR factor of the Laplacian on the same lattice.
    Auto,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    pub max_iterations: usize,
    /// Sup-norm tolerance on the interior residual, relative to
    /// `max(1, ||f||_inf)`. Energy solves use it on the per-sweep decrease.
    pub tolerance: f64,
    pub relaxation: Relaxation,
    /// Flux regularization `delta`.
    pub delta: f64,
    /// Only used by randomized restarts; sweeps are always lexicographic.
    pub seed: u64,
    /// Start from a solve on the lattice with half the cells.
    pub nested_start: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200_000,
            tolerance: 1e-9,
            relaxation: Relaxation::Auto,
            delta: FLUX_DELTA,
            seed: 0,
            nested_start: true,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::Domain(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if self.max_iterations < 1 {
            return Err(Error::Domain("max_iterations must be at least 1".into()));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::Domain(format!("delta must be >= 0, got {}", self.delta)));
        }
        if let Relaxation::Fixed(w) = self.relaxation {
            if !(w > 0.0 && w < 2.0) {
                return Err(Error::Domain(format!("relaxation factor must lie in (0, 2), got {w}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub residual: f64,
    /// Discrete energy where meaningful, `NaN` otherwise.
    pub energy: f64,
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub field: GridFunction,
    pub history: Vec<HistoryRow>,
    pub iterations: usize,
    pub residual: f64,
}

/// Writes `iteration,residual,energy` rows.
pub fn write_history_csv(path: &Path, rows: &[HistoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "residual", "energy"])?;
    for r in rows {
        w.write_record(&[r.iteration.to_string(), r.residual.to_string(), r.energy.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
