//! Experiment configuration: loading (TOML or JSON), validation and the
//! kind-specific parameter blocks with their defaults.

use std::path::Path;

use pxfb::flatness::Resampling;
use pxfb::solver::SolveConfig;
use pxfb::{ExponentField, Grid};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult, Context};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    DirichletBenchmark,
    EnergyBenchmark,
    BarrierCertification,
    ViscosityBattery,
    HarnackStudy,
    FlatnessIteration,
    NeumannCheck,
    NormSuite,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::DirichletBenchmark => "dirichlet_benchmark",
            Self::EnergyBenchmark => "energy_benchmark",
            Self::BarrierCertification => "barrier_certification",
            Self::ViscosityBattery => "viscosity_battery",
            Self::HarnackStudy => "harnack_study",
            Self::FlatnessIteration => "flatness_iteration",
            Self::NeumannCheck => "neumann_check",
            Self::NormSuite => "norm_suite",
        }
    }

    fn needs_grid(self) -> bool {
        !matches!(self, Self::BarrierCertification | Self::NeumannCheck)
    }

    /// Parameters without a default.
    fn required(self) -> &'static [&'static str] {
        match self {
            Self::DirichletBenchmark => &["case"],
            Self::EnergyBenchmark => &["a", "q"],
            Self::ViscosityBattery => &["source"],
            Self::FlatnessIteration => &["source"],
            _ => &[],
        }
    }
}

/// The box `[lower, upper]^dim` with `cells` cells per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_lower")]
    pub lower: f64,
    #[serde(default = "default_upper")]
    pub upper: f64,
    pub cells: usize,
}

fn default_dim() -> usize {
    2
}
fn default_lower() -> f64 {
    -1.0
}
fn default_upper() -> f64 {
    1.0
}

impl GridSpec {
    pub fn build(&self) -> CliResult<Grid> {
        self.with_cells(self.cells)
    }

    pub fn with_cells(&self, cells: usize) -> CliResult<Grid> {
        Grid::cube(self.dim, self.lower, self.upper, cells).context("grid")
    }

    pub fn h(&self) -> f64 {
        (self.upper - self.lower) / self.cells as f64
    }

    fn validate(&self) -> CliResult<()> {
        if self.dim == 0 || self.cells == 0 || !(self.upper > self.lower) {
            return Err(CliError::Validation(format!(
                "grid needs dim >= 1, cells >= 1 and lower < upper, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Exponent field `p(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExponentSpec {
    Constant { p0: f64 },
    /// `p_c + slope . (x - center)`; `center` defaults to the box center.
    Affine {
        p_c: f64,
        slope: Vec<f64>,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    /// Affine along `axis`, running from `p_min` to `p_max` across the box.
    Range {
        p_min: f64,
        p_max: f64,
        #[serde(default)]
        axis: usize,
    },
    TwoValued { low: f64, high: f64, axis: usize, threshold: f64 },
}

impl Default for ExponentSpec {
    fn default() -> Self {
        Self::Constant { p0: 2.0 }
    }
}

impl ExponentSpec {
    /// Lower and upper bound of `p` over a box of half-width `extent`.
    fn bounds(&self, extent: f64) -> (f64, f64) {
        match self {
            Self::Constant { p0 } => (*p0, *p0),
            Self::Affine { p_c, slope, .. } => {
                let s: f64 = slope.iter().map(|v| v.abs()).sum::<f64>() * extent;
                (p_c - s, p_c + s)
            }
            Self::Range { p_min, p_max, .. } => (*p_min, *p_max),
            Self::TwoValued { low, high, .. } => (low.min(*high), low.max(*high)),
        }
    }

    pub fn build(&self, dim: usize, lower: f64, upper: f64) -> CliResult<ExponentField> {
        let mid = 0.5 * (lower + upper);
        let half = 0.5 * (upper - lower);
        let field = match self {
            Self::Constant { p0 } => ExponentField::constant(dim, *p0),
            Self::Affine { p_c, slope, center } => {
                if slope.len() != dim {
                    return Err(CliError::Validation(format!("exponent slope has {} entries for dim {dim}", slope.len())));
                }
                let c = center.clone().unwrap_or_else(|| vec![mid; dim]);
                let extent = c.iter().map(|c| (c - lower).abs().max((upper - c).abs())).fold(0.0, f64::max);
                ExponentField::affine(*p_c, slope.clone(), c, extent)
            }
            Self::Range { p_min, p_max, axis } => {
                if *axis >= dim {
                    return Err(CliError::Validation(format!("exponent axis {axis} out of range for dim {dim}")));
                }
                let mut slope = vec![0.0; dim];
                slope[*axis] = (p_max - p_min) / (upper - lower);
                ExponentField::affine(0.5 * (p_min + p_max), slope, vec![mid; dim], half)
            }
            Self::TwoValued { low, high, axis, threshold } => ExponentField::two_valued(dim, *low, *high, *axis, *threshold),
        };
        field.context("exponent")
    }
}

/// `1 < p_min <= p_max < inf`.
pub fn check_exponent_bounds(p_min: f64, p_max: f64) -> CliResult<()> {
    if !(p_min > 1.0) {
        return Err(CliError::Validation(format!("exponent bound violated: requires 1 < p_min, got p_min = {p_min}")));
    }
    if !(p_max >= p_min && p_max.is_finite()) {
        return Err(CliError::Validation(format!(
            "exponent bound violated: requires p_min <= p_max < inf, got [{p_min}, {p_max}]"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub exponent: ExponentSpec,
    #[serde(default)]
    pub solver: SolveConfig,
    #[serde(default)]
    pub seed: u64,
    /// Root directory of run directories.
    #[serde(default = "default_output")]
    pub output: String,
    /// Kind-specific parameters, with defaults filled in by [`load_config`].
    #[serde(default = "empty_object")]
    pub params: Value,
}

fn default_output() -> String {
    "runs".into()
}

fn empty_object() -> Value {
    Value::Object(Map::new())
}

/// Reads a TOML (`.toml`) or JSON (`.json`) config, validates it and fills
/// in every default.
pub fn load_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => parse_toml(&text),
        Some("json") => parse_json(&text),
        other => Err(CliError::Validation(format!("unknown config extension {other:?}; use .toml or .json"))),
    }
}

pub fn parse_toml(text: &str) -> CliResult<ExperimentConfig> {
    let config: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Validation(format!("TOML parse error: {e}")))?;
    config.normalized()
}

pub fn parse_json(text: &str) -> CliResult<ExperimentConfig> {
    let config: ExperimentConfig =
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("JSON parse error: {e}")))?;
    config.normalized()
}

impl ExperimentConfig {
    /// Validates and returns the config with every parameter default filled.
    pub fn normalized(mut self) -> CliResult<Self> {
        if self.kind.needs_grid() && self.grid.is_none() {
            return Err(CliError::Validation(format!("{} requires a [grid] section", self.kind.name())));
        }
        if let Some(g) = &self.grid {
            g.validate()?;
        }
        self.solver.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        let extent = self.grid.as_ref().map_or(1.0, |g| 0.5 * (g.upper - g.lower));
        let (lo, hi) = self.exponent.bounds(extent);
        check_exponent_bounds(lo, hi)?;
        let table = match &self.params {
            Value::Object(m) => m.clone(),
            Value::Null => Map::new(),
            other => return Err(CliError::Validation(format!("params must be a table, got {other}"))),
        };
        let missing: Vec<&str> = self.kind.required().iter().copied().filter(|k| !table.contains_key(*k)).collect();
        if !missing.is_empty() {
            return Err(CliError::Validation(format!(
                "{} is missing required parameters: {}",
                self.kind.name(),
                missing.join(", ")
            )));
        }
        let params = Params::parse(self.kind, Value::Object(table))?;
        params.validate(&self)?;
        self.params = params.to_value();
        Ok(self)
    }

    pub fn typed_params(&self) -> CliResult<Params> {
        Params::parse(self.kind, self.params.clone())
    }

    pub fn grid_spec(&self) -> CliResult<&GridSpec> {
        self.grid.as_ref().ok_or_else(|| CliError::Validation(format!("{} requires a grid", self.kind.name())))
    }

    /// Canonical JSON of everything that determines the results (the output
    /// root is excluded).
    pub fn canonical_json(&self) -> CliResult<String> {
        let mut v = serde_json::to_value(self)?;
        if let Value::Object(m) = &mut v {
            m.remove("output");
        }
        Ok(serde_json::to_string(&v)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).unwrap_or_else(|e| format!("# not representable as TOML: {e}"))
    }
}

/// Dirichlet benchmark problems with known solutions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirichletCase {
    /// Data `x_n`, `f = 0`, any exponent; the solution is `x_n`.
    Linear,
    /// 1D, `p = 3`, `f = 1`, zero data.
    OnedP3,
    /// Annulus `r1 <= |x| <= r2`, `p = p0`, solution `|x|^-gamma`.
    Radial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaseParams {
    pub p0: f64,
    pub gamma: f64,
    pub r1: f64,
    pub r2: f64,
}

impl Default for CaseParams {
    fn default() -> Self {
        Self { p0: 2.5, gamma: 1.0, r1: 0.1, r2: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirichletParams {
    pub case: DirichletCase,
    /// Number of grids, each with twice the cells of the previous one.
    #[serde(default = "one")]
    pub levels: usize,
    #[serde(default)]
    pub radial: CaseParams,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyParams {
    /// Data at the lower end of the interval.
    pub a: f64,
    pub q: f64,
    #[serde(default)]
    pub f: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BarrierParams {
    pub dim: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub r1: f64,
    pub r2: f64,
    pub theta: f64,
    /// Samples per axis of the annulus bounding box.
    pub samples: usize,
    /// Run the eps sweep with synthetic exponents.
    pub sweep: bool,
}

impl Default for BarrierParams {
    fn default() -> Self {
        Self {
            dim: 2,
            p_min: 2.0,
            p_max: 2.0,
            c0: 1.0,
            c1: 1.0,
            c2: 1.0,
            c3: 0.0,
            r1: 0.1,
            r2: 1.0,
            theta: 1.0,
            samples: 64,
            sweep: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViscosityParams {
    pub source: DirichletCase,
    #[serde(default)]
    pub radial: CaseParams,
    #[serde(default = "thousand")]
    pub count: usize,
    #[serde(default = "default_c_tol")]
    pub c_tol: f64,
    #[serde(default = "default_min_gradient")]
    pub min_gradient: f64,
    #[serde(default = "default_radius_cells")]
    pub radius_cells: f64,
}

fn thousand() -> usize {
    1000
}
fn default_c_tol() -> f64 {
    pxfb::viscosity::DEFAULT_C_TOL
}
fn default_min_gradient() -> f64 {
    0.1
}
fn default_radius_cells() -> f64 {
    3.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnackParams {
    /// `f = eps^2` for each entry.
    pub eps: Vec<f64>,
    /// Number of grids, each with twice the cells of the previous one.
    pub levels: usize,
    pub radius: f64,
    /// Boundary data `1 + tilt x_1 + curvature x_n^2`.
    pub tilt: f64,
    pub curvature: f64,
}

impl Default for HarnackParams {
    fn default() -> Self {
        Self { eps: vec![0.1, 0.01], levels: 2, radius: 0.25, tilt: 0.5, curvature: 0.25 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlatSource {
    /// `(x . nu)^+`.
    HalfPlane,
    /// `(x_n + curvature x_1^2)^+`.
    Paraboloid,
    /// Energy minimizer with data `(x_n + amplitude sin(frequency x_1))^+`,
    /// recentered at its free boundary on the `x_n` axis.
    EnergyMinimizer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlatnessParams {
    pub source: FlatSource,
    #[serde(default = "default_rbar")]
    pub rbar: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_resampling")]
    pub resampling: Resampling,
    /// Normal of the half plane; `e_n` when empty.
    #[serde(default)]
    pub nu: Vec<f64>,
    #[serde(default = "default_curvature")]
    pub curvature: f64,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default = "default_frequency")]
    pub frequency: f64,
    #[serde(default = "default_flat_f")]
    pub f: f64,
    #[serde(default = "default_q")]
    pub q: f64,
}

fn default_rbar() -> f64 {
    0.5
}
fn default_steps() -> usize {
    5
}
fn default_resampling() -> Resampling {
    Resampling::Lattice
}
fn default_curvature() -> f64 {
    0.1
}
fn default_amplitude() -> f64 {
    0.05
}
fn default_frequency() -> f64 {
    1.5
}
fn default_flat_f() -> f64 {
    1e-3
}
fn default_q() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeumannParams {
    pub dim: usize,
    pub p0: Vec<f64>,
    pub rho: f64,
    pub cells_per_unit: usize,
    /// Exponent of the remainder fit.
    pub remainder_p0: f64,
    pub remainder_cells_per_unit: usize,
    pub radii: Vec<f64>,
}

impl Default for NeumannParams {
    fn default() -> Self {
        Self {
            dim: 2,
            p0: vec![1.5, 2.0, 3.0],
            rho: 1.0,
            cells_per_unit: 32,
            remainder_p0: 2.5,
            remainder_cells_per_unit: 64,
            radii: vec![1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormParams {
    pub samples: usize,
    pub p_min: f64,
    pub p_max: f64,
}

impl Default for NormParams {
    fn default() -> Self {
        Self { samples: 1000, p_min: 1.2, p_max: 4.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Params {
    Dirichlet(DirichletParams),
    Energy(EnergyParams),
    Barrier(BarrierParams),
    Viscosity(ViscosityParams),
    Harnack(HarnackParams),
    Flatness(FlatnessParams),
    Neumann(NeumannParams),
    Norm(NormParams),
}

fn typed<T: DeserializeOwned>(kind: ExperimentKind, v: Value) -> CliResult<T> {
    serde_json::from_value(v).map_err(|e| CliError::Validation(format!("{} params: {e}", kind.name())))
}

impl Params {
    pub fn parse(kind: ExperimentKind, v: Value) -> CliResult<Self> {
        Ok(match kind {
            ExperimentKind::DirichletBenchmark => Self::Dirichlet(typed(kind, v)?),
            ExperimentKind::EnergyBenchmark => Self::Energy(typed(kind, v)?),
            ExperimentKind::BarrierCertification => Self::Barrier(typed(kind, v)?),
            ExperimentKind::ViscosityBattery => Self::Viscosity(typed(kind, v)?),
            ExperimentKind::HarnackStudy => Self::Harnack(typed(kind, v)?),
            ExperimentKind::FlatnessIteration => Self::Flatness(typed(kind, v)?),
            ExperimentKind::NeumannCheck => Self::Neumann(typed(kind, v)?),
            ExperimentKind::NormSuite => Self::Norm(typed(kind, v)?),
        })
    }

    pub fn to_value(&self) -> Value {
        let v = match self {
            Self::Dirichlet(p) => serde_json::to_value(p),
            Self::Energy(p) => serde_json::to_value(p),
            Self::Barrier(p) => serde_json::to_value(p),
            Self::Viscosity(p) => serde_json::to_value(p),
            Self::Harnack(p) => serde_json::to_value(p),
            Self::Flatness(p) => serde_json::to_value(p),
            Self::Neumann(p) => serde_json::to_value(p),
            Self::Norm(p) => serde_json::to_value(p),
        };
        v.expect("parameter structs serialize")
    }

    fn validate(&self, config: &ExperimentConfig) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::Validation(msg));
        let dim = config.grid.as_ref().map_or(0, |g| g.dim);
        match self {
            Self::Dirichlet(p) => {
                if p.levels == 0 {
                    return bad("dirichlet_benchmark needs levels >= 1".into());
                }
                check_case(p.case, &p.radial, dim)?;
            }
            Self::Energy(p) => {
                if dim != 1 {
                    return bad(format!("energy_benchmark is one-dimensional, got dim = {dim}"));
                }
                if !(p.a >= 0.0 && p.q >= 0.0) {
                    return bad(format!("energy_benchmark needs a >= 0 and q >= 0, got a = {}, q = {}", p.a, p.q));
                }
            }
            Self::Barrier(p) => {
                check_exponent_bounds(p.p_min, p.p_max)?;
                if p.dim == 0 || !(0.0 < p.r1 && p.r1 < p.r2) || p.samples < 2 {
                    return bad(format!("barrier needs dim >= 1, 0 < r1 < r2 and samples >= 2, got {p:?}"));
                }
            }
            Self::Viscosity(p) => {
                check_case(p.source, &p.radial, dim)?;
                if p.count == 0 || !(p.c_tol > 0.0) {
                    return bad("viscosity_battery needs count >= 1 and c_tol > 0".into());
                }
            }
            Self::Harnack(p) => {
                if p.eps.is_empty() || p.eps.iter().any(|e| !(*e > 0.0)) || p.levels == 0 || !(p.radius > 0.0) {
                    return bad(format!("harnack_study needs positive eps, levels >= 1 and radius > 0, got {p:?}"));
                }
            }
            Self::Flatness(p) => {
                if !(p.rbar > 0.0 && p.rbar < 1.0) || p.steps == 0 {
                    return bad(format!("flatness_iteration needs 0 < rbar < 1 and steps >= 1, got {}, {}", p.rbar, p.steps));
                }
                if !p.nu.is_empty() && p.nu.len() != dim {
                    return bad(format!("nu has {} entries for dim {dim}", p.nu.len()));
                }
                if dim < 2 {
                    return bad("flatness_iteration needs dim >= 2".into());
                }
            }
            Self::Neumann(p) => {
                for p0 in p.p0.iter().chain([&p.remainder_p0]) {
                    check_exponent_bounds(*p0, *p0)?;
                }
                if p.dim < 2 || p.radii.is_empty() || !(p.rho > 0.0) {
                    return bad(format!("neumann_check needs dim >= 2, rho > 0 and radii, got {p:?}"));
                }
            }
            Self::Norm(p) => {
                check_exponent_bounds(p.p_min, p.p_max)?;
                if p.samples == 0 {
                    return bad("norm_suite needs samples >= 1".into());
                }
            }
        }
        Ok(())
    }
}

fn check_case(case: DirichletCase, radial: &CaseParams, dim: usize) -> CliResult<()> {
    match case {
        DirichletCase::OnedP3 if dim != 1 => Err(CliError::Validation(format!("case oned_p3 needs dim = 1, got {dim}"))),
        DirichletCase::Radial if !(2..=3).contains(&dim) => {
            Err(CliError::Validation(format!("case radial needs dim 2 or 3, got {dim}")))
        }
        DirichletCase::Radial => {
            check_exponent_bounds(radial.p0, radial.p0)?;
            if !(0.0 < radial.r1 && radial.r1 < radial.r2) {
                return Err(CliError::Validation(format!("radial case needs 0 < r1 < r2, got {radial:?}")));
            }
            Ok(())
        }
        _ => Ok(()),
    }
}
