//! The variable exponent `p(x)`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::px::grid::Grid;

type PFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Step for the central-difference fallback gradient.
const FD_STEP: f64 = 1e-6;

/// A variable exponent with declared bounds `1 < p_min <= p <= p_max` and a
/// declared Lipschitz constant.
#[derive(Clone)]
pub struct ExponentField {
    dim: usize,
    p: PFn,
    grad: Option<GradFn>,
    p_min: f64,
    p_max: f64,
    lipschitz: f64,
    base_point: Vec<f64>,
    p0: f64,
    theta: Option<f64>,
    label: String,
}

impl fmt::Debug for ExponentField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExponentField")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("p_min", &self.p_min)
            .field("p_max", &self.p_max)
            .field("lipschitz", &self.lipschitz)
            .field("p0", &self.p0)
            .field("theta", &self.theta)
            .finish()
    }
}

fn check_bounds(p_min: f64, p_max: f64) -> Result<()> {
    if !(p_min > 1.0) {
        return Err(Error::Domain(format!("exponent bound requires 1 < p_min, got p_min = {p_min}")));
    }
    if !(p_max >= p_min && p_max.is_finite()) {
        return Err(Error::Domain(format!(
            "exponent bound requires p_min <= p_max < inf, got [{p_min}, {p_max}]"
        )));
    }
    Ok(())
}

impl ExponentField {
    pub fn constant(dim: usize, p0: f64) -> Result<Self> {
        check_bounds(p0, p0)?;
        Ok(Self {
            dim,
            p: Arc::new(move |_| p0),
            grad: Some(Arc::new(move |_| vec![0.0; dim])),
            p_min: p0,
            p_max: p0,
            lipschitz: 0.0,
            base_point: vec![0.0; dim],
            p0,
            theta: None,
            label: format!("constant p = {p0}"),
        })
    }

    /// `p(x) = p_c + slope . (x - center)`, valid on the cube of half-width
    /// `extent` around `center`. Bounds are taken over that cube.
    pub fn affine(p_c: f64, slope: Vec<f64>, center: Vec<f64>, extent: f64) -> Result<Self> {
        let dim = slope.len();
        if center.len() != dim {
            return Err(Error::Domain("slope/center dimension mismatch".into()));
        }
        let spread: f64 = slope.iter().map(|s| s.abs()).sum::<f64>() * extent;
        let (p_min, p_max) = (p_c - spread, p_c + spread);
        check_bounds(p_min, p_max)?;
        let lipschitz = slope.iter().map(|s| s * s).sum::<f64>().sqrt();
        let (s1, c1) = (slope.clone(), center.clone());
        let s2 = slope.clone();
        let p0 = p_c - slope.iter().zip(&center).map(|(s, c)| s * c).sum::<f64>();
        Ok(Self {
            dim,
            p: Arc::new(move |x| p_c + s1.iter().zip(x.iter().zip(&c1)).map(|(s, (xi, ci))| s * (xi - ci)).sum::<f64>()),
            grad: Some(Arc::new(move |_| s2.clone())),
            p_min,
            p_max,
            lipschitz,
            base_point: vec![0.0; dim],
            p0,
            theta: None,
            label: format!("affine p = {p_c} + {slope:?}.(x - {center:?})"),
        })
    }

    /// Piecewise-constant exponent: `low` where `x[axis] < threshold`, `high`
    /// elsewhere. Not Lipschitz; useful for norm tests.
    pub fn two_valued(dim: usize, low: f64, high: f64, axis: usize, threshold: f64) -> Result<Self> {
        check_bounds(low.min(high), low.max(high))?;
        let p0 = if 0.0 < threshold { low } else { high };
        Ok(Self {
            dim,
            p: Arc::new(move |x| if x[axis] < threshold { low } else { high }),
            grad: Some(Arc::new(move |_| vec![0.0; dim])),
            p_min: low.min(high),
            p_max: low.max(high),
            lipschitz: f64::INFINITY,
            base_point: vec![0.0; dim],
            p0,
            theta: None,
            label: format!("two-valued p in {{{low}, {high}}}"),
        })
    }

    /// General exponent from a closure. The gradient falls back to central
    /// differences unless [`ExponentField::with_gradient`] is used.
    pub fn from_fn(
        dim: usize,
        p: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        p_min: f64,
        p_max: f64,
        lipschitz: f64,
    ) -> Result<Self> {
        check_bounds(p_min, p_max)?;
        if !(lipschitz >= 0.0) {
            return Err(Error::Domain(format!("Lipschitz bound must be >= 0, got {lipschitz}")));
        }
        let p: PFn = Arc::new(p);
        let p0 = p(&vec![0.0; dim]);
        Ok(Self {
            dim,
            p,
            grad: None,
            p_min,
            p_max,
            lipschitz,
            base_point: vec![0.0; dim],
            p0,
            theta: None,
            label: "custom".into(),
        })
    }

    pub fn with_gradient(mut self, grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.grad = Some(Arc::new(grad));
        self
    }

    pub fn with_base_point(mut self, x: Vec<f64>) -> Self {
        self.p0 = (self.p)(&x);
        self.base_point = x;
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = Some(theta);
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn p(&self, x: &[f64]) -> f64 {
        (self.p)(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        if let Some(g) = &self.grad {
            return g(x);
        }
        let mut y = x.to_vec();
        (0..self.dim)
            .map(|d| {
                y[d] = x[d] + FD_STEP;
                let fp = (self.p)(&y);
                y[d] = x[d] - FD_STEP;
                let fm = (self.p)(&y);
                y[d] = x[d];
                (fp - fm) / (2.0 * FD_STEP)
            })
            .collect()
    }

    pub fn p_min(&self) -> f64 {
        self.p_min
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn p0(&self) -> f64 {
        self.p0
    }

    pub fn base_point(&self) -> &[f64] {
        &self.base_point
    }

    pub fn theta(&self) -> Option<f64> {
        self.theta
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_constant(&self) -> bool {
        self.lipschitz == 0.0 && self.p_min == self.p_max
    }

    /// Exponent seen through the blow-up `x -> rho x`: `p_rho(x) = p(rho x)`.
    pub fn rescaled(&self, rho: f64) -> Self {
        let inner = self.clone();
        let inner_g = self.clone();
        let mut out = Self {
            dim: self.dim,
            p: Arc::new(move |x| {
                let y: Vec<f64> = x.iter().map(|v| v * rho).collect();
                inner.p(&y)
            }),
            grad: Some(Arc::new(move |x| {
                let y: Vec<f64> = x.iter().map(|v| v * rho).collect();
                inner_g.gradient(&y).into_iter().map(|g| g * rho).collect()
            })),
            p_min: self.p_min,
            p_max: self.p_max,
            lipschitz: self.lipschitz * rho,
            base_point: self.base_point.iter().map(|v| v / rho).collect(),
            p0: self.p0,
            theta: self.theta,
            label: format!("{} rescaled by {rho}", self.label),
        };
        out.p0 = out.p(&out.base_point.clone());
        out
    }

    /// Checks the declared bounds at every node and the Lipschitz bound on
    /// every pair of axis neighbors.
    pub fn validate_on(&self, grid: &Grid) -> Result<()> {
        if grid.dim() != self.dim {
            return Err(Error::GridMismatch(format!(
                "exponent of dimension {} on a {}-dimensional grid",
                self.dim,
                grid.dim()
            )));
        }
        let values: Vec<f64> = (0..grid.len()).map(|i| self.p(&grid.point(i))).collect();
        let slack = 1e-12;
        for (i, v) in values.iter().enumerate() {
            if !(*v >= self.p_min - slack && *v <= self.p_max + slack) {
                return Err(Error::Domain(format!(
                    "p = {v} at {:?} outside declared [{}, {}]",
                    grid.point(i),
                    self.p_min,
                    self.p_max
                )));
            }
        }
        if self.lipschitz.is_finite() {
            for i in 0..grid.len() {
                for d in 0..grid.dim() {
                    if let Some(j) = grid.neighbor(i, d, true) {
                        let bound = self.lipschitz * grid.spacing()[d] * (1.0 + 1e-9) + slack;
                        if (values[j] - values[i]).abs() > bound {
                            return Err(Error::Domain(format!(
                                "Lipschitz bound {} violated near {:?}",
                                self.lipschitz,
                                grid.point(i)
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Largest `|grad p|` over the nodes of `grid`.
    pub fn gradient_sup_on(&self, grid: &Grid) -> f64 {
        (0..grid.len())
            .map(|i| self.gradient(&grid.point(i)).iter().map(|g| g * g).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}
