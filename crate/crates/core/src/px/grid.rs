//! Uniform Cartesian lattices and the scalar fields that live on them.
//!
//! Lattice nodes are stored in row-major order: the last axis varies
//! fastest. That order is also the lexicographic order used by every
//! reduction in the crate, so sums and argmins do not depend on how a sweep
//! was partitioned.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack when snapping a box extent to a whole number of cells.
const SNAP_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Nodes per axis (cells + 1).
    shape: Vec<usize>,
    #[serde(skip)]
    spacing: Vec<f64>,
    #[serde(skip)]
    strides: Vec<usize>,
}

impl Grid {
    /// Box `[lower, upper]` split into `cells[d]` cells along axis `d`.
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, cells: &[usize]) -> Result<Self> {
        let n = lower.len();
        if n == 0 || upper.len() != n || cells.len() != n {
            return Err(Error::Domain(format!(
                "grid needs matching nonzero dimensions (lower {}, upper {}, cells {})",
                lower.len(),
                upper.len(),
                cells.len()
            )));
        }
        for d in 0..n {
            if !(lower[d].is_finite() && upper[d].is_finite() && upper[d] > lower[d]) {
                return Err(Error::Domain(format!(
                    "axis {d}: need finite lower < upper, got [{}, {}]",
                    lower[d], upper[d]
                )));
            }
            if cells[d] == 0 {
                return Err(Error::Domain(format!("axis {d}: need at least one cell")));
            }
        }
        let shape: Vec<usize> = cells.iter().map(|c| c + 1).collect();
        Ok(Self::assemble(lower, upper, shape))
    }

    /// Box `[lower, upper]` with spacing `h` on every axis. The extent of each
    /// axis must be a whole multiple of `h`.
    pub fn with_spacing(lower: Vec<f64>, upper: Vec<f64>, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Domain(format!("spacing must be positive, got {h}")));
        }
        if lower.len() != upper.len() {
            return Err(Error::Domain("lower/upper dimension mismatch".into()));
        }
        let mut cells = Vec::with_capacity(lower.len());
        for (lo, hi) in lower.iter().zip(&upper) {
            let c = (hi - lo) / h;
            let rounded = c.round();
            if rounded < 1.0 || (c - rounded).abs() > SNAP_TOL * c.max(1.0) {
                return Err(Error::Domain(format!(
                    "extent {} is not a whole multiple of h = {h}",
                    hi - lo
                )));
            }
            cells.push(rounded as usize);
        }
        Self::new(lower, upper, &cells)
    }

    /// The cube `[lo, hi]^n` with `cells` cells per axis.
    pub fn cube(n: usize, lo: f64, hi: f64, cells: usize) -> Result<Self> {
        Self::new(vec![lo; n], vec![hi; n], &vec![cells; n])
    }

    fn assemble(lower: Vec<f64>, upper: Vec<f64>, shape: Vec<usize>) -> Self {
        let n = shape.len();
        let spacing = (0..n)
            .map(|d| (upper[d] - lower[d]) / (shape[d] - 1) as f64)
            .collect();
        let mut strides = vec![1usize; n];
        for d in (0..n.saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * shape[d + 1];
        }
        Self { lower, upper, shape, spacing, strides }
    }

    /// Rebuilds derived fields after deserialization.
    pub(crate) fn rebuilt(self) -> Self {
        Self::assemble(self.lower, self.upper, self.shape)
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Largest spacing over all axes.
    pub fn h_max(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    pub fn h_min(&self) -> f64 {
        self.spacing.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn measure(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product()
    }

    /// Same box and lattice, up to a relative tolerance on the corners.
    pub fn matches(&self, other: &Grid) -> bool {
        if self.shape != other.shape {
            return false;
        }
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()));
        self.lower.iter().zip(&other.lower).all(|(a, b)| close(*a, *b))
            && self.upper.iter().zip(&other.upper).all(|(a, b)| close(*a, *b))
    }

    pub fn ensure_matches(&self, other: &Grid) -> Result<()> {
        if self.matches(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "shapes {:?} vs {:?}, boxes [{:?}, {:?}] vs [{:?}, {:?}]",
                self.shape, other.shape, self.lower, self.upper, other.lower, other.upper
            )))
        }
    }

    pub fn index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn multi_index_into(&self, mut idx: usize, out: &mut [usize]) {
        for d in 0..self.dim() {
            out[d] = idx / self.strides[d];
            idx %= self.strides[d];
        }
    }

    pub fn multi_index(&self, idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        self.multi_index_into(idx, &mut out);
        out
    }

    /// Coordinate of node `idx` along `axis`.
    pub fn coord(&self, idx: usize, axis: usize) -> f64 {
        let i = (idx / self.strides[axis]) % self.shape[axis];
        self.axis_coord(axis, i)
    }

    pub fn axis_coord(&self, axis: usize, i: usize) -> f64 {
        if i + 1 == self.shape[axis] {
            self.upper[axis]
        } else {
            self.lower[axis] + i as f64 * self.spacing[axis]
        }
    }

    pub fn point_into(&self, idx: usize, out: &mut [f64]) {
        for (d, o) in out.iter_mut().enumerate().take(self.dim()) {
            *o = self.coord(idx, d);
        }
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        self.point_into(idx, &mut p);
        p
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        (0..self.dim()).any(|d| {
            let i = (idx / self.strides[d]) % self.shape[d];
            i == 0 || i + 1 == self.shape[d]
        })
    }

    /// Neighbor one step along `axis` in direction `forward`.
    pub fn neighbor(&self, idx: usize, axis: usize, forward: bool) -> Option<usize> {
        let i = (idx / self.strides[axis]) % self.shape[axis];
        if forward {
            (i + 1 < self.shape[axis]).then(|| idx + self.strides[axis])
        } else {
            (i > 0).then(|| idx - self.strides[axis])
        }
    }

    /// Nearest lattice node to `x` (clamped to the box).
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let mut idx = 0;
        for d in 0..self.dim() {
            let t = ((x[d] - self.lower[d]) / self.spacing[d]).round();
            let i = t.clamp(0.0, (self.shape[d] - 1) as f64) as usize;
            idx += i * self.strides[d];
        }
        idx
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let slack = 1e-12;
        (0..self.dim()).all(|d| {
            let s = slack * (1.0 + self.upper[d].abs().max(self.lower[d].abs()));
            x[d] >= self.lower[d] - s && x[d] <= self.upper[d] + s
        })
    }

    /// Whether the closed ball `B_r(center)` lies in the box.
    pub fn contains_ball(&self, center: &[f64], r: f64) -> bool {
        let slack = 1e-12;
        (0..self.dim()).all(|d| {
            center[d] - r >= self.lower[d] - slack && center[d] + r <= self.upper[d] + slack
        })
    }

    /// Lattice nodes of the closed ball `B_r(center)` in lexicographic order.
    pub fn nodes_in_ball(&self, center: &[f64], r: f64) -> Vec<usize> {
        let n = self.dim();
        let r2 = r * r * (1.0 + 1e-12) + 1e-24;
        let mut lo = vec![0usize; n];
        let mut hi = vec![0usize; n];
        for d in 0..n {
            let a = ((center[d] - r - self.lower[d]) / self.spacing[d]).floor().max(0.0);
            let b = ((center[d] + r - self.lower[d]) / self.spacing[d])
                .ceil()
                .min((self.shape[d] - 1) as f64);
            if b < a {
                return Vec::new();
            }
            lo[d] = a as usize;
            hi[d] = b as usize;
        }
        let mut out = Vec::new();
        let mut cur = lo.clone();
        let mut x = vec![0.0; n];
        loop {
            let mut dist2 = 0.0;
            for d in 0..n {
                x[d] = self.axis_coord(d, cur[d]);
                dist2 += (x[d] - center[d]).powi(2);
            }
            if dist2 <= r2 {
                out.push(self.index(&cur));
            }
            // odometer increment, last axis fastest
            let mut d = n;
            loop {
                if d == 0 {
                    return out;
                }
                d -= 1;
                if cur[d] < hi[d] {
                    cur[d] += 1;
                    break;
                }
                cur[d] = lo[d];
            }
        }
    }

    /// Cell containing `x` and the local coordinates in `[0, 1]^n`.
    pub fn locate(&self, x: &[f64]) -> Option<(Vec<usize>, Vec<f64>)> {
        if !self.contains(x) {
            return None;
        }
        let n = self.dim();
        let mut base = vec![0usize; n];
        let mut frac = vec![0.0; n];
        for d in 0..n {
            let t = ((x[d] - self.lower[d]) / self.spacing[d]).max(0.0);
            let cells = self.shape[d] - 1;
            let i = (t.floor() as usize).min(cells - 1);
            base[d] = i;
            frac[d] = (t - i as f64).clamp(0.0, 1.0);
        }
        Some((base, frac))
    }
}

/// A real-valued field that can be evaluated anywhere in its domain.
pub trait ScalarField: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    /// Spacing of the underlying data when the field is sampled.
    fn resolution(&self) -> Option<f64> {
        None
    }
}

/// A closure seen as a [`ScalarField`].
pub struct Analytic<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Analytic<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> ScalarField for Analytic<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

/// Nodal values of a scalar field on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
    name: String,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>, name: impl Into<String>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a lattice of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite value {} at node {:?}",
                values[i],
                grid.point(i)
            )));
        }
        Ok(Self { grid, values, name: name.into() })
    }

    pub fn from_fn(grid: &Grid, name: impl Into<String>, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut x = vec![0.0; grid.dim()];
        let values = (0..grid.len())
            .map(|i| {
                grid.point_into(i, &mut x);
                f(&x)
            })
            .collect();
        Self { grid: grid.clone(), values, name: name.into() }
    }

    pub fn constant(grid: &Grid, name: impl Into<String>, c: f64) -> Self {
        Self { grid: grid.clone(), values: vec![c; grid.len()], name: name.into() }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn at(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Sup-norm distance to `other` on the same lattice.
    pub fn sup_distance(&self, other: &GridFunction) -> Result<f64> {
        self.grid.ensure_matches(&other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Sup-norm distance to an analytic function over the nodes selected by `mask`.
    pub fn sup_error_where(
        &self,
        exact: impl Fn(&[f64]) -> f64,
        mask: impl Fn(usize) -> bool,
    ) -> f64 {
        let mut x = vec![0.0; self.dim()];
        let mut err: f64 = 0.0;
        for (i, v) in self.values.iter().enumerate() {
            if mask(i) {
                self.grid.point_into(i, &mut x);
                err = err.max((v - exact(&x)).abs());
            }
        }
        err
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| f(*v)).collect(),
            name: self.name.clone(),
        }
    }

    /// Multilinear interpolation; `None` outside the box.
    pub fn interpolate(&self, x: &[f64]) -> Option<f64> {
        let (base, frac) = self.grid.locate(x)?;
        let n = self.dim();
        let base_idx = self.grid.index(&base);
        let strides = self.grid.strides();
        let mut acc = 0.0;
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut idx = base_idx;
            for d in 0..n {
                if corner >> d & 1 == 1 {
                    w *= frac[d];
                    idx += strides[d];
                } else {
                    w *= 1.0 - frac[d];
                }
            }
            if w != 0.0 {
                acc += w * self.values[idx];
            }
        }
        Some(acc)
    }

    /// Central-difference gradient at a node (one-sided on the box boundary).
    pub fn gradient_at(&self, idx: usize) -> Vec<f64> {
        let g = &self.grid;
        (0..g.dim())
            .map(|d| {
                let h = g.spacing()[d];
                match (g.neighbor(idx, d, false), g.neighbor(idx, d, true)) {
                    (Some(m), Some(p)) => (self.values[p] - self.values[m]) / (2.0 * h),
                    (None, Some(p)) => (self.values[p] - self.values[idx]) / h,
                    (Some(m), None) => (self.values[idx] - self.values[m]) / h,
                    (None, None) => 0.0,
                }
            })
            .collect()
    }

    /// Second-difference Hessian at an interior node. Mixed derivatives use
    /// the four diagonal neighbors.
    pub fn hessian_at(&self, idx: usize) -> Option<Vec<Vec<f64>>> {
        let g = &self.grid;
        let n = g.dim();
        let v = &self.values;
        let mut hess = vec![vec![0.0; n]; n];
        for a in 0..n {
            let ha = g.spacing()[a];
            let p = g.neighbor(idx, a, true)?;
            let m = g.neighbor(idx, a, false)?;
            hess[a][a] = (v[p] - 2.0 * v[idx] + v[m]) / (ha * ha);
            for b in (a + 1)..n {
                let hb = g.spacing()[b];
                let pp = g.neighbor(p, b, true)?;
                let pm = g.neighbor(p, b, false)?;
                let mp = g.neighbor(m, b, true)?;
                let mm = g.neighbor(m, b, false)?;
                let mixed = (v[pp] - v[pm] - v[mp] + v[mm]) / (4.0 * ha * hb);
                hess[a][b] = mixed;
                hess[b][a] = mixed;
            }
        }
        Some(hess)
    }
}

impl ScalarField for GridFunction {
    fn dim(&self) -> usize {
        self.grid.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.interpolate(x).unwrap_or(f64::NAN)
    }

    fn resolution(&self) -> Option<f64> {
        Some(self.grid.h_max())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_cardinality_and_order() {
        let g = Grid::new(vec![0.0, -1.0], vec![1.0, 1.0], &[4, 8]).unwrap();
        assert_eq!(g.shape(), &[5, 9]);
        assert_eq!(g.len(), 45);
        // last axis fastest
        assert_eq!(g.point(1), vec![0.0, -0.75]);
        assert_eq!(g.point(9), vec![0.25, -1.0]);
        let m = g.multi_index(23);
        assert_eq!(g.index(&m), 23);
    }

    #[test]
    fn spacing_must_divide_extent() {
        assert!(Grid::with_spacing(vec![0.0], vec![1.0], 0.3).is_err());
        let g = Grid::with_spacing(vec![-1.0, -1.0], vec![1.0, 1.0], 1.0 / 64.0).unwrap();
        assert_eq!(g.shape(), &[129, 129]);
        assert!(Grid::with_spacing(vec![0.0], vec![1.0], -0.1).is_err());
    }

    #[test]
    fn boundary_and_neighbors() {
        let g = Grid::cube(2, 0.0, 1.0, 2).unwrap();
        assert!(g.is_boundary(0));
        assert!(!g.is_boundary(4));
        assert_eq!(g.neighbor(4, 0, true), Some(7));
        assert_eq!(g.neighbor(0, 1, false), None);
    }

    #[test]
    fn interpolation_reproduces_multilinear_functions() {
        let g = Grid::cube(2, -1.0, 1.0, 7).unwrap();
        let f = |x: &[f64]| 1.0 + 2.0 * x[0] - 0.5 * x[1] + 0.25 * x[0] * x[1];
        let u = GridFunction::from_fn(&g, "u", f);
        for x in [[0.1, 0.2], [-0.93, 0.77], [1.0, 1.0], [-1.0, 0.0]] {
            assert!((u.interpolate(&x).unwrap() - f(&x)).abs() < 1e-13);
        }
        assert!(u.interpolate(&[1.5, 0.0]).is_none());
    }

    #[test]
    fn ball_nodes_are_inside() {
        let g = Grid::cube(2, -1.0, 1.0, 20).unwrap();
        let nodes = g.nodes_in_ball(&[0.0, 0.0], 0.5);
        assert!(!nodes.is_empty());
        for i in &nodes {
            let p = g.point(*i);
            assert!(p[0].hypot(p[1]) <= 0.5 + 1e-12);
        }
        // 0.5 along an axis is a node, so the ball includes it
        assert!(nodes.contains(&g.nearest_node(&[0.5, 0.0])));
        let brute = (0..g.len())
            .filter(|i| {
                let p = g.point(*i);
                p[0].hypot(p[1]) <= 0.5 + 1e-12
            })
            .count();
        assert_eq!(brute, nodes.len());
    }

    #[test]
    fn rejects_nonfinite_values() {
        let g = Grid::cube(1, 0.0, 1.0, 2).unwrap();
        assert!(GridFunction::new(g.clone(), vec![0.0, f64::NAN, 1.0], "u").is_err());
        assert!(GridFunction::new(g, vec![0.0, 1.0], "u").is_err());
    }
}
