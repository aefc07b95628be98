//! The p(x)-Laplacian in nondivergence form (pointwise, on smooth fields) and
//! in divergence form (staggered fluxes on a lattice), plus the frozen
//! coefficients of the linear operator it induces.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::px::exponent::ExponentField;
use crate::px::grid::{Grid, GridFunction};

/// Default floor below which `|grad phi|` counts as zero.
pub const GRADIENT_FLOOR: f64 = 1e-12;

/// Default regularization of the flux modulus, `(|G|^2 + delta^2)^((p-2)/2)`.
pub const FLUX_DELTA: f64 = 1e-8;

/// A twice differentiable scalar field with closed-form derivatives.
pub trait SmoothField: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> DVector<f64>;
    fn hessian(&self, x: &[f64]) -> DMatrix<f64>;
}

/// A [`SmoothField`] assembled from three closures.
pub struct SmoothFn<V, G, H> {
    dim: usize,
    value: V,
    gradient: G,
    hessian: H,
}

impl<V, G, H> SmoothFn<V, G, H>
where
    V: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> DVector<f64> + Sync,
    H: Fn(&[f64]) -> DMatrix<f64> + Sync,
{
    pub fn new(dim: usize, value: V, gradient: G, hessian: H) -> Self {
        Self { dim, value, gradient, hessian }
    }
}

impl<V, G, H> SmoothField for SmoothFn<V, G, H>
where
    V: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> DVector<f64> + Sync,
    H: Fn(&[f64]) -> DMatrix<f64> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }
    fn gradient(&self, x: &[f64]) -> DVector<f64> {
        (self.gradient)(x)
    }
    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        (self.hessian)(x)
    }
}

/// Nondivergence expansion from a 2-jet:
/// `|Dphi|^(p-2) (Lap phi + (p-2) <D2phi nu, nu> + <Dp, Dphi> log|Dphi|)`.
pub fn nondiv_from_jet(
    x: &[f64],
    grad: &DVector<f64>,
    hess: &DMatrix<f64>,
    p: f64,
    grad_p: &[f64],
    floor: f64,
) -> Result<f64> {
    let norm = grad.norm();
    if !(norm >= floor) {
        return Err(Error::GradientDegenerate { point: x.to_vec(), norm, floor });
    }
    let lap = hess.trace();
    let inf_lap = (hess * grad).dot(grad) / (norm * norm);
    let drift: f64 = grad_p.iter().zip(grad.iter()).map(|(a, b)| a * b).sum::<f64>() * norm.ln();
    Ok(norm.powf(p - 2.0) * (lap + (p - 2.0) * inf_lap + drift))
}

pub fn eval_p_laplacian_nondiv<S: SmoothField + ?Sized>(
    phi: &S,
    x: &[f64],
    p: &ExponentField,
) -> Result<f64> {
    eval_p_laplacian_nondiv_with_floor(phi, x, p, GRADIENT_FLOOR)
}

pub fn eval_p_laplacian_nondiv_with_floor<S: SmoothField + ?Sized>(
    phi: &S,
    x: &[f64],
    p: &ExponentField,
    floor: f64,
) -> Result<f64> {
    let g = phi.gradient(x);
    let h = phi.hessian(x);
    nondiv_from_jet(x, &g, &h, p.p(x), &p.gradient(x), floor)
}

/// Per-node view of the staggered divergence stencil.
///
/// For a node `i` and axis `d`, the face toward `i + e_d` carries the flux
/// `a(G + e) (G_d + e_d)` where `G_d` is the one-sided difference across the
/// face and the tangential components of `G` average the central
/// differences at both endpoints. Only the normal components depend on
/// `u_i`, which makes the node residual a scalar monotone function of `u_i`.
pub(crate) struct FluxStencil<'a> {
    pub grid: &'a Grid,
    pub p_nodes: Vec<f64>,
    pub delta: f64,
    pub shift: Vec<f64>,
}

/// Frozen data of one face adjacent to a node.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Face {
    /// Value across the face, `u_{i+e_d}` (forward) or `u_{i-e_d}` (backward).
    pub other: f64,
    /// Squared tangential part of `G + e` plus `delta^2`.
    pub tangential2: f64,
    pub p: f64,
}

impl<'a> FluxStencil<'a> {
    pub fn new(grid: &'a Grid, p: &ExponentField, delta: f64, shift: Option<&[f64]>) -> Self {
        let p_nodes = (0..grid.len()).map(|i| p.p(&grid.point(i))).collect();
        let shift = shift.map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; grid.dim()]);
        Self { grid, p_nodes, delta, shift }
    }

    fn central(&self, u: &[f64], i: usize, k: usize) -> f64 {
        let g = self.grid;
        let p = g.neighbor(i, k, true).expect("central difference off the grid");
        let m = g.neighbor(i, k, false).expect("central difference off the grid");
        (u[p] - u[m]) / (2.0 * g.spacing()[k])
    }

    /// Faces of interior node `i` along axis `d`: (forward, backward).
    pub fn faces(&self, u: &[f64], i: usize, d: usize) -> (Face, Face) {
        let g = self.grid;
        let fwd = g.neighbor(i, d, true).expect("interior node");
        let bwd = g.neighbor(i, d, false).expect("interior node");
        let mut t_f = self.delta * self.delta;
        let mut t_b = t_f;
        for k in 0..g.dim() {
            if k == d {
                continue;
            }
            let ci = self.central(u, i, k);
            let gf = 0.5 * (ci + self.central(u, fwd, k)) + self.shift[k];
            let gb = 0.5 * (ci + self.central(u, bwd, k)) + self.shift[k];
            t_f += gf * gf;
            t_b += gb * gb;
        }
        (
            Face { other: u[fwd], tangential2: t_f, p: 0.5 * (self.p_nodes[i] + self.p_nodes[fwd]) },
            Face { other: u[bwd], tangential2: t_b, p: 0.5 * (self.p_nodes[i] + self.p_nodes[bwd]) },
        )
    }

    /// Residual `div F - f` at node `i` as a function of `t = u_i`, with
    /// its derivative in `t`. `faces[d] = (forward, backward)`.
    pub fn node_residual(&self, faces: &[(Face, Face)], t: f64, f: f64) -> (f64, f64) {
        let mut r = -f;
        let mut dr = 0.0;
        for (d, (fw, bw)) in faces.iter().enumerate() {
            let h = self.grid.spacing()[d];
            let e = self.shift[d];
            let sf = (fw.other - t) / h + e;
            let sb = (t - bw.other) / h + e;
            let (ff, df) = normal_flux(sf, fw.tangential2, fw.p);
            let (fb, db) = normal_flux(sb, bw.tangential2, bw.p);
            r += (ff - fb) / h;
            dr -= (df + db) / (h * h);
        }
        (r, dr)
    }

    pub fn residual_at(&self, u: &[f64], i: usize, f: f64) -> f64 {
        let faces: Vec<(Face, Face)> = (0..self.grid.dim()).map(|d| self.faces(u, i, d)).collect();
        self.node_residual(&faces, u[i], f).0
    }
}

/// Normal flux `(s^2 + T)^((p-2)/2) s` and its derivative in `s`.
#[inline]
pub(crate) fn normal_flux(s: f64, tangential2: f64, p: f64) -> (f64, f64) {
    if p == 2.0 {
        return (s, 1.0);
    }
    let m2 = s * s + tangential2;
    let a = m2.powf(0.5 * (p - 2.0));
    (a * s, a * (1.0 + (p - 2.0) * s * s / m2))
}

/// Residual `div(|grad u|^(p-2) grad u) - f` at interior nodes (zero on the
/// box boundary), with flux regularization [`FLUX_DELTA`].
pub fn eval_p_laplacian_div(u: &GridFunction, p: &ExponentField, f: &GridFunction) -> Result<GridFunction> {
    eval_p_laplacian_div_with(u, p, f, FLUX_DELTA, None)
}

/// As [`eval_p_laplacian_div`] with explicit `delta` and an optional constant
/// shift `e` of the gradient inside the flux.
pub fn eval_p_laplacian_div_with(
    u: &GridFunction,
    p: &ExponentField,
    f: &GridFunction,
    delta: f64,
    shift: Option<&[f64]>,
) -> Result<GridFunction> {
    u.grid().ensure_matches(f.grid())?;
    let grid = u.grid();
    if p.dim() != grid.dim() {
        return Err(Error::GridMismatch(format!(
            "exponent of dimension {} on a {}-dimensional grid",
            p.dim(),
            grid.dim()
        )));
    }
    let stencil = FluxStencil::new(grid, p, delta, shift);
    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            if grid.is_boundary(i) {
                0.0
            } else {
                stencil.residual_at(u.values(), i, f.at(i))
            }
        })
        .collect();
    GridFunction::new(grid.clone(), values, format!("residual({})", u.name()))
}

/// Coefficients `A = |Du|^(p-2) (I + (p-2) nu nu^T)` and
/// `b = |Du|^(p-2) log|Du| Dp` from a gradient.
pub fn frozen_from_gradient(
    x: &[f64],
    grad: &DVector<f64>,
    p: f64,
    grad_p: &[f64],
    floor: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let norm = grad.norm();
    if !(norm >= floor) {
        return Err(Error::GradientDegenerate { point: x.to_vec(), norm, floor });
    }
    let n = grad.len();
    let nu = grad / norm;
    let scale = norm.powf(p - 2.0);
    let a = (DMatrix::identity(n, n) + (p - 2.0) * &nu * nu.transpose()) * scale;
    let b = DVector::from_column_slice(grad_p) * (scale * norm.ln());
    Ok((a, b))
}

/// Frozen coefficients at lattice node `idx`, using central differences of
/// `u` (one-sided on the box boundary).
pub fn frozen_coefficients(
    u: &GridFunction,
    p: &ExponentField,
    idx: usize,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let x = u.grid().point(idx);
    let grad = DVector::from_vec(u.gradient_at(idx));
    frozen_from_gradient(&x, &grad, p.p(&x), &p.gradient(&x), GRADIENT_FLOOR)
}

/// Uniform ellipticity bounds `(beta_1, beta_2)` for `A` when
/// `c1 <= |Du| <= big_c1` and `p_min <= p <= p_max`.
///
/// The eigenvalues of `A` are `t^(p-2)` (multiplicity n-1) and
/// `(p-1) t^(p-2)`, and `(p-2) log t` is bilinear in `(p, log t)`, so the
/// extremes sit on the corners of the parameter rectangle.
pub fn ellipticity_bounds(c1: f64, big_c1: f64, p_min: f64, p_max: f64) -> (f64, f64) {
    let corners = [
        c1.powf(p_min - 2.0),
        c1.powf(p_max - 2.0),
        big_c1.powf(p_min - 2.0),
        big_c1.powf(p_max - 2.0),
    ];
    let lo = corners.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = corners.iter().cloned().fold(0.0, f64::max);
    ((p_min - 1.0).min(1.0) * lo, (p_max - 1.0).max(1.0) * hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn radial(gamma: f64, n: usize) -> impl SmoothField {
        SmoothFn::new(
            n,
            move |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt().powf(-gamma),
            move |x: &[f64]| {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                DVector::from_iterator(n, x.iter().map(|v| -gamma * r.powf(-gamma - 2.0) * v))
            },
            move |x: &[f64]| {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let xv = DVector::from_column_slice(x);
                (DMatrix::identity(n, n) * -1.0 + (gamma + 2.0) * &xv * xv.transpose() / (r * r))
                    * (gamma * r.powf(-gamma - 2.0))
            },
        )
    }

    #[test]
    fn affine_is_p_harmonic() {
        let phi = SmoothFn::new(
            3,
            |x: &[f64]| x[2],
            |_: &[f64]| DVector::from_vec(vec![0.0, 0.0, 1.0]),
            |_: &[f64]| DMatrix::zeros(3, 3),
        );
        let p = ExponentField::constant(3, 2.0).unwrap();
        assert_eq!(eval_p_laplacian_nondiv(&phi, &[0.3, -0.2, 0.7], &p).unwrap(), 0.0);
    }

    #[test]
    fn half_square_norm_has_laplacian_n() {
        let phi = SmoothFn::new(
            3,
            |x: &[f64]| 0.5 * x.iter().map(|v| v * v).sum::<f64>(),
            |x: &[f64]| DVector::from_column_slice(x),
            |_: &[f64]| DMatrix::identity(3, 3),
        );
        let p = ExponentField::constant(3, 2.0).unwrap();
        assert_relative_eq!(eval_p_laplacian_nondiv(&phi, &[1.0, 0.0, 0.0], &p).unwrap(), 3.0, epsilon = 1e-15);
    }

    #[test]
    fn radial_power_matches_closed_form() {
        for &(p0, n, gamma) in &[(1.5, 2usize, 4.0), (3.0, 3, 2.5), (2.0, 2, 1.0)] {
            let p = ExponentField::constant(n, p0).unwrap();
            let phi = radial(gamma, n);
            let mut x = vec![0.0; n];
            x[0] = 0.3;
            x[n - 1] = -0.4;
            let r: f64 = 0.5;
            let exact = gamma.powf(p0 - 1.0)
                * r.powf(-gamma * (p0 - 1.0) - p0)
                * (gamma * (p0 - 1.0) + p0 - n as f64);
            let got = eval_p_laplacian_nondiv(&phi, &x, &p).unwrap();
            assert_relative_eq!(got, exact, max_relative = 1e-12);
        }
    }

    #[test]
    fn degenerate_gradient_is_an_error() {
        let phi = SmoothFn::new(
            2,
            |x: &[f64]| x[0] * x[0],
            |x: &[f64]| DVector::from_vec(vec![2.0 * x[0], 0.0]),
            |_: &[f64]| DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0])),
        );
        let p = ExponentField::constant(2, 3.0).unwrap();
        assert!(matches!(
            eval_p_laplacian_nondiv(&phi, &[0.0, 1.0], &p),
            Err(Error::GradientDegenerate { .. })
        ));
    }

    #[test]
    fn linear_function_has_zero_residual() {
        let g = Grid::cube(2, -1.0, 1.0, 16).unwrap();
        let u = GridFunction::from_fn(&g, "u", |x| x[1]);
        let f = GridFunction::constant(&g, "f", 0.0);
        let p = ExponentField::constant(2, 2.0).unwrap();
        let r = eval_p_laplacian_div(&u, &p, &f).unwrap();
        assert!(r.sup_norm() < 1e-12);
    }

    #[test]
    fn grid_mismatch_is_detected() {
        let g1 = Grid::cube(2, -1.0, 1.0, 16).unwrap();
        let g2 = Grid::cube(2, -1.0, 1.0, 8).unwrap();
        let u = GridFunction::constant(&g1, "u", 0.0);
        let f = GridFunction::constant(&g2, "f", 0.0);
        let p = ExponentField::constant(2, 2.0).unwrap();
        assert!(matches!(eval_p_laplacian_div(&u, &p, &f), Err(Error::GridMismatch(_))));
    }

    /// 1D, p = 3: u = (2/3)(x+1)^(3/2) has |u'|u' = x + 1, so (|u'|u')' = 1.
    #[test]
    fn one_dimensional_residual_converges_at_first_order() {
        let p = ExponentField::constant(1, 3.0).unwrap();
        let mut errs = Vec::new();
        for cells in [64usize, 128, 256, 512] {
            let g = Grid::cube(1, 0.0, 1.0, cells).unwrap();
            let u = GridFunction::from_fn(&g, "u", |x| 2.0 / 3.0 * (x[0] + 1.0).powf(1.5));
            let f = GridFunction::constant(&g, "f", 1.0);
            errs.push(eval_p_laplacian_div(&u, &p, &f).unwrap().sup_norm());
        }
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() >= 1.0 - 0.05, "{errs:?}");
        }
    }

    #[test]
    fn frozen_coefficients_examples() {
        let x = [0.0, 0.0];
        let (a, b) = frozen_from_gradient(&x, &DVector::from_vec(vec![2.0, 0.0]), 3.0, &[0.0, 0.0], GRADIENT_FLOOR).unwrap();
        assert_relative_eq!(a[(0, 0)], 4.0, epsilon = 1e-14);
        assert_relative_eq!(a[(1, 1)], 2.0, epsilon = 1e-14);
        assert_eq!(a[(0, 1)], 0.0);
        assert_eq!(b.norm(), 0.0);

        let (a, b) = frozen_from_gradient(&x, &DVector::from_vec(vec![0.6, 0.8]), 2.7, &[0.3, 0.1], GRADIENT_FLOOR).unwrap();
        let nu = DVector::from_vec(vec![0.6, 0.8]);
        let expect: DMatrix<f64> = DMatrix::identity(2, 2) + 0.7 * &nu * nu.transpose();
        assert!((a - expect).norm() < 1e-14);
        assert!(b.norm() < 1e-15);

        let (a, b) = frozen_from_gradient(&x, &DVector::from_vec(vec![1.0, 0.5]), 2.0, &[0.0, 0.0], GRADIENT_FLOOR).unwrap();
        assert!((a - DMatrix::identity(2, 2)).norm() < 1e-15);
        assert_eq!(b.norm(), 0.0);
    }

    proptest! {
        #[test]
        fn frozen_ellipticity(
            c1 in 0.05f64..1.0,
            span in 1.0f64..20.0,
            p_min in 1.1f64..3.0,
            dp in 0.0f64..3.0,
            s in 0.0f64..1.0,
            t in 0.0f64..1.0,
            angle in 0.0f64..std::f64::consts::TAU,
            xi in proptest::collection::vec(-3.0f64..3.0, 2),
        ) {
            let big = c1 * span;
            let p_max = p_min + dp;
            let norm = c1 + s * (big - c1);
            let p = p_min + t * dp;
            let g = DVector::from_vec(vec![norm * angle.cos(), norm * angle.sin()]);
            let (a, _) = frozen_from_gradient(&[0.0, 0.0], &g, p, &[0.0, 0.0], GRADIENT_FLOOR).unwrap();
            let (b1, b2) = ellipticity_bounds(c1, big, p_min, p_max);
            let xi = DVector::from_vec(xi);
            let q = (&a * &xi).dot(&xi);
            let n2 = xi.norm_squared();
            prop_assert!(q >= b1 * n2 * (1.0 - 1e-12) - 1e-300);
            prop_assert!(q <= b2 * n2 * (1.0 + 1e-12));
            prop_assert!((a.clone() - a.transpose()).norm() <= 1e-14 * a.norm());
        }

        #[test]
        fn identity_reduction_for_quadratic_fields(
            h00 in -5.0f64..5.0, h01 in -5.0f64..5.0, h11 in -5.0f64..5.0,
            g0 in 0.1f64..3.0, g1 in -3.0f64..3.0,
            x0 in -1.0f64..1.0, x1 in -1.0f64..1.0,
        ) {
            let hess = DMatrix::from_row_slice(2, 2, &[h00, h01, h01, h11]);
            let grad = DVector::from_vec(vec![g0, g1]);
            let v = nondiv_from_jet(&[x0, x1], &grad, &hess, 2.0, &[0.0, 0.0], GRADIENT_FLOOR).unwrap();
            prop_assert!((v - (h00 + h11)).abs() <= 1e-14 * (1.0 + h00.abs() + h11.abs()));
        }
    }
}
