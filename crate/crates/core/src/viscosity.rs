//! Discrete touching tests: quadratic test functions touching a lattice
//! field from below or above, the interior and free boundary inequalities
//! they must satisfy, the comparison check for strict subsolutions and the
//! linearized Neumann conditions.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barriers::ComparisonKind;
use crate::error::{Error, Result};
use crate::px::exponent::ExponentField;
use crate::px::grid::{GridFunction, ScalarField};
use crate::px::operator::{eval_p_laplacian_nondiv, SmoothField};
use crate::px::phase::extract_positive_phase;

/// Equality tolerance at the contact node.
pub const CONTACT_TOLERANCE: f64 = 1e-12;
/// Tolerance for checks against closed-form fields.
pub const EXACT_TOLERANCE: f64 = 1e-8;
/// Default `C_tol` in the `C_tol * h` tolerance used against solver output.
pub const DEFAULT_C_TOL: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// `phi <= u` near the contact point.
    Below,
    /// `phi >= u` near the contact point.
    Above,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::Below => 1.0,
            Side::Above => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Side::Below => Side::Above,
            Side::Above => Side::Below,
        }
    }
}

/// `value + gradient.(x - c) + (x - c)^T H (x - c) / 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestPolynomial {
    pub center: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Row-major symmetric Hessian.
    pub hessian: Vec<Vec<f64>>,
}

impl TestPolynomial {
    pub fn new(center: Vec<f64>, value: f64, gradient: Vec<f64>, hessian: Vec<Vec<f64>>) -> Result<Self> {
        let n = center.len();
        if gradient.len() != n || hessian.len() != n || hessian.iter().any(|r| r.len() != n) {
            return Err(Error::Domain(format!("test polynomial of dimension {n} has mismatched derivative sizes")));
        }
        let scale = hessian.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
        for a in 0..n {
            for b in 0..a {
                if (hessian[a][b] - hessian[b][a]).abs() > 1e-12 * scale {
                    return Err(Error::Domain(format!("Hessian is not symmetric at ({a}, {b})")));
                }
            }
        }
        if !(value.is_finite() && gradient.iter().chain(hessian.iter().flatten()).all(|v| v.is_finite())) {
            return Err(Error::Domain("test polynomial has non-finite coefficients".into()));
        }
        Ok(Self { center, value, gradient, hessian })
    }

    /// `value + gradient.(x - c) + lambda |x - c|^2`.
    pub fn paraboloid(center: Vec<f64>, value: f64, gradient: Vec<f64>, lambda: f64) -> Result<Self> {
        let n = center.len();
        let hessian = (0..n).map(|a| (0..n).map(|b| if a == b { 2.0 * lambda } else { 0.0 }).collect()).collect();
        Self::new(center, value, gradient, hessian)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let d: Vec<f64> = x.iter().zip(&self.center).map(|(x, c)| x - c).collect();
        let mut v = self.value;
        for a in 0..d.len() {
            v += self.gradient[a] * d[a];
            for b in 0..d.len() {
                v += 0.5 * self.hessian[a][b] * d[a] * d[b];
            }
        }
        v
    }

    pub fn gradient_at(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|a| self.gradient[a] + (0..self.dim()).map(|b| self.hessian[a][b] * (x[b] - self.center[b])).sum::<f64>())
            .collect()
    }

    /// The same polynomial re-expanded around `c`.
    pub fn recentered(&self, c: &[f64]) -> Self {
        Self { center: c.to_vec(), value: self.eval(c), gradient: self.gradient_at(c), hessian: self.hessian.clone() }
    }

    pub fn shifted(&self, t: f64) -> Self {
        Self { value: self.value + t, ..self.clone() }
    }

    pub fn negated(&self) -> Self {
        Self {
            center: self.center.clone(),
            value: -self.value,
            gradient: self.gradient.iter().map(|g| -g).collect(),
            hessian: self.hessian.iter().map(|r| r.iter().map(|v| -v).collect()).collect(),
        }
    }

    /// `L_{p0} P = Lap P + (p0 - 2) P_nn` (constant for a quadratic).
    pub fn linearized(&self, p0: f64) -> f64 {
        let n = self.dim();
        (0..n).map(|a| self.hessian[a][a]).sum::<f64>() + (p0 - 2.0) * self.hessian[n - 1][n - 1]
    }

    pub fn spectral_radius(&self) -> f64 {
        let n = self.dim();
        let m = DMatrix::from_fn(n, n, |a, b| self.hessian[a][b]);
        m.symmetric_eigenvalues().iter().fold(0.0f64, |r, e| r.max(e.abs()))
    }
}

impl SmoothField for TestPolynomial {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }
    fn gradient(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_vec(self.gradient_at(x))
    }
    fn hessian(&self, _: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |a, b| self.hessian[a][b])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TouchingVerdict {
    /// Contact node and its coordinates.
    pub node: usize,
    pub touch_point: Vec<f64>,
    pub side: Side,
    /// `min s (u - phi)` over the neighborhood, `s = +1` below and `-1`
    /// above; the touch needs the vertical shift `-gap`.
    pub gap: f64,
    /// Whether `phi` touches without a shift (`|gap| <= 1e-12`) at a node
    /// within one cell of the requested point.
    pub touch_valid: bool,
    /// Signed quantity the inequality is about (`NaN` for a bare touch).
    pub inequality: f64,
    pub tolerance: f64,
    /// Whether the inequality was skipped as not required.
    pub exempt: bool,
    pub pass: bool,
}

struct Contact {
    node: usize,
    point: Vec<f64>,
    gap: f64,
    distance: f64,
}

fn contact(u: &GridFunction, phi: &dyn Fn(&[f64]) -> f64, side: Side, center: &[f64], radius: f64) -> Result<Contact> {
    let grid = u.grid();
    if center.len() != grid.dim() {
        return Err(Error::Domain(format!("point of dimension {} on a {}-dimensional grid", center.len(), grid.dim())));
    }
    let h = grid.h_max();
    if radius < 2.0 * h - 1e-12 {
        return Err(Error::PreconditionViolated(format!("neighborhood radius {radius} below 2h = {}", 2.0 * h)));
    }
    let nodes = grid.nodes_in_ball(center, radius);
    if nodes.is_empty() {
        return Err(Error::BallOutOfDomain { center: center.to_vec(), radius });
    }
    let s = side.sign();
    let dist = |i: usize| grid.point(i).iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let gaps: Vec<(usize, f64)> = nodes.iter().map(|&i| (i, s * (u.at(i) - phi(&grid.point(i))))).collect();
    let gap = gaps.iter().fold(f64::INFINITY, |m, (_, g)| m.min(*g));
    // among the nodes attaining the minimum, the one nearest the center
    let mut best: Option<(usize, f64)> = None;
    for &(i, g) in &gaps {
        if g <= gap + CONTACT_TOLERANCE {
            let d = dist(i);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
    }
    let (node, distance) = best.expect("nonempty neighborhood");
    Ok(Contact { node, point: grid.point(node), gap, distance })
}

/// Touch of `phi`, shifted vertically by the least amount, with `u` on the
/// given side inside the ball of the given radius around `phi.center`.
/// Fails with `NoTouch` when the contact is not localized (within `h` of
/// the ball's boundary).
pub fn find_touch(u: &GridFunction, phi: &TestPolynomial, side: Side, radius: f64) -> Result<TouchingVerdict> {
    find_touch_at(u, phi, side, &phi.center, radius)
}

fn find_touch_at(u: &GridFunction, phi: &TestPolynomial, side: Side, center: &[f64], radius: f64) -> Result<TouchingVerdict> {
    let c = contact(u, &|x| phi.eval(x), side, center, radius)?;
    if c.distance > radius - u.grid().h_max() {
        return Err(Error::NoTouch { point: c.point });
    }
    let h = u.grid().h_max();
    Ok(TouchingVerdict {
        node: c.node,
        touch_point: c.point,
        side,
        gap: c.gap,
        touch_valid: c.gap.abs() <= CONTACT_TOLERANCE && c.distance <= h + 1e-12,
        inequality: f64::NAN,
        tolerance: CONTACT_TOLERANCE,
        exempt: false,
        pass: true,
    })
}

/// Interior test: if `phi` touches `u` from above at a point of the positive
/// phase then `Delta_p phi >= f` there; from below, `Delta_p phi <= f`. The
/// operator is evaluated at the contact node of the shifted polynomial.
/// `inequality` is `Delta_p phi - f`.
#[allow(clippy::too_many_arguments)]
pub fn interior_viscosity_check(
    u: &GridFunction,
    p: &ExponentField,
    f: &dyn ScalarField,
    phi: &TestPolynomial,
    x0: &[f64],
    side: Side,
    radius: f64,
    tolerance: f64,
) -> Result<TouchingVerdict> {
    let grid = u.grid();
    if !grid.contains(x0) || !(u.at(grid.nearest_node(x0)) > 0.0) {
        return Err(Error::PreconditionViolated(format!("{x0:?} is not in the positive phase")));
    }
    let mut v = find_touch_at(u, phi, side, x0, radius)?;
    let lap = eval_p_laplacian_nondiv(phi, &v.touch_point, p)?;
    v.inequality = lap - f.value(&v.touch_point);
    v.tolerance = tolerance;
    v.pass = match side {
        Side::Below => v.inequality <= tolerance,
        Side::Above => v.inequality >= -tolerance,
    };
    Ok(v)
}

/// Free boundary test at `x0` (within `h` of the extracted free boundary):
/// when `phi^+` touches `u` from below, `|grad phi(x0)| <= g(x0)`; from
/// above, `>=`. The inequality is evaluated even when the touch is not
/// valid, which is recorded in the verdict. `inequality` is
/// `|grad phi(x0)| - g(x0)`.
pub fn fb_condition_check(
    u: &GridFunction,
    g: &dyn ScalarField,
    phi: &TestPolynomial,
    x0: &[f64],
    side: Side,
    radius: f64,
    tolerance: f64,
) -> Result<TouchingVerdict> {
    let grid = u.grid();
    let h = grid.h_max();
    let phase = extract_positive_phase(u);
    match phase.distance_to_free_boundary(x0) {
        Some(d) if d <= h + 1e-12 => {}
        _ => return Err(Error::NotOnFreeBoundary { point: x0.to_vec(), tolerance: h }),
    }
    let c = contact(u, &|x| phi.eval(x).max(0.0), side, x0, radius)?;
    let slope = phi.gradient_at(x0).iter().map(|v| v * v).sum::<f64>().sqrt();
    let inequality = slope - g.value(x0);
    Ok(TouchingVerdict {
        node: c.node,
        touch_point: c.point,
        side,
        gap: c.gap,
        touch_valid: c.gap.abs() <= CONTACT_TOLERANCE,
        inequality,
        tolerance,
        exempt: false,
        pass: match side {
            Side::Below => inequality <= tolerance,
            Side::Above => inequality >= -tolerance,
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// Nodes of the positive phase of `v` and of its free boundary band.
    pub nodes_checked: usize,
    /// `min (u - v)` over those nodes (`+inf` when there are none).
    pub min_gap: f64,
    pub worst_point: Option<Vec<f64>>,
    /// Strict separation `u > v` on every checked node.
    pub pass: bool,
}

/// For a strict subsolution `v` with `u >= v^+` on the domain, checks the
/// strict separation `u > v` on the positive phase of `v` and its free
/// boundary band. A failure means `u` cannot be a solution.
pub fn comparison_principle_check(
    u: &GridFunction,
    v: &GridFunction,
    kind: ComparisonKind,
    domain: &dyn Fn(&[f64]) -> bool,
) -> Result<ComparisonReport> {
    let grid = u.grid();
    grid.ensure_matches(v.grid())?;
    if kind != ComparisonKind::StrictSub {
        return Err(Error::PreconditionViolated(format!("v is classified {kind:?}, not a strict subsolution")));
    }
    let inside: Vec<bool> = (0..grid.len()).map(|i| domain(&grid.point(i))).collect();
    for i in (0..grid.len()).filter(|i| inside[*i]) {
        if u.at(i) < v.at(i).max(0.0) - CONTACT_TOLERANCE {
            return Err(Error::PreconditionViolated(format!(
                "u < v^+ at {:?} ({} < {})",
                grid.point(i),
                u.at(i),
                v.at(i).max(0.0)
            )));
        }
    }
    let band = |i: usize| {
        (0..grid.dim()).any(|d| [true, false].iter().any(|f| grid.neighbor(i, d, *f).is_some_and(|j| v.at(j) > 0.0)))
    };
    let mut min_gap = f64::INFINITY;
    let mut worst = None;
    let mut count = 0;
    for i in (0..grid.len()).filter(|i| inside[*i]) {
        if v.at(i) > 0.0 || band(i) {
            count += 1;
            let gap = u.at(i) - v.at(i);
            if gap < min_gap {
                min_gap = gap;
                worst = Some(grid.point(i));
            }
        }
    }
    Ok(ComparisonReport { nodes_checked: count, min_gap, worst_point: worst, pass: min_gap > 0.0 })
}

/// Test of the linearized Neumann problem `L_{p0} u = 0` in `{x_n > 0}`,
/// `u_n = 0` on `{x_n = 0}` at `x_bar`. Interior points need
/// `L_{p0} P <= 0` (below) or `>= 0` (above); flat boundary points need
/// `P_n <= 0` (below) or `>= 0` (above). With `strict_only` the boundary
/// condition is only required of polynomials with `L_{p0} P > 0` (below) or
/// `< 0` (above); the others are exempt.
#[allow(clippy::too_many_arguments)]
pub fn neumann_viscosity_check(
    u: &GridFunction,
    p0: f64,
    poly: &TestPolynomial,
    x_bar: &[f64],
    side: Side,
    radius: f64,
    tolerance: f64,
    strict_only: bool,
) -> Result<TouchingVerdict> {
    let n = u.dim();
    if !(x_bar[n - 1] >= -1e-12) {
        return Err(Error::PreconditionViolated(format!("{x_bar:?} is below the flat boundary")));
    }
    let c = contact(u, &|x| poly.eval(x), side, x_bar, radius)?;
    let lp = poly.linearized(p0);
    let on_flat = x_bar[n - 1].abs() <= 1e-12;
    let (inequality, exempt) = if on_flat {
        let pn = poly.gradient_at(x_bar)[n - 1];
        let exempt = strict_only
            && match side {
                Side::Below => lp <= 0.0,
                Side::Above => lp >= 0.0,
            };
        (pn, exempt)
    } else {
        (lp, false)
    };
    let pass = exempt
        || match side {
            Side::Below => inequality <= tolerance,
            Side::Above => inequality >= -tolerance,
        };
    Ok(TouchingVerdict {
        node: c.node,
        touch_point: c.point,
        side,
        gap: c.gap,
        touch_valid: c.gap.abs() <= CONTACT_TOLERANCE && c.distance <= u.grid().h_max() + 1e-12,
        inequality,
        tolerance,
        exempt,
        pass,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryOptions {
    pub count: usize,
    pub seed: u64,
    /// Violations count only beyond `c_tol * h`.
    pub c_tol: f64,
    /// Nodes where the discrete gradient is smaller are exempt.
    pub min_gradient: f64,
    /// Eigenvalue range of the random curvature subtracted (below) or added
    /// (above) to the discrete Taylor polynomial.
    pub curvature: (f64, f64),
    /// Touch neighborhood radius in cells.
    pub radius_cells: f64,
    /// Largest admissible Hessian spectral radius of a test polynomial.
    pub max_spectral_radius: f64,
}

impl Default for BatteryOptions {
    fn default() -> Self {
        Self {
            count: 1000,
            seed: 0,
            c_tol: DEFAULT_C_TOL,
            min_gradient: 0.1,
            curvature: (0.5, 2.0),
            radius_cells: 3.0,
            max_spectral_radius: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryReport {
    pub count: usize,
    pub passed: usize,
    pub failed: usize,
    pub exempt: usize,
    /// Largest one-sided excess of `Delta_p phi - f` over all non-exempt
    /// samples (negative when every sample passes with room to spare).
    pub worst_excess: f64,
    pub tolerance: f64,
    pub verdicts: Vec<TouchingVerdict>,
}

/// Random quadratic touching battery for the interior test on a solver
/// output. Each sample takes an interior positive node `x0`, the discrete
/// second-order Taylor polynomial of `u` there, and subtracts (below) or
/// adds (above) a random positive definite curvature. Samples with a small
/// discrete gradient, an oversized Hessian or no localized touch are exempt.
pub fn viscosity_battery(u: &GridFunction, p: &ExponentField, f: &dyn ScalarField, options: &BatteryOptions) -> Result<BatteryReport> {
    let grid = u.grid();
    let n = grid.dim();
    let h = grid.h_max();
    let radius = options.radius_cells * h;
    let candidates: Vec<usize> = (0..grid.len())
        .filter(|&i| u.at(i) > 0.0 && grid.contains_ball(&grid.point(i), radius + h) && u.hessian_at(i).is_some())
        .collect();
    if candidates.is_empty() {
        return Err(Error::InsufficientSamples("no interior positive node admits a touch neighborhood".into()));
    }
    let (lo, hi) = options.curvature;
    if !(0.0 < lo && lo <= hi) {
        return Err(Error::Domain(format!("curvature range ({lo}, {hi}) must be positive and ordered")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let samples: Vec<(usize, Side, DMatrix<f64>)> = (0..options.count)
        .map(|_| {
            let node = candidates[rng.gen_range(0..candidates.len())];
            let side = if rng.gen_bool(0.5) { Side::Below } else { Side::Above };
            (node, side, random_spd(&mut rng, n, lo, hi))
        })
        .collect();
    let tolerance = options.c_tol * h;
    let verdicts: Vec<TouchingVerdict> = samples
        .par_iter()
        .map(|(node, side, s)| battery_sample(u, p, f, *node, *side, s, radius, tolerance, options))
        .collect::<Result<_>>()?;
    let mut report = BatteryReport { count: verdicts.len(), passed: 0, failed: 0, exempt: 0, worst_excess: f64::NEG_INFINITY, tolerance, verdicts };
    for v in &report.verdicts {
        if v.exempt {
            report.exempt += 1;
            continue;
        }
        let excess = match v.side {
            Side::Below => v.inequality,
            Side::Above => -v.inequality,
        };
        report.worst_excess = report.worst_excess.max(excess);
        if v.pass {
            report.passed += 1;
        } else {
            report.failed += 1;
        }
    }
    Ok(report)
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let q = a.qr().q();
    let d = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.gen_range(lo..=hi)));
    let s = &q * d * q.transpose();
    (&s + s.transpose()) * 0.5
}

#[allow(clippy::too_many_arguments)]
fn battery_sample(
    u: &GridFunction,
    p: &ExponentField,
    f: &dyn ScalarField,
    node: usize,
    side: Side,
    s: &DMatrix<f64>,
    radius: f64,
    tolerance: f64,
    options: &BatteryOptions,
) -> Result<TouchingVerdict> {
    let grid = u.grid();
    let n = grid.dim();
    let x0 = grid.point(node);
    let grad = u.gradient_at(node);
    let hess = u.hessian_at(node).expect("candidates have a full stencil");
    let sign = -side.sign();
    let hessian: Vec<Vec<f64>> = (0..n).map(|a| (0..n).map(|b| hess[a][b] + 2.0 * sign * s[(a, b)]).collect()).collect();
    let phi = TestPolynomial::new(x0.clone(), u.at(node), grad.clone(), hessian)?;
    let exempt = |gap: f64| TouchingVerdict {
        node,
        touch_point: x0.clone(),
        side,
        gap,
        touch_valid: false,
        inequality: f64::NAN,
        tolerance,
        exempt: true,
        pass: true,
    };
    let slope = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if slope < options.min_gradient || phi.spectral_radius() > options.max_spectral_radius {
        return Ok(exempt(f64::NAN));
    }
    match interior_viscosity_check(u, p, f, &phi, &x0, side, radius, tolerance) {
        Ok(v) => Ok(v),
        Err(Error::NoTouch { .. }) | Err(Error::GradientDegenerate { .. }) | Err(Error::PreconditionViolated(_)) => Ok(exempt(f64::NAN)),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::px::grid::{Analytic, Grid};
    use proptest::prelude::*;

    fn zero(n: usize) -> Analytic<impl Fn(&[f64]) -> f64 + Sync> {
        Analytic::new(n, |_: &[f64]| 0.0)
    }

    #[test]
    fn polynomial_touches_itself_from_both_sides() {
        let g = Grid::cube(2, -1.0, 1.0, 32).unwrap();
        let phi = TestPolynomial::new(vec![0.25, -0.125], 0.3, vec![1.0, -0.5], vec![vec![2.0, 0.5], vec![0.5, -1.0]]).unwrap();
        let u = GridFunction::from_fn(&g, "u", |x| phi.eval(x));
        for side in [Side::Below, Side::Above] {
            let v = find_touch(&u, &phi, side, 0.25).unwrap();
            assert!(v.gap.abs() < 1e-12);
            assert!(v.touch_valid);
            assert_eq!(v.touch_point, vec![0.25, -0.125]);
        }
    }

    #[test]
    fn paraboloids_touch_at_the_vertex() {
        let g = Grid::cube(2, -1.0, 1.0, 32).unwrap();
        let u = GridFunction::from_fn(&g, "u", |x| x[0] * x[0] + x[1] * x[1]);
        let phi = TestPolynomial::paraboloid(vec![0.0, 0.0], -0.7, vec![0.0, 0.0], -1.0).unwrap();
        let v = find_touch(&u, &phi, Side::Below, 0.5).unwrap();
        assert_eq!(v.touch_point, vec![0.0, 0.0]);
        assert!((v.gap - 0.7).abs() < 1e-12);
        assert!(!v.touch_valid);
        // a tilted plane's contact leaves the ball
        let tilted = TestPolynomial::paraboloid(vec![0.0, 0.0], 0.0, vec![5.0, 0.0], 0.0).unwrap();
        assert!(matches!(find_touch(&u, &tilted, Side::Below, 0.25), Err(Error::NoTouch { .. })));
        assert!(matches!(find_touch(&u, &phi, Side::Below, 0.05), Err(Error::PreconditionViolated(_))));
    }

    #[test]
    fn interior_checks_on_a_plane() {
        let g = Grid::cube(2, -1.0, 1.0, 32).unwrap();
        let u = GridFunction::from_fn(&g, "u", |x| x[1] + 2.0);
        let p = ExponentField::constant(2, 2.0).unwrap();
        let x0 = vec![0.0, 0.0];
        let lambda = 0.5;
        let below = TestPolynomial::paraboloid(x0.clone(), 2.0, vec![0.0, 1.0], -lambda).unwrap();
        let v = interior_viscosity_check(&u, &p, &zero(2), &below, &x0, Side::Below, 0.25, EXACT_TOLERANCE).unwrap();
        assert!(v.pass && v.touch_valid);
        assert!((v.inequality + 2.0 * lambda * 2.0).abs() < 1e-12);
        let above = TestPolynomial::paraboloid(x0.clone(), 2.0, vec![0.0, 1.0], lambda).unwrap();
        let p3 = ExponentField::constant(2, 3.0).unwrap();
        let v = interior_viscosity_check(&u, &p3, &zero(2), &above, &x0, Side::Above, 0.25, EXACT_TOLERANCE).unwrap();
        assert!(v.pass && v.inequality > 0.0);
        // the wrong side is flagged
        let v = interior_viscosity_check(&u, &p, &zero(2), &above, &x0, Side::Below, 0.25, EXACT_TOLERANCE);
        assert!(v.is_err() || !v.unwrap().pass);
        // a critical point of phi is exempt by definition
        let flat = TestPolynomial::paraboloid(x0.clone(), 2.0, vec![0.0, 0.0], -1.0).unwrap();
        let flat_u = GridFunction::from_fn(&g, "u", |_| 2.0);
        assert!(matches!(
            interior_viscosity_check(&flat_u, &p, &zero(2), &flat, &x0, Side::Below, 0.25, EXACT_TOLERANCE),
            Err(Error::GradientDegenerate { .. })
        ));
    }

    #[test]
    fn free_boundary_slopes() {
        let g = Grid::cube(2, -1.0, 1.0, 32).unwrap();
        let u = GridFunction::from_fn(&g, "u", |x| x[1].max(0.0));
        let one = Analytic::new(2, |_: &[f64]| 1.0);
        let x0 = vec![0.0, 0.0];
        let lambda = 0.2;
        let phi = TestPolynomial::paraboloid(x0.clone(), 0.0, vec![0.0, 1.0 - lambda], -lambda).unwrap();
        let v = fb_condition_check(&u, &one, &phi, &x0, Side::Below, 0.25, EXACT_TOLERANCE).unwrap();
        assert!(v.pass && v.touch_valid);
        let steep = TestPolynomial::paraboloid(x0.clone(), 0.0, vec![0.0, 1.0 + lambda], 0.0).unwrap();
        let v = fb_condition_check(&u, &one, &steep, &x0, Side::Below, 0.25, EXACT_TOLERANCE).unwrap();
        assert!(!v.pass);
        assert!((v.inequality - lambda).abs() < 1e-12);
        assert!(matches!(
            fb_condition_check(&u, &one, &phi, &[0.0, 0.5], Side::Below, 0.25, EXACT_TOLERANCE),
            Err(Error::NotOnFreeBoundary { .. })
        ));
    }

    #[test]
    fn free_boundary_check_scales_with_g() {
        let g = Grid::cube(2, -1.0, 1.0, 32).unwrap();
        let x0 = vec![0.0, 0.0];
        let phi = TestPolynomial::paraboloid(x0.clone(), 0.0, vec![0.0, 0.9], -0.1).unwrap();
        for c in [0.5, 3.0] {
            let u = GridFunction::from_fn(&g, "u", |x| c * x[1].max(0.0));
            let gc = Analytic::new(2, move |_: &[f64]| c);
            let scaled = TestPolynomial::paraboloid(x0.clone(), 0.0, vec![0.0, 0.9 * c], -0.1 * c).unwrap();
            let v = fb_condition_check(&u, &gc, &scaled, &x0, Side::Below, 0.25, EXACT_TOLERANCE).unwrap();
            assert!(v.pass);
            let one = Analytic::new(2, |_: &[f64]| 1.0);
            let u1 = GridFunction::from_fn(&g, "u", |x| x[1].max(0.0));
            let v1 = fb_condition_check(&u1, &one, &phi, &x0, Side::Below, 0.25, EXACT_TOLERANCE).unwrap();
            assert!((v.inequality - c * v1.inequality).abs() < 1e-12);
        }
    }

    #[test]
    fn comparison_cases() {
        let g = Grid::cube(2, -1.0, 1.0, 16).unwrap();
        let u = GridFunction::from_fn(&g, "u", |x| x[1].max(0.0));
        let all = |_: &[f64]| true;
        let v = GridFunction::from_fn(&g, "v", |x| 0.5 * (x[1] - 0.25));
        let r = comparison_principle_check(&u, &v, ComparisonKind::StrictSub, &all).unwrap();
        assert!(r.pass && r.nodes_checked > 0);
        assert!((r.min_gap - 0.25).abs() < 1e-12);
        let empty = GridFunction::constant(&g, "v", -1.0);
        let r = comparison_principle_check(&u, &empty, ComparisonKind::StrictSub, &all).unwrap();
        assert!(r.pass && r.nodes_checked == 0);
        let r = comparison_principle_check(&u, &u, ComparisonKind::StrictSub, &all).unwrap();
        assert!(!r.pass);
        let above = GridFunction::from_fn(&g, "v", |x| x[1] + 0.1);
        assert!(matches!(
            comparison_principle_check(&u, &above, ComparisonKind::StrictSub, &all),
            Err(Error::PreconditionViolated(_))
        ));
        assert!(comparison_principle_check(&u, &v, ComparisonKind::Neither, &all).is_err());
    }

    #[test]
    fn neumann_cases() {
        let p0 = 2.5;
        let g = Grid::new(vec![-1.0, 0.0], vec![1.0, 1.0], &[32, 16]).unwrap();
        let exact = |x: &[f64]| x[0] * x[0] - x[1] * x[1] / (p0 - 1.0);
        let u = GridFunction::from_fn(&g, "u", exact);
        let x = vec![0.25, 0.5];
        let poly = TestPolynomial::new(x.clone(), exact(&x), vec![0.5, -1.0 / 1.5], vec![vec![2.0, 0.0], vec![0.0, -2.0 / 1.5]]).unwrap();
        assert!(poly.linearized(p0).abs() < 1e-14);
        for side in [Side::Below, Side::Above] {
            let v = neumann_viscosity_check(&u, p0, &poly, &x, side, 0.25, EXACT_TOLERANCE, false).unwrap();
            assert!(v.pass && v.touch_valid);
        }
        // even data, a polynomial rising off the flat boundary from below
        let even = GridFunction::from_fn(&g, "u", |x| x[1] * x[1]);
        let xb = vec![0.0, 0.0];
        let rising = TestPolynomial::paraboloid(xb.clone(), 0.0, vec![0.0, 0.1], 1.0).unwrap();
        let v = neumann_viscosity_check(&even, p0, &rising, &xb, Side::Below, 0.25, EXACT_TOLERANCE, false).unwrap();
        assert!(!v.pass);
        // constant data and a flat tangent polynomial
        let c = GridFunction::constant(&g, "u", 0.7);
        let flat = TestPolynomial::paraboloid(xb.clone(), 0.7, vec![0.0, 0.0], 0.0).unwrap();
        for side in [Side::Below, Side::Above] {
            assert!(neumann_viscosity_check(&c, p0, &flat, &xb, side, 0.25, EXACT_TOLERANCE, true).unwrap().pass);
        }
        // boundary polynomials with L P <= 0 are exempt when restricted
        let bent = TestPolynomial::paraboloid(xb.clone(), 0.0, vec![0.0, 0.1], -1.0).unwrap();
        let v = neumann_viscosity_check(&even, p0, &bent, &xb, Side::Below, 0.25, EXACT_TOLERANCE, true).unwrap();
        assert!(v.exempt && v.pass);
    }

    #[test]
    fn battery_on_closed_form_solution() {
        // u = (2/3)(x + 1)^(3/2) solves (|u'| u')' = 1 for p = 3
        let g = Grid::cube(1, 0.0, 1.0, 128).unwrap();
        let u = GridFunction::from_fn(&g, "u", |x| 2.0 / 3.0 * (x[0] + 1.0).powf(1.5));
        let p = ExponentField::constant(1, 3.0).unwrap();
        let f = Analytic::new(1, |_: &[f64]| 1.0);
        let opts = BatteryOptions { count: 200, seed: 7, ..Default::default() };
        let r = viscosity_battery(&u, &p, &f, &opts).unwrap();
        assert_eq!(r.failed, 0, "worst excess {}", r.worst_excess);
        assert!(r.passed > 150);
        let again = viscosity_battery(&u, &p, &f, &opts).unwrap();
        assert_eq!(r, again);
    }

    proptest! {
        #[test]
        fn negation_swaps_sides(a in -1.0f64..1.0, b in 0.2f64..2.0, lam in 0.1f64..2.0, p0 in 1.3f64..4.0, shift in -3.0f64..3.0) {
            let g = Grid::cube(2, -1.0, 1.0, 16).unwrap();
            let p = ExponentField::constant(2, p0).unwrap();
            let x0 = vec![0.0, 0.0];
            let base = move |x: &[f64]| 5.0 + a * x[0] + b * x[1] + 0.3 * x[0] * x[1];
            let u = GridFunction::from_fn(&g, "u", base);
            let f = Analytic::new(2, |x: &[f64]| 0.1 * x[0]);
            let phi = TestPolynomial::new(x0.clone(), 5.0, vec![a, b], vec![vec![-2.0 * lam, 0.3], vec![0.3, -2.0 * lam]]).unwrap();
            let v = interior_viscosity_check(&u, &p, &f, &phi, &x0, Side::Below, 0.3, EXACT_TOLERANCE).unwrap();
            // negate everything; the positive phase test needs a positive field, so lift both
            let nu = GridFunction::from_fn(&g, "u", move |x| 20.0 - base(x));
            let nphi = phi.negated().shifted(20.0);
            let nf = Analytic::new(2, |x: &[f64]| -0.1 * x[0]);
            let w = interior_viscosity_check(&nu, &p, &nf, &nphi, &x0, Side::Above, 0.3, EXACT_TOLERANCE).unwrap();
            prop_assert_eq!(v.pass, w.pass);
            prop_assert!((v.inequality + w.inequality).abs() < 1e-9 * v.inequality.abs().max(1.0));
            prop_assert_eq!(v.node, w.node);
            // adding a constant to both leaves the verdict alone
            let su = GridFunction::from_fn(&g, "u", move |x| base(x) + shift.abs());
            let s = interior_viscosity_check(&su, &p, &f, &phi.shifted(shift.abs()), &x0, Side::Below, 0.3, EXACT_TOLERANCE).unwrap();
            prop_assert_eq!(s.pass, v.pass);
            prop_assert_eq!(s.node, v.node);
            prop_assert!((s.gap - v.gap).abs() < 1e-9);
        }
    }
}
