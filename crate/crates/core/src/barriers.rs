//! Radial barriers `w = c1 |x - x0|^(-gamma) - c2`, their perturbations
//! `v = x_n + c3 + (c0/2) eps (w - 1)`, sampled certification of the
//! inequalities they satisfy on an annulus, and the strict comparison
//! classifier.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::px::exponent::ExponentField;
use crate::px::grid::{Grid, GridFunction, ScalarField};
use crate::px::operator::{nondiv_from_jet, SmoothField, GRADIENT_FLOOR};
use crate::px::phase::extract_positive_phase;

/// Default samples per axis for certification.
pub const DEFAULT_SAMPLES: usize = 64;

fn check_exponent_bounds(p_min: f64, p_max: f64) -> Result<()> {
    if !(p_min > 1.0) {
        return Err(Error::Domain(format!("requires 1 < p_min, got {p_min}")));
    }
    if !(p_max >= p_min && p_max.is_finite()) {
        return Err(Error::Domain(format!("requires p_min <= p_max < inf, got [{p_min}, {p_max}]")));
    }
    Ok(())
}

/// `max{1, (1+n-p_min)/(p_min-1), (1+n)/(p_min-1) - 2, n+p_max-3}`.
pub fn gamma_exponent(n: usize, p_min: f64, p_max: f64) -> Result<f64> {
    check_exponent_bounds(p_min, p_max)?;
    let n = n as f64;
    let terms = [
        1.0,
        (1.0 + n - p_min) / (p_min - 1.0),
        (1.0 + n) / (p_min - 1.0) - 2.0,
        n + p_max - 3.0,
    ];
    Ok(terms.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// Slack in the three conditions on `gamma`:
/// `gamma(p_min-1) + p_min - n >= 1`, `(gamma+2)(p_min-1) - n >= 1`,
/// `gamma + 4 - n - p_max >= 1`.
pub fn gamma_conditions_slack(n: usize, p_min: f64, p_max: f64, gamma: f64) -> [f64; 3] {
    let n = n as f64;
    [
        gamma * (p_min - 1.0) + p_min - n - 1.0,
        (gamma + 2.0) * (p_min - 1.0) - n - 1.0,
        gamma + 4.0 - n - p_max - 1.0,
    ]
}

/// `c_bar = 1/2 min{c1^(p_min-1), c1^(p_max-1)}`.
pub fn c_bar(p_min: f64, p_max: f64, c1: f64) -> f64 {
    0.5 * c1.powf(p_min - 1.0).min(c1.powf(p_max - 1.0))
}

/// `C5 = min{(1/2)^(p_max-2), 2^(p_min-2)}`, the lower bound of
/// `|grad v|^(p-2)` when `1/2 <= |grad v| <= 2`.
pub fn c5(p_min: f64, p_max: f64) -> f64 {
    0.5f64.powf(p_max - 2.0).min(2.0f64.powf(p_min - 2.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierKind {
    RadialW,
    PerturbedV,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Barrier {
    pub kind: BarrierKind,
    pub center: Vec<f64>,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub gamma: f64,
    pub eps: f64,
    pub r1: f64,
    pub r2: f64,
}

impl Barrier {
    /// `w = c1 |x - x0|^(-gamma) - c2` on `r1 <= |x - x0| <= r2`.
    ///
    /// The three conditions on `gamma` are not enforced here so that
    /// counterexamples can be certified (and fail); see
    /// [`Barrier::check_gamma`].
    pub fn radial_w(center: Vec<f64>, c1: f64, c2: f64, gamma: f64, r1: f64, r2: f64) -> Result<Self> {
        let b = Self { kind: BarrierKind::RadialW, center, c0: 0.0, c1, c2, c3: 0.0, gamma, eps: 0.0, r1, r2 };
        b.validate()?;
        Ok(b)
    }

    /// `v = x_n + c3 + (c0/2) eps (w - 1)`.
    #[allow(clippy::too_many_arguments)]
    pub fn perturbed_v(
        center: Vec<f64>,
        c0: f64,
        c1: f64,
        c2: f64,
        c3: f64,
        gamma: f64,
        eps: f64,
        r1: f64,
        r2: f64,
    ) -> Result<Self> {
        let b = Self { kind: BarrierKind::PerturbedV, center, c0, c1, c2, c3, gamma, eps, r1, r2 };
        b.validate()?;
        Ok(b)
    }

    fn validate(&self) -> Result<()> {
        if self.center.is_empty() {
            return Err(Error::Domain("barrier center must have dimension >= 1".into()));
        }
        if !(self.r1 > 0.0 && self.r1 < self.r2) {
            return Err(Error::Domain(format!("need 0 < r1 < r2, got r1 = {}, r2 = {}", self.r1, self.r2)));
        }
        if !(self.c1 > 0.0 && self.gamma > 0.0) {
            return Err(Error::Domain(format!("need c1 > 0 and gamma > 0, got {} and {}", self.c1, self.gamma)));
        }
        if self.kind == BarrierKind::PerturbedV && !(self.c0 > 0.0 && (0.0..1.0).contains(&self.eps)) {
            return Err(Error::Domain(format!("need c0 > 0 and 0 <= eps < 1, got {} and {}", self.c0, self.eps)));
        }
        Ok(())
    }

    /// Errors unless `gamma` satisfies its three lower-bound conditions.
    pub fn check_gamma(&self, p_min: f64, p_max: f64) -> Result<()> {
        let slack = gamma_conditions_slack(self.dim(), p_min, p_max, self.gamma);
        if self.gamma >= 1.0 && slack.iter().all(|s| *s >= -1e-12) {
            Ok(())
        } else {
            Err(Error::Domain(format!("gamma = {} violates its conditions (slack {slack:?})", self.gamma)))
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn radius(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    }

    pub fn in_annulus(&self, x: &[f64]) -> bool {
        let r = self.radius(x);
        let s = 1e-12;
        r >= self.r1 * (1.0 - s) && r <= self.r2 * (1.0 + s)
    }

    fn w_value(&self, r: f64) -> f64 {
        self.c1 * r.powf(-self.gamma) - self.c2
    }

    /// Factor multiplying the jet of `w` in the jet of the barrier.
    fn scale(&self) -> f64 {
        match self.kind {
            BarrierKind::RadialW => 1.0,
            BarrierKind::PerturbedV => 0.5 * self.c0 * self.eps,
        }
    }

    /// The same barrier shifted up by `t` (only changes `c3`).
    pub fn lifted(&self, t: f64) -> Self {
        let mut b = self.clone();
        b.c3 += t;
        b
    }
}

impl SmoothField for Barrier {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let w = self.w_value(self.radius(x));
        match self.kind {
            BarrierKind::RadialW => w,
            BarrierKind::PerturbedV => {
                x[self.dim() - 1] + self.c3 + 0.5 * self.c0 * self.eps * (w - 1.0)
            }
        }
    }

    fn gradient(&self, x: &[f64]) -> DVector<f64> {
        let n = self.dim();
        let r = self.radius(x);
        let k = -self.gamma * self.c1 * r.powf(-self.gamma - 2.0) * self.scale();
        let mut g = DVector::from_iterator(n, x.iter().zip(&self.center).map(|(a, b)| k * (a - b)));
        if self.kind == BarrierKind::PerturbedV {
            g[n - 1] += 1.0;
        }
        g
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        let r = self.radius(x);
        let y = DVector::from_iterator(n, x.iter().zip(&self.center).map(|(a, b)| (a - b) / r));
        let k = self.gamma * self.c1 * r.powf(-self.gamma - 2.0) * self.scale();
        ((self.gamma + 2.0) * &y * y.transpose() - DMatrix::identity(n, n)) * k
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BarrierEval {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub p_laplacian: f64,
}

/// Value, gradient and `Delta_p(x)` of the barrier at `x` in its annulus.
pub fn eval_barrier(b: &Barrier, x: &[f64], p: &ExponentField) -> Result<BarrierEval> {
    if !b.in_annulus(x) {
        return Err(Error::OutOfAnnulus { point: x.to_vec(), distance: b.radius(x), inner: b.r1, outer: b.r2 });
    }
    let gradient = b.gradient(x);
    let p_laplacian = nondiv_from_jet(x, &gradient, &b.hessian(x), p.p(x), &p.gradient(x), GRADIENT_FLOOR)?;
    Ok(BarrierEval { value: b.value(x), gradient, p_laplacian })
}

/// Evidence for an inequality checked on a finite sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub inequality: String,
    pub region: String,
    pub samples: usize,
    pub samples_per_axis: usize,
    /// Worst slack; the report passes iff this is positive.
    pub min_margin: f64,
    pub worst_point: Vec<f64>,
    pub pass: bool,
    /// Worst slack of each constituent inequality.
    pub components: BTreeMap<String, f64>,
    pub parameters: BTreeMap<String, f64>,
}

impl CertificationReport {
    pub fn summary(&self) -> String {
        format!(
            "{} on {}: {} ({} samples, min margin {:.6e} at {:?})",
            self.inequality,
            self.region,
            if self.pass { "PASS" } else { "FAIL" },
            self.samples,
            self.min_margin,
            self.worst_point
        )
    }
}

/// Lattice points of the annulus bounding box, `m` per axis, that fall in
/// the closed annulus, in lexicographic order.
pub fn annulus_samples(b: &Barrier, m: usize) -> Vec<Vec<f64>> {
    let n = b.dim();
    let m = m.max(2);
    let total = m.pow(n as u32);
    let step = 2.0 * b.r2 / (m - 1) as f64;
    (0..total)
        .filter_map(|mut k| {
            let mut x = vec![0.0; n];
            for d in (0..n).rev() {
                x[d] = b.center[d] - b.r2 + (k % m) as f64 * step;
                k /= m;
            }
            b.in_annulus(&x).then_some(x)
        })
        .collect()
}

/// Per-sample margins, named. The overall margin is their minimum.
fn certify<F>(b: &Barrier, m: usize, inequality: &str, names: &[&str], margins: F) -> CertificationReport
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let pts = annulus_samples(b, m);
    let vals: Vec<Vec<f64>> = pts.par_iter().map(|x| margins(x)).collect();
    let mut components: BTreeMap<String, f64> = names.iter().map(|s| (s.to_string(), f64::INFINITY)).collect();
    let mut worst = f64::INFINITY;
    let mut worst_point = Vec::new();
    for (x, v) in pts.iter().zip(&vals) {
        for (name, m) in names.iter().zip(v) {
            let c = components.get_mut(*name).expect("named component");
            *c = c.min(*m);
        }
        let here = v.iter().cloned().fold(f64::INFINITY, |a, b| if b.is_nan() { f64::NEG_INFINITY } else { a.min(b) });
        if here < worst || worst_point.is_empty() {
            worst = here;
            worst_point = x.clone();
        }
    }
    let mut parameters = BTreeMap::new();
    parameters.insert("c0".into(), b.c0);
    parameters.insert("c1".into(), b.c1);
    parameters.insert("c2".into(), b.c2);
    parameters.insert("c3".into(), b.c3);
    parameters.insert("gamma".into(), b.gamma);
    parameters.insert("eps".into(), b.eps);
    parameters.insert("r1".into(), b.r1);
    parameters.insert("r2".into(), b.r2);
    CertificationReport {
        inequality: inequality.into(),
        region: format!("{} <= |x - {:?}| <= {}", b.r1, b.center, b.r2),
        samples: pts.len(),
        samples_per_axis: m,
        min_margin: worst,
        worst_point,
        pass: worst > 0.0,
        components,
        parameters,
    }
}

/// Samples `Delta_p(x) w - threshold` over the annulus. The threshold
/// defaults to `c_bar(p_min, p_max, c1)` of the exponent.
pub fn certify_barrier_w(b: &Barrier, p: &ExponentField, samples: usize, threshold: Option<f64>) -> CertificationReport {
    let thr = threshold.unwrap_or_else(|| c_bar(p.p_min(), p.p_max(), b.c1));
    let mut rep = certify(b, samples, "Delta_p(x) w >= c_bar", &["p_laplacian_minus_threshold"], |x| {
        let g = b.gradient(x);
        let v = nondiv_from_jet(x, &g, &b.hessian(x), p.p(x), &p.gradient(x), GRADIENT_FLOOR)
            .map(|l| l - thr)
            .unwrap_or(f64::NEG_INFINITY);
        vec![v]
    });
    rep.parameters.insert("threshold".into(), thr);
    rep.parameters.insert("grad_p_sup".into(), p.lipschitz());
    rep
}

/// Samples `|grad v| - 1/2`, `2 - |grad v|` and `Delta_p(x) v - eps^2`.
pub fn certify_barrier_v(b: &Barrier, p: &ExponentField, samples: usize) -> CertificationReport {
    let eps2 = b.eps * b.eps;
    let mut rep = certify(
        b,
        samples,
        "1/2 <= |grad v| <= 2 and Delta_p(x) v > eps^2",
        &["gradient_lower", "gradient_upper", "p_laplacian_minus_eps2"],
        |x| {
            let g = b.gradient(x);
            let norm = g.norm();
            let lap = nondiv_from_jet(x, &g, &b.hessian(x), p.p(x), &p.gradient(x), GRADIENT_FLOOR)
                .map(|l| l - eps2)
                .unwrap_or(f64::NEG_INFINITY);
            vec![norm - 0.5, 2.0 - norm, lap]
        },
    );
    rep.parameters.insert("grad_p_sup".into(), p.lipschitz());
    rep
}

/// Geometry shared by the barriers of a constants sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierGeometry {
    pub center: Vec<f64>,
    pub r1: f64,
    pub r2: f64,
    pub c2: f64,
    pub c3: f64,
    pub samples: usize,
}

impl BarrierGeometry {
    pub fn unit_annulus(n: usize) -> Self {
        Self { center: vec![0.0; n], r1: 0.1, r2: 1.0, c2: 1.0, c3: 0.0, samples: DEFAULT_SAMPLES }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsSweepRow {
    pub eps: f64,
    pub grad_p_sup: f64,
    pub w_margin: f64,
    pub v_margin: f64,
    pub w_pass: bool,
    pub v_pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierConstants {
    pub c_bar: f64,
    pub c5: f64,
    pub gamma: f64,
    /// Largest grid `eps` from which `certify_barrier_w` passes at every
    /// smaller grid value.
    pub eps0_empirical: Option<f64>,
    pub eps1_empirical: Option<f64>,
    pub label: String,
    pub sweep: Vec<EpsSweepRow>,
}

/// The log grid `2^-1, ..., 2^-30`.
pub fn eps_grid() -> Vec<f64> {
    (1..=30).map(|k| 0.5f64.powi(k)).collect()
}

/// Synthetic exponent `p_c + eps^(1+theta) (x - x0)_1` with
/// `p_c = (p_min + p_max)/2`, so `|grad p| = eps^(1+theta)`.
pub fn synthetic_exponent(n: usize, p_min: f64, p_max: f64, eps: f64, theta: f64, geometry: &BarrierGeometry) -> Result<ExponentField> {
    let slope = eps.powf(1.0 + theta);
    let mut s = vec![0.0; n];
    s[0] = slope;
    let pc = 0.5 * (p_min + p_max);
    Ok(ExponentField::affine(pc, s, geometry.center.clone(), geometry.r2)?.with_theta(theta))
}

/// `c_bar` in closed form plus empirical `eps_0`, `eps_1` from a sweep over
/// [`eps_grid`] with [`synthetic_exponent`] fields.
pub fn barrier_constants(
    n: usize,
    p_min: f64,
    p_max: f64,
    c0: f64,
    c1: f64,
    theta: f64,
    geometry: &BarrierGeometry,
) -> Result<BarrierConstants> {
    check_exponent_bounds(p_min, p_max)?;
    if !(c0 > 0.0 && c1 > 0.0) {
        return Err(Error::Domain(format!("need c0, c1 > 0, got {c0}, {c1}")));
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::Domain(format!("need 0 < theta <= 1, got {theta}")));
    }
    if geometry.center.len() != n {
        return Err(Error::Domain("geometry center has the wrong dimension".into()));
    }
    let mut sweep = Vec::new();
    // The synthetic field may poke outside [p_min, p_max] for large eps;
    // gamma and c_bar use the widened range so the barrier stays admissible.
    let mut gamma: f64 = gamma_exponent(n, p_min, p_max)?;
    let mut cb = c_bar(p_min, p_max, c1);
    for eps in eps_grid() {
        let p = synthetic_exponent(n, p_min, p_max, eps, theta, geometry)?;
        let (lo, hi) = (p.p_min().min(p_min), p.p_max().max(p_max));
        let g = gamma_exponent(n, lo, hi)?;
        gamma = gamma.max(g);
        cb = cb.min(c_bar(lo, hi, c1));
        let w = Barrier::radial_w(geometry.center.clone(), c1, geometry.c2, g, geometry.r1, geometry.r2)?;
        let v = Barrier::perturbed_v(geometry.center.clone(), c0, c1, geometry.c2, geometry.c3, g, eps, geometry.r1, geometry.r2)?;
        let rw = certify_barrier_w(&w, &p, geometry.samples, Some(c_bar(lo, hi, c1)));
        let rv = certify_barrier_v(&v, &p, geometry.samples);
        sweep.push(EpsSweepRow {
            eps,
            grad_p_sup: p.lipschitz(),
            w_margin: rw.min_margin,
            v_margin: rv.min_margin,
            w_pass: rw.pass,
            v_pass: rv.pass,
        });
    }
    let threshold = |pick: fn(&EpsSweepRow) -> bool| {
        let mut best = None;
        for row in sweep.iter().rev() {
            if pick(row) {
                best = Some(row.eps);
            } else {
                break;
            }
        }
        best
    };
    Ok(BarrierConstants {
        c_bar: c_bar(p_min, p_max, c1).min(cb),
        c5: c5(p_min, p_max),
        gamma,
        eps0_empirical: threshold(|r| r.w_pass),
        eps1_empirical: threshold(|r| r.v_pass),
        label: "empirical".into(),
        sweep,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonKind {
    StrictSub,
    StrictSuper,
    Neither,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub kind: ComparisonKind,
    /// `min (Delta_p v - f)` over positive-phase samples (signed so that
    /// positive means subsolution-like; `+inf` when there are none).
    pub interior_margin: f64,
    /// `min (|grad v| - g)` over free boundary samples.
    pub fb_margin: f64,
    /// `max (Delta_p v - f)` and `max (|grad v| - g)`, for the super side.
    pub interior_max: f64,
    pub fb_max: f64,
    pub interior_samples: usize,
    pub fb_samples: usize,
}

/// Classifies a smooth candidate `v` as a strict comparison sub- or
/// supersolution by sampling its positive phase on `grid` (restricted to
/// `domain`) and its free boundary crossings. Slack is zero: any positive
/// margin is strict.
pub fn classify_comparison<S, D>(
    v: &S,
    grid: &Grid,
    domain: D,
    p: &ExponentField,
    f: &dyn ScalarField,
    g: &dyn ScalarField,
) -> Result<Classification>
where
    S: SmoothField + ?Sized,
    D: Fn(&[f64]) -> bool + Sync,
{
    let sampled = GridFunction::from_fn(grid, "v", |x| v.value(x));
    let phase = extract_positive_phase(&sampled);
    let interior: Vec<usize> = (0..grid.len()).filter(|i| phase.mask[*i] && domain(&grid.point(*i))).collect();
    let margins: Vec<Result<f64>> = interior
        .par_iter()
        .map(|i| {
            let x = grid.point(*i);
            let gr = v.gradient(&x);
            let l = nondiv_from_jet(&x, &gr, &v.hessian(&x), p.p(&x), &p.gradient(&x), GRADIENT_FLOOR)?;
            Ok(l - f.value(&x))
        })
        .collect();
    let mut imin = f64::INFINITY;
    let mut imax = f64::NEG_INFINITY;
    for m in margins {
        let m = m?;
        imin = imin.min(m);
        imax = imax.max(m);
    }
    let fb: Vec<&Vec<f64>> = phase.free_boundary.iter().map(|q| &q.x).filter(|x| domain(x)).collect();
    let mut fmin = f64::INFINITY;
    let mut fmax = f64::NEG_INFINITY;
    for x in &fb {
        let gr = v.gradient(x);
        let norm = gr.norm();
        if norm < GRADIENT_FLOOR {
            return Err(Error::GradientDegenerate { point: x.to_vec(), norm, floor: GRADIENT_FLOOR });
        }
        let m = norm - g.value(x);
        fmin = fmin.min(m);
        fmax = fmax.max(m);
    }
    let kind = if imin > 0.0 && fmin > 0.0 {
        ComparisonKind::StrictSub
    } else if imax < 0.0 && fmax < 0.0 {
        ComparisonKind::StrictSuper
    } else {
        ComparisonKind::Neither
    };
    Ok(Classification {
        kind,
        interior_margin: imin,
        fb_margin: fmin,
        interior_max: imax,
        fb_max: fmax,
        interior_samples: interior.len(),
        fb_samples: fb.len(),
    })
}

/// The perturbed barrier of the dichotomy argument: with
/// `x0 = e_n / 10` and `xb = x0 - r2 e_n`,
/// `w = c (|x - xb|^(-gamma) - (4/5)^(-gamma))` normalized so that `w = 1`
/// on `|x - xb| = r3` and `w = 0` on `|x - xb| = 4/5`, and
/// `v_t = x_n + sigma + (c0 eps / 2)(w - 1) + t`.
#[allow(clippy::too_many_arguments)]
pub fn dichotomy_barrier(
    n: usize,
    p_min: f64,
    p_max: f64,
    sigma: f64,
    c0: f64,
    eps: f64,
    r2: f64,
    r3: f64,
    t: f64,
) -> Result<Barrier> {
    let gamma = gamma_exponent(n, p_min, p_max)?;
    let outer: f64 = 0.8;
    if !(r3 > 0.0 && r3 < outer) {
        return Err(Error::Domain(format!("need 0 < r3 < 4/5, got {r3}")));
    }
    let c = 1.0 / (r3.powf(-gamma) - outer.powf(-gamma));
    let mut center = vec![0.0; n];
    center[n - 1] = 0.1 - r2;
    Barrier::perturbed_v(center, c0, c, c * outer.powf(-gamma), sigma + t, gamma, eps, r3, outer)
}
