//! Slab flatness `(x.nu + a)^+ <= u <= (x.nu + b)^+` on a ball, and the
//! direction search minimizing its width.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::px::grid::GridFunction;

/// Slack allowed when re-verifying a certificate.
pub const CERTIFICATE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatnessCertificate {
    pub center: Vec<f64>,
    pub radius: f64,
    pub nu: Vec<f64>,
    /// Largest `a` with `(y.nu + a)^+ <= u`, `y = x - center`.
    pub a: f64,
    /// Smallest `b` with `u <= (y.nu + b)^+`.
    pub b: f64,
    /// Scale index within an iteration (0 when measured alone).
    pub k: usize,
    /// `(b - a) / r`.
    pub epsilon: f64,
}

impl FlatnessCertificate {
    /// Re-scans the ball and returns the largest violation of either
    /// envelope (nonpositive when the certificate holds).
    pub fn violation(&self, u: &GridFunction) -> f64 {
        let grid = u.grid();
        let mut worst = f64::NEG_INFINITY;
        for i in grid.nodes_in_ball(&self.center, self.radius) {
            let s = offset(&grid.point(i), &self.center, &self.nu);
            let v = u.at(i);
            worst = worst.max((s + self.a).max(0.0) - v).max(v - (s + self.b).max(0.0));
        }
        worst
    }

    pub fn holds(&self, u: &GridFunction) -> bool {
        self.violation(u) <= CERTIFICATE_TOLERANCE
    }
}

fn offset(x: &[f64], center: &[f64], nu: &[f64]) -> f64 {
    x.iter().zip(center).zip(nu).map(|((x, c), n)| (x - c) * n).sum()
}

fn check_direction(nu: &[f64], n: usize) -> Result<()> {
    let norm = nu.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nu.len() != n || (norm - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!("direction {nu:?} is not a unit vector in dimension {n}")));
    }
    Ok(())
}

/// Node samples of a ball: coordinates relative to the center and values.
pub(crate) struct BallSamples {
    pub(crate) rel: Vec<Vec<f64>>,
    pub(crate) values: Vec<f64>,
}

impl BallSamples {
    pub(crate) fn collect(u: &GridFunction, center: &[f64], r: f64) -> Result<Self> {
        let grid = u.grid();
        if center.len() != grid.dim() || !grid.contains_ball(center, r) {
            return Err(Error::BallOutOfDomain { center: center.to_vec(), radius: r });
        }
        let nodes = grid.nodes_in_ball(center, r);
        let rel = nodes.iter().map(|&i| grid.point(i).iter().zip(center).map(|(x, c)| x - c).collect()).collect();
        Ok(Self { rel, values: nodes.iter().map(|&i| u.at(i)).collect() })
    }

    /// `(a, b)` of the slab in direction `nu`. Nodes with `u <= 0` only
    /// bound `a`; with no positive node, `b = a`.
    pub(crate) fn slab(&self, nu: &[f64]) -> (f64, f64) {
        let mut a = f64::INFINITY;
        let mut b = f64::NEG_INFINITY;
        for (y, &v) in self.rel.iter().zip(&self.values) {
            let s: f64 = y.iter().zip(nu).map(|(y, n)| y * n).sum();
            if v > 0.0 {
                a = a.min(v - s);
                b = b.max(v - s);
            } else {
                a = a.min(v.max(0.0) - s);
            }
        }
        if b == f64::NEG_INFINITY {
            b = a;
        }
        (a, b)
    }
}

/// Minimal slab around direction `nu` on the nodes of `B_r(center)`.
pub fn measure_flatness(u: &GridFunction, center: &[f64], r: f64, nu: &[f64]) -> Result<FlatnessCertificate> {
    check_direction(nu, u.dim())?;
    let samples = BallSamples::collect(u, center, r)?;
    Ok(certificate(&samples, center, r, nu))
}

fn certificate(samples: &BallSamples, center: &[f64], r: f64, nu: &[f64]) -> FlatnessCertificate {
    let (a, b) = samples.slab(nu);
    FlatnessCertificate { center: center.to_vec(), radius: r, nu: nu.to_vec(), a, b, k: 0, epsilon: (b - a) / r }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DirectionSearch {
    /// Half-angle of the searched cone around the seed, in degrees.
    pub cone_degrees: f64,
    /// Angular step of the first search grid, in degrees.
    pub step_degrees: f64,
    /// Local refinements around the best candidate, each dividing the step
    /// by `refinement_factor`.
    pub refinements: usize,
    pub refinement_factor: f64,
}

impl Default for DirectionSearch {
    fn default() -> Self {
        Self { cone_degrees: 15.0, step_degrees: 0.25, refinements: 2, refinement_factor: 5.0 }
    }
}

/// Orthonormal basis of the tangent space at the unit vector `seed`.
fn tangent_basis(seed: &[f64]) -> Vec<Vec<f64>> {
    let n = seed.len();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n - 1);
    for e in 0..n {
        let mut v: Vec<f64> = (0..n).map(|d| if d == e { 1.0 } else { 0.0 }).collect();
        for b in std::iter::once(seed).chain(basis.iter().map(|b| b.as_slice())) {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= dot * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.iter().map(|x| x / norm).collect());
        }
        if basis.len() == n - 1 {
            break;
        }
    }
    basis
}

/// `exp_seed(t)` on the unit sphere for a tangent vector with coordinates
/// `t` (radians) in `basis`.
fn exp_map(seed: &[f64], basis: &[Vec<f64>], t: &[f64]) -> Vec<f64> {
    let angle = t.iter().map(|x| x * x).sum::<f64>().sqrt();
    if angle == 0.0 {
        return seed.to_vec();
    }
    let (s, c) = angle.sin_cos();
    let mut v: Vec<f64> = seed.iter().map(|x| c * x).collect();
    for (tb, b) in t.iter().zip(basis) {
        for (x, y) in v.iter_mut().zip(b) {
            *x += s * tb / angle * y;
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / norm).collect()
}

/// Square grid of tangent offsets with spacing `step` inside the disc of
/// radius `half_width` (radians), in lexicographic order.
fn offsets(dim: usize, step: f64, half_width: f64) -> Vec<Vec<f64>> {
    let m = (half_width / step + 1e-9).floor() as i64;
    let side = (2 * m + 1) as usize;
    let total = side.pow(dim as u32);
    (0..total)
        .filter_map(|mut k| {
            let mut t = vec![0.0; dim];
            for d in (0..dim).rev() {
                t[d] = ((k % side) as i64 - m) as f64 * step;
                k /= side;
            }
            (t.iter().map(|x| x * x).sum::<f64>().sqrt() <= half_width * (1.0 + 1e-12)).then_some(t)
        })
        .collect()
}

/// Direction minimizing the slab width over a cone around `seed`: a
/// tangent grid with the configured step, then local refinements. Ties go
/// to the lowest candidate index.
pub fn best_direction(
    u: &GridFunction,
    center: &[f64],
    r: f64,
    seed: &[f64],
    search: &DirectionSearch,
) -> Result<(Vec<f64>, FlatnessCertificate)> {
    let n = u.dim();
    check_direction(seed, n)?;
    let samples = BallSamples::collect(u, center, r)?;
    if n == 1 {
        let c = certificate(&samples, center, r, seed);
        return Ok((seed.to_vec(), c));
    }
    let basis = tangent_basis(seed);
    let mut step = search.step_degrees.to_radians();
    let mut half = search.cone_degrees.to_radians();
    let mut best_t = vec![0.0; n - 1];
    for level in 0..=search.refinements {
        if level > 0 {
            half = 2.0 * step;
            step /= search.refinement_factor;
        }
        let cands: Vec<Vec<f64>> = offsets(n - 1, step, half)
            .into_iter()
            .map(|d| d.iter().zip(&best_t).map(|(a, b)| a + b).collect())
            .collect();
        let widths: Vec<f64> = cands
            .par_iter()
            .map(|t| {
                let (a, b) = samples.slab(&exp_map(seed, &basis, t));
                b - a
            })
            .collect();
        let mut arg = 0;
        for (k, w) in widths.iter().enumerate() {
            if *w < widths[arg] {
                arg = k;
            }
        }
        best_t = cands[arg].clone();
    }
    let nu = exp_map(seed, &basis, &best_t);
    let c = certificate(&samples, center, r, &nu);
    Ok((nu, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::px::grid::Grid;

    fn unit(angle_deg: f64) -> Vec<f64> {
        let t = angle_deg.to_radians();
        vec![t.sin(), t.cos()]
    }

    #[test]
    fn exact_half_plane_is_flat() {
        let g = Grid::cube(2, -1.0, 1.0, 64).unwrap();
        let nu = unit(20.0);
        let u = GridFunction::from_fn(&g, "u", |x| (x[0] * nu[0] + x[1] * nu[1]).max(0.0));
        let c = measure_flatness(&u, &[0.0, 0.0], 1.0, &nu).unwrap();
        assert_eq!((c.a, c.b, c.epsilon), (0.0, 0.0, 0.0));
        assert!(c.holds(&u));
    }

    #[test]
    fn pure_offset() {
        let g = Grid::cube(2, -1.0, 1.0, 64).unwrap();
        let u = GridFunction::from_fn(&g, "u", |x| (x[1] + 0.05).max(0.0));
        let c = measure_flatness(&u, &[0.0, 0.0], 1.0, &[0.0, 1.0]).unwrap();
        assert!((c.a - 0.05).abs() < 1e-15 && (c.b - 0.05).abs() < 1e-15);
        assert!(c.holds(&u));
    }

    #[test]
    fn sinusoidal_interface_width() {
        let g = Grid::cube(2, -1.0, 1.0, 512).unwrap();
        let u = GridFunction::from_fn(&g, "u", |x| (x[1] + 0.02 * (4.0 * x[0]).sin()).max(0.0));
        let c = measure_flatness(&u, &[0.0, 0.0], 1.0, &[0.0, 1.0]).unwrap();
        assert!((c.b - c.a - 0.04).abs() <= 2.0 * g.h_max());
        assert!(c.holds(&u));
    }

    #[test]
    fn ball_must_fit() {
        let g = Grid::cube(2, -1.0, 1.0, 16).unwrap();
        let u = GridFunction::constant(&g, "u", 1.0);
        assert!(matches!(measure_flatness(&u, &[0.5, 0.0], 1.0, &[0.0, 1.0]), Err(Error::BallOutOfDomain { .. })));
        assert!(measure_flatness(&u, &[0.0, 0.0], 0.5, &[0.0, 2.0]).is_err());
    }

    #[test]
    fn direction_search_recovers_normals() {
        let g = Grid::cube(2, -1.0, 1.0, 128).unwrap();
        let nu0 = unit(7.3);
        for lift in [0.0, 0.01] {
            let u = GridFunction::from_fn(&g, "u", |x| (x[0] * nu0[0] + x[1] * nu0[1] + lift).max(0.0));
            let (nu, c) = best_direction(&u, &[0.0, 0.0], 0.9, &[0.0, 1.0], &DirectionSearch::default()).unwrap();
            let angle = (nu[0] * nu0[0] + nu[1] * nu0[1]).clamp(-1.0, 1.0).acos().to_degrees();
            assert!(angle < 0.25 / 5.0, "angle {angle}");
            assert!(c.epsilon < 1e-3, "{c:?}");
            assert!((c.a - lift).abs() < 1e-3);
            assert!(c.holds(&u));
        }
    }

    #[test]
    fn direction_search_in_three_dimensions() {
        let g = Grid::cube(3, -1.0, 1.0, 24).unwrap();
        let nu0 = {
            let v: [f64; 3] = [0.1, -0.05, 1.0];
            let n = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            v.iter().map(|x| x / n.sqrt()).collect::<Vec<_>>()
        };
        let u = GridFunction::from_fn(&g, "u", |x| (x[0] * nu0[0] + x[1] * nu0[1] + x[2] * nu0[2]).max(0.0));
        let search = DirectionSearch { step_degrees: 1.0, ..Default::default() };
        let (nu, _) = best_direction(&u, &[0.0; 3], 0.8, &[0.0, 0.0, 1.0], &search).unwrap();
        let dot: f64 = nu.iter().zip(&nu0).map(|(a, b)| a * b).sum();
        assert!(dot.clamp(-1.0, 1.0).acos().to_degrees() < 0.5);
    }

    #[test]
    fn tangent_offsets_are_symmetric() {
        let o = offsets(2, 1.0, 2.0);
        assert_eq!(o.len(), 13);
        assert!(o.contains(&vec![0.0, 0.0]));
        let b = tangent_basis(&[0.0, 0.0, 1.0]);
        assert_eq!(b.len(), 2);
        for v in &b {
            assert!(v[2].abs() < 1e-15);
        }
    }
}
