//! Power-law fit `|w(x) - w(x0)| <= C |x - x0|^gamma` over dyadic annuli.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::px::grid::GridFunction;

/// Oscillations at or below this level count as zero.
pub const ZERO_OSCILLATION: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderFit {
    pub c_emp: f64,
    /// `None` when the oscillation vanishes and the fit is skipped.
    pub gamma_emp: Option<f64>,
    /// Root mean square residual of the log-log fit.
    pub residual: f64,
    /// `(distance, oscillation)` at the worst node of each annulus.
    pub samples: Vec<(f64, f64)>,
}

/// Fits the modulus of `w` at `x0` using lattice nodes with
/// `|x - x0| >= eps / eps_bar` (and `>= h`), restricted to `support` when
/// given. Each dyadic annulus contributes its largest oscillation.
pub fn holder_modulus(w: &GridFunction, support: Option<&[bool]>, x0: &[f64], eps: f64, eps_bar: f64) -> Result<HolderFit> {
    let grid = w.grid();
    if !(eps > 0.0 && eps_bar > 0.0) {
        return Err(Error::Domain(format!("need eps, eps_bar > 0 (got {eps}, {eps_bar})")));
    }
    if let Some(s) = support {
        if s.len() != grid.len() {
            return Err(Error::GridMismatch(format!("support has {} entries for {} nodes", s.len(), grid.len())));
        }
    }
    let w0 = w.interpolate(x0).ok_or_else(|| Error::Domain(format!("{x0:?} is outside the lattice")))?;
    let r_min = (eps / eps_bar).max(grid.h_max());
    // (annulus index) -> (distance, oscillation) of the worst node
    let mut worst: Vec<Option<(f64, f64)>> = Vec::new();
    for i in 0..grid.len() {
        if support.is_some_and(|s| !s[i]) {
            continue;
        }
        let x = grid.point(i);
        let d = x.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if d < r_min {
            continue;
        }
        let k = (d / r_min).log2().floor() as usize;
        if worst.len() <= k {
            worst.resize(k + 1, None);
        }
        let osc = (w.at(i) - w0).abs();
        if worst[k].is_none_or(|(_, o)| osc > o) {
            worst[k] = Some((d, osc));
        }
    }
    let samples: Vec<(f64, f64)> = worst.into_iter().flatten().collect();
    if samples.is_empty() {
        return Err(Error::InsufficientSamples("no node at distance >= eps / eps_bar".into()));
    }
    if samples.iter().all(|(_, o)| *o <= ZERO_OSCILLATION) {
        return Ok(HolderFit { c_emp: 0.0, gamma_emp: None, residual: 0.0, samples });
    }
    let pts: Vec<(f64, f64)> = samples.iter().filter(|(_, o)| *o > ZERO_OSCILLATION).map(|(d, o)| (d.ln(), o.ln())).collect();
    if pts.len() < 2 {
        return Err(Error::InsufficientSamples(format!("{} annuli with nonzero oscillation", pts.len())));
    }
    let (slope, intercept, residual) = least_squares(&pts);
    Ok(HolderFit { c_emp: intercept.exp(), gamma_emp: Some(slope), residual, samples })
}

/// Line fit `y = slope x + intercept` and its RMS residual.
pub fn least_squares(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let rss: f64 = pts.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    (slope, intercept, (rss / m).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::px::grid::Grid;

    #[test]
    fn constant_has_no_oscillation() {
        let g = Grid::cube(2, -1.0, 1.0, 32).unwrap();
        let w = GridFunction::constant(&g, "w", 3.0);
        let fit = holder_modulus(&w, None, &[0.0, 0.0], 0.01, 1.0).unwrap();
        assert_eq!(fit.c_emp, 0.0);
        assert!(fit.gamma_emp.is_none());
    }

    #[test]
    fn square_root_profile() {
        let g = Grid::cube(2, -1.0, 1.0, 256).unwrap();
        let w = GridFunction::from_fn(&g, "w", |x| (x[0] * x[0] + x[1] * x[1]).sqrt().sqrt());
        let fit = holder_modulus(&w, None, &[0.0, 0.0], 0.01, 1.0).unwrap();
        assert!((fit.gamma_emp.unwrap() - 0.5).abs() < 0.02, "{fit:?}");
        assert!((fit.c_emp - 1.0).abs() < 0.05);
    }

    #[test]
    fn support_and_sample_errors() {
        let g = Grid::cube(1, 0.0, 1.0, 16).unwrap();
        let w = GridFunction::from_fn(&g, "w", |x| x[0]);
        assert!(matches!(holder_modulus(&w, None, &[0.0], 2.0, 1.0), Err(Error::InsufficientSamples(_))));
        let s = vec![true; 3];
        assert!(holder_modulus(&w, Some(&s), &[0.0], 0.1, 1.0).is_err());
        let fit = holder_modulus(&w, None, &[0.0], 0.1, 1.0).unwrap();
        assert!((fit.gamma_emp.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn line_fit() {
        let (s, i, r) = least_squares(&[(0.0, 1.0), (1.0, 3.0), (2.0, 5.0)]);
        assert!((s - 2.0).abs() < 1e-14 && (i - 1.0).abs() < 1e-14 && r < 1e-14);
    }
}
