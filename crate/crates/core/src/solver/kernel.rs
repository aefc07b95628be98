//! Scalar root finding and lattice helpers shared by the solvers.

use crate::px::grid::{Grid, GridFunction};
use crate::solver::Relaxation;

/// Newton steps tried before falling back to the bracketed search.
const NEWTON_STEPS: usize = 6;

/// Root of a nondecreasing function `g` (returning value and derivative)
/// near `t0`: a few plain Newton steps, then safeguarded Newton inside an
/// expanding bracket, falling back to bisection whenever a Newton step
/// leaves the bracket or stalls.
pub fn monotone_root(g: impl Fn(f64) -> (f64, f64), t0: f64) -> f64 {
    let (mut v, mut dv) = g(t0);
    if v == 0.0 {
        return t0;
    }
    let mut t = t0;
    let (mut nv, mut ndv) = (v, dv);
    for _ in 0..NEWTON_STEPS {
        if !(ndv > 0.0 && ndv.is_finite()) {
            break;
        }
        let step = nv / ndv;
        t -= step;
        if step.abs() <= 1e-13 * t.abs().max(1e-12) {
            return t;
        }
        (nv, ndv) = g(t);
        if nv == 0.0 {
            return t;
        }
    }
    t = t0;
    let newton = |v: f64, dv: f64| if dv > 0.0 && dv.is_finite() { -v / dv } else { f64::NAN };
    let mut step = newton(v, dv).abs();
    if !(step.is_finite() && step > 0.0) {
        step = 1e-3 * t0.abs().max(1.0);
    }
    let min_step = 1e-14 * t0.abs().max(1e-300);
    step = step.max(min_step);
    // bracket [lo, hi] with g(lo) < 0 < g(hi)
    let (mut lo, mut hi);
    if v < 0.0 {
        lo = t0;
        loop {
            let c = t0 + step;
            let (vc, _) = g(c);
            if vc >= 0.0 {
                hi = c;
                break;
            }
            lo = c;
            step *= 2.0;
        }
    } else {
        hi = t0;
        loop {
            let c = t0 - step;
            let (vc, _) = g(c);
            if vc <= 0.0 {
                lo = c;
                break;
            }
            hi = c;
            step *= 2.0;
        }
    }
    for _ in 0..200 {
        let width = hi - lo;
        if width <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()) || width == 0.0 {
            break;
        }
        let mut cand = t + newton(v, dv);
        if !(cand > lo && cand < hi) {
            cand = 0.5 * (lo + hi);
        }
        let prev = v.abs();
        let (vc, dc) = g(cand);
        if vc == 0.0 {
            return cand;
        }
        if vc < 0.0 {
            lo = cand;
        } else {
            hi = cand;
        }
        t = cand;
        v = vc;
        dv = dc;
        // stalled Newton: force a bisection next time
        if vc.abs() > 0.5 * prev {
            let mid = 0.5 * (lo + hi);
            let (vm, dm) = g(mid);
            if vm == 0.0 {
                return mid;
            }
            if vm < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            t = mid;
            v = vm;
            dv = dm;
        }
    }
    t
}

/// Relaxation factor for a lattice.
pub fn omega(relaxation: Relaxation, grid: &Grid) -> f64 {
    match relaxation {
        Relaxation::Fixed(w) => w,
        Relaxation::Auto => {
            let cells = grid.shape().iter().map(|s| s - 1).max().unwrap_or(1).max(1) as f64;
            2.0 / (1.0 + (std::f64::consts::PI / cells).sin())
        }
    }
}

/// The lattice with half the cells per axis, when every axis has an even
/// cell count of at least `min_cells`.
pub fn coarsen(grid: &Grid, min_cells: usize) -> Option<Grid> {
    let cells: Vec<usize> = grid.shape().iter().map(|s| s - 1).collect();
    if cells.iter().all(|c| c % 2 == 0 && c / 2 >= min_cells) {
        let half: Vec<usize> = cells.iter().map(|c| c / 2).collect();
        Grid::new(grid.lower().to_vec(), grid.upper().to_vec(), &half).ok()
    } else {
        None
    }
}

/// Values of a fine field at the nodes of `coarse` (every second node).
pub fn inject(fine: &[f64], fine_grid: &Grid, coarse: &Grid) -> Vec<f64> {
    let n = coarse.dim();
    let mut m = vec![0usize; n];
    (0..coarse.len())
        .map(|i| {
            coarse.multi_index_into(i, &mut m);
            for v in m.iter_mut() {
                *v *= 2;
            }
            fine[fine_grid.index(&m)]
        })
        .collect()
}

/// Multilinear prolongation of a coarse field onto `fine`.
pub fn prolong(coarse: &GridFunction, fine: &Grid) -> Vec<f64> {
    (0..fine.len())
        .map(|i| coarse.interpolate(&fine.point(i)).expect("nested lattices share a box"))
        .collect()
}
