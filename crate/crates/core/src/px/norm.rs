//! Modular and Luxemburg norm of the variable-exponent Lebesgue space.

use rayon::prelude::*;

use crate::px::exponent::ExponentField;
use crate::px::grid::GridFunction;

/// Relative width at which the Luxemburg bisection stops.
const LUX_RTOL: f64 = 1e-13;

/// Midpoint samples: per cell, the corner average of `|u|` and `p` at the
/// cell center.
struct CellSamples {
    abs: Vec<f64>,
    p: Vec<f64>,
    volume: f64,
}

impl CellSamples {
    fn new(u: &GridFunction, p: &ExponentField) -> Self {
        let grid = u.grid();
        let n = grid.dim();
        let cells: Vec<usize> = grid.shape().iter().map(|s| s - 1).collect();
        let count: usize = cells.iter().product();
        let strides = grid.strides();
        let h = grid.spacing();
        let corners = 1usize << n;
        let values = u.values();
        let (abs, p): (Vec<f64>, Vec<f64>) = (0..count)
            .into_par_iter()
            .map(|c| {
                // decode the cell multi-index, last axis fastest
                let mut rem = c;
                let mut base = 0;
                let mut center = vec![0.0; n];
                for d in (0..n).rev() {
                    let i = rem % cells[d];
                    rem /= cells[d];
                    base += i * strides[d];
                    center[d] = grid.lower()[d] + (i as f64 + 0.5) * h[d];
                }
                let mut acc = 0.0;
                for k in 0..corners {
                    let mut idx = base;
                    for d in 0..n {
                        if k >> d & 1 == 1 {
                            idx += strides[d];
                        }
                    }
                    acc += values[idx];
                }
                ((acc / corners as f64).abs(), p.p(&center))
            })
            .unzip();
        Self { abs, p, volume: grid.cell_volume() }
    }

    fn modular(&self, lambda: f64) -> f64 {
        let terms: Vec<f64> = self
            .abs
            .par_iter()
            .zip(&self.p)
            .map(|(a, p)| if *a == 0.0 { 0.0 } else { (a / lambda).powf(*p) })
            .collect();
        // fixed lexicographic summation order
        terms.iter().sum::<f64>() * self.volume
    }
}

/// `rho(u) = int |u|^p(x) dx` by the midpoint rule on cells.
pub fn modular(u: &GridFunction, p: &ExponentField) -> f64 {
    CellSamples::new(u, p).modular(1.0)
}

/// `inf { lambda > 0 : rho(u / lambda) <= 1 }` by bisection in `log lambda`.
pub fn luxemburg_norm(u: &GridFunction, p: &ExponentField) -> f64 {
    let samples = CellSamples::new(u, p);
    let sup = samples.abs.iter().cloned().fold(0.0, f64::max);
    if sup == 0.0 {
        return 0.0;
    }
    let m = u.grid().measure();
    let mut lo = sup * m.powf(1.0 / p.p_max()) / 2.0;
    let mut hi = sup * (1.0 + m).powf(1.0 / p.p_min()) * 2.0;
    while samples.modular(lo) <= 1.0 {
        lo /= 2.0;
    }
    while samples.modular(hi) > 1.0 {
        hi *= 2.0;
    }
    while hi / lo - 1.0 > LUX_RTOL {
        let mid = (lo * hi).sqrt();
        if samples.modular(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// The norm-modular bracket
/// `min(rho^(1/p_min), rho^(1/p_max)) <= ||u|| <= max(...)`, as
/// `(lower, upper)`.
pub fn norm_modular_bracket(rho: f64, p_min: f64, p_max: f64) -> (f64, f64) {
    let a = rho.powf(1.0 / p_min);
    let b = rho.powf(1.0 / p_max);
    (a.min(b), a.max(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::px::grid::Grid;
    use proptest::prelude::*;

    fn unit_box(n: usize, cells: usize) -> Grid {
        Grid::cube(n, 0.0, 1.0, cells).unwrap()
    }

    #[test]
    fn modular_trivial_values() {
        let g = unit_box(2, 8);
        let p = ExponentField::affine(2.0, vec![0.3, 0.1], vec![0.5, 0.5], 0.5).unwrap();
        assert_eq!(modular(&GridFunction::constant(&g, "u", 0.0), &p), 0.0);
        assert!((modular(&GridFunction::constant(&g, "u", 1.0), &p) - 1.0).abs() < 1e-14);
        let p3 = ExponentField::constant(2, 3.0).unwrap();
        assert!((modular(&GridFunction::constant(&g, "u", 2.0), &p3) - 8.0).abs() < 1e-13);
    }

    #[test]
    fn luxemburg_constant_exponent() {
        let g = Grid::new(vec![0.0, 0.0], vec![2.0, 1.5], &[8, 6]).unwrap();
        let m = 3.0;
        for (p0, c) in [(1.5, 0.7), (2.0, 3.0), (3.0, 1.0)] {
            let p = ExponentField::constant(2, p0).unwrap();
            let u = GridFunction::constant(&g, "u", c);
            let expect = c * f64::powf(m, 1.0 / p0);
            assert!((luxemburg_norm(&u, &p) / expect - 1.0).abs() < 1e-10);
        }
        let p = ExponentField::constant(2, 2.0).unwrap();
        assert_eq!(luxemburg_norm(&GridFunction::constant(&g, "u", 0.0), &p), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn homogeneity_and_bracket(
            vals in proptest::collection::vec(-3.0f64..3.0, 81),
            c in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0],
        ) {
            let g = Grid::cube(2, -1.0, 1.0, 8).unwrap();
            let u = GridFunction::new(g, vals, "u").unwrap();
            let p = ExponentField::two_valued(2, 1.5, 3.0, 0, 0.0).unwrap();
            let norm = luxemburg_norm(&u, &p);
            let scaled = luxemburg_norm(&u.map(|v| c * v), &p);
            prop_assert!((scaled - c.abs() * norm).abs() <= 1e-9 * (1.0 + c.abs() * norm));
            let rho = modular(&u, &p);
            let (lo, hi) = norm_modular_bracket(rho, p.p_min(), p.p_max());
            prop_assert!(norm >= lo * (1.0 - 1e-10) && norm <= hi * (1.0 + 1e-10));
        }
    }
}
