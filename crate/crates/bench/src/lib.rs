//! Fixtures shared by the kernel benchmarks.

use pxfb::{ExponentField, Grid, GridFunction};

/// Square lattice on `[-1, 1]^2` with a smooth, nowhere-flat field and a
/// variable exponent.
pub fn smooth_problem(cells: usize) -> (GridFunction, ExponentField) {
    let grid = Grid::cube(2, -1.0, 1.0, cells).expect("valid lattice");
    let u = GridFunction::from_fn(&grid, "u", |x| x[1] + 0.3 * x[0] * x[0] + 0.1 * (2.0 * x[0]).sin());
    let p = ExponentField::affine(2.5, vec![0.3, -0.2], vec![0.0, 0.0], 1.0).expect("valid exponent");
    (u, p)
}

/// `(x . nu + 0.1 x_1^2)^+` on `[-1, 1]^2`.
pub fn near_flat(cells: usize) -> GridFunction {
    let grid = Grid::cube(2, -1.0, 1.0, cells).expect("valid lattice");
    GridFunction::from_fn(&grid, "u", |x| (x[1] + 0.1 * x[0] * x[0]).max(0.0))
}
