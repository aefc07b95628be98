pub mod exponent;
pub mod grid;
pub mod io;
pub mod norm;
pub mod operator;
pub mod phase;

pub use exponent::ExponentField;
pub use grid::{Analytic, Grid, GridFunction, ScalarField};
pub use norm::{luxemburg_norm, modular, norm_modular_bracket};
pub use operator::{
    ellipticity_bounds, eval_p_laplacian_div, eval_p_laplacian_div_with, eval_p_laplacian_nondiv,
    eval_p_laplacian_nondiv_with_floor, frozen_coefficients, frozen_from_gradient, nondiv_from_jet,
    SmoothField, SmoothFn, FLUX_DELTA, GRADIENT_FLOOR,
};
pub use phase::{extract_positive_phase, FreeBoundaryPoint, PositivePhase};
