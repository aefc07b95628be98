//! Geometric analyzers: slab flatness and direction search, the empirical
//! Harnack constant, the dichotomy probe, Hölder fits and the rescaling
//! iteration.

pub mod dichotomy;
pub mod harnack;
pub mod holder;
pub mod iteration;
pub mod measure;

pub use dichotomy::{dichotomy_probe, Branch, DichotomyReport};
pub use harnack::{harnack_ratio, HarnackReport};
pub use holder::{holder_modulus, least_squares, HolderFit};
pub use iteration::{flatness_iteration, IterationOptions, IterationStep, IterationTrace, ProblemData, Resampling, ScaleBounds};
pub use measure::{best_direction, measure_flatness, DirectionSearch, FlatnessCertificate};
