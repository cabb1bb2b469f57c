pub mod basis;
pub mod grid;
pub mod model;

pub use basis::{gauss_legendre_rule, legendre_eval};
pub use grid::{sparse_grid_nodes, total_degree_indices, GridSpec};
pub use model::{
    affine_from_reference, affine_to_reference, build_adaptive, build_surrogate, eval_surrogate,
    grad_surrogate, surrogate_vjp, validate_surrogate, AdaptiveOutcome, Bounds, BuildReport,
    Evaluator, SurrogateConfig, SurrogateModel, ValidationReport,
};
