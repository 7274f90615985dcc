//! Ground-truth posteriors: conjugate linear regression and grid quadrature.

mod blr;
mod grid;

pub use blr::{blr_posterior, blr_predict, BlrPosterior};
pub use grid::{
    grid_posterior, normalized_on_axis, rotation_with_first_column, trapezoid_weights, uniform_axis, GridPosterior,
    MAX_AXIS_NODES, MAX_GRID_PARAMS,
};

#[cfg(test)]
mod tests;
