//! Distributed alignment search with one-dimensional subspaces: the patch,
//! interchange training with its flipped-label control, ODDS evaluation and
//! subspace positions.

mod direction;
mod eval;
mod target;
mod train;

pub use direction::{das_patch, Direction, UNIT_TOL};
pub use eval::{
    delta_odds_eval, delta_odds_with, grid, mean_odds, odds_metric, pair_directions, position_correlation, subspace_correlation, subspace_positions,
    GridCell, OddsResult, TaggedSequence,
};
pub use target::{site_vectors, Interchange, InterventionTarget, LabelLogProbs, LmTarget, PlantedTask};
pub use train::{initial_direction, train_direction, train_vector, DasTrainSpec, RoleAssignment, TrainedVector};
