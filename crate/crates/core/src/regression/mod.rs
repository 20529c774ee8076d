//! Outcome regression and blip estimation.

pub mod lasso;
pub mod logistic;
pub mod pseudo;
pub mod select;

pub use lasso::{bootstrap_blip_ci, enumerate_basis, fit_blip_lasso, unique_basis, BasisFunction, BlipCI, BlipModel, LassoOptions};
pub use logistic::{fit_logistic, interaction_layout, main_terms_layout, quasi_nll, DesignRow, QBounds, Role, WorkingModel};
pub use pseudo::d1_pseudo_outcome;
pub use select::{fit_candidate, pseudo_outcome_rows, select_recursive_origin, validation_loss, Candidate, FitSettings, FittedCandidate, Selection, TrainingRow};
