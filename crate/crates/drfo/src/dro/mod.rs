//! Distributionally robust fairness optimization.
//!
//! When group labels are partially reconstructed, the label-induced group
//! distributions are wrong by an amount bounded by the classifier's
//! estimated error rate. This module makes fairness training robust to that
//! uncertainty: group fairness terms ([`fairness`]) carry adversarial
//! distributions confined to total-variation balls, projections keep the
//! adversary feasible ([`project`]), and an alternating min-max loop
//! ([`train`]) pits the model against it.

pub mod fairness;
pub mod project;
pub mod train;

pub use fairness::{
    ascend_terms, fairness_dz, init_center, mixture_terms, robust_terms, static_terms,
    term_values, tv_distance, worst_case_term, Ball, GroupTerm, TermPart, WorstCase,
};
pub use project::{project_ambiguity, project_l1_ball, project_simplex};
pub use train::{train_minimax, LogRow, Snapshot, TermLog, TrainConfig, TrainOutcome};
