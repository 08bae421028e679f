//! Interpretable prediction of 5-year weight trajectories after bariatric
//! surgery.
//!
//! The pipeline screens and imputes baseline attributes, selects features
//! with the LASSO, grows one CART regression tree per scheduled visit and
//! wraps the trees into a [`trajectory::TrajectoryModel`] that predicts a
//! patient's total weight loss curve with an interquartile error band.

pub mod cart;
pub mod cohort;
pub mod imputation;
pub mod lasso;
pub mod metrics;
pub mod pipeline;
pub mod synth;
pub mod trajectory;
