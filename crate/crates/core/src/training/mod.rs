//! Objective, exact gradients, Adam and the training loops.

mod examples;
mod ipw;
mod loss;
mod optim;
mod trainer;

pub use examples::{aggregate_impressions, labeled_examples, total_count, Example};
pub use ipw::{ipw_examples, ipw_risk, train_ipw, PROPENSITY_FLOOR};
pub use loss::{bce_loss, grad, loss_and_grad, total_loss, LossParts, TrainConfig};
pub use optim::{adam_step, OptimizerState};
pub use trainer::{
    delta_ci_examples, ndcg10, train, train_click_baseline, train_inforank, train_labeled_upper_bound, EpochRecord,
    History, TrainOutcome, Validation,
};

#[cfg(test)]
mod tests;
