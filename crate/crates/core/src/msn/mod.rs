//! Prototype assignment, the cross-entropy + mean-entropy objective, its
//! analytic gradients, AdamW with a cosine schedule, and the training loop.

mod assign;
mod loss;
mod optim;
mod train;

pub use assign::{cross_entropy, memax, prototype_probs, similarities, AssignmentDistribution, PrototypeBank};
pub use loss::{
    anchor_objective, batch_gradients, batch_loss, target_assignments, Gradients, LossBreakdown, Sample,
    TargetAssignment,
};
pub use optim::{adamw_step, cosine_lr, AdamWConfig, AdamWState};
pub use train::{initial_state, train, EpochRecord, MemaxSide, TrainConfig, TrainOutcome, TrainReport};
