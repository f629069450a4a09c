//! Representation learning at desk scale: a hashed linear dual encoder,
//! contrastive / classification / joint losses with analytic gradients, and
//! the mixed-objective epoch scheduler.

pub mod encoder;
pub mod loss;
pub mod schedule;
pub mod train;

pub use encoder::{DualEncoderModel, LinearDualEncoder, Side};
pub use loss::{
    classification_probs, contrastive_loss, joint_loss, nli_loss, ClassificationHead,
    ContrastiveBatch, ContrastiveGrad, MultiTaskWeights,
};
pub use schedule::{
    build_schedule, EpochRatio, EpochSlot, MixedObjectiveSchedule, ObjectiveKind, ScheduleEntry,
};
pub use train::{
    objective_and_gradient, train, train_step, LossOptions, ModelGrad, Objective, StepConfig,
    StepLoss, TrainConfig, TrainingExample,
};
