//! Offline training of the autoencoder and latent Hamiltonian network.

mod data;
mod loss;
mod optim;
mod trainer;

pub use data::{PairIndex, ReducedDataset, ReducedTrajectory, Scaling, SIGMA_FLOOR};
pub use loss::{batch_losses, prediction_operator, sample_losses, LossWeights, Losses};
pub use optim::{lr_schedule, Adam, Plateau, DECAY_FACTOR, DECAY_INTERVAL, MAX_CONSECUTIVE_SKIPS};
pub use trainer::{train, ReportRow, TrainingConfig, TrainingObserver, TrainingOutcome, TrainingReport, WatchMilestone};
