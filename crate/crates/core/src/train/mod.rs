//! Differentially-private offline training of linear Q-functions.

pub mod ensemble;
pub mod fedavg;
pub mod linear;
pub mod sgm;

pub use ensemble::{train_ensemble, PolicyEnsemble, TrainerConfig, TrainingMeta};
pub use fedavg::{dp_fedavg_train, FedAvgConfig};
pub use linear::{clip_gradient, td_gradient, FeatureMap, LinearQ};
pub use sgm::{poisson_sample, sgm_train, SgmConfig};
