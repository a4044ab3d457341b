//! Goal descriptors: representation, oracle labels, acoustic measurement,
//! self-motion tracking and a small learned regressor.

pub mod accddoa;
pub mod estimate;
pub mod gdn;
pub mod tracker;

pub use accddoa::{oracle_accddoa, Accddoa, CategoryTrack, OracleMode, DISTANCE_SCALE};
pub use estimate::{
    estimate_azimuth, estimate_distance, CategoryTemplates, DistanceCalibration, GccPhat,
};
pub use gdn::{
    synthetic_episodes, train_gdn, training_target, GdnConfig, GdnWeights, TrainConfig,
    TrainingEpisode,
};
pub use tracker::{propagate_estimate, EpisodicBuffer, Measurement, StepRecord, Tracker};
