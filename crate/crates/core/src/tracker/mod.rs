//! Fingerprint training and the particle filter that turns per-interval
//! jump counts into a trajectory.

mod filter;
mod fingerprint;
mod track;

pub use filter::{
    pf_estimate, pf_init, pf_predict, pf_resample, pf_reseed, pf_weight, Area, MotionNoise,
    Particle,
};
pub use fingerprint::{train_offline, Fingerprint, ObservationScope, TrainingConfig};
pub use track::{observe, track, TrackStep, Tracker, TrackerConfig};
