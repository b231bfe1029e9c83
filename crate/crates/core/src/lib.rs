//! Device-free tracking of a moving object with pairs of coupled passive UHF
//! tags ("twins").
//!
//! A twin pair is two passive tags mounted a few millimetres apart. Near-field
//! coupling shadows one of them (the rear tag) so that there is a band of
//! reader transmit power where only the fore tag answers. A person walking
//! near the pair reflects enough energy onto the rear tag to make it
//! readable, which is recorded as a *state jump*. The crate covers the whole
//! chain:
//!
//! * [`coupling`]: line/loop mutual inductance, per-tag loop currents,
//!   minimum activation power and the critical power window.
//! * [`env`]: a discrete-time warehouse with a grid of twins, readers, a
//!   moving object and a calibrated stochastic jump model.
//! * [`scheduler`]: two-list priority polling with BFS expansion, producing
//!   the per-interval jump set.
//! * [`locate`]: connected-subgraph selection and centroid estimate.
//! * [`tracker`]: fingerprint training and the particle filter.
//! * [`scenario`] and [`harness`]: scenario files, sweeps and the CLI verbs.

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::type_complexity,
    clippy::too_many_arguments
)]

pub mod coupling;
pub mod env;
pub mod error;
pub mod geom;
pub mod harness;
pub mod locate;
pub mod output;
pub mod par;
pub mod rng;
pub mod scenario;
pub mod scheduler;
pub mod tracker;

pub use error::{Error, Result};
pub use geom::Point;
