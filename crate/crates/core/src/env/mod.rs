//! The simulated warehouse: twin grid, readers, the moving object and the
//! stochastic state-jump model.

mod detection;
mod grid;
mod layout;
mod object;
mod sim;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use detection::{in_effective_region, DetectionProfile, Region};
pub use grid::{CellId, Lattice, ReaderRecord, TwinRecord, TwinsGrid};
pub use layout::ShelfRows;
pub use object::{MovingObject, Waypoint};
pub use sim::{
    GroundTruthSample, IntervalJumps, JumpKind, PollingConfig, QueryOutcome, QueryRecord,
    SimOutput, StateJumpEvent, Warehouse,
};

/// Sequence number of a twin pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TwinId(pub usize);

impl fmt::Display for TwinId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReaderId(pub usize);

impl fmt::Display for ReaderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
