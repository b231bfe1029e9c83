use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::detection::{in_effective_region, DetectionProfile, Region};
use super::grid::TwinsGrid;
use super::object::MovingObject;
use super::{ReaderId, TwinId};
use crate::coupling::{critical_window, ExcitationModel, PowerWindow};
use crate::error::{Error, Result};
use crate::geom::Point;
use crate::par::{self, Execution};
use crate::rng::{self, Domain, SimRng};
use crate::scheduler::{run_polling, Mpll, PollTiming};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PollingConfig {
    /// Length of one polling interval `Δt` (s).
    pub interval: f64,
    /// Duration of one twin interrogation (s).
    pub query_time: f64,
}

impl Default for PollingConfig {
    fn default() -> Self {
        PollingConfig {
            interval: 1.0,
            query_time: 0.020,
        }
    }
}

impl PollingConfig {
    pub fn timing(&self) -> Result<PollTiming> {
        PollTiming::from_seconds(self.interval, self.query_time)
    }

    /// Number of whole intervals needed to cover `duration` seconds.
    pub fn intervals_for(&self, duration: f64) -> usize {
        if duration <= 0.0 {
            0
        } else {
            (duration / self.interval - 1e-9).ceil().max(0.0) as usize
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryOutcome {
    /// The rear tag answered at the critical power.
    Jumping,
    Quiescent,
    /// The requested power is outside this twin's critical window.
    NotInCriticalState,
}

impl QueryOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            QueryOutcome::Jumping => "jumping",
            QueryOutcome::Quiescent => "quiescent",
            QueryOutcome::NotInCriticalState => "not_in_critical_state",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "jumping" => Some(QueryOutcome::Jumping),
            "quiescent" => Some(QueryOutcome::Quiescent),
            "not_in_critical_state" => Some(QueryOutcome::NotInCriticalState),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JumpKind {
    Jump,
    Restore,
}

impl JumpKind {
    pub fn as_str(self) -> &'static str {
        match self {
            JumpKind::Jump => "jump",
            JumpKind::Restore => "restore",
        }
    }
}

/// A rear tag becoming readable (`Jump`) or shadowed again (`Restore`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateJumpEvent {
    pub t: f64,
    pub twin: TwinId,
    pub kind: JumpKind,
}

/// One interrogation in the reader trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryRecord {
    pub t_us: u64,
    pub reader: ReaderId,
    pub twin: TwinId,
    pub power: f64,
    pub outcome: QueryOutcome,
}

impl QueryRecord {
    pub fn t(&self) -> f64 {
        self.t_us as f64 * 1e-6
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthSample {
    pub t: f64,
    pub position: Point,
}

/// Jump counts of all readers in one interval.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntervalJumps {
    pub index: usize,
    pub counts: BTreeMap<TwinId, u32>,
    pub spilled_readers: usize,
}

#[derive(Debug, Clone, Default)]
pub struct SimOutput {
    pub queries: Vec<QueryRecord>,
    pub events: Vec<StateJumpEvent>,
    pub ground_truth: Vec<GroundTruthSample>,
    pub intervals: Vec<IntervalJumps>,
}

/// A calibrated deployment ready to simulate.
#[derive(Debug, Clone)]
pub struct Warehouse {
    pub grid: TwinsGrid,
    pub excitation: ExcitationModel,
    pub profile: DetectionProfile,
    pub polling: PollingConfig,
    windows: Vec<PowerWindow>,
    powers: Vec<f64>,
}

impl Warehouse {
    /// Computes every twin's critical window and polling power. Fails if a
    /// twin has no window at its reader distance.
    pub fn new(
        grid: TwinsGrid,
        excitation: ExcitationModel,
        profile: DetectionProfile,
        polling: PollingConfig,
    ) -> Result<Self> {
        profile.validate()?;
        polling.timing()?;
        excitation.validate()?;
        let mut windows = Vec::with_capacity(grid.twins().len());
        for t in grid.twins() {
            let d = grid.reader_distance(t.id)?;
            let w = critical_window(&t.geometry, &excitation, d)?.ok_or_else(|| {
                Error::Calibration {
                    twin: t.id,
                    reason: format!("no critical window at reader distance {d:.3} m"),
                }
            })?;
            windows.push(w);
        }
        let powers = windows.iter().map(PowerWindow::midpoint).collect();
        Ok(Warehouse {
            grid,
            excitation,
            profile,
            polling,
            windows,
            powers,
        })
    }

    pub fn window(&self, twin: TwinId) -> Result<PowerWindow> {
        self.windows
            .get(twin.0)
            .copied()
            .ok_or(Error::UnknownTwin(twin))
    }

    /// Calibrated polling power per twin, indexed by twin id.
    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    /// Where `object` stands relative to `twin` at time `t`.
    pub fn region(&self, twin: TwinId, object: Option<&MovingObject>, t: f64) -> Result<Region> {
        let rec = self.grid.twin(twin)?;
        let reader = &self.grid.readers()[rec.reader.0];
        Ok(match object {
            Some(o) => in_effective_region(
                &self.profile,
                rec.position,
                reader.position,
                o.position_clamped(t),
            ),
            None => Region::Outside,
        })
    }

    /// Interrogates `twin` at `p_tx` at time `t`. Always consumes exactly one
    /// uniform draw from `rng`.
    pub fn query_twin<R: Rng>(
        &self,
        twin: TwinId,
        p_tx: f64,
        t: f64,
        object: Option<&MovingObject>,
        rng: &mut R,
    ) -> Result<(QueryOutcome, Region)> {
        let window = self.window(twin)?;
        let region = self.region(twin, object, t)?;
        let u: f64 = rng.random();
        if !window.contains(p_tx) {
            return Ok((QueryOutcome::NotInCriticalState, region));
        }
        let rec = self.grid.twin(twin)?;
        let height = object.map_or(0.0, |o| o.height);
        let p = self
            .profile
            .jump_probability(region, height, rec.mount_height);
        let outcome = if u < p {
            QueryOutcome::Jumping
        } else {
            QueryOutcome::Quiescent
        };
        Ok((outcome, region))
    }

    /// Simulates every reader for enough intervals to cover `duration`.
    pub fn run(
        &self,
        object: Option<&MovingObject>,
        duration: f64,
        seed: u64,
        exec: Execution,
    ) -> Result<SimOutput> {
        let intervals = self.polling.intervals_for(duration);
        let readers: Vec<ReaderId> = self.grid.readers().iter().map(|r| r.id).collect();
        self.run_readers(&readers, object, intervals, seed, exec)
    }

    /// Simulates a subset of readers for `intervals` intervals. Each reader
    /// draws from its own stream, so the result does not depend on which
    /// other readers run alongside it.
    pub fn run_readers(
        &self,
        readers: &[ReaderId],
        object: Option<&MovingObject>,
        intervals: usize,
        seed: u64,
        exec: Execution,
    ) -> Result<SimOutput> {
        let timing = self.polling.timing()?;
        let per_reader = par::map(exec, readers, |&r| {
            self.run_reader(r, object, intervals, timing, seed)
        });

        let mut out = SimOutput {
            intervals: (0..intervals)
                .map(|index| IntervalJumps {
                    index,
                    ..IntervalJumps::default()
                })
                .collect(),
            ..SimOutput::default()
        };
        for res in per_reader {
            let (queries, events, polls) = res?;
            out.queries.extend(queries);
            out.events.extend(events);
            for p in polls {
                let slot = &mut out.intervals[p.index];
                for (t, n) in p.counts {
                    *slot.counts.entry(t).or_insert(0) += n;
                }
                slot.spilled_readers += usize::from(p.spilled);
            }
        }
        // Readers are appended in id order and each is time ordered, so a
        // stable sort on time yields (time, reader) order.
        out.queries.sort_by_key(|q| q.t_us);
        out.events.sort_by(|a, b| a.t.total_cmp(&b.t));

        if let Some(o) = object {
            let end_us = intervals as u64 * timing.interval_us;
            out.ground_truth = (0..end_us / timing.query_us)
                .map(|k| {
                    let t = (k * timing.query_us) as f64 * 1e-6;
                    GroundTruthSample {
                        t,
                        position: o.position_clamped(t),
                    }
                })
                .collect();
        }
        Ok(out)
    }

    fn run_reader(
        &self,
        reader: ReaderId,
        object: Option<&MovingObject>,
        intervals: usize,
        timing: PollTiming,
        seed: u64,
    ) -> Result<(
        Vec<QueryRecord>,
        Vec<StateJumpEvent>,
        Vec<crate::scheduler::IntervalPoll>,
    )> {
        let mut rng: SimRng = rng::stream(seed, Domain::Reader, reader.0 as u64);
        let mut mpll = Mpll::for_reader(&self.grid, reader, &self.powers)?;
        let mut queries = Vec::new();
        let mut events = Vec::new();
        let mut jumped: BTreeMap<TwinId, bool> = BTreeMap::new();
        let mut busy_until = 0u64;

        let polls = run_polling(&mut mpll, intervals, timing, |twin, power, t_us| {
            // One power at a time: a query may only start once the previous
            // one has finished.
            assert!(
                t_us >= busy_until,
                "reader {reader} issued overlapping queries"
            );
            busy_until = t_us + timing.query_us;

            let t = t_us as f64 * 1e-6;
            let (outcome, region) = self.query_twin(twin, power, t, object, &mut rng)?;
            queries.push(QueryRecord {
                t_us,
                reader,
                twin,
                power,
                outcome,
            });
            let state = jumped.entry(twin).or_insert(false);
            let is_jump = outcome == QueryOutcome::Jumping;
            if is_jump && !*state {
                *state = true;
                events.push(StateJumpEvent {
                    t,
                    twin,
                    kind: JumpKind::Jump,
                });
            } else if *state && !is_jump && region == Region::Outside {
                *state = false;
                events.push(StateJumpEvent {
                    t,
                    twin,
                    kind: JumpKind::Restore,
                });
            }
            Ok(is_jump)
        })?;
        Ok((queries, events, polls))
    }
}
