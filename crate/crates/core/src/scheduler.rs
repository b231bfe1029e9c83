//! Two-list priority polling (MPLL).
//!
//! A reader can hold only one transmit power at a time, so it creates the
//! critical state of one twin per query. Twins that jumped in the previous
//! round sit in the high-priority list `L_P`; everyone else is in `L_N`.
//! A round walks `L_P` first. A jumping `L_P` twin stays there and triggers
//! a breadth-first sweep over its grid neighbours; a quiet one drops to the
//! end of `L_N`. Then `L_N` is walked and any jumping twin is promoted to the
//! end of `L_P`. The accessed bit `S_i` makes every twin answer exactly once
//! per round, which is also what rules out starvation.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::coupling::{critical_window, ExcitationModel};
use crate::env::{ReaderId, TwinId, TwinsGrid};
use crate::error::{Error, Result};

/// Per-twin polling state `⟨P_TX,i, T_i, P_i, S_i⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PollRecord {
    pub twin: TwinId,
    /// Transmit power that puts this twin in its critical state (dBm).
    pub power: f64,
    /// `P_i`: member of `L_P`.
    pub priority: bool,
    /// `S_i`: already queried this round.
    pub accessed: bool,
}

/// Snapshot of the two lists, in order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PollLists {
    pub high: Vec<TwinId>,
    pub normal: Vec<TwinId>,
}

/// Result of one polling round.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RoundResult {
    /// Twins found jumping, in query order.
    pub jumping: Vec<TwinId>,
    /// Every query issued, in order.
    pub queried: Vec<TwinId>,
}

/// MPLL scheduler for the twins of one reader.
#[derive(Debug, Clone)]
pub struct Mpll {
    records: Vec<PollRecord>,
    neighbors: Vec<Vec<usize>>,
    high: Vec<usize>,
    normal: Vec<usize>,
}

impl Mpll {
    /// `twins` in their initial `L_N` order, with their critical powers.
    /// `neighbors` lists grid neighbours; ones outside `twins` are ignored
    /// because this reader cannot interrogate them.
    pub fn new<F, I>(twins: &[(TwinId, f64)], mut neighbors: F) -> Result<Self>
    where
        F: FnMut(TwinId) -> I,
        I: IntoIterator<Item = TwinId>,
    {
        let local: BTreeMap<TwinId, usize> = twins
            .iter()
            .enumerate()
            .map(|(i, (t, _))| (*t, i))
            .collect();
        if local.len() != twins.len() {
            return Err(Error::arg("duplicate twin in polling set"));
        }
        let records = twins
            .iter()
            .map(|&(twin, power)| PollRecord {
                twin,
                power,
                priority: false,
                accessed: false,
            })
            .collect();
        let neighbors = twins
            .iter()
            .map(|(t, _)| {
                neighbors(*t)
                    .into_iter()
                    .filter_map(|n| local.get(&n).copied())
                    .collect()
            })
            .collect();
        Ok(Mpll {
            records,
            neighbors,
            high: Vec::new(),
            normal: (0..twins.len()).collect(),
        })
    }

    /// Scheduler over the twins of `reader`, ascending id, using the
    /// per-twin `powers` indexed by twin id.
    pub fn for_reader(grid: &TwinsGrid, reader: ReaderId, powers: &[f64]) -> Result<Self> {
        let twins: Vec<(TwinId, f64)> = grid
            .twins_of(reader)
            .iter()
            .map(|&t| {
                powers
                    .get(t.0)
                    .map(|&p| (t, p))
                    .ok_or(Error::UnknownTwin(t))
            })
            .collect::<Result<_>>()?;
        Self::new(&twins, |t| grid.neighbor_twins(t).collect::<Vec<_>>())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[PollRecord] {
        &self.records
    }

    pub fn lists(&self) -> PollLists {
        PollLists {
            high: self.high.iter().map(|&i| self.records[i].twin).collect(),
            normal: self.normal.iter().map(|&i| self.records[i].twin).collect(),
        }
    }

    fn move_to_end(list: &mut Vec<usize>, from: &mut Vec<usize>, idx: usize) {
        if let Some(pos) = from.iter().position(|&i| i == idx) {
            from.remove(pos);
        }
        list.push(idx);
    }

    fn promote(&mut self, idx: usize) {
        if !self.records[idx].priority {
            self.records[idx].priority = true;
            Self::move_to_end(&mut self.high, &mut self.normal, idx);
        }
    }

    fn demote(&mut self, idx: usize) {
        self.records[idx].priority = false;
        Self::move_to_end(&mut self.normal, &mut self.high, idx);
    }

    fn query_one<F>(&mut self, idx: usize, query: &mut F, out: &mut RoundResult) -> Result<bool>
    where
        F: FnMut(TwinId, f64) -> Result<bool>,
    {
        let rec = &mut self.records[idx];
        debug_assert!(!rec.accessed);
        rec.accessed = true;
        out.queried.push(rec.twin);
        let jumping = query(rec.twin, rec.power)?;
        if jumping {
            out.jumping.push(rec.twin);
        }
        Ok(jumping)
    }

    /// Breadth-first sweep from a jumping twin. Jumping neighbours are
    /// promoted and expanded in turn; quiet ones keep their list.
    fn expand<F>(&mut self, start: usize, query: &mut F, out: &mut RoundResult) -> Result<()>
    where
        F: FnMut(TwinId, f64) -> Result<bool>,
    {
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for k in 0..self.neighbors[u].len() {
                let n = self.neighbors[u][k];
                if self.records[n].accessed {
                    continue;
                }
                if self.query_one(n, query, out)? {
                    self.promote(n);
                    queue.push_back(n);
                }
            }
        }
        Ok(())
    }

    /// Runs one round. `query(twin, power)` interrogates a twin at its
    /// critical power and reports whether it is jumping.
    pub fn poll_round<F>(&mut self, mut query: F) -> Result<RoundResult>
    where
        F: FnMut(TwinId, f64) -> Result<bool>,
    {
        let mut out = RoundResult::default();

        let high = self.high.clone();
        for idx in high {
            if self.records[idx].accessed {
                continue;
            }
            if self.query_one(idx, &mut query, &mut out)? {
                self.expand(idx, &mut query, &mut out)?;
            } else {
                self.demote(idx);
            }
        }

        let normal = self.normal.clone();
        for idx in normal {
            if self.records[idx].accessed {
                continue;
            }
            if self.query_one(idx, &mut query, &mut out)? {
                self.promote(idx);
            }
        }

        for r in &mut self.records {
            r.accessed = false;
        }
        Ok(out)
    }
}

/// Sets each twin's polling power to the middle of its critical window.
/// Fails on the first twin that has no window at its reader distance.
pub fn calibrate_powers(grid: &TwinsGrid, ex: &ExcitationModel) -> Result<Vec<f64>> {
    grid.twins()
        .iter()
        .map(|t| {
            let d = grid.reader_distance(t.id)?;
            match critical_window(&t.geometry, ex, d)? {
                Some(w) => Ok(w.midpoint()),
                None => Err(Error::Calibration {
                    twin: t.id,
                    reason: format!("no critical window at reader distance {d:.3} m"),
                }),
            }
        })
        .collect()
}

/// Jump counts of one reader within one polling interval.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IntervalPoll {
    pub index: usize,
    /// Number of rounds in which each twin answered jumping; only twins
    /// with a non-zero count are present. The key set is `J`.
    pub counts: BTreeMap<TwinId, u32>,
    pub rounds: u32,
    /// The interval's first round ran past the interval end.
    pub spilled: bool,
}

/// Timing of the polling loop, in microseconds to keep the clock exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PollTiming {
    pub interval_us: u64,
    pub query_us: u64,
}

impl PollTiming {
    pub fn from_seconds(interval: f64, query: f64) -> Result<Self> {
        if !(interval > 0.0 && query > 0.0) {
            return Err(Error::config(
                "polling interval and query time must be positive",
            ));
        }
        Ok(PollTiming {
            interval_us: (interval * 1e6).round() as u64,
            query_us: (query * 1e6).round() as u64,
        })
    }

    /// Whole rounds over `n` twins that fit in one interval.
    pub fn rounds_per_interval(&self, n: usize) -> u64 {
        if n == 0 {
            0
        } else {
            self.interval_us / (n as u64 * self.query_us)
        }
    }

    pub fn spills(&self, n: usize) -> bool {
        n as u64 * self.query_us > self.interval_us
    }
}

/// Polls for `intervals` consecutive intervals. Within each interval the
/// reader runs as many complete rounds as fit, and always at least one;
/// when a single round does not fit the interval is flagged as spilled and
/// the clock runs on into the next one. `query(twin, power, t_us)` is given
/// the query's start time.
pub fn run_polling<F>(
    mpll: &mut Mpll,
    intervals: usize,
    timing: PollTiming,
    mut query: F,
) -> Result<Vec<IntervalPoll>>
where
    F: FnMut(TwinId, f64, u64) -> Result<bool>,
{
    let n = mpll.len() as u64;
    let mut clock = 0u64;
    let mut out = Vec::with_capacity(intervals);
    for index in 0..intervals {
        let start = index as u64 * timing.interval_us;
        let end = start + timing.interval_us;
        clock = clock.max(start);
        let mut poll = IntervalPoll {
            index,
            ..IntervalPoll::default()
        };
        if n == 0 {
            out.push(poll);
            continue;
        }
        while poll.rounds == 0 || clock + n * timing.query_us <= end {
            let round = mpll.poll_round(|twin, power| {
                let t = clock;
                clock += timing.query_us;
                query(twin, power, t)
            })?;
            for t in round.jumping {
                *poll.counts.entry(t).or_insert(0) += 1;
            }
            poll.rounds += 1;
        }
        poll.spilled = clock > end;
        out.push(poll);
    }
    Ok(out)
}
