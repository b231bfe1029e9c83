use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::filter::{
    pf_estimate, pf_init, pf_predict, pf_resample, pf_reseed, pf_weight, Area, MotionNoise,
    Particle,
};
use super::fingerprint::{Fingerprint, ObservationScope};
use crate::env::{IntervalJumps, TwinId, TwinsGrid};
use crate::error::{Error, Result};
use crate::geom::Point;
use crate::locate::locate;
use crate::par::Execution;
use crate::rng::{self, Domain, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub particles: usize,
    pub noise: MotionNoise,
    /// Standard deviation of the initial cloud (m).
    pub spread: f64,
    /// Entrance where tracking starts.
    pub origin: Point,
    pub initial_velocity: Point,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            particles: 500,
            noise: MotionNoise::default(),
            spread: 0.5,
            origin: Point::ORIGIN,
            initial_velocity: Point::new(1.5, 0.0),
        }
    }
}

/// Jump counts of the in-scope twins around `center`, zero for twins that
/// did not jump and capped at `n_max`.
pub fn observe(
    counts: &BTreeMap<TwinId, u32>,
    center: Point,
    grid: &TwinsGrid,
    scope: ObservationScope,
    n_max: u32,
) -> BTreeMap<TwinId, u32> {
    scope
        .twins(grid, center)
        .into_iter()
        .map(|t| (t, counts.get(&t).copied().unwrap_or(0).min(n_max)))
        .collect()
}

/// Filter output for one interval, stamped at the interval midpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackStep {
    pub index: usize,
    pub t: f64,
    pub estimate: Point,
    /// Centroid of the active subgraph, if any twin jumped.
    pub coarse: Option<Point>,
    pub component_count: usize,
    pub observed: usize,
    pub diverged: bool,
}

/// Particle filter state over one run. All random draws come from a single
/// stream in a fixed order; only likelihood evaluation runs in parallel.
pub struct Tracker<'a> {
    grid: &'a TwinsGrid,
    fingerprint: &'a Fingerprint,
    config: TrackerConfig,
    exec: Execution,
    rng: SimRng,
    area: Area,
    particles: Vec<Particle>,
    estimate: Point,
    index: usize,
}

impl<'a> Tracker<'a> {
    pub fn new(
        grid: &'a TwinsGrid,
        fingerprint: &'a Fingerprint,
        config: TrackerConfig,
        seed: u64,
        exec: Execution,
    ) -> Result<Self> {
        if fingerprint.cell_count() != grid.lattice.len() {
            return Err(Error::config(format!(
                "fingerprint covers {} cells but the grid has {}",
                fingerprint.cell_count(),
                grid.lattice.len()
            )));
        }
        let area = Area {
            min: grid.lattice.origin,
            max: grid.lattice.origin + Point::new(grid.lattice.width(), grid.lattice.height()),
        };
        if !area.contains(config.origin) {
            return Err(Error::config("tracker origin lies outside the area"));
        }
        let mut rng = rng::stream(seed, Domain::Filter, 0);
        let particles = pf_init(
            config.particles,
            config.origin,
            config.initial_velocity,
            config.spread,
            &mut rng,
        )?;
        Ok(Tracker {
            grid,
            fingerprint,
            config,
            exec,
            rng,
            area,
            particles,
            estimate: config.origin,
            index: 0,
        })
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    /// Predict, weight, resample and estimate for the next interval.
    pub fn step(&mut self, counts: &BTreeMap<TwinId, u32>) -> Result<TrackStep> {
        let dt = self.fingerprint.interval;
        // The cloud starts at t = 0; every estimate is for an interval midpoint.
        let step = if self.index == 0 { 0.5 * dt } else { dt };
        pf_predict(
            &mut self.particles,
            step,
            self.config.noise,
            self.area,
            &mut self.rng,
        );

        let region = locate(self.grid, counts.keys().copied(), Some(self.estimate));
        let center = region.as_ref().map_or(self.estimate, |r| r.centroid);
        let obs = observe(
            counts,
            center,
            self.grid,
            self.fingerprint.scope,
            self.fingerprint.n_max,
        );

        let lattice = &self.grid.lattice;
        let fp = self.fingerprint;
        let ok = pf_weight(&mut self.particles, self.exec, |p| {
            fp.log_likelihood(lattice.nearest_cell(p.position), &obs)
        });
        let diverged = !ok;
        if diverged {
            let cells: Vec<Area> = match &region {
                Some(r) => r.cells.iter().map(|&c| self.cell_area(c)).collect(),
                None => (0..lattice.len())
                    .map(|c| self.cell_area(crate::env::CellId(c)))
                    .collect(),
            };
            log::warn!(
                "interval {}: all particle weights vanished, reseeding",
                self.index
            );
            self.particles = pf_reseed(self.config.particles, &cells, &mut self.rng)?;
        } else {
            self.particles = pf_resample(&self.particles, &mut self.rng)?;
        }
        self.estimate = pf_estimate(&self.particles)?;

        let out = TrackStep {
            index: self.index,
            t: (self.index as f64 + 0.5) * dt,
            estimate: self.estimate,
            coarse: region.as_ref().map(|r| r.centroid),
            component_count: region.as_ref().map_or(0, |r| r.component_count),
            observed: obs.len(),
            diverged,
        };
        self.index += 1;
        Ok(out)
    }

    fn cell_area(&self, cell: crate::env::CellId) -> Area {
        let l = &self.grid.lattice;
        let c = l.center(cell);
        let half = Point::new(0.5 * l.cell_width, 0.5 * l.cell_height);
        Area {
            min: c - half,
            max: c + half,
        }
    }
}

/// Runs the filter over a sequence of intervals.
pub fn track(
    grid: &TwinsGrid,
    fingerprint: &Fingerprint,
    config: TrackerConfig,
    intervals: &[IntervalJumps],
    seed: u64,
    exec: Execution,
) -> Result<Vec<TrackStep>> {
    let mut tracker = Tracker::new(grid, fingerprint, config, seed, exec)?;
    intervals.iter().map(|i| tracker.step(&i.counts)).collect()
}
