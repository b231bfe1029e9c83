use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub position: Point,
    /// Arrival time (s).
    pub t: f64,
}

/// A person walking a piecewise-linear path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovingObject {
    waypoints: Vec<Waypoint>,
    /// Body height (m).
    pub height: f64,
}

impl MovingObject {
    /// Validates strictly increasing times and implied speeds `<= max_speed`.
    pub fn new(waypoints: Vec<Waypoint>, height: f64, max_speed: f64) -> Result<Self> {
        if waypoints.is_empty() {
            return Err(Error::config("trajectory needs at least one waypoint"));
        }
        if !(height > 0.0) {
            return Err(Error::config("object height must be positive"));
        }
        for w in waypoints.windows(2) {
            let dt = w[1].t - w[0].t;
            if !(dt > 0.0) {
                return Err(Error::config(format!(
                    "waypoint times must increase strictly ({} then {})",
                    w[0].t, w[1].t
                )));
            }
            let v = w[0].position.distance(w[1].position) / dt;
            if v > max_speed * (1.0 + 1e-9) {
                return Err(Error::config(format!(
                    "leg speed {v:.3} m/s exceeds the maximum {max_speed} m/s"
                )));
            }
        }
        Ok(MovingObject { waypoints, height })
    }

    /// Walks `path` at constant `speed`, starting at `start`.
    pub fn walking(path: &[Point], speed: f64, start: f64, height: f64) -> Result<Self> {
        if !(speed > 0.0) {
            return Err(Error::config("walking speed must be positive"));
        }
        let mut t = start;
        let mut waypoints = Vec::with_capacity(path.len());
        for (i, &p) in path.iter().enumerate() {
            if i > 0 {
                t += path[i - 1].distance(p) / speed;
            }
            waypoints.push(Waypoint { position: p, t });
        }
        Self::new(waypoints, height, speed)
    }

    /// Standing still at `p` forever.
    pub fn stationary(p: Point, height: f64) -> Self {
        MovingObject {
            waypoints: vec![Waypoint {
                position: p,
                t: 0.0,
            }],
            height,
        }
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn is_stationary(&self) -> bool {
        self.waypoints.len() == 1
    }

    pub fn start_time(&self) -> f64 {
        self.waypoints[0].t
    }

    pub fn end_time(&self) -> f64 {
        self.waypoints[self.waypoints.len() - 1].t
    }

    /// Position at time `t`, interpolated linearly between waypoints.
    pub fn position_at(&self, t: f64) -> Result<Point> {
        if self.is_stationary() {
            return Ok(self.waypoints[0].position);
        }
        let (start, end) = (self.start_time(), self.end_time());
        if !(t >= start && t <= end) {
            return Err(Error::OutOfSpan { t, start, end });
        }
        let i = self.waypoints.partition_point(|w| w.t <= t);
        if i == self.waypoints.len() {
            return Ok(self.waypoints[i - 1].position);
        }
        let (a, b) = (self.waypoints[i - 1], self.waypoints[i]);
        let s = (t - a.t) / (b.t - a.t);
        Ok(a.position + (b.position - a.position) * s)
    }

    /// Like [`position_at`](Self::position_at) but holds the end points
    /// outside the span.
    pub fn position_clamped(&self, t: f64) -> Point {
        let t = t.clamp(self.start_time(), self.end_time());
        self.position_at(t).unwrap_or(self.waypoints[0].position)
    }
}
