use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Point;

/// Where an object stands relative to one twin and its reader.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    /// Inside the rectangle between the twin and its reader.
    Front,
    /// Within range on the far side of the twin.
    Behind,
    Outside,
}

/// Per-query jump probabilities and the geometry of the sensitive regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionProfile {
    pub p_front: f64,
    pub p_behind: f64,
    /// Ambient false-jump probability per query.
    pub p_false: f64,
    /// Length of the front rectangle along the twin–reader segment (m).
    pub front_length: f64,
    /// Width of the front rectangle (m).
    pub front_width: f64,
    /// Reach behind the twin (m).
    pub behind_range: f64,
    /// `(object height m, multiplier)` knots, linear in between.
    pub height_curve: Vec<(f64, f64)>,
    /// `(mount height m, multiplier)` knots, linear in between.
    pub mount_curve: Vec<(f64, f64)>,
}

impl Default for DetectionProfile {
    fn default() -> Self {
        DetectionProfile {
            p_front: 0.95,
            p_behind: 0.45,
            p_false: 3e-4,
            front_length: 2.0,
            front_width: 1.0,
            behind_range: 1.0,
            height_curve: vec![(1.60, 0.85), (1.70, 0.92), (1.80, 0.97)],
            mount_curve: vec![(0.50, 0.80), (0.75, 1.00), (1.00, 0.80)],
        }
    }
}

/// Piecewise-linear interpolation through `knots`, extrapolating the end
/// segments and clamping to `[0, 1]`.
fn interpolate(knots: &[(f64, f64)], x: f64) -> f64 {
    let y = match knots {
        [] => 1.0,
        [(_, y)] => *y,
        _ => {
            let i = knots
                .partition_point(|k| k.0 <= x)
                .clamp(1, knots.len() - 1);
            let ((x0, y0), (x1, y1)) = (knots[i - 1], knots[i]);
            y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        }
    };
    y.clamp(0.0, 1.0)
}

impl DetectionProfile {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_front", self.p_front),
            ("p_behind", self.p_behind),
            ("p_false", self.p_false),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if !(self.front_length > 0.0 && self.front_width > 0.0 && self.behind_range > 0.0) {
            return Err(Error::config("region extents must be positive"));
        }
        for (name, curve) in [
            ("height_curve", &self.height_curve),
            ("mount_curve", &self.mount_curve),
        ] {
            if curve.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                return Err(Error::config(format!(
                    "{name} knots must be strictly increasing"
                )));
            }
        }
        Ok(())
    }

    pub fn height_factor(&self, object_height: f64) -> f64 {
        interpolate(&self.height_curve, object_height)
    }

    pub fn mount_factor(&self, mount_height: f64) -> f64 {
        interpolate(&self.mount_curve, mount_height)
    }

    /// Probability that one query of a twin in its critical state finds it
    /// jumping.
    pub fn jump_probability(&self, region: Region, object_height: f64, mount_height: f64) -> f64 {
        let scale = self.height_factor(object_height) * self.mount_factor(mount_height);
        match region {
            Region::Front => self.p_front * scale,
            Region::Behind => self.p_behind * scale,
            Region::Outside => self.p_false,
        }
    }
}

/// Classifies `object` against the twin at `twin` interrogated from
/// `reader`. The front rectangle starts at the twin, runs towards the reader
/// for `min(front_length, D)` and is `front_width` wide, centred on the
/// segment. Behind is the half-disc of radius `behind_range` on the far
/// side.
pub fn in_effective_region(
    profile: &DetectionProfile,
    twin: Point,
    reader: Point,
    object: Point,
) -> Region {
    let axis = reader - twin;
    let d = axis.norm();
    if d == 0.0 {
        return Region::Outside;
    }
    let u = axis / d;
    let rel = object - twin;
    let along = rel.dot(u);
    let lateral = rel.dot(u.perp()).abs();
    if along >= 0.0 && along <= profile.front_length.min(d) && lateral <= profile.front_width / 2.0
    {
        Region::Front
    } else if along < 0.0 && rel.norm() <= profile.behind_range {
        Region::Behind
    } else {
        Region::Outside
    }
}
