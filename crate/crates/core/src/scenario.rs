//! Scenario files: a versioned JSON description of a deployment, the moving
//! object and the tracker settings.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coupling::{
    calibrate, CalibrationTargets, ExcitationModel, Placement, TagGeometry, TwinGeometry,
};
use crate::env::{
    CellId, DetectionProfile, Lattice, MovingObject, PollingConfig, ReaderId, ReaderRecord,
    ShelfRows, TwinId, TwinRecord, TwinsGrid, Warehouse,
};
use crate::error::{Error, Result};
use crate::geom::Point;
use crate::tracker::{TrackerConfig, TrainingConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// Walking speeds above this are rejected as implausible (m/s).
const MAX_SPEED: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwinSpec {
    /// Tag spacing `d` (m).
    pub separation: f64,
    pub placement: Placement,
}

impl Default for TwinSpec {
    fn default() -> Self {
        TwinSpec {
            separation: 0.010,
            placement: Placement::A,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitTwin {
    pub position: Point,
    pub reader: ReaderId,
    #[serde(default = "default_mount")]
    pub mount_height: f64,
}

fn default_mount() -> f64 {
    0.75
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitReader {
    pub position: Point,
    pub boresight: Point,
    pub lobe_half_angle_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Deployment {
    ShelfRows(ShelfRows),
    Explicit {
        columns: usize,
        rows: usize,
        cell_width: f64,
        cell_height: f64,
        twins: Vec<ExplicitTwin>,
        readers: Vec<ExplicitReader>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub path: Vec<Point>,
    pub speed: f64,
    pub height: f64,
    #[serde(default)]
    pub start: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationSpec {
    pub trials: usize,
}

impl Default for EvaluationSpec {
    fn default() -> Self {
        EvaluationSpec { trials: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub tag: TagGeometry,
    #[serde(default)]
    pub twin: TwinSpec,
    /// Targets the excitation model is fitted to.
    #[serde(default)]
    pub calibration: Option<CalibrationTargets>,
    /// An explicit excitation model; takes precedence over `calibration`.
    #[serde(default)]
    pub excitation: Option<ExcitationModel>,
    pub deployment: Deployment,
    #[serde(default)]
    pub detection: DetectionProfile,
    #[serde(default)]
    pub polling: PollingConfig,
    pub object: ObjectSpec,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub tracker: TrackerConfig,
    #[serde(default)]
    pub evaluation: EvaluationSpec,
}

/// A parsed scenario together with the digest of its source bytes.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub hash: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl Scenario {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        if s.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                column: 1,
                message: format!(
                    "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                    s.schema_version
                ),
            });
        }
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<LoadedScenario> {
        let bytes = fs::read(path)
            .map_err(|e| Error::Config(format!("cannot read scenario {}: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            column: 1,
            message: format!("not UTF-8: {e}"),
        })?;
        Ok(LoadedScenario {
            scenario: Scenario::parse(text, path)?,
            hash: sha256_hex(&bytes),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.twin_geometry()?;
        self.detection.validate()?;
        self.polling.timing()?;
        if self.object.path.is_empty() {
            return Err(Error::config("object path needs at least one point"));
        }
        if !(self.object.height > 0.0) {
            return Err(Error::config("object height must be positive"));
        }
        if self.tracker.particles == 0 {
            return Err(Error::config("tracker needs at least one particle"));
        }
        if self.training.runs == 0 {
            return Err(Error::config("training needs at least one run per cell"));
        }
        Ok(())
    }

    pub fn twin_geometry(&self) -> Result<TwinGeometry> {
        TwinGeometry::new(self.tag, self.twin.separation, self.twin.placement)
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// The excitation model: explicit if given, otherwise fitted to the
    /// calibration targets.
    pub fn excitation(&self) -> Result<ExcitationModel> {
        match (&self.excitation, &self.calibration) {
            (Some(ex), _) => {
                ex.validate().map_err(|e| Error::Config(e.to_string()))?;
                Ok(*ex)
            }
            (None, Some(targets)) => {
                calibrate(&self.tag, targets).map_err(|e| Error::Config(e.to_string()))
            }
            (None, None) => Err(Error::config(
                "missing env calibration: scenario needs `calibration` or `excitation`",
            )),
        }
    }

    pub fn grid(&self) -> Result<TwinsGrid> {
        let geometry = self.twin_geometry()?;
        match &self.deployment {
            Deployment::ShelfRows(layout) => layout.build(geometry),
            Deployment::Explicit {
                columns,
                rows,
                cell_width,
                cell_height,
                twins,
                readers,
            } => {
                let lattice = Lattice::new(*columns, *rows, *cell_width, *cell_height)?;
                let readers = readers
                    .iter()
                    .enumerate()
                    .map(|(i, r)| ReaderRecord {
                        id: ReaderId(i),
                        position: r.position,
                        boresight: r.boresight,
                        lobe_half_angle: r.lobe_half_angle_deg.to_radians(),
                    })
                    .collect();
                let twins = twins
                    .iter()
                    .enumerate()
                    .map(|(i, t)| {
                        let cell = lattice.cell_of(t.position).ok_or_else(|| {
                            Error::config(format!(
                                "twin {i} at ({}, {}) is outside the grid",
                                t.position.x, t.position.y
                            ))
                        })?;
                        Ok(TwinRecord {
                            id: TwinId(i),
                            cell: CellId(cell.0),
                            position: t.position,
                            mount_height: t.mount_height,
                            reader: t.reader,
                            geometry,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                TwinsGrid::build(lattice, twins, readers)
            }
        }
    }

    pub fn warehouse(&self) -> Result<Warehouse> {
        let ex = self.excitation()?;
        let grid = self.grid()?;
        let timing = self.polling.timing()?;
        let over: Vec<String> = grid
            .readers()
            .iter()
            .filter(|r| timing.spills(grid.twins_of(r.id).len()))
            .map(|r| r.id.to_string())
            .collect();
        if !over.is_empty() {
            log::warn!(
                "readers {} have more twins than fit in one interval ({} queries)",
                over.join(","),
                timing.interval_us / timing.query_us
            );
        }
        Warehouse::new(grid, ex, self.detection.clone(), self.polling)
    }

    pub fn object(&self) -> Result<MovingObject> {
        let o = &self.object;
        if o.path.len() == 1 {
            return Ok(MovingObject::stationary(o.path[0], o.height));
        }
        if !(o.speed > 0.0 && o.speed <= MAX_SPEED) {
            return Err(Error::config(format!(
                "object speed must lie in (0, {MAX_SPEED}] m/s"
            )));
        }
        MovingObject::walking(&o.path, o.speed, o.start, o.height)
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// Every twin remounted at `h`.
    pub fn with_mount_height(&self, h: f64) -> Scenario {
        let mut s = self.clone();
        match &mut s.deployment {
            Deployment::ShelfRows(layout) => layout.mount_height = h,
            Deployment::Explicit { twins, .. } => twins.iter_mut().for_each(|t| t.mount_height = h),
        }
        s
    }

    /// Resolves the run seed: the command line wins over the file.
    pub fn seed(&self, cli: Option<u64>) -> Result<u64> {
        cli.or(self.seed).ok_or_else(|| {
            Error::config("no seed given: pass --seed or set `seed` in the scenario")
        })
    }
}
