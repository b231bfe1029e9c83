use serde::{Deserialize, Serialize};

use super::grid::{Lattice, ReaderRecord, TwinRecord, TwinsGrid};
use super::{ReaderId, TwinId};
use crate::coupling::TwinGeometry;
use crate::error::{Error, Result};
use crate::geom::Point;

/// Rows of shelving with one twin per cell near the bottom edge of each row
/// and readers on the far side of the aisle, each covering a block of
/// consecutive twins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShelfRows {
    pub columns: usize,
    pub rows: usize,
    pub cell_width: f64,
    pub cell_height: f64,
    /// Twin offset from the bottom edge of its row (m).
    pub twin_offset: f64,
    /// Reader offset from the bottom edge of the row it serves (m).
    pub reader_offset: f64,
    pub twins_per_reader: usize,
    /// Half width of the reader main lobe (degrees).
    pub lobe_half_angle_deg: f64,
    pub mount_height: f64,
}

impl Default for ShelfRows {
    fn default() -> Self {
        ShelfRows {
            columns: 50,
            rows: 10,
            cell_width: 0.6,
            cell_height: 2.0,
            twin_offset: 0.05,
            reader_offset: 1.95,
            twins_per_reader: 3,
            lobe_half_angle_deg: 35.0,
            mount_height: 0.75,
        }
    }
}

impl ShelfRows {
    pub fn build(&self, geometry: TwinGeometry) -> Result<TwinsGrid> {
        if self.twins_per_reader == 0 {
            return Err(Error::config("twins_per_reader must be at least 1"));
        }
        if !(self.twin_offset >= 0.0 && self.twin_offset < self.cell_height) {
            return Err(Error::config("twin_offset must lie inside the cell"));
        }
        let lattice = Lattice::new(self.columns, self.rows, self.cell_width, self.cell_height)?;
        let mut twins = Vec::with_capacity(lattice.len());
        let mut readers = Vec::new();
        let half = self.lobe_half_angle_deg.to_radians();
        for row in 0..self.rows {
            let base = lattice.origin.y + row as f64 * self.cell_height;
            for block in (0..self.columns).step_by(self.twins_per_reader) {
                let end = (block + self.twins_per_reader).min(self.columns);
                let mid = lattice.origin.x + 0.5 * (block + end) as f64 * self.cell_width;
                let reader = ReaderId(readers.len());
                readers.push(ReaderRecord {
                    id: reader,
                    position: Point::new(mid, base + self.reader_offset),
                    boresight: Point::new(0.0, -1.0),
                    lobe_half_angle: half,
                });
                for col in block..end {
                    let position = Point::new(
                        lattice.origin.x + (col as f64 + 0.5) * self.cell_width,
                        base + self.twin_offset,
                    );
                    twins.push(TwinRecord {
                        id: TwinId(twins.len()),
                        cell: lattice.id(col, row),
                        position,
                        mount_height: self.mount_height,
                        reader,
                        geometry,
                    });
                }
            }
        }
        TwinsGrid::build(lattice, twins, readers)
    }
}
