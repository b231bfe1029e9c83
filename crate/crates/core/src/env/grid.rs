use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ReaderId, TwinId};
use crate::coupling::TwinGeometry;
use crate::error::{Error, Result};
use crate::geom::Point;

/// Index of a lattice cell, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellId(pub usize);

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Rectangular lattice of cells. Every cell is a vertex of the grid graph;
/// edges join 4-neighbours.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub columns: usize,
    pub rows: usize,
    pub cell_width: f64,
    pub cell_height: f64,
    #[serde(default)]
    pub origin: Point,
}

impl Lattice {
    pub fn new(columns: usize, rows: usize, cell_width: f64, cell_height: f64) -> Result<Self> {
        let l = Lattice {
            columns,
            rows,
            cell_width,
            cell_height,
            origin: Point::ORIGIN,
        };
        l.validate()?;
        Ok(l)
    }

    /// Square cells of edge `edge`.
    pub fn square(columns: usize, rows: usize, edge: f64) -> Result<Self> {
        Self::new(columns, rows, edge, edge)
    }

    pub fn validate(&self) -> Result<()> {
        if self.columns == 0 || self.rows == 0 {
            return Err(Error::config("lattice needs at least one row and column"));
        }
        if !(self.cell_width > 0.0 && self.cell_height > 0.0) {
            return Err(Error::config("cell edges must be positive"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.columns * self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> f64 {
        self.columns as f64 * self.cell_width
    }

    pub fn height(&self) -> f64 {
        self.rows as f64 * self.cell_height
    }

    pub fn id(&self, col: usize, row: usize) -> CellId {
        CellId(row * self.columns + col)
    }

    pub fn coords(&self, cell: CellId) -> (usize, usize) {
        (cell.0 % self.columns, cell.0 / self.columns)
    }

    pub fn center(&self, cell: CellId) -> Point {
        let (c, r) = self.coords(cell);
        self.origin
            + Point::new(
                (c as f64 + 0.5) * self.cell_width,
                (r as f64 + 0.5) * self.cell_height,
            )
    }

    /// The cell containing `p`, or `None` outside the lattice.
    pub fn cell_of(&self, p: Point) -> Option<CellId> {
        let q = p - self.origin;
        let c = (q.x / self.cell_width).floor();
        let r = (q.y / self.cell_height).floor();
        if c < 0.0 || r < 0.0 || c >= self.columns as f64 || r >= self.rows as f64 || !q.is_finite()
        {
            return None;
        }
        Some(self.id(c as usize, r as usize))
    }

    /// The cell containing `p`, clamping points outside onto the border.
    pub fn nearest_cell(&self, p: Point) -> CellId {
        let q = p - self.origin;
        let c = (q.x / self.cell_width)
            .floor()
            .clamp(0.0, (self.columns - 1) as f64);
        let r = (q.y / self.cell_height)
            .floor()
            .clamp(0.0, (self.rows - 1) as f64);
        self.id(c as usize, r as usize)
    }

    /// 4-neighbours in the fixed order left, right, down, up.
    pub fn neighbors(&self, cell: CellId) -> impl Iterator<Item = CellId> + '_ {
        let (c, r) = self.coords(cell);
        let cands = [
            (c > 0).then(|| (c - 1, r)),
            (c + 1 < self.columns).then(|| (c + 1, r)),
            (r > 0).then(|| (c, r - 1)),
            (r + 1 < self.rows).then(|| (c, r + 1)),
        ];
        cands.into_iter().flatten().map(move |(c, r)| self.id(c, r))
    }

    pub fn are_adjacent(&self, a: CellId, b: CellId) -> bool {
        let (ac, ar) = self.coords(a);
        let (bc, br) = self.coords(b);
        ac.abs_diff(bc) + ar.abs_diff(br) == 1
    }

    pub fn contains(&self, p: Point) -> bool {
        self.cell_of(p).is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinRecord {
    pub id: TwinId,
    pub cell: CellId,
    pub position: Point,
    /// Height of the pair above the floor (m).
    pub mount_height: f64,
    pub reader: ReaderId,
    pub geometry: TwinGeometry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReaderRecord {
    pub id: ReaderId,
    pub position: Point,
    /// Unit vector along the antenna's main lobe.
    pub boresight: Point,
    /// Half of the main lobe width (rad).
    pub lobe_half_angle: f64,
}

impl ReaderRecord {
    pub fn covers(&self, p: Point) -> bool {
        let v = p - self.position;
        let n = v.norm();
        if n == 0.0 {
            return false;
        }
        let cos = v.dot(self.boresight) / (n * self.boresight.norm());
        cos >= self.lobe_half_angle.cos() - 1e-12
    }
}

/// The deployment graph: lattice cells, the twins mounted in them and the
/// readers interrogating them.
#[derive(Debug, Clone)]
pub struct TwinsGrid {
    pub lattice: Lattice,
    twins: Vec<TwinRecord>,
    readers: Vec<ReaderRecord>,
    cell_twin: Vec<Option<TwinId>>,
    by_reader: BTreeMap<ReaderId, Vec<TwinId>>,
}

impl TwinsGrid {
    /// Validates and indexes a deployment. Twin ids must be `0..n` in order
    /// and reader ids `0..m`; cells are derived from positions.
    pub fn build(
        lattice: Lattice,
        twins: Vec<TwinRecord>,
        readers: Vec<ReaderRecord>,
    ) -> Result<Self> {
        lattice.validate()?;
        for (i, r) in readers.iter().enumerate() {
            if r.id != ReaderId(i) {
                return Err(Error::config(format!(
                    "reader ids must be sequential, found {} at {i}",
                    r.id
                )));
            }
            if !(r.boresight.norm() > 0.0) || !(r.lobe_half_angle > 0.0) {
                return Err(Error::config(format!(
                    "reader {} needs a boresight and a positive lobe",
                    r.id
                )));
            }
        }
        let mut cell_twin = vec![None; lattice.len()];
        let mut by_reader: BTreeMap<ReaderId, Vec<TwinId>> = BTreeMap::new();
        let mut uncovered = Vec::new();
        for (i, t) in twins.iter().enumerate() {
            if t.id != TwinId(i) {
                return Err(Error::config(format!(
                    "twin ids must be sequential, found {} at {i}",
                    t.id
                )));
            }
            t.geometry.validate()?;
            let cell = lattice.cell_of(t.position).ok_or_else(|| {
                Error::config(format!(
                    "twin {} at ({}, {}) is outside the grid",
                    t.id, t.position.x, t.position.y
                ))
            })?;
            if cell != t.cell {
                return Err(Error::config(format!(
                    "twin {} is recorded in cell {} but lies in {cell}",
                    t.id, t.cell
                )));
            }
            if let Some(other) = cell_twin[cell.0] {
                return Err(Error::config(format!(
                    "twins {other} and {} share cell {cell}",
                    t.id
                )));
            }
            cell_twin[cell.0] = Some(t.id);
            let reader = readers.get(t.reader.0).ok_or_else(|| {
                Error::config(format!(
                    "twin {} references unknown reader {}",
                    t.id, t.reader
                ))
            })?;
            if !reader.covers(t.position) {
                uncovered.push(t.id.to_string());
            }
            by_reader.entry(t.reader).or_default().push(t.id);
        }
        if !uncovered.is_empty() {
            return Err(Error::config(format!(
                "twins outside their reader's main lobe: {}",
                uncovered.join(", ")
            )));
        }
        Ok(TwinsGrid {
            lattice,
            twins,
            readers,
            cell_twin,
            by_reader,
        })
    }

    pub fn twins(&self) -> &[TwinRecord] {
        &self.twins
    }

    pub fn readers(&self) -> &[ReaderRecord] {
        &self.readers
    }

    pub fn twin(&self, id: TwinId) -> Result<&TwinRecord> {
        self.twins.get(id.0).ok_or(Error::UnknownTwin(id))
    }

    pub fn reader_of(&self, id: TwinId) -> Result<&ReaderRecord> {
        let t = self.twin(id)?;
        Ok(&self.readers[t.reader.0])
    }

    /// Twin–reader distance `D`.
    pub fn reader_distance(&self, id: TwinId) -> Result<f64> {
        let t = self.twin(id)?;
        Ok(t.position.distance(self.readers[t.reader.0].position))
    }

    pub fn twin_at(&self, cell: CellId) -> Option<TwinId> {
        self.cell_twin.get(cell.0).copied().flatten()
    }

    /// Twins interrogated by `reader`, ascending id.
    pub fn twins_of(&self, reader: ReaderId) -> &[TwinId] {
        self.by_reader
            .get(&reader)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Twins in the 4-neighbouring cells of `id`'s cell.
    pub fn neighbor_twins(&self, id: TwinId) -> impl Iterator<Item = TwinId> + '_ {
        let cell = self.twins[id.0].cell;
        self.lattice.neighbors(cell).filter_map(|c| self.twin_at(c))
    }

    /// Representative position of a cell: its twin if it has one, otherwise
    /// its centre.
    pub fn cell_position(&self, cell: CellId) -> Point {
        match self.twin_at(cell) {
            Some(t) => self.twins[t.0].position,
            None => self.lattice.center(cell),
        }
    }

    /// Twins whose position is within `radius` of `p`, ascending id.
    pub fn twins_within(&self, p: Point, radius: f64) -> Vec<TwinId> {
        self.twins
            .iter()
            .filter(|t| t.position.distance(p) <= radius)
            .map(|t| t.id)
            .collect()
    }
}
