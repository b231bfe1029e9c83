use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::env::{CellId, MovingObject, ReaderId, TwinId, TwinsGrid, Warehouse};
use crate::error::{Error, Result};
use crate::geom::Point;
use crate::par::{self, Execution};
use crate::rng::{self, Domain};

const HEADER: &str = "# twins-fingerprint v1";

/// Which twins make up an observation around a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ObservationScope {
    /// Twins within `radius` metres.
    Radius { radius: f64 },
    /// Twins in the 3×3 block of cells centred on the point's cell.
    Patch,
}

impl Default for ObservationScope {
    fn default() -> Self {
        ObservationScope::Radius { radius: 1.5 }
    }
}

impl ObservationScope {
    pub fn twins(&self, grid: &TwinsGrid, p: Point) -> Vec<TwinId> {
        match *self {
            ObservationScope::Radius { radius } => grid.twins_within(p, radius),
            ObservationScope::Patch => {
                let lattice = &grid.lattice;
                let (c, r) = lattice.coords(lattice.nearest_cell(p));
                let mut out = Vec::new();
                for row in r.saturating_sub(1)..=(r + 1).min(lattice.rows - 1) {
                    for col in c.saturating_sub(1)..=(c + 1).min(lattice.columns - 1) {
                        out.extend(grid.twin_at(lattice.id(col, row)));
                    }
                }
                out.sort_unstable();
                out
            }
        }
    }

    fn describe(&self) -> String {
        match self {
            ObservationScope::Radius { radius } => format!("radius:{radius}"),
            ObservationScope::Patch => "patch".into(),
        }
    }

    fn parse(s: &str) -> Option<Self> {
        if s == "patch" {
            return Some(ObservationScope::Patch);
        }
        let radius = s.strip_prefix("radius:")?.parse().ok()?;
        Some(ObservationScope::Radius { radius })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    /// Intervals simulated per cell.
    pub runs: usize,
    pub n_max: u32,
    /// Laplace pseudo-count added to every bin.
    pub alpha: f64,
    pub scope: ObservationScope,
    /// Height of the training object (m).
    pub object_height: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            runs: 50,
            n_max: 10,
            alpha: 1.0,
            scope: ObservationScope::default(),
            object_height: 1.70,
        }
    }
}

/// Smoothed jump-count histograms per (cell, in-scope twin), plus a shared
/// background histogram for twins outside a cell's scope.
#[derive(Debug, Clone, PartialEq)]
pub struct Fingerprint {
    pub interval: f64,
    pub runs: usize,
    pub n_max: u32,
    pub alpha: f64,
    pub scope: ObservationScope,
    cells: Vec<BTreeMap<TwinId, Vec<f64>>>,
    background: Vec<f64>,
    log_cells: Vec<BTreeMap<TwinId, Vec<f64>>>,
    log_background: Vec<f64>,
}

fn smooth(counts: &[u64], alpha: f64) -> Vec<f64> {
    let total = counts.iter().sum::<u64>() as f64 + alpha * counts.len() as f64;
    counts.iter().map(|&c| (c as f64 + alpha) / total).collect()
}

fn logs(h: &[f64]) -> Vec<f64> {
    h.iter().map(|p| p.ln()).collect()
}

impl Fingerprint {
    /// Builds a fingerprint from already-normalised histograms.
    pub fn from_histograms(
        interval: f64,
        runs: usize,
        n_max: u32,
        alpha: f64,
        scope: ObservationScope,
        cells: Vec<BTreeMap<TwinId, Vec<f64>>>,
        background: Vec<f64>,
    ) -> Result<Self> {
        let bins = n_max as usize + 1;
        let check = |h: &[f64], what: &str| -> Result<()> {
            let sum: f64 = h.iter().sum();
            if h.len() != bins || (sum - 1.0).abs() > 1e-9 || h.iter().any(|p| !(*p > 0.0)) {
                return Err(Error::arg(format!(
                    "{what}: histogram must have {bins} positive bins summing to 1"
                )));
            }
            Ok(())
        };
        check(&background, "background")?;
        for (c, m) in cells.iter().enumerate() {
            for (t, h) in m {
                check(h, &format!("cell {c} twin {t}"))?;
            }
        }
        let log_cells = cells
            .iter()
            .map(|m| m.iter().map(|(t, h)| (*t, logs(h))).collect())
            .collect();
        let log_background = logs(&background);
        Ok(Fingerprint {
            interval,
            runs,
            n_max,
            alpha,
            scope,
            cells,
            background,
            log_cells,
            log_background,
        })
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    /// In-scope histograms of `cell`.
    pub fn cell(&self, cell: CellId) -> Option<&BTreeMap<TwinId, Vec<f64>>> {
        self.cells.get(cell.0)
    }

    pub fn background(&self) -> &[f64] {
        &self.background
    }

    /// `P(n | cell)` for one twin, falling back to the background histogram.
    pub fn probability(&self, cell: CellId, twin: TwinId, n: u32) -> f64 {
        let bin = n.min(self.n_max) as usize;
        self.cells
            .get(cell.0)
            .and_then(|m| m.get(&twin))
            .map_or(self.background[bin], |h| h[bin])
    }

    /// `Σ log P(n_i | cell)` over the observation.
    pub fn log_likelihood(&self, cell: CellId, counts: &BTreeMap<TwinId, u32>) -> f64 {
        let own = self.log_cells.get(cell.0);
        counts
            .iter()
            .map(|(t, &n)| {
                let bin = n.min(self.n_max) as usize;
                own.and_then(|m| m.get(t))
                    .map_or(self.log_background[bin], |h| h[bin])
            })
            .sum()
    }

    /// Writes the table as text: a header, a metadata line, then one
    /// `cell,twin,bin,probability` row per bin. Background rows use `*`.
    pub fn write<W: Write>(&self, mut w: W, provenance: &str) -> Result<()> {
        writeln!(w, "{HEADER}")?;
        if !provenance.is_empty() {
            writeln!(w, "{provenance}")?;
        }
        writeln!(
            w,
            "# interval={} runs={} n_max={} alpha={} scope={} cells={}",
            self.interval,
            self.runs,
            self.n_max,
            self.alpha,
            self.scope.describe(),
            self.cells.len()
        )?;
        writeln!(w, "cell,twin,bin,probability")?;
        for (b, p) in self.background.iter().enumerate() {
            writeln!(w, "*,*,{b},{p}")?;
        }
        for (c, m) in self.cells.iter().enumerate() {
            for (t, h) in m {
                for (b, p) in h.iter().enumerate() {
                    writeln!(w, "{c},{t},{b},{p}")?;
                }
            }
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R, path: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.into(),
            line,
            column: 1,
            message,
        };
        let mut meta: BTreeMap<String, String> = BTreeMap::new();
        let mut seen_header = false;
        let mut rows: Vec<(usize, Option<(usize, usize)>, usize, f64)> = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let no = i + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if line == HEADER {
                    seen_header = true;
                } else {
                    for kv in rest.split_whitespace() {
                        if let Some((k, v)) = kv.split_once('=') {
                            meta.insert(k.to_string(), v.to_string());
                        }
                    }
                }
                continue;
            }
            if line == "cell,twin,bin,probability" {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(err(no, format!("expected 4 fields, found {}", f.len())));
            }
            let num = |s: &str| {
                s.parse::<usize>()
                    .map_err(|e| err(no, format!("bad integer {s:?}: {e}")))
            };
            let key = if f[0] == "*" && f[1] == "*" {
                None
            } else {
                Some((num(f[0])?, num(f[1])?))
            };
            let p: f64 = f[3]
                .parse()
                .map_err(|e| err(no, format!("bad probability {:?}: {e}", f[3])))?;
            rows.push((no, key, num(f[2])?, p));
        }
        if !seen_header {
            return Err(err(1, format!("missing `{HEADER}` header")));
        }
        let get = |k: &str| {
            meta.get(k)
                .ok_or_else(|| err(1, format!("missing metadata `{k}`")))
        };
        let parse_f = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| err(1, format!("bad metadata `{k}`")))
        };
        let parse_u = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| err(1, format!("bad metadata `{k}`")))
        };
        let interval = parse_f("interval")?;
        let runs = parse_u("runs")?;
        let n_max = parse_u("n_max")? as u32;
        let alpha = parse_f("alpha")?;
        let n_cells = parse_u("cells")?;
        let scope = ObservationScope::parse(get("scope")?)
            .ok_or_else(|| err(1, "bad metadata `scope`".into()))?;
        let bins = n_max as usize + 1;

        let mut background = vec![f64::NAN; bins];
        let mut cells: Vec<BTreeMap<TwinId, Vec<f64>>> = vec![BTreeMap::new(); n_cells];
        for (no, key, bin, p) in rows {
            if bin >= bins {
                return Err(err(no, format!("bin {bin} exceeds n_max {n_max}")));
            }
            match key {
                None => background[bin] = p,
                Some((c, t)) => {
                    let m = cells
                        .get_mut(c)
                        .ok_or_else(|| err(no, format!("cell {c} out of range")))?;
                    m.entry(TwinId(t)).or_insert_with(|| vec![f64::NAN; bins])[bin] = p;
                }
            }
        }
        Fingerprint::from_histograms(interval, runs, n_max, alpha, scope, cells, background)
            .map_err(|e| err(1, e.to_string()))
    }
}

/// Trains a fingerprint: for every cell a static object stands at the cell
/// centre for `config.runs` intervals while the readers of the in-scope twins
/// poll. Twins outside every trained scope feed the background histogram.
pub fn train_offline(
    warehouse: &Warehouse,
    config: &TrainingConfig,
    seed: u64,
    exec: Execution,
) -> Result<Fingerprint> {
    if config.runs == 0 {
        return Err(Error::arg("training needs at least one run per cell"));
    }
    if !(config.alpha > 0.0) {
        return Err(Error::arg("Laplace alpha must be positive"));
    }
    let grid = &warehouse.grid;
    let bins = config.n_max as usize + 1;
    let cells: Vec<CellId> = (0..grid.lattice.len()).map(CellId).collect();

    let per_cell = par::map(
        exec,
        &cells,
        |&cell| -> Result<(BTreeMap<TwinId, Vec<u64>>, Vec<u64>)> {
            let center = grid.lattice.center(cell);
            let scope = config.scope.twins(grid, center);
            let mut readers: Vec<ReaderId> = scope
                .iter()
                .map(|&t| grid.twin(t).map(|r| r.reader))
                .collect::<Result<_>>()?;
            readers.sort_unstable();
            readers.dedup();
            let object = MovingObject::stationary(center, config.object_height);
            let cell_seed = rng::stream(seed, Domain::Training, cell.0 as u64).next_u64();
            let out = warehouse.run_readers(
                &readers,
                Some(&object),
                config.runs,
                cell_seed,
                Execution::Sequential,
            )?;

            let mut own: BTreeMap<TwinId, Vec<u64>> =
                scope.iter().map(|&t| (t, vec![0; bins])).collect();
            let mut background = vec![0u64; bins];
            let others: Vec<TwinId> = readers
                .iter()
                .flat_map(|&r| grid.twins_of(r).iter().copied())
                .filter(|t| !own.contains_key(t))
                .collect();
            for interval in &out.intervals {
                let n = |t: &TwinId| {
                    interval
                        .counts
                        .get(t)
                        .copied()
                        .unwrap_or(0)
                        .min(config.n_max) as usize
                };
                for (t, h) in own.iter_mut() {
                    h[n(t)] += 1;
                }
                for t in &others {
                    background[n(t)] += 1;
                }
            }
            Ok((own, background))
        },
    );

    let mut cells_out = Vec::with_capacity(cells.len());
    let mut background = vec![0u64; bins];
    for res in per_cell {
        let (own, bg) = res?;
        for (b, n) in bg.into_iter().enumerate() {
            background[b] += n;
        }
        cells_out.push(
            own.into_iter()
                .map(|(t, h)| (t, smooth(&h, config.alpha)))
                .collect(),
        );
    }
    Fingerprint::from_histograms(
        warehouse.polling.interval,
        config.runs,
        config.n_max,
        config.alpha,
        config.scope,
        cells_out,
        smooth(&background, config.alpha),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{calibrate, CalibrationTargets, Placement, TagGeometry, TwinGeometry};
    use crate::env::{DetectionProfile, PollingConfig, ShelfRows};

    pub(crate) fn warehouse(profile: DetectionProfile) -> Warehouse {
        let tag = TagGeometry::default();
        let ex = calibrate(&tag, &CalibrationTargets::default()).unwrap();
        let layout = ShelfRows {
            columns: 10,
            rows: 3,
            ..ShelfRows::default()
        };
        let grid = layout
            .build(TwinGeometry::new(tag, 0.010, Placement::A).unwrap())
            .unwrap();
        Warehouse::new(grid, ex, profile, PollingConfig::default()).unwrap()
    }

    fn config(runs: usize) -> TrainingConfig {
        TrainingConfig {
            runs,
            ..TrainingConfig::default()
        }
    }

    #[test]
    fn histograms_are_normalised_without_zero_bins() {
        let w = warehouse(DetectionProfile::default());
        let fp = train_offline(&w, &config(20), 1, Execution::default()).unwrap();
        assert_eq!(fp.cell_count(), 30);
        for c in 0..fp.cell_count() {
            let m = fp.cell(CellId(c)).unwrap();
            assert!(!m.is_empty());
            for h in m.values() {
                assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(h.iter().all(|&p| p > 0.0));
            }
        }
    }

    #[test]
    fn quiet_training_puts_mass_at_zero() {
        let profile = DetectionProfile {
            p_false: 0.0,
            p_front: 0.0,
            p_behind: 0.0,
            ..DetectionProfile::default()
        };
        let w = warehouse(profile);
        let fp = train_offline(&w, &config(30), 2, Execution::default()).unwrap();
        // 30 zero counts plus alpha in each of 11 bins.
        let expect0 = 31.0 / 41.0;
        for m in (0..fp.cell_count()).filter_map(|c| fp.cell(CellId(c))) {
            for h in m.values() {
                assert!((h[0] - expect0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn object_in_front_shifts_mass_up() {
        let w = warehouse(DetectionProfile::default());
        let fp = train_offline(&w, &config(30), 3, Execution::default()).unwrap();
        let cell = w.grid.lattice.id(4, 0);
        let twin = w.grid.twin_at(cell).unwrap();
        let h = &fp.cell(cell).unwrap()[&twin];
        let high: f64 = h[1..].iter().sum();
        assert!(high > 0.5, "P(n >= 1) = {high}");
        assert!(fp.background()[0] > 0.5);
    }

    #[test]
    fn distant_twins_are_out_of_scope() {
        let w = warehouse(DetectionProfile::default());
        let fp = train_offline(&w, &config(5), 4, Execution::default()).unwrap();
        let a = w.grid.lattice.id(0, 0);
        let far = w.grid.twin_at(w.grid.lattice.id(9, 2)).unwrap();
        assert!(!fp.cell(a).unwrap().contains_key(&far));
        assert_eq!(fp.probability(a, far, 0), fp.background()[0]);
    }

    #[test]
    fn training_is_deterministic_across_execution_modes() {
        let w = warehouse(DetectionProfile::default());
        let a = train_offline(&w, &config(10), 5, Execution::Sequential).unwrap();
        let b = train_offline(&w, &config(10), 5, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn text_round_trip() {
        let w = warehouse(DetectionProfile::default());
        let fp = train_offline(&w, &config(10), 6, Execution::default()).unwrap();
        let mut buf = Vec::new();
        fp.write(&mut buf, "# scenario=abc seed=6").unwrap();
        let back = Fingerprint::read(&buf[..], "fp.csv").unwrap();
        assert_eq!(back, fp);
    }

    #[test]
    fn malformed_table_reports_line() {
        let text = format!("{HEADER}\n# interval=1 runs=1 n_max=1 alpha=1 scope=patch cells=1\n*,*,0,0.5\n*,*,1,oops\n");
        match Fingerprint::read(text.as_bytes(), "x.csv") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn patch_scope_is_three_by_three() {
        let w = warehouse(DetectionProfile::default());
        let centre = w.grid.lattice.center(w.grid.lattice.id(4, 1));
        assert_eq!(ObservationScope::Patch.twins(&w.grid, centre).len(), 9);
        let corner = w.grid.lattice.center(w.grid.lattice.id(0, 0));
        assert_eq!(ObservationScope::Patch.twins(&w.grid, corner).len(), 4);
    }
}
