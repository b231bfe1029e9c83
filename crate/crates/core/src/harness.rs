//! The CLI verbs: simulate, sweep, train, track and evaluate. Each writes
//! plain CSV/JSON into an output directory; every file starts with the
//! scenario hash and seed.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::coupling::{critical_window, min_activation_power, Placement, Role};
use crate::env::{
    in_effective_region, GroundTruthSample, IntervalJumps, QueryOutcome, QueryRecord, ReaderId,
    Region, TwinId, Warehouse,
};
use crate::error::{Error, Result};
use crate::geom::Point;
use crate::output::{csv_reader, fmt_f64, fmt_opt, provenance, CsvOut};
use crate::par::{self, Execution};
use crate::rng;
use crate::scenario::{LoadedScenario, Scenario};
use crate::scheduler::PollTiming;
use crate::tracker::{track, train_offline, Fingerprint, TrackStep};

/// Shared arguments of every verb.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub scenario: LoadedScenario,
    pub seed: u64,
    pub out: PathBuf,
    pub exec: Execution,
}

impl RunContext {
    pub fn new(
        scenario_path: &Path,
        seed: Option<u64>,
        out: &Path,
        exec: Execution,
    ) -> Result<Self> {
        let scenario = Scenario::load(scenario_path)?;
        let seed = scenario.scenario.seed(seed)?;
        fs::create_dir_all(out).map_err(|e| {
            Error::Config(format!(
                "cannot create output directory {}: {e}",
                out.display()
            ))
        })?;
        Ok(RunContext {
            scenario,
            seed,
            out: out.to_path_buf(),
            exec,
        })
    }

    fn s(&self) -> &Scenario {
        &self.scenario.scenario
    }

    fn provenance(&self) -> String {
        provenance(&self.scenario.hash, self.seed)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn csv(&self, name: &str, columns: &[&str]) -> Result<CsvOut> {
        CsvOut::create(&self.path(name), &self.provenance(), columns)
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        #[derive(Serialize)]
        struct Wrapped<'a, T> {
            scenario: &'a str,
            seed: u64,
            #[serde(flatten)]
            body: &'a T,
        }
        let mut w = BufWriter::new(File::create(self.path(name))?);
        let wrapped = Wrapped {
            scenario: &self.scenario.hash,
            seed: self.seed,
            body: value,
        };
        serde_json::to_writer_pretty(&mut w, &wrapped).map_err(|e| Error::Io(e.into()))?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

/// Rounds to the 9 significant digits used in every output file.
fn r9(x: f64) -> f64 {
    fmt_f64(x).parse().unwrap_or(x)
}

/// Ground-truth trace with linear interpolation between samples.
#[derive(Debug, Clone)]
pub struct GroundTruth(pub Vec<GroundTruthSample>);

impl GroundTruth {
    pub fn at(&self, t: f64) -> Option<Point> {
        let s = &self.0;
        let first = s.first()?;
        if t <= first.t {
            return Some(first.position);
        }
        let i = s.partition_point(|g| g.t <= t);
        if i >= s.len() {
            return s.last().map(|g| g.position);
        }
        let (a, b) = (&s[i - 1], &s[i]);
        let f = (t - a.t) / (b.t - a.t);
        Some(a.position + (b.position - a.position) * f)
    }
}

/// Rebuilds the per-interval jump counts from a query trace.
pub fn intervals_from_queries(
    queries: &[QueryRecord],
    timing: PollTiming,
    intervals: usize,
) -> Vec<IntervalJumps> {
    let mut out: Vec<IntervalJumps> = (0..intervals)
        .map(|index| IntervalJumps {
            index,
            ..IntervalJumps::default()
        })
        .collect();
    for q in queries
        .iter()
        .filter(|q| q.outcome == QueryOutcome::Jumping)
    {
        let k = (q.t_us / timing.interval_us) as usize;
        if let Some(slot) = out.get_mut(k) {
            *slot.counts.entry(q.twin).or_insert(0) += 1;
        }
    }
    out
}

/// Per-interval detection bookkeeping. An interval is covered when the
/// object stood in the front region of some twin while that twin was
/// queried, and detected when one of those queries came back jumping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct DetectionStats {
    pub covered_intervals: usize,
    pub detected_intervals: usize,
    pub front_queries: usize,
    pub front_jumps: usize,
}

impl DetectionStats {
    pub fn rate(&self) -> Option<f64> {
        (self.covered_intervals > 0)
            .then(|| self.detected_intervals as f64 / self.covered_intervals as f64)
    }

    pub fn query_rate(&self) -> Option<f64> {
        (self.front_queries > 0).then(|| self.front_jumps as f64 / self.front_queries as f64)
    }

    fn add(&mut self, o: &DetectionStats) {
        self.covered_intervals += o.covered_intervals;
        self.detected_intervals += o.detected_intervals;
        self.front_queries += o.front_queries;
        self.front_jumps += o.front_jumps;
    }
}

pub fn detection_stats(
    w: &Warehouse,
    truth: &GroundTruth,
    queries: &[QueryRecord],
    timing: PollTiming,
) -> Result<DetectionStats> {
    let mut covered: BTreeMap<u64, bool> = BTreeMap::new();
    let mut stats = DetectionStats::default();
    for q in queries {
        if q.outcome == QueryOutcome::NotInCriticalState {
            continue;
        }
        let Some(p) = truth.at(q.t()) else { continue };
        let twin = w.grid.twin(q.twin)?;
        let reader = w.grid.reader_of(q.twin)?;
        if in_effective_region(&w.profile, twin.position, reader.position, p) != Region::Front {
            continue;
        }
        stats.front_queries += 1;
        let hit = q.outcome == QueryOutcome::Jumping;
        stats.front_jumps += usize::from(hit);
        let slot = covered.entry(q.t_us / timing.interval_us).or_insert(false);
        *slot |= hit;
    }
    stats.covered_intervals = covered.len();
    stats.detected_intervals = covered.values().filter(|&&d| d).count();
    Ok(stats)
}

/// Outcome of tracking one trace.
#[derive(Debug, Clone)]
pub struct TrialResult {
    pub steps: Vec<TrackStep>,
    pub truth: Vec<Point>,
    pub errors: Vec<f64>,
    pub detection: DetectionStats,
    pub spills: usize,
}

impl TrialResult {
    pub fn mean_error(&self) -> f64 {
        if self.errors.is_empty() {
            f64::NAN
        } else {
            self.errors.iter().sum::<f64>() / self.errors.len() as f64
        }
    }

    pub fn max_error(&self) -> f64 {
        self.errors.iter().copied().fold(f64::NAN, f64::max)
    }

    pub fn divergences(&self) -> usize {
        self.steps.iter().filter(|s| s.diverged).count()
    }
}

/// Tracks a query trace against ground truth.
pub fn run_trace(
    w: &Warehouse,
    fp: &Fingerprint,
    scenario: &Scenario,
    queries: &[QueryRecord],
    truth: &GroundTruth,
    intervals: usize,
    seed: u64,
    exec: Execution,
) -> Result<TrialResult> {
    let timing = w.polling.timing()?;
    let jumps = intervals_from_queries(queries, timing, intervals);
    let steps = track(&w.grid, fp, scenario.tracker, &jumps, seed, exec)?;
    let truth_pts: Vec<Point> = steps
        .iter()
        .map(|s| truth.at(s.t).unwrap_or(s.estimate))
        .collect();
    let errors = steps
        .iter()
        .zip(&truth_pts)
        .map(|(s, t)| s.estimate.distance(*t))
        .collect();
    let detection = detection_stats(w, truth, queries, timing)?;
    let spills = spill_count(w, timing);
    Ok(TrialResult {
        steps,
        truth: truth_pts,
        errors,
        detection,
        spills,
    })
}

/// Readers whose round does not fit into one interval.
fn spill_count(w: &Warehouse, timing: PollTiming) -> usize {
    w.grid
        .readers()
        .iter()
        .filter(|r| timing.spills(w.grid.twins_of(r.id).len()))
        .count()
}

/// Simulates and tracks one trial entirely in memory.
pub fn run_trial(
    w: &Warehouse,
    fp: &Fingerprint,
    scenario: &Scenario,
    seed: u64,
    exec: Execution,
) -> Result<TrialResult> {
    let object = scenario.object()?;
    let duration = object.end_time();
    let sim = w.run(Some(&object), duration, seed, exec)?;
    let intervals = w.polling.intervals_for(duration);
    run_trace(
        w,
        fp,
        scenario,
        &sim.queries,
        &GroundTruth(sim.ground_truth),
        intervals,
        seed,
        exec,
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub intervals: usize,
    pub mean_error_m: f64,
    pub max_error_m: f64,
    /// `(quantile, error)` pairs at 5 % steps.
    pub error_cdf: Vec<(f64, f64)>,
    pub detection_rate: Option<f64>,
    pub front_query_rate: Option<f64>,
    pub detection: DetectionStats,
    pub spill_count: usize,
    pub divergences: usize,
}

fn cdf(errors: &[f64]) -> Vec<(f64, f64)> {
    let mut e: Vec<f64> = errors.to_vec();
    e.sort_by(f64::total_cmp);
    if e.is_empty() {
        return Vec::new();
    }
    (0..=20)
        .map(|k| {
            let q = k as f64 / 20.0;
            let i = ((q * (e.len() - 1) as f64).round() as usize).min(e.len() - 1);
            (q, r9(e[i]))
        })
        .collect()
}

impl RunReport {
    pub fn from_trial(t: &TrialResult) -> Self {
        RunReport {
            intervals: t.steps.len(),
            mean_error_m: r9(t.mean_error()),
            max_error_m: r9(t.max_error()),
            error_cdf: cdf(&t.errors),
            detection_rate: t.detection.rate().map(r9),
            front_query_rate: t.detection.query_rate().map(r9),
            detection: t.detection,
            spill_count: t.spills,
            divergences: t.divergences(),
        }
    }
}

fn load_fingerprint(path: &Path) -> Result<Fingerprint> {
    let f = File::open(path)
        .map_err(|e| Error::Config(format!("missing fingerprint {}: {e}", path.display())))?;
    Fingerprint::read(BufReader::new(f), &path.display().to_string())
}

fn fingerprint_for(ctx: &RunContext, w: &Warehouse, path: Option<&Path>) -> Result<Fingerprint> {
    match path {
        Some(p) => load_fingerprint(p),
        None => train_offline(w, &ctx.s().training, ctx.seed, ctx.exec),
    }
}

pub fn cmd_simulate(ctx: &RunContext) -> Result<()> {
    let start = Instant::now();
    let w = ctx.s().warehouse()?;
    let object = ctx.s().object()?;
    let sim = w.run(Some(&object), object.end_time(), ctx.seed, ctx.exec)?;

    let mut ev = ctx.csv("events.csv", &["t_s", "twin_id", "kind"])?;
    for e in &sim.events {
        ev.row([
            fmt_f64(e.t),
            e.twin.to_string(),
            e.kind.as_str().to_string(),
        ])?;
    }
    ev.finish()?;

    let mut gt = ctx.csv("ground_truth.csv", &["t_s", "x", "y"])?;
    for g in &sim.ground_truth {
        gt.row([fmt_f64(g.t), fmt_f64(g.position.x), fmt_f64(g.position.y)])?;
    }
    gt.finish()?;

    let mut q = ctx.csv(
        "queries.csv",
        &["t_s", "reader", "twin_id", "p_tx_dbm", "outcome"],
    )?;
    for r in &sim.queries {
        q.row([
            fmt_f64(r.t()),
            r.reader.to_string(),
            r.twin.to_string(),
            fmt_f64(r.power),
            r.outcome.as_str().to_string(),
        ])?;
    }
    q.finish()?;

    let mut j = ctx.csv("jsets.csv", &["interval", "t_s", "twin_id", "count"])?;
    for i in &sim.intervals {
        let t = i.index as f64 * w.polling.interval;
        for (twin, n) in &i.counts {
            j.row([
                i.index.to_string(),
                fmt_f64(t),
                twin.to_string(),
                n.to_string(),
            ])?;
        }
    }
    j.finish()?;

    let mut win = ctx.csv(
        "windows.csv",
        &[
            "twin_id",
            "reader",
            "d_reader_m",
            "lower_dbm",
            "upper_dbm",
            "p_tx_dbm",
        ],
    )?;
    for t in w.grid.twins() {
        let wd = w.window(t.id)?;
        win.row([
            t.id.to_string(),
            t.reader.to_string(),
            fmt_f64(w.grid.reader_distance(t.id)?),
            fmt_f64(wd.lower),
            fmt_f64(wd.upper),
            fmt_f64(w.powers()[t.id.0]),
        ])?;
    }
    win.finish()?;

    let spilled: usize = sim.intervals.iter().map(|i| i.spilled_readers).sum();
    if spilled > 0 {
        log::warn!("{spilled} reader intervals spilled past their interval end");
    }
    log::info!(
        "simulate: {} queries, {} events, {} intervals in {:.3} s",
        sim.queries.len(),
        sim.events.len(),
        sim.intervals.len(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

pub fn cmd_train(ctx: &RunContext) -> Result<()> {
    let start = Instant::now();
    let w = ctx.s().warehouse()?;
    let fp = train_offline(&w, &ctx.s().training, ctx.seed, ctx.exec)?;
    let mut f = BufWriter::new(File::create(ctx.path("fingerprint.csv"))?);
    fp.write(&mut f, &ctx.provenance())?;
    f.flush()?;
    log::info!(
        "train: {} cells in {:.3} s",
        fp.cell_count(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn read_queries(path: &Path) -> Result<Vec<QueryRecord>> {
    let bad = |line: u64, m: String| Error::Parse {
        path: path.to_path_buf(),
        line: line as usize,
        column: 1,
        message: m,
    };
    let mut out = Vec::new();
    let mut r = csv_reader(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 5 {
            return Err(bad(line, format!("expected 5 fields, found {}", rec.len())));
        }
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|e| bad(line, format!("field {}: {e}", i + 1)))
        };
        let int = |i: usize| -> Result<usize> {
            rec[i]
                .parse()
                .map_err(|e| bad(line, format!("field {}: {e}", i + 1)))
        };
        out.push(QueryRecord {
            t_us: (num(0)? * 1e6).round() as u64,
            reader: ReaderId(int(1)?),
            twin: TwinId(int(2)?),
            power: num(3)?,
            outcome: QueryOutcome::parse(&rec[4])
                .ok_or_else(|| bad(line, format!("unknown outcome {:?}", &rec[4])))?,
        });
    }
    Ok(out)
}

fn read_truth(path: &Path) -> Result<GroundTruth> {
    let mut out = Vec::new();
    let mut r = csv_reader(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line()) as usize;
        let f = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    column: 1,
                    message: format!("field {} is not a number", i + 1),
                })
        };
        out.push(GroundTruthSample {
            t: f(0)?,
            position: Point::new(f(1)?, f(2)?),
        });
    }
    Ok(GroundTruth(out))
}

fn write_trial(ctx: &RunContext, w: &Warehouse, t: &TrialResult) -> Result<()> {
    let mut traj = ctx.csv(
        "trajectory.csv",
        &["t_s", "x_est", "y_est", "x_true", "y_true", "error_m"],
    )?;
    for ((s, p), e) in t.steps.iter().zip(&t.truth).zip(&t.errors) {
        traj.row([
            fmt_f64(s.t),
            fmt_f64(s.estimate.x),
            fmt_f64(s.estimate.y),
            fmt_f64(p.x),
            fmt_f64(p.y),
            fmt_f64(*e),
        ])?;
    }
    traj.finish()?;
    let mut coarse = ctx.csv("coarse.csv", &["t_s", "x", "y", "component_count"])?;
    for s in &t.steps {
        coarse.row([
            fmt_f64(s.t),
            fmt_opt(s.coarse.map(|c| c.x)),
            fmt_opt(s.coarse.map(|c| c.y)),
            s.component_count.to_string(),
        ])?;
    }
    coarse.finish()?;
    let _ = w;
    ctx.json("report.json", &RunReport::from_trial(t))
}

/// Tracks either a recorded trace (`trace` directory holding `queries.csv`
/// and `ground_truth.csv`) or a fresh in-memory simulation.
pub fn cmd_track(
    ctx: &RunContext,
    fingerprint: Option<&Path>,
    trace: Option<&Path>,
) -> Result<TrialResult> {
    let start = Instant::now();
    let w = ctx.s().warehouse()?;
    let fp_path = fingerprint
        .map(Path::to_path_buf)
        .unwrap_or_else(|| ctx.path("fingerprint.csv"));
    let fp = load_fingerprint(&fp_path)?;
    let object = ctx.s().object()?;
    let intervals = w.polling.intervals_for(object.end_time());
    let trial = match trace {
        Some(dir) => {
            let queries = read_queries(&dir.join("queries.csv"))?;
            let truth = read_truth(&dir.join("ground_truth.csv"))?;
            run_trace(
                &w,
                &fp,
                ctx.s(),
                &queries,
                &truth,
                intervals,
                ctx.seed,
                ctx.exec,
            )?
        }
        None => run_trial(&w, &fp, ctx.s(), ctx.seed, ctx.exec)?,
    };
    write_trial(ctx, &w, &trial)?;
    log::info!(
        "track: mean error {:.3} m over {} intervals in {:.3} s",
        trial.mean_error(),
        trial.steps.len(),
        start.elapsed().as_secs_f64()
    );
    Ok(trial)
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationSummary {
    pub trials: usize,
    pub seeds: Vec<u64>,
    pub mean_error_m: f64,
    pub sd_error_m: f64,
    pub ci95_low_m: f64,
    pub ci95_high_m: f64,
    pub max_error_m: f64,
    pub detection_rate: Option<f64>,
    pub front_query_rate: Option<f64>,
    pub detection: DetectionStats,
    pub divergences: usize,
}

/// Mean, sample standard deviation and normal-approximation 95 % interval.
pub fn mean_sd_ci(xs: &[f64]) -> (f64, f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let half = 1.96 * sd / n.sqrt();
    (mean, sd, mean - half, mean + half)
}

/// Runs `trials` independent seeds `seed, seed + 1, ...` against one
/// fingerprint.
pub fn evaluate(
    w: &Warehouse,
    fp: &Fingerprint,
    scenario: &Scenario,
    seed: u64,
    trials: usize,
    exec: Execution,
) -> Result<(Vec<(u64, TrialResult)>, EvaluationSummary)> {
    if trials == 0 {
        return Err(Error::config("evaluation needs at least one trial"));
    }
    let seeds: Vec<u64> = (0..trials as u64)
        .map(|i| rng::trial_seed(seed, i))
        .collect();
    let mut results = par::map(exec, &seeds, |&s| {
        run_trial(w, fp, scenario, s, Execution::Sequential).map(|t| (s, t))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    results.sort_by_key(|(s, _)| *s);
    let means: Vec<f64> = results.iter().map(|(_, t)| t.mean_error()).collect();
    let (mean, sd, lo, hi) = mean_sd_ci(&means);
    let mut detection = DetectionStats::default();
    for (_, t) in &results {
        detection.add(&t.detection);
    }
    let summary = EvaluationSummary {
        trials,
        seeds,
        mean_error_m: r9(mean),
        sd_error_m: r9(sd),
        ci95_low_m: r9(lo),
        ci95_high_m: r9(hi),
        max_error_m: r9(results
            .iter()
            .map(|(_, t)| t.max_error())
            .fold(f64::NAN, f64::max)),
        detection_rate: detection.rate().map(r9),
        front_query_rate: detection.query_rate().map(r9),
        detection,
        divergences: results.iter().map(|(_, t)| t.divergences()).sum(),
    };
    Ok((results, summary))
}

pub fn cmd_evaluate(
    ctx: &RunContext,
    trials: Option<usize>,
    fingerprint: Option<&Path>,
) -> Result<EvaluationSummary> {
    let start = Instant::now();
    let w = ctx.s().warehouse()?;
    let fp = fingerprint_for(ctx, &w, fingerprint)?;
    let trials = trials.unwrap_or(ctx.s().evaluation.trials);
    let (results, summary) = evaluate(&w, &fp, ctx.s(), ctx.seed, trials, ctx.exec)?;
    let mut out = ctx.csv(
        "trials.csv",
        &[
            "trial",
            "seed",
            "mean_error_m",
            "max_error_m",
            "detection_rate",
            "divergences",
        ],
    )?;
    for (i, (s, t)) in results.iter().enumerate() {
        out.row([
            i.to_string(),
            s.to_string(),
            fmt_f64(t.mean_error()),
            fmt_f64(t.max_error()),
            fmt_opt(t.detection.rate()),
            t.divergences().to_string(),
        ])?;
    }
    out.finish()?;
    ctx.json("summary.json", &summary)?;
    log::info!(
        "evaluate: {trials} trials, mean error {:.3} m in {:.3} s",
        summary.mean_error_m,
        start.elapsed().as_secs_f64()
    );
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    MinPowerVsD,
    PowerVsRange,
    Height,
    MountHeight,
    Placement,
    FalseRate,
}

impl SweepKind {
    pub const ALL: [SweepKind; 6] = [
        SweepKind::MinPowerVsD,
        SweepKind::PowerVsRange,
        SweepKind::Height,
        SweepKind::MountHeight,
        SweepKind::Placement,
        SweepKind::FalseRate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepKind::MinPowerVsD => "min_power_vs_d",
            SweepKind::PowerVsRange => "power_vs_D",
            SweepKind::Height => "height",
            SweepKind::MountHeight => "mount_height",
            SweepKind::Placement => "placement",
            SweepKind::FalseRate => "p_false",
        }
    }
}

impl FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = SweepKind::ALL.iter().map(|k| k.name()).collect();
                Error::config(format!(
                    "unknown sweep kind {s:?}; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

fn reference_distance(s: &Scenario) -> f64 {
    s.calibration.map_or(2.0, |c| c.reference_distance)
}

/// Detection statistics of the scenario's walk with a modified scenario.
fn walk_detection(s: &Scenario, seed: u64, exec: Execution) -> Result<DetectionStats> {
    let w = s.warehouse()?;
    let object = s.object()?;
    let sim = w.run(Some(&object), object.end_time(), seed, exec)?;
    detection_stats(
        &w,
        &GroundTruth(sim.ground_truth),
        &sim.queries,
        w.polling.timing()?,
    )
}

pub fn cmd_sweep(ctx: &RunContext, kind: SweepKind, trials: Option<usize>) -> Result<()> {
    let start = Instant::now();
    let s = ctx.s();
    let ex = s.excitation()?;
    let g = s.twin_geometry()?;
    let name = format!("sweep_{}.csv", kind.name());
    match kind {
        SweepKind::MinPowerVsD => {
            let d_ref = reference_distance(s);
            let mut out = ctx.csv(
                &name,
                &["d_mm", "fore_dbm", "rear_dbm", "gap_db", "window_open"],
            )?;
            for mm in 6..=26 {
                let gd = g.with_separation(mm as f64 * 1e-3)?;
                let fore = min_activation_power(&gd, &ex, d_ref, Role::Fore)?;
                let rear = min_activation_power(&gd, &ex, d_ref, Role::Rear)?;
                let gap = fore.zip(rear).map(|(f, r)| r - f);
                let open = critical_window(&gd, &ex, d_ref)?.is_some();
                out.row([
                    mm.to_string(),
                    fmt_opt(fore),
                    fmt_opt(rear),
                    fmt_opt(gap),
                    open.to_string(),
                ])?;
            }
            out.finish()?;
        }
        SweepKind::PowerVsRange => {
            let mut out = ctx.csv(
                &name,
                &["D_m", "fore_dbm", "rear_dbm", "required_dbm", "reachable"],
            )?;
            for k in 2..=28 {
                let d = k as f64 * 0.25;
                let fore = min_activation_power(&g, &ex, d, Role::Fore)?;
                let rear = min_activation_power(&g, &ex, d, Role::Rear)?;
                out.row([
                    fmt_f64(d),
                    fmt_opt(fore),
                    fmt_opt(rear),
                    fmt_opt(rear),
                    rear.is_some().to_string(),
                ])?;
            }
            out.finish()?;
        }
        SweepKind::Placement => {
            let d_ref = reference_distance(s);
            let mut out = ctx.csv(
                &name,
                &["placement", "shadowing", "fore_dbm", "rear_dbm", "gap_db"],
            )?;
            for p in Placement::ALL {
                let gp = crate::coupling::TwinGeometry { placement: p, ..g };
                let fore = min_activation_power(&gp, &ex, d_ref, Role::Fore)?;
                let rear = min_activation_power(&gp, &ex, d_ref, Role::Rear)?;
                let gap = fore.zip(rear).map(|(f, r)| r - f);
                out.row([
                    p.label().to_string(),
                    p.is_shadowing().to_string(),
                    fmt_opt(fore),
                    fmt_opt(rear),
                    fmt_opt(gap),
                ])?;
            }
            out.finish()?;
        }
        SweepKind::Height => {
            let heights: Vec<f64> = (0..=8).map(|k| 1.50 + 0.05 * k as f64).collect();
            let rows = par::map(ctx.exec, &heights, |&h| {
                let mut sh = s.clone();
                sh.object.height = h;
                walk_detection(&sh, ctx.seed, Execution::Sequential).map(|d| (h, d))
            });
            let mount = s.grid()?.twins().first().map_or(0.75, |t| t.mount_height);
            let mut out = ctx.csv(
                &name,
                &[
                    "height_m",
                    "p_front_query",
                    "front_query_rate",
                    "detection_rate",
                ],
            )?;
            for row in rows {
                let (h, d) = row?;
                let p = s.detection.jump_probability(Region::Front, h, mount);
                out.row([
                    fmt_f64(h),
                    fmt_f64(p),
                    fmt_opt(d.query_rate()),
                    fmt_opt(d.rate()),
                ])?;
            }
            out.finish()?;
        }
        SweepKind::MountHeight => {
            let mounts: Vec<f64> = (0..=14).map(|k| 0.40 + 0.05 * k as f64).collect();
            let rows = par::map(ctx.exec, &mounts, |&m| {
                walk_detection(&s.with_mount_height(m), ctx.seed, Execution::Sequential)
                    .map(|d| (m, d))
            });
            let mut out = ctx.csv(
                &name,
                &[
                    "mount_height_m",
                    "p_front_query",
                    "front_query_rate",
                    "detection_rate",
                ],
            )?;
            for row in rows {
                let (m, d) = row?;
                let p = s
                    .detection
                    .jump_probability(Region::Front, s.object.height, m);
                out.row([
                    fmt_f64(m),
                    fmt_f64(p),
                    fmt_opt(d.query_rate()),
                    fmt_opt(d.rate()),
                ])?;
            }
            out.finish()?;
        }
        SweepKind::FalseRate => {
            let trials = trials.unwrap_or(s.evaluation.trials);
            let grid = [0.0, 1e-4, 2e-4, 3e-4, 4e-4, 5e-4, 1e-3];
            let mut out = ctx.csv(
                &name,
                &["p_false", "mean_error_m", "sd_error_m", "detection_rate"],
            )?;
            for p in grid {
                let mut sp = s.clone();
                sp.detection.p_false = p;
                let w = sp.warehouse()?;
                let fp = train_offline(&w, &sp.training, ctx.seed, ctx.exec)?;
                let (_, summary) = evaluate(&w, &fp, &sp, ctx.seed, trials, ctx.exec)?;
                log::info!("p_false {p}: mean error {:.3} m", summary.mean_error_m);
                out.row([
                    fmt_f64(p),
                    fmt_f64(summary.mean_error_m),
                    fmt_f64(summary.sd_error_m),
                    fmt_opt(summary.detection_rate),
                ])?;
            }
            out.finish()?;
        }
    }
    log::info!(
        "sweep {}: {:.3} s",
        kind.name(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
