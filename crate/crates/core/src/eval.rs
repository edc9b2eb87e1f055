//! Synthetic data, scaling, and the accuracy and runtime studies.
//!
//! Randomness comes from ChaCha8 seeded with `seed_from_u64(seed)`; points
//! are generated in blocks of [`BLOCK_POINTS`], block `b` drawing from stream
//! `b`, so output depends only on the seed and never on thread count.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Open01, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::factorized::AccuracyParameter;
use crate::pipeline::{sketch_dataset, SketchRoute};
use crate::sketch::PointSet;
use crate::tree::{audit_cells, build_tree, TreeOptions};

/// Points per RNG stream.
pub const BLOCK_POINTS: usize = 4096;
/// Default scaling margin.
pub const DEFAULT_MARGIN: f64 = 1e-6;

/// Unscaled points, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RawData {
    pub dim: usize,
    pub values: Vec<f64>,
}

impl RawData {
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }
}

fn generate_blocks<F>(n: usize, p: usize, seed: u64, fill: F) -> RawData
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) + Sync,
{
    let mut values = vec![0.0; n * p];
    values
        .par_chunks_mut(BLOCK_POINTS * p)
        .enumerate()
        .for_each(|(block, chunk)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(block as u64);
            for row in chunk.chunks_exact_mut(p) {
                fill(&mut rng, row);
            }
        });
    RawData { dim: p, values }
}

/// Checks that the equicorrelation matrix with off-diagonal `rho` is positive definite.
pub fn check_correlation(rho: f64, p: usize) -> Result<()> {
    let lower = if p > 1 { -1.0 / (p as f64 - 1.0) } else { f64::NEG_INFINITY };
    if !(rho > lower && rho < 1.0) {
        return Err(Error::InvalidCorrelation { rho, p });
    }
    Ok(())
}

/// Mean-zero, unit-variance normals with common correlation `rho`, via the
/// closed-form square root `alpha I + beta 11^T` of the equicorrelation matrix.
pub fn generate_correlated_normal(n: usize, p: usize, rho: f64, seed: u64) -> Result<RawData> {
    if p == 0 {
        return Err(Error::DimensionMismatch { expected: 1, found: 0 });
    }
    check_correlation(rho, p)?;
    let alpha = (1.0 - rho).sqrt();
    let beta = ((1.0 - rho + p as f64 * rho).sqrt() - alpha) / p as f64;
    Ok(generate_blocks(n, p, seed, |rng, row| {
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = StandardNormal.sample(rng);
            sum += *v;
        }
        for v in row.iter_mut() {
            *v = alpha * *v + beta * sum;
        }
    }))
}

/// Independent uniforms on the open unit cube.
pub fn generate_uniform(n: usize, p: usize, seed: u64) -> Result<RawData> {
    if p == 0 {
        return Err(Error::DimensionMismatch { expected: 1, found: 0 });
    }
    Ok(generate_blocks(n, p, seed, |rng, row| {
        for v in row.iter_mut() {
            *v = Open01.sample(rng);
        }
    }))
}

/// Per-coordinate affine map used by [`scale_to_unit`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRecord {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub margin: f64,
}

impl ScalingRecord {
    /// Maps a raw value on `axis` into `[margin, 1 - margin]`.
    pub fn apply(&self, axis: usize, v: f64) -> f64 {
        let span = self.max[axis] - self.min[axis];
        self.margin + (1.0 - 2.0 * self.margin) * (v - self.min[axis]) / span
    }
}

/// Min-max scales every coordinate into `[margin, 1 - margin]`.
pub fn scale_to_unit(raw: &RawData, margin: f64) -> Result<(PointSet<f64>, ScalingRecord)> {
    if raw.len() < 2 {
        return Err(Error::InsufficientPoints {
            needed: 2,
            found: raw.len(),
        });
    }
    if !(margin > 0.0 && margin < 0.5) {
        return Err(Error::Config(format!("margin {margin} must lie in (0, 0.5)")));
    }
    let p = raw.dim;
    let mut min = vec![f64::INFINITY; p];
    let mut max = vec![f64::NEG_INFINITY; p];
    for row in raw.values.chunks_exact(p) {
        for (l, &v) in row.iter().enumerate() {
            min[l] = min[l].min(v);
            max[l] = max[l].max(v);
        }
    }
    if let Some(axis) = (0..p).find(|&l| !(max[l] > min[l])) {
        return Err(Error::ZeroRange { axis });
    }
    let record = ScalingRecord { min, max, margin };
    let coords = raw
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| record.apply(i % p, v))
        .collect();
    Ok((PointSet::new(p, coords)?, record))
}

/// Data source of a study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DataDistribution {
    #[default]
    Normal,
    Uniform,
}

impl FromStr for DataDistribution {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(DataDistribution::Normal),
            "uniform" => Ok(DataDistribution::Uniform),
            other => Err(Error::Config(format!("unknown distribution {other:?} (normal|uniform)"))),
        }
    }
}

impl fmt::Display for DataDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataDistribution::Normal => "normal",
            DataDistribution::Uniform => "uniform",
        })
    }
}

/// Generates one dataset of a study and scales it into the unit cube.
pub fn generate_scaled(
    distribution: DataDistribution,
    n: usize,
    p: usize,
    rho: f64,
    seed: u64,
    margin: f64,
) -> Result<PointSet<f64>> {
    match distribution {
        DataDistribution::Normal => Ok(scale_to_unit(&generate_correlated_normal(n, p, rho, seed)?, margin)?.0),
        // Uniform data already lies in the open cube; no scaling pass.
        DataDistribution::Uniform => PointSet::new(p, generate_uniform(n, p, seed)?.values),
    }
}

/// Settings shared by both studies.
///
/// Text form: one `key = value` per line, `#` starts a comment. Keys: `n`,
/// `p`, `rho` (comma list), `depths` (comma list), `accuracy_grid` (entries
/// separated by `;`, factors by `,` or `x`), `seeds` (comma list), `shards`,
/// `parallelism`, `distribution` (`normal` or `uniform`), `margin`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub p: usize,
    pub rho: Vec<f64>,
    pub depths: Vec<usize>,
    pub accuracy_grid: Vec<AccuracyParameter>,
    pub seeds: Vec<u64>,
    pub shards: usize,
    pub parallelism: usize,
    pub distribution: DataDistribution,
    pub margin: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 1_000_000,
            p: 3,
            rho: vec![0.0],
            depths: vec![6],
            accuracy_grid: vec![AccuracyParameter::new(vec![3, 5]).expect("valid")],
            seeds: Vec::new(),
            shards: 1,
            parallelism: 1,
            distribution: DataDistribution::Normal,
            margin: DEFAULT_MARGIN,
        }
    }
}

fn parse_list<V: FromStr>(key: &str, raw: &str, sep: char) -> Result<Vec<V>> {
    raw.split(sep)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {s:?}"))))
        .collect()
}

fn parse_count(key: &str, raw: &str) -> Result<usize> {
    if let Ok(v) = raw.parse::<usize>() {
        return Ok(v);
    }
    // Allow scientific notation such as 1e6 when it is an exact integer.
    match raw.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < 1e15 => Ok(v as usize),
        _ => Err(Error::Config(format!("{key}: {raw:?} is not a non-negative integer"))),
    }
}

impl ExperimentConfig {
    /// Parses the key-value text form; unspecified keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "n" => cfg.n = parse_count(key, value)?,
                "p" => cfg.p = parse_count(key, value)?,
                "rho" => cfg.rho = parse_list(key, value, ',')?,
                "depths" => cfg.depths = parse_list(key, value, ',')?,
                "accuracy_grid" => cfg.accuracy_grid = parse_list(key, value, ';')?,
                "seeds" => cfg.seeds = parse_list(key, value, ',')?,
                "shards" => cfg.shards = parse_count(key, value)?,
                "parallelism" => cfg.parallelism = parse_count(key, value)?,
                "distribution" => cfg.distribution = value.parse()?,
                "margin" => {
                    cfg.margin = value
                        .parse()
                        .map_err(|_| Error::Config(format!("margin: cannot parse {value:?}")))?
                }
                other => return Err(Error::Config(format!("line {}: unknown key {other:?}", i + 1))),
            }
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        ExperimentConfig::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::Config("p must be positive".into()));
        }
        for (name, list_empty) in [
            ("rho", self.rho.is_empty()),
            ("depths", self.depths.is_empty()),
            ("accuracy_grid", self.accuracy_grid.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ] {
            if list_empty {
                return Err(Error::Config(format!("{name} must not be empty")));
            }
        }
        for &rho in &self.rho {
            check_correlation(rho, self.p)?;
        }
        let max_depth = *self.depths.iter().max().expect("non-empty");
        if self.depths.contains(&0) || max_depth > crate::tree::MAX_DEPTH {
            return Err(Error::Config(format!("depths must lie in 1..={}", crate::tree::MAX_DEPTH)));
        }
        if self.n < (1usize << max_depth) || self.n < 2 {
            return Err(Error::Config(format!(
                "n = {} is smaller than 2^{max_depth}",
                self.n
            )));
        }
        if self.shards == 0 || self.parallelism == 0 {
            return Err(Error::Config("shards and parallelism must be positive".into()));
        }
        if !(self.margin > 0.0 && self.margin < 0.5) {
            return Err(Error::Config(format!("margin {} must lie in (0, 0.5)", self.margin)));
        }
        Ok(())
    }
}

/// One row of the accuracy study: leaf log2-count quantiles of one tree.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyRow {
    pub rho: f64,
    pub depth: usize,
    pub jbar: AccuracyParameter,
    pub seed: u64,
    /// `[min, q1, median, q3, max]` of leaf log2-counts.
    pub log2_quantiles: [f64; 5],
    pub mean_abs_rel_deviation: f64,
    pub max_abs_rel_deviation: f64,
    pub degenerate: usize,
}

pub const ACCURACY_HEADER: &str =
    "rho,depth,jbar,seed,log2_min,log2_q1,log2_median,log2_q3,log2_max,mean_abs_rel_deviation,max_abs_rel_deviation,degenerate";

/// For every `(rho, seed)` generates one dataset; for every accuracy
/// parameter builds one sketch and one tree at the largest depth, and
/// audits its truncation at each requested depth.
pub fn run_accuracy_study(cfg: &ExperimentConfig) -> Result<Vec<AccuracyRow>> {
    cfg.validate()?;
    let max_depth = *cfg.depths.iter().max().expect("validated");
    let mut rows = Vec::new();
    for &rho in &cfg.rho {
        for &seed in &cfg.seeds {
            let points = generate_scaled(cfg.distribution, cfg.n, cfg.p, rho, seed, cfg.margin)?;
            let shards = points.split(cfg.shards);
            for acc in &cfg.accuracy_grid {
                let outcome = sketch_dataset(&shards, acc, cfg.p, cfg.parallelism, SketchRoute::Auto)?;
                let (tree, _) = build_tree(&outcome.standard, max_depth, &TreeOptions::default())?;
                for &depth in &cfg.depths {
                    let cut = tree.truncated(depth)?;
                    let audit = audit_cells(&cut, &points)?;
                    rows.push(AccuracyRow {
                        rho,
                        depth,
                        jbar: acc.clone(),
                        seed,
                        log2_quantiles: audit.log2_quantiles(),
                        mean_abs_rel_deviation: audit.mean_abs_rel_deviation(),
                        max_abs_rel_deviation: audit.max_rel_deviation(),
                        degenerate: cut.degenerate_count(),
                    });
                }
            }
        }
    }
    Ok(rows)
}

pub fn write_accuracy_csv(w: &mut dyn Write, rows: &[AccuracyRow]) -> Result<()> {
    writeln!(w, "{ACCURACY_HEADER}")?;
    for r in rows {
        let q = r.log2_quantiles;
        writeln!(
            w,
            "{},{},\"{}\",{},{},{},{},{},{},{},{},{}",
            r.rho,
            r.depth,
            r.jbar,
            r.seed,
            q[0],
            q[1],
            q[2],
            q[3],
            q[4],
            r.mean_abs_rel_deviation,
            r.max_abs_rel_deviation,
            r.degenerate
        )?;
    }
    Ok(())
}

/// Timed phase of the runtime study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Min-max scan and affine map (a separate pass over the data).
    Scale,
    Map,
    Reduce,
    Transform,
    Tree,
    /// Map, reduce, transform and tree for one depth.
    Total,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Scale => "scale",
            Phase::Map => "map",
            Phase::Reduce => "reduce",
            Phase::Transform => "transform",
            Phase::Tree => "tree",
            Phase::Total => "total",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeRow {
    pub phase: Phase,
    pub jbar: AccuracyParameter,
    pub rho: f64,
    pub shards: usize,
    pub parallelism: usize,
    /// Set for depth-dependent phases.
    pub depth: Option<usize>,
    pub seed: u64,
    pub seconds: f64,
}

pub const RUNTIME_HEADER: &str = "phase,jbar,rho,shards,parallelism,depth,seed,seconds";

/// Timings of one sketch and the trees built from it.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineTimings {
    pub map: Duration,
    pub reduce: Duration,
    pub transform: Duration,
    /// `(depth, tree-solve time)`.
    pub trees: Vec<(usize, Duration)>,
}

impl PipelineTimings {
    pub fn sketch(&self) -> Duration {
        self.map + self.reduce + self.transform
    }

    pub fn total(&self, depth: usize) -> Option<Duration> {
        self.trees.iter().find(|t| t.0 == depth).map(|t| self.sketch() + t.1)
    }
}

/// Sketches once with the factorized route when `K > 1`, then times tree builds at each depth.
pub fn time_pipeline(
    points: &PointSet<f64>,
    acc: &AccuracyParameter,
    depths: &[usize],
    shards: usize,
    parallelism: usize,
) -> Result<PipelineTimings> {
    let parts = points.split(shards);
    let outcome = sketch_dataset(&parts, acc, points.dim(), parallelism, SketchRoute::Auto)?;
    let mut trees = Vec::with_capacity(depths.len());
    for &depth in depths {
        let start = Instant::now();
        build_tree(&outcome.standard, depth, &TreeOptions::default())?;
        trees.push((depth, start.elapsed()));
    }
    Ok(PipelineTimings {
        map: outcome.report.map,
        reduce: outcome.report.reduce,
        transform: outcome.transform_time,
        trees,
    })
}

/// Times every phase for each `(rho, seed, Jbar)`. A warm-up pipeline on a
/// small subset runs first and is discarded.
pub fn run_runtime_study(cfg: &ExperimentConfig) -> Result<Vec<RuntimeRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &rho in &cfg.rho {
        for &seed in &cfg.seeds {
            let raw_start = Instant::now();
            let points = generate_scaled(cfg.distribution, cfg.n, cfg.p, rho, seed, cfg.margin)?;
            // Generation dominates this figure; the scan itself is a cheap single pass.
            let scale_time = raw_start.elapsed();
            let warm_n = cfg.n.min(2000);
            let warm = PointSet::new(cfg.p, points.coords()[..warm_n * cfg.p].to_vec())?;
            for acc in &cfg.accuracy_grid {
                time_pipeline(&warm, acc, &[1], 1, cfg.parallelism)?;
                let t = time_pipeline(&points, acc, &cfg.depths, cfg.shards, cfg.parallelism)?;
                let row = |phase, depth, d: Duration| RuntimeRow {
                    phase,
                    jbar: acc.clone(),
                    rho,
                    shards: cfg.shards,
                    parallelism: cfg.parallelism,
                    depth,
                    seed,
                    seconds: d.as_secs_f64(),
                };
                if cfg.distribution == DataDistribution::Normal {
                    rows.push(row(Phase::Scale, None, scale_time));
                }
                rows.push(row(Phase::Map, None, t.map));
                rows.push(row(Phase::Reduce, None, t.reduce));
                rows.push(row(Phase::Transform, None, t.transform));
                for &(depth, d) in &t.trees {
                    rows.push(row(Phase::Tree, Some(depth), d));
                    rows.push(row(Phase::Total, Some(depth), t.sketch() + d));
                }
            }
        }
    }
    Ok(rows)
}

pub fn write_runtime_csv(w: &mut dyn Write, rows: &[RuntimeRow]) -> Result<()> {
    writeln!(w, "{RUNTIME_HEADER}")?;
    for r in rows {
        let depth = r.depth.map_or_else(String::new, |d| d.to_string());
        writeln!(
            w,
            "{},\"{}\",{},{},{},{},{},{}",
            r.phase, r.jbar, r.rho, r.shards, r.parallelism, depth, r.seed, r.seconds
        )?;
    }
    Ok(())
}
