//! Flag validation and point loading shared by `sketch`, `audit` and `exact`.

use std::path::{Path, PathBuf};

use anyhow::Context;
use kdsketch::eval::{check_correlation, generate_scaled, scale_to_unit, RawData};
use kdsketch::io::{read_points, read_raw_points};
use kdsketch::{DataDistribution, ExperimentConfig, PointSet, Shard};

use crate::{usage, CliResult, DataArgs};

/// A validated description of the data, checked before anything is read.
pub enum Source {
    Files {
        paths: Vec<PathBuf>,
        p: Option<usize>,
        scale: bool,
        margin: f64,
    },
    Generated {
        distribution: DataDistribution,
        n: usize,
        p: usize,
        rho: f64,
        seed: u64,
        margin: f64,
    },
}

pub struct Loaded {
    pub shards: Vec<Shard<f64>>,
    pub points: PointSet<f64>,
}

pub fn check_output(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => {
            Err(usage(format!("output directory {} does not exist", dir.display())))
        }
        _ if path.file_name().is_none() => Err(usage(format!("{} is not a file path", path.display()))),
        _ => Ok(()),
    }
}

pub fn positive(name: &str, v: usize) -> CliResult<usize> {
    if v == 0 {
        Err(usage(format!("--{name} must be positive")))
    } else {
        Ok(v)
    }
}

impl DataArgs {
    pub fn validate(&self) -> CliResult<Source> {
        if let Some(p) = self.p {
            positive("p", p)?;
        }
        if let Some(r) = self.shards {
            positive("shards", r)?;
        }
        let cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path).map_err(crate::Failure::from)?,
            None => ExperimentConfig::default(),
        };
        if !self.input.is_empty() {
            if self.seed.is_some() || self.n.is_some() || self.rho.is_some() || self.distribution.is_some() {
                return Err(usage("generator flags (--seed, --n, --rho, --distribution) conflict with --input"));
            }
            if let Some(missing) = self.input.iter().find(|p| !p.is_file()) {
                return Err(usage(format!("input {} is not a readable file", missing.display())));
            }
            return Ok(Source::Files {
                paths: self.input.clone(),
                p: self.p,
                scale: self.scale,
                margin: cfg.margin,
            });
        }
        let seed = self
            .seed
            .ok_or_else(|| usage("generated data needs --seed (or pass --input files)"))?;
        let p = self.p.unwrap_or(cfg.p);
        let n = self.n.unwrap_or(cfg.n);
        let rho = self.rho.unwrap_or(cfg.rho.first().copied().unwrap_or(0.0));
        let distribution = self.distribution.unwrap_or(cfg.distribution);
        positive("p", p)?;
        if n < 2 {
            return Err(usage("--n must be at least 2"));
        }
        check_correlation(rho, p).map_err(usage)?;
        Ok(Source::Generated {
            distribution,
            n,
            p,
            rho,
            seed,
            margin: cfg.margin,
        })
    }
}

impl Source {
    pub fn dim_hint(&self) -> Option<usize> {
        match self {
            Source::Files { p, .. } => *p,
            Source::Generated { p, .. } => Some(*p),
        }
    }

    /// Reads or generates the points, keeping one shard per input file
    /// unless `reshard` asks for a different split.
    pub fn load(&self, reshard: Option<usize>) -> CliResult<Loaded> {
        let parts: Vec<PointSet<f64>> = match self {
            Source::Generated {
                distribution,
                n,
                p,
                rho,
                seed,
                margin,
            } => vec![generate_scaled(*distribution, *n, *p, *rho, *seed, *margin)?],
            Source::Files {
                paths,
                p,
                scale: false,
                ..
            } => {
                let mut parts = Vec::with_capacity(paths.len());
                let mut dim = *p;
                for path in paths {
                    let part = read_points::<f64>(path, dim)?;
                    dim = Some(part.dim());
                    parts.push(part);
                }
                parts
            }
            Source::Files {
                paths,
                p,
                scale: true,
                margin,
            } => {
                let mut dim = *p;
                let mut values = Vec::new();
                let mut sizes = Vec::with_capacity(paths.len());
                for path in paths {
                    let (d, v) = read_raw_points(path)?;
                    match dim {
                        Some(expected) if d != 0 && d != expected => {
                            return Err(anyhow::anyhow!(
                                "{}: expected {expected} coordinates per point, found {d}",
                                path.display()
                            )
                            .into())
                        }
                        _ if d != 0 => dim = Some(d),
                        _ => {}
                    }
                    sizes.push(v.len());
                    values.extend(v);
                }
                let dim = dim.ok_or_else(|| anyhow::anyhow!("no points in the input files"))?;
                let (scaled, _) = scale_to_unit(&RawData { dim, values }, *margin).context("scaling the input")?;
                let mut parts = Vec::with_capacity(sizes.len());
                let mut at = 0;
                for size in sizes {
                    parts.push(PointSet::new(dim, scaled.coords()[at..at + size].to_vec())?);
                    at += size;
                }
                parts
            }
        };
        let points = PointSet::concat(&parts)?;
        if points.is_empty() {
            return Err(anyhow::anyhow!("no points in the input").into());
        }
        let shards = match reshard {
            Some(r) => points.split(r),
            None => parts
                .into_iter()
                .enumerate()
                .map(|(id, points)| Shard { id, points })
                .collect(),
        };
        Ok(Loaded { shards, points })
    }
}
