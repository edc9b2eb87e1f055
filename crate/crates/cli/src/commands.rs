use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::anyhow;
use kdsketch::eval::{run_accuracy_study, run_runtime_study, write_accuracy_csv, write_runtime_csv};
use kdsketch::factorized::{build_transform_1d, map_reduce_build_factorized, recover_standard};
use kdsketch::io::{atomic_write, read_sketch, read_tree, write_audit, write_factorized, write_sketch, write_transform, write_tree};
use kdsketch::tree::MAX_DEPTH;
use kdsketch::{audit_cells, build_exact_tree, build_tree, ExperimentConfig, KdTree64, SketchTensor64, TreeOptions};

use crate::data::{check_output, positive};
use crate::{usage, AuditArgs, BuildArgs, CliResult, ExactArgs, SketchArgs, StudyArgs, TransformArgs};

/// `out.csv` -> `out.csv.factorized`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = OsString::from(path.file_name().unwrap_or_default());
    name.push(suffix);
    path.with_file_name(name)
}

fn check_depth(depth: usize) -> CliResult<()> {
    if depth == 0 || depth > MAX_DEPTH {
        return Err(usage(format!("--depth must lie in 1..={MAX_DEPTH}")));
    }
    Ok(())
}

pub fn sketch(a: SketchArgs) -> CliResult<()> {
    let source = a.data.validate()?;
    positive("parallelism", a.parallelism)?;
    check_output(&a.output)?;
    // The transform depends only on Jbar, so a hopeless parameter fails before any data is read.
    let start = Instant::now();
    let transform = build_transform_1d(&a.jbar)?;
    let transform_build = start.elapsed();

    let loaded = source.load(a.data.shards)?;
    let p = loaded.points.dim();
    if let Some(expected) = source.dim_hint() {
        if expected != p {
            return Err(anyhow!("data has {p} coordinates per point but --p is {expected}").into());
        }
    }
    let (factorized, report) = map_reduce_build_factorized(&loaded.shards, &a.jbar, p, a.parallelism)?;
    let start = Instant::now();
    let standard = recover_standard(&factorized, &transform)?;
    let recovery = start.elapsed();

    atomic_write(&sibling(&a.output, ".factorized"), |w| write_factorized(w, &factorized, a.format))?;
    atomic_write(&sibling(&a.output, ".transform"), |w| write_transform(w, &transform, a.format))?;
    atomic_write(&a.output, |w| write_sketch(w, &standard, a.format))?;

    println!(
        "sketch p={p} Jbar={} n={} shards={} parallelism={}",
        a.jbar,
        standard.count(),
        loaded.shards.len(),
        a.parallelism
    );
    println!("points_read={} trig_calls={}", report.points_read, report.trig_calls);
    println!(
        "transform method={} residual={:e}",
        transform.method(),
        transform.residual()
    );
    println!("time map={:.6}s", report.map.as_secs_f64());
    println!("time reduce={:.6}s", report.reduce.as_secs_f64());
    println!("time transform={:.6}s", (transform_build + recovery).as_secs_f64());
    Ok(())
}

pub fn transform(a: TransformArgs) -> CliResult<()> {
    check_output(&a.output)?;
    let tf = build_transform_1d(&a.jbar)?;
    atomic_write(&a.output, |w| write_transform(w, &tf, a.format))?;
    println!("transform Jbar={} method={} residual={:e}", a.jbar, tf.method(), tf.residual());
    Ok(())
}

pub fn build(a: BuildArgs) -> CliResult<()> {
    check_depth(a.depth)?;
    check_output(&a.output)?;
    if let Some(p) = a.p {
        positive("p", p)?;
    }
    if let Some(f) = a.leaf_floor {
        if !(0.0..=1.0).contains(&f) {
            return Err(usage("--leaf-floor must lie in [0, 1]"));
        }
    }
    if !a.input.is_file() {
        return Err(usage(format!("sketch {} is not a readable file", a.input.display())));
    }
    let sketch: SketchTensor64 = read_sketch(&a.input)?;
    if let Some(p) = a.p {
        if p != sketch.dim() {
            return Err(anyhow!("{}: sketch has p={} but --p is {p}", a.input.display(), sketch.dim()).into());
        }
    }
    if let Some(jbar) = &a.jbar {
        if jbar != sketch.accuracy() {
            return Err(anyhow!(
                "{}: sketch has Jbar={} but --Jbar is {jbar}",
                a.input.display(),
                sketch.accuracy()
            )
            .into());
        }
    }
    if !sketch.is_standardized() {
        return Err(anyhow!("{}: sketch is not standardized", a.input.display()).into());
    }
    let (tree, report) = build_tree(&sketch, a.depth, &TreeOptions { leaf_floor: a.leaf_floor })?;
    atomic_write(&a.output, |w| write_tree(w, &tree))?;
    println!(
        "tree p={} depth={} Jbar={} nodes={} degenerate={}",
        tree.dim(),
        tree.depth(),
        sketch.accuracy(),
        tree.nodes().len(),
        report.degenerate
    );
    println!("time tree={:.6}s", report.elapsed.as_secs_f64());
    Ok(())
}

pub fn audit(a: AuditArgs) -> CliResult<()> {
    let source = a.data.validate()?;
    check_output(&a.output)?;
    if !a.tree.is_file() {
        return Err(usage(format!("tree {} is not a readable file", a.tree.display())));
    }
    let tree: KdTree64 = read_tree(&a.tree)?;
    let loaded = source.load(None)?;
    let audit = audit_cells(&tree, &loaded.points)?;
    atomic_write(&a.output, |w| write_audit(w, &audit))?;
    println!(
        "audit n={} leaves={} counted={} discarded={}",
        audit.n,
        audit.counts.len(),
        audit.counts.iter().sum::<u64>(),
        audit.discarded
    );
    println!(
        "max_abs_deviation={} max_rel_deviation={}",
        audit.max_abs_deviation(),
        audit.max_rel_deviation()
    );
    Ok(())
}

pub fn exact(a: ExactArgs) -> CliResult<()> {
    let source = a.data.validate()?;
    check_depth(a.depth)?;
    check_output(&a.output)?;
    let loaded = source.load(None)?;
    let start = Instant::now();
    let tree = build_exact_tree(&loaded.points, a.depth)?;
    atomic_write(&a.output, |w| write_tree(w, &tree))?;
    println!("exact tree p={} depth={} n={}", tree.dim(), tree.depth(), tree.count());
    println!("time tree={:.6}s", start.elapsed().as_secs_f64());
    Ok(())
}

fn study_config(a: &StudyArgs) -> CliResult<ExperimentConfig> {
    check_output(&a.output)?;
    let mut cfg = match &a.config {
        Some(path) => ExperimentConfig::from_file(path).map_err(usage)?,
        None => ExperimentConfig::default(),
    };
    if !a.seed.is_empty() {
        cfg.seeds = a.seed.clone();
    }
    if let Some(r) = a.shards {
        cfg.shards = r;
    }
    if let Some(par) = a.parallelism {
        cfg.parallelism = par;
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

pub fn accuracy_study(a: StudyArgs) -> CliResult<()> {
    let cfg = study_config(&a)?;
    let rows = run_accuracy_study(&cfg)?;
    atomic_write(&a.output, |w| write_accuracy_csv(w, &rows))?;
    println!("accuracy study: {} rows", rows.len());
    Ok(())
}

pub fn runtime_study(a: StudyArgs) -> CliResult<()> {
    let cfg = study_config(&a)?;
    let rows = run_runtime_study(&cfg)?;
    atomic_write(&a.output, |w| write_runtime_csv(w, &rows))?;
    println!("runtime study: {} rows", rows.len());
    Ok(())
}
