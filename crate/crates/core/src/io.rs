//! File formats: point CSV, tensor containers, tree files and audit CSV.
//!
//! Tensor container:
//!
//! ```text
//! KDSKETCH v1 kind=<standard|factorized|transform> p=<p> J=<J> jbar=<J1,..,JK> n=<n> standardized=<bool> encoding=<csv|bin>
//! <values>
//! ```
//!
//! Values are in row-major mixed-radix order, one full-precision decimal per
//! line for `csv`, or packed little-endian `f64` for `bin`. A transform stores
//! its `(2J+1) x (2J+1)` matrix row-major with `p=2`.
//!
//! Tree file:
//!
//! ```text
//! KDTREE v1 p=<p> depth=<D> jbar=<J1,..,JK|exact> n=<n>
//! <d> <k> <t> <split> <degenerate 0|1>      one line per node, level order, t 1-based
//! ```

use std::collections::HashMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::factorized::{AccuracyParameter, FactorizedTensor, Transform1D};
use crate::scalar::Scalar;
use crate::sketch::{PointSet, SketchTensor};
use crate::tensor::tensor_len;
use crate::tree::{axis_at, node_position, CellAudit, KdTree};

const TENSOR_MAGIC: &str = "KDSKETCH";
const TREE_MAGIC: &str = "KDTREE";
const VERSION: &str = "v1";

/// Column header of audit files.
pub const AUDIT_HEADER: &str = "depth,leaf_index,count,log2_count,rel_deviation";

/// Writes through a temporary sibling file and renames it into place, so a
/// failed write never leaves a partial `path`.
pub fn atomic_write<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut w = BufWriter::new(File::create(&tmp)?);
        write(&mut w)?;
        w.flush()?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}

/// Parses comma-separated rows of equal width. Blank lines and `#` comments
/// are skipped. Values are not range checked.
pub fn parse_raw_rows<R: BufRead>(reader: R, source: &str) -> Result<(usize, Vec<f64>)> {
    let mut dim = 0;
    let mut values = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let ctx = || format!("{source}:{}", i + 1);
        let line = line.map_err(|e| Error::parse(ctx(), e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let start = values.len();
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::parse(ctx(), format!("cannot parse {:?} as a number", field.trim())))?;
            if !v.is_finite() {
                return Err(Error::parse(ctx(), format!("non-finite value {v}")));
            }
            values.push(v);
        }
        let width = values.len() - start;
        if dim == 0 {
            dim = width;
        } else if width != dim {
            return Err(Error::parse(ctx(), format!("expected {dim} fields, found {width}")));
        }
    }
    Ok((dim, values))
}

/// Reads a point CSV whose coordinates must lie in `(0, 1)`.
pub fn parse_points<T: Scalar, R: BufRead>(reader: R, source: &str, dim: Option<usize>) -> Result<PointSet<T>> {
    let (found, values) = parse_raw_rows(reader, source)?;
    let dim = match (dim, found) {
        (Some(d), 0) => d,
        (Some(d), f) if d != f => {
            return Err(Error::parse(source, format!("expected {d} coordinates per point, found {f}")));
        }
        (_, 0) => return Err(Error::parse(source, "no points")),
        (_, f) => f,
    };
    if let Some(pos) = values.iter().position(|&v| !(v > 0.0 && v < 1.0)) {
        return Err(Error::parse(
            format!("{source}: point {}", pos / dim + 1),
            format!("coordinate {} outside the open unit interval", values[pos]),
        ));
    }
    PointSet::new(dim, values.into_iter().map(T::of).collect())
}

pub fn read_points<T: Scalar>(path: &Path, dim: Option<usize>) -> Result<PointSet<T>> {
    parse_points(open(path)?, &path.display().to_string(), dim)
}

pub fn read_raw_points(path: &Path) -> Result<(usize, Vec<f64>)> {
    parse_raw_rows(open(path)?, &path.display().to_string())
}

/// Writes points as CSV with full-precision decimals.
pub fn write_points<T: Scalar>(w: &mut dyn Write, points: &PointSet<T>) -> Result<()> {
    for x in points.iter() {
        let row: Vec<String> = x.iter().map(|v| v.as_f64().to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Standard,
    Factorized,
    Transform,
}

impl fmt::Display for TensorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TensorKind::Standard => "standard",
            TensorKind::Factorized => "factorized",
            TensorKind::Transform => "transform",
        })
    }
}

impl FromStr for TensorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(TensorKind::Standard),
            "factorized" => Ok(TensorKind::Factorized),
            "transform" => Ok(TensorKind::Transform),
            other => Err(Error::parse("tensor header", format!("unknown kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Encoding {
    #[default]
    Csv,
    Binary,
}

impl fmt::Display for Encoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Encoding::Csv => "csv",
            Encoding::Binary => "bin",
        })
    }
}

impl FromStr for Encoding {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Encoding::Csv),
            "bin" | "binary" => Ok(Encoding::Binary),
            other => Err(Error::Config(format!("unknown encoding {other:?} (expected csv or bin)"))),
        }
    }
}

/// Metadata line of a tensor container.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorHeader {
    pub kind: TensorKind,
    pub p: usize,
    pub accuracy: AccuracyParameter,
    pub n: u64,
    pub standardized: bool,
    pub encoding: Encoding,
}

impl TensorHeader {
    pub fn value_count(&self) -> usize {
        tensor_len(self.p, self.accuracy.basis_len())
    }
}

impl fmt::Display for TensorHeader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{TENSOR_MAGIC} {VERSION} kind={} p={} J={} jbar={} n={} standardized={} encoding={}",
            self.kind,
            self.p,
            self.accuracy.order(),
            self.accuracy,
            self.n,
            self.standardized,
            self.encoding
        )
    }
}

fn key_values<'a>(line: &'a str, magic: &str, ctx: &str) -> Result<HashMap<&'a str, &'a str>> {
    let mut it = line.split_whitespace();
    if it.next() != Some(magic) {
        return Err(Error::parse(ctx, format!("missing {magic} header")));
    }
    match it.next() {
        Some(VERSION) => {}
        Some(v) => return Err(Error::parse(ctx, format!("unsupported version {v}"))),
        None => return Err(Error::parse(ctx, "missing version")),
    }
    it.map(|kv| {
        kv.split_once('=')
            .ok_or_else(|| Error::parse(ctx, format!("malformed header field {kv:?}")))
    })
    .collect()
}

fn field<'a>(map: &HashMap<&str, &'a str>, key: &str, ctx: &str) -> Result<&'a str> {
    map.get(key)
        .copied()
        .ok_or_else(|| Error::parse(ctx, format!("header lacks {key}=")))
}

fn parse_field<V: FromStr>(map: &HashMap<&str, &str>, key: &str, ctx: &str) -> Result<V> {
    let raw = field(map, key, ctx)?;
    raw.parse()
        .map_err(|_| Error::parse(ctx, format!("bad value {raw:?} for {key}")))
}

fn read_header_line<R: BufRead>(r: &mut R, ctx: &str) -> Result<String> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.is_empty() {
        return Err(Error::parse(ctx, "empty file"));
    }
    Ok(line.trim_end().to_string())
}

/// Writes a header and its values.
pub fn write_tensor_container(w: &mut dyn Write, header: &TensorHeader, values: &[f64]) -> Result<()> {
    if values.len() != header.value_count() {
        return Err(Error::ShapeMismatch(format!(
            "header promises {} values, got {}",
            header.value_count(),
            values.len()
        )));
    }
    writeln!(w, "{header}")?;
    match header.encoding {
        Encoding::Csv => {
            for v in values {
                writeln!(w, "{v}")?;
            }
        }
        Encoding::Binary => {
            for v in values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Reads a container, checking that the value count matches the header.
pub fn read_tensor_container<R: BufRead>(mut r: R, source: &str) -> Result<(TensorHeader, Vec<f64>)> {
    let line = read_header_line(&mut r, source)?;
    let ctx = format!("{source}:1");
    let map = key_values(&line, TENSOR_MAGIC, &ctx)?;
    let accuracy: AccuracyParameter = field(&map, "jbar", &ctx)?
        .parse()
        .map_err(|e: Error| Error::parse(&ctx, e.to_string()))?;
    let order: usize = parse_field(&map, "J", &ctx)?;
    if order != accuracy.order() {
        return Err(Error::parse(&ctx, format!("J={order} does not match jbar={accuracy}")));
    }
    let header = TensorHeader {
        kind: field(&map, "kind", &ctx)?.parse()?,
        p: parse_field(&map, "p", &ctx)?,
        accuracy,
        n: parse_field(&map, "n", &ctx)?,
        standardized: parse_field(&map, "standardized", &ctx)?,
        encoding: parse_field(&map, "encoding", &ctx)?,
    };
    if header.p == 0 || header.p > 16 {
        return Err(Error::parse(&ctx, format!("unsupported p={}", header.p)));
    }
    let expected = header.value_count();
    let values = match header.encoding {
        Encoding::Csv => {
            let mut values = Vec::with_capacity(expected);
            for (i, line) in r.lines().enumerate() {
                let line = line?;
                let t = line.trim();
                if t.is_empty() {
                    continue;
                }
                let v: f64 = t
                    .parse()
                    .map_err(|_| Error::parse(format!("{source}:{}", i + 2), format!("bad value {t:?}")))?;
                values.push(v);
            }
            values
        }
        Encoding::Binary => {
            let mut bytes = Vec::new();
            r.read_to_end(&mut bytes)?;
            if bytes.len() % 8 != 0 {
                return Err(Error::parse(source, "binary payload is not a whole number of f64 values"));
            }
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect()
        }
    };
    if values.len() != expected {
        return Err(Error::parse(
            source,
            format!("expected {expected} values, found {}", values.len()),
        ));
    }
    Ok((header, values))
}

fn to_f64<T: Scalar>(values: &[T]) -> Vec<f64> {
    values.iter().map(|v| v.as_f64()).collect()
}

fn from_f64<T: Scalar>(values: Vec<f64>) -> Vec<T> {
    values.into_iter().map(T::of).collect()
}

fn expect_kind(header: &TensorHeader, kind: TensorKind, source: &str) -> Result<()> {
    if header.kind != kind {
        return Err(Error::parse(source, format!("expected a {kind} tensor, found {}", header.kind)));
    }
    Ok(())
}

pub fn write_sketch<T: Scalar>(w: &mut dyn Write, t: &SketchTensor<T>, encoding: Encoding) -> Result<()> {
    let header = TensorHeader {
        kind: TensorKind::Standard,
        p: t.dim(),
        accuracy: t.accuracy().clone(),
        n: t.count(),
        standardized: t.is_standardized(),
        encoding,
    };
    write_tensor_container(w, &header, &to_f64(t.values()))
}

pub fn read_sketch<T: Scalar>(path: &Path) -> Result<SketchTensor<T>> {
    let source = path.display().to_string();
    let (h, values) = read_tensor_container(open(path)?, &source)?;
    expect_kind(&h, TensorKind::Standard, &source)?;
    SketchTensor::from_parts(h.accuracy, h.p, from_f64(values), h.n, h.standardized)
}

pub fn write_factorized<T: Scalar>(w: &mut dyn Write, t: &FactorizedTensor<T>, encoding: Encoding) -> Result<()> {
    let header = TensorHeader {
        kind: TensorKind::Factorized,
        p: t.dim(),
        accuracy: t.accuracy().clone(),
        n: t.count(),
        standardized: t.is_standardized(),
        encoding,
    };
    write_tensor_container(w, &header, &to_f64(t.values()))
}

pub fn read_factorized<T: Scalar>(path: &Path) -> Result<FactorizedTensor<T>> {
    let source = path.display().to_string();
    let (h, values) = read_tensor_container(open(path)?, &source)?;
    expect_kind(&h, TensorKind::Factorized, &source)?;
    FactorizedTensor::from_parts(h.accuracy, h.p, from_f64(values), h.n, h.standardized)
}

pub fn write_transform(w: &mut dyn Write, tf: &Transform1D, encoding: Encoding) -> Result<()> {
    let header = TensorHeader {
        kind: TensorKind::Transform,
        p: 2,
        accuracy: tf.accuracy().clone(),
        n: 0,
        standardized: false,
        encoding,
    };
    write_tensor_container(w, &header, tf.matrix())
}

pub fn read_transform(path: &Path) -> Result<Transform1D> {
    let source = path.display().to_string();
    let (h, values) = read_tensor_container(open(path)?, &source)?;
    expect_kind(&h, TensorKind::Transform, &source)?;
    if h.p != 2 {
        return Err(Error::parse(&source, "a transform must have p=2"));
    }
    Transform1D::from_matrix(h.accuracy, values)
}

pub fn write_tree<T: Scalar>(w: &mut dyn Write, tree: &KdTree<T>) -> Result<()> {
    let jbar = tree.accuracy().map_or_else(|| "exact".to_string(), |a| a.to_string());
    writeln!(
        w,
        "{TREE_MAGIC} {VERSION} p={} depth={} jbar={jbar} n={}",
        tree.dim(),
        tree.depth(),
        tree.count()
    )?;
    for node in tree.nodes() {
        writeln!(
            w,
            "{} {} {} {} {}",
            node.depth,
            node.cell,
            node.axis + 1,
            node.split.as_f64(),
            u8::from(node.degenerate)
        )?;
    }
    Ok(())
}

pub fn parse_tree<T: Scalar, R: BufRead>(mut r: R, source: &str) -> Result<KdTree<T>> {
    let line = read_header_line(&mut r, source)?;
    let ctx = format!("{source}:1");
    let map = key_values(&line, TREE_MAGIC, &ctx)?;
    let p: usize = parse_field(&map, "p", &ctx)?;
    let depth: usize = parse_field(&map, "depth", &ctx)?;
    let n: u64 = parse_field(&map, "n", &ctx)?;
    let accuracy = match field(&map, "jbar", &ctx)? {
        "exact" => None,
        s => Some(s.parse().map_err(|e: Error| Error::parse(&ctx, e.to_string()))?),
    };
    if p == 0 || depth == 0 || depth > crate::tree::MAX_DEPTH {
        return Err(Error::parse(&ctx, format!("unsupported p={p} depth={depth}")));
    }
    let mut splits = Vec::with_capacity((1 << depth) - 1);
    for (i, line) in r.lines().enumerate() {
        let ctx = format!("{source}:{}", i + 2);
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 5 {
            return Err(Error::parse(&ctx, format!("expected 5 fields, found {}", fields.len())));
        }
        let num = |k: usize| -> Result<usize> {
            fields[k]
                .parse()
                .map_err(|_| Error::parse(&ctx, format!("bad integer {:?}", fields[k])))
        };
        let (d, k, t) = (num(0)?, num(1)?, num(2)?);
        let split: f64 = fields[3]
            .parse()
            .map_err(|_| Error::parse(&ctx, format!("bad split {:?}", fields[3])))?;
        let degenerate = match fields[4] {
            "0" => false,
            "1" => true,
            other => return Err(Error::parse(&ctx, format!("bad flag {other:?}"))),
        };
        if d == 0 || d > depth || k == 0 || k > 1 << (d - 1) || node_position(d, k) != splits.len() {
            return Err(Error::parse(&ctx, format!("node ({d}, {k}) out of level order")));
        }
        if t != axis_at(d, p) + 1 {
            return Err(Error::parse(&ctx, format!("node ({d}, {k}) splits coordinate {t}, expected {}", axis_at(d, p) + 1)));
        }
        splits.push((T::of(split), degenerate));
    }
    KdTree::from_splits(p, depth, accuracy, n, &splits).map_err(|e| Error::parse(source, e.to_string()))
}

pub fn read_tree<T: Scalar>(path: &Path) -> Result<KdTree<T>> {
    parse_tree(open(path)?, &path.display().to_string())
}

pub fn write_audit(w: &mut dyn Write, audit: &CellAudit) -> Result<()> {
    writeln!(w, "{AUDIT_HEADER}")?;
    let rel = audit.rel_deviations();
    for (i, &c) in audit.counts.iter().enumerate() {
        writeln!(w, "{},{},{},{},{}", audit.depth, i + 1, c, (c as f64).log2(), rel[i])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factorized::build_transform_1d;
    use crate::tree::build_exact_tree;

    #[test]
    fn points_parse_with_context() {
        let ok = "0.1,0.2\n# comment\n\n0.3,0.4\n";
        let pts: PointSet<f64> = parse_points(ok.as_bytes(), "mem", None).unwrap();
        assert_eq!(pts.len(), 2);
        let err = parse_points::<f64, _>("0.1,0.2\n0.3,x\n".as_bytes(), "data.csv", None).unwrap_err();
        assert!(err.to_string().contains("data.csv:2"), "{err}");
        let err = parse_points::<f64, _>("0.1,0.2\n0.3\n".as_bytes(), "d", None).unwrap_err();
        assert!(err.to_string().contains("d:2"));
        assert!(parse_points::<f64, _>("0.1\n1.0\n".as_bytes(), "d", None).is_err());
        assert!(parse_points::<f64, _>("0.1\n".as_bytes(), "d", Some(2)).is_err());
    }

    #[test]
    fn tensor_round_trip_both_encodings() {
        let t = SketchTensor::from_parts(
            AccuracyParameter::single(1).unwrap(),
            1,
            vec![1.0, 0.1f64.cos(), 1.0 / 3.0],
            7,
            true,
        )
        .unwrap();
        for enc in [Encoding::Csv, Encoding::Binary] {
            let mut buf = Vec::new();
            write_sketch(&mut buf, &t, enc).unwrap();
            let (h, values) = read_tensor_container(buf.as_slice(), "mem").unwrap();
            assert_eq!(h.encoding, enc);
            let back = SketchTensor::from_parts(h.accuracy, h.p, values, h.n, h.standardized).unwrap();
            assert_eq!(back, t);
        }
    }

    #[test]
    fn tensor_header_validation() {
        let bad = "KDSKETCH v1 kind=standard p=1 J=2 jbar=1 n=1 standardized=true encoding=csv\n1\n2\n3\n";
        assert!(read_tensor_container(bad.as_bytes(), "x").is_err());
        let short = "KDSKETCH v1 kind=standard p=1 J=1 jbar=1 n=1 standardized=true encoding=csv\n1\n2\n";
        assert!(read_tensor_container(short.as_bytes(), "x").is_err());
        let v2 = "KDSKETCH v2 kind=standard p=1 J=1 jbar=1 n=1 standardized=true encoding=csv\n1\n2\n3\n";
        assert!(read_tensor_container(v2.as_bytes(), "x").is_err());
    }

    #[test]
    fn transform_round_trip() {
        let tf = build_transform_1d(&"2,2".parse().unwrap()).unwrap();
        let mut buf = Vec::new();
        write_transform(&mut buf, &tf, Encoding::Csv).unwrap();
        let (h, values) = read_tensor_container(buf.as_slice(), "mem").unwrap();
        assert_eq!(h.kind, TensorKind::Transform);
        assert_eq!(values, tf.matrix());
    }

    #[test]
    fn tree_round_trip() {
        let pts = PointSet::new(2, (1..=64).map(|i| (i as f64 * 0.618).fract().max(0.01)).collect()).unwrap();
        let tree = build_exact_tree(&pts, 3).unwrap();
        let mut buf = Vec::new();
        write_tree(&mut buf, &tree).unwrap();
        let back: KdTree<f64> = parse_tree(buf.as_slice(), "mem").unwrap();
        assert_eq!(back, tree);
        let text = String::from_utf8(buf).unwrap();
        let broken = text.replacen("\n1 1 1 ", "\n1 1 2 ", 1);
        assert!(parse_tree::<f64, _>(broken.as_bytes(), "mem").is_err());
    }
}
