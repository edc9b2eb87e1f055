use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kdsketch"))
        .args(args)
        .output()
        .expect("spawn kdsketch")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Header line and values of a csv-encoded tensor file.
fn tensor(path: &Path) -> (String, Vec<f64>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    (header, lines.map(|l| l.parse().unwrap()).collect())
}

/// Deterministic points in the open unit square.
fn write_points(dir: &Path, name: &str, rows: &[(f64, f64)]) -> PathBuf {
    let path = dir.join(name);
    let text: String = rows.iter().map(|(x, y)| format!("{x},{y}\n")).collect();
    fs::write(&path, text).unwrap();
    path
}

fn lattice(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let u = ((i as f64 + 0.5) * 0.618_033_988_749_894_9).fract();
            let v = ((i as f64 + 0.5) * 0.754_877_666_246_692_8).fract();
            (u, v)
        })
        .collect()
}

#[test]
fn three_point_sketch_matches_hand_sums() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("three.csv");
    fs::write(&input, "0.1\n0.5\n0.9\n").unwrap();
    let out = dir.path().join("s.csv");
    let stdout = ok(&["sketch", "--input", s(&input), "--Jbar", "1", "--output", s(&out)]);
    assert!(stdout.contains("points_read=3"));
    assert!(stdout.contains("trig_calls=3"));
    let (header, values) = tensor(&out);
    assert!(header.contains("kind=standard p=1 J=1 jbar=1 n=3 standardized=true"));
    let xs = [0.1f64, 0.5, 0.9];
    let sums = [3.0, xs.iter().map(|x| x.cos()).sum::<f64>(), xs.iter().map(|x| x.sin()).sum::<f64>()];
    for (v, want) in values.iter().zip(sums) {
        assert!((v * 3.0 - want).abs() < 1e-12, "{v} vs {want}");
    }
    for side in [".factorized", ".transform"] {
        assert!(dir.path().join(format!("s.csv{side}")).is_file());
    }
}

#[test]
fn shard_files_do_not_change_the_sketch() {
    let dir = TempDir::new().unwrap();
    let rows = lattice(4000);
    let whole = write_points(dir.path(), "all.csv", &rows);
    let mut parts = Vec::new();
    for (k, chunk) in rows.chunks(500).enumerate() {
        parts.push(write_points(dir.path(), &format!("part{k}.csv"), chunk));
    }
    let one = dir.path().join("one");
    let eight = dir.path().join("eight");
    ok(&["sketch", "--input", s(&whole), "--Jbar", "3,5", "--output", s(&one)]);
    let mut args = vec!["sketch", "--Jbar", "3,5", "--parallelism", "4", "--output", s(&eight), "--input"];
    args.extend(parts.iter().map(|p| s(p)));
    let stdout = ok(&args);
    assert!(stdout.contains("shards=8"));
    // The factorized sums differ only by summation order. The recovered tensor
    // carries that difference through the transform, whose entries are large.
    for (suffix, tol) in [(".factorized", 1e-12), ("", 1e-9)] {
        let (h1, v1) = tensor(&PathBuf::from(format!("{}{suffix}", one.display())));
        let (h8, v8) = tensor(&PathBuf::from(format!("{}{suffix}", eight.display())));
        assert_eq!(h1, h8);
        assert_eq!(v1.len(), v8.len());
        for (a, b) in v1.iter().zip(&v8) {
            assert!((a - b).abs() <= tol * 1f64.max(a.abs()), "{suffix}: {a} vs {b}");
        }
    }
    assert_eq!(
        fs::read(format!("{}.transform", one.display())).unwrap(),
        fs::read(format!("{}.transform", eight.display())).unwrap()
    );
}

#[test]
fn malformed_input_fails_without_output() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "0.1,0.2\n0.3,oops\n").unwrap();
    let out = dir.path().join("s.csv");
    let res = run(&["sketch", "--input", s(&bad), "--Jbar", "2", "--output", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("bad.csv:2"), "{err}");
    let leftovers: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(leftovers.len(), 1, "{leftovers:?}");

    fs::write(&bad, "0.1,0.2\n0.3,1.5\n").unwrap();
    let res = run(&["sketch", "--input", s(&bad), "--Jbar", "2", "--output", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn exit_codes_for_usage_and_numeric_failures() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x");
    // Generated data without a seed.
    assert_eq!(run(&["sketch", "--Jbar", "3,5", "--p", "2", "--output", s(&out)]).status.code(), Some(1));
    assert_eq!(run(&["sketch", "--Jbar", "0,5", "--p", "2", "--seed", "1", "--output", s(&out)]).status.code(), Some(1));
    assert_eq!(run(&["build", "--input", s(&out), "--depth", "0", "--output", s(&out)]).status.code(), Some(1));
    assert_eq!(run(&["accuracy-study", "--output", s(&out)]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    // A leading factor this long has no double-precision transform.
    let res = run(&["sketch", "--Jbar", "13", "--p", "1", "--seed", "1", "--n", "100", "--output", s(&out)]);
    assert_eq!(res.status.code(), Some(3));
    assert!(!out.exists());
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn build_root_of_uniform_sketch() {
    let dir = TempDir::new().unwrap();
    let sk = dir.path().join("u.sk");
    let stdout = ok(&[
        "sketch", "--seed", "3", "--n", "100000", "--p", "2", "--distribution", "uniform", "--Jbar", "8,8",
        "--shards", "4", "--format", "bin", "--output", s(&sk),
    ]);
    assert!(stdout.contains("n=100000"));
    let tree = dir.path().join("u.tree");
    ok(&["build", "--input", s(&sk), "--depth", "1", "--p", "2", "--Jbar", "8,8", "--output", s(&tree)]);
    let text = fs::read_to_string(&tree).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "KDTREE v1 p=2 depth=1 jbar=8,8 n=100000");
    let fields: Vec<&str> = lines.next().unwrap().split_whitespace().collect();
    assert_eq!(&fields[..3], &["1", "1", "1"]);
    let split: f64 = fields[3].parse().unwrap();
    assert!((split - 0.5).abs() < 0.01, "{split}");

    let res = run(&["build", "--input", s(&sk), "--depth", "1", "--p", "3", "--output", s(&tree)]);
    assert_eq!(res.status.code(), Some(2));
    let res = run(&["build", "--input", s(&sk), "--depth", "1", "--Jbar", "64", "--output", s(&tree)]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn audits_of_exact_and_approximate_trees() {
    let dir = TempDir::new().unwrap();
    let rows = lattice(20_000);
    let data = write_points(dir.path(), "d.csv", &rows);
    let sk = dir.path().join("d.sk");
    ok(&["sketch", "--input", s(&data), "--Jbar", "4,4", "--output", s(&sk)]);
    let approx_tree = dir.path().join("approx.tree");
    let exact_tree = dir.path().join("exact.tree");
    ok(&["build", "--input", s(&sk), "--depth", "4", "--output", s(&approx_tree)]);
    ok(&["exact", "--input", s(&data), "--depth", "4", "--output", s(&exact_tree)]);

    let mut headers = Vec::new();
    for (tree, name) in [(&approx_tree, "approx.csv"), (&exact_tree, "exact.csv")] {
        let audit = dir.path().join(name);
        let stdout = ok(&["audit", "--tree", s(tree), "--input", s(&data), "--output", s(&audit)]);
        let text = fs::read_to_string(&audit).unwrap();
        headers.push(text.lines().next().unwrap().to_string());
        let counted: u64 = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(2).unwrap().parse::<u64>().unwrap())
            .sum();
        assert_eq!(text.lines().count(), 17);
        let discarded: u64 = stdout
            .split_whitespace()
            .find_map(|f| f.strip_prefix("discarded="))
            .unwrap()
            .parse()
            .unwrap();
        assert_eq!(counted, 20_000 - discarded, "{stdout}");
    }
    assert_eq!(headers[0], headers[1]);
    assert_eq!(headers[0], "depth,leaf_index,count,log2_count,rel_deviation");
}

#[test]
fn scaling_flag_maps_raw_data_into_the_cube() {
    let dir = TempDir::new().unwrap();
    let raw: Vec<(f64, f64)> = lattice(3000).iter().map(|(u, v)| (10.0 * u - 3.0, 100.0 * v)).collect();
    let data = write_points(dir.path(), "raw.csv", &raw);
    let out = dir.path().join("raw.sk");
    assert_eq!(
        run(&["sketch", "--input", s(&data), "--Jbar", "2", "--output", s(&out)]).status.code(),
        Some(2)
    );
    ok(&["sketch", "--input", s(&data), "--scale", "--Jbar", "2", "--output", s(&out)]);
    let exact = dir.path().join("raw.tree");
    ok(&["exact", "--input", s(&data), "--scale", "--depth", "3", "--output", s(&exact)]);
}

#[test]
fn transform_and_studies() {
    let dir = TempDir::new().unwrap();
    let tf = dir.path().join("tf");
    let stdout = ok(&["transform", "--Jbar", "3,5", "--output", s(&tf)]);
    assert!(stdout.contains("method="));
    let (header, values) = tensor(&tf);
    assert!(header.contains("kind=transform p=2 J=15 jbar=3,5"));
    assert_eq!(values.len(), 31 * 31);

    let cfg = dir.path().join("study.cfg");
    fs::write(
        &cfg,
        "n = 20000\np = 2\nrho = 0, 0.5\ndepths = 2, 4\naccuracy_grid = 2,2; 3\nseeds = 1\n",
    )
    .unwrap();
    let acc = dir.path().join("acc.csv");
    ok(&["accuracy-study", "--config", s(&cfg), "--seed", "5", "6", "--output", s(&acc)]);
    let text = fs::read_to_string(&acc).unwrap();
    assert!(text.starts_with("rho,depth,jbar,seed,"));
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 2 * 2);
    let again = dir.path().join("acc2.csv");
    ok(&["accuracy-study", "--config", s(&cfg), "--seed", "5", "6", "--output", s(&again)]);
    assert_eq!(text, fs::read_to_string(&again).unwrap());

    let rt = dir.path().join("rt.csv");
    ok(&["runtime-study", "--config", s(&cfg), "--output", s(&rt)]);
    let text = fs::read_to_string(&rt).unwrap();
    assert!(text.starts_with("phase,jbar,rho,shards,parallelism,depth,seed,seconds"));
    assert!(text.lines().any(|l| l.starts_with("map,")));
}
