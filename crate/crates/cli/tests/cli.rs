use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

fn memvo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memvo"))
        .args(args)
        .output()
        .expect("spawn memvo")
}

fn ok(args: &[&str]) {
    let out = memvo(args);
    assert!(
        out.status.success(),
        "memvo {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Every file under `dir`, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

const SPEC: &str = r#"{"sequences": 2, "frames": 8, "height": 64, "width": 64}"#;
const CONFIG: &str = r#"{"window_length": 5, "batch_size": 2, "iterations": 3}"#;

/// synth-data → train → infer → eval → saliency → plot-data in `root`.
fn pipeline(root: &Path, seed: &str) {
    std::fs::write(root.join("spec.json"), SPEC).unwrap();
    std::fs::write(root.join("cfg.json"), CONFIG).unwrap();
    let out = root.join("out");
    let (seq, ckpt) = (out.join("seq"), out.join("ckpt"));
    let est = out.join("est.txt");
    ok(&[
        "synth-data",
        "--spec",
        p(&root.join("spec.json")),
        "--out",
        p(&seq),
        "--seed",
        seed,
    ]);
    ok(&[
        "train",
        "--config",
        p(&root.join("cfg.json")),
        "--data",
        p(&seq),
        "--out",
        p(&ckpt),
        "--seed",
        seed,
    ]);
    ok(&[
        "infer",
        "--checkpoint",
        p(&ckpt),
        "--data",
        p(&seq),
        "--out",
        p(&est),
        "--stride",
        "2",
    ]);
    let gt = seq.join("seq_000").join("poses.txt");
    ok(&[
        "eval",
        "--format",
        "kitti",
        "--est",
        p(&est),
        "--gt",
        p(&gt),
        "--out",
        p(&out.join("metrics.csv")),
        "--lengths",
        "0.1,0.2",
    ]);
    ok(&[
        "saliency",
        "--checkpoint",
        p(&ckpt),
        "--data",
        p(&seq),
        "--out",
        p(&out.join("saliency")),
        "--target",
        "2",
    ]);
    ok(&[
        "plot-data",
        "--est",
        p(&est),
        "--gt",
        p(&gt),
        "--out",
        p(&out.join("plot")),
        "--lengths",
        "0.1,0.2",
        "--speed-bin",
        "0.25",
    ]);
}

#[test]
fn training_writes_monotone_loss_history() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path(), "3");
    let csv = std::fs::read_to_string(dir.path().join("out/ckpt/loss.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("iteration,loss_local,loss_global,loss_total"));
    let iterations: Vec<u64> = lines
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(iterations, [0, 1, 2]);
    for file in ["manifest.json", "config.json"] {
        assert!(dir.path().join("out/ckpt").join(file).exists());
    }
    assert_eq!(
        std::fs::read_dir(dir.path().join("out/saliency"))
            .unwrap()
            .count(),
        5
    );
    let est = std::fs::read_to_string(dir.path().join("out/est.txt")).unwrap();
    assert_eq!(est.lines().count(), 8);
}

#[test]
fn same_seed_gives_byte_identical_outputs() {
    let (a, b, c) = (
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
        tempfile::tempdir().unwrap(),
    );
    pipeline(a.path(), "7");
    pipeline(b.path(), "7");
    pipeline(c.path(), "8");
    let (sa, sb, sc) = (
        snapshot(&a.path().join("out")),
        snapshot(&b.path().join("out")),
        snapshot(&c.path().join("out")),
    );
    assert_eq!(sa.keys().collect::<Vec<_>>(), sb.keys().collect::<Vec<_>>());
    for (name, bytes) in &sa {
        assert!(bytes == &sb[name], "{name} differs between identical runs");
    }
    assert_ne!(sa["ckpt/loss.csv"], sc["ckpt/loss.csv"]);
}

#[test]
fn self_comparison_gives_zero_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let poses: String = (0..300)
        .map(|i| format!("1 0 0 0 0 1 0 0 0 0 1 {}\n", i as f64 * 3.0))
        .collect();
    let est = dir.path().join("est.txt");
    std::fs::write(&est, poses).unwrap();
    let out = dir.path().join("m.csv");
    ok(&[
        "eval",
        "--format",
        "kitti",
        "--est",
        p(&est),
        "--gt",
        p(&est),
        "--out",
        p(&out),
    ]);
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("length,segments,t_rel,r_rel"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 9);
    assert!(rows.iter().all(|r| r[2] == 0.0 && r[3] == 0.0));
    assert!(rows.iter().any(|r| r[1] > 0.0));

    let tum: String = (0..100)
        .map(|i| format!("{} {} 0 0 0 0 0 1\n", i as f64 * 0.1, i as f64 * 0.05))
        .collect();
    let tum_path = dir.path().join("est.tum");
    std::fs::write(&tum_path, tum).unwrap();
    ok(&[
        "eval",
        "--format",
        "tum",
        "--est",
        p(&tum_path),
        "--gt",
        p(&tum_path),
        "--out",
        p(&out),
    ]);
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("rmse,pairs,associated,scale\n0,"), "{csv}");
}

#[test]
fn errors_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.txt");
    let out = dir.path().join("m.csv");
    let cases: Vec<Vec<&str>> = vec![
        vec![
            "eval",
            "--format",
            "kitti",
            "--est",
            p(&missing),
            "--gt",
            p(&missing),
            "--out",
            p(&out),
        ],
        vec!["train", "--data", p(&missing), "--out", p(&out)],
        vec![
            "infer",
            "--checkpoint",
            p(&missing),
            "--data",
            p(&missing),
            "--out",
            p(&out),
        ],
        vec![
            "eval", "--format", "bogus", "--est", "a", "--gt", "b", "--out", "c",
        ],
        vec!["synth-data", "--out", p(dir.path()), "--unknown-flag"],
        vec!["frobnicate"],
    ];
    for args in cases {
        let o = memvo(&args);
        assert!(!o.status.success(), "{args:?} succeeded");
        let stderr = String::from_utf8_lossy(&o.stderr);
        assert!(!stderr.trim().is_empty(), "{args:?}: no message");
        assert!(!stderr.contains("panicked"), "{args:?}: {stderr}");
    }
    assert!(!out.exists());

    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0\n").unwrap();
    let o = memvo(&[
        "eval",
        "--format",
        "kitti",
        "--est",
        p(&bad),
        "--gt",
        p(&bad),
        "--out",
        p(&out),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    assert!(!out.exists());

    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"window_lenght": 5}"#).unwrap();
    let o = memvo(&[
        "train",
        "--config",
        p(&cfg),
        "--data",
        p(dir.path()),
        "--out",
        p(&dir.path().join("ck")),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("window_lenght"));
}
