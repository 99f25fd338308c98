use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use combnet_core::config::Config;
use combnet_core::graph::{build_graph, init_weights, save_weights};
use combnet_core::postprocess::pgm::{write_pgm, Gray16};

fn combnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_combnet"))
        .args(args)
        .env_remove("COMBNET_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn reference_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.toml")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn count_reference_config() {
    let o = combnet(&["count", "--config", p(&reference_config())]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("budget OK"), "{out}");
    assert!(out.contains("heads.primary"));
}

#[test]
fn config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[network]\nresolution = [90, 96]\n").unwrap();
    assert_eq!(combnet(&["count", "--config", p(&bad)]).status.code(), Some(3));
    std::fs::write(&bad, "[network]\nno_such_key = 1\n").unwrap();
    assert_eq!(combnet(&["count", "--config", p(&bad)]).status.code(), Some(3));
    let missing = dir.path().join("missing.toml");
    assert_eq!(combnet(&["count", "--config", p(&missing)]).status.code(), Some(2));
}

#[test]
fn verify_passes_and_is_deterministic() {
    let a = combnet(&["verify", "--cases", "24"]);
    assert_eq!(a.status.code(), Some(0), "{}", stdout(&a));
    let b = combnet(&["verify", "--cases", "24"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn verify_detects_perturbation() {
    let o = combnet(&["verify", "--cases", "24", "--perturb", "0.01"]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    let line = out.lines().find(|l| l.starts_with("conv-packed")).unwrap();
    assert!(line.contains("FAIL"), "{line}");
}

#[test]
fn seed_env_overrides_flag() {
    let o = Command::new(env!("CARGO_BIN_EXE_combnet"))
        .args(["verify", "--cases", "4", "--seed", "3"])
        .env("COMBNET_SEED", "11")
        .output()
        .unwrap();
    assert!(stdout(&o).starts_with("seed 11\n"));
    let o = combnet(&["verify", "--cases", "4", "--seed", "3"]);
    assert!(stdout(&o).starts_with("seed 3\n"));
}

#[test]
fn bench_single_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bench.csv");
    let o = combnet(&["bench", "--iters", "1", "--warmup", "0", "--csv", p(&csv)]);
    assert_eq!(o.status.code(), Some(0));
    let table = stdout(&o);
    let csv = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 11);
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f[3], "1");
        // the table shows the same formatted numbers
        let line = table
            .lines()
            .find(|l| l.starts_with(f[0]) && l.split_whitespace().nth(1) == Some(f[1]))
            .unwrap();
        for v in &f[4..] {
            assert!(line.contains(v), "{line} lacks {v}");
        }
    }
    assert_eq!(combnet(&["bench", "--iters", "0"]).status.code(), Some(2));
}

struct Frame {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Frame {
    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

/// Seeded weights, a 128x96 amplitude image, four phases and a depth map.
fn frame(hand_bias: Option<f32>) -> Frame {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let g = build_graph(&Config::default().network).unwrap();
    let mut ws = init_weights(&g, 5).inference_subset(&g).unwrap();
    if let Some(b) = hand_bias {
        let bias = ws.get_mut("heads.visibility.bias").unwrap();
        bias.data[16] = b;
        bias.data[17] = b;
    }
    save_weights(&ws, root.join("w.cnwb")).unwrap();
    let (w, h) = (128, 96);
    let img = |f: &dyn Fn(usize, usize) -> u16| {
        Gray16::new(w, h, (0..w * h).map(|i| f(i % w, i / w)).collect()).unwrap()
    };
    write_pgm(root.join("amp.pgm"), &img(&|x, y| ((x * 500 + y * 300) % 65536) as u16)).unwrap();
    for k in 0..4 {
        write_pgm(root.join(format!("p{k}.pgm")), &img(&|x, y| ((x * 97 + y * 31 + k * 1000) % 60000) as u16)).unwrap();
    }
    write_pgm(root.join("depth.pgm"), &img(&|x, _| if x % 7 == 0 { 0 } else { 400 + x as u16 })).unwrap();
    Frame { _dir: dir, root }
}

fn infer(f: &Frame, extra: &[&str]) -> Output {
    let w = f.path("w.cnwb");
    let mut args = vec!["infer", "--weights", p(&w)];
    args.extend_from_slice(extra);
    combnet(&args)
}

#[test]
fn infer_is_deterministic() {
    let f = frame(Some(1000.0));
    let (amp, depth, out) = (f.path("amp.pgm"), f.path("depth.pgm"), f.path("out.json"));
    let a = infer(&f, &["--amplitude", p(&amp), "--depth", p(&depth), "--out", p(&out)]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    let first = std::fs::read(&out).unwrap();
    let b = infer(&f, &["--amplitude", p(&amp), "--depth", p(&depth)]);
    assert_eq!(b.stdout, first);

    let v: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(v["early_out"], false);
    let hands = v["hands"].as_array().unwrap();
    assert_eq!(hands.len(), 2);
    for hand in hands {
        assert_eq!(hand["present"], true);
        for k in hand["keypoints"].as_array().unwrap() {
            let (u, v) = (k["u"].as_f64().unwrap(), k["v"].as_f64().unwrap());
            assert!((0.0..128.0).contains(&u) && (0.0..96.0).contains(&v));
            if k["depth_valid"] == true {
                let z = k["z"].as_f64().unwrap();
                assert!((100.0..=1000.0).contains(&z));
            } else {
                assert!(k["z"].is_null());
            }
        }
    }
}

#[test]
fn infer_from_phases() {
    let f = frame(None);
    let ps: Vec<PathBuf> = (0..4).map(|k| f.path(&format!("p{k}.pgm"))).collect();
    let depth = f.path("depth.pgm");
    let o = infer(&f, &["--phases", p(&ps[0]), p(&ps[1]), p(&ps[2]), p(&ps[3]), "--depth", p(&depth)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["hands"].is_array());
}

#[test]
fn infer_early_out_with_crafted_weights() {
    let f = frame(Some(-1000.0));
    let (amp, depth) = (f.path("amp.pgm"), f.path("depth.pgm"));
    let o = infer(&f, &["--amplitude", p(&amp), "--depth", p(&depth)]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["early_out"], true);
    let visible = v["hands"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|h| h["keypoints"].as_array().unwrap())
        .filter(|k| k["visible"] == true)
        .count();
    assert_eq!(visible, 0);
}

#[test]
fn infer_missing_depth_writes_nothing() {
    let f = frame(None);
    let (amp, depth, out) = (f.path("amp.pgm"), f.path("nope.pgm"), f.path("out.json"));
    let o = infer(&f, &["--amplitude", p(&amp), "--depth", p(&depth), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
    assert!(!out.exists());
}

#[test]
fn infer_rejects_bad_inputs() {
    let f = frame(None);
    let (amp, depth) = (f.path("amp.pgm"), f.path("depth.pgm"));

    // corrupted weight file: diagnostic names the format error class
    let mut bytes = std::fs::read(f.path("w.cnwb")).unwrap();
    let n = bytes.len();
    bytes[n - 1] ^= 0xff;
    std::fs::write(f.path("w.cnwb"), &bytes).unwrap();
    let o = infer(&f, &["--amplitude", p(&amp), "--depth", p(&depth)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("W03"));

    // depth of a different size
    let f = frame(None);
    let amp = f.path("amp.pgm");
    write_pgm(f.path("small.pgm"), &Gray16::filled(10, 10, 500)).unwrap();
    let small = f.path("small.pgm");
    let o = infer(&f, &["--amplitude", p(&amp), "--depth", p(&small)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn init_writes_deployable_weights() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("w.cnwb");
    let o = combnet(&["init", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(std::fs::metadata(&out).unwrap().len() <= 300_000);
}
