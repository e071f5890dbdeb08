use std::path::PathBuf;
use std::process::{Command, Output};

use chaostrack::data::{default_start_week, load_checkpoint, load_grid, save_grid};
use chaostrack::model::init_params;
use chaostrack::{DenseArray, GridSeries, Location};
use sha2::{Digest, Sha256};
use tempfile::TempDir;

const SMALL: &[&str] = &[
    "--dlc-hidden", "8", "--encoder-hidden", "8", "--latent-dim", "2", "--decoder-hidden", "8", "--window", "4",
];

struct Sandbox {
    dir: TempDir,
}

impl Sandbox {
    fn new() -> Self {
        Sandbox { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_chaostrack"))
            .args(args)
            .current_dir(self.dir.path())
            .output()
            .expect("spawn chaostrack")
    }

    fn ok(&self, args: &[&str]) {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} exited {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        );
    }

    fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.path(name)).unwrap()
    }

    fn digest(&self, name: &str) -> String {
        hex::encode(Sha256::digest(std::fs::read(self.path(name)).unwrap()))
    }

    fn files(&self) -> Vec<String> {
        let mut names: Vec<String> = std::fs::read_dir(self.dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        names
    }

    fn save(&self, name: &str, grid: &GridSeries) {
        save_grid(grid, self.path(name)).unwrap();
    }

    fn seasonal(&self, name: &str, steps: usize) {
        self.ok(&["synth", "--system", "seasonal", "--steps", &steps.to_string(), "--seed", "3", "--out", name]);
    }

    fn train_small(&self, data: &str, out: &str, extra: &[&str]) {
        let mut args = vec!["train", "--data", data, "--out", out];
        args.extend_from_slice(SMALL);
        args.extend_from_slice(extra);
        self.ok(&args);
    }
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}

fn grid(columns: &[Vec<f64>]) -> GridSeries {
    let t = columns[0].len();
    let data = (0..t).flat_map(|i| columns.iter().map(move |c| c[i])).collect();
    let locations = (0..columns.len())
        .map(|i| Location::new(format!("p{i}"), -40.0 + 10.0 * i as f64, 5.0 * i as f64))
        .collect();
    GridSeries::new(DenseArray::matrix(t, columns.len(), data).unwrap(), locations, default_start_week()).unwrap()
}

fn noise(seed: u64, len: usize) -> Vec<f64> {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..len)
        .map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect()
}

#[test]
fn synth_logistic_shape() {
    let sb = Sandbox::new();
    sb.ok(&["synth", "--system", "logistic", "--r", "4", "--x0", "0.2", "--steps", "1000", "--out", "l.csv"]);
    let g = load_grid(sb.path("l.csv")).unwrap();
    assert_eq!((g.len(), g.n_locations()), (1000, 1));
    assert!(sb.path("l.csv.manifest.json").exists());
}

#[test]
fn synth_missing_flag_is_usage_error() {
    let sb = Sandbox::new();
    let out = sb.run(&["synth", "--system", "logistic", "--out", "l.csv"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("--steps") && stderr.contains("Usage"), "{stderr}");
    assert!(sb.files().is_empty());
}

#[test]
fn synth_is_deterministic() {
    let sb = Sandbox::new();
    for name in ["a.bin", "b.bin"] {
        sb.ok(&["synth", "--system", "lorenz", "--steps", "200", "--out", name]);
    }
    assert_eq!(sb.digest("a.bin"), sb.digest("b.bin"));
}

#[test]
fn train_with_zero_lr_keeps_initialization() {
    let sb = Sandbox::new();
    sb.seasonal("d.csv", 80);
    sb.train_small("d.csv", "m.ckpt", &["--lr", "0", "--epochs", "3", "--init-seed", "9"]);
    let cp = load_checkpoint(sb.path("m.ckpt")).unwrap();
    assert_eq!(cp.model_config.seed, 9);
    let init = init_params(&cp.model_config).unwrap();
    assert_eq!(cp.params, init);
}

#[test]
fn one_epoch_gives_one_loss_row() {
    let sb = Sandbox::new();
    sb.seasonal("d.csv", 60);
    sb.train_small("d.csv", "m.ckpt", &["--epochs", "1"]);
    let csv = sb.read("m.ckpt.loss.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "epoch,recon,delta,kl,total");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("1,"));
}

#[test]
fn training_is_deterministic() {
    let sb = Sandbox::new();
    sb.seasonal("d.csv", 80);
    sb.train_small("d.csv", "a.ckpt", &["--epochs", "4", "--seed", "21"]);
    sb.train_small("d.csv", "b.ckpt", &["--epochs", "4", "--seed", "21"]);
    sb.train_small("d.csv", "c.ckpt", &["--epochs", "4", "--seed", "22"]);
    assert_eq!(sb.digest("a.ckpt"), sb.digest("b.ckpt"));
    assert_ne!(sb.digest("a.ckpt"), sb.digest("c.ckpt"));
}

#[test]
fn predict_row_counts_and_determinism() {
    let sb = Sandbox::new();
    sb.seasonal("d.csv", 120);
    sb.train_small("d.csv", "m.ckpt", &["--epochs", "2"]);

    sb.ok(&["predict", "--checkpoint", "m.ckpt", "--history", "d.csv", "--horizon", "1", "--out", "one.csv"]);
    assert_eq!(data_rows(&sb.read("one.csv")).len(), 1);
    assert_eq!(data_rows(&sb.read("one.xhat.csv")).len(), 1);
    assert_eq!(data_rows(&sb.read("one.delta.csv")).len(), 1);

    for name in ["p1.csv", "p2.csv"] {
        sb.ok(&["predict", "--checkpoint", "m.ckpt", "--history", "d.csv", "--horizon", "30", "--out", name]);
    }
    assert_eq!(sb.digest("p1.csv"), sb.digest("p2.csv"));

    let p = load_grid(sb.path("p1.csv")).unwrap();
    let d = load_grid(sb.path("d.csv")).unwrap();
    assert_eq!(p.start_week(), d.week(d.len()));
    let x = load_grid(sb.path("p1.xhat.csv")).unwrap();
    let delta = load_grid(sb.path("p1.delta.csv")).unwrap();
    for ((a, b), c) in x.values().data().iter().zip(delta.values().data()).zip(p.values().data()) {
        assert!((a + b - c).abs() <= 1e-12 * c.abs().max(1.0));
    }
}

#[test]
fn predict_ten_years_weekly() {
    let sb = Sandbox::new();
    sb.seasonal("d.csv", 100);
    sb.train_small("d.csv", "m.ckpt", &["--epochs", "1"]);
    sb.ok(&["predict", "--checkpoint", "m.ckpt", "--history", "d.csv", "--horizon", "520", "--out", "p.csv"]);
    assert_eq!(data_rows(&sb.read("p.csv")).len(), 520);
}

#[test]
fn predict_sample_mode_depends_on_seed() {
    let sb = Sandbox::new();
    sb.seasonal("d.csv", 80);
    sb.train_small("d.csv", "m.ckpt", &["--epochs", "1"]);
    let base = ["predict", "--checkpoint", "m.ckpt", "--history", "d.csv", "--horizon", "10", "--mode", "sample"];
    for (name, seed) in [("a.csv", "1"), ("b.csv", "1"), ("c.csv", "2")] {
        let mut args = base.to_vec();
        args.extend(["--sample-seed", seed, "--out", name]);
        sb.ok(&args);
    }
    assert_eq!(sb.digest("a.csv"), sb.digest("b.csv"));
    assert_ne!(sb.digest("a.csv"), sb.digest("c.csv"));
}

#[test]
fn predict_rejects_short_history_without_output() {
    let sb = Sandbox::new();
    sb.seasonal("d.csv", 60);
    sb.train_small("d.csv", "m.ckpt", &["--epochs", "1"]);
    let out = sb.run(&[
        "predict", "--checkpoint", "m.ckpt", "--history", "d.csv", "--history-weeks", "2", "--horizon", "5", "--out",
        "p.csv",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!sb.path("p.csv").exists() && !sb.path("p.xhat.csv").exists());
}

#[test]
fn evaluate_identity_is_zero() {
    let sb = Sandbox::new();
    sb.seasonal("d.csv", 50);
    sb.ok(&["evaluate", "--truth", "d.csv", "--predictions", "d.csv", "--out", "m.csv"]);
    let csv = sb.read("m.csv");
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4 + 1);
    assert_eq!(rows.last().unwrap(), &"aggregate,0,0,0");
    for row in rows {
        assert!(row.ends_with(",0,0,0"), "{row}");
    }
}

#[test]
fn evaluate_reports_location_difference() {
    let sb = Sandbox::new();
    let a = grid(&[noise(1, 20), noise(2, 20)]);
    let mut locs = a.locations().to_vec();
    locs[1] = Location::new("elsewhere", 0.0, 0.0);
    let b = GridSeries::new(a.values().clone(), locs, a.start_week()).unwrap();
    sb.save("a.csv", &a);
    sb.save("b.csv", &b);
    let out = sb.run(&["evaluate", "--truth", "a.csv", "--predictions", "b.csv", "--out", "m.csv"]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("p1") && stderr.contains("elsewhere"), "{stderr}");
    assert!(!sb.path("m.csv").exists());
}

#[test]
fn evaluate_row_count_is_n_plus_one() {
    let sb = Sandbox::new();
    let cols: Vec<Vec<f64>> = (0..7).map(|i| noise(i, 30)).collect();
    let truth = grid(&cols);
    let shifted = truth.with_values(truth.values().map(|v| v + 0.5)).unwrap();
    sb.save("t.bin", &truth);
    sb.save("p.bin", &shifted);
    sb.ok(&["evaluate", "--truth", "t.bin", "--predictions", "p.bin", "--out", "m.csv"]);
    let csv = sb.read("m.csv");
    assert_eq!(csv.lines().count(), 1 + 7 + 1);
    let agg: Vec<f64> = csv.lines().last().unwrap().split(',').skip(1).map(|v| v.parse().unwrap()).collect();
    assert!((agg[0] - 0.5).abs() < 1e-12 && (agg[1] - 0.5).abs() < 1e-12);
}

#[test]
fn telenet_constant_grid_has_no_edges() {
    let sb = Sandbox::new();
    sb.save("c.csv", &grid(&[vec![2.5; 64], vec![2.5; 64], vec![-1.0; 64]]));
    sb.ok(&["telenet", "--data", "c.csv", "--scales", "3,4", "--out-dir", "net"]);
    for s in [3, 4] {
        assert_eq!(sb.read(&format!("net/edges_s{s}.csv")).lines().count(), 1);
        let sim = sb.read(&format!("net/similarity_s{s}.csv"));
        let off: Vec<&str> = sim.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(off[1..], ["1", "0", "0"]);
    }
    let manifest: serde_json::Value = serde_json::from_str(&sb.read("net/telenet.manifest.json")).unwrap();
    let flagged = &manifest["notes"]["zero_variance_locations"]["scale_3"];
    assert_eq!(flagged, &serde_json::json!(["p0", "p1", "p2"]));
}

#[test]
fn telenet_duplicate_locations_link_at_every_scale() {
    let sb = Sandbox::new();
    let base = noise(5, 128);
    sb.save("g.csv", &grid(&[base.clone(), noise(6, 128), base, noise(7, 128)]));
    sb.ok(&["telenet", "--data", "g.csv", "--scales", "3,4,5,6,7", "--out-dir", "net"]);
    for s in 3..=7 {
        let edges = sb.read(&format!("net/edges_s{s}.csv"));
        assert!(edges.lines().any(|l| l.starts_with(&format!("p0,p2,{s},1"))), "scale {s}: {edges}");
    }
}

#[test]
fn telenet_similarity_is_n_by_n() {
    let sb = Sandbox::new();
    let cols: Vec<Vec<f64>> = (0..10).map(|i| noise(10 + i, 64)).collect();
    sb.save("g.bin", &grid(&cols));
    sb.ok(&["telenet", "--data", "g.bin", "--scales", "4", "--region", "south:-90:0:-180:180", "--out-dir", "o"]);
    let sim = sb.read("o/similarity_s4.csv");
    let lines: Vec<&str> = sim.lines().collect();
    assert_eq!(lines.len(), 11);
    assert!(lines.iter().all(|l| l.split(',').count() == 11));
    assert_eq!(sb.read("o/degrees_s4.csv").lines().count(), 11);
    assert!(sb.path("o/connections_south_s4.csv").exists());
}

#[test]
fn telenet_scale_too_deep_names_length() {
    let sb = Sandbox::new();
    sb.save("g.csv", &grid(&[noise(1, 40), noise(2, 40)]));
    let out = sb.run(&["telenet", "--data", "g.csv", "--scales", "3,8", "--out-dir", "net"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("64"));
    assert!(!sb.path("net").exists());

    let out = sb.run(&["telenet", "--data", "g.csv", "--scales", "2", "--out-dir", "net"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn errgrowth_identity_is_flat() {
    let sb = Sandbox::new();
    sb.seasonal("d.csv", 40);
    sb.ok(&["errgrowth", "--truth", "d.csv", "--predictions", "d.csv", "--out", "e.csv"]);
    let slopes = sb.read("e.slopes.csv");
    assert_eq!(slopes.lines().nth(1).unwrap(), "d,0,0");
    assert_eq!(sb.read("e.csv").lines().count(), 41);
}

#[test]
fn errgrowth_doubling_error_slope() {
    let sb = Sandbox::new();
    let truth = noise(3, 30);
    let pred: Vec<f64> = truth.iter().enumerate().map(|(t, v)| v + 1e-6 * 2f64.powi(t as i32)).collect();
    sb.save("t.csv", &grid(&[truth]));
    sb.save("p.csv", &grid(&[pred]));
    sb.ok(&["errgrowth", "--truth", "t.csv", "--predictions", "p.csv", "--out", "e.csv", "--slopes-out", "s.csv"]);
    let row = sb.read("s.csv");
    let slope: f64 = row.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((slope - std::f64::consts::LN_2).abs() < 1e-6, "{slope}");
}

#[test]
fn errgrowth_full_vs_dlc_only() {
    let sb = Sandbox::new();
    sb.seasonal("d.csv", 140);
    sb.train_small("d.csv", "m.ckpt", &["--epochs", "2", "--train-fraction", "0.75"]);
    sb.ok(&[
        "errgrowth", "--truth", "d.csv", "--checkpoint", "m.ckpt", "--history", "d.csv", "--history-weeks", "105",
        "--dlc-only", "--out", "e.csv",
    ]);
    let slopes = sb.read("e.slopes.csv");
    let names: Vec<&str> = slopes.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["m:full", "m:dlc-only"]);
    assert_eq!(sb.read("e.csv").lines().count(), 1 + 35);
}

#[test]
fn corrupt_checkpoint_is_format_error() {
    let sb = Sandbox::new();
    sb.seasonal("d.csv", 40);
    std::fs::write(sb.path("bad.ckpt"), b"NOPE0000000000000000").unwrap();
    let out = sb.run(&["predict", "--checkpoint", "bad.ckpt", "--history", "d.csv", "--horizon", "3", "--out", "p.csv"]);
    assert_eq!(out.status.code(), Some(5));
    assert!(!sb.path("p.csv").exists());
}

#[test]
fn missing_input_is_data_error() {
    let sb = Sandbox::new();
    let out = sb.run(&["evaluate", "--truth", "nope.csv", "--predictions", "nope.csv", "--out", "m.csv"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(sb.files().is_empty());
}

#[test]
fn diverging_training_is_numeric_error() {
    let sb = Sandbox::new();
    sb.seasonal("d.csv", 60);
    let mut args = vec!["train", "--data", "d.csv", "--out", "m.ckpt", "--lr", "1e300", "--epochs", "5"];
    args.extend_from_slice(SMALL);
    let out = sb.run(&args);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!sb.path("m.ckpt").exists() && !sb.path("m.ckpt.loss.csv").exists());
}

#[test]
fn invalid_flags_write_nothing() {
    let sb = Sandbox::new();
    sb.seasonal("d.csv", 40);
    let before = sb.files();
    for args in [
        vec!["train", "--data", "d.csv", "--out", "m.ckpt", "--train-fraction", "1.5"],
        vec!["train", "--data", "d.csv", "--out", "m.ckpt", "--dlc-hidden", "4,0"],
        vec!["telenet", "--data", "d.csv", "--scales", "3", "--threshold", "0", "--out-dir", "n"],
        vec!["telenet", "--data", "d.csv", "--scales", "3", "--region", "bad", "--out-dir", "n"],
        vec!["predict", "--checkpoint", "m.ckpt", "--history", "d.csv", "--horizon", "3", "--mode", "both", "--out", "p.csv"],
        vec!["errgrowth", "--truth", "d.csv", "--out", "e.csv"],
    ] {
        let out = sb.run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(sb.files(), before);
}

#[test]
fn manifest_records_inputs_and_seeds() {
    let sb = Sandbox::new();
    sb.seasonal("d.csv", 60);
    sb.train_small("d.csv", "m.ckpt", &["--epochs", "1", "--seed", "4"]);
    let m: serde_json::Value = serde_json::from_str(&sb.read("m.ckpt.manifest.json")).unwrap();
    assert_eq!(m["subcommand"], "train");
    assert_eq!(m["seeds"]["train"], 4);
    assert_eq!(m["inputs"][0]["sha256"], sb.digest("d.csv"));
    assert_eq!(m["config"]["epochs"], 1);
    let outputs: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|o| o["file"].as_str().unwrap()).collect();
    assert!(outputs.contains(&"m.ckpt") && outputs.contains(&"m.ckpt.loss.csv"));
}
