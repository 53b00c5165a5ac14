use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dense_cluster::nn::{Checkpoint, CheckpointMeta, Conv3d, FeatureNet, Head, Topology, Variant};
use dense_cluster::seed::Seeds;
use dense_cluster::volume::ManifestEntry;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dense-cluster"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = bin(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const TINY_CONFIG: &str = r#"{
  "epochs": 2,
  "k": 3,
  "pca_dim": 4,
  "topology": {
    "levels": 2,
    "base_filters": 2,
    "feature_channels": 4,
    "upsampling": true,
    "skip_connections": true,
    "post_activation": true
  },
  "seeds": { "net": 1, "head": 2, "kmeans": 3, "sampler": 4 }
}"#;

/// gen-data, train, eval and dcam into `root`; returns every file written,
/// relative to `root`, sorted.
fn full_pipeline(root: &Path) -> Vec<PathBuf> {
    let data = root.join("data");
    let run = root.join("run");
    let eval = root.join("eval");
    let maps = root.join("maps");
    fs::create_dir_all(root).unwrap();
    fs::write(root.join("cfg.json"), TINY_CONFIG).unwrap();
    ok(&["--threads", "1", "gen-data", "--classes", "3", "--per-class", "3", "--dims", "8", "--seed", "7", "--out", p(&data)]);
    ok(&["--threads", "1", "train", "--config", p(&root.join("cfg.json")), "--data", p(&data), "--out", p(&run)]);
    let ckpt = run.join("ckpt_e002");
    ok(&["--threads", "1", "eval", "--checkpoint", p(&ckpt), "--data", p(&data), "--out", p(&eval)]);
    ok(&[
        "--threads", "1", "dcam", "--checkpoint", p(&ckpt), "--data", p(&data), "--subject", "subject_0000", "--channel", "1",
        "--out", p(&maps),
    ]);
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    files.sort();
    files
}

#[test]
fn pipeline_from_empty_directory_is_byte_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let files = full_pipeline(a.path());
    assert_eq!(files, full_pipeline(b.path()));

    let names: Vec<String> = files.iter().map(|f| f.display().to_string()).collect();
    assert_eq!(names.iter().filter(|n| n.starts_with("data/volumes/")).count(), 2 * 9);
    for expected in [
        "data/manifest.json",
        "run/epochs.csv",
        "run/run.json",
        "run/ckpt_e000.json",
        "run/ckpt_e002.f32raw",
        "eval/metrics.csv",
        "eval/metrics_raw.csv",
        "maps/subject_0000_c1_z007.pgm",
    ] {
        assert!(names.iter().any(|n| n == expected), "missing {expected}");
    }
    assert_eq!(names.iter().filter(|n| n.starts_with("maps/")).count(), 8);
    for f in &files {
        // run.json records the output paths, which differ between the two roots
        if f.ends_with("run.json") {
            continue;
        }
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{}", f.display());
    }

    let epochs = fs::read_to_string(a.path().join("run/epochs.csv")).unwrap();
    assert_eq!(epochs.lines().count(), 3);
    let metrics = fs::read_to_string(a.path().join("eval/metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(lines.next(), Some("method,clustering_accuracy,silhouette,davies_bouldin"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "proposed");
    // coincident centroids make Davies-Bouldin infinite on such a tiny run
    assert!(
        row[1..].iter().all(|v| *v == "inf" || v.split('.').nth(1).map(str::len) == Some(4)),
        "{row:?}"
    );

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.path().join("run/run.json")).unwrap()).unwrap();
    assert_eq!(manifest["final_checkpoint"], "ckpt_e002");
    assert_eq!(manifest["seeds"]["sampler"], 4);
    assert_eq!(manifest["config"]["epochs"], 2);
}

#[test]
fn zero_epochs_writes_only_the_initial_checkpoint() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    let run = root.path().join("run");
    let cfg = root.path().join("cfg.json");
    fs::write(&cfg, TINY_CONFIG.replace("\"epochs\": 2", "\"epochs\": 0")).unwrap();
    ok(&["gen-data", "--classes", "3", "--per-class", "2", "--dims", "8", "--seed", "1", "--out", p(&data)]);
    ok(&["train", "--config", p(&cfg), "--data", p(&data), "--out", p(&run)]);
    let mut names: Vec<String> = fs::read_dir(&run)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["ckpt_e000.f32raw", "ckpt_e000.json", "epochs.csv", "run.json"]);
    assert_eq!(fs::read_to_string(run.join("epochs.csv")).unwrap().lines().count(), 1);
}

#[test]
fn indivisible_dims_fail_with_the_constraint() {
    let root = tempfile::tempdir().unwrap();
    let out = bin(&["gen-data", "--classes", "3", "--per-class", "2", "--dims", "12", "--seed", "1", "--out", p(root.path())]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("divisible by 8"), "{err}");
    let out = bin(&[
        "gen-data", "--classes", "3", "--per-class", "2", "--dims", "24", "--variant", "baseline", "--seed", "1", "--out",
        p(root.path()),
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("divisible by 16"));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    let cfg = root.path().join("cfg.json");
    fs::write(&cfg, "{\n  \"epochs\": 1,\n  \"batchsize\": 2\n}\n").unwrap();
    ok(&["gen-data", "--classes", "2", "--per-class", "2", "--dims", "8", "--seed", "1", "--out", p(&data)]);
    let out = bin(&["train", "--config", p(&cfg), "--data", p(&data), "--out", p(&root.path().join("run"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("batchsize") && err.contains("line 3"), "{err}");
}

#[test]
fn baseline_dcam_is_refused_with_exit_two() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    let run = root.path().join("run");
    let maps = root.path().join("maps");
    let cfg = root.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"epochs": 0, "k": 2, "variant": "baseline",
            "topology": {"levels": 3, "base_filters": 2, "feature_channels": 4,
                         "upsampling": false, "skip_connections": false, "post_activation": true}}"#,
    )
    .unwrap();
    ok(&["gen-data", "--classes", "2", "--per-class", "2", "--dims", "8", "--seed", "1", "--out", p(&data)]);
    ok(&["train", "--config", p(&cfg), "--data", p(&data), "--out", p(&run)]);
    let out = bin(&[
        "dcam", "--checkpoint", p(&run.join("ckpt_e000")), "--data", p(&data), "--subject", "subject_0001", "--out", p(&maps),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("resolution"));
    let note = fs::read_to_string(maps.join("subject_0001_dcam_refused.txt")).unwrap();
    assert!(note.contains('8'), "{note}");
    assert!(!fs::read_dir(&maps).unwrap().any(|e| e.unwrap().path().extension().is_some_and(|x| x == "pgm")));
}

#[test]
fn missing_subject_lists_available_ids() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    let run = root.path().join("run");
    let cfg = root.path().join("cfg.json");
    fs::write(&cfg, TINY_CONFIG.replace("\"epochs\": 2", "\"epochs\": 0")).unwrap();
    ok(&["gen-data", "--classes", "2", "--per-class", "2", "--dims", "8", "--seed", "1", "--out", p(&data)]);
    ok(&["train", "--config", p(&cfg), "--data", p(&data), "--out", p(&run)]);
    let out = bin(&[
        "dcam", "--checkpoint", p(&run.join("ckpt_e000")), "--data", p(&data), "--subject", "nobody", "--out",
        p(&root.path().join("maps")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    for id in ["subject_0000", "subject_0001", "subject_0002", "subject_0003"] {
        assert!(err.contains(id), "{err}");
    }
}

/// One-level proposed network whose dense output is the input intensity:
/// the encoder and the final decoder block copy channel 0 through their
/// centre taps, everything else is zero.
fn intensity_net() -> FeatureNet<f32> {
    let topology = Topology {
        levels: 1,
        base_filters: 1,
        feature_channels: 1,
        ..Topology::proposed()
    };
    let specs = topology.layer_channels();
    let copy = [0, 1, specs.len() - 2, specs.len() - 1];
    let layers = specs
        .iter()
        .enumerate()
        .map(|(i, &(ci, co))| {
            let mut w = vec![0.0; co * ci * 27];
            if copy.contains(&i) {
                w[13] = 1.0;
            }
            Conv3d::from_parts(ci, co, 3, w, vec![0.0; co]).unwrap()
        })
        .collect();
    FeatureNet::from_layers(topology, layers).unwrap()
}

#[test]
fn eval_scores_a_separating_checkpoint_as_perfect() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    ok(&["gen-data", "--classes", "3", "--per-class", "6", "--dims", "8", "--seed", "3", "--out", p(&data)]);
    // keep the uniform and the rim phantoms, whose lung means never overlap
    let manifest = data.join("manifest.json");
    let entries: Vec<ManifestEntry> = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    let kept: Vec<ManifestEntry> = entries.into_iter().filter(|e| e.true_class != Some(1)).collect();
    assert_eq!(kept.len(), 12);
    fs::write(&manifest, serde_json::to_string(&kept).unwrap()).unwrap();

    let net = intensity_net();
    let topology = *net.topology();
    let checkpoint = Checkpoint {
        meta: CheckpointMeta::new(Variant::Proposed, topology, 2, 0, Seeds::default()),
        net,
        head: Head::from_parts(1, 2, vec![1.0, -1.0], vec![0.0, 0.0]).unwrap(),
    };
    let ckpt = root.path().join("toy");
    checkpoint.save(&ckpt).unwrap();
    let out = root.path().join("eval");
    ok(&["eval", "--checkpoint", p(&ckpt), "--data", p(&data), "--out", p(&out), "--method", "toy"]);
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let row = metrics.lines().nth(1).unwrap();
    assert!(row.starts_with("toy,1.0000,"), "{metrics}");
    let again = root.path().join("eval2");
    ok(&["eval", "--checkpoint", p(&ckpt), "--data", p(&data), "--out", p(&again), "--method", "toy"]);
    assert_eq!(metrics, fs::read_to_string(again.join("metrics.csv")).unwrap());
}

#[test]
fn version_reports_tool_and_formats() {
    let out = ok(&["--version"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains(env!("CARGO_PKG_VERSION")) && text.contains("checkpoint"), "{text}");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(bin(&[]).status.code(), Some(1));
    assert_eq!(bin(&["train"]).status.code(), Some(1));
    assert_eq!(bin(&["dcam", "--axis", "w"]).status.code(), Some(1));
    assert_eq!(bin(&["--help"]).status.code(), Some(0));
}
