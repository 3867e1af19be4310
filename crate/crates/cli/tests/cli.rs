use std::path::Path;
use std::process::{Command, Output};

use splitplan_core::{ModelSpec, TensorShape};

fn splitplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splitplan")).args(args).env_remove("SPLITPLAN_DATA_DIR").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = splitplan(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    splitplan(args).status.code().unwrap()
}

fn csv_rows(text: &str) -> Vec<std::collections::HashMap<String, String>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().unwrap().clone();
    r.records()
        .map(|rec| headers.iter().zip(rec.unwrap().iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect())
        .collect()
}

fn example_data() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/example_map_illustrative.csv").display().to_string()
}

#[test]
fn analyze_pre_layer4_rows_exceed_input() {
    let rows = csv_rows(&ok(&["analyze", "--model", "faster_rcnn_r50", "--input", "3x800x800"]));
    let early: Vec<_> = rows
        .iter()
        .filter(|r| r["kind"] == "interior" && ["stem", "layer1", "layer2", "layer3"].contains(&r["module"].as_str()))
        .collect();
    assert!(early.len() > 100);
    for r in early {
        assert!(r["payload_ratio"].parse::<f64>().unwrap() > 1.0, "{}", r["node"]);
    }
}

#[test]
fn mask_terminal_exceeds_faster_terminal() {
    let last_roi = |model: &str| -> f64 {
        let rows = csv_rows(&ok(&["analyze", "--model", model]));
        rows.iter().find(|r| r["module"] == "roi_heads").unwrap()["output_ratio"].parse().unwrap()
    };
    assert!(last_roi("mask_rcnn_r50") > last_roi("faster_rcnn_r50"));
}

#[test]
fn analyze_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&["analyze", "--model", "mask_rcnn_r18", "--format", "json", "--out-dir", d]);
    for f in ["profile.json", "params.json", "profile.svg", "params.svg"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let svg = std::fs::read_to_string(dir.path().join("profile.svg")).unwrap();
    assert!(svg.contains("input size"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("profile.json")).unwrap()).unwrap();
    assert_eq!(report["reference_elements"], 1_920_000);
}

#[test]
fn unknown_model_exits_1() {
    assert_eq!(code(&["analyze", "--model", "nonexistent"]), 1);
    assert_eq!(code(&["analyze"]), 1);
    assert_eq!(code(&["analyze", "--model", "faster_rcnn_r50", "--input", "3x0x5"]), 1);
    assert_eq!(code(&["frobnicate"]), 1);
}

#[test]
fn plan_original_picks_endpoint() {
    let out = ok(&["plan", "--model", "faster_rcnn_r50", "--mobile", "rpi4", "--edge", "desktop_gpu", "--bandwidth", "100Mbps"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let kind = v["best"]["kind"].as_str().unwrap();
    assert!(kind == "edge_only" || kind == "mobile_only", "{kind}");
    assert_eq!(v["ranking"].as_array().unwrap().len(), v["ranking"].as_array().unwrap().len());
}

#[test]
fn plan_bottleneck_picks_bottleneck_cut() {
    let model = "faster_rcnn_r50+bottleneck:C=3";
    let spec: ModelSpec = model.parse().unwrap();
    let g = spec.build(&TensorShape::chw(3, 800, 800)).unwrap();
    let neck = &g.node(g.marker("bottleneck").unwrap()).id;
    let out = ok(&["plan", "--model", model, "--mobile", "jetson_tx2", "--edge", "desktop_gpu", "--bandwidth", "5Mbps"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["best"]["cut"].as_str().unwrap(), neck);
}

#[test]
fn bad_bandwidth_exits_1() {
    let base = ["plan", "--model", "faster_rcnn_r50", "--mobile", "rpi4", "--edge", "desktop_gpu", "--bandwidth"];
    for bad in ["fast", "-5Mbps", "10Qbps", "0"] {
        let mut args = base.to_vec();
        args.push(bad);
        assert_eq!(code(&args), 1, "{bad}");
    }
    assert_eq!(code(&["plan", "--model", "faster_rcnn_r50", "--mobile", "phone", "--edge", "desktop_gpu", "--bandwidth", "1"]), 1);
    assert_eq!(code(&["sweep", "--model", "faster_rcnn_r50", "--mobile", "rpi4", "--edge", "desktop_gpu", "--bandwidth", "1:2"]), 1);
}

#[test]
fn sweep_is_monotone() {
    let out = ok(&[
        "sweep", "--model", "faster_rcnn_r50+bottleneck:C=3", "--mobile", "jetson_tx2", "--edge", "desktop_gpu",
        "--bandwidth", "0.1:1000:log",
    ]);
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 41);
    let totals: Vec<f64> = rows.iter().map(|r| r["total_seconds"].parse().unwrap()).collect();
    assert!(totals.windows(2).all(|w| w[1] <= w[0]));
    for r in &rows {
        let best: f64 = r["total_seconds"].parse().unwrap();
        assert!(best <= r["edge_only_seconds"].parse::<f64>().unwrap());
        assert!(best <= r["mobile_only_seconds"].parse::<f64>().unwrap());
    }
}

#[test]
fn sweep_writes_svg() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&["sweep", "--model", "faster_rcnn_r18", "--mobile", "rpi4", "--edge", "jetson_tx2", "--format", "json", "--out-dir", d]);
    assert!(dir.path().join("sweep.json").is_file());
    assert!(std::fs::read_to_string(dir.path().join("sweep.svg")).unwrap().contains("<polyline"));
}

#[test]
fn tradeoff_ratios_and_baseline() {
    let rows = csv_rows(&ok(&["tradeoff", "--data", &example_data()]));
    let ratios: Vec<f64> = rows.iter().filter(|r| r["C"] != "original").map(|r| r["size_ratio"].parse().unwrap()).collect();
    let want = [0.0626, 0.1253, 0.1879, 0.2506, 0.3132];
    assert_eq!(ratios.len(), 5);
    for (r, w) in ratios.iter().zip(want) {
        assert!((r - w).abs() < 5e-5, "{r} vs {w}");
    }
    assert!(ratios.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(rows.last().unwrap()["C"], "original");
    assert!(rows.iter().all(|r| r["source"] == "illustrative-not-measured"));
}

#[test]
fn tradeoff_without_mask_omits_mask_curve() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&["tradeoff", "--data", &example_data(), "--detector", "faster_rcnn", "--out-dir", d]);
    let svg = std::fs::read_to_string(dir.path().join("tradeoff.svg")).unwrap();
    assert!(svg.contains("BBox mAP"));
    assert!(!svg.contains("Mask mAP"));
    assert!(svg.contains("stroke-dasharray"));

    ok(&["tradeoff", "--data", &example_data(), "--out-dir", d]);
    let svg = std::fs::read_to_string(dir.path().join("tradeoff.svg")).unwrap();
    assert!(svg.contains("Mask mAP"));
}

#[test]
fn malformed_tradeoff_csv_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    for (body, needle) in [
        ("detector,C,bbox_map,source\nmask_rcnn,3,0.3,x\nmask_rcnn,6,high,x\n", "line 3"),
        ("detector,C,bbox_map,source\nmask_rcnn,3,1.3,x\n", "line 2"),
        ("detector,C,bbox_map,source\nmask_rcnn,-1,0.3,x\n", "line 2"),
        ("detector,C,bbox_map,source\nmask_rcnn,3,0.3,\n", "line 2"),
        ("detector,C,bbox_map\nmask_rcnn,3,0.3\n", "source"),
    ] {
        std::fs::write(&path, body).unwrap();
        let out = splitplan(&["tradeoff", "--data", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(1), "{body}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(needle), "{err}");
    }
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("splitplan.toml");
    std::fs::write(
        &cfg,
        "[plan]\nmodel = \"faster_rcnn_r18\"\nmobile = \"rpi4\"\nedge = \"desktop_gpu\"\nbandwidth = \"1Gbps\"\nformat = \"csv\"\n",
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    let from_file = ok(&["--config", c, "plan"]);
    let explicit = ok(&["plan", "--model", "faster_rcnn_r18", "--mobile", "rpi4", "--edge", "desktop_gpu", "--bandwidth", "1Gbps", "--format", "csv"]);
    assert_eq!(from_file, explicit);
    let overridden = ok(&["--config", c, "plan", "--bandwidth", "1Mbps"]);
    assert_ne!(overridden, from_file);

    std::fs::write(&cfg, "[plan]\nbandwith = \"1Gbps\"\n").unwrap();
    assert_eq!(code(&["--config", c, "plan"]), 1);
    assert_eq!(code(&["--config", "/no/such/file.toml", "plan"]), 1);
}

#[test]
fn data_dir_overrides_builtin_tables() {
    let dir = tempfile::tempdir().unwrap();
    let table = splitplan_core::timing::BUILTIN_PROFILES_JSON.replace("26.14", "2.614");
    std::fs::write(dir.path().join("device_profiles_v1.json"), table).unwrap();
    let args = ["plan", "--model", "faster_rcnn_r50", "--mobile", "rpi4", "--edge", "desktop_gpu", "--bandwidth", "0.1"];
    let total = |out: &Output| -> f64 {
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        v["ranking"].as_array().unwrap().iter().find(|t| t["kind"] == "mobile_only").unwrap()["head_seconds"]
            .as_f64()
            .unwrap()
    };
    let default = splitplan(&args);
    let overridden = Command::new(env!("CARGO_BIN_EXE_splitplan")).args(args).env("SPLITPLAN_DATA_DIR", dir.path()).output().unwrap();
    assert!((total(&default) - 26.14).abs() < 1e-9);
    assert!((total(&overridden) - 2.614).abs() < 1e-9);

    std::fs::write(dir.path().join("device_profiles_v1.json"), "{").unwrap();
    let broken = Command::new(env!("CARGO_BIN_EXE_splitplan")).args(args).env("SPLITPLAN_DATA_DIR", dir.path()).output().unwrap();
    assert_eq!(broken.status.code(), Some(1));
}

#[test]
fn graph_round_trips_through_file_model() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r18.json");
    ok(&["graph", "--model", "faster_rcnn_r18", "--out", path.to_str().unwrap()]);
    let from_file = ok(&["analyze", "--model", path.to_str().unwrap()]);
    let from_catalog = ok(&["analyze", "--model", "faster_rcnn_r18"]);
    assert_eq!(from_file, from_catalog);
    // built-in devices need a catalog model
    assert_eq!(code(&["plan", "--model", path.to_str().unwrap(), "--mobile", "rpi4", "--edge", "rpi4", "--bandwidth", "1"]), 1);
}

#[test]
fn unwritable_output_exits_2() {
    assert_eq!(code(&["graph", "--model", "faster_rcnn_r18", "--out", "/nonexistent-dir/graph.json"]), 2);
}

#[test]
fn transfer_reports_json() {
    let out = ok(&[
        "transfer", "--shape", "64x64", "--dtype", "u8", "--source", "zero", "--codec", "deflate", "--bandwidth", "1Gbps",
        "--transport", "pipe",
    ]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["raw_bytes"], 4096);
    assert!(v["codec_ratio"].as_f64().unwrap() < 0.05);
    assert_eq!(code(&["transfer", "--transport", "carrier-pigeon"]), 1);
}

#[test]
fn devices_lists_builtin_table() {
    let v: serde_json::Value = serde_json::from_str(&ok(&["devices"])).unwrap();
    assert_eq!(v["running_time"]["faster_rcnn"]["rpi4"]["r50"], 26.14);
}
