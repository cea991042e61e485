//! End-to-end checks of the binary: exit codes, error JSON, file formats,
//! and the codec/metric flows a scripted user would run.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_temporig")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("temporig-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_ok(args: &[&str]) -> String {
    let out = Command::new(bin()).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "expected success for {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn tokenize_detokenize_round_trip_within_half_bin() {
    let dir = scratch("roundtrip");
    let clip = dir.join("clip.json");
    run_ok(&[
        "synth-gen",
        "--out",
        clip.to_str().unwrap(),
        "--joints",
        "7",
        "--seed",
        "9",
    ]);
    let tokens = dir.join("tokens.json");
    run_ok(&[
        "tokenize",
        "--input",
        clip.to_str().unwrap(),
        "--out",
        tokens.to_str().unwrap(),
    ]);
    let decoded = dir.join("decoded.json");
    run_ok(&[
        "detokenize",
        "--input",
        tokens.to_str().unwrap(),
        "--out",
        decoded.to_str().unwrap(),
    ]);

    let (original, _) = temporig::rigio::read_clip(&clip).unwrap();
    let (decoded, _) = temporig::rigio::read_clip(&decoded).unwrap();
    let bound = 0.5 / 256.0 + 1e-12;
    for (a, b) in original.anchor().joints.iter().zip(&decoded.anchor().joints) {
        for c in 0..3 {
            assert!((a[c] - b[c]).abs() <= bound);
        }
    }
    assert_eq!(original.anchor().parents, decoded.anchor().parents);
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn skel_metrics_static_clip_reports_zeros() {
    let dir = scratch("static");
    let clip = dir.join("static.json");
    run_ok(&[
        "synth-gen",
        "--out",
        clip.to_str().unwrap(),
        "--amplitude",
        "0",
    ]);
    let json = run_ok(&["skel-metrics", "--input", clip.to_str().unwrap()]);
    let doc: serde_json::Value = serde_json::from_str(&json).unwrap();
    for metric in ["pjdd", "blrd", "gsd", "jad"] {
        let v = doc["clips"][0][metric].as_f64().unwrap();
        assert!(v.abs() <= 1e-9, "{metric} = {v}");
    }
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn directory_aggregate_matches_per_clip_rows() {
    let dir = scratch("agg");
    let clips = dir.join("clips");
    std::fs::create_dir_all(&clips).unwrap();
    for (i, amp) in ["0.2", "0.3", "0.4"].iter().enumerate() {
        run_ok(&[
            "synth-gen",
            "--clip-id",
            &format!("c{i}"),
            "--amplitude",
            amp,
            "--out",
            clips.join(format!("c{i}.json")).to_str().unwrap(),
        ]);
    }
    let csv = run_ok(&[
        "skel-metrics",
        "--input",
        clips.to_str().unwrap(),
        "--format",
        "csv",
    ]);
    let mut vals = Vec::new();
    let mut agg = None;
    for line in csv.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells[0] == "AGGREGATE_MEAN" {
            agg = Some(cells[3].parse::<f64>().unwrap());
        } else {
            vals.push(cells[3].parse::<f64>().unwrap());
        }
    }
    assert_eq!(vals.len(), 3);
    let mean = vals.iter().sum::<f64>() / 3.0;
    let agg = agg.unwrap();
    assert!((mean - agg).abs() <= 1e-9 * mean.max(1.0), "{mean} vs {agg}");
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn skel_loss_consumes_logits_files() {
    let dir = scratch("skelloss");
    let clip_path = dir.join("clip.json");
    run_ok(&[
        "synth-gen",
        "--joints",
        "5",
        "--out",
        clip_path.to_str().unwrap(),
    ]);

    // uniform logits for every slot of the anchor token sequence
    let (clip, _) = temporig::rigio::read_clip(&clip_path).unwrap();
    let targets = temporig::token::tokenize(clip.anchor(), 256).unwrap();
    let slots: Vec<Vec<f64>> = (0..targets.len())
        .map(|i| vec![0.0; targets.vocab_at(i)])
        .collect();
    let logits = temporig::token::SlotLogits::dense(slots);
    let sprl = dir.join("anchor.sprl");
    let mut buf = Vec::new();
    temporig::token::write_logits(&logits, &mut buf).unwrap();
    std::fs::write(&sprl, &buf).unwrap();

    let out = run_ok(&[
        "skel-loss",
        "--clip",
        clip_path.to_str().unwrap(),
        "--anchor-logits",
        sprl.to_str().unwrap(),
        "--frame-logits",
        sprl.to_str().unwrap(),
        sprl.to_str().unwrap(),
    ]);
    let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
    // uniform over 256-way coordinate slots and 6-way parent slots,
    // parent slots upweighted by alpha = 3
    let want = (3.0 * 256f64.ln() + 3.0 * 6f64.ln()) / 6.0;
    let anchor = doc["token"]["anchor"].as_f64().unwrap();
    assert!((anchor - want).abs() < 1e-6, "{anchor} vs {want}");
    assert_eq!(doc["token"]["sym"].as_f64(), doc["token"]["anchor"].as_f64());
    assert!(doc["geom"]["total"].as_f64().unwrap() >= 0.0);
    assert!(doc["combined"].as_f64().unwrap() > 0.0);
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn skin_loss_of_consistent_clip_is_tiny() {
    let dir = scratch("skinloss");
    let clip = dir.join("clip.json");
    // unperturbed clip: its own weights are the teacher, so the
    // consistency terms vanish
    run_ok(&["synth-gen", "--out", clip.to_str().unwrap()]);
    let out = run_ok(&[
        "skin-loss",
        "--clip",
        clip.to_str().unwrap(),
        "--samples",
        "64",
    ]);
    let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(doc["sym"].as_f64().unwrap().abs() < 1e-9);
    assert!(doc["l1"].as_f64().unwrap().abs() < 1e-9);
    assert!(doc["anchor"].as_f64().unwrap().abs() < 1e-9);
    assert!(doc["total"].as_f64().unwrap() >= 0.0);
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn demo_finetune_emits_trace_and_report() {
    let dir = scratch("demo");
    let trace = dir.join("trace.csv");
    let report = dir.join("report.json");
    run_ok(&[
        "demo-finetune",
        "--steps",
        "5",
        "--samples",
        "64",
        "--features",
        "16",
        "--trace-out",
        trace.to_str().unwrap(),
        "--report-out",
        report.to_str().unwrap(),
    ]);
    let trace = std::fs::read_to_string(&trace).unwrap();
    assert!(trace.starts_with("step,total,sym,l1,anchor,ent,prior\n"));
    assert_eq!(trace.lines().count(), 7); // header + steps 0..=5
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(doc["before"]["symkl_bca"].as_f64().unwrap() > 0.0);
    assert!(doc["delta_j"].as_array().unwrap().len() == 6);
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn report_reformat_round_trip() {
    let dir = scratch("report");
    let clip = dir.join("clip.json");
    run_ok(&["synth-gen", "--out", clip.to_str().unwrap()]);
    let json_path = dir.join("report.json");
    run_ok(&[
        "skel-metrics",
        "--input",
        clip.to_str().unwrap(),
        "--out",
        json_path.to_str().unwrap(),
    ]);
    let md = run_ok(&[
        "report",
        "--input",
        json_path.to_str().unwrap(),
        "--format",
        "md",
    ]);
    assert!(md.contains("| demo |"));
    let csv = run_ok(&[
        "report",
        "--input",
        json_path.to_str().unwrap(),
        "--format",
        "csv",
    ]);
    assert!(csv.starts_with("clip_id,"));
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn data_errors_exit_one_with_machine_readable_json() {
    let dir = scratch("errors");
    let bad = dir.join("bad.json");
    std::fs::write(&bad, "{\"frames\": []}").unwrap();
    let out = Command::new(bin())
        .args(["skel-metrics", "--input", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert_eq!(err["error"], "CLIP_FORMAT");
    assert!(err["message"].as_str().unwrap().contains("clip_id"));

    // validation failures carry the violation details on stderr
    let cyclic = dir.join("cyclic.json");
    std::fs::write(
        &cyclic,
        r#"{"clip_id":"x","frames":[{"joints":[[0,0,0],[1,0,0]],"parents":[2,1]}]}"#,
    )
    .unwrap();
    let out = Command::new(bin())
        .args(["skel-metrics", "--input", cyclic.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("CYCLE"));
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn ground_truth_enables_static_metrics() {
    let dir = scratch("gt");
    let pred_dir = dir.join("pred");
    let gt_dir = dir.join("gt");
    std::fs::create_dir_all(&pred_dir).unwrap();
    std::fs::create_dir_all(&gt_dir).unwrap();
    // prediction = perturbed ground truth, matched by file name
    run_ok(&[
        "synth-gen",
        "--clip-id",
        "a",
        "--out",
        gt_dir.join("a.json").to_str().unwrap(),
    ]);
    run_ok(&[
        "perturb",
        "--sigma",
        "0.01",
        "--input",
        gt_dir.join("a.json").to_str().unwrap(),
        "--out",
        pred_dir.join("a.json").to_str().unwrap(),
    ]);
    let json = run_ok(&[
        "skel-metrics",
        "--input",
        pred_dir.to_str().unwrap(),
        "--gt",
        gt_dir.to_str().unwrap(),
    ]);
    let doc: serde_json::Value = serde_json::from_str(&json).unwrap();
    let clip = &doc["clips"][0];
    // anchor frames are identical (perturb leaves frame 0 alone)
    assert!(clip["mpjpe_anchor"].as_f64().unwrap().abs() < 1e-12);
    assert!(clip["cd_j2j"].as_f64().unwrap().abs() < 1e-12);
    assert!(clip["cd_j2b"].is_number());
    assert!(clip["cd_b2b"].is_number());
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn out_of_range_flags_are_data_errors() {
    let dir = scratch("ranges");
    let clip = dir.join("clip.json");
    run_ok(&["synth-gen", "--joints", "4", "--out", clip.to_str().unwrap()]);
    for args in [
        vec!["skin-loss", "--clip", clip.to_str().unwrap(), "--k-s", "0"],
        vec!["skin-loss", "--clip", clip.to_str().unwrap(), "--gamma", "1.0"],
        vec!["tokenize", "--input", clip.to_str().unwrap(), "--n-disc", "1"],
        vec!["skel-metrics", "--input", clip.to_str().unwrap(), "--n-eigs", "0"],
        vec!["demo-finetune", "--samples", "0"],
    ] {
        let out = Command::new(bin()).args(&args).output().unwrap();
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        let err: serde_json::Value =
            serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
        assert_eq!(err["error"], "INVALID_CONFIG", "{args:?}");
    }
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn usage_errors_exit_two() {
    let out = Command::new(bin()).args(["no-such-command"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(bin()).args(["synth-gen"]).output().unwrap(); // missing --out
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_lists_defaults() {
    let help = run_ok(&["skin-loss", "--help"]);
    assert!(help.contains("method default 4"));
    assert!(help.contains("default: 0.25"));
    let help = run_ok(&["skel-loss", "--help"]);
    assert!(help.contains("method default 3.0"));
    assert!(help.contains("method default 0.5"));
}

#[test]
fn unknown_clip_keys_warn_but_succeed() {
    let dir = scratch("warn");
    let clip = dir.join("clip.json");
    run_ok(&["synth-gen", "--joints", "4", "--out", clip.to_str().unwrap()]);
    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&clip).unwrap()).unwrap();
    doc.as_object_mut()
        .unwrap()
        .insert("custom_field".into(), serde_json::json!(true));
    std::fs::write(&clip, serde_json::to_string(&doc).unwrap()).unwrap();
    let out = Command::new(bin())
        .args(["skel-metrics", "--input", clip.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("custom_field"));
    std::fs::remove_dir_all(dir).ok();
}
