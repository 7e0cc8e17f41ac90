use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fakethermal::io::{
    load_domain, read_detections, read_json, save_domain, write_detections, write_image,
};
use fakethermal_core::eval::evaluate;
use fakethermal_core::synth::{generate_domains, SynthParams};
use fakethermal_core::{EvalParams, EvalReport, GrayImage, Image};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fakethermal"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth_domains(dir: &Path) {
    let params = SynthParams {
        seed: 11,
        ..SynthParams::default()
    };
    let (visible, thermal) = generate_domains(&params, 5, "t").unwrap();
    save_domain(&visible, &dir.join("visible")).unwrap();
    save_domain(&thermal, &dir.join("thermal")).unwrap();
}

#[test]
fn invert_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.png");
    let px: Vec<u8> = (0..=255u8).cycle().take(37 * 11).collect();
    write_image(&a, &Image::Gray(GrayImage::from_raw(37, 11, px).unwrap())).unwrap();
    let b = dir.path().join("b.png");
    let c = dir.path().join("c.png");
    assert!(run(&["invert", "--in", p(&a), "--out", p(&b)])
        .status
        .success());
    assert!(run(&["invert", "--in", p(&b), "--out", p(&c)])
        .status
        .success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn exit_codes() {
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    // unknown flag
    assert_eq!(
        run(&["invert", "--in", "a", "--out", "b", "--bogus"])
            .status
            .code(),
        Some(2)
    );
    // randomized subcommand without a seed
    assert_eq!(
        run(&["synth", "--out", "x", "--count", "1"]).status.code(),
        Some(2)
    );
    // domain error
    let out = run(&[
        "invert",
        "--in",
        "/nonexistent/a.png",
        "--out",
        "/tmp/b.png",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn eval_matches_library_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    synth_domains(dir.path());
    let thermal = dir.path().join("thermal");
    let target = load_domain(&thermal, true).unwrap();
    // perfect detections from the ground truth, minus one box
    let mut dets: Vec<_> = target
        .records()
        .iter()
        .flat_map(|r| {
            r.annotations.objects().iter().map(|o| {
                fakethermal_core::Detection::new(r.image_id(), o.class_label.clone(), 0.9, o.bbox)
                    .unwrap()
            })
        })
        .collect();
    dets.pop();
    let det_path = dir.path().join("run/detections.json");
    write_detections(&det_path, &dets).unwrap();

    let out = run(&[
        "eval",
        "--detections",
        p(&det_path),
        "--target",
        p(&thermal),
        "--iou",
        "0.5",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    let header = stdout.lines().next().unwrap();
    assert!(
        header.starts_with("Method") && header.ends_with("mAP"),
        "{stdout}"
    );
    let report: EvalReport = read_json(&dir.path().join("run/eval_report.json")).unwrap();
    assert_eq!(
        report,
        evaluate(&dets, &target, &EvalParams::default()).unwrap()
    );

    // eleven-point mode with an explicit output path
    let rp = dir.path().join("r11.json");
    let out = run(&[
        "eval",
        "--detections",
        p(&det_path),
        "--target",
        p(&thermal),
        "--mode",
        "eleven-point",
        "--out",
        p(&rp),
    ]);
    assert!(out.status.success());
    let r11: EvalReport = read_json(&rp).unwrap();
    assert_eq!(
        r11.params.interpolation,
        fakethermal_core::Interpolation::ElevenPoint
    );

    let out = run(&[
        "report",
        p(&rp),
        p(&dir.path().join("run/eval_report.json")),
        "--name",
        "eleven",
    ]);
    assert!(out.status.success());
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(
        table.contains("eleven") && table.contains("eval_report"),
        "{table}"
    );
}

#[test]
fn synth_translate_renew_detect() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = run(&[
        "synth",
        "--out",
        p(d),
        "--count",
        "4",
        "--seed",
        "5",
        "--mix",
        "0.5",
        "--max-objects",
        "3",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let visible = load_domain(&d.join("visible"), true).unwrap();
    assert_eq!(visible.len(), 4);

    let ft = d.join("ft");
    assert!(run(&[
        "translate",
        "gray",
        "--source",
        p(&d.join("visible")),
        "--out",
        p(&ft)
    ])
    .status
    .success());
    let hm = d.join("hm");
    let (vis, th) = (d.join("visible"), d.join("thermal"));
    let args = [
        "translate",
        "histmatch",
        "--source",
        p(&vis),
        "--reference",
        p(&th),
        "--out",
        p(&hm),
    ];
    assert!(run(&args).status.success());
    assert_eq!(load_domain(&hm, true).unwrap().len(), 4);
    // histmatch without a reference is a usage error
    let out = run(&[
        "translate",
        "histmatch",
        "--source",
        p(&d.join("visible")),
        "--out",
        p(&hm),
    ]);
    assert_eq!(out.status.code(), Some(2));

    let flat = d.join("flat");
    assert!(run(&[
        "translate",
        "gray",
        "--source",
        p(&d.join("visible")),
        "--out",
        p(&flat),
        "--flat"
    ])
    .status
    .success());
    let ext = d.join("ext");
    let out = run(&[
        "translate",
        "external",
        "--source",
        p(&d.join("visible")),
        "--images",
        p(&flat),
        "--out",
        p(&ext),
    ]);
    assert!(out.status.success());
    assert_eq!(
        load_domain(&ext, true).unwrap().records(),
        load_domain(&ft, true).unwrap().records()
    );

    let renewed = d.join("renewed");
    assert!(
        run(&["build-renewed", "--source", p(&ft), "--out", p(&renewed)])
            .status
            .success()
    );
    let r = load_domain(&renewed, true).unwrap();
    assert_eq!(r.len(), 8);
    assert!(r.get("000002_inv").is_some());
    // visible RGB images cannot be inverted as a renewed source
    assert_eq!(
        run(&[
            "build-renewed",
            "--source",
            p(&d.join("visible")),
            "--out",
            p(&d.join("x"))
        ])
        .status
        .code(),
        Some(1)
    );

    let det_dir = d.join("det");
    let out = run(&[
        "detect",
        "--source",
        p(&renewed),
        "--target",
        p(&d.join("thermal")),
        "--out",
        p(&det_dir),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let dets = read_detections(&det_dir.join("detections.json")).unwrap();
    assert!(!dets.is_empty());

    let model_dir = d.join("model");
    let out = run(&[
        "train",
        "--source",
        p(&renewed),
        "--target",
        p(&d.join("thermal")),
        "--out",
        p(&model_dir),
    ]);
    assert!(out.status.success());
    let det2 = d.join("det2");
    let out = run(&[
        "detect",
        "--model",
        p(&model_dir.join("model.json")),
        "--target",
        p(&d.join("thermal")),
        "--out",
        p(&det2),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    // raw threshold mode on one image prints JSON
    let img = d.join("thermal/images/000000.png");
    let out = run(&[
        "detect",
        "--image",
        p(&img),
        "--threshold",
        "120",
        "--polarity",
        "both",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let raw: Vec<fakethermal_core::Detection> = serde_json::from_slice(&out.stdout).unwrap();
    assert!(raw.iter().all(|d| d.image_id == "000000"));
    // raw flags without an image
    assert_eq!(run(&["detect", "--threshold", "3"]).status.code(), Some(2));
}

#[test]
fn ingest_summary_and_pairing() {
    let dir = tempfile::tempdir().unwrap();
    synth_domains(dir.path());
    let summary = dir.path().join("s.json");
    let out = run(&[
        "ingest",
        "--root",
        p(&dir.path().join("visible")),
        "--pair",
        p(&dir.path().join("thermal")),
        "--out",
        p(&summary),
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = read_json(&summary).unwrap();
    assert_eq!(v["images"], 5);
    assert_eq!(v["pairing"]["pairs"], 5);
    fs::remove_file(dir.path().join("visible/annotations/000003.xml")).unwrap();
    let out = run(&["ingest", "--root", p(&dir.path().join("visible"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("000003"));
}

#[test]
fn ablate_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    synth_domains(dir.path());
    let bin = env!("CARGO_BIN_EXE_fakethermal");
    let cfg = serde_json::json!({
        "axes": {"translation": ["none", "gray"], "inversion": [false, true], "readapt": [false]},
        "hooks": {"detect": format!("'{bin}' detect --source {{SOURCE_DIR}} --target {{TARGET_DIR}} --out {{OUT_DIR}}")},
        "paths": {"visible": "visible", "target": "thermal", "out": "ablation", "split": "test.txt"},
        "seed": 1
    });
    fs::write(dir.path().join("cfg.json"), cfg.to_string()).unwrap();
    fs::write(dir.path().join("test.txt"), "# test ids\n000001\n000003\n").unwrap();
    let out = run(&["ablate", "--config", p(&dir.path().join("cfg.json"))]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = String::from_utf8_lossy(&out.stdout);
    assert_eq!(table.lines().count(), 4, "{table}");
    assert!(table.starts_with("Image trans  Int-Inv  R-A"));
    let root = dir.path().join("ablation");
    assert!(root.join("ablation_report.json").is_file());
    assert!(root
        .join("03_gray_inv/source/images/000004_inv.png")
        .is_file());
    assert_eq!(
        load_domain(&root.join("03_gray_inv/target_test"), false)
            .unwrap()
            .len(),
        2
    );
    let out = run(&["report", p(&root.join("ablation_report.json"))]);
    assert_eq!(String::from_utf8_lossy(&out.stdout), table);
}
