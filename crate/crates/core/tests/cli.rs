use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use paqe::enhance::ModelTriple;
use paqe::frame_io::write_raw_video;
use paqe::nn::{NetConfig, QENetwork};
use paqe::synth::{generate_clip, ClipSpec};

fn paqe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_paqe"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("run paqe")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn clip(dir: &Path, frames: usize) -> String {
    let path = dir.join("clip.yuv");
    write_raw_video(&generate_clip(&ClipSpec::new(32, 32, frames, 3)), &path).unwrap();
    path.to_string_lossy().into_owned()
}

// Untrained nets are exact pass-throughs, which is all these tests need.
fn tiny_models(dir: &Path) -> String {
    let net = |c, seed| {
        QENetwork::new(NetConfig { in_channels: c, channels: 4, blocks: 1 }, seed).unwrap()
    };
    let models = ModelTriple::new(net(3, 1), net(3, 2), net(2, 3)).unwrap();
    let path = dir.join("models");
    models.save(&path).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn encode_writes_streams_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let input = clip(dir.path(), 5);
    let models = tiny_models(dir.path());
    let out = dir.path().join("out");
    let out_s = out.to_string_lossy();
    let res = paqe(&[
        "encode", "--in", &input, "--w", "32", "--h", "32", "--qp", "37", "--out", &out_s,
        "--ilf-mode", "C_I", "--models", &models,
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    for suffix in ["recon.yuv", "pred.yuv", "meta.jsonl", "ilf.csv"] {
        assert!(out.join(format!("clip.{suffix}")).exists(), "missing {suffix}");
    }
    let meta = fs::read_to_string(out.join("clip.meta.jsonl")).unwrap();
    assert_eq!(meta.lines().count(), 5);
    let ilf = fs::read_to_string(out.join("clip.ilf.csv")).unwrap();
    assert!(ilf.starts_with("poc,mse_before,mse_after,flag"));
}

#[test]
fn missing_dimension_is_a_usage_error() {
    let res = paqe(&["encode", "--in", "x.yuv", "--h", "32"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).contains("--w"));
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let input = clip(dir.path(), 2);
    let res = paqe(&["--config", &cfg.to_string_lossy(), "encode", "--in", &input, "--w", "32", "--h", "32"]);
    assert_eq!(res.status.code(), Some(2), "{}", stderr(&res));
}

#[test]
fn report_of_identical_curves_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let mut rd = String::from("label,qp,rate_bits,quality\n");
    for (qp, rate, q) in [(27, 9000.0, 38.0), (32, 5000.0, 35.5), (37, 2600.0, 33.0), (42, 1400.0, 30.2)] {
        rd.push_str(&format!("REF,{qp},{rate},{q}\nSAME,{qp},{rate},{q}\n"));
    }
    let rd_path = dir.path().join("seq.csv");
    fs::write(&rd_path, rd).unwrap();
    let out = dir.path().to_string_lossy().into_owned();
    let res = paqe(&["report", "--rd", &rd_path.to_string_lossy(), "--out", &out]);
    assert!(res.status.success(), "{}", stderr(&res));
    let report = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let row = report.lines().nth(1).unwrap();
    let cols: Vec<&str> = row.split(',').collect();
    assert_eq!(cols[0], "SAME vs REF");
    assert!(cols[1].parse::<f64>().unwrap().abs() < 1e-9, "{row}");
    assert!(cols[2].parse::<f64>().unwrap().abs() < 1e-12, "{row}");
    assert!(dir.path().join("plot.csv").exists());
}

#[test]
fn malformed_rd_row_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let rd_path = dir.path().join("bad.csv");
    fs::write(&rd_path, "label,qp,rate_bits,quality\nREF,27,100,38\nREF,32,abc,35\n").unwrap();
    let res = paqe(&["report", "--rd", &rd_path.to_string_lossy(), "--out", &dir.path().to_string_lossy()]);
    assert!(!res.status.success());
    assert!(stderr(&res).contains("line 3"), "{}", stderr(&res));
}

#[test]
fn sweep_output_feeds_report() {
    let dir = tempfile::tempdir().unwrap();
    let input = clip(dir.path(), 5);
    let models = tiny_models(dir.path());
    let out = dir.path().join("sweep");
    let res = paqe(&[
        "sweep", "--in", &input, "--w", "32", "--h", "32", "--models", &models, "--modes", "REF,C_I,ADAPTIVE",
        "--qps", "32,37,42,47", "--out", &out.to_string_lossy(),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    assert!(out.join("clip.sweep.csv").exists());
    let rd = out.join("clip.rd.csv");
    let res = paqe(&["report", "--rd", &rd.to_string_lossy(), "--out", &out.to_string_lossy()]);
    assert!(res.status.success(), "{}", stderr(&res));
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 3, "{report}");
    assert!(report.contains("ADAPTIVE vs REF"));
}

#[test]
fn enhance_without_pred_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = clip(dir.path(), 3);
    let models = tiny_models(dir.path());
    let d = dir.path().to_string_lossy().into_owned();
    let res = paqe(&["encode", "--in", &input, "--w", "32", "--h", "32", "--out", &d]);
    assert!(res.status.success(), "{}", stderr(&res));
    fs::remove_file(dir.path().join("clip.pred.yuv")).unwrap();
    let stream = dir.path().join("clip").to_string_lossy().into_owned();
    let res = paqe(&["enhance", "--stream", &stream, "--w", "32", "--h", "32", "--models", &models]);
    assert!(!res.status.success());
    assert!(stderr(&res).contains("clip.pred.yuv"), "{}", stderr(&res));

    // the unaware method does not need the prediction stream
    let res = paqe(&[
        "enhance", "--stream", &stream, "--w", "32", "--h", "32", "--models", &models, "--method", "unaware",
        "--report", "--orig", &input,
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let psnr = fs::read_to_string(dir.path().join("clip.psnr.csv")).unwrap();
    assert_eq!(psnr.lines().count(), 4);
}
