use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nesr_core::synth::io::{read_spectral_image, read_tensor};

const SMALL: [&str; 10] = [
    "--set",
    "data.height=16",
    "--set",
    "data.width=16",
    "--set",
    "model.encoder_channels=2",
    "--set",
    "model.embed_channels=2",
    "--set",
    "train.crop=8",
];

fn nesr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nesr"))
        .args(args)
        .arg("--quiet")
        .env_remove("NESR_SEED")
        .output()
        .unwrap()
}

fn nesr_env(args: &[&str], seed: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nesr"))
        .args(args)
        .arg("--quiet")
        .env("NESR_SEED", seed)
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn with_small<'a>(args: &[&'a str]) -> Vec<&'a str> {
    args.iter().copied().chain(SMALL).collect()
}

fn gen_data(dir: &Path, extra: &[&str]) {
    let out = dir.to_str().unwrap();
    let mut args = with_small(&["gen-data", "--out", out, "--scenes", "2", "--test-scenes", "1"]);
    args.extend_from_slice(extra);
    ok(&nesr(&args));
}

fn train_small(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = with_small(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--set",
        "train.max_iters=2",
        "--set",
        "train.batch=1",
        "--set",
        "train.sample_voxels=32",
    ]);
    args.extend_from_slice(extra);
    nesr(&args)
}

#[test]
fn gen_data_twice_gives_identical_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    gen_data(&a, &["--seed", "7"]);
    gen_data(&b, &["--seed", "7"]);
    for split in ["train", "test"] {
        let ma = fs::read(a.join(split).join("manifest.json")).unwrap();
        let mb = fs::read(b.join(split).join("manifest.json")).unwrap();
        assert_eq!(ma, mb);
    }
    let echo: serde_json::Value = serde_json::from_slice(&fs::read(a.join("config.json")).unwrap()).unwrap();
    assert_eq!(echo["seed"], 7);
    assert_eq!(echo["data"]["train_scenes"], 2);
    let run: serde_json::Value = serde_json::from_slice(&fs::read(a.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["command"], "gen-data");
    assert_eq!(run["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn seed_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("env");
    let args = with_small(&["gen-data", "--out", out.to_str().unwrap(), "--scenes", "1", "--test-scenes", "1"]);
    ok(&nesr_env(&args, "11"));
    let echo: serde_json::Value = serde_json::from_slice(&fs::read(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(echo["seed"], 11);
    let flagged = dir.path().join("flag");
    let mut args = with_small(&["gen-data", "--out", flagged.to_str().unwrap(), "--scenes", "1", "--test-scenes", "1"]);
    args.extend(["--seed", "11"]);
    ok(&nesr(&args));
    assert_eq!(
        fs::read(out.join("train/manifest.json")).unwrap(),
        fs::read(flagged.join("train/manifest.json")).unwrap()
    );
    let bad = nesr_env(&["gen-data", "--out", out.to_str().unwrap()], "eleven");
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr(&bad).contains("NESR_SEED"));
}

#[test]
fn unknown_config_keys_exit_with_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let res = nesr(&["gen-data", "--out", out, "--set", "train.learning_rate=0.1"]);
    assert_eq!(res.status.code(), Some(1));
    let err = stderr(&res);
    assert!(err.contains("learning_rate"), "{err}");
    assert_eq!(err.trim().lines().count(), 1, "{err}");

    let file = dir.path().join("bad.json");
    fs::write(&file, r#"{"model": {"layers": 3}}"#).unwrap();
    let res = nesr(&["gen-data", "--out", out, "--config", file.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("layers"));

    let res = nesr(&["gen-data", "--out", out, "--config", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("missing.json"));
}

#[test]
fn train_reconstruct_and_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    gen_data(&data, &[]);
    let run = dir.path().join("run");
    ok(&train_small(&data, &run, &["--set", "train.checkpoint_every=1"]));
    let losses: Vec<f64> = serde_json::from_slice(&fs::read(run.join("losses.json")).unwrap()).unwrap();
    assert_eq!(losses.len(), 2);
    assert!(run.join("checkpoint-000001.nsrc").is_file());
    let ckpt = run.join("model.nsrc");

    let rec = dir.path().join("rec");
    let res = nesr(&[
        "reconstruct",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--scene",
        "test-0000",
        "--bands",
        "400:5:700",
        "--out",
        rec.to_str().unwrap(),
    ]);
    ok(&res);
    let img = read_spectral_image(rec.join("reconstruction.nsrt")).unwrap();
    assert_eq!(img.bands(), 61);
    assert_eq!((img.height(), img.width()), (16, 16));
    let map = read_tensor(rec.join("error_map.nsrt")).unwrap();
    assert_eq!(map.shape(), &[16, 16]);
    let pgm = fs::read(rec.join("error_map.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n16 16\n255\n"));
    assert_eq!(pgm.len(), b"P5\n16 16\n255\n".len() + 256);

    let from_file = dir.path().join("file");
    ok(&nesr(&[
        "reconstruct",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--input",
        data.join("test/test-0000.rgb.nsrt").to_str().unwrap(),
        "--gt",
        data.join("test/test-0000.spectral.nsrt").to_str().unwrap(),
        "--out",
        from_file.to_str().unwrap(),
    ]));
    assert_eq!(read_spectral_image(from_file.join("reconstruction.nsrt")).unwrap().bands(), 31);
    assert!(from_file.join("error_map.pgm").is_file());

    let ev = dir.path().join("eval");
    ok(&nesr(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--bands",
        "400:20:700",
        "--out",
        ev.to_str().unwrap(),
    ]));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(ev.join("report.json")).unwrap()).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r["bands"] == 16));
}

#[test]
fn out_of_range_bands_exit_with_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    gen_data(&data, &[]);
    let run = dir.path().join("run");
    ok(&train_small(&data, &run, &[]));
    for bands in ["380:10:700", "400:10:750", "400-700", "700:10:400"] {
        let res = nesr(&[
            "reconstruct",
            "--checkpoint",
            run.join("model.nsrc").to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--scene",
            "test-0000",
            "--bands",
            bands,
            "--out",
            dir.path().join("rec").to_str().unwrap(),
        ]);
        assert_eq!(res.status.code(), Some(1), "{bands}: {}", stderr(&res));
        assert_eq!(stderr(&res).trim().lines().count(), 1);
    }
}

#[test]
fn bench_without_checkpoint_names_the_mode() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    gen_data(&data, &[]);
    let res = nesr(&["bench", "--mode", "extreme", "--data", data.to_str().unwrap(), "--out", dir.path().join("b").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    let err = stderr(&res);
    assert!(err.contains("extreme") && err.contains("model"), "{err}");

    let res = nesr(&["bench", "--mode", "sideways", "--out", dir.path().join("b").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn bench_extreme_reports_every_band_count() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    gen_data(&data, &[]);
    let run = dir.path().join("run");
    ok(&train_small(&data, &run, &[]));
    let out = dir.path().join("bench");
    let key = format!("model={}", run.join("model.nsrc").display());
    let res = nesr(&["bench", "--mode", "extreme", "--checkpoint", &key, "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    ok(&res);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap();
    let mut bands: Vec<u64> = report["rows"].as_array().unwrap().iter().map(|r| r["bands"].as_u64().unwrap()).collect();
    bands.sort();
    bands.dedup();
    assert_eq!(bands, [41, 51, 61]);
    assert!(String::from_utf8_lossy(&res.stdout).contains("61"));
}

#[test]
fn strict_training_is_byte_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    gen_data(&data, &[]);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&train_small(&data, &a, &["--strict", "--seed", "5"]));
    ok(&train_small(&data, &b, &["--strict", "--seed", "5"]));
    for file in ["model.nsrc", "losses.json", "config.json"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }

    let replay = dir.path().join("replay");
    let echo = a.join("config.json");
    ok(&nesr(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--config",
        echo.to_str().unwrap(),
        "--strict",
        "--out",
        replay.to_str().unwrap(),
    ]));
    assert_eq!(fs::read(a.join("model.nsrc")).unwrap(), fs::read(replay.join("model.nsrc")).unwrap());
}

#[test]
fn resume_continues_to_the_new_budget() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    gen_data(&data, &[]);
    let (short, long, resumed) = (dir.path().join("s"), dir.path().join("l"), dir.path().join("r"));
    ok(&train_small(&data, &short, &[]));
    ok(&train_small(&data, &long, &["--set", "train.max_iters=3"]));
    let ckpt = short.join("model.nsrc");
    ok(&train_small(&data, &resumed, &["--set", "train.max_iters=3", "--resume", ckpt.to_str().unwrap()]));
    assert_eq!(fs::read(long.join("losses.json")).unwrap(), fs::read(resumed.join("losses.json")).unwrap());
}
