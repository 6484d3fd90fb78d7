use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bimaug(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bimaug")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn demo(dir: &Path) -> PathBuf {
    let out = bimaug(&["make-demo", "--out", dir.to_str().unwrap(), "--episodes", "1", "--frames", "30", "--side", "64"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("config.json")
}

#[test]
fn augment_then_validate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = demo(dir.path());
    let cfg = cfg.to_str().unwrap();

    let out = bimaug(&["--config", cfg, "--jobs", "2", "augment"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(summary["episodes"], 1);
    assert_eq!(summary["replaced"], 3);

    let out = bimaug(&["--config", cfg, "validate"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).contains("3 modified, 0 issues"), "{}", stdout(&out));

    let out = bimaug(&["--config", cfg, "segment"]);
    assert_eq!(code(&out), 0);
    assert!(dir.path().join("output/segmentation/episode_000.json").is_file());
}

#[test]
fn validation_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = demo(dir.path());
    let frames = dir.path().join("dataset/episode_000/frames.jsonl");
    let text = fs::read_to_string(&frames).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut rec: serde_json::Value = serde_json::from_str(&lines[2]).unwrap();
    rec["gripper"]["right"] = serde_json::json!(1.5);
    lines[2] = rec.to_string();
    fs::write(&frames, lines.join("\n") + "\n").unwrap();

    let out = bimaug(&["--config", cfg.to_str().unwrap(), "validate"]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("frame 2 gripper.right"), "{}", stdout(&out));
}

#[test]
fn render_skeleton_checks_joint_limits() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = demo(dir.path());
    let cfg = cfg.to_str().unwrap();
    let out_dir = dir.path().join("render");
    let out_dir = out_dir.to_str().unwrap();

    let out = bimaug(&["--config", cfg, "render-skeleton", "--episode", "episode_000", "--frame", "4", "--out", out_dir]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(Path::new(out_dir).join("cam0_skeleton.png").is_file());

    let joints = r#"{"left": [0, 0, 0, 9, 0, 0, 0], "right": [0, 0, 0, 0, 0, 0, 0]}"#;
    let out = bimaug(&["--config", cfg, "render-skeleton", "--episode", "episode_000", "--frame", "4", "--joints", joints, "--out", out_dir]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("joint 3"));
}

#[test]
fn usage_and_config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&bimaug(&["augment"])), 2);
    assert_eq!(code(&bimaug(&["no-such-command"])), 2);
    let missing = dir.path().join("missing.json");
    assert_eq!(code(&bimaug(&["--config", missing.to_str().unwrap(), "augment"])), 2);

    let cfg = demo(dir.path());
    let cfg = cfg.to_str().unwrap();
    let out = bimaug(&["--config", cfg, "--set", "k=0", "augment"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("k must be at least 1"));
    let out = bimaug(&["--config", cfg, "--set", "paths.dataset=nowhere", "validate"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere"));
}

#[test]
fn tile_and_untile_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = demo(dir.path());
    let cfg = cfg.to_str().unwrap();
    let render = dir.path().join("r");
    let mut views = Vec::new();
    for frame in ["0", "9", "18", "27"] {
        let out_dir = render.join(frame);
        let out = bimaug(&["--config", cfg, "render-skeleton", "--episode", "episode_000", "--frame", frame, "--out", out_dir.to_str().unwrap()]);
        assert_eq!(code(&out), 0);
        views.push(out_dir.join("cam0_skeleton.png"));
    }
    let tiled = dir.path().join("tiled.png");
    let mut args = vec!["tile", "--out", tiled.to_str().unwrap()];
    args.extend(views.iter().map(|v| v.to_str().unwrap()));
    assert_eq!(code(&bimaug(&args)), 0);

    let split = dir.path().join("split");
    let out = bimaug(&["untile", "--count", "4", "--out-dir", split.to_str().unwrap(), tiled.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    for (i, v) in views.iter().enumerate() {
        let a = image_pixels(v);
        let b = image_pixels(&split.join(format!("view{i}.png")));
        assert_eq!(a, b, "view {i}");
    }
}

fn image_pixels(path: &Path) -> Vec<u8> {
    bimaug_core::buffer::ImageBuffer::load_png(path).unwrap().data().to_vec()
}
