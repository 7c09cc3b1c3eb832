use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dynimage::io::{TensorData, TensorFile};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynimage"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path_arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn two_frame_golden_png() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture("two_frames");
    let out = run(&[
        "pool", "-i", path_arg(&input), "--modality", "gray", "--method", "arp",
        "--variant", "avg", "--window", "full", "--sqrt", "-o", path_arg(dir.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let png = image::open(dir.path().join("dynamic.png")).unwrap().into_luma8();
    assert_eq!(png.dimensions(), (2, 2));
    assert_eq!(png.as_raw(), &[255, 128, 128, 0]);
    assert!(stdout(&out).contains("frames 1-2"));
}

#[test]
fn mean_of_constant_frames_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "pool", "-i", path_arg(&fixture("constant")), "--method", "mean", "--window", "full",
        "-o", path_arg(dir.path()),
    ]);
    assert!(out.status.success());
    let png = image::open(dir.path().join("dynamic.png")).unwrap().into_rgb8();
    assert_eq!(png.dimensions(), (4, 3));
    assert!(png.as_raw().iter().all(|&b| b == 128));
}

#[test]
fn windows_write_one_file_each() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "pool", "-i", path_arg(&fixture("constant")), "--method", "arp", "--window", "2",
        "--stride", "1", "--temp-pool", "none", "-o", path_arg(dir.path()),
    ]);
    assert!(out.status.success());
    for k in 0..3 {
        assert!(dir.path().join(format!("window_{k:04}.png")).exists());
    }
    assert!(!dir.path().join("window_0003.png").exists());
    assert_eq!(stdout(&out).lines().count(), 3);
}

#[test]
fn bad_options_exit_1_and_missing_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "pool", "-i", path_arg(&fixture("two_frames")), "--method", "rp", "--max-iters", "0",
        "-o", path_arg(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error:"));
    assert_eq!(err.trim_end().lines().count(), 1);

    let out = run(&["pool", "-i", "/nonexistent/frames", "-o", path_arg(dir.path())]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&["pool", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn coeffs_csv() {
    let out = run(&["coeffs", "--length", "3", "--variant", "avg"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,value"));
    let values: Vec<f64> = lines
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    let want = [-4.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0];
    for (v, w) in values.iter().zip(want) {
        assert!((v - w).abs() < 1e-12);
    }

    let out = run(&["coeffs", "--length", "4", "--variant", "direct"]);
    let direct: Vec<f64> = stdout(&out)
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(direct, vec![-3.0, -1.0, 1.0, 3.0]);
}

#[test]
fn gradcheck_reports_pass() {
    let out = run(&["gradcheck", "--shape", "3x4x4", "--frames", "7"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let row = text.lines().nth(1).unwrap();
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(fields[0], "pass");
    assert!(fields[1].parse::<f64>().unwrap() < 1e-5);
    assert_eq!(fields[2], "336");
}

#[test]
fn rank_acc_lists_methods() {
    let input = fixture("two_frames");
    let out = run(&["rank-acc", "-i", path_arg(&input), "--modality", "gray", "--methods", "arp,rp"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("method,accuracy,pairs_correct,pairs_total"));
    // two frames that differ: any nonzero summary orders them correctly
    for line in lines.by_ref().take(2) {
        assert!(line.ends_with(",1,1"), "{line}");
    }
    assert_eq!(lines.next(), None);
}

#[test]
fn fuse_single_stream_is_identity_and_weights_apply() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    std::fs::write(&a, "run,jump\n0.25,0.75\n1,0\n").unwrap();
    std::fs::write(&b, "run,jump\n0.75,0.25\n0,1\n").unwrap();

    let out = run(&["fuse", "--input", path_arg(&a)]);
    assert!(out.status.success());
    let rows: Vec<Vec<f64>> = stdout(&out)
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows, vec![vec![0.25, 0.75], vec![1.0, 0.0]]);

    let fused = dir.path().join("fused.csv");
    let out = run(&[
        "fuse", "--input", path_arg(&a), path_arg(&b), "--weights", "3,1", "-o", path_arg(&fused),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&fused).unwrap();
    assert!(text.starts_with("run,jump"));
    let first: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!((first[0] - 0.375).abs() < 1e-15 && (first[1] - 0.625).abs() < 1e-15);
}

#[test]
fn flow_encode_writes_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("flow.dynt");
    let output = dir.path().join("flow_u8.dynt");
    TensorFile::new(vec![2, 1, 3], TensorData::F64(vec![-20.0, 0.0, 20.0, -100.0, 100.0, 10.0]))
        .unwrap()
        .write(&input)
        .unwrap();
    let out = run(&["flow-encode", "-i", path_arg(&input), "-o", path_arg(&output)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let file = TensorFile::read(&output).unwrap();
    assert_eq!(file.dims, [2, 1, 3]);
    match &file.data {
        TensorData::U8(bytes) => assert_eq!(bytes, &[0, 128, 255, 0, 255, 191]),
        other => panic!("expected bytes, got {:?}", other.dtype()),
    }
}

#[test]
fn identical_runs_give_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = run(&[
            "pool", "-i", path_arg(&fixture("two_frames")), "--method", "rp", "--window", "full",
            "--raw", "-o", path_arg(dir.path()),
        ]);
        assert!(out.status.success());
    }
    for name in ["dynamic.png", "dynamic.f64.dynt"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
}
