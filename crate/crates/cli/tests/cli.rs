use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fsstn::io::{read_matrix_file, read_signal_file, MatrixData};
use fsstn::stft::MatrixKind;

fn fsstn(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsstn"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn transform_benchmark_fsst4_auto_sigma() {
    let dir = tempfile::tempdir().unwrap();
    let o = fsstn(
        &[
            "transform", "--method", "fsst4", "--signal", "paper", "--sigma", "auto",
            "--output", "m.tfr", "--complex-output", "c.tfr", "--diagnostics", "d.csv",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    match read_matrix_file(dir.path().join("m.tfr")).unwrap() {
        MatrixData::Real(m) => {
            assert_eq!(m.n_frames(), 1024);
            assert_eq!(m.kind, MatrixKind::Magnitude);
            assert!(m.values.iter().all(|&v| v >= 0.0));
        }
        MatrixData::Complex(_) => panic!("magnitude file must be real"),
    }
    match read_matrix_file(dir.path().join("c.tfr")).unwrap() {
        MatrixData::Complex(m) => assert_eq!(m.kind, MatrixKind::Squeezed),
        MatrixData::Real(_) => panic!("complex output must be complex"),
    }
    let diag = fs::read_to_string(dir.path().join("d.csv")).unwrap();
    assert!(diag.contains("dropped,"));
    assert!(diag.contains("order_used_4,"));
}

#[test]
fn rm_is_real_only() {
    let dir = tempfile::tempdir().unwrap();
    let ok = fsstn(
        &["transform", "--method", "rm", "--signal", "paper", "--sigma", "0.04", "--output", "r.tfr"],
        dir.path(),
    );
    assert_eq!(code(&ok), 0);
    assert!(matches!(
        read_matrix_file(dir.path().join("r.tfr")).unwrap(),
        MatrixData::Real(_)
    ));
    let bad = fsstn(
        &[
            "transform", "--method", "rm", "--signal", "paper", "--sigma", "0.04",
            "--output", "r.tfr", "--complex-output", "c.tfr",
        ],
        dir.path(),
    );
    assert_eq!(code(&bad), 2);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 6] = [
        &["reconstruct", "--signal", "paper", "--sigma", "0.04"],
        &["reconstruct", "--signal", "paper", "--K", "2", "--d", "-1"],
        &["evaluate", "--signal", "paper", "--emd", "--methods", ""],
        &["transform", "--signal", "paper", "--method", "fsst9", "--output", "x.tfr"],
        &["transform", "--signal", "paper", "--sigma", "-0.1", "--output", "x.tfr"],
        &["reconstruct", "--signal", "paper", "--K", "1", "--method", "rm"],
    ];
    for args in cases {
        assert_eq!(code(&fsstn(args, dir.path())), 2, "{args:?}");
    }
}

#[test]
fn unreadable_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = fsstn(&["transform", "--input", "missing.csv", "--output", "x.tfr"], dir.path());
    assert_eq!(code(&o), 1);
}

#[test]
fn thread_cap_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_fsstn"))
            .args(["transform", "--signal", "f1", "--sigma", "0.05", "--method", "fsst", "--output", "x.tfr"])
            .env("SQZ_THREADS", threads)
            .current_dir(dir.path())
            .output()
            .unwrap()
    };
    assert_eq!(code(&run("2")), 0);
    assert_eq!(code(&run("0")), 2);
    assert_eq!(code(&run("many")), 2);
}

#[test]
fn reconstruct_writes_modes_ridges_report_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let o = fsstn(
        &[
            "reconstruct", "--signal", "paper", "--method", "fsst4", "--sigma", "0.04",
            "--K", "2", "--d", "0", "--d-sweep", "0..10", "--output-dir", "out",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    for k in 0..2 {
        let m = read_signal_file(out.join(format!("mode{k}.csv"))).unwrap();
        assert_eq!(m.len(), 1024);
    }
    let ridges = fs::read_to_string(out.join("ridges.csv")).unwrap();
    assert_eq!(ridges.lines().count(), 1025);
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 4);
    let sweep = fs::read_to_string(out.join("d_sweep.csv")).unwrap();
    let lines: Vec<&str> = sweep.lines().collect();
    assert_eq!(lines.len(), 12);
    assert!(lines[0].starts_with("d,mode0_snr_db,mode1_snr_db,total_snr_db"));
}

#[test]
fn real_csv_input_is_padded_and_truncated_back() {
    let dir = tempfile::tempdir().unwrap();
    let fs_hz = 1000.0;
    let mut text = String::from("time,value\n");
    for n in 0..1500 {
        let t = n as f64 / fs_hz;
        let v = (2.0 * std::f64::consts::PI * (120.0 * t + 40.0 * t * t)).cos();
        text.push_str(&format!("{t},{v}\n"));
    }
    fs::write(dir.path().join("strain.csv"), text).unwrap();
    let o = fsstn(
        &[
            "reconstruct", "--input", "strain.csv", "--pad-pow2", "--sigma", "0.05",
            "--K", "1", "--d", "3", "--reference", "strain.csv", "--output-dir", "gw",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mode = read_signal_file(dir.path().join("gw/mode0.csv")).unwrap();
    assert_eq!(mode.len(), 1500);
    assert!(mode.is_real());
    let stdout = String::from_utf8_lossy(&o.stdout);
    let snr: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("mode 0: output SNR "))
        .and_then(|r| r.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(snr > 10.0, "{stdout}");
}

#[test]
fn seeded_runs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.tfr", "b.tfr"] {
        let o = fsstn(
            &[
                "transform", "--signal", "paper", "--method", "fsst3", "--sigma", "0.04",
                "--noise-snr", "0", "--seed", "7", "--output", name,
            ],
            dir.path(),
        );
        assert_eq!(code(&o), 0);
    }
    let a = fs::read(dir.path().join("a.tfr")).unwrap();
    let b = fs::read(dir.path().join("b.tfr")).unwrap();
    assert_eq!(a, b);
    assert_eq!(&a[..4], b"TFR1");
}

#[test]
fn evaluate_renyi_emits_one_curve_per_level() {
    let dir = tempfile::tempdir().unwrap();
    let o = fsstn(
        &[
            "evaluate", "--signal", "paper", "--renyi", "--sigma-grid", "0.01:0.01:0.2",
            "--snr-levels", "inf,5,0,-5", "--output-dir", "ev",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let renyi = fs::read_to_string(dir.path().join("ev/renyi.csv")).unwrap();
    let lines: Vec<&str> = renyi.lines().collect();
    assert_eq!(lines[0].split(',').count(), 5);
    assert_eq!(lines.len(), 21);
    let opt = fs::read_to_string(dir.path().join("ev/sigma_opt.csv")).unwrap();
    assert_eq!(opt.lines().count(), 5);
}

#[test]
fn evaluate_emd_table_per_mode() {
    let dir = tempfile::tempdir().unwrap();
    let o = fsstn(
        &[
            "evaluate", "--signal", "paper", "--emd", "--methods", "rm,fsst2,fsst3,fsst4",
            "--snr-levels", "10", "--seeds", "1", "--sigma", "0.04", "--output-dir", "ev",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let emd = fs::read_to_string(dir.path().join("ev/emd.csv")).unwrap();
    let lines: Vec<&str> = emd.lines().collect();
    assert_eq!(lines[0], "snr_db,mode,emd_rm,emd_fsst2,emd_fsst3,emd_fsst4");
    assert_eq!(lines.len(), 3);
}

#[test]
fn evaluate_emd_needs_a_known_ideal() {
    let dir = tempfile::tempdir().unwrap();
    let o = fsstn(&["evaluate", "--signal", "gw-surrogate", "--emd"], dir.path());
    assert_eq!(code(&o), 2);
}
