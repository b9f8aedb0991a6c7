use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_krylov-adjoint")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn hilbert_accuracy_with_reprojection_passes() {
    let out = run(&["hilbert-accuracy", "--n", "6", "--reproject"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.starts_with("n,mode,epsilon\n"));
    assert_eq!(text.lines().count(), 7);
}

#[test]
fn hilbert_accuracy_reports_both_modes() {
    let out = run(&["hilbert-accuracy", "--n", "4"]);
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 9);
    assert!(text.contains(",on,") && text.contains(",off,"));
}

#[test]
fn bench_matvecs_on_a_matrix_market_file() {
    let dir = tempfile::tempdir().unwrap();
    let mtx = dir.path().join("a.mtx");
    let mut body = String::from("%%MatrixMarket matrix coordinate real symmetric\n30 30 59\n");
    for i in 1..=30 {
        body.push_str(&format!("{i} {i} 4.0\n"));
        if i < 30 {
            body.push_str(&format!("{} {i} -1.0\n", i + 1));
        }
    }
    std::fs::write(&mtx, body).unwrap();
    let csv = dir.path().join("bench.csv");
    let out = run(&[
        "bench-matvecs",
        "--mtx",
        mtx.to_str().unwrap(),
        "--k",
        "5,10",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "k,forward_matvecs,adjoint_matvecs,forward_wall_s,adjoint_wall_s,steps"
    );
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&first[..3], &["5", "5", "5"]);
}

#[test]
fn wave_demo_converges() {
    let out = run(&["wave-demo", "--n", "3", "--k", "4,18"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.starts_with("k,fwd_error,grad_error,steps\n"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn logdet_demo_writes_one_row() {
    let out = run(&["logdet-demo", "--n", "30", "--k", "15", "--l", "20"]);
    let text = stdout(&out);
    assert!(text.starts_with("n,k,l,seed,estimate,"));
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn invalid_arguments_fail() {
    for args in [
        &["wave-demo", "--n", "3", "--k", "19"][..],
        &["wave-demo", "--t", "-1"],
        &["bench-matvecs", "--n", "10", "--k", "0"],
        &["bench-matvecs", "--mtx", "/nonexistent.mtx"],
        &["logdet-demo", "--n", "10", "--k", "20"],
        &["hilbert-accuracy", "--n", "0"],
        &["hilbert-accuracy", "--reproject", "--no-reproject"],
        &["no-such-command"],
    ] {
        let out = run(args);
        assert!(!out.status.success(), "{args:?} succeeded");
        assert!(!out.stderr.is_empty());
    }
}
