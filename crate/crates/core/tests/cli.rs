use std::path::Path;
use std::process::{Command, Output};

fn bin(name: &str) -> Command {
    let path = match name {
        "mqsvis" => env!("CARGO_BIN_EXE_mqsvis"),
        "mqsvis_norm" => env!("CARGO_BIN_EXE_mqsvis_norm"),
        "mqsvis_tile" => env!("CARGO_BIN_EXE_mqsvis_tile"),
        "mqsvis_gather" => env!("CARGO_BIN_EXE_mqsvis_gather"),
        other => panic!("unknown binary {other}"),
    };
    let mut c = Command::new(path);
    c.env_remove("MQSVIS_NUM_THREADS").env_remove("OMP_NUM_THREADS");
    c
}

fn run(mut c: Command, dir: &Path) -> Output {
    c.current_dir(dir).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Runs the four-step session and returns the gather output.
fn session(dir: &Path, threads: Option<&str>) -> String {
    let with_threads = |mut c: Command| {
        if let Some(t) = threads {
            c.env("OMP_NUM_THREADS", t);
        }
        c
    };
    let mut norm = with_threads(bin("mqsvis_norm"));
    norm.args(["5", "2"]);
    let n2 = stdout(&run(norm, dir));
    for (x, y, p1, p2) in [
        ("0", "0", "plot-0,0.txt", "/dev/null"),
        ("1", "0", "plot-1,0.txt", "plot-0,1.txt"),
        ("1", "1", "plot-1,1.txt", "/dev/null"),
    ] {
        let mut tile = with_threads(bin("mqsvis_tile"));
        tile.args(["5", "2", "0", n2.trim(), "10", x, y, "1", p1, p2]);
        let out = run(tile, dir);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::write(dir.join(format!("M5_Dth2_r0-{x},{y}.txt")), &out.stdout).unwrap();
    }
    let mut gather = with_threads(bin("mqsvis_gather"));
    gather.args(["5", "2", "0", "2"]);
    let out = run(gather, dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    stdout(&out)
}

#[test]
fn session_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let report = session(dir.path(), None);
    let first = report.lines().next().unwrap();
    assert!(first.starts_with("total probability sum="), "{report}");
    assert!(report.contains("simple visibility computed from the overlap=1.000"));
    assert!(report.contains("visibility with Gaussian blur (3sigma=150)="));
    for plot in ["plot-0,0.txt", "plot-1,0.txt", "plot-0,1.txt", "plot-1,1.txt"] {
        let text = std::fs::read_to_string(dir.path().join(plot)).unwrap();
        assert_eq!(text.lines().count(), 100, "{plot}");
    }
    let p10 = std::fs::read_to_string(dir.path().join("plot-1,0.txt")).unwrap();
    assert!(p10.starts_with("10\t0\t"));
}

#[test]
fn thread_count_does_not_change_the_report() {
    let reports: Vec<String> = ["1", "2", "8"]
        .iter()
        .map(|t| session(tempfile::tempdir().unwrap().path(), Some(t)))
        .collect();
    assert_eq!(reports[0], reports[1]);
    assert_eq!(reports[0], reports[2]);
}

#[test]
fn subcommands_match_shims() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = bin("mqsvis");
    a.args(["norm", "5", "2"]);
    let mut b = bin("mqsvis_norm");
    b.args(["5", "2"]);
    assert_eq!(stdout(&run(a, dir.path())), stdout(&run(b, dir.path())));
}

#[test]
fn norm_output_feeds_tile() {
    let dir = tempfile::tempdir().unwrap();
    let mut norm = bin("mqsvis");
    norm.args(["norm", "2", "3", "0.1"]);
    let n2 = stdout(&run(norm, dir.path()));
    let mut tile = bin("mqsvis");
    tile.args(["tile", "2", "3", "0.1", &n2, "5", "0", "1", "5", "/dev/null", "/dev/null"]);
    let out = run(tile, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // beam-splitter preselection skips the blur unless forced
    assert!(!stdout(&out).contains("blur_overlap"));
    let mut forced = bin("mqsvis");
    forced.args(["tile", "--blur", "2", "3", "0.1", &n2, "5", "0", "1", "5", "/dev/null", "/dev/null"]);
    assert!(stdout(&run(forced, dir.path())).contains("blur_overlap_3sigma_150="));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let mut wrong_arity = bin("mqsvis_gather");
    wrong_arity.args(["5", "2", "0"]);
    let out = run(wrong_arity, dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    let mut missing = bin("mqsvis_gather");
    missing.args(["5", "2", "0", "2"]);
    let out = run(missing, dir.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    for hole in ["(0,0)", "(1,0)", "(1,1)"] {
        assert!(err.contains(hole), "{err}");
    }

    let mut degenerate = bin("mqsvis_norm");
    degenerate.args(["0", "5", "1"]);
    assert_eq!(run(degenerate, dir.path()).status.code(), Some(1));

    let mut bad_n2 = bin("mqsvis_tile");
    bad_n2.args(["5", "2", "0", "0.5", "10", "0", "0", "1", "/dev/null", "/dev/null"]);
    assert_eq!(run(bad_n2, dir.path()).status.code(), Some(1));
}
