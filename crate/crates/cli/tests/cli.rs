use std::path::Path;
use std::process::{Command, Output};

fn sfcalc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sfcalc")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn reproduce_example_passes_and_writes_both_reports() {
    let dir = tempfile::tempdir().unwrap();
    let o = sfcalc(&["reproduce-example", "-o", "out/example"], dir.path());
    assert!(o.status.success(), "{}", stdout(&o));
    let txt = std::fs::read_to_string(dir.path().join("out/example.txt")).unwrap();
    assert_eq!(txt, stdout(&o));
    assert!(txt.contains("PASS left_example") && txt.ends_with("result: PASS\n"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/example.json")).unwrap()).unwrap();
    assert_eq!(json["passed"], true);
    assert_eq!(json["matrices"][0]["name"], "E0");
}

#[test]
fn spectrum_of_diagonal_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(
        dir.path(),
        "job.toml",
        r#"
task = "spectrum"
[operator]
kind = "matrix"
rows = [[[1, 0, 0, 0], [0, 0, 0, 0]], [[0, 0, 0, 0], [0, 1, 0, 0]]]
[expected]
spheres = [[1, 0], [0, 1]]
"#,
    );
    let o = sfcalc(&["--spec", &spec], dir.path());
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("spectrum: {(0, 1), (1, 0)}"));
}

#[test]
fn wrong_expectation_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(
        dir.path(),
        "job.toml",
        r#"
[operator]
kind = "matrix"
rows = [[[1, 0, 0, 0]]]
[expected]
spheres = [[2, 0]]
"#,
    );
    let o = sfcalc(&["spectrum", "--spec", &spec], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL expected_spheres"));
}

#[test]
fn verify_seeded_random_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "job.toml", "task = \"verify\"\n[operator]\nkind = \"random\"\ndim = 3\n");
    let o = sfcalc(&["--spec", &spec, "--seed", "9", "--unit", "0,1,1"], dir.path());
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS unit_independence"));
}

#[test]
fn reports_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(
        dir.path(),
        "job.toml",
        "task = \"apply-left\"\nseed = 4\n[operator]\nkind = \"random\"\ndim = 3\n[function]\nname = \"exp\"\n",
    );
    let read = |n: &str| std::fs::read(dir.path().join(n)).unwrap();
    let a = sfcalc(&["--spec", &spec, "-o", "r"], dir.path());
    assert!(a.status.success(), "{}", stdout(&a));
    let first = read("r.json");
    let b = sfcalc(&["--spec", &spec, "-o", "r"], dir.path());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(first, read("r.json"));
}

#[test]
fn malformed_spec_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "job.toml", "task = \"spectrum\"\n[operator]\nkind = \"matrix\"\nrows = 3\n");
    let o = sfcalc(&["--spec", &spec], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("invalid job spec") && err.contains("line 2") && err.contains("expected a sequence"), "{err}");
}

#[test]
fn diagonal_operator_rejects_left_application() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(
        dir.path(),
        "job.toml",
        "[operator]\nkind = \"diagonal\"\nsymbols = [[1, 0, 0, 0]]\n[function]\nname = \"exp\"\n",
    );
    let o = sfcalc(&["apply-left", "--spec", &spec], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn shipped_jobs_pass() {
    let jobs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../jobs");
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(jobs).unwrap() {
        let path = entry.unwrap().path();
        let o = sfcalc(&["--spec", path.to_str().unwrap()], dir.path());
        assert!(o.status.success(), "{}: {}{}", path.display(), stdout(&o), String::from_utf8_lossy(&o.stderr));
    }
}
