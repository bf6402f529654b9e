use std::process::Command;

fn nf(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_nf")).args(args).output().expect("run nf");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn example_two_prints_the_witness() {
    let (code, out, _) = nf(&["example", "ex2"]);
    assert_eq!(code, 0);
    assert!(out.contains("[h1, h3] = (-(1/2)*y1)*dy1 + (y3)*dy3"), "{out}");
    assert!(out.contains("N_{P°} not involutive: CONFIRMED"));
}

#[test]
fn json_report_has_verdicts() {
    let (code, out, _) = nf(&["example", "ex3", "--format", "json"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["verdicts"][0]["confirmed"], true);
    assert_eq!(v["space"]["dim"], 4);
}

#[test]
fn unknown_example_is_a_usage_error() {
    let (code, _, err) = nf(&["example", "ex9"]);
    assert_eq!(code, 1);
    assert!(err.contains("unknown example"));
}

#[test]
fn bad_numeric_option_is_a_usage_error() {
    let (code, _, err) = nf(&["example", "ex2", "--check-numeric", "points=zero"]);
    assert_eq!(code, 1, "{err}");
}

#[test]
fn syntax_errors_report_file_line_and_column() {
    let dir = std::env::temp_dir().join(format!("nf-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad.nf");
    std::fs::write(&path, "space dim=2\nF2 := y1^2 + y2^2\nsolve nullity\n").unwrap();
    let (code, _, err) = nf(&["run", path.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("bad.nf:3:"), "{err}");
    std::fs::remove_dir_all(&dir).unwrap();
}
