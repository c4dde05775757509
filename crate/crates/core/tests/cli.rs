use std::io::Write;
use std::process::{Command, Output, Stdio};

fn pmenum(args: &[&str], input: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_pmenum"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn generated(args: &[&str]) -> String {
    let mut full = vec!["gen"];
    full.extend_from_slice(args);
    let o = pmenum(&full, "");
    assert!(o.status.success());
    stdout(&o)
}

#[test]
fn enumerate_k33() {
    let k33 = generated(&["complete", "3"]);
    assert!(k33.starts_with("p pm 3 3 9\n"));
    let o = pmenum(&["enumerate", "-"], &k33);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 7);
    assert_eq!(lines[6], "count 6");
    let mut distinct = lines[..6].to_vec();
    distinct.sort();
    distinct.dedup();
    assert_eq!(distinct.len(), 6);
    for line in &lines[..6] {
        let lefts: Vec<&str> = line.split(' ').map(|p| p.split('-').next().unwrap()).collect();
        assert_eq!(lefts, ["1", "2", "3"]);
    }
}

#[test]
fn single_edge() {
    let o = pmenum(&["enumerate", "-"], "p pm 1 1 1\ne 1 1\n");
    assert_eq!(stdout(&o), "1-1\ncount 1\n");
    let o = pmenum(&["stats", "-"], "p pm 1 1 1\ne 1 1\n");
    assert!(stdout(&o).lines().any(|l| l == "matchings=1"));
}

#[test]
fn exit_codes() {
    let o = pmenum(&["enumerate", "-"], "p pm 1 2 2\ne 1 1\ne 1 2\n");
    assert_eq!(o.status.code(), Some(2));
    let o = pmenum(&["enumerate", "-"], "p pm 2 2 3\ne 1 1\n");
    assert_eq!(o.status.code(), Some(3));
    let o = pmenum(&["check", "-"], "p pm 2 2 1\ne 1 9\n");
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn limit_truncates() {
    let k4 = generated(&["complete", "4"]);
    let o = pmenum(&["enumerate", "--limit", "5", "-"], &k4);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 7);
    assert_eq!(&lines[5..], ["count 5", "truncated"]);
    let o = pmenum(&["enumerate", "--format", "count-only", "-"], &k4);
    assert_eq!(stdout(&o), "count 24\n");
}

#[test]
fn check_reports_ok() {
    let h33 = generated(&["hk", "3", "3"]);
    let o = pmenum(&["check", "-"], &h33);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "OK count=6\n");
    let random = generated(&["random", "7", "--density", "0.5", "--seed", "3"]);
    let o = pmenum(&["check", "-"], &random);
    assert!(stdout(&o).starts_with("OK count="));
}

#[test]
fn cycle_trim_creates_nine_nodes() {
    let c10 = generated(&["cycle", "10"]);
    let o = pmenum(&["stats", "-"], &c10);
    let out = stdout(&o);
    assert!(out.lines().any(|l| l == "matchings=2"), "{out}");
    assert!(out.lines().any(|l| l == "nodes_created=9"), "{out}");
}

#[test]
fn mincount_and_determinism() {
    let g = generated(&["mincount", "10", "14"]);
    let once = stdout(&pmenum(&["enumerate", "-"], &g));
    let twice = stdout(&pmenum(&["enumerate", "-"], &g));
    assert_eq!(once, twice);
    assert!(once.ends_with("count 6\n"), "{once}");
    assert_eq!(pmenum(&["gen", "mincount", "6", "9"], "").status.code(), Some(3));
}
