use std::path::PathBuf;
use std::process::{Command, Output};

const NESTED: &str = "fork { fork { loop skip }; exit }; loop skip";

fn exitwait(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_exitwait"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn golden(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    std::fs::read_to_string(p).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("exitwait-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn verify_accepts_exit_and_wait() {
    let cert = scratch("cert.json");
    let o = exitwait(&["verify", "-e", "fork { exit }; loop skip", "--emit-cert", cert.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "Verified\n");
    assert_eq!(std::fs::read_to_string(&cert).unwrap(), golden("exit_and_wait.cert.json"));

    let o = exitwait(&["check-proof", cert.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "Ok: {obs(0)} fork { exit }; loop skip {obs(0)}\n");
}

#[test]
fn verify_rejects_bare_loop() {
    let o = exitwait(&["verify", "-e", "loop skip"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).starts_with("Rejected"));
}

#[test]
fn check_proof_reports_the_failing_node() {
    let text = golden("exit_and_wait.cert.json").replacen("\"obs(0) * credit\",\n          \"post\": \"false\"", "\"obs(1) * credit\",\n          \"post\": \"false\"", 1);
    assert_ne!(text, golden("exit_and_wait.cert.json"));
    let cert = scratch("broken.json");
    std::fs::write(&cert, text).unwrap();
    let o = exitwait(&["check-proof", cert.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).starts_with("RuleViolation: "), "{}", stdout(&o));
    assert!(stdout(&o).contains("root/0"), "{}", stdout(&o));

    std::fs::write(&cert, "{").unwrap();
    assert_eq!(exitwait(&["check-proof", cert.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn run_outcomes() {
    let o = exitwait(&["run", "-e", "fork { exit }; loop skip", "--sched", "round-robin", "--fuel", "100"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "AbruptExit(2)\n");

    let o = exitwait(&["run", "-e", "fork { loop skip }; loop skip", "--fuel", "10000"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout(&o), "FuelExhausted\n");

    let o = exitwait(&["run", "-e", NESTED, "--sched", "rotated:1", "--trace"]);
    assert_eq!(stdout(&o), golden("nested.run.txt"));
}

#[test]
fn trace_and_graph_goldens() {
    let o = exitwait(&["trace", "-e", NESTED, "--sched", "script:0,1,2,0,0,0", "--fuel", "6"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), golden("nested.trace.txt"));

    let o = exitwait(&["graph", "-e", NESTED, "--sched", "script:0,1,2,0,0,0", "--fuel", "6", "--prefix"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), golden("nested.dot"));

    assert_eq!(exitwait(&["trace", "-e", "loop skip"]).status.code(), Some(1));
}

#[test]
fn parse_and_usage_errors() {
    let file = scratch("prog.txt");
    std::fs::write(&file, "# waits for the exit\nfork {\n  exit\n};\nloop skip\n").unwrap();
    let o = exitwait(&["parse", file.to_str().unwrap()]);
    assert_eq!(stdout(&o), "fork { exit }; loop skip\n");

    assert_eq!(exitwait(&["parse", "-e", "exit;"]).status.code(), Some(2));
    assert_eq!(exitwait(&["parse"]).status.code(), Some(2));
    assert_eq!(exitwait(&["parse", "-e", "exit", file.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(exitwait(&["run", "-e", "exit", "--sched", "fifo"]).status.code(), Some(2));
}

#[test]
fn fuzz_reports() {
    let o = exitwait(&["fuzz", "--count", "40", "--max-atoms", "8", "--exhaustive", "3", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["total"], 70);
    assert_eq!(v["soundnessViolations"], 0);
    assert_eq!(v["leafSumFailures"], 0);

    let a = exitwait(&["fuzz", "--count", "40", "--sequential", "--json"]);
    let b = exitwait(&["fuzz", "--count", "40", "--json"]);
    let strip = |o: &Output| {
        let mut v: serde_json::Value = serde_json::from_str(&stdout(o)).unwrap();
        v["wallTime"] = serde_json::Value::Null;
        v
    };
    assert_eq!(strip(&a), strip(&b));

    let o = exitwait(&["fuzz", "--count", "10"]);
    assert!(stdout(&o).contains("soundness violations"));
}
