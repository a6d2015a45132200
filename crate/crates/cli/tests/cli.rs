use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clique-lab")).args(args).env_remove("CLIQUE_LAB_SEED").output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn run_writes_the_record_header() {
    let out = cli(&["run", "--algo", "improved_ag", "--n", "16", "--trials", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("trial,algo,n,params,rounds_or_time,messages,leader_count,leader_id,success,attempts,seconds")
    );
    let rows: Vec<_> = lines.collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("0,improved_ag,16,ell=3,3.0,"));
}

#[test]
fn no_wallclock_output_is_reproducible() {
    let args = ["run", "--algo", "las_vegas", "--n", "64", "--trials", "20", "--seed", "7", "--no-wallclock"];
    let a = cli(&args);
    assert!(a.status.success());
    assert_eq!(stdout(&a), stdout(&cli(&args)));
    let jsonl = cli(&["run", "--algo", "async_levels", "--n", "8", "--format", "jsonl", "--no-wallclock"]);
    assert!(stdout(&jsonl).starts_with("{\"trial\":0,\"algo\":\"async_levels\""));
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        &["run", "--algo", "improved_ag", "--n", "16", "--trials", "0"][..],
        &["run", "--algo", "nope", "--n", "16"],
        &["run", "--algo", "improved_ag", "--n", "16", "--wake", "single"],
        &["run", "--algo", "async_levels", "--n", "16", "--isolating"],
        &["verify", "--only", "no_such_criterion"],
    ] {
        let out = cli(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
    }
}

#[test]
fn sweep_to_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    let mut args: Vec<&str> =
        "sweep --algo async_tradeoff --n 64,128 --k 2,3 --trials 4 --scheduler unit --out".split(' ').collect();
    args.push(path.to_str().unwrap());
    let out = cli(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "algo,n,param,mean_messages,max_messages,mean_time,success_rate,ci_low,ci_high");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("async_tradeoff,64,k=2;gamma=4,"));
    assert!(lines[4].starts_with("async_tradeoff,128,k=3;gamma=4,"));
}

#[test]
fn trace_file_tags_trials() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    let mut args: Vec<&str> = "run --algo small_id --n 6 --trials 2 --trace --trace-out".split(' ').collect();
    args.push(trace.to_str().unwrap());
    let out = cli(&args);
    assert!(out.status.success());
    let text = std::fs::read_to_string(trace).unwrap();
    assert!(text.lines().any(|l| l.starts_with("{\"trial\":0,")));
    assert!(text.lines().any(|l| l.starts_with("{\"trial\":1,")));
}

#[test]
fn verify_a_single_criterion() {
    let out = cli(&["verify", "--only", "small_id", "--scale", "0.2"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.lines().next().unwrap().starts_with("PASS small_id"), "{text}");
    assert_eq!(text.lines().count(), 2);
}
