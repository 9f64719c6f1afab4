use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn rdsym(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rdsym"))
        .args(args)
        .env_remove("RDSYM_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn verify_case5(kind: &str) -> Output {
    let (s, q) = (fixture("case5_system.json"), fixture("case5_operator.json"));
    rdsym(&["verify", "--system", s.to_str().unwrap(), "--operator", q.to_str().unwrap(), "--type", kind])
}

#[test]
fn first_type_symmetry_passes() {
    let o = verify_case5("first");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["tolerance"], 1e-9);
    assert_eq!(v["purely_conditional"], true);
    assert_eq!(v["report"]["manifold"], "M1-u");
}

#[test]
fn case5_operator_is_not_lie() {
    let o = verify_case5("lie");
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["report"]["verdict"], "nonzero");
}

#[test]
fn malformed_input_exits_2() {
    let (s, q) = (fixture("malformed_system.json"), fixture("case5_operator.json"));
    let o = rdsym(&["verify", "--system", s.to_str().unwrap(), "--operator", q.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("system"), "{}", stderr(&o));
    let o = rdsym(&["verify", "--system", "/no/such/file.json", "--operator", q.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = rdsym(&["verify", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn same_seed_gives_identical_output() {
    let a = verify_case5("first");
    let b = verify_case5("first");
    assert_eq!(a.stdout, b.stdout);
    let (s, q) = (fixture("case5_system.json"), fixture("case5_operator.json"));
    let c = rdsym(&["--seed", "99", "verify", "--system", s.to_str().unwrap(), "--operator", q.to_str().unwrap()]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn catalog_sweep_reports_all_pass() {
    let o = rdsym(&["catalog", "sweep", "--trials", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).trim_end().ends_with("26/26 pass"), "{}", stdout(&o));
}

#[test]
fn catalog_show_and_unknown_id() {
    let o = rdsym(&["catalog", "show", "24"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("C1    = 0"), "{}", text);
    assert!(text.contains("ln(u + v)"), "{}", text);
    let o = rdsym(&["catalog", "verify", "27"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("27"));
    let o = rdsym(&["catalog", "list", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 26);
}

#[test]
fn catalog_verify_random_parameters() {
    let o = rdsym(&["catalog", "verify", "6"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["id"], 6);
    assert_eq!(v["passed"], true);
}

#[test]
fn predator_prey_bound_violation_exits_1() {
    let p = fixture("predator_prey_wide.json");
    let o = rdsym(&["exact", "--family", "predator-prey", "--params", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("delta = 10") && err.contains("6.25"), "{}", err);
}

#[test]
fn exact_csv_and_metadata() {
    let o = rdsym(&["exact", "--nt", "3", "--nx", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x,u,v"));
    assert_eq!(lines.count(), 15);
    let o = rdsym(&["exact", "--family", "cosine", "--format", "json", "--residual-samples", "200"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["residual"]["max_first"].as_f64().unwrap() <= 1e-8);
    assert!(v["neumann_defect"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn reduce_power_law() {
    let o = rdsym(&["reduce", "--family", "power-law", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["phi_xx"].as_str().unwrap().contains("gamma"));
    assert!(v["psi_xx"].as_str().unwrap().contains("beta"));
    let o = rdsym(&["reduce", "--k", "1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn transform_rescaling() {
    let (s, m) = (fixture("case5_system.json"), fixture("rescale_map.json"));
    let o = rdsym(&["transform", "--system", s.to_str().unwrap(), "--map", m.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["lambda"], "2");
}

#[test]
fn solve_writes_trajectory_and_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let o = rdsym(&[
        "solve", "--n", "32", "--dt", "1e-3", "--t-end", "0.01", "--output", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("t,x,u,v"));
    assert_eq!(text.lines().count(), 1 + 2 * 33);
}

#[test]
fn solve_refuses_oversized_step() {
    let o = rdsym(&["solve", "--n", "16", "--dt", "0.2", "--t-end", "0.4"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("stability limit"), "{}", stderr(&o));
    let o = rdsym(&["solve", "--ic", "gaussian"]);
    assert_eq!(o.status.code(), Some(2));
}
