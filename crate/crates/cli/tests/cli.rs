use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qhc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qhc")).args(args).current_dir(dir).output().expect("spawn qhc")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn data(name: &str) -> String {
    format!("{}/../../data/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn count_two_bit() {
    let dir = tempfile::tempdir().unwrap();
    let o = qhc(&["count", "--n", "2"], dir.path());
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).trim(), r#"{"equations":87,"variables":80}"#);
}

#[test]
fn verify_catalog_half_adder() {
    let dir = tempfile::tempdir().unwrap();
    let o = qhc(&["catalog", "--name", "half_adder5", "--out", "ha5.json"], dir.path());
    assert_eq!(code(&o), 0);
    let o = qhc(&["verify", "--gate", "ha5.json", "--table", "half_adder", "--energy", "0"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(rep["pass"], true);
    assert_eq!(rep["records"].as_array().unwrap().len(), 4);
}

#[test]
fn broken_descriptor_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    qhc(&["catalog", "--name", "half_adder5", "--out", "ha5.json"], dir.path());
    let mut d: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("ha5.json")).unwrap()).unwrap();
    d["params"]["x"] = 0.0.into();
    fs::write(dir.path().join("broken.json"), d.to_string()).unwrap();
    let o = qhc(&["verify", "--gate", "broken.json", "--table", "half_adder", "--energy", "0"], dir.path());
    assert_eq!(code(&o), 1);
    let rep: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(rep["pass"], false);
    assert!(rep["records"].as_array().unwrap().iter().any(|r| r["ok"] == false));
    assert!(String::from_utf8_lossy(&o.stderr).contains("input 00"));

    // wrong reading state, non-degenerate spectrum
    let o = qhc(&["verify", "--gate", "ha5.json", "--table", "half_adder", "--reading", "0:3:0", "--reading", "1:4:0"], dir.path());
    assert_eq!(code(&o), 1);
}

#[test]
fn multi_energy_gates_verify() {
    let dir = tempfile::tempdir().unwrap();
    for g in ["me_half_adder3", "me_full_adder5"] {
        let o = qhc(&["verify", "--gate", g], dir.path());
        assert_eq!(code(&o), 0, "{g}");
    }
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["frobnicate"],
        vec!["verify"],
        vec!["verify", "--gate", "no_such_gate"],
        vec!["verify", "--gate", "half_adder5", "--table", "no_such_table"],
        vec!["count", "--n", "two"],
        vec!["transmission", "--gate", "me_half_adder3", "--input", "111"],
        vec!["evolve", "--gate", "half_adder5", "--input", "01", "--samples", "1"],
        vec!["solve-ha", "--gate", "half_adder5", "--calc-order", "3"],
        vec!["classify", "--gate", "half_adder5", "--table", "xor"],
    ] {
        assert_eq!(code(&qhc(&args, dir.path())), 2, "{args:?}");
    }
}

#[test]
fn solver_non_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let o = qhc(&["solve-ha", "--gate", &data("pair4.json"), "--free", "0.01,0.01,5"], dir.path());
    assert_eq!(code(&o), 3);
}

#[test]
fn half_adder_synthesis_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let o = qhc(&["solve-ha", "--gate", &data("pair4.json"), "--free", "0.3,0.4,0.2", "--emit-gate", "ha6.json"], dir.path());
    assert_eq!(code(&o), 0);
    let o = qhc(&["verify", "--gate", "ha6.json", "--table", "half_adder"], dir.path());
    assert_eq!(code(&o), 0);
}

#[test]
fn solve_fa_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = |log: &'static str| {
        ["solve-fa", "--gate", "full_adder8_typ", "--calc-order", "6", "--seeds", "40", "--seed", "5", "--log", log]
    };
    let a = qhc(&args("a.jsonl"), dir.path());
    let b = qhc(&args("b.jsonl"), dir.path());
    assert_eq!(code(&a), code(&b));
    assert_eq!(a.stdout, b.stdout);
    let la = fs::read(dir.path().join("a.jsonl")).unwrap();
    assert_eq!(la, fs::read(dir.path().join("b.jsonl")).unwrap());
    assert_eq!(String::from_utf8(la).unwrap().lines().count(), 40);
}

#[test]
fn polished_full_adder_dynamics() {
    let dir = tempfile::tempdir().unwrap();
    let o = qhc(&["solve-fa", "--gate", "full_adder8_typ", "--calc-order", "6", "--polish", "--emit-gate", "fa.json"], dir.path());
    assert_eq!(code(&o), 0);
    let o = qhc(
        &["classify", "--gate", "fa.json", "--table", "full_adder", "--readout", "isolated", "--t-max", "100", "--format", "csv"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().filter(|l| !l.starts_with('#')).count(), 9);
    let o = qhc(&["evolve", "--gate", "fa.json", "--input", "011", "--t-max", "100", "--samples", "11", "--out", "fa011.csv"], dir.path());
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("fa011.csv")).unwrap();
    assert!(csv.starts_with("time_ps,pop_state_0,"));
    assert_eq!(csv.lines().count(), 12);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("fa011.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["input"], "011");
    assert_eq!(meta["pairs"].as_array().unwrap().len(), 2);
}

#[test]
fn half_adder_classification_and_evolution() {
    let dir = tempfile::tempdir().unwrap();
    let o = qhc(&["classify", "--gate", "half_adder5", "--table", "half_adder"], dir.path());
    assert_eq!(code(&o), 0);
    // pointer pairs attached to swapped states
    let o = qhc(&["classify", "--gate", "half_adder5", "--reading", "0:3:0", "--reading", "1:4:0"], dir.path());
    assert_eq!(code(&o), 1);
    let run = || qhc(&["evolve", "--gate", "half_adder5", "--input", "11", "--samples", "201"], dir.path());
    let (a, b) = (run(), run());
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    let last: Vec<f64> = text.lines().last().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(last.len(), 10);
    assert!((last[1..].iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn transmission_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = qhc(&["transmission", "--gate", "me_half_adder3", "--input", "11", "--n", "401"], dir.path());
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("# h=4\n") && text.contains("# epsilon=0.1\n") && text.contains("# attach_state=1\n"));
    assert!(text.lines().any(|l| l.starts_with("# descriptor_sha256=") && l.len() == 20 + 64));
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "energy_eV,T");
    assert_eq!(body.len(), 402);

    let o = qhc(&["transmission", "--gate", "me_half_adder3", "--input", "11", "--format", "json"], dir.path());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let peaks: Vec<f64> = v["peaks"].as_array().unwrap().iter().map(|p| p.as_f64().unwrap()).collect();
    assert_eq!(peaks.len(), 2);
    assert!(peaks.iter().all(|p| (p.abs() - 2f64.sqrt()).abs() < 0.01));
}

#[test]
fn scans_and_intervals() {
    let dir = tempfile::tempdir().unwrap();
    let o = qhc(&["scan", "--gate", "half_adder5", "--grid-n", "11"], dir.path());
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().filter(|l| !l.starts_with('#')).count(), 122);
    let o = qhc(&["intervals", "--gate", "me_half_adder3", "--output-index", "0", "--format", "csv"], dir.path());
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("output_index,lo,hi,midpoint,min_weight"));
    // AND read on state 1 has no clean interval inside [-1, 1]
    let o = qhc(&["intervals", "--gate", "me_half_adder3", "--table", "and", "--attach-state", "1", "--range", "-1,1"], dir.path());
    assert_eq!(code(&o), 1);
    let o = qhc(&["optimize-ha", "--n", "201"], dir.path());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["best"]["e"].as_f64().unwrap(), 0.0);
    let o = qhc(&["gaps", "--sweep", "e", "--n", "3", "--format", "csv"], dir.path());
    assert_eq!(stdout(&o).lines().filter(|l| !l.starts_with('#')).count(), 4);
}

#[test]
fn merge_and_charpoly() {
    let dir = tempfile::tempdir().unwrap();
    let o = qhc(&["merge", "--first", "and4", "--second", "xor4", "--shared", "3", "--out", "m.json"], dir.path());
    assert_eq!(code(&o), 0);
    let a = qhc(&["build", "--gate", "m.json", "--input", "11"], dir.path());
    let b = qhc(&["build", "--gate", "half_adder5", "--input", "11"], dir.path());
    let ma: serde_json::Value = serde_json::from_str(&stdout(&a)).unwrap();
    let mb: serde_json::Value = serde_json::from_str(&stdout(&b)).unwrap();
    assert_eq!(ma["matrix"], mb["matrix"]);
    let o = qhc(&["charpoly", "--gate", "me_full_adder5", "--table", "full_adder"], dir.path());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["proportional"], true);
    assert!((v["constant"].as_f64().unwrap() + 1.5).abs() < 1e-9);
}

#[test]
fn help_lists_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let o = qhc(&["evolve", "--help"], dir.path());
    assert_eq!(code(&o), 0);
    let h = stdout(&o);
    assert!(h.contains("[default: 20]") && h.contains("[default: 4001]"));
    let h = stdout(&qhc(&["transmission", "--help"], dir.path()));
    assert!(h.contains("[default: 4]") && h.contains("[default: 0.1]") && h.contains("[default: -3,3]"));
}
