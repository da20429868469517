use std::path::Path;
use std::process::{Command, Output};

use evac_core::io::{InstanceFile, Meta, PlanFile};
use evac_core::network::Schedule;
use evac_core::report::SolveReport;

fn evac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evac")).args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn t1_file(dir: &Path) -> std::path::PathBuf {
    let text = r#"{
      "version": 1,
      "meta": {"name": "t1", "step_minutes": 5, "horizon_steps": 4},
      "nodes": [
        {"id": 0, "name": "E", "kind": "evacuation", "demand": 10},
        {"id": 1, "name": "S", "kind": "safe"}
      ],
      "arcs": [{"id": 0, "tail": 0, "head": 1, "travel_minutes": 5, "capacity_per_step": 5}]
    }"#;
    let path = dir.join("t1.json");
    std::fs::write(&path, text).unwrap();
    path
}

fn report(dir: &Path) -> SolveReport {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn convergent_benders_with_contraflow_on_t1() {
    let tmp = tempfile::tempdir().unwrap();
    let inst = t1_file(tmp.path());
    let out = tmp.path().join("bc");
    let o = evac(&["solve", "-i", p(&inst), "-m", "bc", "--setting", "deadline", "--contraflow", "-o", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["plan.json", "report.json", "trace.csv", "validation.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    assert_eq!(report(&out).evacuated_pct, 100.0);
    let v = evac(&["validate", "-i", p(&inst), "-p", p(&out.join("plan.json"))]);
    assert!(v.status.success());
}

#[test]
fn column_generation_gives_one_window() {
    let tmp = tempfile::tempdir().unwrap();
    let inst = t1_file(tmp.path());
    let out = tmp.path().join("cg");
    let o = evac(&["solve", "-i", p(&inst), "-m", "cg", "--curves", "5", "-o", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let plan = PlanFile::load(&out.join("plan.json")).unwrap();
    let Schedule::NonPreemptive { responses } = plan.plan.schedule else { panic!("preemptive plan") };
    assert_eq!(responses.len(), 1);
    assert_eq!(responses[0].curve.rate(), 5);
    assert_eq!(report(&out).evacuated, 10.0);
}

#[test]
fn bad_input_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let inst = t1_file(tmp.path());
    let o = evac(&["solve", "-i", p(&inst), "-m", "simplex", "-o", p(&tmp.path().join("x"))]);
    assert!(!o.status.success());
    let o = evac(&["clearance", "-i", p(&inst), "-m", "mip", "-o", p(&tmp.path().join("y"))]);
    assert!(!o.status.success());
    let o = Command::new(env!("CARGO_BIN_EXE_evac"))
        .args(["solve", "-i", p(&inst), "-m", "bn", "-o", p(&tmp.path().join("z"))])
        .env("EVAC_LP_BACKEND", "cplex")
        .output()
        .unwrap();
    assert!(!o.status.success());
}

#[test]
fn tampered_plan_fails_validation() {
    let tmp = tempfile::tempdir().unwrap();
    let inst = t1_file(tmp.path());
    let out = tmp.path().join("bn");
    assert!(evac(&["solve", "-i", p(&inst), "-m", "bn", "-o", p(&out)]).status.success());
    let mut plan = PlanFile::load(&out.join("plan.json")).unwrap();
    if let Schedule::Preemptive { flows } = &mut plan.plan.schedule {
        flows[0].amount += 3.0;
    }
    let bad = tmp.path().join("bad.json");
    plan.save(&bad).unwrap();
    let v = evac(&["validate", "-i", p(&inst), "-p", p(&bad)]);
    assert_eq!(v.status.code(), Some(1));
}

#[test]
fn generate_then_solve_every_method_and_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let inst = tmp.path().join("g.json");
    let o = evac(&["gen", "--seed", "4", "--scale", "2", "-o", p(&inst)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let again = tmp.path().join("g2.json");
    evac(&["gen", "--seed", "4", "--scale", "2", "-o", p(&again)]);
    assert_eq!(std::fs::read(&inst).unwrap(), std::fs::read(&again).unwrap());
    let f = InstanceFile::load(&inst).unwrap();
    assert_eq!(f.meta.scale, 2.0);

    let mut dirs = Vec::new();
    for m in ["mip", "bn", "bc", "cpg", "cg"] {
        let out = tmp.path().join(m);
        let o = evac(&["solve", "-i", p(&inst), "-m", m, "-o", p(&out)]);
        assert!(o.status.success(), "{m}: {}", String::from_utf8_lossy(&o.stderr));
        dirs.push(out);
    }
    let mut args = vec!["compare", "-i", p(&inst)];
    args.extend(dirs.iter().map(|d| p(d)));
    let o = evac(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = String::from_utf8_lossy(&o.stdout);
    for m in ["mip", "benders-nc", "benders-conv", "cpg", "colgen"] {
        assert!(table.contains(m), "{m} missing from\n{table}");
    }
}

#[test]
fn clearance_search_writes_probes() {
    let tmp = tempfile::tempdir().unwrap();
    let inst = t1_file(tmp.path());
    let out = tmp.path().join("clr");
    let o = evac(&["clearance", "-i", p(&inst), "-m", "bc", "--horizon", "12", "-o", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("clearance.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["h_star"], 3);
    assert!(out.join("probes.csv").exists());
    let o = evac(&["solve", "-i", p(&inst), "-m", "bn", "--setting", "min-clearance", "--horizon", "12", "-o", p(&tmp.path().join("mc"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn round_trip_through_the_cli_format() {
    let tmp = tempfile::tempdir().unwrap();
    let f = InstanceFile::load(&t1_file(tmp.path())).unwrap();
    let g = f.to_graph().unwrap();
    let back = InstanceFile::from_graph(&g, Meta { name: "t1".into(), step_minutes: 5, horizon_steps: 4, scale: 1.0 });
    assert_eq!(back.to_graph().unwrap(), g);
}
