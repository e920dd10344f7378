use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const TOY_SPEC: &str = "\
width = 16
height = 16
lut = 80
ff = 80
dsp = 1
bram = 1
dram = 2
shift = 2
io_in = 2
io_out = 2
chains = 1
chain_min = 2
chain_max = 3
";

fn heteroplace(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_heteroplace"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn toy(dir: &Path) {
    let spec = dir.join("toy.toml");
    fs::write(&spec, TOY_SPEC).unwrap();
    let out = heteroplace(&["gen", "--spec", p(&spec), "--seed", "5", "--out", p(dir)], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn place(dir: &Path, out: &str, extra: &[&str], envs: &[(&str, &str)]) -> Output {
    let device = dir.join("design.device");
    let netlist = dir.join("design.netlist");
    let out = dir.join(out);
    let mut args = vec!["place", "--device", p(&device), "--netlist", p(&netlist), "--out", p(&out), "--quiet"];
    args.extend_from_slice(extra);
    heteroplace(&args, envs)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn toy_place_writes_complete_report() {
    let dir = TempDir::new().unwrap();
    toy(dir.path());
    let out = place(dir.path(), "run", &["--seed", "2"], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let run = dir.path().join("run");
    let report = json(&run.join("report.json"));
    for key in ["hpwl", "wns", "tns", "overflow", "clock_violations", "displacement"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    assert_eq!(report["legality_violations"], 0);
    for file in ["placement.pl", "timing.json", "clockplan.json", "violations.json", "state.json", "placement.svg"] {
        assert!(run.join(file).exists(), "missing {file}");
    }

    let metrics = fs::read_to_string(run.join("metrics.jsonl")).unwrap();
    let mut keys: Option<BTreeSet<String>> = None;
    for line in metrics.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        let k: BTreeSet<String> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(*keys.get_or_insert_with(|| k.clone()), k);
    }
    assert!(keys.is_some());

    let check = heteroplace(
        &[
            "check",
            "--placement",
            p(&run.join("placement.pl")),
            "--device",
            p(&dir.path().join("design.device")),
            "--netlist",
            p(&dir.path().join("design.netlist")),
        ],
        &[],
    );
    assert_eq!(check.status.code(), Some(0), "{}", String::from_utf8_lossy(&check.stdout));
}

#[test]
fn same_seed_gives_identical_placement_files() {
    let dir = TempDir::new().unwrap();
    toy(dir.path());
    for run in ["a", "b"] {
        let out = place(dir.path(), run, &["--seed", "7", "--threads", "1"], &[]);
        assert!(out.status.success());
    }
    let a = fs::read(dir.path().join("a/placement.pl")).unwrap();
    let b = fs::read(dir.path().join("b/placement.pl")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn infeasible_capacity_exits_3() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("design.device"), "device 2 2 1 1 24 12\ncol 0 DSPCOL\ncol 1 SLICEL\n").unwrap();
    let insts: String = (0..5).map(|k| format!("inst d{k} DSP\n")).collect();
    fs::write(dir.path().join("design.netlist"), insts).unwrap();
    let out = place(dir.path(), "run", &[], &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("DSP"));
}

#[test]
fn env_override_can_force_nonconvergence() {
    let dir = TempDir::new().unwrap();
    toy(dir.path());
    let out = place(dir.path(), "run", &[], &[("HETEROPLACE_MAX_ITERATIONS", "3")]);
    assert_eq!(out.status.code(), Some(2));
    let report = json(&dir.path().join("run/report.json"));
    assert_eq!(report["converged"], false);

    let bad = place(dir.path(), "bad", &[], &[("HETEROPLACE_NO_SUCH_KEY", "1")]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn config_file_is_applied() {
    let dir = TempDir::new().unwrap();
    toy(dir.path());
    let cfg = dir.path().join("engine.cfg");
    fs::write(&cfg, "max_iterations = 3\n").unwrap();
    let out = place(dir.path(), "run", &["--config", p(&cfg)], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn check_flags_tampered_placements() {
    let dir = TempDir::new().unwrap();
    toy(dir.path());
    assert!(place(dir.path(), "run", &[], &[]).status.success());
    let text = fs::read_to_string(dir.path().join("run/placement.pl")).unwrap();
    // move every SHIFT onto column 1, a SLICEL
    let tampered: String = text
        .lines()
        .map(|l| {
            let t: Vec<&str> = l.split_whitespace().collect();
            if t[1].starts_with("shift") {
                format!("place {} 1 {} 0\n", t[1], t[3])
            } else {
                format!("{l}\n")
            }
        })
        .collect();
    let bad = dir.path().join("bad.pl");
    fs::write(&bad, tampered).unwrap();
    let report = dir.path().join("violations.json");
    let out = heteroplace(
        &[
            "check",
            "--placement",
            p(&bad),
            "--device",
            p(&dir.path().join("design.device")),
            "--netlist",
            p(&dir.path().join("design.netlist")),
            "--out",
            p(&report),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(4));
    let v = json(&report);
    assert!(v["legality"].as_array().unwrap().iter().any(|x| x["kind"] == "incompatible"));
}

fn circles(svg: &str) -> Vec<(String, String)> {
    svg.lines()
        .filter(|l| l.starts_with("<circle"))
        .map(|l| {
            let attr = |name: &str| l.split(&format!("{name}=\"")).nth(1).unwrap().split('"').next().unwrap().to_string();
            (attr("fill"), format!("{},{}", attr("cx"), attr("cy")))
        })
        .collect()
}

fn view_box(svg: &str) -> String {
    svg.split("viewBox=\"").nth(1).unwrap().split('"').next().unwrap().to_string()
}

#[test]
fn snapshots_render_from_dumps() {
    let dir = TempDir::new().unwrap();
    toy(dir.path());
    assert!(place(dir.path(), "run", &["--snapshot-every", "25"], &[]).status.success());
    let run = dir.path().join("run");
    for state in ["state_00000.json", "state.json"] {
        let out = heteroplace(&["snap", "--state", p(&run.join(state))], &[]);
        assert!(out.status.success());
    }
    let first = fs::read_to_string(run.join("state_00000.svg")).unwrap();
    let last = fs::read_to_string(run.join("state.svg")).unwrap();
    assert_eq!(view_box(&first), view_box(&last));
    assert_ne!(circles(&first), circles(&last));
    let fills: BTreeSet<String> = circles(&last).into_iter().map(|c| c.0).collect();
    assert!(fills.len() >= 4, "{fills:?}");
    assert!(last.contains("<polyline"));
}

#[test]
fn empty_placement_snapshot_is_grid_only() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("design.device"), "device 4 4 2 2 24 12\ncol 0 SLICEL\ncol 1 SLICEL\ncol 2 SLICEL\ncol 3 SLICEL\n").unwrap();
    fs::write(dir.path().join("design.netlist"), "").unwrap();
    let out = place(dir.path(), "run", &[], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let svg = fs::read_to_string(dir.path().join("run/placement.svg")).unwrap();
    assert!(circles(&svg).is_empty());
    assert!(svg.contains("<line"));
}

#[test]
fn corrupt_dump_is_a_parse_error() {
    let dir = TempDir::new().unwrap();
    let state = dir.path().join("state.json");
    fs::write(&state, "{\"iteration\": 3, \"width\": ").unwrap();
    let out = heteroplace(&["snap", "--state", p(&state)], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("corrupt"));
}
