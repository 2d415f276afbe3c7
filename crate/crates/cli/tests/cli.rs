use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn nmqnet(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nmqnet")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn example(name: &str) -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn rows(text: &str) -> Vec<Vec<f64>> {
    text.lines().skip(1).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect()
}

#[test]
fn simulate_two_qubit_example() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.json", &example("two_qubit_lorentzian.json"));
    let out = nmqnet(&["simulate", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("two_qubit_lorentzian.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,concurrence,min_eig"));
    let data = rows(&csv);
    assert_eq!(data.len(), 801);
    assert!((data[0][1] - 1.0).abs() < 1e-12);
    assert!((data[800][0] - 400.0).abs() < 1e-9);
    assert!(data[800][1] < 0.5);
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.json", &example("flat_cascade.json"));
    let a = nmqnet(&["simulate", cfg.to_str().unwrap(), "--out", "a.csv"], dir.path());
    let b = nmqnet(&["simulate", cfg.to_str().unwrap(), "--out", "b.csv"], dir.path());
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(code(&b), 0);
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    assert!(!a.is_empty() && !a.contains(&b'\r'));
    assert_eq!(a, std::fs::read(dir.path().join("b.csv")).unwrap());
}

#[test]
fn lindblad_method_matches_the_memory_solver_for_flat_kernels() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = example("flat_cascade.json");
    let full = write_config(dir.path(), "full.json", &cfg);
    cfg["solver"]["method"] = json!("lindblad");
    let markov = write_config(dir.path(), "markov.json", &cfg);
    assert_eq!(code(&nmqnet(&["simulate", full.to_str().unwrap(), "--out", "full.csv"], dir.path())), 0);
    assert_eq!(code(&nmqnet(&["simulate", markov.to_str().unwrap(), "--out", "markov.csv"], dir.path())), 0);
    let a = rows(&std::fs::read_to_string(dir.path().join("full.csv")).unwrap());
    let b = rows(&std::fs::read_to_string(dir.path().join("markov.csv")).unwrap());
    let worst = a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-10, "{worst}");
}

#[test]
fn non_hermitian_hamiltonian_names_the_node() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = example("flat_cascade.json");
    cfg["nodes"][0]["hamiltonian"] = json!([{"ops": [{"op": "sigma_minus"}]}]);
    let path = write_config(dir.path(), "bad.json", &cfg);
    let out = nmqnet(&["simulate", path.to_str().unwrap()], dir.path());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("source"), "{}", stderr(&out));
}

#[test]
fn coarse_step_is_rejected_with_a_suggestion() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = example("two_qubit_lorentzian.json");
    cfg["solver"]["dt"] = json!(2.0);
    let path = write_config(dir.path(), "coarse.json", &cfg);
    let out = nmqnet(&["simulate", path.to_str().unwrap()], dir.path());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("use dt <="), "{}", stderr(&out));
}

#[test]
fn unknown_keys_and_missing_version_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = example("flat_cascade.json");
    cfg["solver"]["tolerance"] = json!(1e-6);
    let path = write_config(dir.path(), "unknown.json", &cfg);
    let out = nmqnet(&["simulate", path.to_str().unwrap()], dir.path());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("tolerance"), "{}", stderr(&out));

    let mut cfg = example("flat_cascade.json");
    cfg.as_object_mut().unwrap().remove("schema_version");
    let path = write_config(dir.path(), "noversion.json", &cfg);
    assert_eq!(code(&nmqnet(&["simulate", path.to_str().unwrap()], dir.path())), 2);
}

#[test]
fn transfer_tables() {
    let dir = tempfile::tempdir().unwrap();
    let run = |kernel: &str, file: &str| {
        let out = nmqnet(
            &["transfer", "--omega0", "1", "--kernel", kernel, "--wmin", "-60", "--wmax", "60", "--points", "241", "--out", file],
            dir.path(),
        );
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let text = std::fs::read_to_string(dir.path().join(file)).unwrap();
        assert_eq!(text.lines().next(), Some("omega,re_T,im_T,abs_T,arg_T"));
        rows(&text)
    };
    let flat = run("flat:gamma=0.5", "flat.csv");
    assert_eq!(flat.len(), 241);
    assert!(flat.iter().all(|r| (r[3] - 1.0).abs() < 1e-12));
    assert!(run("flat:gamma=0", "zero.csv").iter().all(|r| (r[1] - 1.0).abs() < 1e-15 && r[2].abs() < 1e-15));
    let lor = run("lorentzian:g=0.3,gamma=0.5,omega_c=1", "lor.csv");
    let far = lor.iter().find(|r| (r[0] - 49.0).abs() < 1e-9).unwrap();
    assert!((far[3] - 1.0).abs() < 1e-3);

    let out = nmqnet(&["transfer", "--omega0", "1", "--kernel", "lorentzian:g=0.3,gamma=-1,omega_c=0", "--wmin", "0", "--wmax", "1"], dir.path());
    assert_eq!(code(&out), 2);
}

#[test]
fn fig4_writes_curves_and_reports_the_gamma_ordering() {
    let dir = tempfile::tempdir().unwrap();
    let out = nmqnet(&["fig4", "--no-full", "--include-g0", "--out-dir", "fig"], dir.path());
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    assert!(stderr(&out).contains("gamma"), "{}", stderr(&out));
    let fig = dir.path().join("fig");
    let curves = std::fs::read_dir(&fig).unwrap().filter(|e| e.as_ref().unwrap().file_name() != "fig4_summary.csv").count();
    assert_eq!(curves, 12);
    let summary = std::fs::read_to_string(fig.join("fig4_summary.csv")).unwrap();
    assert!(summary.starts_with("gamma_tau,g_tau,half_time_ns"));
    let uncoupled = rows(&std::fs::read_to_string(fig.join("fig4_gamma0.5_g0.csv")).unwrap());
    assert!(uncoupled.iter().all(|r| (r[1] - 1.0).abs() < 1e-12));
}

#[test]
fn control_feedforward_agrees_with_the_effective_plant() {
    let dir = tempfile::tempdir().unwrap();
    let out = nmqnet(&["control", "--topology", "feedforward", "--t-end", "4", "--out", "ff.csv"], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(dir.path().join("ff.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("t,full_re,full_im,effective_re,effective_im"));
    assert_eq!(rows(&text).len(), 401);
    assert!(stderr(&out).contains("relative L2 error"));

    let out = nmqnet(&["control", "--topology", "feedforward", "--gamma-b", "0.2"], dir.path());
    assert_eq!(code(&out), 2);
}

#[test]
fn sweep_runs_each_value() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = example("flat_cascade.json");
    cfg["solver"]["t_end"] = json!(2.0);
    let path = write_config(dir.path(), "sweep.json", &cfg);
    let out = nmqnet(
        &["sweep", path.to_str().unwrap(), "--param", "/nodes/0/kernel/gamma", "--values", "0.5,1,2", "--out-dir", "sw"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary = rows(&std::fs::read_to_string(dir.path().join("sw/sweep.csv")).unwrap());
    assert_eq!(summary, vec![vec![0.0, 0.5, 0.0], vec![1.0, 1.0, 0.0], vec![2.0, 2.0, 0.0]]);
    // source excitation decays faster with larger gamma
    let final_pop = |k: usize| *rows(&std::fs::read_to_string(dir.path().join(format!("sw/run_{k}.csv"))).unwrap()).last().unwrap().get(1).unwrap();
    assert!(final_pop(0) > final_pop(1) && final_pop(1) > final_pop(2));

    let out = nmqnet(&["sweep", path.to_str().unwrap(), "--param", "/nodes/9/kernel", "--values", "1", "--out-dir", "sw"], dir.path());
    assert_eq!(code(&out), 2);
}
