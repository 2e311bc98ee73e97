use std::path::PathBuf;
use std::process::{Command, Output};

use wfr_split::lab::config::RawConfig;
use wfr_split::lab::output::Cell;
use wfr_split::lab::{run, Experiment};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wfr-split-lab")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("wfr-split-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn output_is_byte_identical_across_runs_and_thread_counts() {
    let args = ["figure1", "n_gamma=40"];
    let a = lab(&args);
    let b = lab(&args);
    let c = lab(&["figure1", "n_gamma=40", "--threads", "3"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
}

#[test]
fn header_records_resolved_configuration() {
    let o = lab(&["figure2", "n=5"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for key in ["# experiment = figure2", "# n = 5", "# gamma = ", "# seed = 42", "# c_pi = [", "# table = ratio"] {
        assert!(text.contains(key), "missing '{key}'");
    }
}

#[test]
fn config_file_is_overridden_by_command_line() {
    let path = scratch("fig2.conf");
    std::fs::write(&path, "# ratio run\nn = 7\ngamma = 0.5  # step\nc_pi = [2, 3]\nc0 = [1, 1]\nm_pi = [1, 1]\nm0 = [0, 0]\n").unwrap();
    let o = lab(&["figure2", "--config", path.to_str().unwrap(), "n=3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("# n = 3\n"));
    assert!(text.contains("# gamma = 5.0000000000000000e-1\n"));
    let rows = text.lines().filter(|l| l.chars().next().is_some_and(|c| c.is_ascii_digit())).count();
    assert_eq!(rows, 3);
}

#[test]
fn file_keys_select_output_options() {
    let out = scratch("ratio.json");
    let conf = scratch("ratio.conf");
    std::fs::write(&conf, format!("out = {}\njson = true\n", out.display())).unwrap();
    let o = lab(&["ratio", "--config", conf.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["experiment"], "ratio");
    assert!(v["config"].get("out").is_none());
    assert_eq!(v["tables"][1]["name"], "ratio");
}

#[test]
fn json_mirrors_csv_tables() {
    let o = lab(&["figure4", "n_t=4", "--json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let tables = v["tables"].as_array().unwrap();
    assert_eq!(tables.len(), 2);
    assert_eq!(tables[0]["rows"].as_array().unwrap().len(), 4);
    assert_eq!(v["config"]["seed"], "42");
}

#[test]
fn configuration_errors_exit_with_two() {
    for args in [
        vec!["figure1", "unknown_key=1"],
        vec!["figure1", "gamma_min=-1"],
        vec!["figure1", "n_gamma=abc"],
        vec!["figure1", "c_pi_left=[1, 2]"],
        vec!["figure2", "--suite", "bounds"],
        vec!["figure1", "--config", "/nonexistent/file.conf"],
        vec!["not-an-experiment"],
    ] {
        let o = lab(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn validation_exit_status_reflects_checks() {
    let ok = lab(&["validate", "--suite", "bounds"]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).contains("# suite = bounds"));
    let failing = lab(&["validate", "--suite", "logconcavity"]);
    assert_eq!(failing.status.code(), Some(1));
    assert!(stdout(&failing).contains(",false"));
}

#[test]
fn seed_is_recorded_and_overridable() {
    let o = lab(&["validate", "--suite", "divergences", "seed=7"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("# seed = 7\n"));
}

#[test]
fn in_process_run_exposes_tables() {
    let mut raw = RawConfig::default();
    raw.apply_override("n_gamma=5").unwrap();
    let outcome = run(Experiment::Figure1, raw, 2, None).unwrap();
    assert!(outcome.success);
    let left = outcome.report.table("left").unwrap();
    assert_eq!(left.rows.len(), 5);
    let exact = left.numbers("kl_exact").unwrap();
    let wfr = left.numbers("kl_wfr_split").unwrap();
    assert!(exact.iter().zip(&wfr).all(|(e, w)| e.unwrap() > 0.0 && w.unwrap() > 0.0));
    assert!(matches!(left.rows[0][0], Cell::Num(g) if (g - 1e-3).abs() < 1e-18));
}
