use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ormo::engine::{read_metrics_csv, read_trace_csv};
use ormo::harness::{self, ExperimentConfig, HarnessError, CONFIG_ECHO_FILE, OUTPUT_ROOT_ENV, SUMMARY_FILE};

const CONFIG: &str = "\
# small quadratic
problem = noisy_quadratic
dim = 8
samples = 200
workers = 4
iterations = 300
optimizer = ormo
eta = 0.02
batch = 4
slow_fraction = 0.25
slow_factor = 5
seeds = 1,2,3,4,5
metric_stride = 20
output = quad
";

fn cli(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ormo"))
        .args(args)
        .env(OUTPUT_ROOT_ENV, root)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn five_seeds_give_five_metric_files_and_a_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg: ExperimentConfig = CONFIG.parse().unwrap();
    let s = harness::run_experiment_in(&cfg, tmp.path()).unwrap();
    assert_eq!(s.seeds.len(), 5);
    for seed in 1..=5 {
        assert!(tmp.path().join(harness::metrics_file(seed)).is_file());
        assert!(tmp.path().join(harness::trace_file(seed)).is_file());
    }
    let losses: Vec<f64> = s.seeds.iter().map(|x| x.final_loss).collect();
    let mean = losses.iter().sum::<f64>() / 5.0;
    assert!((s.final_loss.mean - mean).abs() <= 1e-15 * mean.abs().max(1.0));
    assert!(s.final_loss.std > 0.0);
    assert_eq!(harness::load_summary(tmp.path()).unwrap(), s);
}

#[test]
fn csv_headers_and_metrics_consistency() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg: ExperimentConfig = CONFIG.parse().unwrap();
    harness::run_experiment_in(&cfg, tmp.path()).unwrap();
    let metrics_text = std::fs::read_to_string(tmp.path().join(harness::metrics_file(1))).unwrap();
    let trace_text = std::fs::read_to_string(tmp.path().join(harness::trace_file(1))).unwrap();
    assert_eq!(metrics_text.lines().next(), Some("t,sim_time,loss,grad_norm2,tau,b,eta_eff"));
    assert_eq!(trace_text.lines().next(), Some("t,worker,ite,tau,sim_time"));
    let metrics = read_metrics_csv(metrics_text.as_bytes()).unwrap();
    let trace = read_trace_csv(trace_text.as_bytes()).unwrap();
    assert_eq!(trace.len(), 300);
    assert!(metrics.windows(2).all(|w| w[0].t < w[1].t));
    for m in &metrics {
        assert!(m.t % 20 == 0 || m.t == 299);
        assert_eq!(m.tau, trace[m.t as usize].tau);
    }
}

#[test]
fn echoed_config_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg: ExperimentConfig = CONFIG.parse().unwrap();
    let a = tmp.path().join("a");
    harness::run_experiment_in(&cfg, &a).unwrap();
    let echoed: ExperimentConfig = std::fs::read_to_string(a.join(CONFIG_ECHO_FILE)).unwrap().parse().unwrap();
    assert_eq!(echoed, cfg);
    let b = tmp.path().join("b");
    harness::run_experiment_in(&echoed, &b).unwrap();
    for f in [harness::metrics_file(3), harness::trace_file(3), SUMMARY_FILE.to_string()] {
        assert_eq!(std::fs::read(a.join(&f)).unwrap(), std::fs::read(b.join(&f)).unwrap(), "{f}");
    }
}

#[test]
fn optimizer_sweep_shares_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let base = CONFIG.replace("output = quad", &format!("output = {}", tmp.path().join("sw").display()));
    let vary = vec!["optimizer=asgd,naive_asgdm,shifted,ormo".parse().unwrap()];
    let runs = harness::run_sweep(&base, &vary).unwrap();
    assert_eq!(runs.len(), 4);
    let reference = std::fs::read(runs[0].0.join(harness::trace_file(2))).unwrap();
    for (dir, _) in &runs[1..] {
        assert_eq!(std::fs::read(dir.join(harness::trace_file(2))).unwrap(), reference);
    }
}

#[test]
fn report_against_itself_has_zero_differences() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg: ExperimentConfig = CONFIG.parse().unwrap();
    harness::run_experiment_in(&cfg, tmp.path()).unwrap();
    let dirs = vec![tmp.path().to_path_buf(), tmp.path().to_path_buf()];
    let table = harness::compare_report(&dirs).unwrap();
    assert!(table.rows.iter().all(|r| r.loss_delta == 0.0 && r.grad_delta == 0.0));
    assert!(table.render().contains("ormo/async"));
}

#[test]
fn report_rejects_missing_and_mismatched_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg: ExperimentConfig = CONFIG.parse().unwrap();
    let a = tmp.path().join("a");
    harness::run_experiment_in(&cfg, &a).unwrap();
    let missing = tmp.path().join("nope");
    assert!(matches!(
        harness::compare_report(&[a.clone(), missing]),
        Err(HarnessError::MissingRun(_))
    ));
    let mut other = cfg.clone();
    other.problem.dim = 9;
    let b = tmp.path().join("b");
    harness::run_experiment_in(&other, &b).unwrap();
    assert!(matches!(harness::compare_report(&[a, b]), Err(HarnessError::Incomparable(_))));
}

#[test]
fn cli_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let good = write_config(root, "good.cfg", CONFIG);
    let out = cli(&["run", good.to_str().unwrap()], root);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(root.join("quad").join(SUMMARY_FILE).is_file());

    let out = cli(&["verify", good.to_str().unwrap()], root);
    assert_eq!(out.status.code(), Some(0));
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("lemma1_momentum_gap") && table.contains("lemma4_y_w_gap_bound"));
    assert!(root.join("quad").join("verify_seed1.json").is_file());

    let empty = write_config(root, "empty.cfg", "");
    let out = cli(&["run", empty.to_str().unwrap()], root);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("problem, workers, iterations, optimizer, eta"));

    let bad_beta = write_config(root, "beta.cfg", &format!("{CONFIG}beta = 1.0\n"));
    assert_eq!(cli(&["run", bad_beta.to_str().unwrap()], root).status.code(), Some(2));

    let asgd = write_config(root, "asgd.cfg", &CONFIG.replace("ormo", "asgd"));
    assert_eq!(cli(&["verify", asgd.to_str().unwrap()], root).status.code(), Some(2));

    let missing = root.join("missing.cfg");
    assert_eq!(cli(&["run", missing.to_str().unwrap()], root).status.code(), Some(2));

    let out = cli(&["report", root.join("quad").to_str().unwrap(), root.join("nope").to_str().unwrap()], root);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn cli_sweep_report_and_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let cfg = write_config(root, "c.cfg", &CONFIG.replace("seeds = 1,2,3,4,5", "seeds = 1,2"));
    let out = cli(&["sweep", cfg.to_str().unwrap(), "--vary", "optimizer=asgd,ormo", "--vary", "beta=0.5,0.9"], root);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let a = root.join("quad/optimizer=asgd_beta=0.5");
    let b = root.join("quad/optimizer=ormo_beta=0.9");
    assert!(a.join(SUMMARY_FILE).is_file() && b.join(SUMMARY_FILE).is_file());

    let out = cli(&["report", a.to_str().unwrap(), b.to_str().unwrap()], root);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("asgd/async"));

    let csv_path = root.join("data.csv");
    let out = cli(&["dump-dataset", cfg.to_str().unwrap(), "--out", csv_path.to_str().unwrap()], root);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(csv_path).unwrap();
    assert_eq!(text.lines().count(), 201);
}
