use std::path::Path;
use std::process::Command;

use ucfalloc_cli::metrics::{Table, METRICS_HEADER};

const TINY: &str = "\
deployment.num_ues = 4
deployment.num_subbands = 3
ao.population = 6
ao.iterations = 6
ddpg.episodes = 3
ddpg.horizon = 4
ddpg.batch_size = 8
ddpg.hidden = 16
hybrid.population = 4
hybrid.iterations = 2
experiment.seeds = 1, 2, 3
sweep.axis = ues
sweep.values = 3, 4
tune.episodes = 2
";

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_ucfalloc")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn tiny_config(dir: &Path) -> String {
    let p = dir.join("tiny.cfg");
    std::fs::write(&p, TINY).unwrap();
    p.to_str().unwrap().to_owned()
}

fn table(path: &Path) -> Table {
    Table::parse(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn col(t: &Table, name: &str) -> Vec<f64> {
    let c = t.column(name).unwrap();
    (0..t.rows.len()).map(|r| t.number(r, c).unwrap().unwrap()).collect()
}

#[test]
fn no_arguments_prints_usage_and_fails() {
    let (code, _, err) = run(&[]);
    assert_eq!(code, 1);
    assert!(err.contains("Usage"));
    assert_eq!(run(&["frobnicate"]).0, 1);
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "deployment.num_ues = 4\nsolver = xyz\n").unwrap();
    let (code, _, err) = run(&["validate-config", "--config", bad.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("line 2") && err.contains("ao, rlm, hym"), "{err}");
}

#[test]
fn missing_plot_input_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = run(&["plot", dir.path().join("none.csv").to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn compare_writes_monotone_csvs_and_a_consistent_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("out");
    let (code, _, err) = run(&["compare", "--profile", "desk", "--config", &cfg, "--seed", "7", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    for s in ["ao", "rlm", "hym"] {
        let text = std::fs::read_to_string(out.join(format!("{s}.csv"))).unwrap();
        assert!(text.lines().any(|l| l == METRICS_HEADER));
        assert!(text.starts_with("# seed=7 instance="));
        let t = Table::parse(&text).unwrap();
        assert!(col(&t, "best_objective").windows(2).all(|w| w[1] >= w[0]));
    }

    let out = dir.path().join("multi");
    assert_eq!(run(&["compare", "--profile", "desk", "--config", &cfg, "--out", out.to_str().unwrap()]).0, 0);
    let summary = table(&out.join("summary.csv"));
    let hashes: Vec<Vec<String>> = ["ao", "rlm", "hym"]
        .iter()
        .map(|s| {
            std::fs::read_to_string(out.join(format!("{s}.csv"))).unwrap().lines().filter(|l| l.starts_with('#')).map(str::to_owned).collect()
        })
        .collect();
    assert!(hashes.iter().all(|h| h == &hashes[0] && h.len() == 3));
    for (row, s) in ["ao", "rlm", "hym"].iter().enumerate() {
        let t = table(&out.join(format!("{s}.csv")));
        let (seed, iter) = (t.column("seed").unwrap(), t.column("iteration").unwrap());
        let last_iter = (0..t.rows.len()).map(|r| t.number(r, iter).unwrap().unwrap()).fold(0.0, f64::max);
        let finals: Vec<f64> = (0..t.rows.len())
            .filter(|&r| t.number(r, iter).unwrap() == Some(last_iter))
            .map(|r| t.number(r, t.column("total_se_bps_hz").unwrap()).unwrap().unwrap())
            .collect();
        assert_eq!(finals.len(), 3, "{s}: one final row per seed ({seed})");
        let mean = finals.iter().sum::<f64>() / 3.0;
        let reported = summary.number(row, summary.column("mean_total_se_bps_hz").unwrap()).unwrap().unwrap();
        assert!((mean - reported).abs() <= 1e-9 * mean.abs().max(1.0), "{s}: {mean} vs {reported}");
    }

    let svg = dir.path().join("plot.svg");
    let inputs: Vec<String> = ["ao", "rlm", "hym"].iter().map(|s| out.join(format!("{s}.csv")).to_str().unwrap().to_owned()).collect();
    let mut args = vec!["plot"];
    args.extend(inputs.iter().map(String::as_str));
    args.extend(["--metric", "total_se_bps_hz", "--output", svg.to_str().unwrap()]);
    assert_eq!(run(&args).0, 0);
    let text = std::fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("<polyline").count(), 3);
    assert!(!text.contains("href"));
}

#[test]
fn sweep_summary_matches_raw_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("sweep");
    let (code, _, err) = run(&["sweep", "--profile", "desk", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let summary = table(&out.join("sweep_ues_summary.csv"));
    assert_eq!(summary.rows.len(), 2);
    for (row, v) in [3, 4].iter().enumerate() {
        let t = table(&out.join(format!("sweep_ues_{v}.csv")));
        let iter = col(&t, "iteration");
        let last = iter.iter().copied().fold(0.0, f64::max);
        let se: Vec<f64> =
            col(&t, "total_se_bps_hz").into_iter().zip(&iter).filter(|(_, &i)| i == last).map(|(s, _)| s).collect();
        let mean = se.iter().sum::<f64>() / se.len() as f64;
        let reported = summary.number(row, summary.column("mean_total_se_bps_hz").unwrap()).unwrap().unwrap();
        assert!((mean - reported).abs() <= 1e-9 * mean.max(1.0));
        assert!(t.rows.iter().all(|r| r[1] == "hym"));
    }
}

#[test]
fn channel_tensors_follow_the_subband_count() {
    let dir = tempfile::tempdir().unwrap();
    for s in ["2", "5"] {
        let cfg_s = dir.path().join(format!("s{s}.cfg"));
        std::fs::write(&cfg_s, format!("{TINY}deployment.num_subbands = {s}\n").replace("deployment.num_subbands = 3\n", "")).unwrap();
        let out = dir.path().join(format!("ch{s}"));
        assert_eq!(run(&["gen-channels", "--profile", "desk", "--config", cfg_s.to_str().unwrap(), "--seed", "1", "--out", out.to_str().unwrap()]).0, 0);
        let gains = std::fs::read_to_string(out.join("gains_seed1.csv")).unwrap();
        let rows = gains.lines().count() - 1;
        assert_eq!(rows, 4 * 16 * s.parse::<usize>().unwrap());
    }
}

#[test]
fn tune_reports_every_trial_and_the_winner() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("tune");
    let (code, stdout, err) = run(&["tune", "--profile", "desk", "--config", &cfg, "--trials", "6", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let t = table(&out.join("tune.csv"));
    assert_eq!(t.rows.len(), 6);
    assert!(stdout.contains("best trial") && stdout.contains("ddpg.gamma = "));
}
