//! Seeded experiment orchestration.
//!
//! Every seed gets its own channel snapshot; all solvers run on that same
//! snapshot. Jobs run concurrently but results are gathered in a fixed
//! order, so output files depend only on the configuration and seeds.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use ucfalloc_core::chanmodel::{generate_cfr, generate_deployment, noise_power, ChannelTensor};
use ucfalloc_core::clustering::{select_serving_aps, ClusterMap};
use ucfalloc_core::objective::{Evaluator, ObjectiveReport};
use ucfalloc_core::optim::{ao_optimize, ddpg_train, hybrid_train, random_search, AllocationEnv, HyperRanges, TrainTrace, TrialSummary};
use ucfalloc_core::rng;

use crate::config::{ConfigError, ExperimentConfig, SolverKind, SweepAxis};
use crate::metrics::{rows_from_trace, write_metrics, MetricsRow};

const TAG_AO: u64 = 0x5001;
const TAG_RL: u64 = 0x5002;
const TAG_TUNE: u64 = 0x5003;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] ucfalloc_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Input(String),
}

impl RunError {
    /// Process exit status: 1 for configuration problems, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            RunError::Core(ucfalloc_core::Error::InvalidConfig(_)) => 1,
            _ => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_owned(), source }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

/// One channel snapshot with its clustering and scorer.
pub struct Instance {
    pub channels: ChannelTensor,
    pub cluster: ClusterMap,
    pub evaluator: Evaluator,
    pub frequencies: Vec<f64>,
    /// SHA-256 over the channel binary and the cluster table.
    pub hash: String,
}

pub fn build_instance(cfg: &ExperimentConfig, seed: u64) -> Result<Instance, RunError> {
    let mut dep_cfg = cfg.deployment.clone();
    dep_cfg.seed = seed;
    let dep = generate_deployment(&dep_cfg)?;
    let channels = generate_cfr(&dep, &cfg.fading, &dep_cfg)?;
    let cluster = select_serving_aps(&channels.large_scale_gains(), cfg.cluster_size)?;
    let sigma2 = noise_power(&dep_cfg, &cfg.fading);
    let evaluator =
        Evaluator::new(channels.clone(), cluster.clone(), cfg.objective.clone(), sigma2, cfg.power.p_max_w, cfg.power.tau_p)?
            .with_normalization(cfg.power.normalization);
    let mut bin = Vec::new();
    channels.write_binary(&mut bin)?;
    cluster.write_csv(&mut bin)?;
    let hash = Sha256::digest(&bin).iter().map(|b| format!("{b:02x}")).collect();
    Ok(Instance { channels, cluster, evaluator, frequencies: dep_cfg.subband_frequencies(), hash })
}

#[derive(Debug, Clone)]
pub struct SolverRun {
    pub trace: TrainTrace,
    pub report: ObjectiveReport,
}

/// Runs one solver on one snapshot. Both learning solvers draw from the
/// same seed lineage so they differ only in exploration.
pub fn run_solver(kind: SolverKind, inst: &Instance, cfg: &ExperimentConfig, seed: u64) -> Result<SolverRun, RunError> {
    let ev = &inst.evaluator;
    match kind {
        SolverKind::Ao => {
            let (_, report, trace) = ao_optimize(ev, &cfg.ao, rng::derive(seed, &[TAG_AO]));
            Ok(SolverRun { trace, report })
        }
        SolverKind::Rlm | SolverKind::Hym => {
            let env = AllocationEnv::new(ev);
            let s = rng::derive(seed, &[TAG_RL]);
            let out = if kind == SolverKind::Rlm {
                ddpg_train(&env, &cfg.ddpg, cfg.episodes, s)?
            } else {
                hybrid_train(&env, &cfg.ddpg, &cfg.hybrid, cfg.episodes, s)?
            };
            let report = out.best_report.ok_or_else(|| RunError::Input("training produced no actions".into()))?;
            Ok(SolverRun { trace: out.trace, report })
        }
    }
}

/// Final values of one (solver, seed) run.
#[derive(Debug, Clone, PartialEq)]
pub struct Final {
    pub seed: u64,
    pub best_objective: f64,
    pub total_se: f64,
    pub gini: f64,
    pub lambda_min: f64,
}

impl Final {
    fn from_rows(seed: u64, rows: &[MetricsRow]) -> Option<Self> {
        rows.last().map(|r| Self {
            seed,
            best_objective: r.best_objective,
            total_se: r.total_se_bps_hz,
            gini: r.gini,
            lambda_min: r.lambda_min,
        })
    }
}

/// Mean and sample standard deviation; `(NaN, NaN)` when empty.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

#[derive(Debug, Clone)]
pub struct SolverSummary {
    pub solver: SolverKind,
    pub finals: Vec<Final>,
    /// `(seed, message)` for runs that failed.
    pub failures: Vec<(u64, String)>,
}

#[derive(Debug, Clone)]
pub struct CompareOutcome {
    pub solvers: Vec<SolverSummary>,
    pub files: Vec<PathBuf>,
}

pub const SUMMARY_HEADER: &str = "solver,runs,failures,mean_best_objective,std_best_objective,mean_total_se_bps_hz,std_total_se_bps_hz,mean_gini,std_gini,mean_lambda_min,std_lambda_min";

fn summary_line(label: &str, finals: &[Final], failures: usize) -> String {
    let col = |f: fn(&Final) -> f64| mean_std(&finals.iter().map(f).collect::<Vec<_>>());
    let (o, os) = col(|f| f.best_objective);
    let (s, ss) = col(|f| f.total_se);
    let (g, gs) = col(|f| f.gini);
    let (l, ls) = col(|f| f.lambda_min);
    format!("{label},{},{failures},{o:?},{os:?},{s:?},{ss:?},{g:?},{gs:?},{l:?},{ls:?}", finals.len())
}

/// Runs every configured solver on every seed and writes `<solver>.csv`
/// plus `summary.csv` into `out`.
pub fn run_compare(cfg: &ExperimentConfig, out: &Path) -> Result<CompareOutcome, RunError> {
    let seeds = &cfg.experiment.seeds;
    let instances: Vec<Result<Instance, RunError>> = seeds.par_iter().map(|&s| build_instance(cfg, s)).collect();
    let jobs: Vec<(usize, usize)> = (0..cfg.solvers.len()).flat_map(|j| (0..seeds.len()).map(move |i| (j, i))).collect();
    let results: Vec<Result<(SolverRun, String), String>> = jobs
        .par_iter()
        .map(|&(j, i)| {
            let inst = instances[i].as_ref().map_err(|e| e.to_string())?;
            run_solver(cfg.solvers[j], inst, cfg, seeds[i]).map(|r| (r, inst.hash.clone())).map_err(|e| e.to_string())
        })
        .collect();

    let mut outcome = CompareOutcome { solvers: Vec::new(), files: Vec::new() };
    let mut summary = format!("{SUMMARY_HEADER}\n");
    for (j, &solver) in cfg.solvers.iter().enumerate() {
        let mut rows = Vec::new();
        let mut comments = Vec::new();
        let mut sum = SolverSummary { solver, finals: Vec::new(), failures: Vec::new() };
        for (i, &seed) in seeds.iter().enumerate() {
            match &results[j * seeds.len() + i] {
                Ok((run, hash)) => {
                    comments.push(format!("seed={seed} instance={hash}"));
                    let r = rows_from_trace(&cfg.experiment.id, solver, seed, &run.trace, cfg.experiment.timing);
                    sum.finals.extend(Final::from_rows(seed, &r));
                    rows.extend(r);
                }
                Err(msg) => {
                    comments.push(format!("seed={seed} failed: {msg}"));
                    sum.failures.push((seed, msg.clone()));
                }
            }
        }
        let path = out.join(format!("{solver}.csv"));
        let mut buf = Vec::new();
        write_metrics(&mut buf, &comments, &rows).map_err(io_err(&path))?;
        write_file(&path, &buf)?;
        summary.push_str(&summary_line(solver.name(), &sum.finals, sum.failures.len()));
        summary.push('\n');
        outcome.files.push(path);
        outcome.solvers.push(sum);
    }
    let path = out.join("summary.csv");
    write_file(&path, summary.as_bytes())?;
    outcome.files.push(path);
    Ok(outcome)
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: usize,
    pub over_capacity: bool,
    pub finals: Vec<Final>,
    pub failures: Vec<(u64, String)>,
}

pub const SWEEP_SUMMARY_HEADER: &str =
    "value,runs,failures,mean_total_se_bps_hz,std_total_se_bps_hz,mean_best_objective,std_best_objective,over_capacity";

/// Re-runs the hybrid for every sweep value on fresh snapshots and writes
/// `sweep_<axis>_<value>.csv` plus `sweep_<axis>_summary.csv`.
pub fn run_sweep(cfg: &ExperimentConfig, axis: SweepAxis, values: &[usize], out: &Path) -> Result<Vec<SweepPoint>, RunError> {
    if values.is_empty() || values.contains(&0) {
        return Err(ConfigError::Invalid("sweep values must be a non-empty list of positive integers".into()).into());
    }
    let configs: Vec<ExperimentConfig> = values
        .iter()
        .map(|&v| {
            let mut c = cfg.clone();
            match axis {
                SweepAxis::Ues => c.deployment.num_ues = v,
                SweepAxis::Subbands => c.deployment.num_subbands = v,
            }
            c.experiment.id = format!("{}-{}-{v}", cfg.experiment.id, axis.name());
            c.deployment.validate().map(|_| c).map_err(RunError::from)
        })
        .collect::<Result<_, _>>()?;
    let seeds = &cfg.experiment.seeds;
    let jobs: Vec<(usize, usize)> = (0..values.len()).flat_map(|v| (0..seeds.len()).map(move |i| (v, i))).collect();
    let results: Vec<Result<(SolverRun, String), String>> = jobs
        .par_iter()
        .map(|&(v, i)| {
            let inst = build_instance(&configs[v], seeds[i]).map_err(|e| e.to_string())?;
            run_solver(SolverKind::Hym, &inst, &configs[v], seeds[i]).map(|r| (r, inst.hash)).map_err(|e| e.to_string())
        })
        .collect();

    let mut points = Vec::new();
    let mut summary = format!("{SWEEP_SUMMARY_HEADER}\n");
    for (v, &value) in values.iter().enumerate() {
        let c = &configs[v];
        let mut point = SweepPoint { value, over_capacity: c.over_capacity(), finals: Vec::new(), failures: Vec::new() };
        let mut rows = Vec::new();
        let mut comments = vec![format!("{}={value}", axis.name())];
        if point.over_capacity {
            comments.push("over capacity: num_ues > antennas_per_ap * cluster_size * num_subbands".into());
        }
        for (i, &seed) in seeds.iter().enumerate() {
            match &results[v * seeds.len() + i] {
                Ok((run, hash)) => {
                    comments.push(format!("seed={seed} instance={hash}"));
                    let r = rows_from_trace(&c.experiment.id, SolverKind::Hym, seed, &run.trace, c.experiment.timing);
                    point.finals.extend(Final::from_rows(seed, &r));
                    rows.extend(r);
                }
                Err(msg) => {
                    comments.push(format!("seed={seed} failed: {msg}"));
                    point.failures.push((seed, msg.clone()));
                }
            }
        }
        let path = out.join(format!("sweep_{}_{value}.csv", axis.name()));
        let mut buf = Vec::new();
        write_metrics(&mut buf, &comments, &rows).map_err(io_err(&path))?;
        write_file(&path, &buf)?;
        let se: Vec<f64> = point.finals.iter().map(|f| f.total_se).collect();
        let obj: Vec<f64> = point.finals.iter().map(|f| f.best_objective).collect();
        let ((s, ss), (o, os)) = (mean_std(&se), mean_std(&obj));
        summary.push_str(&format!(
            "{value},{},{},{s:?},{ss:?},{o:?},{os:?},{}\n",
            point.finals.len(),
            point.failures.len(),
            point.over_capacity
        ));
        points.push(point);
    }
    write_file(&out.join(format!("sweep_{}_summary.csv", axis.name())), summary.as_bytes())?;
    Ok(points)
}

pub const TUNE_HEADER: &str = "trial,actor_lr,critic_lr,gamma,buffer_capacity,batch_size,tau,noise,final_episode_reward";

/// Random search on the first seed's snapshot; writes `tune.csv`.
pub fn run_tune(cfg: &ExperimentConfig, trials: usize, out: &Path) -> Result<(TrialSummary, Vec<TrialSummary>), RunError> {
    let seed = *cfg.experiment.seeds.first().ok_or_else(|| ConfigError::Invalid("no seeds configured".into()))?;
    let inst = build_instance(cfg, seed)?;
    let env = AllocationEnv::new(&inst.evaluator);
    let episodes = cfg.tune.episodes;
    let (best, all) =
        random_search(trials, &HyperRanges::default(), &cfg.ddpg, rng::derive(seed, &[TAG_TUNE]), |_, h, s| {
            let out = ddpg_train(&env, h, episodes, s)?;
            Ok(out.trace.records.last().and_then(|r| r.episode_reward).unwrap_or(f64::NEG_INFINITY))
        })?;
    let mut text = format!("# instance={}\n{TUNE_HEADER}\n", inst.hash);
    for t in &all {
        let h = &t.hyper;
        text.push_str(&format!(
            "{},{:?},{:?},{:?},{},{},{:?},{:?},{:?}\n",
            t.trial, h.actor_lr, h.critic_lr, h.gamma, h.buffer_capacity, h.batch_size, h.tau, h.noise, t.score
        ));
    }
    write_file(&out.join("tune.csv"), text.as_bytes())?;
    Ok((best, all))
}

/// Writes the channel binary, per-link gain table and cluster table for one seed.
pub fn gen_channels(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<Vec<PathBuf>, RunError> {
    let inst = build_instance(cfg, seed)?;
    let cfr = out.join(format!("channels_seed{seed}.cfr"));
    let gains = out.join(format!("gains_seed{seed}.csv"));
    let clusters = out.join(format!("clusters_seed{seed}.csv"));
    let mut buf = Vec::new();
    inst.channels.write_binary(&mut buf)?;
    write_file(&cfr, &buf)?;
    let mut buf = Vec::new();
    inst.channels.write_gain_csv(&mut buf, &inst.frequencies)?;
    write_file(&gains, &buf)?;
    let mut buf = Vec::new();
    inst.cluster.write_csv(&mut buf)?;
    write_file(&clusters, &buf)?;
    let _ = std::io::stdout().flush();
    Ok(vec![cfr, gains, clusters])
}
