//! Experiment configuration: a line-oriented `key = value` format with
//! dotted section prefixes.
//!
//! ```text
//! # comments run to the end of the line
//! solver = ao, rlm, hym
//! deployment.num_ues = 40
//! experiment.seeds = 1, 2, 3
//! ```
//!
//! Every key has a documented default, so an empty file is valid. Unknown
//! keys, duplicate keys, malformed values and out-of-domain values are
//! rejected with the offending line number.

use std::fmt;
use std::path::{Path, PathBuf};

use ucfalloc_core::chanmodel::{ApPlacement, ArrayModel, DeploymentConfig, FadingParams, PathLossModel};
use ucfalloc_core::objective::ObjectiveWeights;
use ucfalloc_core::optim::{AoConfig, DdpgHyper};
use ucfalloc_core::phy::PowerNormalization;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SolverKind {
    Ao,
    Rlm,
    Hym,
}

impl SolverKind {
    pub const ALL: [SolverKind; 3] = [SolverKind::Ao, SolverKind::Rlm, SolverKind::Hym];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Ao => "ao",
            SolverKind::Rlm => "rlm",
            SolverKind::Hym => "hym",
        }
    }

    pub fn parse(s: &str) -> Result<Self, String> {
        match s {
            "ao" => Ok(SolverKind::Ao),
            "rlm" => Ok(SolverKind::Rlm),
            "hym" => Ok(SolverKind::Hym),
            _ => Err(format!("unknown solver `{s}`; valid solvers are ao, rlm, hym")),
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Ues,
    Subbands,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Ues => "ues",
            SweepAxis::Subbands => "subbands",
        }
    }

    pub fn parse(s: &str) -> Result<Self, String> {
        match s {
            "ues" => Ok(SweepAxis::Ues),
            "subbands" => Ok(SweepAxis::Subbands),
            _ => Err(format!("unknown sweep axis `{s}`; expected ues or subbands")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerConfig {
    pub p_max_w: f64,
    pub tau_p: usize,
    pub normalization: PowerNormalization,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSection {
    /// Written into every metrics row; letters, digits, `-`, `_` and `.` only.
    pub id: String,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Record wall-clock time in metrics rows. Off by default because it
    /// makes outputs differ between identical runs.
    pub timing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSection {
    pub axis: SweepAxis,
    pub values: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneSection {
    pub trials: usize,
    pub episodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub deployment: DeploymentConfig,
    pub cluster_size: usize,
    pub fading: FadingParams,
    pub power: PowerConfig,
    pub objective: ObjectiveWeights,
    pub solvers: Vec<SolverKind>,
    pub ao: AoConfig,
    pub ddpg: DdpgHyper,
    /// Training episodes for the learning solvers.
    pub episodes: usize,
    /// Inner AO budget of the hybrid.
    pub hybrid: AoConfig,
    pub experiment: ExperimentSection,
    pub sweep: SweepSection,
    pub tune: TuneSection,
}

impl Default for ExperimentConfig {
    /// Full-scale defaults.
    fn default() -> Self {
        Self {
            deployment: DeploymentConfig::default(),
            cluster_size: 8,
            fading: FadingParams::default(),
            power: PowerConfig { p_max_w: 0.2, tau_p: 10, normalization: PowerNormalization::Unit },
            objective: ObjectiveWeights::default(),
            solvers: SolverKind::ALL.to_vec(),
            ao: AoConfig::default(),
            ddpg: DdpgHyper::default(),
            episodes: 200,
            hybrid: AoConfig { population: 10, iterations: 5, ..AoConfig::default() },
            experiment: ExperimentSection {
                id: "compare".into(),
                seeds: vec![1, 2, 3],
                out_dir: PathBuf::from("out"),
                timing: false,
            },
            sweep: SweepSection { axis: SweepAxis::Ues, values: vec![40, 60, 80] },
            tune: TuneSection { trials: 6, episodes: 30 },
        }
    }
}

impl ExperimentConfig {
    /// Laptop-scale profile: 16 APs with 2 antennas, 12 UEs contending for
    /// 4 subbands, 200 solver iterations or episodes.
    pub fn desk() -> Self {
        let mut c = Self::default();
        c.deployment.num_aps = 16;
        c.deployment.antennas_per_ap = 2;
        c.deployment.num_ues = 12;
        c.deployment.num_subbands = 4;
        c.cluster_size = 4;
        c.objective.eta_th = 7.0;
        c.experiment.id = "desk".into();
        c.experiment.seeds = vec![1, 2, 3, 4, 5];
        c.sweep.values = vec![8, 12, 16];
        c
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
        Self::parse(&text)
    }

    /// Parses on top of the full-scale defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::parse_onto(Self::default(), text)
    }

    /// Parses `text`, overriding fields of `base`.
    pub fn parse_onto(base: Self, text: &str) -> Result<Self, ConfigError> {
        let mut cfg = base;
        let mut seen: Vec<(&'static str, usize)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |msg: String| ConfigError::Line { line, msg };
            let (key, value) = content.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let field = FIELDS.iter().find(|f| f.key == key).ok_or_else(|| err(format!("unknown key `{key}`")))?;
            if let Some((_, first)) = seen.iter().find(|(k, _)| *k == field.key) {
                return Err(err(format!("duplicate key `{key}` (first set on line {first})")));
            }
            seen.push((field.key, line));
            (field.set)(&mut cfg, value).map_err(|m| err(format!("{key}: {m}")))?;
        }
        let line_of = |key: &str| seen.iter().find(|(k, _)| *k == key).map(|(_, l)| *l);
        cfg.validate().map_err(|(key, msg)| match key.and_then(line_of) {
            Some(line) => ConfigError::Line { line, msg },
            None => ConfigError::Invalid(msg),
        })?;
        Ok(cfg)
    }

    /// Cross-field checks. On failure returns the most relevant key, if any.
    fn validate(&self) -> Result<(), (Option<&'static str>, String)> {
        self.deployment.validate().map_err(|e| (Some("deployment.num_subbands"), e.to_string()))?;
        self.fading.validate().map_err(|e| (None, e.to_string()))?;
        self.objective.validate().map_err(|e| (Some("objective.w_eta"), e.to_string()))?;
        self.ao.validate().map_err(|e| (None, e.to_string()))?;
        self.hybrid.validate().map_err(|e| (None, e.to_string()))?;
        self.ddpg.validate().map_err(|e| (None, e.to_string()))?;
        if self.solvers.is_empty() {
            return Err((Some("solver"), "at least one solver is required".into()));
        }
        Ok(())
    }

    /// Serialises every key in canonical order; `parse` of the result yields
    /// an equal configuration.
    pub fn serialize(&self) -> String {
        let mut out = String::from("# ucfalloc experiment configuration\n");
        let mut section = "";
        for f in FIELDS {
            let sec = f.key.split_once('.').map_or("", |(s, _)| s);
            if sec != section {
                out.push('\n');
                section = sec;
            }
            out.push_str(&format!("{} = {}\n", f.key, (f.get)(self)));
        }
        out
    }

    /// `K > N * M * S`: more UEs than the per-cluster ZF degrees of freedom
    /// summed over subbands.
    pub fn over_capacity(&self) -> bool {
        let d = &self.deployment;
        let m = self.cluster_size.min(d.num_aps);
        d.num_ues > d.antennas_per_ap * m * d.num_subbands
    }

    pub fn keys() -> impl Iterator<Item = &'static str> {
        FIELDS.iter().map(|f| f.key)
    }
}

trait Value: Sized {
    fn parse_value(s: &str) -> Result<Self, String>;
    fn show(&self) -> String;
}

impl Value for f64 {
    fn parse_value(s: &str) -> Result<Self, String> {
        let v: f64 = s.parse().map_err(|_| format!("expected a number, got `{s}`"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("expected a finite number, got `{s}`"))
        }
    }
    fn show(&self) -> String {
        format!("{self:?}")
    }
}

impl Value for usize {
    fn parse_value(s: &str) -> Result<Self, String> {
        s.parse().map_err(|_| format!("expected a nonnegative integer, got `{s}`"))
    }
    fn show(&self) -> String {
        self.to_string()
    }
}

impl Value for u64 {
    fn parse_value(s: &str) -> Result<Self, String> {
        s.parse().map_err(|_| format!("expected a nonnegative integer, got `{s}`"))
    }
    fn show(&self) -> String {
        self.to_string()
    }
}

impl Value for bool {
    fn parse_value(s: &str) -> Result<Self, String> {
        match s {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(format!("expected true or false, got `{s}`")),
        }
    }
    fn show(&self) -> String {
        self.to_string()
    }
}

impl Value for String {
    fn parse_value(s: &str) -> Result<Self, String> {
        Ok(s.to_owned())
    }
    fn show(&self) -> String {
        self.clone()
    }
}

impl Value for PathBuf {
    fn parse_value(s: &str) -> Result<Self, String> {
        if s.is_empty() {
            return Err("expected a path".into());
        }
        Ok(PathBuf::from(s))
    }
    fn show(&self) -> String {
        self.display().to_string()
    }
}

impl<T: Value> Value for Vec<T> {
    fn parse_value(s: &str) -> Result<Self, String> {
        if s.is_empty() {
            return Ok(Vec::new());
        }
        s.split(',').map(|p| T::parse_value(p.trim())).collect()
    }
    fn show(&self) -> String {
        self.iter().map(Value::show).collect::<Vec<_>>().join(", ")
    }
}

/// `auto` stands for `None`.
impl Value for Option<f64> {
    fn parse_value(s: &str) -> Result<Self, String> {
        if s == "auto" {
            Ok(None)
        } else {
            f64::parse_value(s).map(Some)
        }
    }
    fn show(&self) -> String {
        self.map_or_else(|| "auto".into(), |v| v.show())
    }
}

macro_rules! keyword_value {
    ($ty:ty, $what:literal, $($name:literal => $variant:expr),+ $(,)?) => {
        impl Value for $ty {
            fn parse_value(s: &str) -> Result<Self, String> {
                match s {
                    $($name => Ok($variant),)+
                    _ => Err(format!(concat!("unknown ", $what, " `{}`; expected one of {}"), s, [$($name),+].join(", "))),
                }
            }
            fn show(&self) -> String {
                $(if *self == $variant { return $name.to_owned(); })+
                unreachable!()
            }
        }
    };
}

keyword_value!(ApPlacement, "placement", "grid" => ApPlacement::Grid, "uniform" => ApPlacement::Uniform);
keyword_value!(PathLossModel, "path-loss model", "umi" => PathLossModel::UmiStreetCanyon, "none" => PathLossModel::None);
keyword_value!(ArrayModel, "array model", "uca" => ArrayModel::Uca, "isotropic" => ArrayModel::Isotropic);
keyword_value!(PowerNormalization, "normalization", "unit" => PowerNormalization::Unit, "as_printed" => PowerNormalization::AsPrinted);

impl Value for SolverKind {
    fn parse_value(s: &str) -> Result<Self, String> {
        SolverKind::parse(s)
    }
    fn show(&self) -> String {
        self.name().into()
    }
}

impl Value for SweepAxis {
    fn parse_value(s: &str) -> Result<Self, String> {
        SweepAxis::parse(s)
    }
    fn show(&self) -> String {
        self.name().into()
    }
}

struct Field {
    key: &'static str,
    set: fn(&mut ExperimentConfig, &str) -> Result<(), String>,
    get: fn(&ExperimentConfig) -> String,
}

// Domain checks.
fn any<T>(_: &T) -> Result<(), String> {
    Ok(())
}
fn positive(v: &f64) -> Result<(), String> {
    if *v > 0.0 { Ok(()) } else { Err("must be positive".into()) }
}
fn nonneg(v: &f64) -> Result<(), String> {
    if *v >= 0.0 { Ok(()) } else { Err("must be nonnegative".into()) }
}
fn unit(v: &f64) -> Result<(), String> {
    if (0.0..=1.0).contains(v) { Ok(()) } else { Err("must lie in [0, 1]".into()) }
}
fn open_unit(v: &f64) -> Result<(), String> {
    if *v > 0.0 && *v <= 1.0 { Ok(()) } else { Err("must lie in (0, 1]".into()) }
}
fn levy(v: &f64) -> Result<(), String> {
    if *v > 0.0 && *v < 2.0 { Ok(()) } else { Err("must lie in (0, 2)".into()) }
}
fn at_least_one(v: &usize) -> Result<(), String> {
    if *v >= 1 { Ok(()) } else { Err("must be at least 1".into()) }
}
fn at_least_two(v: &usize) -> Result<(), String> {
    if *v >= 2 { Ok(()) } else { Err("must be at least 2".into()) }
}
fn nonempty<T>(v: &[T]) -> Result<(), String> {
    if v.is_empty() { Err("must not be empty".into()) } else { Ok(()) }
}
fn positive_list(v: &Vec<usize>) -> Result<(), String> {
    nonempty(v)?;
    if v.contains(&0) { Err("entries must be positive".into()) } else { Ok(()) }
}
fn seeds(v: &Vec<u64>) -> Result<(), String> {
    nonempty(v)
}
fn solvers(v: &Vec<SolverKind>) -> Result<(), String> {
    nonempty(v)?;
    let mut s = v.clone();
    s.sort();
    s.dedup();
    if s.len() != v.len() { Err("solvers must not repeat".into()) } else { Ok(()) }
}
fn identifier(v: &String) -> Result<(), String> {
    if !v.is_empty() && v.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
        Ok(())
    } else {
        Err("must be non-empty and use only letters, digits, `-`, `_` and `.`".into())
    }
}

macro_rules! field {
    ($key:literal, $($path:ident).+, $check:expr) => {
        Field {
            key: $key,
            set: |c, v| {
                let parsed = Value::parse_value(v)?;
                $check(&parsed)?;
                c.$($path).+ = parsed;
                Ok(())
            },
            get: |c| Value::show(&c.$($path).+),
        }
    };
}

static FIELDS: &[Field] = &[
    field!("solver", solvers, solvers),
    field!("deployment.area_side_m", deployment.area_side_m, positive),
    field!("deployment.num_aps", deployment.num_aps, at_least_one),
    field!("deployment.antennas_per_ap", deployment.antennas_per_ap, at_least_one),
    field!("deployment.num_ues", deployment.num_ues, at_least_one),
    field!("deployment.cluster_size", cluster_size, at_least_one),
    field!("deployment.ap_height_m", deployment.ap_height_m, positive),
    field!("deployment.ue_height_m", deployment.ue_height_m, positive),
    field!("deployment.carrier_hz", deployment.carrier_hz, positive),
    field!("deployment.bandwidth_hz", deployment.bandwidth_hz, positive),
    field!("deployment.rb_hz", deployment.rb_hz, positive),
    field!("deployment.num_subbands", deployment.num_subbands, at_least_one),
    field!("deployment.ap_placement", deployment.ap_placement, any),
    field!("fading.num_taps", fading.num_taps, at_least_one),
    field!("fading.delay_spread_s", fading.delay_spread_s, nonneg),
    field!("fading.decay_exponent", fading.decay_exponent, any),
    field!("fading.shadowing_db", fading.shadowing_db, nonneg),
    field!("fading.path_loss", fading.path_loss, any),
    field!("fading.array", fading.array, any),
    field!("fading.noise_figure_db", fading.noise_figure_db, any),
    field!("power.p_max_w", power.p_max_w, nonneg),
    field!("power.tau_p", power.tau_p, at_least_one),
    field!("power.normalization", power.normalization, any),
    field!("objective.w_eta", objective.w_eta, nonneg),
    field!("objective.w_evd", objective.w_evd, nonneg),
    field!("objective.w_gini", objective.w_gini, nonneg),
    field!("objective.eta_th", objective.eta_th, any),
    field!("objective.rho_max", objective.rho_max, |v: &Option<f64>| v.as_ref().map_or(Ok(()), nonneg)),
    field!("ao.population", ao.population, at_least_two),
    field!("ao.iterations", ao.iterations, at_least_one),
    field!("ao.beta", ao.beta, levy),
    field!("ao.alpha", ao.alpha, any),
    field!("ao.delta", ao.delta, any),
    field!("ddpg.episodes", episodes, at_least_one),
    field!("ddpg.horizon", ddpg.horizon, at_least_one),
    field!("ddpg.hidden", ddpg.hidden, positive_list),
    field!("ddpg.actor_lr", ddpg.actor_lr, positive),
    field!("ddpg.critic_lr", ddpg.critic_lr, positive),
    field!("ddpg.gamma", ddpg.gamma, unit),
    field!("ddpg.buffer_capacity", ddpg.buffer_capacity, at_least_one),
    field!("ddpg.batch_size", ddpg.batch_size, at_least_one),
    field!("ddpg.tau", ddpg.tau, open_unit),
    field!("ddpg.noise", ddpg.noise, nonneg),
    field!("ddpg.epsilon_start", ddpg.epsilon.start, unit),
    field!("ddpg.epsilon_decay", ddpg.epsilon.decay, open_unit),
    field!("ddpg.epsilon_floor", ddpg.epsilon.floor, unit),
    field!("hybrid.population", hybrid.population, at_least_two),
    field!("hybrid.iterations", hybrid.iterations, at_least_one),
    field!("experiment.id", experiment.id, identifier),
    field!("experiment.seeds", experiment.seeds, seeds),
    field!("experiment.out_dir", experiment.out_dir, any),
    field!("experiment.timing", experiment.timing, any),
    field!("sweep.axis", sweep.axis, any),
    field!("sweep.values", sweep.values, positive_list),
    field!("tune.trials", tune.trials, at_least_one),
    field!("tune.episodes", tune.episodes, at_least_one),
];
