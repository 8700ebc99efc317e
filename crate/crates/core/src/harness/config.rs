//! Experiment configuration as flat `key = value` text.
//!
//! Blank lines and `#` comments are ignored; unknown keys are errors. Every key
//! can also be set programmatically with [`ExperimentConfig::set`], which is how
//! command-line overrides and parameter sweeps are applied.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{config, Error, Result};
use crate::features::{binomial, FeatureKind};
use crate::ispeed::TransferMode;
use crate::timeseries::{MackeyGlassConfig, SplitSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Prediction,
    Reconstruction,
    Subspace,
    Continual,
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prediction" => Ok(Self::Prediction),
            "reconstruction" => Ok(Self::Reconstruction),
            "subspace" => Ok(Self::Subspace),
            "continual" => Ok(Self::Continual),
            _ => config(format!("unknown experiment '{s}' (prediction, reconstruction, subspace, continual)")),
        }
    }
}

impl ExperimentKind {
    fn name(&self) -> &'static str {
        match self {
            Self::Prediction => "prediction",
            Self::Reconstruction => "reconstruction",
            Self::Subspace => "subspace",
            Self::Continual => "continual",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    Lms,
    Rls,
    ExRls,
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lms" => Ok(Self::Lms),
            "rls" => Ok(Self::Rls),
            "exrls" => Ok(Self::ExRls),
            _ => config(format!("unknown filter '{s}' (lms, rls, exrls)")),
        }
    }
}

impl FilterKind {
    fn name(&self) -> &'static str {
        match self {
            Self::Lms => "lms",
            Self::Rls => "rls",
            Self::ExRls => "exrls",
        }
    }
}

/// One learner in a prediction experiment. `None` fields fall back to the
/// config-level `m`, `batch` and `quantization` keys.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Eigenmap of the first `batch` training inputs.
    Speed {
        m: Option<usize>,
        batch: Option<usize>,
    },
    /// Eigenmap of the novelty-filtered first `batch` training inputs.
    SparseSpeed {
        m: Option<usize>,
        batch: Option<usize>,
    },
    Features {
        kind: FeatureKind,
        dim: usize,
    },
    Klms,
    Qklms {
        q: Option<f64>,
    },
    /// The raw delay vector as features.
    Linear,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(token: &str) -> Result<Self> {
        let (name, param) = match token.split_once(':') {
            Some((n, p)) => (n.trim(), Some(p.trim())),
            None => (token.trim(), None),
        };
        let bad = || Error::Config(format!("cannot parse method '{token}'"));
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad());
        let speed_params = |p: Option<&str>| -> Result<(Option<usize>, Option<usize>)> {
            match p {
                None => Ok((None, None)),
                Some(p) => match p.split_once('/') {
                    Some((m, b)) => Ok((Some(int(m)?), Some(int(b)?))),
                    None => Ok((Some(int(p)?), None)),
                },
            }
        };
        match name {
            "speed" => speed_params(param).map(|(m, batch)| Method::Speed { m, batch }),
            "sparse-speed" => speed_params(param).map(|(m, batch)| Method::SparseSpeed { m, batch }),
            "klms" if param.is_none() => Ok(Method::Klms),
            "qklms" => Ok(Method::Qklms { q: param.map(|p| p.parse::<f64>().map_err(|_| bad())).transpose()? }),
            "linear" if param.is_none() => Ok(Method::Linear),
            "rff1" | "rff2" | "taylor" | "gq" => {
                let kind: FeatureKind = name.parse()?;
                Ok(Method::Features { kind, dim: int(param.ok_or_else(bad)?)? })
            }
            _ => Err(bad()),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let speed = |f: &mut std::fmt::Formatter<'_>, name: &str, m: &Option<usize>, b: &Option<usize>| match (m, b) {
            (None, _) => write!(f, "{name}"),
            (Some(m), None) => write!(f, "{name}:{m}"),
            (Some(m), Some(b)) => write!(f, "{name}:{m}/{b}"),
        };
        match self {
            Method::Speed { m, batch } => speed(f, "speed", m, batch),
            Method::SparseSpeed { m, batch } => speed(f, "sparse-speed", m, batch),
            Method::Features { kind, dim } => write!(f, "{kind}:{dim}"),
            Method::Klms => write!(f, "klms"),
            Method::Qklms { q: None } => write!(f, "qklms"),
            Method::Qklms { q: Some(q) } => write!(f, "qklms:{q}"),
            Method::Linear => write!(f, "linear"),
        }
    }
}

/// How per-m reconstruction errors are averaged when trials support different
/// maximal m (sparse dictionaries).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truncation {
    /// Report only m values every trial supports.
    Min,
    /// Average over the trials that support each m.
    Available,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub trials: usize,
    pub seed: u64,
    pub mg: MackeyGlassConfig,
    pub noise: f64,
    pub split: SplitSpec,
    pub sigma: f64,
    pub eta: f64,
    pub filter: FilterKind,
    pub lambda: f64,
    pub delta: f64,
    pub exrls_alpha: f64,
    pub exrls_q: f64,
    pub methods: Vec<Method>,
    pub eval_every: usize,
    pub m: usize,
    pub batch: usize,
    pub quantization: f64,
    pub d_th: f64,
    pub seed_count: usize,
    /// Novelty threshold used to sparsify the initial batch (defaults to `d_th`).
    pub seed_threshold: Option<f64>,
    pub transfer_mode: TransferMode,
    pub reorth_every: Option<usize>,
    pub update_batch: usize,
    pub gq_degree: usize,
    pub recon_points: usize,
    pub m_values: Vec<usize>,
    pub recon_sparse: bool,
    pub recon_truncation: Truncation,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::Prediction,
            trials: 100,
            seed: 0,
            mg: MackeyGlassConfig::default(),
            noise: 0.02,
            split: SplitSpec::default(),
            sigma: 1.0,
            eta: 0.1,
            filter: FilterKind::Lms,
            lambda: 1.0,
            delta: 1e4,
            exrls_alpha: 1.0,
            exrls_q: 0.0,
            methods: vec![Method::Speed { m: None, batch: None }],
            eval_every: 10,
            m: 50,
            batch: 2000,
            quantization: 0.06,
            d_th: 0.06,
            seed_count: 100,
            seed_threshold: None,
            transfer_mode: TransferMode::Truncate,
            reorth_every: Some(50),
            update_batch: 1,
            gq_degree: 8,
            recon_points: 500,
            m_values: vec![1, 2, 5, 10, 20, 30, 50, 100, 200, 300, 400, 500],
            recon_sparse: false,
            recon_truncation: Truncation::Min,
            out: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse::<T>().map_err(|_| Error::Config(format!("invalid value '{value}' for key '{key}'")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse(key, s)).collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Parses config text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return config(format!("line {}: expected 'key = value', got '{raw}'", lineno + 1));
            };
            cfg.set(key.trim(), value.trim()).map_err(|e| e.context(format!("line {}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let opt_usize = |v: &str| -> Result<Option<usize>> {
            match v {
                "none" | "0" => Ok(None),
                _ => parse(key, v).map(Some),
            }
        };
        match key {
            "experiment" => self.experiment = parse(key, value)?,
            "trials" => self.trials = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "series_length" => self.mg.length = parse(key, value)?,
            "mg_beta" => self.mg.beta = parse(key, value)?,
            "mg_gamma" => self.mg.gamma = parse(key, value)?,
            "mg_tau" => self.mg.tau = parse(key, value)?,
            "mg_exponent" => self.mg.exponent = parse(key, value)?,
            "mg_y0" => self.mg.y0 = parse(key, value)?,
            "mg_period" => self.mg.sample_period = parse(key, value)?,
            "mg_step" => self.mg.internal_step = parse(key, value)?,
            "noise" => self.noise = parse(key, value)?,
            "embedding" => self.split.embedding = parse(key, value)?,
            "train" => self.split.train_len = parse(key, value)?,
            "test" => self.split.test_len = parse(key, value)?,
            "gap" => self.split.gap = parse(key, value)?,
            "sigma" => self.sigma = parse(key, value)?,
            "eta" => self.eta = parse(key, value)?,
            "filter" => self.filter = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "delta" => self.delta = parse(key, value)?,
            "exrls_alpha" => self.exrls_alpha = parse(key, value)?,
            "exrls_q" => self.exrls_q = parse(key, value)?,
            "methods" => self.methods = parse_list(key, value)?,
            "eval_every" => self.eval_every = parse(key, value)?,
            "m" => self.m = parse(key, value)?,
            "batch" => self.batch = parse(key, value)?,
            "quantization" => self.quantization = parse(key, value)?,
            "d_th" => self.d_th = parse(key, value)?,
            "seed_count" => self.seed_count = parse(key, value)?,
            "seed_threshold" => self.seed_threshold = Some(parse(key, value)?),
            "transfer_mode" => self.transfer_mode = value.parse().map_err(|e: Error| e.context(key))?,
            "reorth_every" => self.reorth_every = opt_usize(value)?,
            "update_batch" => self.update_batch = parse(key, value)?,
            "gq_degree" => self.gq_degree = parse(key, value)?,
            "recon_points" => self.recon_points = parse(key, value)?,
            "m_values" => self.m_values = parse_list(key, value)?,
            "recon_sparse" => self.recon_sparse = parse(key, value)?,
            "recon_truncation" => {
                self.recon_truncation = match value {
                    "min" => Truncation::Min,
                    "available" => Truncation::Available,
                    _ => return config(format!("invalid value '{value}' for key '{key}' (min, available)")),
                }
            }
            "out" => self.out = Some(PathBuf::from(value)),
            _ => return config(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        if self.sigma.is_nan() || self.sigma <= 0.0 {
            return fail(format!("sigma must be positive, got {}", self.sigma));
        }
        if self.eval_every == 0 {
            return fail("eval_every must be positive".into());
        }
        if self.split.train_len == 0 || self.split.test_len == 0 || self.split.embedding == 0 {
            return fail("train, test and embedding must be positive".into());
        }
        if self.split.valid_starts(self.mg.length) == 0 {
            return fail(format!("series_length {} is too short for the train/gap/test windows", self.mg.length));
        }
        if self.methods.is_empty() && self.experiment == ExperimentKind::Prediction {
            return fail("methods must list at least one method".into());
        }
        if self.update_batch == 0 {
            return fail("update_batch must be positive".into());
        }
        for method in &self.methods {
            match *method {
                Method::Features { kind: FeatureKind::Taylor, dim } => {
                    self.taylor_degree(dim)?;
                }
                Method::Klms | Method::Qklms { .. } if self.filter != FilterKind::Lms => {
                    return fail(format!("method {method} only supports filter = lms"));
                }
                _ => {}
            }
        }
        if matches!(self.experiment, ExperimentKind::Continual) && self.filter != FilterKind::Lms {
            return fail("the continual experiment only supports filter = lms".into());
        }
        Ok(())
    }

    /// Taylor degree whose feature count at this embedding equals `dim`.
    pub fn taylor_degree(&self, dim: usize) -> Result<usize> {
        let d = self.split.embedding;
        (0..=32)
            .find(|&r| binomial(d + r, r) == dim)
            .ok_or_else(|| Error::Config(format!("no Taylor degree gives {dim} features for embedding {d}")))
    }

    pub fn seed_threshold(&self) -> f64 {
        self.seed_threshold.unwrap_or(self.d_th)
    }

    /// Canonical text form; parsing it yields an equal config.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("experiment", self.experiment.name().into());
        kv("trials", self.trials.to_string());
        kv("seed", self.seed.to_string());
        kv("series_length", self.mg.length.to_string());
        kv("mg_beta", self.mg.beta.to_string());
        kv("mg_gamma", self.mg.gamma.to_string());
        kv("mg_tau", self.mg.tau.to_string());
        kv("mg_exponent", self.mg.exponent.to_string());
        kv("mg_y0", self.mg.y0.to_string());
        kv("mg_period", self.mg.sample_period.to_string());
        kv("mg_step", self.mg.internal_step.to_string());
        kv("noise", self.noise.to_string());
        kv("embedding", self.split.embedding.to_string());
        kv("train", self.split.train_len.to_string());
        kv("test", self.split.test_len.to_string());
        kv("gap", self.split.gap.to_string());
        kv("sigma", self.sigma.to_string());
        kv("eta", self.eta.to_string());
        kv("filter", self.filter.name().into());
        kv("lambda", self.lambda.to_string());
        kv("delta", self.delta.to_string());
        kv("exrls_alpha", self.exrls_alpha.to_string());
        kv("exrls_q", self.exrls_q.to_string());
        kv("methods", join(&self.methods));
        kv("eval_every", self.eval_every.to_string());
        kv("m", self.m.to_string());
        kv("batch", self.batch.to_string());
        kv("quantization", self.quantization.to_string());
        kv("d_th", self.d_th.to_string());
        kv("seed_count", self.seed_count.to_string());
        if let Some(t) = self.seed_threshold {
            kv("seed_threshold", t.to_string());
        }
        kv(
            "transfer_mode",
            match self.transfer_mode {
                TransferMode::Truncate => "truncate".into(),
                TransferMode::NearestNeighbor => "nearest_neighbor".into(),
            },
        );
        kv("reorth_every", self.reorth_every.map_or("none".into(), |r| r.to_string()));
        kv("update_batch", self.update_batch.to_string());
        kv("gq_degree", self.gq_degree.to_string());
        kv("recon_points", self.recon_points.to_string());
        kv("m_values", join(&self.m_values));
        kv("recon_sparse", self.recon_sparse.to_string());
        kv(
            "recon_truncation",
            match self.recon_truncation {
                Truncation::Min => "min".into(),
                Truncation::Available => "available".into(),
            },
        );
        if let Some(out) = &self.out {
            kv("out", out.display().to_string());
        }
        s
    }

    /// FNV-1a hash of [`render`](Self::render), stable across runs.
    pub fn hash(&self) -> u64 {
        self.render().bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3))
    }
}
