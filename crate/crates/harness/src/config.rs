//! Experiment configuration: a flat `key = value` file, one assignment per
//! line, `#` starts a comment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rtb_core::regret::{LearnerParams, RegretForm, StepSize};
use rtb_core::sim::{Regime, Scheme};
use thiserror::Error;

pub const REQUIRED_KEYS: [&str; 5] = ["n_nodes", "density", "schemes", "num_stages", "seeds"];

const OPTIONAL_KEYS: [&str; 21] = [
    "radius_m",
    "bins",
    "mean_snr_db",
    "sigma",
    "epsilon",
    "delta_explore",
    "mu",
    "alpha",
    "l_bytes",
    "rate_bps",
    "origination_rate_hz",
    "regime",
    "reliability_delta",
    "fixed_cap",
    "regret_form",
    "source",
    "require_connected",
    "retry_budget",
    "ce_ensembles",
    "ce_stride",
    "output_dir",
];

/// Density below which the low-density cost scaling applies.
pub const HIGH_DENSITY_THRESHOLD: f64 = 100.0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("missing required keys: {}", .0.join(", "))]
    Missing(Vec<String>),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{0}` assigned twice")]
    Duplicate(String),
    #[error("key `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

pub type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaSetting {
    /// 0.1 below [`HIGH_DENSITY_THRESHOLD`], 0.3 otherwise.
    AutoByDensity,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MuSetting {
    /// See [`LearnerParams::auto_mu`].
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeKind {
    Reliable,
    SemiReliable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_nodes: usize,
    /// One entry for a single run, several for a sweep.
    pub densities: Vec<f64>,
    pub radius_m: f64,
    pub bins: usize,
    pub mean_snr_db: f64,
    pub sigma: f64,
    pub step: StepSize,
    pub delta_explore: f64,
    pub mu: MuSetting,
    pub alpha: AlphaSetting,
    pub l_bytes: u32,
    pub rate_bps: f64,
    pub origination_rate_hz: f64,
    pub schemes: Vec<Scheme>,
    pub regime: RegimeKind,
    pub reliability_delta: f64,
    pub fixed_cap: u32,
    pub regret_form: RegretForm,
    pub source: usize,
    pub require_connected: bool,
    pub retry_budget: usize,
    pub ce_ensembles: usize,
    pub ce_stride: u64,
    pub num_stages: u64,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut entries: BTreeMap<String, String> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: idx + 1 })?;
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(ConfigError::Syntax { line: idx + 1 });
        }
        if !REQUIRED_KEYS.contains(&key.as_str()) && !OPTIONAL_KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey(key));
        }
        if entries.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(ConfigError::Duplicate(key));
        }
    }
    let missing: Vec<String> = REQUIRED_KEYS
        .iter()
        .filter(|k| !entries.contains_key(**k))
        .map(|k| k.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(ConfigError::Missing(missing));
    }
    let r = Reader { entries: &entries };

    let config = ExperimentConfig {
        n_nodes: r.parse("n_nodes", None)?,
        densities: r.list("density")?,
        radius_m: r.parse("radius_m", Some(250.0))?,
        bins: r.parse("bins", Some(8))?,
        mean_snr_db: r.parse("mean_snr_db", Some(35.0))?,
        sigma: r.parse("sigma", Some(0.05))?,
        step: match r.raw("epsilon") {
            None => StepSize::Constant(0.1),
            Some("decaying") => StepSize::Decaying,
            Some(_) => StepSize::Constant(r.parse("epsilon", None)?),
        },
        delta_explore: r.parse("delta_explore", Some(0.05))?,
        mu: match r.raw("mu") {
            None | Some("auto") => MuSetting::Auto,
            Some(_) => MuSetting::Fixed(r.parse("mu", None)?),
        },
        alpha: match r.raw("alpha") {
            None | Some("auto-by-density") => AlphaSetting::AutoByDensity,
            Some(_) => AlphaSetting::Fixed(r.parse("alpha", None)?),
        },
        l_bytes: r.parse("l_bytes", Some(512))?,
        rate_bps: r.parse("rate_bps", Some(1e6))?,
        origination_rate_hz: r.parse("origination_rate_hz", Some(10.0))?,
        schemes: r.list("schemes")?,
        regime: match r.raw("regime").unwrap_or("reliable") {
            "reliable" => RegimeKind::Reliable,
            "semi-reliable" => RegimeKind::SemiReliable,
            other => return Err(invalid("regime", format!("expected reliable or semi-reliable, got `{other}`"))),
        },
        reliability_delta: r.parse("reliability_delta", Some(0.05))?,
        fixed_cap: r.parse("fixed_cap", Some(4))?,
        regret_form: match r.raw("regret_form").unwrap_or("averaged") {
            "averaged" => RegretForm::Averaged,
            "recursive" => RegretForm::Recursive,
            other => return Err(invalid("regret_form", format!("expected averaged or recursive, got `{other}`"))),
        },
        source: r.parse("source", Some(0))?,
        require_connected: r.parse("require_connected", Some(true))?,
        retry_budget: r.parse("retry_budget", Some(rtb_core::topology::DEFAULT_RETRY_BUDGET))?,
        ce_ensembles: r.parse("ce_ensembles", Some(0))?,
        ce_stride: r.parse("ce_stride", Some(100))?,
        num_stages: r.parse("num_stages", None)?,
        seeds: parse_seeds(r.raw("seeds").unwrap_or(""))?,
        output_dir: PathBuf::from(r.raw("output_dir").unwrap_or("out")),
    };
    config.validate()?;
    Ok(config)
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

struct Reader<'a> {
    entries: &'a BTreeMap<String, String>,
}

impl Reader<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, default: Option<T>) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match (self.raw(key), default) {
            (Some(v), _) => v.parse().map_err(|e| invalid(key, format!("cannot parse `{v}`: {e}"))),
            (None, Some(d)) => Ok(d),
            (None, None) => Err(ConfigError::Missing(vec![key.to_string()])),
        }
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(key).unwrap_or("");
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| invalid(key, format!("cannot parse `{s}`: {e}"))))
            .collect()
    }
}

/// Accepts a comma list where each item is either a seed or a half-open
/// range `a..b`.
pub fn parse_seeds(raw: &str) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for item in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let bad = || invalid("seeds", format!("cannot parse `{item}`"));
        if let Some((a, b)) = item.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b.trim().parse().map_err(|_| bad())?;
            seeds.extend(a..b);
        } else {
            seeds.push(item.parse().map_err(|_| bad())?);
        }
    }
    Ok(seeds)
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(key, format!("must be positive, got {v}")))
            }
        };
        if self.n_nodes < 2 {
            return Err(invalid("n_nodes", "need at least 2 nodes"));
        }
        if self.densities.is_empty() {
            return Err(invalid("density", "empty list"));
        }
        for &d in &self.densities {
            positive("density", d)?;
        }
        positive("radius_m", self.radius_m)?;
        if self.bins == 0 {
            return Err(invalid("bins", "need at least one bin"));
        }
        if !self.mean_snr_db.is_finite() {
            return Err(invalid("mean_snr_db", "must be finite"));
        }
        if !(0.0..=0.5).contains(&self.sigma) {
            return Err(invalid("sigma", format!("must lie in [0, 0.5], got {}", self.sigma)));
        }
        if let StepSize::Constant(eps) = self.step {
            if !(eps > 0.0 && eps <= 1.0) {
                return Err(invalid("epsilon", format!("must lie in (0, 1] or be `decaying`, got {eps}")));
            }
        }
        if !(0.0..1.0).contains(&self.delta_explore) {
            return Err(invalid("delta_explore", format!("must lie in [0, 1), got {}", self.delta_explore)));
        }
        if let MuSetting::Fixed(mu) = self.mu {
            positive("mu", mu)?;
        }
        if let AlphaSetting::Fixed(a) = self.alpha {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(invalid("alpha", format!("must be nonnegative, got {a}")));
            }
        }
        if self.l_bytes == 0 {
            return Err(invalid("l_bytes", "must be positive"));
        }
        positive("rate_bps", self.rate_bps)?;
        positive("origination_rate_hz", self.origination_rate_hz)?;
        if self.slots_per_stage() == 0 {
            return Err(invalid("origination_rate_hz", "stage period is shorter than one packet"));
        }
        if self.schemes.is_empty() {
            return Err(invalid("schemes", "empty list"));
        }
        if !(self.reliability_delta > 0.0 && self.reliability_delta < 1.0) {
            return Err(invalid("reliability_delta", format!("must lie in (0, 1), got {}", self.reliability_delta)));
        }
        if self.fixed_cap == 0 {
            return Err(invalid("fixed_cap", "must be positive"));
        }
        if self.source >= self.n_nodes {
            return Err(invalid("source", format!("must be below n_nodes = {}", self.n_nodes)));
        }
        if self.retry_budget == 0 {
            return Err(invalid("retry_budget", "must be positive"));
        }
        if self.ce_stride == 0 {
            return Err(invalid("ce_stride", "must be positive"));
        }
        if self.num_stages == 0 {
            return Err(invalid("num_stages", "must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "empty list"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("seeds", "seeds must be distinct"));
        }
        if self.regret_form == RegretForm::Recursive && self.schemes.contains(&Scheme::EnhancedRtb) {
            return Err(invalid("regret_form", "the recursive form does not apply to enhanced-rtb"));
        }
        Ok(())
    }

    pub fn packet_bits(&self) -> u32 {
        self.l_bytes * 8
    }

    /// Whole packet durations that fit in one origination period.
    pub fn slots_per_stage(&self) -> u32 {
        let slots = self.rate_bps / (self.origination_rate_hz * self.packet_bits() as f64);
        slots.floor().min(u32::MAX as f64) as u32
    }

    pub fn alpha_for(&self, density: f64) -> f64 {
        match self.alpha {
            AlphaSetting::Fixed(a) => a,
            AlphaSetting::AutoByDensity if density < HIGH_DENSITY_THRESHOLD => 0.1,
            AlphaSetting::AutoByDensity => 0.3,
        }
    }

    pub fn mu_for(&self, density: f64) -> f64 {
        match self.mu {
            MuSetting::Fixed(mu) => mu,
            MuSetting::Auto => LearnerParams::auto_mu(self.alpha_for(density), self.slots_per_stage()),
        }
    }

    pub fn regime_value(&self) -> Regime {
        match self.regime {
            RegimeKind::Reliable => Regime::Reliable,
            RegimeKind::SemiReliable => Regime::SemiReliable {
                delta: self.reliability_delta,
                fixed_cap: self.fixed_cap,
            },
        }
    }
}
