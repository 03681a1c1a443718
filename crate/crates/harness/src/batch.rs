//! Seeded batch execution over (density, seed, scheme) triples.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rtb_core::channel::{db_to_linear, ChannelError, FadingProfile};
use rtb_core::regret::{Estimator, LearnerParams};
use rtb_core::sim::{run_simulation, CeSample, Scheme, SimConfig, StageConfig};
use rtb_core::topology::{generate_topology_with_budget, Topology};
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::output;

/// A batch is abandoned when more than this fraction of its runs fail.
pub const MAX_FAILURE_FRACTION: f64 = 0.1;

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("channel: {0}")]
    Channel(#[from] ChannelError),
    #[error("{failed} of {total} runs failed; first: {first}")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first: String,
    },
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, BatchError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunKey {
    pub scheme: Scheme,
    pub density: f64,
    pub seed: u64,
}

impl RunKey {
    /// File stem shared by every per-run output.
    pub fn stem(&self) -> String {
        format!("{}_d{}_s{}", self.scheme.name(), self.density, self.seed)
    }
}

/// The per-run series kept for aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub key: RunKey,
    pub delivery: Vec<f64>,
    pub total_tx: Vec<u64>,
    /// Transmissions per node over the whole run.
    pub load: Vec<u64>,
    pub ce_series: Vec<CeSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub key: RunKey,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    /// Ordered by density, then scheme, then seed, as listed in the config.
    pub runs: Vec<RunSummary>,
    pub failures: Vec<RunFailure>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Stream seed for one (density, seed) pair; `stream` 0 places nodes,
/// 1 drives the simulation.
pub fn derive_seed(density: f64, seed: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(density.to_bits()) ^ seed) ^ stream)
}

pub fn fading_profile(config: &ExperimentConfig) -> std::result::Result<FadingProfile, ChannelError> {
    FadingProfile::equal_probability(config.bins, db_to_linear(config.mean_snr_db), config.sigma)
}

pub fn learner_params(config: &ExperimentConfig, density: f64, scheme: Scheme) -> LearnerParams {
    LearnerParams {
        step: config.step,
        delta_explore: config.delta_explore,
        mu: config.mu_for(density),
        alpha: config.alpha_for(density),
        estimator: if scheme == Scheme::EnhancedRtb {
            Estimator::Csi
        } else {
            Estimator::Proxy
        },
        form: config.regret_form,
    }
}

pub fn sim_config(config: &ExperimentConfig, topology: &Topology, density: f64, seed: u64, scheme: Scheme) -> SimConfig {
    let stage = StageConfig {
        slots_per_stage: config.slots_per_stage(),
        packet_bits: config.packet_bits(),
        alpha: config.alpha_for(density),
        regime: config.regime_value(),
        scheme,
    };
    let mut sim = SimConfig::new(
        stage,
        learner_params(config, density, scheme),
        config.num_stages,
        derive_seed(density, seed, 1),
    );
    sim.source = config.source;
    sim.ce_stride = config.ce_stride;
    if scheme.is_learning() {
        // evenly spaced non-source centers
        let candidates: Vec<usize> = (0..topology.len()).filter(|&i| i != config.source).collect();
        let k = config.ce_ensembles.min(candidates.len());
        sim.ce_centers = (0..k).map(|e| candidates[e * candidates.len() / k]).collect();
    }
    sim
}

pub fn build_topology(config: &ExperimentConfig, density: f64, seed: u64) -> std::result::Result<Topology, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(density, seed, 0));
    generate_topology_with_budget(
        config.n_nodes,
        density,
        config.radius_m,
        &mut rng,
        config.require_connected,
        config.retry_budget,
    )
    .map_err(|e| e.to_string())
}

fn write(path: PathBuf, contents: &str) -> Result<()> {
    fs::write(&path, contents).map_err(|source| BatchError::Io { path, source })
}

fn mkdir(path: PathBuf) -> Result<PathBuf> {
    fs::create_dir_all(&path).map_err(|source| BatchError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Runs every (density, seed, scheme) triple and writes per-run files under
/// `out`: `runs/` (stage metrics), `loads/` (per-node totals),
/// `topologies/`, `trees/` (GB-BTC) and `ce/` (when ensembles are tracked).
pub fn run_batch(config: &ExperimentConfig, out: &Path) -> Result<BatchResult> {
    let profile = fading_profile(config)?;
    let runs_dir = mkdir(out.join("runs"))?;
    let loads_dir = mkdir(out.join("loads"))?;
    let topo_dir = mkdir(out.join("topologies"))?;
    let tree_dir = mkdir(out.join("trees"))?;
    let ce_dir = mkdir(out.join("ce"))?;

    let pairs: Vec<(f64, u64)> = config
        .densities
        .iter()
        .flat_map(|&d| config.seeds.iter().map(move |&s| (d, s)))
        .collect();
    let topologies: Vec<std::result::Result<Topology, String>> =
        pairs.par_iter().map(|&(d, s)| build_topology(config, d, s)).collect();
    for (&(d, s), topo) in pairs.iter().zip(&topologies) {
        if let Ok(t) = topo {
            write(topo_dir.join(format!("d{d}_s{s}.csv")), &t.to_csv())?;
        }
    }

    let mut jobs = Vec::new();
    for (pair_idx, &(density, seed)) in pairs.iter().enumerate() {
        for &scheme in &config.schemes {
            jobs.push((pair_idx, RunKey { scheme, density, seed }));
        }
    }
    // density-major, then scheme, then seed
    jobs.sort_by(|a, b| {
        let da = config.densities.iter().position(|&d| d == a.1.density);
        let db = config.densities.iter().position(|&d| d == b.1.density);
        let sa = config.schemes.iter().position(|&s| s == a.1.scheme);
        let sb = config.schemes.iter().position(|&s| s == b.1.scheme);
        (da, sa, a.0).cmp(&(db, sb, b.0))
    });

    let outcomes: Vec<std::result::Result<RunSummary, RunFailure>> = jobs
        .par_iter()
        .map(|&(pair_idx, key)| {
            let fail = |error: String| RunFailure { key, error };
            let topology = topologies[pair_idx].as_ref().map_err(|e| fail(e.clone()))?;
            let cfg = sim_config(config, topology, key.density, key.seed, key.scheme);
            let run = run_simulation(topology, &profile, cfg).map_err(|e| fail(e.to_string()))?;
            let stem = key.stem();
            let io = |e: BatchError| fail(e.to_string());
            write(runs_dir.join(format!("{stem}.csv")), &output::run_metrics_csv(&key, &run.records)).map_err(io)?;
            write(loads_dir.join(format!("{stem}.csv")), &output::load_csv(&run.load)).map_err(io)?;
            if let Some(tree) = &run.tree {
                write(tree_dir.join(format!("{stem}.csv")), &tree.to_csv()).map_err(io)?;
            }
            if !run.ce_series.is_empty() {
                write(ce_dir.join(format!("{stem}.csv")), &output::ce_csv(&run.ce_series)).map_err(io)?;
            }
            Ok(RunSummary {
                key,
                delivery: run.records.iter().map(|r| r.delivery_ratio).collect(),
                total_tx: run.records.iter().map(|r| r.total_transmissions).collect(),
                load: run.load,
                ce_series: run.ce_series,
            })
        })
        .collect();

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(r) => runs.push(r),
            Err(f) => failures.push(f),
        }
    }
    write(out.join("failures.csv"), &output::failures_csv(&failures))?;
    let total = jobs.len();
    if failures.len() as f64 > MAX_FAILURE_FRACTION * total as f64 {
        return Err(BatchError::TooManyFailures {
            failed: failures.len(),
            total,
            first: format!("{}: {}", failures[0].key.stem(), failures[0].error),
        });
    }
    Ok(BatchResult { runs, failures })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_separate_streams() {
        let a = derive_seed(20.0, 1, 0);
        assert_ne!(a, derive_seed(20.0, 1, 1));
        assert_ne!(a, derive_seed(20.0, 2, 0));
        assert_ne!(a, derive_seed(170.0, 1, 0));
        assert_eq!(a, derive_seed(20.0, 1, 0));
    }
}
