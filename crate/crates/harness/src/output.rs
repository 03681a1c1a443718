//! Aggregation across seeds and CSV emission.
//!
//! Schemas (headers are fixed and written byte-for-byte as below):
//!
//! | file | columns |
//! |---|---|
//! | `runs/<scheme>_d<density>_s<seed>.csv` | [`RUN_METRICS_HEADER`] |
//! | `loads/<scheme>_d<density>_s<seed>.csv` | [`LOAD_HEADER`] |
//! | `ce/<scheme>_d<density>_s<seed>.csv` | [`CE_HEADER`] |
//! | `stagewise/<scheme>_d<density>.csv` | [`STAGEWISE_HEADER`] |
//! | `density_sweep.csv` | [`SWEEP_HEADER`] |
//! | `load.csv` | [`LOAD_SUMMARY_HEADER`] |
//! | `channel_table.csv` | [`CHANNEL_TABLE_HEADER`] |
//!
//! Per-stage delivery is the fraction of non-source nodes holding the
//! message at stage end; the cumulative columns average it over stages
//! `1..=stage` of each run before averaging over seeds. Transmission totals
//! include the source and exclude ACKs. CI columns are 95% Student-t
//! half-widths over seeds, `NaN` with fewer than two seeds.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rtb_core::channel::{linear_to_db, FadingProfile};
use rtb_core::sim::{CeSample, MetricsRecord, Scheme};

use crate::batch::{BatchError, BatchResult, RunFailure, RunKey, RunSummary};
use crate::stats::{ci95_half_width, fairness_metrics, mean, steady_state_window};

pub const RUN_METRICS_HEADER: &str = "stage,delivery_ratio,total_tx,scheme,seed";
pub const LOAD_HEADER: &str = "node,total_tx_over_run";
pub const CE_HEADER: &str = "stage,ensemble_id,max_violation";
pub const STAGEWISE_HEADER: &str =
    "stage,mean_delivery,ci_delivery,mean_total_tx,ci_total_tx,mean_cumulative_delivery,ci_cumulative_delivery";
pub const SWEEP_HEADER: &str = "density,scheme,steady_state_tx_mean,ci";
pub const LOAD_SUMMARY_HEADER: &str = "scheme,density,jain_mean,stddev_mean";
pub const CHANNEL_TABLE_HEADER: &str = "bin,gamma_low_db,gamma_high_db,v_k,gamma_bar_db,ber";
pub const FAILURES_HEADER: &str = "scheme,density,seed,error";

pub fn run_metrics_csv(key: &RunKey, records: &[MetricsRecord]) -> String {
    let mut out = format!("{RUN_METRICS_HEADER}\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.stage,
            r.delivery_ratio,
            r.total_transmissions,
            key.scheme.name(),
            key.seed
        );
    }
    out
}

pub fn load_csv(load: &[u64]) -> String {
    let mut out = format!("{LOAD_HEADER}\n");
    for (i, l) in load.iter().enumerate() {
        let _ = writeln!(out, "{i},{l}");
    }
    out
}

pub fn ce_csv(series: &[CeSample]) -> String {
    let mut out = format!("{CE_HEADER}\n");
    for s in series {
        let _ = writeln!(out, "{},{},{}", s.stage, s.ensemble_id, s.max_violation);
    }
    out
}

pub fn failures_csv(failures: &[RunFailure]) -> String {
    let mut out = format!("{FAILURES_HEADER}\n");
    for f in failures {
        let error = f.error.replace(['\n', ','], " ");
        let _ = writeln!(out, "{},{},{},{}", f.key.scheme.name(), f.key.density, f.key.seed, error);
    }
    out
}

/// Bins numbered from 1; thresholds and mean SNRs in dB.
pub fn channel_table_csv(profile: &FadingProfile) -> String {
    let mut out = format!("{CHANNEL_TABLE_HEADER}\n");
    let t = profile.thresholds();
    for k in 0..profile.num_bins() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            k + 1,
            linear_to_db(t[k]),
            linear_to_db(t[k + 1]),
            profile.steady_state_probability(k).expect("bin in range"),
            linear_to_db(profile.quantized_snr(k).expect("bin in range")),
            profile.ber_for_state(k).expect("bin in range"),
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct StagewiseRow {
    pub stage: u64,
    pub mean_delivery: f64,
    pub ci_delivery: f64,
    pub mean_total_tx: f64,
    pub ci_total_tx: f64,
    pub mean_cumulative_delivery: f64,
    pub ci_cumulative_delivery: f64,
}

/// Across-seed summary of one (scheme, density) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupAggregate {
    pub scheme: Scheme,
    pub density: f64,
    pub num_runs: usize,
    pub stagewise: Vec<StagewiseRow>,
    pub steady_state_tx_mean: f64,
    pub steady_state_tx_ci: f64,
    pub jain_mean: f64,
    pub stddev_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Aggregates {
    pub groups: Vec<GroupAggregate>,
}

/// Mean total transmissions over the steady-state window of one run.
pub fn steady_state_tx(run: &RunSummary) -> f64 {
    let w = steady_state_window(run.total_tx.len());
    let tail: Vec<f64> = run.total_tx[run.total_tx.len() - w..].iter().map(|&t| t as f64).collect();
    mean(&tail)
}

/// Running mean of per-stage delivery.
pub fn cumulative_delivery(delivery: &[f64]) -> Vec<f64> {
    let mut sum = 0.0;
    delivery
        .iter()
        .enumerate()
        .map(|(k, d)| {
            sum += d;
            sum / (k + 1) as f64
        })
        .collect()
}

pub fn aggregate_group(scheme: Scheme, density: f64, runs: &[&RunSummary]) -> GroupAggregate {
    let stages = runs.iter().map(|r| r.delivery.len()).min().unwrap_or(0);
    let cumulative: Vec<Vec<f64>> = runs.iter().map(|r| cumulative_delivery(&r.delivery)).collect();
    let stagewise = (0..stages)
        .map(|s| {
            let delivery: Vec<f64> = runs.iter().map(|r| r.delivery[s]).collect();
            let tx: Vec<f64> = runs.iter().map(|r| r.total_tx[s] as f64).collect();
            let cum: Vec<f64> = cumulative.iter().map(|c| c[s]).collect();
            StagewiseRow {
                stage: s as u64 + 1,
                mean_delivery: mean(&delivery),
                ci_delivery: ci95_half_width(&delivery),
                mean_total_tx: mean(&tx),
                ci_total_tx: ci95_half_width(&tx),
                mean_cumulative_delivery: mean(&cum),
                ci_cumulative_delivery: ci95_half_width(&cum),
            }
        })
        .collect();
    let steady: Vec<f64> = runs.iter().filter(|r| !r.total_tx.is_empty()).map(|r| steady_state_tx(r)).collect();
    let fairness: Vec<(f64, f64)> = runs.iter().filter_map(|r| fairness_metrics(&r.load).ok()).collect();
    GroupAggregate {
        scheme,
        density,
        num_runs: runs.len(),
        stagewise,
        steady_state_tx_mean: mean(&steady),
        steady_state_tx_ci: ci95_half_width(&steady),
        jain_mean: mean(&fairness.iter().map(|f| f.0).collect::<Vec<_>>()),
        stddev_mean: mean(&fairness.iter().map(|f| f.1).collect::<Vec<_>>()),
    }
}

/// Groups runs by (density, scheme) in the order given.
pub fn aggregate(result: &BatchResult, densities: &[f64], schemes: &[Scheme]) -> Aggregates {
    let mut groups = Vec::new();
    for &density in densities {
        for &scheme in schemes {
            let runs: Vec<&RunSummary> = result
                .runs
                .iter()
                .filter(|r| r.key.scheme == scheme && r.key.density == density)
                .collect();
            groups.push(aggregate_group(scheme, density, &runs));
        }
    }
    Aggregates { groups }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> BatchError + '_ {
    move |source| BatchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes the stagewise, density-sweep and load summaries. Groups with no
/// completed stage contribute header-only stagewise files and no summary
/// rows.
pub fn emit_summary(aggregates: &Aggregates, out: &Path) -> Result<(), BatchError> {
    let stage_dir = out.join("stagewise");
    fs::create_dir_all(&stage_dir).map_err(io(&stage_dir))?;
    let mut sweep = format!("{SWEEP_HEADER}\n");
    let mut load = format!("{LOAD_SUMMARY_HEADER}\n");
    for g in &aggregates.groups {
        let mut body = format!("{STAGEWISE_HEADER}\n");
        for r in &g.stagewise {
            let _ = writeln!(
                body,
                "{},{},{},{},{},{},{}",
                r.stage,
                r.mean_delivery,
                r.ci_delivery,
                r.mean_total_tx,
                r.ci_total_tx,
                r.mean_cumulative_delivery,
                r.ci_cumulative_delivery
            );
        }
        let path = stage_dir.join(format!("{}_d{}.csv", g.scheme.name(), g.density));
        fs::write(&path, body).map_err(io(&path))?;
        if g.stagewise.is_empty() {
            continue;
        }
        let _ = writeln!(sweep, "{},{},{},{}", g.density, g.scheme.name(), g.steady_state_tx_mean, g.steady_state_tx_ci);
        let _ = writeln!(load, "{},{},{},{}", g.scheme.name(), g.density, g.jain_mean, g.stddev_mean);
    }
    let path = out.join("density_sweep.csv");
    fs::write(&path, sweep).map_err(io(&path))?;
    let path = out.join("load.csv");
    fs::write(&path, load).map_err(io(&path))?;
    Ok(())
}
