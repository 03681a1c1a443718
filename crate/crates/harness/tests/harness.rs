//! Configuration, batch output and aggregation contracts.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use proptest::prelude::*;
use rtb_core::sim::Scheme;
use rtb_harness::config::{AlphaSetting, MuSetting};
use rtb_harness::output::{self, Aggregates, GroupAggregate};
use rtb_harness::*;

const REFERENCE: &str = include_str!("../../../configs/reference.cfg");

fn small(extra: &str) -> ExperimentConfig {
    let base = "n_nodes = 12\ndensity = 170\nradius_m = 250\nschemes = rtb\nnum_stages = 30\nseeds = 0..3\n";
    let mut entries: BTreeMap<String, String> = BTreeMap::new();
    for line in base.lines().chain(extra.lines()) {
        if let Some((k, v)) = line.split_once('=') {
            entries.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    let text: String = entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    parse_config(&text).unwrap()
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn count(dir: &Path) -> usize {
    fs::read_dir(dir).map(|d| d.count()).unwrap_or(0)
}

#[test]
fn reference_config_loads_with_defaults() {
    let c = parse_config(REFERENCE).unwrap();
    assert_eq!(c.n_nodes, 50);
    assert_eq!(c.l_bytes, 512);
    assert_eq!(c.step, rtb_core::regret::StepSize::Constant(0.1));
    assert_eq!(c.densities, vec![20.0, 50.0, 100.0, 170.0]);
    assert_eq!(c.slots_per_stage(), 24);
    assert_eq!(c.alpha, AlphaSetting::AutoByDensity);
    assert_eq!(c.alpha_for(170.0), 0.3);
    assert_eq!(c.alpha_for(20.0), 0.1);
    assert_eq!(c.mu, MuSetting::Auto);
    assert!((c.mu_for(20.0) - 6.8).abs() < 1e-12);
    assert_eq!(c.seeds, (0..10).collect::<Vec<_>>());
    assert_eq!(c.schemes, Scheme::ALL.to_vec());
}

#[test]
fn empty_file_lists_required_keys() {
    let msg = parse_config("# nothing here\n").unwrap_err().to_string();
    for key in config::REQUIRED_KEYS {
        assert!(msg.contains(key), "{msg}");
    }
}

#[test]
fn errors_name_the_offending_key() {
    let base = "n_nodes = 10\ndensity = 20\nschemes = rtb\nnum_stages = 5\nseeds = 1,2\n";
    let cases = [
        ("sigma = fast\n", "sigma"),
        ("sigma = 0.7\n", "sigma"),
        ("epsilon = 0\n", "epsilon"),
        ("schemes2 = rtb\n", "schemes2"),
        ("mu = -1\n", "mu"),
        ("regime = sometimes\n", "regime"),
    ];
    for (extra, key) in cases {
        let msg = parse_config(&format!("{base}{extra}")).unwrap_err().to_string();
        assert!(msg.contains(key), "{extra:?} -> {msg}");
    }
    let msg = parse_config(&base.replace("1,2", "1,1")).unwrap_err().to_string();
    assert!(msg.contains("seeds"), "{msg}");
    let msg = parse_config(&base.replace("rtb", "rtb, teleport")).unwrap_err().to_string();
    assert!(msg.contains("schemes"), "{msg}");
    let msg = parse_config(&base.replace("n_nodes = 10\n", "")).unwrap_err().to_string();
    assert!(msg.contains("n_nodes") && !msg.contains("density"), "{msg}");
}

#[test]
fn explicit_values_override_auto() {
    let c = small("alpha = 0.2\nmu = 3\nepsilon = decaying\nregime = semi-reliable\nfixed_cap = 3");
    assert_eq!(c.alpha_for(170.0), 0.2);
    assert_eq!(c.mu_for(170.0), 3.0);
    assert_eq!(c.step, rtb_core::regret::StepSize::Decaying);
    assert_eq!(
        c.regime_value(),
        rtb_core::sim::Regime::SemiReliable { delta: 0.05, fixed_cap: 3 }
    );
}

#[test]
fn three_seeds_give_three_run_files_and_one_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let c = small("");
    let (result, agg) = run_experiment(&c, dir.path()).unwrap();
    assert_eq!(result.runs.len(), 3);
    assert_eq!(count(&dir.path().join("runs")), 3);
    assert_eq!(count(&dir.path().join("stagewise")), 1);
    assert_eq!(agg.groups.len(), 1);
    let run = fs::read_to_string(dir.path().join("runs/rtb_d170_s1.csv")).unwrap();
    assert_eq!(run.lines().next().unwrap(), output::RUN_METRICS_HEADER);
    assert_eq!(run.lines().count(), 31);
    assert!(run.lines().nth(1).unwrap().ends_with(",rtb,1"));
    let load = fs::read_to_string(dir.path().join("loads/rtb_d170_s1.csv")).unwrap();
    assert_eq!(load.lines().count(), 13);
}

#[test]
fn summary_headers_are_fixed() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&small("schemes = rtb, gb-btc"), dir.path()).unwrap();
    let first = |p: &str| fs::read_to_string(dir.path().join(p)).unwrap().lines().next().unwrap().to_string();
    assert_eq!(
        first("stagewise/gb-btc_d170.csv"),
        "stage,mean_delivery,ci_delivery,mean_total_tx,ci_total_tx,mean_cumulative_delivery,ci_cumulative_delivery"
    );
    assert_eq!(first("density_sweep.csv"), "density,scheme,steady_state_tx_mean,ci");
    assert_eq!(first("load.csv"), "scheme,density,jain_mean,stddev_mean");
    assert_eq!(first("trees/gb-btc_d170_s0.csv"), "node,parent,internal_flag");
}

#[test]
fn identical_configs_give_identical_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = small("schemes = rtb, enhanced-rtb, flooding, mpr, gb-btc\nce_ensembles = 2\nce_stride = 5");
    run_experiment(&c, a.path()).unwrap();
    run_experiment(&c, b.path()).unwrap();
    let fa = files(a.path());
    assert!(fa.keys().any(|k| k.starts_with("ce")));
    assert_eq!(fa, files(b.path()));
}

#[test]
fn sweep_emits_one_row_per_density_and_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let c = small("density = 20, 50, 100, 170\nradius_m = 400\nschemes = rtb, flooding\nseeds = 0,1");
    run_experiment(&c, dir.path()).unwrap();
    let sweep = fs::read_to_string(dir.path().join("density_sweep.csv")).unwrap();
    for scheme in ["rtb", "flooding"] {
        let rows: Vec<&str> = sweep.lines().filter(|l| l.split(',').nth(1) == Some(scheme)).collect();
        assert_eq!(rows.len(), 4, "{sweep}");
    }
}

#[test]
fn empty_aggregates_give_header_only_files() {
    let dir = tempfile::tempdir().unwrap();
    let empty = output::aggregate_group(Scheme::Rtb, 20.0, &[]);
    assert!(empty.stagewise.is_empty());
    let agg = Aggregates { groups: vec![empty] };
    emit_summary(&agg, dir.path()).unwrap();
    let read = |p: &str| fs::read_to_string(dir.path().join(p)).unwrap();
    assert_eq!(read("stagewise/rtb_d20.csv"), format!("{}\n", output::STAGEWISE_HEADER));
    assert_eq!(read("density_sweep.csv"), format!("{}\n", output::SWEEP_HEADER));
    assert_eq!(read("load.csv"), format!("{}\n", output::LOAD_SUMMARY_HEADER));
    emit_summary(&Aggregates::default(), dir.path()).unwrap();
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let err = emit_summary(&Aggregates { groups: Vec::<GroupAggregate>::new() }, &blocker).unwrap_err();
    assert!(matches!(err, BatchError::Io { .. }));
}

#[test]
fn failing_batches_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    // far too sparse to connect within a handful of placements
    let c = small("density = 1\nradius_m = 10\nretry_budget = 2");
    let err = run_batch(&c, dir.path()).unwrap_err();
    assert!(matches!(err, BatchError::TooManyFailures { failed: 3, total: 3, .. }), "{err}");
    let failures = fs::read_to_string(dir.path().join("failures.csv")).unwrap();
    assert_eq!(failures.lines().count(), 4);
}

#[test]
fn jain_examples() {
    assert_eq!(fairness_metrics(&[5, 5, 5]).unwrap(), (1.0, 0.0));
    assert_eq!(fairness_metrics(&[8, 0, 0, 0]).unwrap().0, 0.25);
    assert!((fairness_metrics(&[2, 4]).unwrap().0 - 0.9).abs() < 1e-15);
    assert_eq!(fairness_metrics(&[0, 0]).unwrap().0, 1.0);
    assert_eq!(fairness_metrics(&[2, 4]).unwrap().1, 1.0);
    assert!(fairness_metrics(&[]).is_err());
}

#[test]
fn confidence_intervals_shrink_with_more_seeds() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (_, ten) = run_experiment(&small("seeds = 0..10"), a.path()).unwrap();
    let (_, hundred) = run_experiment(&small("seeds = 0..100"), b.path()).unwrap();
    let (w10, w100) = (ten.groups[0].steady_state_tx_ci, hundred.groups[0].steady_state_tx_ci);
    assert!(w100 < w10, "{w100} vs {w10}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn jain_lies_between_one_over_n_and_one(counts in prop::collection::vec(0u64..1000, 1..60)) {
        let (j, sd) = fairness_metrics(&counts).unwrap();
        let n = counts.len() as f64;
        prop_assert!(j >= 1.0 / n - 1e-12 && j <= 1.0 + 1e-12);
        prop_assert!(sd >= 0.0);
    }

    #[test]
    fn seed_lists_roundtrip(seeds in prop::collection::btree_set(any::<u64>(), 1..20)) {
        let text: Vec<String> = seeds.iter().map(u64::to_string).collect();
        let parsed = config::parse_seeds(&text.join(", ")).unwrap();
        prop_assert_eq!(parsed, seeds.into_iter().collect::<Vec<_>>());
    }
}
