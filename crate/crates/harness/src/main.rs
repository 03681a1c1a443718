use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rtb_core::baselines::optimal_tree_oracle;
use rtb_core::channel::{db_to_linear, FadingProfile};
use rtb_core::sim::Scheme;
use rtb_core::topology::Topology;
use rtb_harness::config::{parse_seeds, ExperimentConfig};
use rtb_harness::output::channel_table_csv;
use rtb_harness::{load_config, run_experiment};

#[derive(Parser)]
#[command(name = "rtb", version, about = "Regret-tracking broadcast experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration at a single density.
    Run(BatchArgs),
    /// Run one configuration over its density list.
    Sweep {
        #[command(flatten)]
        batch: BatchArgs,
        /// Override the density list, comma separated.
        #[arg(long, value_delimiter = ',')]
        densities: Option<Vec<f64>>,
    },
    /// Dump the fading-channel bin table as CSV.
    ChannelTable {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        mean_snr_db: Option<f64>,
    },
    /// Exhaustive minimum-transmission broadcast tree on a dumped topology.
    Oracle {
        /// Topology CSV as written under `topologies/`.
        topology: PathBuf,
        /// Channel settings; defaults apply when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        source: usize,
        /// Tree CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct BatchArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use seeds 0..N.
    #[arg(long, conflicts_with = "seed_list")]
    seeds: Option<u64>,
    /// Explicit seeds, e.g. `1,2,10..20`.
    #[arg(long)]
    seed_list: Option<String>,
    /// Restrict to these schemes, comma separated.
    #[arg(long, value_delimiter = ',')]
    scheme: Option<Vec<Scheme>>,
}

type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

fn prepare(args: &BatchArgs) -> CliResult<(ExperimentConfig, PathBuf)> {
    let mut config = load_config(&args.config)?;
    if let Some(n) = args.seeds {
        config.seeds = (0..n).collect();
    }
    if let Some(list) = &args.seed_list {
        config.seeds = parse_seeds(list)?;
    }
    if let Some(schemes) = &args.scheme {
        config.schemes = schemes.clone();
    }
    let out = args.out.clone().unwrap_or_else(|| config.output_dir.clone());
    Ok((config, out))
}

fn execute(config: &ExperimentConfig, out: &Path) -> CliResult<()> {
    config.validate()?;
    let (result, aggregates) = run_experiment(config, out)?;
    for f in &result.failures {
        eprintln!("run {} failed: {}", f.key.stem(), f.error);
    }
    for g in &aggregates.groups {
        println!(
            "{:>13} density {:>6}: steady-state tx {:.3} ± {:.3}, jain {:.3}",
            g.scheme.name(),
            g.density,
            g.steady_state_tx_mean,
            g.steady_state_tx_ci,
            g.jain_mean
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn default_config() -> ExperimentConfig {
    rtb_harness::parse_config("n_nodes = 2\ndensity = 20\nschemes = rtb\nnum_stages = 1\nseeds = 0\n")
        .expect("built-in defaults are valid")
}

fn emit(text: &str, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn main_inner(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run(args) => {
            let (config, out) = prepare(&args)?;
            if config.densities.len() != 1 {
                return Err("`run` takes a single density; use `sweep` for a list".into());
            }
            execute(&config, &out)
        }
        Command::Sweep { batch, densities } => {
            let (mut config, out) = prepare(&batch)?;
            if let Some(d) = densities {
                config.densities = d;
            }
            execute(&config, &out)
        }
        Command::ChannelTable {
            config,
            out,
            bins,
            mean_snr_db,
        } => {
            let base = match config {
                Some(path) => load_config(&path)?,
                None => default_config(),
            };
            let profile = FadingProfile::equal_probability(
                bins.unwrap_or(base.bins),
                db_to_linear(mean_snr_db.unwrap_or(base.mean_snr_db)),
                base.sigma,
            )?;
            emit(&channel_table_csv(&profile), out.as_deref())
        }
        Command::Oracle {
            topology,
            config,
            source,
            out,
        } => {
            let base = match config {
                Some(path) => load_config(&path)?,
                None => default_config(),
            };
            let topo = Topology::from_csv(&std::fs::read_to_string(&topology)?)?;
            let profile = FadingProfile::equal_probability(base.bins, db_to_linear(base.mean_snr_db), base.sigma)?;
            // stationary-average success of every link
            let table = profile.success_table(base.packet_bits());
            let mut mean_success = 0.0;
            for (k, p) in table.iter().enumerate() {
                mean_success += profile.steady_state_probability(k)? * p;
            }
            let n = topo.len();
            let success: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..n).map(|j| if topo.are_neighbors(i, j) { mean_success } else { 0.0 }).collect())
                .collect();
            let (total, tree) = optimal_tree_oracle(&topo, source, &success)?;
            eprintln!("minimum expected transmissions: {total}");
            emit(&tree.to_csv(), out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
