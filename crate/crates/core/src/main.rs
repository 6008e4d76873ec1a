use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qsched::config::RunConfig;
use qsched::experiment::{self, SweepAxis};
use qsched::model::ModelFamily;
use qsched::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "qsched", version, about = "Hybrid quantum-classical massive MIMO user scheduling")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_parser = ["hybrid", "cnn"])]
    model: Option<String>,

    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a gain-matrix dataset.
    Gen,
    /// Train a policy and write a checkpoint plus train_metrics.csv.
    Train,
    /// Score a checkpoint against oracle, greedy and random schedulers.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Sweep antennas or SNR with common seeds.
    Sweep {
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
    },
    /// Hybrid model vs CNN over SNR points and seeds.
    Compare,
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.system.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(m) = &cli.model {
        cfg.model = m.parse::<ModelFamily>()?;
    }
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli)?;
    match &cli.command {
        Command::Gen => {
            let path = experiment::cmd_gen(&cfg)?;
            println!("{}", path.display());
        }
        Command::Train => {
            let r = experiment::cmd_train(&cfg)?;
            println!("best_epoch={} val_det={} params={}", r.best_epoch, r.val_det, r.param_count);
        }
        Command::Eval { checkpoint } => {
            let r = experiment::cmd_eval(&cfg, checkpoint)?;
            let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_else(|| "n/a".into());
            println!(
                "policy_det={} policy_sto={} oracle={} greedy={} random={}",
                r.mean_det,
                r.mean_sto,
                opt(r.mean_oracle),
                r.mean_greedy,
                opt(r.mean_random)
            );
        }
        Command::Sweep { axis, values } => {
            let axis: SweepAxis = axis.parse()?;
            for r in experiment::cmd_sweep(&cfg, axis, values)? {
                println!("{}={} mean_sumrate={} std_sumrate={}", axis, r.axis_value, r.mean_sumrate, r.std_sumrate);
            }
        }
        Command::Compare => {
            let r = experiment::cmd_compare(&cfg)?;
            for (snr, h, c, rnd) in r.per_snr() {
                println!("snr_db={snr} hybrid={h} cnn={c} random={rnd}");
            }
            println!(
                "hybrid>=cnn in {}/{} cells; parameters hybrid={} cnn={}",
                r.hybrid_wins(),
                r.cells.len(),
                r.hybrid_params,
                r.cnn_params
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    e.exit_code() as u8
}
