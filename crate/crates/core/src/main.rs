use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bec_delay::harness::commands::{self, Verdict};
use bec_delay::harness::config::parse_override_args;
use bec_delay::harness::output;
use bec_delay::harness::ExperimentConfig;
use bec_delay::Result;

/// Delay distributions of retransmission protocols over Markov erasure channels.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Field overrides mirroring config paths, e.g. `--protocol.beta 0.3`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "OVERRIDES")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::load(&self.config, &parse_override_args(&self.overrides)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Analytical rate report; writes rates.json.
    Rates(ConfigArgs),
    /// Monte Carlo batch; writes trials.csv and manifest.json.
    Simulate(ConfigArgs),
    /// Tail fits of a trial table against theory; writes estimate.json.
    Estimate {
        /// Trial table; defaults to trials.csv in the run directory.
        #[arg(long)]
        trials: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Full pipeline for one of the worked examples.
    Reproduce {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=3))]
        example: u8,
        /// Overrides of the built-in example config.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "OVERRIDES")]
        overrides: Vec<String>,
    },
    /// Throughput against the maximum codeword length.
    Throughput(ConfigArgs),
}

fn run(cli: Cli) -> Result<Verdict> {
    match cli.command {
        Command::Rates(args) => {
            let cfg = args.load()?;
            let report = commands::write_rates(&cfg, &cfg.run_dir())?;
            print!("{}", commands::rates_table(&cfg, &report));
            println!("wrote {}", cfg.run_dir().join("rates.json").display());
            Ok(Verdict::NotApplicable)
        }
        Command::Simulate(args) => {
            let cfg = args.load()?;
            let dir = cfg.run_dir();
            let batch = commands::simulate_into(&cfg, &dir)?;
            println!(
                "{} trials, {} censored ({:.3}%), {:.2}s",
                batch.records.len(),
                batch.censored,
                100.0 * batch.censored_fraction(),
                batch.wall_time.as_secs_f64()
            );
            println!("wrote {}", dir.display());
            Ok(Verdict::NotApplicable)
        }
        Command::Estimate { trials, cfg } => {
            let cfg = cfg.load()?;
            let path = trials.unwrap_or_else(|| cfg.run_dir().join("trials.csv"));
            let records = output::read_trials(&path)?;
            let dir = path.parent().map(PathBuf::from).unwrap_or_default();
            let est = commands::estimate_into(&cfg, &records, &dir)?;
            print_checks(&est.report.checks);
            for n in &est.report.notes {
                println!("note: {n}");
            }
            println!("wrote {}", dir.join("estimate.json").display());
            Ok(est.report.verdict)
        }
        Command::Reproduce { example, overrides } => {
            let (dir, summary) = commands::reproduce(example, &parse_override_args(&overrides)?)?;
            for cell in &summary.cells {
                println!("[{}] {:?}", cell.label, cell.report.verdict);
                print_checks(&cell.report.checks);
            }
            print_checks(&summary.checks);
            println!("wrote {}", dir.display());
            Ok(summary.verdict)
        }
        Command::Throughput(args) => {
            let cfg = args.load()?;
            let report = commands::throughput(&cfg)?;
            for r in &report.rows {
                println!("b = {:>5}  delta_hat = {:.6e}", r.b, r.delta_hat);
            }
            println!("slope of -ln delta_hat: {:.6e}", report.slope);
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            print_checks(&report.checks);
            commands::write_throughput(&cfg.run_dir(), &report)?;
            println!("wrote {}", cfg.run_dir().display());
            Ok(report.verdict)
        }
    }
}

fn print_checks(checks: &[commands::Check]) {
    for c in checks {
        println!(
            "  {:<40} {:>14.6e}  band [{:.6e}, {:.6e}]  {:?}",
            c.name, c.empirical, c.band[0], c.band[1], c.verdict
        );
    }
}

fn main() -> ExitCode {
    // clap reports usage errors with code 2, which is reserved for FAIL here
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(Verdict::Fail) => {
            println!("FAIL");
            ExitCode::from(2)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
