use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};
use wbdoa_cli::error::Result;
use wbdoa_cli::CommonOptions;
use wideband_doa::presets;

/// Wideband direction-of-arrival estimation for uniform linear arrays.
#[derive(Parser)]
#[command(name = "wbdoa", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Increase log detail (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a scenario to a multichannel WAV plus ground-truth timeline.
    Simulate(Common),
    /// Localize sources in a multichannel WAV file, block by block.
    Localize {
        #[command(flatten)]
        common: Common,
        /// Multichannel WAV recording (one channel per microphone).
        #[arg(long)]
        input: PathBuf,
        /// Number of sources to localize (defaults to the configuration).
        #[arg(long)]
        sources: Option<usize>,
    },
    /// Score every algorithm against the scenario's ground truth.
    Evaluate(Common),
    /// Compare estimation time against hist-ESPRIT.
    Compare(Common),
    /// List the built-in presets.
    Presets,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file (see docs/config.md).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in preset; repeat for several, or `all` (evaluate only).
    #[arg(long)]
    preset: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the scenario's random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Algorithms, comma separated: proposed-single, proposed-multi-batch,
    /// proposed-multi-iterative, hist-esprit, css.
    #[arg(long, value_delimiter = ',')]
    algo: Vec<String>,
    /// Override the scenario duration in seconds.
    #[arg(long, conflicts_with = "full_length")]
    duration: Option<f64>,
    /// Use the full 800 s session length.
    #[arg(long)]
    full_length: bool,
}

impl From<Common> for CommonOptions {
    fn from(c: Common) -> Self {
        CommonOptions {
            config: c.config,
            presets: c.preset,
            out: c.out,
            seed: c.seed,
            algorithms: c.algo,
            duration: if c.full_length { Some(presets::FULL_DURATION) } else { c.duration },
        }
    }
}

fn print_written(paths: &[PathBuf]) {
    for p in paths {
        eprintln!("wrote {}", p.display());
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(c) => print_written(&wbdoa_cli::simulate(&c.into())?),
        Command::Localize { common, input, sources } => {
            print_written(&wbdoa_cli::localize(&common.into(), &input, sources)?)
        }
        Command::Evaluate(c) => {
            let (summary, paths) = wbdoa_cli::evaluate(&c.into())?;
            print!("{summary}");
            print_written(&paths);
        }
        Command::Compare(c) => {
            let (table, paths) = wbdoa_cli::compare(&c.into())?;
            print!("{table}");
            print_written(&paths);
        }
        Command::Presets => {
            for name in presets::PRESET_NAMES {
                println!("{name}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
