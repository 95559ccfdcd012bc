//! Runs a built-in preset and prints its summary and runtime tables.
//!
//! `cargo run --release --example run_preset -- exp2-two-white-10db [seconds]`

use wideband_doa::eval::{compare_runtime, run_experiment, summary_table};
use wideband_doa::presets;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "exp1-single-white-10db".to_string());
    let duration = args.next().map(|s| s.parse()).transpose()?.unwrap_or(presets::DEFAULT_DURATION);
    let cfg = presets::preset(&name, duration, presets::DEFAULT_SEED)?;
    let started = std::time::Instant::now();
    let reports = run_experiment(&cfg)?;
    print!("{}", summary_table(&reports));
    print!("{}", compare_runtime(&reports)?.to_text());
    println!("elapsed {:.1} s", started.elapsed().as_secs_f64());
    Ok(())
}
