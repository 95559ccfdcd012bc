//! Library side of the `wbdoa` command: configuration resolution and the
//! four commands (simulate, localize, evaluate, compare). All outputs are
//! computed before anything is written, and every file is written to a
//! temporary name in the output directory and then renamed into place.

pub mod config;
pub mod error;

use std::io::Write;
use std::path::{Path, PathBuf};

use wideband_doa::audio::{read_wav, write_wav};
use wideband_doa::eval::{
    blocks_csv, compare_runtime, localization_csv, localize_signal, run_experiment, summary_table, trace_csv,
};
use wideband_doa::presets;
use wideband_doa::synth::synthesize_scenario;

use crate::config::{effective, resolve, FileConfig, Overrides, Resolved};
use crate::error::{CliError, Result};

/// Options shared by all commands.
#[derive(Debug, Clone, Default)]
pub struct CommonOptions {
    pub config: Option<PathBuf>,
    /// Presets to run; `all` expands to every built-in preset.
    pub presets: Vec<String>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub algorithms: Vec<String>,
    pub duration: Option<f64>,
}

/// A file to be written once every computation has succeeded.
enum Output {
    Text(PathBuf, String),
    Wav(PathBuf, wideband_doa::MultichannelSignal),
}

impl CommonOptions {
    fn file(&self) -> Result<FileConfig> {
        match &self.config {
            Some(path) => FileConfig::load(path),
            None if self.presets.is_empty() => Err(CliError::Validation("either --config or --preset is required".into())),
            None => Ok(FileConfig::default()),
        }
    }

    fn preset_names(&self) -> Vec<Option<String>> {
        if self.presets.iter().any(|p| p == "all") {
            return presets::PRESET_NAMES.iter().map(|p| Some(p.to_string())).collect();
        }
        if self.presets.is_empty() {
            return vec![None];
        }
        self.presets.iter().cloned().map(Some).collect()
    }

    /// One resolved configuration per selected preset.
    fn resolve_all(&self) -> Result<Vec<Resolved>> {
        let file = self.file()?;
        let algorithms = config::parse_algorithms(&self.algorithms)?;
        self.preset_names()
            .into_iter()
            .map(|preset| {
                let overrides = Overrides { preset, seed: self.seed, duration: self.duration, algorithms: algorithms.clone() };
                resolve(&file, &overrides)
            })
            .collect()
    }

    fn resolve_one(&self) -> Result<Resolved> {
        let mut all = self.resolve_all()?;
        if all.len() != 1 {
            return Err(CliError::Validation("this command takes a single preset".into()));
        }
        Ok(all.remove(0))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn config_output(opts: &CommonOptions, resolved: &Resolved, stem: &str) -> Output {
    let text = format!(
        "# Effective configuration (all defaults resolved)\n{}",
        effective(resolved).to_toml()
    );
    Output::Text(opts.path(&format!("{stem}-config.toml")), text)
}

fn write_outputs(dir: &Path, outputs: Vec<Output>) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut written = Vec::with_capacity(outputs.len());
    for output in outputs {
        let path = match &output {
            Output::Text(p, _) | Output::Wav(p, _) => p.clone(),
        };
        let tmp = tempfile::Builder::new()
            .prefix(".wbdoa-")
            .tempfile_in(dir)
            .map_err(|e| CliError::io(dir, e))?;
        match output {
            Output::Text(_, text) => {
                let mut f = tmp.as_file();
                f.write_all(text.as_bytes()).and_then(|_| f.sync_all()).map_err(|e| CliError::io(tmp.path(), e))?;
            }
            Output::Wav(_, signal) => write_wav(tmp.path(), &signal)?,
        }
        tmp.persist(&path).map_err(|e| CliError::io(&path, e.error))?;
        written.push(path);
    }
    Ok(written)
}

/// Synthesizes the scenario: a P-channel WAV and a `start end doa`
/// ground-truth timeline.
pub fn simulate(opts: &CommonOptions) -> Result<Vec<PathBuf>> {
    let resolved = opts.resolve_one()?;
    let exp = &resolved.experiment;
    let scene = synthesize_scenario(&exp.scenario)?;
    let truth = format!("# start_s end_s doa_deg\n{}", scene.truth.to_text());
    let outputs = vec![
        Output::Wav(opts.path(&format!("{}.wav", exp.name)), scene.signal),
        Output::Text(opts.path(&format!("{}-truth.txt", exp.name)), truth),
        config_output(opts, &resolved, &exp.name),
    ];
    write_outputs(&opts.out, outputs)
}

/// Per-block DOA trace of a recorded WAV file.
pub fn localize(opts: &CommonOptions, input: &Path, sources: Option<usize>) -> Result<Vec<PathBuf>> {
    let mut resolved = opts.resolve_one()?;
    let algorithm = match opts.algorithms.as_slice() {
        [one] => one.trim().parse()?,
        [] => wideband_doa::Algorithm::ProposedMultiBatch,
        _ => return Err(CliError::Validation("localize takes exactly one --algo".into())),
    };
    let signal = read_wav(input)?;
    let exp = &mut resolved.experiment;
    if signal.sample_rate() != exp.stft.sample_rate {
        log::info!("using the input's sample rate {} Hz", signal.sample_rate());
        exp.stft.sample_rate = signal.sample_rate();
        exp.scenario.sample_rate = signal.sample_rate();
    }
    let q = sources.or(resolved.localize_sources).unwrap_or_else(|| exp.scenario.max_simultaneous_sources().max(1));
    resolved.localize_sources = Some(q);
    let exp = &resolved.experiment;
    let (rows, plan) = localize_signal(
        &signal,
        &exp.scenario.geometry,
        &exp.stft,
        exp.band,
        &exp.blocks,
        algorithm,
        q,
        &exp.settings,
    )?;
    log::info!("analysed bins {}..={} with {algorithm}, Q = {q}", plan.bins[0], plan.highest_bin());
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("input").to_string();
    let outputs = vec![
        Output::Text(opts.path(&format!("{stem}-doa.csv")), localization_csv(&rows, q)),
        config_output(opts, &resolved, &stem),
    ];
    write_outputs(&opts.out, outputs)
}

/// MAE/SDE evaluation of every selected preset. Returns the summary tables
/// and the written paths.
pub fn evaluate(opts: &CommonOptions) -> Result<(String, Vec<PathBuf>)> {
    let mut outputs = Vec::new();
    let mut summaries = String::new();
    for resolved in opts.resolve_all()? {
        let exp = &resolved.experiment;
        log::info!("evaluating {}", exp.name);
        let reports = run_experiment(exp)?;
        let summary = summary_table(&reports);
        summaries.push_str(&summary);
        summaries.push('\n');
        outputs.push(Output::Text(opts.path(&format!("{}-blocks.csv", exp.name)), blocks_csv(&reports)));
        outputs.push(Output::Text(opts.path(&format!("{}-trace.csv", exp.name)), trace_csv(&reports)));
        outputs.push(Output::Text(opts.path(&format!("{}-summary.txt", exp.name)), summary));
        outputs.push(config_output(opts, &resolved, &exp.name));
    }
    Ok((summaries, write_outputs(&opts.out, outputs)?))
}

/// Estimation-time comparison relative to hist-ESPRIT.
pub fn compare(opts: &CommonOptions) -> Result<(String, Vec<PathBuf>)> {
    let resolved = opts.resolve_one()?;
    let exp = &resolved.experiment;
    let reports = run_experiment(exp)?;
    let table = format!("scenario: {}\n{}", exp.name, compare_runtime(&reports)?.to_text());
    let outputs = vec![
        Output::Text(opts.path(&format!("{}-runtime.txt", exp.name)), table.clone()),
        config_output(opts, &resolved, &exp.name),
    ];
    Ok((table, write_outputs(&opts.out, outputs)?))
}
