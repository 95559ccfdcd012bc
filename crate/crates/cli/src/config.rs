//! TOML configuration files. Every key is optional and overrides the preset
//! named by `--preset` or the file's own `preset` key; without a preset the
//! file must list its sources. See `docs/config.md` for the grammar.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wideband_doa::baselines::{CssConfig, HistogramConfig, InitialDoas};
use wideband_doa::esprit::Solver;
use wideband_doa::eval::{AlgorithmSettings, BlockConfig};
use wideband_doa::subspace::{Basis, Reconstruction, WidebandOptions};
use wideband_doa::synth::{periodic_intervals, Activity, Interval, SourceKind};
use wideband_doa::{presets, Algorithm, ArrayGeometry, ExperimentConfig, ScenarioConfig, SourceSpec, StftConfig, Window};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub array: ArraySection,
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub stft: StftSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub histogram: HistogramSection,
    #[serde(default)]
    pub css: CssSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sensors: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sound_speed: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diffuse_directions: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sensor_noise: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sensor_noise_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sources: Option<Vec<SourceEntry>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKindName {
    White,
    Harmonic,
    Wav,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceEntry {
    pub kind: SourceKindName,
    pub doa: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fundamental: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Explicit `[start, end]` activity intervals in seconds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intervals: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Schedule>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub period: f64,
    pub on: f64,
    #[serde(default)]
    pub offset: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frame_length: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hop: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<WindowName>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowName {
    Hann,
    Rectangular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverName {
    Ls,
    Tls,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisName {
    Aligned,
    Eigen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReconstructionName {
    Signal,
    Full,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    /// `[low, high]` in Hz.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub band: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block_frames: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block_hop: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub algorithms: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis: Option<BasisName>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reconstruction: Option<ReconstructionName>,
    /// Number of sources to localize in an unlabelled recording.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sources: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bin_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_peak_separation: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CssSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_resolution: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_frequency: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_bins: Option<usize>,
    /// Fixed focusing directions; absent means automatic initialization.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_doas: Option<Vec<f64>>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("invalid configuration: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration always serializes")
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub duration: Option<f64>,
    pub algorithms: Vec<Algorithm>,
}

/// A fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub experiment: ExperimentConfig,
    /// Q for `localize`; defaults to the scenario's simultaneous source count.
    pub localize_sources: Option<usize>,
}

pub fn parse_algorithms(names: &[String]) -> Result<Vec<Algorithm>> {
    names.iter().map(|n| n.trim().parse::<Algorithm>().map_err(CliError::from)).collect()
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

/// Layers `file` and `cli` over the selected preset (or a bare default
/// experiment) and validates the result.
pub fn resolve(file: &FileConfig, cli: &Overrides) -> Result<Resolved> {
    let preset_name = cli.preset.as_deref().or(file.preset.as_deref());
    let duration = cli.duration.or(file.scenario.duration).unwrap_or(presets::DEFAULT_DURATION);
    let seed = cli.seed.or(file.scenario.seed).unwrap_or(presets::DEFAULT_SEED);
    let mut exp = match preset_name {
        Some(name) => presets::preset(name, duration, seed)?,
        None => {
            if file.scenario.sources.is_none() {
                return Err(invalid("no preset selected and the configuration lists no [[scenario.sources]]"));
            }
            bare(duration, seed)
        }
    };
    if let Some(name) = &file.name {
        exp.name = name.clone();
    }

    let a = &file.array;
    let g = exp.scenario.geometry;
    exp.scenario.geometry = ArrayGeometry::new(
        a.sensors.unwrap_or(g.num_sensors()),
        a.spacing.unwrap_or(g.spacing()),
        a.sound_speed.unwrap_or(g.sound_speed()),
    )?;

    let s = &file.scenario;
    let sc = &mut exp.scenario;
    if let Some(v) = s.sample_rate {
        sc.sample_rate = v;
    }
    if let Some(v) = s.snr_db {
        sc.snr_db = v;
    }
    if let Some(v) = s.diffuse_directions {
        sc.diffuse_directions = v;
    }
    if let Some(v) = s.sensor_noise_db {
        sc.sensor_noise_db = Some(v);
    }
    if s.sensor_noise == Some(false) {
        sc.sensor_noise_db = None;
    } else if s.sensor_noise == Some(true) && sc.sensor_noise_db.is_none() {
        sc.sensor_noise_db = Some(wideband_doa::synth::DEFAULT_SENSOR_NOISE_DB);
    }
    let explicit_sources = s.sources.is_some();
    if let Some(entries) = &s.sources {
        sc.sources = entries.iter().map(|e| source_spec(e, duration)).collect::<Result<_>>()?;
    }

    let st = &file.stft;
    exp.stft = StftConfig {
        frame_length: st.frame_length.unwrap_or(exp.stft.frame_length),
        hop: st.hop.unwrap_or(exp.stft.hop),
        window: match st.window {
            Some(WindowName::Hann) => Window::Hann,
            Some(WindowName::Rectangular) => Window::Rectangular,
            None => exp.stft.window,
        },
        sample_rate: exp.scenario.sample_rate,
    };

    let an = &file.analysis;
    if let Some([lo, hi]) = an.band {
        exp.band = (lo, hi);
    }
    exp.blocks = BlockConfig {
        frames: an.block_frames.unwrap_or(exp.blocks.frames),
        hop: an.block_hop.unwrap_or(exp.blocks.hop),
    };
    if !cli.algorithms.is_empty() {
        exp.algorithms = cli.algorithms.clone();
    } else if let Some(names) = &an.algorithms {
        exp.algorithms = parse_algorithms(names)?;
    } else if preset_name.is_none() || explicit_sources {
        exp.algorithms = default_algorithms(exp.scenario.max_simultaneous_sources());
    }
    let settings = &mut exp.settings;
    settings.solver = match an.solver {
        Some(SolverName::Ls) => Solver::LeastSquares,
        Some(SolverName::Tls) => Solver::TotalLeastSquares,
        None => settings.solver,
    };
    settings.wideband = WidebandOptions {
        basis: match an.basis {
            Some(BasisName::Aligned) => Basis::Aligned,
            Some(BasisName::Eigen) => Basis::Eigen,
            None => settings.wideband.basis,
        },
        reconstruction: match an.reconstruction {
            Some(ReconstructionName::Signal) => Reconstruction::SignalOnly,
            Some(ReconstructionName::Full) => Reconstruction::Full,
            None => settings.wideband.reconstruction,
        },
    };
    let h = &file.histogram;
    settings.histogram = HistogramConfig {
        bin_width: h.bin_width.unwrap_or(settings.histogram.bin_width),
        min_peak_separation: h.min_peak_separation.unwrap_or(settings.histogram.min_peak_separation),
    };
    let c = &file.css;
    settings.css = CssConfig {
        reference_frequency: c.reference_frequency.or(settings.css.reference_frequency),
        grid_resolution: c.grid_resolution.unwrap_or(settings.css.grid_resolution),
        initial_doas: match &c.initial_doas {
            Some(d) => InitialDoas::Fixed(d.clone()),
            None => settings.css.initial_doas.clone(),
        },
        init_bins: c.init_bins.unwrap_or(settings.css.init_bins),
    };

    exp.validate()?;
    if let Some(q) = an.sources {
        exp.scenario.geometry.check_source_count(q)?;
    }
    Ok(Resolved { experiment: exp, localize_sources: an.sources })
}

fn bare(duration: f64, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        name: "custom".to_string(),
        scenario: ScenarioConfig::new(presets::array(), Vec::new(), 10.0, duration, presets::SAMPLE_RATE, seed),
        stft: StftConfig::standard(presets::SAMPLE_RATE),
        band: presets::BAND,
        blocks: BlockConfig::default(),
        algorithms: Vec::new(),
        settings: AlgorithmSettings::default(),
    }
}

fn default_algorithms(q: usize) -> Vec<Algorithm> {
    Algorithm::ALL.into_iter().filter(|a| a.supports(q.max(1))).collect()
}

fn source_spec(e: &SourceEntry, duration: f64) -> Result<SourceSpec> {
    let kind = match e.kind {
        SourceKindName::White => SourceKind::WhiteNoise,
        SourceKindName::Harmonic => SourceKind::Harmonic {
            fundamental: e.fundamental.ok_or_else(|| invalid("harmonic source needs `fundamental`"))?,
        },
        SourceKindName::Wav => SourceKind::WavFile(e.path.clone().ok_or_else(|| invalid("wav source needs `path`"))?),
    };
    let activity = match (&e.intervals, &e.schedule) {
        (Some(_), Some(_)) => return Err(invalid("a source takes either `intervals` or `schedule`, not both")),
        (Some(iv), None) => Activity::Intervals(iv.iter().map(|&[s, t]| Interval::new(s, t)).collect()),
        (None, Some(s)) => Activity::Intervals(periodic_intervals(duration, s.period, s.on, s.offset)),
        (None, None) => Activity::Always,
    };
    Ok(SourceSpec { kind, doa: e.doa, gain: e.gain.unwrap_or(1.0), activity })
}

/// The fully explicit file form of a resolved configuration, suitable for
/// echoing next to the outputs; resolving it again yields the same values.
pub fn effective(resolved: &Resolved) -> FileConfig {
    let exp = &resolved.experiment;
    let sc = &exp.scenario;
    let g = sc.geometry;
    let sources = sc
        .sources
        .iter()
        .map(|s| {
            let (kind, fundamental, path) = match &s.kind {
                SourceKind::WhiteNoise => (SourceKindName::White, None, None),
                SourceKind::Harmonic { fundamental } => (SourceKindName::Harmonic, Some(*fundamental), None),
                SourceKind::WavFile(p) => (SourceKindName::Wav, None, Some(p.clone())),
            };
            let intervals = match &s.activity {
                Activity::Always => None,
                Activity::Intervals(v) => Some(v.iter().map(|iv| [iv.start, iv.end]).collect()),
            };
            SourceEntry { kind, doa: s.doa, gain: Some(s.gain), fundamental, path, intervals, schedule: None }
        })
        .collect();
    let st = &exp.settings;
    FileConfig {
        preset: None,
        name: Some(exp.name.clone()),
        array: ArraySection {
            sensors: Some(g.num_sensors()),
            spacing: Some(g.spacing()),
            sound_speed: Some(g.sound_speed()),
        },
        scenario: ScenarioSection {
            duration: Some(sc.duration),
            sample_rate: Some(sc.sample_rate),
            snr_db: Some(sc.snr_db),
            seed: Some(sc.rng_seed),
            diffuse_directions: Some(sc.diffuse_directions),
            sensor_noise: Some(sc.sensor_noise_db.is_some()),
            sensor_noise_db: sc.sensor_noise_db,
            sources: Some(sources),
        },
        stft: StftSection {
            frame_length: Some(exp.stft.frame_length),
            hop: Some(exp.stft.hop),
            window: Some(match exp.stft.window {
                Window::Hann => WindowName::Hann,
                Window::Rectangular => WindowName::Rectangular,
            }),
        },
        analysis: AnalysisSection {
            band: Some([exp.band.0, exp.band.1]),
            block_frames: Some(exp.blocks.frames),
            block_hop: Some(exp.blocks.hop),
            algorithms: Some(exp.algorithms.iter().map(|a| a.name().to_string()).collect()),
            solver: Some(match st.solver {
                Solver::LeastSquares => SolverName::Ls,
                Solver::TotalLeastSquares => SolverName::Tls,
            }),
            basis: Some(match st.wideband.basis {
                Basis::Aligned => BasisName::Aligned,
                Basis::Eigen => BasisName::Eigen,
            }),
            reconstruction: Some(match st.wideband.reconstruction {
                Reconstruction::SignalOnly => ReconstructionName::Signal,
                Reconstruction::Full => ReconstructionName::Full,
            }),
            sources: resolved.localize_sources,
        },
        histogram: HistogramSection {
            bin_width: Some(st.histogram.bin_width),
            min_peak_separation: Some(st.histogram.min_peak_separation),
        },
        css: CssSection {
            grid_resolution: Some(st.css.grid_resolution),
            reference_frequency: st.css.reference_frequency,
            init_bins: Some(st.css.init_bins),
            initial_doas: match &st.css.initial_doas {
                InitialDoas::Auto => None,
                InitialDoas::Fixed(d) => Some(d.clone()),
            },
        },
    }
}
