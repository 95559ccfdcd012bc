//! Built-in experiment presets: synthetic versions of the three lab
//! experiments (alternating single white source, two competing white
//! sources, two competing talkers), each with a five-microphone ULA at
//! 4.4 cm spacing, 16 kHz sampling and 22-direction diffuse background noise.

use crate::error::{DoaError, Result};
use crate::eval::{Algorithm, AlgorithmSettings, BlockConfig, ExperimentConfig};
use crate::geometry::ArrayGeometry;
use crate::spectral::StftConfig;
use crate::synth::{periodic_intervals, ScenarioConfig, SourceKind, SourceSpec};

pub const SAMPLE_RATE: f64 = 16_000.0;
pub const DEFAULT_DURATION: f64 = 60.0;
/// Length of the full lab recording session, seconds.
pub const FULL_DURATION: f64 = 800.0;
pub const DEFAULT_SEED: u64 = 20_190_512;
pub const BAND: (f64, f64) = (100.0, 3800.0);
pub const SOURCE_DOAS: [f64; 2] = [-45.0, 45.0];

/// Seconds each source of the alternating experiment stays on.
const ALTERNATION_ON: f64 = 2.0;

pub const PRESET_NAMES: [&str; 5] = [
    "exp1-single-white-10db",
    "exp1-single-white-0db",
    "exp2-two-white-10db",
    "exp2-two-white-0db",
    "exp3-two-talkers",
];

pub fn array() -> ArrayGeometry {
    ArrayGeometry::new(5, 0.044, 343.0).expect("valid built-in geometry")
}

/// Builds a preset with the given duration (seconds) and seed.
pub fn preset(name: &str, duration: f64, seed: u64) -> Result<ExperimentConfig> {
    let geom = array();
    let (sources, snr_db, algorithms) = match name {
        "exp1-single-white-10db" | "exp1-single-white-0db" => {
            let period = 2.0 * ALTERNATION_ON;
            let sources = SOURCE_DOAS
                .iter()
                .enumerate()
                .map(|(k, &doa)| {
                    let offset = k as f64 * ALTERNATION_ON;
                    SourceSpec::white(doa).with_activity(periodic_intervals(duration, period, ALTERNATION_ON, offset))
                })
                .collect();
            let snr = if name.ends_with("10db") { 10.0 } else { 0.0 };
            (sources, snr, Algorithm::ALL.to_vec())
        }
        "exp2-two-white-10db" | "exp2-two-white-0db" => {
            let sources = SOURCE_DOAS.iter().map(|&d| SourceSpec::white(d)).collect();
            let snr = if name.ends_with("10db") { 10.0 } else { 0.0 };
            (sources, snr, multi_source_algorithms())
        }
        "exp3-two-talkers" => {
            let sources = SOURCE_DOAS
                .iter()
                .zip([118.0, 205.0])
                .map(|(&doa, f0)| SourceSpec { kind: SourceKind::Harmonic { fundamental: f0 }, ..SourceSpec::white(doa) })
                .collect();
            (sources, 5.0, multi_source_algorithms())
        }
        _ => {
            return Err(DoaError::domain(format!(
                "unknown preset '{name}'; valid presets: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(ExperimentConfig {
        name: name.to_string(),
        scenario: ScenarioConfig::new(geom, sources, snr_db, duration, SAMPLE_RATE, seed),
        stft: StftConfig::standard(SAMPLE_RATE),
        band: BAND,
        blocks: BlockConfig::default(),
        algorithms,
        settings: AlgorithmSettings::default(),
    })
}

pub fn default_preset(name: &str) -> Result<ExperimentConfig> {
    preset(name, DEFAULT_DURATION, DEFAULT_SEED)
}

fn multi_source_algorithms() -> Vec<Algorithm> {
    vec![Algorithm::ProposedMultiBatch, Algorithm::ProposedMultiIterative, Algorithm::HistEsprit, Algorithm::Css]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_validate() {
        for name in PRESET_NAMES {
            let cfg = default_preset(name).unwrap();
            cfg.validate().unwrap();
            assert_eq!(cfg.scenario.geometry.num_sensors(), 5);
            assert_eq!(cfg.scenario.duration, DEFAULT_DURATION);
        }
        assert!(preset("exp4", 1.0, 0).unwrap_err().to_string().contains("exp2-two-white-10db"));
    }

    #[test]
    fn alternating_sources_never_overlap() {
        let cfg = preset("exp1-single-white-10db", 20.0, 1).unwrap();
        assert_eq!(cfg.scenario.max_simultaneous_sources(), 1);
        let truth = cfg.scenario.ground_truth();
        assert_eq!(truth.active_over(0.5, 1.5), Some(vec![-45.0]));
        assert_eq!(truth.active_over(2.5, 3.5), Some(vec![45.0]));
        assert_eq!(truth.active_over(1.5, 2.5), None);
    }

    #[test]
    fn competing_presets_have_two_sources() {
        for name in ["exp2-two-white-10db", "exp3-two-talkers"] {
            let cfg = default_preset(name).unwrap();
            assert_eq!(cfg.scenario.max_simultaneous_sources(), 2);
            assert!(!cfg.algorithms.contains(&Algorithm::ProposedSingle));
        }
    }
}
