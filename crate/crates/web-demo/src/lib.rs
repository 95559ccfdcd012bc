//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Three operations are exposed: localizing a synthetic scene with the
//! proposed method and both baselines, showing what subspace rotation does
//! to a steering vector's phases, and the array's spatial-aliasing curve.
//! Each export wraps a plain Rust function so that the logic is testable
//! off the browser.

use wasm_bindgen::prelude::*;
use wideband_doa::baselines::{css_localize, hist_esprit, CssConfig, HistogramConfig};
use wideband_doa::esprit::{wideband_esprit_multi, wideband_esprit_single, AccumulationMode, Solver};
use wideband_doa::geometry::AliasingLimit;
use wideband_doa::spectral::{estimate_covariances_for_bins, plan_band, stft};
use wideband_doa::subspace::rotate_phases;
use wideband_doa::synth::synthesize_scenario;
use wideband_doa::{presets, ArrayGeometry, ScenarioConfig, SourceSpec, StftConfig};

/// Estimates for one synthetic scene.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct SceneResult {
    proposed: Vec<f64>,
    hist: Vec<f64>,
    css: Vec<f64>,
    css_grid: Vec<f64>,
    css_spectrum_db: Vec<f64>,
    histogram: Vec<f64>,
    histogram_bin_width: f64,
    bins_used: usize,
}

#[wasm_bindgen]
impl SceneResult {
    #[wasm_bindgen(getter)]
    pub fn proposed(&self) -> Vec<f64> {
        self.proposed.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn hist(&self) -> Vec<f64> {
        self.hist.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn css(&self) -> Vec<f64> {
        self.css.clone()
    }
    /// Scan angles of the CSS spatial spectrum, degrees.
    #[wasm_bindgen(getter = cssGrid)]
    pub fn css_grid(&self) -> Vec<f64> {
        self.css_grid.clone()
    }
    /// CSS spatial spectrum in dB relative to its maximum.
    #[wasm_bindgen(getter = cssSpectrumDb)]
    pub fn css_spectrum_db(&self) -> Vec<f64> {
        self.css_spectrum_db.clone()
    }
    /// hist-ESPRIT counts per bin, starting at -90°.
    #[wasm_bindgen(getter)]
    pub fn histogram(&self) -> Vec<f64> {
        self.histogram.clone()
    }
    #[wasm_bindgen(getter = histogramBinWidth)]
    pub fn histogram_bin_width(&self) -> f64 {
        self.histogram_bin_width
    }
    #[wasm_bindgen(getter = binsUsed)]
    pub fn bins_used(&self) -> usize {
        self.bins_used
    }
}

/// Synthesizes `seconds` of one or two white sources in diffuse noise with
/// the paper-style array and localizes them over the whole clip.
pub fn run_scene(doas: &[f64], snr_db: f64, seconds: f64, seed: u64) -> Result<SceneResult, String> {
    if doas.is_empty() || doas.len() > 2 {
        return Err(format!("the demo takes one or two sources, got {}", doas.len()));
    }
    if !(seconds > 0.0 && seconds <= 10.0) {
        return Err(format!("clip length must be in (0, 10] s, got {seconds}"));
    }
    let geom = presets::array();
    let sources = doas.iter().map(|&d| SourceSpec::white(d)).collect();
    let scenario = ScenarioConfig::new(geom, sources, snr_db, seconds, presets::SAMPLE_RATE, seed);
    let scene = synthesize_scenario(&scenario).map_err(|e| e.to_string())?;
    let cfg = StftConfig::standard(presets::SAMPLE_RATE);
    let plan = plan_band(&geom, &cfg, presets::BAND.0, presets::BAND.1).map_err(|e| e.to_string())?;
    let spec = stft(&scene.signal, &cfg).map_err(|e| e.to_string())?;
    let covs = estimate_covariances_for_bins(&spec, 0..spec.num_frames(), &plan.bins).map_err(|e| e.to_string())?;

    let q = doas.len();
    let f_ref = cfg.bin_frequency(plan.highest_bin());
    let proposed = if q == 1 {
        wideband_esprit_single(&covs, &geom, f_ref, Solver::default())
    } else {
        wideband_esprit_multi(&covs, q, &geom, AccumulationMode::Batch, Solver::default())
    }
    .map_err(|e| e.to_string())?
    .doas;
    let hist_cfg = HistogramConfig::default();
    let hist = hist_esprit(&covs, q, &geom, &hist_cfg).map_err(|e| e.to_string())?;
    let css = css_localize(&covs, q, &geom, &CssConfig::default()).map_err(|e| e.to_string())?;
    let peak = css.spectrum.iter().copied().fold(f64::MIN_POSITIVE, f64::max);
    Ok(SceneResult {
        proposed,
        hist: hist.doas,
        css: css.doas,
        css_grid: css.grid,
        css_spectrum_db: css.spectrum.iter().map(|v| 10.0 * (v / peak).log10()).collect(),
        histogram: hist.histogram.iter().map(|&c| c as f64).collect(),
        histogram_bin_width: hist_cfg.bin_width,
        bins_used: covs.len(),
    })
}

#[wasm_bindgen(js_name = localizeScene)]
pub fn localize_scene(doa1: f64, doa2: Option<f64>, snr_db: f64, seconds: f64, seed: u32) -> Result<SceneResult, JsError> {
    let doas: Vec<f64> = std::iter::once(doa1).chain(doa2).collect();
    run_scene(&doas, snr_db, seconds, seed as u64).map_err(|e| JsError::new(&e))
}

/// Unwrapped phases (radians) of the steering vector at `f_source`, of that
/// vector rotated to `f_ref`, and of the true steering vector at `f_ref`,
/// concatenated as three blocks of P values.
pub fn rotation_phases(doa: f64, f_source: f64, f_ref: f64) -> Result<Vec<f64>, String> {
    if !(f_source > 0.0 && f_ref > 0.0) {
        return Err("frequencies must be positive".into());
    }
    let geom = presets::array();
    let steer = |f: f64| geom.steering_matrix(f, &[doa]).map(|m| m.into_entries()).map_err(|e| e.to_string());
    let source = steer(f_source)?;
    let rotated = rotate_phases(&source, f_ref / f_source);
    let target = steer(f_ref)?;
    let mut out = Vec::with_capacity(3 * geom.num_sensors());
    for m in [&source, &rotated, &target] {
        let mut phase = 0.0;
        for p in 0..m.nrows() {
            phase = if p == 0 { m[(0, 0)].arg() } else { phase + (m[(p, 0)] * m[(p - 1, 0)].conj()).arg() };
            out.push(phase);
        }
    }
    Ok(out)
}

#[wasm_bindgen(js_name = rotationDemo)]
pub fn rotation_demo(doa: f64, f_source: f64, f_ref: f64) -> Result<Vec<f64>, JsError> {
    rotation_phases(doa, f_source, f_ref).map_err(|e| JsError::new(&e))
}

/// Alias-free upper frequency (Hz) for DOAs 1°..=90° of a ULA with the given
/// spacing and sound speed; broadside is unbounded and omitted.
pub fn aliasing_limits(spacing: f64, sound_speed: f64) -> Result<Vec<f64>, String> {
    let geom = ArrayGeometry::new(2, spacing, sound_speed).map_err(|e| e.to_string())?;
    Ok((1..=90)
        .map(|d| match geom.aliasing_frequency(d as f64) {
            AliasingLimit::Finite(f) => f,
            AliasingLimit::Unbounded => f64::INFINITY,
        })
        .collect())
}

#[wasm_bindgen(js_name = aliasingCurve)]
pub fn aliasing_curve(spacing: f64, sound_speed: f64) -> Result<Vec<f64>, JsError> {
    aliasing_limits(spacing, sound_speed).map_err(|e| JsError::new(&e))
}
