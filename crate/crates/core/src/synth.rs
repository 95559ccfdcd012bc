//! Scenario synthesis: far-field plane-wave sources, diffuse background noise
//! and SNR-controlled mixing.
//!
//! All randomness is derived from the scenario seed through a ChaCha stream,
//! so identical configurations give bit-identical signals.

use std::f64::consts::PI;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::audio;
use crate::error::{DoaError, Result};
use crate::geometry::{check_angle, ArrayGeometry};

/// Loudspeaker count used to emulate the diffuse field.
pub const DEFAULT_DIFFUSE_DIRECTIONS: usize = 22;

/// Level of the mutually uncorrelated sensor self-noise relative to the
/// diffuse field.
pub const DEFAULT_SENSOR_NOISE_DB: f64 = -40.0;

/// P-channel real signal with a common sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelSignal {
    channels: Vec<Vec<f64>>,
    sample_rate: f64,
}

impl MultichannelSignal {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(DoaError::domain(format!("sample rate must be positive, got {sample_rate}")));
        }
        if channels.is_empty() {
            return Err(DoaError::domain("signal needs at least one channel"));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(DoaError::domain("all channels must have the same length"));
        }
        if channels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(DoaError::domain("signal contains non-finite samples"));
        }
        Ok(Self { channels, sample_rate })
    }

    pub fn zeros(num_channels: usize, len: usize, sample_rate: f64) -> Result<Self> {
        Self::new(vec![vec![0.0; len]; num_channels.max(1)], sample_rate)
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }

    pub fn channel(&self, p: usize) -> &[f64] {
        &self.channels[p]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// Mean square value of channel `p`.
    pub fn channel_power(&self, p: usize) -> f64 {
        let c = &self.channels[p];
        if c.is_empty() {
            0.0
        } else {
            c.iter().map(|v| v * v).sum::<f64>() / c.len() as f64
        }
    }

    fn add_scaled(&mut self, other: &MultichannelSignal, scale: f64) {
        for (dst, src) in self.channels.iter_mut().zip(&other.channels) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    fn scale(&mut self, factor: f64) {
        self.channels.iter_mut().flatten().for_each(|v| *v *= factor);
    }
}

/// Half-open time interval in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn contains_span(&self, start: f64, end: f64) -> bool {
        self.start <= start && end <= self.end
    }

    pub fn overlaps(&self, start: f64, end: f64) -> bool {
        self.start < end && start < self.end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceKind {
    WhiteNoise,
    /// Mono WAV file (16-bit PCM or 32-bit float), resampled to the scenario
    /// rate and looped to cover the duration.
    WavFile(PathBuf),
    /// Synthetic voiced-speech stand-in: a harmonic series on a slowly gliding
    /// fundamental with a syllable-rate amplitude envelope. Spectrally sparse
    /// like real talkers, with no corpus needed.
    Harmonic { fundamental: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Activity {
    Always,
    Intervals(Vec<Interval>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub kind: SourceKind,
    pub doa: f64,
    pub gain: f64,
    pub activity: Activity,
}

impl SourceSpec {
    pub fn white(doa: f64) -> Self {
        Self { kind: SourceKind::WhiteNoise, doa, gain: 1.0, activity: Activity::Always }
    }

    pub fn with_activity(mut self, intervals: Vec<Interval>) -> Self {
        self.activity = Activity::Intervals(intervals);
        self
    }

    fn intervals(&self, duration: f64) -> Vec<Interval> {
        match &self.activity {
            Activity::Always => vec![Interval::new(0.0, duration)],
            Activity::Intervals(v) => v.clone(),
        }
    }

    fn is_active(&self, t: f64, duration: f64) -> bool {
        self.intervals(duration).iter().any(|iv| iv.start <= t && t < iv.end)
    }
}

/// Alternating on/off schedule: active for `on` seconds every `period`
/// seconds starting at `offset`, clipped to `duration`.
pub fn periodic_intervals(duration: f64, period: f64, on: f64, offset: f64) -> Vec<Interval> {
    let mut out = Vec::new();
    if period <= 0.0 || on <= 0.0 {
        return out;
    }
    let mut start = offset;
    while start < duration {
        let end = (start + on).min(duration);
        if end > start.max(0.0) {
            out.push(Interval::new(start.max(0.0), end));
        }
        start += period;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub geometry: ArrayGeometry,
    pub sources: Vec<SourceSpec>,
    pub snr_db: f64,
    pub duration: f64,
    pub sample_rate: f64,
    pub rng_seed: u64,
    pub diffuse_directions: usize,
    /// Sensor self-noise level relative to the diffuse field, or `None` to
    /// disable it.
    pub sensor_noise_db: Option<f64>,
}

impl ScenarioConfig {
    pub fn new(geometry: ArrayGeometry, sources: Vec<SourceSpec>, snr_db: f64, duration: f64, sample_rate: f64, rng_seed: u64) -> Self {
        Self {
            geometry,
            sources,
            snr_db,
            duration,
            sample_rate,
            rng_seed,
            diffuse_directions: DEFAULT_DIFFUSE_DIRECTIONS,
            sensor_noise_db: Some(DEFAULT_SENSOR_NOISE_DB),
        }
    }

    pub fn num_samples(&self) -> usize {
        (self.duration * self.sample_rate).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(DoaError::domain(format!("sample rate must be positive, got {}", self.sample_rate)));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(DoaError::domain(format!("duration must be positive, got {}", self.duration)));
        }
        if !self.snr_db.is_finite() {
            return Err(DoaError::domain("SNR must be finite"));
        }
        if self.diffuse_directions < 8 {
            return Err(DoaError::domain(format!(
                "diffuse field needs at least 8 directions, got {}",
                self.diffuse_directions
            )));
        }
        for (i, src) in self.sources.iter().enumerate() {
            check_angle(src.doa).map_err(|e| DoaError::domain(format!("source {i}: {e}")))?;
            if !(src.gain > 0.0 && src.gain.is_finite()) {
                return Err(DoaError::domain(format!("source {i}: gain must be positive, got {}", src.gain)));
            }
            if let SourceKind::Harmonic { fundamental } = src.kind {
                if !(fundamental > 0.0 && fundamental < self.sample_rate / 2.0) {
                    return Err(DoaError::domain(format!("source {i}: fundamental {fundamental} Hz out of range")));
                }
            }
            if let Activity::Intervals(ivs) = &src.activity {
                let mut sorted = ivs.clone();
                sorted.sort_by(|a, b| a.start.total_cmp(&b.start));
                for iv in &sorted {
                    if !(iv.start >= 0.0 && iv.end > iv.start && iv.end <= self.duration + 1e-9) {
                        return Err(DoaError::domain(format!(
                            "source {i}: activity interval [{}, {}) not inside [0, {}]",
                            iv.start, iv.end, self.duration
                        )));
                    }
                }
                if sorted.windows(2).any(|w| w[1].start < w[0].end) {
                    return Err(DoaError::domain(format!("source {i}: activity intervals overlap")));
                }
            }
        }
        let simultaneous = self.max_simultaneous_sources();
        if simultaneous >= self.geometry.num_sensors() {
            return Err(DoaError::domain(format!(
                "{simultaneous} simultaneously active sources need more than {} sensors",
                self.geometry.num_sensors()
            )));
        }
        Ok(())
    }

    /// Largest number of sources active at the same instant.
    pub fn max_simultaneous_sources(&self) -> usize {
        let mut edges: Vec<f64> = vec![0.0];
        for src in &self.sources {
            for iv in src.intervals(self.duration) {
                edges.push(iv.start);
            }
        }
        edges
            .iter()
            .map(|&t| self.sources.iter().filter(|s| s.is_active(t, self.duration)).count())
            .max()
            .unwrap_or(0)
    }

    /// Ground-truth timeline: one segment per source activity interval.
    pub fn ground_truth(&self) -> GroundTruth {
        let mut segments: Vec<TruthSegment> = self
            .sources
            .iter()
            .flat_map(|s| s.intervals(self.duration).into_iter().map(move |iv| TruthSegment { interval: iv, doa: s.doa }))
            .collect();
        segments.sort_by(|a, b| a.interval.start.total_cmp(&b.interval.start).then(a.doa.total_cmp(&b.doa)));
        GroundTruth { segments }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthSegment {
    pub interval: Interval,
    pub doa: f64,
}

/// Which directions are active when.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub segments: Vec<TruthSegment>,
}

impl GroundTruth {
    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Sorted directions of the sources active throughout `[start, end)`.
    /// Returns `None` when no source is active or when the active set changes
    /// inside the span (partially covered segments).
    pub fn active_over(&self, start: f64, end: f64) -> Option<Vec<f64>> {
        let mut doas = Vec::new();
        for seg in &self.segments {
            if seg.interval.contains_span(start, end) {
                doas.push(seg.doa);
            } else if seg.interval.overlaps(start, end) {
                return None;
            }
        }
        if doas.is_empty() {
            return None;
        }
        doas.sort_by(f64::total_cmp);
        Some(doas)
    }

    /// One `start end doa` line per segment.
    pub fn to_text(&self) -> String {
        self.segments
            .iter()
            .map(|s| format!("{} {} {}\n", s.interval.start, s.interval.end, s.doa))
            .collect()
    }
}

/// Synthesized scenario: the microphone signals and what produced them.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub signal: MultichannelSignal,
    pub truth: GroundTruth,
}

/// Delays `source` to every sensor of the array for a plane wave from
/// `doa_deg`. The fractional delay is applied as a linear phase on the
/// full-length DFT, so it is exact for the periodic extension of the input.
pub fn apply_farfield_propagation(source: &[f64], geom: &ArrayGeometry, doa_deg: f64, sample_rate: f64) -> Result<MultichannelSignal> {
    if source.is_empty() {
        return Err(DoaError::domain("cannot propagate an empty signal"));
    }
    check_angle(doa_deg)?;
    let n = source.len();
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    let mut spectrum: Vec<Complex64> = source.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    forward.process(&mut spectrum);

    let mut channels = Vec::with_capacity(geom.num_sensors());
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for p in 0..geom.num_sensors() {
        let delay = geom.delay(p, doa_deg);
        if delay == 0.0 {
            channels.push(source.to_vec());
            continue;
        }
        for (k, (dst, &x)) in buf.iter_mut().zip(&spectrum).enumerate() {
            // Signed bin frequency so the phase ramp is odd-symmetric.
            let signed = if 2 * k <= n { k as f64 } else { k as f64 - n as f64 };
            let freq = signed * sample_rate / n as f64;
            *dst = x * Complex64::from_polar(1.0, -2.0 * PI * freq * delay);
        }
        inverse.process(&mut buf);
        channels.push(buf.iter().map(|z| z.re / n as f64).collect());
    }
    MultichannelSignal::new(channels, sample_rate)
}

fn white_noise(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Sum of `num_directions` independent white plane waves from equally
/// spaced directions covering [-90°, 90°], scaled to unit mean power per
/// channel.
pub fn generate_diffuse_noise(
    geom: &ArrayGeometry,
    duration: f64,
    sample_rate: f64,
    num_directions: usize,
    seed: u64,
) -> Result<MultichannelSignal> {
    if num_directions < 8 {
        return Err(DoaError::domain(format!("diffuse field needs at least 8 directions, got {num_directions}")));
    }
    let len = (duration * sample_rate).round() as usize;
    if len == 0 {
        return Err(DoaError::domain("diffuse noise duration is shorter than one sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut field = MultichannelSignal::zeros(geom.num_sensors(), len, sample_rate)?;
    for i in 0..num_directions {
        let doa = -90.0 + 180.0 * i as f64 / (num_directions - 1) as f64;
        let wave = apply_farfield_propagation(&white_noise(&mut rng, len), geom, doa, sample_rate)?;
        field.add_scaled(&wave, 1.0);
    }
    let mean_power = (0..field.num_channels()).map(|p| field.channel_power(p)).sum::<f64>() / field.num_channels() as f64;
    field.scale(1.0 / mean_power.sqrt());
    Ok(field)
}

/// Scales `noise` so that the signal-to-noise ratio equals `snr_db` and
/// returns the sum.
///
/// Powers are averaged over channels and over the samples where the signal
/// is active, i.e. where any channel of `signal` is nonzero. Gated sources are
/// exactly zero outside their activity, so silent stretches do not dilute the
/// signal power.
pub fn mix_at_snr(signal: &MultichannelSignal, noise: &MultichannelSignal, snr_db: f64) -> Result<MultichannelSignal> {
    if signal.num_channels() != noise.num_channels() || signal.len() != noise.len() {
        return Err(DoaError::domain(format!(
            "signal is {}x{} but noise is {}x{}",
            signal.num_channels(),
            signal.len(),
            noise.num_channels(),
            noise.len()
        )));
    }
    if signal.sample_rate() != noise.sample_rate() {
        return Err(DoaError::domain("signal and noise sample rates differ"));
    }
    if !snr_db.is_finite() {
        return Err(DoaError::domain("SNR must be finite"));
    }
    let active: Vec<usize> = (0..signal.len()).filter(|&n| signal.channels().iter().any(|c| c[n] != 0.0)).collect();
    let power_over_active = |s: &MultichannelSignal| {
        if active.is_empty() {
            return 0.0;
        }
        let total: f64 = s.channels().iter().map(|c| active.iter().map(|&n| c[n] * c[n]).sum::<f64>()).sum();
        total / (active.len() * s.num_channels()) as f64
    };
    let ps = power_over_active(signal);
    let pn = power_over_active(noise);
    if ps == 0.0 {
        return Err(DoaError::domain("signal has zero power"));
    }
    if pn == 0.0 {
        return Err(DoaError::domain("noise has zero power over the signal-active samples"));
    }
    let gain = (ps / (pn * 10f64.powf(snr_db / 10.0))).sqrt();
    let mut out = signal.clone();
    out.add_scaled(noise, gain);
    Ok(out)
}

fn harmonic_source(rng: &mut ChaCha8Rng, fundamental: f64, len: usize, sample_rate: f64) -> Vec<f64> {
    let glide_rate = 0.2 + 0.3 * rng.random::<f64>();
    let syllable_rate = 3.0 + 2.0 * rng.random::<f64>();
    let phase0 = 2.0 * PI * rng.random::<f64>();
    let max_harmonic = ((0.45 * sample_rate) / (1.3 * fundamental)).floor().max(1.0) as usize;
    let mut phase = 0.0;
    let mut out = Vec::with_capacity(len);
    for n in 0..len {
        let t = n as f64 / sample_rate;
        let f0 = fundamental * (1.0 + 0.25 * (2.0 * PI * glide_rate * t + phase0).sin());
        phase += 2.0 * PI * f0 / sample_rate;
        let envelope = 0.5 * (1.0 - (2.0 * PI * syllable_rate * t + phase0).cos());
        let mut v = 0.0;
        for h in 1..=max_harmonic {
            v += (h as f64 * phase).sin() / h as f64;
        }
        out.push(envelope * v);
    }
    out
}

fn source_waveform(spec: &SourceSpec, rng: &mut ChaCha8Rng, len: usize, sample_rate: f64) -> Result<Vec<f64>> {
    let raw = match &spec.kind {
        SourceKind::WhiteNoise => white_noise(rng, len),
        SourceKind::Harmonic { fundamental } => harmonic_source(rng, *fundamental, len, sample_rate),
        SourceKind::WavFile(path) => {
            let (samples, rate) = audio::read_mono_wav(path)?;
            if sample_rate.fract() != 0.0 {
                return Err(DoaError::domain("WAV sources need an integer scenario sample rate"));
            }
            let resampled = audio::resample(&samples, rate, sample_rate as u32)?;
            if resampled.is_empty() {
                return Err(DoaError::Wav { path: path.clone(), message: "file contains no samples".into() });
            }
            resampled.iter().cycle().take(len).copied().collect()
        }
    };
    Ok(raw.into_iter().map(|v| v * spec.gain).collect())
}

/// Builds the microphone signals for `cfg` and the matching ground truth.
pub fn synthesize_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let len = cfg.num_samples();
    let fs = cfg.sample_rate;
    let p = cfg.geometry.num_sensors();

    // Independent sub-streams in a fixed order: sources, diffuse field, sensors.
    let mut master = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let source_seeds: Vec<u64> = cfg.sources.iter().map(|_| master.random()).collect();
    let diffuse_seed: u64 = master.random();
    let sensor_seed: u64 = master.random();

    let mut signal = MultichannelSignal::zeros(p, len, fs)?;
    for (spec, seed) in cfg.sources.iter().zip(source_seeds) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let wave = source_waveform(spec, &mut rng, len, fs)?;
        let mut propagated = apply_farfield_propagation(&wave, &cfg.geometry, spec.doa, fs)?;
        let intervals = spec.intervals(cfg.duration);
        for ch in propagated.channels.iter_mut() {
            for (n, v) in ch.iter_mut().enumerate() {
                let t = n as f64 / fs;
                if !intervals.iter().any(|iv| iv.start <= t && t < iv.end) {
                    *v = 0.0;
                }
            }
        }
        signal.add_scaled(&propagated, 1.0);
    }

    let mut noise = generate_diffuse_noise(&cfg.geometry, cfg.duration, fs, cfg.diffuse_directions, diffuse_seed)?;
    if let Some(level_db) = cfg.sensor_noise_db {
        let mut rng = ChaCha8Rng::seed_from_u64(sensor_seed);
        let amplitude = 10f64.powf(level_db / 20.0);
        for ch in noise.channels.iter_mut() {
            for v in ch.iter_mut() {
                *v += amplitude * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }

    let mixed = if cfg.sources.is_empty() { noise } else { mix_at_snr(&signal, &noise, cfg.snr_db)? };
    Ok(Scenario { signal: mixed, truth: cfg.ground_truth() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom() -> ArrayGeometry {
        ArrayGeometry::new(5, 0.044, 343.0).unwrap()
    }

    fn white(len: usize, seed: u64) -> Vec<f64> {
        white_noise(&mut ChaCha8Rng::seed_from_u64(seed), len)
    }

    #[test]
    fn broadside_copies_input_to_every_channel() {
        let x = white(1000, 1);
        let out = apply_farfield_propagation(&x, &geom(), 0.0, 16000.0).unwrap();
        for p in 0..5 {
            assert_eq!(out.channel(p), &x[..]);
        }
    }

    #[test]
    fn reference_channel_survives_fft_round_trip() {
        let x = white(4096, 2);
        let out = apply_farfield_propagation(&x, &geom(), 37.0, 16000.0).unwrap();
        let rms = (out.channel(0).iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 4096.0).sqrt();
        assert!(rms <= 1e-9, "{rms}");
    }

    #[test]
    fn endfire_delay_in_samples() {
        let g = geom();
        let samples = g.delay(1, 90.0) * 16000.0;
        assert!((samples - 2.0525).abs() < 1e-4, "{samples}");
    }

    /// Brute-force cross-correlation: the lag maximising Σ x1[n]·x2[n+lag].
    fn peak_lag(a: &[f64], b: &[f64], max_lag: isize) -> isize {
        (-max_lag..=max_lag)
            .max_by(|&l1, &l2| {
                let corr = |lag: isize| -> f64 {
                    (0..a.len() as isize)
                        .filter(|&n| (0..b.len() as isize).contains(&(n + lag)))
                        .map(|n| a[n as usize] * b[(n + lag) as usize])
                        .sum()
                };
                corr(l1).total_cmp(&corr(l2))
            })
            .unwrap()
    }

    #[test]
    fn cross_correlation_peak_matches_rounded_delay() {
        let x = white(8000, 3);
        for doa in [90.0, 45.0, -60.0, -90.0] {
            let out = apply_farfield_propagation(&x, &geom(), doa, 16000.0).unwrap();
            let expected = (16000.0 * 0.044 * f64::sin(f64::to_radians(doa)) / 343.0).round() as isize;
            assert_eq!(peak_lag(out.channel(0), out.channel(1), 6), expected, "doa {doa}");
        }
    }

    #[test]
    fn propagation_preserves_channel_energy() {
        let x = white(4001, 4);
        let px = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        let out = apply_farfield_propagation(&x, &geom(), -72.0, 16000.0).unwrap();
        for p in 0..5 {
            assert!((out.channel_power(p) / px - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn empty_source_rejected() {
        assert!(apply_farfield_propagation(&[], &geom(), 0.0, 16000.0).is_err());
    }

    #[test]
    fn diffuse_noise_is_normalized_and_deterministic() {
        let a = generate_diffuse_noise(&geom(), 1.0, 16000.0, 22, 9).unwrap();
        let mean = (0..5).map(|p| a.channel_power(p)).sum::<f64>() / 5.0;
        assert!((mean - 1.0).abs() < 1e-9);
        for p in 0..5 {
            assert!((a.channel_power(p) - 1.0).abs() < 0.05, "channel {p}: {}", a.channel_power(p));
        }
        let b = generate_diffuse_noise(&geom(), 1.0, 16000.0, 22, 9).unwrap();
        assert_eq!(a, b);
        let c = generate_diffuse_noise(&geom(), 1.0, 16000.0, 22, 10).unwrap();
        assert_ne!(a, c);
        assert!(generate_diffuse_noise(&geom(), 1.0, 16000.0, 7, 9).is_err());
    }

    /// Real part of the complex coherence at one frequency, from Welch-style
    /// averaging of single-bin DFTs.
    fn coherence(x: &[f64], y: &[f64], freq: f64, fs: f64) -> f64 {
        let seg = 512;
        let k = (freq * seg as f64 / fs).round();
        let (mut sxy, mut sxx, mut syy) = (Complex64::new(0.0, 0.0), 0.0, 0.0);
        for start in (0..x.len() - seg).step_by(seg / 2) {
            let mut fx = Complex64::new(0.0, 0.0);
            let mut fy = Complex64::new(0.0, 0.0);
            for n in 0..seg {
                let w = 0.5 - 0.5 * (2.0 * PI * n as f64 / seg as f64).cos();
                let e = Complex64::from_polar(w, -2.0 * PI * k * n as f64 / seg as f64);
                fx += e * x[start + n];
                fy += e * y[start + n];
            }
            sxy += fx * fy.conj();
            sxx += fx.norm_sqr();
            syy += fy.norm_sqr();
        }
        sxy.re / (sxx * syy).sqrt()
    }

    /// Ideal coherence of a field of uncorrelated plane waves uniformly
    /// distributed over [-90°, 90°]: (1/π)∫ cos(2π f d sin θ / c) dθ, by the
    /// composite Simpson rule.
    fn ideal_coherence(freq: f64, distance: f64) -> f64 {
        let n = 2000;
        let h = PI / n as f64;
        let f = |theta: f64| (2.0 * PI * freq * distance * theta.sin() / 343.0).cos();
        let mut sum = f(-PI / 2.0) + f(PI / 2.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            sum += w * f(-PI / 2.0 + i as f64 * h);
        }
        sum * h / 3.0 / PI
    }

    #[test]
    fn diffuse_coherence_follows_ideal_field() {
        let noise = generate_diffuse_noise(&geom(), 8.0, 16000.0, 64, 5).unwrap();
        for (ch, freq) in [(1, 500.0), (4, 500.0), (4, 1500.0)] {
            let measured = coherence(noise.channel(0), noise.channel(ch), freq, 16000.0);
            let ideal = ideal_coherence(freq, 0.044 * ch as f64);
            assert!((measured - ideal).abs() < 0.1, "ch {ch} f {freq}: {measured} vs {ideal}");
        }
    }

    fn two_tone(len: usize) -> MultichannelSignal {
        let ch: Vec<f64> = (0..len).map(|n| (n as f64 * 0.1).sin()).collect();
        MultichannelSignal::new(vec![ch.clone(), ch], 16000.0).unwrap()
    }

    #[test]
    fn mixing_hits_requested_snr() {
        let s = two_tone(4000);
        let noise = MultichannelSignal::new(vec![white(4000, 1), white(4000, 2)], 16000.0).unwrap();
        for snr in [0.0, 10.0, -5.0] {
            let mixed = mix_at_snr(&s, &noise, snr).unwrap();
            let residual: Vec<Vec<f64>> = mixed.channels().iter().zip(s.channels()).map(|(m, c)| m.iter().zip(c).map(|(a, b)| a - b).collect()).collect();
            let pn = residual.iter().flatten().map(|v| v * v).sum::<f64>();
            let ps = s.channels().iter().flatten().map(|v| v * v).sum::<f64>();
            let measured = 10.0 * (ps / pn).log10();
            assert!((measured - snr).abs() < 0.01, "{measured} vs {snr}");
        }
        let a = mix_at_snr(&s, &noise, 10.0).unwrap();
        let b = mix_at_snr(&s, &noise, 10.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mixing_uses_active_samples_only() {
        let mut s = two_tone(4000);
        for ch in s.channels.iter_mut() {
            ch[2000..].iter_mut().for_each(|v| *v = 0.0);
        }
        let noise = MultichannelSignal::new(vec![white(4000, 1), white(4000, 2)], 16000.0).unwrap();
        let mixed = mix_at_snr(&s, &noise, 10.0).unwrap();
        let ps: f64 = s.channels().iter().map(|c| c[..2000].iter().map(|v| v * v).sum::<f64>()).sum();
        let pn: f64 = mixed.channels().iter().zip(s.channels()).map(|(m, c)| (0..2000).map(|n| (m[n] - c[n]).powi(2)).sum::<f64>()).sum();
        assert!((10.0 * (ps / pn).log10() - 10.0).abs() < 0.01);
    }

    #[test]
    fn mixing_rejects_bad_inputs() {
        let s = two_tone(100);
        let zero = MultichannelSignal::zeros(2, 100, 16000.0).unwrap();
        assert!(mix_at_snr(&zero, &s, 0.0).is_err());
        assert!(mix_at_snr(&s, &zero, 0.0).is_err());
        let short = two_tone(50);
        assert!(mix_at_snr(&s, &short, 0.0).is_err());
    }

    #[test]
    fn alternating_schedule_truth() {
        let duration = 8.0;
        let cfg = ScenarioConfig::new(
            geom(),
            vec![
                SourceSpec::white(45.0).with_activity(periodic_intervals(duration, 4.0, 2.0, 0.0)),
                SourceSpec::white(-45.0).with_activity(periodic_intervals(duration, 4.0, 2.0, 2.0)),
            ],
            10.0,
            duration,
            16000.0,
            1,
        );
        cfg.validate().unwrap();
        assert_eq!(cfg.max_simultaneous_sources(), 1);
        let truth = cfg.ground_truth();
        let doas: Vec<f64> = truth.segments.iter().map(|s| s.doa).collect();
        assert_eq!(doas, vec![45.0, -45.0, 45.0, -45.0]);
        assert_eq!(truth.active_over(0.5, 1.5), Some(vec![45.0]));
        assert_eq!(truth.active_over(2.5, 3.0), Some(vec![-45.0]));
        assert_eq!(truth.active_over(1.5, 2.5), None);
    }

    #[test]
    fn simultaneous_sources_and_empty_scenes() {
        let cfg = ScenarioConfig::new(geom(), vec![SourceSpec::white(45.0), SourceSpec::white(-45.0)], 10.0, 0.5, 16000.0, 3);
        assert_eq!(cfg.max_simultaneous_sources(), 2);
        let scene = synthesize_scenario(&cfg).unwrap();
        assert_eq!(scene.truth.active_over(0.0, 0.5), Some(vec![-45.0, 45.0]));
        assert_eq!(scene.signal.num_channels(), 5);
        assert_eq!(scene.signal.len(), 8000);

        let empty = ScenarioConfig::new(geom(), vec![], 10.0, 0.25, 16000.0, 3);
        let scene = synthesize_scenario(&empty).unwrap();
        assert!(scene.truth.is_empty());
        assert!(scene.signal.channel_power(0) > 0.0);
    }

    #[test]
    fn always_active_source_covers_duration() {
        let cfg = ScenarioConfig::new(geom(), vec![SourceSpec::white(10.0)], 10.0, 3.0, 16000.0, 3);
        let truth = cfg.ground_truth();
        assert_eq!(truth.segments.len(), 1);
        assert_eq!(truth.segments[0].interval, Interval::new(0.0, 3.0));
    }

    #[test]
    fn synthesis_is_deterministic_per_seed() {
        let cfg = ScenarioConfig::new(geom(), vec![SourceSpec::white(30.0)], 5.0, 0.25, 16000.0, 11);
        let a = synthesize_scenario(&cfg).unwrap();
        let b = synthesize_scenario(&cfg).unwrap();
        assert_eq!(a.signal, b.signal);
        let mut other = cfg.clone();
        other.rng_seed = 12;
        let c = synthesize_scenario(&other).unwrap();
        assert_ne!(a.signal, c.signal);
        assert_eq!(a.truth, c.truth);
    }

    #[test]
    fn validation_catches_bad_configs() {
        let mut cfg = ScenarioConfig::new(geom(), vec![SourceSpec::white(30.0)], 5.0, 0.0, 16000.0, 1);
        assert!(cfg.validate().is_err());
        cfg.duration = 1.0;
        cfg.sources[0].gain = 0.0;
        assert!(cfg.validate().is_err());
        cfg.sources[0].gain = 1.0;
        cfg.sources[0].activity = Activity::Intervals(vec![Interval::new(0.0, 0.6), Interval::new(0.5, 1.0)]);
        assert!(cfg.validate().is_err());
        cfg.sources[0].activity = Activity::Intervals(vec![Interval::new(0.0, 1.5)]);
        assert!(cfg.validate().is_err());
        cfg.sources = (0..5).map(|i| SourceSpec::white(-60.0 + 30.0 * i as f64)).collect();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn missing_wav_source_reports_path() {
        let mut src = SourceSpec::white(0.0);
        src.kind = SourceKind::WavFile(PathBuf::from("/no/such/talker.wav"));
        let cfg = ScenarioConfig::new(geom(), vec![src], 5.0, 0.1, 16000.0, 1);
        let err = synthesize_scenario(&cfg).unwrap_err();
        assert!(err.to_string().contains("/no/such/talker.wav"), "{err}");
    }

    #[test]
    fn harmonic_source_is_spectrally_sparse() {
        let x = harmonic_source(&mut ChaCha8Rng::seed_from_u64(1), 150.0, 16000, 16000.0);
        assert!(x.iter().all(|v| v.is_finite()));
        assert!(x.iter().map(|v| v * v).sum::<f64>() > 0.0);
    }
}
