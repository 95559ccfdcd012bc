//! STFT analysis and per-bin spatial covariance estimation.

use std::f64::consts::PI;
use std::ops::Range;

use rustfft::FftPlanner;

use crate::error::{DoaError, Result};
use crate::geometry::ArrayGeometry;
use crate::linalg::{self, CMatrix, C64};
use crate::synth::MultichannelSignal;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    /// Periodic Hann window.
    Hann,
    Rectangular,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Hann => (0..len).map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos()).collect(),
            Window::Rectangular => vec![1.0; len],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftConfig {
    pub frame_length: usize,
    pub hop: usize,
    pub window: Window,
    pub sample_rate: f64,
}

impl StftConfig {
    /// 1024-sample Hann frames with 50 % overlap.
    pub fn standard(sample_rate: f64) -> Self {
        Self { frame_length: 1024, hop: 512, window: Window::Hann, sample_rate }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.frame_length.is_power_of_two() || self.frame_length < 2 {
            return Err(DoaError::domain(format!("frame length must be a power of two, got {}", self.frame_length)));
        }
        if self.hop == 0 || self.hop > self.frame_length {
            return Err(DoaError::domain(format!(
                "hop must be in 1..={}, got {}",
                self.frame_length, self.hop
            )));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(DoaError::domain(format!("sample rate must be positive, got {}", self.sample_rate)));
        }
        Ok(())
    }

    pub fn num_bins(&self) -> usize {
        self.frame_length / 2 + 1
    }

    pub fn bin_spacing(&self) -> f64 {
        self.sample_rate / self.frame_length as f64
    }

    pub fn bin_frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_spacing()
    }

    /// Index of the highest bin whose centre frequency does not exceed `freq`
    /// (the "next lower frequency bin").
    pub fn bin_at_or_below(&self, freq: f64) -> usize {
        let idx = (freq / self.bin_spacing() + 1e-9).floor().max(0.0) as usize;
        idx.min(self.num_bins() - 1)
    }

    /// Number of frames produced for a signal of `len` samples.
    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.frame_length {
            0
        } else {
            1 + (len - self.frame_length) / self.hop
        }
    }

    /// Start time of frame `t` in seconds.
    pub fn frame_start(&self, t: usize) -> f64 {
        (t * self.hop) as f64 / self.sample_rate
    }
}

/// One-sided STFT of a P-channel signal: T frames × B bins × P channels.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelSpectrum {
    data: Vec<C64>,
    num_frames: usize,
    num_bins: usize,
    num_channels: usize,
    bin_frequencies: Vec<f64>,
}

impl MultichannelSpectrum {
    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn num_channels(&self) -> usize {
        self.num_channels
    }

    pub fn bin_frequencies(&self) -> &[f64] {
        &self.bin_frequencies
    }

    /// The P-channel snapshot of frame `t` at bin `b`.
    pub fn snapshot(&self, t: usize, b: usize) -> &[C64] {
        let start = (t * self.num_bins + b) * self.num_channels;
        &self.data[start..start + self.num_channels]
    }
}

pub fn stft(signal: &MultichannelSignal, cfg: &StftConfig) -> Result<MultichannelSpectrum> {
    cfg.validate()?;
    if signal.sample_rate() != cfg.sample_rate {
        return Err(DoaError::domain(format!(
            "signal rate {} Hz does not match STFT rate {} Hz",
            signal.sample_rate(),
            cfg.sample_rate
        )));
    }
    let n = cfg.frame_length;
    if signal.len() < n {
        return Err(DoaError::domain(format!(
            "signal of {} samples is shorter than one {n}-sample frame",
            signal.len()
        )));
    }
    let frames = cfg.num_frames(signal.len());
    let bins = cfg.num_bins();
    let channels = signal.num_channels();
    let window = cfg.window.coefficients(n);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);

    let mut data = vec![C64::new(0.0, 0.0); frames * bins * channels];
    let mut buf = vec![C64::new(0.0, 0.0); n];
    for t in 0..frames {
        let offset = t * cfg.hop;
        for p in 0..channels {
            let x = &signal.channel(p)[offset..offset + n];
            for ((dst, &v), &w) in buf.iter_mut().zip(x).zip(&window) {
                *dst = C64::new(v * w, 0.0);
            }
            fft.process(&mut buf);
            for (b, &z) in buf[..bins].iter().enumerate() {
                data[(t * bins + b) * channels + p] = z;
            }
        }
    }
    Ok(MultichannelSpectrum {
        data,
        num_frames: frames,
        num_bins: bins,
        num_channels: channels,
        bin_frequencies: (0..bins).map(|b| cfg.bin_frequency(b)).collect(),
    })
}

/// Sample spatial covariance of one frequency bin.
#[derive(Debug, Clone, PartialEq)]
pub struct BinCovariance {
    pub frequency: f64,
    pub bin: usize,
    pub matrix: CMatrix,
    pub snapshot_count: usize,
}

impl BinCovariance {
    /// Wraps an externally built matrix (e.g. a model covariance). The matrix
    /// must be Hermitian; `bin` is informational.
    pub fn from_matrix(frequency: f64, bin: usize, matrix: CMatrix) -> Result<Self> {
        if !(frequency >= 0.0 && frequency.is_finite()) {
            return Err(DoaError::domain(format!("bin frequency must be non-negative, got {frequency}")));
        }
        if !linalg::is_hermitian(&matrix, 1e-12) {
            return Err(DoaError::domain("covariance matrix is not Hermitian"));
        }
        Ok(Self { frequency, bin, matrix, snapshot_count: 0 })
    }

    pub fn num_sensors(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|z| z.re).sum()
    }

    /// Model covariance of mutually uncorrelated plane waves in spatially
    /// white noise, `A·diag(powers)·Aᴴ + noise_power·I`.
    pub fn model(
        geom: &ArrayGeometry,
        frequency: f64,
        bin: usize,
        doas: &[f64],
        powers: &[f64],
        noise_power: f64,
    ) -> Result<Self> {
        if doas.len() != powers.len() {
            return Err(DoaError::domain(format!("{} directions but {} powers", doas.len(), powers.len())));
        }
        if powers.iter().chain([&noise_power]).any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(DoaError::domain("source and noise powers must be non-negative"));
        }
        let a = geom.steering_matrix(frequency, doas)?.into_entries();
        let p = geom.num_sensors();
        let mut matrix = CMatrix::identity(p, p).scale(noise_power);
        for (q, &power) in powers.iter().enumerate() {
            let col = a.column(q);
            matrix += (col * col.adjoint()).scale(power);
        }
        // Exact Hermitian symmetry regardless of rounding in the products.
        let matrix = (&matrix + matrix.adjoint()).scale(0.5);
        Ok(Self { frequency, bin, matrix, snapshot_count: 0 })
    }

    /// Scaled copy; handy for invariance checks.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { matrix: self.matrix.scale(factor), ..self.clone() }
    }
}

/// Covariances of every bin, averaged over `frames` (outer products of the
/// snapshots divided by the frame count).
pub fn estimate_bin_covariances(spec: &MultichannelSpectrum, frames: Range<usize>) -> Result<Vec<BinCovariance>> {
    let bins: Vec<usize> = (0..spec.num_bins()).collect();
    estimate_covariances_for_bins(spec, frames, &bins)
}

/// Same as [`estimate_bin_covariances`] restricted to the listed bins.
pub fn estimate_covariances_for_bins(
    spec: &MultichannelSpectrum,
    frames: Range<usize>,
    bins: &[usize],
) -> Result<Vec<BinCovariance>> {
    if frames.is_empty() {
        return Err(DoaError::domain("covariance needs at least one frame"));
    }
    if frames.end > spec.num_frames() {
        return Err(DoaError::domain(format!(
            "frame range {}..{} exceeds {} frames",
            frames.start,
            frames.end,
            spec.num_frames()
        )));
    }
    let p = spec.num_channels();
    let count = frames.len();
    bins.iter()
        .map(|&b| {
            if b >= spec.num_bins() {
                return Err(DoaError::domain(format!("bin {b} out of range")));
            }
            let mut m = CMatrix::zeros(p, p);
            for t in frames.clone() {
                let x = spec.snapshot(t, b);
                for i in 0..p {
                    for j in i..p {
                        m[(i, j)] += x[i] * x[j].conj();
                    }
                }
            }
            let scale = 1.0 / count as f64;
            for i in 0..p {
                m[(i, i)] = C64::new(m[(i, i)].re * scale, 0.0);
                for j in i + 1..p {
                    m[(i, j)] *= scale;
                    m[(j, i)] = m[(i, j)].conj();
                }
            }
            Ok(BinCovariance { frequency: spec.bin_frequencies()[b], bin: b, matrix: m, snapshot_count: count })
        })
        .collect()
}

/// Keeps bins with `f_low <= f <= f_high`. The DC bin is always dropped.
pub fn band_select(covs: &[BinCovariance], f_low: f64, f_high: f64) -> Result<Vec<BinCovariance>> {
    if !(f_low < f_high) {
        return Err(DoaError::domain(format!("empty band: f_low {f_low} >= f_high {f_high}")));
    }
    let out: Vec<BinCovariance> = covs
        .iter()
        .filter(|c| c.frequency > 0.0 && c.frequency >= f_low && c.frequency <= f_high)
        .cloned()
        .collect();
    if out.is_empty() {
        return Err(DoaError::domain(format!("no bins between {f_low} Hz and {f_high} Hz")));
    }
    Ok(out)
}

/// Bins actually analysed for a requested band after applying the array's
/// endfire aliasing limit.
#[derive(Debug, Clone, PartialEq)]
pub struct BandPlan {
    pub bins: Vec<usize>,
    pub requested_high: f64,
    /// True when the requested upper edge was lowered to the aliasing limit.
    pub truncated: bool,
}

impl BandPlan {
    pub fn highest_bin(&self) -> usize {
        *self.bins.last().expect("band plans are never empty")
    }
}

/// Resolves `[f_low, f_high]` to STFT bins, never exceeding the bin at or
/// below the array's lowest aliasing frequency. Truncation is logged.
pub fn plan_band(geom: &ArrayGeometry, cfg: &StftConfig, f_low: f64, f_high: f64) -> Result<BandPlan> {
    cfg.validate()?;
    if !(f_low < f_high) {
        return Err(DoaError::domain(format!("empty band: f_low {f_low} >= f_high {f_high}")));
    }
    let alias_bin = cfg.bin_at_or_below(geom.lowest_aliasing_frequency());
    let requested_bin = cfg.bin_at_or_below(f_high);
    let truncated = requested_bin > alias_bin;
    if truncated {
        log::warn!(
            "band upper edge {f_high} Hz exceeds the aliasing limit; truncated to bin {alias_bin} ({} Hz)",
            cfg.bin_frequency(alias_bin)
        );
    }
    let high = requested_bin.min(alias_bin);
    let low = ((f_low / cfg.bin_spacing()) - 1e-9).ceil().max(1.0) as usize;
    if low > high {
        return Err(DoaError::domain(format!("no bins between {f_low} Hz and {f_high} Hz")));
    }
    Ok(BandPlan { bins: (low..=high).collect(), requested_high: f_high, truncated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn cfg(window: Window) -> StftConfig {
        StftConfig { frame_length: 1024, hop: 512, window, sample_rate: 16000.0 }
    }

    #[test]
    fn paper_grid_arithmetic() {
        let c = cfg(Window::Hann);
        assert_eq!(c.num_bins(), 513);
        assert_eq!(c.bin_spacing(), 15.625);
        assert_eq!(c.num_frames(16000), 30);
        assert_eq!(c.num_frames(1023), 0);
    }

    #[test]
    fn bin_centred_tone_has_no_leakage_with_rectangular_window() {
        let c = cfg(Window::Rectangular);
        let k = 37;
        let x: Vec<f64> = (0..4096).map(|n| (2.0 * PI * k as f64 * n as f64 / 1024.0).cos()).collect();
        let sig = MultichannelSignal::new(vec![x], 16000.0).unwrap();
        let spec = stft(&sig, &c).unwrap();
        for t in 0..spec.num_frames() {
            let peak = spec.snapshot(t, k)[0].norm_sqr();
            let leak: f64 = (0..spec.num_bins()).filter(|&b| b != k).map(|b| spec.snapshot(t, b)[0].norm_sqr()).sum();
            assert!(leak < 1e-10 * peak, "frame {t}: {leak} vs {peak}");
        }
    }

    #[test]
    fn parseval_holds_per_frame() {
        let c = cfg(Window::Hann);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..3000).map(|_| rng.sample(StandardNormal)).collect();
        let sig = MultichannelSignal::new(vec![x.clone()], 16000.0).unwrap();
        let spec = stft(&sig, &c).unwrap();
        let w = Window::Hann.coefficients(1024);
        for t in 0..spec.num_frames() {
            let frame_energy: f64 = x[t * 512..t * 512 + 1024].iter().zip(&w).map(|(v, w)| (v * w).powi(2)).sum();
            let n = spec.num_bins() - 1;
            let mut spectral: f64 = (1..n).map(|b| 2.0 * spec.snapshot(t, b)[0].norm_sqr()).sum();
            spectral += spec.snapshot(t, 0)[0].norm_sqr() + spec.snapshot(t, n)[0].norm_sqr();
            spectral /= 1024.0;
            assert!((spectral - frame_energy).abs() < 1e-9 * frame_energy.max(1.0));
        }
    }

    #[test]
    fn short_signal_rejected() {
        let sig = MultichannelSignal::new(vec![vec![0.0; 1000]], 16000.0).unwrap();
        assert!(stft(&sig, &cfg(Window::Hann)).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(Window::Hann);
        c.frame_length = 1000;
        assert!(c.validate().is_err());
        c.frame_length = 1024;
        c.hop = 2048;
        assert!(c.validate().is_err());
    }

    fn spectrum_from_snapshots(snaps: &[Vec<C64>], freq: f64) -> MultichannelSpectrum {
        let p = snaps[0].len();
        MultichannelSpectrum {
            data: snaps.iter().flatten().copied().collect(),
            num_frames: snaps.len(),
            num_bins: 1,
            num_channels: p,
            bin_frequencies: vec![freq],
        }
    }

    #[test]
    fn single_snapshot_gives_rank_one_outer_product() {
        let x = vec![C64::new(1.0, 2.0), C64::new(-0.5, 0.25), C64::new(0.0, 1.0)];
        let spec = spectrum_from_snapshots(&[x.clone()], 100.0);
        let covs = estimate_bin_covariances(&spec, 0..1).unwrap();
        let v = crate::linalg::CVector::from_vec(x);
        assert!((&covs[0].matrix - &v * v.adjoint()).norm() < 1e-15);
        assert_eq!(covs[0].snapshot_count, 1);
        assert!(estimate_bin_covariances(&spec, 0..0).is_err());
    }

    #[test]
    fn covariance_scales_quadratically() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut gauss = || C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        let snaps: Vec<Vec<C64>> = (0..20).map(|_| (0..4).map(|_| gauss()).collect()).collect();
        let alpha = C64::new(0.3, -1.2);
        let scaled: Vec<Vec<C64>> = snaps.iter().map(|s| s.iter().map(|z| z * alpha).collect()).collect();
        let a = estimate_bin_covariances(&spectrum_from_snapshots(&snaps, 50.0), 0..20).unwrap();
        let b = estimate_bin_covariances(&spectrum_from_snapshots(&scaled, 50.0), 0..20).unwrap();
        assert!((a[0].matrix.scale(alpha.norm_sqr()) - &b[0].matrix).norm() < 1e-12);
        assert!(crate::linalg::is_hermitian(&a[0].matrix, 1e-12));
    }

    fn fake_covs(cfg: &StftConfig) -> Vec<BinCovariance> {
        (0..cfg.num_bins())
            .map(|b| BinCovariance::from_matrix(cfg.bin_frequency(b), b, CMatrix::identity(2, 2)).unwrap())
            .collect()
    }

    #[test]
    fn band_selection_edges() {
        let c = cfg(Window::Hann);
        let covs = fake_covs(&c);
        let sel = band_select(&covs, 0.0, 3800.0).unwrap();
        assert_eq!(sel.first().unwrap().bin, 1);
        assert_eq!(sel.last().unwrap().bin, 243);
        assert_eq!(sel.last().unwrap().frequency, 3796.875);
        let sel = band_select(&covs, 100.0, 3800.0).unwrap();
        assert_eq!(sel.first().unwrap().bin, 7);
        assert_eq!(sel.first().unwrap().frequency, 109.375);
        assert!(band_select(&covs, 3800.0, 100.0).is_err());
        assert!(band_select(&covs, 1.0, 2.0).is_err());
    }

    #[test]
    fn band_plan_respects_aliasing_limit() {
        let c = cfg(Window::Hann);
        let g = ArrayGeometry::new(5, 0.044, 343.0).unwrap();
        let plan = plan_band(&g, &c, 100.0, 3800.0).unwrap();
        assert_eq!((plan.bins[0], plan.highest_bin(), plan.truncated), (7, 243, false));
        let plan = plan_band(&g, &c, 100.0, 8000.0).unwrap();
        assert_eq!((plan.highest_bin(), plan.truncated), (249, true));
        assert_eq!(c.bin_frequency(249), 3890.625);
        let plan = plan_band(&g, &c, 0.0, 500.0).unwrap();
        assert_eq!(plan.bins[0], 1);
    }
}
