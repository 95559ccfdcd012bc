use log::debug;

use crate::error::{DoaError, Result};
use crate::esprit::{narrowband_esprit, Solver};
use crate::geometry::ArrayGeometry;
use crate::spectral::BinCovariance;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramConfig {
    /// Degrees; the histogram spans [-90°, 90°].
    pub bin_width: f64,
    /// Minimum distance between selected peak centres, degrees.
    pub min_peak_separation: f64,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        Self { bin_width: 1.0, min_peak_separation: 10.0 }
    }
}

impl HistogramConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bin_width > 0.0 && self.bin_width <= 180.0) {
            return Err(DoaError::domain(format!("histogram bin width must be in (0, 180], got {}", self.bin_width)));
        }
        if !(self.min_peak_separation >= self.bin_width) {
            return Err(DoaError::domain(format!(
                "peak separation {} must be at least the bin width {}",
                self.min_peak_separation, self.bin_width
            )));
        }
        Ok(())
    }

    fn num_bins(&self) -> usize {
        (180.0 / self.bin_width).ceil() as usize
    }

    fn bin_of(&self, doa: f64) -> usize {
        (((doa + 90.0) / self.bin_width).floor() as usize).min(self.num_bins() - 1)
    }

    pub fn bin_center(&self, index: usize) -> f64 {
        (-90.0 + (index as f64 + 0.5) * self.bin_width).min(90.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramEstimate {
    /// Degrees, ascending.
    pub doas: Vec<f64>,
    /// Fewer than Q separated peaks were found.
    pub insufficient_peaks: bool,
    /// Counts per histogram bin, from -90°.
    pub histogram: Vec<usize>,
    /// Per-bin narrowband estimates that entered the histogram.
    pub pooled: usize,
}

/// Narrowband ESPRIT in every bin, pooled into a DOA histogram; the Q
/// highest peaks at least `min_peak_separation` apart are refined to the
/// mean of the estimates within ±`bin_width` of the peak centre.
///
/// Bins whose estimate needed a clamped sine (or lie above the alias-free
/// limit) and bins whose subspace is rank deficient are left out.
pub fn hist_esprit(
    covs: &[BinCovariance],
    q: usize,
    geom: &ArrayGeometry,
    cfg: &HistogramConfig,
) -> Result<HistogramEstimate> {
    cfg.validate()?;
    geom.check_source_count(q)?;
    let mut estimates = Vec::with_capacity(covs.len() * q);
    for cov in covs {
        match narrowband_esprit(cov, q, geom, Solver::default()) {
            Ok(sol) if !sol.out_of_range => estimates.extend(sol.doas),
            Ok(_) => {}
            Err(DoaError::DegenerateSubspace(msg)) => debug!("hist-ESPRIT skips {} Hz: {msg}", cov.frequency),
            Err(e) => return Err(e),
        }
    }
    Ok(pick_peaks(&estimates, q, cfg))
}

pub(crate) fn pick_peaks(estimates: &[f64], q: usize, cfg: &HistogramConfig) -> HistogramEstimate {
    let mut histogram = vec![0usize; cfg.num_bins()];
    for &d in estimates {
        histogram[cfg.bin_of(d)] += 1;
    }
    let mut order: Vec<usize> = (0..histogram.len()).filter(|&i| histogram[i] > 0).collect();
    order.sort_by(|&a, &b| histogram[b].cmp(&histogram[a]).then(a.cmp(&b)));
    let mut peaks: Vec<usize> = Vec::with_capacity(q);
    for idx in order {
        if peaks.len() == q {
            break;
        }
        let center = cfg.bin_center(idx);
        if peaks.iter().all(|&p| (cfg.bin_center(p) - center).abs() >= cfg.min_peak_separation) {
            peaks.push(idx);
        }
    }
    let mut doas: Vec<f64> = peaks
        .iter()
        .map(|&p| {
            let center = cfg.bin_center(p);
            let near: Vec<f64> = estimates.iter().copied().filter(|d| (d - center).abs() <= cfg.bin_width).collect();
            near.iter().sum::<f64>() / near.len() as f64
        })
        .collect();
    doas.sort_by(f64::total_cmp);
    HistogramEstimate { insufficient_peaks: doas.len() < q, doas, histogram, pooled: estimates.len() }
}
