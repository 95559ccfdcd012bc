use log::debug;

use super::histogram::{hist_esprit, HistogramConfig};
use crate::error::{DoaError, Result};
use crate::geometry::{check_angle, ArrayGeometry};
use crate::linalg::{self, CMatrix, C64};
use crate::spectral::BinCovariance;

/// Directions used to build the focusing matrices.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitialDoas {
    /// Coarse (5°) hist-ESPRIT on a subset of the bins.
    #[default]
    Auto,
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CssConfig {
    /// Focusing frequency; `None` selects the highest bin.
    pub reference_frequency: Option<f64>,
    /// MUSIC scan step, degrees.
    pub grid_resolution: f64,
    pub initial_doas: InitialDoas,
    /// Number of evenly spaced bins used by the automatic initialization.
    pub init_bins: usize,
}

impl Default for CssConfig {
    fn default() -> Self {
        Self { reference_frequency: None, grid_resolution: 0.1, initial_doas: InitialDoas::Auto, init_bins: 16 }
    }
}

impl CssConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.grid_resolution > 0.0 && self.grid_resolution <= 90.0) {
            return Err(DoaError::domain(format!("grid resolution must be in (0, 90], got {}", self.grid_resolution)));
        }
        if self.init_bins == 0 {
            return Err(DoaError::domain("init_bins must be at least 1"));
        }
        if let Some(f) = self.reference_frequency {
            if !(f > 0.0 && f.is_finite()) {
                return Err(DoaError::domain(format!("reference frequency must be positive, got {f}")));
            }
        }
        if let InitialDoas::Fixed(doas) = &self.initial_doas {
            if doas.is_empty() {
                return Err(DoaError::domain("fixed initial directions must not be empty"));
            }
            doas.iter().try_for_each(|&d| check_angle(d))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CssEstimate {
    /// Degrees, ascending.
    pub doas: Vec<f64>,
    pub insufficient_peaks: bool,
    pub initial_doas: Vec<f64>,
    pub reference_frequency: f64,
    /// Scan angles, degrees.
    pub grid: Vec<f64>,
    /// Wideband MUSIC pseudo-spectrum on `grid`.
    pub spectrum: Vec<f64>,
}

/// Rotational focusing matrix `T = U·Vᴴ` from the SVD `U·Σ·Vᴴ` of
/// `A(f_ref)·A(f)ᴴ`; unitary by construction.
pub fn focusing_matrix(geom: &ArrayGeometry, f_ref: f64, f: f64, doas: &[f64]) -> Result<CMatrix> {
    if doas.is_empty() {
        return Err(DoaError::domain("focusing needs at least one direction"));
    }
    let reference = linalg::thin_qr(&geom.steering_matrix(f_ref, doas)?.into_entries());
    focusing_from(&reference, &geom.steering_matrix(f, doas)?.into_entries())
}

/// `U·Vᴴ` from the SVD of `A_ref·Aᴴ`, computed through the small core
/// `R_ref·R_aᴴ` of the two thin QR factorizations; singular directions
/// outside both column spans are paired by Gram–Schmidt completion.
fn focusing_from((q_ref, r_ref): &(CMatrix, CMatrix), a: &CMatrix) -> Result<CMatrix> {
    let (q_a, r_a) = linalg::thin_qr(a);
    let p = a.nrows();
    if q_ref.ncols() == 0 || q_a.ncols() == 0 {
        return Ok(CMatrix::identity(p, p));
    }
    let core = linalg::svd(&(r_ref * r_a.adjoint()))?;
    let u = linalg::unitary_completion(&(q_ref * core.u));
    let v = linalg::unitary_completion(&(q_a * core.v));
    Ok(u * v.adjoint())
}

fn evenly_spaced(n: usize, k: usize) -> Vec<usize> {
    if k >= n {
        return (0..n).collect();
    }
    if k == 1 {
        return vec![n / 2];
    }
    (0..k).map(|i| (i * (n - 1) + (k - 1) / 2) / (k - 1)).collect()
}

/// Coherent signal subspace: focus every bin covariance onto `f_ref`, sum,
/// and scan the wideband MUSIC pseudo-spectrum `1/‖Enᴴ·a(θ)‖²`.
pub fn css_localize(covs: &[BinCovariance], q: usize, geom: &ArrayGeometry, cfg: &CssConfig) -> Result<CssEstimate> {
    cfg.validate()?;
    geom.check_source_count(q)?;
    if covs.is_empty() {
        return Err(DoaError::domain("no frequency bins"));
    }
    let p = geom.num_sensors();
    let f_ref = cfg.reference_frequency.unwrap_or_else(|| covs.iter().map(|c| c.frequency).fold(0.0, f64::max));

    let initial_doas = match &cfg.initial_doas {
        InitialDoas::Fixed(doas) => doas.clone(),
        InitialDoas::Auto => {
            let subset: Vec<BinCovariance> =
                evenly_spaced(covs.len(), cfg.init_bins).into_iter().map(|i| covs[i].clone()).collect();
            let coarse = HistogramConfig { bin_width: 5.0, min_peak_separation: 10.0 };
            let init = hist_esprit(&subset, q, geom, &coarse)?;
            if init.doas.is_empty() {
                debug!("CSS initialization found no peaks; using evenly spaced directions");
                (0..q).map(|k| -90.0 + 180.0 * (k + 1) as f64 / (q + 1) as f64).collect()
            } else {
                init.doas
            }
        }
    };

    let reference = linalg::thin_qr(&geom.steering_matrix(f_ref, &initial_doas)?.into_entries());
    let mut focused = CMatrix::zeros(p, p);
    for cov in covs {
        if cov.num_sensors() != p {
            return Err(DoaError::domain("covariance size does not match the array"));
        }
        let a = geom.steering_matrix(cov.frequency, &initial_doas)?.into_entries();
        let t = focusing_from(&reference, &a)?;
        focused += &t * &cov.matrix * t.adjoint();
    }
    if !linalg::is_hermitian(&focused, 1e-9) {
        return Err(DoaError::Numerical("focused covariance is not Hermitian".into()));
    }
    let focused = (&focused + focused.adjoint()).scale(0.5);
    let (values, vectors) = linalg::hermitian_eigen(&focused)?;
    let trace: f64 = values.iter().sum();
    if values[p - 1] < -1e-9 * trace.abs().max(f64::MIN_POSITIVE) {
        return Err(DoaError::Numerical("focused covariance is not positive semidefinite".into()));
    }
    let noise = vectors.columns(q, p - q).into_owned();

    let steps = (180.0 / cfg.grid_resolution).round() as usize;
    let grid: Vec<f64> = (0..=steps).map(|k| (-90.0 + k as f64 * cfg.grid_resolution).min(90.0)).collect();
    let step = -2.0 * std::f64::consts::PI * f_ref * geom.spacing() / geom.sound_speed();
    let mut a = vec![C64::new(0.0, 0.0); p];
    let spectrum: Vec<f64> = grid
        .iter()
        .map(|&theta| {
            let z = C64::from_polar(1.0, step * theta.to_radians().sin());
            let mut acc = C64::new(1.0, 0.0);
            for entry in a.iter_mut() {
                *entry = acc;
                acc *= z;
            }
            let mut energy = 0.0;
            for col in noise.column_iter() {
                let proj: C64 = col.iter().zip(&a).map(|(e, x)| e.conj() * x).sum();
                energy += proj.norm_sqr();
            }
            1.0 / energy.max(1e-300)
        })
        .collect();

    let mut peaks: Vec<usize> = (0..spectrum.len())
        .filter(|&k| {
            let left = k == 0 || spectrum[k] > spectrum[k - 1];
            let right = k + 1 == spectrum.len() || spectrum[k] >= spectrum[k + 1];
            left && right
        })
        .collect();
    peaks.sort_by(|&a, &b| spectrum[b].total_cmp(&spectrum[a]).then(a.cmp(&b)));
    peaks.truncate(q);
    let mut doas: Vec<f64> = peaks.iter().map(|&k| grid[k]).collect();
    doas.sort_by(f64::total_cmp);
    Ok(CssEstimate { insufficient_peaks: doas.len() < q, doas, initial_doas, reference_frequency: f_ref, grid, spectrum })
}
