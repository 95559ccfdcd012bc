//! Signal-subspace rotation and wideband covariance accumulation.
//!
//! Each bin covariance is split into signal and noise subspaces. The signal
//! vectors are rotated to a common reference frequency `f_ref` by scaling the
//! phase of every element by `f_ref / f_i` (magnitudes untouched), and a
//! covariance is rebuilt from the rotated vectors. The trace-weighted sum of
//! these reconstructions is a wideband covariance whose dominant subspace is
//! spanned by the steering vectors at `f_ref`.
//!
//! # Phase unwrapping
//!
//! Element phases are unwrapped down each column (cumulative principal
//! arguments of adjacent-element ratios) before scaling. The per-element
//! principal argument wraps once the total phase across the array exceeds π,
//! which for a 5-element, 4.4 cm array happens above ~2 kHz near endfire,
//! long before spatial aliasing.
//!
//! # Source-aligned basis
//!
//! Scaling phases only maps steering vectors onto steering vectors; with two
//! or more sources the eigenvectors are mixtures and do not rotate
//! coherently. [`Basis::Aligned`] (the default) first re-expresses the signal
//! subspace in the eigenvectors `T` of the shift operator `Ψ = Us1⁺·Us2`,
//! i.e. `B = Us·T` with columns proportional to the individual steering
//! vectors, and carries the eigenvalues along as the similar matrix
//! `K = B⁺·Us·Λs·Usᴴ·B`. Reconstruction is `B′·K·B′⁺`, which equals
//! `Us·Λs·Usᴴ` when no rotation is applied and has the same trace. With one
//! source the two bases coincide.

use log::{debug, warn};

use crate::error::{DoaError, Result};
use crate::linalg::{self, CMatrix, CVector, C64};
use crate::spectral::BinCovariance;

const HERMITIAN_TOL: f64 = 1e-8;

/// Singular-value ratio σ_Q/σ_{Q+1} below which the model order is flagged
/// as ambiguous.
pub const AMBIGUOUS_GAP: f64 = 1.5;

/// Eigendecomposition of one bin covariance, split at the model order.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceEstimate {
    pub frequency: f64,
    /// P×Q, orthonormal, gauge fixed.
    pub signal_vectors: CMatrix,
    /// P×(P−Q).
    pub noise_vectors: CMatrix,
    /// Descending.
    pub signal_values: Vec<f64>,
    pub noise_values: Vec<f64>,
}

impl SubspaceEstimate {
    pub fn num_sources(&self) -> usize {
        self.signal_values.len()
    }

    pub fn num_sensors(&self) -> usize {
        self.signal_vectors.nrows()
    }

    /// `Us·Λs·Usᴴ`.
    pub fn signal_covariance(&self) -> CMatrix {
        let scaled = CMatrix::from_fn(self.num_sensors(), self.num_sources(), |i, j| {
            self.signal_vectors[(i, j)] * self.signal_values[j]
        });
        scaled * self.signal_vectors.adjoint()
    }
}

/// Signal subspace rotated to a reference frequency, with the Q×Q coupling
/// matrix needed to rebuild the covariance (`diag(Λs)` in the eigen basis).
#[derive(Debug, Clone, PartialEq)]
pub struct RotatedSubspace {
    pub reference_frequency: f64,
    pub source_frequency: f64,
    pub vectors: CMatrix,
    pub values: Vec<f64>,
    pub coupling: CMatrix,
}

impl RotatedSubspace {
    pub fn num_sources(&self) -> usize {
        self.vectors.ncols()
    }
}

/// Basis in which the signal subspace is rotated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Basis {
    /// Shift-operator eigenvectors (one column per source); falls back to the
    /// eigen basis when that basis is ill conditioned.
    #[default]
    Aligned,
    /// Covariance eigenvectors, rotated as they are.
    Eigen,
}

/// Which part of each bin is rebuilt after rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reconstruction {
    /// `B′·K·B′⁺` from the signal subspace alone.
    #[default]
    SignalOnly,
    /// All P vectors and eigenvalues, noise subspace included.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WidebandOptions {
    pub basis: Basis,
    pub reconstruction: Reconstruction,
}

/// Accumulated covariance referenced to one frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct WidebandCovariance {
    pub matrix: CMatrix,
    pub reference_frequency: f64,
    pub bins_accumulated: usize,
    /// Sum of the bin weights before normalization.
    pub total_weight: f64,
    /// Bins dropped because their rotated basis was rank deficient.
    pub skipped_bins: usize,
}

/// Dominant subspace of a [`WidebandCovariance`].
#[derive(Debug, Clone, PartialEq)]
pub struct WidebandSubspace {
    pub vectors: CMatrix,
    pub reference_frequency: f64,
    pub singular_values: Vec<f64>,
    /// σ_Q / σ_{Q+1}.
    pub gap: f64,
    pub ambiguous_order: bool,
}

/// Hermitian eigendecomposition with the top `q` eigenpairs as the signal
/// subspace.
pub fn decompose(cov: &BinCovariance, q: usize) -> Result<SubspaceEstimate> {
    let p = cov.num_sensors();
    if q == 0 || q >= p {
        return Err(DoaError::domain(format!("source count must satisfy 1 <= Q < P = {p}, got Q = {q}")));
    }
    if !linalg::is_hermitian(&cov.matrix, HERMITIAN_TOL) {
        return Err(DoaError::domain(format!("covariance at {} Hz is not Hermitian", cov.frequency)));
    }
    let (values, vectors) = linalg::hermitian_eigen(&cov.matrix)?;
    Ok(SubspaceEstimate {
        frequency: cov.frequency,
        signal_vectors: vectors.columns(0, q).into_owned(),
        noise_vectors: vectors.columns(q, p - q).into_owned(),
        signal_values: values[..q].to_vec(),
        noise_values: values[q..].to_vec(),
    })
}

/// Raises every element to the power `ratio`: magnitude kept, phase
/// (unwrapped down each column) multiplied by `ratio`. `ratio == 1` returns
/// an exact copy.
pub fn rotate_phases(m: &CMatrix, ratio: f64) -> CMatrix {
    let mut out = m.clone();
    if ratio == 1.0 {
        return out;
    }
    for (src, mut dst) in m.column_iter().zip(out.column_iter_mut()) {
        let mut phase = 0.0;
        for p in 0..src.len() {
            let z = src[p];
            phase = if p == 0 { z.arg() } else { phase + (z * src[p - 1].conj()).arg() };
            dst[p] = C64::from_polar(z.norm(), phase * ratio);
        }
    }
    out
}

fn check_frequencies(source: f64, reference: f64) -> Result<f64> {
    if !(source > 0.0 && source.is_finite() && reference > 0.0 && reference.is_finite()) {
        return Err(DoaError::domain(format!(
            "rotation needs positive frequencies, got {source} Hz -> {reference} Hz"
        )));
    }
    Ok(reference / source)
}

/// Rotates the eigenvectors themselves (the literal form; exact for one
/// source only).
pub fn rotate_subspace(est: &SubspaceEstimate, f_ref: f64) -> Result<RotatedSubspace> {
    let ratio = check_frequencies(est.frequency, f_ref)?;
    Ok(RotatedSubspace {
        reference_frequency: f_ref,
        source_frequency: est.frequency,
        vectors: rotate_phases(&est.signal_vectors, ratio),
        values: est.signal_values.clone(),
        coupling: diagonal(&est.signal_values),
    })
}

/// Rotates the source-aligned basis of the signal subspace.
pub fn rotate_aligned(est: &SubspaceEstimate, f_ref: f64) -> Result<RotatedSubspace> {
    let ratio = check_frequencies(est.frequency, f_ref)?;
    let (vectors, coupling) = representation(est, Basis::Aligned);
    Ok(RotatedSubspace {
        reference_frequency: f_ref,
        source_frequency: est.frequency,
        vectors: rotate_phases(&vectors, ratio),
        values: est.signal_values.clone(),
        coupling,
    })
}

/// Re-expresses the orthonormal basis `u` (P×Q) of the dominant subspace of
/// `m` in shift-operator eigenvectors. Returns `(B, K)` with unit-norm,
/// gauge-fixed columns of `B` and `K = B⁺·m·B`.
pub fn align_signal_basis(u: &CMatrix, m: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    let basis = aligned_basis(u)?;
    let (basis_pinv, _) = linalg::pseudo_inverse(&basis)?;
    let coupling = basis_pinv * (m * &basis);
    Ok((basis, coupling))
}

/// [`align_signal_basis`] for `m = U·diag(values)·Uᴴ`. With `B = U·C` the
/// coupling reduces to the Q×Q product `C⁻¹·diag(values)·C`.
fn align_eigenbasis(u: &CMatrix, values: &[f64]) -> Result<(CMatrix, CMatrix)> {
    let basis = aligned_basis(u)?;
    let c = u.adjoint() * &basis;
    let (c_inv, _) = linalg::pseudo_inverse(&c)?;
    Ok((basis, c_inv * diagonal(values) * c))
}

fn aligned_basis(u: &CMatrix) -> Result<CMatrix> {
    let (p, q) = u.shape();
    if q == 0 || q >= p {
        return Err(DoaError::domain(format!("basis must have 1..{p} columns, got {q}")));
    }
    if q == 1 {
        return Ok(u.clone());
    }
    let (upper_pinv, _) = linalg::pseudo_inverse(&u.rows(0, p - 1).into_owned())?;
    let shift = upper_pinv * u.rows(1, p - 1);
    let (values, t) = linalg::general_eigen(&shift)?;
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| values[a].arg().total_cmp(&values[b].arg()).then(a.cmp(&b)));
    let mut basis = CMatrix::zeros(p, q);
    for (dst, &src) in order.iter().enumerate() {
        let col = u * t.column(src);
        let norm = col.norm();
        if !(norm > 0.0) {
            return Err(DoaError::DegenerateSubspace("zero aligned basis vector".into()));
        }
        basis.set_column(dst, &col.unscale(norm));
    }
    linalg::gauge_fix_columns(&mut basis);
    Ok(basis)
}

/// Signal basis and coupling for one bin.
fn representation(est: &SubspaceEstimate, basis: Basis) -> (CMatrix, CMatrix) {
    if basis == Basis::Aligned && est.num_sources() > 1 {
        match align_eigenbasis(&est.signal_vectors, &est.signal_values) {
            Ok(aligned) => return aligned,
            Err(e) => debug!("{} Hz: aligned basis unavailable ({e}); using eigenvectors", est.frequency),
        }
    }
    (est.signal_vectors.clone(), diagonal(&est.signal_values))
}

fn diagonal(values: &[f64]) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_iterator(values.len(), values.iter().map(|&v| C64::from(v))))
}

fn block_diagonal(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let n = a.nrows() + b.nrows();
    let mut out = CMatrix::zeros(n, n);
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(b);
    out
}

/// Trace of the signal eigenvalues (never negative).
pub fn bin_weight(est: &SubspaceEstimate) -> f64 {
    est.signal_values.iter().sum::<f64>().max(0.0)
}

/// Weighted sum of single-source rotated vectors, each gauge fixed first,
/// normalized to unit length.
pub fn accumulate_single_source(rotated: &[RotatedSubspace], weights: &[f64]) -> Result<CVector> {
    if rotated.is_empty() || rotated.len() != weights.len() {
        return Err(DoaError::domain(format!(
            "need matching, non-empty lists ({} subspaces, {} weights)",
            rotated.len(),
            weights.len()
        )));
    }
    let f_ref = rotated[0].reference_frequency;
    let p = rotated[0].vectors.nrows();
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(DoaError::domain("bin weights must be finite and non-negative"));
    }
    let mut sum = CVector::zeros(p);
    for (rot, &w) in rotated.iter().zip(weights) {
        if rot.num_sources() != 1 || rot.vectors.nrows() != p {
            return Err(DoaError::domain("single-source accumulation needs P×1 subspaces of equal size"));
        }
        if (rot.reference_frequency - f_ref).abs() > 1e-9 * f_ref {
            return Err(DoaError::domain(format!(
                "mixed reference frequencies {} Hz and {} Hz",
                f_ref, rot.reference_frequency
            )));
        }
        let mut v = rot.vectors.column(0).into_owned();
        linalg::gauge_fix(v.as_mut_slice());
        sum.axpy(C64::from(w), &v, C64::from(1.0));
    }
    let norm = sum.norm();
    if !(norm > 0.0) {
        return Err(DoaError::domain("all bin weights are zero"));
    }
    Ok(sum.unscale(norm))
}

/// `B′·K·B′⁺`; fails when `B′` is rank deficient.
pub fn reconstruct_covariance(rotated: &RotatedSubspace) -> Result<CMatrix> {
    if rotated.num_sources() == 0 {
        return Err(DoaError::domain("empty subspace"));
    }
    let (pinv, _) = linalg::pseudo_inverse(&rotated.vectors)?;
    Ok(&rotated.vectors * &rotated.coupling * pinv)
}

/// Decompose → rotate → reconstruct for one already decomposed bin.
pub fn reconstruct_bin(est: &SubspaceEstimate, f_ref: f64, opts: WidebandOptions) -> Result<CMatrix> {
    let ratio = check_frequencies(est.frequency, f_ref)?;
    let (vectors, coupling) = representation(est, opts.basis);
    let (vectors, coupling) = match opts.reconstruction {
        Reconstruction::SignalOnly => (vectors, coupling),
        Reconstruction::Full => {
            let mut full = CMatrix::zeros(est.num_sensors(), est.num_sensors());
            full.columns_mut(0, vectors.ncols()).copy_from(&vectors);
            full.columns_mut(vectors.ncols(), est.noise_vectors.ncols()).copy_from(&est.noise_vectors);
            (full, block_diagonal(&coupling, &diagonal(&est.noise_values)))
        }
    };
    let rotated = rotate_phases(&vectors, ratio);
    let (pinv, _) = linalg::pseudo_inverse(&rotated)?;
    Ok(rotated * coupling * pinv)
}

fn check_bins(covs: &[BinCovariance]) -> Result<usize> {
    let p = covs.first().ok_or_else(|| DoaError::domain("no frequency bins to accumulate"))?.num_sensors();
    for cov in covs {
        if cov.num_sensors() != p {
            return Err(DoaError::domain("bin covariances have different sizes"));
        }
        if !(cov.frequency > 0.0 && cov.frequency.is_finite()) {
            return Err(DoaError::domain(format!("bin frequency must be positive, got {}", cov.frequency)));
        }
    }
    Ok(p)
}

/// Batch accumulation `R″ = Σ (β_i/Σβ)·R′_i` with every bin rotated to
/// `f_ref`. Rank-deficient bins are skipped with a warning. Callers are
/// responsible for keeping `f_ref` below the spatial-aliasing limit.
pub fn accumulate_wideband(
    covs: &[BinCovariance],
    q: usize,
    f_ref: f64,
    opts: WidebandOptions,
) -> Result<WidebandCovariance> {
    let p = check_bins(covs)?;
    if let Some(cov) = covs.iter().find(|c| c.frequency > f_ref * (1.0 + 1e-12)) {
        return Err(DoaError::domain(format!(
            "bin at {} Hz lies above the reference frequency {f_ref} Hz",
            cov.frequency
        )));
    }
    let mut matrix = CMatrix::zeros(p, p);
    let (mut total, mut used, mut skipped) = (0.0, 0, 0);
    for cov in covs {
        let est = decompose(cov, q)?;
        let beta = bin_weight(&est);
        match reconstruct_bin(&est, f_ref, opts) {
            Ok(r) => {
                matrix += r.scale(beta);
                total += beta;
                used += 1;
            }
            Err(DoaError::DegenerateSubspace(msg)) => {
                warn!("skipping bin at {} Hz: {msg}", cov.frequency);
                skipped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    finish(matrix, f_ref, used, total, skipped)
}

fn finish(matrix: CMatrix, f_ref: f64, used: usize, total: f64, skipped: usize) -> Result<WidebandCovariance> {
    if used == 0 {
        return Err(DoaError::DegenerateSubspace("every bin had a rank-deficient rotated subspace".into()));
    }
    if !(total > 0.0) {
        return Err(DoaError::domain("all bin weights are zero"));
    }
    let matrix = matrix.unscale(total);
    if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(DoaError::Numerical("non-finite wideband covariance".into()));
    }
    Ok(WidebandCovariance { matrix, reference_frequency: f_ref, bins_accumulated: used, total_weight: total, skipped_bins: skipped })
}

/// Iterative accumulation over bins sorted by strictly ascending frequency.
///
/// The first bin is rotated to the second bin's frequency; every later bin is
/// added at its own frequency, after which the accumulator is re-expressed in
/// its own dominant subspace and rotated one step up the bin grid. The result
/// is referenced to the highest bin. With two bins this is exactly
/// [`accumulate_wideband`] at the higher frequency.
pub fn accumulate_iterative(covs: &[BinCovariance], q: usize, opts: WidebandOptions) -> Result<WidebandCovariance> {
    let p = check_bins(covs)?;
    if covs.len() < 2 {
        return Err(DoaError::domain("iterative accumulation needs at least two bins"));
    }
    if covs.windows(2).any(|w| !(w[1].frequency > w[0].frequency)) {
        return Err(DoaError::domain("bins must be sorted by strictly ascending frequency"));
    }
    let mut acc = CMatrix::zeros(p, p);
    let (mut total, mut used, mut skipped) = (0.0, 0, 0);
    let last = covs.len() - 1;
    for (i, cov) in covs.iter().enumerate() {
        let est = decompose(cov, q)?;
        let beta = bin_weight(&est);
        let target = covs[i.max(1)].frequency;
        match reconstruct_bin(&est, target, opts) {
            Ok(r) => {
                acc += r.scale(beta);
                total += beta;
                used += 1;
            }
            Err(DoaError::DegenerateSubspace(msg)) => {
                warn!("skipping bin at {} Hz: {msg}", cov.frequency);
                skipped += 1;
            }
            Err(e) => return Err(e),
        }
        if i >= 1 && i < last && total > 0.0 {
            acc = step_accumulator(&acc, q, covs[i + 1].frequency / cov.frequency, opts)?;
        }
    }
    finish(acc, covs[last].frequency, used, total, skipped)
}

/// Re-expresses the accumulator in its dominant subspace and rotates it by
/// `ratio`.
fn step_accumulator(acc: &CMatrix, q: usize, ratio: f64, opts: WidebandOptions) -> Result<CMatrix> {
    let p = acc.nrows();
    let keep = match opts.reconstruction {
        Reconstruction::SignalOnly => q,
        Reconstruction::Full => p,
    };
    let (u, _) = linalg::left_singular_vectors(acc, keep)?;
    let mut basis = u.clone();
    if opts.basis == Basis::Aligned && q > 1 {
        match align_signal_basis(&u.columns(0, q).into_owned(), acc) {
            Ok((aligned, _)) => basis.columns_mut(0, q).copy_from(&aligned),
            Err(e) => debug!("accumulator: aligned basis unavailable ({e}); using singular vectors"),
        }
    }
    let (pinv, _) = linalg::pseudo_inverse(&basis)?;
    let coupling = &pinv * acc * &basis;
    let rotated = rotate_phases(&basis, ratio);
    let (rotated_pinv, _) = linalg::pseudo_inverse(&rotated)?;
    Ok(rotated * coupling * rotated_pinv)
}

/// Top-`q` left singular vectors of the wideband covariance.
pub fn wideband_signal_subspace(wb: &WidebandCovariance, q: usize) -> Result<WidebandSubspace> {
    let p = wb.matrix.nrows();
    if q == 0 || q >= p {
        return Err(DoaError::domain(format!("source count must satisfy 1 <= Q < P = {p}, got Q = {q}")));
    }
    let (vectors, singular_values) = linalg::left_singular_vectors(&wb.matrix, q)?;
    let gap = if singular_values[q] > 0.0 { singular_values[q - 1] / singular_values[q] } else { f64::INFINITY };
    Ok(WidebandSubspace {
        vectors,
        reference_frequency: wb.reference_frequency,
        singular_values,
        gap,
        ambiguous_order: gap < AMBIGUOUS_GAP,
    })
}
