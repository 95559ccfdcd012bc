//! ESPRIT direction finding: the narrowband solver and the two wideband
//! pipelines built on rotated signal subspaces.
//!
//! The two subarrays are the first and last `P − 1` sensors. The shift
//! operator `Ψ` solving `Es2 ≈ Es1·Ψ` has eigenvalues `λ_q = e^{−jω_q}` with
//! `ω_q = 2π·f·Δd·sin θ_q / c`, so `θ_q = asin(−arg λ_q · c / (2π·f·Δd))`.
//! For rotated subspaces `f` is the reference frequency the subspace was
//! rotated to.

use std::f64::consts::PI;

use crate::error::{DoaError, Result};
use crate::geometry::ArrayGeometry;
use crate::linalg::{self, CMatrix, C64};
use crate::spectral::BinCovariance;
use crate::subspace::{self, WidebandOptions, AMBIGUOUS_GAP};

/// How `Es2 ≈ Es1·Ψ` is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Solver {
    LeastSquares,
    #[default]
    TotalLeastSquares,
}

/// Accumulation scheme for the multi-source pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AccumulationMode {
    #[default]
    Batch,
    Iterative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EspritSolution {
    /// Eigenvalues of `Ψ`, paired with `doas`.
    pub psi_eigenvalues: Vec<C64>,
    /// Degrees, ascending.
    pub doas: Vec<f64>,
    pub frequency_used: f64,
    pub solver: Solver,
    /// Eigen- or singular-value ratio between the last signal and first noise
    /// component; infinite when unknown or exact.
    pub subspace_gap: f64,
    /// A sine argument had to be clamped to ±1, or the frequency lies above
    /// the array's alias-free limit so the estimates may be aliased images.
    pub out_of_range: bool,
    /// `subspace_gap` below [`AMBIGUOUS_GAP`].
    pub ambiguous_order: bool,
}

impl EspritSolution {
    pub fn is_reliable(&self) -> bool {
        !self.out_of_range && !self.ambiguous_order
    }
}

/// ESPRIT on a P×Q signal subspace at frequency `f`.
pub fn esprit_from_subspace(es: &CMatrix, f: f64, geom: &ArrayGeometry, solver: Solver) -> Result<EspritSolution> {
    let (p, q) = es.shape();
    if p != geom.num_sensors() {
        return Err(DoaError::domain(format!("subspace has {p} rows but the array has {} sensors", geom.num_sensors())));
    }
    if q == 0 || p < q + 1 {
        return Err(DoaError::domain(format!("ESPRIT needs 1 <= Q < P, got Q = {q}, P = {p}")));
    }
    if !(f > 0.0 && f.is_finite()) {
        return Err(DoaError::domain(format!("frequency must be positive, got {f}")));
    }
    let upper = es.rows(0, p - 1).into_owned();
    let lower = es.rows(1, p - 1).into_owned();
    let psi = match solver {
        Solver::LeastSquares => linalg::pseudo_inverse(&upper)?.0 * lower,
        Solver::TotalLeastSquares => tls_shift(&upper, &lower)?,
    };
    let eigenvalues = linalg::general_eigenvalues(&psi)?;

    let scale = geom.sound_speed() / (2.0 * PI * f * geom.spacing());
    let mut out_of_range = f > geom.lowest_aliasing_frequency();
    let mut pairs: Vec<(f64, C64)> = eigenvalues
        .iter()
        .map(|&lambda| {
            let s = -lambda.arg() * scale;
            if s.abs() > 1.0 {
                out_of_range = true;
            }
            (s.clamp(-1.0, 1.0).asin().to_degrees(), lambda)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(EspritSolution {
        psi_eigenvalues: pairs.iter().map(|p| p.1).collect(),
        doas: pairs.iter().map(|p| p.0).collect(),
        frequency_used: f,
        solver,
        subspace_gap: f64::INFINITY,
        out_of_range,
        ambiguous_order: false,
    })
}

/// Total-least-squares shift operator `Ψ = −V12·V22⁻¹` from the right
/// singular vectors of `[Es1 | Es2]`.
fn tls_shift(upper: &CMatrix, lower: &CMatrix) -> Result<CMatrix> {
    let (rows, q) = upper.shape();
    // Zero rows leave the right singular vectors unchanged and guarantee a
    // full 2Q×2Q V when there are fewer equations than unknowns.
    let mut stacked = CMatrix::zeros(rows.max(2 * q), 2 * q);
    stacked.view_mut((0, 0), (rows, q)).copy_from(upper);
    stacked.view_mut((0, q), (rows, q)).copy_from(lower);
    let v = linalg::svd(&stacked)?.v;
    let v12 = v.view((0, q), (q, q)).into_owned();
    let v22 = v.view((q, q), (q, q)).into_owned();
    let (v22_inv, _) = linalg::pseudo_inverse(&v22)?;
    Ok(-(v12 * v22_inv))
}

fn with_gap(mut sol: EspritSolution, gap: f64) -> EspritSolution {
    sol.subspace_gap = gap;
    sol.ambiguous_order = gap < AMBIGUOUS_GAP;
    sol
}

/// Decompose one bin and run ESPRIT at its own frequency.
pub fn narrowband_esprit(cov: &BinCovariance, q: usize, geom: &ArrayGeometry, solver: Solver) -> Result<EspritSolution> {
    let est = subspace::decompose(cov, q)?;
    let sol = esprit_from_subspace(&est.signal_vectors, cov.frequency, geom, solver)?;
    let (signal, noise) = (est.signal_values[q - 1], est.noise_values[0]);
    let gap = if noise > 0.0 { signal / noise } else { f64::INFINITY };
    Ok(with_gap(sol, gap))
}

fn check_band(covs: &[BinCovariance], geom: &ArrayGeometry, f_ref: f64) -> Result<()> {
    if covs.is_empty() {
        return Err(DoaError::domain("no frequency bins"));
    }
    let limit = geom.lowest_aliasing_frequency();
    let top = covs.iter().map(|c| c.frequency).fold(f_ref, f64::max);
    if top > limit {
        return Err(DoaError::domain(format!(
            "band reaches {top} Hz, above the alias-free limit {limit:.3} Hz of this array"
        )));
    }
    Ok(())
}

fn highest_frequency(covs: &[BinCovariance]) -> f64 {
    covs.iter().map(|c| c.frequency).fold(0.0, f64::max)
}

/// Single-source pipeline: per-bin Q=1 subspaces rotated to `f_ref`, summed
/// with trace weights, then ESPRIT on the accumulated vector at `f_ref`.
pub fn wideband_esprit_single(
    covs: &[BinCovariance],
    geom: &ArrayGeometry,
    f_ref: f64,
    solver: Solver,
) -> Result<EspritSolution> {
    check_band(covs, geom, f_ref)?;
    let mut rotated = Vec::with_capacity(covs.len());
    let mut weights = Vec::with_capacity(covs.len());
    for cov in covs {
        let est = subspace::decompose(cov, 1)?;
        weights.push(subspace::bin_weight(&est));
        rotated.push(subspace::rotate_subspace(&est, f_ref)?);
    }
    let v = subspace::accumulate_single_source(&rotated, &weights)?;
    esprit_from_subspace(&CMatrix::from_column_slice(v.len(), 1, v.as_slice()), f_ref, geom, solver)
}

/// Multi-source pipeline with the default rotation options; the reference
/// is the highest bin.
pub fn wideband_esprit_multi(
    covs: &[BinCovariance],
    q: usize,
    geom: &ArrayGeometry,
    mode: AccumulationMode,
    solver: Solver,
) -> Result<EspritSolution> {
    wideband_esprit_multi_with(covs, q, geom, mode, solver, WidebandOptions::default())
}

/// Wideband covariance accumulation (batch or iterative), dominant-subspace
/// extraction and ESPRIT at the accumulator's reference frequency.
pub fn wideband_esprit_multi_with(
    covs: &[BinCovariance],
    q: usize,
    geom: &ArrayGeometry,
    mode: AccumulationMode,
    solver: Solver,
    options: WidebandOptions,
) -> Result<EspritSolution> {
    let f_ref = highest_frequency(covs);
    check_band(covs, geom, f_ref)?;
    let wb = match mode {
        AccumulationMode::Batch => subspace::accumulate_wideband(covs, q, f_ref, options)?,
        AccumulationMode::Iterative => subspace::accumulate_iterative(covs, q, options)?,
    };
    let sub = subspace::wideband_signal_subspace(&wb, q)?;
    let sol = esprit_from_subspace(&sub.vectors, sub.reference_frequency, geom, solver)?;
    Ok(with_gap(sol, sub.gap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const DF: f64 = 15.625;

    fn geom() -> ArrayGeometry {
        ArrayGeometry::new(5, 0.044, 343.0).unwrap()
    }

    fn orthonormal_steering(f: f64, doas: &[f64]) -> CMatrix {
        let a = geom().steering_matrix(f, doas).unwrap().into_entries();
        linalg::left_singular_vectors(&a, doas.len()).unwrap().0
    }

    fn bins(range: std::ops::RangeInclusive<usize>, doas: &[f64], noise: f64) -> Vec<BinCovariance> {
        let powers = vec![1.0; doas.len()];
        range.map(|b| BinCovariance::model(&geom(), b as f64 * DF, b, doas, &powers, noise).unwrap()).collect()
    }

    #[test]
    fn noiseless_steering_subspace_both_solvers() {
        let es = orthonormal_steering(2000.0, &[-45.0, 45.0]);
        for solver in [Solver::LeastSquares, Solver::TotalLeastSquares] {
            let sol = esprit_from_subspace(&es, 2000.0, &geom(), solver).unwrap();
            assert!((sol.doas[0] + 45.0).abs() < 1e-6 && (sol.doas[1] - 45.0).abs() < 1e-6, "{:?}", sol.doas);
            assert!(sol.psi_eigenvalues.iter().all(|l| (l.norm() - 1.0).abs() < 1e-6));
            assert!(!sol.out_of_range);
        }
    }

    #[test]
    fn broadside_gives_unit_eigenvalue() {
        let es = orthonormal_steering(1500.0, &[0.0]);
        let sol = esprit_from_subspace(&es, 1500.0, &geom(), Solver::default()).unwrap();
        assert!((sol.psi_eigenvalues[0] - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(sol.doas[0].abs() < 1e-9);
    }

    #[test]
    fn eigenvalue_phase_matches_reference_ipd() {
        let (f, doa) = (3500.0, 37.0);
        let sol = esprit_from_subspace(&orthonormal_steering(f, &[doa]), f, &geom(), Solver::default()).unwrap();
        let expect = -2.0 * PI * f * 0.044 * doa.to_radians().sin() / 343.0;
        assert!((sol.psi_eigenvalues[0].arg() - expect).abs() < 1e-8);
    }

    #[test]
    fn narrowband_on_model_covariance() {
        let cov = BinCovariance::model(&geom(), 2000.0, 128, &[-45.0, 45.0], &[1.0, 1.0], 0.01).unwrap();
        let sol = narrowband_esprit(&cov, 2, &geom(), Solver::default()).unwrap();
        assert!((sol.doas[0] + 45.0).abs() < 0.1 && (sol.doas[1] - 45.0).abs() < 0.1);
        assert!(sol.is_reliable());
    }

    #[test]
    fn aliased_frequency_is_flagged() {
        let cov = BinCovariance::model(&geom(), 5000.0, 320, &[80.0], &[1.0], 0.01).unwrap();
        let sol = narrowband_esprit(&cov, 1, &geom(), Solver::default()).unwrap();
        assert!(sol.out_of_range);
        // The estimate is an aliased image, far from the truth.
        assert!((sol.doas[0] - 80.0).abs() > 30.0);
    }

    #[test]
    fn clamped_sine_is_flagged() {
        // An eigenvalue phase of π at 1 kHz would need |sin θ| ≈ 3.9.
        let es = CMatrix::from_fn(5, 1, |p, _| C64::from_polar(1.0, PI * p as f64)).unscale(5f64.sqrt());
        let sol = esprit_from_subspace(&es, 1000.0, &geom(), Solver::default()).unwrap();
        assert!(sol.out_of_range);
        assert!((sol.doas[0].abs() - 90.0).abs() < 1e-9);
    }

    #[test]
    fn white_noise_covariance_has_no_gap() {
        let cov = BinCovariance::from_matrix(1000.0, 64, CMatrix::identity(5, 5)).unwrap();
        let sol = narrowband_esprit(&cov, 1, &geom(), Solver::default()).unwrap();
        assert!((sol.subspace_gap - 1.0).abs() < 1e-9);
        assert!(sol.ambiguous_order && !sol.is_reliable());
    }

    #[test]
    fn rejects_bad_shapes() {
        let g = geom();
        assert!(esprit_from_subspace(&CMatrix::zeros(4, 1), 1000.0, &g, Solver::default()).is_err());
        assert!(esprit_from_subspace(&CMatrix::zeros(5, 5), 1000.0, &g, Solver::default()).is_err());
        assert!(esprit_from_subspace(&orthonormal_steering(1000.0, &[0.0]), 0.0, &g, Solver::default()).is_err());
    }

    #[test]
    fn single_source_pipeline_on_clean_bins() {
        let covs = bins(7..=56, &[45.0], 0.0);
        let f_ref = 56.0 * DF;
        let sol = wideband_esprit_single(&covs, &geom(), f_ref, Solver::default()).unwrap();
        assert!((sol.doas[0] - 45.0).abs() < 1e-3);
        let mirrored = wideband_esprit_single(&bins(7..=56, &[-45.0], 0.0), &geom(), f_ref, Solver::default()).unwrap();
        assert!((mirrored.doas[0] + sol.doas[0]).abs() < 1e-9);
    }

    #[test]
    fn repeated_bin_equals_narrowband_at_reference() {
        let cov = BinCovariance::model(&geom(), 3000.0, 192, &[-25.0], &[1.0], 0.2).unwrap();
        let covs = vec![cov.clone(); 10];
        let wide = wideband_esprit_single(&covs, &geom(), 3000.0, Solver::default()).unwrap();
        let narrow = narrowband_esprit(&cov, 1, &geom(), Solver::default()).unwrap();
        assert!((wide.doas[0] - narrow.doas[0]).abs() < 1e-9);
    }

    #[test]
    fn multi_source_pipelines_on_clean_bins() {
        let covs = bins(144..=243, &[-45.0, 45.0], 0.0);
        let batch = wideband_esprit_multi(&covs, 2, &geom(), AccumulationMode::Batch, Solver::default()).unwrap();
        let iter = wideband_esprit_multi(&covs, 2, &geom(), AccumulationMode::Iterative, Solver::default()).unwrap();
        for sol in [&batch, &iter] {
            assert!((sol.doas[0] + 45.0).abs() < 0.01 && (sol.doas[1] - 45.0).abs() < 0.01, "{:?}", sol.doas);
        }
        for k in 0..2 {
            assert!((batch.doas[k] - iter.doas[k]).abs() < 0.01);
        }
        assert_eq!(batch.frequency_used, 243.0 * DF);
    }

    #[test]
    fn multi_path_with_one_source_matches_single_path() {
        let covs = bins(7..=243, &[-30.0], 0.05);
        let f_ref = 243.0 * DF;
        let single = wideband_esprit_single(&covs, &geom(), f_ref, Solver::default()).unwrap();
        let multi = wideband_esprit_multi(&covs, 1, &geom(), AccumulationMode::Batch, Solver::default()).unwrap();
        assert!((single.doas[0] - multi.doas[0]).abs() < 0.1);
    }

    #[test]
    fn wideband_rejects_aliasing_band() {
        let covs = bins(240..=260, &[10.0], 0.1);
        let err = wideband_esprit_multi(&covs, 1, &geom(), AccumulationMode::Batch, Solver::default()).unwrap_err();
        assert!(err.to_string().contains("alias"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn solvers_agree_and_ignore_phase_and_scale(
            a in -80.0f64..-5.0, b in 5.0f64..80.0, f in 300.0f64..3800.0,
            phase in -PI..PI, scale in 0.1f64..10.0
        ) {
            let es = orthonormal_steering(f, &[a, b]);
            let ls = esprit_from_subspace(&es, f, &geom(), Solver::LeastSquares).unwrap();
            let tls = esprit_from_subspace(&es, f, &geom(), Solver::TotalLeastSquares).unwrap();
            let twisted = es.map(|z| z * C64::from_polar(scale, phase));
            let moved = esprit_from_subspace(&twisted, f, &geom(), Solver::TotalLeastSquares).unwrap();
            for k in 0..2 {
                prop_assert!((ls.doas[k] - tls.doas[k]).abs() < 1e-8);
                prop_assert!((moved.doas[k] - tls.doas[k]).abs() < 1e-8);
            }
            prop_assert!((tls.doas[0] - a).abs() < 1e-6 && (tls.doas[1] - b).abs() < 1e-6);
            prop_assert!(tls.doas[0] <= tls.doas[1]);
        }

        #[test]
        fn doas_pair_with_their_eigenvalues(doas in proptest::collection::vec(-85.0f64..85.0, 1..4), f in 500.0f64..3800.0) {
            let mut sorted = doas.clone();
            sorted.sort_by(f64::total_cmp);
            prop_assume!(sorted.windows(2).all(|w| w[1] - w[0] > 5.0));
            let sol = esprit_from_subspace(&orthonormal_steering(f, &doas), f, &geom(), Solver::default()).unwrap();
            let scale = 343.0 / (2.0 * PI * f * 0.044);
            for (d, l) in sol.doas.iter().zip(&sol.psi_eigenvalues) {
                prop_assert!((d - (-l.arg() * scale).asin().to_degrees()).abs() < 1e-9);
            }
        }
    }
}
