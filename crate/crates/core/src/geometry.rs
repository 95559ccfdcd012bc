//! Uniform linear array model: steering vectors and spatial-aliasing limits.
//!
//! Angles follow the usual ULA convention: 0° is broadside, ±90° endfire. The
//! first sensor is the phase reference, so sensor `p` (zero based) sees a
//! plane wave from `θ` delayed by `p·Δd·sin θ / c` seconds.

use std::f64::consts::PI;

use crate::error::{DoaError, Result};
use crate::linalg::{CMatrix, CVector, C64};

/// Speed of sound in air at 20 °C, m/s.
pub const DEFAULT_SOUND_SPEED: f64 = 343.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    num_sensors: usize,
    spacing: f64,
    sound_speed: f64,
}

/// Upper usable frequency for a given direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AliasingLimit {
    Finite(f64),
    /// Broadside arrivals have zero inter-sensor delay and never alias.
    Unbounded,
}

impl AliasingLimit {
    pub fn hertz(self) -> f64 {
        match self {
            AliasingLimit::Finite(f) => f,
            AliasingLimit::Unbounded => f64::INFINITY,
        }
    }
}

impl ArrayGeometry {
    pub fn new(num_sensors: usize, spacing: f64, sound_speed: f64) -> Result<Self> {
        if num_sensors < 2 {
            return Err(DoaError::domain(format!("array needs at least 2 sensors, got {num_sensors}")));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(DoaError::domain(format!("sensor spacing must be positive, got {spacing}")));
        }
        if !(sound_speed > 0.0 && sound_speed.is_finite()) {
            return Err(DoaError::domain(format!("sound speed must be positive, got {sound_speed}")));
        }
        Ok(Self { num_sensors, spacing, sound_speed })
    }

    /// Array with the default sound speed.
    pub fn with_spacing(num_sensors: usize, spacing: f64) -> Result<Self> {
        Self::new(num_sensors, spacing, DEFAULT_SOUND_SPEED)
    }

    pub fn num_sensors(&self) -> usize {
        self.num_sensors
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn sound_speed(&self) -> f64 {
        self.sound_speed
    }

    /// Checks that `num_sources` plane waves can be resolved (P > Q ≥ 1).
    pub fn check_source_count(&self, num_sources: usize) -> Result<()> {
        if num_sources == 0 || num_sources >= self.num_sensors {
            return Err(DoaError::domain(format!(
                "source count must satisfy 1 <= Q < P = {}, got Q = {num_sources}",
                self.num_sensors
            )));
        }
        Ok(())
    }

    /// Propagation delay in seconds at sensor `sensor` (zero based) relative to
    /// the reference sensor.
    pub fn delay(&self, sensor: usize, doa_deg: f64) -> f64 {
        sensor as f64 * self.spacing * doa_deg.to_radians().sin() / self.sound_speed
    }

    pub fn steering_vector(&self, frequency: f64, doa_deg: f64) -> Result<CVector> {
        check_frequency(frequency)?;
        check_angle(doa_deg)?;
        Ok(self.steering_unchecked(frequency, doa_deg))
    }

    pub(crate) fn steering_unchecked(&self, frequency: f64, doa_deg: f64) -> CVector {
        let step = -2.0 * PI * frequency * self.spacing * doa_deg.to_radians().sin() / self.sound_speed;
        CVector::from_iterator(self.num_sensors, (0..self.num_sensors).map(|p| C64::from_polar(1.0, step * p as f64)))
    }

    pub fn steering_matrix(&self, frequency: f64, doas_deg: &[f64]) -> Result<SteeringMatrix> {
        check_frequency(frequency)?;
        for &doa in doas_deg {
            check_angle(doa)?;
        }
        let mut entries = CMatrix::zeros(self.num_sensors, doas_deg.len());
        for (q, &doa) in doas_deg.iter().enumerate() {
            entries.set_column(q, &self.steering_unchecked(frequency, doa));
        }
        Ok(SteeringMatrix { frequency, entries })
    }

    /// Highest alias-free frequency for a source at `doa_deg`, before any bin
    /// quantization: `c / (2·Δd·|sin θ|)`.
    pub fn aliasing_frequency(&self, doa_deg: f64) -> AliasingLimit {
        let s = doa_deg.to_radians().sin().abs();
        if s == 0.0 {
            AliasingLimit::Unbounded
        } else {
            AliasingLimit::Finite(self.sound_speed / (2.0 * self.spacing * s))
        }
    }

    /// Worst case over all directions, attained at endfire: `c / (2·Δd)`.
    pub fn lowest_aliasing_frequency(&self) -> f64 {
        self.sound_speed / (2.0 * self.spacing)
    }
}

/// Array response for a set of directions at one frequency (P×Q).
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringMatrix {
    frequency: f64,
    entries: CMatrix,
}

impl SteeringMatrix {
    pub fn frequency(&self) -> f64 {
        self.frequency
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }
}

fn check_frequency(f: f64) -> Result<()> {
    if !(f > 0.0 && f.is_finite()) {
        return Err(DoaError::domain(format!("frequency must be positive, got {f}")));
    }
    Ok(())
}

pub(crate) fn check_angle(doa_deg: f64) -> Result<()> {
    if !(-90.0..=90.0).contains(&doa_deg) {
        return Err(DoaError::domain(format!("direction {doa_deg}° outside [-90°, 90°]")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn geom(p: usize) -> ArrayGeometry {
        ArrayGeometry::new(p, 0.044, 343.0).unwrap()
    }

    #[test]
    fn second_sensor_phase_at_30_degrees() {
        let a = geom(2).steering_matrix(1000.0, &[30.0]).unwrap();
        let phase = a.entries()[(1, 0)].arg();
        assert!((phase - (-0.40300)).abs() < 5e-6, "{phase}");
        let exact = -2.0 * PI * 1000.0 * 0.044 * 0.5 / 343.0;
        assert!((phase - exact).abs() < 1e-12);
    }

    #[test]
    fn broadside_is_all_ones() {
        let a = geom(5).steering_matrix(3000.0, &[0.0, 0.0]).unwrap();
        assert!(a.entries().iter().all(|z| (z - C64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn first_row_is_reference_and_entries_unit_modulus() {
        let a = geom(5).steering_matrix(2500.0, &[-70.0, 10.0, 45.0]).unwrap();
        for q in 0..3 {
            assert_eq!(a.entries()[(0, q)], C64::new(1.0, 0.0));
        }
        assert!(a.entries().iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn frequency_normalized_powers_agree() {
        // Phases are unwrapped along the array: at 2000 Hz the last sensor's
        // phase (about -4.56 rad) lies outside the principal branch.
        let g = geom(5);
        let unwrapped_over_f = |f: f64| {
            let a = g.steering_vector(f, 45.0).unwrap();
            let mut phase = 0.0;
            let mut out = vec![C64::new(1.0, 0.0)];
            for p in 1..5 {
                phase += (a[p] * a[p - 1].conj()).arg();
                out.push(C64::from_polar(1.0, phase / f));
            }
            out
        };
        let (n1, n2) = (unwrapped_over_f(500.0), unwrapped_over_f(2000.0));
        for p in 0..5 {
            assert!((n1[p] - n2[p]).norm() < 1e-10, "sensor {p}");
        }
        // The principal branch alone breaks on the last sensor.
        let last = g.steering_vector(2000.0, 45.0).unwrap()[4];
        assert!(last.arg() > 0.0);
    }

    #[test]
    fn rejects_angles_outside_half_plane() {
        assert!(geom(3).steering_matrix(1000.0, &[90.5]).is_err());
        assert!(geom(3).steering_vector(1000.0, -91.0).is_err());
        assert!(geom(3).steering_vector(0.0, 10.0).is_err());
    }

    #[test]
    fn aliasing_limits() {
        let g = geom(5);
        assert!((g.aliasing_frequency(90.0).hertz() - 3897.727).abs() < 1e-3);
        assert!((g.aliasing_frequency(30.0).hertz() - 7795.454).abs() < 1e-3);
        assert_eq!(g.aliasing_frequency(0.0), AliasingLimit::Unbounded);
        let half = ArrayGeometry::new(5, 0.022, 343.0).unwrap();
        assert!((half.aliasing_frequency(90.0).hertz() - 2.0 * g.aliasing_frequency(90.0).hertz()).abs() < 1e-9);
        assert!((g.lowest_aliasing_frequency() - 3897.727).abs() < 1e-3);
        let narrow = ArrayGeometry::new(5, 0.0215, 343.0).unwrap();
        assert!((narrow.lowest_aliasing_frequency() - 7976.744).abs() < 1e-3);
        assert_eq!(g.lowest_aliasing_frequency(), g.aliasing_frequency(90.0).hertz());
    }

    #[test]
    fn invalid_geometry_rejected() {
        assert!(ArrayGeometry::new(1, 0.044, 343.0).is_err());
        assert!(ArrayGeometry::new(4, 0.0, 343.0).is_err());
        assert!(ArrayGeometry::new(4, 0.044, -1.0).is_err());
        assert!(geom(5).check_source_count(5).is_err());
        assert!(geom(5).check_source_count(0).is_err());
        assert!(geom(5).check_source_count(4).is_ok());
    }

    proptest! {
        #[test]
        fn steering_is_conjugate_symmetric_in_angle(f in 50.0f64..8000.0, doa in -90.0f64..90.0) {
            let g = geom(5);
            let plus = g.steering_vector(f, doa).unwrap();
            let minus = g.steering_vector(f, -doa).unwrap();
            for p in 0..5 {
                prop_assert!((plus[p].conj() - minus[p]).norm() < 1e-12);
            }
        }

        #[test]
        fn normalized_power_identity_below_aliasing(
            f1 in 20.0f64..3897.0, f2 in 20.0f64..3897.0, doa in -90.0f64..90.0
        ) {
            // Below the endfire limit the adjacent-sensor phase stays in (-π, π],
            // so unwrapping along the array recovers the linear phase exactly.
            let g = geom(5);
            let unwrapped = |f: f64| {
                let a = g.steering_vector(f, doa).unwrap();
                let mut acc = 0.0;
                let mut out = vec![0.0];
                for p in 1..5 {
                    acc += (a[p] * a[p - 1].conj()).arg();
                    out.push(acc / f);
                }
                out
            };
            let (u1, u2) = (unwrapped(f1), unwrapped(f2));
            for p in 0..5 {
                prop_assert!((u1[p] - u2[p]).abs() < 1e-10);
            }
        }

        #[test]
        fn aliasing_frequency_decreases_with_sine(a in 1.0f64..89.0, b in 1.0f64..89.0) {
            let g = geom(5);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(hi - lo > 1e-6);
            prop_assert!(g.aliasing_frequency(hi).hertz() < g.aliasing_frequency(lo).hertz());
            prop_assert!(g.aliasing_frequency(-hi).hertz() < g.aliasing_frequency(-lo).hertz());
        }
    }
}
