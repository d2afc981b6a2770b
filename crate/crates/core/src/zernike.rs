//! Zernike-mode turbulence statistics.
//!
//! Modes are indexed from `j = 1` (tip); piston is never represented. Under
//! Kolmogorov turbulence each coefficient `b_j` is a zero-mean Gaussian with
//! variance `(D/r0)^(5/3)·g(j)`, where `g` depends on `j` only through its
//! radial order `n`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};

/// Radial order `n = ⌈(−3 + √(9 + 8j)) / 2⌉`, i.e. the smallest `n` with
/// `n(n+3)/2 ≥ j`.
pub fn radial_order(j: usize) -> Result<usize> {
    if j < 1 {
        return domain("Zernike index must be >= 1");
    }
    let mut n = ((9.0 + 8.0 * j as f64).sqrt() - 3.0) / 2.0;
    n = n.ceil();
    let mut n = n as usize;
    // correct any floating-point overshoot/undershoot
    while n > 1 && (n - 1) * (n + 2) / 2 >= j {
        n -= 1;
    }
    while n * (n + 3) / 2 < j {
        n += 1;
    }
    Ok(n)
}

/// `g` as a function of radial order.
pub fn noll_weight_for_order(n: usize) -> f64 {
    let n = n as f64;
    let ln_ratio = ln_gamma(n - 5.0 / 6.0) + ln_gamma(23.0 / 6.0) + ln_gamma(11.0 / 6.0)
        - ln_gamma(n + 23.0 / 6.0);
    (n + 1.0) / PI * ln_ratio.exp() * (5.0 * PI / 6.0).sin()
}

/// Per-mode Kolmogorov variance weight `g(j)`.
pub fn noll_weight(j: usize) -> Result<f64> {
    Ok(noll_weight_for_order(radial_order(j)?))
}

/// `σ_j² = (D/r0)^(5/3)·g(j)` in rad².
pub fn turbulence_variance(j: usize, d_rx: f64, r0: f64) -> Result<f64> {
    check_ratio(d_rx, r0)?;
    Ok((d_rx / r0).powf(5.0 / 3.0) * noll_weight(j)?)
}

/// Residual phase variance after ideal correction of the first `J` modes,
/// `0.2944·J^(−√3/2)·(D/r0)^(5/3)`.
pub fn residual_variance(modes: usize, d_rx: f64, r0: f64) -> Result<f64> {
    if modes < 1 {
        return domain("corrected mode count must be >= 1");
    }
    check_ratio(d_rx, r0)?;
    Ok(0.2944 * (modes as f64).powf(-(3f64.sqrt()) / 2.0) * (d_rx / r0).powf(5.0 / 3.0))
}

fn check_ratio(d_rx: f64, r0: f64) -> Result<()> {
    if !(d_rx > 0.0) {
        return domain(format!("aperture diameter must be > 0, got {d_rx}"));
    }
    if !(r0 > 0.0) {
        return domain(format!("r0 must be > 0, got {r0}"));
    }
    Ok(())
}

/// Time series of Zernike coefficients from a wavefront sensor.
///
/// `coefficients[i][j-1]` is `b_j` of sample `i`, in radians of phase at
/// `wavelength`. A sample/mode pair contributes to statistics only when
/// `valid_mask[i][j-1]` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct ZernikeSeries {
    timestamps: Vec<f64>,
    coefficients: Vec<Vec<f64>>,
    valid_mask: Vec<Vec<bool>>,
    wavelength: f64,
    aperture_diameter: f64,
}

impl ZernikeSeries {
    pub fn new(
        timestamps: Vec<f64>,
        coefficients: Vec<Vec<f64>>,
        valid_mask: Vec<Vec<bool>>,
        wavelength: f64,
        aperture_diameter: f64,
    ) -> Result<Self> {
        if !(wavelength > 0.0) || !(aperture_diameter > 0.0) {
            return domain("wavelength and aperture diameter must be > 0");
        }
        if timestamps.len() != coefficients.len() || timestamps.len() != valid_mask.len() {
            return domain("timestamps, coefficients and mask differ in length");
        }
        let j_max = coefficients.first().map_or(0, Vec::len);
        if coefficients
            .iter()
            .zip(&valid_mask)
            .any(|(c, m)| c.len() != j_max || m.len() != j_max)
        {
            return domain("all samples must carry the same number of modes");
        }
        if timestamps.windows(2).any(|w| !(w[1] > w[0])) {
            return domain("timestamps must be strictly increasing");
        }
        Ok(Self {
            timestamps,
            coefficients,
            valid_mask,
            wavelength,
            aperture_diameter,
        })
    }

    /// Series where every sample is valid.
    pub fn fully_valid(
        timestamps: Vec<f64>,
        coefficients: Vec<Vec<f64>>,
        wavelength: f64,
        aperture_diameter: f64,
    ) -> Result<Self> {
        let mask = coefficients.iter().map(|c| vec![true; c.len()]).collect();
        Self::new(
            timestamps,
            coefficients,
            mask,
            wavelength,
            aperture_diameter,
        )
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn j_max(&self) -> usize {
        self.coefficients.first().map_or(0, Vec::len)
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coefficients
    }

    pub fn valid_mask(&self) -> &[Vec<bool>] {
        &self.valid_mask
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn aperture_diameter(&self) -> f64 {
        self.aperture_diameter
    }

    /// Mark mode `j` invalid in every sample.
    pub fn mask_mode(&mut self, j: usize) {
        if j >= 1 && j <= self.j_max() {
            for m in &mut self.valid_mask {
                m[j - 1] = false;
            }
        }
    }

    /// Same wavefront expressed in radians at another wavelength; phase
    /// scales as `λ_from/λ_to`.
    pub fn rescaled_to(&self, wavelength: f64) -> Result<Self> {
        if !(wavelength > 0.0) {
            return domain("wavelength must be > 0");
        }
        let s = self.wavelength / wavelength;
        let coefficients = self
            .coefficients
            .iter()
            .map(|c| c.iter().map(|b| b * s).collect())
            .collect();
        Ok(Self {
            coefficients,
            wavelength,
            ..self.clone()
        })
    }
}

/// Per-mode variances; modes with fewer than two valid samples are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeVarianceSet {
    variances: Vec<Option<f64>>,
    sample_counts: Vec<usize>,
}

impl ModeVarianceSet {
    /// From explicit variances for modes `1..=len` (all present).
    pub fn from_variances(variances: Vec<f64>) -> Result<Self> {
        if variances.iter().any(|v| !(*v >= 0.0)) {
            return domain("variances must be >= 0");
        }
        let n = variances.len();
        Ok(Self {
            variances: variances.into_iter().map(Some).collect(),
            sample_counts: vec![usize::MAX; n],
        })
    }

    pub fn j_max(&self) -> usize {
        self.variances.len()
    }

    /// `σ_j²` for `j ≥ 1`, `None` when absent or out of range.
    pub fn get(&self, j: usize) -> Option<f64> {
        j.checked_sub(1)
            .and_then(|i| self.variances.get(i).copied().flatten())
    }

    pub fn sample_count(&self, j: usize) -> Option<usize> {
        j.checked_sub(1)
            .and_then(|i| self.sample_counts.get(i).copied())
    }

    /// `(j, σ_j²)` for every present mode.
    pub fn present(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.variances
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (i + 1, v)))
    }

    pub fn require(&self, j: usize) -> Result<f64> {
        self.get(j).ok_or(Error::MissingMode(j))
    }

    /// Multiply every variance by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            variances: self
                .variances
                .iter()
                .map(|v| v.map(|v| v * factor))
                .collect(),
            sample_counts: self.sample_counts.clone(),
        }
    }
}

/// Unbiased per-mode sample variance over valid samples.
pub fn empirical_variances(series: &ZernikeSeries) -> ModeVarianceSet {
    let j_max = series.j_max();
    let mut variances = Vec::with_capacity(j_max);
    let mut counts = Vec::with_capacity(j_max);
    for j in 0..j_max {
        // Welford
        let (mut n, mut mean, mut m2) = (0usize, 0.0f64, 0.0f64);
        for (c, m) in series.coefficients.iter().zip(&series.valid_mask) {
            if m[j] && c[j].is_finite() {
                n += 1;
                let d = c[j] - mean;
                mean += d / n as f64;
                m2 += d * (c[j] - mean);
            }
        }
        counts.push(n);
        variances.push((n >= 2).then(|| m2 / (n - 1) as f64));
    }
    ModeVarianceSet {
        variances,
        sample_counts: counts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// g(n) from g(1) = 10/23 and the Gamma recurrence
    /// g(n+1)/g(n) = (n+2)/(n+1) · (n−5/6)/(n+23/6); no Gamma evaluation.
    fn g_rational(n: usize) -> f64 {
        let mut g = 10.0 / 23.0;
        for m in 1..n {
            let m = m as f64;
            g *= (m + 2.0) / (m + 1.0) * (m - 5.0 / 6.0) / (m + 23.0 / 6.0);
        }
        g
    }

    #[test]
    fn radial_orders() {
        assert!(radial_order(0).is_err());
        assert_eq!(radial_order(1).unwrap(), 1);
        assert_eq!(radial_order(2).unwrap(), 1);
        for j in 3..=5 {
            assert_eq!(radial_order(j).unwrap(), 2);
        }
        assert_eq!(radial_order(35).unwrap(), 7);
        assert_eq!(radial_order(36).unwrap(), 8);
    }

    #[test]
    fn mode_count_per_order_is_n_plus_one() {
        let mut counts = vec![0usize; 60];
        let mut prev = 1;
        for j in 1..=1000 {
            let n = radial_order(j).unwrap();
            assert!(n >= prev);
            prev = n;
            counts[n] += 1;
        }
        // orders fully enumerated within j <= 1000 (n(n+3)/2 <= 1000 -> n <= 43)
        for (n, c) in counts.iter().enumerate().take(44).skip(1) {
            assert_eq!(*c, n + 1, "order {n}");
        }
    }

    #[test]
    fn noll_weight_matches_recurrence() {
        for n in 1..=400 {
            let a = noll_weight_for_order(n);
            let b = g_rational(n);
            assert!(((a - b) / b).abs() < 1e-11, "n={n}: {a} vs {b}");
        }
        assert_eq!(noll_weight(1).unwrap(), noll_weight(2).unwrap());
        let tilt_pair = noll_weight(1).unwrap() + noll_weight(2).unwrap();
        assert!((tilt_pair - 20.0 / 23.0).abs() < 1e-13);
    }

    #[test]
    fn tail_sum_against_closed_form() {
        for big_j in [20usize, 35, 100] {
            let tail: f64 = (big_j + 1..=100_000)
                .map(|j| g_rational(radial_order(j).unwrap()))
                .sum();
            let closed = residual_variance(big_j, 1.0, 1.0).unwrap();
            assert!(((tail - closed) / closed).abs() <= 0.10, "J={big_j}");
        }
    }

    #[test]
    fn variance_scaling() {
        assert_eq!(
            turbulence_variance(7, 0.41, 0.41).unwrap(),
            noll_weight(7).unwrap()
        );
        let a = turbulence_variance(10, 0.41, 0.1).unwrap();
        let b = turbulence_variance(10, 0.41, 0.05).unwrap();
        assert!((b / a - 2f64.powf(5.0 / 3.0)).abs() < 1e-12);
        assert!(turbulence_variance(1, 0.0, 0.1).is_err());
        assert!(turbulence_variance(1, 0.41, -0.1).is_err());
    }

    #[test]
    fn kolmogorov_profile_steps_down_across_orders() {
        let v: Vec<f64> = (1..=35)
            .map(|j| turbulence_variance(j, 0.41, 0.09).unwrap())
            .collect();
        for j in 1..35 {
            let (n0, n1) = (radial_order(j).unwrap(), radial_order(j + 1).unwrap());
            if n1 > n0 {
                assert!(v[j] < v[j - 1]);
            } else {
                assert_eq!(v[j], v[j - 1]);
            }
        }
    }

    #[test]
    fn residual_limits() {
        assert!(residual_variance(0, 0.41, 0.1).is_err());
        assert!(residual_variance(35, 0.41, 1e9).unwrap() < 1e-12);
        // tip-tilt only at r0 = 15 cm
        let s = residual_variance(2, 0.41, 0.15).unwrap();
        let db = crate::units::to_db((-s).exp());
        assert!((db + 3.75).abs() < 0.01, "{db}");
    }

    fn series(coeffs: Vec<Vec<f64>>) -> ZernikeSeries {
        let t = (0..coeffs.len()).map(|i| i as f64 * 0.01).collect();
        ZernikeSeries::fully_valid(t, coeffs, 1.555e-6, 0.41).unwrap()
    }

    #[test]
    fn constant_series_zero_variance() {
        let s = series(vec![vec![0.3, -0.1, 2.0]; 10]);
        let v = empirical_variances(&s);
        assert_eq!(
            v.present().map(|(_, v)| v).collect::<Vec<_>>(),
            vec![0.0; 3]
        );
    }

    #[test]
    fn masked_mode_is_absent() {
        let mut s = series((0..20).map(|i| vec![i as f64; 6]).collect());
        s.mask_mode(5);
        let v = empirical_variances(&s);
        assert_eq!(v.get(5), None);
        assert_eq!(v.sample_count(5), Some(0));
        assert!(v.get(4).is_some());
        assert!(matches!(v.require(5), Err(Error::MissingMode(5))));
    }

    #[test]
    fn single_valid_sample_is_absent() {
        let s = series(vec![vec![1.0]]);
        assert_eq!(empirical_variances(&s).get(1), None);
    }

    #[test]
    fn unbiased_estimator() {
        let s = series(vec![vec![1.0], vec![-1.0], vec![1.0], vec![-1.0]]);
        let v = empirical_variances(&s).get(1).unwrap();
        assert!((v - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn series_invariants() {
        let t = vec![0.0, 0.0];
        assert!(ZernikeSeries::fully_valid(t, vec![vec![0.0]; 2], 1e-6, 0.4).is_err());
        let ragged = vec![vec![0.0], vec![0.0, 1.0]];
        assert!(ZernikeSeries::fully_valid(vec![0.0, 1.0], ragged, 1e-6, 0.4).is_err());
    }

    #[test]
    fn wavelength_rescale() {
        let s = series(vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        let r = s.rescaled_to(2.0 * 1.555e-6).unwrap();
        assert_eq!(r.coefficients()[1], vec![1.5, 2.0]);
        assert_eq!(r.wavelength(), 3.11e-6);
    }

    proptest! {
        #[test]
        fn prop_common_factor(j in 1usize..500, d in 0.05f64..2.0, r0 in 0.01f64..0.5) {
            let lhs = turbulence_variance(j, d, r0).unwrap();
            let rhs = noll_weight(j).unwrap() * turbulence_variance(1, d, r0).unwrap()
                / noll_weight(1).unwrap();
            prop_assert!(((lhs - rhs) / lhs).abs() < 1e-12);
        }

        #[test]
        fn prop_weight_positive_nonincreasing(j in 1usize..5000) {
            let a = noll_weight(j).unwrap();
            prop_assert!(a > 0.0);
            prop_assert!(noll_weight(j + 1).unwrap() <= a);
        }
    }
}
