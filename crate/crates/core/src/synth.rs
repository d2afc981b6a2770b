//! Seeded synthetic Zernike time series.
//!
//! Each mode is an independent stationary AR(1) Gaussian process with the
//! Kolmogorov variance `g(j)·(D/r0)^(5/3)` and lag-one correlation
//! `exp(−2π·f_G/f_s)`, white when the wind speed is zero. Closed-loop series
//! additionally scale the variance of the first `corrected_modes` modes by
//! `min(1, (f_G/f_3dB)^(5/3))`.
//!
//! Randomness: ChaCha8 seeded with `seed` (via `seed_from_u64`), stream `j`
//! for mode `j`; uniforms are `((u64 >> 11) + 1)·2⁻⁵³ ∈ (0, 1]`, normals come
//! from Box–Muller using the cosine branch only, one normal per two uniforms.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::atmosphere::greenwood_from;
use crate::error::{domain, Result};
use crate::zernike::{turbulence_variance, ModeVarianceSet, ZernikeSeries};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Fried parameter at `wavelength` (m).
    pub r0: f64,
    pub d_rx: f64,
    /// Wavelength the coefficients are expressed at (m).
    pub wavelength: f64,
    pub j_max: usize,
    pub n_samples: usize,
    /// Hz.
    pub sample_rate: f64,
    /// m/s; zero gives white series.
    pub wind: f64,
    pub ao_on: bool,
    /// Closed-loop rejection bandwidth (Hz).
    pub f_3db: f64,
    /// Modes `1..=corrected_modes` are attenuated when `ao_on`.
    pub corrected_modes: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            r0: 0.05,
            d_rx: 0.41,
            wavelength: 1.555e-6,
            j_max: 35,
            n_samples: 10_000,
            sample_rate: 100.0,
            wind: 0.0,
            ao_on: false,
            f_3db: 10.0,
            corrected_modes: 35,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 2 || self.j_max < 2 {
            return domain("synthetic series needs n_samples >= 2 and j_max >= 2");
        }
        if !(self.r0 > 0.0 && self.d_rx > 0.0 && self.wavelength > 0.0 && self.sample_rate > 0.0) {
            return domain("r0, d_rx, wavelength and sample rate must be > 0");
        }
        if !(self.wind >= 0.0) {
            return domain("wind speed must be >= 0");
        }
        if self.ao_on && !(self.f_3db > 0.0) {
            return domain("rejection bandwidth must be > 0");
        }
        Ok(())
    }

    pub fn greenwood(&self) -> f64 {
        greenwood_from(self.wind, self.r0)
    }

    /// Lag-one autocorrelation of every mode; 0 (white) without wind.
    pub fn correlation(&self) -> f64 {
        let f_g = self.greenwood();
        if f_g == 0.0 {
            0.0
        } else {
            (-2.0 * std::f64::consts::PI * f_g / self.sample_rate).exp()
        }
    }

    /// Closed-loop variance factor; 1 when the loop is open.
    pub fn rejection(&self) -> f64 {
        if self.ao_on {
            (self.greenwood() / self.f_3db).powf(5.0 / 3.0).min(1.0)
        } else {
            1.0
        }
    }

    /// Target variance of each mode.
    pub fn target_variances(&self) -> Result<ModeVarianceSet> {
        self.validate()?;
        let rej = self.rejection();
        let v = (1..=self.j_max)
            .map(|j| {
                let base = turbulence_variance(j, self.d_rx, self.r0)?;
                Ok(if j <= self.corrected_modes {
                    base * rej
                } else {
                    base
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ModeVarianceSet::from_variances(v)
    }
}

struct Normal {
    rng: ChaCha8Rng,
}

impl Normal {
    fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn sample(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

/// Generate a fully valid series; identical configs give bit-identical
/// output.
pub fn generate_series(cfg: &SynthConfig) -> Result<ZernikeSeries> {
    let targets = cfg.target_variances()?;
    let rho = cfg.correlation();
    let innovation = (1.0 - rho * rho).sqrt();
    let n = cfg.n_samples;
    let mut coefficients = vec![vec![0.0; cfg.j_max]; n];
    for j in 1..=cfg.j_max {
        let sigma = targets.require(j)?.sqrt();
        let mut normal = Normal::new(cfg.seed, j as u64);
        let mut x = sigma * normal.sample();
        coefficients[0][j - 1] = x;
        for row in coefficients.iter_mut().skip(1) {
            x = rho * x + sigma * innovation * normal.sample();
            row[j - 1] = x;
        }
    }
    let timestamps = (0..n).map(|i| i as f64 / cfg.sample_rate).collect();
    ZernikeSeries::fully_valid(timestamps, coefficients, cfg.wavelength, cfg.d_rx)
}
