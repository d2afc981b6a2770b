//! Turbulence statistics for a horizontal, spherical-wave link.
//!
//! All relations assume Kolmogorov turbulence with a constant `C_n²` along
//! the path:
//!
//! - Fried parameter `r0 = (0.16·C_n²·k²·L)^(-3/5)`
//! - Rytov variance `σ_R² = 1.23·C_n²·k^(7/6)·L^(11/6)`
//! - Greenwood frequency `f_G = 0.43·w/r0`

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Wavelength and length of a propagation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalPath {
    wavelength: f64,
    path_length: f64,
}

impl OpticalPath {
    pub fn new(wavelength: f64, path_length: f64) -> Result<Self> {
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return domain(format!("wavelength must be > 0, got {wavelength}"));
        }
        if !(path_length > 0.0 && path_length.is_finite()) {
            return domain(format!("path length must be > 0, got {path_length}"));
        }
        Ok(Self {
            wavelength,
            path_length,
        })
    }

    /// The 18 km, 1555 nm design link.
    pub fn design() -> Self {
        Self {
            wavelength: 1.555e-6,
            path_length: 18e3,
        }
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn path_length(&self) -> f64 {
        self.path_length
    }

    /// Wavenumber `k = 2π/λ`.
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    pub fn with_wavelength(&self, wavelength: f64) -> Result<Self> {
        Self::new(wavelength, self.path_length)
    }
}

/// Fried parameter for a spherical wave over a horizontal path.
pub fn r0_from_cn2(cn2: f64, path: &OpticalPath) -> Result<f64> {
    if !(cn2 > 0.0 && cn2.is_finite()) {
        return domain(format!("C_n² must be > 0, got {cn2}"));
    }
    let k = path.wavenumber();
    Ok((0.16 * cn2 * k * k * path.path_length()).powf(-3.0 / 5.0))
}

/// Inverse of [`r0_from_cn2`].
pub fn cn2_from_r0(r0: f64, path: &OpticalPath) -> Result<f64> {
    if !(r0 > 0.0 && r0.is_finite()) {
        return domain(format!("r0 must be > 0, got {r0}"));
    }
    let k = path.wavenumber();
    Ok(r0.powf(-5.0 / 3.0) / (0.16 * k * k * path.path_length()))
}

/// Rescale a Fried parameter between wavelengths at fixed `C_n²`
/// (`r0 ∝ λ^(6/5)`).
pub fn scale_r0(r0: f64, from_wavelength: f64, to_wavelength: f64) -> f64 {
    r0 * (to_wavelength / from_wavelength).powf(6.0 / 5.0)
}

/// Turbulence strength along a path: `r0` tagged with the wavelength it was
/// quoted at, the matching `C_n²`, and the mean transverse wind speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurbulenceState {
    fried_r0: f64,
    cn2: f64,
    wind_speed: f64,
    reference_wavelength: f64,
    path_length: f64,
}

impl TurbulenceState {
    /// Build from both `r0` and `C_n²`; they must agree through the
    /// horizontal-path relation to 1e-9 relative.
    pub fn new(fried_r0: f64, cn2: f64, wind_speed: f64, path: &OpticalPath) -> Result<Self> {
        if !(wind_speed >= 0.0 && wind_speed.is_finite()) {
            return domain(format!("wind speed must be >= 0, got {wind_speed}"));
        }
        let implied = r0_from_cn2(cn2, path)?;
        if !(fried_r0 > 0.0) || ((implied - fried_r0) / fried_r0).abs() > 1e-9 {
            return domain(format!(
                "r0 = {fried_r0} m inconsistent with C_n² = {cn2} (implies {implied} m)"
            ));
        }
        Ok(Self {
            fried_r0,
            cn2,
            wind_speed,
            reference_wavelength: path.wavelength(),
            path_length: path.path_length(),
        })
    }

    /// `r0` quoted at the path wavelength.
    pub fn from_r0(r0: f64, wind_speed: f64, path: &OpticalPath) -> Result<Self> {
        let cn2 = cn2_from_r0(r0, path)?;
        Self::new(r0, cn2, wind_speed, path)
    }

    pub fn from_cn2(cn2: f64, wind_speed: f64, path: &OpticalPath) -> Result<Self> {
        let r0 = r0_from_cn2(cn2, path)?;
        Self::new(r0, cn2, wind_speed, path)
    }

    pub fn fried_r0(&self) -> f64 {
        self.fried_r0
    }

    pub fn cn2(&self) -> f64 {
        self.cn2
    }

    pub fn wind_speed(&self) -> f64 {
        self.wind_speed
    }

    pub fn reference_wavelength(&self) -> f64 {
        self.reference_wavelength
    }

    pub fn path_length(&self) -> f64 {
        self.path_length
    }

    /// `r0` at another wavelength, same `C_n²`.
    pub fn r0_at(&self, wavelength: f64) -> f64 {
        scale_r0(self.fried_r0, self.reference_wavelength, wavelength)
    }
}

/// `σ_R² = 1.23·C_n²·k^(7/6)·L^(11/6)`. Accepts `C_n² = 0`.
pub fn rytov_variance_from_cn2(cn2: f64, path: &OpticalPath) -> f64 {
    1.23 * cn2 * path.wavenumber().powf(7.0 / 6.0) * path.path_length().powf(11.0 / 6.0)
}

pub fn rytov_variance(ts: &TurbulenceState, path: &OpticalPath) -> f64 {
    rytov_variance_from_cn2(ts.cn2(), path)
}

/// Aperture-averaged scintillation and the resulting coupling factor `η_S`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScintillationReport {
    pub rytov_sigma_r2: f64,
    /// Spherical-wave Rytov variance `β0 = 0.4065·σ_R²`.
    pub beta0: f64,
    /// Normalised aperture `d = sqrt(k·D²/(4L))`.
    pub aperture_d: f64,
    pub t1: f64,
    pub t2: f64,
    /// Aperture-averaged scintillation index.
    pub sigma_i2: f64,
    /// Log-amplitude variance.
    pub sigma_chi2: f64,
    pub eta_s: f64,
    pub rho_c_weak: f64,
    pub rho_c_strong: f64,
}

impl ScintillationReport {
    /// Build from a Rytov variance directly; `σ_R² = 0` is the
    /// turbulence-free limit.
    pub fn from_rytov(sigma_r2: f64, path: &OpticalPath, d_rx: f64) -> Result<Self> {
        if !(d_rx > 0.0) {
            return domain(format!("aperture diameter must be > 0, got {d_rx}"));
        }
        if !(sigma_r2 >= 0.0 && sigma_r2.is_finite()) {
            return domain(format!("Rytov variance must be >= 0, got {sigma_r2}"));
        }
        let k = path.wavenumber();
        let l = path.path_length();
        let beta0 = 0.4065 * sigma_r2;
        let d = (k * d_rx * d_rx / (4.0 * l)).sqrt();
        let d2 = d * d;
        let b2 = beta0 * beta0;
        let b125 = beta0.powf(12.0 / 5.0);
        let t1 = 0.49 * b2 / (1.0 + 0.18 * d2 + 0.56 * b125).powf(7.0 / 6.0);
        let t2 = 0.51 * b2 / (1.0 + 0.90 * d2 + 0.69 * b125).powf(5.0 / 6.0);
        let sigma_i2 = (t1 + t2).exp() - 1.0;
        let sigma_chi2 = 0.25 * (sigma_i2 + 1.0).ln();
        let eta_s = (-sigma_chi2).exp();
        let rho_c_weak = (path.wavelength() * l).sqrt();
        // σ_R = 0 makes the strong-regime width diverge
        let rho_c_strong = if sigma_r2 > 0.0 {
            0.36 * sigma_r2.sqrt().powf(-3.0 / 5.0) * rho_c_weak
        } else {
            f64::INFINITY
        };
        Ok(Self {
            rytov_sigma_r2: sigma_r2,
            beta0,
            aperture_d: d,
            t1,
            t2,
            sigma_i2,
            sigma_chi2,
            eta_s,
            rho_c_weak,
            rho_c_strong,
        })
    }

    /// Correlation width for the regime selected by `σ_R² ≤ 1` (weak) or
    /// `> 1` (strong).
    pub fn correlation_width(&self) -> f64 {
        if self.rytov_sigma_r2 <= 1.0 {
            self.rho_c_weak
        } else {
            self.rho_c_strong
        }
    }
}

pub fn scintillation_report(
    ts: &TurbulenceState,
    path: &OpticalPath,
    d_rx: f64,
) -> Result<ScintillationReport> {
    ScintillationReport::from_rytov(rytov_variance(ts, path), path, d_rx)
}

/// `f_G = 0.43·w/r0`, with `r0` at the state's reference wavelength.
pub fn greenwood_frequency(ts: &TurbulenceState) -> f64 {
    greenwood_from(ts.wind_speed(), ts.fried_r0())
}

pub fn greenwood_from(wind_speed: f64, r0: f64) -> f64 {
    0.43 * wind_speed / r0
}
