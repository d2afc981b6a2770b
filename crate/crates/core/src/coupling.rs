//! Single-mode-fiber coupling efficiency behind an adaptive-optics receiver.
//!
//! The average coupling efficiency factors as
//! `η_SMF = η0 · η_S · η_AO` with `η_AO = η_φ,ON · η_φ(J) · η_τ`:
//!
//! - `η0`: overlap of the obscured Airy pattern with the fiber mode
//! - `η_S`: scintillation ([`crate::atmosphere`])
//! - `η_φ,ON`: measured closed-loop variances of the corrected modes
//! - `η_φ(J)`: uncorrected modes beyond `J`
//! - `η_τ`: finite control bandwidth against the Greenwood frequency

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::units::{from_db, is_efficiency, to_db};
use crate::zernike::{residual_variance, ModeVarianceSet};

/// Receiver telescope, relay optics and fiber.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReceiverChain {
    /// Aperture diameter (m).
    pub d_rx: f64,
    /// Central obstruction diameter (m).
    pub d_obs: f64,
    /// Effective focal length in front of the fiber (m).
    pub f_eff: f64,
    /// Fiber mode-field diameter (m).
    pub mfd: f64,
    pub eta_tel: f64,
    pub eta_optics: f64,
    pub eta_fiber: f64,
    /// Number of corrected Zernike modes `J`.
    pub ao_modes: usize,
    /// Closed-loop rejection bandwidth (Hz).
    pub f_3db: f64,
}

impl Default for ReceiverChain {
    /// 41 cm Ritchey-Chrétien with a 16.8 cm obstruction, 10.4 µm MFD fiber,
    /// 35 corrected modes at 10 Hz.
    fn default() -> Self {
        Self {
            d_rx: 0.41,
            d_obs: 0.168,
            f_eff: 2.0,
            mfd: 10.4e-6,
            eta_tel: from_db(-1.4),
            eta_optics: from_db(-4.5),
            eta_fiber: from_db(-2.4),
            ao_modes: 35,
            f_3db: 10.0,
        }
    }
}

impl ReceiverChain {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_obs > 0.0 && self.d_obs < self.d_rx) {
            return domain(format!(
                "need 0 < d_obs < d_rx, got d_obs = {}, d_rx = {}",
                self.d_obs, self.d_rx
            ));
        }
        if !(self.f_eff > 0.0 && self.mfd > 0.0) {
            return domain("f_eff and mfd must be > 0");
        }
        for (name, v) in [
            ("eta_tel", self.eta_tel),
            ("eta_optics", self.eta_optics),
            ("eta_fiber", self.eta_fiber),
        ] {
            if !is_efficiency(v) {
                return domain(format!("{name} must be in (0, 1], got {v}"));
            }
        }
        if !(self.f_3db > 0.0) {
            return domain("f_3db must be > 0");
        }
        if self.ao_modes < 2 {
            return domain("ao_modes must be >= 2");
        }
        Ok(())
    }
}

/// Linear obscuration ratio `α = D_obs/D_rx`.
pub fn obscuration_ratio(chain: &ReceiverChain) -> f64 {
    chain.d_obs / chain.d_rx
}

/// Mode-matching factor `β = (π·D_rx/(4λ))·(MFD/f_eff)`.
pub fn mode_match_beta(chain: &ReceiverChain, wavelength: f64) -> Result<f64> {
    if !(wavelength > 0.0) {
        return domain("wavelength must be > 0");
    }
    Ok(std::f64::consts::PI * chain.d_rx / (4.0 * wavelength) * chain.mfd / chain.f_eff)
}

/// Effective focal length that yields mode-matching factor `beta`.
pub fn focal_length_for_beta(chain: &ReceiverChain, wavelength: f64, beta: f64) -> f64 {
    std::f64::consts::PI * chain.d_rx / (4.0 * wavelength) * chain.mfd / beta
}

const SMALL_BETA: f64 = 1e-3;

/// Mode-mismatch efficiency
/// `η0 = 2·[(e^(−β²) − e^(−β²α²)) / (β·√(1−α²))]²`.
pub fn eta0(beta: f64, alpha: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return domain(format!("beta must be > 0, got {beta}"));
    }
    if !(0.0..1.0).contains(&alpha) {
        return domain(format!("obscuration ratio must be in [0, 1), got {alpha}"));
    }
    let a2 = alpha * alpha;
    let bracket = if beta < SMALL_BETA {
        // second-order series of the numerator over β
        -beta * (1.0 - a2) + beta.powi(3) * (1.0 - a2 * a2) / 2.0
    } else {
        let b2 = beta * beta;
        ((-b2).exp() - (-b2 * a2).exp()) / beta
    };
    Ok(2.0 * bracket * bracket / (1.0 - a2))
}

/// Mode-matching factor maximising [`eta0`] at obscuration `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaOptimum {
    pub beta: f64,
    pub eta0: f64,
}

/// Golden-section maximisation of `η0(β)` on `[1e-3, 10]`, tolerance 1e-6
/// in `β`.
pub fn optimize_beta(alpha: f64) -> Result<BetaOptimum> {
    let f = |b: f64| eta0(b, alpha);
    f(1.0)?;
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (1e-3, 10.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while (b - a) > 1e-6 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    let beta = 0.5 * (a + b);
    Ok(BetaOptimum {
        beta,
        eta0: f(beta)?,
    })
}

/// Spatial efficiency of the corrected modes from closed-loop variances,
/// `Π_{j=1..J} (1 + 2σ_j²)^(−1/2)`.
pub fn eta_phi_on(variances: &ModeVarianceSet, modes: usize) -> Result<f64> {
    let mut eta = 1.0;
    for j in 1..=modes {
        eta *= 1.0 / (1.0 + 2.0 * variances.require(j)?).sqrt();
    }
    Ok(eta)
}

/// Residual spatial efficiency `exp(−σ_J²)`.
pub fn eta_phi_residual(modes: usize, d_rx: f64, r0: f64) -> Result<f64> {
    Ok((-residual_variance(modes, d_rx, r0)?).exp())
}

/// Temporal efficiency `exp(−(f_G/f_3dB)^(5/3))`.
pub fn eta_tau(f_g: f64, f_3db: f64) -> Result<f64> {
    if !(f_3db > 0.0) {
        return domain("rejection bandwidth must be > 0");
    }
    if !(f_g >= 0.0) {
        return domain("Greenwood frequency must be >= 0");
    }
    Ok((-(f_g / f_3db).powf(5.0 / 3.0)).exp())
}

/// Factors of the fiber coupling efficiency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmfCouplingBreakdown {
    pub eta0: f64,
    pub eta_s: f64,
    pub eta_phi_on: f64,
    pub eta_phi_residual: f64,
    pub eta_tau: f64,
    pub eta_ao: f64,
    pub eta_smf: f64,
}

impl SmfCouplingBreakdown {
    /// `η_φ = η_φ,ON · η_φ(J)`.
    pub fn eta_phi(&self) -> f64 {
        self.eta_phi_on * self.eta_phi_residual
    }

    /// `(label, ratio)` rows in presentation order.
    pub fn rows(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("eta0", self.eta0),
            ("eta_s", self.eta_s),
            ("eta_phi_on", self.eta_phi_on),
            ("eta_phi_residual", self.eta_phi_residual),
            ("eta_tau", self.eta_tau),
            ("eta_ao", self.eta_ao),
            ("eta_smf", self.eta_smf),
        ]
    }
}

/// Multiply the factors left to right: `η_AO = η_φ,ON·η_φ(J)·η_τ`,
/// `η_SMF = η0·η_S·η_AO`.
pub fn compose_smf(
    eta0: f64,
    eta_s: f64,
    eta_phi_on: f64,
    eta_phi_residual: f64,
    eta_tau: f64,
) -> Result<SmfCouplingBreakdown> {
    for (name, v) in [
        ("eta0", eta0),
        ("eta_s", eta_s),
        ("eta_phi_on", eta_phi_on),
        ("eta_phi_residual", eta_phi_residual),
        ("eta_tau", eta_tau),
    ] {
        if !is_efficiency(v) {
            return domain(format!("{name} must be in (0, 1], got {v}"));
        }
    }
    let eta_ao = eta_phi_on * eta_phi_residual * eta_tau;
    Ok(SmfCouplingBreakdown {
        eta0,
        eta_s,
        eta_phi_on,
        eta_phi_residual,
        eta_tau,
        eta_ao,
        eta_smf: eta0 * eta_s * eta_ao,
    })
}

/// Coupling efficiency measured as the ratio of fiber power to the power in
/// front of the fiber.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerRatioCoupling {
    pub eta_smf: f64,
    /// Power in front of the fiber, `p_focus · η_focus→fiber`.
    pub p_front: f64,
    /// Set when the fiber power exceeds the power in front of it.
    pub inconsistent: bool,
}

pub fn coupling_from_power(
    p_in: f64,
    p_focus: f64,
    eta_focus_to_fiber: f64,
) -> Result<PowerRatioCoupling> {
    if !(p_focus > 0.0) {
        return domain("focus power must be > 0");
    }
    if !is_efficiency(eta_focus_to_fiber) {
        return domain("focus-to-fiber efficiency must be in (0, 1]");
    }
    if !(p_in >= 0.0) {
        return domain("fiber power must be >= 0");
    }
    let p_front = p_focus * eta_focus_to_fiber;
    let inconsistent = p_in > p_front;
    if inconsistent {
        log::warn!(
            "fiber power {p_in} exceeds power in front of the fiber {p_front} ({:+.1} dB)",
            to_db(p_in / p_front)
        );
    }
    Ok(PowerRatioCoupling {
        eta_smf: p_in / p_front,
        p_front,
        inconsistent,
    })
}
