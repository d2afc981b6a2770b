//! Free-space channel budget from the transmitter aperture to the QKD
//! receiver input:
//!
//! `η_Ch = η_Focus · η_Optics · η_SMF · η_Fiber`, with `η_Focus = η_A · η_Coll`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::atmosphere::{OpticalPath, TurbulenceState};
use crate::coupling::{ReceiverChain, SmfCouplingBreakdown};
use crate::error::{domain, Result};
use crate::units::{is_efficiency, to_db};

/// Transmit waist, path and receiver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkGeometry {
    pub path: OpticalPath,
    /// Transmit beam waist `W0` (m).
    pub w0: f64,
    pub chain: ReceiverChain,
}

impl LinkGeometry {
    pub fn new(path: OpticalPath, w0: f64, chain: ReceiverChain) -> Result<Self> {
        if !(w0 > 0.0) {
            return domain(format!("transmit waist must be > 0, got {w0}"));
        }
        chain.validate()?;
        Ok(Self { path, w0, chain })
    }

    /// 18 km design link, 25 mm waist, default receiver.
    pub fn design() -> Self {
        Self {
            path: OpticalPath::design(),
            w0: 25e-3,
            chain: ReceiverChain::default(),
        }
    }

    /// Rayleigh range `z0 = π·W0²/λ`.
    pub fn rayleigh_range(&self) -> f64 {
        PI * self.w0 * self.w0 / self.path.wavelength()
    }
}

/// Half-angle divergence terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    /// Diffraction `λ/(π·W0)`.
    pub theta0: f64,
    /// Turbulence broadening `λ/(π·ρ0)`, `ρ0 = r0/2.1`.
    pub theta_turb: f64,
    pub theta: f64,
}

/// `r0` must be at the path wavelength.
pub fn beam_divergence(geom: &LinkGeometry, r0: f64) -> Result<Divergence> {
    if !(r0 > 0.0) {
        return domain(format!("r0 must be > 0, got {r0}"));
    }
    let lambda = geom.path.wavelength();
    let theta0 = lambda / (PI * geom.w0);
    let rho0 = r0 / 2.1;
    let theta_turb = lambda / (PI * rho0);
    Ok(Divergence {
        theta0,
        theta_turb,
        theta: (theta0 * theta0 + theta_turb * theta_turb).sqrt(),
    })
}

/// Beam radius at the receiver `W_L = θ·L`.
pub fn received_waist(theta: f64, path: &OpticalPath) -> Result<f64> {
    if !(theta > 0.0) {
        return domain("divergence must be > 0");
    }
    Ok(theta * path.path_length())
}

/// Absorption efficiency for a coefficient in dB/km,
/// `10^(−A·L_km/10)`, i.e. `e^(−A'·L)` with `A' = A·ln10/10⁴` in 1/m.
pub fn absorption_efficiency(a_db_per_km: f64, path: &OpticalPath) -> Result<f64> {
    if !(a_db_per_km >= 0.0 && a_db_per_km.is_finite()) {
        return domain(format!(
            "absorption coefficient must be >= 0, got {a_db_per_km}"
        ));
    }
    let a_per_m = a_db_per_km * std::f64::consts::LN_10 / 1e4;
    Ok((-a_per_m * path.path_length()).exp())
}

/// Gaussian-beam power through an annular aperture, times the telescope
/// reflectivity.
pub fn collection_efficiency(w_l: f64, chain: &ReceiverChain) -> Result<f64> {
    if !(w_l > 0.0) {
        return domain(format!("received beam radius must be > 0, got {w_l}"));
    }
    let w2 = 2.0 * w_l * w_l;
    Ok(chain.eta_tel
        * ((-chain.d_obs * chain.d_obs / w2).exp() - (-chain.d_rx * chain.d_rx / w2).exp()))
}

/// Every term of the channel budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub theta0: f64,
    pub theta_turb: f64,
    pub theta: f64,
    pub w_l: f64,
    pub eta_a: f64,
    pub eta_coll: f64,
    pub eta_focus: f64,
    pub eta_optics: f64,
    pub eta_smf: f64,
    pub eta_fiber: f64,
    pub eta_ch: f64,
}

impl BudgetReport {
    /// Multiplicative terms of `η_Ch` (their dB values sum to the total).
    pub fn db_table(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("eta_a", to_db(self.eta_a)),
            ("eta_coll", to_db(self.eta_coll)),
            ("eta_optics", to_db(self.eta_optics)),
            ("eta_smf", to_db(self.eta_smf)),
            ("eta_fiber", to_db(self.eta_fiber)),
        ]
    }
}

/// Compose the full budget. `η_SMF` is injected so measured and modelled
/// coupling can be mixed.
pub fn full_budget(
    geom: &LinkGeometry,
    ts: &TurbulenceState,
    a_db_per_km: f64,
    smf: &SmfCouplingBreakdown,
) -> Result<BudgetReport> {
    budget_with_eta_smf(geom, ts, a_db_per_km, smf.eta_smf)
}

pub fn budget_with_eta_smf(
    geom: &LinkGeometry,
    ts: &TurbulenceState,
    a_db_per_km: f64,
    eta_smf: f64,
) -> Result<BudgetReport> {
    if !is_efficiency(eta_smf) {
        return domain(format!("eta_smf must be in (0, 1], got {eta_smf}"));
    }
    let r0 = ts.r0_at(geom.path.wavelength());
    let div = beam_divergence(geom, r0)?;
    let w_l = received_waist(div.theta, &geom.path)?;
    let eta_a = absorption_efficiency(a_db_per_km, &geom.path)?;
    let eta_coll = collection_efficiency(w_l, &geom.chain)?;
    let eta_focus = eta_a * eta_coll;
    let chain = &geom.chain;
    Ok(BudgetReport {
        theta0: div.theta0,
        theta_turb: div.theta_turb,
        theta: div.theta,
        w_l,
        eta_a,
        eta_coll,
        eta_focus,
        eta_optics: chain.eta_optics,
        eta_smf,
        eta_fiber: chain.eta_fiber,
        eta_ch: eta_focus * chain.eta_optics * eta_smf * chain.eta_fiber,
    })
}
