//! Modelled efficiency chain evaluated on a parameter grid.
//!
//! Every point assumes ideal correction of the first `J` modes
//! (`η_φ,ON = 1`); the remaining factors follow from `r0`, wind speed and
//! absorption.

use serde::{Deserialize, Serialize};

use crate::atmosphere::{greenwood_from, scintillation_report, TurbulenceState};
use crate::coupling::{
    compose_smf, eta0, eta_phi_residual, eta_tau, mode_match_beta, obscuration_ratio,
    SmfCouplingBreakdown,
};
use crate::error::{domain, Result};
use crate::linkbudget::{full_budget, BudgetReport, LinkGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    R0,
    Wind,
    ACoeff,
    /// Number of corrected modes `J`; grid values are rounded.
    Modes,
}

/// Operating point of the modelled chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPoint {
    pub geometry: LinkGeometry,
    /// Fried parameter at the path wavelength (m).
    pub r0: f64,
    pub wind: f64,
    /// dB/km.
    pub a_coeff: f64,
}

impl ModelPoint {
    fn with(&self, var: SweepVariable, value: f64) -> Result<Self> {
        let mut p = self.clone();
        match var {
            SweepVariable::R0 => p.r0 = value,
            SweepVariable::Wind => p.wind = value,
            SweepVariable::ACoeff => p.a_coeff = value,
            SweepVariable::Modes => {
                let j = value.round();
                if !(j >= 1.0) {
                    return domain(format!("J must be >= 1, got {value}"));
                }
                p.geometry.chain.ao_modes = j as usize;
            }
        }
        Ok(p)
    }
}

/// Modelled `η_SMF` with ideal correction of the first `J` modes.
pub fn model_smf(point: &ModelPoint) -> Result<SmfCouplingBreakdown> {
    let path = &point.geometry.path;
    let chain = &point.geometry.chain;
    let ts = TurbulenceState::from_r0(point.r0, point.wind, path)?;
    let eta_s = scintillation_report(&ts, path, chain.d_rx)?.eta_s;
    compose_smf(
        eta0(
            mode_match_beta(chain, path.wavelength())?,
            obscuration_ratio(chain),
        )?,
        eta_s,
        1.0,
        eta_phi_residual(chain.ao_modes, chain.d_rx, point.r0)?,
        eta_tau(greenwood_from(point.wind, point.r0), chain.f_3db)?,
    )
}

/// Coupling breakdown and channel budget at one point.
pub fn evaluate(point: &ModelPoint) -> Result<(SmfCouplingBreakdown, BudgetReport)> {
    let smf = model_smf(point)?;
    let ts = TurbulenceState::from_r0(point.r0, point.wind, &point.geometry.path)?;
    let budget = full_budget(&point.geometry, &ts, point.a_coeff, &smf)?;
    Ok((smf, budget))
}

/// One grid point; ratios, not dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub r0_m: f64,
    pub wind_mps: f64,
    pub a_db_per_km: f64,
    pub modes: usize,
    pub w_l_m: f64,
    pub eta_a: f64,
    pub eta_coll: f64,
    pub eta_focus: f64,
    pub eta0: f64,
    pub eta_s: f64,
    pub eta_phi_residual: f64,
    pub eta_tau: f64,
    pub eta_smf: f64,
    pub eta_optics: f64,
    pub eta_fiber: f64,
    pub eta_ch: f64,
}

/// `steps` uniformly spaced values from `start` to `end` inclusive; a single
/// step yields `start`.
pub fn grid(start: f64, end: f64, steps: usize) -> Result<Vec<f64>> {
    if steps == 0 {
        return domain("sweep needs at least one step");
    }
    if !(start.is_finite() && end.is_finite()) {
        return domain("sweep bounds must be finite");
    }
    if steps == 1 {
        return Ok(vec![start]);
    }
    let h = (end - start) / (steps - 1) as f64;
    Ok((0..steps)
        .map(|i| {
            if i == steps - 1 {
                end
            } else {
                start + h * i as f64
            }
        })
        .collect())
}

/// Default `r0` grid: 50 points over `[0.03, 0.15]` m.
pub fn default_r0_grid() -> Vec<f64> {
    grid(0.03, 0.15, 50).expect("static grid")
}

/// Evaluate the chain at every grid value, in grid order.
pub fn sweep(base: &ModelPoint, var: SweepVariable, values: &[f64]) -> Result<Vec<SweepRow>> {
    values
        .iter()
        .map(|&v| {
            let p = base.with(var, v)?;
            let (smf, b) = evaluate(&p)?;
            Ok(SweepRow {
                value: v,
                r0_m: p.r0,
                wind_mps: p.wind,
                a_db_per_km: p.a_coeff,
                modes: p.geometry.chain.ao_modes,
                w_l_m: b.w_l,
                eta_a: b.eta_a,
                eta_coll: b.eta_coll,
                eta_focus: b.eta_focus,
                eta0: smf.eta0,
                eta_s: smf.eta_s,
                eta_phi_residual: smf.eta_phi_residual,
                eta_tau: smf.eta_tau,
                eta_smf: smf.eta_smf,
                eta_optics: b.eta_optics,
                eta_fiber: b.eta_fiber,
                eta_ch: b.eta_ch,
            })
        })
        .collect()
}
