//! JSON run configuration. Every key is optional; absent keys take the
//! hardware defaults of the library. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use skylink_core::atmosphere::OpticalPath;
use skylink_core::coupling::ReceiverChain;
use skylink_core::linkbudget::LinkGeometry;
use skylink_core::qkd::{DetectorModel, QkdSessionModel};
use skylink_core::units::from_db;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub link: LinkSection,
    pub receiver: ReceiverSection,
    pub turbulence: TurbulenceSection,
    pub qkd: QkdSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkSection {
    pub wavelength_m: Option<f64>,
    pub path_length_m: Option<f64>,
    pub w0_m: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReceiverSection {
    pub d_rx_m: Option<f64>,
    pub d_obs_m: Option<f64>,
    pub f_eff_m: Option<f64>,
    pub mfd_m: Option<f64>,
    pub eta_tel_db: Option<f64>,
    pub eta_optics_db: Option<f64>,
    pub eta_fiber_db: Option<f64>,
    pub ao_modes: Option<usize>,
    pub f_3db_hz: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TurbulenceSection {
    /// At the link wavelength.
    pub r0_m: Option<f64>,
    pub wind_mps: Option<f64>,
    pub a_coeff_db_per_km: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QkdSection {
    pub detector_efficiency: Option<f64>,
    pub noise_rate_hz: Option<f64>,
    pub window_s: Option<f64>,
    pub internal_loss_db: Option<f64>,
    pub reference_rate_hz: Option<f64>,
    pub pulse_rate_hz: Option<f64>,
    pub block_size_bytes: Option<u64>,
    pub mu1: Option<f64>,
    pub mu2: Option<f64>,
    pub p_mu1: Option<f64>,
    pub p_z_tx: Option<f64>,
    pub p_z_rx: Option<f64>,
    pub eps_sec: Option<f64>,
    pub eps_cor: Option<f64>,
    pub f_ec: Option<f64>,
}

pub const DEFAULT_R0_M: f64 = 0.15;
pub const DEFAULT_WIND_MPS: f64 = 1.0;
pub const DEFAULT_A_DB_PER_KM: f64 = 0.2;

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn path(&self) -> Result<OpticalPath, CliError> {
        let d = OpticalPath::design();
        Ok(OpticalPath::new(
            self.link.wavelength_m.unwrap_or(d.wavelength()),
            self.link.path_length_m.unwrap_or(d.path_length()),
        )?)
    }

    pub fn chain(&self) -> ReceiverChain {
        let d = ReceiverChain::default();
        let r = &self.receiver;
        ReceiverChain {
            d_rx: r.d_rx_m.unwrap_or(d.d_rx),
            d_obs: r.d_obs_m.unwrap_or(d.d_obs),
            f_eff: r.f_eff_m.unwrap_or(d.f_eff),
            mfd: r.mfd_m.unwrap_or(d.mfd),
            eta_tel: r.eta_tel_db.map_or(d.eta_tel, from_db),
            eta_optics: r.eta_optics_db.map_or(d.eta_optics, from_db),
            eta_fiber: r.eta_fiber_db.map_or(d.eta_fiber, from_db),
            ao_modes: r.ao_modes.unwrap_or(d.ao_modes),
            f_3db: r.f_3db_hz.unwrap_or(d.f_3db),
        }
    }

    pub fn geometry(&self) -> Result<LinkGeometry, CliError> {
        let w0 = self.link.w0_m.unwrap_or(LinkGeometry::design().w0);
        Ok(LinkGeometry::new(self.path()?, w0, self.chain())?)
    }

    pub fn r0(&self) -> f64 {
        self.turbulence.r0_m.unwrap_or(DEFAULT_R0_M)
    }

    pub fn wind(&self) -> f64 {
        self.turbulence.wind_mps.unwrap_or(DEFAULT_WIND_MPS)
    }

    pub fn a_coeff(&self) -> f64 {
        self.turbulence
            .a_coeff_db_per_km
            .unwrap_or(DEFAULT_A_DB_PER_KM)
    }

    /// Session model for a detector preset with configured overrides.
    pub fn session(&self, spad: bool) -> Result<QkdSessionModel, CliError> {
        let mut s = if spad {
            QkdSessionModel::spad()
        } else {
            QkdSessionModel::snspd()
        };
        let q = &self.qkd;
        let det: &mut DetectorModel = &mut s.detector;
        if let Some(v) = q.detector_efficiency {
            det.efficiency = v;
        }
        if let Some(v) = q.noise_rate_hz {
            det.noise_rate = v;
        }
        if let Some(v) = q.window_s {
            det.window = v;
        }
        if let Some(v) = q.internal_loss_db {
            s.internal_loss = from_db(v);
        }
        if let Some(v) = q.reference_rate_hz {
            s.reference_rate = v;
        }
        if let Some(v) = q.pulse_rate_hz {
            s.pulse_rate = v;
        }
        if let Some(v) = q.block_size_bytes {
            s.block_size_bytes = v;
        }
        let p = &mut s.protocol;
        for (slot, v) in [
            (&mut p.mu1, q.mu1),
            (&mut p.mu2, q.mu2),
            (&mut p.p_mu1, q.p_mu1),
            (&mut p.p_z_tx, q.p_z_tx),
            (&mut p.p_z_rx, q.p_z_rx),
            (&mut p.eps_sec, q.eps_sec),
            (&mut p.eps_cor, q.eps_cor),
            (&mut p.f_ec, q.f_ec),
        ] {
            if let Some(v) = v {
                *slot = v;
            }
        }
        s.validate()?;
        Ok(s)
    }
}
