//! Detection rates, QBER and secret key rate for the 3-state 1-decoy
//! efficient BB84 protocol.
//!
//! Rates scale linearly with channel efficiency from a calibrated reference
//! rate `R_ref` (detected rate at `η_Ch = 1` with a unit-efficiency detector
//! and no receiver loss). The secret key rate uses the 1-decoy finite-key
//! bound on blocks of `n_Z` sifted key-basis bits.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::units::{from_db, is_efficiency};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub label: String,
    pub efficiency: f64,
    /// Background plus dark count rate (Hz).
    pub noise_rate: f64,
    /// Coincidence window around the expected arrival time (s).
    pub window: f64,
}

impl DetectorModel {
    /// Superconducting nanowire detectors, 80 % efficiency.
    pub fn snspd() -> Self {
        Self {
            label: "snspd".into(),
            efficiency: 0.80,
            noise_rate: 2e3,
            window: 600e-12,
        }
    }

    /// Room-temperature InGaAs avalanche diodes, 15 % efficiency.
    pub fn spad() -> Self {
        Self {
            label: "spad".into(),
            efficiency: 0.15,
            noise_rate: 2e3,
            window: 600e-12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !is_efficiency(self.efficiency) {
            return domain(format!(
                "detector efficiency must be in (0, 1], got {}",
                self.efficiency
            ));
        }
        if !(self.noise_rate >= 0.0) {
            return domain("noise rate must be >= 0");
        }
        if !(self.window > 0.0) {
            return domain("coincidence window must be > 0");
        }
        Ok(())
    }
}

/// Intensities, basis probabilities and security parameters of the
/// 1-decoy protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoyProtocol {
    /// Signal mean photon number `μ1`.
    pub mu1: f64,
    /// Decoy mean photon number `μ2 < μ1`.
    pub mu2: f64,
    /// Probability of sending `μ1`.
    pub p_mu1: f64,
    /// Key-basis (Z) probability at the transmitter.
    pub p_z_tx: f64,
    /// Key-basis (Z) probability at the receiver.
    pub p_z_rx: f64,
    pub eps_sec: f64,
    pub eps_cor: f64,
    /// Error-correction inefficiency, `λ_EC = f_EC·n_Z·h(Q_Z)`.
    pub f_ec: f64,
}

impl Default for DecoyProtocol {
    fn default() -> Self {
        Self {
            mu1: 0.6,
            mu2: 0.15,
            p_mu1: 0.5,
            p_z_tx: 0.5,
            p_z_rx: 0.5,
            eps_sec: 1e-9,
            eps_cor: 1e-15,
            f_ec: 1.16,
        }
    }
}

impl DecoyProtocol {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu1 > self.mu2 && self.mu2 >= 0.0) {
            return domain(format!(
                "need mu1 > mu2 >= 0, got {} / {}",
                self.mu1, self.mu2
            ));
        }
        for (name, p) in [
            ("p_mu1", self.p_mu1),
            ("p_z_tx", self.p_z_tx),
            ("p_z_rx", self.p_z_rx),
        ] {
            if !(p > 0.0 && p < 1.0) {
                return domain(format!("{name} must be in (0, 1), got {p}"));
            }
        }
        if !(self.eps_sec > 0.0 && self.eps_sec < 1.0 && self.eps_cor > 0.0 && self.eps_cor < 1.0) {
            return domain("security parameters must be in (0, 1)");
        }
        if !(self.f_ec >= 1.0) {
            return domain("f_ec must be >= 1");
        }
        Ok(())
    }

    fn intensities(&self) -> [(f64, f64); 2] {
        [(self.mu1, self.p_mu1), (self.mu2, 1.0 - self.p_mu1)]
    }

    /// `τ_n = Σ_k p_k·e^(−μ_k)·μ_k^n/n!` for `n ∈ {0, 1}`.
    fn tau(&self, n: u32) -> f64 {
        self.intensities()
            .iter()
            .map(|(mu, p)| p * (-mu).exp() * mu.powi(n as i32))
            .sum()
    }
}

/// Reference signal detected at `η_Ch = −29 dB` with the SNSPD receiver.
pub const SNSPD_REFERENCE_RATE_HZ: f64 = 20.4e3;
pub const REFERENCE_ETA_CH_DB: f64 = -29.0;
pub const INTERNAL_LOSS_DB: f64 = -1.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QkdSessionModel {
    pub detector: DetectorModel,
    /// Receiver internal transmission, ratio.
    pub internal_loss: f64,
    /// `R_ref` (Hz).
    pub reference_rate: f64,
    /// Source repetition rate (Hz); only used to window raw noise rates and
    /// split detections between intensities.
    pub pulse_rate: f64,
    pub protocol: DecoyProtocol,
    /// Sifted key-basis block `n_Z` in bytes.
    pub block_size_bytes: u64,
}

impl QkdSessionModel {
    /// SNSPD receiver, 250000-byte blocks, `R_ref` calibrated on the
    /// 20.4 kHz / −29 dB reference point.
    pub fn snspd() -> Self {
        let mut s = Self {
            detector: DetectorModel::snspd(),
            internal_loss: from_db(INTERNAL_LOSS_DB),
            reference_rate: 1.0,
            pulse_rate: 50e6,
            protocol: DecoyProtocol::default(),
            block_size_bytes: 250_000,
        };
        s.calibrate(SNSPD_REFERENCE_RATE_HZ, from_db(REFERENCE_ETA_CH_DB));
        s
    }

    /// SPAD receiver, 50000-byte blocks, same `R_ref` as [`Self::snspd`].
    pub fn spad() -> Self {
        Self {
            detector: DetectorModel::spad(),
            block_size_bytes: 50_000,
            ..Self::snspd()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.detector.validate()?;
        self.protocol.validate()?;
        if !is_efficiency(self.internal_loss) {
            return domain("internal loss must be in (0, 1]");
        }
        if !(self.reference_rate > 0.0 && self.pulse_rate > 0.0) {
            return domain("reference and pulse rates must be > 0");
        }
        if self.block_size_bytes == 0 {
            return domain("block size must be > 0");
        }
        Ok(())
    }

    /// Set `R_ref` so that `measured_rate` corresponds to `eta_ch`.
    pub fn calibrate(&mut self, measured_rate: f64, eta_ch: f64) {
        self.reference_rate =
            measured_rate / (eta_ch * self.internal_loss * self.detector.efficiency);
    }

    pub fn block_size_bits(&self) -> f64 {
        8.0 * self.block_size_bytes as f64
    }

    /// In-window noise rate implied by the detector's raw noise rate.
    pub fn windowed_noise(&self) -> f64 {
        windowed_noise_rate(
            self.detector.noise_rate,
            self.detector.window,
            self.pulse_rate,
        )
    }
}

/// `R_ref · η_Ch · internal_loss · η_det`.
pub fn expected_signal_rate(session: &QkdSessionModel, eta_ch: f64) -> Result<f64> {
    if !is_efficiency(eta_ch) {
        return domain(format!(
            "channel efficiency must be in (0, 1], got {eta_ch}"
        ));
    }
    Ok(session.reference_rate * eta_ch * session.internal_loss * session.detector.efficiency)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelEstimate {
    pub eta_ch: f64,
    /// Set when the inferred efficiency exceeds 1.
    pub unphysical: bool,
}

/// Inverse of [`expected_signal_rate`].
pub fn channel_efficiency_from_rate(
    session: &QkdSessionModel,
    measured_rate: f64,
) -> Result<ChannelEstimate> {
    if !(measured_rate > 0.0) {
        return domain("measured rate must be > 0");
    }
    if !(session.reference_rate > 0.0) {
        return domain("reference rate must be > 0");
    }
    let eta_ch = measured_rate
        / (session.reference_rate * session.internal_loss * session.detector.efficiency);
    let unphysical = eta_ch > 1.0;
    if unphysical {
        log::warn!("measured rate {measured_rate} Hz implies channel efficiency {eta_ch} > 1");
    }
    Ok(ChannelEstimate { eta_ch, unphysical })
}

/// Noise accepted by a gate of width `window` once per pulse period:
/// `raw · window · pulse_rate`.
pub fn windowed_noise_rate(raw_rate: f64, window: f64, pulse_rate: f64) -> f64 {
    raw_rate * (window * pulse_rate).min(1.0)
}

/// QBER with in-window noise contributing error ½:
/// `(q_int·S + ½·N) / (S + N)`.
pub fn expected_qber(signal_rate: f64, noise_rate: f64, intrinsic_qber: f64) -> Result<f64> {
    if !(signal_rate >= 0.0 && noise_rate >= 0.0) {
        return domain("rates must be >= 0");
    }
    if signal_rate + noise_rate == 0.0 {
        return domain("QBER undefined with no detections");
    }
    Ok((intrinsic_qber * signal_rate + 0.5 * noise_rate) / (signal_rate + noise_rate))
}

/// Invert [`expected_qber`] for the intrinsic (optical) error, clamped to
/// `[0, ½]`.
pub fn intrinsic_qber(observed_qber: f64, signal_rate: f64, noise_rate: f64) -> Result<f64> {
    if !(signal_rate > 0.0) {
        return domain("signal rate must be > 0");
    }
    Ok(
        ((observed_qber * (signal_rate + noise_rate) - 0.5 * noise_rate) / signal_rate)
            .clamp(0.0, 0.5),
    )
}

/// Aggregate rates over a key block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkrInput {
    pub signal_rate: f64,
    /// In-window noise rate (Hz).
    pub noise_rate: f64,
    pub qber_z: f64,
    pub qber_x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkrReport {
    /// Secret key rate (bit/s), never negative.
    pub skr: f64,
    /// Unclamped key length per block (bits); may be negative.
    pub key_length: f64,
    /// Time to fill one `n_Z` block (s).
    pub block_time: f64,
    pub n_z: f64,
    pub n_x: f64,
    pub s_z0: f64,
    pub s_z1: f64,
    pub s_x1: f64,
    pub phase_error: f64,
    /// Why the rate was clamped to zero, if it was.
    pub diagnostic: Option<String>,
}

fn binary_entropy(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
    }
}

/// Finite-size correction on the phase-error estimate.
fn gamma_correction(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let inner = (c + d) / (c * d * (1.0 - b) * b) * 21.0 * 21.0 / (a * a);
    ((c + d) * (1.0 - b) * b / (c * d * std::f64::consts::LN_2) * inner.log2()).sqrt()
}

struct BasisCounts {
    /// Per intensity (μ1, μ2).
    n: [f64; 2],
    m: [f64; 2],
    n_tot: f64,
    m_tot: f64,
}

fn zero_rate(mut r: SkrReport, why: String) -> SkrReport {
    log::warn!("secret key rate clamped to 0: {why}");
    r.skr = 0.0;
    r.diagnostic = Some(why);
    r
}

/// 1-decoy finite-key secret key rate.
pub fn secret_key_rate(session: &QkdSessionModel, obs: &SkrInput) -> Result<SkrReport> {
    session.validate()?;
    let proto = &session.protocol;
    if !(obs.signal_rate > 0.0) {
        return domain("signal rate must be > 0");
    }
    if !(obs.noise_rate >= 0.0) {
        return domain("noise rate must be >= 0");
    }
    for q in [obs.qber_z, obs.qber_x] {
        if !(0.0..=1.0).contains(&q) {
            return domain(format!("QBER must be in [0, 1], got {q}"));
        }
    }

    // Split detections between intensities: signal through the per-pulse
    // detection probability, noise in proportion to the sending probability.
    let per_pulse = obs.signal_rate / session.pulse_rate;
    let click = |eta: f64| -> f64 {
        proto
            .intensities()
            .iter()
            .map(|(mu, p)| p * (1.0 - (-eta * mu).exp()))
            .sum()
    };
    if per_pulse >= click(1.0) {
        return domain("signal rate exceeds the source's maximum detection rate");
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if click(mid) < per_pulse {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let eta = 0.5 * (lo + hi);
    let total = obs.signal_rate + obs.noise_rate;
    let iq_z = intrinsic_qber(obs.qber_z, obs.signal_rate, obs.noise_rate)?;
    let iq_x = intrinsic_qber(obs.qber_x, obs.signal_rate, obs.noise_rate)?;
    let mut frac = [0.0; 2];
    let mut err_z = [0.0; 2];
    let mut err_x = [0.0; 2];
    for (k, (mu, p)) in proto.intensities().iter().enumerate() {
        let s_k = session.pulse_rate * p * (1.0 - (-eta * mu).exp());
        let n_k = obs.noise_rate * p;
        frac[k] = (s_k + n_k) / total;
        err_z[k] = (iq_z * s_k + 0.5 * n_k) / (s_k + n_k);
        err_x[k] = (iq_x * s_k + 0.5 * n_k) / (s_k + n_k);
    }

    let n_z = session.block_size_bits();
    let z_share = proto.p_z_tx * proto.p_z_rx;
    let x_share = (1.0 - proto.p_z_tx) * (1.0 - proto.p_z_rx);
    let n_x = n_z * x_share / z_share;
    let block_time = n_z / (total * z_share);
    let counts = |n_tot: f64, err: &[f64; 2]| {
        let n = [n_tot * frac[0], n_tot * frac[1]];
        let m = [n[0] * err[0], n[1] * err[1]];
        BasisCounts {
            n,
            m,
            n_tot,
            m_tot: m[0] + m[1],
        }
    };
    let z = counts(n_z, &err_z);
    let x = counts(n_x, &err_x);

    let (mu1, mu2) = (proto.mu1, proto.mu2);
    let [(_, p1), (_, p2)] = proto.intensities();
    let ln_term = (19.0 / proto.eps_sec).ln();
    let tau0 = proto.tau(0);
    let tau1 = proto.tau(1);
    // Hoeffding-corrected, intensity-normalised counts
    let bound = |cnt: f64, tot: f64, mu: f64, p: f64, sign: f64| {
        mu.exp() / p * (cnt + sign * (tot / 2.0 * ln_term).sqrt())
    };
    let vacuum_and_single = |c: &BasisCounts| {
        let n_minus_2 = bound(c.n[1], c.n_tot, mu2, p2, -1.0);
        let n_plus_1 = bound(c.n[0], c.n_tot, mu1, p1, 1.0);
        let s0_lower = (tau0 / (mu1 - mu2) * (mu1 * n_minus_2 - mu2 * n_plus_1)).max(0.0);
        let s0_upper = 2.0 * (tau0 * mu2.exp() / p2 * c.m[1] + (c.n_tot / 2.0 * ln_term).sqrt());
        let s1 = tau1 * mu1 / (mu2 * (mu1 - mu2))
            * (n_minus_2
                - (mu2 * mu2) / (mu1 * mu1) * n_plus_1
                - (mu1 * mu1 - mu2 * mu2) / (mu1 * mu1) * s0_upper / tau0);
        (s0_lower, s1)
    };
    let (s_z0, s_z1) = vacuum_and_single(&z);
    let (_, s_x1) = vacuum_and_single(&x);
    let v_x1 = (tau1 / (mu1 - mu2)
        * (bound(x.m[0], x.m_tot, mu1, p1, 1.0) - bound(x.m[1], x.m_tot, mu2, p2, -1.0)))
    .max(0.0);

    let mut report = SkrReport {
        skr: 0.0,
        key_length: 0.0,
        block_time,
        n_z,
        n_x,
        s_z0,
        s_z1,
        s_x1,
        phase_error: 0.5,
        diagnostic: None,
    };
    if obs.qber_z >= 0.5 || obs.qber_x >= 0.5 {
        return Ok(zero_rate(report, "QBER at or above 1/2".into()));
    }
    if !(s_z1 > 0.0 && s_x1 > 0.0) {
        return Ok(zero_rate(
            report,
            format!("single-photon bounds not positive (s_Z1 = {s_z1:.1}, s_X1 = {s_x1:.1})"),
        ));
    }
    let ratio = (v_x1 / s_x1).clamp(1e-12, 0.5);
    let phase_error = (ratio + gamma_correction(proto.eps_sec, ratio, s_z1, s_x1)).min(0.5);
    let lambda_ec = proto.f_ec * n_z * binary_entropy(obs.qber_z);
    let key_length = s_z0 + s_z1 * (1.0 - binary_entropy(phase_error))
        - lambda_ec
        - 6.0 * (19.0 / proto.eps_sec).log2()
        - (2.0 / proto.eps_cor).log2();
    report.phase_error = phase_error;
    report.key_length = key_length;
    if key_length <= 0.0 {
        return Ok(zero_rate(
            report,
            format!("finite-key length not positive ({key_length:.0} bits per block)"),
        ));
    }
    report.skr = key_length / block_time;
    Ok(report)
}

/// One reporting interval of a QKD session log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateObservation {
    #[serde(rename = "t_s")]
    pub timestamp: f64,
    #[serde(rename = "signal_hz")]
    pub signal_rate: f64,
    #[serde(rename = "noise_hz")]
    pub noise_rate: f64,
    pub qber_z: f64,
    pub qber_x: f64,
    #[serde(rename = "skr_bps")]
    pub skr: Option<f64>,
}

impl RateObservation {
    fn validate(&self) -> std::result::Result<(), String> {
        if !(self.signal_rate >= 0.0 && self.noise_rate >= 0.0) {
            return Err("rates must be >= 0".into());
        }
        for q in [self.qber_z, self.qber_x] {
            if !(0.0..=0.5).contains(&q) {
                return Err(format!("QBER {q} outside [0, 0.5]"));
            }
        }
        if self.skr.is_some_and(|s| !(s >= 0.0)) {
            return Err("SKR must be >= 0".into());
        }
        Ok(())
    }
}

pub const SESSION_LOG_HEADER: [&str; 6] = [
    "t_s",
    "signal_hz",
    "noise_hz",
    "qber_z",
    "qber_x",
    "skr_bps",
];

/// Parse a session-log CSV (header required).
pub fn read_session_log<R: Read>(reader: R) -> Result<Vec<RateObservation>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(SESSION_LOG_HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header {:?}", SESSION_LOG_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for row in rdr.deserialize::<RateObservation>() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        row.validate().map_err(|msg| Error::Parse {
            line: out.len() as u64 + 2,
            msg,
        })?;
        out.push(row);
    }
    Ok(out)
}

pub fn load_session_log(path: impl AsRef<Path>) -> Result<Vec<RateObservation>> {
    read_session_log(std::fs::File::open(path)?)
}

pub fn write_session_log<W: Write>(writer: W, records: &[RateObservation]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
}

impl FieldStats {
    fn from_iter(values: impl Iterator<Item = f64>) -> Option<Self> {
        let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            n += 1;
            let d = v - mean;
            mean += d / n as f64;
            m2 += d * (v - mean);
            min = min.min(v);
            max = max.max(v);
        }
        (n > 0).then(|| Self {
            mean,
            min,
            max,
            std: (m2 / n as f64).sqrt(),
            count: n,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub signal_rate: FieldStats,
    pub noise_rate: FieldStats,
    pub qber_z: FieldStats,
    pub qber_x: FieldStats,
    /// Absent when no record carries an SKR.
    pub skr: Option<FieldStats>,
    pub duration: f64,
}

impl SessionSummary {
    /// Mean rates as an [`SkrInput`]; `noise_is_windowed = false` applies the
    /// session's windowing to the logged noise.
    pub fn skr_input(&self, session: &QkdSessionModel, noise_is_windowed: bool) -> SkrInput {
        let noise = if noise_is_windowed {
            self.noise_rate.mean
        } else {
            windowed_noise_rate(
                self.noise_rate.mean,
                session.detector.window,
                session.pulse_rate,
            )
        };
        SkrInput {
            signal_rate: self.signal_rate.mean,
            noise_rate: noise,
            qber_z: self.qber_z.mean,
            qber_x: self.qber_x.mean,
        }
    }
}

pub fn analyze_session_log(records: &[RateObservation]) -> Result<SessionSummary> {
    if records.is_empty() {
        return Err(Error::InsufficientData("empty session log".into()));
    }
    let stats = |f: fn(&RateObservation) -> f64| {
        FieldStats::from_iter(records.iter().map(f)).expect("non-empty")
    };
    Ok(SessionSummary {
        signal_rate: stats(|r| r.signal_rate),
        noise_rate: stats(|r| r.noise_rate),
        qber_z: stats(|r| r.qber_z),
        qber_x: stats(|r| r.qber_x),
        skr: FieldStats::from_iter(records.iter().filter_map(|r| r.skr)),
        duration: records.last().unwrap().timestamp - records[0].timestamp,
    })
}
