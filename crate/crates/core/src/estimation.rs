//! Wavefront-sensor log ingestion, Fried-parameter fit and coupling
//! prediction from closed-loop data.
//!
//! WFS log format (UTF-8, `.` decimal):
//!
//! ```text
//! # wavelength_m=1.555e-6 d_rx_m=0.41
//! t_s,valid,b1,b2,...,bJ
//! 0,1,0.12,-0.3,...
//! ```
//!
//! Coefficients are radians of phase at the header wavelength. `valid = 0`
//! masks the whole sample; an empty coefficient field masks that mode only.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::atmosphere::{
    greenwood_from, scale_r0, scintillation_report, OpticalPath, TurbulenceState,
};
use crate::coupling::{
    compose_smf, eta0, eta_phi_on, eta_phi_residual, eta_tau, mode_match_beta, obscuration_ratio,
    ReceiverChain, SmfCouplingBreakdown,
};
use crate::error::{domain, Error, Result};
use crate::zernike::{empirical_variances, noll_weight, ModeVarianceSet, ZernikeSeries};

fn parse_err<T>(line: u64, msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse {
        line,
        msg: msg.into(),
    })
}

fn parse_header(line: &str) -> Result<(f64, f64)> {
    let body = match line.trim().strip_prefix('#') {
        Some(b) => b,
        None => return parse_err(1, "expected '# wavelength_m=<f> d_rx_m=<f>'"),
    };
    let (mut wavelength, mut d_rx) = (None, None);
    for tok in body.split_whitespace() {
        let (key, val) = match tok.split_once('=') {
            Some(kv) => kv,
            None => return parse_err(1, format!("malformed header token '{tok}'")),
        };
        let v: f64 = match val.parse() {
            Ok(v) => v,
            Err(_) => return parse_err(1, format!("bad number '{val}' for {key}")),
        };
        match key {
            "wavelength_m" => wavelength = Some(v),
            "d_rx_m" => d_rx = Some(v),
            _ => return parse_err(1, format!("unknown header key '{key}'")),
        }
    }
    match (wavelength, d_rx) {
        (Some(w), Some(d)) if w > 0.0 && d > 0.0 => Ok((w, d)),
        (Some(_), Some(_)) => parse_err(1, "wavelength_m and d_rx_m must be > 0"),
        _ => parse_err(1, "header needs wavelength_m and d_rx_m"),
    }
}

/// Parse a WFS log.
pub fn read_wfs_log<R: Read>(reader: R) -> Result<ZernikeSeries> {
    let mut lines = BufReader::new(reader).lines();
    let header = match lines.next() {
        Some(l) => l?,
        None => return Err(Error::InsufficientData("empty WFS log".into())),
    };
    let (wavelength, d_rx) = parse_header(&header)?;
    let columns = match lines.next() {
        Some(l) => l?,
        None => return parse_err(2, "missing column header"),
    };
    let cols: Vec<&str> = columns.trim().split(',').map(str::trim).collect();
    if cols.len() < 3 || cols[0] != "t_s" || cols[1] != "valid" {
        return parse_err(2, "column header must be 't_s,valid,b1,...,bJ'");
    }
    for (i, c) in cols[2..].iter().enumerate() {
        if *c != format!("b{}", i + 1) {
            return parse_err(2, format!("expected column 'b{}', found '{c}'", i + 1));
        }
    }
    let j_max = cols.len() - 2;

    let (mut timestamps, mut coefficients, mut mask) = (Vec::new(), Vec::new(), Vec::new());
    for (idx, line) in lines.enumerate() {
        let line_no = idx as u64 + 3;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != j_max + 2 {
            return parse_err(
                line_no,
                format!("expected {} fields, found {}", j_max + 2, fields.len()),
            );
        }
        let t: f64 = match fields[0].parse() {
            Ok(t) if f64::is_finite(t) => t,
            _ => return parse_err(line_no, format!("bad timestamp '{}'", fields[0])),
        };
        if timestamps.last().is_some_and(|&prev| !(t > prev)) {
            return parse_err(line_no, "timestamps must be strictly increasing");
        }
        let valid = match fields[1] {
            "1" => true,
            "0" => false,
            v => return parse_err(line_no, format!("valid must be 0 or 1, found '{v}'")),
        };
        let mut row = Vec::with_capacity(j_max);
        let mut row_mask = Vec::with_capacity(j_max);
        for f in &fields[2..] {
            if f.is_empty() {
                row.push(f64::NAN);
                row_mask.push(false);
            } else {
                match f.parse::<f64>() {
                    Ok(b) if b.is_finite() => {
                        row.push(b);
                        row_mask.push(valid);
                    }
                    _ => return parse_err(line_no, format!("bad coefficient '{f}'")),
                }
            }
        }
        timestamps.push(t);
        coefficients.push(row);
        mask.push(row_mask);
    }
    if timestamps.is_empty() {
        return Err(Error::InsufficientData("WFS log has no samples".into()));
    }
    ZernikeSeries::new(timestamps, coefficients, mask, wavelength, d_rx)
}

pub fn load_wfs_log(path: impl AsRef<Path>) -> Result<ZernikeSeries> {
    read_wfs_log(std::fs::File::open(path)?)
}

/// Write a WFS log. A sample is written `valid = 0` when none of its modes
/// is valid; individually masked modes are written as empty fields.
pub fn write_wfs_log<W: Write>(mut w: W, series: &ZernikeSeries) -> Result<()> {
    writeln!(
        w,
        "# wavelength_m={:e} d_rx_m={}",
        series.wavelength(),
        series.aperture_diameter()
    )?;
    write!(w, "t_s,valid")?;
    for j in 1..=series.j_max() {
        write!(w, ",b{j}")?;
    }
    writeln!(w)?;
    for ((t, c), m) in series
        .timestamps()
        .iter()
        .zip(series.coefficients())
        .zip(series.valid_mask())
    {
        let any_valid = m.iter().any(|&v| v);
        write!(w, "{t},{}", u8::from(any_valid))?;
        for (b, ok) in c.iter().zip(m) {
            if *ok || (!any_valid && b.is_finite()) {
                write!(w, ",{b}")?;
            } else {
                write!(w, ",")?;
            }
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_wfs_log(path: impl AsRef<Path>, series: &ZernikeSeries) -> Result<()> {
    write_wfs_log(
        std::io::BufWriter::new(std::fs::File::create(path)?),
        series,
    )
}

/// Result of the Kolmogorov fit of per-mode variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedFit {
    pub r0_hat: f64,
    /// Wavelength at which `r0_hat` holds (that of the variances).
    pub wavelength: f64,
    pub d_rx: f64,
    /// Slope of `ln σ_j²` against `ln g(j)`; 1 for Kolmogorov data. `None`
    /// when the selected modes share a single radial order.
    pub fit_exponent_check: Option<f64>,
    /// RMS of the log-domain residuals.
    pub residual_rms: f64,
    pub modes_used: Vec<usize>,
    /// Requested modes dropped for missing or non-positive variance.
    pub excluded: Vec<usize>,
    /// Robust standard error of `r0_hat` from the per-mode implied values
    /// (`1.4826·MAD/√n`), in meters.
    pub uncertainty: f64,
}

/// Per-mode `r0` implied by a single variance.
fn implied_r0(variance: f64, j: usize, d_rx: f64) -> Result<f64> {
    Ok(d_rx * (variance / noll_weight(j)?).powf(-0.6))
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Fit `ln σ_j² = (5/3)·ln(D/r0) + ln g(j)` over `modes` for the single
/// parameter `r0`.
pub fn fit_fried(
    variances: &ModeVarianceSet,
    d_rx: f64,
    modes: &[usize],
    wavelength: f64,
) -> Result<FriedFit> {
    if !(d_rx > 0.0 && wavelength > 0.0) {
        return domain("aperture and wavelength must be > 0");
    }
    let mut requested: Vec<usize> = modes.to_vec();
    requested.sort_unstable();
    requested.dedup();
    let mut used = Vec::new();
    let mut excluded = Vec::new();
    let mut y = Vec::new();
    let mut x = Vec::new();
    for &j in &requested {
        if j == 0 {
            return domain("Zernike modes are indexed from 1");
        }
        match variances.get(j) {
            Some(v) if v > 0.0 && v.is_finite() => {
                let g = noll_weight(j)?;
                used.push(j);
                x.push(g.ln());
                y.push(v.ln());
            }
            other => {
                log::warn!("mode {j} excluded from the fit (variance {other:?})");
                excluded.push(j);
            }
        }
    }
    if used.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "Fried fit needs at least 3 modes with positive variance, got {}",
            used.len()
        )));
    }
    let n = used.len() as f64;
    // closed-form log offset: c = mean(ln σ² − ln g) = (5/3)·ln(D/r0)
    let offsets: Vec<f64> = y.iter().zip(&x).map(|(y, x)| y - x).collect();
    let c = offsets.iter().sum::<f64>() / n;
    let r0_hat = d_rx * (-0.6 * c).exp();
    let residual_rms = (offsets.iter().map(|o| (o - c).powi(2)).sum::<f64>() / n).sqrt();

    let x_mean = x.iter().sum::<f64>() / n;
    let y_mean = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|x| (x - x_mean).powi(2)).sum();
    let sxy: f64 = x
        .iter()
        .zip(&y)
        .map(|(x, y)| (x - x_mean) * (y - y_mean))
        .sum();
    let fit_exponent_check = (sxx > 1e-12).then(|| sxy / sxx);

    let mut per_mode = used
        .iter()
        .map(|&j| implied_r0(variances.get(j).unwrap(), j, d_rx))
        .collect::<Result<Vec<_>>>()?;
    let med = median(&mut per_mode);
    let mut dev: Vec<f64> = per_mode.iter().map(|r| (r - med).abs()).collect();
    let uncertainty = 1.4826 * median(&mut dev) / n.sqrt();

    Ok(FriedFit {
        r0_hat,
        wavelength,
        d_rx,
        fit_exponent_check,
        residual_rms,
        modes_used: used,
        excluded,
        uncertainty,
    })
}

/// Fit from a series with the series' own aperture and wavelength.
pub fn fit_fried_series(series: &ZernikeSeries, modes: &[usize]) -> Result<FriedFit> {
    fit_fried(
        &empirical_variances(series),
        series.aperture_diameter(),
        modes,
        series.wavelength(),
    )
}

/// Predict `η_SMF` at the path wavelength: `η_φ,ON` from the closed-loop
/// variances over the chain's `J` corrected modes, every other factor from
/// `r̂0` (scaled to the path wavelength) and the wind speed.
pub fn predict_eta_smf(
    ao_on: &ZernikeSeries,
    fried: &FriedFit,
    wind: f64,
    chain: &ReceiverChain,
    path: &OpticalPath,
) -> Result<SmfCouplingBreakdown> {
    chain.validate()?;
    if !(fried.r0_hat > 0.0) {
        return domain("fitted r0 must be > 0");
    }
    let lambda = path.wavelength();
    let on = if ao_on.wavelength() == lambda {
        ao_on.clone()
    } else {
        ao_on.rescaled_to(lambda)?
    };
    let variances = empirical_variances(&on);
    let j = chain.ao_modes;
    let phi_on = eta_phi_on(&variances, j)?;
    let r0 = scale_r0(fried.r0_hat, fried.wavelength, lambda);
    let ts = TurbulenceState::from_r0(r0, wind, path)?;
    let eta_s = scintillation_report(&ts, path, chain.d_rx)?.eta_s;
    let phi_res = eta_phi_residual(j, chain.d_rx, r0)?;
    let tau = eta_tau(greenwood_from(wind, r0), chain.f_3db)?;
    let e0 = eta0(mode_match_beta(chain, lambda)?, obscuration_ratio(chain))?;
    compose_smf(e0, eta_s, phi_on, phi_res, tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::to_db;
    use crate::zernike::turbulence_variance;
    use proptest::prelude::*;

    fn analytic(r0: f64, d: f64, j_max: usize) -> ModeVarianceSet {
        ModeVarianceSet::from_variances(
            (1..=j_max)
                .map(|j| turbulence_variance(j, d, r0).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn all(j: usize) -> Vec<usize> {
        (1..=j).collect()
    }

    #[test]
    fn noiseless_inversion() {
        let fit = fit_fried(&analytic(0.08, 0.41, 35), 0.41, &all(35), 1.555e-6).unwrap();
        assert!((fit.r0_hat - 0.08).abs() < 1e-10);
        assert!(fit.residual_rms < 1e-12);
        assert!((fit.fit_exponent_check.unwrap() - 1.0).abs() < 1e-9);
        assert!(fit.uncertainty < 1e-12);
        assert_eq!(fit.modes_used.len(), 35);
    }

    #[test]
    fn leave_one_out_is_exact() {
        let v = analytic(0.08, 0.41, 35);
        let full = fit_fried(&v, 0.41, &all(35), 1.555e-6).unwrap().r0_hat;
        for skip in 1..=35 {
            let modes: Vec<usize> = (1..=35).filter(|&j| j != skip).collect();
            let r = fit_fried(&v, 0.41, &modes, 1.555e-6).unwrap().r0_hat;
            assert!(((r - full) / full).abs() < 1e-12);
        }
    }

    #[test]
    fn too_few_modes() {
        let v = analytic(0.08, 0.41, 35);
        assert!(fit_fried(&v, 0.41, &[2, 3], 1.555e-6).is_err());
        let mut raw: Vec<f64> = (1..=4)
            .map(|j| turbulence_variance(j, 0.41, 0.08).unwrap())
            .collect();
        raw[0] = 0.0;
        raw[1] = 0.0;
        let v = ModeVarianceSet::from_variances(raw).unwrap();
        assert!(fit_fried(&v, 0.41, &all(4), 1.555e-6).is_err());
    }

    #[test]
    fn nonpositive_variances_are_excluded() {
        let mut raw: Vec<f64> = (1..=10)
            .map(|j| turbulence_variance(j, 0.41, 0.08).unwrap())
            .collect();
        raw[4] = 0.0;
        let v = ModeVarianceSet::from_variances(raw).unwrap();
        let fit = fit_fried(&v, 0.41, &all(12), 1.555e-6).unwrap();
        assert_eq!(fit.excluded, vec![5, 11, 12]);
        assert!((fit.r0_hat - 0.08).abs() < 1e-10);
    }

    #[test]
    fn single_order_has_no_exponent_check() {
        // j = 3..5 share radial order 2
        let fit = fit_fried(&analytic(0.08, 0.41, 5), 0.41, &[3, 4, 5], 1.555e-6).unwrap();
        assert!(fit.fit_exponent_check.is_none());
    }

    #[test]
    fn closed_loop_variances_break_kolmogorov_shape() {
        let off = analytic(0.08, 0.41, 35);
        let on = ModeVarianceSet::from_variances(
            (1..=35)
                .map(|j| off.get(j).unwrap() * if j <= 10 { 0.01 } else { 0.3 })
                .collect(),
        )
        .unwrap();
        let a = fit_fried(&off, 0.41, &all(35), 1.555e-6).unwrap();
        let b = fit_fried(&on, 0.41, &all(35), 1.555e-6).unwrap();
        assert!(b.residual_rms > 100.0 * a.residual_rms.max(1e-3));
    }

    fn sample_series() -> ZernikeSeries {
        ZernikeSeries::new(
            vec![0.0, 0.01, 0.02],
            vec![
                vec![0.1, -0.25, 1e-7],
                vec![0.3, 0.0, -2.5],
                vec![-0.1, 0.125, 3.0],
            ],
            vec![
                vec![true, true, true],
                vec![false, false, false],
                vec![true, false, true],
            ],
            1.555e-6,
            0.41,
        )
        .unwrap()
    }

    #[test]
    fn wfs_round_trip_is_bit_identical() {
        let s = sample_series();
        let mut buf = Vec::new();
        write_wfs_log(&mut buf, &s).unwrap();
        let back = read_wfs_log(buf.as_slice()).unwrap();
        assert_eq!(back.timestamps(), s.timestamps());
        assert_eq!(back.valid_mask(), s.valid_mask());
        for (a, b) in back.coefficients().iter().zip(s.coefficients()) {
            for ((x, y), m) in a.iter().zip(b).zip([true, true, true]) {
                if m && x.is_finite() {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
        let mut again = Vec::new();
        write_wfs_log(&mut again, &back).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn invalid_rows_are_masked() {
        let text = "# wavelength_m=1.555e-6 d_rx_m=0.41\nt_s,valid,b1,b2,b3\n0,1,1,2,3\n1,0,9,9,9\n2,1,1,,3\n";
        let s = read_wfs_log(text.as_bytes()).unwrap();
        assert_eq!(s.valid_mask()[1], vec![false; 3]);
        assert_eq!(s.valid_mask()[2], vec![true, false, true]);
        assert_eq!(s.wavelength(), 1.555e-6);
        assert_eq!(s.aperture_diameter(), 0.41);
    }

    fn err_line(text: &str) -> Option<u64> {
        match read_wfs_log(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => Some(line),
            _ => None,
        }
    }

    #[test]
    fn malformed_logs() {
        assert!(matches!(
            read_wfs_log("".as_bytes()),
            Err(Error::InsufficientData(_))
        ));
        assert_eq!(err_line("wavelength_m=1 d_rx_m=1\n"), Some(1));
        assert_eq!(err_line("# wavelength_m=1e-6\nt_s,valid,b1\n"), Some(1));
        assert_eq!(
            err_line("# wavelength_m=1e-6 d_rx_m=0.4\nt,valid,b1\n"),
            Some(2)
        );
        let h = "# wavelength_m=1e-6 d_rx_m=0.4\nt_s,valid,b1,b2,b3\n";
        assert_eq!(err_line(&format!("{h}0,1,1,2,3\n1,1,1,2\n")), Some(4));
        assert_eq!(err_line(&format!("{h}0,1,1,2,3\n0,1,1,2,3\n")), Some(4));
        assert_eq!(err_line(&format!("{h}0,2,1,2,3\n")), Some(3));
        assert_eq!(err_line(&format!("{h}0,1,1,x,3\n")), Some(3));
        assert!(matches!(
            read_wfs_log(h.as_bytes()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn turbulence_free_prediction_is_eta0() {
        let path = OpticalPath::design();
        let chain = ReceiverChain::default();
        let n = 4;
        let series = ZernikeSeries::fully_valid(
            (0..n).map(|i| i as f64).collect(),
            vec![vec![0.0; 35]; n],
            path.wavelength(),
            chain.d_rx,
        )
        .unwrap();
        let fit = FriedFit {
            r0_hat: 1e9,
            wavelength: path.wavelength(),
            d_rx: chain.d_rx,
            fit_exponent_check: None,
            residual_rms: 0.0,
            modes_used: all(35),
            excluded: vec![],
            uncertainty: 0.0,
        };
        let b = predict_eta_smf(&series, &fit, 0.0, &chain, &path).unwrap();
        assert!((to_db(b.eta_smf) - to_db(b.eta0)).abs() < 1e-6);
    }

    #[test]
    fn missing_closed_loop_mode_is_an_error() {
        let path = OpticalPath::design();
        let chain = ReceiverChain::default();
        let series = ZernikeSeries::fully_valid(
            vec![0.0, 1.0],
            vec![vec![0.0; 10]; 2],
            path.wavelength(),
            0.41,
        )
        .unwrap();
        let fit = fit_fried(&analytic(0.08, 0.41, 35), 0.41, &all(35), path.wavelength()).unwrap();
        assert!(matches!(
            predict_eta_smf(&series, &fit, 1.0, &chain, &path),
            Err(Error::MissingMode(11))
        ));
    }

    proptest! {
        #[test]
        fn prop_scale_consistency(r0 in 0.02f64..0.5, c in 0.2f64..5.0) {
            let v = analytic(r0, 0.41, 20);
            let a = fit_fried(&v, 0.41, &all(20), 1.555e-6).unwrap().r0_hat;
            let b = fit_fried(&v.scaled(c.powf(5.0 / 3.0)), 0.41, &all(20), 1.555e-6).unwrap().r0_hat;
            prop_assert!(((b * c - a) / a).abs() < 1e-10);
        }

        #[test]
        fn prop_permutation_invariant(
            noise in proptest::collection::vec(0.5f64..2.0, 20),
            perm in Just((1..=20usize).collect::<Vec<_>>()).prop_shuffle(),
        ) {
            let v = ModeVarianceSet::from_variances(
                (1..=20).map(|j| turbulence_variance(j, 0.41, 0.07).unwrap() * noise[j - 1]).collect(),
            ).unwrap();
            let a = fit_fried(&v, 0.41, &all(20), 1.555e-6).unwrap();
            let b = fit_fried(&v, 0.41, &perm, 1.555e-6).unwrap();
            prop_assert_eq!(a.r0_hat.to_bits(), b.r0_hat.to_bits());
            prop_assert!(a.residual_rms >= 0.0);
        }
    }
}
