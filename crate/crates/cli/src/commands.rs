use std::path::Path;

use serde::Serialize;
use skylink_core::atmosphere::TurbulenceState;
use skylink_core::coupling::SmfCouplingBreakdown;
use skylink_core::estimation::{fit_fried, load_wfs_log, predict_eta_smf, save_wfs_log, FriedFit};
use skylink_core::linkbudget::{budget_with_eta_smf, BudgetReport};
use skylink_core::qkd::{
    analyze_session_log, channel_efficiency_from_rate, expected_qber, expected_signal_rate,
    load_session_log, secret_key_rate, SkrInput, SkrReport,
};
use skylink_core::sweep::{self, evaluate, ModelPoint, SweepRow, SweepVariable};
use skylink_core::synth::{generate_series, SynthConfig};
use skylink_core::units::{fmt_db, from_db, to_db};
use skylink_core::zernike::empirical_variances;

use crate::config::RunConfig;
use crate::output::{num, Report};
use crate::{
    BudgetArgs, CliError, Detector, FitArgs, PredictArgs, QkdArgs, SweepArgs, SweepVar, SynthArgs,
};

/// Log-domain fit residual above which data are flagged as non-Kolmogorov.
pub const RESIDUAL_WARN: f64 = 0.35;

/// Attach the file name to I/O failures.
fn with_path(path: &Path, e: skylink_core::Error) -> CliError {
    match e {
        skylink_core::Error::Io(io) => CliError::Io(format!("{}: {io}", path.display())),
        skylink_core::Error::Parse { line, msg } => {
            CliError::Io(format!("{}: line {line}: {msg}", path.display()))
        }
        other => CliError::Model(other),
    }
}

fn read_wfs(path: &Path) -> Result<skylink_core::zernike::ZernikeSeries, CliError> {
    load_wfs_log(path).map_err(|e| with_path(path, e))
}

/// Parse `1-35`, `3-35` or `1,2,5-10`.
pub fn parse_modes(text: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Usage(format!("invalid mode set '{text}'"));
    let mut modes = Vec::new();
    for part in text.split(',').map(str::trim) {
        match part.split_once('-') {
            Some((a, b)) => {
                let a: usize = a.trim().parse().map_err(|_| bad())?;
                let b: usize = b.trim().parse().map_err(|_| bad())?;
                if a == 0 || b < a {
                    return Err(bad());
                }
                modes.extend(a..=b);
            }
            None => {
                let j: usize = part.parse().map_err(|_| bad())?;
                if j == 0 {
                    return Err(bad());
                }
                modes.push(j);
            }
        }
    }
    modes.sort_unstable();
    modes.dedup();
    Ok(modes)
}

fn efficiency_rows(report: &mut Report, rows: &[(&str, f64)]) {
    report.header = vec!["term".into(), "ratio".into(), "db".into()];
    for (name, v) in rows {
        report.line(*name, fmt_db(*v));
        report
            .rows
            .push(vec![name.to_string(), num(*v), num(to_db(*v))]);
    }
}

#[derive(Serialize)]
struct BudgetOut<'a> {
    r0_m: f64,
    wind_mps: f64,
    a_coeff_db_per_km: f64,
    smf: Option<&'a SmfCouplingBreakdown>,
    budget: &'a BudgetReport,
}

pub fn budget(cfg: &RunConfig, a: &BudgetArgs) -> Result<Report, CliError> {
    let point = ModelPoint {
        geometry: cfg.geometry()?,
        r0: a.r0.unwrap_or(cfg.r0()),
        wind: a.wind.unwrap_or(cfg.wind()),
        a_coeff: a.a_coeff.unwrap_or(cfg.a_coeff()),
    };
    let (smf, b) = match a.eta_smf_db {
        Some(db) => {
            let ts = TurbulenceState::from_r0(point.r0, point.wind, &point.geometry.path)?;
            (
                None,
                budget_with_eta_smf(&point.geometry, &ts, point.a_coeff, from_db(db))?,
            )
        }
        None => {
            let (s, b) = evaluate(&point)?;
            (Some(s), b)
        }
    };
    let mut r = Report::new(
        "channel budget",
        BudgetOut {
            r0_m: point.r0,
            wind_mps: point.wind,
            a_coeff_db_per_km: point.a_coeff,
            smf: smf.as_ref(),
            budget: &b,
        },
    )?;
    r.line("r0", format!("{:.4} m", point.r0));
    r.line("A", format!("{:.3} dB/km", point.a_coeff));
    r.line("divergence", format!("{:.2} urad", b.theta * 1e6));
    r.line("W_L", format!("{:.3} m", b.w_l));
    let mut rows = vec![
        ("eta_a", b.eta_a),
        ("eta_coll", b.eta_coll),
        ("eta_focus", b.eta_focus),
        ("eta_optics", b.eta_optics),
    ];
    if let Some(s) = &smf {
        rows.extend(s.rows().into_iter().filter(|(n, _)| *n != "eta_smf"));
    }
    rows.extend([
        ("eta_smf", b.eta_smf),
        ("eta_fiber", b.eta_fiber),
        ("eta_ch", b.eta_ch),
    ]);
    efficiency_rows(&mut r, &rows);
    if smf.is_none() {
        r.notes.push("eta_smf supplied on the command line".into());
    } else {
        r.notes
            .push("eta_smf modelled with ideal correction of the first J modes".into());
    }
    Ok(r)
}

fn describe_fit(r: &mut Report, fit: &FriedFit) {
    r.line(
        "r0",
        format!("{:.4} m at {:.1} nm", fit.r0_hat, fit.wavelength * 1e9),
    );
    r.line("uncertainty", format!("{:.4} m", fit.uncertainty));
    r.line("residual rms", format!("{:.3}", fit.residual_rms));
    r.line(
        "exponent check",
        fit.fit_exponent_check
            .map_or("n/a".into(), |s| format!("{s:.3}")),
    );
    r.line("modes used", fit.modes_used.len().to_string());
    if !fit.excluded.is_empty() {
        r.line("excluded", format!("{:?}", fit.excluded));
    }
    if fit.residual_rms > RESIDUAL_WARN {
        let msg = format!(
            "residual rms {:.3} exceeds {RESIDUAL_WARN}: variances do not follow the Kolmogorov spectrum",
            fit.residual_rms
        );
        log::warn!("{msg}");
        r.notes.push(msg);
    }
}

fn fit_table(r: &mut Report, fit: &FriedFit) {
    r.header = vec!["key".into(), "value".into()];
    r.rows = vec![
        vec!["r0_hat_m".into(), num(fit.r0_hat)],
        vec!["wavelength_m".into(), num(fit.wavelength)],
        vec!["uncertainty_m".into(), num(fit.uncertainty)],
        vec!["residual_rms".into(), num(fit.residual_rms)],
        vec![
            "fit_exponent_check".into(),
            fit.fit_exponent_check.map_or(String::new(), num),
        ],
        vec!["modes_used".into(), fit.modes_used.len().to_string()],
    ];
}

pub fn fit_r0(_cfg: &RunConfig, a: &FitArgs) -> Result<Report, CliError> {
    let modes = parse_modes(&a.modes)?;
    let series = read_wfs(&a.wfs_csv)?;
    let d_rx = a.d_rx.unwrap_or(series.aperture_diameter());
    let fit = fit_fried(
        &empirical_variances(&series),
        d_rx,
        &modes,
        series.wavelength(),
    )?;
    let mut r = Report::new("Fried parameter fit", &fit)?;
    describe_fit(&mut r, &fit);
    fit_table(&mut r, &fit);
    Ok(r)
}

#[derive(Serialize)]
struct PredictOut<'a> {
    fit: &'a FriedFit,
    wind_mps: f64,
    smf: &'a SmfCouplingBreakdown,
}

pub fn predict_smf(cfg: &RunConfig, a: &PredictArgs) -> Result<Report, CliError> {
    let path = cfg.path()?;
    let chain = cfg.chain();
    let on = read_wfs(&a.ao_on_csv)?;
    let fit = match (&a.ao_off, a.r0) {
        (Some(off), _) => {
            let s = read_wfs(off)?;
            fit_fried(
                &empirical_variances(&s),
                s.aperture_diameter(),
                &parse_modes(&a.modes)?,
                s.wavelength(),
            )?
        }
        (None, Some(r0)) => FriedFit {
            r0_hat: r0,
            wavelength: path.wavelength(),
            d_rx: chain.d_rx,
            fit_exponent_check: None,
            residual_rms: 0.0,
            modes_used: Vec::new(),
            excluded: Vec::new(),
            uncertainty: 0.0,
        },
        (None, None) => return Err(CliError::Usage("need --ao-off or --r0".into())),
    };
    let wind = a.wind.unwrap_or(cfg.wind());
    let smf = predict_eta_smf(&on, &fit, wind, &chain, &path)?;
    let mut r = Report::new(
        "fiber coupling prediction",
        PredictOut {
            fit: &fit,
            wind_mps: wind,
            smf: &smf,
        },
    )?;
    r.line(
        "r0",
        format!("{:.4} m at {:.1} nm", fit.r0_hat, fit.wavelength * 1e9),
    );
    r.line("wind", format!("{wind:.3} m/s"));
    efficiency_rows(&mut r, &smf.rows());
    Ok(r)
}

#[derive(Serialize)]
struct QkdOut {
    detector: String,
    eta_ch: Option<f64>,
    unphysical: bool,
    signal_hz: f64,
    noise_in_window_hz: f64,
    qber_z: f64,
    qber_x: f64,
    skr: SkrReport,
}

pub fn qkd(cfg: &RunConfig, a: &QkdArgs) -> Result<Report, CliError> {
    let session = cfg.session(a.detector == Detector::Spad)?;
    let mut title = "QKD rates".to_string();
    let (eta_ch, unphysical, input) = if let Some(p) = &a.log {
        let recs = load_session_log(p).map_err(|e| with_path(p, e))?;
        let summary = analyze_session_log(&recs)?;
        let est = channel_efficiency_from_rate(&session, summary.signal_rate.mean)?;
        title = format!(
            "QKD session log ({} records over {:.0} s)",
            recs.len(),
            summary.duration
        );
        (
            Some(est.eta_ch),
            est.unphysical,
            summary.skr_input(&session, a.noise_windowed),
        )
    } else if let Some(rate) = a.rate {
        let est = channel_efficiency_from_rate(&session, rate)?;
        let noise = session.windowed_noise();
        let q = expected_qber(rate, noise, a.intrinsic_qber)?;
        let input = SkrInput {
            signal_rate: rate,
            noise_rate: noise,
            qber_z: q,
            qber_x: q,
        };
        (Some(est.eta_ch), est.unphysical, input)
    } else if let Some(db) = a.eta_ch_db {
        let eta = from_db(db);
        let s = expected_signal_rate(&session, eta)?;
        let noise = session.windowed_noise();
        let q = expected_qber(s, noise, a.intrinsic_qber)?;
        (
            Some(eta),
            false,
            SkrInput {
                signal_rate: s,
                noise_rate: noise,
                qber_z: q,
                qber_x: q,
            },
        )
    } else {
        return Err(CliError::Usage(
            "qkd needs one of --log, --rate or --eta-ch".into(),
        ));
    };
    let skr = secret_key_rate(&session, &input)?;
    let mut r = Report::new(
        title,
        QkdOut {
            detector: session.detector.label.clone(),
            eta_ch,
            unphysical,
            signal_hz: input.signal_rate,
            noise_in_window_hz: input.noise_rate,
            qber_z: input.qber_z,
            qber_x: input.qber_x,
            skr: skr.clone(),
        },
    )?;
    r.line("detector", session.detector.label.clone());
    if let Some(e) = eta_ch {
        r.line("eta_ch", fmt_db(e));
    }
    r.line("signal", format!("{:.1} Hz", input.signal_rate));
    r.line("noise in window", format!("{:.1} Hz", input.noise_rate));
    r.line(
        "QBER Z / X",
        format!(
            "{:.2} % / {:.2} %",
            100.0 * input.qber_z,
            100.0 * input.qber_x
        ),
    );
    r.line(
        "block",
        format!(
            "{} bytes in {:.0} s",
            session.block_size_bytes, skr.block_time
        ),
    );
    r.line("SKR", format!("{:.0} bit/s", skr.skr));
    if unphysical {
        r.notes.push("inferred channel efficiency exceeds 1".into());
    }
    if let Some(d) = &skr.diagnostic {
        r.notes.push(d.clone());
    }
    r.header = vec!["key".into(), "value".into()];
    r.rows = vec![
        vec!["eta_ch".into(), eta_ch.map_or(String::new(), num)],
        vec!["signal_hz".into(), num(input.signal_rate)],
        vec!["noise_in_window_hz".into(), num(input.noise_rate)],
        vec!["qber_z".into(), num(input.qber_z)],
        vec!["qber_x".into(), num(input.qber_x)],
        vec!["skr_bps".into(), num(skr.skr)],
    ];
    Ok(r)
}

const SWEEP_COLUMNS: [&str; 13] = [
    "w_l_m",
    "eta_a",
    "eta_coll",
    "eta_focus",
    "eta0",
    "eta_s",
    "eta_phi_residual",
    "eta_tau",
    "eta_smf",
    "eta_optics",
    "eta_fiber",
    "eta_ch",
    "modes",
];

fn sweep_values(row: &SweepRow) -> [f64; 12] {
    [
        row.w_l_m,
        row.eta_a,
        row.eta_coll,
        row.eta_focus,
        row.eta0,
        row.eta_s,
        row.eta_phi_residual,
        row.eta_tau,
        row.eta_smf,
        row.eta_optics,
        row.eta_fiber,
        row.eta_ch,
    ]
}

pub fn sweep(cfg: &RunConfig, a: &SweepArgs) -> Result<Report, CliError> {
    let (var, name, lo, hi, n) = match a.variable {
        SweepVar::R0 => (SweepVariable::R0, "r0_m", 0.03, 0.15, 50),
        SweepVar::Wind => (SweepVariable::Wind, "wind_mps", 0.0, 20.0, 41),
        SweepVar::ACoeff => (SweepVariable::ACoeff, "a_db_per_km", 0.1, 0.3, 21),
        SweepVar::J => (SweepVariable::Modes, "modes", 1.0, 100.0, 100),
    };
    let values = sweep::grid(
        a.from.unwrap_or(lo),
        a.to.unwrap_or(hi),
        a.steps.unwrap_or(n),
    )?;
    let base = ModelPoint {
        geometry: cfg.geometry()?,
        r0: a.r0.unwrap_or(cfg.r0()),
        wind: a.wind.unwrap_or(cfg.wind()),
        a_coeff: a.a_coeff.unwrap_or(cfg.a_coeff()),
    };
    let rows = sweep::sweep(&base, var, &values)?;
    let mut r = Report::new(format!("sweep over {name} (dB; W_L in m)"), &rows)?;
    let shown = [
        "eta_a",
        "eta_coll",
        "eta_s",
        "eta_phi_residual",
        "eta_tau",
        "eta_smf",
        "eta_ch",
    ];
    r.line(
        name,
        format!(
            "{:>7} {}",
            "W_L",
            shown.map(|s| format!("{s:>18}")).join("")
        ),
    );
    for row in &rows {
        let v = sweep_values(row);
        let cells: Vec<String> = shown
            .iter()
            .map(|s| {
                let i = SWEEP_COLUMNS.iter().position(|c| c == s).unwrap();
                format!("{:>18}", format!("{:+.1}", to_db(v[i])))
            })
            .collect();
        r.line(
            format!("{}", row.value),
            format!("{:>7.3} {}", row.w_l_m, cells.join("")),
        );
    }
    r.header = std::iter::once(name.to_string())
        .chain(SWEEP_COLUMNS.iter().map(|s| s.to_string()))
        .collect();
    r.rows = rows
        .iter()
        .map(|row| {
            std::iter::once(num(row.value))
                .chain(sweep_values(row).iter().map(|v| num(*v)))
                .chain(std::iter::once(row.modes.to_string()))
                .collect()
        })
        .collect();
    Ok(r)
}

pub fn synth(cfg: &RunConfig, a: &SynthArgs, out: Option<&Path>) -> Result<(), CliError> {
    let out = out.ok_or_else(|| CliError::Usage("synth needs --out <file.csv>".into()))?;
    if out.extension().and_then(|e| e.to_str()) != Some("csv") {
        return Err(CliError::Usage(
            "synth writes a WFS log; --out must end in .csv".into(),
        ));
    }
    let chain = cfg.chain();
    let sc = SynthConfig {
        r0: a.r0,
        d_rx: a.d_rx.unwrap_or(chain.d_rx),
        wavelength: a.wavelength.unwrap_or(cfg.path()?.wavelength()),
        j_max: a.j_max,
        n_samples: a.n_samples,
        sample_rate: a.sample_rate,
        wind: a.wind,
        ao_on: a.ao_on,
        f_3db: a.f_3db.unwrap_or(chain.f_3db),
        corrected_modes: a.corrected_modes.unwrap_or(chain.ao_modes),
        seed: a.seed,
    };
    let series = generate_series(&sc)?;
    save_wfs_log(out, &series).map_err(|e| with_path(out, e))?;
    let mut r = Report::new("synthetic WFS log", &sc)?;
    r.line("file", out.display().to_string());
    r.line("samples", format!("{} x {} modes", sc.n_samples, sc.j_max));
    r.line("loop", if sc.ao_on { "closed" } else { "open" });
    r.line("lag-1 correlation", format!("{:.4}", sc.correlation()));
    print!("{}", r.render());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_sets() {
        assert_eq!(parse_modes("1-3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_modes("5,1-2,2").unwrap(), vec![1, 2, 5]);
        assert!(parse_modes("0-3").is_err());
        assert!(parse_modes("3-1").is_err());
        assert!(parse_modes("a").is_err());
    }
}
