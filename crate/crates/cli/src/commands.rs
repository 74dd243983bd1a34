//! The five subcommands. Each writes its artifacts under the output
//! directory, appends one ledger entry and prints a short summary.

use std::io::Write;
use std::path::PathBuf;

use serde::Serialize;
use serde_json::{json, Value};

use qkd_core::analytic::{compose_visibility, overall_error_rate, qber_avg, sifted_rate, AnalyticPoint};
use qkd_core::security::{optimize_mu, MuGrid, MuOptimum, SecurityParams};
use qkd_core::sim::{reference, simulate_run, simulate_run_with_workers, DepolMode, RunStats, SimConfig};
use qkd_core::{Protocol, PulseParams, Visibility};

use crate::config::{digest_value, Range, Settings};
use crate::error::{CliError, Result};
use crate::ledger::{self, RunLedgerEntry};
use crate::report::{ensure_dir, num, opt, write_csv, write_json, write_text};
use crate::svg::{LinePlot, Series};

pub const CURVES_HEADER: [&str; 8] = [
    "V",
    "q_bb84",
    "q_sarg04",
    "r_bb84",
    "r_sarg04",
    "overall_error",
    "q_mu_bb84",
    "q_mu_sarg04",
];

pub const CURVES_MC_HEADER: [&str; 9] = [
    "V",
    "mc_q_bb84",
    "mc_q_bb84_se",
    "mc_r_bb84",
    "mc_r_bb84_se",
    "mc_q_sarg04",
    "mc_q_sarg04_se",
    "mc_r_sarg04",
    "mc_r_sarg04_se",
];

pub const SECURE_HEADER: [&str; 5] = ["V", "mu_star_bb84", "rate_bb84", "mu_star_sarg04", "rate_sarg04"];

pub const COMPARE_HEADER: [&str; 7] = ["protocol", "metric", "value", "target", "se", "z", "pass"];

pub const QBER_HEADER: [&str; 11] = [
    "v_requested",
    "flip_fraction",
    "V",
    "q_bb84",
    "q_sarg04",
    "q_mu_bb84",
    "q_mu_sarg04",
    "mc_q_bb84",
    "mc_q_bb84_se",
    "mc_q_sarg04",
    "mc_q_sarg04_se",
];

pub const SIFTED_HEADER: [&str; 9] = [
    "v_requested",
    "flip_fraction",
    "V",
    "r_bb84",
    "r_sarg04",
    "mc_r_bb84",
    "mc_r_bb84_se",
    "mc_r_sarg04",
    "mc_r_sarg04_se",
];

/// Requested-visibility grid for `replicate-paper`.
pub const REPLICATE_GRID: Range = Range {
    start: 0.60,
    stop: 1.00,
    step: 0.02,
};

fn say(out: &mut dyn Write, line: std::fmt::Arguments) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| CliError::io("<stdout>", e))
}

fn run_mc(settings: &Settings, cfg: &SimConfig) -> Result<RunStats> {
    Ok(match settings.workers {
        Some(w) => simulate_run_with_workers(cfg, w)?,
        None => simulate_run(cfg)?,
    })
}

/// Seed for one sweep point and protocol, so that every point draws an
/// independent stream while the whole sweep stays a function of one seed.
pub fn point_seed(seed: u64, point: usize, protocol: Protocol) -> u64 {
    let lane = match protocol {
        Protocol::Bb84 => 0,
        Protocol::Sarg04 => 1,
    };
    seed.wrapping_add((2 * point as u64 + lane + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn record(settings: &Settings, command: &str, digest: String, summary: Value, artifacts: Vec<PathBuf>) -> Result<()> {
    let entry = RunLedgerEntry::now(command, digest, settings.base.seed, summary, artifacts);
    ledger::append(&settings.ledger, &entry)
}

/// Simulated QBER and sifted rate with standard errors at the analytic targets.
#[derive(Debug, Clone, Copy)]
struct McPoint {
    qber: Option<f64>,
    qber_se: f64,
    rate: f64,
    rate_se: f64,
}

impl McPoint {
    fn measure(settings: &Settings, cfg: &SimConfig, pulse: &PulseParams) -> Result<McPoint> {
        let v = cfg.effective_visibility();
        let stats = run_mc(settings, cfg)?;
        let target_q = qber_avg(cfg.protocol, pulse, v)?;
        let target_r = sifted_rate(cfg.protocol, pulse, v);
        Ok(McPoint {
            qber: stats.qber,
            qber_se: stats.qber_se_at(target_q),
            rate: stats.sifted_rate,
            rate_se: stats.sifted_rate_se_at(target_r),
        })
    }
}

fn qber_plot(title: &str, rows: &[(f64, AnalyticPoint)], mc: &[(f64, [McPoint; 2])]) -> LinePlot {
    let line = |f: fn(&AnalyticPoint) -> f64| rows.iter().map(|(x, a)| (*x, f(a))).collect();
    let mut plot = LinePlot::new(title, "Channel visibility V", "QBER")
        .with(Series::line("BB84, Q", 0, line(|a| a.q_bb84)))
        .with(Series::line("SARG04, Q", 1, line(|a| a.q_sarg04)))
        .with(Series::line("BB84, Q_mu", 2, line(|a| a.q_mu_bb84)))
        .with(Series::line("SARG04, Q_mu", 3, line(|a| a.q_mu_sarg04)));
    if !mc.is_empty() {
        for (i, name) in ["BB84, MC", "SARG04, MC"].into_iter().enumerate() {
            let pts = mc.iter().filter_map(|(x, p)| p[i].qber.map(|q| (*x, q))).collect();
            plot = plot.with(Series::markers(name, i + 2, pts));
        }
    }
    plot
}

fn sifted_plot(title: &str, rows: &[(f64, AnalyticPoint)], mc: &[(f64, [McPoint; 2])]) -> LinePlot {
    let line = |f: fn(&AnalyticPoint) -> f64| rows.iter().map(|(x, a)| (*x, f(a))).collect();
    let mut plot = LinePlot::new(title, "Channel visibility V", "Sifted rate per pulse")
        .with(Series::line("BB84", 0, line(|a| a.r_bb84)))
        .with(Series::line("SARG04", 1, line(|a| a.r_sarg04)));
    if !mc.is_empty() {
        for (i, name) in ["BB84, MC", "SARG04, MC"].into_iter().enumerate() {
            let pts = mc.iter().map(|(x, p)| (*x, p[i].rate)).collect();
            plot = plot.with(Series::markers(name, i, pts));
        }
    }
    plot
}

fn secure_plot(title: &str, rows: &[(f64, [MuOptimum; 2])]) -> LinePlot {
    let line = |i: usize| rows.iter().map(|(x, o)| (*x, o[i].result.secure_rate)).collect();
    LinePlot::new(title, "Channel visibility V", "Secure rate per pulse (lower bound)")
        .with(Series::line("BB84", 0, line(0)))
        .with(Series::line("SARG04", 1, line(1)))
}

fn mc_cells(p: &McPoint, with_rate: bool, with_qber: bool) -> Vec<String> {
    let mut cells = Vec::new();
    if with_qber {
        cells.extend([opt(p.qber), num(p.qber_se)]);
    }
    if with_rate {
        cells.extend([num(p.rate), num(p.rate_se)]);
    }
    cells
}

/// Closed-form curves over the visibility sweep, optionally with Monte Carlo
/// points for both protocols.
pub fn cmd_curves(settings: &Settings, out: &mut dyn Write) -> Result<()> {
    let dir = &settings.out_dir;
    ensure_dir(dir)?;
    let pulse = settings.base.pulse_params()?;
    let mut rows = Vec::new();
    let mut mc = Vec::new();
    for (i, v) in settings.sweep.points()?.into_iter().enumerate() {
        let mut cfg = settings.base;
        cfg.channel.visibility = Visibility::new(v)?;
        let veff = cfg.effective_visibility();
        rows.push((veff.value(), AnalyticPoint::evaluate(&pulse, veff)?));
        if settings.mc {
            let mut points = [None; 2];
            for (k, protocol) in Protocol::ALL.into_iter().enumerate() {
                let cfg = SimConfig {
                    protocol,
                    seed: point_seed(settings.base.seed, i, protocol),
                    ..cfg
                };
                points[k] = Some(McPoint::measure(settings, &cfg, &pulse)?);
            }
            mc.push((veff.value(), points.map(|p| p.expect("both protocols measured"))));
        }
    }

    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|(v, a)| {
            [
                v,
                &a.q_bb84,
                &a.q_sarg04,
                &a.r_bb84,
                &a.r_sarg04,
                &a.overall_error,
                &a.q_mu_bb84,
                &a.q_mu_sarg04,
            ]
            .into_iter()
            .map(|x| num(*x))
            .collect()
        })
        .collect();
    let mut artifacts = vec![write_csv(&dir.join("curves.csv"), &CURVES_HEADER, &table)?];
    artifacts.push(write_text(
        &dir.join("curves_qber.svg"),
        &qber_plot("QBER vs channel visibility", &rows, &mc).render(),
    )?);
    artifacts.push(write_text(
        &dir.join("curves_sifted.svg"),
        &sifted_plot("Sifted rate vs channel visibility", &rows, &mc).render(),
    )?);
    if settings.mc {
        let table: Vec<Vec<String>> = mc
            .iter()
            .map(|(v, p)| {
                let mut row = vec![num(*v)];
                for point in p {
                    row.extend(mc_cells(point, true, true));
                }
                row
            })
            .collect();
        artifacts.push(write_csv(&dir.join("curves_mc.csv"), &CURVES_MC_HEADER, &table)?);
    }

    say(
        out,
        format_args!("curves: {} points written to {}", rows.len(), dir.display()),
    )?;
    record(
        settings,
        "curves",
        settings.digest(),
        json!({"rows": rows.len(), "mc": settings.mc}),
        artifacts,
    )
}

/// One Monte Carlo run per selected protocol.
pub fn cmd_simulate(settings: &Settings, out: &mut dyn Write) -> Result<Vec<RunStats>> {
    let dir = &settings.out_dir;
    ensure_dir(dir)?;
    let mut all = Vec::new();
    let mut artifacts = Vec::new();
    let mut summary = Vec::new();
    for &protocol in &settings.protocols {
        let cfg = settings.sim_config(protocol);
        let stats = run_mc(settings, &cfg)?;
        let pulse = cfg.pulse_params()?;
        let v = cfg.effective_visibility();
        let expected = qber_avg(protocol, &pulse, v)?;
        artifacts.push(write_json(
            &dir.join(format!("stats_{}.json", protocol.name())),
            &stats,
        )?);
        say(
            out,
            format_args!(
                "{protocol}: pulses {} sifted {} errors {} qber {} (se {:.2e}, expected {:.6}) sifted_rate {:.6e} in {:.2?}",
                stats.pulses,
                stats.sifted,
                stats.errors,
                stats.qber.map_or("undefined".to_string(), |q| format!("{q:.6}")),
                stats.qber_se_at(expected),
                expected,
                stats.sifted_rate,
                stats.elapsed,
            ),
        )?;
        summary.push(json!({
            "protocol": protocol,
            "qber": stats.qber,
            "sifted_rate": stats.sifted_rate,
            "error_rate": stats.error_rate,
        }));
        all.push(stats);
    }
    record(
        settings,
        "simulate",
        settings.digest(),
        Value::Array(summary),
        artifacts,
    )?;
    Ok(all)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricCheck {
    pub protocol: Protocol,
    pub metric: &'static str,
    pub value: Option<f64>,
    pub target: f64,
    pub se: f64,
    pub z: Option<f64>,
    pub pass: bool,
}

impl MetricCheck {
    /// A metric with zero standard error passes only on exact agreement.
    pub fn new(protocol: Protocol, metric: &'static str, value: Option<f64>, target: f64, se: f64, tol: f64) -> Self {
        let z = value.map(|x| {
            if se > 0.0 {
                (x - target) / se
            } else if x == target {
                0.0
            } else {
                f64::INFINITY.copysign(x - target)
            }
        });
        MetricCheck {
            protocol,
            metric,
            value,
            target,
            se,
            z,
            pass: z.is_some_and(|z| z.abs() <= tol),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub simulated_visibility: f64,
    pub target_visibility: f64,
    pub pulses: u64,
    pub seed: u64,
    pub tolerance_sigmas: f64,
    pub all_pass: bool,
    pub checks: Vec<MetricCheck>,
}

/// Monte Carlo against closed forms: QBER, sifted rate and error rate per
/// pulse, each judged by its binomial z-score. Fails with exit status 3.
pub fn cmd_compare(settings: &Settings, out: &mut dyn Write) -> Result<CompareReport> {
    let dir = &settings.out_dir;
    ensure_dir(dir)?;
    let tol = settings.tolerance_sigmas;
    let simulated = settings.base.effective_visibility();
    let target_v = settings.target_visibility.unwrap_or(simulated);
    let mut checks = Vec::new();
    for &protocol in &settings.protocols {
        let cfg = settings.sim_config(protocol);
        let pulse = cfg.pulse_params()?;
        let stats = run_mc(settings, &cfg)?;
        let q = qber_avg(protocol, &pulse, target_v)?;
        let r = sifted_rate(protocol, &pulse, target_v);
        let e = overall_error_rate(&pulse, target_v);
        checks.push(MetricCheck::new(
            protocol,
            "qber",
            stats.qber,
            q,
            stats.qber_se_at(q),
            tol,
        ));
        checks.push(MetricCheck::new(
            protocol,
            "sifted_rate",
            Some(stats.sifted_rate),
            r,
            stats.sifted_rate_se_at(r),
            tol,
        ));
        checks.push(MetricCheck::new(
            protocol,
            "error_rate",
            Some(stats.error_rate),
            e,
            stats.error_rate_se_at(e),
            tol,
        ));
    }
    let report = CompareReport {
        simulated_visibility: simulated.value(),
        target_visibility: target_v.value(),
        pulses: settings.base.pulses,
        seed: settings.base.seed,
        tolerance_sigmas: tol,
        all_pass: checks.iter().all(|c| c.pass),
        checks,
    };

    let table: Vec<Vec<String>> = report
        .checks
        .iter()
        .map(|c| {
            vec![
                c.protocol.name().to_string(),
                c.metric.to_string(),
                opt(c.value),
                num(c.target),
                num(c.se),
                opt(c.z),
                c.pass.to_string(),
            ]
        })
        .collect();
    let artifacts = vec![
        write_csv(&dir.join("compare.csv"), &COMPARE_HEADER, &table)?,
        write_json(&dir.join("compare.json"), &report)?,
    ];
    for c in &report.checks {
        say(
            out,
            format_args!(
                "{} {:<12} value {:<24} target {:<24} z {:>8} {}",
                c.protocol,
                c.metric,
                opt(c.value),
                num(c.target),
                c.z.map_or("-".into(), |z| format!("{z:.3}")),
                if c.pass { "PASS" } else { "FAIL" }
            ),
        )?;
    }
    let failures: Vec<String> = report
        .checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("{}/{}", c.protocol, c.metric))
        .collect();
    record(
        settings,
        "compare",
        settings.digest(),
        json!({"all_pass": report.all_pass, "failures": failures}),
        artifacts,
    )?;
    if report.all_pass {
        Ok(report)
    } else {
        Err(CliError::ComparisonFailed(failures.join(", ")))
    }
}

fn secure_rows(
    visibilities: &[f64],
    pulse: &PulseParams,
    grid: &MuGrid,
    sec: &SecurityParams,
) -> Result<Vec<(f64, [MuOptimum; 2])>> {
    visibilities
        .iter()
        .map(|&v| {
            let vis = Visibility::new(v)?;
            Ok((
                v,
                [
                    optimize_mu(Protocol::Bb84, pulse, vis, grid, sec)?,
                    optimize_mu(Protocol::Sarg04, pulse, vis, grid, sec)?,
                ],
            ))
        })
        .collect()
}

fn secure_table(rows: &[(f64, [MuOptimum; 2])]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|(v, [b, s])| {
            vec![
                num(*v),
                num(b.mu),
                num(b.result.secure_rate),
                num(s.mu),
                num(s.result.secure_rate),
            ]
        })
        .collect()
}

/// Optimal-μ secure rate per visibility for both protocols.
pub fn cmd_secure_sweep(settings: &Settings, out: &mut dyn Write) -> Result<()> {
    let dir = &settings.out_dir;
    ensure_dir(dir)?;
    let pulse = settings.base.pulse_params()?;
    let visibilities: Vec<f64> = settings
        .sweep
        .points()?
        .into_iter()
        .map(|v| {
            let mut cfg = settings.base;
            cfg.channel.visibility = Visibility::new(v)?;
            Ok(cfg.effective_visibility().value())
        })
        .collect::<Result<_>>()?;
    let rows = secure_rows(&visibilities, &pulse, &settings.mu_grid, &settings.security)?;
    let artifacts = vec![
        write_csv(&dir.join("secure.csv"), &SECURE_HEADER, &secure_table(&rows))?,
        write_text(
            &dir.join("secure.svg"),
            &secure_plot("Secure rate vs channel visibility", &rows).render(),
        )?,
    ];
    say(
        out,
        format_args!("secure-sweep: {} points written to {}", rows.len(), dir.display()),
    )?;
    record(
        settings,
        "secure-sweep",
        settings.digest(),
        json!({"rows": rows.len()}),
        artifacts,
    )
}

/// The reference experiment: requested visibility realized as a per-pulse
/// flip fraction on top of the intrinsic channel visibility. Only pulses,
/// seed, workers and output locations are taken from `settings`.
pub fn cmd_replicate_paper(settings: &Settings, out: &mut dyn Write) -> Result<()> {
    let dir = &settings.out_dir;
    ensure_dir(dir)?;
    let intrinsic = Visibility::new(reference::INTRINSIC_VISIBILITY)?;
    let mut base = SimConfig::reference(Protocol::Bb84);
    base.pulses = settings.base.pulses;
    base.seed = settings.base.seed;
    base.depol_mode = DepolMode::PerPulse;
    base.intrinsic_visibility = Some(intrinsic);
    let pulse = base.pulse_params()?;

    let requested = REPLICATE_GRID.points()?;
    let mut rows = Vec::new();
    let mut mc = Vec::new();
    let mut qber_table = Vec::new();
    let mut sifted_table = Vec::new();
    for (i, &vr) in requested.iter().enumerate() {
        let v_req = Visibility::new(vr)?;
        let v = compose_visibility(v_req, intrinsic);
        let a = AnalyticPoint::evaluate(&pulse, v)?;
        let mut points = [None; 2];
        for (k, protocol) in Protocol::ALL.into_iter().enumerate() {
            let mut cfg = SimConfig {
                protocol,
                seed: point_seed(base.seed, i, protocol),
                ..base
            };
            cfg.channel.visibility = v_req;
            points[k] = Some(McPoint::measure(settings, &cfg, &pulse)?);
        }
        let [b, s] = points.map(|p| p.expect("both protocols measured"));
        let lead = [num(vr), num(v_req.disturbance()), num(v.value())];
        let mut q_row = lead.to_vec();
        q_row.extend([a.q_bb84, a.q_sarg04, a.q_mu_bb84, a.q_mu_sarg04].map(num));
        q_row.extend(mc_cells(&b, false, true));
        q_row.extend(mc_cells(&s, false, true));
        qber_table.push(q_row);
        let mut r_row = lead.to_vec();
        r_row.extend([a.r_bb84, a.r_sarg04].map(num));
        r_row.extend(mc_cells(&b, true, false));
        r_row.extend(mc_cells(&s, true, false));
        sifted_table.push(r_row);
        rows.push((v.value(), a));
        mc.push((v.value(), [b, s]));
    }
    let composed: Vec<f64> = rows.iter().map(|(v, _)| *v).collect();
    let secure = secure_rows(&composed, &pulse, &MuGrid::default(), &SecurityParams::default())?;

    let artifacts = vec![
        write_csv(&dir.join("qber.csv"), &QBER_HEADER, &qber_table)?,
        write_text(
            &dir.join("qber.svg"),
            &qber_plot("QBER vs channel visibility", &rows, &mc).render(),
        )?,
        write_csv(&dir.join("sifted.csv"), &SIFTED_HEADER, &sifted_table)?,
        write_text(
            &dir.join("sifted.svg"),
            &sifted_plot("Sifted key rate vs channel visibility", &rows, &mc).render(),
        )?,
        write_csv(&dir.join("secure.csv"), &SECURE_HEADER, &secure_table(&secure))?,
        write_text(
            &dir.join("secure.svg"),
            &secure_plot("Secure key rate (lower bound) vs channel visibility", &secure).render(),
        )?,
    ];
    say(
        out,
        format_args!(
            "replicate-paper: {} points, {} pulses per point, written to {}",
            requested.len(),
            base.pulses,
            dir.display()
        ),
    )?;
    let digest = digest_value(&json!({
        "command": "replicate-paper",
        "pulses": base.pulses,
        "seed": base.seed,
        "grid": REPLICATE_GRID,
    }));
    record(
        settings,
        "replicate-paper",
        digest,
        json!({"points": requested.len()}),
        artifacts,
    )
}
