// SPDX-License-Identifier: MIT OR Apache-2.0

//! Subcommand implementations. Each returns the process exit code.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use pidsteer::analysis::{
    certify_pi, certify_pid_lti, compare_first_overshoot, derivative_gain_threshold, detect_overshoots,
    estimate_r_smooth, first_overshoot_bound, optimal_integral_gain, pi_loop_radius, scalarize, LyapunovCertificate,
    OvershootComparison, OvershootReport, ScalarTrace, StabilityCertificate,
};
use pidsteer::controllers::{steering_vectors_sequential, Gains};
use pidsteer::linalg::{norm, Mat};
use pidsteer::plant::ContrastivePlant;
use pidsteer::scenarios::figure_series;
use pidsteer::trace::Trace;
use pidsteer::Error;

use crate::config::{Axis, CertifyNumbers, RunConfig};
use crate::error::{exit, CliError};

/// Tolerance for `convergence_step` in summaries.
pub const CONVERGENCE_TOL: f64 = 1e-6;

pub const TRACE_HEADER: &str = "# pidsteer trace v1";
pub const SWEEP_HEADER: &str = "# pidsteer sweep v1";
pub const FIGURE_HEADER: &str = "# pidsteer figure v1";

/// Rayon pool sized by `PIDSTEER_THREADS` (all cores when unset).
pub fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let threads = match std::env::var("PIDSTEER_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Config(format!("PIDSTEER_THREADS must be a non-negative integer, got {v:?}")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("cannot build thread pool: {e}")))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Write { path: dir.to_path_buf(), source })?;
    }
    std::fs::write(path, contents).map_err(|source| CliError::Write { path: path.to_path_buf(), source })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(pidsteer::Error::from)?;
    text.push('\n');
    write_file(path, &text)
}

/// Shortest round-trip form, with an exponent for very large or small values.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-5..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn file_safe(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Comparison-matrix certificate for a plant under `gains`.
fn plant_certificate(m_bound: f64, gains: &Gains) -> Result<StabilityCertificate, CliError> {
    let q = (1.0 - gains.kp).abs() * m_bound;
    Ok(certify_pi(m_bound, q, gains.ki)?.with_ell(gains.kd))
}

/// One controller run on one plant.
struct Run {
    label: String,
    gains: Gains,
    trace: Trace,
    scalar: Option<ScalarTrace>,
}

fn run_controllers(plant: &ContrastivePlant, cfg: &RunConfig) -> Result<Vec<Run>, CliError> {
    cfg.gain_blocks()
        .into_iter()
        .map(|(label, gains)| {
            let (_, trace) = steering_vectors_sequential(plant, gains, &cfg.steer)?;
            let scalar = scalarize(&trace).ok();
            Ok(Run { label, gains, trace, scalar })
        })
        .collect()
}

/// Seed, plant and controller runs of one ensemble member.
type Member = (Option<u64>, ContrastivePlant, Vec<Run>);

/// Runs every ensemble member on the pool; results are in seed order.
fn run_members(cfg: &RunConfig) -> Result<Vec<Member>, CliError> {
    let pool = thread_pool()?;
    let seeds = cfg.member_seeds();
    let results: Vec<_> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let plant = cfg.build_plant(seed)?;
                let runs = run_controllers(&plant, cfg)?;
                Ok((seed, plant, runs))
            })
            .collect::<Vec<Result<_, CliError>>>()
    });
    results.into_iter().collect()
}

fn trace_csv(run: &Run) -> String {
    let t = &run.trace;
    let norms = t.error_norms();
    let inner = t.inner_with_initial();
    let mut out = String::new();
    writeln!(out, "{TRACE_HEADER}").unwrap();
    writeln!(out, "k,e_bar_norm,e_v,s_v,u_norm,w_norm,inner_e0").unwrap();
    for k in 0..=t.steps() {
        let (e_v, s_v) = match &run.scalar {
            Some(s) => (Some(s.e_v[k]), Some(s.s_v[k])),
            None => (None, None),
        };
        let u = t.controls.get(k).map(norm);
        let w = t.disturbances.get(k).map(norm);
        writeln!(
            out,
            "{k},{},{},{},{},{},{}",
            fmt_f64(norms[k]),
            opt(e_v),
            opt(s_v),
            opt(u),
            opt(w),
            fmt_f64(inner[k])
        )
        .unwrap();
    }
    out
}

#[derive(Serialize)]
struct ControllerSummary {
    label: String,
    gains: Gains,
    steps: usize,
    dim: usize,
    initial_error_norm: f64,
    steady_state: f64,
    convergence_step: Option<usize>,
    overshoots: Option<OvershootReport>,
    certificate: StabilityCertificate,
}

fn summarize(run: &Run, m_bound: f64) -> Result<ControllerSummary, CliError> {
    let norms = run.trace.error_norms();
    Ok(ControllerSummary {
        label: run.label.clone(),
        gains: run.gains,
        steps: run.trace.steps(),
        dim: run.trace.dim(),
        initial_error_norm: norms[0],
        steady_state: *norms.last().expect("trace holds ē(0)"),
        convergence_step: run.trace.convergence_step(CONVERGENCE_TOL),
        overshoots: run.scalar.as_ref().map(ScalarTrace::overshoots),
        certificate: plant_certificate(m_bound, &run.gains)?,
    })
}

/// Per-controller traces plus a JSON summary.
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<u8, CliError> {
    let members = run_members(cfg)?;
    let single = members.len() == 1;
    let mut summary = Vec::new();
    for (seed, plant, runs) in &members {
        let m_bound = plant.jacobian_bound()?;
        let mut controllers = Vec::new();
        for run in runs {
            let name = match (single, seed) {
                (false, Some(s)) => format!("trace_{}_seed{s}.csv", file_safe(&run.label)),
                _ => format!("trace_{}.csv", file_safe(&run.label)),
            };
            write_file(&out.join(name), &trace_csv(run))?;
            controllers.push(summarize(run, m_bound)?);
        }
        summary.push(json!({ "seed": seed, "m_bound": m_bound, "controllers": controllers }));
    }
    write_json(&out.join("summary.json"), &json!({ "command": "simulate", "members": summary }))?;
    Ok(exit::OK)
}

#[derive(Serialize)]
struct SweepRow {
    kp: f64,
    ki: f64,
    kd: f64,
    diverged: bool,
    convergence_step: Option<usize>,
    final_error_norm: Option<f64>,
    a0: Option<f64>,
    monotone_pre_peak: Option<bool>,
    q: f64,
    radius: Option<f64>,
    iss: bool,
}

/// Whether `e` is non-increasing up to its first peak (or its end).
fn monotone_pre_peak(e: &[f64]) -> bool {
    let end = detect_overshoots(e).first.map_or(e.len().saturating_sub(1), |f| f.i_max);
    (0..end).all(|k| e[k + 1] <= e[k] + 1e-12)
}

fn sweep_point(plant: &ContrastivePlant, cfg: &RunConfig, m_bound: f64, gains: Gains) -> Result<SweepRow, CliError> {
    let cert = plant_certificate(m_bound, &gains)?;
    let mut row = SweepRow {
        kp: gains.kp,
        ki: gains.ki,
        kd: gains.kd,
        diverged: false,
        convergence_step: None,
        final_error_norm: None,
        a0: None,
        monotone_pre_peak: None,
        q: cert.q,
        radius: cert.radius,
        iss: cert.iss,
    };
    match steering_vectors_sequential(plant, gains, &cfg.steer) {
        Ok((_, trace)) => {
            row.convergence_step = trace.convergence_step(CONVERGENCE_TOL);
            row.final_error_norm = trace.error_norms().last().copied();
            if let Ok(s) = scalarize(&trace) {
                row.a0 = detect_overshoots(&s.e_v).first.map(|f| f.a0);
                row.monotone_pre_peak = Some(monotone_pre_peak(&s.e_v));
            }
        }
        Err(Error::Divergence { .. }) => row.diverged = true,
        Err(e) => return Err(e.into()),
    }
    Ok(row)
}

/// Grid over (kp, ki, kd); axes left out take the first gain block's value.
pub fn sweep(cfg: &RunConfig, out: &Path) -> Result<u8, CliError> {
    let spec = cfg.run.sweep.clone().ok_or_else(|| CliError::Config("sweep needs a run.sweep section".into()))?;
    let base = cfg.gain_blocks()[0].1;
    let axis = |a: &Option<Axis>, default: f64| a.as_ref().map_or(Ok(vec![default]), Axis::values);
    let (kps, kis, kds) = (axis(&spec.kp, base.kp)?, axis(&spec.ki, base.ki)?, axis(&spec.kd, base.kd)?);
    let mut grid = Vec::with_capacity(kps.len() * kis.len() * kds.len());
    for &kp in &kps {
        for &ki in &kis {
            for &kd in &kds {
                grid.push(Gains::new(kp, ki, kd).map_err(|e| CliError::Config(e.to_string()))?);
            }
        }
    }
    let seed = cfg.member_seeds()[0];
    let plant = cfg.build_plant(seed)?;
    let m_bound = plant.jacobian_bound()?;
    let pool = thread_pool()?;
    let rows: Vec<Result<SweepRow, CliError>> =
        pool.install(|| grid.par_iter().map(|&g| sweep_point(&plant, cfg, m_bound, g)).collect());
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut csv = String::new();
    writeln!(csv, "{SWEEP_HEADER}").unwrap();
    writeln!(csv, "kp,ki,kd,diverged,convergence_step,final_error_norm,a0,monotone_pre_peak,q,radius,iss").unwrap();
    for r in &rows {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{}",
            fmt_f64(r.kp),
            fmt_f64(r.ki),
            fmt_f64(r.kd),
            r.diverged,
            r.convergence_step.map(|s| s.to_string()).unwrap_or_default(),
            opt(r.final_error_norm),
            opt(r.a0),
            r.monotone_pre_peak.map(|b| b.to_string()).unwrap_or_default(),
            fmt_f64(r.q),
            opt(r.radius),
            r.iss
        )
        .unwrap();
    }
    write_file(&out.join("sweep.csv"), &csv)?;
    let best = rows
        .iter()
        .filter(|r| r.radius.is_some())
        .min_by(|a, b| a.radius.partial_cmp(&b.radius).expect("radii are finite"));
    write_json(
        &out.join("sweep.json"),
        &json!({ "command": "sweep", "seed": seed, "m_bound": m_bound, "points": rows.len(), "min_radius": best }),
    )?;
    Ok(exit::OK)
}

#[derive(Serialize)]
pub struct CertifyEntry {
    pub label: String,
    pub m_bound: f64,
    pub q: f64,
    pub h: f64,
    pub ell: f64,
    /// `"plant"` when the Lyapunov certificate uses the plant's constant Ā,
    /// `"isotropic"` when it uses the surrogate `Ā = M·I`.
    pub basis: &'static str,
    pub stability: StabilityCertificate,
    pub optimal_h: Option<f64>,
    pub pi_loop_radius: Option<f64>,
    pub lyapunov: Option<LyapunovCertificate>,
    pub lyapunov_error: Option<String>,
    pub ok: bool,
}

fn certify_entry(
    label: String,
    n: CertifyNumbers,
    constant_a: Option<&Mat>,
    gains: Gains,
) -> Result<CertifyEntry, CliError> {
    let stability = certify_pi(n.m_bound, n.q, n.h)?.with_ell(n.ell);
    let optimal_h = optimal_integral_gain(n.q, n.m_bound).ok();
    let surrogate = Mat::from_element(1, 1, n.m_bound);
    let (a_bar, basis) = match constant_a {
        Some(a) => (a, "plant"),
        None => (&surrogate, "isotropic"),
    };
    let pi_loop_radius = constant_a.map(|a| pi_loop_radius(a, &gains)).transpose()?;
    let (mut lyapunov, mut lyapunov_error) = (None, None);
    if n.ell > 0.0 && stability.iss {
        match certify_pid_lti(a_bar, &gains, None) {
            Ok(mut c) => {
                c.p_matrix = None;
                c.q_matrix = None;
                lyapunov = Some(c);
            }
            Err(e) => lyapunov_error = Some(e.to_string()),
        }
    }
    let ok = stability.iss && (n.ell == 0.0 || lyapunov.as_ref().is_some_and(|c| c.valid));
    Ok(CertifyEntry {
        label,
        m_bound: n.m_bound,
        q: n.q,
        h: n.h,
        ell: n.ell,
        basis,
        stability,
        optimal_h,
        pi_loop_radius,
        lyapunov,
        lyapunov_error,
        ok,
    })
}

/// Certificates from `run.certify` numbers, or from the plant and every
/// gain block. Prints JSON to stdout; exits 4 when any certificate fails.
pub fn certify(cfg: &RunConfig, out: Option<&Path>) -> Result<(u8, String), CliError> {
    let entries = if let Some(n) = cfg.run.certify {
        let values = [n.m_bound, n.q, n.h, n.ell];
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) || n.m_bound == 0.0 {
            return Err(CliError::Config("certify numbers must be finite, non-negative and M > 0".into()));
        }
        let gains = Gains { kp: 1.0 - n.q / n.m_bound, ki: n.h, kd: n.ell };
        vec![certify_entry("numbers".into(), n, None, gains)?]
    } else {
        let plant = cfg.build_plant(cfg.member_seeds()[0])?;
        let jacs = plant.mean_jacobians()?;
        let m_bound = plant.jacobian_bound()?;
        let constant = (plant.is_linear() && jacs.iter().all(|a| a == &jacs[0])).then(|| &jacs[0]);
        cfg.gain_blocks()
            .into_iter()
            .map(|(label, gains)| {
                let n = CertifyNumbers { m_bound, q: (1.0 - gains.kp).abs() * m_bound, h: gains.ki, ell: gains.kd };
                certify_entry(label, n, constant, gains)
            })
            .collect::<Result<Vec<_>, _>>()?
    };
    let ok = entries.iter().all(|e| e.ok);
    let doc = json!({ "command": "certify", "ok": ok, "certificates": entries });
    let text = serde_json::to_string_pretty(&doc).map_err(pidsteer::Error::from)? + "\n";
    if let Some(dir) = out {
        write_file(&dir.join("certificate.json"), &text)?;
    }
    Ok((if ok { exit::OK } else { exit::CERTIFICATE }, text))
}

#[derive(Serialize)]
struct OvershootEntry {
    label: String,
    gains: Gains,
    report: Option<OvershootReport>,
    /// Certified bound on the first overshoot amplitude (PI blocks only).
    a0_bound: Option<f64>,
    r_smooth: Option<f64>,
    derivative_threshold: Option<f64>,
}

#[derive(Serialize)]
struct PairComparison {
    pi: String,
    pid: String,
    comparison: OvershootComparison,
}

/// Overshoot events per controller, PI bounds, and PI-vs-PID comparisons
/// for blocks sharing `kp` and `ki`.
pub fn overshoot_report(cfg: &RunConfig, out: &Path) -> Result<(u8, String), CliError> {
    let members = run_members(cfg)?;
    let mut docs = Vec::new();
    for (seed, plant, runs) in &members {
        let m_bound = plant.jacobian_bound()?;
        let mut entries = Vec::new();
        for run in runs {
            let mut entry = OvershootEntry {
                label: run.label.clone(),
                gains: run.gains,
                report: run.scalar.as_ref().map(ScalarTrace::overshoots),
                a0_bound: None,
                r_smooth: None,
                derivative_threshold: None,
            };
            if let (Some(s), true) = (&run.scalar, run.gains.kd == 0.0 && run.gains.ki > 0.0) {
                let cert = plant_certificate(m_bound, &run.gains)?;
                if let Some(first) = entry.report.as_ref().and_then(|r| r.first) {
                    entry.a0_bound = first_overshoot_bound(&cert, s.e_v[0], first.t0, s.d_inf(), s.w_inf()).ok();
                }
                entry.r_smooth = estimate_r_smooth(s).ok();
                entry.derivative_threshold =
                    entry.r_smooth.and_then(|r| derivative_gain_threshold(cert.q, m_bound, r).ok());
            }
            entries.push(entry);
        }
        let mut pairs = Vec::new();
        for pi in runs.iter().filter(|r| r.gains.kd == 0.0 && r.gains.ki > 0.0) {
            for pid in
                runs.iter().filter(|r| r.gains.kd > 0.0 && r.gains.kp == pi.gains.kp && r.gains.ki == pi.gains.ki)
            {
                if let (Some(a), Some(b)) = (&pi.scalar, &pid.scalar) {
                    pairs.push(PairComparison {
                        pi: pi.label.clone(),
                        pid: pid.label.clone(),
                        comparison: compare_first_overshoot(a, b),
                    });
                }
            }
        }
        docs.push(json!({ "seed": seed, "m_bound": m_bound, "controllers": entries, "comparisons": pairs }));
    }
    let doc = json!({ "command": "overshoot-report", "members": docs });
    write_json(&out.join("overshoot.json"), &doc)?;
    let text = serde_json::to_string_pretty(&doc).map_err(pidsteer::Error::from)? + "\n";
    Ok((exit::OK, text))
}

/// ⟨ē(0), ē(k)⟩ for every gain block, one column per controller.
pub fn figure(cfg: &RunConfig, out: &Path) -> Result<u8, CliError> {
    let plant = cfg.build_plant(cfg.member_seeds()[0])?;
    let columns = figure_series(&plant, &cfg.gain_blocks())?;
    let mut csv = String::new();
    writeln!(csv, "{FIGURE_HEADER}").unwrap();
    let labels: Vec<&str> = columns.iter().map(|c| c.label.as_str()).collect();
    writeln!(csv, "k,{}", labels.join(",")).unwrap();
    for k in 0..=plant.layer_count() {
        let row: Vec<String> = columns.iter().map(|c| fmt_f64(c.inner[k])).collect();
        writeln!(csv, "{k},{}", row.join(",")).unwrap();
    }
    write_file(&out.join("figure.csv"), &csv)?;
    let firsts: Vec<_> = columns
        .iter()
        .map(|c| json!({ "label": c.label, "gains": c.gains, "first_overshoot": c.first_overshoot }))
        .collect();
    write_json(&out.join("figure.json"), &json!({ "command": "figure", "seed": plant.seed(), "columns": firsts }))?;
    Ok(exit::OK)
}

/// Output directory: flag, then `run.out`, then `pidsteer-out`.
pub fn output_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    flag.or_else(|| cfg.run.out.clone()).unwrap_or_else(|| PathBuf::from("pidsteer-out"))
}
