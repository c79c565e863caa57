//! Subcommand implementations.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use edqnm_lab::closure::Closure;
use edqnm_lab::dissipation_law::{
    fit_asymptote, run_sweep, FitResult, SweepBase, SweepRecord, DNS_C, DNS_C_EPS_INF,
};
use edqnm_lab::evolve::{run_decay, run_forced, step, suggest_dt, ForcingMode, RunRecord};
use edqnm_lab::flux::flux_profile;
use edqnm_lab::grid::{make_grid, GridSpec, WavenumberGrid};
use edqnm_lab::realspace::{khe_residual, r_nodes, KheInputs, StructureFunctions};
use edqnm_lab::reference::{
    batchelor_limit_table, dissipation_quadrature, poiseuille_dissipation, poiseuille_profile,
    pressure_work, ChannelFlowCase,
};
use edqnm_lab::rg::{bandwidth_sweep, effective_cutoff, iterate_to_fixed_point, write_sweep_csv, Pao, RgConfig};
use edqnm_lab::scaling::{box_scale, collapse_error, kolmogorov_rescale, k62_rescale, CollapseMode, CollapseReport};
use edqnm_lab::spectra::{diagnostics, initial_spectrum, InitialShape, SpectralState};
use edqnm_lab::temporal::{analyse, Decorrelation, SyntheticEnsemble};
use edqnm_lab::Error;
use serde::Serialize;
use serde_json::json;

use crate::config::{CollapseKind, RgSweepBlock, RunConfig};
use crate::output::OutputDir;
use crate::{CliError, Context, Oracle, TemporalKind};

fn require<T: Clone>(v: &Option<T>, block: &str) -> Result<T, CliError> {
    v.clone()
        .ok_or_else(|| CliError::Config(format!("missing [{block}] block")))
}

/// Errors raised by parameter checks are configuration errors; the rest
/// happened while computing.
fn classify(e: Error) -> CliError {
    match e {
        Error::InvalidRange(_)
        | Error::OutOfRange { .. }
        | Error::InvalidState(_)
        | Error::LengthMismatch { .. }
        | Error::UnderResolvedDuration { .. } => CliError::Config(e.to_string()),
        other => CliError::Numerical(other.to_string()),
    }
}

fn config_err(e: Error) -> CliError {
    CliError::Config(e.to_string())
}

/// Grid for a decaying run. A `k_max` tied to `k_d` uses the dissipation of
/// the initial spectrum sampled on a provisional grid.
fn decay_grid(spec: &GridSpec, shape: &InitialShape, nu: f64) -> edqnm_lab::Result<WavenumberGrid> {
    if spec.k_max_over_kd.is_none() {
        return spec.build(1.0, nu);
    }
    let probe = Arc::new(make_grid(spec.k_min, 100.0 * shape.peak_wavenumber, 128)?);
    let eps = diagnostics(&initial_spectrum(probe, shape, nu)?)?.dissipation;
    spec.build(eps, nu)
}

fn run_summary(rec: &RunRecord) -> serde_json::Value {
    let s = &rec.final_state;
    match diagnostics(s) {
        Ok(d) => json!({
            "t": s.t,
            "steps": rec.steps,
            "stationary": rec.stationary,
            "total_energy": d.total_energy,
            "dissipation": d.dissipation,
            "taylor_reynolds": d.taylor_reynolds,
            "reynolds_l": d.reynolds_l,
            "c_eps": d.dissipation * d.integral_scale / d.rms_velocity.powi(3),
            "max_balance_residual": rec.max_balance_residual,
            "clipped_energy": rec.clipped_energy,
        }),
        Err(e) => json!({ "t": s.t, "steps": rec.steps, "diagnostics": e.to_string() }),
    }
}

fn write_run(out: &mut OutputDir, rec: &RunRecord) -> Result<(), CliError> {
    out.emit("time_series.csv", |w| rec.write_csv(w))?;
    out.emit("spectrum.csv", |w| rec.final_state.write_csv(w))
}

/// Writes the record; a failed run keeps its `.partial` names and returns
/// the failure after the manifest is down.
fn finish_run(
    ctx: &Context,
    command: &str,
    rec: &RunRecord,
    failure: Option<String>,
    extra: impl FnOnce(&mut OutputDir, &mut serde_json::Value) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let mut out = OutputDir::create(&ctx.out)?;
    if failure.is_some() {
        out.mark_partial();
    }
    write_run(&mut out, rec)?;
    let mut summary = run_summary(rec);
    if failure.is_none() {
        extra(&mut out, &mut summary)?;
    }
    let warnings: Vec<String> = failure.iter().cloned().collect();
    out.finish(command, &ctx.cfg, summary.clone(), &warnings)?;
    ctx.say(format!("{command}: {summary}"));
    match failure {
        Some(f) => Err(CliError::Numerical(f)),
        None => Ok(()),
    }
}

pub fn decay(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let run = require(&cfg.run, "run")?;
    let shape = require(&cfg.initial, "initial")?;
    let grid = Arc::new(decay_grid(&require(&cfg.grid, "grid")?, &shape, run.nu).map_err(config_err)?);
    let initial = initial_spectrum(grid.clone(), &shape, run.nu).map_err(config_err)?;
    let closure = Closure::new(grid, cfg.closure).map_err(config_err)?;
    let (rec, failure) = match run_decay(&initial, Some(&closure), &cfg.integrator, run.t_end) {
        Ok(r) => (r, None),
        Err(Error::Aborted { source, partial }) => (*partial, Some(source.to_string())),
        Err(e) => return Err(classify(e)),
    };
    finish_run(ctx, "decay", &rec, failure, |_, _| Ok(()))
}

fn forced_setup(cfg: &RunConfig) -> Result<(SpectralState, Closure, f64), CliError> {
    let run = require(&cfg.run, "run")?;
    if cfg.forcing.mode != ForcingMode::Band {
        return Err(CliError::Config("forced runs need [forcing] mode = \"band\"".into()));
    }
    let spec = require(&cfg.grid, "grid")?;
    let grid = Arc::new(spec.build(cfg.forcing.injection_rate, run.nu).map_err(config_err)?);
    cfg.forcing.validate(&grid).map_err(config_err)?;
    let initial = initial_spectrum(grid.clone(), &require(&cfg.initial, "initial")?, run.nu).map_err(config_err)?;
    let closure = Closure::new(grid, cfg.closure).map_err(config_err)?;
    Ok((initial, closure, run.t_end))
}

pub fn forced(ctx: &Context, analysis: bool) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let (initial, closure, t_end) = forced_setup(cfg)?;
    let (rec, failure) = match run_forced(&initial, Some(&closure), &cfg.forcing, &cfg.integrator, t_end) {
        Ok(r) => (r, None),
        Err(Error::NotStationary { t, record }) => (*record, Some(format!("not stationary by t = {t}"))),
        Err(Error::Aborted { source, partial }) => (*partial, Some(source.to_string())),
        Err(e) => return Err(classify(e)),
    };
    finish_run(ctx, "forced", &rec, failure, |out, summary| {
        if analysis {
            analyse_state(out, summary, &rec.final_state, &closure, cfg)?;
        }
        Ok(())
    })
}

/// Flux, structure functions and a one-step KHE balance at a state.
fn analyse_state(
    out: &mut OutputDir,
    summary: &mut serde_json::Value,
    state: &SpectralState,
    closure: &Closure,
    cfg: &RunConfig,
) -> Result<(), CliError> {
    let tr = closure.transfer(state)?;
    let flux = flux_profile(&tr)?;
    out.emit("flux.csv", |w| flux.write_csv(w))?;
    let d = diagnostics(state)?;
    let r = r_nodes(&state.grid);
    let sf = StructureFunctions::new(state, &tr, &r);
    out.emit("structure.csv", |w| sf.write_csv(w, &d))?;
    let dt = suggest_dt(state, Some(closure), &cfg.forcing)?;
    let later = step(state, Some(closure), &cfg.forcing, dt)?;
    let tr_later = closure.transfer(&later)?;
    let khe = khe_residual(
        &KheInputs {
            earlier: state,
            later: &later,
            transfer_earlier: &tr,
            transfer_later: &tr_later,
            injection_rate: cfg.forcing.rate(),
        },
        &r,
    )?;
    out.emit("khe.csv", |w| khe.write_csv(w))?;
    let band = (1.0 / state.grid.k_max(), 0.3 / cfg.forcing.band_top);
    summary["pi_max_over_eps"] = json!(flux.pi_max_over_eps);
    summary["k_star"] = json!(flux.k_star.map(|z| z.k_star));
    summary["khe_residual"] = json!(khe.norm_over(band.0, band.1));
    Ok(())
}

pub fn sweep(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let block = require(&cfg.sweep, "sweep")?;
    if cfg.forcing.mode != ForcingMode::Band {
        return Err(CliError::Config("sweeps need [forcing] mode = \"band\"".into()));
    }
    let base = SweepBase {
        grid: require(&cfg.grid, "grid")?,
        initial: require(&cfg.initial, "initial")?,
        closure: cfg.closure,
        forcing: cfg.forcing,
        integrator: cfg.integrator,
        max_time: block.max_time,
    };
    let outcome = run_sweep(&base, &block.nu_list).map_err(classify)?;
    let mut out = OutputDir::create(&ctx.out)?;
    out.emit("sweep.csv", |w| outcome.record.write_csv(w))?;
    for (i, s) in outcome.states().into_iter().enumerate() {
        out.emit(&spectrum_name(i), |w| s.write_csv(w))?;
    }
    let warnings = outcome.warnings();
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let rows = &outcome.record.rows;
    let summary = json!({
        "runs": block.nu_list.len(),
        "stationary": rows.len(),
        "r_lambda": rows.iter().map(|r| r.r_lambda).collect::<Vec<_>>(),
        "c_eps": rows.iter().map(|r| r.c_eps).collect::<Vec<_>>(),
    });
    out.finish("sweep", cfg, summary.clone(), &warnings)?;
    ctx.say(format!("sweep: {summary}"));
    Ok(())
}

fn spectrum_name(row: usize) -> String {
    format!("spectrum_{row:02}.csv")
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn read_sweep(path: &Path) -> Result<SweepRecord, CliError> {
    SweepRecord::read_csv(&read_text(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Derived outputs go to a subdirectory when they would land on top of the
/// run they read from.
fn derived_dir(ctx: &Context, source: &Path, name: &str) -> PathBuf {
    let same = match (source.canonicalize(), ctx.out.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => source == ctx.out,
    };
    if same {
        ctx.out.join(name)
    } else {
        ctx.out.clone()
    }
}

#[derive(Serialize)]
struct FitReport<'a> {
    #[serde(flatten)]
    fit: &'a FitResult,
    reference: serde_json::Value,
}

pub fn fit(ctx: &Context, sweep: Option<&Path>, quadratic: bool) -> Result<(), CliError> {
    let path = sweep.map(Path::to_path_buf).unwrap_or_else(|| ctx.out.join("sweep.csv"));
    let record = read_sweep(&path)?;
    let quadratic = quadratic || ctx.cfg.fit.is_some_and(|f| f.quadratic);
    let result = fit_asymptote(&record, quadratic)?;
    let source = path.parent().unwrap_or(Path::new("."));
    let mut out = OutputDir::create(&derived_dir(ctx, source, "fit"))?;
    let report = FitReport {
        fit: &result,
        reference: json!({
            "C_eps_inf": DNS_C_EPS_INF.0,
            "C_eps_inf_err": DNS_C_EPS_INF.1,
            "C": DNS_C.0,
            "C_err": DNS_C.1,
            "note": "direct numerical simulation values; a closure model is not expected to match them",
        }),
    };
    out.json("fit.json", &report)?;
    out.emit("fit_plot.csv", |w| result.write_plot_data(&record, w))?;
    let mut cfg = ctx.cfg.clone();
    cfg.fit = Some(crate::config::FitBlock { quadratic });
    out.finish("fit", &cfg, json!({ "sweep": path.display().to_string() }), &[])?;
    ctx.say(format!(
        "C_eps = {:.4} + {:.3} / R_L{}   (r2 = {:.4}, n = {})",
        result.c_eps_inf,
        result.c,
        result.c2.map(|c| format!(" + {c:.3} / R_L^2")).unwrap_or_default(),
        result.r2,
        result.n_points
    ));
    ctx.say(format!(
        "  C_eps_inf = {:.4} +- {:.4}, C = {:.3} +- {:.3}",
        result.c_eps_inf, result.stderrs[0], result.c, result.stderrs[1]
    ));
    ctx.say(format!(
        "  DNS reference: C_eps_inf = {} +- {}, C = {} +- {} (different dynamics, agreement not expected)",
        DNS_C_EPS_INF.0, DNS_C_EPS_INF.1, DNS_C.0, DNS_C.1
    ));
    Ok(())
}

#[derive(Serialize)]
struct CollapseOutput {
    report: CollapseReport,
    members: Vec<usize>,
    r_lambda: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k41_collapse_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    inflation: Option<f64>,
}

/// Row indices of the `m` highest-`R_λ` members, ascending in `R_λ`.
pub fn top_members(record: &SweepRecord, m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..record.rows.len()).collect();
    idx.sort_by(|&a, &b| record.rows[b].r_lambda.total_cmp(&record.rows[a].r_lambda));
    idx.truncate(m);
    idx.reverse();
    idx
}

/// External scales from the box scale to `ratio` times it, geometric in
/// member order.
pub fn external_scales(states: &[&SpectralState], ratio: f64) -> Vec<f64> {
    let m = states.len();
    let base = box_scale(states[0]);
    (0..m)
        .map(|i| base * ratio.powf(if m > 1 { i as f64 / (m - 1) as f64 } else { 0.0 }))
        .collect()
}

pub fn collapse(
    ctx: &Context,
    from: Option<&Path>,
    mode: Option<CollapseKind>,
    mu: Option<f64>,
    members: Option<usize>,
    l_ratio: Option<f64>,
) -> Result<(), CliError> {
    let from = from.map(Path::to_path_buf).unwrap_or_else(|| ctx.out.clone());
    let mut block = ctx.cfg.collapse.unwrap_or_default();
    block.mode = mode.unwrap_or(block.mode);
    block.mu = mu.unwrap_or(block.mu);
    block.members = members.unwrap_or(block.members);
    block.l_ext_ratio = l_ratio.unwrap_or(block.l_ext_ratio);
    if block.members < 2 || !(block.mu >= 0.0) || !(block.l_ext_ratio > 0.0) {
        return Err(CliError::Config("collapse needs members >= 2, mu >= 0, l_ext_ratio > 0".into()));
    }
    let record = read_sweep(&from.join("sweep.csv"))?;
    let idx = top_members(&record, block.members);
    let states = idx
        .iter()
        .map(|&i| {
            let p = from.join(spectrum_name(i));
            SpectralState::read_csv(&read_text(&p)?).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&SpectralState> = states.iter().collect();
    let labels: Vec<String> = idx
        .iter()
        .map(|&i| format!("R_lambda={:.1}", record.rows[i].r_lambda))
        .collect();
    let l_ext = external_scales(&refs, block.l_ext_ratio);
    let k41 = collapse_error(&refs, &labels, &CollapseMode::K41)?;
    let (report, tables) = match block.mode {
        CollapseKind::K41 => (k41.clone(), refs.iter().map(|s| kolmogorov_rescale(s)).collect::<Result<Vec<_>, _>>()?),
        CollapseKind::K62 => {
            let m = CollapseMode::K62 { mu: block.mu, l_ext: l_ext.clone() };
            let rep = collapse_error(&refs, &labels, &m)?;
            let tables = refs
                .iter()
                .zip(&l_ext)
                .map(|(s, l)| k62_rescale(s, block.mu, *l))
                .collect::<Result<Vec<_>, _>>()?;
            (rep, tables)
        }
    };
    let name = match block.mode {
        CollapseKind::K41 => "collapse-k41",
        CollapseKind::K62 => "collapse-k62",
    };
    let mut out = OutputDir::create(&derived_dir(ctx, &from, name))?;
    for (t, i) in tables.iter().zip(&idx) {
        out.emit(&format!("rescaled_{i:02}.csv"), |w| t.write_csv(w))?;
    }
    let k62 = block.mode == CollapseKind::K62;
    let result = CollapseOutput {
        members: idx.clone(),
        r_lambda: idx.iter().map(|&i| record.rows[i].r_lambda).collect(),
        k41_collapse_error: k62.then_some(k41.collapse_error),
        inflation: k62.then(|| report.collapse_error / k41.collapse_error),
        report,
    };
    out.json("collapse.json", &result)?;
    let mut cfg = ctx.cfg.clone();
    cfg.collapse = Some(block);
    let summary = json!({
        "collapse_error": result.report.collapse_error,
        "void": result.report.void,
        "inflation": result.inflation,
    });
    out.finish("collapse", &cfg, summary.clone(), &[])?;
    ctx.say(format!("collapse ({name}): {summary}"));
    Ok(())
}

pub fn temporal(ctx: &Context, mode: Option<TemporalKind>, realizations: Option<usize>) -> Result<(), CliError> {
    let mut ens = match mode {
        Some(m) => {
            let d = match m {
                TemporalKind::Kolmogorov => Decorrelation::Kolmogorov,
                TemporalKind::Sweeping => Decorrelation::Sweeping,
            };
            SyntheticEnsemble::preset(d, ctx.cfg.seed, 64)
        }
        None => require(&ctx.cfg.temporal, "temporal")?,
    };
    ens.seed = ctx.cfg.seed;
    if let Some(n) = realizations {
        ens.n_realizations = n;
    }
    let (spec, report) = analyse(&ens, None).map_err(classify)?;
    let mut out = OutputDir::create(&ctx.out)?;
    out.emit("temporal_spectrum.csv", |w| spec.write_csv(w))?;
    out.json("temporal.json", &report)?;
    let mut cfg = ctx.cfg.clone();
    cfg.temporal = Some(ens);
    let summary = serde_json::to_value(&report).unwrap_or_default();
    out.finish("temporal", &cfg, summary, &[])?;
    ctx.say(format!(
        "{:?}: slope {:.3} +- {:.3} over [{:.3}, {:.3}], variance ratio {:.4}",
        report.mode, report.slope, report.stderr, report.window.0, report.window.1, report.variance_ratio
    ));
    Ok(())
}

pub fn rg(ctx: &Context) -> Result<(), CliError> {
    let base = ctx.cfg.rg.clone().unwrap_or_else(|| RgConfig::new(0.7, 1e-3));
    let hs = ctx
        .cfg
        .rg_sweep
        .clone()
        .map(|b| b.h)
        .unwrap_or_else(|| vec![0.6, 0.7, 0.8, 0.9]);
    base.h().map_err(config_err)?;
    let (trace, report) = iterate_to_fixed_point(&base).map_err(classify)?;
    let sweep = bandwidth_sweep(&base, &hs).map_err(classify)?;
    let pao = Pao {
        alpha: report.alpha,
        eps: base.eps,
        nu: base.nu0,
    };
    let kd = pao.kd();
    let k0 = effective_cutoff(&pao.state(1e-3 * kd, 10.0 * kd, 64.0)?, base.capture)?;
    let mut out = OutputDir::create(&ctx.out)?;
    out.emit("rg_trace.csv", |w| trace.write_csv(base.eps, w))?;
    out.emit("rg_sweep.csv", |w| write_sweep_csv(&sweep, w))?;
    let result = json!({
        "fixed_point": report,
        "sweep": sweep,
        "cutoff": { "capture": base.capture, "k0": k0, "kd": kd, "k0_over_kd": k0 / kd },
    });
    out.json("rg.json", &result)?;
    let mut cfg = ctx.cfg.clone();
    cfg.rg = Some(base);
    cfg.rg_sweep = Some(RgSweepBlock { h: hs });
    out.finish("rg", &cfg, result["fixed_point"].clone(), &[])?;
    ctx.say(format!(
        "h = {}: nu_tilde* = {:.6}, alpha = {:.4}, {} iterations, slope {:.4}, k0/kd = {:.3}",
        report.h, report.nu_tilde_star, report.alpha, report.iterations, report.slope, k0 / kd
    ));
    for r in &sweep {
        ctx.say(format!("  eta = {:.2}: nu_tilde* = {:.6}, alpha = {:.4}", r.eta, r.nu_tilde_star, r.alpha));
    }
    Ok(())
}

pub fn oracle(which: &Oracle, quiet: bool) -> Result<(), CliError> {
    let mut lines = Vec::new();
    match *which {
        Oracle::Poiseuille { mu, u, h } => {
            let c = ChannelFlowCase::from_bulk(u, mu, h).map_err(config_err)?;
            let eps = poiseuille_dissipation(&c);
            let q = c.flow_rate();
            let work = pressure_work(&c, q);
            lines.push(format!("P = {}", c.pressure_gradient()));
            lines.push(format!("u(0) = {}", poiseuille_profile(&c, 0.0)?));
            lines.push(format!("u(+-h) = {}", poiseuille_profile(&c, h)?));
            lines.push(format!("epsilon = 6 mu U^2 / h = {eps}"));
            lines.push(format!("epsilon by quadrature = {}", dissipation_quadrature(&c)));
            lines.push(format!("Q = {q}"));
            lines.push(format!("QP = {}", work.work));
            lines.push(format!("QP / epsilon = {}", work.ratio.unwrap_or(f64::NAN)));
        }
        Oracle::Batchelor { eps, ref nu } => {
            let t = batchelor_limit_table(eps, nu).map_err(config_err)?;
            lines.push("nu,k_d".to_string());
            for (n, k) in &t.rows {
                lines.push(format!("{n},{k}"));
            }
            lines.push(format!("slope d ln k_d / d ln nu = {}", t.slope));
        }
    }
    if !quiet {
        for l in lines {
            println!("{l}");
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use edqnm_lab::dissipation_law::SweepRow;

    #[test]
    fn member_order() {
        let rows = [30.0, 250.0, 60.0, 120.0]
            .iter()
            .map(|&r| SweepRow {
                nu: 1.0 / r,
                eps_w: 1.0,
                r_l: r,
                r_lambda: r,
                c_eps: 0.5,
                pi_ratio: 0.9,
                stationary: true,
            })
            .collect();
        let rec = SweepRecord { rows };
        assert_eq!(top_members(&rec, 3), vec![2, 3, 1]);
    }

    #[test]
    fn errors_map_to_exit_codes() {
        assert_eq!(classify(Error::InvalidRange("x".into())).exit_code(), 2);
        assert_eq!(classify(Error::AllRunsFailed).exit_code(), 3);
    }
}
