//! Dimensionless dissipation `C_ε = ε L / U³`, Reynolds-number sweeps and the
//! fit `C_ε = C_{ε,∞} + C / R_L`.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closure::{Closure, ClosureParams};
use crate::error::{Error, Result};
use crate::evolve::{run_forced, ForcingSpec, IntegratorSettings, RunRecord};
use crate::flux::flux_profile;
use crate::grid::GridSpec;
use crate::realspace::s2_from_spectrum;
use crate::spectra::{diagnostics, initial_spectrum, InitialShape, SpectralState};

/// Reference constants from direct numerical simulation, for reports only.
pub const DNS_C_EPS_INF: (f64, f64) = (0.468, 0.006);
pub const DNS_C: (f64, f64) = (18.9, 1.3);

pub fn dimensionless_dissipation(state: &SpectralState) -> Result<f64> {
    let d = diagnostics(state)?;
    Ok(d.dissipation * d.integral_scale / d.rms_velocity.powi(3))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBase {
    pub grid: GridSpec,
    pub initial: InitialShape,
    #[serde(default)]
    pub closure: ClosureParams,
    pub forcing: ForcingSpec,
    #[serde(default)]
    pub integrator: IntegratorSettings,
    pub max_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub nu: f64,
    pub eps_w: f64,
    pub r_l: f64,
    pub r_lambda: f64,
    pub c_eps: f64,
    pub pi_ratio: f64,
    pub stationary: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub rows: Vec<SweepRow>,
}

impl SweepRecord {
    /// Writes CSV `nu,eps_W,R_L,R_lambda,C_eps,Pi_ratio`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "nu,eps_W,R_L,R_lambda,C_eps,Pi_ratio")?;
        for r in &self.rows {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.nu, r.eps_w, r.r_l, r.r_lambda, r.c_eps, r.pi_ratio
            )?;
        }
        Ok(())
    }

    pub fn read_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (n, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidState(format!("sweep line {}: {e}", n + 1)))?;
            if v.len() != 6 {
                return Err(Error::InvalidState(format!("sweep line {}: {} fields", n + 1, v.len())));
            }
            rows.push(SweepRow {
                nu: v[0],
                eps_w: v[1],
                r_l: v[2],
                r_lambda: v[3],
                c_eps: v[4],
                pi_ratio: v[5],
                stationary: true,
            });
        }
        Ok(Self { rows })
    }
}

/// One sweep member: its stationary record or the reason it was dropped.
#[derive(Debug, Clone)]
pub struct SweepRun {
    pub nu: f64,
    pub outcome: std::result::Result<RunRecord, String>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub record: SweepRecord,
    pub runs: Vec<SweepRun>,
}

impl SweepOutcome {
    /// Final states of the stationary runs in sweep order.
    pub fn states(&self) -> Vec<&SpectralState> {
        self.runs
            .iter()
            .filter_map(|r| r.outcome.as_ref().ok().map(|rec| &rec.final_state))
            .collect()
    }

    pub fn warnings(&self) -> Vec<String> {
        self.runs
            .iter()
            .filter_map(|r| r.outcome.as_ref().err().map(|e| format!("nu = {}: {e}", r.nu)))
            .collect()
    }
}

/// One forced run per viscosity, run concurrently on the current rayon pool.
pub fn run_single(base: &SweepBase, nu: f64) -> Result<RunRecord> {
    let grid = Arc::new(base.grid.build(base.forcing.injection_rate, nu)?);
    let initial = initial_spectrum(grid.clone(), &base.initial, nu)?;
    let closure = Closure::new(grid, base.closure)?;
    run_forced(&initial, Some(&closure), &base.forcing, &base.integrator, base.max_time)
}

pub fn run_sweep(base: &SweepBase, nu_list: &[f64]) -> Result<SweepOutcome> {
    if nu_list.is_empty() || nu_list.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidState("nu_list must be non-empty and positive".into()));
    }
    if nu_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidState("nu_list must be strictly descending".into()));
    }
    let runs: Vec<SweepRun> = nu_list
        .par_iter()
        .map(|&nu| SweepRun {
            nu,
            outcome: run_single(base, nu).map_err(|e| e.to_string()),
        })
        .collect();
    let mut rows = Vec::new();
    for run in &runs {
        if let Ok(rec) = &run.outcome {
            rows.push(row_of(rec, base)?);
        }
    }
    if rows.is_empty() {
        return Err(Error::AllRunsFailed);
    }
    Ok(SweepOutcome {
        record: SweepRecord { rows },
        runs,
    })
}

fn row_of(rec: &RunRecord, base: &SweepBase) -> Result<SweepRow> {
    let s = &rec.final_state;
    let d = diagnostics(s)?;
    let closure = Closure::new(s.grid.clone(), base.closure)?;
    let flux = flux_profile(&closure.transfer(s)?)?;
    Ok(SweepRow {
        nu: s.nu,
        eps_w: base.forcing.injection_rate,
        r_l: d.reynolds_l,
        r_lambda: d.taylor_reynolds,
        c_eps: d.dissipation * d.integral_scale / d.rms_velocity.powi(3),
        pi_ratio: flux.pi_max_over_eps,
        stationary: rec.stationary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(rename = "C_eps_inf")]
    pub c_eps_inf: f64,
    #[serde(rename = "C")]
    pub c: f64,
    /// Coefficient of `1/R_L²` when the quadratic term is enabled.
    #[serde(rename = "C2", skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub stderrs: Vec<f64>,
    pub r2: f64,
    pub residuals: Vec<f64>,
    pub n_points: usize,
}

/// Ordinary least squares of `C_ε` on `1/R_L` (and `1/R_L²` if `quadratic`).
pub fn fit_asymptote(sweep: &SweepRecord, quadratic: bool) -> Result<FitResult> {
    let rows: Vec<&SweepRow> = sweep.rows.iter().filter(|r| r.stationary).collect();
    if rows.len() < 4 {
        return Err(Error::InsufficientSpan(format!("{} stationary rows, need 4", rows.len())));
    }
    let lo = rows.iter().map(|r| r.r_l).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|r| r.r_l).fold(0.0, f64::max);
    if hi < 8.0 * lo {
        return Err(Error::InsufficientSpan(format!("R_L spans only x{:.2}", hi / lo)));
    }
    let p = if quadratic { 3 } else { 2 };
    let design: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let x = 1.0 / r.r_l;
            (0..p).map(|j| x.powi(j as i32)).collect()
        })
        .collect();
    let y: Vec<f64> = rows.iter().map(|r| r.c_eps).collect();
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for (row, yi) in design.iter().zip(&y) {
        for a in 0..p {
            xty[a] += row[a] * yi;
            for b in 0..p {
                xtx[a][b] += row[a] * row[b];
            }
        }
    }
    let inv = invert(&xtx).ok_or_else(|| Error::InsufficientSpan("singular design".into()))?;
    let beta: Vec<f64> = (0..p).map(|a| (0..p).map(|b| inv[a][b] * xty[b]).sum()).collect();
    let residuals: Vec<f64> = design
        .iter()
        .zip(&y)
        .map(|(row, yi)| yi - (0..p).map(|a| row[a] * beta[a]).sum::<f64>())
        .collect();
    let n = rows.len();
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    let mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sigma2 = if n > p { rss / (n - p) as f64 } else { 0.0 };
    let covariance: Vec<Vec<f64>> = inv.iter().map(|r| r.iter().map(|v| v * sigma2).collect()).collect();
    let stderrs = (0..p).map(|a| covariance[a][a].max(0.0).sqrt()).collect();
    let r2 = if tss > 0.0 { (1.0 - rss / tss).clamp(0.0, 1.0) } else { 1.0 };
    Ok(FitResult {
        c_eps_inf: beta[0],
        c: beta[1],
        c2: quadratic.then(|| beta[2]),
        covariance,
        stderrs,
        r2,
        residuals,
        n_points: n,
    })
}

impl FitResult {
    pub fn predict(&self, r_l: f64) -> f64 {
        let x = 1.0 / r_l;
        self.c_eps_inf + self.c * x + self.c2.unwrap_or(0.0) * x * x
    }

    /// CSV `kind,inv_R_L,C_eps`: the sweep points and the fitted line at 100
    /// points from 0 to the largest `1/R_L`.
    pub fn write_plot_data<W: Write>(&self, sweep: &SweepRecord, mut w: W) -> std::io::Result<()> {
        writeln!(w, "kind,inv_R_L,C_eps")?;
        let mut top = 0.0f64;
        for r in &sweep.rows {
            writeln!(w, "data,{:.16e},{:.16e}", 1.0 / r.r_l, r.c_eps)?;
            top = top.max(1.0 / r.r_l);
        }
        for i in 0..100 {
            let x = top * i as f64 / 99.0;
            let y = self.c_eps_inf + self.c * x + self.c2.unwrap_or(0.0) * x * x;
            writeln!(w, "fit,{x:.16e},{y:.16e}")?;
        }
        Ok(())
    }
}

/// Gauss-Jordan inverse with partial pivoting.
fn invert(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| f64::from(u8::from(i == j))));
            row
        })
        .collect();
    for c in 0..n {
        let piv = (c..n).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs()))?;
        if m[piv][c].abs() < 1e-300 {
            return None;
        }
        m.swap(c, piv);
        let d = m[c][c];
        m[c].iter_mut().for_each(|v| *v /= d);
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                if f != 0.0 {
                    for j in 0..2 * n {
                        m[r][j] -= f * m[c][j];
                    }
                }
            }
        }
    }
    Some(m.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// Earliest sample time after which `d ln E_tot / d ln t` stays within 2% of
/// its value for half a decade of time.
pub fn select_reference_time(record: &RunRecord) -> Result<f64> {
    let s: Vec<(f64, f64)> = record
        .samples
        .iter()
        .filter(|s| s.t > 0.0)
        .map(|s| (s.t.ln(), s.total_energy.ln()))
        .collect();
    if s.len() < 3 {
        return Err(Error::TransientNotPassed("fewer than 3 samples".into()));
    }
    let n = s.len();
    let exponent: Vec<f64> = (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            (s[b].1 - s[a].1) / (s[b].0 - s[a].0)
        })
        .collect();
    let half = 0.5 * std::f64::consts::LN_10;
    for i in 0..n {
        if s[n - 1].0 < s[i].0 + half {
            break;
        }
        let ok = (i..n)
            .take_while(|&j| s[j].0 <= s[i].0 + half)
            .all(|j| (exponent[j] - exponent[i]).abs() <= 0.02 * exponent[i].abs());
        if ok {
            return Ok(s[i].0.exp());
        }
    }
    Err(Error::TransientNotPassed(
        "decay exponent not constant over half a decade".into(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayCoefficient {
    pub t_e: f64,
    pub c_eps: f64,
    pub r_l: f64,
    /// `(3/4) ∂g₂/∂t̃` at `x = r/L(t_e)`.
    pub b2: f64,
    pub x: f64,
}

/// `C_ε` and `B₂` at the snapshot nearest `t_e`, with `g₂(x, t̃) =
/// S₂(x L_e, t)/U_e²` and `t̃ = t U_e/L_e` differenced across neighbouring
/// snapshots. Requires a record kept with snapshots.
pub fn decay_dissipation_coefficient(record: &RunRecord, t_e: f64, x: f64) -> Result<DecayCoefficient> {
    let onset = select_reference_time(record)?;
    if t_e < onset * (1.0 - 1e-12) {
        return Err(Error::TransientNotPassed(format!(
            "t_e = {t_e} precedes power-law onset {onset}"
        )));
    }
    let snaps = &record.snapshots;
    if snaps.len() < 3 {
        return Err(Error::InsufficientData("record holds fewer than 3 snapshots".into()));
    }
    let i = (0..snaps.len())
        .min_by(|&a, &b| (snaps[a].t - t_e).abs().total_cmp(&(snaps[b].t - t_e).abs()))
        .unwrap_or(0)
        .clamp(1, snaps.len() - 2);
    let d = diagnostics(&snaps[i])?;
    let (u, l) = (d.rms_velocity, d.integral_scale);
    let r = [x * l];
    let g = |s: &SpectralState| s2_from_spectrum(s, &r)[0] / (u * u);
    let dtau = (snaps[i + 1].t - snaps[i - 1].t) * u / l;
    let b2 = 0.75 * (g(&snaps[i + 1]) - g(&snaps[i - 1])) / dtau;
    Ok(DecayCoefficient {
        t_e: snaps[i].t,
        c_eps: d.dissipation * l / u.powi(3),
        r_l: d.reynolds_l,
        b2,
        x,
    })
}
