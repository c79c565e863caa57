//! Structure functions from spectra and the Kármán-Howarth balance.
//!
//! ```text
//! S₂(r) = 4 ∫ E(k) [1/3 − j₁(kr)/(kr)] dk
//! S₃(r) = 12 r ∫ T(k) j₂(kr)/(kr)² dk
//! ```
//!
//! `S₂ → (4/3) E_tot = 2U²` at large `r` and `S₂ → ε r²/(15ν)` at small `r`.
//! The `S₃` kernel satisfies `(1/6r⁴) d(r⁴S₃)/dr = 2 ∫ T j₁(kr)/(kr) dk`,
//! which with a constant flux `ε` gives `S₃ = −(4/5) ε r`.

use std::io::Write;

use serde::Serialize;

use crate::closure::TransferResult;
use crate::error::{Error, Result};
use crate::grid::WavenumberGrid;
use crate::spectra::{dissipation_spectrum, ScalarDiagnostics, SpectralState};

pub const R_NODES_PER_DECADE: f64 = 48.0;

/// `j₁(x)/x = (sin x − x cos x)/x³`.
pub fn j1_over_x(x: f64) -> f64 {
    if x.abs() < 0.5 {
        // Σ (−1)ⁿ (2n+2) x²ⁿ / (2n+3)!
        let x2 = x * x;
        let mut term = 1.0 / 3.0;
        let mut sum = term;
        let mut n = 0.0;
        loop {
            n += 1.0;
            term *= -x2 / ((2.0 * n) * (2.0 * n + 3.0));
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                return sum;
            }
        }
    }
    (x.sin() - x * x.cos()) / (x * x * x)
}

/// `1/3 − j₁(x)/x`, evaluated without cancellation at small `x`.
pub fn s2_kernel(x: f64) -> f64 {
    if x.abs() < 0.5 {
        // x²/30 − x⁴/840 + …
        let x2 = x * x;
        let mut term = x2 / 30.0;
        let mut sum = term;
        let mut n = 1.0;
        loop {
            n += 1.0;
            term *= -x2 / ((2.0 * n) * (2.0 * n + 3.0));
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                return sum;
            }
        }
    }
    1.0 / 3.0 - j1_over_x(x)
}

/// `j₂(x)/x²`.
pub fn j2_over_x2(x: f64) -> f64 {
    if x.abs() < 0.5 {
        // Σ (−1)ⁿ x²ⁿ / (2ⁿ n! (2n+5)!!)
        let x2 = x * x;
        let mut term = 1.0 / 15.0;
        let mut sum = term;
        let mut n = 0.0;
        loop {
            n += 1.0;
            term *= -x2 / (2.0 * n * (2.0 * n + 5.0));
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                return sum;
            }
        }
    }
    let (s, c) = x.sin_cos();
    ((3.0 / (x * x) - 1.0) * s / x - 3.0 * c / (x * x)) / (x * x)
}

/// Geometric `r` nodes at 48 per decade over `[0.02/k_max, 20/k_min]`.
pub fn r_nodes(grid: &WavenumberGrid) -> Vec<f64> {
    let lo = 0.02 / grid.k_max();
    let hi = 20.0 / grid.k_min();
    let n = ((hi / lo).log10() * R_NODES_PER_DECADE).round() as usize + 1;
    let h = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(|i| lo * (h * i as f64).exp()).collect()
}

/// True where `r` lies outside the band `[1/k_max, 1/k_min]`.
pub fn aliasing_flags(grid: &WavenumberGrid, r: &[f64]) -> Vec<bool> {
    r.iter()
        .map(|r| *r < 1.0 / grid.k_max() || *r > 1.0 / grid.k_min())
        .collect()
}

fn transform(grid: &WavenumberGrid, f: &[f64], r: &[f64], kernel: impl Fn(f64) -> f64) -> Vec<f64> {
    let k = grid.nodes();
    let w = grid.weights();
    r.iter()
        .map(|&r| (0..k.len()).map(|i| w[i] * f[i] * kernel(k[i] * r)).sum())
        .collect()
}

pub fn s2_from_spectrum(state: &SpectralState, r: &[f64]) -> Vec<f64> {
    transform(&state.grid, &state.e, r, s2_kernel)
        .into_iter()
        .map(|v| 4.0 * v)
        .collect()
}

pub fn s3_from_transfer(tr: &TransferResult, r: &[f64]) -> Vec<f64> {
    transform(&tr.grid, &tr.t, r, j2_over_x2)
        .into_iter()
        .zip(r)
        .map(|(v, r)| 12.0 * r * v)
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct StructureFunctions {
    pub r: Vec<f64>,
    pub s2: Vec<f64>,
    pub s3: Vec<f64>,
    pub ds2_dt: Option<Vec<f64>>,
    pub aliased: Vec<bool>,
}

impl StructureFunctions {
    pub fn new(state: &SpectralState, tr: &TransferResult, r: &[f64]) -> Self {
        Self {
            r: r.to_vec(),
            s2: s2_from_spectrum(state, r),
            s3: s3_from_transfer(tr, r),
            ds2_dt: None,
            aliased: aliasing_flags(&state.grid, r),
        }
    }

    /// Writes CSV `r,S2,S3,x,f2,f3` normalized by the given diagnostics.
    pub fn write_csv<W: Write>(&self, mut w: W, reference: &ScalarDiagnostics) -> std::io::Result<()> {
        writeln!(w, "r,S2,S3,x,f2,f3")?;
        let u = reference.rms_velocity;
        for i in 0..self.r.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.r[i],
                self.s2[i],
                self.s3[i],
                self.r[i] / reference.integral_scale,
                self.s2[i] / (u * u),
                self.s3[i] / (u * u * u)
            )?;
        }
        Ok(())
    }
}

/// Dimensionless `f_n(x) = S_n(r)/Uⁿ` with `x = r/L`, scaled by the
/// diagnostics of the reference state.
pub fn dimensionless_structure(
    sf: &StructureFunctions,
    order: u32,
    reference: &ScalarDiagnostics,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (u, l) = (reference.rms_velocity, reference.integral_scale);
    if !(u > 0.0 && l > 0.0 && u.is_finite() && l.is_finite()) {
        return Err(Error::DegenerateSpectrum("reference U or L not positive".into()));
    }
    let values = match order {
        2 => &sf.s2,
        3 => &sf.s3,
        _ => {
            return Err(Error::InvalidState(format!("structure function order {order}")));
        }
    };
    let x = sf.r.iter().map(|r| r / l).collect();
    let f = values.iter().map(|v| v / u.powi(order as i32)).collect();
    Ok((x, f))
}

/// First and second derivatives in `ln r` on a uniform log grid.
fn log_derivatives(f: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
    let n = f.len();
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    for i in 1..n - 1 {
        d1[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);
        d2[i] = (f[i + 1] - 2.0 * f[i] + f[i - 1]) / (h * h);
    }
    d1[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
    d1[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
    d2[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / (h * h);
    d2[n - 1] = (2.0 * f[n - 1] - 5.0 * f[n - 2] + 4.0 * f[n - 3] - f[n - 4]) / (h * h);
    (d1, d2)
}

/// `(1/6r⁴) d(r⁴S₃)/dr`.
pub fn s3_divergence(r: &[f64], s3: &[f64]) -> Vec<f64> {
    let h = (r[1] / r[0]).ln();
    let (d1, _) = log_derivatives(s3, h);
    (0..r.len()).map(|i| (4.0 * s3[i] + d1[i]) / (6.0 * r[i])).collect()
}

/// `(ν/r⁴) d(r⁴ dS₂/dr)/dr`.
pub fn viscous_term(r: &[f64], s2: &[f64], nu: f64) -> Vec<f64> {
    let h = (r[1] / r[0]).ln();
    let (d1, d2) = log_derivatives(s2, h);
    (0..r.len()).map(|i| nu * (d2[i] + 3.0 * d1[i]) / (r[i] * r[i])).collect()
}

/// Two consecutive states of a run with their transfer evaluations.
pub struct KheInputs<'a> {
    pub earlier: &'a SpectralState,
    pub later: &'a SpectralState,
    pub transfer_earlier: &'a TransferResult,
    pub transfer_later: &'a TransferResult,
    /// Energy input rate `ε_W` (zero in free decay).
    pub injection_rate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct KheResidualReport {
    pub r: Vec<f64>,
    pub term_e: Vec<f64>,
    pub term_ds2dt: Vec<f64>,
    pub term_s3: Vec<f64>,
    pub term_visc: Vec<f64>,
    pub residual: Vec<f64>,
    pub aliased: Vec<bool>,
}

impl KheResidualReport {
    /// Largest `|residual|` over `[lo, hi]` relative to the largest term there.
    pub fn norm_over(&self, lo: f64, hi: f64) -> f64 {
        let mut res = 0.0f64;
        let mut big = 0.0f64;
        for i in (0..self.r.len()).filter(|&i| self.r[i] >= lo && self.r[i] <= hi) {
            res = res.max(self.residual[i].abs());
            for t in [self.term_e[i], self.term_ds2dt[i], self.term_s3[i], self.term_visc[i]] {
                big = big.max(t.abs());
            }
        }
        if big > 0.0 {
            res / big
        } else {
            res
        }
    }

    /// Residual norm over the unaliased band.
    pub fn norm(&self) -> f64 {
        let inside: Vec<f64> = (0..self.r.len())
            .filter(|&i| !self.aliased[i])
            .map(|i| self.r[i])
            .collect();
        match (inside.first(), inside.last()) {
            (Some(lo), Some(hi)) => self.norm_over(*lo, *hi),
            _ => f64::NAN,
        }
    }

    /// Writes CSV `r,term_E,term_dS2dt,term_S3,term_visc,residual`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "r,term_E,term_dS2dt,term_S3,term_visc,residual")?;
        for i in 0..self.r.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.r[i], self.term_e[i], self.term_ds2dt[i], self.term_s3[i], self.term_visc[i], self.residual[i]
            )?;
        }
        Ok(())
    }
}

/// Term-by-term balance
/// `0 = −(2/3)(dE_tot/dt − ε_W) + (1/2) ∂S₂/∂t + (1/6r⁴)∂(r⁴S₃)/∂r − (ν/r⁴)∂(r⁴∂S₂/∂r)/∂r`.
///
/// Time derivatives are differences across the step; the other terms are
/// averaged over its ends. With input the exact residual is `2∫F K₂(kr) dk`,
/// negligible well below the forcing scale.
pub fn khe_residual(inputs: &KheInputs<'_>, r: &[f64]) -> Result<KheResidualReport> {
    let (a, b) = (inputs.earlier, inputs.later);
    let dt = b.t - a.t;
    if !(dt > 0.0) {
        return Err(Error::InvalidState(format!("states not ordered in time (dt = {dt})")));
    }
    if r.len() < 4 {
        return Err(Error::InvalidState("need at least 4 r nodes".into()));
    }
    let grid = &a.grid;
    let ea = grid.sum_weighted(&a.e);
    let eb = grid.sum_weighted(&b.e);
    let s2a = s2_from_spectrum(a, r);
    let s2b = s2_from_spectrum(b, r);
    let s3a = s3_from_transfer(inputs.transfer_earlier, r);
    let s3b = s3_from_transfer(inputs.transfer_later, r);
    let div_a = s3_divergence(r, &s3a);
    let div_b = s3_divergence(r, &s3b);
    let visc_a = viscous_term(r, &s2a, a.nu);
    let visc_b = viscous_term(r, &s2b, b.nu);

    let e_rate = (eb - ea) / dt - inputs.injection_rate;
    let n = r.len();
    let mut rep = KheResidualReport {
        r: r.to_vec(),
        term_e: vec![-2.0 / 3.0 * e_rate; n],
        term_ds2dt: (0..n).map(|i| 0.5 * (s2b[i] - s2a[i]) / dt).collect(),
        term_s3: (0..n).map(|i| 0.5 * (div_a[i] + div_b[i])).collect(),
        term_visc: (0..n).map(|i| -0.5 * (visc_a[i] + visc_b[i])).collect(),
        residual: vec![0.0; n],
        aliased: aliasing_flags(grid, r),
    };
    for i in 0..n {
        rep.residual[i] = rep.term_e[i] + rep.term_ds2dt[i] + rep.term_s3[i] + rep.term_visc[i];
    }

    // Differencing error: half the change of the exact rates across the step.
    let rate = |s: &SpectralState, tr: &TransferResult| {
        let d = dissipation_spectrum(s);
        let v: Vec<f64> = (0..d.len()).map(|i| tr.t[i] - d[i]).collect();
        v
    };
    let ra = rate(a, inputs.transfer_earlier);
    let rb = rate(b, inputs.transfer_later);
    let dr: Vec<f64> = ra.iter().zip(&rb).map(|(x, y)| y - x).collect();
    let err_e = (2.0 / 3.0) * 0.5 * grid.sum_weighted(&dr).abs();
    let err_s2 = transform(grid, &dr, r, s2_kernel)
        .iter()
        .fold(0.0f64, |m, v| m.max(4.0 * 0.5 * 0.5 * v.abs()));
    let peaks: Vec<f64> = [&rep.term_e, &rep.term_ds2dt, &rep.term_s3, &rep.term_visc]
        .iter()
        .map(|t| t.iter().fold(0.0f64, |m, v| m.max(v.abs())))
        .collect();
    let largest = peaks.iter().cloned().fold(0.0, f64::max);
    let smallest = peaks
        .iter()
        .cloned()
        .filter(|p| *p >= 0.01 * largest)
        .fold(f64::INFINITY, f64::min);
    if err_e + err_s2 > 0.1 * smallest {
        return Err(Error::DtTooLarge(format!(
            "estimated differencing error {:.3e} vs smallest term {smallest:.3e}",
            err_e + err_s2
        )));
    }
    Ok(rep)
}
