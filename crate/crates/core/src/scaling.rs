//! Kolmogorov rescaling of spectra and a collapse metric across runs.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra::{diagnostics, SpectralState};

/// Smallest dimensionless wavenumber used by the collapse metric. Below it
/// the forced range dominates and no universality is expected.
pub const WINDOW_FLOOR: f64 = 0.05;
/// Points per decade of the shared comparison grid.
const COMPARE_PER_DECADE: f64 = 64.0;
const LOG_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaledSpectrum {
    pub k_hat: Vec<f64>,
    pub e_hat: Vec<f64>,
}

impl RescaledSpectrum {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "k_hat,E_hat")?;
        for (k, e) in self.k_hat.iter().zip(&self.e_hat) {
            writeln!(w, "{k:.16e},{e:.16e}")?;
        }
        Ok(())
    }

    /// Log-log interpolation; `None` outside the table.
    fn at(&self, k: f64) -> Option<f64> {
        let n = self.k_hat.len();
        if n < 2 || k < self.k_hat[0] * (1.0 - 1e-12) || k > self.k_hat[n - 1] * (1.0 + 1e-12) {
            return None;
        }
        let i = self.k_hat.partition_point(|v| *v <= k).clamp(1, n - 1) - 1;
        let (a, b) = (self.k_hat[i].ln(), self.k_hat[i + 1].ln());
        let f = ((k.ln() - a) / (b - a)).clamp(0.0, 1.0);
        let (ya, yb) = (self.e_hat[i].max(LOG_FLOOR).ln(), self.e_hat[i + 1].max(LOG_FLOOR).ln());
        Some(ya + f * (yb - ya))
    }
}

pub fn kolmogorov_rescale(state: &SpectralState) -> Result<RescaledSpectrum> {
    let d = diagnostics(state)?;
    kolmogorov_rescale_with(state, d.dissipation)
}

/// Rescale with an explicit dissipation rate instead of the diagnosed one.
pub fn kolmogorov_rescale_with(state: &SpectralState, eps: f64) -> Result<RescaledSpectrum> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::DegenerateSpectrum(format!("dissipation {eps}")));
    }
    let nu = state.nu;
    let kd = (eps / nu.powi(3)).powf(0.25);
    let ev = (eps * nu.powi(5)).powf(0.25);
    Ok(RescaledSpectrum {
        k_hat: state.k().iter().map(|k| k / kd).collect(),
        e_hat: state.e.iter().map(|e| e / ev).collect(),
    })
}

/// Inverse of the Kolmogorov rescale: back to `(k, E)` in physical units.
pub fn kolmogorov_unscale(table: &RescaledSpectrum, eps: f64, nu: f64) -> (Vec<f64>, Vec<f64>) {
    let kd = (eps / nu.powi(3)).powf(0.25);
    let ev = (eps * nu.powi(5)).powf(0.25);
    (
        table.k_hat.iter().map(|k| k * kd).collect(),
        table.e_hat.iter().map(|e| e * ev).collect(),
    )
}

/// Kolmogorov rescale compensated by `(k L_ext)^mu`, the inverse of an
/// intermittency-corrected inertial form `E ∝ ε^{2/3} k^{-5/3} (kL)^{-mu}`.
pub fn k62_rescale(state: &SpectralState, mu: f64, l_ext: f64) -> Result<RescaledSpectrum> {
    if !(mu >= 0.0) || !(l_ext > 0.0) {
        return Err(Error::InvalidState(format!("mu = {mu}, L_ext = {l_ext}")));
    }
    let mut t = kolmogorov_rescale(state)?;
    if mu > 0.0 {
        for (e, k) in t.e_hat.iter_mut().zip(state.k()) {
            *e *= (k * l_ext).powf(mu);
        }
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode")]
pub enum CollapseMode {
    K41,
    /// `l_ext` holds one external scale per run.
    K62 { mu: f64, l_ext: Vec<f64> },
}

/// Box scale `2π/k_min` of a state, the default external length.
pub fn box_scale(state: &SpectralState) -> f64 {
    2.0 * std::f64::consts::PI / state.grid.k_min()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDistance {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    pub labels: Vec<String>,
    pub window: (f64, f64),
    pub pairs: Vec<PairDistance>,
    pub collapse_error: f64,
    pub mode: CollapseMode,
    /// Window narrower than half a decade; the error is not meaningful.
    pub void: bool,
}

/// Rescales each state according to `mode` and measures the collapse.
pub fn collapse_error(
    states: &[&SpectralState],
    labels: &[String],
    mode: &CollapseMode,
) -> Result<CollapseReport> {
    let tables = match mode {
        CollapseMode::K41 => states.iter().map(|s| kolmogorov_rescale(s)).collect::<Result<Vec<_>>>()?,
        CollapseMode::K62 { mu, l_ext } => {
            if l_ext.len() != states.len() {
                return Err(Error::LengthMismatch {
                    expected: states.len(),
                    got: l_ext.len(),
                });
            }
            states
                .iter()
                .zip(l_ext)
                .map(|(s, l)| k62_rescale(s, *mu, *l))
                .collect::<Result<Vec<_>>>()?
        }
    };
    collapse_tables(&tables, labels, mode.clone())
}

/// Max over pairs of the RMS difference of `ln Ê` on a shared log grid
/// spanning the common window above [`WINDOW_FLOOR`].
pub fn collapse_tables(
    tables: &[RescaledSpectrum],
    labels: &[String],
    mode: CollapseMode,
) -> Result<CollapseReport> {
    if tables.len() < 2 {
        return Err(Error::InsufficientData("collapse needs at least 2 spectra".into()));
    }
    if labels.len() != tables.len() {
        return Err(Error::LengthMismatch {
            expected: tables.len(),
            got: labels.len(),
        });
    }
    let lo = tables
        .iter()
        .filter_map(|t| t.k_hat.first().copied())
        .fold(WINDOW_FLOOR, f64::max);
    let hi = tables
        .iter()
        .map(|t| t.k_hat.last().copied().unwrap_or(0.0))
        .fold(f64::INFINITY, f64::min);
    if !(hi > lo) {
        return Err(Error::EmptyWindow);
    }
    let decades = (hi / lo).log10();
    let m = ((decades * COMPARE_PER_DECADE).ceil() as usize).max(2);
    let grid: Vec<f64> = (0..m)
        .map(|i| lo * (hi / lo).powf(i as f64 / (m - 1) as f64))
        .collect();
    let logs: Vec<Vec<f64>> = tables
        .iter()
        .map(|t| grid.iter().map(|&k| t.at(k).ok_or(Error::EmptyWindow)).collect())
        .collect::<Result<_>>()?;
    let index: Vec<(usize, usize)> = (0..tables.len())
        .flat_map(|a| (a + 1..tables.len()).map(move |b| (a, b)))
        .collect();
    let pairs: Vec<PairDistance> = index
        .par_iter()
        .map(|&(a, b)| {
            let ss: f64 = logs[a].iter().zip(&logs[b]).map(|(x, y)| (x - y) * (x - y)).sum();
            PairDistance {
                a,
                b,
                distance: (ss / m as f64).sqrt(),
            }
        })
        .collect();
    let collapse_error = pairs.iter().map(|p| p.distance).fold(0.0, f64::max);
    Ok(CollapseReport {
        labels: labels.to_vec(),
        window: (lo, hi),
        pairs,
        collapse_error,
        mode,
        void: decades < 0.5,
    })
}
