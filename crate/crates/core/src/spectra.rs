//! Spectral state, model initial spectra and single-time diagnostics.
//!
//! Isotropic conventions: `U² = (2/3) E_tot`, `L = (3π/4) ∫k⁻¹E dk / E_tot`,
//! `R_L = U L / ν`, `R_λ = U² √(15/(ν ε))`, `k_d = (ε/ν³)^{1/4}`.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::WavenumberGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralState {
    pub t: f64,
    pub nu: f64,
    pub e: Vec<f64>,
    pub grid: Arc<WavenumberGrid>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarDiagnostics {
    pub total_energy: f64,
    pub dissipation: f64,
    pub rms_velocity: f64,
    pub integral_scale: f64,
    pub reynolds_l: f64,
    pub taylor_reynolds: f64,
    pub kolmogorov_wavenumber: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumFamily {
    /// `k⁴ exp(−2 (k/k_p)²)`.
    #[default]
    K4,
    /// `k² exp(−(k/k_p)²)`, for contrast runs only.
    K2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialShape {
    pub peak_wavenumber: f64,
    pub total_energy: f64,
    #[serde(default)]
    pub family: SpectrumFamily,
}

impl SpectralState {
    pub fn new(grid: Arc<WavenumberGrid>, e: Vec<f64>, nu: f64, t: f64) -> Result<Self> {
        if e.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: e.len(),
            });
        }
        if let Some(i) = e.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidState(format!("E[{i}] = {}", e[i])));
        }
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::InvalidState(format!("nu = {nu}")));
        }
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::InvalidState(format!("t = {t}")));
        }
        Ok(Self { t, nu, e, grid })
    }

    pub fn k(&self) -> &[f64] {
        self.grid.nodes()
    }

    pub fn with_nu(&self, nu: f64) -> Result<Self> {
        Self::new(self.grid.clone(), self.e.clone(), nu, self.t)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let e = self.e.iter().map(|v| v * factor).collect();
        Self::new(self.grid.clone(), e, self.nu, self.t)
    }

    /// Writes the snapshot as CSV `k,E,nu,t`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "k,E,nu,t")?;
        for (k, e) in self.k().iter().zip(&self.e) {
            writeln!(w, "{k:.16e},{e:.16e},{:.16e},{:.16e}", self.nu, self.t)?;
        }
        Ok(())
    }

    /// Reads a snapshot written by [`SpectralState::write_csv`], rebuilding
    /// the geometric grid from its end points and node count.
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
                .map_err(|e| Error::InvalidState(format!("spectrum line {}: {e}", n + 1)))?;
            if v.len() != 4 {
                return Err(Error::InvalidState(format!("spectrum line {}: {} fields", n + 1, v.len())));
            }
            rows.push(v);
        }
        if rows.len() < 2 {
            return Err(Error::InvalidState("spectrum needs at least 2 rows".into()));
        }
        let n = rows.len();
        let grid = WavenumberGrid::new(rows[0][0], rows[n - 1][0], n)?;
        for (node, row) in grid.nodes().iter().zip(&rows) {
            if (node - row[0]).abs() > 1e-10 * node {
                return Err(Error::InvalidState(format!("k = {} is off the geometric grid", row[0])));
            }
        }
        let e = rows.iter().map(|r| r[1]).collect();
        Self::new(Arc::new(grid), e, rows[0][2], rows[0][3])
    }
}

pub fn initial_spectrum(
    grid: Arc<WavenumberGrid>,
    shape: &InitialShape,
    nu: f64,
) -> Result<SpectralState> {
    let kp = shape.peak_wavenumber;
    if !(kp >= grid.k_min() && kp <= grid.k_max()) {
        return Err(Error::OutOfRange {
            what: "peak_wavenumber",
            value: kp,
            lo: grid.k_min(),
            hi: grid.k_max(),
        });
    }
    if !(shape.total_energy > 0.0 && shape.total_energy.is_finite()) {
        return Err(Error::InvalidState(format!(
            "total_energy = {}",
            shape.total_energy
        )));
    }
    let raw: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&k| {
            let x = k / kp;
            match shape.family {
                SpectrumFamily::K4 => x.powi(4) * (-2.0 * x * x).exp(),
                SpectrumFamily::K2 => x * x * (-x * x).exp(),
            }
        })
        .collect();
    let norm = shape.total_energy / grid.integrate(&raw)?;
    let e = raw.into_iter().map(|v| v * norm).collect();
    SpectralState::new(grid, e, nu, 0.0)
}

pub fn total_energy(state: &SpectralState) -> f64 {
    state.grid.sum_weighted(&state.e)
}

pub fn dissipation_rate(state: &SpectralState) -> f64 {
    let d: Vec<f64> = dissipation_spectrum(state);
    state.grid.sum_weighted(&d)
}

/// `D(k) = 2 ν k² E(k)`.
pub fn dissipation_spectrum(state: &SpectralState) -> Vec<f64> {
    state
        .k()
        .iter()
        .zip(&state.e)
        .map(|(k, e)| 2.0 * state.nu * k * k * e)
        .collect()
}

pub fn diagnostics(state: &SpectralState) -> Result<ScalarDiagnostics> {
    let e_tot = total_energy(state);
    if !(e_tot > 0.0) {
        return Err(Error::DegenerateSpectrum("zero total energy".into()));
    }
    let eps = dissipation_rate(state);
    let inv: Vec<f64> = state.k().iter().zip(&state.e).map(|(k, e)| e / k).collect();
    let u = (2.0 * e_tot / 3.0).sqrt();
    let l = 0.75 * PI * state.grid.sum_weighted(&inv) / e_tot;
    Ok(ScalarDiagnostics {
        total_energy: e_tot,
        dissipation: eps,
        rms_velocity: u,
        integral_scale: l,
        reynolds_l: u * l / state.nu,
        taylor_reynolds: u * u * (15.0 / (state.nu * eps)).sqrt(),
        kolmogorov_wavenumber: (eps / state.nu.powi(3)).powf(0.25),
    })
}

/// `C(k) = E(k) / (4π k²)`.
pub fn spectral_density(state: &SpectralState) -> Vec<f64> {
    state
        .k()
        .iter()
        .zip(&state.e)
        .map(|(k, e)| e / (4.0 * PI * k * k))
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (a, b) in lx.iter().zip(&ly) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    sxy / sxx
}
