//! Band-elimination renormalization of the viscosity.
//!
//! Shells `[h k_n, k_n]` of a model inertial spectrum are removed one at a
//! time and their effect is folded into an eddy-viscosity increment. In the
//! scaled variable `ν̃ = ν ε^{-1/3} k^{4/3}` the recursion has a fixed point,
//! and the Kolmogorov prefactor follows from requiring the fixed-point
//! viscosity to drain `ε` at the cutoff.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::WavenumberGrid;
use crate::spectra::{dissipation_spectrum, SpectralState};

/// `R(k) = E(k)^{1/2} / (ν₀ k^{1/2})`, with `E` interpolated on the grid.
pub fn local_reynolds(state: &SpectralState, k: f64) -> Result<f64> {
    let g = &state.grid;
    let tol = 1e-12 * g.k_max();
    if !(k >= g.k_min() - tol && k <= g.k_max() + tol) {
        return Err(Error::OutOfRange {
            what: "k",
            value: k,
            lo: g.k_min(),
            hi: g.k_max(),
        });
    }
    let e = g.interpolate(&state.e, k.clamp(g.k_min(), g.k_max())).max(0.0);
    Ok(e.sqrt() / (state.nu * k.sqrt()))
}

/// Smallest node whose truncated dissipation integral reaches `capture` of
/// the total.
pub fn effective_cutoff(state: &SpectralState, capture: f64) -> Result<f64> {
    if !(capture > 0.0 && capture <= 1.0) {
        return Err(Error::NotCaptured { fraction: capture });
    }
    let g = &state.grid;
    if capture >= 1.0 {
        return Ok(g.k_max());
    }
    let cum = g.cumulative(&dissipation_spectrum(state));
    let total = *cum.last().unwrap_or(&0.0);
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::DegenerateSpectrum("no finite dissipation".into()));
    }
    cum.iter()
        .position(|c| *c >= capture * total)
        .map(|i| g.nodes()[i])
        .ok_or(Error::NotCaptured { fraction: capture })
}

pub trait SpectrumModel: Sync {
    fn energy(&self, k: f64) -> f64;
    fn slope(&self, k: f64) -> f64;
}

/// Inertial form `α ε^{2/3} k^{-5/3}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kolmogorov {
    pub alpha: f64,
    pub eps: f64,
}

impl SpectrumModel for Kolmogorov {
    fn energy(&self, k: f64) -> f64 {
        self.alpha * self.eps.powf(2.0 / 3.0) * k.powf(-5.0 / 3.0)
    }
    fn slope(&self, k: f64) -> f64 {
        -5.0 / 3.0 * self.energy(k) / k
    }
}

/// Inertial form with the exponential dissipation cutoff
/// `exp(-(3/2) α (k/k_d)^{4/3})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pao {
    pub alpha: f64,
    pub eps: f64,
    pub nu: f64,
}

impl Pao {
    pub fn kd(&self) -> f64 {
        (self.eps / self.nu.powi(3)).powf(0.25)
    }

    /// The model sampled on `[k_lo, k_hi]` at `per_decade` nodes.
    pub fn state(&self, k_lo: f64, k_hi: f64, per_decade: f64) -> Result<SpectralState> {
        let g = Arc::new(WavenumberGrid::with_density(k_lo, k_hi, per_decade)?);
        let e = g.nodes().iter().map(|k| self.energy(*k)).collect();
        SpectralState::new(g, e, self.nu, 0.0)
    }
}

impl SpectrumModel for Pao {
    fn energy(&self, k: f64) -> f64 {
        Kolmogorov {
            alpha: self.alpha,
            eps: self.eps,
        }
        .energy(k)
            * (-1.5 * self.alpha * (k / self.kd()).powf(4.0 / 3.0)).exp()
    }
    fn slope(&self, k: f64) -> f64 {
        let x = (k / self.kd()).powf(4.0 / 3.0);
        self.energy(k) / k * (-5.0 / 3.0 - 2.0 * self.alpha * x)
    }
}

/// Viscosity increment from eliminating the band `[lo, hi]` at viscosity `nu`.
pub trait IncrementKernel: Sync {
    fn increment(&self, lo: f64, hi: f64, model: &dyn SpectrumModel, nu: f64) -> f64;
}

/// Lowest-order eddy viscosity of the eliminated band on the retained large
/// scales: `δν = A ∫ [5E(j) + j E'(j)] / (ν j²) dj`. `A = 1/30` is the
/// small-`k/j` limit of the quasi-normal triad sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EddyViscosityKernel {
    pub amplitude: f64,
}

impl Default for EddyViscosityKernel {
    fn default() -> Self {
        Self {
            amplitude: 1.0 / 30.0,
        }
    }
}

const BAND_INTERVALS: usize = 64;

impl IncrementKernel for EddyViscosityKernel {
    fn increment(&self, lo: f64, hi: f64, model: &dyn SpectrumModel, nu: f64) -> f64 {
        if !(hi > lo) {
            return 0.0;
        }
        // Simpson in ln j
        let (a, b) = (lo.ln(), hi.ln());
        let h = (b - a) / BAND_INTERVALS as f64;
        let f = |s: f64| {
            let j = s.exp();
            (5.0 * model.energy(j) + j * model.slope(j)) / (nu * j)
        };
        let mut sum = f(a) + f(b);
        for i in 1..BAND_INTERVALS {
            sum += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        self.amplitude * sum * h / 3.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RgConfig {
    /// Rescaling factor; give this or `eta`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    /// Bandwidth `1 - h`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    pub nu0: f64,
    #[serde(default = "unit")]
    pub eps: f64,
    /// Starting cutoff; defaults to the effective cutoff of the model
    /// spectrum at `nu0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k0: Option<f64>,
    #[serde(default = "alpha_guess")]
    pub alpha_guess: f64,
    #[serde(default = "tolerance")]
    pub tolerance: f64,
    #[serde(default = "max_iterations")]
    pub max_iterations: usize,
    /// Iterations kept past convergence so the trace shows the scaling.
    #[serde(default = "min_iterations")]
    pub min_iterations: usize,
    #[serde(default = "capture")]
    pub capture: f64,
    #[serde(default)]
    pub kernel: EddyViscosityKernel,
}

fn unit() -> f64 {
    1.0
}
fn alpha_guess() -> f64 {
    1.5
}
fn tolerance() -> f64 {
    1e-8
}
fn max_iterations() -> usize {
    500
}
fn min_iterations() -> usize {
    20
}
fn capture() -> f64 {
    0.999
}

impl RgConfig {
    pub fn new(h: f64, nu0: f64) -> Self {
        Self {
            h: Some(h),
            eta: None,
            nu0,
            eps: 1.0,
            k0: None,
            alpha_guess: alpha_guess(),
            tolerance: tolerance(),
            max_iterations: max_iterations(),
            min_iterations: min_iterations(),
            capture: capture(),
            kernel: EddyViscosityKernel::default(),
        }
    }

    pub fn h(&self) -> Result<f64> {
        let h = match (self.h, self.eta) {
            (Some(h), None) => h,
            (None, Some(eta)) => 1.0 - eta,
            _ => return Err(Error::InvalidState("set exactly one of h, eta".into())),
        };
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::OutOfRange {
                what: "h",
                value: h,
                lo: 0.0,
                hi: 1.0,
            });
        }
        Ok(h)
    }

    fn validate(&self) -> Result<f64> {
        let h = self.h()?;
        if [self.nu0, self.eps, self.alpha_guess, self.tolerance]
            .iter()
            .any(|v| !(*v > 0.0 && v.is_finite()))
            || self.k0.is_some_and(|k| !(k > 0.0))
        {
            return Err(Error::InvalidState("RG parameters must be positive".into()));
        }
        Ok(h)
    }

    /// Cutoff of the model spectrum carrying `capture` of the dissipation.
    pub fn start_cutoff(&self, alpha: f64) -> Result<f64> {
        if let Some(k) = self.k0 {
            return Ok(k);
        }
        let pao = Pao {
            alpha,
            eps: self.eps,
            nu: self.nu0,
        };
        let kd = pao.kd();
        effective_cutoff(&pao.state(1e-3 * kd, 10.0 * kd, 64.0)?, self.capture)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RgState {
    pub n: usize,
    pub k_n: f64,
    pub nu_n: f64,
    /// `(k_n, ν_n)` for every iteration including the start.
    pub history: Vec<(f64, f64)>,
    pub fixed_point: bool,
}

impl RgState {
    pub fn start(k0: f64, nu0: f64) -> Self {
        Self {
            n: 0,
            k_n: k0,
            nu_n: nu0,
            history: vec![(k0, nu0)],
            fixed_point: false,
        }
    }

    pub fn nu_tilde(&self, eps: f64) -> f64 {
        scaled(self.nu_n, self.k_n, eps)
    }

    /// CSV `n,k_n,nu_n,nu_tilde`.
    pub fn write_csv<W: Write>(&self, eps: f64, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n,k_n,nu_n,nu_tilde")?;
        for (n, (k, nu)) in self.history.iter().enumerate() {
            writeln!(w, "{n},{k:.16e},{nu:.16e},{:.16e}", scaled(*nu, *k, eps))?;
        }
        Ok(())
    }

    /// Least-squares slope of `ln ν_n` against `ln k_n` over the last `m`
    /// entries.
    pub fn scaling_slope(&self, m: usize) -> Option<f64> {
        let tail = &self.history[self.history.len().saturating_sub(m)..];
        if tail.len() < 2 {
            return None;
        }
        let pts: Vec<(f64, f64)> = tail.iter().map(|(k, nu)| (k.ln(), nu.ln())).collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    }
}

fn scaled(nu: f64, k: f64, eps: f64) -> f64 {
    nu * eps.powf(-1.0 / 3.0) * k.powf(4.0 / 3.0)
}

/// One elimination step with an explicit kernel.
pub fn eliminate_band_with(
    state: &RgState,
    h: f64,
    kernel: &dyn IncrementKernel,
    model: &dyn SpectrumModel,
) -> Result<RgState> {
    if !(state.k_n > 0.0 && state.k_n.is_finite()) {
        return Err(Error::InvalidState(format!("cutoff {}", state.k_n)));
    }
    let lo = h * state.k_n;
    let dnu = kernel.increment(lo, state.k_n, model, state.nu_n);
    if !dnu.is_finite() {
        return Err(Error::KernelDivergence(state.n));
    }
    let mut next = state.clone();
    next.n += 1;
    next.k_n = lo;
    next.nu_n = state.nu_n + dnu;
    next.history.push((next.k_n, next.nu_n));
    Ok(next)
}

pub fn eliminate_band(state: &RgState, config: &RgConfig, model: &dyn SpectrumModel) -> Result<RgState> {
    eliminate_band_with(state, config.h()?, &config.kernel, model)
}

/// Runs the recursion at fixed `α` until `ν̃` settles.
pub fn recurse(config: &RgConfig, alpha: f64) -> Result<RgState> {
    let h = config.validate()?;
    let model = Kolmogorov {
        alpha,
        eps: config.eps,
    };
    let mut state = RgState::start(config.start_cutoff(alpha)?, config.nu0);
    let mut settled = false;
    while state.n < config.max_iterations {
        let prev = state.nu_tilde(config.eps);
        state = eliminate_band_with(&state, h, &config.kernel, &model)?;
        let now = state.nu_tilde(config.eps);
        settled = settled || (now - prev).abs() < config.tolerance * prev;
        if settled && state.n >= config.min_iterations {
            state.fixed_point = true;
            return Ok(state);
        }
    }
    Err(Error::NoConvergence(state.n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RgReport {
    pub h: f64,
    pub eta: f64,
    pub nu0: f64,
    pub k0: f64,
    pub nu_tilde_star: f64,
    /// Prefactor for which `ε = 2 ν(k) ∫_0^k j² E dj` at the fixed point,
    /// i.e. `α = 2/(3 ν̃*)`.
    pub alpha: f64,
    pub iterations: usize,
    pub outer_iterations: usize,
    pub slope: f64,
}

/// Alternates the recursion with the `α` update until both settle.
pub fn iterate_to_fixed_point(config: &RgConfig) -> Result<(RgState, RgReport)> {
    let h = config.validate()?;
    let mut alpha = config.alpha_guess;
    for outer in 1..=config.max_iterations {
        let state = recurse(config, alpha)?;
        let nu_star = state.nu_tilde(config.eps);
        let next = 2.0 / (3.0 * nu_star);
        let done = (next - alpha).abs() < config.tolerance * alpha;
        alpha = next;
        if done {
            let report = RgReport {
                h,
                eta: 1.0 - h,
                nu0: config.nu0,
                k0: state.history[0].0,
                nu_tilde_star: nu_star,
                alpha,
                iterations: state.n,
                outer_iterations: outer,
                slope: state.scaling_slope(10).unwrap_or(f64::NAN),
            };
            return Ok((state, report));
        }
    }
    Err(Error::NoConvergence(config.max_iterations))
}

/// One fixed-point search per rescaling factor, in input order.
pub fn bandwidth_sweep(base: &RgConfig, hs: &[f64]) -> Result<Vec<RgReport>> {
    hs.par_iter()
        .map(|&h| {
            let cfg = RgConfig {
                h: Some(h),
                eta: None,
                ..base.clone()
            };
            iterate_to_fixed_point(&cfg).map(|(_, r)| r)
        })
        .collect()
}

/// CSV `h,eta,nu_tilde_star,alpha,iterations`.
pub fn write_sweep_csv<W: Write>(reports: &[RgReport], mut w: W) -> std::io::Result<()> {
    writeln!(w, "h,eta,nu_tilde_star,alpha,iterations")?;
    for r in reports {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{}",
            r.h, r.eta, r.nu_tilde_star, r.alpha, r.iterations
        )?;
    }
    Ok(())
}
