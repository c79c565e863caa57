//! Kinematic Monte Carlo for single-point frequency spectra.
//!
//! A probe signal is a sum of random-phase cosines whose amplitudes follow a
//! model `E(k) = C_K ε^{2/3} k^{-5/3}`. Two decorrelation models set how the
//! phases advance: a Kolmogorov-time oscillator with an Ornstein-Uhlenbeck
//! perturbed rate, or a frozen pattern swept past the probe at a random
//! velocity.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decorrelation {
    Kolmogorov,
    Sweeping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticEnsemble {
    pub decorrelation: Decorrelation,
    pub k_min: f64,
    pub k_max: f64,
    pub n_modes: usize,
    #[serde(default = "default_c_k")]
    pub c_k: f64,
    #[serde(default = "one")]
    pub eps: f64,
    /// `τ_m = c_tau ε^{-1/3} k_m^{-2/3}`.
    #[serde(default = "one")]
    pub c_tau: f64,
    /// Rms of the rate perturbation in units of the mean rate `1/τ_m`.
    #[serde(default = "one")]
    pub rate_noise: f64,
    #[serde(default = "one")]
    pub sweep_velocity: f64,
    /// Draw the sweep velocity per realization; if false it is fixed at
    /// `sweep_velocity`.
    #[serde(default = "yes")]
    pub random_sweep: bool,
    #[serde(default)]
    pub seed: u64,
    pub n_realizations: usize,
    pub sample_rate: f64,
    pub duration: f64,
    #[serde(default)]
    pub segment_length: Option<usize>,
}

fn default_c_k() -> f64 {
    1.5
}
fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub k: f64,
    pub amplitude: f64,
    pub tau: f64,
}

impl SyntheticEnsemble {
    /// Preset whose inertial band spans `k_max/k_min` and the matching
    /// frequency range, sized for the desk.
    pub fn preset(decorrelation: Decorrelation, seed: u64, n_realizations: usize) -> Self {
        let (k_max, sample_rate) = match decorrelation {
            Decorrelation::Kolmogorov => (1000.0, 256.0),
            Decorrelation::Sweeping => (300.0, 400.0),
        };
        let mut cfg = Self {
            decorrelation,
            k_min: 1.0,
            k_max,
            n_modes: 48,
            c_k: 1.5,
            eps: 1.0,
            c_tau: 1.0,
            rate_noise: 1.0,
            sweep_velocity: 1.0,
            random_sweep: true,
            seed,
            n_realizations,
            sample_rate,
            duration: 0.0,
            segment_length: None,
        };
        cfg.duration = 1.02 * cfg.required_duration();
        cfg
    }

    /// Log-spaced modes; `a_m²/2 = (2/3) E(k_m) Δk_m` so the single-component
    /// variance matches `(2/3)∫E dk`.
    pub fn modes(&self) -> Vec<Mode> {
        let n = self.n_modes;
        let h = (self.k_max / self.k_min).ln() / n as f64;
        (0..n)
            .map(|i| {
                // cell centres in ln k
                let k = self.k_min * ((i as f64 + 0.5) * h).exp();
                let e = self.c_k * self.eps.powf(2.0 / 3.0) * k.powf(-5.0 / 3.0);
                Mode {
                    k,
                    amplitude: (2.0 * (2.0 / 3.0) * e * k * h).sqrt(),
                    tau: self.c_tau * self.eps.powf(-1.0 / 3.0) * k.powf(-2.0 / 3.0),
                }
            })
            .collect()
    }

    /// `Σ a_m²/2`, the single-component variance `U²` by construction.
    pub fn variance(&self) -> f64 {
        self.modes().iter().map(|m| 0.5 * m.amplitude * m.amplitude).sum()
    }

    /// `(2/3)∫E dk` of the model over `[k_min, k_max]`.
    pub fn model_variance(&self) -> f64 {
        (2.0 / 3.0) * self.c_k * self.eps.powf(2.0 / 3.0) * 1.5
            * (self.k_min.powf(-2.0 / 3.0) - self.k_max.powf(-2.0 / 3.0))
    }

    /// Period of the slowest mode.
    pub fn slowest_period(&self) -> f64 {
        match self.decorrelation {
            Decorrelation::Kolmogorov => {
                2.0 * PI * self.c_tau * self.eps.powf(-1.0 / 3.0) * self.k_min.powf(-2.0 / 3.0)
            }
            Decorrelation::Sweeping => 2.0 * PI / (self.k_min * self.sweep_velocity),
        }
    }

    pub fn required_duration(&self) -> f64 {
        100.0 * self.slowest_period()
    }

    /// Typical frequency range carried by the modes.
    pub fn band(&self) -> (f64, f64) {
        match self.decorrelation {
            Decorrelation::Kolmogorov => {
                let m = self.modes();
                (1.0 / m[0].tau, 1.0 / m[m.len() - 1].tau)
            }
            Decorrelation::Sweeping => {
                (self.k_min * self.sweep_velocity, self.k_max * self.sweep_velocity)
            }
        }
    }

    /// Fit window inside the band, clear of its smeared edges.
    pub fn fit_window(&self) -> (f64, f64) {
        let (lo, hi) = self.band();
        match self.decorrelation {
            Decorrelation::Kolmogorov => (3.0 * lo, hi / 3.0),
            Decorrelation::Sweeping => (3.0 * lo, hi / 6.0),
        }
    }

    pub fn n_samples(&self) -> usize {
        (self.duration * self.sample_rate).floor() as usize
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            self.k_min,
            self.k_max - self.k_min,
            self.c_k,
            self.eps,
            self.c_tau,
            self.sweep_velocity,
            self.sample_rate,
            self.duration,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) || !(self.rate_noise >= 0.0) {
            return Err(Error::InvalidState("ensemble parameters must be positive".into()));
        }
        if self.n_modes == 0 {
            return Err(Error::InvalidState("n_modes must be positive".into()));
        }
        let required = self.required_duration();
        if self.duration < required * (1.0 - 1e-12) {
            return Err(Error::UnderResolvedDuration {
                duration: self.duration,
                required,
            });
        }
        let top = match self.decorrelation {
            Decorrelation::Kolmogorov => self.band().1 * (1.0 + self.rate_noise),
            Decorrelation::Sweeping => self.band().1,
        };
        if PI * self.sample_rate <= top {
            return Err(Error::InvalidState(format!(
                "sample rate {} puts Nyquist below the fastest mode {top}",
                self.sample_rate
            )));
        }
        Ok(())
    }

    fn segment(&self) -> usize {
        let n = self.n_samples();
        let want = self.segment_length.unwrap_or_else(|| {
            // resolve a tenth of the lowest band frequency
            let dw = 0.1 * self.band().0;
            (2.0 * PI * self.sample_rate / dw).ceil() as usize
        });
        want.next_power_of_two().min(prev_power_of_two(n / 4).max(16))
    }
}

fn prev_power_of_two(n: usize) -> usize {
    if n == 0 {
        0
    } else {
        1 << (usize::BITS - 1 - n.leading_zeros())
    }
}

/// One probe time series per realization.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub dt: f64,
    pub series: Vec<Vec<f64>>,
    /// Expected single-time variance `U²`.
    pub variance: f64,
}

fn realization(cfg: &SyntheticEnsemble, modes: &[Mode], r: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(r as u64);
    let n = cfg.n_samples();
    let dt = 1.0 / cfg.sample_rate;
    let mut x = vec![0.0; n];
    match cfg.decorrelation {
        Decorrelation::Sweeping => {
            let v = if cfg.random_sweep {
                Normal::new(0.0, cfg.sweep_velocity)
                    .expect("positive sweep velocity")
                    .sample(&mut rng)
            } else {
                cfg.sweep_velocity
            };
            for m in modes {
                let phase: f64 = rng.random_range(0.0..2.0 * PI);
                // rotate instead of calling cos per sample
                let step = Complex::from_polar(1.0, m.k * v * dt);
                let mut z = Complex::from_polar(m.amplitude, phase);
                for (i, xi) in x.iter_mut().enumerate() {
                    *xi += z.re;
                    z *= step;
                    if i % 4096 == 4095 {
                        z *= m.amplitude / z.norm();
                    }
                }
            }
        }
        Decorrelation::Kolmogorov => {
            for m in modes {
                let mut phase: f64 = rng.random_range(0.0..2.0 * PI);
                let omega = 1.0 / m.tau;
                let sigma = cfg.rate_noise * omega;
                let rho = (-dt / m.tau).exp();
                let kick = (1.0 - rho * rho).sqrt();
                let mut xi: f64 = rng.sample(StandardNormal);
                let mut rate = omega + sigma * xi;
                for s in x.iter_mut() {
                    *s += m.amplitude * phase.cos();
                    let g: f64 = rng.sample(StandardNormal);
                    xi = rho * xi + kick * g;
                    let next = omega + sigma * xi;
                    phase += 0.5 * dt * (rate + next);
                    rate = next;
                }
            }
        }
    }
    x
}

pub fn synthesize(cfg: &SyntheticEnsemble) -> Result<Ensemble> {
    cfg.validate()?;
    let modes = cfg.modes();
    let series = (0..cfg.n_realizations)
        .into_par_iter()
        .map(|r| realization(cfg, &modes, r))
        .collect();
    Ok(Ensemble {
        dt: 1.0 / cfg.sample_rate,
        series,
        variance: cfg.variance(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencySpectrum {
    pub omega: Vec<f64>,
    pub phi: Vec<f64>,
    pub d_omega: f64,
    /// `Σ φ Δω`.
    pub integral: f64,
    /// Expected variance `U²`.
    pub target_variance: f64,
    /// Hann-weighted mean square of the analysed samples.
    pub windowed_variance: f64,
    pub n_realizations: usize,
}

impl FrequencySpectrum {
    /// `∫φ dω / U²`.
    pub fn variance_check(&self) -> f64 {
        self.integral / self.target_variance
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "omega,phi")?;
        for (o, p) in self.omega.iter().zip(&self.phi) {
            writeln!(w, "{o:.16e},{p:.16e}")?;
        }
        Ok(())
    }
}

struct Welch {
    len: usize,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

/// Per-realization accumulator: summed periodograms, weighted power, count.
type Partial = (Vec<f64>, f64, usize);

impl Welch {
    fn new(len: usize) -> Self {
        let window = (0..len)
            .map(|n| 0.5 * (1.0 - (2.0 * PI * n as f64 / len as f64).cos()))
            .collect();
        Self {
            len,
            window,
            fft: FftPlanner::new().plan_fft_forward(len),
        }
    }

    fn accumulate(&self, x: &[f64]) -> Partial {
        let half = self.len / 2;
        let mut power = vec![0.0; half + 1];
        let mut weighted = 0.0;
        let mut count = 0;
        let mut buf = vec![Complex::new(0.0, 0.0); self.len];
        let mut start = 0;
        while start + self.len <= x.len() {
            for ((b, xi), w) in buf.iter_mut().zip(&x[start..]).zip(&self.window) {
                *b = Complex::new(xi * w, 0.0);
                weighted += (xi * w) * (xi * w);
            }
            self.fft.process(&mut buf);
            for (p, b) in power.iter_mut().zip(&buf) {
                *p += b.norm_sqr();
            }
            count += 1;
            start += half;
        }
        (power, weighted, count)
    }

    fn finish(&self, parts: Vec<Partial>, sample_rate: f64, target: f64) -> Result<FrequencySpectrum> {
        let half = self.len / 2;
        let mut power = vec![0.0; half + 1];
        let (mut weighted, mut count) = (0.0, 0usize);
        // fixed summation order
        for (p, w, c) in &parts {
            for (a, b) in power.iter_mut().zip(p) {
                *a += b;
            }
            weighted += w;
            count += c;
        }
        if count == 0 {
            return Err(Error::InsufficientData("series shorter than one segment".into()));
        }
        let w2: f64 = self.window.iter().map(|w| w * w).sum();
        let d_omega = 2.0 * PI * sample_rate / self.len as f64;
        let phi: Vec<f64> = power
            .iter()
            .enumerate()
            .map(|(j, p)| {
                let fold = if j == 0 || j == half { 1.0 } else { 2.0 };
                fold * p / (count as f64 * self.len as f64 * w2 * d_omega)
            })
            .collect();
        let integral = phi.iter().sum::<f64>() * d_omega;
        Ok(FrequencySpectrum {
            omega: (0..=half).map(|j| j as f64 * d_omega).collect(),
            phi,
            d_omega,
            integral,
            target_variance: target,
            windowed_variance: weighted / (count as f64 * w2),
            n_realizations: parts.len(),
        })
    }
}

/// Welch estimate with Hann segments at 50% overlap, averaged over segments
/// and realizations, one-sided in `ω` with `Σ φ Δω` equal to the windowed
/// mean square.
pub fn frequency_spectrum(ens: &Ensemble, segment_length: usize) -> Result<FrequencySpectrum> {
    if ens.series.len() < 16 {
        return Err(Error::InsufficientData(format!(
            "{} realizations, need 16",
            ens.series.len()
        )));
    }
    if segment_length < 16 || !segment_length.is_power_of_two() {
        return Err(Error::InvalidState("segment length must be a power of two ≥ 16".into()));
    }
    let welch = Welch::new(segment_length);
    let parts = ens.series.par_iter().map(|x| welch.accumulate(x)).collect();
    welch.finish(parts, 1.0 / ens.dt, ens.variance)
}

/// Synthesis and spectrum in one pass without keeping the series.
pub fn ensemble_spectrum(cfg: &SyntheticEnsemble) -> Result<FrequencySpectrum> {
    cfg.validate()?;
    if cfg.n_realizations < 16 {
        return Err(Error::InsufficientData(format!(
            "{} realizations, need 16",
            cfg.n_realizations
        )));
    }
    let modes = cfg.modes();
    let welch = Welch::new(cfg.segment());
    let parts = (0..cfg.n_realizations)
        .into_par_iter()
        .map(|r| welch.accumulate(&realization(cfg, &modes, r)))
        .collect();
    welch.finish(parts, cfg.sample_rate, cfg.variance())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub window: (f64, f64),
    pub points: usize,
}

const FIT_BINS_PER_DECADE: f64 = 20.0;

/// Least-squares slope of `ln φ` against `ln ω` on bins of equal width in
/// `ln ω`. Each bin contributes the log of its mean `φ`, which stays sound
/// for line spectra where most raw bins sit between lines.
pub fn slope_fit(spec: &FrequencySpectrum, window: (f64, f64)) -> Result<SlopeFit> {
    let (lo, hi) = window;
    let top = spec.omega.last().copied().unwrap_or(0.0);
    let bottom = spec.omega.get(1).copied().unwrap_or(f64::INFINITY);
    if !(lo > 0.0 && hi > lo) || lo < bottom || hi > top {
        return Err(Error::WindowOutsideSupport { lo, hi });
    }
    if hi < 10.0 * lo * (1.0 - 1e-12) {
        return Err(Error::InvalidRange(format!("window [{lo}, {hi}] spans under a decade")));
    }
    let nb = ((hi / lo).log10() * FIT_BINS_PER_DECADE).ceil() as usize;
    let mut sums = vec![(0.0, 0.0, 0usize); nb];
    for (o, p) in spec.omega.iter().zip(&spec.phi) {
        if *o < lo || *o > hi || !(*p > 0.0) {
            continue;
        }
        let b = (((o / lo).log10() * FIT_BINS_PER_DECADE) as usize).min(nb - 1);
        sums[b].0 += o.ln();
        sums[b].1 += p;
        sums[b].2 += 1;
    }
    let pts: Vec<(f64, f64)> = sums
        .iter()
        .filter(|s| s.2 > 0)
        .map(|s| (s.0 / s.2 as f64, (s.1 / s.2 as f64).ln()))
        .collect();
    let n = pts.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!("{n} populated bins in window")));
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let rss: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    Ok(SlopeFit {
        slope,
        stderr: (rss / (n as f64 - 2.0) / sxx).sqrt(),
        window,
        points: n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalReport {
    pub mode: Decorrelation,
    pub slope: f64,
    pub stderr: f64,
    pub window: (f64, f64),
    pub n_realizations: usize,
    pub seed: u64,
    pub variance_ratio: f64,
}

pub fn analyse(cfg: &SyntheticEnsemble, window: Option<(f64, f64)>) -> Result<(FrequencySpectrum, TemporalReport)> {
    let spec = ensemble_spectrum(cfg)?;
    let fit = slope_fit(&spec, window.unwrap_or_else(|| cfg.fit_window()))?;
    let report = TemporalReport {
        mode: cfg.decorrelation,
        slope: fit.slope,
        stderr: fit.stderr,
        window: fit.window,
        n_realizations: cfg.n_realizations,
        seed: cfg.seed,
        variance_ratio: spec.variance_check(),
    };
    Ok((spec, report))
}
