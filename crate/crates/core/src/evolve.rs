//! Time integration of `dE/dt = T − 2νk²E + F`.
//!
//! The viscous term is integrated exactly; transfer and forcing use Heun's
//! predictor-corrector in the integrating-factor frame.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::closure::{Closure, TransferResult};
use crate::error::{Error, Result};
use crate::flux::peak_flux;
use crate::grid::WavenumberGrid;
use crate::spectra::{diagnostics, dissipation_rate, total_energy, SpectralState};

/// Clip events above this fraction of the total energy fail the step.
const CLIP_LIMIT: f64 = 1e-10;
/// Relative bound on the per-step energy-balance residual.
const BALANCE_LIMIT: f64 = 0.01;
/// Spectrum floor, relative to its peak, used in the step-size estimate.
const DT_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForcingMode {
    #[default]
    None,
    Band,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingSpec {
    pub mode: ForcingMode,
    #[serde(default)]
    pub band_top: f64,
    #[serde(default)]
    pub injection_rate: f64,
}

impl ForcingSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn band(band_top: f64, injection_rate: f64) -> Self {
        Self {
            mode: ForcingMode::Band,
            band_top,
            injection_rate,
        }
    }

    pub fn validate(&self, grid: &WavenumberGrid) -> Result<()> {
        match self.mode {
            ForcingMode::None if self.injection_rate != 0.0 => Err(Error::InvalidState(
                "injection_rate must be 0 without forcing".into(),
            )),
            ForcingMode::None => Ok(()),
            ForcingMode::Band => {
                if !(self.injection_rate >= 0.0 && self.injection_rate.is_finite()) {
                    return Err(Error::InvalidState(format!(
                        "injection_rate = {}",
                        self.injection_rate
                    )));
                }
                if !(self.band_top >= grid.k_min() && self.band_top <= grid.k_max()) {
                    return Err(Error::OutOfRange {
                        what: "band_top",
                        value: self.band_top,
                        lo: grid.k_min(),
                        hi: grid.k_max(),
                    });
                }
                Ok(())
            }
        }
    }

    pub fn rate(&self) -> f64 {
        match self.mode {
            ForcingMode::None => 0.0,
            ForcingMode::Band => self.injection_rate,
        }
    }

    /// Number of forced nodes (those with `k ≤ band_top`).
    fn band_len(&self, grid: &WavenumberGrid) -> usize {
        let top = self.band_top * (1.0 + 1e-12);
        grid.nodes().iter().take_while(|k| **k <= top).count().max(1)
    }

    /// Injection spectrum `F(k)`, proportional to `E(k)` on the band (uniform
    /// if the band holds no energy) and normalized so `∫F dk = ε_W`.
    pub fn profile(&self, grid: &WavenumberGrid, e: &[f64]) -> Vec<f64> {
        let mut f = vec![0.0; grid.len()];
        if self.mode == ForcingMode::None || self.injection_rate == 0.0 {
            return f;
        }
        let nb = self.band_len(grid);
        let mut w = vec![0.0; grid.len()];
        w[..nb].copy_from_slice(&grid.weights()[..nb]);
        let held: f64 = (0..nb).map(|i| w[i] * e[i]).sum();
        if held > 0.0 {
            for i in 0..nb {
                f[i] = self.injection_rate * e[i] / held;
            }
        } else {
            let width: f64 = w[..nb].iter().sum();
            for v in &mut f[..nb] {
                *v = self.injection_rate / width;
            }
        }
        f
    }

    /// Dimensional time scale `(ε_W k_f²)^{-1/3}` of the input.
    fn time_scale(&self) -> Option<f64> {
        (self.mode == ForcingMode::Band && self.injection_rate > 0.0)
            .then(|| (self.injection_rate * self.band_top * self.band_top).powf(-1.0 / 3.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorSettings {
    /// Safety factor on the explicit rate bound.
    pub cfl: f64,
    /// Time between recorded samples.
    pub sample_interval: f64,
    /// Keep the full state at each sample.
    pub keep_snapshots: bool,
    pub max_steps: usize,
    /// `|dE_tot/dt| ≤ tolerance · ε` for stationarity.
    pub stationarity_tolerance: f64,
    /// Length of the stationarity window in large-eddy times `L/U`.
    pub stationarity_turnovers: f64,
    /// Earliest time at which stationarity may be declared.
    pub min_time: f64,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            cfl: 0.25,
            sample_interval: 0.1,
            keep_snapshots: false,
            max_steps: 10_000_000,
            stationarity_tolerance: 0.01,
            stationarity_turnovers: 2.0,
            min_time: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub total_energy: f64,
    pub dissipation: f64,
    pub pi_max: f64,
    pub taylor_reynolds: f64,
    pub c_eps: f64,
    /// Large-eddy time `L/U`.
    pub turnover: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub samples: Vec<Sample>,
    pub final_state: SpectralState,
    pub stationary: bool,
    pub snapshots: Vec<SpectralState>,
    pub steps: usize,
    pub clipped_energy: f64,
    pub max_balance_residual: f64,
}

impl RunRecord {
    /// Writes CSV `t,E_tot,eps,Pi_max,R_lambda,C_eps`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,E_tot,eps,Pi_max,R_lambda,C_eps")?;
        for s in &self.samples {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                s.t, s.total_energy, s.dissipation, s.pi_max, s.taylor_reynolds, s.c_eps
            )?;
        }
        Ok(())
    }
}

/// Right-hand side `T + F` at one state.
struct Rhs {
    n: Vec<f64>,
    transfer: Option<TransferResult>,
    transfer_integral: f64,
}

struct Model<'a> {
    closure: Option<&'a Closure>,
    forcing: &'a ForcingSpec,
}

impl Model<'_> {
    fn rhs(&self, state: &SpectralState) -> Result<Rhs> {
        let mut n = self.forcing.profile(&state.grid, &state.e);
        let mut transfer_integral = 0.0;
        let transfer = match self.closure {
            Some(c) => {
                let tr = c.transfer(state)?;
                for (v, t) in n.iter_mut().zip(&tr.t) {
                    *v += t;
                }
                transfer_integral = state.grid.sum_weighted(&tr.t);
                Some(tr)
            }
            None => None,
        };
        Ok(Rhs {
            n,
            transfer,
            transfer_integral,
        })
    }

    fn suggest_dt(&self, state: &SpectralState, rhs: &Rhs, cfl: f64) -> f64 {
        let emax = state.e.iter().fold(0.0f64, |m, v| m.max(*v));
        if emax == 0.0 {
            if let Some(tau) = self.forcing.time_scale() {
                return cfl * tau;
            }
        }
        // Bins far below the peak only need the output rate bounded; their
        // relative growth from the input term is harmless.
        let floor = DT_FLOOR * emax;
        let k = state.k();
        let mut rate = 0.0f64;
        for i in 0..k.len() {
            let mut r = 2.0 * state.nu * k[i] * k[i];
            if let Some(tr) = &rhs.transfer {
                r += (tr.t[i].abs() / state.e[i].max(floor)).max(tr.sink_rate[i].abs());
            }
            rate = rate.max(r);
        }
        cfl / rate
    }

    /// One Heun step from `state` given its right-hand side.
    fn advance(&self, state: &SpectralState, rhs0: &Rhs, dt: f64) -> Result<StepOutput> {
        let k = state.k();
        let decay: Vec<f64> = k.iter().map(|k| (-2.0 * state.nu * k * k * dt).exp()).collect();
        let mut clipped = 0.0;
        let w = state.grid.weights();

        let mut pred = Vec::with_capacity(k.len());
        for i in 0..k.len() {
            pred.push((decay[i] * (state.e[i] + dt * rhs0.n[i])).max(0.0));
        }
        let pred = SpectralState::new(state.grid.clone(), pred, state.nu, state.t + dt)?;
        let rhs1 = self.rhs(&pred)?;

        let mut e = Vec::with_capacity(k.len());
        for i in 0..k.len() {
            let v = decay[i] * state.e[i] + 0.5 * dt * (decay[i] * rhs0.n[i] + rhs1.n[i]);
            if v < 0.0 {
                clipped -= w[i] * v;
                e.push(0.0);
            } else {
                e.push(v);
            }
        }
        let next = SpectralState::new(state.grid.clone(), e, state.nu, state.t + dt)?;

        let e0 = total_energy(state);
        let e1 = total_energy(&next);
        if clipped > CLIP_LIMIT * e0.max(e1) {
            return Err(Error::NegativeEnergy {
                clipped,
                total: e0.max(e1),
            });
        }
        let eps = 0.5 * (dissipation_rate(state) + dissipation_rate(&next));
        let input = self.forcing.rate();
        let transfer = 0.5 * (rhs0.transfer_integral + rhs1.transfer_integral);
        let residual = ((e1 - e0) / dt - (input - eps + transfer)).abs() / eps.max(input).max(1e-300);
        if residual > BALANCE_LIMIT {
            return Err(Error::Instability {
                t: next.t,
                reason: format!("energy balance residual {residual:.3e}"),
            });
        }
        Ok(StepOutput {
            state: next,
            clipped,
            residual,
        })
    }
}

struct StepOutput {
    state: SpectralState,
    clipped: f64,
    residual: f64,
}

/// Advances `state` by `dt`. `closure = None` disables transfer.
pub fn step(
    state: &SpectralState,
    closure: Option<&Closure>,
    forcing: &ForcingSpec,
    dt: f64,
) -> Result<SpectralState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidState(format!("dt = {dt}")));
    }
    forcing.validate(&state.grid)?;
    let model = Model { closure, forcing };
    let rhs = model.rhs(state)?;
    Ok(model.advance(state, &rhs, dt)?.state)
}

/// Stable step estimate `c · min_k 1/(|T|/E + 2νk²)` with `c = 0.25`; `E` is
/// floored at `1e-8` of its peak and the output rate also bounds the step.
pub fn suggest_dt(state: &SpectralState, closure: Option<&Closure>, forcing: &ForcingSpec) -> Result<f64> {
    let model = Model { closure, forcing };
    let rhs = model.rhs(state)?;
    Ok(model.suggest_dt(state, &rhs, 0.25))
}

fn sample_of(state: &SpectralState, transfer: Option<&TransferResult>) -> Result<Sample> {
    let d = diagnostics(state)?;
    Ok(Sample {
        t: state.t,
        total_energy: d.total_energy,
        dissipation: d.dissipation,
        pi_max: transfer.map_or(0.0, |tr| peak_flux(tr).0),
        taylor_reynolds: d.taylor_reynolds,
        c_eps: d.dissipation * d.integral_scale / d.rms_velocity.powi(3),
        turnover: d.integral_scale / d.rms_velocity,
    })
}

/// True if every sample pair inside the trailing window of
/// `turnovers · L/U` satisfies `|ΔE_tot/Δt| ≤ tol · ε`.
fn stationary_window(samples: &[Sample], settings: &IntegratorSettings) -> bool {
    let Some(last) = samples.last() else {
        return false;
    };
    let start = last.t - settings.stationarity_turnovers * last.turnover;
    if samples[0].t > start || last.t < settings.min_time {
        return false;
    }
    let first = samples.iter().rposition(|s| s.t <= start).unwrap_or(0);
    samples[first..].windows(2).all(|p| {
        let rate = (p[1].total_energy - p[0].total_energy) / (p[1].t - p[0].t);
        let eps = 0.5 * (p[0].dissipation + p[1].dissipation);
        rate.abs() <= settings.stationarity_tolerance * eps
    })
}

enum Stop {
    At(f64),
    StationaryOr(f64),
}

fn integrate(
    initial: &SpectralState,
    closure: Option<&Closure>,
    forcing: &ForcingSpec,
    settings: &IntegratorSettings,
    stop: Stop,
) -> Result<RunRecord> {
    forcing.validate(&initial.grid)?;
    if !(settings.sample_interval > 0.0 && settings.cfl > 0.0) {
        return Err(Error::InvalidState("sample_interval and cfl must be positive".into()));
    }
    let model = Model { closure, forcing };
    let t_end = match stop {
        Stop::At(t) | Stop::StationaryOr(t) => t,
    };
    let mut state = initial.clone();
    let mut rhs = model.rhs(&state)?;
    let mut record = RunRecord {
        samples: vec![sample_of(&state, rhs.transfer.as_ref())?],
        final_state: state.clone(),
        stationary: false,
        snapshots: Vec::new(),
        steps: 0,
        clipped_energy: 0.0,
        max_balance_residual: 0.0,
    };
    if settings.keep_snapshots {
        record.snapshots.push(state.clone());
    }
    let mut next_sample = state.t + settings.sample_interval;
    let abort = |e: Error, mut rec: RunRecord, s: &SpectralState| {
        rec.final_state = s.clone();
        Error::Aborted {
            source: Box::new(e),
            partial: Box::new(rec),
        }
    };

    while state.t < t_end {
        if record.steps >= settings.max_steps {
            let t = state.t;
            return Err(abort(
                Error::Instability {
                    t,
                    reason: "max_steps reached".into(),
                },
                record,
                &state,
            ));
        }
        let mut dt = model.suggest_dt(&state, &rhs, settings.cfl);
        let target = next_sample.min(t_end);
        let sampling = state.t + dt >= target * (1.0 - 1e-12);
        if sampling {
            dt = target - state.t;
        }
        let out = match model.advance(&state, &rhs, dt) {
            Ok(o) => o,
            Err(e) => return Err(abort(e, record, &state)),
        };
        state = out.state;
        if sampling {
            state.t = target;
        }
        record.steps += 1;
        record.clipped_energy += out.clipped;
        record.max_balance_residual = record.max_balance_residual.max(out.residual);
        rhs = match model.rhs(&state) {
            Ok(r) => r,
            Err(e) => return Err(abort(e, record, &state)),
        };
        if sampling {
            next_sample += settings.sample_interval;
            match sample_of(&state, rhs.transfer.as_ref()) {
                Ok(s) => record.samples.push(s),
                Err(e) => return Err(abort(e, record, &state)),
            }
            if settings.keep_snapshots {
                record.snapshots.push(state.clone());
            }
            if let Stop::StationaryOr(_) = stop {
                if stationary_window(&record.samples, settings) {
                    record.stationary = true;
                    break;
                }
            }
        }
    }
    record.final_state = state;
    if let Stop::StationaryOr(_) = stop {
        if !record.stationary {
            return Err(Error::NotStationary {
                t: record.final_state.t,
                record: Box::new(record),
            });
        }
    }
    Ok(record)
}

/// Free decay from `initial` up to `t_end`.
pub fn run_decay(
    initial: &SpectralState,
    closure: Option<&Closure>,
    settings: &IntegratorSettings,
    t_end: f64,
) -> Result<RunRecord> {
    if !(t_end > initial.t) {
        return Err(Error::InvalidState(format!("t_end = {t_end} not after t = {}", initial.t)));
    }
    integrate(initial, closure, &ForcingSpec::none(), settings, Stop::At(t_end))
}

/// Forced run integrated until stationary or `max_time`.
pub fn run_forced(
    initial: &SpectralState,
    closure: Option<&Closure>,
    forcing: &ForcingSpec,
    settings: &IntegratorSettings,
    max_time: f64,
) -> Result<RunRecord> {
    if !(forcing.mode == ForcingMode::Band && forcing.injection_rate > 0.0) {
        return Err(Error::InvalidState("forced run needs positive band injection".into()));
    }
    integrate(initial, closure, forcing, settings, Stop::StationaryOr(max_time))
}
