//! EDQNM transfer spectrum.
//!
//! With `x, y, z` the cosines of the triangle angles opposite `k, p, q`,
//!
//! ```text
//! T(k) = ∫ dp S(k,p),
//! S(k,p) = [k² E(p) − p² E(k)] ∫ dq θ_kpq (xy + z³)/q E(q)
//! ```
//!
//! over `|k−p| ≤ q ≤ k+p`. The `q`-kernel is symmetric in `k ↔ p`, so `S` is
//! antisymmetric and one orientation per node pair is computed. The `q`
//! integral is split at grid nodes and sampled with two Gauss points per
//! piece, `E(q)` and `μ(q)` interpolated linearly in each cell. The sample
//! geometry depends only on the grid and is tabulated once.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::WavenumberGrid;
use crate::spectra::{dissipation_rate, SpectralState};

const GAUSS2: [(f64, f64); 2] = [
    (0.211_324_865_405_187_1, 0.5),
    (0.788_675_134_594_812_9, 0.5),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum MarkovMode {
    Asymptotic,
    /// θ relaxes from zero using the state's time as elapsed time.
    FiniteTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosureParams {
    pub damping_constant: f64,
    pub markov: MarkovMode,
}

impl Default for ClosureParams {
    fn default() -> Self {
        Self {
            damping_constant: 0.36,
            markov: MarkovMode::Asymptotic,
        }
    }
}

impl ClosureParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping_constant > 0.0 && self.damping_constant.is_finite()) {
            return Err(Error::InvalidState(format!(
                "damping_constant = {}",
                self.damping_constant
            )));
        }
        Ok(())
    }
}

/// One evaluation of the closure on a spectrum.
#[derive(Debug, Clone)]
pub struct TransferResult {
    pub t: Vec<f64>,
    /// Row-major `S(k_i, k_m)`.
    pub s: Vec<f64>,
    /// Input term `k² ∫ dp E(p) G(k,p)`.
    pub source: Vec<f64>,
    /// Output rate: `T = source − E(k) sink_rate`.
    pub sink_rate: Vec<f64>,
    /// `∫T dk / ε` (raw `∫T dk` when ε = 0).
    pub conservation_defect: f64,
    pub dissipation: f64,
    pub grid: Arc<WavenumberGrid>,
}

impl TransferResult {
    pub fn n(&self) -> usize {
        self.t.len()
    }

    pub fn s_at(&self, i: usize, m: usize) -> f64 {
        self.s[i * self.n() + m]
    }

    /// Writes `S` as CSV `k,j,S`.
    pub fn write_density_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "k,j,S")?;
        let k = self.grid.nodes();
        for i in 0..self.n() {
            for m in 0..self.n() {
                writeln!(w, "{:.16e},{:.16e},{:.16e}", k[i], k[m], self.s_at(i, m))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
struct Samples {
    cell: Vec<u32>,
    frac: Vec<f64>,
    weight: Vec<f64>,
    q2: Vec<f64>,
}

impl Samples {
    fn push(&mut self, cell: usize, frac: f64, weight: f64, q: f64) {
        self.cell.push(cell as u32);
        self.frac.push(frac);
        self.weight.push(weight);
        self.q2.push(q * q);
    }
}

/// Geometric `(xy + z³)/q` for the triangle `(k, p, q)`.
fn geometric_factor(k: f64, p: f64, q: f64) -> f64 {
    let (k2, p2, q2) = (k * k, p * p, q * q);
    let x = (p2 + q2 - k2) / (2.0 * p * q);
    let y = (k2 + q2 - p2) / (2.0 * k * q);
    let z = (k2 + p2 - q2) / (2.0 * k * p);
    (x * y + z * z * z) / q
}

/// Quadrature samples in `q` for the pair `(k, p)`.
fn pair_samples(grid: &WavenumberGrid, k: f64, p: f64, out: &mut Samples) {
    let lo = (k - p).abs().max(grid.k_min());
    let hi = (k + p).min(grid.k_max());
    if !(hi > lo) {
        return;
    }
    let nodes = grid.nodes();
    let (mut l, _) = grid.locate(lo);
    let mut a = lo;
    loop {
        let b = if l + 1 < nodes.len() { nodes[l + 1].min(hi) } else { hi };
        if b > a {
            let width = b - a;
            let span = nodes[l + 1] - nodes[l];
            for (xi, wi) in GAUSS2 {
                let q = a + xi * width;
                let frac = ((q - nodes[l]) / span).clamp(0.0, 1.0);
                out.push(l, frac, wi * width * geometric_factor(k, p, q), q);
            }
        }
        if b >= hi || l + 2 >= nodes.len() {
            break;
        }
        a = b;
        l += 1;
    }
}

/// The EDQNM closure bound to one grid.
#[derive(Debug, Clone)]
pub struct Closure {
    params: ClosureParams,
    grid: Arc<WavenumberGrid>,
    /// Start of row `i` in `pair_offsets` (pairs `(i, m)` with `m > i`).
    row_start: Vec<usize>,
    pair_offsets: Vec<usize>,
    samples: Samples,
}

impl Closure {
    pub fn new(grid: Arc<WavenumberGrid>, params: ClosureParams) -> Result<Self> {
        params.validate()?;
        let n = grid.len();
        let k = grid.nodes();
        let mut row_start = Vec::with_capacity(n + 1);
        let mut pair_offsets = vec![0];
        let mut samples = Samples::default();
        for i in 0..n {
            row_start.push(pair_offsets.len() - 1);
            for m in i + 1..n {
                pair_samples(&grid, k[i], k[m], &mut samples);
                pair_offsets.push(samples.cell.len());
            }
        }
        row_start.push(pair_offsets.len() - 1);
        Ok(Self {
            params,
            grid,
            row_start,
            pair_offsets,
            samples,
        })
    }

    pub fn params(&self) -> &ClosureParams {
        &self.params
    }

    pub fn grid(&self) -> &Arc<WavenumberGrid> {
        &self.grid
    }

    pub fn sample_count(&self) -> usize {
        self.samples.cell.len()
    }

    pub fn transfer(&self, state: &SpectralState) -> Result<TransferResult> {
        if !Arc::ptr_eq(&state.grid, &self.grid) && *state.grid != *self.grid {
            return Err(Error::InvalidState("state grid differs from closure grid".into()));
        }
        let elapsed = match self.params.markov {
            MarkovMode::Asymptotic => None,
            MarkovMode::FiniteTime => Some(state.t),
        };
        let mut out = self.transfer_raw(&state.e, state.nu, elapsed)?;
        out.dissipation = dissipation_rate(state);
        let total: f64 = self.grid.sum_weighted(&out.t);
        out.conservation_defect = if out.dissipation > 0.0 {
            total / out.dissipation
        } else {
            total
        };
        Ok(out)
    }

    /// Transfer for raw spectrum values; `nu` may be zero here. The
    /// conservation defect is reported unnormalized.
    pub fn transfer_raw(&self, e: &[f64], nu: f64, elapsed: Option<f64>) -> Result<TransferResult> {
        let n = self.grid.len();
        if e.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: e.len(),
            });
        }
        let k = self.grid.nodes();
        let w = self.grid.weights();
        let mu = eddy_damping_values(&self.grid, e, self.params.damping_constant);

        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut row = Vec::with_capacity(n - i - 1);
                for (slot, m) in (i + 1..n).enumerate() {
                    let pair = self.row_start[i] + slot;
                    let range = self.pair_offsets[pair]..self.pair_offsets[pair + 1];
                    let base = mu[i] + mu[m] + nu * (k[i] * k[i] + k[m] * k[m]);
                    row.push(self.kernel_sum(range, e, &mu, nu, base, elapsed));
                }
                row
            })
            .collect();

        let mut s = vec![0.0; n * n];
        let mut source = vec![0.0; n];
        let mut sink = vec![0.0; n];
        for i in 0..n {
            for (slot, m) in (i + 1..n).enumerate() {
                let g = rows[i][slot];
                let v = (k[i] * k[i] * e[m] - k[m] * k[m] * e[i]) * g;
                s[i * n + m] = v;
                s[m * n + i] = -v;
            }
        }
        let mut t = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            let mut src = 0.0;
            let mut snk = 0.0;
            for m in 0..n {
                if m == i {
                    continue;
                }
                let g = if m > i { rows[i][m - i - 1] } else { rows[m][i - m - 1] };
                acc += w[m] * s[i * n + m];
                src += w[m] * e[m] * g;
                snk += w[m] * k[m] * k[m] * g;
            }
            t[i] = acc;
            source[i] = k[i] * k[i] * src;
            sink[i] = snk;
        }
        if let Some(i) = t.iter().position(|v| !v.is_finite()) {
            return Err(Error::QuadratureFailure(format!("T[{i}] = {}", t[i])));
        }
        let total = self.grid.sum_weighted(&t);
        Ok(TransferResult {
            t,
            s,
            source,
            sink_rate: sink,
            conservation_defect: total,
            dissipation: 0.0,
            grid: self.grid.clone(),
        })
    }

    fn kernel_sum(
        &self,
        range: std::ops::Range<usize>,
        e: &[f64],
        mu: &[f64],
        nu: f64,
        base: f64,
        elapsed: Option<f64>,
    ) -> f64 {
        let sm = &self.samples;
        let mut acc = 0.0;
        for s in range {
            let l = sm.cell[s] as usize;
            let f = sm.frac[s];
            let eq = e[l] + f * (e[l + 1] - e[l]);
            if eq == 0.0 {
                continue;
            }
            let rate = base + mu[l] + f * (mu[l + 1] - mu[l]) + nu * sm.q2[s];
            if rate <= 0.0 {
                continue;
            }
            let theta = match elapsed {
                None => 1.0 / rate,
                Some(t) => -(-rate * t).exp_m1() / rate,
            };
            acc += sm.weight[s] * eq * theta;
        }
        acc
    }
}

/// `μ(k) = λ √(∫_{k_min}^k s² E(s) ds)` on the grid nodes.
pub fn eddy_damping(state: &SpectralState, params: &ClosureParams) -> Vec<f64> {
    eddy_damping_values(&state.grid, &state.e, params.damping_constant)
}

fn eddy_damping_values(grid: &WavenumberGrid, e: &[f64], lambda: f64) -> Vec<f64> {
    let enst: Vec<f64> = grid.nodes().iter().zip(e).map(|(k, v)| k * k * v).collect();
    grid.cumulative(&enst)
        .into_iter()
        .map(|c| lambda * c.max(0.0).sqrt())
        .collect()
}

/// Markovian triad relaxation time for an arbitrary in-range triangle.
pub fn triad_time(k: f64, p: f64, q: f64, state: &SpectralState, params: &ClosureParams) -> Result<f64> {
    let tol = 1e-12 * (k + p + q);
    if !(q >= (k - p).abs() - tol && q <= k + p + tol && k > 0.0 && p > 0.0 && q > 0.0) {
        return Err(Error::NotATriangle { k, p, q });
    }
    let g = &state.grid;
    for v in [k, p, q] {
        if v < g.k_min() || v > g.k_max() {
            return Err(Error::OutOfRange {
                what: "wavenumber",
                value: v,
                lo: g.k_min(),
                hi: g.k_max(),
            });
        }
    }
    let mu = eddy_damping(state, params);
    // sum sorted so the value is symmetric under permutations
    let mut legs = [k, p, q];
    legs.sort_by(f64::total_cmp);
    let mut rate = 0.0;
    for v in legs {
        rate += g.interpolate(&mu, v);
    }
    for v in legs {
        rate += state.nu * v * v;
    }
    Ok(match params.markov {
        MarkovMode::Asymptotic => 1.0 / rate,
        MarkovMode::FiniteTime => -(-rate * state.t).exp_m1() / rate,
    })
}

/// `S(k, j)` at arbitrary in-range wavenumbers; `S(j, k) = −S(k, j)` exactly.
pub fn transfer_density(state: &SpectralState, params: &ClosureParams, k: f64, j: f64) -> Result<f64> {
    let g = &state.grid;
    for v in [k, j] {
        if !(v >= g.k_min() && v <= g.k_max()) {
            return Err(Error::OutOfRange {
                what: "wavenumber",
                value: v,
                lo: g.k_min(),
                hi: g.k_max(),
            });
        }
    }
    if k == j {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if k < j { (k, j, 1.0) } else { (j, k, -1.0) };
    let mu = eddy_damping(state, params);
    let e = &state.e;
    let mut samples = Samples::default();
    pair_samples(g, lo, hi, &mut samples);
    let base = g.interpolate(&mu, lo) + g.interpolate(&mu, hi) + state.nu * (lo * lo + hi * hi);
    let elapsed = match params.markov {
        MarkovMode::Asymptotic => None,
        MarkovMode::FiniteTime => Some(state.t),
    };
    let mut acc = 0.0;
    for s in 0..samples.cell.len() {
        let l = samples.cell[s] as usize;
        let f = samples.frac[s];
        let eq = e[l] + f * (e[l + 1] - e[l]);
        if eq == 0.0 {
            continue;
        }
        let rate = base + mu[l] + f * (mu[l + 1] - mu[l]) + state.nu * samples.q2[s];
        if rate <= 0.0 {
            continue;
        }
        let theta = match elapsed {
            None => 1.0 / rate,
            Some(t) => -(-rate * t).exp_m1() / rate,
        };
        acc += samples.weight[s] * eq * theta;
    }
    let v = (lo * lo * g.interpolate(e, hi) - hi * hi * g.interpolate(e, lo)) * acc;
    Ok(sign * v)
}

/// Convenience wrapper building a closure for one evaluation.
pub fn transfer_spectrum(state: &SpectralState, params: &ClosureParams) -> Result<TransferResult> {
    Closure::new(state.grid.clone(), *params)?.transfer(state)
}
