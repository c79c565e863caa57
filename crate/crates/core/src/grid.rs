//! Geometric wavenumber mesh and its quadrature rule.
//!
//! Nodes are log-uniform. The rule is the trapezoid rule in `ln k` with
//! Jacobian weights `h k_i`, carrying the four-point end corrections of the
//! extended Simpson rule, then rescaled so constants integrate exactly. All
//! weights stay positive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// End-correction coefficients of the alternative extended Simpson rule.
const END_CORRECTION: [f64; 4] = [17.0 / 48.0, 59.0 / 48.0, 43.0 / 48.0, 49.0 / 48.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WavenumberGrid {
    k_min: f64,
    k_max: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// Share of `weights[n]` attributed to `[k_min, k_n]` in partial integrals.
    lower: Vec<f64>,
}

/// Result of a partial integral with the node actually used as upper limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartialIntegral {
    pub value: f64,
    pub node: usize,
    pub kappa: f64,
}

impl WavenumberGrid {
    /// Builds a log-uniform grid. Fewer than eight nodes falls back to the
    /// plain log-trapezoid weights.
    pub fn new(k_min: f64, k_max: f64, n_bins: usize) -> Result<Self> {
        if !(k_min.is_finite() && k_max.is_finite() && k_min > 0.0 && k_min < k_max) {
            return Err(Error::InvalidRange(format!(
                "need 0 < k_min < k_max, got [{k_min}, {k_max}]"
            )));
        }
        if n_bins < 2 {
            return Err(Error::InvalidRange(format!("n_bins = {n_bins} < 2")));
        }
        let n = n_bins;
        let ratio = (k_max / k_min).powf(1.0 / (n - 1) as f64);
        let mut nodes: Vec<f64> = (0..n).map(|i| k_min * ratio.powi(i as i32)).collect();
        nodes[n - 1] = k_max;
        let h = ratio.ln();

        let mut coef = vec![1.0; n];
        if n >= 8 {
            for (j, c) in END_CORRECTION.iter().enumerate() {
                coef[j] = *c;
                coef[n - 1 - j] = *c;
            }
        } else {
            coef[0] = 0.5;
            coef[n - 1] = 0.5;
        }
        let mut weights: Vec<f64> = nodes.iter().zip(&coef).map(|(k, c)| h * k * c).collect();
        let scale = (k_max - k_min) / weights.iter().sum::<f64>();
        for w in &mut weights {
            *w *= scale;
        }

        let mut lower = vec![0.0; n];
        let mut below = 0.0;
        for i in 0..n {
            lower[i] = ((nodes[i] - k_min) - below).clamp(0.0, weights[i]);
            below += weights[i];
        }
        lower[n - 1] = weights[n - 1];

        Ok(Self {
            k_min,
            k_max,
            nodes,
            weights,
            lower,
        })
    }

    /// Grid with a fixed number of nodes per decade (at least eight nodes).
    pub fn with_density(k_min: f64, k_max: f64, per_decade: f64) -> Result<Self> {
        if !(per_decade > 0.0) {
            return Err(Error::InvalidRange(format!("per_decade = {per_decade}")));
        }
        let decades = (k_max / k_min).log10();
        let n = ((decades * per_decade).round() as usize + 1).max(8);
        Self::new(k_min, k_max, n)
    }

    pub fn k_min(&self) -> f64 {
        self.k_min
    }

    pub fn k_max(&self) -> f64 {
        self.k_max
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Node ratio `k_{i+1}/k_i`.
    pub fn ratio(&self) -> f64 {
        (self.k_max / self.k_min).powf(1.0 / (self.len() - 1) as f64)
    }

    /// Weights of the rule restricted to `[k_min, k_n]`.
    pub fn lower_weights(&self, n: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.len()];
        w[..n].copy_from_slice(&self.weights[..n]);
        w[n] = self.lower[n];
        w
    }

    /// Weights of the rule restricted to `[k_n, k_max]`; complements
    /// [`lower_weights`](Self::lower_weights) exactly.
    pub fn upper_weights(&self, n: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.len()];
        w[n] = self.weights[n] - self.lower[n];
        w[n + 1..].copy_from_slice(&self.weights[n + 1..]);
        w
    }

    pub fn integrate(&self, samples: &[f64]) -> Result<f64> {
        self.check_len(samples)?;
        Ok(self.sum_weighted(samples))
    }

    pub(crate) fn sum_weighted(&self, samples: &[f64]) -> f64 {
        self.weights.iter().zip(samples).map(|(w, f)| w * f).sum()
    }

    /// Integral over `[k_min, kappa]`, with `kappa` snapped to the nearest node.
    pub fn partial_integrate(&self, samples: &[f64], kappa: f64) -> Result<PartialIntegral> {
        self.check_len(samples)?;
        let node = self.snap(kappa)?;
        Ok(PartialIntegral {
            value: self.lower_integral(samples, node),
            node,
            kappa: self.nodes[node],
        })
    }

    /// Integral over `[k_min, k_n]`.
    pub fn lower_integral(&self, samples: &[f64], n: usize) -> f64 {
        let head: f64 = self.weights[..n]
            .iter()
            .zip(samples)
            .map(|(w, f)| w * f)
            .sum();
        head + self.lower[n] * samples[n]
    }

    /// Integral over `[k_n, k_max]`.
    pub fn upper_integral(&self, samples: &[f64], n: usize) -> f64 {
        let tail: f64 = self.weights[n + 1..]
            .iter()
            .zip(&samples[n + 1..])
            .map(|(w, f)| w * f)
            .sum();
        (self.weights[n] - self.lower[n]) * samples[n] + tail
    }

    /// Running integrals `∫_{k_min}^{k_n} f dk` for every node, in O(N).
    pub fn cumulative(&self, samples: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        let mut below = 0.0;
        for i in 0..self.len() {
            out.push(below + self.lower[i] * samples[i]);
            below += self.weights[i] * samples[i];
        }
        out
    }

    /// Index of the node nearest to `kappa` in log distance.
    pub fn snap(&self, kappa: f64) -> Result<usize> {
        let tol = 1e-12 * self.k_max;
        if !(kappa >= self.k_min - tol && kappa <= self.k_max + tol) {
            return Err(Error::OutOfRange {
                what: "kappa",
                value: kappa,
                lo: self.k_min,
                hi: self.k_max,
            });
        }
        let s = (kappa.max(self.k_min) / self.k_min).ln() / self.ratio().ln();
        Ok((s.round() as usize).min(self.len() - 1))
    }

    /// Cell index `l` and fraction `f` such that `k` lies between nodes `l`
    /// and `l + 1`, linear in `k`. Requires `k` inside the grid.
    pub(crate) fn locate(&self, k: f64) -> (usize, f64) {
        let n = self.len();
        let s = (k / self.k_min).ln() / self.ratio().ln();
        let mut l = (s.floor().max(0.0) as usize).min(n - 2);
        // guard against rounding on the log mapping
        while l > 0 && self.nodes[l] > k {
            l -= 1;
        }
        while l < n - 2 && self.nodes[l + 1] < k {
            l += 1;
        }
        let f = ((k - self.nodes[l]) / (self.nodes[l + 1] - self.nodes[l])).clamp(0.0, 1.0);
        (l, f)
    }

    /// Linear interpolation of node values at an arbitrary in-range `k`.
    pub fn interpolate(&self, samples: &[f64], k: f64) -> f64 {
        let (l, f) = self.locate(k);
        samples[l] + f * (samples[l + 1] - samples[l])
    }

    fn check_len(&self, samples: &[f64]) -> Result<()> {
        if samples.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: samples.len(),
            });
        }
        Ok(())
    }
}

/// Grid recipe resolved per run: `k_max` fixed or a multiple of the
/// Kolmogorov wavenumber, resolution as a count or a density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub k_min: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max_over_kd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_bins: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins_per_decade: Option<f64>,
}

impl GridSpec {
    /// `eps` and `nu` set `k_d = (ε/ν³)^{1/4}` when `k_max_over_kd` is used.
    pub fn build(&self, eps: f64, nu: f64) -> Result<WavenumberGrid> {
        let k_max = match (self.k_max, self.k_max_over_kd) {
            (Some(k), None) => k,
            (None, Some(m)) => {
                if !(eps > 0.0 && nu > 0.0) {
                    return Err(Error::InvalidRange(
                        "k_max_over_kd needs a positive dissipation estimate".into(),
                    ));
                }
                m * (eps / nu.powi(3)).powf(0.25)
            }
            _ => {
                return Err(Error::InvalidRange(
                    "set exactly one of k_max, k_max_over_kd".into(),
                ))
            }
        };
        match (self.n_bins, self.bins_per_decade) {
            (Some(n), None) => WavenumberGrid::new(self.k_min, k_max, n),
            (None, Some(d)) => WavenumberGrid::with_density(self.k_min, k_max, d),
            _ => Err(Error::InvalidRange(
                "set exactly one of n_bins, bins_per_decade".into(),
            )),
        }
    }
}

pub fn make_grid(k_min: f64, k_max: f64, n_bins: usize) -> Result<WavenumberGrid> {
    WavenumberGrid::new(k_min, k_max, n_bins)
}
