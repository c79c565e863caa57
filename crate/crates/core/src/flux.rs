//! Energy flux `Π(κ) = −∫_{k_min}^κ T dk`, the transfer zero crossing and the
//! split of `T(k ≤ κ)` by partner wavenumber.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::closure::TransferResult;
use crate::error::{Error, Result};

/// Tolerance on `|∫T dk| / ε` for flux evaluation.
pub const CONSERVATION_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroCrossing {
    pub k_star: f64,
    /// Lower node of the bracketing cell.
    pub bracket: usize,
    pub sign_changes: usize,
}

impl ZeroCrossing {
    pub fn is_multiple(&self) -> bool {
        self.sign_changes > 1
    }
}

#[derive(Debug, Clone)]
pub struct FluxProfile {
    pub kappa: Vec<f64>,
    /// Backward form `−∫_{k_min}^κ T`.
    pub pi: Vec<f64>,
    /// Forward form `∫_κ^{k_max} T`.
    pub pi_forward: Vec<f64>,
    /// `−∫_{k_min}^κ T⁻⁺ dk`.
    pub pi_minus_plus: Vec<f64>,
    pub t: Vec<f64>,
    pub k_star: Option<ZeroCrossing>,
    pub pi_max: f64,
    pub pi_max_node: usize,
    pub pi_max_over_eps: f64,
}

impl FluxProfile {
    /// Node nearest `k_star` in log distance.
    pub fn k_star_node(&self) -> Option<usize> {
        let zc = self.k_star?;
        let i = zc.bracket;
        let lo = (zc.k_star / self.kappa[i]).ln();
        let hi = (self.kappa[i + 1] / zc.k_star).ln();
        Some(if lo <= hi { i } else { i + 1 })
    }

    /// Writes CSV `kappa,Pi,Pi_minus_plus,T,k_star_flag`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "kappa,Pi,Pi_minus_plus,T,k_star_flag")?;
        let star = self.k_star_node();
        for i in 0..self.kappa.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{}",
                self.kappa[i],
                self.pi[i],
                self.pi_minus_plus[i],
                self.t[i],
                u8::from(star == Some(i))
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PartitionedTransfer {
    pub node: usize,
    pub t_minus_minus: Vec<f64>,
    pub t_minus_plus: Vec<f64>,
}

fn scale(tr: &TransferResult) -> f64 {
    if tr.dissipation > 0.0 {
        tr.dissipation
    } else {
        1.0
    }
}

/// Peak of `−∫T` over the grid nodes, with its node.
pub fn peak_flux(tr: &TransferResult) -> (f64, usize) {
    let cum = tr.grid.cumulative(&tr.t);
    let mut best = (0.0, 0);
    for (i, c) in cum.iter().enumerate() {
        if -c > best.0 {
            best = (-c, i);
        }
    }
    best
}

pub fn flux_profile(tr: &TransferResult) -> Result<FluxProfile> {
    let g = &tr.grid;
    let eps = scale(tr);
    if !(tr.conservation_defect.abs() <= CONSERVATION_TOLERANCE) {
        return Err(Error::ConservationViolated(tr.conservation_defect));
    }
    let n = tr.n();
    let pi: Vec<f64> = g.cumulative(&tr.t).into_iter().map(|c| -c).collect();
    let pi_forward: Vec<f64> = (0..n).map(|i| g.upper_integral(&tr.t, i)).collect();
    for (a, b) in pi.iter().zip(&pi_forward) {
        if (a - b).abs() > CONSERVATION_TOLERANCE * eps {
            return Err(Error::ConservationViolated((a - b) / eps));
        }
    }
    let pi_minus_plus = (0..n)
        .map(|node| {
            let p = partitioned_transfer(tr, node)?;
            let lw = g.lower_weights(node);
            Ok(-lw.iter().zip(&p.t_minus_plus).map(|(w, v)| w * v).sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?;
    let (pi_max, pi_max_node) = pi
        .iter()
        .enumerate()
        .fold((f64::NEG_INFINITY, 0), |acc, (i, v)| if *v > acc.0 { (*v, i) } else { acc });
    Ok(FluxProfile {
        kappa: g.nodes().to_vec(),
        pi_max_over_eps: if tr.dissipation > 0.0 { pi_max / tr.dissipation } else { 0.0 },
        pi,
        pi_forward,
        pi_minus_plus,
        t: tr.t.clone(),
        k_star: zero_crossing(tr).ok(),
        pi_max,
        pi_max_node,
    })
}

/// Flux through the interface just above node `n`: `−Σ_{i≤n} w_i T_i`.
pub fn flux_between(tr: &TransferResult, n: usize) -> f64 {
    let w = tr.grid.weights();
    -(0..=n).map(|i| w[i] * tr.t[i]).sum::<f64>()
}

/// Root of `T` interpolated linearly in `ln k`. With several sign changes the
/// one with the largest `|T|` swing is returned and the count reported.
pub fn zero_crossing(tr: &TransferResult) -> Result<ZeroCrossing> {
    let k = tr.grid.nodes();
    let t = &tr.t;
    let mut count = 0;
    let mut best: Option<(f64, usize)> = None;
    for i in 0..t.len().saturating_sub(1) {
        if t[i] * t[i + 1] < 0.0 {
            count += 1;
            let swing = t[i].abs() + t[i + 1].abs();
            if best.is_none_or(|(s, _)| swing > s) {
                best = Some((swing, i));
            }
        }
    }
    let (_, i) = best.ok_or(Error::NoSignChange)?;
    let frac = t[i] / (t[i] - t[i + 1]);
    let k_star = (k[i].ln() + frac * (k[i + 1].ln() - k[i].ln())).exp();
    Ok(ZeroCrossing {
        k_star,
        bracket: i,
        sign_changes: count,
    })
}

/// `T⁻⁻(k) = ∫_{k_min}^κ dj S(k,j)` and `T⁻⁺(k) = ∫_κ^{k_max} dj S(k,j)` for
/// nodes `k ≤ κ`, with `κ` the grid node `node`.
pub fn partitioned_transfer(tr: &TransferResult, node: usize) -> Result<PartitionedTransfer> {
    let n = tr.n();
    if node >= n {
        return Err(Error::OutOfRange {
            what: "kappa node",
            value: node as f64,
            lo: 0.0,
            hi: (n - 1) as f64,
        });
    }
    let lw = tr.grid.lower_weights(node);
    let uw = tr.grid.upper_weights(node);
    let mut mm = Vec::with_capacity(node + 1);
    let mut mp = Vec::with_capacity(node + 1);
    for i in 0..=node {
        let row = &tr.s[i * n..(i + 1) * n];
        mm.push(row.iter().zip(&lw).map(|(s, w)| s * w).sum());
        mp.push(row.iter().zip(&uw).map(|(s, w)| s * w).sum());
    }
    Ok(PartitionedTransfer {
        node,
        t_minus_minus: mm,
        t_minus_plus: mp,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::closure::{transfer_spectrum, ClosureParams};
    use crate::grid::{make_grid, WavenumberGrid};
    use crate::spectra::{initial_spectrum, InitialShape, SpectrumFamily};

    fn synthetic(grid: Arc<WavenumberGrid>, t: Vec<f64>) -> TransferResult {
        let n = grid.len();
        TransferResult {
            t,
            s: vec![0.0; n * n],
            source: vec![0.0; n],
            sink_rate: vec![0.0; n],
            conservation_defect: 0.0,
            dissipation: 1.0,
            grid,
        }
    }

    fn evaluated() -> TransferResult {
        let g = Arc::new(make_grid(1.0, 100.0, 48).unwrap());
        let shape = InitialShape {
            peak_wavenumber: 3.0,
            total_energy: 1.0,
            family: SpectrumFamily::K4,
        };
        let s = initial_spectrum(g, &shape, 0.005).unwrap();
        transfer_spectrum(&s, &ClosureParams::default()).unwrap()
    }

    #[test]
    fn zero_transfer() {
        let g = Arc::new(make_grid(1.0, 10.0, 12).unwrap());
        let p = flux_profile(&synthetic(g, vec![0.0; 12])).unwrap();
        assert!(p.pi.iter().all(|v| *v == 0.0));
        assert!(p.k_star.is_none());
    }

    #[test]
    fn two_bin_toy() {
        let g = Arc::new(make_grid(1.0, 3.0, 2).unwrap());
        let w = g.weights().to_vec();
        let a = 0.7;
        let tr = synthetic(g, vec![-a, a * w[0] / w[1]]);
        assert!((flux_between(&tr, 0) - a * w[0]).abs() < 1e-15);
        assert!(flux_between(&tr, 1).abs() < 1e-15);
    }

    #[test]
    fn synthetic_root() {
        let g = Arc::new(make_grid(1.0, 100.0, 40).unwrap());
        let root: f64 = 7.3;
        let t: Vec<f64> = g.nodes().iter().map(|k| (k / root).ln().sin()).collect();
        let zc = zero_crossing(&synthetic(g.clone(), t)).unwrap();
        assert!((zc.k_star / root).ln().abs() < g.ratio().ln());
        assert_eq!(zc.sign_changes, 1);
        assert!(matches!(
            zero_crossing(&synthetic(g, vec![1.0; 40])),
            Err(Error::NoSignChange)
        ));
    }

    #[test]
    fn multiple_crossings_flagged() {
        let g = Arc::new(make_grid(1.0, 100.0, 40).unwrap());
        let t: Vec<f64> = g.nodes().iter().map(|k| (3.0 * k.ln()).sin() * k.powf(-0.5)).collect();
        let zc = zero_crossing(&synthetic(g, t)).unwrap();
        assert!(zc.is_multiple());
    }

    #[test]
    fn closure_profile_identities() {
        let tr = evaluated();
        let p = flux_profile(&tr).unwrap();
        let eps = tr.dissipation;
        assert_eq!(p.pi[0], 0.0);
        assert!(p.pi.last().unwrap().abs() <= 1e-8 * eps);
        for (a, b) in p.pi.iter().zip(&p.pi_minus_plus) {
            assert!((a - b).abs() <= 1e-8 * eps);
        }
        let n = tr.n();
        for node in 0..n {
            let part = partitioned_transfer(&tr, node).unwrap();
            let lw = tr.grid.lower_weights(node);
            let inner: f64 = lw.iter().zip(&part.t_minus_minus).map(|(w, v)| w * v).sum();
            assert!(inner.abs() <= 1e-8 * eps);
            for i in 0..=node {
                let sum = part.t_minus_minus[i] + part.t_minus_plus[i];
                assert!((sum - tr.t[i]).abs() <= 1e-10 * tr.t[i].abs().max(1e-12 * eps));
            }
        }
        let last = partitioned_transfer(&tr, n - 1).unwrap();
        assert!(last.t_minus_plus.iter().all(|v| *v == 0.0));
        assert!(partitioned_transfer(&tr, n).is_err());
    }

    #[test]
    fn conservation_gate() {
        let g = Arc::new(make_grid(1.0, 10.0, 12).unwrap());
        let mut tr = synthetic(g, vec![1.0; 12]);
        tr.conservation_defect = 1e-3;
        assert!(matches!(flux_profile(&tr), Err(Error::ConservationViolated(_))));
    }
}
