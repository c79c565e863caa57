//! Closed-form oracles: laminar plane Poiseuille flow and the Kolmogorov
//! wavenumber at fixed dissipation.
//!
//! Channel quantities are per unit width and density, with `mu` the dynamic
//! viscosity and `P` the magnitude of the pressure gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelFlowCase {
    pressure_gradient: f64,
    mu: f64,
    half_height: f64,
    bulk_velocity: f64,
}

fn check(name: &'static str, v: f64, allow_zero: bool) -> Result<()> {
    let ok = v.is_finite() && (v > 0.0 || (allow_zero && v == 0.0));
    if ok {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            what: name,
            value: v,
            lo: 0.0,
            hi: f64::INFINITY,
        })
    }
}

impl ChannelFlowCase {
    /// Bulk velocity from the driving gradient: `U = P h² / (3μ)`.
    pub fn from_pressure(p: f64, mu: f64, h: f64) -> Result<Self> {
        check("pressure_gradient", p, true)?;
        check("mu", mu, false)?;
        check("half_height", h, false)?;
        Ok(Self {
            pressure_gradient: p,
            mu,
            half_height: h,
            bulk_velocity: p * h * h / (3.0 * mu),
        })
    }

    /// Gradient needed for a given bulk velocity: `P = 3μU / h²`.
    pub fn from_bulk(u: f64, mu: f64, h: f64) -> Result<Self> {
        check("bulk_velocity", u, true)?;
        check("mu", mu, false)?;
        check("half_height", h, false)?;
        Ok(Self {
            pressure_gradient: 3.0 * mu * u / (h * h),
            mu,
            half_height: h,
            bulk_velocity: u,
        })
    }

    /// The consistent channel carrying flow rate `Q` under gradient `P`:
    /// `h³ = 3μQ / (2P)` and `U = Q / (2h)`.
    pub fn from_flow(q: f64, p: f64, mu: f64) -> Result<Self> {
        check("flow_rate", q, false)?;
        check("pressure_gradient", p, false)?;
        check("mu", mu, false)?;
        let h = (1.5 * mu * q / p).cbrt();
        Ok(Self {
            pressure_gradient: p,
            mu,
            half_height: h,
            bulk_velocity: q / (2.0 * h),
        })
    }

    pub fn pressure_gradient(&self) -> f64 {
        self.pressure_gradient
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn half_height(&self) -> f64 {
        self.half_height
    }
    pub fn bulk_velocity(&self) -> f64 {
        self.bulk_velocity
    }
    /// `Q = 2hU`.
    pub fn flow_rate(&self) -> f64 {
        2.0 * self.half_height * self.bulk_velocity
    }
}

/// `u(y) = (P/2μ)(h² − y²)`.
pub fn poiseuille_profile(case: &ChannelFlowCase, y: f64) -> Result<f64> {
    let h = case.half_height;
    if !(y.abs() <= h) {
        return Err(Error::OutOfChannel { y, h });
    }
    Ok(case.pressure_gradient / (2.0 * case.mu) * (h * h - y * y))
}

/// Same profile from the bulk velocity: `(3U/2h²)(h² − y²)`.
pub fn poiseuille_profile_bulk(case: &ChannelFlowCase, y: f64) -> Result<f64> {
    let h = case.half_height;
    if !(y.abs() <= h) {
        return Err(Error::OutOfChannel { y, h });
    }
    Ok(1.5 * case.bulk_velocity / (h * h) * (h * h - y * y))
}

/// Dissipation per unit area `6μU²/h`.
pub fn poiseuille_dissipation(case: &ChannelFlowCase) -> f64 {
    6.0 * case.mu * case.bulk_velocity.powi(2) / case.half_height
}

/// `∫ μ (du/dy)² dy` across the channel by composite Simpson, exact for the
/// quadratic integrand.
pub fn dissipation_quadrature(case: &ChannelFlowCase) -> f64 {
    let h = case.half_height;
    let n = 64;
    let dy = 2.0 * h / n as f64;
    let f = |y: f64| {
        let dudy = -case.pressure_gradient / case.mu * y;
        case.mu * dudy * dudy
    };
    let mut sum = f(-h) + f(h);
    for i in 1..n {
        sum += f(-h + i as f64 * dy) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * dy / 3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureWork {
    pub work: f64,
    pub dissipation: f64,
    /// `QP / ε`; undefined when both vanish.
    pub ratio: Option<f64>,
    pub warning: Option<String>,
}

/// Rate of work `Q·P`, compared with the viscous dissipation of the case.
pub fn pressure_work(case: &ChannelFlowCase, q: f64) -> PressureWork {
    let work = q * case.pressure_gradient;
    let dissipation = poiseuille_dissipation(case);
    let expected = case.flow_rate();
    let consistent = (q - expected).abs() <= 1e-12 * expected.abs().max(q.abs());
    PressureWork {
        work,
        dissipation,
        ratio: (dissipation > 0.0).then(|| work / dissipation),
        warning: (!consistent).then(|| format!("Q = {q} differs from the case flow rate {expected}")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchelorTable {
    pub eps: f64,
    pub rows: Vec<(f64, f64)>,
    /// Least-squares slope of `ln k_d` against `ln ν`.
    pub slope: f64,
    pub diverging: bool,
}

/// `k_d = (ε/ν³)^{1/4}` along a descending viscosity list.
pub fn batchelor_limit_table(eps: f64, nu_list: &[f64]) -> Result<BatchelorTable> {
    check("eps", eps, false)?;
    if nu_list.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidState("viscosities must be positive".into()));
    }
    if nu_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidState("viscosities must be descending".into()));
    }
    let rows: Vec<(f64, f64)> = nu_list.iter().map(|&nu| (nu, (eps / nu.powi(3)).powf(0.25))).collect();
    let slope = if rows.len() >= 2 {
        let pts: Vec<(f64, f64)> = rows.iter().map(|(a, b)| (a.ln(), b.ln())).collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    } else {
        f64::NAN
    };
    Ok(BatchelorTable {
        eps,
        diverging: rows.windows(2).all(|w| w[1].1 > w[0].1),
        rows,
        slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn profile_points() {
        let c = ChannelFlowCase::from_bulk(2.0, 0.3, 1.5).unwrap();
        assert_eq!(poiseuille_profile(&c, 1.5).unwrap(), 0.0);
        assert_eq!(poiseuille_profile(&c, -1.5).unwrap(), 0.0);
        assert!(close(poiseuille_profile(&c, 0.0).unwrap(), 3.0, 1e-14));
        assert!(matches!(poiseuille_profile(&c, 1.6), Err(Error::OutOfChannel { .. })));
        // channel average
        let n = 64;
        let dy = 3.0 / n as f64;
        let mut s = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * poiseuille_profile(&c, -1.5 + i as f64 * dy).unwrap();
        }
        assert!(close(s * dy / 3.0 / 3.0, 2.0, 1e-12));
    }

    #[test]
    fn dissipation_values() {
        let c = ChannelFlowCase::from_bulk(1.0, 1.0, 1.0).unwrap();
        assert_eq!(poiseuille_dissipation(&c), 6.0);
        let d = ChannelFlowCase::from_bulk(2.0, 1.0, 1.0).unwrap();
        assert_eq!(poiseuille_dissipation(&d), 24.0);
        assert!(close(dissipation_quadrature(&c), 6.0, 1e-12));
    }

    #[test]
    fn work_cases() {
        let c = ChannelFlowCase::from_pressure(3.0, 0.5, 0.8).unwrap();
        let w = pressure_work(&c, c.flow_rate());
        assert!(close(w.ratio.unwrap(), 1.0, 1e-12));
        assert!(w.warning.is_none());
        let w2 = pressure_work(&c, 2.0 * c.flow_rate());
        assert!(close(w2.ratio.unwrap(), 2.0, 1e-12));
        assert!(w2.warning.is_some());
        let still = ChannelFlowCase::from_pressure(0.0, 0.5, 0.8).unwrap();
        assert_eq!(still.flow_rate(), 0.0);
        let w0 = pressure_work(&still, still.flow_rate());
        assert_eq!(w0.work, 0.0);
        assert!(w0.ratio.is_none());
    }

    #[test]
    fn viscosity_bearing_dissipation() {
        // Q and P fixed: ε = QP for every μ, but the flow that realises it
        // changes with μ, and at fixed (U, h) ε scales with μ.
        let (q, p) = (2.0, 5.0);
        let mut last_h = 0.0;
        for mu in [0.01, 0.1, 1.0] {
            let c = ChannelFlowCase::from_flow(q, p, mu).unwrap();
            assert!(close(poiseuille_dissipation(&c), q * p, 1e-12));
            assert!(close(c.pressure_gradient(), 3.0 * mu * c.bulk_velocity() / c.half_height().powi(2), 1e-12));
            assert!(c.half_height() > last_h);
            last_h = c.half_height();
        }
        let a = ChannelFlowCase::from_bulk(1.0, 0.1, 1.0).unwrap();
        let b = ChannelFlowCase::from_bulk(1.0, 0.2, 1.0).unwrap();
        assert!(close(poiseuille_dissipation(&b), 2.0 * poiseuille_dissipation(&a), 1e-12));
    }

    #[test]
    fn batchelor_table() {
        let t = batchelor_limit_table(1.0, &[1.0, 1.0 / 16.0, 1e-3]).unwrap();
        assert_eq!(t.rows[0].1, 1.0);
        assert!(close(t.rows[1].1, 8.0, 1e-12));
        assert!(close(t.slope, -0.75, 1e-12));
        assert!(t.diverging);
        assert!(batchelor_limit_table(1.0, &[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn profile_forms_agree(p in 0.01f64..100.0, mu in 1e-3f64..10.0, h in 0.01f64..10.0, f in -1.0f64..1.0) {
            let c = ChannelFlowCase::from_pressure(p, mu, h).unwrap();
            let y = f * h;
            let a = poiseuille_profile(&c, y).unwrap();
            let b = poiseuille_profile_bulk(&c, y).unwrap();
            prop_assert!((a - b).abs() <= 1e-14 * poiseuille_profile(&c, 0.0).unwrap());
            prop_assert!(close(dissipation_quadrature(&c), poiseuille_dissipation(&c), 1e-12));
            prop_assert!(close(pressure_work(&c, c.flow_rate()).ratio.unwrap(), 1.0, 1e-12));
        }
    }
}
