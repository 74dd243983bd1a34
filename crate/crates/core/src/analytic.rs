//! Closed-form rates for weak-pulse BB84 and SARG04 over a depolarizing,
//! lossy channel.
//!
//! With F = (1+V)/2, D = (1−V)/2, η = η_d·t and p̄_d = 1 − p_d:
//!
//! ```text
//! Q_BB84   = D / (F + D)          = (1 − V) / 2
//! Q_SARG04 = D / (½ + D)          = (1 − V) / (2 − V)
//! R_BB84   = ½ (1 − p̄_d² e^{−μη})
//! R_SARG04 = ½ (1 + ½p̄_d e^{−μFη} − ½p̄_d e^{−μDη} − p̄_d² e^{−μη})
//! R·Q      = ¼ (1 + p̄_d e^{−μFη} − p̄_d e^{−μDη} − p̄_d² e^{−μη})   (both protocols)
//! ```
//!
//! The mean QBER Q_μ of a weak-pulse source is the last line divided by the
//! protocol's sifted rate.

use serde::{Deserialize, Serialize};

use crate::error::{check_non_negative, QkdError, Result};
use crate::types::{Protocol, PulseParams, Visibility};

/// (F, D) for a visibility given as a raw number.
pub fn fidelity_disturbance(v: f64) -> Result<(f64, f64)> {
    let v = Visibility::new(v)?;
    Ok((v.fidelity(), v.disturbance()))
}

/// t = 10^(−αl/10) for attenuation `alpha` (dB/km) over `length` km.
pub fn transmission(alpha_db_per_km: f64, length_km: f64) -> Result<f64> {
    check_non_negative("attenuation", alpha_db_per_km)?;
    check_non_negative("length", length_km)?;
    Ok(10f64.powf(-alpha_db_per_km * length_km / 10.0))
}

/// Net visibility of two independent flip channels in cascade.
///
/// The flips compose to D = D₁ + D₂ − 2D₁D₂, i.e. 1 − 2D = (1 − 2D₁)(1 − 2D₂).
pub fn compose_visibility(v1: Visibility, v2: Visibility) -> Visibility {
    // The product of two values in [0, 1] stays in [0, 1].
    Visibility::new(v1.value() * v2.value()).expect("product of visibilities is a visibility")
}

pub fn qber_bb84(v: Visibility) -> f64 {
    (1.0 - v.value()) / 2.0
}

pub fn qber_sarg04(v: Visibility) -> f64 {
    (1.0 - v.value()) / (2.0 - v.value())
}

/// Channel-only QBER (no dark counts, single photons).
pub fn qber_channel(protocol: Protocol, v: Visibility) -> f64 {
    match protocol {
        Protocol::Bb84 => qber_bb84(v),
        Protocol::Sarg04 => qber_sarg04(v),
    }
}

/// Sifted bits per pulse for BB84; independent of V.
pub fn sifted_rate_bb84(p: &PulseParams) -> f64 {
    let pb = p.no_dark();
    0.5 * (1.0 - pb * pb * (-p.mu * p.eta).exp())
}

/// Sifted bits per pulse for SARG04.
pub fn sifted_rate_sarg04(p: &PulseParams, v: Visibility) -> f64 {
    let pb = p.no_dark();
    let f = v.fidelity();
    let d = v.disturbance();
    0.5 * (1.0 + 0.5 * pb * (-p.mu * f * p.eta).exp()
        - 0.5 * pb * (-p.mu * d * p.eta).exp()
        - pb * pb * (-p.mu * p.eta).exp())
}

pub fn sifted_rate(protocol: Protocol, p: &PulseParams, v: Visibility) -> f64 {
    match protocol {
        Protocol::Bb84 => sifted_rate_bb84(p),
        Protocol::Sarg04 => sifted_rate_sarg04(p, v),
    }
}

/// Erroneous sifted bits per pulse, R_μ·Q_μ; the same for both protocols.
///
/// Evaluated as ¼(1 + p̄_d e^{−μFη})(1 − p̄_d e^{−μDη}), which expands to the
/// four-term form because the cross term is p̄_d² e^{−μη}. The second factor
/// goes through `expm1` so a clean channel gives exactly zero.
pub fn overall_error_rate(p: &PulseParams, v: Visibility) -> f64 {
    let pb = p.no_dark();
    let f = v.fidelity();
    let d = v.disturbance();
    let silent_correct = pb * (-p.mu * f * p.eta).exp();
    let wrong_fires = p.dark_count - pb * (-p.mu * d * p.eta).exp_m1();
    0.25 * (1.0 + silent_correct) * wrong_fires
}

/// Mean QBER Q_μ over the photon-number distribution, including dark counts.
pub fn qber_avg(protocol: Protocol, p: &PulseParams, v: Visibility) -> Result<f64> {
    let rate = sifted_rate(protocol, p, v);
    if rate <= 0.0 {
        return Err(QkdError::UndefinedQber);
    }
    Ok(overall_error_rate(p, v) / rate)
}

/// Every closed-form quantity at one (V, μ, η, p_d) point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticPoint {
    pub visibility: f64,
    pub mu: f64,
    pub eta: f64,
    pub dark_count: f64,
    pub q_bb84: f64,
    pub q_sarg04: f64,
    pub r_bb84: f64,
    pub r_sarg04: f64,
    pub overall_error: f64,
    pub q_mu_bb84: f64,
    pub q_mu_sarg04: f64,
}

impl AnalyticPoint {
    pub fn evaluate(p: &PulseParams, v: Visibility) -> Result<Self> {
        Ok(AnalyticPoint {
            visibility: v.value(),
            mu: p.mu,
            eta: p.eta,
            dark_count: p.dark_count,
            q_bb84: qber_bb84(v),
            q_sarg04: qber_sarg04(v),
            r_bb84: sifted_rate_bb84(p),
            r_sarg04: sifted_rate_sarg04(p, v),
            overall_error: overall_error_rate(p, v),
            q_mu_bb84: qber_avg(Protocol::Bb84, p, v)?,
            q_mu_sarg04: qber_avg(Protocol::Sarg04, p, v)?,
        })
    }
}

/// Poisson tail P(n ≥ k) for mean `mu`, summed upward so small tails keep
/// full relative precision.
pub fn poisson_tail(mu: f64, k: u32) -> Result<f64> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(QkdError::InvalidParameter {
            name: "mu",
            value: mu,
            reason: "must be finite and positive",
        });
    }
    let mut term = (-mu).exp();
    for n in 1..=k {
        term *= mu / f64::from(n);
    }
    let mut sum = 0.0;
    let mut n = k;
    loop {
        sum += term;
        n += 1;
        term *= mu / f64::from(n);
        if f64::from(n) > mu && term <= sum * 1e-18 {
            break;
        }
    }
    Ok(sum.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn nominal() -> PulseParams {
        let eta = 0.4 * transmission(3.0, 1.27).unwrap();
        PulseParams::new(0.189, eta, 3.3e-5).unwrap()
    }

    fn vis(v: f64) -> Visibility {
        Visibility::new(v).unwrap()
    }

    #[test]
    fn fidelity_disturbance_examples() {
        assert_eq!(fidelity_disturbance(1.0).unwrap(), (1.0, 0.0));
        assert_eq!(fidelity_disturbance(0.0).unwrap(), (0.5, 0.5));
        let (f, d) = fidelity_disturbance(0.954).unwrap();
        assert_relative_eq!(f, 0.977, epsilon = 1e-15);
        assert_relative_eq!(d, 0.023, epsilon = 1e-15);
        assert!(fidelity_disturbance(1.2).is_err());
    }

    #[test]
    fn transmission_examples() {
        assert_relative_eq!(transmission(3.0, 1.27).unwrap(), 0.415_910_610_494_022, epsilon = 1e-12);
        assert_eq!(transmission(3.0, 0.0).unwrap(), 1.0);
        assert_relative_eq!(transmission(10.0, 3.0).unwrap(), 1e-3, epsilon = 1e-15);
        assert!(transmission(-1.0, 1.0).is_err());
        assert!(transmission(1.0, -1.0).is_err());
    }

    #[test]
    fn compose_examples() {
        assert_relative_eq!(
            compose_visibility(vis(0.9), vis(0.954)).value(),
            0.8586,
            epsilon = 1e-12
        );
        assert_eq!(compose_visibility(vis(1.0), vis(0.37)).value(), 0.37);
        assert_relative_eq!(compose_visibility(vis(0.8), vis(0.5)).value(), 0.40, epsilon = 1e-15);
    }

    #[test]
    fn compose_matches_two_flip_table() {
        // Outcome table of two independent flips: net flip iff exactly one fires.
        for (v1, v2) in [(0.8, 0.5), (0.9, 0.954), (0.3, 0.7), (0.0, 0.6)] {
            let (d1, d2) = ((1.0 - v1) / 2.0, (1.0 - v2) / 2.0);
            let net_flip = d1 * (1.0 - d2) + (1.0 - d1) * d2;
            let composed = compose_visibility(vis(v1), vis(v2));
            assert_relative_eq!(composed.disturbance(), net_flip, epsilon = 1e-15);
        }
    }

    #[test]
    fn qber_examples() {
        assert_eq!(qber_bb84(vis(1.0)), 0.0);
        assert_relative_eq!(qber_bb84(vis(0.954)), 0.023, epsilon = 1e-15);
        assert_eq!(qber_bb84(vis(0.0)), 0.5);
        assert_eq!(qber_sarg04(vis(1.0)), 0.0);
        assert_relative_eq!(qber_sarg04(vis(0.954)), 0.043_977_055_449_330_78, epsilon = 1e-14);
        assert_eq!(qber_sarg04(vis(0.0)), 0.5);
    }

    #[test]
    fn sifted_rate_examples() {
        let p = nominal();
        assert_relative_eq!(sifted_rate_bb84(&p), 0.015_508_806_265_127_84, max_relative = 1e-12);
        assert_relative_eq!(
            sifted_rate_sarg04(&p, vis(0.954)),
            0.008_126_630_137_586_89,
            max_relative = 1e-12
        );

        let tiny = PulseParams::new(1e-6, 0.5, 0.0).unwrap();
        assert_relative_eq!(sifted_rate_bb84(&tiny), 0.25e-6, max_relative = 1e-6);
        let saturated = PulseParams::new(1e3, 1.0, 0.0).unwrap();
        assert_eq!(sifted_rate_bb84(&saturated), 0.5);

        let clean = PulseParams::new(0.189, p.eta, 0.0).unwrap();
        let e = (-clean.mu * clean.eta).exp();
        assert_relative_eq!(
            sifted_rate_sarg04(&clean, vis(1.0)),
            0.25 * (1.0 - e),
            max_relative = 1e-13
        );
        assert_relative_eq!(
            sifted_rate_sarg04(&clean, vis(1.0)),
            0.5 * sifted_rate_bb84(&clean),
            max_relative = 1e-13
        );
        assert_relative_eq!(
            sifted_rate_sarg04(&clean, vis(0.0)),
            0.5 * (1.0 - e),
            max_relative = 1e-13
        );
    }

    #[test]
    fn overall_error_examples() {
        let p = nominal();
        assert_relative_eq!(
            overall_error_rate(&p, vis(0.954)),
            3.722_270_050_229_702e-4,
            max_relative = 1e-11
        );
        let clean = PulseParams::new(0.189, p.eta, 0.0).unwrap();
        assert_eq!(overall_error_rate(&clean, vis(1.0)), 0.0);
        let tiny = PulseParams::new(1e-5, 0.3, 0.0).unwrap();
        let v = vis(0.8);
        assert_relative_eq!(
            overall_error_rate(&tiny, v),
            tiny.mu * tiny.eta * v.disturbance() / 2.0,
            max_relative = 1e-5
        );
    }

    #[test]
    fn qber_avg_examples() {
        let p = nominal();
        assert_relative_eq!(
            qber_avg(Protocol::Bb84, &p, vis(0.954)).unwrap(),
            0.024_001_009_404_568_89,
            max_relative = 1e-11
        );
        assert_relative_eq!(
            qber_avg(Protocol::Sarg04, &p, vis(0.954)).unwrap(),
            0.045_803_364_829_090,
            max_relative = 1e-11
        );
        let tiny = PulseParams::new(1e-6, 0.2, 0.0).unwrap();
        assert_relative_eq!(
            qber_avg(Protocol::Bb84, &tiny, vis(0.7)).unwrap(),
            0.15,
            max_relative = 1e-9
        );
    }

    #[test]
    fn qber_avg_rejects_zero_rate() {
        let dead = PulseParams::new(0.1, 0.0, 0.0).unwrap();
        assert_eq!(qber_avg(Protocol::Bb84, &dead, vis(0.9)), Err(QkdError::UndefinedQber));
    }

    #[test]
    fn analytic_point_invariants() {
        let p = nominal();
        for v in [0.0, 0.3, 0.6, 0.954, 1.0] {
            let pt = AnalyticPoint::evaluate(&p, vis(v)).unwrap();
            for x in [
                pt.q_bb84,
                pt.q_sarg04,
                pt.r_bb84,
                pt.r_sarg04,
                pt.overall_error,
                pt.q_mu_bb84,
                pt.q_mu_sarg04,
            ] {
                assert!((0.0..=1.0).contains(&x));
            }
            assert!(pt.r_bb84 >= pt.r_sarg04);
            assert!(pt.q_mu_bb84 >= pt.q_bb84);
            assert!(pt.q_mu_sarg04 >= pt.q_sarg04);
        }
    }

    #[test]
    fn poisson_tail_values() {
        assert_relative_eq!(
            poisson_tail(0.189, 2).unwrap(),
            0.015_761_843_539_961_705,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            poisson_tail(0.03, 2).unwrap(),
            4.411_004_450_365_778e-4,
            max_relative = 1e-9
        );
        assert_relative_eq!(poisson_tail(0.5, 0).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(poisson_tail(1e-4, 2).unwrap(), 0.5e-8, max_relative = 1e-3);
        assert!(poisson_tail(0.0, 2).is_err());
    }
}
