//! Energy-detector reliability.
//!
//! The detector is tuned for a fixed detection probability `P_d`; its false
//! alarm probability then falls as the sensing window grows:
//!
//! ```text
//! P_fa(T_S) = Q( √(2ψ + 1) · Q⁻¹(P_d) + √(T_S · f_s) · ψ )
//! ```
//!
//! with `ψ` the linear SNR and `f_s` the number of samples per time unit.

use crate::error::{Error, Result};

/// `Q(x) = ½ erfc(x / √2)`, the standard normal upper tail.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Inverse of [`q_function`] by bisection.
pub fn q_inverse(y: f64) -> Result<f64> {
    if !(y > 0.0 && y < 1.0) {
        return Err(Error::domain(
            "q_inverse",
            format!("argument must lie in (0, 1), got {y}"),
        ));
    }
    // Q is strictly decreasing; Q(-40) rounds to 1 and Q(40) to 0.
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if q_function(mid) > y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensingModel {
    /// Target detection probability.
    pub p_d: f64,
    /// Linear SNR `ψ`.
    pub snr: f64,
    /// Samples per time unit.
    pub sample_rate: f64,
    /// Ideal detector: no false alarms, no misses.
    pub perfect: bool,
}

impl SensingModel {
    pub fn new(p_d: f64, snr: f64, sample_rate: f64) -> Result<Self> {
        if !(p_d > 0.0 && p_d < 1.0) {
            return Err(Error::config("sensing.p_d", format!("must lie in (0, 1), got {p_d}")));
        }
        if !(snr > 0.0 && snr.is_finite()) {
            return Err(Error::config(
                "sensing.snr_db",
                format!("linear SNR must be positive, got {snr}"),
            ));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::config(
                "sensing.sample_rate",
                format!("must be positive, got {sample_rate}"),
            ));
        }
        Ok(Self {
            p_d,
            snr,
            sample_rate,
            perfect: false,
        })
    }

    pub fn perfect() -> Self {
        Self {
            p_d: 0.9,
            snr: db_to_linear(-25.0),
            sample_rate: 31_250.0,
            perfect: true,
        }
    }

    /// Detection probability in effect (1 for the ideal detector).
    pub fn detection_prob(&self) -> f64 {
        if self.perfect {
            1.0
        } else {
            self.p_d
        }
    }
}

/// False-alarm probability of a sensing window of length `sense`.
pub fn false_alarm_prob(model: &SensingModel, sense: f64) -> Result<f64> {
    if !(sense > 0.0) {
        return Err(Error::domain(
            "false_alarm_prob",
            format!("T_S must be > 0, got {sense}"),
        ));
    }
    if model.perfect {
        return Ok(0.0);
    }
    Ok(false_alarm_with_quantile(model, q_inverse(model.p_d)?, sense))
}

/// [`false_alarm_prob`] with `Q⁻¹(P_d)` supplied by the caller.
pub(crate) fn false_alarm_with_quantile(model: &SensingModel, qinv_pd: f64, sense: f64) -> f64 {
    if model.perfect {
        return 0.0;
    }
    let psi = model.snr;
    q_function((2.0 * psi + 1.0).sqrt() * qinv_pd + (sense * model.sample_rate).sqrt() * psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Reference values from a 40-digit arbitrary-precision evaluation.
    const Q_REF: &[(f64, f64)] = &[
        (0.0, 0.5),
        (1.96, 0.024997895148220434),
        (3.0, 0.0013498980316300946),
        (-1.5, 0.9331927987311419),
        (6.0, 9.86587645037698e-10),
    ];

    fn reference_detector() -> SensingModel {
        SensingModel::new(0.9, db_to_linear(-25.0), 31_250.0).unwrap()
    }

    #[test]
    fn q_function_reference_values() {
        for &(x, q) in Q_REF {
            assert!((q_function(x) - q).abs() <= 1e-12, "Q({x})");
        }
    }

    #[test]
    fn q_inverse_reference_value() {
        assert!((q_inverse(0.9).unwrap() + 1.2815515655446004).abs() < 1e-12);
        assert!(q_inverse(0.0).is_err());
        assert!(q_inverse(1.0).is_err());
    }

    #[test]
    fn false_alarm_reference_values() {
        let m = reference_detector();
        for (ts, pfa) in [
            (1.0, 0.766258604922452),
            (2.0, 0.6897099578732878),
            (5.0, 0.5141984686640792),
            (7.0, 0.423314186486186),
            (10.0, 0.3148428939778046),
        ] {
            assert!((false_alarm_prob(&m, ts).unwrap() - pfa).abs() < 1e-12, "T_S={ts}");
        }
        assert!(false_alarm_prob(&m, 0.0).is_err());
        assert_eq!(false_alarm_prob(&SensingModel::perfect(), 3.0).unwrap(), 0.0);
    }

    #[test]
    fn snr_db_round_trip() {
        for db in [-40.0, -25.0, 0.0, 3.0, 17.5] {
            assert!((linear_to_db(db_to_linear(db)) - db).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn q_inverse_round_trip(x in -5.0f64..6.0) {
            let back = q_inverse(q_function(x)).unwrap();
            prop_assert!((back - x).abs() < 1e-9, "{x} -> {back}");
        }

        // Below -5 the value Q(x) sits so close to 1 that f64 no longer
        // separates neighbouring x; the residual in y is what can be checked.
        #[test]
        fn q_inverse_residual_deep_left_tail(x in -6.0f64..-5.0) {
            let y = q_function(x);
            let back = q_inverse(y).unwrap();
            prop_assert!((q_function(back) - y).abs() <= 2.0 * f64::EPSILON);
        }

        #[test]
        fn false_alarm_decreases_with_window(a in 0.01f64..200.0, d in 0.01f64..50.0) {
            let m = reference_detector();
            let p1 = false_alarm_prob(&m, a).unwrap();
            let p2 = false_alarm_prob(&m, a + d).unwrap();
            prop_assert!(p1 > 0.0 && p1 < 1.0);
            prop_assert!(p2 < p1);
        }

        #[test]
        fn false_alarm_is_continuous(a in 0.01f64..200.0) {
            let m = reference_detector();
            let p1 = false_alarm_prob(&m, a).unwrap();
            let p2 = false_alarm_prob(&m, a + 1e-9).unwrap();
            prop_assert!((p1 - p2).abs() < 1e-6);
        }
    }
}
