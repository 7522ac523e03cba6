//! Immediate rewards of the three actions.

use crate::belief::{tx_branches, TxChannelModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    /// Cost per time unit of staying idle, `K_I`.
    pub k_idle: f64,
    /// Cost per time unit of sensing, `K_S`.
    pub k_sense: f64,
    /// Cost per time unit of transmitting, `K_T`.
    pub k_tx: f64,
    /// Reward per time unit of delivered payload, `R`.
    pub reward_rate: f64,
    /// Per-transmission overhead `α`, in time units.
    pub overhead: f64,
    /// Collision cost per time unit at full protection.
    pub c_collision_max: f64,
    /// Interference tolerance in `[0, 1]`: 0 is full protection, 1 none.
    pub gamma: f64,
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("costs.k_idle", self.k_idle),
            ("costs.k_sense", self.k_sense),
            ("costs.k_tx", self.k_tx),
            ("costs.reward", self.reward_rate),
            ("costs.overhead", self.overhead),
            ("costs.c_collision_max", self.c_collision_max),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(key, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config(
                "costs.gamma",
                format!("must lie in [0, 1], got {}", self.gamma),
            ));
        }
        Ok(())
    }

    pub fn with_gamma(self, gamma: f64) -> Self {
        Self { gamma, ..self }
    }
}

pub fn idle_reward(cm: &CostModel, idle: f64) -> f64 {
    -cm.k_idle * idle
}

pub fn sense_reward(cm: &CostModel, sense: f64) -> f64 {
    -cm.k_sense * sense
}

/// Collision cost rate `C_C = C_Cmax (1 - γ)`.
pub fn collision_cost(cm: &CostModel) -> f64 {
    cm.c_collision_max * (1.0 - cm.gamma)
}

/// Expected immediate reward of transmitting for `tx` time units when the
/// channel is idle throughout with probability `pq`.
///
/// A transmission no longer than the overhead carries no payload; `tx`
/// strictly shorter than the overhead is rejected.
pub fn tx_immediate_reward(cm: &CostModel, ch: &TxChannelModel, pq: f64, tx: f64) -> Result<f64> {
    if tx < cm.overhead {
        return Err(Error::config(
            "bounds.tx_min",
            format!("transmission time {tx} is shorter than the overhead {}", cm.overhead),
        ));
    }
    Ok(tx_reward_unchecked(cm, ch, pq, tx))
}

#[inline]
pub(crate) fn tx_reward_unchecked(cm: &CostModel, ch: &TxChannelModel, pq: f64, tx: f64) -> f64 {
    let (ack, _) = tx_branches(pq, ch);
    let payload = (tx - cm.overhead).max(0.0);
    ack.weight * cm.reward_rate * payload - (1.0 - pq) * collision_cost(cm) * tx - cm.k_tx * tx
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn baseline_costs(gamma: f64) -> CostModel {
        CostModel {
            k_idle: 0.001,
            k_sense: 0.1,
            k_tx: 0.1,
            reward_rate: 1.0,
            overhead: 1.0,
            c_collision_max: 20.0,
            gamma,
        }
    }

    #[test]
    fn idle_and_sense_examples() {
        let cm = baseline_costs(0.5);
        assert!((idle_reward(&cm, 5.0) + 0.005).abs() < 1e-15);
        assert!((idle_reward(&cm, 10.0) + 0.01).abs() < 1e-15);
        assert_eq!(idle_reward(&CostModel { k_idle: 0.0, ..cm }, 7.0), 0.0);
        assert!((sense_reward(&cm, 1.0) + 0.1).abs() < 1e-15);
        assert!((sense_reward(&cm, 0.5) + 0.05).abs() < 1e-15);
        assert!((sense_reward(&CostModel { k_sense: 0.01, ..cm }, 10.0) + 0.1).abs() < 1e-15);
    }

    #[test]
    fn collision_cost_examples() {
        assert_eq!(collision_cost(&baseline_costs(0.0)), 20.0);
        assert_eq!(collision_cost(&baseline_costs(1.0)), 0.0);
        assert_eq!(collision_cost(&baseline_costs(0.5)), 10.0);
    }

    #[test]
    fn tx_reward_examples() {
        let ch = TxChannelModel::ideal();
        let r = tx_immediate_reward(&baseline_costs(0.0), &ch, 1.0, 10.0).unwrap();
        assert!((r - 8.0).abs() < 1e-12);
        let r = tx_immediate_reward(&baseline_costs(0.0), &ch, 0.0, 10.0).unwrap();
        assert!((r + 201.0).abs() < 1e-12);
        let r = tx_immediate_reward(&baseline_costs(0.5), &ch, 0.5, 7.0).unwrap();
        assert!((r + 32.7).abs() < 1e-12);
        // No payload exactly at the overhead.
        let r = tx_immediate_reward(&baseline_costs(1.0), &ch, 1.0, 1.0).unwrap();
        assert!((r + 0.1).abs() < 1e-15);
        assert!(tx_immediate_reward(&baseline_costs(1.0), &ch, 1.0, 0.5)
            .unwrap_err()
            .is_config());
    }

    #[test]
    fn validation() {
        assert!(baseline_costs(0.3).validate().is_ok());
        assert!(baseline_costs(1.2).validate().is_err());
        assert!(CostModel {
            k_tx: -1.0,
            ..baseline_costs(0.0)
        }
        .validate()
        .is_err());
    }

    proptest! {
        #[test]
        fn tx_reward_matches_sampled_expectation(pq in 0.0f64..=1.0, tt in 1.0f64..30.0, g in 0.0f64..=1.0) {
            // The reward of one draw: collision if the channel was not idle
            // throughout, payload only on an ACK.
            let cm = baseline_costs(g);
            let ch = TxChannelModel::new(0.1, 0.9).unwrap();
            let outcome = |idle: bool, ack: bool| {
                let pay = if ack { tt - 1.0 } else { 0.0 };
                let coll = if idle { 0.0 } else { collision_cost(&cm) * tt };
                pay - coll - 0.1 * tt
            };
            let expect = pq * ((1.0 - ch.p_nc) * outcome(true, true) + ch.p_nc * outcome(true, false))
                + (1.0 - pq) * ((1.0 - ch.p_c) * outcome(false, true) + ch.p_c * outcome(false, false));
            let r = tx_immediate_reward(&cm, &ch, pq, tt).unwrap();
            prop_assert!((r - expect).abs() < 1e-9);
        }

        #[test]
        fn tx_reward_nondecreasing_in_gamma(pq in 0.0f64..=1.0, tt in 1.0f64..30.0, g in 0.0f64..0.9, dg in 0.0f64..0.1) {
            let ch = TxChannelModel::ideal();
            let a = tx_immediate_reward(&baseline_costs(g), &ch, pq, tt).unwrap();
            let b = tx_immediate_reward(&baseline_costs(g + dg), &ch, pq, tt).unwrap();
            prop_assert!(b >= a - 1e-12);
        }

        #[test]
        fn rewards_linear_in_duration(d1 in 0.1f64..50.0, d2 in 0.1f64..50.0) {
            let cm = baseline_costs(0.5);
            prop_assert!((idle_reward(&cm, d1 + d2) - idle_reward(&cm, d1) - idle_reward(&cm, d2)).abs() < 1e-12);
            prop_assert!((sense_reward(&cm, d1 + d2) - sense_reward(&cm, d1) - sense_reward(&cm, d2)).abs() < 1e-12);
        }
    }
}
