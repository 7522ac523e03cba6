//! Bayesian belief updates for the three actions.
//!
//! The secondary tracks `p`, its belief that the primary is idle, together
//! with the time `t` since the primary was last seen going quiet. Each action
//! takes some time, may produce an observation, and moves the belief.
//!
//! Sensing and transmitting both depend on `p · q`, the chance that the
//! channel is idle now and stays idle for the whole action, where `q` is the
//! persistence of the off period (see [`crate::traffic::q_remain`]).

use crate::error::{Error, Result};
use crate::sensing::{false_alarm_prob, SensingModel};
use crate::traffic::{q_remain, HoldDistribution, OccupancyTable};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Belief {
    /// Probability that the primary is idle.
    pub p: f64,
    /// Time since the last observed busy-to-idle switch.
    pub t: f64,
}

impl Belief {
    pub fn new(p: f64, t: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain("Belief", format!("p must lie in [0, 1], got {p}")));
        }
        if !(t >= 0.0) {
            return Err(Error::domain("Belief", format!("t must be >= 0, got {t}")));
        }
        Ok(Self { p, t })
    }
}

/// ACK/NACK reliability of the secondary's own link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TxChannelModel {
    /// NACK probability when there was no collision.
    pub p_nc: f64,
    /// NACK probability after a collision.
    pub p_c: f64,
}

impl TxChannelModel {
    pub fn new(p_nc: f64, p_c: f64) -> Result<Self> {
        for (key, v) in [("channel.p_nc", p_nc), ("channel.p_c", p_c)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(key, format!("must lie in [0, 1], got {v}")));
            }
        }
        if p_c < p_nc {
            return Err(Error::config(
                "channel.p_c",
                format!("p_c ({p_c}) must be >= p_nc ({p_nc}) so that a NACK signals a collision"),
            ));
        }
        Ok(Self { p_nc, p_c })
    }

    /// Feedback that reveals collisions exactly.
    pub fn ideal() -> Self {
        Self { p_nc: 0.0, p_c: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SenseOutcome {
    Free,
    Busy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TxOutcome {
    Ack,
    Nack,
}

/// Probability of an observation together with the posterior it leads to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub weight: f64,
    pub posterior: f64,
}

/// Generic two-outcome kernel. `pq` is the probability the channel stays idle
/// throughout; `idle_first` / `busy_first` are the chances of the first
/// outcome under each hypothesis. Returns the first and second branches.
///
/// A branch of zero weight gets posterior 0; it never contributes to an
/// expectation.
#[inline]
pub fn split(pq: f64, idle_first: f64, busy_first: f64) -> (Branch, Branch) {
    let joint_first = pq * idle_first;
    let joint_second = pq * (1.0 - idle_first);
    let w_first = joint_first + (1.0 - pq) * busy_first;
    let w_second = 1.0 - w_first;
    let post = |num: f64, w: f64| if w > 0.0 { (num / w).clamp(0.0, 1.0) } else { 0.0 };
    (
        Branch {
            weight: w_first,
            posterior: post(joint_first, w_first),
        },
        Branch {
            weight: w_second,
            posterior: post(joint_second, w_second),
        },
    )
}

/// Sensing branches `(Free, Busy)` for idle-and-stays-idle probability `pq`.
#[inline]
pub fn sense_branches(pq: f64, p_fa: f64, p_d: f64) -> (Branch, Branch) {
    split(pq, 1.0 - p_fa, 1.0 - p_d)
}

/// Transmission branches `(Ack, Nack)`.
#[inline]
pub fn tx_branches(pq: f64, ch: &TxChannelModel) -> (Branch, Branch) {
    split(pq, 1.0 - ch.p_nc, 1.0 - ch.p_c)
}

fn persistence(dist_off: &HoldDistribution, t: f64, duration: f64) -> Result<f64> {
    Ok(q_remain(dist_off, t, duration)?.value)
}

/// Belief after staying idle for `idle` time units.
pub fn update_idle(b: Belief, idle: f64, occ: &OccupancyTable) -> Result<Belief> {
    if !(idle > 0.0) {
        return Err(Error::domain("update_idle", format!("T_I must be > 0, got {idle}")));
    }
    let p00 = occ.p00_at(idle)?;
    let p10 = occ.p10_at(idle)?;
    Ok(Belief {
        p: (b.p * p00 + (1.0 - b.p) * p10).clamp(0.0, 1.0),
        t: b.t + idle,
    })
}

/// `(w_F, w_B)`: probabilities of a Free and a Busy sensing result.
pub fn sense_outcome_probs(
    b: Belief,
    sense: f64,
    sm: &SensingModel,
    dist_off: &HoldDistribution,
) -> Result<(f64, f64)> {
    let pq = b.p * persistence(dist_off, b.t, sense)?;
    let (free, busy) = sense_branches(pq, false_alarm_prob(sm, sense)?, sm.detection_prob());
    Ok((free.weight, busy.weight))
}

pub fn update_sense(
    b: Belief,
    sense: f64,
    outcome: SenseOutcome,
    sm: &SensingModel,
    dist_off: &HoldDistribution,
) -> Result<Belief> {
    let pq = b.p * persistence(dist_off, b.t, sense)?;
    let (free, busy) = sense_branches(pq, false_alarm_prob(sm, sense)?, sm.detection_prob());
    let branch = match outcome {
        SenseOutcome::Free => free,
        SenseOutcome::Busy => busy,
    };
    if branch.weight <= 0.0 {
        return Err(Error::Logic(format!(
            "sensing outcome {outcome:?} has zero probability at p={}, t={}",
            b.p, b.t
        )));
    }
    Ok(Belief {
        p: branch.posterior,
        t: b.t + sense,
    })
}

/// `(w_A, w_N)`: probabilities of an ACK and a NACK.
pub fn tx_outcome_probs(b: Belief, tx: f64, ch: &TxChannelModel, dist_off: &HoldDistribution) -> Result<(f64, f64)> {
    let pq = b.p * persistence(dist_off, b.t, tx)?;
    let (ack, nack) = tx_branches(pq, ch);
    Ok((ack.weight, nack.weight))
}

pub fn update_tx(
    b: Belief,
    tx: f64,
    outcome: TxOutcome,
    ch: &TxChannelModel,
    dist_off: &HoldDistribution,
) -> Result<Belief> {
    let pq = b.p * persistence(dist_off, b.t, tx)?;
    let (ack, nack) = tx_branches(pq, ch);
    let branch = match outcome {
        TxOutcome::Ack => ack,
        TxOutcome::Nack => nack,
    };
    if branch.weight <= 0.0 {
        return Err(Error::Logic(format!(
            "transmission outcome {outcome:?} has zero probability at p={}, t={}",
            b.p, b.t
        )));
    }
    Ok(Belief {
        p: branch.posterior,
        t: b.t + tx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::db_to_linear;
    use crate::traffic::{solve_occupancy, TrafficModel};
    use proptest::prelude::*;

    fn u1000() -> HoldDistribution {
        HoldDistribution::uniform(1000.0).unwrap()
    }

    fn detector() -> SensingModel {
        SensingModel::new(0.9, db_to_linear(-25.0), 31_250.0).unwrap()
    }

    #[test]
    fn idle_update_examples() {
        let d = u1000();
        let occ = solve_occupancy(&TrafficModel::new(d, d), 1.0, 100.0).unwrap();
        let b = update_idle(Belief::new(1.0, 0.0).unwrap(), 5.0, &occ).unwrap();
        assert_eq!(b.p, occ.p00[5]);
        assert_eq!(b.t, 5.0);
        let tiny = update_idle(Belief::new(1.0, 0.0).unwrap(), 1e-12, &occ).unwrap();
        assert!((tiny.p - 1.0).abs() < 1e-9);
        assert!(matches!(
            update_idle(Belief::new(1.0, 0.0).unwrap(), 500.0, &occ),
            Err(Error::Horizon(_))
        ));
    }

    #[test]
    fn idle_update_collapses_when_rows_agree() {
        let occ = OccupancyTable {
            dt: 1.0,
            horizon: 2.0,
            p00: vec![1.0, 0.4, 0.4],
            p10: vec![0.0, 0.4, 0.4],
        };
        let b = update_idle(Belief::new(0.5, 3.0).unwrap(), 2.0, &occ).unwrap();
        assert!((b.p - 0.4).abs() < 1e-15);
    }

    #[test]
    fn sense_probabilities_example() {
        let b = Belief::new(0.8, 200.0).unwrap();
        let (w_f, w_b) = sense_outcome_probs(b, 10.0, &detector(), &u1000()).unwrap();
        // Independent arithmetic with the exact false-alarm value.
        let pq = 0.8 * 790.0 / 800.0;
        let p_fa = 0.3148428939778046;
        let expect = pq * (1.0 - p_fa) + (1.0 - pq) * 0.1;
        assert!((w_f - expect).abs() < 1e-12);
        assert!((w_f - 0.56215).abs() < 2e-4);
        assert!((w_f + w_b - 1.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_sensing_is_decisive() {
        let d = u1000();
        let sm = SensingModel::perfect();
        let (w_f, w_b) = sense_outcome_probs(Belief::new(1.0, 0.0).unwrap(), 1.0, &sm, &d).unwrap();
        assert!((w_f - 0.999).abs() < 1e-12 && (w_b - 0.001).abs() < 1e-12);
        let (w_f, w_b) = sense_outcome_probs(Belief::new(0.0, 10.0).unwrap(), 1.0, &sm, &d).unwrap();
        assert_eq!((w_f, w_b), (0.0, 1.0));
        let b = Belief::new(0.3, 50.0).unwrap();
        assert_eq!(update_sense(b, 5.0, SenseOutcome::Free, &sm, &d).unwrap().p, 1.0);
        assert_eq!(update_sense(b, 5.0, SenseOutcome::Busy, &sm, &d).unwrap().p, 0.0);
        let zero = Belief::new(0.0, 10.0).unwrap();
        assert!(matches!(
            update_sense(zero, 1.0, SenseOutcome::Free, &sm, &d),
            Err(Error::Logic(_))
        ));
    }

    #[test]
    fn transmission_examples() {
        let d = u1000();
        let ch = TxChannelModel::ideal();
        let (w_a, _) = tx_outcome_probs(Belief::new(1.0, 200.0).unwrap(), 7.0, &ch, &d).unwrap();
        assert!((w_a - 793.0 / 800.0).abs() < 1e-15);
        let lossy = TxChannelModel::new(0.1, 0.8).unwrap();
        let (w_a, _) = tx_outcome_probs(Belief::new(0.0, 0.0).unwrap(), 7.0, &lossy, &d).unwrap();
        assert!((w_a - 0.2).abs() < 1e-15);
        let b = Belief::new(0.6, 10.0).unwrap();
        assert_eq!(update_tx(b, 5.0, TxOutcome::Ack, &ch, &d).unwrap().p, 1.0);
        assert_eq!(update_tx(b, 5.0, TxOutcome::Nack, &ch, &d).unwrap().p, 0.0);
        assert!(TxChannelModel::new(0.5, 0.2).is_err());
    }

    fn dists() -> impl Strategy<Value = HoldDistribution> {
        prop_oneof![
            (100.0f64..2000.0).prop_map(|b| HoldDistribution::uniform(b).unwrap()),
            (0.0005f64..0.02).prop_map(|r| HoldDistribution::exponential(r).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn sense_identities(p in 0.0f64..=1.0, t in 0.0f64..1500.0, ts in 0.1f64..20.0,
                            d in dists(), perfect in any::<bool>()) {
            let sm = if perfect { SensingModel::perfect() } else { detector() };
            let b = Belief::new(p, t).unwrap();
            let (w_f, w_b) = sense_outcome_probs(b, ts, &sm, &d).unwrap();
            prop_assert!((w_f + w_b - 1.0).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&w_f) && (0.0..=1.0).contains(&w_b));
            let pq = p * q_remain(&d, t, ts).unwrap().value;
            let mut total = 0.0;
            for (o, w) in [(SenseOutcome::Free, w_f), (SenseOutcome::Busy, w_b)] {
                if w > 0.0 {
                    let post = update_sense(b, ts, o, &sm, &d).unwrap();
                    prop_assert!((0.0..=1.0).contains(&post.p));
                    prop_assert_eq!(post.t, t + ts);
                    total += w * post.p;
                }
            }
            prop_assert!((total - pq).abs() <= 1e-12);
        }

        #[test]
        fn tx_identities(p in 0.0f64..=1.0, t in 0.0f64..1500.0, tt in 0.1f64..40.0,
                         d in dists(), p_nc in 0.0f64..0.5, extra in 0.0f64..0.5) {
            let ch = TxChannelModel::new(p_nc, p_nc + extra).unwrap();
            let b = Belief::new(p, t).unwrap();
            let (w_a, w_n) = tx_outcome_probs(b, tt, &ch, &d).unwrap();
            prop_assert!((w_a + w_n - 1.0).abs() <= 1e-12);
            let pq = p * q_remain(&d, t, tt).unwrap().value;
            let mut total = 0.0;
            for (o, w) in [(TxOutcome::Ack, w_a), (TxOutcome::Nack, w_n)] {
                if w > 0.0 {
                    let post = update_tx(b, tt, o, &ch, &d).unwrap();
                    prop_assert!((0.0..=1.0).contains(&post.p));
                    total += w * post.p;
                }
            }
            prop_assert!((total - pq).abs() <= 1e-12);
        }

        #[test]
        fn sense_posteriors_monotone_in_prior(p in 0.0f64..0.99, dp in 0.0f64..0.01,
                                               t in 0.0f64..900.0, ts in 1.0f64..10.0) {
            let d = u1000();
            let sm = detector();
            let lo = Belief::new(p, t).unwrap();
            let hi = Belief::new(p + dp, t).unwrap();
            for o in [SenseOutcome::Free, SenseOutcome::Busy] {
                let a = update_sense(lo, ts, o, &sm, &d);
                let b = update_sense(hi, ts, o, &sm, &d);
                if let (Ok(a), Ok(b)) = (a, b) {
                    prop_assert!(b.p >= a.p - 1e-12);
                }
            }
        }
    }
}
