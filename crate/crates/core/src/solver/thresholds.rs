use super::{is_threshold_pattern, split_index, Action, Model, Solution};
use crate::error::{ActionPattern, Error, Result};

/// Belief thresholds of one time column.
///
/// `p1` is where Idle gives way to Sense (or Transmit), `p2` where Transmit
/// begins. A threshold is `None` when the region below it is empty and 1
/// when that region covers the whole column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub t: f64,
    pub p1: Option<f64>,
    pub p2: Option<f64>,
}

const RESOLUTION: f64 = 1e-7;

/// Reads the thresholds at grid time `t` and refines each boundary by
/// bisection between the two nodes that bracket it.
pub fn extract_thresholds(model: &Model, solution: &Solution, t: f64) -> Result<Thresholds> {
    let policy = &solution.policy;
    let (k, frac) = split_index(t / policy.dt);
    if frac != 0.0 || !(t >= 0.0) || k >= policy.n_active {
        return Err(Error::Logic(format!("t={t} is not an active grid time")));
    }
    let column = policy.column(k);
    if !is_threshold_pattern(column) {
        return Err(Error::Structure {
            t,
            pattern: ActionPattern(policy.pattern(k)),
        });
    }
    let n = column.len();
    let node = |i: usize| i as f64 / (n - 1) as f64;
    let action_at =
        |p: f64| -> Result<Action> { Ok(model.bellman_values(&solution.values, &solution.mode, p, t)?.best().0) };

    let last_idle = column.iter().rposition(|a| *a == Action::Idle);
    let p1 = match last_idle {
        None => None,
        Some(i) if i == n - 1 => Some(1.0),
        Some(i) => Some(bisect(node(i), node(i + 1), |p| Ok(action_at(p)? == Action::Idle))?),
    };

    let first_tx = column.iter().position(|a| matches!(a, Action::Transmit(_)));
    let p2 = match first_tx {
        Some(0) => None,
        None => Some(1.0),
        Some(i) => Some(bisect(node(i - 1), node(i), |p| {
            Ok(!matches!(action_at(p)?, Action::Transmit(_)))
        })?),
    };
    Ok(Thresholds { t, p1, p2 })
}

/// `below(lo)` holds and `below(hi)` does not; returns the crossing.
fn bisect(mut lo: f64, mut hi: f64, below: impl Fn(f64) -> Result<bool>) -> Result<f64> {
    while hi - lo > RESOLUTION {
        let mid = 0.5 * (lo + hi);
        if below(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{backward_induction, DurationPolicy, Scenario};

    fn model(gamma: f64) -> Model {
        let mut sc = Scenario::baseline().with_gamma(gamma);
        sc.grid.n_p = 101;
        Model::new(sc).unwrap()
    }

    #[test]
    fn thresholds_bracket_the_grid_pattern() {
        let m = model(0.5);
        let sol = backward_induction(&m, &DurationPolicy::Fixed { sense: 5.0, tx: 7.0 }).unwrap();
        let th = extract_thresholds(&m, &sol, 200.0).unwrap();
        let col = sol.policy.column(200);
        for (i, a) in col.iter().enumerate() {
            let p = i as f64 / 100.0;
            match a {
                Action::Idle => assert!(p <= th.p1.unwrap()),
                Action::Sense(_) => assert!(p >= th.p1.unwrap_or(0.0) && p <= th.p2.unwrap()),
                Action::Transmit(_) => assert!(p >= th.p2.unwrap()),
            }
        }
    }

    #[test]
    fn transmit_boundary_not_above_first_transmit_win() {
        // Free collisions, no overhead.
        let mut sc = Scenario::baseline().with_gamma(1.0);
        sc.costs.overhead = 0.0;
        sc.grid.n_p = 101;
        let m = Model::new(sc).unwrap();
        let mode = DurationPolicy::Fixed { sense: 1.0, tx: 10.0 };
        let sol = backward_induction(&m, &mode).unwrap();
        let th = extract_thresholds(&m, &sol, 200.0).unwrap();
        let p2 = th.p2.unwrap_or(0.0);
        let first_tx_beats_sense = (0..=100)
            .map(|i| i as f64 / 100.0)
            .find(|&p| {
                let v = m.bellman_values(&sol.values, &mode, p, 200.0).unwrap();
                v.transmit > v.sense
            })
            .unwrap();
        assert!(p2 <= first_tx_beats_sense + 1e-9);
    }

    #[test]
    fn prohibitive_sensing_leaves_no_sense_region() {
        let mut sc = Scenario::baseline().with_gamma(0.0);
        sc.costs.k_sense = 100.0;
        sc.grid.n_p = 101;
        let m = Model::new(sc).unwrap();
        let sol = backward_induction(&m, &DurationPolicy::Fixed { sense: 1.0, tx: 7.0 }).unwrap();
        let th = extract_thresholds(&m, &sol, 200.0).unwrap();
        assert_eq!(th.p1, th.p2);
        assert!(!sol.policy.pattern(200).contains('S'));
    }

    #[test]
    fn off_grid_time_is_rejected() {
        let m = model(0.5);
        let sol = backward_induction(&m, &DurationPolicy::Fixed { sense: 5.0, tx: 7.0 }).unwrap();
        assert!(matches!(extract_thresholds(&m, &sol, 200.5), Err(Error::Logic(_))));
        assert!(extract_thresholds(&m, &sol, 1000.0).is_err());
    }
}
