//! Backward induction checked against a memoised recursion written
//! directly from the Bellman equations.

use std::cell::RefCell;
use std::collections::HashMap;

use adaptive_sensing::sensing::{db_to_linear, false_alarm_prob, SensingModel};
use adaptive_sensing::solver::{backward_induction, DurationPolicy, LinearCoefficients, Model, Scenario, Solution};
use adaptive_sensing::traffic::{solve_occupancy, HoldDistribution, TrafficModel};

const B: f64 = 100.0;

fn small(perfect: bool, gamma: f64) -> Scenario {
    let mut sc = Scenario::baseline().with_gamma(gamma);
    let hold = HoldDistribution::Uniform { b: B };
    sc.traffic = TrafficModel::new(hold, hold);
    sc.grid.n_p = 51;
    sc.grid.t_horizon = B;
    sc.bounds.tx_max = 5.0;
    sc.bounds.sense_max = 5.0;
    sc.t_idle = 2.0;
    if !perfect {
        sc.sensing = SensingModel::new(0.9, db_to_linear(-25.0), 31_250.0).unwrap();
        sc.costs.k_sense = 0.01;
    }
    sc
}

/// Durations the oracle tries at belief `p`.
enum Durations {
    Lattice(Vec<f64>, Vec<f64>),
    Linear(LinearCoefficients),
}

struct Oracle {
    sc: Scenario,
    p00: f64,
    p10: f64,
    durations: Durations,
    terminal: f64,
    memo: RefCell<HashMap<(usize, usize), f64>>,
}

impl Oracle {
    fn new(sc: Scenario, durations: Durations) -> Self {
        let occ = solve_occupancy(&sc.traffic, sc.grid.dt, sc.t_idle).unwrap();
        let (senses, txs) = match &durations {
            Durations::Lattice(s, t) => (s.clone(), t.clone()),
            Durations::Linear(c) => (vec![c.b0 - c.b1, c.b0], vec![c.a0, c.a0 + c.a1]),
        };
        let c = &sc.costs;
        let mut terminal = -c.k_idle * sc.t_idle;
        for s in &senses {
            terminal = terminal.max(-c.k_sense * s);
        }
        for t in &txs {
            terminal = terminal.max(Self::tx_reward(&sc, 0.0, *t));
        }
        Oracle {
            p00: occ.p00_at(sc.t_idle).unwrap(),
            p10: occ.p10_at(sc.t_idle).unwrap(),
            sc,
            durations,
            terminal,
            memo: RefCell::new(HashMap::new()),
        }
    }

    fn n(&self) -> usize {
        self.sc.grid.n_p
    }

    fn last_active(&self) -> usize {
        // Columns at or past the end of the idle-period support are terminal.
        (B - 1.0) as usize
    }

    fn q(&self, t: f64, d: f64) -> f64 {
        if t >= B {
            0.0
        } else {
            ((B - t - d) / (B - t)).max(0.0)
        }
    }

    fn tx_reward(sc: &Scenario, pq: f64, d: f64) -> f64 {
        let c = &sc.costs;
        let ch = &sc.channel;
        let ack = pq * (1.0 - ch.p_nc) + (1.0 - pq) * (1.0 - ch.p_c);
        let cc = c.c_collision_max * (1.0 - c.gamma);
        ack * c.reward_rate * (d - c.overhead).max(0.0) - (1.0 - pq) * cc * d - c.k_tx * d
    }

    /// Bilinear read of the memoised grid.
    fn u(&self, p: f64, t: f64) -> f64 {
        let x = t / self.sc.grid.dt;
        let k = x.floor();
        let f = x - k;
        let k = k as usize;
        if k > self.last_active() {
            return self.terminal;
        }
        let along_p = |k: usize| {
            if k > self.last_active() {
                return self.terminal;
            }
            let y = p * (self.n() - 1) as f64;
            let j = (y.floor() as usize).min(self.n() - 2);
            let w = y - j as f64;
            self.node(j, k) * (1.0 - w) + if w > 0.0 { self.node(j + 1, k) * w } else { 0.0 }
        };
        if f < 1e-9 {
            along_p(k)
        } else {
            along_p(k) * (1.0 - f) + along_p(k + 1) * f
        }
    }

    fn node(&self, i: usize, k: usize) -> f64 {
        if let Some(v) = self.memo.borrow().get(&(i, k)) {
            return *v;
        }
        let p = i as f64 / (self.n() - 1) as f64;
        let v = self.bellman(p, k as f64 * self.sc.grid.dt);
        self.memo.borrow_mut().insert((i, k), v);
        v
    }

    fn bellman(&self, p: f64, t: f64) -> f64 {
        let sc = &self.sc;
        let c = &sc.costs;
        let beta = sc.beta;
        let idle = -c.k_idle * sc.t_idle + beta * self.u(p * self.p00 + (1.0 - p) * self.p10, t + sc.t_idle);

        let (senses, txs) = match &self.durations {
            Durations::Lattice(s, t) => (s.clone(), t.clone()),
            Durations::Linear(co) => (vec![co.b0 - co.b1 * p], vec![co.a0 + co.a1 * p]),
        };
        let p_d = if sc.sensing.perfect { 1.0 } else { sc.sensing.p_d };
        let mut best = idle;
        for s in senses {
            let pq = p * self.q(t, s);
            let p_fa = false_alarm_prob(&sc.sensing, s).unwrap();
            let w_free = pq * (1.0 - p_fa) + (1.0 - pq) * (1.0 - p_d);
            let w_busy = 1.0 - w_free;
            let mut cont = 0.0;
            if w_free > 0.0 {
                cont += w_free * self.u(pq * (1.0 - p_fa) / w_free, t + s);
            }
            if w_busy > 0.0 {
                cont += w_busy * self.u(pq * p_fa / w_busy, t + s);
            }
            best = best.max(-c.k_sense * s + beta * cont);
        }
        for d in txs {
            let pq = p * self.q(t, d);
            let ch = &sc.channel;
            let w_ack = pq * (1.0 - ch.p_nc) + (1.0 - pq) * (1.0 - ch.p_c);
            let w_nack = 1.0 - w_ack;
            let mut cont = 0.0;
            if w_ack > 0.0 {
                cont += w_ack * self.u(pq * (1.0 - ch.p_nc) / w_ack, t + d);
            }
            if w_nack > 0.0 {
                cont += w_nack * self.u(pq * ch.p_nc / w_nack, t + d);
            }
            best = best.max(Self::tx_reward(sc, pq, d) + beta * cont);
        }
        best
    }
}

fn compare(sol: &Solution, oracle: &Oracle) {
    let n = sol.values.n_p();
    // Fill from the back so the recursion stays shallow.
    for k in (0..=oracle.last_active()).rev() {
        for i in 0..n {
            let want = oracle.node(i, k);
            let got = sol.values.at(i, k);
            assert!(
                (got - want).abs() <= 1e-9 * want.abs().max(1.0),
                "p={} t={k}: solver {got}, oracle {want}",
                i as f64 / (n - 1) as f64
            );
        }
    }
    assert!((sol.values.terminal() - oracle.terminal).abs() < 1e-12);
    assert_eq!(sol.policy.n_active(), oracle.last_active() + 1);
}

#[test]
fn fixed_durations_match_the_recursion() {
    for gamma in [0.0, 0.5, 1.0] {
        let sc = small(true, gamma);
        let model = Model::new(sc).unwrap();
        let sol = backward_induction(&model, &DurationPolicy::Fixed { sense: 2.0, tx: 4.0 }).unwrap();
        compare(&sol, &Oracle::new(sc, Durations::Lattice(vec![2.0], vec![4.0])));
    }
}

#[test]
fn per_state_durations_match_the_recursion() {
    for perfect in [true, false] {
        let sc = small(perfect, 0.5);
        let model = Model::new(sc).unwrap();
        let sol = backward_induction(&model, &DurationPolicy::PerState).unwrap();
        let oracle = Oracle::new(sc, Durations::Lattice(sc.sense_candidates(), sc.tx_candidates()));
        compare(&sol, &oracle);
    }
}

#[test]
fn linear_durations_match_the_recursion() {
    // Fractional durations exercise interpolation in time.
    let c = LinearCoefficients {
        a0: 1.0,
        a1: 3.0,
        b0: 4.0,
        b1: 2.5,
    };
    let mut sc = small(false, 0.25);
    sc.channel.p_nc = 0.1;
    sc.channel.p_c = 0.8;
    let model = Model::new(sc).unwrap();
    let sol = backward_induction(&model, &DurationPolicy::Linear(c)).unwrap();
    compare(&sol, &Oracle::new(sc, Durations::Linear(c)));
}

#[test]
fn discounted_values_match_the_recursion() {
    let mut sc = small(true, 0.5);
    sc.beta = 0.9;
    let model = Model::new(sc).unwrap();
    let sol = backward_induction(&model, &DurationPolicy::Fixed { sense: 1.0, tx: 5.0 }).unwrap();
    compare(&sol, &Oracle::new(sc, Durations::Lattice(vec![1.0], vec![5.0])));
}
