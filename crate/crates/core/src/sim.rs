//! Monte Carlo episodes of a policy against sampled primary traffic.
//!
//! An episode starts when the primary goes quiet (`p = 1`, `t = 0`) and ends
//! when its next busy period is over, which is where the next idle period,
//! and a fresh `t = 0`, would begin. The action running at that moment is cut
//! short: its cost is charged for the time it actually ran and any payload is
//! forfeited.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::belief::{update_idle, update_sense, update_tx, Belief, SenseOutcome, TxOutcome};
use crate::error::{Error, Result};
use crate::reward::collision_cost;
use crate::sensing::false_alarm_prob;
use crate::solver::{Action, Model, PolicyTable};
use crate::traffic::{sample_process_with, StartState, ToggleList};

/// Anything that picks an action from the belief state.
pub trait Policy: Sync {
    fn decide(&self, p: f64, t: f64) -> Result<Action>;
}

impl Policy for PolicyTable {
    fn decide(&self, p: f64, t: f64) -> Result<Action> {
        self.lookup(p, t)
    }
}

/// The same action in every state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticPolicy(pub Action);

impl Policy for StaticPolicy {
    fn decide(&self, _p: f64, _t: f64) -> Result<Action> {
        Ok(self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observation {
    /// Idle actions observe nothing.
    None,
    Free,
    Busy,
    Ack,
    Nack,
    /// The episode ended while the action was running.
    Truncated,
}

impl Observation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Observation::None => "none",
            Observation::Free => "free",
            Observation::Busy => "busy",
            Observation::Ack => "ack",
            Observation::Nack => "nack",
            Observation::Truncated => "truncated",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub start_t: f64,
    pub action: Action,
    /// Time the action actually ran.
    pub duration: f64,
    pub observation: Observation,
    pub reward: f64,
    pub p_before: f64,
    pub p_after: f64,
    pub collided: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub events: Vec<Event>,
    pub total_utility: f64,
    /// Transmission time that overlapped primary activity.
    pub collision_time: f64,
    /// Payload time delivered with an ACK.
    pub successful_payload: f64,
    pub end_time: f64,
    pub primary_toggles: ToggleList,
}

/// Generator for episode `index` of a run seeded with `seed`.
pub fn episode_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Runs one episode with its own generator (stream 0 of `seed`).
pub fn run_episode(policy: &dyn Policy, model: &Model, seed: u64) -> Result<EpisodeTrace> {
    run_episode_with(policy, model, &mut episode_rng(seed, 0))
}

/// Hard stop for an episode, as a multiple of the solver horizon.
const EPISODE_CAP: f64 = 4.0;

fn action_name(a: &Action) -> &'static str {
    match a {
        Action::Idle => "idle",
        Action::Sense(_) => "sense",
        Action::Transmit(_) => "transmit",
    }
}

fn run_episode_with<R: Rng>(policy: &dyn Policy, model: &Model, rng: &mut R) -> Result<EpisodeTrace> {
    let sc = model.scenario();
    let cm = &sc.costs;
    let cap = EPISODE_CAP * sc.grid.t_horizon;
    let world = sample_process_with(&sc.traffic, rng, cap, StartState::OnToOffBoundary);
    // The first toggle is the primary's return, the second its departure.
    let end = world.toggles.get(1).copied().unwrap_or(cap);
    let off_dist = &sc.traffic.off_dist;

    let mut belief = Belief { p: 1.0, t: 0.0 };
    let mut events = Vec::new();
    let (mut total, mut collision_time, mut payload) = (0.0, 0.0, 0.0);

    while belief.t < end {
        let t = belief.t;
        let action = policy.decide(belief.p, t)?;
        let duration = match action {
            Action::Idle => sc.t_idle,
            Action::Sense(d) | Action::Transmit(d) => d,
        };
        if !(duration > 0.0) {
            return Err(Error::Logic(format!("policy chose a non-positive duration at t={t}")));
        }
        let stop = t + duration;
        let clean = world.idle_throughout(t, stop.min(end));

        if stop > end {
            let ran = end - t;
            let reward = match action {
                Action::Idle => -cm.k_idle * ran,
                Action::Sense(_) => -cm.k_sense * ran,
                Action::Transmit(_) => {
                    let busy = world.busy_time(t, end);
                    collision_time += busy;
                    let coll = if clean { 0.0 } else { collision_cost(cm) * ran };
                    -cm.k_tx * ran - coll
                }
            };
            total += reward;
            events.push(Event {
                start_t: t,
                action,
                duration: ran,
                observation: Observation::Truncated,
                reward,
                p_before: belief.p,
                p_after: belief.p,
                collided: matches!(action, Action::Transmit(_)) && !clean,
            });
            break;
        }

        let (reward, observation, next) = match action {
            Action::Idle => (
                -cm.k_idle * duration,
                Observation::None,
                update_idle(belief, duration, model.occupancy())?,
            ),
            Action::Sense(d) => {
                let busy = if clean {
                    rng.random::<f64>() < false_alarm_prob(&sc.sensing, d)?
                } else {
                    rng.random::<f64>() < sc.sensing.detection_prob()
                };
                let outcome = if busy { SenseOutcome::Busy } else { SenseOutcome::Free };
                let obs = if busy { Observation::Busy } else { Observation::Free };
                (
                    -cm.k_sense * d,
                    obs,
                    update_sense(belief, d, outcome, &sc.sensing, off_dist)?,
                )
            }
            Action::Transmit(d) => {
                let nack_prob = if clean { sc.channel.p_nc } else { sc.channel.p_c };
                let ack = rng.random::<f64>() >= nack_prob;
                let mut r = -cm.k_tx * d;
                if ack {
                    let delivered = (d - cm.overhead).max(0.0);
                    r += cm.reward_rate * delivered;
                    payload += delivered;
                }
                if !clean {
                    r -= collision_cost(cm) * d;
                    collision_time += world.busy_time(t, stop);
                }
                let outcome = if ack { TxOutcome::Ack } else { TxOutcome::Nack };
                let obs = if ack { Observation::Ack } else { Observation::Nack };
                (r, obs, update_tx(belief, d, outcome, &sc.channel, off_dist)?)
            }
        };
        total += reward;
        events.push(Event {
            start_t: t,
            action,
            duration,
            observation,
            reward,
            p_before: belief.p,
            p_after: next.p,
            collided: matches!(action, Action::Transmit(_)) && !clean,
        });
        belief = next;
    }

    Ok(EpisodeTrace {
        events,
        total_utility: total,
        collision_time,
        successful_payload: payload,
        end_time: end,
        primary_toggles: world,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvaluateOptions {
    pub episodes: usize,
    pub seed: u64,
}

impl EvaluateOptions {
    pub fn new(episodes: usize, seed: u64) -> Self {
        Self { episodes, seed }
    }
}

/// Aggregate over independent episodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub episodes: usize,
    pub mean: f64,
    pub stderr: f64,
    /// Half-width of the 95% confidence interval of the mean.
    pub ci95: f64,
    /// Share of transmission time that overlapped primary activity.
    pub collision_fraction: f64,
    /// Share of episode time spent delivering acknowledged payload.
    pub payload_fraction: f64,
    /// Counts of idle, sense and transmit actions.
    pub action_counts: [u64; 3],
}

struct EpisodeStats {
    utility: f64,
    collision: f64,
    tx_time: f64,
    payload: f64,
    length: f64,
    counts: [u64; 3],
}

/// Runs `opts.episodes` episodes, episode `i` on stream `i` of the seed, so
/// results do not depend on scheduling.
pub fn evaluate(policy: &dyn Policy, model: &Model, opts: &EvaluateOptions) -> Result<Summary> {
    if opts.episodes < 100 {
        return Err(Error::config(
            "run.episodes",
            format!("need at least 100 episodes, got {}", opts.episodes),
        ));
    }
    let stats = (0..opts.episodes as u64)
        .into_par_iter()
        .map(|i| {
            let tr = run_episode_with(policy, model, &mut episode_rng(opts.seed, i))?;
            let mut counts = [0u64; 3];
            let mut tx_time = 0.0;
            for e in &tr.events {
                match e.action {
                    Action::Idle => counts[0] += 1,
                    Action::Sense(_) => counts[1] += 1,
                    Action::Transmit(_) => {
                        counts[2] += 1;
                        tx_time += e.duration;
                    }
                }
            }
            Ok(EpisodeStats {
                utility: tr.total_utility,
                collision: tr.collision_time,
                tx_time,
                payload: tr.successful_payload,
                length: tr.end_time,
                counts,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n = stats.len() as f64;
    let mean = stats.iter().map(|s| s.utility).sum::<f64>() / n;
    let var = stats.iter().map(|s| (s.utility - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let stderr = (var / n).sqrt();
    let sum = |f: fn(&EpisodeStats) -> f64| stats.iter().map(f).sum::<f64>();
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    let mut counts = [0u64; 3];
    for s in &stats {
        for (c, x) in counts.iter_mut().zip(s.counts) {
            *c += x;
        }
    }
    Ok(Summary {
        episodes: stats.len(),
        mean,
        stderr,
        ci95: 1.959963984540054 * stderr,
        collision_fraction: ratio(sum(|s| s.collision), sum(|s| s.tx_time)),
        payload_fraction: ratio(sum(|s| s.payload), sum(|s| s.length)),
        action_counts: counts,
    })
}

/// Writes `start_t,action,duration,observation,reward,p_before,p_after`.
pub fn write_trace_csv<W: Write>(trace: &EpisodeTrace, mut out: W) -> Result<()> {
    writeln!(out, "start_t,action,duration,observation,reward,p_before,p_after")?;
    for e in &trace.events {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            e.start_t,
            action_name(&e.action),
            e.duration,
            e.observation.as_str(),
            e.reward,
            e.p_before,
            e.p_after
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::Scenario;

    fn model(gamma: f64) -> Model {
        let mut sc = Scenario::baseline().with_gamma(gamma);
        sc.grid.n_p = 51;
        Model::new(sc).unwrap()
    }

    #[test]
    fn always_sense_never_collides() {
        let m = model(0.5);
        let tr = run_episode(&StaticPolicy(Action::Sense(2.0)), &m, 11).unwrap();
        assert_eq!(tr.collision_time, 0.0);
        let ret = tr.primary_toggles.toggles[0];
        for e in &tr.events {
            if e.observation == Observation::Truncated {
                continue;
            }
            if e.start_t + e.duration < ret {
                assert_eq!((e.observation, e.p_after), (Observation::Free, 1.0));
            } else {
                assert_eq!((e.observation, e.p_after), (Observation::Busy, 0.0));
            }
        }
    }

    #[test]
    fn events_tile_the_episode() {
        let m = model(0.5);
        for seed in 0..20 {
            let tr = run_episode(&StaticPolicy(Action::Transmit(7.0)), &m, seed).unwrap();
            let mut clock = 0.0;
            for e in &tr.events {
                assert!((e.start_t - clock).abs() < 1e-9);
                clock += e.duration;
            }
            assert!((clock - tr.end_time).abs() < 1e-9);
            let sum: f64 = tr.events.iter().map(|e| e.reward).sum();
            assert!((sum - tr.total_utility).abs() < 1e-9);
        }
    }

    #[test]
    fn collisions_match_interval_check() {
        let m = model(0.5);
        let tr = run_episode(&StaticPolicy(Action::Transmit(10.0)), &m, 5).unwrap();
        let ret = tr.primary_toggles.toggles[0];
        for e in &tr.events {
            let overlaps = e.start_t + e.duration >= ret && e.start_t < tr.end_time;
            assert_eq!(e.collided, overlaps, "event at {}", e.start_t);
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let m = model(0.3);
        let p = StaticPolicy(Action::Sense(3.0));
        assert_eq!(run_episode(&p, &m, 9).unwrap(), run_episode(&p, &m, 9).unwrap());
        let a = evaluate(&p, &m, &EvaluateOptions::new(200, 4)).unwrap();
        let b = evaluate(&p, &m, &EvaluateOptions::new(200, 4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_rewards_give_zero_utility() {
        let mut sc = Scenario::baseline();
        sc.grid.n_p = 51;
        sc.costs = crate::reward::CostModel {
            k_idle: 0.0,
            k_sense: 0.0,
            k_tx: 0.0,
            reward_rate: 0.0,
            overhead: 0.0,
            c_collision_max: 0.0,
            gamma: 0.0,
        };
        let m = Model::new(sc).unwrap();
        let s = evaluate(&StaticPolicy(Action::Transmit(5.0)), &m, &EvaluateOptions::new(100, 1)).unwrap();
        assert_eq!(s.mean, 0.0);
        assert!(evaluate(&StaticPolicy(Action::Idle), &m, &EvaluateOptions::new(10, 1)).is_err());
    }

    #[test]
    fn trace_csv_layout() {
        let m = model(0.5);
        let tr = run_episode(&StaticPolicy(Action::Idle), &m, 2).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&tr, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "start_t,action,duration,observation,reward,p_before,p_after"
        );
        assert!(lines.next().unwrap().starts_with("0,idle,5,none,-0.005,1,"));
        assert_eq!(text.lines().count(), tr.events.len() + 1);
    }
}
