//! Belief-state dynamic programming over `(p, t)`.
//!
//! At every state the secondary picks the best of three actions:
//!
//! ```text
//! U(p, t) = max { I(p, t), S*(p, t), T*(p, t) }
//! ```
//!
//! where each action value is its immediate reward plus the discounted
//! expected value of the belief it leads to. The state space is discretised
//! as a uniform grid in `p` and `t`; off-grid beliefs are read by bilinear
//! interpolation.
//!
//! Three ways of choosing durations are supported (see [`DurationPolicy`]):
//! fixed durations, the best duration per state, and durations that are
//! linear in `p` with coefficients shared by every state.

mod dp;
mod linear;
mod thresholds;

pub use dp::{backward_induction, value_iteration, ActionSet, ActionValues, Convergence, Model, Solution};
pub use linear::{linear_lattice, optimize_linear_policy, LinearOptimum, Objective};
pub use thresholds::{extract_thresholds, Thresholds};

use crate::belief::TxChannelModel;
use crate::error::{Error, Result};
use crate::reward::CostModel;
use crate::sensing::SensingModel;
use crate::traffic::{HoldDistribution, TrafficModel};

/// Allowed range of sensing and transmission durations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DurationBounds {
    pub tx_min: f64,
    pub tx_max: f64,
    pub sense_min: f64,
    pub sense_max: f64,
}

/// Discretisation of the state space and of candidate durations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Number of belief nodes, uniform on `[0, 1]`.
    pub n_p: usize,
    pub dt: f64,
    pub t_horizon: f64,
    /// Spacing of candidate durations.
    pub duration_step: f64,
}

/// A complete problem instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub traffic: TrafficModel,
    pub sensing: SensingModel,
    pub channel: TxChannelModel,
    pub costs: CostModel,
    pub bounds: DurationBounds,
    pub grid: GridSpec,
    /// Discount factor.
    pub beta: f64,
    /// Duration of an idle action.
    pub t_idle: f64,
}

/// Duration coefficients: `T_T(p) = a0 + a1·p`, `T_S(p) = b0 - b1·p`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LinearCoefficients {
    pub a0: f64,
    pub a1: f64,
    pub b0: f64,
    pub b1: f64,
}

impl LinearCoefficients {
    pub fn tx_at(&self, p: f64) -> f64 {
        self.a0 + self.a1 * p
    }

    pub fn sense_at(&self, p: f64) -> f64 {
        self.b0 - self.b1 * p
    }

    pub fn validate(&self, bounds: &DurationBounds) -> Result<()> {
        let LinearCoefficients { a0, a1, b0, b1 } = *self;
        let tol = 1e-12;
        if a0 < 0.0 || a1 < 0.0 || b0 < 0.0 || b1 < 0.0 {
            return Err(Error::config(
                "run.linear",
                format!("coefficients must be >= 0, got {self:?}"),
            ));
        }
        if a0 < bounds.tx_min - tol || a0 + a1 > bounds.tx_max + tol {
            return Err(Error::config(
                "run.linear",
                format!(
                    "transmission durations [{a0}, {}] leave [{}, {}]",
                    a0 + a1,
                    bounds.tx_min,
                    bounds.tx_max
                ),
            ));
        }
        if b0 - b1 < bounds.sense_min - tol || b0 > bounds.sense_max + tol {
            return Err(Error::config(
                "run.linear",
                format!(
                    "sensing durations [{}, {b0}] leave [{}, {}]",
                    b0 - b1,
                    bounds.sense_min,
                    bounds.sense_max
                ),
            ));
        }
        Ok(())
    }
}

/// How sensing and transmission durations are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum DurationPolicy {
    /// The same durations in every state.
    Fixed { sense: f64, tx: f64 },
    /// The best duration on the candidate lattice, chosen state by state.
    PerState,
    /// Durations linear in `p`.
    Linear(LinearCoefficients),
}

impl DurationPolicy {
    pub fn label(&self) -> &'static str {
        match self {
            DurationPolicy::Fixed { .. } => "traditional",
            DurationPolicy::PerState => "adaptive_per_state",
            DurationPolicy::Linear(_) => "adaptive_linear",
        }
    }
}

/// A decision, with the duration for sensing and transmitting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    Idle,
    Sense(f64),
    Transmit(f64),
}

impl Action {
    /// `I`, `S` or `T`.
    pub fn letter(&self) -> char {
        match self {
            Action::Idle => 'I',
            Action::Sense(_) => 'S',
            Action::Transmit(_) => 'T',
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Action::Idle => 0,
            Action::Sense(_) => 1,
            Action::Transmit(_) => 2,
        }
    }
}

/// Values on the `(p, t)` grid, stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub(crate) n_p: usize,
    pub(crate) dt: f64,
    /// Columns `0..=N`; column `N` sits at the horizon.
    pub(crate) n_cols: usize,
    pub(crate) values: Vec<f64>,
    pub(crate) terminal: f64,
}

impl ValueTable {
    pub fn n_p(&self) -> usize {
        self.n_p
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        (self.n_cols - 1) as f64 * self.dt
    }

    /// Value of the terminal regime.
    pub fn terminal(&self) -> f64 {
        self.terminal
    }

    pub fn p_node(&self, i: usize) -> f64 {
        i as f64 / (self.n_p - 1) as f64
    }

    pub fn column(&self, k: usize) -> &[f64] {
        &self.values[k * self.n_p..(k + 1) * self.n_p]
    }

    pub fn at(&self, i: usize, k: usize) -> f64 {
        self.values[k * self.n_p + i]
    }

    /// Bilinear interpolation; times at or past the horizon read the
    /// terminal value.
    pub fn interpolate(&self, p: f64, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) || !(t >= 0.0) {
            return Err(Error::Logic(format!("value lookup outside the grid at p={p}, t={t}")));
        }
        let x = t / self.dt;
        let (k, frac) = split_index(x);
        Ok(self.read(p, k, frac))
    }

    #[inline]
    pub(crate) fn read(&self, p: f64, k: usize, frac: f64) -> f64 {
        if k + 1 >= self.n_cols {
            return self.terminal;
        }
        let n = self.n_p;
        let x = p * (n - 1) as f64;
        let (j, w) = if x >= (n - 1) as f64 {
            (n - 1, 0.0)
        } else {
            let j = x as usize;
            (j, x - j as f64)
        };
        let v = &self.values;
        let at = |o: usize| {
            if w == 0.0 {
                v[o]
            } else {
                v[o] * (1.0 - w) + v[o + 1] * w
            }
        };
        let base = k * n + j;
        let v0 = at(base);
        if frac == 0.0 {
            v0
        } else {
            v0 * (1.0 - frac) + at(base + n) * frac
        }
    }
}

/// Splits a fractional grid coordinate, snapping to a node within 1e-9.
#[inline]
pub(crate) fn split_index(x: f64) -> (usize, f64) {
    let k = x.floor();
    let frac = x - k;
    if frac < 1e-9 {
        (k as usize, 0.0)
    } else if frac > 1.0 - 1e-9 {
        (k as usize + 1, 0.0)
    } else {
        (k as usize, frac)
    }
}

/// Chosen action at every grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    pub(crate) n_p: usize,
    pub(crate) dt: f64,
    /// Columns with a recorded decision; later times use `terminal_action`.
    pub(crate) n_active: usize,
    pub(crate) actions: Vec<Action>,
    pub(crate) terminal_action: Action,
}

impl PolicyTable {
    pub fn n_p(&self) -> usize {
        self.n_p
    }

    /// Number of columns before the terminal regime.
    pub fn n_active(&self) -> usize {
        self.n_active
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn column(&self, k: usize) -> &[Action] {
        &self.actions[k * self.n_p..(k + 1) * self.n_p]
    }

    pub fn terminal_action(&self) -> Action {
        self.terminal_action
    }

    /// Action at the node nearest to `(p, t)`.
    pub fn lookup(&self, p: f64, t: f64) -> Result<Action> {
        if !(0.0..=1.0).contains(&p) || !(t >= 0.0) {
            return Err(Error::Logic(format!("policy lookup outside the grid at p={p}, t={t}")));
        }
        let k = (t / self.dt).round() as usize;
        if k >= self.n_active {
            return Ok(self.terminal_action);
        }
        let i = (p * (self.n_p - 1) as f64).round() as usize;
        Ok(self.column(k)[i])
    }

    /// One letter per belief node.
    pub fn pattern(&self, k: usize) -> String {
        self.column(k).iter().map(Action::letter).collect()
    }
}

/// True when the actions along a column read `I* S* T*`.
pub fn is_threshold_pattern(column: &[Action]) -> bool {
    column.windows(2).all(|w| w[0].rank() <= w[1].rank())
}

impl Scenario {
    /// The reference scenario: uniform holds on `[0, 1000]`,
    /// perfect sensing, overhead 1, durations bounded by `[1, 30]` and
    /// `[1, 10]`.
    pub fn baseline() -> Self {
        let hold = HoldDistribution::Uniform { b: 1000.0 };
        Scenario {
            traffic: TrafficModel::new(hold, hold),
            sensing: SensingModel::perfect(),
            channel: TxChannelModel::ideal(),
            costs: CostModel {
                k_idle: 0.001,
                k_sense: 0.1,
                k_tx: 0.1,
                reward_rate: 1.0,
                overhead: 1.0,
                c_collision_max: 20.0,
                gamma: 0.5,
            },
            bounds: DurationBounds {
                tx_min: 1.0,
                tx_max: 30.0,
                sense_min: 1.0,
                sense_max: 10.0,
            },
            grid: GridSpec {
                n_p: 201,
                dt: 1.0,
                t_horizon: 1000.0,
                duration_step: 1.0,
            },
            beta: 1.0,
            t_idle: 5.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (key, d) in [
            ("traffic.off", self.traffic.off_dist),
            ("traffic.on", self.traffic.on_dist),
        ] {
            let ok = match d {
                HoldDistribution::Uniform { b } => b.is_finite() && b > 0.0,
                HoldDistribution::Exponential { rate } => rate.is_finite() && rate > 0.0,
            };
            if !ok {
                return Err(Error::config(key, format!("invalid hold distribution {d:?}")));
            }
        }
        if !self.sensing.perfect {
            SensingModel::new(self.sensing.p_d, self.sensing.snr, self.sensing.sample_rate)?;
        }
        TxChannelModel::new(self.channel.p_nc, self.channel.p_c)?;
        self.costs.validate()?;

        let g = &self.grid;
        if g.n_p < 51 {
            return Err(Error::config(
                "grid.n_p",
                format!("need at least 51 belief nodes, got {}", g.n_p),
            ));
        }
        if !(g.dt > 0.0 && g.dt.is_finite()) {
            return Err(Error::config("grid.dt", format!("must be positive, got {}", g.dt)));
        }
        if !(g.duration_step > 0.0 && g.duration_step.is_finite()) {
            return Err(Error::config(
                "grid.duration_step",
                format!("must be positive, got {}", g.duration_step),
            ));
        }
        if !(g.t_horizon >= g.dt) || !is_multiple(g.t_horizon, g.dt) {
            return Err(Error::config(
                "grid.t_horizon",
                format!("must be a positive multiple of dt={}, got {}", g.dt, g.t_horizon),
            ));
        }
        if let Some(end) = self.traffic.off_dist.support_end() {
            if g.t_horizon < end {
                return Err(Error::config(
                    "grid.t_horizon",
                    format!("must cover the idle-period support {end}, got {}", g.t_horizon),
                ));
            }
        }

        let b = &self.bounds;
        if !(b.tx_min > 0.0 && b.tx_min <= b.tx_max) {
            return Err(Error::config(
                "bounds.tx_min",
                format!("need 0 < tx_min <= tx_max, got {b:?}"),
            ));
        }
        if !(b.sense_min > 0.0 && b.sense_min <= b.sense_max) {
            return Err(Error::config(
                "bounds.sense_min",
                format!("need 0 < sense_min <= sense_max, got {b:?}"),
            ));
        }
        let limit = self.traffic.off_dist.mean().min(self.traffic.on_dist.mean()) / 10.0;
        if b.tx_max > limit {
            return Err(Error::config(
                "bounds.tx_max",
                format!(
                    "must be at most a tenth of the mean hold time ({limit}), got {}",
                    b.tx_max
                ),
            ));
        }
        if b.sense_max > limit {
            return Err(Error::config(
                "bounds.sense_max",
                format!(
                    "must be at most a tenth of the mean hold time ({limit}), got {}",
                    b.sense_max
                ),
            ));
        }
        if b.tx_min < g.dt - 1e-12 || b.sense_min < g.dt - 1e-12 {
            return Err(Error::config(
                "bounds",
                format!("durations must be at least one time step dt={}", g.dt),
            ));
        }
        if b.tx_min < self.costs.overhead {
            return Err(Error::config(
                "bounds.tx_min",
                format!(
                    "must be at least the overhead {}, got {}",
                    self.costs.overhead, b.tx_min
                ),
            ));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::config(
                "run.beta",
                format!("must lie in [0, 1], got {}", self.beta),
            ));
        }
        if !(self.t_idle >= g.dt) {
            return Err(Error::config(
                "run.t_idle",
                format!("must be at least dt={}, got {}", g.dt, self.t_idle),
            ));
        }
        Ok(())
    }

    /// Non-fatal remarks about the configuration.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if (self.bounds.tx_min - self.costs.overhead).abs() < 1e-12 {
            out.push(format!(
                "tx_min equals the overhead ({}); the shortest transmission carries no payload",
                self.costs.overhead
            ));
        }
        out
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.costs.gamma = gamma;
        self
    }

    /// Candidate sensing durations `sense_min, sense_min + step, …, sense_max`.
    pub fn sense_candidates(&self) -> Vec<f64> {
        lattice(self.bounds.sense_min, self.bounds.sense_max, self.grid.duration_step)
    }

    pub fn tx_candidates(&self) -> Vec<f64> {
        lattice(self.bounds.tx_min, self.bounds.tx_max, self.grid.duration_step)
    }

    pub(crate) fn check_policy(&self, mode: &DurationPolicy) -> Result<()> {
        match mode {
            DurationPolicy::Fixed { sense, tx } => {
                let b = &self.bounds;
                if !(*sense >= b.sense_min - 1e-12 && *sense <= b.sense_max + 1e-12) {
                    return Err(Error::config(
                        "run.t_sense",
                        format!("{sense} is outside [{}, {}]", b.sense_min, b.sense_max),
                    ));
                }
                if !(*tx >= b.tx_min - 1e-12 && *tx <= b.tx_max + 1e-12) {
                    return Err(Error::config(
                        "run.t_tx",
                        format!("{tx} is outside [{}, {}]", b.tx_min, b.tx_max),
                    ));
                }
                Ok(())
            }
            DurationPolicy::PerState => Ok(()),
            DurationPolicy::Linear(c) => c.validate(&self.bounds),
        }
    }
}

fn is_multiple(x: f64, step: f64) -> bool {
    let r = x / step;
    (r - r.round()).abs() < 1e-9
}

/// `lo, lo + step, …` up to `hi` inclusive (within rounding).
pub(crate) fn lattice(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| lo + k as f64 * step).collect()
}
