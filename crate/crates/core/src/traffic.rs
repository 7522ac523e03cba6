//! Primary-user traffic: an alternating on/off renewal process.
//!
//! The primary holds the channel for an "on" period, releases it for an "off"
//! period, and repeats, with every hold drawn independently. Two families of
//! hold times are supported, uniform on `[0, b]` and exponential.
//!
//! Everything the belief machinery needs comes from here:
//!
//! * [`survival`] and [`q_remain`]: the chance that an idle period which has
//!   already lasted `t` survives a further `T` time units;
//! * [`solve_occupancy`]: the equilibrium occupancy functions `P00(t)` (idle
//!   `t` after being seen idle) and `P10(t)` (idle `t` after being seen busy),
//!   obtained by forward recursion of the renewal equations;
//! * [`mc_occupancy`]: a Monte Carlo estimate of the same quantities, kept
//!   independent of the recursion so each can check the other.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};

/// Distribution of a single on or off hold time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HoldDistribution {
    /// Uniform on `[0, b]`.
    Uniform { b: f64 },
    /// Exponential with the given rate (mean `1 / rate`).
    Exponential { rate: f64 },
}

impl HoldDistribution {
    pub fn uniform(b: f64) -> Result<Self> {
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::config(
                "traffic.b",
                format!("uniform support must be positive, got {b}"),
            ));
        }
        Ok(HoldDistribution::Uniform { b })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::config(
                "traffic.rate",
                format!("exponential rate must be positive, got {rate}"),
            ));
        }
        Ok(HoldDistribution::Exponential { rate })
    }

    pub fn mean(&self) -> f64 {
        match *self {
            HoldDistribution::Uniform { b } => b / 2.0,
            HoldDistribution::Exponential { rate } => 1.0 / rate,
        }
    }

    /// End of the support, if bounded.
    pub fn support_end(&self) -> Option<f64> {
        match *self {
            HoldDistribution::Uniform { b } => Some(b),
            HoldDistribution::Exponential { .. } => None,
        }
    }

    /// Density, taking the left limit at the uniform support endpoint so that
    /// grid quadrature sees `1/b` at `t = b`.
    pub fn density(&self, t: f64) -> f64 {
        match *self {
            HoldDistribution::Uniform { b } => {
                if (0.0..=b).contains(&t) {
                    1.0 / b
                } else {
                    0.0
                }
            }
            HoldDistribution::Exponential { rate } => {
                if t < 0.0 {
                    0.0
                } else {
                    rate * (-rate * t).exp()
                }
            }
        }
    }

    /// `1 - F(t)` without argument checks; `t < 0` gives 1.
    #[inline]
    pub fn survival_unchecked(&self, t: f64) -> f64 {
        match *self {
            HoldDistribution::Uniform { b } => (1.0 - t / b).clamp(0.0, 1.0),
            HoldDistribution::Exponential { rate } => (-rate * t.max(0.0)).exp(),
        }
    }

    /// `∫_t^∞ (1 - F(u)) du`.
    pub fn integrated_survival(&self, t: f64) -> f64 {
        match *self {
            HoldDistribution::Uniform { b } => {
                if t >= b {
                    0.0
                } else {
                    let r = b - t.max(0.0);
                    r * r / (2.0 * b) + (-t).max(0.0)
                }
            }
            HoldDistribution::Exponential { rate } => {
                if t >= 0.0 {
                    (-rate * t).exp() / rate
                } else {
                    1.0 / rate - t
                }
            }
        }
    }

    /// Persistence `(1 - F(t + T)) / (1 - F(t))`, or 0 once `t` is past the
    /// support.
    #[inline]
    pub fn persistence_unchecked(&self, t: f64, duration: f64) -> f64 {
        match *self {
            HoldDistribution::Uniform { b } => {
                let left = b - t;
                if left <= 0.0 {
                    0.0
                } else {
                    ((left - duration) / left).clamp(0.0, 1.0)
                }
            }
            HoldDistribution::Exponential { rate } => (-rate * duration).exp(),
        }
    }

    /// Persistence from a fixed age `t`, prepared for many durations.
    #[inline]
    pub(crate) fn persistence_from(&self, t: f64) -> PersistenceFrom {
        match *self {
            HoldDistribution::Uniform { b } => PersistenceFrom::Linear {
                inv_left: if b - t > 0.0 { 1.0 / (b - t) } else { f64::INFINITY },
            },
            HoldDistribution::Exponential { rate } => PersistenceFrom::Exponential { rate },
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            HoldDistribution::Uniform { b } => rng.random::<f64>() * b,
            HoldDistribution::Exponential { rate } => Exp::new(rate).expect("validated rate").sample(rng),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum PersistenceFrom {
    Linear { inv_left: f64 },
    Exponential { rate: f64 },
}

impl PersistenceFrom {
    #[inline]
    pub(crate) fn q(&self, duration: f64) -> f64 {
        match *self {
            PersistenceFrom::Linear { inv_left } => (1.0 - duration * inv_left).max(0.0),
            PersistenceFrom::Exponential { rate } => (-rate * duration).exp(),
        }
    }
}

/// The primary's alternating renewal process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficModel {
    pub off_dist: HoldDistribution,
    pub on_dist: HoldDistribution,
}

impl TrafficModel {
    pub fn new(off_dist: HoldDistribution, on_dist: HoldDistribution) -> Self {
        Self { off_dist, on_dist }
    }

    /// Long-run fraction of time the channel is idle, `T_off / (T_on + T_off)`.
    pub fn availability(&self) -> f64 {
        let off = self.off_dist.mean();
        off / (off + self.on_dist.mean())
    }

    pub fn cycle_mean(&self) -> f64 {
        self.off_dist.mean() + self.on_dist.mean()
    }
}

/// `1 - F(t)`.
pub fn survival(dist: &HoldDistribution, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain("survival", format!("t must be >= 0, got {t}")));
    }
    Ok(dist.survival_unchecked(t))
}

/// Result of [`q_remain`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Persistence {
    pub value: f64,
    /// Set when `t` lies beyond the support, where the conditional
    /// probability is undefined and taken to be 0.
    pub past_support: bool,
}

/// Probability that an idle period already `t` long lasts another `duration`.
pub fn q_remain(dist: &HoldDistribution, t: f64, duration: f64) -> Result<Persistence> {
    if !(t >= 0.0) || !(duration >= 0.0) {
        return Err(Error::domain(
            "q_remain",
            format!("t and duration must be >= 0, got t={t}, T={duration}"),
        ));
    }
    if dist.survival_unchecked(t) <= 0.0 {
        return Ok(Persistence {
            value: 0.0,
            past_support: true,
        });
    }
    Ok(Persistence {
        value: dist.persistence_unchecked(t, duration),
        past_support: false,
    })
}

/// `P00` and `P10` sampled on a uniform lag grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyTable {
    pub dt: f64,
    pub horizon: f64,
    pub p00: Vec<f64>,
    pub p10: Vec<f64>,
}

impl OccupancyTable {
    fn lookup(&self, column: &[f64], lag: f64) -> Result<f64> {
        if !(lag >= 0.0) {
            return Err(Error::domain(
                "occupancy lookup",
                format!("lag must be >= 0, got {lag}"),
            ));
        }
        let x = lag / self.dt;
        let last = column.len() - 1;
        if x > last as f64 + 1e-9 {
            return Err(Error::Horizon(format!(
                "lag {lag} is beyond the occupancy horizon {}",
                self.horizon
            )));
        }
        let k = (x.floor() as usize).min(last);
        let frac = x - k as f64;
        if k == last || frac <= 1e-12 {
            return Ok(column[k]);
        }
        Ok(column[k] * (1.0 - frac) + column[k + 1] * frac)
    }

    /// Probability of idle `lag` after being seen idle.
    pub fn p00_at(&self, lag: f64) -> Result<f64> {
        self.lookup(&self.p00, lag)
    }

    /// Probability of idle `lag` after being seen busy.
    pub fn p10_at(&self, lag: f64) -> Result<f64> {
        self.lookup(&self.p10, lag)
    }
}

/// Fresh-start occupancy of the alternating process.
///
/// Returns `(same, other)` where `same[k]` is the probability of being in the
/// `first` state at `k·dt` given a `first` period just started, and `other[k]`
/// the same probability given a `second` period just started:
///
/// ```text
/// same(τ)  = S_first(τ) + ∫₀^τ f_first(v)  · other(τ - v) dv
/// other(τ) =              ∫₀^τ f_second(v) · same(τ - v) dv
/// ```
///
/// Trapezoidal rule; the `v = 0` end of each integral couples the two
/// unknowns at step `k`, which is solved as a 2×2 system.
fn fresh_start(first: &HoldDistribution, second: &HoldDistribution, dt: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let f1: Vec<f64> = (0..n).map(|k| first.density(k as f64 * dt)).collect();
    let f2: Vec<f64> = (0..n).map(|k| second.density(k as f64 * dt)).collect();
    let mut same = vec![0.0; n];
    let mut other = vec![0.0; n];
    same[0] = 1.0;
    let c1 = 0.5 * dt * f1[0];
    let c2 = 0.5 * dt * f2[0];
    for k in 1..n {
        let mut s_same = 0.5 * f1[k] * other[0];
        let mut s_other = 0.5 * f2[k] * same[0];
        for j in 1..k {
            s_same += f1[j] * other[k - j];
            s_other += f2[j] * same[k - j];
        }
        let a = first.survival_unchecked(k as f64 * dt) + dt * s_same;
        let b = dt * s_other;
        // same = a + c1·other ; other = b + c2·same
        let s = (a + c1 * b) / (1.0 - c1 * c2);
        same[k] = s;
        other[k] = b + c2 * s;
    }
    (same, other)
}

/// Equilibrium probability of still being in `state` at lag `k·dt`, given the
/// process is observed in `state` at a stationary instant:
/// `∫_t^∞ S(u)/m du + ∫₀^t e(u) · other(t - u) du` with `e(u) = S(u)/m`.
fn equilibrium_persistence(state: &HoldDistribution, other: &[f64], dt: f64) -> Vec<f64> {
    let n = other.len();
    let mean = state.mean();
    let e: Vec<f64> = (0..n).map(|k| state.survival_unchecked(k as f64 * dt) / mean).collect();
    (0..n)
        .map(|k| {
            let tail = state.integrated_survival(k as f64 * dt) / mean;
            let conv = if k == 0 {
                0.0
            } else {
                let mut s = 0.5 * (e[0] * other[k] + e[k] * other[0]);
                for j in 1..k {
                    s += e[j] * other[k - j];
                }
                dt * s
            };
            (tail + conv).clamp(0.0, 1.0)
        })
        .collect()
}

/// Solves the equilibrium occupancy functions on `[0, horizon]` with step `dt`.
pub fn solve_occupancy(model: &TrafficModel, dt: f64, horizon: f64) -> Result<OccupancyTable> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::config(
            "grid.dt",
            format!("occupancy step must be positive, got {dt}"),
        ));
    }
    if !(horizon >= dt) {
        return Err(Error::config(
            "grid.t_horizon",
            format!("occupancy horizon {horizon} must be at least dt={dt}"),
        ));
    }
    let min_mean = model.off_dist.mean().min(model.on_dist.mean());
    if dt > min_mean / 50.0 {
        return Err(Error::config(
            "grid.dt",
            format!(
                "occupancy step {dt} is too coarse for mean hold {min_mean}; need dt <= {}",
                min_mean / 50.0
            ),
        ));
    }
    let n = (horizon / dt).round() as usize + 1;

    // p11 needs P(on at τ | off just started); p00 needs P(off at τ | on just started).
    let (_, on_after_off) = fresh_start(&model.on_dist, &model.off_dist, dt, n);
    let (_, off_after_on) = fresh_start(&model.off_dist, &model.on_dist, dt, n);
    let p11 = equilibrium_persistence(&model.on_dist, &on_after_off, dt);
    let p00 = equilibrium_persistence(&model.off_dist, &off_after_on, dt);
    let p10 = p11.iter().map(|v| (1.0 - v).clamp(0.0, 1.0)).collect();

    Ok(OccupancyTable {
        dt,
        horizon: (n - 1) as f64 * dt,
        p00,
        p10,
    })
}

/// A published closed form for uniform holds on `[0, b]`, valid for
/// `0 < t < b`. Returns `(p00, p10)`.
///
/// Kept for comparison only. They disagree with both the
/// renewal recursion and Monte Carlo (`p10(5)` is about 0.030 here against
/// about 0.010), so nothing in the solver uses them.
pub fn closed_form_uniform_occupancy(b: f64, t: f64) -> Result<(f64, f64)> {
    if !(b > 0.0) || !(t > 0.0 && t < b) {
        return Err(Error::domain(
            "closed_form_uniform_occupancy",
            format!("need 0 < t < b, got t={t}, b={b}"),
        ));
    }
    let decay = (-t / b).exp();
    let p10 = (5.0 - 4.0 * decay) - 1.0 + 2.0 * t / b;
    let p00 = 1.0 - 2.0 * t / b - (4.0 - 4.0 * decay);
    Ok((p00, p10))
}

/// Where a sampled path starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartState {
    /// An off period begins at `t = 0` (the primary has just gone quiet).
    OnToOffBoundary,
    /// A uniformly random phase of a long-running process.
    Equilibrium,
}

/// Sample path of the primary: its state at `t = 0` and the ordered times at
/// which it switches.
#[derive(Debug, Clone, PartialEq)]
pub struct ToggleList {
    pub initial_idle: bool,
    pub toggles: Vec<f64>,
    pub horizon: f64,
}

impl ToggleList {
    fn switches_before(&self, t: f64) -> usize {
        self.toggles.partition_point(|&x| x <= t)
    }

    pub fn is_idle_at(&self, t: f64) -> bool {
        self.initial_idle ^ (self.switches_before(t) % 2 == 1)
    }

    /// True when the channel is idle for the whole of `[start, end]`.
    pub fn idle_throughout(&self, start: f64, end: f64) -> bool {
        self.is_idle_at(start) && self.switches_before(end) == self.switches_before(start)
    }

    /// Time the primary spends active within `[start, end]`.
    pub fn busy_time(&self, start: f64, end: f64) -> f64 {
        let mut busy = 0.0;
        let mut idle = self.is_idle_at(start);
        let mut from = start;
        for &x in &self.toggles[self.switches_before(start)..] {
            if x >= end {
                break;
            }
            if !idle {
                busy += x - from;
            }
            idle = !idle;
            from = x;
        }
        if !idle {
            busy += end - from;
        }
        busy
    }

    /// First switch strictly after `t`.
    pub fn next_toggle_after(&self, t: f64) -> Option<f64> {
        let k = self.switches_before(t);
        self.toggles.get(k).copied()
    }
}

/// Number of mean cycles the equilibrium sampler runs before its reference time.
pub const WARMUP_CYCLES: f64 = 20.0;

/// Draws alternating holds until `horizon`.
pub fn sample_process(model: &TrafficModel, seed: u64, horizon: f64, start: StartState) -> Result<ToggleList> {
    if !(horizon > 0.0) {
        return Err(Error::domain(
            "sample_process",
            format!("horizon must be > 0, got {horizon}"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample_process_with(model, &mut rng, horizon, start))
}

pub(crate) fn sample_process_with<R: Rng + ?Sized>(
    model: &TrafficModel,
    rng: &mut R,
    horizon: f64,
    start: StartState,
) -> ToggleList {
    let offset = match start {
        StartState::OnToOffBoundary => 0.0,
        StartState::Equilibrium => {
            let cycle = model.cycle_mean();
            WARMUP_CYCLES * cycle + rng.random::<f64>() * cycle
        }
    };
    let mut idle = true;
    let mut clock = 0.0;
    let mut initial_idle = true;
    let mut toggles = Vec::new();
    loop {
        let hold = if idle {
            model.off_dist.sample(rng)
        } else {
            model.on_dist.sample(rng)
        };
        let next = clock + hold;
        if next <= offset {
            clock = next;
            idle = !idle;
            initial_idle = idle;
            continue;
        }
        if next - offset > horizon {
            break;
        }
        toggles.push(next - offset);
        clock = next;
        idle = !idle;
    }
    ToggleList {
        initial_idle,
        toggles,
        horizon,
    }
}

/// Monte Carlo occupancy estimate at one lag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOccupancy {
    pub p00: f64,
    pub p10: f64,
    pub p00_stderr: f64,
    pub p10_stderr: f64,
    /// Trials whose reference state was idle / busy.
    pub idle_trials: usize,
    pub busy_trials: usize,
}

/// Samples `n_trials` equilibrium paths, conditions on the state at the
/// reference instant and counts how often the channel is idle `t` later.
pub fn mc_occupancy(model: &TrafficModel, t: f64, n_trials: usize, seed: u64) -> Result<McOccupancy> {
    if n_trials < 10_000 {
        return Err(Error::domain(
            "mc_occupancy",
            format!("need at least 10^4 trials, got {n_trials}"),
        ));
    }
    if !(t >= 0.0) {
        return Err(Error::domain("mc_occupancy", format!("lag must be >= 0, got {t}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cycle = model.cycle_mean();
    let (mut n0, mut k0, mut n1, mut k1) = (0usize, 0usize, 0usize, 0usize);
    for _ in 0..n_trials {
        let reference = WARMUP_CYCLES * cycle + rng.random::<f64>() * cycle;
        let target = reference + t;
        let mut idle = true;
        let mut clock = 0.0;
        let mut state_at_ref = None;
        let state_at_target = loop {
            let hold = if idle {
                model.off_dist.sample(&mut rng)
            } else {
                model.on_dist.sample(&mut rng)
            };
            let next = clock + hold;
            if state_at_ref.is_none() && next > reference {
                state_at_ref = Some(idle);
            }
            if next > target {
                break idle;
            }
            clock = next;
            idle = !idle;
        };
        if state_at_ref.unwrap_or(idle) {
            n0 += 1;
            k0 += state_at_target as usize;
        } else {
            n1 += 1;
            k1 += state_at_target as usize;
        }
    }
    let ratio = |k: usize, n: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    let stderr = |p: f64, n: usize| if n == 0 { 0.0 } else { (p * (1.0 - p) / n as f64).sqrt() };
    let p00 = ratio(k0, n0);
    let p10 = ratio(k1, n1);
    Ok(McOccupancy {
        p00,
        p10,
        p00_stderr: stderr(p00, n0),
        p10_stderr: stderr(p10, n1),
        idle_trials: n0,
        busy_trials: n1,
    })
}
