use std::sync::Arc;

use rayon::prelude::*;

use super::{split_index, Action, DurationPolicy, PolicyTable, Scenario, ValueTable};
use crate::belief::{sense_branches, tx_branches, Branch};
use crate::error::{Error, Result};
use crate::reward::{collision_cost, tx_reward_unchecked, CostModel};
use crate::sensing::{false_alarm_with_quantile, q_inverse};
use crate::traffic::{solve_occupancy, OccupancyTable, PersistenceFrom};

/// Which actions the optimiser may pick. Restricting it evaluates a fixed
/// behaviour such as "always transmit" with the same machinery.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionSet {
    pub idle: bool,
    pub sense: bool,
    pub transmit: bool,
}

impl ActionSet {
    pub const ALL: ActionSet = ActionSet {
        idle: true,
        sense: true,
        transmit: true,
    };

    pub const TRANSMIT_ONLY: ActionSet = ActionSet {
        idle: false,
        sense: false,
        transmit: true,
    };
}

/// Values of the three actions at one state, with the best durations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionValues {
    pub idle: f64,
    pub sense: f64,
    pub sense_duration: f64,
    pub transmit: f64,
    pub tx_duration: f64,
}

impl ActionValues {
    /// The maximising action. Ties go to Idle, then Sense.
    pub fn best(&self) -> (Action, f64) {
        let mut best = (Action::Idle, self.idle);
        if self.sense > best.1 {
            best = (Action::Sense(self.sense_duration), self.sense);
        }
        if self.transmit > best.1 {
            best = (Action::Transmit(self.tx_duration), self.transmit);
        }
        best
    }
}

/// Report of a value-iteration run.
#[derive(Debug, Clone, PartialEq)]
pub struct Convergence {
    pub iterations: usize,
    /// Sup-norm change of every sweep.
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub values: ValueTable,
    pub policy: PolicyTable,
    pub mode: DurationPolicy,
    pub convergence: Option<Convergence>,
}

impl Solution {
    /// `U(p = 1, t = 0)`, the value at the start of an idle period.
    pub fn value_at_start(&self) -> f64 {
        self.values.at(self.values.n_p - 1, 0)
    }
}

/// Quantities shared by every node of one time column.
pub(crate) struct ColumnCtx {
    k: usize,
    persist: PersistenceFrom,
    collision: f64,
}

/// A candidate duration with its grid shift and false-alarm probability.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Cand {
    pub duration: f64,
    pub off: usize,
    pub frac: f64,
    pub p_fa: f64,
}

/// Candidate durations for one solve.
pub(crate) struct Menu {
    sense: Vec<Cand>,
    tx: Vec<Cand>,
    /// One candidate per belief node instead of a shared list.
    per_node: bool,
    pub terminal: f64,
    pub terminal_action: Action,
}

impl Menu {
    #[inline]
    fn sense_at(&self, i: usize) -> &[Cand] {
        if self.per_node {
            std::slice::from_ref(&self.sense[i])
        } else {
            &self.sense
        }
    }

    #[inline]
    fn tx_at(&self, i: usize) -> &[Cand] {
        if self.per_node {
            std::slice::from_ref(&self.tx[i])
        } else {
            &self.tx
        }
    }
}

/// A scenario prepared for solving: occupancy table, cached detector
/// quantile and grid bookkeeping.
#[derive(Debug, Clone)]
pub struct Model {
    scenario: Scenario,
    occ: Arc<OccupancyTable>,
    p00_idle: f64,
    p10_idle: f64,
    idle_off: usize,
    idle_frac: f64,
    n_cols: usize,
    first_terminal: usize,
    qinv_pd: f64,
    allowed: ActionSet,
}

impl Model {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let dt = scenario.grid.dt;
        let lag_cols = (scenario.t_idle / dt).ceil().max(1.0);
        let occ = solve_occupancy(&scenario.traffic, dt, lag_cols * dt)?;
        Self::with_occupancy(scenario, Arc::new(occ))
    }

    fn with_occupancy(scenario: Scenario, occ: Arc<OccupancyTable>) -> Result<Self> {
        let g = &scenario.grid;
        let last = (g.t_horizon / g.dt).round() as usize;
        let first_terminal = (0..last)
            .find(|&k| scenario.traffic.off_dist.survival_unchecked(k as f64 * g.dt) <= 0.0)
            .unwrap_or(last);
        let (idle_off, idle_frac) = split_index(scenario.t_idle / g.dt);
        Ok(Model {
            p00_idle: occ.p00_at(scenario.t_idle)?,
            p10_idle: occ.p10_at(scenario.t_idle)?,
            idle_off,
            idle_frac,
            n_cols: last + 1,
            first_terminal,
            qinv_pd: if scenario.sensing.perfect {
                0.0
            } else {
                q_inverse(scenario.sensing.p_d)?
            },
            allowed: ActionSet::ALL,
            scenario,
            occ,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn occupancy(&self) -> &OccupancyTable {
        &self.occ
    }

    pub fn allowed(&self) -> ActionSet {
        self.allowed
    }

    /// Same traffic, detector and grid with different costs; the occupancy
    /// table is shared.
    pub fn with_costs(&self, costs: CostModel) -> Result<Self> {
        costs.validate()?;
        let mut scenario = self.scenario;
        scenario.costs = costs;
        scenario.validate()?;
        Ok(Model {
            scenario,
            ..self.clone()
        })
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        self.with_costs(self.scenario.costs.with_gamma(gamma))
    }

    /// Limits the actions the optimiser may choose. The terminal regime is
    /// unaffected.
    pub fn restricted(&self, allowed: ActionSet) -> Result<Self> {
        if !(allowed.idle || allowed.sense || allowed.transmit) {
            return Err(Error::config("run", "at least one action must be allowed"));
        }
        Ok(Model {
            allowed,
            ..self.clone()
        })
    }

    /// Number of grid columns before the terminal regime begins.
    pub fn active_columns(&self) -> usize {
        self.first_terminal
    }

    fn cand(&self, duration: f64, sensing: bool) -> Cand {
        let (off, frac) = split_index(duration / self.scenario.grid.dt);
        Cand {
            duration,
            off,
            frac,
            p_fa: if sensing {
                false_alarm_with_quantile(&self.scenario.sensing, self.qinv_pd, duration)
            } else {
                0.0
            },
        }
    }

    pub(crate) fn menu(&self, mode: &DurationPolicy) -> Result<Menu> {
        self.scenario.check_policy(mode)?;
        let n_p = self.scenario.grid.n_p;
        let (sense, tx, per_node) = match mode {
            DurationPolicy::Fixed { sense, tx } => (vec![self.cand(*sense, true)], vec![self.cand(*tx, false)], false),
            DurationPolicy::PerState => (
                self.scenario
                    .sense_candidates()
                    .into_iter()
                    .map(|d| self.cand(d, true))
                    .collect(),
                self.scenario
                    .tx_candidates()
                    .into_iter()
                    .map(|d| self.cand(d, false))
                    .collect(),
                false,
            ),
            DurationPolicy::Linear(c) => {
                let p = |i: usize| i as f64 / (n_p - 1) as f64;
                (
                    (0..n_p).map(|i| self.cand(c.sense_at(p(i)), true)).collect(),
                    (0..n_p).map(|i| self.cand(c.tx_at(p(i)), false)).collect(),
                    true,
                )
            }
        };
        let (terminal_action, terminal) = self.terminal_of(&sense, &tx);
        Ok(Menu {
            sense,
            tx,
            per_node,
            terminal,
            terminal_action,
        })
    }

    /// Best immediate reward once the idle period is certainly over: every
    /// action is scored with `p·q = 0`, over the durations the mode can use.
    fn terminal_of(&self, sense: &[Cand], tx: &[Cand]) -> (Action, f64) {
        let cm = &self.scenario.costs;
        let sorted = |c: &[Cand]| {
            let mut d: Vec<f64> = c.iter().map(|c| c.duration).collect();
            d.sort_by(f64::total_cmp);
            d.dedup();
            d
        };
        let mut best = (Action::Idle, -cm.k_idle * self.scenario.t_idle);
        for d in sorted(sense) {
            let v = -cm.k_sense * d;
            if v > best.1 {
                best = (Action::Sense(d), v);
            }
        }
        for d in sorted(tx) {
            let v = tx_reward_unchecked(cm, &self.scenario.channel, 0.0, d);
            if v > best.1 {
                best = (Action::Transmit(d), v);
            }
        }
        best
    }

    /// Terminal value on every belief node.
    pub fn terminal_values(&self, mode: &DurationPolicy) -> Result<Vec<f64>> {
        let menu = self.menu(mode)?;
        Ok(vec![menu.terminal; self.scenario.grid.n_p])
    }

    #[inline]
    fn continuation(&self, table: &ValueTable, k: usize, c: &Cand, a: Branch, b: Branch) -> f64 {
        let mut v = 0.0;
        if a.weight > 0.0 {
            v += a.weight * table.read(a.posterior, k + c.off, c.frac);
        }
        if b.weight > 0.0 {
            v += b.weight * table.read(b.posterior, k + c.off, c.frac);
        }
        v
    }

    fn column_ctx(&self, k: usize) -> ColumnCtx {
        let sc = &self.scenario;
        ColumnCtx {
            k,
            persist: sc.traffic.off_dist.persistence_from(k as f64 * sc.grid.dt),
            collision: collision_cost(&sc.costs),
        }
    }

    /// Action values at belief `p` in the column described by `ctx`, reading
    /// the future from `table`.
    #[inline]
    pub(crate) fn evaluate(
        &self,
        table: &ValueTable,
        ctx: &ColumnCtx,
        p: f64,
        sense: &[Cand],
        tx: &[Cand],
    ) -> ActionValues {
        let sc = &self.scenario;
        let cm = &sc.costs;
        let beta = sc.beta;
        let k = ctx.k;
        let mut out = ActionValues {
            idle: f64::NEG_INFINITY,
            sense: f64::NEG_INFINITY,
            sense_duration: f64::NAN,
            transmit: f64::NEG_INFINITY,
            tx_duration: f64::NAN,
        };

        if self.allowed.idle {
            let next = (p * self.p00_idle + (1.0 - p) * self.p10_idle).clamp(0.0, 1.0);
            out.idle = -cm.k_idle * sc.t_idle + beta * table.read(next, k + self.idle_off, self.idle_frac);
        }
        if self.allowed.sense {
            let p_d = sc.sensing.detection_prob();
            for c in sense {
                let pq = p * ctx.persist.q(c.duration);
                let (free, busy) = sense_branches(pq, c.p_fa, p_d);
                let v = -cm.k_sense * c.duration + beta * self.continuation(table, k, c, free, busy);
                if v > out.sense {
                    out.sense = v;
                    out.sense_duration = c.duration;
                }
            }
        }
        if self.allowed.transmit {
            let ch = &sc.channel;
            for c in tx {
                let pq = p * ctx.persist.q(c.duration);
                let (ack, nack) = tx_branches(pq, ch);
                let payload = (c.duration - cm.overhead).max(0.0);
                let reward =
                    ack.weight * cm.reward_rate * payload - ((1.0 - pq) * ctx.collision + cm.k_tx) * c.duration;
                let v = reward + beta * self.continuation(table, k, c, ack, nack);
                if v > out.transmit {
                    out.transmit = v;
                    out.tx_duration = c.duration;
                }
            }
        }
        out
    }

    /// Action values at an arbitrary belief `p` and a grid time `t`.
    pub fn bellman_values(&self, future: &ValueTable, mode: &DurationPolicy, p: f64, t: f64) -> Result<ActionValues> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Logic(format!("belief {p} outside [0, 1]")));
        }
        let (k, frac) = split_index(t / self.scenario.grid.dt);
        if frac != 0.0 || !(t >= 0.0) || k + 1 >= self.n_cols {
            return Err(Error::Logic(format!("t={t} is not a grid time before the horizon")));
        }
        let (sense, tx) = match mode {
            DurationPolicy::Linear(c) => (vec![self.cand(c.sense_at(p), true)], vec![self.cand(c.tx_at(p), false)]),
            _ => {
                let menu = self.menu(mode)?;
                (menu.sense, menu.tx)
            }
        };
        Ok(self.evaluate(future, &self.column_ctx(k), p, &sense, &tx))
    }

    fn empty_table(&self, terminal: f64) -> ValueTable {
        let n_p = self.scenario.grid.n_p;
        ValueTable {
            n_p,
            dt: self.scenario.grid.dt,
            n_cols: self.n_cols,
            values: vec![terminal; n_p * self.n_cols],
            terminal,
        }
    }

    fn policy_table(&self, menu: &Menu, actions: Vec<Action>) -> PolicyTable {
        PolicyTable {
            n_p: self.scenario.grid.n_p,
            dt: self.scenario.grid.dt,
            n_active: self.first_terminal,
            actions,
            terminal_action: menu.terminal_action,
        }
    }

    /// Fills column `k` of `out` (values and actions) from `table`.
    fn sweep_column(
        &self,
        menu: &Menu,
        table: &ValueTable,
        k: usize,
        values: &mut [f64],
        actions: Option<&mut [Action]>,
    ) {
        let n_p = values.len();
        let scale = 1.0 / (n_p - 1) as f64;
        let ctx = self.column_ctx(k);
        match actions {
            Some(acts) => {
                for i in 0..n_p {
                    let (a, v) = self
                        .evaluate(table, &ctx, i as f64 * scale, menu.sense_at(i), menu.tx_at(i))
                        .best();
                    values[i] = v;
                    acts[i] = a;
                }
            }
            None => {
                for (i, slot) in values.iter_mut().enumerate() {
                    *slot = self
                        .evaluate(table, &ctx, i as f64 * scale, menu.sense_at(i), menu.tx_at(i))
                        .best()
                        .1;
                }
            }
        }
    }

    /// Backward induction returning only `U(1, 0)`; used by the linear search.
    pub(crate) fn start_value(&self, menu: &Menu) -> f64 {
        let mut table = self.empty_table(menu.terminal);
        let n_p = table.n_p;
        let mut col = vec![0.0; n_p];
        for k in (0..self.first_terminal).rev() {
            self.sweep_column(menu, &table, k, &mut col, None);
            table.values[k * n_p..(k + 1) * n_p].copy_from_slice(&col);
        }
        table.at(n_p - 1, 0)
    }
}

fn check_finite(table: &ValueTable) -> Result<()> {
    if let Some(pos) = table.values.iter().position(|v| !v.is_finite()) {
        let (k, i) = (pos / table.n_p, pos % table.n_p);
        return Err(Error::Numerical(format!(
            "non-finite value at p={}, t={}",
            table.p_node(i),
            k as f64 * table.dt
        )));
    }
    Ok(())
}

/// Solves the finite-horizon problem column by column from the horizon back
/// to `t = 0`.
pub fn backward_induction(model: &Model, mode: &DurationPolicy) -> Result<Solution> {
    let sc = model.scenario();
    if sc.beta >= 1.0 && sc.traffic.off_dist.support_end().is_none() {
        return Err(Error::config(
            "run.beta",
            "beta = 1 needs idle periods that end by the horizon; use value_iteration with beta < 1",
        ));
    }
    let menu = model.menu(mode)?;
    let mut table = model.empty_table(menu.terminal);
    let n_p = table.n_p;
    let mut actions = vec![menu.terminal_action; n_p * model.first_terminal];
    let mut col = vec![0.0; n_p];
    for k in (0..model.first_terminal).rev() {
        model.sweep_column(&menu, &table, k, &mut col, Some(&mut actions[k * n_p..(k + 1) * n_p]));
        table.values[k * n_p..(k + 1) * n_p].copy_from_slice(&col);
    }
    check_finite(&table)?;
    Ok(Solution {
        policy: model.policy_table(&menu, actions),
        values: table,
        mode: mode.clone(),
        convergence: None,
    })
}

/// Iterates the Bellman operator over the whole grid, starting from zeros,
/// until successive tables differ by less than `tol` in sup norm.
pub fn value_iteration(model: &Model, mode: &DurationPolicy, tol: f64) -> Result<Solution> {
    const MAX_SWEEPS: usize = 200_000;
    if model.scenario().beta >= 1.0 {
        return Err(Error::config("run.beta", "value iteration needs beta < 1"));
    }
    if !(tol > 0.0) {
        return Err(Error::config(
            "run.tol",
            format!("tolerance must be positive, got {tol}"),
        ));
    }
    let menu = model.menu(mode)?;
    let n_p = model.scenario().grid.n_p;
    let active = model.first_terminal;
    let mut table = model.empty_table(menu.terminal);
    table.values[..active * n_p].iter_mut().for_each(|v| *v = 0.0);
    let mut next = table.clone();
    let mut residuals = Vec::new();
    loop {
        next.values[..active * n_p]
            .par_chunks_mut(n_p)
            .enumerate()
            .for_each(|(k, col)| model.sweep_column(&menu, &table, k, col, None));
        let residual = table
            .values
            .iter()
            .zip(&next.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        residuals.push(residual);
        std::mem::swap(&mut table, &mut next);
        if residual < tol {
            break;
        }
        if residuals.len() >= MAX_SWEEPS {
            return Err(Error::Numerical(format!(
                "value iteration stalled at residual {residual} after {MAX_SWEEPS} sweeps"
            )));
        }
    }
    check_finite(&table)?;
    let mut actions = vec![menu.terminal_action; n_p * active];
    let mut scratch = vec![0.0; n_p];
    for k in 0..active {
        model.sweep_column(
            &menu,
            &table,
            k,
            &mut scratch,
            Some(&mut actions[k * n_p..(k + 1) * n_p]),
        );
    }
    Ok(Solution {
        policy: model.policy_table(&menu, actions),
        values: table,
        mode: mode.clone(),
        convergence: Some(Convergence {
            iterations: residuals.len(),
            residuals,
        }),
    })
}
