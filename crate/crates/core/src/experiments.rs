//! Runs behind the command-line tool. Every run returns plain rows that
//! render to CSV; output is identical for identical configs and seeds.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::config::{Mode, RunConfig};
use crate::error::{Error, Result};
use crate::sim::{evaluate, run_episode, EpisodeTrace, EvaluateOptions, Summary};
use crate::solver::{
    backward_induction, extract_thresholds, optimize_linear_policy, value_iteration, DurationPolicy,
    LinearCoefficients, Model, Solution, Thresholds,
};
use crate::traffic::{closed_form_uniform_occupancy, mc_occupancy, solve_occupancy, HoldDistribution};

/// A row of a CSV table.
pub trait CsvRow {
    const HEADER: &'static str;
    fn write_fields(&self, out: &mut String);
}

/// Renders rows with a header line.
pub fn render_csv<R: CsvRow>(rows: &[R]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(R::HEADER);
    out.push('\n');
    for r in rows {
        r.write_fields(&mut out);
        out.push('\n');
    }
    out
}

pub fn write_csv<R: CsvRow>(path: &Path, rows: &[R]) -> Result<()> {
    std::fs::write(path, render_csv(rows))?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Solves with the routine the config asks for.
pub fn solve_policy(model: &Model, mode: &DurationPolicy, cfg: &RunConfig) -> Result<Solution> {
    if cfg.uses_value_iteration() {
        value_iteration(model, mode, cfg.tol)
    } else {
        backward_induction(model, mode)
    }
}

/// Durations that identify one solved policy in the output tables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyLabel {
    pub mode: Mode,
    /// `T_S` for fixed and per-state policies, `b0` for linear ones.
    pub sense_or_b0: f64,
    pub b1: Option<f64>,
    /// `T_T` for fixed and per-state policies, `a0` for linear ones.
    pub tx_or_a0: f64,
    pub a1: Option<f64>,
}

impl PolicyLabel {
    fn write(&self, out: &mut String) {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            self.mode.label(),
            self.sense_or_b0,
            opt(self.b1),
            self.tx_or_a0,
            opt(self.a1)
        );
    }
}

/// One solved policy at one collision knob.
#[derive(Debug, Clone)]
pub struct Solved {
    pub gamma: f64,
    pub label: PolicyLabel,
    pub solution: Solution,
}

/// Solves every policy the config describes in `mode` at collision knob
/// `gamma`. Traditional mode yields one entry per duration pair; the linear
/// mode runs the coefficient search first.
pub fn solve_mode(base: &Model, cfg: &RunConfig, mode: Mode, gamma: f64) -> Result<Vec<Solved>> {
    let model = base.with_gamma(gamma)?;
    match mode {
        Mode::Traditional => cfg
            .fixed_pairs()
            .into_par_iter()
            .map(|(sense, tx)| {
                let solution = solve_policy(&model, &DurationPolicy::Fixed { sense, tx }, cfg)?;
                Ok(Solved {
                    gamma,
                    label: PolicyLabel {
                        mode,
                        sense_or_b0: sense,
                        b1: None,
                        tx_or_a0: tx,
                        a1: None,
                    },
                    solution,
                })
            })
            .collect(),
        Mode::AdaptivePerState => {
            let solution = solve_policy(&model, &DurationPolicy::PerState, cfg)?;
            let at_start = model.bellman_values(&solution.values, &DurationPolicy::PerState, 1.0, 0.0)?;
            Ok(vec![Solved {
                gamma,
                label: PolicyLabel {
                    mode,
                    sense_or_b0: at_start.sense_duration,
                    b1: None,
                    tx_or_a0: at_start.tx_duration,
                    a1: None,
                },
                solution,
            }])
        }
        Mode::AdaptiveLinear => {
            let best = optimize_linear_policy(&model, cfg.objective())?;
            let LinearCoefficients { a0, a1, b0, b1 } = best.coefficients;
            let solution = solve_policy(&model, &DurationPolicy::Linear(best.coefficients), cfg)?;
            Ok(vec![Solved {
                gamma,
                label: PolicyLabel {
                    mode,
                    sense_or_b0: b0,
                    b1: Some(b1),
                    tx_or_a0: a0,
                    a1: Some(a1),
                },
                solution,
            }])
        }
    }
}

/// The only mode of a config, for runs that solve a single policy.
fn single_mode(cfg: &RunConfig) -> Result<Mode> {
    match cfg.modes.as_slice() {
        [m] => Ok(*m),
        _ => Err(Error::config("run.mode", "this command takes exactly one mode")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdRow(pub Thresholds);

impl CsvRow for ThresholdRow {
    const HEADER: &'static str = "t,p1_star,p2_star";
    fn write_fields(&self, out: &mut String) {
        let _ = write!(out, "{},{},{}", self.0.t, opt(self.0.p1), opt(self.0.p2));
    }
}

/// Action values along `p` at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentRow {
    pub p: f64,
    pub idle: f64,
    pub sense: f64,
    pub transmit: f64,
    pub utility: f64,
}

impl CsvRow for ComponentRow {
    const HEADER: &'static str = "p,idle,sense,transmit,utility";
    fn write_fields(&self, out: &mut String) {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            self.p, self.idle, self.sense, self.transmit, self.utility
        );
    }
}

pub fn components(model: &Model, solution: &Solution, t: f64) -> Result<Vec<ComponentRow>> {
    let n = solution.values.n_p();
    (0..n)
        .map(|i| {
            let p = solution.values.p_node(i);
            let v = model.bellman_values(&solution.values, &solution.mode, p, t)?;
            Ok(ComponentRow {
                p,
                idle: v.idle,
                sense: v.sense,
                transmit: v.transmit,
                utility: v.best().1,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub solved: Solved,
    pub thresholds: Vec<ThresholdRow>,
    pub components: Vec<ComponentRow>,
}

/// Solves one policy at the configured collision knob and reads the
/// thresholds of every active column. A column without the threshold
/// shape is an error.
pub fn solve(cfg: &RunConfig) -> Result<SolveOutput> {
    let mode = single_mode(cfg)?;
    if mode == Mode::Traditional && cfg.fixed_pairs().len() != 1 {
        return Err(Error::config(
            "run.t_sense",
            "solve takes a single (t_sense, t_tx) pair",
        ));
    }
    let model = Model::new(cfg.scenario)?;
    let gamma = cfg.scenario.costs.gamma;
    let solved = solve_mode(&model, cfg, mode, gamma)?.remove(0);
    let model = model.with_gamma(gamma)?;
    let dt = cfg.scenario.grid.dt;
    let thresholds = (0..solved.solution.policy.n_active())
        .map(|k| extract_thresholds(&model, &solved.solution, k as f64 * dt).map(ThresholdRow))
        .collect::<Result<Vec<_>>>()?;
    let components = components(&model, &solved.solution, cfg.report_t)?;
    Ok(SolveOutput {
        solved,
        thresholds,
        components,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub gamma: f64,
    pub label: PolicyLabel,
    /// `U(1, 0)`.
    pub value: f64,
}

impl CsvRow for SweepRow {
    const HEADER: &'static str = "gamma,mode,Ts_or_b0,b1,Tt_or_a0,a1,Us_at_start";
    fn write_fields(&self, out: &mut String) {
        let _ = write!(out, "{},", self.gamma);
        self.label.write(out);
        let _ = write!(out, ",{}", self.value);
    }
}

/// `U(1, 0)` for every mode, collision knob and duration configuration.
/// Rows are grouped by mode, then ordered by `gamma`.
pub fn sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    let model = Model::new(cfg.scenario)?;
    let gammas = cfg.gammas();
    let mut rows = Vec::new();
    for &mode in &cfg.modes {
        let per_gamma: Vec<Vec<Solved>> = if mode == Mode::AdaptiveLinear {
            // The coefficient search is already parallel.
            gammas
                .iter()
                .map(|&g| solve_mode(&model, cfg, mode, g))
                .collect::<Result<_>>()?
        } else {
            gammas
                .par_iter()
                .map(|&g| solve_mode(&model, cfg, mode, g))
                .collect::<Result<_>>()?
        };
        rows.extend(per_gamma.into_iter().flatten().map(|s| SweepRow {
            gamma: s.gamma,
            label: s.label,
            value: s.solution.value_at_start(),
        }));
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulateRow {
    pub gamma: f64,
    pub label: PolicyLabel,
    pub dp_value: f64,
    pub summary: Summary,
}

impl CsvRow for SimulateRow {
    const HEADER: &'static str = "gamma,mode,Ts_or_b0,b1,Tt_or_a0,a1,dp_value,episodes,mean,stderr,ci95,\
                                  collision_fraction,payload_fraction,idle_actions,sense_actions,transmit_actions";
    fn write_fields(&self, out: &mut String) {
        let s = &self.summary;
        let _ = write!(out, "{},", self.gamma);
        self.label.write(out);
        let _ = write!(
            out,
            ",{},{},{},{},{},{},{},{},{},{}",
            self.dp_value,
            s.episodes,
            s.mean,
            s.stderr,
            s.ci95,
            s.collision_fraction,
            s.payload_fraction,
            s.action_counts[0],
            s.action_counts[1],
            s.action_counts[2]
        );
    }
}

#[derive(Debug, Clone)]
pub struct SimulateOutput {
    pub rows: Vec<SimulateRow>,
    /// First episode under the first policy.
    pub trace: EpisodeTrace,
}

/// Simulates every configured policy at the configured collision knob.
pub fn simulate(cfg: &RunConfig) -> Result<SimulateOutput> {
    let base = Model::new(cfg.scenario)?;
    let gamma = cfg.scenario.costs.gamma;
    let model = base.with_gamma(gamma)?;
    let opts = EvaluateOptions::new(cfg.episodes, cfg.seed);
    let mut rows = Vec::new();
    let mut trace = None;
    for &mode in &cfg.modes {
        for solved in solve_mode(&base, cfg, mode, gamma)? {
            let policy = &solved.solution.policy;
            if trace.is_none() {
                trace = Some(run_episode(policy, &model, cfg.seed)?);
            }
            rows.push(SimulateRow {
                gamma,
                label: solved.label,
                dp_value: solved.solution.value_at_start(),
                summary: evaluate(policy, &model, &opts)?,
            });
        }
    }
    Ok(SimulateOutput {
        rows,
        trace: trace.expect("at least one mode"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenewalRow {
    pub t: f64,
    pub p10_volterra: f64,
    /// Printed closed form; defined for equal uniform holds with `0 < t < b`.
    pub p10_appendix: Option<f64>,
    pub p10_mc: f64,
    pub mc_stderr: f64,
}

impl CsvRow for RenewalRow {
    const HEADER: &'static str = "t,p10_volterra,p10_appendix,p10_mc,mc_stderr";
    fn write_fields(&self, out: &mut String) {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            self.t,
            self.p10_volterra,
            opt(self.p10_appendix),
            self.p10_mc,
            self.mc_stderr
        );
    }
}

/// Compares `P10` from the renewal recursion, the closed form and Monte
/// Carlo at each configured lag.
pub fn renewal_check(cfg: &RunConfig) -> Result<Vec<RenewalRow>> {
    let traffic = cfg.scenario.traffic;
    let g = &cfg.scenario.grid;
    let occ = solve_occupancy(&traffic, g.dt, g.t_horizon)?;
    let shared_b = match (traffic.off_dist, traffic.on_dist) {
        (HoldDistribution::Uniform { b }, HoldDistribution::Uniform { b: b_on }) if b == b_on => Some(b),
        _ => None,
    };
    cfg.check_times
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            let mc = mc_occupancy(&traffic, t, cfg.mc_trials, cfg.seed.wrapping_add(i as u64))?;
            let p10_appendix = match shared_b {
                Some(b) if t > 0.0 && t < b => Some(closed_form_uniform_occupancy(b, t)?.1),
                _ => None,
            };
            Ok(RenewalRow {
                t,
                p10_volterra: occ.p10_at(t)?,
                p10_appendix,
                p10_mc: mc.p10,
                mc_stderr: mc.p10_stderr,
            })
        })
        .collect()
}

/// A named CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvFile {
    pub name: String,
    pub contents: String,
}

/// The data behind figure `n` (2 to 8) from a config read from its preset.
/// Figure 2 gives thresholds and action values; the others give sweeps.
pub fn figure(n: u32, cfg: &RunConfig) -> Result<Vec<CsvFile>> {
    match n {
        2 => {
            let out = solve(cfg)?;
            Ok(vec![
                CsvFile {
                    name: "fig2_thresholds.csv".into(),
                    contents: render_csv(&out.thresholds),
                },
                CsvFile {
                    name: "fig2_components.csv".into(),
                    contents: render_csv(&out.components),
                },
            ])
        }
        3..=8 => Ok(vec![CsvFile {
            name: format!("fig{n}.csv"),
            contents: render_csv(&sweep(cfg)?),
        }]),
        _ => Err(Error::config("fig", format!("figures 2 to 8 are available, got {n}"))),
    }
}
