//! Run configuration read from INI-style files.
//!
//! A file holds `[section]` headers and `key = value` lines; `#` and `;`
//! start comments. Every file is read on top of [`DEFAULTS`], so it only
//! needs the keys it changes. Unknown sections and keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::belief::TxChannelModel;
use crate::error::{Error, Result};
use crate::sensing::{db_to_linear, SensingModel};
use crate::solver::{DurationPolicy, Objective, Scenario};
use crate::traffic::HoldDistribution;

/// Every key with its default value.
pub const DEFAULTS: &str = include_str!("../presets/defaults.ini");

/// Names of the shipped presets, one per figure.
pub const PRESETS: [&str; 7] = ["fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8"];

/// Text of a shipped preset.
pub fn preset_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig2" => include_str!("../presets/fig2.ini"),
        "fig3" => include_str!("../presets/fig3.ini"),
        "fig4" => include_str!("../presets/fig4.ini"),
        "fig5" => include_str!("../presets/fig5.ini"),
        "fig6" => include_str!("../presets/fig6.ini"),
        "fig7" => include_str!("../presets/fig7.ini"),
        "fig8" => include_str!("../presets/fig8.ini"),
        _ => return None,
    })
}

const SECTIONS: [&str; 7] = ["traffic", "sensing", "channel", "costs", "bounds", "grid", "run"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Mode {
    Traditional,
    AdaptivePerState,
    AdaptiveLinear,
}

impl Mode {
    pub fn label(&self) -> &'static str {
        match self {
            Mode::Traditional => "traditional",
            Mode::AdaptivePerState => "adaptive_per_state",
            Mode::AdaptiveLinear => "adaptive_linear",
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "traditional" => Ok(Mode::Traditional),
            "adaptive_per_state" => Ok(Mode::AdaptivePerState),
            "adaptive_linear" => Ok(Mode::AdaptiveLinear),
            _ => Err(format!(
                "unknown mode '{s}' (expected traditional, adaptive_per_state or adaptive_linear)"
            )),
        }
    }
}

/// Which dynamic-programming routine fills the value table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Backward induction when the idle period has bounded support or
    /// `beta = 1`, value iteration otherwise.
    Auto,
    BackwardInduction,
    ValueIteration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    ValueAtStart,
    SimulatedMean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub modes: Vec<Mode>,
    /// Fixed sensing durations for traditional mode.
    pub t_sense: Vec<f64>,
    /// Fixed transmission durations for traditional mode.
    pub t_tx: Vec<f64>,
    /// Explicit collision knobs; overrides `gamma_steps` when set.
    pub gamma_list: Option<Vec<f64>>,
    pub gamma_steps: usize,
    pub method: Method,
    /// Value-iteration tolerance.
    pub tol: f64,
    pub objective: ObjectiveKind,
    pub seed: u64,
    pub episodes: usize,
    pub report_t: f64,
    pub check_times: Vec<f64>,
    pub mc_trials: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::parse("", "<defaults>").expect("shipped defaults parse")
    }
}

impl RunConfig {
    /// Parses `text` on top of the defaults and validates the result.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut entries = parse_ini(DEFAULTS, "<defaults>")?;
        for (k, v) in parse_ini(text, origin)? {
            entries.insert(k, v);
        }
        let cfg = build(Reader { entries })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: 0,
            message: format!("cannot read file: {e}"),
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn preset(name: &str) -> Result<Self> {
        let text = preset_text(name).ok_or_else(|| Error::config("preset", format!("unknown preset '{name}'")))?;
        Self::parse(text, &format!("<preset {name}>"))
    }

    pub fn validate(&self) -> Result<()> {
        let sc = &self.scenario;
        sc.validate()?;
        if sc.beta == 1.0 && sc.traffic.off_dist.support_end().is_none() {
            return Err(Error::config(
                "run.beta",
                "beta = 1 needs an idle period with bounded support; use beta < 1 with value iteration",
            ));
        }
        if self.method == Method::ValueIteration && sc.beta >= 1.0 {
            return Err(Error::config("run.method", "value iteration needs beta < 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::config("run.tol", format!("must be positive, got {}", self.tol)));
        }
        if self.modes.is_empty() {
            return Err(Error::config("run.mode", "at least one mode is required"));
        }
        if self.t_sense.is_empty() || self.t_tx.is_empty() {
            return Err(Error::config("run.t_sense", "t_sense and t_tx need at least one value"));
        }
        for (sense, tx) in self.fixed_pairs() {
            sc.check_policy(&DurationPolicy::Fixed { sense, tx })?;
        }
        if let Some(list) = &self.gamma_list {
            if list.is_empty() || list.iter().any(|g| !(0.0..=1.0).contains(g)) {
                return Err(Error::config(
                    "run.gammas",
                    format!("values must lie in [0, 1], got {list:?}"),
                ));
            }
        } else if self.gamma_steps < 2 {
            return Err(Error::config(
                "run.gamma_steps",
                format!("need at least 2 steps, got {}", self.gamma_steps),
            ));
        }
        if self.episodes < 100 {
            return Err(Error::config(
                "run.episodes",
                format!("need at least 100, got {}", self.episodes),
            ));
        }
        let g = &sc.grid;
        let k = self.report_t / g.dt;
        if !(self.report_t >= 0.0 && self.report_t < g.t_horizon) || (k - k.round()).abs() > 1e-9 {
            return Err(Error::config(
                "run.report_t",
                format!("must be a grid time before the horizon, got {}", self.report_t),
            ));
        }
        if self.check_times.iter().any(|&t| !(t >= 0.0 && t <= g.t_horizon)) {
            return Err(Error::config("run.check_times", "times must lie in [0, t_horizon]"));
        }
        if self.mc_trials < 10_000 {
            return Err(Error::config(
                "run.mc_trials",
                format!("need at least 10000, got {}", self.mc_trials),
            ));
        }
        Ok(())
    }

    /// Collision knobs for sweeps.
    pub fn gammas(&self) -> Vec<f64> {
        match &self.gamma_list {
            Some(list) => list.clone(),
            None => {
                let n = self.gamma_steps - 1;
                (0..=n).map(|i| i as f64 / n as f64).collect()
            }
        }
    }

    /// Every `(t_sense, t_tx)` pair, sensing-major.
    pub fn fixed_pairs(&self) -> Vec<(f64, f64)> {
        self.t_sense
            .iter()
            .flat_map(|&s| self.t_tx.iter().map(move |&t| (s, t)))
            .collect()
    }

    pub fn objective(&self) -> Objective {
        match self.objective {
            ObjectiveKind::ValueAtStart => Objective::ValueAtStart,
            ObjectiveKind::SimulatedMean => Objective::SimulatedMean {
                episodes: self.episodes,
                seed: self.seed,
            },
        }
    }

    /// True when the configured method resolves to value iteration.
    pub fn uses_value_iteration(&self) -> bool {
        match self.method {
            Method::BackwardInduction => false,
            Method::ValueIteration => true,
            Method::Auto => self.scenario.beta < 1.0 && self.scenario.traffic.off_dist.support_end().is_none(),
        }
    }
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    origin: String,
    line: usize,
}

type Entries = BTreeMap<(String, String), Entry>;

fn parse_ini(text: &str, origin: &str) -> Result<Entries> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut out = Entries::new();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.split(['#', ';']).next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        if let Some(rest) = s.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(line, format!("malformed section header '{s}'")))?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(err(line, format!("unknown section [{name}]")));
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = s
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected key = value, got '{s}'")))?;
        let (key, value) = (key.trim(), value.trim());
        let sec = section
            .clone()
            .ok_or_else(|| err(line, format!("key '{key}' appears before any section")))?;
        if key.is_empty() {
            return Err(err(line, "empty key".into()));
        }
        let entry = Entry {
            value: value.to_string(),
            origin: origin.to_string(),
            line,
        };
        if let Some(prev) = out.insert((sec.clone(), key.to_string()), entry) {
            return Err(err(
                line,
                format!("duplicate key {sec}.{key} (first set on line {})", prev.line),
            ));
        }
    }
    Ok(out)
}

struct Reader {
    entries: Entries,
}

impl Reader {
    fn take(&mut self, sec: &str, key: &str) -> Option<Entry> {
        self.entries.remove(&(sec.to_string(), key.to_string()))
    }

    fn value<T>(
        &mut self,
        sec: &str,
        key: &str,
        conv: impl Fn(&str) -> std::result::Result<T, String>,
    ) -> Result<Option<T>> {
        let Some(e) = self.take(sec, key) else {
            return Ok(None);
        };
        conv(&e.value).map(Some).map_err(|m| Error::Parse {
            path: e.origin,
            line: e.line,
            message: format!("{sec}.{key}: {m}"),
        })
    }

    fn required<T>(
        &mut self,
        sec: &str,
        key: &str,
        conv: impl Fn(&str) -> std::result::Result<T, String>,
    ) -> Result<T> {
        self.value(sec, key, conv)?
            .ok_or_else(|| Error::config(format!("{sec}.{key}"), "missing value"))
    }

    fn f64(&mut self, sec: &str, key: &str) -> Result<f64> {
        self.required(sec, key, parse_f64)
    }

    fn opt_f64(&mut self, sec: &str, key: &str) -> Result<Option<f64>> {
        self.value(sec, key, parse_f64)
    }

    fn list(&mut self, sec: &str, key: &str) -> Result<Vec<f64>> {
        self.required(sec, key, parse_list)
    }

    fn int<T: FromStr>(&mut self, sec: &str, key: &str) -> Result<T> {
        self.required(sec, key, |s| {
            s.parse::<T>()
                .map_err(|_| format!("expected a non-negative integer, got '{s}'"))
        })
    }

    /// Fails on the first key nobody asked for.
    fn finish(self) -> Result<()> {
        match self.entries.into_iter().min_by_key(|(_, e)| e.line) {
            None => Ok(()),
            Some(((sec, key), e)) => Err(Error::Parse {
                path: e.origin,
                line: e.line,
                message: format!("unknown key {sec}.{key}"),
            }),
        }
    }
}

fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("expected a finite number, got '{s}'")),
    }
}

fn parse_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',').map(|x| parse_f64(x.trim())).collect()
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got '{s}'")),
    }
}

fn hold(r: &mut Reader, side: &str, shared: (Option<String>, Option<f64>, Option<f64>)) -> Result<HoldDistribution> {
    let dist = r
        .value("traffic", &format!("{side}_dist"), |s| Ok(s.to_string()))?
        .or(shared.0);
    let b = r.opt_f64("traffic", &format!("{side}_b"))?.or(shared.1);
    let rate = r.opt_f64("traffic", &format!("{side}_rate"))?.or(shared.2);
    match dist.as_deref() {
        Some("uniform") => {
            let b = b.ok_or_else(|| Error::config(format!("traffic.{side}_b"), "uniform holds need b"))?;
            HoldDistribution::uniform(b)
                .map_err(|_| Error::config(format!("traffic.{side}_b"), format!("must be positive, got {b}")))
        }
        Some("exponential") => {
            let rate =
                rate.ok_or_else(|| Error::config(format!("traffic.{side}_rate"), "exponential holds need rate"))?;
            HoldDistribution::exponential(rate)
                .map_err(|_| Error::config(format!("traffic.{side}_rate"), format!("must be positive, got {rate}")))
        }
        Some(other) => Err(Error::config(
            format!("traffic.{side}_dist"),
            format!("unknown distribution '{other}' (expected uniform or exponential)"),
        )),
        None => Err(Error::config(format!("traffic.{side}_dist"), "missing distribution")),
    }
}

fn build(mut r: Reader) -> Result<RunConfig> {
    let mut sc = Scenario::baseline();

    let shared = (
        r.value("traffic", "dist", |s| Ok(s.to_string()))?,
        r.opt_f64("traffic", "b")?,
        r.opt_f64("traffic", "rate")?,
    );
    sc.traffic.off_dist = hold(&mut r, "off", shared.clone())?;
    sc.traffic.on_dist = hold(&mut r, "on", shared)?;

    let perfect = r.required("sensing", "perfect", parse_bool)?;
    let p_d = r.f64("sensing", "p_d")?;
    let snr = db_to_linear(r.f64("sensing", "snr_db")?);
    let sample_rate = r.f64("sensing", "sample_rate")?;
    sc.sensing = if perfect {
        SensingModel {
            p_d,
            snr,
            sample_rate,
            perfect: true,
        }
    } else {
        SensingModel::new(p_d, snr, sample_rate)?
    };

    sc.channel = TxChannelModel::new(r.f64("channel", "p_nc")?, r.f64("channel", "p_c")?)?;

    let c = &mut sc.costs;
    c.k_idle = r.f64("costs", "k_idle")?;
    c.k_sense = r.f64("costs", "k_sense")?;
    c.k_tx = r.f64("costs", "k_tx")?;
    c.reward_rate = r.f64("costs", "reward")?;
    c.overhead = r.f64("costs", "overhead")?;
    c.c_collision_max = r.f64("costs", "c_collision_max")?;
    c.gamma = r.f64("costs", "gamma")?;

    let b = &mut sc.bounds;
    b.tx_min = r.f64("bounds", "tx_min")?;
    b.tx_max = r.f64("bounds", "tx_max")?;
    b.sense_min = r.f64("bounds", "sense_min")?;
    b.sense_max = r.f64("bounds", "sense_max")?;

    sc.grid.n_p = r.int("grid", "n_p")?;
    sc.grid.dt = r.f64("grid", "dt")?;
    sc.grid.t_horizon = r.f64("grid", "t_horizon")?;
    sc.grid.duration_step = r.f64("grid", "duration_step")?;

    sc.t_idle = r.f64("run", "t_idle")?;
    sc.beta = r.f64("run", "beta")?;
    let modes = r.required("run", "mode", |s| {
        let mut m = s
            .split(',')
            .map(|x| x.trim().parse::<Mode>())
            .collect::<std::result::Result<Vec<_>, _>>()?;
        m.sort();
        m.dedup();
        Ok(m)
    })?;
    let method = r.required("run", "method", |s| match s {
        "auto" => Ok(Method::Auto),
        "backward_induction" => Ok(Method::BackwardInduction),
        "value_iteration" => Ok(Method::ValueIteration),
        _ => Err(format!(
            "unknown method '{s}' (expected auto, backward_induction or value_iteration)"
        )),
    })?;
    let objective = r.required("run", "objective", |s| match s {
        "value_at_start" => Ok(ObjectiveKind::ValueAtStart),
        "simulated_mean" => Ok(ObjectiveKind::SimulatedMean),
        _ => Err(format!(
            "unknown objective '{s}' (expected value_at_start or simulated_mean)"
        )),
    })?;

    let cfg = RunConfig {
        scenario: sc,
        modes,
        t_sense: r.list("run", "t_sense")?,
        t_tx: r.list("run", "t_tx")?,
        gamma_list: r.value("run", "gammas", parse_list)?,
        gamma_steps: r.int("run", "gamma_steps")?,
        method,
        tol: r.f64("run", "tol")?,
        objective,
        seed: r.int("run", "seed")?,
        episodes: r.int("run", "episodes")?,
        report_t: r.f64("run", "report_t")?,
        check_times: r.list("run", "check_times")?,
        mc_trials: r.int("run", "mc_trials")?,
    };
    r.finish()?;
    Ok(cfg)
}
