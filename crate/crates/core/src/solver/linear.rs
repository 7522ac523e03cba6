use rayon::prelude::*;

use super::{backward_induction, lattice, DurationPolicy, LinearCoefficients, Model, Scenario};
use crate::error::{Error, Result};
use crate::sim::{evaluate, EvaluateOptions};

/// How a candidate set of coefficients is scored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// `U(1, 0)` from backward induction.
    ValueAtStart,
    /// Mean utility over simulated episodes.
    SimulatedMean { episodes: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearOptimum {
    pub coefficients: LinearCoefficients,
    pub score: f64,
    /// Number of lattice points scored.
    pub evaluated: usize,
}

fn check_divides(span: f64, step: f64, key: &str) -> Result<()> {
    let r = span / step;
    if (r - r.round()).abs() > 1e-9 {
        return Err(Error::config(
            key,
            format!("duration_step {step} does not divide the range {span}"),
        ));
    }
    Ok(())
}

/// Every feasible `(a0, a1, b0, b1)` on the duration lattice, in
/// lexicographic order.
pub fn linear_lattice(sc: &Scenario) -> Result<Vec<LinearCoefficients>> {
    let b = &sc.bounds;
    let step = sc.grid.duration_step;
    check_divides(b.tx_max - b.tx_min, step, "grid.duration_step")?;
    check_divides(b.sense_max - b.sense_min, step, "grid.duration_step")?;
    let mut tx = Vec::new();
    for a0 in lattice(b.tx_min, b.tx_max, step) {
        for a1 in lattice(0.0, b.tx_max - a0, step) {
            tx.push((a0, a1));
        }
    }
    let mut sense = Vec::new();
    for b0 in lattice(b.sense_min, b.sense_max, step) {
        for b1 in lattice(0.0, b0 - b.sense_min, step) {
            sense.push((b0, b1));
        }
    }
    let out: Vec<_> = tx
        .iter()
        .flat_map(|&(a0, a1)| sense.iter().map(move |&(b0, b1)| LinearCoefficients { a0, a1, b0, b1 }))
        .collect();
    if out.is_empty() {
        return Err(Error::config("bounds", "the coefficient lattice is empty"));
    }
    Ok(out)
}

/// Exhaustive search over [`linear_lattice`]. Scores within
/// `1e-9 · max(1, |best|)` of the best count as ties, and the first such
/// candidate in lexicographic order wins.
pub fn optimize_linear_policy(model: &Model, objective: Objective) -> Result<LinearOptimum> {
    let candidates = linear_lattice(model.scenario())?;
    let scores = candidates
        .par_iter()
        .map(|c| {
            let mode = DurationPolicy::Linear(*c);
            match objective {
                Objective::ValueAtStart => Ok(model.start_value(&model.menu(&mode)?)),
                Objective::SimulatedMean { episodes, seed } => {
                    let sol = backward_induction(model, &mode)?;
                    let summary = evaluate(&sol.policy, model, &EvaluateOptions::new(episodes, seed))?;
                    Ok(summary.mean)
                }
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return Err(Error::Numerical("no candidate produced a finite score".into()));
    }
    let tol = 1e-9 * best.abs().max(1.0);
    let idx = scores
        .iter()
        .position(|&s| s >= best - tol)
        .expect("the maximum is attained");
    Ok(LinearOptimum {
        coefficients: candidates[idx],
        score: scores[idx],
        evaluated: candidates.len(),
    })
}
