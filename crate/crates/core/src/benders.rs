//! Pieces shared by both Benders methods: cuts, the horizon seeding search
//! and the master/subproblem loop.

use log::{info, warn};

use crate::budget::Budget;
use crate::error::SolveError;
use crate::mp::{Cmp, ConId, Model, SolveOptions, VarId};
use crate::report::{BendersIter, Outcome, RunConfig};

/// Numeric slack on the convergence test.
pub const CONVERGENCE_SLACK: f64 = 1e-6;

/// Optimality cut `z <= constant + sum(coef * point[index])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cut {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl Cut {
    pub fn new() -> Self {
        Cut { constant: 0.0, terms: Vec::new() }
    }

    pub fn add(&mut self, index: usize, coef: f64) {
        if coef != 0.0 {
            self.terms.push((index, coef));
        }
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, a)| a * point[i]).sum::<f64>()
    }

    /// Adds the cut to `model`, where `vars[i]` is the variable of point index `i`.
    pub(crate) fn install(&self, model: &mut Model, name: String, z: VarId, vars: &[VarId]) -> ConId {
        let mut terms = vec![(z, 1.0)];
        terms.extend(self.terms.iter().map(|&(i, a)| (vars[i], -a)));
        model.add_con(name, terms, Cmp::Le, self.constant)
    }
}

impl Default for Cut {
    fn default() -> Self {
        Self::new()
    }
}

/// A cut with the first-stage point that produced it.
#[derive(Debug, Clone)]
pub struct CutRecord {
    pub iter: usize,
    pub point: Vec<f64>,
    pub sp_value: f64,
    pub cut: Cut,
}

/// Master problem and subproblem of a decomposition.
pub(crate) trait Decomposition {
    /// Solves the master with all cuts; `None` when no solution was found in time.
    fn solve_master(&mut self, opts: &SolveOptions) -> Result<Option<(f64, Vec<f64>)>, SolveError>;
    fn solve_sub(&self, point: &[f64], opts: &SolveOptions) -> Result<(f64, Cut), SolveError>;
    fn add_cut(&mut self, cut: &Cut);
}

pub(crate) struct LoopResult {
    pub best_point: Vec<f64>,
    pub z_rmp: f64,
    pub z_sp_max: f64,
    pub trace: Vec<BendersIter>,
    pub cuts: Vec<CutRecord>,
    pub outcome: Outcome,
    pub notes: Vec<String>,
}

/// Alternates subproblem and master solves until the bounds meet.
pub(crate) fn benders_loop<D: Decomposition>(
    d: &mut D,
    first: (f64, Vec<f64>),
    budget: &Budget,
    run: &RunConfig,
) -> Result<LoopResult, SolveError> {
    let (mut z_rmp, mut point) = first;
    let mut best_point = point.clone();
    let mut z_sp_max = f64::NEG_INFINITY;
    let mut trace = Vec::new();
    let mut cuts = Vec::new();
    let mut notes = Vec::new();
    let mut iter = 1;
    let outcome = loop {
        let (z_sp, cut) = d.solve_sub(&point, &run.backend.with_time_limit(budget.remaining()))?;
        if z_sp > z_sp_max {
            z_sp_max = z_sp;
            best_point = point.clone();
        }
        trace.push(BendersIter { iter, rmp: z_rmp, sp: z_sp, best_sp: z_sp_max, wall: budget.elapsed().as_secs_f64() });
        info!("benders iter {iter}: rmp {z_rmp:.4} sp {z_sp:.4} best {z_sp_max:.4}");
        cuts.push(CutRecord { iter, point: point.clone(), sp_value: z_sp, cut: cut.clone() });
        if z_rmp - z_sp_max <= CONVERGENCE_SLACK {
            break Outcome::Converged;
        }
        if budget.expired() {
            break Outcome::TimeLimit;
        }
        if iter >= run.max_iterations {
            break Outcome::IterationCap;
        }
        d.add_cut(&cut);
        let Some((z, next)) = d.solve_master(&run.backend.with_time_limit(budget.remaining()))? else {
            break Outcome::TimeLimit;
        };
        if next == point {
            warn!("master repeated its previous solution with a gap of {}", z - z_sp_max);
            notes.push(format!("stalled at iteration {iter}: master returned the same paths"));
            z_rmp = z;
            break Outcome::IterationCap;
        }
        z_rmp = z;
        point = next;
        iter += 1;
    };
    Ok(LoopResult { best_point, z_rmp, z_sp_max, trace, cuts, outcome, notes })
}

/// Result of the tightest-horizon search.
#[derive(Debug, Clone, PartialEq)]
pub struct TStar {
    pub steps: u32,
    pub value: f64,
    pub point: Vec<f64>,
    /// The search stopped early on the time budget.
    pub truncated: bool,
}

/// Shrinks the horizon one step at a time from `horizon` and returns the last
/// horizon whose master value equals the full-horizon value.
pub(crate) fn find_tstar(
    horizon: u32,
    budget: &Budget,
    mut master_at: impl FnMut(u32) -> Result<Option<(f64, Vec<f64>)>, SolveError>,
) -> Result<TStar, SolveError> {
    let (full, full_point) = master_at(horizon)?.ok_or_else(|| SolveError::Status {
        what: "master".into(),
        status: "no solution within the time limit".into(),
    })?;
    let mut best = TStar { steps: horizon, value: full, point: full_point, truncated: false };
    for t in (1..horizon).rev() {
        if budget.expired() {
            best.truncated = true;
            break;
        }
        match master_at(t)? {
            Some((z, p)) if z >= full - CONVERGENCE_SLACK => {
                best = TStar { steps: t, value: z, point: p, truncated: false };
            }
            Some(_) => break,
            None => {
                best.truncated = true;
                break;
            }
        }
    }
    Ok(best)
}
