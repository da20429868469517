//! Solver-agnostic linear and mixed-integer models.

mod highs_backend;
mod lp_format;

use std::collections::HashSet;
use std::path::PathBuf;
use std::time::Duration;

pub use highs_backend::{solve_lp, solve_mip};
pub use lp_format::to_lp_format;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
    Integer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub cmp: Cmp,
    pub rhs: f64,
}

/// A linear model with named variables and rows.
#[derive(Debug, Clone)]
pub struct Model {
    pub sense: Sense,
    vars: Vec<Variable>,
    cons: Vec<Constraint>,
    names: HashSet<String>,
    start: Option<Vec<f64>>,
}

impl Model {
    pub fn new(sense: Sense) -> Self {
        Model { sense, vars: Vec::new(), cons: Vec::new(), names: HashSet::new(), start: None }
    }

    fn claim(&mut self, name: &str) {
        assert!(self.names.insert(name.to_string()), "duplicate model name `{name}`");
    }

    /// Adds a variable. Panics when the name is already taken.
    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind, lower: f64, upper: f64, objective: f64) -> VarId {
        let name = name.into();
        self.claim(&name);
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            _ => (lower, upper),
        };
        self.vars.push(Variable { name, kind, lower, upper, objective });
        VarId(self.vars.len() - 1)
    }

    pub fn continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64, objective: f64) -> VarId {
        self.add_var(name, VarKind::Continuous, lower, upper, objective)
    }

    pub fn binary(&mut self, name: impl Into<String>, objective: f64) -> VarId {
        self.add_var(name, VarKind::Binary, 0.0, 1.0, objective)
    }

    /// Adds a row. Duplicate terms on one variable are merged. Panics when the name is taken.
    pub fn add_con(&mut self, name: impl Into<String>, terms: Vec<(VarId, f64)>, cmp: Cmp, rhs: f64) -> ConId {
        let name = name.into();
        self.claim(&name);
        let mut terms = terms;
        terms.sort_by_key(|t| t.0);
        terms.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
        terms.retain(|t| t.1 != 0.0);
        self.cons.push(Constraint { name, terms, cmp, rhs });
        ConId(self.cons.len() - 1)
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn cons(&self) -> &[Constraint] {
        &self.cons
    }

    pub fn var(&self, v: VarId) -> &Variable {
        &self.vars[v.0]
    }

    pub fn var_mut(&mut self, v: VarId) -> &mut Variable {
        &mut self.vars[v.0]
    }

    pub fn con_mut(&mut self, c: ConId) -> &mut Constraint {
        &mut self.cons[c.0]
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|v| v.name == name).map(VarId)
    }

    pub fn con_by_name(&self, name: &str) -> Option<ConId> {
        self.cons.iter().position(|c| c.name == name).map(ConId)
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_cons(&self) -> usize {
        self.cons.len()
    }

    pub fn is_continuous(&self) -> bool {
        self.vars.iter().all(|v| v.kind == VarKind::Continuous)
    }

    /// Copy with every integer restriction dropped.
    pub fn relaxed(&self) -> Model {
        let mut m = self.clone();
        for v in &mut m.vars {
            v.kind = VarKind::Continuous;
        }
        m
    }

    /// Sets an initial primal point handed to the solver.
    pub fn set_start(&mut self, values: Vec<f64>) {
        assert_eq!(values.len(), self.vars.len());
        self.start = Some(values);
    }

    pub fn start(&self) -> Option<&[f64]> {
        self.start.as_deref()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub time_limit: Option<Duration>,
    /// Relative gap at which branch and bound stops.
    pub mip_gap: f64,
    pub seed: u64,
    /// Directory receiving an LP-format copy of every model solved.
    pub dump_dir: Option<PathBuf>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { time_limit: None, mip_gap: 0.0, seed: 0, dump_dir: None }
    }
}

impl SolveOptions {
    pub fn with_time_limit(&self, limit: Option<Duration>) -> Self {
        SolveOptions { time_limit: limit, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Time limit hit with a feasible incumbent.
    TimeLimitFeasible,
    TimeLimitNoSolution,
    Other,
}

impl SolveStatus {
    pub fn has_solution(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::TimeLimitFeasible)
    }
}

/// Result of a solve. Duals are derivatives of the objective with respect to
/// each row's right-hand side.
#[derive(Debug, Clone)]
pub struct Solution {
    pub status: SolveStatus,
    pub objective: f64,
    pub bound: Option<f64>,
    pub gap: Option<f64>,
    pub primal: Vec<f64>,
    pub duals: Option<Vec<f64>>,
    pub wall: Duration,
}

impl Solution {
    pub fn value(&self, v: VarId) -> f64 {
        self.primal[v.0]
    }

    pub fn dual(&self, c: ConId) -> f64 {
        self.duals.as_ref().map_or(0.0, |d| d[c.0])
    }
}

/// Relative gap between an incumbent and a bound.
pub fn relative_gap(incumbent: f64, bound: f64) -> f64 {
    (bound - incumbent).abs() / incumbent.abs().max(1.0)
}
