use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::mp::SolveOptions;
use crate::network::EvacuationPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mip,
    BendersNc,
    BendersConv,
    Cpg,
    ColGen,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Mip => "mip",
            Method::BendersNc => "benders-nc",
            Method::BendersConv => "benders-conv",
            Method::Cpg => "cpg",
            Method::ColGen => "colgen",
        }
    }

    pub fn is_preemptive(self) -> bool {
        self != Method::ColGen
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Optimal,
    Converged,
    TimeLimit,
    IterationCap,
}

/// One iteration of a Benders loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BendersIter {
    pub iter: usize,
    pub rmp: f64,
    pub sp: f64,
    pub best_sp: f64,
    pub wall: f64,
}

/// One iteration of critical-path generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpgIter {
    pub iter: usize,
    pub pool: usize,
    pub critical: usize,
    pub objective: f64,
}

/// One pricing round of column generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColGenIter {
    pub iter: usize,
    pub added: usize,
    pub lp: f64,
    pub wall: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", content = "rows", rename_all = "snake_case")]
pub enum Trace {
    #[default]
    None,
    Benders(Vec<BendersIter>),
    Cpg(Vec<CpgIter>),
    ColGen(Vec<ColGenIter>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    #[serde(default)]
    pub instance: String,
    pub method: Method,
    pub outcome: Outcome,
    pub horizon: u32,
    pub contraflow: bool,
    /// Vehicles reaching safety under the returned plan.
    pub evacuated: f64,
    pub total_demand: u64,
    pub evacuated_pct: f64,
    pub upper_bound: Option<f64>,
    pub gap: Option<f64>,
    /// Value of the final linear relaxation, when the method has one.
    pub lp_objective: Option<f64>,
    pub iterations: usize,
    pub wall_seconds: f64,
    pub notes: Vec<String>,
    pub trace: Trace,
}

impl SolveReport {
    pub fn new(method: Method, horizon: u32, contraflow: bool, total_demand: u64) -> Self {
        SolveReport {
            instance: String::new(),
            method,
            outcome: Outcome::Optimal,
            horizon,
            contraflow,
            evacuated: 0.0,
            total_demand,
            evacuated_pct: 0.0,
            upper_bound: None,
            gap: None,
            lp_objective: None,
            iterations: 0,
            wall_seconds: 0.0,
            notes: Vec::new(),
            trace: Trace::None,
        }
    }

    pub fn set_evacuated(&mut self, v: f64) {
        self.evacuated = v;
        self.evacuated_pct = pct(v, self.total_demand);
    }
}

pub fn pct(v: f64, total: u64) -> f64 {
    if total == 0 {
        100.0
    } else {
        100.0 * v / total as f64
    }
}

/// A plan with its report.
#[derive(Debug, Clone)]
pub struct Solved {
    pub plan: EvacuationPlan,
    pub report: SolveReport,
}

/// Settings shared by every method.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub contraflow: bool,
    /// Budget for the whole run.
    pub time_limit: Option<Duration>,
    pub max_iterations: usize,
    pub backend: SolveOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { contraflow: false, time_limit: None, max_iterations: 200, backend: SolveOptions::default() }
    }
}
