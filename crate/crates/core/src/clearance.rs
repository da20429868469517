//! Smallest horizon that evacuates every vehicle.
//!
//! Horizons count steps, so a plan whose last vehicle arrives at step `a`
//! needs a horizon of `a + 1`.

use std::time::Duration;

use log::info;
use serde::Serialize;

use crate::benders_conv::{bc_solve, BcMaster};
use crate::benders_nc::{bn_solve, BnMaster};
use crate::budget::Budget;
use crate::cpg::{cpg_solve, CpgParams};
use crate::error::SolveError;
use crate::eval::plan_metrics;
use crate::network::{StaticGraph, TimeExpandedGraph};
use crate::report::{Method, RunConfig, Solved};

/// Tolerance when comparing an evacuated count with total demand.
const FULL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeStage {
    /// Aggregate master only.
    Master,
    /// The whole method.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Probe {
    pub horizon: u32,
    pub stage: ProbeStage,
    pub evacuated_pct: f64,
    pub wall: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClearanceStatus {
    Cleared,
    /// Not every vehicle can be evacuated within the largest horizon tried.
    NotCleared,
    /// The budget ran out before the search finished.
    Truncated,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClearanceResult {
    pub method: Method,
    pub status: ClearanceStatus,
    pub h_star: Option<u32>,
    /// Lower bound from the aggregate master.
    pub h_dagger: Option<u32>,
    /// Smallest horizon known to fail, plus one; a lower bound when truncated.
    pub lower: u32,
    /// `h_star` is proven minimal.
    pub certified: bool,
    pub probes: Vec<Probe>,
    #[serde(skip)]
    pub solved: Option<Solved>,
}

#[derive(Debug, Clone)]
pub struct ClearanceConfig {
    pub max_horizon: u32,
    pub contraflow: bool,
    /// Pareto cuts for the convergent method.
    pub pareto: bool,
    /// Settings for each probe; its time limit applies per probe.
    pub run: RunConfig,
    /// Budget for the whole search.
    pub total_limit: Option<Duration>,
}

impl ClearanceConfig {
    pub fn new(max_horizon: u32) -> Self {
        ClearanceConfig { max_horizon, contraflow: false, pareto: false, run: RunConfig::default(), total_limit: None }
    }

    fn probe_run(&self, budget: &Budget) -> RunConfig {
        let limit = match (self.run.time_limit, budget.remaining()) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        RunConfig { time_limit: limit, ..self.run.clone() }
    }
}

fn is_full(evacuated: f64, g: &StaticGraph) -> bool {
    evacuated >= g.total_demand() as f64 - FULL_TOL
}

/// Smallest horizon in `lo..=hi` passing `ok`, assuming monotone success;
/// `Ok(None)` when `hi` fails. The closure returns `None` when out of budget.
fn bisect(mut lo: u32, mut hi: u32, mut ok: impl FnMut(u32) -> Result<Option<bool>, SolveError>) -> Result<Result<Option<u32>, (u32, u32)>, SolveError> {
    match ok(hi)? {
        Some(true) => {}
        Some(false) => return Ok(Ok(None)),
        None => return Ok(Err((lo, hi))),
    }
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        match ok(mid)? {
            Some(true) => hi = mid,
            Some(false) => lo = mid + 1,
            None => return Ok(Err((lo, hi))),
        }
    }
    Ok(Ok(Some(hi)))
}

/// Aggregate-master search followed by an ascending search with the full method.
pub fn clearance_benders(method: Method, g: &StaticGraph, cfg: &ClearanceConfig) -> Result<ClearanceResult, SolveError> {
    assert!(matches!(method, Method::BendersNc | Method::BendersConv), "Benders methods only");
    let budget = Budget::new(cfg.total_limit);
    let total = g.total_demand() as f64;
    let mut probes = Vec::new();
    let mut result = ClearanceResult {
        method,
        status: ClearanceStatus::Truncated,
        h_star: None,
        h_dagger: None,
        lower: 1,
        certified: false,
        probes: Vec::new(),
        solved: None,
    };
    let master = bisect(1, cfg.max_horizon, |t| {
        if budget.expired() {
            return Ok(None);
        }
        let teg = TimeExpandedGraph::new(g, t)?;
        let run = cfg.probe_run(&budget);
        let opts = run.backend.with_time_limit(run.time_limit);
        let started = budget.elapsed();
        let sol = match method {
            Method::BendersNc => BnMaster::new(&teg, cfg.contraflow).solve(&opts)?,
            _ => BcMaster::new(&teg, cfg.contraflow).solve(&opts)?,
        };
        let Some((z, _)) = sol else { return Ok(None) };
        probes.push(Probe {
            horizon: t,
            stage: ProbeStage::Master,
            evacuated_pct: crate::report::pct(z.min(total), g.total_demand()),
            wall: (budget.elapsed() - started).as_secs_f64(),
        });
        Ok(Some(z >= total - FULL_TOL))
    })?;
    let h_dagger = match master {
        Ok(Some(h)) => h,
        Ok(None) => {
            result.status = ClearanceStatus::NotCleared;
            result.lower = cfg.max_horizon + 1;
            result.probes = probes;
            return Ok(result);
        }
        Err((lo, _)) => {
            result.lower = lo;
            result.probes = probes;
            return Ok(result);
        }
    };
    info!("clearance: master lower bound {h_dagger}");
    result.h_dagger = Some(h_dagger);
    result.lower = h_dagger;
    for t in h_dagger..=cfg.max_horizon {
        if budget.expired() {
            result.probes = probes;
            return Ok(result);
        }
        let teg = TimeExpandedGraph::build(g, t, true)?;
        let run = cfg.probe_run(&budget);
        let started = budget.elapsed();
        let solved = match method {
            Method::BendersNc => bn_solve(&teg, cfg.contraflow, &run),
            _ => bc_solve(&teg, cfg.contraflow, cfg.pareto, &run),
        };
        let solved = match solved {
            Ok(s) => s,
            Err(SolveError::InfeasibleZones(_)) => {
                probes.push(Probe { horizon: t, stage: ProbeStage::Full, evacuated_pct: 0.0, wall: 0.0 });
                result.lower = t + 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        probes.push(Probe {
            horizon: t,
            stage: ProbeStage::Full,
            evacuated_pct: solved.report.evacuated_pct,
            wall: (budget.elapsed() - started).as_secs_f64(),
        });
        if is_full(solved.report.evacuated, g) {
            result.status = ClearanceStatus::Cleared;
            result.h_star = Some(t);
            result.certified = solved.report.outcome != crate::report::Outcome::TimeLimit;
            result.solved = Some(solved);
            result.probes = probes;
            return Ok(result);
        }
        result.lower = t + 1;
    }
    result.status = ClearanceStatus::NotCleared;
    result.probes = probes;
    Ok(result)
}

/// Bisection on the horizon with the full heuristic.
pub fn clearance_cpg(g: &StaticGraph, params: &CpgParams, cfg: &ClearanceConfig) -> Result<ClearanceResult, SolveError> {
    let budget = Budget::new(cfg.total_limit);
    let mut probes = Vec::new();
    let mut failed_below = Vec::new();
    let mut best: Option<(u32, Solved)> = None;
    let found = bisect(1, cfg.max_horizon, |t| {
        if budget.expired() {
            return Ok(None);
        }
        let started = budget.elapsed();
        let teg = TimeExpandedGraph::build(g, t, true)?;
        let solved = match cpg_solve(&teg, cfg.contraflow, params, &cfg.probe_run(&budget)) {
            Ok(s) => s,
            Err(SolveError::InfeasibleZones(_)) => {
                probes.push(Probe { horizon: t, stage: ProbeStage::Full, evacuated_pct: 0.0, wall: 0.0 });
                return Ok(Some(false));
            }
            Err(e) => return Err(e),
        };
        probes.push(Probe {
            horizon: t,
            stage: ProbeStage::Full,
            evacuated_pct: solved.report.evacuated_pct,
            wall: (budget.elapsed() - started).as_secs_f64(),
        });
        let ok = is_full(solved.report.evacuated, g);
        if ok {
            if best.as_ref().is_none_or(|(h, _)| t < *h) {
                best = Some((t, solved));
            }
        } else {
            failed_below.push(t);
        }
        Ok(Some(ok))
    })?;
    let mut result = ClearanceResult {
        method: Method::Cpg,
        status: ClearanceStatus::Truncated,
        h_star: None,
        h_dagger: None,
        lower: 1,
        certified: false,
        probes,
        solved: None,
    };
    match found {
        Ok(Some(h)) => {
            result.status = ClearanceStatus::Cleared;
            result.h_star = Some(h);
            result.lower = failed_below.iter().filter(|&&t| t < h).max().map_or(1, |t| t + 1);
            result.certified = !failed_below.iter().any(|&t| t < h);
            result.solved = best.map(|b| b.1);
        }
        Ok(None) => {
            result.status = ClearanceStatus::NotCleared;
            result.lower = cfg.max_horizon + 1;
        }
        Err((lo, _)) => result.lower = lo,
    }
    Ok(result)
}

/// Clearance read off a column-generation plan: last arrival plus one.
pub fn clearance_cg(g: &StaticGraph, solved: &Solved) -> ClearanceResult {
    let m = plan_metrics(g, &solved.plan, solved.report.contraflow);
    let cleared = is_full(m.evacuated, g);
    ClearanceResult {
        method: Method::ColGen,
        status: if cleared { ClearanceStatus::Cleared } else { ClearanceStatus::NotCleared },
        h_star: if cleared { m.clearance } else { None },
        h_dagger: None,
        lower: 1,
        certified: false,
        probes: Vec::new(),
        solved: None,
    }
}
