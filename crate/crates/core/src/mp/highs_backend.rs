use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use highs::{HighsModelStatus, HighsSolutionStatus, RowProblem};
use log::debug;

use super::{relative_gap, Cmp, Model, Sense, Solution, SolveOptions, SolveStatus, VarKind};
use crate::error::MpError;

static DUMP_SEQ: AtomicUsize = AtomicUsize::new(0);

/// Solves a continuous model.
pub fn solve_lp(model: &Model, opts: &SolveOptions) -> Result<Solution, MpError> {
    if !model.is_continuous() {
        return Err(MpError::NotContinuous);
    }
    run(model, opts, false)
}

/// Solves a model with integer variables by branch and bound.
pub fn solve_mip(model: &Model, opts: &SolveOptions) -> Result<Solution, MpError> {
    run(model, opts, true)
}

fn run(model: &Model, opts: &SolveOptions, mip: bool) -> Result<Solution, MpError> {
    if let Some(dir) = &opts.dump_dir {
        std::fs::create_dir_all(dir)?;
        let n = DUMP_SEQ.fetch_add(1, Ordering::Relaxed);
        std::fs::write(dir.join(format!("model_{n:05}.lp")), super::to_lp_format(model))?;
    }
    let started = Instant::now();
    let mut pb = RowProblem::default();
    let cols: Vec<_> = model
        .vars()
        .iter()
        .map(|v| {
            let integer = mip && v.kind != VarKind::Continuous;
            pb.add_column_with_integrality(v.objective, v.lower..=v.upper, integer)
        })
        .collect();
    for c in model.cons() {
        let terms: Vec<_> = c.terms.iter().map(|&(v, a)| (cols[v.0], a)).collect();
        match c.cmp {
            Cmp::Le => pb.add_row(..=c.rhs, terms),
            Cmp::Ge => pb.add_row(c.rhs.., terms),
            Cmp::Eq => pb.add_row(c.rhs..=c.rhs, terms),
        }
    }
    let sense = match model.sense {
        Sense::Maximize => highs::Sense::Maximise,
        Sense::Minimize => highs::Sense::Minimise,
    };
    let mut hm = pb.try_optimise(sense).map_err(|e| MpError::Backend(format!("{e:?}")))?;
    hm.make_quiet();
    hm.set_option("threads", 1);
    hm.set_option("random_seed", (opts.seed % i32::MAX as u64) as i32);
    hm.set_option("mip_rel_gap", opts.mip_gap);
    hm.set_option("mip_abs_gap", 1e-6);
    if let Some(t) = opts.time_limit {
        hm.set_option("time_limit", t.as_secs_f64().max(0.01));
    }
    if mip {
        if let Some(start) = model.start() {
            let _ = hm.try_set_solution(Some(start), None, None, None);
        }
    }
    let solved = hm.try_solve().map_err(|e| MpError::Backend(format!("{e:?}")))?;
    // the binding panics on statuses it does not know, so read the raw value
    let feasible = solved.int_info_value(c"primal_solution_status").ok() == Some(HighsSolutionStatus::Feasible as i64);
    let status = match solved.status() {
        HighsModelStatus::Optimal => SolveStatus::Optimal,
        HighsModelStatus::Infeasible => SolveStatus::Infeasible,
        HighsModelStatus::Unbounded | HighsModelStatus::UnboundedOrInfeasible => SolveStatus::Unbounded,
        HighsModelStatus::ReachedTimeLimit if feasible => SolveStatus::TimeLimitFeasible,
        HighsModelStatus::ReachedTimeLimit => SolveStatus::TimeLimitNoSolution,
        HighsModelStatus::ModelEmpty => SolveStatus::Optimal,
        other => {
            debug!("backend status {other:?}");
            SolveStatus::Other
        }
    };
    let sol = solved.get_solution();
    let primal = if status.has_solution() { sol.columns().to_vec() } else { vec![0.0; model.num_vars()] };
    let objective = if status.has_solution() {
        model.vars().iter().zip(&primal).map(|(v, x)| v.objective * x).sum()
    } else {
        0.0
    };
    let has_int = mip && !model.is_continuous();
    let duals = (!has_int && status == SolveStatus::Optimal).then(|| sol.dual_rows().to_vec());
    let (bound, gap) = if has_int && status.has_solution() {
        let b = solved.double_info_value(c"mip_dual_bound").unwrap_or(objective);
        (Some(b), Some(relative_gap(objective, b)))
    } else {
        (None, None)
    };
    Ok(Solution { status, objective, bound, gap, primal, duals, wall: started.elapsed() })
}
