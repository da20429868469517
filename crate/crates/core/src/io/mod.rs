//! File formats: instances, plans, reports and iteration traces.

mod generate;
mod instance;

pub use generate::{generate_instance, GenSpec};
pub use instance::{ArcRecord, InstanceFile, IoError, Meta, NodeKindTag, NodeRecord, INSTANCE_VERSION};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clearance::Probe;
use crate::network::EvacuationPlan;
use crate::report::Trace;

pub const PLAN_VERSION: u32 = 1;

/// A plan with enough context to validate it against its instance file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub version: u32,
    pub instance: String,
    pub method: String,
    pub contraflow: bool,
    pub step_minutes: u32,
    pub plan: EvacuationPlan,
}

impl PlanFile {
    pub fn load(path: &Path) -> Result<Self, IoError> {
        let p: PlanFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if p.version != PLAN_VERSION {
            return Err(IoError::Version { found: p.version, expected: PLAN_VERSION });
        }
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        write_json(path, self)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

/// Writes an iteration trace as CSV; nothing is written for an empty trace.
pub fn write_trace_csv(path: &Path, trace: &Trace) -> Result<bool, IoError> {
    if *trace == Trace::None {
        return Ok(false);
    }
    let mut w = csv::Writer::from_path(path)?;
    match trace {
        Trace::None => {}
        Trace::Benders(rows) => rows.iter().try_for_each(|r| w.serialize(r))?,
        Trace::Cpg(rows) => rows.iter().try_for_each(|r| w.serialize(r))?,
        Trace::ColGen(rows) => rows.iter().try_for_each(|r| w.serialize(r))?,
    }
    w.flush()?;
    Ok(true)
}

pub fn write_probes_csv(path: &Path, probes: &[Probe]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path)?;
    for p in probes {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}
