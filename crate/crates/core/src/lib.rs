//! Zone-based evacuation planning on time-expanded networks: an exact
//! direct model, two Benders decompositions, a path-generation heuristic and
//! column generation for non-preemptive schedules, with clearance-time search,
//! plan validation and file formats.

pub mod budget;
pub mod error;
pub mod mp;
pub mod network;
pub mod report;

pub mod benders;
pub mod benders_conv;
pub mod benders_nc;
pub mod clearance;
pub mod colgen;
pub mod cpg;
pub mod zepp_mip;

pub mod eval;
pub mod io;
