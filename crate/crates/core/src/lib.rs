//! Simulation and control library for vision-guided nasal swab alignment.

// NaN must fail range checks, so they are written as negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod kinematics;
pub mod lut;
pub mod manifold;
pub mod mission;
pub mod pbvs;
pub mod perception;
pub mod scene;
pub mod ukfm;
