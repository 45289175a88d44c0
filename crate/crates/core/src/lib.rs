// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod geometry;
pub mod rng;
pub mod traj;
pub mod gcode;
pub mod plant;
pub mod polygon;
pub mod percept;
pub mod control;
pub mod trial;
pub mod bench;
pub mod config;
