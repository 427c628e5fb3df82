//! Near-optimal periodic control of nonlinear systems through a
//! semi-infinite linear program over occupational measures.

pub mod basis;
pub mod colgen;
pub mod control;
pub mod error;
pub mod expr;
pub mod grid;
pub mod lp;
pub mod problem;
pub mod simulate;
pub mod study;
