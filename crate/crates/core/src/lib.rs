//! Exact-arithmetic laboratory for single-item transaction fee mechanisms.

pub mod bounds;
pub mod catalog;
pub mod error;
pub mod grid;
pub mod model;
pub mod myerson;
pub mod report;
pub mod money;
pub mod utility;
pub mod checkers;
