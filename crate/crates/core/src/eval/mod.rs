//! Episodes, the oracle makespan, metrics and benchmark suites.

pub mod benchmark;
pub mod episode;
pub mod metrics;
pub mod oracle;
