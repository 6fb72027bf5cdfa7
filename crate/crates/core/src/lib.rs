pub mod analysis;
pub mod batching;
pub mod cli;
pub mod redundancy;
pub mod simnet;
pub mod sketch;
pub mod trace;
