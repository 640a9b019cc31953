pub mod ablate;
pub mod reconstruct;
pub mod schedule;
pub mod tools;
