//! Flags anomalous source lines by regenerating each line with a completion
//! model and comparing the regeneration against the original. A line the
//! model reproduces almost-but-not-exactly is suspicious: the surrounding
//! context (and any nearby comment) told the model what the line should say,
//! and the original deviates from it. Everything downstream of the backend is
//! deterministic, so cached runs can be rescored offline under different
//! criteria without touching the model again.

pub mod backend;
pub mod classifier;
pub mod config;
pub mod evalharness;
pub mod features;
pub mod pipeline;
pub mod prompting;
pub mod report;
pub mod srcmodel;
