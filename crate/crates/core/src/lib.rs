//! Synthetic training-data production for code question answering.
//!
//! The pipeline simulates developer IDE interactions end to end: it profiles
//! logged interactions along ten behavioral dimensions, plans a production
//! batch matching the observed distributions, realizes each planned item as a
//! concrete chat configuration over a local repository corpus, replays the
//! configuration in a headless workspace simulator, fans the final prompt out
//! to a pool of chat-model endpoints, and admits only responses that survive
//! model scoring plus rule-based deduction with a perfect final score.
//!
//! Stages communicate only through files (JSON / JSONL), so any stage can be
//! re-run or swapped in isolation. With the deterministic stub backend and a
//! fixed seed, a full run is byte-identical across machines.
//!
//! Batch work (classification, session production, judging) is data-parallel
//! via rayon when the default `parallel` feature is enabled; disabling it
//! compiles the same code paths sequentially.

pub mod analyst;
pub mod confgen;
pub mod exec;
pub mod gateway;
pub mod harness;
pub mod judge;
pub mod metrics;
pub mod pipeline;
pub mod prompts;
pub mod taxonomy;
