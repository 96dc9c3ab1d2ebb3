//! Majority-voting ransomware artifact detection.
//!
//! A collection of discrete, algorithmically computed benign/malicious tests
//! over files, filenames, and binary blobs, plus an equal-weight vote
//! aggregator and a corpus evaluation harness. Each test votes
//! benign/malicious/abstain on a sample; the final classification is the
//! verdict holding the majority of (weighted) votes.

pub mod corpus;
pub mod cryptoscan;
pub mod harness;
pub mod signatures;
pub mod stats;
pub mod votetests;
pub mod voting;
