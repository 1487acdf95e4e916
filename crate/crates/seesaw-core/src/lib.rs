//! Core engine for alternating main/dependency code generation.
//!
//! The pipeline: parse or generate an ASCII project tree, split its files
//! into groups (one main entry point plus dependencies each), then drive a
//! completion backend group by group. Generation alternates between the
//! main file ("see") and its dependencies ("saw"), an alignment validator
//! gates progress after every dependency, and iteration stops on alignment,
//! on a fixed point of the inter-round edit distance, or at a round cap.
//! Every backend call is metered; reports and CSV/SVG exports are derived
//! from the call ledger alone.

pub mod backend;
pub mod engine;
pub mod metrics;
pub mod prompts;
pub mod svg;
pub mod tree;
pub mod validator;
pub mod workspace;
