//! Metric selection for commit message generation, driven by edit-history corpora.

pub mod corpus;
pub mod distcheck;
pub mod par;
pub mod selection;
pub mod stats;
pub mod synthgen;
pub mod textmetrics;
