//! Physical pattern discovery toolkit: a small rigid-body simulator that
//! records traces, a detector language and annotation engine, evolutionary
//! search for new detectors, a reward language scored over annotated traces,
//! and an action optimizer.

pub mod annotate;
pub mod detector;
pub mod evolution;
pub mod geom;
pub mod lm;
pub mod lex;
pub mod metrics;
pub mod optimize;
pub mod query;
pub mod render;
pub mod reward;
pub mod sim;
pub mod trace;
