//! Agentic image restoration and super-resolution.
//!
//! A run perceives the input (quality metrics, degradations, upscale factor),
//! plans an ordered list of restoration tasks, and executes each task by
//! applying every eligible tool and keeping the candidate with the best
//! quality score. Failed steps trigger a replan; faces can be refined after
//! super-resolution.

pub mod imagecore;
pub mod metrics;
pub mod workerproto;
pub mod toolbox;
pub mod profiles;
pub mod perception;
pub mod restoration;
pub mod facepipe;
pub mod engine;
pub mod bench;
