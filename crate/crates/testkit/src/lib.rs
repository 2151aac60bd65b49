//! Test harness for the textualization pipeline: seeded synthetic scenes
//! with exact ground truth, scripted backends that answer from that ground
//! truth, and brute-force reference implementations of the measurements and
//! metrics the production code is checked against.

pub mod backends;
pub mod naive_metrics;
pub mod oracle;
pub mod scene;
