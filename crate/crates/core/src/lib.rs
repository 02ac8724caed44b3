//! Mirror self-recognition simulator and evaluation harness.

pub mod agents;
pub mod assets;
pub mod episode;
pub mod generate;
pub mod geometry;
pub mod metrics;
pub mod prompt;
pub mod reflection;
pub mod render;
pub mod report;
pub mod run;
pub mod scene;
pub mod service;
