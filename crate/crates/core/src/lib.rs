pub mod diff;
pub mod engine;
pub mod formula;
pub mod graph;
pub mod highlevel;
pub mod lowlevel;
pub mod model;
pub mod papertrail;
pub mod pipeline;
pub mod sensitivity;
