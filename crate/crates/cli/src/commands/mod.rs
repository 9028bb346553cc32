pub mod evaluate;
pub mod preprocess;
pub mod prune;
pub mod qq;
pub mod scan;
pub mod stats;
pub mod synth;
