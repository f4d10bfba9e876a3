//! File formats, room simulation and experiment orchestration.

pub mod config;
pub mod experiment;
pub mod room;
pub mod synth;
pub mod wav;

pub use config::FileConfig;
pub use experiment::{run_experiment, ExperimentPlan, ExperimentSummary, ResultRow};
pub use room::{generate_rir, mix, sabine_absorption, Absorption, Condition, Mixture, RoomSpec};
pub use synth::modulated_noise;
pub use wav::{load_wav, save_wav, WavEncoding};
