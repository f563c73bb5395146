//! Corpus sweeps over sampling strategies, the synthetic corpus and the
//! results CSV.

pub mod config;
pub mod corpus;
pub mod sweep;
pub mod synth;

pub use config::{ExperimentConfig, SplitFiles};
pub use corpus::{read_split, Corpus, VideoEntry};
pub use sweep::{run_sweep, CachedVideo, Plan, PreparedCorpus, ResultRow, SweepResults, RECORD_BYTES, RESULTS_HEADER};
pub use synth::{make_synthetic_corpus, synth_video, SynthParams, SynthVideo, CLASSES};
