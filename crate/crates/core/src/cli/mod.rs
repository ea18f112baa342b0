//! Evaluation runs, the overhead benchmark and augmentation dumps behind
//! the `vlm-tts` binary.

pub mod augment;
pub mod bench;
pub mod config;
pub mod eval;

pub use augment::{augment_dump, read_record, AugmentDump};
pub use bench::{bench_model, bench_overhead, overhead_csv, BenchModes, BenchSettings, OverheadReport, PeakAlloc};
pub use config::{CandidateSource, Method, ModelSource, RunConfig};
pub use eval::{run_eval, run_eval_with, EvalReport};
