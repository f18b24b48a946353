//! Metrics, baselines, evaluation and the benchmark protocols.

pub mod baseline;
pub mod bench;
pub mod evaluate;
pub mod metrics;
pub mod pgm;
pub mod report;

pub use baseline::{baseline_bi, spectral_bi, RGB_ANCHORS};
pub use bench::{ablation_variants, benchmark_suite, BenchMode, BenchSetup};
pub use evaluate::{evaluate, evaluate_with, predict, resize_bands, with_workers};
pub use metrics::{error_map, metrics, mrae, rmse, Metrics};
pub use pgm::{encode_pgm, write_pgm, ERROR_MAP_MAX};
pub use report::{config_hash, EvalReport, OrderingCheck, ReportRow};
