//! Configuration, experiment orchestration, run persistence and static
//! reports.

mod config;
pub mod exps;
mod record;
mod report;
mod run;

pub use config::{ChunkSpec, ConjunctCells, ExperimentId, ExperimentSpec, LmSpec, Split, Sweep};
pub use record::{num, output_root, read_csv, run_id, ManifestEntry, RunRecord, RunWriter, MANIFEST, OUT_ENV, TIMING};
pub use report::{emit_report, heat_grids, HeatGrid, REPORT};
pub use run::{run_dir, run_experiment, run_with, train_and_save, training_corpus, write_corpus};

#[cfg(test)]
mod tests;
