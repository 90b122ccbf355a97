//! Command-line orchestration of the gene-finding pipeline: configuration,
//! stage commands and report artifacts.

pub mod commands;
pub mod config;
pub mod data;
pub mod heatmap;

pub use commands::{
    cmd_backtrack, cmd_cv, cmd_enrich, cmd_pipeline, cmd_synth, cmd_trace, cmd_train,
    PipelineOutput, SynthSpecFile,
};
pub use config::PipelineConfig;

/// Run `f` on a pool of `workers` threads (all cores when `None`).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        if n == 0 {
            anyhow::bail!("--workers must be at least 1");
        }
        b = b.num_threads(n);
    }
    Ok(b.build()?.install(f))
}
