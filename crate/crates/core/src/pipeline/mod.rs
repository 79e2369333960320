//! Three-stage semi-supervised strategy and the synthetic corpus generator.

mod evaluate;
mod merge;
mod pseudo;
mod strategy;
mod synth;

pub use evaluate::{infer_manifest, score_inference, Inference};
pub use merge::{merge_datasets, MergeConflict, MergeReport};
pub use pseudo::{generate_pseudo_labels, task_for_classes, PseudoLabelConfig, PseudoLabelReport, Rejection};
pub use strategy::{
    run_strategy, StageOutput, StrategyConfig, HEART_DIR, LUNG_DIR, MERGED_MANIFEST, PSEUDO_DIR, UNIFIED_DIR,
};
pub use synth::{synth_clip, synth_corpus, CorpusSpec, SynthSpec, HR_RANGE, RR_RANGE};

#[cfg(test)]
mod tests;
