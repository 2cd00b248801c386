//! Feature files, manifests, prompt construction and synthetic datasets.

mod dataset;
mod feature;
mod manifest;
mod prompt;
mod synth;

pub use dataset::{dataset_dims, load_sample, load_samples, Sample, SampleFeatures, StreamDims};
pub use feature::{read_feature_file, write_feature_file, FeatureMatrix, FEATURE_MAGIC, FEATURE_VERSION};
pub use manifest::{
    load_manifest, write_manifest, AudioPaths, Labels, PersonalityProfile, SampleRecord, Task,
    TraitScore, VisualPaths,
};
pub use prompt::{build_prompt, PROMPT_INSTRUCTIONS};
pub use synth::{synth_subjects, write_synth_dataset, SynthSpec, SynthSubject};
