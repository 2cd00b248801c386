//! Synthetic subjects with class-dependent Gaussian features.
//!
//! Every stream draws frames `x_t = sep * c * u + z`, where `c` is the class
//! of the active task, `u` a fixed random unit direction per stream and
//! `z ~ N(0, I)`. Labels of all three tasks derive from one latent severity
//! level so they always nest consistently.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{
    build_prompt, write_feature_file, write_manifest, AudioPaths, FeatureMatrix, Labels,
    PersonalityProfile, Sample, SampleFeatures, SampleRecord, StreamDims, Task, TraitScore,
    VisualPaths,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_samples: usize,
    pub task: Task,
    /// Mean offset per class step, in noise standard deviations, for the audio
    /// and visual streams.
    pub class_sep: f64,
    /// The same for the personality embedding.
    pub personality_sep: f64,
    pub dims: StreamDims,
    /// Inclusive range of the base frame count.
    pub t_min: usize,
    pub t_max: usize,
    /// LLD and MFCC streams run at this multiple of the base frame rate.
    pub fast_rate: usize,
}

impl SynthSpec {
    pub fn new(n_samples: usize, task: Task, class_sep: f64) -> Self {
        Self {
            n_samples,
            task,
            class_sep,
            personality_sep: class_sep,
            dims: StreamDims::default(),
            t_min: 6,
            t_max: 12,
            fast_rate: 2,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.class_sep >= 0.0 && self.personality_sep >= 0.0) {
            return Err(Error::invalid("class separations must be non-negative"));
        }
        if self.n_samples == 0 || self.t_min == 0 || self.t_min > self.t_max || self.fast_rate == 0 {
            return Err(Error::invalid(format!("invalid synth spec {self:?}")));
        }
        if self.dims.as_pairs().iter().any(|&(_, d)| d == 0) {
            return Err(Error::invalid("stream dims must be positive"));
        }
        Ok(())
    }
}

fn unit_direction<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| x / norm).collect()
}

fn gaussian_frames<R: Rng + ?Sized>(
    rows: usize,
    dir: &[f64],
    offset: f64,
    rng: &mut R,
) -> Result<FeatureMatrix> {
    let values: Vec<f64> = (0..rows)
        .flat_map(|_| dir.iter().map(|d| offset * d).collect::<Vec<_>>())
        .map(|m| m + Distribution::<f64>::sample(&StandardNormal, rng))
        .collect::<Vec<f64>>();
    FeatureMatrix::from_f64(rows, dir.len(), &values)
}

/// Severity consistent with class `c` of `task`.
fn severity_for<R: Rng + ?Sized>(task: Task, c: usize, rng: &mut R) -> usize {
    match (task, c) {
        (Task::Quinary, c) => c,
        (_, 0) => 0,
        (Task::Binary, _) => rng.random_range(1..=4),
        (Task::Ternary, 1) => rng.random_range(1..=2),
        (Task::Ternary, _) => rng.random_range(3..=4),
    }
}

const ORIGINS: [&str; 6] = ["Beijing", "Shanghai", "Chengdu", "Hangzhou", "Wuhan", "Xi'an"];
const LEVELS: [&str; 3] = ["low", "medium", "high"];

fn random_profile<R: Rng + ?Sized>(rng: &mut R) -> PersonalityProfile {
    let mut level = || TraitScore::Level(LEVELS[rng.random_range(0..LEVELS.len())].to_string());
    PersonalityProfile {
        extraversion: level(),
        agreeableness: level(),
        openness: level(),
        neuroticism: level(),
        conscientiousness: level(),
        age: rng.random_range(60..=90),
        gender: if rng.random::<bool>() { "male" } else { "female" }.to_string(),
        origin: ORIGINS[rng.random_range(0..ORIGINS.len())].to_string(),
    }
}

/// A generated subject: its manifest record (with relative file names) and
/// the decoded features those files will hold.
#[derive(Clone, Debug)]
pub struct SynthSubject {
    pub record: SampleRecord,
    pub sample: Sample,
}

/// Generates subjects in memory. Classes of the active task are balanced
/// (round-robin, then shuffled). Bitwise reproducible for a given rng state.
pub fn synth_subjects<R: Rng + ?Sized>(spec: &SynthSpec, rng: &mut R) -> Result<Vec<SynthSubject>> {
    spec.validate()?;
    let d = spec.dims;
    let dirs: Vec<Vec<f64>> = d.as_pairs().iter().map(|&(_, n)| unit_direction(n, rng)).collect();
    let n_classes = spec.task.n_classes();
    let mut classes: Vec<usize> = (0..spec.n_samples).map(|i| i % n_classes).collect();
    classes.shuffle(rng);

    let mut out = Vec::with_capacity(spec.n_samples);
    for (i, &c) in classes.iter().enumerate() {
        let id = format!("synth{i:04}");
        let labels = Labels::from_severity(severity_for(spec.task, c, rng));
        let t = rng.random_range(spec.t_min..=spec.t_max);
        let fast = t * spec.fast_rate;
        let off = spec.class_sep * c as f64;
        let features = SampleFeatures {
            lld: gaussian_frames(fast, &dirs[0], off, rng)?,
            mfcc: gaussian_frames(fast, &dirs[1], off, rng)?,
            wav2vec: gaussian_frames(t, &dirs[2], off, rng)?,
            openface: gaussian_frames(t, &dirs[3], off, rng)?,
            resnet: gaussian_frames(t, &dirs[4], off, rng)?,
            densenet: gaussian_frames(t, &dirs[5], off, rng)?,
            personality: gaussian_frames(1, &dirs[6], spec.personality_sep * c as f64, rng)?
                .values()
                .iter()
                .map(|&v| f64::from(v))
                .collect(),
        };
        let file = |stream: &str| PathBuf::from(format!("features/{id}.{stream}.mpft"));
        let record = SampleRecord {
            id: id.clone(),
            audio_paths: AudioPaths {
                lld: file("lld"),
                mfcc: file("mfcc"),
                wav2vec: file("wav2vec"),
            },
            visual_paths: VisualPaths {
                openface: file("openface"),
                resnet: file("resnet"),
                densenet: file("densenet"),
            },
            personality: random_profile(rng),
            personality_embedding_path: Some(file("personality")),
            labels,
        };
        out.push(SynthSubject {
            record,
            sample: Sample {
                id,
                labels,
                features,
            },
        });
    }
    Ok(out)
}

/// Writes `manifest.jsonl`, `prompts.jsonl` and `features/*.mpft` under
/// `out_dir`. Returns the manifest path.
pub fn write_synth_dataset(subjects: &[SynthSubject], out_dir: &Path) -> Result<PathBuf> {
    let feat_dir = out_dir.join("features");
    fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;
    let mut prompts = String::new();
    for s in subjects {
        let f = &s.sample.features;
        let r = &s.record;
        write_feature_file(&f.lld, &out_dir.join(&r.audio_paths.lld))?;
        write_feature_file(&f.mfcc, &out_dir.join(&r.audio_paths.mfcc))?;
        write_feature_file(&f.wav2vec, &out_dir.join(&r.audio_paths.wav2vec))?;
        write_feature_file(&f.openface, &out_dir.join(&r.visual_paths.openface))?;
        write_feature_file(&f.resnet, &out_dir.join(&r.visual_paths.resnet))?;
        write_feature_file(&f.densenet, &out_dir.join(&r.visual_paths.densenet))?;
        let emb = FeatureMatrix::from_f64(1, f.personality.len(), &f.personality)?;
        if let Some(p) = &r.personality_embedding_path {
            write_feature_file(&emb, &out_dir.join(p))?;
        }
        let line = serde_json::json!({ "id": r.id, "prompt": build_prompt(&r.personality) });
        prompts.push_str(&line.to_string());
        prompts.push('\n');
    }
    let prompts_path = out_dir.join("prompts.jsonl");
    fs::write(&prompts_path, prompts).map_err(|e| Error::io(&prompts_path, e))?;
    let records: Vec<SampleRecord> = subjects.iter().map(|s| s.record.clone()).collect();
    let manifest = out_dir.join("manifest.jsonl");
    write_manifest(&records, &manifest)?;
    Ok(manifest)
}
