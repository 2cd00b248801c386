use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{read_feature_file, FeatureMatrix, Labels, SampleRecord};

/// Feature width of every input stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamDims {
    pub lld: usize,
    pub mfcc: usize,
    pub wav2vec: usize,
    pub openface: usize,
    pub resnet: usize,
    pub densenet: usize,
    pub personality: usize,
}

impl StreamDims {
    pub fn as_pairs(&self) -> [(&'static str, usize); 7] {
        [
            ("lld", self.lld),
            ("mfcc", self.mfcc),
            ("wav2vec", self.wav2vec),
            ("openface", self.openface),
            ("resnet", self.resnet),
            ("densenet", self.densenet),
            ("personality", self.personality),
        ]
    }
}

impl Default for StreamDims {
    fn default() -> Self {
        Self {
            lld: 2,
            mfcc: 13,
            wav2vec: 32,
            openface: 12,
            resnet: 16,
            densenet: 16,
            personality: 64,
        }
    }
}

/// All decoded inputs of one subject.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleFeatures {
    pub lld: FeatureMatrix,
    pub mfcc: FeatureMatrix,
    pub wav2vec: FeatureMatrix,
    pub openface: FeatureMatrix,
    pub resnet: FeatureMatrix,
    pub densenet: FeatureMatrix,
    pub personality: Vec<f64>,
}

impl SampleFeatures {
    pub fn dims(&self) -> StreamDims {
        StreamDims {
            lld: self.lld.cols(),
            mfcc: self.mfcc.cols(),
            wav2vec: self.wav2vec.cols(),
            openface: self.openface.cols(),
            resnet: self.resnet.cols(),
            densenet: self.densenet.cols(),
            personality: self.personality.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub labels: Labels,
    pub features: SampleFeatures,
}

pub fn load_sample(rec: &SampleRecord) -> Result<Sample> {
    let emb_path = rec.personality_embedding_path.as_ref().ok_or_else(|| {
        Error::invalid(format!(
            "record {} has no personality_embedding_path; the model needs a personality embedding",
            rec.id
        ))
    })?;
    let embedding = read_feature_file(emb_path)?;
    Ok(Sample {
        id: rec.id.clone(),
        labels: rec.labels,
        features: SampleFeatures {
            lld: read_feature_file(&rec.audio_paths.lld)?,
            mfcc: read_feature_file(&rec.audio_paths.mfcc)?,
            wav2vec: read_feature_file(&rec.audio_paths.wav2vec)?,
            openface: read_feature_file(&rec.visual_paths.openface)?,
            resnet: read_feature_file(&rec.visual_paths.resnet)?,
            densenet: read_feature_file(&rec.visual_paths.densenet)?,
            personality: embedding.values().iter().map(|&v| f64::from(v)).collect(),
        },
    })
}

/// Decodes every record and checks that all samples share one set of stream widths.
pub fn load_samples(records: &[SampleRecord]) -> Result<Vec<Sample>> {
    let samples = records.iter().map(load_sample).collect::<Result<Vec<_>>>()?;
    dataset_dims(&samples)?;
    Ok(samples)
}

/// The common stream widths of `samples`.
pub fn dataset_dims(samples: &[Sample]) -> Result<StreamDims> {
    let first = samples
        .first()
        .ok_or_else(|| Error::invalid("dataset is empty"))?
        .features
        .dims();
    for s in samples {
        let d = s.features.dims();
        if d != first {
            return Err(Error::invalid(format!(
                "sample {} has stream dims {d:?}, expected {first:?}",
                s.id
            )));
        }
    }
    Ok(first)
}
