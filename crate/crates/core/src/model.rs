//! End-to-end network: stream encoders, audio co-attention, visual
//! concatenation, transformer fusion, the interaction module and the
//! classifier head, wired according to the ablation flags.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{load_checkpoint, save_checkpoint, Graph, NodeId, ParamStore};
use crate::data::{SampleFeatures, StreamDims, Task};
use crate::encoders::{asp_pool, lstm_encode, AspParams, LstmParams, Pooled};
use crate::error::{Error, Result};
use crate::fusion::{
    align_streams, co_attention_fuse, plain_audio_concat, transformer_fuse, visual_concat,
    CoAttentionParams, FusedRepresentation, TransformerFusionParams,
};
use crate::nn::Linear;
use crate::ptmfim::{ptmfim_forward, BcaDirection, PtmfimOutput, PtmfimParams};
use crate::tensor::Tensor;

/// Every knob of the model and its training run. Field names double as the
/// keys of the command-line config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub lld_dim: usize,
    pub mfcc_dim: usize,
    pub wav2vec_dim: usize,
    pub openface_dim: usize,
    pub resnet_dim: usize,
    pub densenet_dim: usize,
    pub personality_dim: usize,

    pub audio_hidden: usize,
    pub visual_hidden: usize,
    /// Width of each transformed audio stream inside co-attention.
    pub coatt_dim: usize,
    pub coatt_sigmoid: bool,
    pub asp_dim: usize,
    pub asp_eps: f64,

    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,

    pub d_h: usize,
    pub n_p: usize,
    pub ptmfim_heads: usize,
    pub bca_direction: BcaDirection,
    /// Feed `f*` to the classifier alongside the interaction output.
    pub head_with_fstar: bool,

    pub n_classes: usize,
    pub dropout: f64,

    pub multi_audio: bool,
    pub co_att: bool,
    pub multi_visual: bool,
    pub ptmfim: bool,

    pub seed: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub val_fraction: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let d = StreamDims::default();
        Self {
            lld_dim: d.lld,
            mfcc_dim: d.mfcc,
            wav2vec_dim: d.wav2vec,
            openface_dim: d.openface,
            resnet_dim: d.resnet,
            densenet_dim: d.densenet,
            personality_dim: d.personality,
            audio_hidden: 16,
            visual_hidden: 16,
            coatt_dim: 16,
            coatt_sigmoid: false,
            asp_dim: 16,
            asp_eps: 1e-5,
            d_model: 32,
            n_layers: 2,
            n_heads: 4,
            ffn_dim: 128,
            d_h: 64,
            n_p: 4,
            ptmfim_heads: 1,
            bca_direction: BcaDirection::PersonalityQueries,
            head_with_fstar: false,
            n_classes: 2,
            dropout: 0.1,
            multi_audio: true,
            co_att: true,
            multi_visual: true,
            ptmfim: true,
            seed: 0,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.0,
            epochs: 50,
            batch_size: 8,
            val_fraction: 0.2,
        }
    }
}

impl ModelConfig {
    pub fn stream_dims(&self) -> StreamDims {
        StreamDims {
            lld: self.lld_dim,
            mfcc: self.mfcc_dim,
            wav2vec: self.wav2vec_dim,
            openface: self.openface_dim,
            resnet: self.resnet_dim,
            densenet: self.densenet_dim,
            personality: self.personality_dim,
        }
    }

    pub fn set_stream_dims(&mut self, d: StreamDims) {
        self.lld_dim = d.lld;
        self.mfcc_dim = d.mfcc;
        self.wav2vec_dim = d.wav2vec;
        self.openface_dim = d.openface;
        self.resnet_dim = d.resnet;
        self.densenet_dim = d.densenet;
        self.personality_dim = d.personality;
    }

    pub fn task(&self) -> Result<Task> {
        Task::from_n_classes(self.n_classes)
            .ok_or_else(|| Error::invalid(format!("n_classes must be 2, 3 or 5, got {}", self.n_classes)))
    }

    pub fn validate(&self) -> Result<()> {
        self.task()?;
        let sizes = [
            ("lld_dim", self.lld_dim),
            ("mfcc_dim", self.mfcc_dim),
            ("wav2vec_dim", self.wav2vec_dim),
            ("openface_dim", self.openface_dim),
            ("resnet_dim", self.resnet_dim),
            ("densenet_dim", self.densenet_dim),
            ("personality_dim", self.personality_dim),
            ("audio_hidden", self.audio_hidden),
            ("visual_hidden", self.visual_hidden),
            ("coatt_dim", self.coatt_dim),
            ("asp_dim", self.asp_dim),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("ffn_dim", self.ffn_dim),
            ("d_h", self.d_h),
            ("n_p", self.n_p),
            ("ptmfim_heads", self.ptmfim_heads),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("{name} must be positive")));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::invalid(format!(
                "d_model {} must be divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !self.d_h.is_multiple_of(self.ptmfim_heads) {
            return Err(Error::invalid(format!(
                "d_h {} must be divisible by ptmfim_heads {}",
                self.d_h, self.ptmfim_heads
            )));
        }
        let unit = |name: &str, v: f64, closed_low: bool| {
            let ok = if closed_low { (0.0..1.0).contains(&v) } else { v > 0.0 && v < 1.0 };
            if ok {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} out of range: {v}")))
            }
        };
        unit("dropout", self.dropout, true)?;
        unit("beta1", self.beta1, true)?;
        unit("beta2", self.beta2, true)?;
        unit("val_fraction", self.val_fraction, false)?;
        for (name, v) in [("lr", self.lr), ("adam_eps", self.adam_eps), ("asp_eps", self.asp_eps)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid(format!("weight_decay must be >= 0, got {}", self.weight_decay)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Parts {
    lld: Option<LstmParams>,
    mfcc: Option<LstmParams>,
    wav2vec: LstmParams,
    visual: LstmParams,
    coatt: Option<CoAttentionParams>,
    audio_asp: AspParams,
    visual_asp: AspParams,
    fusion: TransformerFusionParams,
    ptmfim: Option<PtmfimParams>,
    head_hidden: Linear,
    head_out: Linear,
}

/// Values recorded by one forward pass, kept for inspection and tests.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// `1 × n_classes` unnormalised scores.
    pub logits: NodeId,
    pub audio_pool: Pooled,
    pub visual_pool: Pooled,
    pub fused: FusedRepresentation,
    pub ptmfim: Option<PtmfimOutput>,
}

impl ForwardTrace {
    /// Every attention matrix of the pass: transformer layers then, when
    /// present, interaction attention.
    pub fn attention(&self) -> Vec<NodeId> {
        let mut all = self.fused.attention.clone();
        if let Some(p) = &self.ptmfim {
            all.extend(&p.bca_attention);
            all.extend(&p.tia_attention);
        }
        all
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    store: ParamStore,
    parts: Parts,
}

impl Model {
    /// Builds and initialises every parameter from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let mut store = ParamStore::new();
        let s = &mut store;
        let (lld, mfcc) = if c.multi_audio {
            (
                Some(LstmParams::new(s, "enc.lld.lstm", c.lld_dim, c.audio_hidden, &mut rng)?),
                Some(LstmParams::new(s, "enc.mfcc.lstm", c.mfcc_dim, c.audio_hidden, &mut rng)?),
            )
        } else {
            (None, None)
        };
        let wav2vec = LstmParams::new(s, "enc.wav2vec.lstm", c.wav2vec_dim, c.audio_hidden, &mut rng)?;
        let visual_in = if c.multi_visual {
            c.openface_dim + c.resnet_dim + c.densenet_dim
        } else {
            c.openface_dim
        };
        let visual = LstmParams::new(s, "enc.visual.lstm", visual_in, c.visual_hidden, &mut rng)?;
        let (coatt, audio_seq_dim) = if c.multi_audio {
            let h = c.audio_hidden;
            let k = c.coatt_dim;
            let p = CoAttentionParams::new(s, "fuse.coatt", (h, h, h), (k, k, k), c.dropout, c.coatt_sigmoid, &mut rng)?;
            let d = p.out_dim();
            (Some(p), d)
        } else {
            (None, c.audio_hidden)
        };
        let audio_asp = AspParams::new(s, "enc.audio.asp", audio_seq_dim, c.asp_dim, c.asp_eps, &mut rng)?;
        let visual_asp = AspParams::new(s, "enc.visual.asp", c.visual_hidden, c.asp_dim, c.asp_eps, &mut rng)?;
        let fusion = TransformerFusionParams::new(
            s,
            "fuse.tx",
            2 * audio_seq_dim,
            2 * c.visual_hidden,
            c.d_model,
            c.n_layers,
            c.n_heads,
            c.ffn_dim,
            c.dropout,
            &mut rng,
        )?;
        let (ptmfim, head_in) = if c.ptmfim {
            let p = PtmfimParams::new(
                s,
                "ptmfim",
                c.personality_dim,
                c.d_model,
                c.d_h,
                c.n_p,
                c.ptmfim_heads,
                c.bca_direction,
                &mut rng,
            )?;
            let extra = if c.head_with_fstar { 2 * c.d_model } else { 0 };
            (Some(p), c.d_h + extra)
        } else {
            (None, c.personality_dim + 2 * c.d_model)
        };
        let head_hidden = Linear::new(s, "head.hidden", head_in, c.d_h, true, &mut rng)?;
        let head_out = Linear::new(s, "head.out", c.d_h, c.n_classes, true, &mut rng)?;
        let parts = Parts {
            lld,
            mfcc,
            wav2vec,
            visual,
            coatt,
            audio_asp,
            visual_asp,
            fusion,
            ptmfim,
            head_hidden,
            head_out,
        };
        Ok(Self { config, store, parts })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Errors naming both sides when `data` does not match the configured widths.
    pub fn check_dims(&self, data: &StreamDims) -> Result<()> {
        let want = self.config.stream_dims();
        if *data != want {
            return Err(Error::invalid(format!(
                "feature dims mismatch: model expects {want:?}, data has {data:?}"
            )));
        }
        Ok(())
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: &SampleFeatures) -> Result<ForwardTrace> {
        self.check_dims(&x.dims())?;
        let p = &self.parts;

        let audio_seq = match (&p.lld, &p.mfcc, &p.coatt) {
            (Some(lp), Some(mp), Some(cp)) => {
                let a = align_streams(&[&x.lld, &x.mfcc, &x.wav2vec])?;
                let l = g.constant(a[0].to_tensor());
                let m = g.constant(a[1].to_tensor());
                let w = g.constant(a[2].to_tensor());
                let l = lstm_encode(g, l, lp)?;
                let m = lstm_encode(g, m, mp)?;
                let w = lstm_encode(g, w, &p.wav2vec)?;
                if self.config.co_att {
                    co_attention_fuse(g, l, m, w, cp)?
                } else {
                    plain_audio_concat(g, l, m, w, cp)?
                }
            }
            _ => {
                let w = g.constant(x.wav2vec.to_tensor());
                lstm_encode(g, w, &p.wav2vec)?
            }
        };
        let audio_pool = asp_pool(g, audio_seq, &p.audio_asp)?;

        let visual_in = if self.config.multi_visual {
            let a = align_streams(&[&x.openface, &x.resnet, &x.densenet])?;
            let o = g.constant(a[0].to_tensor());
            let r = g.constant(a[1].to_tensor());
            let d = g.constant(a[2].to_tensor());
            visual_concat(g, o, r, d)?
        } else {
            g.constant(x.openface.to_tensor())
        };
        let visual_seq = lstm_encode(g, visual_in, &p.visual)?;
        let visual_pool = asp_pool(g, visual_seq, &p.visual_asp)?;

        let fused = transformer_fuse(g, audio_pool.out, visual_pool.out, &p.fusion)?;
        let personality = g.constant(Tensor::row(&x.personality));
        let (head_in, ptmfim) = match &p.ptmfim {
            Some(pp) => {
                let out = ptmfim_forward(g, personality, fused.tokens, pp)?;
                let h = if self.config.head_with_fstar {
                    g.concat(&[out.out, fused.f_star], 1)?
                } else {
                    out.out
                };
                (h, Some(out))
            }
            None => (g.concat(&[personality, fused.f_star], 1)?, None),
        };
        let logits = classifier_logits(g, head_in, &p.head_hidden, &p.head_out)?;
        Ok(ForwardTrace {
            logits,
            audio_pool,
            visual_pool,
            fused,
            ptmfim,
        })
    }

    /// Class probabilities with dropout disabled.
    pub fn predict_proba(&self, x: &SampleFeatures) -> Result<Vec<f64>> {
        let mut g = Graph::new(&self.store);
        let trace = self.forward(&mut g, x)?;
        let probs = g.softmax(trace.logits, 1)?;
        Ok(g.value(probs).data().to_vec())
    }

    pub fn predict(&self, x: &SampleFeatures) -> Result<usize> {
        Ok(argmax(&self.predict_proba(x)?))
    }

    /// Writes parameters to `path` and the config to [`config_sidecar`]`(path)`.
    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(&self.store, path)?;
        let sidecar = config_sidecar(path);
        let json = serde_json::to_string_pretty(&self.config)
            .map_err(|e| Error::invalid(format!("cannot serialise config: {e}")))?;
        std::fs::write(&sidecar, json + "\n").map_err(|e| Error::io(&sidecar, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let sidecar = config_sidecar(path);
        let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let config: ModelConfig =
            serde_json::from_str(&text).map_err(|e| Error::format(&sidecar, e.to_string()))?;
        let mut model = Model::new(config)?;
        load_checkpoint(&mut model.store, path)?;
        Ok(model)
    }
}

/// `<checkpoint>.config.json`
pub fn config_sidecar(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".config.json");
    PathBuf::from(s)
}

/// Two-layer MLP: `Linear → ReLU → Linear`.
pub fn classifier_logits(g: &mut Graph<'_>, x: NodeId, hidden: &Linear, out: &Linear) -> Result<NodeId> {
    let h = hidden.forward(g, x)?;
    let h = g.relu(h)?;
    out.forward(g, h)
}

/// Softmax probabilities of the classifier.
pub fn classify(g: &mut Graph<'_>, x: NodeId, hidden: &Linear, out: &Linear) -> Result<NodeId> {
    let logits = classifier_logits(g, x, hidden, out)?;
    g.softmax(logits, 1)
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_subjects, SynthSpec};

    pub(crate) fn small_config() -> ModelConfig {
        ModelConfig {
            audio_hidden: 4,
            visual_hidden: 4,
            coatt_dim: 3,
            asp_dim: 3,
            d_model: 4,
            n_layers: 1,
            n_heads: 2,
            ffn_dim: 8,
            d_h: 4,
            n_p: 2,
            ..ModelConfig::default()
        }
    }

    fn sample() -> SampleFeatures {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        synth_subjects(&SynthSpec::new(1, Task::Binary, 1.0), &mut rng).unwrap()[0]
            .sample
            .features
            .clone()
    }

    #[test]
    fn every_ablation_runs_and_names_its_parameters() {
        let x = sample();
        for (multi_audio, co_att, multi_visual, ptmfim) in [
            (true, true, true, true),
            (false, true, true, true),
            (true, false, true, true),
            (true, true, false, true),
            (true, true, true, false),
        ] {
            let cfg = ModelConfig {
                multi_audio,
                co_att,
                multi_visual,
                ptmfim,
                ..small_config()
            };
            let m = Model::new(cfg).unwrap();
            let p = m.predict_proba(&x).unwrap();
            assert_eq!(p.len(), 2);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let count = |prefix: &str| m.store().ids_with_prefix(prefix).count();
            assert_eq!(count("ptmfim.") > 0, ptmfim);
            assert_eq!(count("enc.lld.") > 0, multi_audio);
            assert_eq!(count("fuse.coatt.") > 0, multi_audio);
            assert!(count("fuse.tx.") > 0 && count("head.") > 0);
        }
    }

    #[test]
    fn dims_mismatch_names_both_sides() {
        let m = Model::new(small_config()).unwrap();
        let mut x = sample();
        x.personality.push(0.0);
        let err = m.predict(&x).unwrap_err().to_string();
        assert!(err.contains("personality: 64") && err.contains("personality: 65"), "{err}");
    }

    #[test]
    fn config_validation() {
        for bad in [
            ModelConfig { n_classes: 4, ..small_config() },
            ModelConfig { d_model: 5, ..small_config() },
            ModelConfig { dropout: 1.0, ..small_config() },
            ModelConfig { val_fraction: 0.0, ..small_config() },
            ModelConfig { lr: 0.0, ..small_config() },
            ModelConfig { coatt_dim: 0, ..small_config() },
            ModelConfig { ptmfim_heads: 3, ..small_config() },
        ] {
            assert!(Model::new(bad).is_err());
        }
    }

    #[test]
    fn save_and_load_reproduce_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = Model::new(ModelConfig { seed: 4, ..small_config() }).unwrap();
        m.save(&path).unwrap();
        assert!(config_sidecar(&path).ends_with("m.ckpt.config.json"));
        let back = Model::load(&path).unwrap();
        assert_eq!(back.config(), m.config());
        let x = sample();
        assert_eq!(back.predict_proba(&x).unwrap(), m.predict_proba(&x).unwrap());
    }

    #[test]
    fn argmax_prefers_first_tie() {
        assert_eq!(argmax(&[0.2, 0.5, 0.5]), 1);
        assert_eq!(argmax(&[1.0]), 0);
    }
}
