use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};

/// Mono signal with samples in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("waveform has no samples"));
        }
        if sample_rate < 8000 {
            return Err(Error::invalid(format!(
                "sample rate must be at least 8000 Hz, got {sample_rate}"
            )));
        }
        if let Some(bad) = samples.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("sample {bad} outside [-1, 1]")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Hamming,
    Hann,
    Rectangular,
}

impl Window {
    /// Symmetric window coefficients of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![1.0];
        }
        let denom = (n - 1) as f64;
        (0..n)
            .map(|i| {
                let phase = 2.0 * PI * i as f64 / denom;
                match self {
                    Window::Hamming => 0.54 - 0.46 * phase.cos(),
                    Window::Hann => 0.5 - 0.5 * phase.cos(),
                    Window::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameConfig {
    pub frame_len: usize,
    pub hop_len: usize,
    pub window: Window,
}

impl FrameConfig {
    pub fn new(frame_len: usize, hop_len: usize, window: Window) -> Result<Self> {
        let cfg = Self {
            frame_len,
            hop_len,
            window,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Frame and hop given in milliseconds, Hamming window.
    pub fn from_ms(sample_rate: u32, frame_ms: f64, hop_ms: f64) -> Result<Self> {
        let to_samples = |ms: f64| (ms * f64::from(sample_rate) / 1000.0).round() as usize;
        Self::new(to_samples(frame_ms), to_samples(hop_ms), Window::Hamming)
    }

    /// 25 ms frames with a 10 ms hop.
    pub fn default_for(sample_rate: u32) -> Self {
        Self::from_ms(sample_rate, 25.0, 10.0).expect("default frame config is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop_len == 0 || self.hop_len > self.frame_len {
            return Err(Error::invalid(format!(
                "need 0 < hop_len <= frame_len, got hop {} frame {}",
                self.hop_len, self.frame_len
            )));
        }
        Ok(())
    }

    /// Number of complete frames in `len` samples.
    pub fn frame_count(&self, len: usize) -> Result<usize> {
        if len < self.frame_len {
            return Err(Error::invalid(format!(
                "signal of {len} samples is shorter than one {}-sample frame",
                self.frame_len
            )));
        }
        Ok(1 + (len - self.frame_len) / self.hop_len)
    }
}

/// Slices `samples` into overlapping frames and applies the window.
pub(crate) fn frames_of(samples: &[f64], cfg: &FrameConfig, window: Window) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let t = cfg.frame_count(samples.len())?;
    let w = window.coefficients(cfg.frame_len);
    Ok((0..t)
        .map(|i| {
            let start = i * cfg.hop_len;
            samples[start..start + cfg.frame_len]
                .iter()
                .zip(&w)
                .map(|(x, c)| x * c)
                .collect()
        })
        .collect())
}

fn to_matrix(rows: Vec<Vec<f64>>) -> Result<FeatureMatrix> {
    let t = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    FeatureMatrix::from_f64(t, d, &rows.concat())
}

/// `T × frame_len` windowed frames, `T = 1 + (len - frame_len) / hop_len`.
pub fn frame_signal(w: &Waveform, cfg: &FrameConfig) -> Result<FeatureMatrix> {
    to_matrix(frames_of(w.samples(), cfg, cfg.window)?)
}

fn energy(frame: &[f64]) -> f64 {
    frame.iter().map(|x| x * x).sum::<f64>() / frame.len() as f64
}

fn zcr(frame: &[f64]) -> f64 {
    if frame.len() < 2 {
        return 0.0;
    }
    let crossings = frame
        .windows(2)
        .filter(|p| (p[0] >= 0.0) != (p[1] >= 0.0))
        .count();
    crossings as f64 / (frame.len() - 1) as f64
}

/// Mean squared sample of each (already windowed) frame, `T × 1`.
pub fn short_term_energy(frames: &FeatureMatrix) -> Result<FeatureMatrix> {
    let values: Vec<f64> = (0..frames.rows())
        .map(|t| energy(&widen(frames.row(t))))
        .collect();
    FeatureMatrix::from_f64(frames.rows(), 1, &values)
}

/// Fraction of adjacent sample pairs that change sign, `T × 1`. Zero counts
/// as positive. Expects unwindowed frames.
pub fn zero_crossing_rate(frames: &FeatureMatrix) -> Result<FeatureMatrix> {
    let values: Vec<f64> = (0..frames.rows())
        .map(|t| zcr(&widen(frames.row(t))))
        .collect();
    FeatureMatrix::from_f64(frames.rows(), 1, &values)
}

fn widen(row: &[f32]) -> Vec<f64> {
    row.iter().map(|&v| f64::from(v)).collect()
}

/// `T × 2`: short-term energy of windowed frames, then ZCR of the same frames
/// without windowing.
pub fn extract_lld_bundle(w: &Waveform, cfg: &FrameConfig) -> Result<FeatureMatrix> {
    let windowed = frames_of(w.samples(), cfg, cfg.window)?;
    let raw = frames_of(w.samples(), cfg, Window::Rectangular)?;
    let values: Vec<f64> = windowed
        .iter()
        .zip(&raw)
        .flat_map(|(fw, fr)| [energy(fw), zcr(fr)])
        .collect();
    FeatureMatrix::from_f64(windowed.len(), 2, &values)
}
