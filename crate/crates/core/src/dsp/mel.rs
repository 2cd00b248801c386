//! MFCC pipeline: pre-emphasis, framing, magnitude spectrum, HTK mel
//! filterbank, log compression and an orthonormal DCT-II.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};

use super::frames::{frames_of, FrameConfig, Waveform};

pub const PRE_EMPHASIS: f64 = 0.97;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MelConfig {
    pub n_fft: usize,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl MelConfig {
    /// 26 filters over `[0, sr/2]`, 13 coefficients, floor `1e-10`, and the
    /// smallest power-of-two FFT that holds one frame.
    pub fn default_for(sample_rate: u32, frame_len: usize) -> Self {
        Self {
            n_fft: frame_len.next_power_of_two(),
            n_mels: 26,
            n_mfcc: 13,
            fmin: 0.0,
            fmax: f64::from(sample_rate) / 2.0,
            log_floor: 1e-10,
        }
    }

    pub fn validate(&self, sample_rate: u32, frame_len: usize) -> Result<()> {
        if !self.n_fft.is_power_of_two() || self.n_fft < frame_len {
            return Err(Error::invalid(format!(
                "n_fft must be a power of two >= frame_len ({frame_len}), got {}",
                self.n_fft
            )));
        }
        if self.n_mels == 0 || self.n_mfcc == 0 || self.n_mfcc > self.n_mels {
            return Err(Error::invalid(format!(
                "need 0 < n_mfcc <= n_mels, got n_mfcc {} n_mels {}",
                self.n_mfcc, self.n_mels
            )));
        }
        let nyquist = f64::from(sample_rate) / 2.0;
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= nyquist) {
            return Err(Error::invalid(format!(
                "need 0 <= fmin < fmax <= {nyquist}, got [{}, {}]",
                self.fmin, self.fmax
            )));
        }
        if self.log_floor.is_nan() || self.log_floor <= 0.0 {
            return Err(Error::invalid("log_floor must be positive"));
        }
        Ok(())
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters over the `n_fft/2 + 1` spectrum bins.
#[derive(Clone, Debug)]
pub struct MelFilterbank {
    /// `n_mels + 2` band edges in Hz; filter `m` spans `edges[m]..edges[m + 2]`.
    pub edges_hz: Vec<f64>,
    /// `n_mels` rows of `n_fft/2 + 1` weights.
    pub weights: Vec<Vec<f64>>,
}

impl MelFilterbank {
    pub fn new(sample_rate: u32, cfg: &MelConfig) -> Self {
        let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
        let edges_hz: Vec<f64> = (0..cfg.n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
            .collect();
        let bins = cfg.n_fft / 2 + 1;
        let bin_hz = f64::from(sample_rate) / cfg.n_fft as f64;
        let weights = (0..cfg.n_mels)
            .map(|m| {
                let (l, c, r) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
                (0..bins)
                    .map(|k| {
                        let f = k as f64 * bin_hz;
                        let rising = (f - l) / (c - l);
                        let falling = (r - f) / (r - c);
                        rising.min(falling).max(0.0)
                    })
                    .collect()
            })
            .collect();
        Self { edges_hz, weights }
    }

    pub fn apply(&self, spectrum: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|row| row.iter().zip(spectrum).map(|(w, s)| w * s).sum())
            .collect()
    }
}

/// Orthonormal DCT-II as an `n × n` row-major matrix; row `k` is basis `k`.
pub fn dct_matrix(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|k| {
            let s = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
            (0..n)
                .map(|i| s * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos())
                .collect()
        })
        .collect()
}

/// First-order pre-emphasis; the first sample passes through.
pub fn pre_emphasis(samples: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(samples.len());
    if let Some(&first) = samples.first() {
        out.push(first);
    }
    out.extend(samples.windows(2).map(|p| p[1] - PRE_EMPHASIS * p[0]));
    out
}

/// Mel filterbank energies (before the log) for every frame.
pub fn mel_energies(w: &Waveform, fcfg: &FrameConfig, mcfg: &MelConfig) -> Result<Vec<Vec<f64>>> {
    fcfg.validate()?;
    mcfg.validate(w.sample_rate(), fcfg.frame_len)?;
    let emphasised = pre_emphasis(w.samples());
    let frames = frames_of(&emphasised, fcfg, fcfg.window)?;
    let bank = MelFilterbank::new(w.sample_rate(), mcfg);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(mcfg.n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); mcfg.n_fft];
    Ok(frames
        .iter()
        .map(|frame| {
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for (b, &x) in buf.iter_mut().zip(frame) {
                b.re = x;
            }
            fft.process(&mut buf);
            let magnitude: Vec<f64> = buf[..mcfg.n_fft / 2 + 1].iter().map(|c| c.norm()).collect();
            bank.apply(&magnitude)
        })
        .collect())
}

/// `T × n_mfcc` cepstral coefficients.
pub fn mfcc(w: &Waveform, fcfg: &FrameConfig, mcfg: &MelConfig) -> Result<FeatureMatrix> {
    let energies = mel_energies(w, fcfg, mcfg)?;
    let dct = dct_matrix(mcfg.n_mels);
    let t = energies.len();
    let mut values = Vec::with_capacity(t * mcfg.n_mfcc);
    for e in &energies {
        let logs: Vec<f64> = e.iter().map(|v| v.max(mcfg.log_floor).ln()).collect();
        for basis in &dct[..mcfg.n_mfcc] {
            values.push(basis.iter().zip(&logs).map(|(b, l)| b * l).sum::<f64>());
        }
    }
    FeatureMatrix::from_f64(t, mcfg.n_mfcc, &values)
}
