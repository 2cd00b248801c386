//! Independent reference implementations used as test oracles. Everything
//! here is written with plain loops over `Vec<Vec<f64>>` and shares no code
//! with the library beyond reading parameter values.

#![allow(dead_code)]

use std::f64::consts::PI;

use ptmf_core::data::{synth_subjects, Sample, SynthSpec, Task};
use ptmf_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Mat = Vec<Vec<f64>>;

pub fn mat(t: &Tensor) -> Mat {
    (0..t.rows()).map(|r| t.row_slice(r).to_vec()).collect()
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        assert_eq!(a[i].len(), k);
        for j in 0..m {
            let mut s = 0.0;
            for p in 0..k {
                s += a[i][p] * b[p][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn add_row(a: &Mat, bias: &[f64]) -> Mat {
    a.iter()
        .map(|r| r.iter().zip(bias).map(|(x, b)| x + b).collect())
        .collect()
}

pub fn map(a: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    a.iter().map(|r| r.iter().map(|&x| f(x)).collect()).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub fn mean_rows(a: &Mat) -> Vec<f64> {
    let n = a.len() as f64;
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).sum::<f64>() / n).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn flat(a: &Mat) -> Vec<f64> {
    a.concat()
}

/// `x W + b`
pub fn linear(x: &Mat, w: &Tensor, b: Option<&Tensor>) -> Mat {
    let y = matmul(x, &mat(w));
    match b {
        Some(b) => add_row(&y, b.data()),
        None => y,
    }
}

/// Single-head scaled dot-product attention; returns `(output, weights)`.
pub fn attention(q: &Mat, k: &Mat, v: &Mat) -> (Mat, Mat) {
    let d = q[0].len() as f64;
    let mut weights = Vec::new();
    let mut out = Vec::new();
    for qi in q {
        let scores: Vec<f64> = k
            .iter()
            .map(|kj| qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() / d.sqrt())
            .collect();
        let a = softmax(&scores);
        let mut o = vec![0.0; v[0].len()];
        for (aj, vj) in a.iter().zip(v) {
            for (oc, vc) in o.iter_mut().zip(vj) {
                *oc += aj * vc;
            }
        }
        weights.push(a);
        out.push(o);
    }
    (out, weights)
}

/// LSTM with gates stacked `(i, f, o, g)` along the columns of `w`, `u`, `b`.
pub fn lstm(x: &Mat, w: &Tensor, u: &Tensor, b: &Tensor) -> Mat {
    let hdim = u.rows();
    let (w, u, b) = (mat(w), mat(u), b.data().to_vec());
    let mut h = vec![0.0; hdim];
    let mut c = vec![0.0; hdim];
    let mut out = Vec::new();
    for xt in x {
        let mut z = b.clone();
        for (col, zc) in z.iter_mut().enumerate() {
            for (d, xv) in xt.iter().enumerate() {
                *zc += xv * w[d][col];
            }
            for (r, hv) in h.iter().enumerate() {
                *zc += hv * u[r][col];
            }
        }
        let mut hn = vec![0.0; hdim];
        for j in 0..hdim {
            let i = sigmoid(z[j]);
            let f = sigmoid(z[hdim + j]);
            let o = sigmoid(z[2 * hdim + j]);
            let g = z[3 * hdim + j].tanh();
            c[j] = f * c[j] + i * g;
            hn[j] = o * c[j].tanh();
        }
        h = hn;
        out.push(h.clone());
    }
    out
}

/// Attentive statistics pooling: `(concat(mean, std), weights)`.
pub fn asp(h: &Mat, w: &Tensor, b: &Tensor, v: &Tensor, eps: f64) -> (Vec<f64>, Vec<f64>) {
    let (w, b, v) = (mat(w), b.data().to_vec(), v.data().to_vec());
    let scores: Vec<f64> = h
        .iter()
        .map(|ht| {
            (0..b.len())
                .map(|a| {
                    let mut s = b[a];
                    for (k, hv) in ht.iter().enumerate() {
                        s += hv * w[k][a];
                    }
                    v[a] * s.tanh()
                })
                .sum()
        })
        .collect();
    let alpha = softmax(&scores);
    let dim = h[0].len();
    let mut mu = vec![0.0; dim];
    let mut second = vec![0.0; dim];
    for (a, ht) in alpha.iter().zip(h) {
        for j in 0..dim {
            mu[j] += a * ht[j];
            second[j] += a * ht[j] * ht[j];
        }
    }
    let sd: Vec<f64> = (0..dim)
        .map(|j| ((second[j] - mu[j] * mu[j]).max(0.0) + eps).sqrt())
        .collect();
    ([mu, sd].concat(), alpha)
}

// ---------------------------------------------------------------- metrics

/// Per-class counting over raw label pairs, without a confusion matrix.
pub struct OracleMetrics {
    pub acc_w: f64,
    pub acc_u: f64,
    pub f1_w: f64,
    pub f1_u: f64,
    pub acc_task: f64,
    pub f1_task: f64,
}

pub fn oracle_metrics(truth: &[usize], pred: &[usize], n: usize) -> OracleMetrics {
    let total = truth.len() as f64;
    let correct = truth.iter().zip(pred).filter(|(t, p)| t == p).count() as f64;
    let (mut recalls, mut f1s, mut weighted) = (Vec::new(), Vec::new(), 0.0);
    for c in 0..n {
        let mut tp = 0.0;
        let mut fp = 0.0;
        let mut fn_ = 0.0;
        for i in 0..truth.len() {
            match (truth[i] == c, pred[i] == c) {
                (true, true) => tp += 1.0,
                (false, true) => fp += 1.0,
                (true, false) => fn_ += 1.0,
                _ => {}
            }
        }
        let support = tp + fn_;
        if support == 0.0 {
            continue;
        }
        let recall = tp / support;
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        recalls.push(recall);
        f1s.push(f1);
        weighted += f1 * support / total;
    }
    let acc_u = recalls.iter().sum::<f64>() / recalls.len() as f64;
    let f1_u = f1s.iter().sum::<f64>() / f1s.len() as f64;
    let acc_w = correct / total;
    OracleMetrics {
        acc_w,
        acc_u,
        f1_w: weighted,
        f1_u,
        acc_task: (acc_w + acc_u) / 2.0,
        f1_task: (weighted + f1_u) / 2.0,
    }
}

// ---------------------------------------------------------------- mfcc

/// Reference MFCC: pre-emphasis 0.97, symmetric Hamming frames, a direct
/// O(N²) DFT of the zero-padded frame, HTK-mel triangular filters on
/// `[0, sr/2]`, `ln(max(e, floor))` and an orthonormal DCT-II.
#[allow(clippy::too_many_arguments)]
pub fn reference_mfcc(
    x: &[f64],
    sr: f64,
    frame_len: usize,
    hop: usize,
    n_fft: usize,
    n_mels: usize,
    n_mfcc: usize,
    floor: f64,
) -> Mat {
    let mut y = vec![x[0]];
    for n in 1..x.len() {
        y.push(x[n] - 0.97 * x[n - 1]);
    }
    let window: Vec<f64> = (0..frame_len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (frame_len as f64 - 1.0)).cos())
        .collect();
    let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let inv = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let top = mel(sr / 2.0);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| inv(top * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bins = n_fft / 2 + 1;
    let frames = 1 + (y.len() - frame_len) / hop;
    let mut out = Vec::with_capacity(frames);
    for t in 0..frames {
        let frame: Vec<f64> = (0..frame_len).map(|n| y[t * hop + n] * window[n]).collect();
        let mut mag = vec![0.0; bins];
        for (k, m) in mag.iter_mut().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, v) in frame.iter().enumerate() {
                let ang = -2.0 * PI * (k * n) as f64 / n_fft as f64;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            *m = (re * re + im * im).sqrt();
        }
        let mut logs = vec![0.0; n_mels];
        for (m, lm) in logs.iter_mut().enumerate() {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let mut e = 0.0;
            for (k, mk) in mag.iter().enumerate() {
                let f = k as f64 * sr / n_fft as f64;
                let wgt = if f > lo && f <= mid {
                    (f - lo) / (mid - lo)
                } else if f > mid && f < hi {
                    (hi - f) / (hi - mid)
                } else {
                    0.0
                };
                e += wgt * mk;
            }
            *lm = e.max(floor).ln();
        }
        let row: Vec<f64> = (0..n_mfcc)
            .map(|k| {
                let scale = if k == 0 {
                    (1.0 / n_mels as f64).sqrt()
                } else {
                    (2.0 / n_mels as f64).sqrt()
                };
                scale
                    * logs
                        .iter()
                        .enumerate()
                        .map(|(i, l)| l * (PI * k as f64 * (i as f64 + 0.5) / n_mels as f64).cos())
                        .sum::<f64>()
            })
            .collect();
        out.push(row);
    }
    out
}

// ---------------------------------------------------------------- data

pub fn synth_samples(n: usize, task: Task, class_sep: f64, personality_sep: f64, seed: u64) -> Vec<Sample> {
    let mut spec = SynthSpec::new(n, task, class_sep);
    spec.personality_sep = personality_sep;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    synth_subjects(&spec, &mut rng)
        .expect("valid synth spec")
        .into_iter()
        .map(|s| s.sample)
        .collect()
}
