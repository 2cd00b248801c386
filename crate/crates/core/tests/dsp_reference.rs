mod common;

use std::f64::consts::PI;

use ptmf_core::dsp::{
    frame_signal, mel_energies, mfcc, short_term_energy, zero_crossing_rate, FrameConfig, MelConfig, Waveform, Window,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SR: u32 = 16_000;

fn random_wave(rng: &mut ChaCha8Rng, len: usize) -> Waveform {
    Waveform::new((0..len).map(|_| rng.random_range(-1.0..1.0)).collect(), SR).unwrap()
}

#[test]
fn mfcc_matches_direct_dft_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let fc = FrameConfig::default_for(SR);
    let mc = MelConfig::default_for(SR, fc.frame_len);
    for _ in 0..4 {
        let w = random_wave(&mut rng, SR as usize / 4);
        let got = mfcc(&w, &fc, &mc).unwrap();
        let want = common::reference_mfcc(
            w.samples(),
            f64::from(SR),
            fc.frame_len,
            fc.hop_len,
            mc.n_fft,
            mc.n_mels,
            mc.n_mfcc,
            mc.log_floor,
        );
        assert_eq!(got.rows(), want.len());
        for (t, row) in want.iter().enumerate() {
            for (d, &v) in row.iter().enumerate() {
                let diff = (f64::from(got.get(t, d)) - v).abs();
                assert!(diff < 1e-5, "frame {t} coeff {d}: {} vs {v}", got.get(t, d));
            }
        }
    }
}

#[test]
fn log_floor_applies_to_silence() {
    let fc = FrameConfig::default_for(SR);
    let mc = MelConfig::default_for(SR, fc.frame_len);
    let w = Waveform::new(vec![0.0; 2000], SR).unwrap();
    let e = mel_energies(&w, &fc, &mc).unwrap();
    assert!(e.iter().flatten().all(|&v| v == 0.0));
    let c = mfcc(&w, &fc, &mc).unwrap();
    let c0 = (1e-10f64).ln() * (mc.n_mels as f64).sqrt();
    for t in 0..c.rows() {
        assert!((f64::from(c.get(t, 0)) - c0).abs() < 1e-4);
        assert!(c.row(t)[1..].iter().all(|v| v.abs() < 1e-4));
    }
}

fn rect(frame: usize, hop: usize) -> FrameConfig {
    FrameConfig::new(frame, hop, Window::Rectangular).unwrap()
}

#[test]
fn silence_has_no_energy_or_crossings() {
    let w = Waveform::new(vec![0.0; 1000], SR).unwrap();
    let f = frame_signal(&w, &rect(200, 100)).unwrap();
    assert!(short_term_energy(&f).unwrap().values().iter().all(|&v| v == 0.0));
    assert!(zero_crossing_rate(&f).unwrap().values().iter().all(|&v| v == 0.0));
}

#[test]
fn alternating_signal_crosses_every_sample() {
    let w = Waveform::new((0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect(), SR).unwrap();
    let f = frame_signal(&w, &rect(200, 100)).unwrap();
    assert!(zero_crossing_rate(&f).unwrap().values().iter().all(|&v| v == 1.0));
    assert!(short_term_energy(&f).unwrap().values().iter().all(|&v| v == 1.0));
}

#[test]
fn half_amplitude_sine_has_energy_one_eighth() {
    let w = Waveform::new(
        (0..SR as usize).map(|i| 0.5 * (2.0 * PI * 440.0 * i as f64 / f64::from(SR)).sin()).collect(),
        SR,
    )
    .unwrap();
    let f = frame_signal(&w, &rect(400, 160)).unwrap();
    for &e in short_term_energy(&f).unwrap().values() {
        assert!((f64::from(e) - 0.125).abs() <= 0.00125, "{e}");
    }
}
