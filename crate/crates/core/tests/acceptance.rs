//! Acceptance run: one PASS/FAIL line per criterion and a summary line.
//! With `ACCEPTANCE_STRICT=1` any FAIL makes the exit status non-zero.

mod common;

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use ptmf_core::autograd::{encode_checkpoint, Graph};
use ptmf_core::checks::{gradcheck_modules, GRADCHECK_TOL};
use ptmf_core::data::{
    build_prompt, read_feature_file, write_feature_file, FeatureMatrix, PersonalityProfile, Task, TraitScore,
};
use ptmf_core::dsp::{frame_signal, mfcc, short_term_energy, zero_crossing_rate, FrameConfig, MelConfig, Waveform, Window};
use ptmf_core::train::{compute_metrics, evaluate, train, train_with, Variant};
use ptmf_core::{Model, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn gradient_integrity() -> Outcome {
    let start = Instant::now();
    let (mut worst, mut n, mut failed) = (0.0f64, 0, Vec::new());
    for seed in 0..3 {
        for c in gradcheck_modules(seed).expect("gradcheck runs") {
            n += 1;
            worst = worst.max(c.report.max_rel_err());
            if !c.report.passed() {
                failed.push(format!("{}@{seed}", c.module));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        failed.is_empty() && secs < 120.0,
        format!("{n} module checks, max rel err {worst:.2e} (tol {GRADCHECK_TOL:.0e}), {secs:.1} s, failures {failed:?}"),
    )
}

fn attention_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut row_err, mut gate_min, mut gate_max, mut sd_min) = (0.0f64, 1.0f64, 0.0f64, f64::INFINITY);
    let mut eps_floor = 0.0;
    for pass in 0..1000u64 {
        let heads = [1, 2, 4][pass as usize % 3];
        let cfg = ModelConfig {
            seed: pass,
            n_heads: heads,
            ptmfim_heads: heads,
            coatt_sigmoid: pass % 2 == 0,
            ..ModelConfig::default()
        };
        let model = Model::new(cfg).expect("valid config");
        let sep = rng.random_range(0.0..4.0);
        let sample = &common::synth_samples(1, Task::Binary, sep, sep, 10_000 + pass)[0];
        let mut g = Graph::new(model.store());
        let trace = model.forward(&mut g, &sample.features).expect("forward");
        for a in trace.attention() {
            let w = g.value(a);
            for r in 0..w.rows() {
                row_err = row_err.max((w.row_slice(r).iter().sum::<f64>() - 1.0).abs());
            }
        }
        for &v in g.value(trace.ptmfim.as_ref().expect("ptmfim on").gate).data() {
            gate_min = gate_min.min(v);
            gate_max = gate_max.max(v);
        }
        eps_floor = model.config().asp_eps.sqrt();
        for pooled in [&trace.audio_pool, &trace.visual_pool] {
            let out = g.value(pooled.out).data();
            sd_min = out[out.len() / 2..].iter().fold(sd_min, |m, &v| m.min(v));
        }
    }
    outcome(
        row_err <= 1e-9 && gate_min > 0.0 && gate_max < 1.0 && sd_min >= eps_floor,
        format!(
            "1000 passes, max |row sum - 1| {row_err:.1e}, gate range [{gate_min:.4}, {gate_max:.4}], min ASP std {sd_min:.2e} (floor {eps_floor:.2e})"
        ),
    )
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut averaging = true;
    for n in [2usize, 3, 5] {
        for _ in 0..1000 {
            let len = rng.random_range(1..60);
            let truth: Vec<usize> = (0..len).map(|_| rng.random_range(0..n)).collect();
            let pred: Vec<usize> = (0..len).map(|_| rng.random_range(0..n)).collect();
            let m = compute_metrics(&truth, &pred, n).expect("valid labels");
            let o = common::oracle_metrics(&truth, &pred, n);
            for (a, b) in [
                (m.acc_weighted, o.acc_w),
                (m.acc_unweighted, o.acc_u),
                (m.f1_weighted, o.f1_w),
                (m.f1_unweighted, o.f1_u),
                (m.acc_task, o.acc_task),
                (m.f1_task, o.f1_task),
            ] {
                worst = worst.max((a - b).abs());
            }
            averaging &= m.acc_task == (m.acc_weighted + m.acc_unweighted) / 2.0
                && m.f1_task == (m.f1_weighted + m.f1_unweighted) / 2.0;
        }
    }
    let ex = compute_metrics(&[0, 0, 0, 1], &[0, 0, 0, 0], 2).expect("worked example");
    let example = ex.acc_task == 0.625 && (ex.f1_task - 0.535714).abs() < 5e-7;
    outcome(
        worst <= 1e-12 && example && averaging,
        format!(
            "3000 random sets, max deviation {worst:.1e}; worked example acc_task {} f1_task {:.6}",
            ex.acc_task, ex.f1_task
        ),
    )
}

fn dsp_oracles() -> Outcome {
    const SR: u32 = 16_000;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let fc = FrameConfig::default_for(SR);
    let mc = MelConfig::default_for(SR, fc.frame_len);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let x: Vec<f64> = (0..SR as usize).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = Waveform::new(x, SR).expect("waveform");
        let got = mfcc(&w, &fc, &mc).expect("mfcc");
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
        if got.rows() != want.len() {
            return outcome(false, format!("frame count {} vs reference {}", got.rows(), want.len()));
        }
        for (t, row) in want.iter().enumerate() {
            for (d, &v) in row.iter().enumerate() {
                worst = worst.max((f64::from(got.get(t, d)) - v).abs());
            }
        }
    }
    let rect = FrameConfig::new(400, 160, Window::Rectangular).expect("frame config");
    let frames = |x: Vec<f64>| frame_signal(&Waveform::new(x, SR).expect("waveform"), &rect).expect("frames");
    let silence = frames(vec![0.0; 4000]);
    let alt = frames((0..4000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect());
    let sine = frames((0..SR as usize).map(|i| 0.5 * (2.0 * PI * 440.0 * i as f64 / f64::from(SR)).sin()).collect());
    let all = |m: FeatureMatrix, f: &dyn Fn(f64) -> bool| m.values().iter().all(|&v| f(f64::from(v)));
    let silent = all(short_term_energy(&silence).unwrap(), &|v| v == 0.0)
        && all(zero_crossing_rate(&silence).unwrap(), &|v| v == 0.0);
    let alternating = all(zero_crossing_rate(&alt).unwrap(), &|v| v == 1.0);
    let energy = short_term_energy(&sine).unwrap();
    let sine_dev = energy
        .values()
        .iter()
        .map(|&v| (f64::from(v) - 0.125).abs() / 0.125)
        .fold(0.0, f64::max);
    outcome(
        worst <= 1e-5 && silent && alternating && sine_dev <= 0.01,
        format!(
            "MFCC max abs err {worst:.2e} over 20 waveforms; silence zero {silent}; alternating ZCR 1 {alternating}; sine energy max rel dev {:.3}%",
            100.0 * sine_dev
        ),
    )
}

fn learnability() -> Outcome {
    let start = Instant::now();
    let samples = common::synth_samples(200, Task::Binary, 3.0, 3.0, 0);
    let mut reached = None;
    let cfg = ModelConfig::default();
    train_with(&cfg, &samples, |e| {
        if reached.is_none() && e.train_acc >= 0.95 {
            reached = Some(e.epoch);
        }
    })
    .expect("training runs");
    let secs = start.elapsed().as_secs_f64();

    // Null: no label signal anywhere. Final-epoch validation score, which is
    // free of best-epoch selection.
    let mut finals = Vec::new();
    let mut band = 0.0;
    for seed in 0..5 {
        let data = common::synth_samples(200, Task::Binary, 0.0, 0.0, 100 + seed);
        let cfg = ModelConfig {
            seed,
            epochs: 20,
            ..ModelConfig::default()
        };
        let out = train(&cfg, &data).expect("null training runs");
        band = 3.0 * (0.25 / out.val_idx.len() as f64).sqrt();
        finals.push(out.log.last().expect("epochs > 0").val_acc_task);
    }
    let null_ok = finals.iter().all(|a| (a - 0.5).abs() <= band);
    outcome(
        reached.is_some() && secs < 300.0 && null_ok,
        format!(
            "train acc >= 0.95 at epoch {reached:?} ({secs:.1} s); null val acc_task {finals:.3?} within 0.5 +/- {band:.3}"
        ),
    )
}

fn ablation_direction() -> Outcome {
    let mut wins = 0;
    let mut pairs = Vec::new();
    for seed in 0..5u64 {
        let data = common::synth_samples(200, Task::Binary, 0.5, 1.0, 200 + seed);
        let base = ModelConfig {
            seed,
            epochs: 20,
            ..ModelConfig::default()
        };
        let full = train(&Variant::Full.apply(&base), &data).expect("full model trains");
        let ablated = train(&Variant::NoPtmfim.apply(&base), &data).expect("ablated model trains");
        let (f, a) = (full.best_val.f1_task, ablated.best_val.f1_task);
        if f >= a {
            wins += 1;
        }
        pairs.push(format!("{f:.3}/{a:.3}"));
    }
    outcome(
        wins >= 4,
        format!("full >= w/o PTMFIM in {wins}/5 seeds (val f1_task full/ablated: {})", pairs.join(", ")),
    )
}

fn small(seed: u64, epochs: usize) -> ModelConfig {
    ModelConfig {
        seed,
        epochs,
        ..ModelConfig::default()
    }
}

fn serialization() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut features_ok = true;
    for i in 0..50 {
        let (r, c) = (rng.random_range(1..20), rng.random_range(1..20));
        let v: Vec<f32> = (0..r * c).map(|_| rng.random_range(-1e6f32..1e6)).collect();
        let m = FeatureMatrix::new(r, c, v).expect("matrix");
        let path = dir.path().join(format!("f{i}.mpft"));
        write_feature_file(&m, &path).expect("write");
        let back = read_feature_file(&path).expect("read");
        features_ok &= back.to_bytes() == m.to_bytes() && back == m;
    }
    let samples = common::synth_samples(60, Task::Binary, 1.0, 1.0, 7);
    let out = train(&small(7, 3), &samples).expect("training runs");
    let path = dir.path().join("model.ptmf");
    out.model.save(&path).expect("save");
    let back = Model::load(&path).expect("load");
    let ckpt_ok = encode_checkpoint(back.store()) == std::fs::read(&path).expect("read checkpoint")
        && encode_checkpoint(back.store()) == encode_checkpoint(out.model.store());
    let metrics_ok = evaluate(&back, &samples, Task::Binary).ok() == evaluate(&out.model, &samples, Task::Binary).ok();
    outcome(
        features_ok && ckpt_ok && metrics_ok,
        format!("feature files bitwise {features_ok}; checkpoint bitwise {ckpt_ok}; reloaded metrics identical {metrics_ok}"),
    )
}

fn determinism() -> Outcome {
    let samples = common::synth_samples(80, Task::Binary, 1.0, 1.0, 8);
    let a = train(&small(8, 4), &samples).expect("first run");
    let b = train(&small(8, 4), &samples).expect("second run");
    let logs = serde_json::to_string(&a.log).unwrap() == serde_json::to_string(&b.log).unwrap();
    let ckpt = encode_checkpoint(a.model.store()) == encode_checkpoint(b.model.store());
    outcome(logs && ckpt, format!("epoch logs identical {logs}; checkpoints identical {ckpt}"))
}

fn prompt_fidelity() -> Outcome {
    let level = |s: &str| TraitScore::Level(s.into());
    let profile = PersonalityProfile {
        extraversion: level("extroversion"),
        agreeableness: level("agreeableness"),
        openness: level("openness"),
        neuroticism: level("neuroticism"),
        conscientiousness: level("conscientiousness"),
        age: 50,
        gender: "male".into(),
        origin: "Beijing".into(),
    };
    let prompt = build_prompt(&profile);
    let opens = prompt.starts_with("The patient is a 50 male from Beijing.");
    let lines: Vec<&str> = prompt.lines().collect();
    let instructions = [
        "Please generate a concise, fluent English description summarizing the patient's key personality traits, family environment, and other notable characteristics.",
        "Avoid mentioning depression or related terminology.",
        "Output the response as a single paragraph.",
    ]
    .iter()
    .all(|i| lines.contains(i));
    outcome(
        opens && instructions,
        format!("opening sentence exact {opens}; all instruction sentences present {instructions}"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("gradient integrity", gradient_integrity),
        ("attention and gate invariants", attention_invariants),
        ("metric oracle equivalence", metric_oracle),
        ("dsp oracles", dsp_oracles),
        ("learnability and null", learnability),
        ("ablation direction", ablation_direction),
        ("serialization", serialization),
        ("determinism", determinism),
        ("prompt fidelity", prompt_fidelity),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.pass {
            failures += 1;
        }
        println!("{} {}. {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("{}/{} criteria passed", criteria.len() - failures, criteria.len());
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if failures == 0 || !strict {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
