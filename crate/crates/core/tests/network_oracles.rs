mod common;

use common::{attention, flat, linear, mat, max_abs_diff, Mat};
use ptmf_core::autograd::{Graph, ParamStore};
use ptmf_core::encoders::{asp_pool, lstm_encode, AspParams, LstmParams};
use ptmf_core::fusion::{co_attention_fuse, transformer_fuse, CoAttentionParams, LayerNormParams, TransformerFusionParams};
use ptmf_core::nn::Linear;
use ptmf_core::ptmfim::{binary_correlation_attention, ptmfim_forward, BcaDirection, PtmfimParams};
use ptmf_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-12;

fn lin(s: &ParamStore, l: &Linear, x: &Mat) -> Mat {
    linear(x, s.value(l.weight), l.bias.map(|b| s.value(b)))
}

fn rows(t: &Tensor) -> Mat {
    mat(t)
}

#[test]
fn lstm_matches_loop_cell() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut s = ParamStore::new();
    let p = LstmParams::new(&mut s, "l", 3, 5, &mut rng).unwrap();
    let x = Tensor::uniform(&[7, 3], 2.0, &mut rng);
    let mut g = Graph::new(&s);
    let xn = g.constant(x.clone());
    let h = lstm_encode(&mut g, xn, &p).unwrap();
    let want = common::lstm(&rows(&x), s.value(p.w), s.value(p.u), s.value(p.b));
    assert!(max_abs_diff(g.value(h).data(), &flat(&want)) < TOL);
}

#[test]
fn asp_matches_loop_pooling() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut s = ParamStore::new();
    let p = AspParams::new(&mut s, "a", 4, 3, 1e-5, &mut rng).unwrap();
    let h = Tensor::uniform(&[7, 4], 1.0, &mut rng);
    let mut g = Graph::new(&s);
    let hn = g.constant(h.clone());
    let pooled = asp_pool(&mut g, hn, &p).unwrap();
    let (out, alpha) = common::asp(&rows(&h), s.value(p.w), s.value(p.b), s.value(p.v), 1e-5);
    assert!(max_abs_diff(g.value(pooled.out).data(), &out) < TOL);
    assert!(max_abs_diff(g.value(pooled.weights).data(), &alpha) < TOL);
}

#[test]
fn co_attention_matches_loop_fusion() {
    for sigmoid in [false, true] {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = ParamStore::new();
        let p = CoAttentionParams::new(&mut s, "c", (3, 2, 4), (3, 3, 4), 0.0, sigmoid, &mut rng).unwrap();
        let (l, m, w) = (
            Tensor::uniform(&[4, 3], 1.0, &mut rng),
            Tensor::uniform(&[4, 2], 1.0, &mut rng),
            Tensor::uniform(&[4, 4], 1.0, &mut rng),
        );
        let mut g = Graph::new(&s);
        let (ln, mn, wn) = (g.constant(l.clone()), g.constant(m.clone()), g.constant(w.clone()));
        let out = co_attention_fuse(&mut g, ln, mn, wn, &p).unwrap();

        let relu = |x: f64| x.max(0.0);
        let lt = common::map(&lin(&s, &p.lld, &rows(&l)), relu);
        let mt = common::map(&lin(&s, &p.mfcc, &rows(&m)), relu);
        let wt = common::map(&lin(&s, &p.w2v, &rows(&w)), relu);
        let pm = mat(s.value(p.p));
        let mut want = Vec::new();
        for t in 0..4 {
            let c: Vec<f64> = lt[t].iter().chain(&mt[t]).copied().collect();
            let mut row = Vec::new();
            for j in 0..4 {
                let mut z: f64 = c.iter().enumerate().map(|(i, v)| v * pm[i][j]).sum();
                if sigmoid {
                    z = common::sigmoid(z);
                }
                row.push(z * wt[t][j]);
            }
            row.extend(&lt[t]);
            row.extend(&mt[t]);
            want.push(row);
        }
        assert!(max_abs_diff(g.value(out).data(), &flat(&want)) < TOL);
    }
}

fn layer_norm(x: &Mat, s: &ParamStore, p: &LayerNormParams) -> Mat {
    let (gain, bias) = (s.value(p.gain).data(), s.value(p.bias).data());
    x.iter()
        .map(|r| {
            let n = r.len() as f64;
            let mu = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
            r.iter()
                .enumerate()
                .map(|(j, v)| (v - mu) / (var + 1e-5).sqrt() * gain[j] + bias[j])
                .collect()
        })
        .collect()
}

fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect()).collect()
}

/// Head `h` of a `n_heads`-way split: column block `h` of q, k and v.
fn heads(q: &Mat, k: &Mat, v: &Mat, n_heads: usize) -> Mat {
    let dh = q[0].len() / n_heads;
    let cols = |m: &Mat, h: usize| -> Mat { m.iter().map(|r| r[h * dh..(h + 1) * dh].to_vec()).collect() };
    let mut out = vec![Vec::new(); q.len()];
    for h in 0..n_heads {
        let (o, _) = attention(&cols(q, h), &cols(k, h), &cols(v, h));
        for (row, part) in out.iter_mut().zip(o) {
            row.extend(part);
        }
    }
    out
}

#[test]
fn transformer_matches_loop_encoder() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut s = ParamStore::new();
    let p = TransformerFusionParams::new(&mut s, "t", 5, 3, 8, 2, 2, 12, 0.0, &mut rng).unwrap();
    for layer in &p.layers {
        for ln in [&layer.norm1, &layer.norm2] {
            let v = Tensor::uniform(&[1, 8], 0.5, &mut rng).map(|x| 1.0 + x);
            s.set_value(ln.gain, v).unwrap();
            s.set_value(ln.bias, Tensor::uniform(&[1, 8], 0.3, &mut rng)).unwrap();
        }
    }
    let (ua, uv) = (Tensor::uniform(&[1, 5], 1.0, &mut rng), Tensor::uniform(&[1, 3], 1.0, &mut rng));
    let mut g = Graph::new(&s);
    let (a, v) = (g.constant(ua.clone()), g.constant(uv.clone()));
    let fused = transformer_fuse(&mut g, a, v, &p).unwrap();

    let ta = add(&lin(&s, &p.proj_audio, &rows(&ua)), &rows(s.value(p.m_audio)));
    let tv = add(&lin(&s, &p.proj_visual, &rows(&uv)), &rows(s.value(p.m_visual)));
    let mut x: Mat = vec![ta[0].clone(), tv[0].clone()];
    for layer in &p.layers {
        let h = layer_norm(&x, &s, &layer.norm1);
        let att = heads(&lin(&s, &layer.q, &h), &lin(&s, &layer.k, &h), &lin(&s, &layer.v, &h), 2);
        x = add(&x, &lin(&s, &layer.o, &att));
        let h = layer_norm(&x, &s, &layer.norm2);
        let f = common::map(&lin(&s, &layer.ff1, &h), |v| v.max(0.0));
        x = add(&x, &lin(&s, &layer.ff2, &f));
    }
    assert!(max_abs_diff(g.value(fused.tokens).data(), &flat(&x)) < TOL);
    assert!(max_abs_diff(g.value(fused.f_star).data(), &flat(&x)) < TOL);
}

#[test]
fn transformer_is_equivariant_to_token_swap() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut s = ParamStore::new();
    let p = TransformerFusionParams::new(&mut s, "t", 4, 4, 8, 2, 4, 16, 0.0, &mut rng).unwrap();
    s.set_value(p.proj_visual.weight, s.value(p.proj_audio.weight).clone()).unwrap();
    s.set_value(p.proj_visual.bias.unwrap(), s.value(p.proj_audio.bias.unwrap()).clone()).unwrap();
    s.set_value(p.m_audio, Tensor::zeros(&[1, 8])).unwrap();
    s.set_value(p.m_visual, Tensor::zeros(&[1, 8])).unwrap();
    let (x, y) = (Tensor::uniform(&[1, 4], 1.0, &mut rng), Tensor::uniform(&[1, 4], 1.0, &mut rng));
    let mut g = Graph::new(&s);
    let (xn, yn) = (g.constant(x), g.constant(y));
    let fwd = transformer_fuse(&mut g, xn, yn, &p).unwrap();
    let rev = transformer_fuse(&mut g, yn, xn, &p).unwrap();
    assert!(max_abs_diff(g.value(fwd.audio_token).data(), g.value(rev.visual_token).data()) < TOL);
    assert!(max_abs_diff(g.value(fwd.visual_token).data(), g.value(rev.audio_token).data()) < TOL);
}

#[test]
fn ptmfim_matches_loop_module() {
    for (n_heads, direction) in [
        (1, BcaDirection::PersonalityQueries),
        (2, BcaDirection::PersonalityQueries),
        (1, BcaDirection::MultimodalQueries),
    ] {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut s = ParamStore::new();
        let p = PtmfimParams::new(&mut s, "p", 6, 5, 4, 3, n_heads, direction, &mut rng).unwrap();
        let (e, tok) = (Tensor::uniform(&[1, 6], 2.0, &mut rng), Tensor::uniform(&[2, 5], 2.0, &mut rng));
        let mut g = Graph::new(&s);
        let (en, tn) = (g.constant(e.clone()), g.constant(tok.clone()));
        let out = ptmfim_forward(&mut g, en, tn, &p).unwrap();

        let flat_p = lin(&s, &p.personality, &rows(&e));
        let p_tok: Mat = flat_p[0].chunks(4).map(<[f64]>::to_vec).collect();
        let m_tok = lin(&s, &p.multimodal, &rows(&tok));
        let (qs, kvs) = match direction {
            BcaDirection::PersonalityQueries => (&p_tok, &m_tok),
            BcaDirection::MultimodalQueries => (&m_tok, &p_tok),
        };
        let b = heads(&lin(&s, &p.bca.q, qs), &lin(&s, &p.bca.k, kvs), &lin(&s, &p.bca.v, kvs), n_heads);
        let t = heads(&lin(&s, &p.tia.q, &p_tok), &lin(&s, &p.tia.k, &b), &lin(&s, &p.tia.v, &b), n_heads);
        let (b_bar, t_bar, p_bar) = (common::mean_rows(&b), common::mean_rows(&t), common::mean_rows(&p_tok));
        let z = lin(&s, &p.gate, &vec![[b_bar, t_bar.clone()].concat()]);
        let gate: Vec<f64> = z[0].iter().map(|&v| common::sigmoid(v)).collect();
        let want: Vec<f64> = (0..4).map(|j| gate[j] * t_bar[j] + p_bar[j]).collect();

        assert!(max_abs_diff(g.value(out.bca).data(), &flat(&b)) < TOL);
        assert!(max_abs_diff(g.value(out.tia).data(), &flat(&t)) < TOL);
        assert!(max_abs_diff(g.value(out.gate).data(), &gate) < TOL);
        assert!(max_abs_diff(g.value(out.out).data(), &want) < TOL, "{direction:?} heads {n_heads}");
    }
}

#[test]
fn bca_rows_lie_in_the_hull_of_the_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut s = ParamStore::new();
    let p = PtmfimParams::new(&mut s, "p", 6, 5, 8, 4, 2, BcaDirection::PersonalityQueries, &mut rng).unwrap();
    for _ in 0..20 {
        let (pt, mt) = (Tensor::uniform(&[4, 8], 3.0, &mut rng), Tensor::uniform(&[2, 8], 3.0, &mut rng));
        let mut g = Graph::new(&s);
        let (pn, mn) = (g.constant(pt), g.constant(mt.clone()));
        let b = binary_correlation_attention(&mut g, pn, mn, &p).unwrap();
        let v = lin(&s, &p.bca.v, &rows(&mt));
        let out = g.value(b.out);
        for r in 0..out.rows() {
            for c in 0..out.cols() {
                let lo = v.iter().map(|row| row[c]).fold(f64::INFINITY, f64::min);
                let hi = v.iter().map(|row| row[c]).fold(f64::NEG_INFINITY, f64::max);
                let x = out.at(r, c);
                assert!(x >= lo - 1e-12 && x <= hi + 1e-12);
            }
        }
    }
}
