use proptest::prelude::*;
use sthsl_core::config::{Ablation, LossWeights, ModelConfig};
use sthsl_core::data::{synth, window_at, GridSpec, Sample, SynthConfig};
use sthsl_core::encoder_local::{embed, spatial_encode, temporal_encode};
use sthsl_core::head::{predict, squared_error, Mode, Model};
use sthsl_core::hypergraph::{global_temporal, hyper_propagate, hyperedge_relevance};
use sthsl_core::params::{self, ModelParams, ModelShape, ParamVars};
use sthsl_core::{DenseArray, Rng, Tape};

fn random(rng: &mut Rng, shape: &[usize]) -> DenseArray {
    let mut a = DenseArray::zeros(shape);
    a.data_mut()
        .iter_mut()
        .for_each(|v| *v = rng.uniform_range(-1.0, 1.0));
    a
}

fn leaky(v: f64) -> f64 {
    if v >= 0.0 {
        v
    } else {
        0.01 * v
    }
}

fn small_setup(
    rows: usize,
    cols: usize,
    c: usize,
    t: usize,
    d: usize,
) -> (ModelConfig, ModelShape, ModelParams) {
    let cfg = ModelConfig {
        hidden_dim: d,
        hyperedges: 3,
        ..ModelConfig::default()
    };
    let shape = ModelShape {
        rows,
        cols,
        categories: c,
        window: t,
    };
    let mut p = ModelParams::init(&cfg, shape, 4);
    let mut rng = Rng::new(99);
    for (name, v) in p.iter_mut() {
        if name.ends_with(".bias") {
            v.data_mut()
                .iter_mut()
                .for_each(|x| *x = rng.uniform_range(-0.3, 0.3));
        }
    }
    (cfg, shape, p)
}

#[test]
fn hyper_propagate_matches_loop_oracle() {
    let mut rng = Rng::new(3);
    let (n, h, d) = (6, 4, 3);
    let e = random(&mut rng, &[n, d]);
    let inc = random(&mut rng, &[h, n]);
    let mut tape = Tape::new();
    let (ev, iv) = (tape.constant(e.clone()), tape.constant(inc.clone()));
    let out = hyper_propagate(&mut tape, ev, iv, 0.01).unwrap();
    let mut hub = vec![0.0; h * d];
    for k in 0..h {
        for j in 0..d {
            hub[k * d + j] = leaky((0..n).map(|i| inc.get(&[k, i]) * e.get(&[i, j])).sum());
        }
    }
    for i in 0..n {
        for j in 0..d {
            let want = leaky((0..h).map(|k| inc.get(&[k, i]) * hub[k * d + j]).sum());
            assert!((tape.value(out).get(&[i, j]) - want).abs() < 1e-12);
        }
    }
}

#[test]
fn hyper_propagate_rank_is_bounded_by_hyperedges() {
    // nonnegative everything keeps LeakyReLU linear
    let mut rng = Rng::new(6);
    let e = random(&mut rng, &[6, 6]).map(f64::abs);
    let inc = random(&mut rng, &[2, 6]).map(f64::abs);
    let mut tape = Tape::new();
    let (ev, iv) = (tape.constant(e), tape.constant(inc));
    let out = hyper_propagate(&mut tape, ev, iv, 0.01).unwrap();
    let out = tape.value(out).clone();
    // every 3x3 minor vanishes when rank <= 2
    let m = |i: usize, j: usize| out.get(&[i, j]);
    for (a, b, c) in [(0, 1, 2), (1, 3, 5), (0, 4, 5)] {
        let det = m(a, 0) * (m(b, 1) * m(c, 2) - m(b, 2) * m(c, 1))
            - m(a, 1) * (m(b, 0) * m(c, 2) - m(b, 2) * m(c, 0))
            + m(a, 2) * (m(b, 0) * m(c, 1) - m(b, 1) * m(c, 0));
        assert!(det.abs() < 1e-12, "{det}");
    }
}

#[test]
fn relevance_matches_sort_oracle() {
    let mut rng = Rng::new(10);
    let shape = ModelShape {
        rows: 2,
        cols: 3,
        categories: 2,
        window: 2,
    };
    let inc = random(&mut rng, &[2, 5, 12]);
    for t in 0..2 {
        for e in 0..5 {
            let got = hyperedge_relevance(&inc, shape, t, e).unwrap();
            let mut want: Vec<(usize, f64)> =
                (0..12).map(|i| (i, inc.get(&[t, e, i]).abs())).collect();
            want.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            let got: Vec<(usize, f64)> = got.iter().map(|r| (r.flat, r.score)).collect();
            assert_eq!(got, want);
        }
    }
}

/// Convolves each (r,c) series with `kernel`, zero padded.
fn conv_series(x: &[f64], kernel: &[f64], bias: f64) -> Vec<f64> {
    let pad = kernel.len() / 2;
    (0..x.len())
        .map(|t| {
            bias + kernel
                .iter()
                .enumerate()
                .filter_map(|(a, k)| {
                    (t + a)
                        .checked_sub(pad)
                        .filter(|&s| s < x.len())
                        .map(|s| k * x[s])
                })
                .sum::<f64>()
        })
        .collect()
}

#[test]
fn global_temporal_matches_oracle_and_special_kernels() {
    let (cfg, _, mut p) = small_setup(2, 2, 2, 5, 3);
    let mut rng = Rng::new(12);
    let g = random(&mut rng, &[4, 5, 2, 3]);
    let mut mode = Mode::eval(0);

    let mut tape = Tape::new();
    let pv = ParamVars::attach(&mut tape, &p);
    let gv = tape.constant(g.clone());
    let out = global_temporal(&mut tape, gv, &pv, cfg.global_layers, 0.01, &mut mode).unwrap();
    for r in 0..4 {
        for c in 0..2 {
            for j in 0..3 {
                let mut s: Vec<f64> = (0..5).map(|t| g.get(&[r, t, c, j])).collect();
                for l in 0..cfg.global_layers {
                    let k = p.get(&params::global_kernel(l)).unwrap().data().to_vec();
                    let b = p.get(&params::global_bias(l)).unwrap().data()[j];
                    s = conv_series(&s, &k, b).into_iter().map(leaky).collect();
                }
                for t in 0..5 {
                    assert!((tape.value(out).get(&[r, t, c, j]) - s[t]).abs() < 1e-12);
                }
            }
        }
    }

    for l in 0..cfg.global_layers {
        *p.get_mut(&params::global_kernel(l)).unwrap() =
            DenseArray::new(&[3, 1], vec![0.0, 1.0, 0.0]).unwrap();
        *p.get_mut(&params::global_bias(l)).unwrap() = DenseArray::zeros(&[3]);
    }
    let mut tape = Tape::new();
    let pv = ParamVars::attach(&mut tape, &p);
    let pos = g.map(f64::abs);
    let gv = tape.constant(pos.clone());
    let out = global_temporal(&mut tape, gv, &pv, cfg.global_layers, 0.01, &mut mode).unwrap();
    assert_eq!(tape.value(out), &pos);

    for l in 0..cfg.global_layers {
        *p.get_mut(&params::global_kernel(l)).unwrap() = DenseArray::zeros(&[3, 1]);
    }
    let mut tape = Tape::new();
    let pv = ParamVars::attach(&mut tape, &p);
    let gv = tape.constant(g);
    let out = global_temporal(&mut tape, gv, &pv, cfg.global_layers, 0.01, &mut mode).unwrap();
    assert!(tape.value(out).data().iter().all(|&v| v == 0.0));
}

#[test]
fn local_encoders_match_direct_summation() {
    let (rows, cols, c_n, t_n, d) = (2, 3, 2, 4, 2);
    let (cfg, shape, p) = small_setup(rows, cols, c_n, t_n, d);
    let mut rng = Rng::new(2);
    let r_n = rows * cols;
    let e = random(&mut rng, &[r_n, t_n, c_n, d]);
    let mut tape = Tape::new();
    let pv = ParamVars::attach(&mut tape, &p);
    let ev = tape.constant(e.clone());
    let mut mode = Mode::eval(0);
    let hs = spatial_encode(&mut tape, ev, &pv, shape, cfg.local_layers, 0.01, &mut mode).unwrap();
    let ht = temporal_encode(&mut tape, hs, &pv, cfg.local_layers, 0.01, &mut mode).unwrap();

    let mut cur = e.clone();
    for l in 0..cfg.local_layers {
        let mut next = DenseArray::zeros(cur.shape());
        for t in 0..t_n {
            for c in 0..c_n {
                let k = p.get(&params::spatial_kernel(l, c)).unwrap();
                let b = p.get(&params::spatial_bias(l, c)).unwrap();
                for i in 0..rows {
                    for j in 0..cols {
                        for z in 0..d {
                            let mut acc = b.data()[z];
                            for a in 0..3 {
                                for bb in 0..3 {
                                    let (si, sj) =
                                        (i as isize + a as isize - 1, j as isize + bb as isize - 1);
                                    if si < 0
                                        || sj < 0
                                        || si >= rows as isize
                                        || sj >= cols as isize
                                    {
                                        continue;
                                    }
                                    for ci in 0..c_n {
                                        let src = si as usize * cols + sj as usize;
                                        acc += k.get(&[a, bb, ci]) * cur.get(&[src, t, ci, z]);
                                    }
                                }
                            }
                            let r = i * cols + j;
                            next.set(&[r, t, c, z], leaky(acc + cur.get(&[r, t, c, z])));
                        }
                    }
                }
            }
        }
        cur = next;
    }
    assert!(tape.value(hs).max_abs_diff(&cur) < 1e-12);

    for l in 0..cfg.local_layers {
        let mut next = DenseArray::zeros(cur.shape());
        for r in 0..r_n {
            for c in 0..c_n {
                let k = p.get(&params::temporal_kernel(l, c)).unwrap();
                let b = p.get(&params::temporal_bias(l, c)).unwrap();
                for t in 0..t_n {
                    for z in 0..d {
                        let mut acc = b.data()[z];
                        for a in 0..3 {
                            let Some(s) = (t + a).checked_sub(1).filter(|&s| s < t_n) else {
                                continue;
                            };
                            for ci in 0..c_n {
                                acc += k.get(&[a, ci]) * cur.get(&[r, s, ci, z]);
                            }
                        }
                        next.set(&[r, t, c, z], leaky(acc + cur.get(&[r, t, c, z])));
                    }
                }
            }
        }
        cur = next;
    }
    assert!(tape.value(ht).max_abs_diff(&cur) < 1e-12);
}

#[test]
fn embed_matches_loop_and_is_linear() {
    let mut rng = Rng::new(1);
    let w = random(&mut rng, &[3, 4, 2]).map(|v| 5.0 * v.abs());
    let emb = random(&mut rng, &[2, 3]);
    let (mu, sigma) = (1.7, 0.8);
    let mut tape = Tape::new();
    let ev = tape.constant(emb.clone());
    let out = embed(&mut tape, &w, mu, sigma, ev).unwrap();
    for r in 0..3 {
        for t in 0..4 {
            for c in 0..2 {
                for j in 0..3 {
                    let want = (w.get(&[r, t, c]) - mu) / sigma * emb.get(&[c, j]);
                    assert!((tape.value(out).get(&[r, t, c, j]) - want).abs() < 1e-12);
                }
            }
        }
    }
    let doubled = w.map(|x| mu + 2.0 * (x - mu));
    let out2 = embed(&mut tape, &doubled, mu, sigma, ev).unwrap();
    let twice = tape.value(out).map(|v| 2.0 * v);
    assert!(tape.value(out2).max_abs_diff(&twice) < 1e-12);
}

#[test]
fn predict_matches_loop_oracle() {
    let mut rng = Rng::new(17);
    let g = random(&mut rng, &[3, 4, 2, 5]);
    let w = random(&mut rng, &[5]);
    let mut tape = Tape::new();
    let (gv, wv) = (tape.constant(g.clone()), tape.constant(w.clone()));
    let p = predict(&mut tape, gv, wv).unwrap();
    for r in 0..3 {
        for c in 0..2 {
            let want: f64 = (0..4)
                .map(|t| {
                    (0..5)
                        .map(|j| w.data()[j] * g.get(&[r, t, c, j]))
                        .sum::<f64>()
                })
                .sum::<f64>()
                / 4.0;
            assert!((tape.value(p).get(&[r, c]) - want).abs() < 1e-12);
        }
    }
}

fn tiny_batch(ablation: Ablation) -> (Model, ModelParams, Vec<Sample>) {
    let grid = GridSpec::unit(2, 2);
    let data = synth(&SynthConfig::new(grid, 2, 16, 1.0, 2, 3))
        .unwrap()
        .tensor;
    let (mut cfg, shape, p) = small_setup(2, 2, 2, 4, 3);
    cfg.ablation = ablation;
    let samples = (4..7).map(|t| window_at(&data, t, 4).unwrap()).collect();
    (Model::new(cfg, shape, data.mu, data.sigma), p, samples)
}

#[test]
fn loss_decomposition_and_weight_zeroing() {
    let (model, p, samples) = tiny_batch(Ablation::Full);
    let batch: Vec<&Sample> = samples.iter().collect();
    let w = LossWeights {
        lambda1: 0.3,
        lambda2: 0.7,
        lambda3: 0.05,
    };
    let fwd = model
        .forward_full(&p, &batch, w, &mut Mode::eval(1))
        .unwrap();
    let c = fwd.components;
    assert!(c.infomax > 0.0 && c.contrastive > 0.0);
    assert!((c.weighted(w).iter().sum::<f64>() - c.total).abs() < 1e-12);

    let fwd = model
        .forward_full(&p, &batch, LossWeights::ZERO, &mut Mode::eval(1))
        .unwrap();
    let mut sse = 0.0;
    for (s, &pred) in samples.iter().zip(&fwd.predictions) {
        sse += fwd
            .tape
            .value(pred)
            .zip_map(&s.target, |a, b| (a - b) * (a - b))
            .sum();
    }
    assert!((fwd.components.total - sse / 3.0).abs() < 1e-10);
}

#[test]
fn joint_loss_matches_scalar_oracle() {
    let mut rng = Rng::new(8);
    let pred = random(&mut rng, &[4, 3]);
    let target = random(&mut rng, &[4, 3]);
    let mut tape = Tape::new();
    let (pv, tv) = (tape.constant(pred.clone()), tape.constant(target.clone()));
    let sup = squared_error(&mut tape, pv, tv).unwrap();
    let i = tape.constant(DenseArray::scalar(1.3));
    let c = tape.constant(DenseArray::scalar(0.4));
    let reg = tape.constant(DenseArray::scalar(25.0));
    let w = LossWeights {
        lambda1: 0.1,
        lambda2: 0.2,
        lambda3: 0.01,
    };
    let l = sthsl_core::head::joint_loss(&mut tape, sup, Some(i), Some(c), reg, w).unwrap();
    let sse: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let want = sse + 0.1 * 1.3 + 0.2 * 0.4 + 0.01 * 25.0;
    assert!((tape.value(l).item() - want).abs() < 1e-10);
}

#[test]
fn without_hypergraph_the_incidence_is_inert() {
    let (model, p, samples) = tiny_batch(Ablation::NoHyper);
    let batch: Vec<&Sample> = samples.iter().collect();
    let w = LossWeights::default();
    let mut fwd = model
        .forward_full(&p, &batch, w, &mut Mode::eval(1))
        .unwrap();
    fwd.tape.backward(fwd.loss).unwrap();
    let grads = fwd.params.gradients(&fwd.tape);
    // only the weight-decay term touches it
    let inc = p.get(params::INCIDENCE).unwrap();
    let decay = inc.map(|v| 2.0 * w.lambda3 * v);
    assert!(grads[params::INCIDENCE].max_abs_diff(&decay) < 1e-15);

    let mut moved = p.clone();
    moved
        .get_mut(params::INCIDENCE)
        .unwrap()
        .data_mut()
        .iter_mut()
        .for_each(|v| *v *= -3.0);
    let a = model.predict_window(&p, &samples[0].input).unwrap();
    let b = model.predict_window(&moved, &samples[0].input).unwrap();
    assert_eq!(a, b);
}

#[test]
fn eval_forward_is_deterministic() {
    for ablation in Ablation::ALL {
        let (model, p, samples) = tiny_batch(ablation);
        let batch: Vec<&Sample> = samples.iter().collect();
        let a = model
            .forward_full(&p, &batch, LossWeights::default(), &mut Mode::eval(3))
            .unwrap();
        let b = model
            .forward_full(&p, &batch, LossWeights::default(), &mut Mode::eval(3))
            .unwrap();
        assert_eq!(a.components, b.components, "{ablation}");
        assert!(a.components.total.is_finite());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn hyper_propagate_is_jointly_equivariant(seed in any::<u64>()) {
        // dyadic entries keep the permuted sums exact
        let mut rng = Rng::new(seed);
        let (n, h, d) = (8, 5, 3);
        let dyadic = |rng: &mut Rng, shape: &[usize]| {
            let mut a = DenseArray::zeros(shape);
            a.data_mut().iter_mut().for_each(|v| *v = (rng.below(33) as f64 - 16.0) / 8.0);
            a
        };
        let e = dyadic(&mut rng, &[n, d]);
        let inc = dyadic(&mut rng, &[h, n]);
        let perm = rng.permutation(n);
        let mut tape = Tape::new();
        let (ev, iv) = (tape.constant(e), tape.constant(inc));
        let base = hyper_propagate(&mut tape, ev, iv, 0.01).unwrap();
        let pe = tape.gather_rows(ev, &perm).unwrap();
        let it = tape.transpose(iv).unwrap();
        let pit = tape.gather_rows(it, &perm).unwrap();
        let pi = tape.transpose(pit).unwrap();
        let permuted = hyper_propagate(&mut tape, pe, pi, 0.01).unwrap();
        let expect = tape.gather_rows(base, &perm).unwrap();
        prop_assert_eq!(tape.value(permuted), tape.value(expect));
    }

    #[test]
    fn spatial_encoder_is_local(cell in 0usize..20, seed in any::<u64>()) {
        let (rows, cols) = (4, 5);
        let (cfg, shape, p) = small_setup(rows, cols, 1, 2, 2);
        let mut rng = Rng::new(seed);
        let e = random(&mut rng, &[20, 2, 1, 2]);
        let mut bumped = e.clone();
        for t in 0..2 {
            bumped.set(&[cell, t, 0, 0], e.get(&[cell, t, 0, 0]) + 1.0);
        }
        let mut tape = Tape::new();
        let pv = ParamVars::attach(&mut tape, &p);
        let mut mode = Mode::eval(0);
        let (a, b) = (tape.constant(e), tape.constant(bumped));
        let ha = spatial_encode(&mut tape, a, &pv, shape, cfg.local_layers, 0.01, &mut mode).unwrap();
        let hb = spatial_encode(&mut tape, b, &pv, shape, cfg.local_layers, 0.01, &mut mode).unwrap();
        let radius = cfg.local_layers; // (3 - 1) / 2 cells per layer
        let (ci, cj) = ((cell / cols) as isize, (cell % cols) as isize);
        for r in 0..20 {
            let (i, j) = ((r / cols) as isize, (r % cols) as isize);
            let far = (i - ci).abs().max((j - cj).abs()) > radius as isize;
            for t in 0..2 {
                for z in 0..2 {
                    if far {
                        prop_assert_eq!(tape.value(ha).get(&[r, t, 0, z]), tape.value(hb).get(&[r, t, 0, z]));
                    }
                }
            }
        }
    }
}
