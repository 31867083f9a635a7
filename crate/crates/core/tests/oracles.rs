//! Library results compared against independent straightforward
//! re-implementations.

use csi2video::csi::{cfr_amplitude, extract_amplitudes, ComplexCfr, CsiDims, CsiSequence};
use csi2video::metrics::{mse_frames, pcs, ssim};
use csi2video::sanitizer::{condense, hampel_filter, sanitize, HampelConfig};
use csi2video::synthetic::{body_path, pose_cfr, pose_trajectory, ClipKind, SceneConfig, VideoClip};
use csi2video::tensor::{lstm_step, BatchNormState, BnMode, Graph, LstmParams, Tensor};
use csi2video::training::{student_losses, teacher_losses, LossWeights};
use rand::{Rng, SeedableRng};

mod common;
use common::{hampel_oracle, reference_ssim};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand_tensor(r: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| r.random_range(-1.0..1.0))
}

/// Direct nested-sum 3-D convolution over a batched `(N, M, T, H, W)` input.
fn naive_conv3d(x: &Tensor, w: &Tensor, b: &[f64], s: [usize; 3]) -> (Vec<usize>, Vec<f64>) {
    let xs = x.shape();
    let ws = w.shape();
    let (n, m, d) = (xs[0], xs[1], [xs[2], xs[3], xs[4]]);
    let (j, k) = (ws[0], [ws[2], ws[3], ws[4]]);
    let o: Vec<usize> = (0..3).map(|a| (d[a] - k[a]) / s[a] + 1).collect();
    let mut out = Vec::new();
    for bn in 0..n {
        for oj in 0..j {
            for z in 0..o[0] {
                for y in 0..o[1] {
                    for xx in 0..o[2] {
                        let mut acc = b[oj];
                        for im in 0..m {
                            for t in 0..k[0] {
                                for h in 0..k[1] {
                                    for ww in 0..k[2] {
                                        let wi = (((oj * m + im) * k[0] + t) * k[1] + h) * k[2] + ww;
                                        let xi = (((bn * m + im) * d[0] + z * s[0] + t) * d[1] + y * s[1] + h) * d[2]
                                            + xx * s[2]
                                            + ww;
                                        acc += w.data()[wi] * x.data()[xi];
                                    }
                                }
                            }
                        }
                        out.push(acc);
                    }
                }
            }
        }
    }
    (vec![n, j, o[0], o[1], o[2]], out)
}

#[test]
fn conv3d_matches_nested_sum() {
    let mut r = rng(1);
    for (xs, ws, s) in [
        ([2, 2, 4, 5, 6], [3, 2, 2, 3, 2], [1, 2, 2]),
        ([1, 3, 6, 6, 6], [2, 3, 4, 4, 4], [2, 2, 2]),
        ([1, 1, 3, 3, 3], [1, 1, 3, 3, 3], [1, 1, 1]),
    ] {
        let x = rand_tensor(&mut r, &xs);
        let w = rand_tensor(&mut r, &ws);
        let b: Vec<f64> = (0..ws[0]).map(|_| r.random_range(-1.0..1.0)).collect();
        let (shape, expect) = naive_conv3d(&x, &w, &b, s);
        let mut g = Graph::new();
        let (xv, wv) = (g.constant(x), g.constant(w));
        let bv = g.constant(Tensor::new([b.len()], b).unwrap());
        let y = g.conv3d(xv, wv, Some(bv), s).unwrap();
        assert_eq!(g.value(y).shape(), &shape[..]);
        for (a, e) in g.value(y).data().iter().zip(&expect) {
            assert!((a - e).abs() < 1e-10, "{a} vs {e}");
        }
    }
}

#[test]
fn conv3d_closed_forms() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::from_fn([1, 1, 2, 3, 4], |i| i as f64));
    let one = g.constant(Tensor::full([1, 1, 1, 1, 1], 1.0));
    let y = g.conv3d(x, one, None, [1, 1, 1]).unwrap();
    assert_eq!(g.value(y), g.value(x));

    let c = 0.7;
    let bias = -0.3;
    let x = g.constant(Tensor::full([1, 1, 3, 4, 5], c));
    let k = g.constant(Tensor::full([1, 1, 2, 2, 2], 1.0));
    let b = g.constant(Tensor::new([1], vec![bias]).unwrap());
    let y = g.conv3d(x, k, Some(b), [1, 1, 1]).unwrap();
    assert_eq!(g.value(y).shape(), &[1, 1, 2, 3, 4]);
    assert!(g.value(y).data().iter().all(|v| (v - (8.0 * c + bias)).abs() < 1e-12));
}

#[test]
fn conv3d_transposed_is_the_adjoint() {
    let mut r = rng(2);
    for (xs, ws, s) in [
        ([2, 2, 4, 5, 6], [3, 2, 2, 3, 2], [1, 2, 2]),
        ([1, 2, 6, 6, 8], [4, 2, 4, 4, 4], [2, 2, 2]),
    ] {
        let x = rand_tensor(&mut r, &xs);
        let w = rand_tensor(&mut r, &ws);
        let mut g = Graph::new();
        let (xv, wv) = (g.constant(x.clone()), g.constant(w));
        let cx = g.conv3d(xv, wv, None, s).unwrap();
        let y = rand_tensor(&mut r, g.value(cx).shape());
        let yv = g.constant(y.clone());
        let ty = g.conv3d_transposed(yv, wv, None, s).unwrap();
        assert_eq!(g.value(ty).shape(), x.shape());
        let lhs = g.value(cx).dot(&y);
        let rhs = x.dot(g.value(ty));
        assert!((lhs - rhs).abs() < 1e-8, "{lhs} vs {rhs}");
    }
}

#[test]
fn conv3d_transposed_shapes_and_identity() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::from_fn([1, 1, 2, 3, 4], |i| i as f64 - 3.0));
    let one = g.constant(Tensor::full([1, 1, 1, 1, 1], 1.0));
    let y = g.conv3d_transposed(x, one, None, [1, 1, 1]).unwrap();
    assert_eq!(g.value(y), g.value(x));
    let z = g.constant(Tensor::zeros([1, 2, 3, 6, 8]));
    let k = g.constant(Tensor::zeros([2, 1, 4, 4, 4]));
    let up = g.conv3d_transposed(z, k, None, [2, 2, 2]).unwrap();
    assert_eq!(g.value(up).shape(), &[1, 1, 8, 14, 18]);
}

#[test]
fn batch_norm_modes() {
    let mut r = rng(3);
    let x = Tensor::from_fn([3, 2, 2, 3, 3], |_| r.random_range(-2.0..5.0));
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let gamma = g.constant(Tensor::full([2], 1.0));
    let beta = g.constant(Tensor::zeros([2]));
    let mut st = BatchNormState::new(2, 0.1, 1e-5);
    let y = g.batch_norm(xv, gamma, beta, &mut st, BnMode::Train).unwrap();
    let per = 2 * 3 * 3;
    for c in 0..2 {
        let vals: Vec<f64> = (0..3)
            .flat_map(|n| g.value(y).data()[(n * 2 + c) * per..(n * 2 + c + 1) * per].to_vec())
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!(mean.abs() < 1e-6 && (var - 1.0).abs() < 1e-4, "{mean} {var}");
    }

    let flat = g.constant(Tensor::full([2, 1, 1, 2, 2], 4.0));
    let g1 = g.constant(Tensor::full([1], 2.0));
    let b1 = g.constant(Tensor::full([1], 0.25));
    let mut st1 = BatchNormState::new(1, 0.1, 1e-5);
    let y = g.batch_norm(flat, g1, b1, &mut st1, BnMode::Train).unwrap();
    assert!(g.value(y).data().iter().all(|v| (v - 0.25).abs() < 1e-9));

    let mut ev = BatchNormState::new(2, 0.1, 1e-5);
    ev.running_mean = vec![0.5, -1.0];
    ev.running_var = vec![2.0, 0.25];
    let before = ev.clone();
    let gm = g.constant(Tensor::new([2], vec![1.5, -0.5]).unwrap());
    let bt = g.constant(Tensor::new([2], vec![0.1, 0.2]).unwrap());
    let y = g.batch_norm(xv, gm, bt, &mut ev, BnMode::Eval).unwrap();
    assert_eq!(ev, before);
    let (gmv, btv) = ([1.5, -0.5], [0.1, 0.2]);
    for (i, (&o, &xi)) in g.value(y).data().iter().zip(x.data()).enumerate() {
        let c = (i / per) % 2;
        let e = (xi - ev.running_mean[c]) / (ev.running_var[c] + 1e-5).sqrt() * gmv[c] + btv[c];
        assert!((o - e).abs() < 1e-12);
    }
}

#[test]
fn activation_examples() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::new([2], vec![-1.0, 0.0]).unwrap());
    let l = g.leaky_relu(x, 0.2);
    assert_eq!(g.value(l).data()[0], -0.2);
    let s = g.sigmoid(x);
    assert_eq!(g.value(s).data()[1], 0.5);
    let mut r = rng(4);
    let big = g.constant(Tensor::from_fn([200], |_| r.random_range(-30.0..30.0)));
    let t = g.tanh(big);
    assert!(g.value(t).data().iter().all(|v| v.abs() <= 1.0));
    let mid = g.constant(Tensor::from_fn([200], |_| r.random_range(-5.0..5.0)));
    let t = g.tanh(mid);
    assert!(g.value(t).data().iter().all(|v| v.abs() < 1.0));
}

#[test]
fn backward_examples() {
    let mut g = Graph::new();
    let x = g.param(Tensor::new([3], vec![1.0, -2.0, 0.5]).unwrap());
    let sq = g.mul(x, x).unwrap();
    let loss = g.sum(sq);
    g.backward(loss).unwrap();
    assert_eq!(g.grad_data(x).unwrap(), &[2.0, -4.0, 1.0]);

    let mut g = Graph::new();
    let x = g.param(Tensor::scalar(3.0));
    let y = g.add(x, x).unwrap();
    g.backward(y).unwrap();
    assert_eq!(g.grad_data(x).unwrap(), &[2.0]);

    let mut g = Graph::new();
    let x = g.param(Tensor::zeros([2]));
    assert!(g.backward(x).is_err());
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

#[test]
fn lstm_step_matches_scalar_loop() {
    let mut r = rng(5);
    let (n, k, d) = (2, 3, 4);
    let mut p = LstmParams::zeros(k, d);
    for t in p.input.iter_mut().chain(p.recurrent.iter_mut()).chain(p.peephole.iter_mut()).chain(p.bias.iter_mut()) {
        *t = rand_tensor(&mut r, t.shape());
    }
    let a = rand_tensor(&mut r, &[n, k]);
    let h0 = rand_tensor(&mut r, &[n, d]);
    let c0 = rand_tensor(&mut r, &[n, d]);

    let mut g = Graph::new();
    let vars = p.to_graph(&mut g, false);
    let (av, hv, cv) = (g.constant(a.clone()), g.constant(h0.clone()), g.constant(c0.clone()));
    let (h, c) = lstm_step(&mut g, av, hv, cv, &vars).unwrap();

    for s in 0..n {
        for u in 0..d {
            let pre = |gate: usize| {
                let mut v = p.bias[gate].data()[u];
                for i in 0..k {
                    v += a.data()[s * k + i] * p.input[gate].data()[i * d + u];
                }
                for i in 0..d {
                    v += h0.data()[s * d + i] * p.recurrent[gate].data()[i * d + u];
                }
                if gate < 3 {
                    v += p.peephole[gate].data()[u] * c0.data()[s * d + u];
                }
                v
            };
            let (ig, fg, og, cand) = (sigmoid(pre(0)), sigmoid(pre(1)), sigmoid(pre(2)), pre(3).tanh());
            let c_new = fg * c0.data()[s * d + u] + ig * cand;
            let h_new = og * c_new.tanh();
            assert!((g.value(c).data()[s * d + u] - c_new).abs() < 1e-12);
            assert!((g.value(h).data()[s * d + u] - h_new).abs() < 1e-12);
        }
    }
}

#[test]
fn losses_match_scalar_formulas() {
    let mut r = rng(6);
    let w = LossWeights::default();
    let f = rand_tensor(&mut r, &[2, 1, 2, 3, 3]);
    let y = rand_tensor(&mut r, &[2, 1, 2, 3, 3]);
    let cr = [0.3, 0.8];
    let cf = [0.6, 0.1];
    let t = teacher_losses(&f, &y, &cr, &cf, &w).unwrap();
    let l_c = -(0..2).map(|i| cr[i].ln() + (1.0 - cf[i]).ln()).sum::<f64>() / 2.0;
    let l_g = -(0..2).map(|i| cf[i].ln()).sum::<f64>() / 2.0;
    let mse = f.data().iter().zip(y.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / f.len() as f64;
    assert!((t.l_adv_c - l_c).abs() < 1e-12);
    assert!((t.l_adv_g - l_g).abs() < 1e-12);
    assert!((t.mse_y - mse).abs() < 1e-12);
    assert!((t.l_teacher - (w.w_adv * l_g + w.w_y * mse)).abs() < 1e-12);

    let z = rand_tensor(&mut r, &[2, 3, 1, 2, 2]);
    let v = rand_tensor(&mut r, &[2, 3, 1, 2, 2]);
    let s = student_losses(&z, &v, &f, &y, &w).unwrap();
    let mse_v = z.data().iter().zip(v.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / z.len() as f64;
    assert!((s.mse_v - mse_v).abs() < 1e-12);
    assert!((s.mse_s - mse).abs() < 1e-12);
    assert!((s.l_student - (w.w_v * mse_v + w.w_s * mse)).abs() < 1e-12);
}

#[test]
fn ssim_matches_reference() {
    let mut r = rng(7);
    for i in 0..100 {
        let (h, w) = (11 + i % 7, 11 + (i * 3) % 9);
        let x: Vec<f64> = (0..h * w).map(|_| r.random_range(0.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| (v + r.random_range(-0.3..0.3f64)).clamp(0.0, 1.0)).collect();
        let got = ssim(&x, &y, h, w).unwrap();
        let want = reference_ssim(&x, &y, h, w);
        assert!((got - want).abs() < 1e-6, "pair {i}: {got} vs {want}");
    }
}

#[test]
fn ssim_constant_closed_form() {
    let (c1, c2) = (1e-4, 9e-4);
    let expect = (c1 * c2) / ((1.0 + c1) * c2);
    let got = ssim(&[0.0; 144], &[1.0; 144], 12, 12).unwrap();
    assert!((got - expect).abs() < 1e-12);
}

#[test]
fn mse_matches_scalar_loop() {
    let mut r = rng(8);
    let a: Vec<f64> = (0..3 * 2 * 12 * 12).map(|_| r.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..a.len()).map(|_| r.random_range(-1.0..1.0)).collect();
    let x = VideoClip::new(ClipKind::Skeleton, 2, 12, 12, a.clone()).unwrap();
    let y = VideoClip::new(ClipKind::Skeleton, 2, 12, 12, b.clone()).unwrap();
    let mut acc = 0.0;
    for i in 0..a.len() {
        let d = (a[i] + 1.0) / 2.0 - (b[i] + 1.0) / 2.0;
        acc += d * d;
    }
    assert!((mse_frames(&x, &y).unwrap() - acc / a.len() as f64).abs() < 1e-12);
}

#[test]
fn pcs_with_known_distance() {
    // one pixel differs by 10 gray levels: 10 / 127.5 on the [-1, 1] scale
    let g = vec![-1.0; 144];
    let mut s = g.clone();
    s[17] += 10.0 / 127.5;
    let s = VideoClip::new(ClipKind::Silhouette, 1, 12, 12, s).unwrap();
    let g = VideoClip::new(ClipKind::Silhouette, 1, 12, 12, g).unwrap();
    let p = pcs(&s, &g, &[5.0, 25.0]).unwrap();
    assert_eq!(p, vec![(5.0, 0.0), (25.0, 100.0)]);
}

#[test]
fn extract_amplitudes_matches_modulus() {
    let mut r = rng(9);
    let dims = CsiDims { n_rx: 2, n_tx: 2, n_sub: 4 };
    let seq = CsiSequence::from_fn(dims, 10, |_, _, _, _| {
        ComplexCfr::new(r.random_range(-128..128) as f64, r.random_range(-128..128) as f64).unwrap()
    })
    .unwrap();
    let a = extract_amplitudes(&seq);
    assert_eq!(a.shape(), [2, 2, 4, 10]);
    for p in 0..10 {
        for rx in 0..2 {
            for tx in 0..2 {
                for k in 0..4 {
                    let h = seq.get(p, rx, tx, k);
                    assert_eq!(a.get(rx, tx, k, p), (h.re * h.re + h.im * h.im).sqrt());
                }
            }
        }
    }
    let one = CsiSequence::from_fn(CsiDims { n_rx: 1, n_tx: 1, n_sub: 1 }, 1, |_, _, _, _| {
        ComplexCfr::new(3.0, 4.0).unwrap()
    })
    .unwrap();
    assert_eq!(extract_amplitudes(&one).data(), &[5.0]);
    assert_eq!(cfr_amplitude(ComplexCfr::new(-1.0, 0.0).unwrap()), 1.0);
}

#[test]
fn hampel_module_examples() {
    let cfg = HampelConfig::new(7, 3.0).unwrap();
    let flat = [5.0; 7];
    assert_eq!(hampel_filter(&flat, &cfg).unwrap(), flat);
    let spiked = [1.0, 1.0, 1.0, 100.0, 1.0, 1.0, 1.0];
    assert_eq!(hampel_filter(&spiked, &cfg).unwrap(), [1.0; 7]);
    let ramp = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
    assert_eq!(hampel_filter(&ramp, &cfg).unwrap(), ramp);
    assert!(hampel_filter(&[], &cfg).is_err());
}

#[test]
fn sanitize_is_per_series_hampel() {
    let mut r = rng(10);
    let dims = CsiDims { n_rx: 2, n_tx: 3, n_sub: 4 };
    let seq = CsiSequence::from_fn(dims, 40, |_, _, _, _| {
        let spike = if r.random_range(0.0..1.0) < 0.05 { 90.0 } else { 0.0 };
        ComplexCfr::new(20.0 + spike + r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)).unwrap()
    })
    .unwrap();
    let amps = extract_amplitudes(&seq);
    let cfg = HampelConfig::new(9, 3.0).unwrap();
    let clean = sanitize(&amps, &cfg).unwrap();
    for rx in 0..2 {
        for tx in 0..3 {
            for k in 0..4 {
                let expect = hampel_filter(amps.series(rx, tx, k), &cfg).unwrap();
                assert_eq!(clean.series(rx, tx, k), &expect[..]);
                assert_eq!(expect, hampel_oracle(amps.series(rx, tx, k), 9, 3.0));
            }
        }
    }
}

#[test]
fn condense_takes_cellwise_medians() {
    let dims = CsiDims { n_rx: 2, n_tx: 2, n_sub: 1 };
    let four = [1.0, 2.0, 3.0, 100.0];
    let seq = CsiSequence::from_fn(dims, 1, |_, rx, tx, _| ComplexCfr::new(four[rx * 2 + tx], 0.0).unwrap()).unwrap();
    assert_eq!(condense(&extract_amplitudes(&seq)).data(), &[2.5]);
    let dims = CsiDims { n_rx: 3, n_tx: 1, n_sub: 1 };
    let three = [100.0, 1.0, 2.0];
    let seq = CsiSequence::from_fn(dims, 1, |_, rx, _, _| ComplexCfr::new(three[rx], 0.0).unwrap()).unwrap();
    assert_eq!(condense(&extract_amplitudes(&seq)).data(), &[2.0]);
}

#[test]
fn channel_matches_path_sum() {
    let cfg = SceneConfig::default();
    let poses = pose_trajectory(3, 2);
    for pose in &poses {
        let cfr = pose_cfr(pose, &cfg);
        for rx in 0..cfg.n_rx {
            for tx in 0..cfg.n_tx {
                let (bd, bg) = body_path(pose, &cfg, rx, tx);
                for k in 0..cfg.n_sub {
                    let f = (k + 1) as f64 * cfg.carrier_spacing;
                    let mut re = 0.0;
                    let mut im = 0.0;
                    for &(d, g) in cfg.static_paths.iter().chain(std::iter::once(&(bd, bg))) {
                        re += g * (2.0 * std::f64::consts::PI * f * d).cos();
                        im -= g * (2.0 * std::f64::consts::PI * f * d).sin();
                    }
                    let got = cfr[(rx * cfg.n_tx + tx) * cfg.n_sub + k];
                    assert!((got.0 - re).abs() < 1e-9 && (got.1 - im).abs() < 1e-9);
                }
            }
        }
    }
    let moved = poses[0].translated(0.1, 0.0);
    let amp = |c: &[(f64, f64)]| c.iter().map(|(a, b)| a.hypot(*b)).collect::<Vec<_>>();
    assert_ne!(amp(&pose_cfr(&poses[0], &cfg)), amp(&pose_cfr(&moved, &cfg)));
}
