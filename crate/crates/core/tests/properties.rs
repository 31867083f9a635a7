use csi2video::config::RunConfig;
use csi2video::csi::{cfr_amplitude, extract_amplitudes, ComplexCfr, CsiDims, CsiSequence};
use csi2video::csi_io::{read_csib, write_csib};
use csi2video::metrics::{fsim_clip, mse_frames, pcs, ssim_clip};
use csi2video::sanitizer::{condense, hampel_filter, HampelConfig};
use csi2video::synthetic::{pose_cfr, pose_trajectory, ClipKind, SceneConfig, VideoClip};
use csi2video::tensor::{lstm_step, Graph, LstmParams, Tensor};
use proptest::prelude::*;

fn cfr() -> impl Strategy<Value = ComplexCfr> {
    (-1e3..1e3f64, -1e3..1e3f64).prop_map(|(re, im)| ComplexCfr::new(re, im).unwrap())
}

fn int_sequence() -> impl Strategy<Value = CsiSequence> {
    (1..4usize, 1..4usize, 1..6usize, 1..12usize, any::<bool>()).prop_flat_map(|(rx, tx, sub, p, ts)| {
        let dims = CsiDims { n_rx: rx, n_tx: tx, n_sub: sub };
        let cells = prop::collection::vec((-128..128i32, -128..128i32), p * rx * tx * sub);
        let stamps = prop::collection::vec(0..1_000_000u64, p);
        (cells, stamps).prop_map(move |(cells, mut stamps)| {
            stamps.sort_unstable();
            let values = cells
                .into_iter()
                .map(|(a, b)| ComplexCfr::new(a as f64, b as f64).unwrap())
                .collect();
            CsiSequence::new(dims, p, values, ts.then_some(stamps)).unwrap()
        })
    })
}

fn odd_window() -> impl Strategy<Value = usize> {
    (1..26usize).prop_map(|h| 2 * h + 1)
}

fn clip_pair(frames: usize) -> impl Strategy<Value = (VideoClip, VideoClip)> {
    let n = frames * 16 * 16;
    (prop::collection::vec(-1.0..=1.0f64, n), prop::collection::vec(-1.0..=1.0f64, n)).prop_map(move |(a, b)| {
        (
            VideoClip::new(ClipKind::Silhouette, frames, 16, 16, a).unwrap(),
            VideoClip::new(ClipKind::Silhouette, frames, 16, 16, b).unwrap(),
        )
    })
}

fn reversed(c: &VideoClip) -> VideoClip {
    let data = (0..c.frames()).rev().flat_map(|t| c.frame(t).to_vec()).collect();
    VideoClip::new(c.kind(), c.frames(), c.height(), c.width(), data).unwrap()
}

proptest! {
    #[test]
    fn amplitude_ignores_conjugation(h in cfr()) {
        prop_assert_eq!(cfr_amplitude(h), cfr_amplitude(h.conj()));
    }

    #[test]
    fn amplitude_scales_with_abs(h in cfr(), s in -50.0..50.0f64) {
        let scaled = ComplexCfr::new(s * h.re, s * h.im).unwrap();
        let expect = s.abs() * cfr_amplitude(h);
        prop_assert!((cfr_amplitude(scaled) - expect).abs() <= 1e-12 * expect.max(1.0));
    }

    #[test]
    fn amplitudes_follow_packet_order(seq in int_sequence(), rot in 0..12usize) {
        let p = seq.n_pkt();
        let order: Vec<usize> = (0..p).map(|i| (i + rot) % p).collect();
        let permuted = CsiSequence::new(
            seq.dims(),
            p,
            order.iter().flat_map(|&i| seq.packet(i).to_vec()).collect(),
            None,
        ).unwrap();
        let (a, b) = (extract_amplitudes(&seq), extract_amplitudes(&permuted));
        let d = seq.dims();
        for (new, &old) in order.iter().enumerate() {
            for rx in 0..d.n_rx {
                for tx in 0..d.n_tx {
                    for k in 0..d.n_sub {
                        prop_assert_eq!(b.get(rx, tx, k, new), a.get(rx, tx, k, old));
                    }
                }
            }
        }
    }

    #[test]
    fn csib_round_trips(seq in int_sequence()) {
        let bytes = write_csib(&seq).unwrap();
        let d = seq.dims();
        let p = seq.n_pkt();
        let ts = if seq.timestamps().is_some() { 8 * p } else { 0 };
        prop_assert_eq!(bytes.len(), 15 + ts + 2 * p * d.n_rx * d.n_tx * d.n_sub);
        let back = read_csib(&bytes).unwrap();
        prop_assert_eq!(&back, &seq);
        prop_assert_eq!(write_csib(&back).unwrap(), bytes);
    }

    #[test]
    fn hampel_reuses_input_values(
        x in prop::collection::vec(-100.0..100.0f64, 1..120),
        w in odd_window(),
        s in 0.5..5.0f64,
    ) {
        let y = hampel_filter(&x, &HampelConfig::new(w, s).unwrap()).unwrap();
        prop_assert_eq!(y.len(), x.len());
        let mut left = x.clone();
        left.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // every output must exist in the input; replacements may repeat a value
        for v in &y {
            prop_assert!(left.binary_search_by(|a| a.partial_cmp(v).unwrap()).is_ok());
        }
    }

    #[test]
    fn hampel_with_infinite_threshold_is_identity(
        x in prop::collection::vec(-100.0..100.0f64, 1..120),
        w in odd_window(),
    ) {
        let y = hampel_filter(&x, &HampelConfig::new(w, f64::INFINITY).unwrap()).unwrap();
        prop_assert_eq!(y, x);
    }

    #[test]
    fn hampel_commutes_with_shifts(
        x in prop::collection::vec(-100..100i32, 1..120),
        c in -1000..1000i32,
        w in odd_window(),
        s in 0.5..5.0f64,
    ) {
        let cfg = HampelConfig::new(w, s).unwrap();
        let xf: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let shifted: Vec<f64> = xf.iter().map(|v| v + c as f64).collect();
        let a = hampel_filter(&shifted, &cfg).unwrap();
        let b: Vec<f64> = hampel_filter(&xf, &cfg).unwrap().iter().map(|v| v + c as f64).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn condense_stays_within_cell_range(seq in int_sequence()) {
        let t = extract_amplitudes(&seq);
        let m = condense(&t);
        let d = seq.dims();
        prop_assert_eq!(m.shape(), (seq.n_pkt(), d.n_sub));
        for p in 0..seq.n_pkt() {
            for k in 0..d.n_sub {
                let cell: Vec<f64> = (0..d.n_rx)
                    .flat_map(|rx| (0..d.n_tx).map(move |tx| (rx, tx)))
                    .map(|(rx, tx)| t.get(rx, tx, k, p))
                    .collect();
                let lo = cell.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = cell.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(lo <= m.get(p, k) && m.get(p, k) <= hi);
            }
        }
    }

    #[test]
    fn rendered_frames_stay_in_range(seed in any::<u64>(), skeleton in any::<bool>()) {
        let kind = if skeleton { ClipKind::Skeleton } else { ClipKind::Silhouette };
        let poses = pose_trajectory(seed, 3);
        let clip = VideoClip::render(kind, &poses, 24, 32).unwrap();
        prop_assert!(clip.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        prop_assert!(poses.iter().all(|p| p.in_unit_square()));
    }

    #[test]
    fn cfr_is_bounded_by_gain_sum(seed in any::<u64>()) {
        let cfg = SceneConfig::default();
        let bound: f64 = cfg.static_paths.iter().map(|(_, g)| g.abs()).sum::<f64>() + cfg.body_path_gain.abs();
        for pose in pose_trajectory(seed, 2) {
            let h = pose_cfr(&pose, &cfg);
            prop_assert!(h.iter().all(|(re, im)| re.hypot(*im) <= bound + 1e-9));
            prop_assert_eq!(&h, &pose_cfr(&pose, &cfg));
        }
    }

    #[test]
    fn lstm_hidden_state_is_bounded(seed in any::<u64>(), scale in 0.1..20.0f64) {
        use rand::{Rng, SeedableRng};
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut p = LstmParams::zeros(3, 4);
        for t in p.input.iter_mut().chain(p.recurrent.iter_mut()).chain(p.peephole.iter_mut()).chain(p.bias.iter_mut()) {
            *t = Tensor::from_fn(t.shape().to_vec(), |_| scale * r.random_range(-1.0..1.0));
        }
        let mut g = Graph::new();
        let vars = p.to_graph(&mut g, false);
        let mut h = g.constant(Tensor::zeros([2, 4]));
        let mut c = g.constant(Tensor::zeros([2, 4]));
        for _ in 0..5 {
            let a = g.constant(Tensor::from_fn([2, 3], |_| scale * r.random_range(-1.0..1.0)));
            (h, c) = lstm_step(&mut g, a, h, c, &vars).unwrap();
            prop_assert!(g.value(h).data().iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn config_text_round_trips(
        hidden in 1..500usize,
        lr in 1e-6..1.0f64,
        window in odd_window(),
        nsigma in 0.1..10.0f64,
        fraction in 0.05..1.0f64,
        epochs in prop::option::of(1..1000usize),
        seed in any::<u64>(),
    ) {
        let mut cfg = RunConfig::default();
        cfg.model.hidden = hidden;
        cfg.optim.lr = lr;
        cfg.hampel = HampelConfig::new(window, nsigma).unwrap();
        cfg.train_fraction = fraction;
        cfg.epochs = epochs;
        cfg.scene.seed = seed;
        let back = RunConfig::parse(&cfg.to_text()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pcs_is_monotone_in_threshold((s, g) in clip_pair(3), mut xi in prop::collection::vec(0.0..3000.0f64, 2..8)) {
        xi.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let p = pcs(&s, &g, &xi).unwrap();
        prop_assert!(p.windows(2).all(|w| w[0].1 <= w[1].1));
        prop_assert!(p.iter().all(|(_, v)| (0.0..=100.0).contains(v)));
        prop_assert!(pcs(&s, &s, &xi).unwrap().iter().all(|(_, v)| *v == 100.0));
    }

    #[test]
    fn metrics_are_symmetric_and_order_free((s, g) in clip_pair(2)) {
        let ss = ssim_clip(&s, &g).unwrap();
        let fs = fsim_clip(&s, &g).unwrap();
        prop_assert!((-1.0..=1.0).contains(&ss));
        prop_assert!((0.0..=1.0).contains(&fs));
        prop_assert!((ss - ssim_clip(&g, &s).unwrap()).abs() < 1e-12);
        prop_assert!((fs - fsim_clip(&g, &s).unwrap()).abs() < 1e-12);
        prop_assert_eq!(ssim_clip(&s, &s).unwrap(), 1.0);
        prop_assert_eq!(fsim_clip(&s, &s).unwrap(), 1.0);
        prop_assert_eq!(mse_frames(&s, &s).unwrap(), 0.0);

        let (rs, rg) = (reversed(&s), reversed(&g));
        prop_assert!((mse_frames(&rs, &rg).unwrap() - mse_frames(&s, &g).unwrap()).abs() < 1e-12);
        prop_assert!((ssim_clip(&rs, &rg).unwrap() - ss).abs() < 1e-12);
        prop_assert!((fsim_clip(&rs, &rg).unwrap() - fs).abs() < 1e-12);
        prop_assert_eq!(pcs(&rs, &rg, &[1e3, 2e3]).unwrap(), pcs(&s, &g, &[1e3, 2e3]).unwrap());
    }
}
