use std::collections::BTreeMap;
use std::f64::consts::PI;

use motionprop::autodiff::{grad_check, Checkpoint, Graph, ParamStore};
use motionprop::classifier::*;
use motionprop::skeleton::*;
use motionprop::synth::{gen_motion, GeneratorConfig, Placement, SubjectStyle};
use motionprop::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| r.random_range(-1.0..1.0))
}

fn tiny_dims(input: usize, classes: usize) -> ClassifierDims {
    ClassifierDims {
        input,
        graph1: 3,
        graph2: 4,
        hidden: 5,
        fc: 4,
        classes,
        shared_attention: true,
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// `x: [J, F]` row-major; `w: [2F, O]`.
fn reference_graph_conv(x: &[f64], j: usize, f: usize, nb: &[Vec<usize>], w: &[f64], b: &[f64], o: usize) -> Vec<f64> {
    let mut out = vec![0.0; j * o];
    for i in 0..j {
        let mut acc = vec![0.0; o];
        for &n in &nb[i] {
            let mut cat = x[i * f..(i + 1) * f].to_vec();
            cat.extend((0..f).map(|c| x[n * f + c] - x[i * f + c]));
            for (k, a) in acc.iter_mut().enumerate() {
                *a += (0..2 * f).map(|r| w[r * o + k] * cat[r]).sum::<f64>() / nb[i].len() as f64;
            }
        }
        for k in 0..o {
            out[i * o + k] = (acc[k] + b[k]).max(0.0);
        }
    }
    out
}

fn run_graph_conv(x: &Tensor, topo: &SkeletonTopology, spec: NeighborhoodSpec, w: &Tensor, b: &Tensor) -> Tensor {
    let mut g = Graph::new();
    let (xi, wi, bi) = (g.input("x", x.clone()), g.param("w", w.clone()), g.param("b", b.clone()));
    let y = graph_conv(&mut g, xi, topo, spec, wi, bi).unwrap();
    g.value(y).clone()
}

#[test]
fn identity_weight_gives_relu_of_input() {
    let topo = SkeletonTopology::chain(4).unwrap();
    let x = random(&[2, 4, 3], &mut rng(1));
    let mut w = vec![0.0; 6 * 3];
    for i in 0..3 {
        w[i * 3 + i] = 1.0;
    }
    let y = run_graph_conv(&x, &topo, NeighborhoodSpec::Parent, &Tensor::new(vec![6, 3], w).unwrap(), &Tensor::zeros(&[3]));
    assert_eq!(y.data(), x.map(|v| v.max(0.0)).data());
}

#[test]
fn zero_root_stays_zero() {
    let topo = SkeletonTopology::chain(3).unwrap();
    let mut r = rng(2);
    let mut x = random(&[3, 2], &mut r);
    x.data_mut()[0] = 0.0;
    x.data_mut()[1] = 0.0;
    let y = run_graph_conv(&x, &topo, NeighborhoodSpec::Parent, &random(&[4, 5], &mut r), &Tensor::zeros(&[5]));
    assert!(y.data()[..5].iter().all(|&v| v == 0.0));
}

#[test]
fn graph_conv_matches_per_joint_loops() {
    let chain = SkeletonTopology::chain(3).unwrap();
    let xsens = SkeletonTopology::xsens23();
    let specs = [
        NeighborhoodSpec::Parent,
        NeighborhoodSpec::KAncestors(2),
        NeighborhoodSpec::UndirectedKHop(2),
        NeighborhoodSpec::FullyConnected,
    ];
    for (seed, topo) in [(3, &chain), (4, &xsens)] {
        let mut r = rng(seed);
        let j = topo.num_joints();
        for spec in specs {
            let (x, w, b) = (random(&[j, 3], &mut r), random(&[6, 4], &mut r), random(&[4], &mut r));
            let y = run_graph_conv(&x, topo, spec, &w, &b);
            let expected = reference_graph_conv(x.data(), j, 3, &spec.neighbours(topo), w.data(), b.data(), 4);
            for (a, e) in y.data().iter().zip(&expected) {
                assert!((a - e).abs() < 1e-12, "{spec}: {a} vs {e}");
            }
        }
    }
}

#[test]
fn self_only_is_a_shared_dense_layer() {
    let topo = SkeletonTopology::xsens23();
    let mut r = rng(5);
    let (x, w, b) = (random(&[2, 23, 3], &mut r), random(&[6, 4], &mut r), random(&[4], &mut r));
    let y = run_graph_conv(&x, &topo, NeighborhoodSpec::SelfOnly, &w, &b);
    for (row, out) in x.data().chunks(3).zip(y.data().chunks(4)) {
        for k in 0..4 {
            let dense: f64 = (0..3).map(|c| row[c] * w.data()[c * 4 + k]).sum::<f64>() + b.data()[k];
            assert!((out[k] - dense.max(0.0)).abs() < 1e-12);
        }
    }
}

fn run_attention(x: &Tensor, h: &Tensor, w_h: &Tensor, w_x: &Tensor, b: f64, shared: bool) -> (Tensor, Tensor) {
    let mut g = Graph::new();
    let xi = g.input("x", x.clone());
    let hi = g.input("h", h.clone());
    let att = AttentionNodes {
        w_h: g.param("w_h", w_h.clone()),
        w_x: g.param("w_x", w_x.clone()),
        b: g.param("b", Tensor::from_vec(vec![b])),
        shared,
    };
    let (y, a) = attention_gate(&mut g, xi, hi, &att).unwrap();
    (g.value(y).clone(), g.value(a).clone())
}

#[test]
fn attention_gate_examples() {
    let mut r = rng(6);
    let (x, h) = (random(&[2, 5, 3], &mut r), random(&[2, 4], &mut r));
    let (y, a) = run_attention(&x, &h, &Tensor::zeros(&[4, 1]), &Tensor::zeros(&[3, 1]), 0.0, true);
    assert!(a.data().iter().all(|&v| v == 0.5));
    assert_eq!(y.data(), x.map(|v| 1.5 * v).data());
    let (y, a) = run_attention(&x, &h, &Tensor::zeros(&[4, 1]), &Tensor::zeros(&[3, 1]), -20.0, true);
    assert!(a.data().iter().all(|&v| v < 1e-8));
    assert!(y.zip_map(&x, |p, q| (p - q).abs()).unwrap().max_abs() < 1e-8);
    for shared in [true, false] {
        let w_x = if shared { random(&[3, 1], &mut r) } else { random(&[5, 3], &mut r) };
        let (y, a) = run_attention(&x, &h, &random(&[4, 1], &mut r), &w_x, 0.3, shared);
        assert!(a.data().iter().all(|&v| v > 0.0 && v < 1.0));
        for (p, q) in y.data().iter().zip(x.data()) {
            assert!(p.abs() >= q.abs() && p.abs() <= 2.0 * q.abs() && p * q >= 0.0);
        }
    }
}

#[test]
fn unshared_attention_matches_per_joint_weights() {
    let mut r = rng(7);
    let (x, h, w_h, w_x) = (random(&[1, 3, 2], &mut r), random(&[1, 2], &mut r), random(&[2, 1], &mut r), random(&[3, 2], &mut r));
    let (_, a) = run_attention(&x, &h, &w_h, &w_x, 0.1, false);
    let (xd, hd, whd, wxd) = (x.data(), h.data(), w_h.data(), w_x.data());
    for i in 0..3 {
        let pre = hd[0] * whd[0] + hd[1] * whd[1] + xd[i * 2] * wxd[i * 2] + xd[i * 2 + 1] * wxd[i * 2 + 1] + 0.1;
        assert!((a.data()[i] - sigmoid(pre)).abs() < 1e-15);
    }
}

struct GruWeights(BTreeMap<&'static str, Tensor>);

fn gru_weights(k: usize, h: usize, r: &mut ChaCha8Rng) -> GruWeights {
    let mut m = BTreeMap::new();
    for g in ["z", "r", "c"] {
        m.insert(["w_", g].concat().leak() as &str, random(&[k, h], r));
        m.insert(["u_", g].concat().leak() as &str, random(&[h, h], r));
        m.insert(["b_", g].concat().leak() as &str, random(&[h], r));
    }
    GruWeights(m)
}

fn run_gru(x: &Tensor, h: &Tensor, w: &GruWeights) -> Tensor {
    let mut g = Graph::new();
    let xi = g.input("x", x.clone());
    let hi = g.input("h", h.clone());
    let mut p = |n: &str| g.param(n, w.0[n].clone());
    let nodes = GruNodes {
        w_z: p("w_z"),
        u_z: p("u_z"),
        b_z: p("b_z"),
        w_r: p("w_r"),
        u_r: p("u_r"),
        b_r: p("b_r"),
        w_c: p("w_c"),
        u_c: p("u_c"),
        b_c: p("b_c"),
    };
    let y = gru_step(&mut g, xi, hi, &nodes).unwrap();
    g.value(y).clone()
}

#[test]
fn gru_step_matches_scalar_evaluation() {
    let mut r = rng(8);
    let (k, hd) = (4, 3);
    let w = gru_weights(k, hd, &mut r);
    let (x, h) = (random(&[1, k], &mut r), random(&[1, hd], &mut r));
    let y = run_gru(&x, &h, &w);
    let lin = |wn: &str, un: &str, bn: &str, hv: &[f64], o: usize| {
        let (wm, um, bm) = (w.0[wn].data(), w.0[un].data(), w.0[bn].data());
        (0..k).map(|i| x.data()[i] * wm[i * hd + o]).sum::<f64>() + (0..hd).map(|i| hv[i] * um[i * hd + o]).sum::<f64>() + bm[o]
    };
    let hv = h.data();
    let rg: Vec<f64> = (0..hd).map(|o| sigmoid(lin("w_r", "u_r", "b_r", hv, o))).collect();
    let rh: Vec<f64> = (0..hd).map(|o| rg[o] * hv[o]).collect();
    for o in 0..hd {
        let z = sigmoid(lin("w_z", "u_z", "b_z", hv, o));
        let c = lin("w_c", "u_c", "b_c", &rh, o).tanh();
        let expected = (1.0 - z) * hv[o] + z * c;
        assert!((y.data()[o] - expected).abs() < 1e-14);
    }
}

#[test]
fn gru_gate_extremes() {
    let mut r = rng(9);
    let mut w = gru_weights(3, 2, &mut r);
    let (x, h) = (random(&[1, 3], &mut r), random(&[1, 2], &mut r));
    w.0.insert("b_z", Tensor::full(&[2], -60.0));
    assert!(run_gru(&x, &h, &w).zip_map(&h, |a, b| (a - b).abs()).unwrap().max_abs() < 1e-12);
    w.0.insert("b_z", Tensor::full(&[2], 60.0));
    w.0.insert("b_r", Tensor::full(&[2], 60.0));
    let y = run_gru(&x, &h, &w);
    for o in 0..2 {
        let (wc, uc, bc) = (w.0["w_c"].data(), w.0["u_c"].data(), w.0["b_c"].data());
        let pre = (0..3).map(|i| x.data()[i] * wc[i * 2 + o]).sum::<f64>()
            + (0..2).map(|i| h.data()[i] * uc[i * 2 + o]).sum::<f64>()
            + bc[o];
        assert!((y.data()[o] - pre.tanh()).abs() < 1e-12);
    }
}

fn toy_forward(g: &mut Graph, params: &ParamStore, x: Tensor, topo: &SkeletonTopology, shared: bool) -> ForwardNodes {
    let xi = g.input("x", x);
    let nodes = ClassifierNodes::bind(g, params, shared).unwrap();
    classify_forward(g, xi, &nodes, topo, NeighborhoodSpec::Parent).unwrap()
}

#[test]
fn full_classifier_loss_passes_gradient_check() {
    let topo = SkeletonTopology::chain(3).unwrap();
    for (seed, shared) in [(10, true), (11, false)] {
        let mut r = rng(seed);
        let dims = ClassifierDims {
            shared_attention: shared,
            ..tiny_dims(2, 3)
        };
        // Random biases keep every ReLU away from its kink.
        let params: ParamStore = dims
            .init_params(3, &mut r)
            .iter()
            .map(|(n, t)| (n.clone(), random(t.shape(), &mut r)))
            .collect();
        let mut g = Graph::new();
        let out = toy_forward(&mut g, &params, random(&[2, 4, 3, 2], &mut r), &topo, shared);
        let loss = g.softmax_cross_entropy(out.logits, &[0, 2]).unwrap();
        let report = grad_check(&mut g, loss, 1e-6).unwrap();
        assert_eq!(report.entries_checked, params.num_scalars());
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}

#[test]
fn forward_shapes_and_degenerate_parameters() {
    let topo = SkeletonTopology::xsens23();
    let dims = tiny_dims(6, 6);
    let mut r = rng(12);
    let zero: ParamStore = dims.init_params(23, &mut r).iter().map(|(n, t)| (n.clone(), Tensor::zeros(t.shape()))).collect();
    let mut g = Graph::new();
    let out = toy_forward(&mut g, &zero, random(&[2, 30, 23, 6], &mut r), &topo, true);
    assert_eq!(g.shape(out.logits), [2, 6]);
    assert_eq!(g.shape(out.attention), [2, 30, 23]);
    assert!(g.value(out.logits).data().iter().all(|&v| v == 0.0));

    let params = dims.init_params(23, &mut r);
    let x1 = random(&[1, 30, 23, 6], &mut r);
    let x2 = random(&[1, 30, 23, 6], &mut r);
    let logits = |x: &Tensor| {
        let mut g = Graph::new();
        let out = toy_forward(&mut g, &params, x.clone(), &topo, true);
        g.value(out.logits).clone()
    };
    assert_eq!(logits(&x1), logits(&x1));
    assert_ne!(logits(&x1), logits(&x2));
}

#[test]
fn forward_rejects_wrong_joint_count() {
    let topo = SkeletonTopology::xsens23();
    let params = tiny_dims(6, 3).init_params(23, &mut rng(13));
    let mut g = Graph::new();
    let xi = g.input("x", Tensor::zeros(&[1, 30, 22, 6]));
    let nodes = ClassifierNodes::bind(&mut g, &params, true).unwrap();
    assert!(classify_forward(&mut g, xi, &nodes, &topo, NeighborhoodSpec::Parent).is_err());
}

fn clip(seed: u64, class: usize) -> MotionSequence {
    let config = GeneratorConfig {
        seed,
        ..GeneratorConfig::default()
    };
    let mut r = rng(seed);
    let style = SubjectStyle::sample(&mut r);
    let placement = Placement::sample(&mut r);
    gen_motion(&config, &SkeletonTopology::xsens23(), "s000", &style, &placement, class, &mut r).unwrap().0
}

fn toy_classifier(seed: u64) -> Classifier {
    let topo = SkeletonTopology::xsens23();
    let dims = tiny_dims(6, 3);
    let header = ClassifierHeader {
        dims,
        neighborhood: NeighborhoodSpec::Parent,
        input: InputKind::Skeleton(Representation::position_speed()),
        frames: 30,
        input_scale: vec![0.3, 0.3, 0.3, 0.5, 0.5, 0.5],
    };
    Classifier::new(header, dims.init_params(23, &mut rng(seed)), &topo).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn logits_ignore_world_heading_and_position(
        seed in 0u64..1000,
        angle in 0.0..2.0 * PI,
        dx in -5.0..5.0f64,
        dy in -5.0..5.0f64,
    ) {
        let topo = SkeletonTopology::xsens23();
        let model = toy_classifier(seed);
        let seq = clip(seed, (seed % 3) as usize);
        let moved = seq.with_frames(translate(&rotate_z(&seq.frames, angle), [dx, dy, 0.0]), seq.fps);
        let a = model.prepare(&seq, &topo).unwrap();
        let b = model.prepare(&moved, &topo).unwrap();
        let la = model.logits(&[&a], &topo).unwrap();
        let lb = model.logits(&[&b], &topo).unwrap();
        for (p, q) in la[0].iter().zip(&lb[0]) {
            prop_assert!((p - q).abs() <= 1e-9);
        }
    }

    #[test]
    fn argmax_ignores_a_constant_shift(v in prop::collection::vec(-10.0..10.0f64, 2..8), c in -100.0..100.0f64) {
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        // Shifting can merge near-ties through rounding; only strict winners must stay.
        let best = argmax(&v);
        let margin = v.iter().enumerate().filter(|(i, _)| *i != best).map(|(_, x)| v[best] - x).fold(f64::INFINITY, f64::min);
        if margin > 1e-9 {
            prop_assert_eq!(argmax(&shifted), best);
        }
    }
}

#[test]
fn metrics_examples() {
    let truth = [0, 0, 1, 2, 2, 2];
    let perfect = Metrics::from_predictions(&truth, &truth, 3);
    assert_eq!(perfect.accuracy, 1.0);
    assert_eq!(perfect.confusion, vec![vec![2, 0, 0], vec![0, 1, 0], vec![0, 0, 3]]);
    assert_eq!(perfect.f1, vec![1.0; 3]);
    let m = Metrics::from_predictions(&[0, 1, 1, 2, 0, 2], &truth, 4);
    for (k, row) in m.confusion.iter().enumerate() {
        assert_eq!(row.iter().sum::<usize>(), truth.iter().filter(|&&t| t == k).count());
    }
    assert!((m.accuracy - 4.0 / 6.0).abs() < 1e-15);
    // Class 0: tp 1, 2 true, 2 predicted.
    assert!((m.f1[0] - 0.5).abs() < 1e-15);
    assert_eq!(m.f1[3], 0.0);
    let logits = vec![vec![1.0, 0.0, 5.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
    assert_eq!(pairwise_accuracy(&logits, &[0, 1, 2], 0, 2), Some(0.5));
    assert_eq!(pairwise_accuracy(&logits, &[1, 1, 1], 0, 2), None);
}

#[test]
fn attention_color_examples() {
    let uniform = Tensor::full(&[4, 5], 0.3);
    assert_eq!(attention_colors(&uniform), vec![0.0; 5]);
    let map = Tensor::from_fn(&[3, 4], |i| ((i % 4) as f64 + 1.0) / 5.0);
    let c = attention_colors(&map);
    assert_eq!(c[0], 0.0);
    assert_eq!(c[3], 1.0);
    assert!(c.windows(2).all(|w| w[0] < w[1]));
    assert!(c.iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn attention_csv_lists_every_joint() {
    let topo = SkeletonTopology::xsens23();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("att.csv");
    let values: Vec<f64> = (0..23).map(|i| i as f64 / 22.0).collect();
    write_attention_csv(&path, &topo, &values).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "joint_name,value");
    assert_eq!(lines.len(), 24);
    assert!(lines[1].starts_with("Pelvis,"));
    assert!(write_attention_csv(&path, &topo, &values[..5]).is_err());
}

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        graph1: 8,
        graph2: 8,
        hidden: 16,
        fc: 16,
        rotations: 1,
        crops: 2,
        epochs: 4,
        batch_size: 8,
        lr: 3e-3,
        seed,
        ..TrainConfig::default()
    }
}

fn split_clips(n_subjects: usize) -> (Vec<MotionSequence>, Vec<MotionSequence>) {
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for s in 0..n_subjects as u64 {
        for k in 0..3 {
            let c = clip(100 + s, k);
            if s < n_subjects as u64 - 1 {
                train.push(c);
            } else {
                val.push(c);
            }
        }
    }
    (train, val)
}

#[test]
fn training_descends_is_deterministic_and_round_trips() {
    let topo = SkeletonTopology::xsens23();
    let (train, val) = split_clips(4);
    let config = small_config(3);
    let a = train_classifier(&train, &val, &topo, &config).unwrap();
    let b = train_classifier(&train, &val, &topo, &config).unwrap();
    assert_eq!(a.classifier, b.classifier);
    assert_eq!(a.log, b.log);
    assert_eq!(a.log.len(), 4);
    assert!(a.log.last().unwrap().train_loss < a.log[0].train_loss, "{:?}", a.log);
    let best = a.log.iter().find(|e| e.epoch == a.best_epoch).unwrap();
    assert!(a.log.iter().all(|e| e.val_error >= best.val_error));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cls.json");
    a.classifier.to_checkpoint(3, 4).unwrap().save(&path).unwrap();
    let back = Classifier::from_checkpoint(Checkpoint::load(&path).unwrap(), &topo).unwrap();
    assert_eq!(back, a.classifier);

    let samples = prepare_samples(&val, &topo, &config).unwrap();
    let m = evaluate(&back, &samples, &topo).unwrap();
    assert_eq!(m.confusion.iter().flatten().sum::<usize>(), 3);
}

#[test]
fn training_rejects_empty_splits() {
    let topo = SkeletonTopology::xsens23();
    let (train, _) = split_clips(2);
    assert!(train_classifier(&train, &[], &topo, &small_config(0)).is_err());
    assert!(train_classifier(&[], &train, &topo, &small_config(0)).is_err());
}
