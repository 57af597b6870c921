use super::*;
use approx::assert_abs_diff_eq;
use ndarray::{array, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_input(rows: usize, len: usize, seed: u64) -> Array2<f64> {
    let mut r = rng(seed);
    Array2::from_shape_simple_fn((rows, len), || r.random_range(-1.0..1.0))
}

fn net(input_len: usize, classes: usize) -> NetParams<f64> {
    NetParams::new(Architecture::new(input_len, classes), &mut rng(7)).unwrap()
}

#[test]
fn reference_widths() {
    let mut n = net(2048, 4);
    let x = random_input(8, 2048, 1);
    let fb = n.feature_extract(x.view(), Mode::Train, &mut rng(2)).unwrap();
    assert_eq!(fb.rows.dim(), (8, 128));
    assert_eq!(fb.z1.dim(), (8, 256));
    assert_eq!(fb.z2.dim(), (8, 128));
    assert!(fb.z2.iter().all(|v| v.is_finite()));
    assert_eq!(n.arch.stage_lengths().unwrap(), vec![2048, 512, 128, 32, 16]);
}

#[test]
fn eval_mode_is_deterministic() {
    let mut n = net(512, 4);
    let x = random_input(3, 512, 3);
    let a = n.feature_extract(x.view(), Mode::Eval, &mut rng(1)).unwrap();
    let b = n.feature_extract(x.view(), Mode::Eval, &mut rng(99)).unwrap();
    assert_eq!(a.z2, b.z2);
}

#[test]
fn pooled_width_does_not_depend_on_input_length() {
    for len in [256, 1024] {
        let mut n = net(len, 4);
        let fb = n.feature_extract(random_input(2, len, 4).view(), Mode::Eval, &mut rng(0)).unwrap();
        assert_eq!(fb.rows.ncols(), 128);
    }
}

#[test]
fn preconditions() {
    assert!(matches!(Architecture::new(16, 4).validate(), Err(Error::Shape(_))));
    let mut n = net(256, 4);
    let one = random_input(1, 256, 5);
    assert!(matches!(n.feature_extract(one.view(), Mode::Train, &mut rng(0)), Err(Error::InvalidBatch(_))));
    assert!(n.feature_extract(one.view(), Mode::Eval, &mut rng(0)).is_ok());
    let wrong = random_input(2, 300, 5);
    assert!(matches!(n.feature_extract(wrong.view(), Mode::Eval, &mut rng(0)), Err(Error::Shape(_))));
}

#[test]
fn classifier_outputs() {
    let mut n = net(256, 4);
    let z = random_input(5, 128, 6);
    let c = n.classify(z.view()).unwrap();
    for row in c.probs.rows() {
        assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-6);
    }
    n.classifier.weight.fill(0.0);
    let c = n.classify(z.view()).unwrap();
    assert!(c.probs.iter().all(|&p| (p - 0.25).abs() < 1e-12));
    n.classifier.bias = array![10.0, 0.0, 0.0, 0.0];
    let c = n.classify(z.view()).unwrap();
    assert!(c.probs.rows().into_iter().all(|r| r[0] > 0.999));
}

#[test]
fn leaky_softmax_scores() {
    let mut n = net(256, 4);
    let last = n.auxiliary.blocks.last_mut().unwrap();
    last.linear.weight.fill(0.0);
    let f = random_input(3, 128, 8);
    let out = n.aux_forward(f.view(), Mode::Eval, &mut rng(0)).unwrap();
    assert!(out.leaky.iter().all(|&v| (v - 0.125).abs() < 1e-12));
    assert!(out.domain_score.iter().all(|&s| (s - 0.5).abs() < 1e-12));

    n.auxiliary.blocks.last_mut().unwrap().linear.bias = array![1.0, 0.0, 0.0, 0.0];
    let out = n.aux_forward(f.view(), Mode::Eval, &mut rng(0)).unwrap();
    let e = std::f64::consts::E;
    assert_abs_diff_eq!(out.leaky[[0, 0]], e / (7.0 + e), epsilon = 1e-12);
    assert_abs_diff_eq!(out.leaky[[0, 1]], 1.0 / (7.0 + e), epsilon = 1e-12);
    assert_abs_diff_eq!(out.domain_score[0], 0.5884, epsilon = 1e-4);
}

#[test]
fn leaky_rows_stay_below_one() {
    let z = array![[10.0, 20.0, 30.0, 25.0], [-5.0, 0.0, 3.0, 1.0]];
    let l = layers::leaky_softmax_rows(z.view());
    for row in l.rows() {
        assert!(row.sum() < 1.0 && row.sum() > 0.0);
    }
    assert!(l.row(0).sum() > 0.999);
}

#[test]
fn multilinear_examples() {
    let f = array![[1.0, 2.0, 3.0]];
    let one_hot = array![[0.0, 1.0]];
    let m = multilinear_map(f.view(), one_hot.view()).unwrap();
    assert_eq!(m, array![[0.0, 0.0, 0.0, 1.0, 2.0, 3.0]]);
    let ones = Array2::<f64>::ones((2, 4));
    let uniform = Array2::from_elem((2, 3), 1.0 / 3.0);
    let m = multilinear_map(ones.view(), uniform.view()).unwrap();
    assert!(m.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    assert!(matches!(multilinear_map(ones.view(), one_hot.view()), Err(Error::Shape(_))));
}

#[test]
fn symmetric_discriminator_is_undecided() {
    let mut n = net(256, 4);
    n.discriminator.blocks.last_mut().unwrap().linear.weight.fill(0.0);
    let h = Array2::zeros((3, 512));
    let d = n.cdan_discriminate(h.view(), Mode::Eval, &mut rng(0)).unwrap();
    assert!(d.p_source.iter().all(|&p| p == 0.5));
    let h = random_input(4, 512, 9) * 100.0;
    let d = n.cdan_discriminate(h.view(), Mode::Train, &mut rng(0)).unwrap();
    assert!(d.p_source.iter().all(|&p| p > 0.0 && p < 1.0));
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    diff / scale.max(1e-12)
}

#[test]
fn input_gradient_matches_finite_differences() {
    let mut n = net(256, 4);
    let x = random_input(4, 256, 10);
    let fb = n.feature_extract(x.view(), Mode::Train, &mut rng(11)).unwrap();
    let mut grads = n.zeros_like();
    let ones = Array2::ones(fb.z2.raw_dim());
    let dx = n.feature_backward(&fb, None, None, Some(ones.view()), &mut grads, true).unwrap();

    let h = 1e-6;
    let mut numeric = Vec::new();
    let mut analytic = Vec::new();
    for (i, j) in [(0, 0), (1, 17), (2, 128), (3, 255), (0, 64), (2, 3), (1, 200), (3, 99)] {
        let mut plus = x.clone();
        plus[[i, j]] += h;
        let mut minus = x.clone();
        minus[[i, j]] -= h;
        let fp = n.feature_extract(plus.view(), Mode::Train, &mut rng(11)).unwrap().z2.sum();
        let fm = n.feature_extract(minus.view(), Mode::Train, &mut rng(11)).unwrap().z2.sum();
        numeric.push((fp - fm) / (2.0 * h));
        analytic.push(dx[[i, j]]);
    }
    assert!(rel_err(&analytic, &numeric) <= 1e-4, "{analytic:?} vs {numeric:?}");
}

#[test]
fn discriminator_gradient_matches_finite_differences() {
    let n = net(256, 3);
    let h_in = random_input(4, 384, 12);
    let out = n.cdan_discriminate(h_in.view(), Mode::Train, &mut rng(13)).unwrap();
    let mut grads = n.zeros_like();
    // loss = sum of source probabilities
    let d_margin = out.p_source.mapv(|p| p * (1.0 - p));
    let dh = n.cdan_backward(&out, d_margin.view(), &mut grads);
    let eps = 1e-6;
    let mut numeric = Vec::new();
    let mut analytic = Vec::new();
    for (i, j) in [(0, 0), (1, 100), (2, 383), (3, 200), (0, 250)] {
        let mut p = h_in.clone();
        p[[i, j]] += eps;
        let mut m = h_in.clone();
        m[[i, j]] -= eps;
        let fp = n.cdan_discriminate(p.view(), Mode::Train, &mut rng(13)).unwrap().p_source.sum();
        let fm = n.cdan_discriminate(m.view(), Mode::Train, &mut rng(13)).unwrap().p_source.sum();
        numeric.push((fp - fm) / (2.0 * eps));
        analytic.push(dh[[i, j]]);
    }
    assert!(rel_err(&analytic, &numeric) <= 1e-4, "{analytic:?} vs {numeric:?}");
}

#[test]
fn parameter_groups_partition_the_network() {
    let n = net(256, 4);
    let total: usize = ParamGroup::ALL.iter().map(|&g| n.group_tensors(g).len()).sum();
    let trainable = n.named_tensors().iter().filter(|(name, _, _)| !name.contains("running")).count();
    assert_eq!(total, trainable);
    assert_eq!(n.group_tensors(ParamGroup::Classifier).len(), 2);
    assert_eq!(n.group_tensors(ParamGroup::Discriminator).len(), 6);
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ckpt");
    let mut n = net(256, 4);
    let x = random_input(6, 256, 14);
    n.feature_extract(x.view(), Mode::Train, &mut rng(0)).unwrap();
    save_checkpoint(&path, &n).unwrap();
    let (header, mut loaded) = load_checkpoint::<f64>(&path).unwrap();
    assert_eq!(header.dtype, "f64");
    assert_eq!(loaded, n);
    assert_eq!(loaded.predict_proba(x.view()).unwrap(), n.predict_proba(x.view()).unwrap());

    let (_, single) = load_checkpoint::<f32>(&path).unwrap();
    assert_eq!(single.arch, n.arch);

    assert!(matches!(load_checkpoint::<f64>(&dir.path().join("missing")), Err(Error::FileNotFound(_))));
    std::fs::write(&path, b"garbage").unwrap();
    assert!(matches!(load_checkpoint::<f64>(&path), Err(Error::Format(_))));
}

proptest::proptest! {
    #[test]
    fn domain_scores_stay_inside_the_unit_interval(z in proptest::collection::vec(-30.0f64..30.0, 8)) {
        let l = layers::leaky_softmax_rows(Array2::from_shape_vec((2, 4), z).unwrap().view());
        for row in l.rows() {
            let s = row.sum();
            proptest::prop_assert!(s > 0.0 && s < 1.0);
        }
    }

    #[test]
    fn multilinear_norm_identity(
        f in proptest::collection::vec(-3.0f64..3.0, 5),
        p in proptest::collection::vec(0.0f64..1.0, 3),
    ) {
        let fa = Array2::from_shape_vec((1, 5), f.clone()).unwrap();
        let pa = Array2::from_shape_vec((1, 3), p.clone()).unwrap();
        let m = multilinear_map(fa.view(), pa.view()).unwrap();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let lhs = norm(m.as_slice().unwrap());
        proptest::prop_assert!((lhs - norm(&f) * norm(&p)).abs() < 1e-9);
    }
}
