use ddlab::augment::{ConcatView, PairMode};
use ddlab::datagen::{gen_mixture_classification, ClassificationDataset};
use ddlab::nnet::{
    classify_error, grad_check, init_mlp, lift_model, loss_only, min_kink_distance, random_model,
    random_targets, train, LossKind, MlpModel, OptimConfig, TrainConfig, TrainSource,
};
use ddlab::Rng;
use ndarray::{Array2, Axis};

fn gaussian(rows: usize, cols: usize, rng: &mut Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.normal())
}

/// Straight-line evaluation with explicit loops.
fn forward_loops(m: &MlpModel, x: &Array2<f64>) -> Array2<f64> {
    let (h, d) = m.w1.dim();
    let c = m.w2.nrows();
    let mut out = Array2::zeros((x.nrows(), c));
    for r in 0..x.nrows() {
        let mut hidden = vec![0.0; h];
        for (u, hu) in hidden.iter_mut().enumerate() {
            let mut s = m.b1[u];
            for k in 0..d {
                s += m.w1[[u, k]] * x[[r, k]];
            }
            *hu = s.max(0.0);
        }
        for k in 0..c {
            let mut s = m.b2[k];
            for (u, hu) in hidden.iter().enumerate() {
                s += m.w2[[k, u]] * hu;
            }
            out[[r, k]] = s;
        }
    }
    out
}

fn adam_cfg(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 20,
        loss: LossKind::CrossEntropy,
        optimizer: OptimConfig::adam(0.01),
        e_mult: 1,
        seed,
    }
}

#[test]
fn forward_matches_loop_oracle() {
    let mut rng = Rng::new(1);
    for _ in 0..50 {
        let d = 1 + rng.below_usize(7);
        let h = 1 + rng.below_usize(7);
        let c = 1 + rng.below_usize(4);
        let m = random_model(d, h, c, &mut rng).unwrap();
        let x = gaussian(6, d, &mut rng);
        let got = m.forward(x.view()).unwrap();
        let want = forward_loops(&m, &x);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn gradient_examples() {
    let mut rng = Rng::new(2);
    // every hidden unit active: MSE is quadratic in the output layer
    let mut m = random_model(3, 4, 2, &mut rng).unwrap();
    m.b1.fill(50.0);
    let x = gaussian(5, 3, &mut rng);
    let t = random_targets(5, 2, LossKind::Mse, &mut rng);
    assert!(grad_check(&m, x.view(), t.view(), LossKind::Mse, 1e-5).unwrap() < 1e-7);

    let mut checked = 0;
    while checked < 20 {
        let m = random_model(4, 5, 3, &mut rng).unwrap();
        let x = gaussian(4, 4, &mut rng);
        // perturbations of 1e-3 must not cross a kink
        if min_kink_distance(&m, x.view()).unwrap() < 0.05 {
            continue;
        }
        checked += 1;
        let t = random_targets(4, 3, LossKind::CrossEntropy, &mut rng);
        let full = grad_check(&m, x.view(), t.view(), LossKind::CrossEntropy, 1e-5).unwrap();
        assert!(full < 1e-4);
        // truncation error dominates at coarser steps
        let coarse = grad_check(&m, x.view(), t.view(), LossKind::CrossEntropy, 1e-3).unwrap();
        let half = grad_check(&m, x.view(), t.view(), LossKind::CrossEntropy, 5e-4).unwrap();
        assert!(half <= 4.0 * coarse, "{half} vs {coarse}");
    }
}

#[test]
fn lift_parameter_count() {
    let m = random_model(5, 3, 4, &mut Rng::new(3)).unwrap();
    let l = lift_model(&m);
    assert_eq!(l.hidden_units(), 6);
    assert_eq!(l.param_count(), 6 * 10 + 6 + 6 * 4 + 4);
}

#[test]
fn zero_epochs_leave_model_alone() {
    let mut rng = Rng::new(4);
    let ds = gen_mixture_classification(40, 3, 2, 4.0, &mut rng).unwrap();
    let m = init_mlp(3, 4, 2, &mut rng).unwrap();
    let (out, trace) = train(m.clone(), TrainSource::Plain(&ds), &adam_cfg(0, 0), &[]).unwrap();
    assert_eq!(out, m);
    assert!(trace.rows.is_empty());
}

#[test]
fn separable_mixture_is_fit() {
    let mut rng = Rng::new(5);
    let ds = gen_mixture_classification(200, 5, 2, 12.0, &mut rng).unwrap();
    let m = init_mlp(5, 16, 2, &mut rng).unwrap();
    let (_, trace) = train(m, TrainSource::Plain(&ds), &adam_cfg(200, 1), &[]).unwrap();
    assert_eq!(trace.last().unwrap().train_error, Some(0.0));
}

#[test]
fn training_is_deterministic() {
    let mut rng = Rng::new(6);
    let all = gen_mixture_classification(150, 4, 3, 2.0, &mut rng).unwrap();
    let train_set = all.select(&(0..100).collect::<Vec<_>>());
    let test_set = all.select(&(100..150).collect::<Vec<_>>());
    let m = init_mlp(8, 6, 3, &mut rng).unwrap();
    let view = ConcatView::classification(&train_set, PairMode::Averaged).unwrap();
    let test2 = ClassificationDataset {
        features: ndarray::concatenate![Axis(1), test_set.features, test_set.features],
        targets: test_set.targets.clone(),
        mode: test_set.mode,
    };
    let run = || {
        train(
            m.clone(),
            TrainSource::Concat(view),
            &adam_cfg(5, 9),
            &[&test2],
        )
        .unwrap()
    };
    let (a, ta) = run();
    let (b, tb) = run();
    assert_eq!(a, b);
    assert!(ta.same_metrics(&tb));
    assert!(ta.rows.iter().all(|r| r.train_error.is_none()));
}

#[test]
fn untrained_model_is_at_chance() {
    let mut rng = Rng::new(7);
    let ds = gen_mixture_classification(10_000, 20, 10, 3.0, &mut rng).unwrap();
    let m = init_mlp(20, 32, 10, &mut rng).unwrap();
    let err = classify_error(&m, ds.features.view(), ds.targets.view()).unwrap();
    assert!((0.87..=0.93).contains(&err), "{err}");
}

#[test]
fn classify_error_extremes() {
    let t = ndarray::array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]];
    // a model whose logits equal its inputs
    let mut m = MlpModel::zeros(2, 2, 2);
    m.w1 = ndarray::array![[1.0, 0.0], [0.0, 1.0]];
    m.b1.fill(1.0);
    m.w2 = ndarray::array![[1.0, 0.0], [0.0, 1.0]];
    m.b2.fill(-1.0);
    assert_eq!(classify_error(&m, t.view(), t.view()).unwrap(), 0.0);
    let neg = t.mapv(|v| -v);
    m.w2 = ndarray::array![[-1.0, 0.0], [0.0, -1.0]];
    m.b2.fill(1.0);
    let logits = m.forward(t.view()).unwrap();
    assert_eq!(logits, neg);
    assert_eq!(classify_error(&m, t.view(), t.view()).unwrap(), 1.0);
}

#[test]
fn uniform_logits_cost_ln_c() {
    for c in [2usize, 10, 100] {
        let m = MlpModel::zeros(3, 2, c);
        let x = Array2::ones((2, 3));
        let mut t = Array2::zeros((2, c));
        t[[0, 1]] = 1.0;
        t[[1, 0]] = 0.5;
        t[[1, c - 1]] = 0.5;
        let l = loss_only(&m, x.view(), t.view(), LossKind::CrossEntropy).unwrap();
        assert!((l - (c as f64).ln()).abs() < 1e-12);
    }
}
