use ddlab::augment::{ConcatView, Materialize};
use ddlab::datagen::{gen_linreg, sample_theta, RegressionDataset};
use ddlab::linreg::{design_rank, linreg_sample_sweep, mse, pinv_solve, LinregSweepSpec};
use ddlab::sweep::{Status, Variant};
use ddlab::Rng;
use ndarray::{Array1, Array2};

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

fn gram(x: &Array2<f64>, rows: bool) -> Vec<Vec<f64>> {
    let g = if rows { x.dot(&x.t()) } else { x.t().dot(x) };
    g.outer_iter().map(|r| r.to_vec()).collect()
}

fn gaussian(rows: usize, cols: usize, rng: &mut Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.normal())
}

#[test]
fn overdetermined_matches_normal_equations() {
    let mut rng = Rng::new(11);
    for _ in 0..20 {
        let x = gaussian(5, 3, &mut rng);
        let y = Array1::from_shape_simple_fn(5, || rng.normal());
        let want = gauss_solve(gram(&x, false), x.t().dot(&y).to_vec());
        let got = pinv_solve(x.view(), y.view()).unwrap();
        assert_eq!(got.effective_rank, 3);
        for (a, b) in got.theta_hat.iter().zip(&want) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }
}

#[test]
fn underdetermined_matches_row_space_solution() {
    // min-norm interpolant is X^T (X X^T)^-1 y
    let mut rng = Rng::new(12);
    for _ in 0..20 {
        let x = gaussian(3, 5, &mut rng);
        let y = Array1::from_shape_simple_fn(3, || rng.normal());
        let alpha = Array1::from(gauss_solve(gram(&x, true), y.to_vec()));
        let want = x.t().dot(&alpha);
        let got = pinv_solve(x.view(), y.view()).unwrap();
        for (a, b) in got.theta_hat.iter().zip(&want) {
            assert!((a - b).abs() < 1e-10);
        }
        // interpolates
        let resid = &x.dot(&got.theta_hat) - &y;
        assert!(resid.dot(&resid) < 1e-18 * y.dot(&y).max(1.0));
    }
}

#[test]
fn no_other_minimizer_is_shorter() {
    let mut rng = Rng::new(13);
    for _ in 0..20 {
        // rank-deficient 6x4 design: last column duplicates the first
        let mut x = gaussian(6, 4, &mut rng);
        let first = x.column(0).to_owned();
        x.column_mut(3).assign(&first);
        let y = Array1::from_shape_simple_fn(6, || rng.normal());
        let fit = pinv_solve(x.view(), y.view()).unwrap();
        assert_eq!(fit.effective_rank, 3);
        // shifting along the null direction e0 - e3 keeps the residual
        let t = rng.normal();
        let mut other = fit.theta_hat.clone();
        other[0] += t;
        other[3] -= t;
        let r1 = &x.dot(&fit.theta_hat) - &y;
        let r2 = &x.dot(&other) - &y;
        assert!((r1.dot(&r1).sqrt() - r2.dot(&r2).sqrt()).abs() < 1e-9);
        assert!(fit.theta_hat.dot(&fit.theta_hat).sqrt() <= other.dot(&other).sqrt() + 1e-9);
        assert!((fit.theta_hat[0] - fit.theta_hat[3]).abs() < 1e-10);
    }
}

#[test]
fn scale_equivariance() {
    let mut rng = Rng::new(14);
    let x = gaussian(8, 12, &mut rng);
    let y = Array1::from_shape_simple_fn(8, || rng.normal());
    let base = pinv_solve(x.view(), y.view()).unwrap();
    for c in [1e-3, 0.5, 7.0, 1e4] {
        let scaled = pinv_solve((&x * c).view(), (&y * c).view()).unwrap();
        for (a, b) in scaled.theta_hat.iter().zip(&base.theta_hat) {
            assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
        }
    }
}

#[test]
fn concat_rank_law_small_draws() {
    let mut rng = Rng::new(15);
    for d in [5, 30] {
        for n in 2..=10 {
            let theta = sample_theta(d, &mut rng).unwrap();
            let base = gen_linreg(n, d, 0.1, &theta, &mut rng).unwrap();
            let design = ConcatView::regression(&base)
                .unwrap()
                .materialize(1 << 30)
                .unwrap();
            assert_eq!(
                design_rank(design.features.view()).unwrap(),
                (2 * n - 1).min(2 * d),
                "n={n} d={d}"
            );
        }
    }
}

#[test]
fn concat_solution_is_symmetric_below_threshold() {
    let mut rng = Rng::new(16);
    let theta = sample_theta(6, &mut rng).unwrap();
    let base = gen_linreg(4, 6, 0.1, &theta, &mut rng).unwrap();
    let design = ConcatView::regression(&base)
        .unwrap()
        .materialize(1 << 30)
        .unwrap();
    let fit = pinv_solve(design.features.view(), design.targets.view()).unwrap();
    let plain = pinv_solve(base.features.view(), base.targets.view()).unwrap();
    for k in 0..6 {
        assert!((fit.theta_hat[k] - fit.theta_hat[k + 6]).abs() < 1e-10);
        assert!((2.0 * fit.theta_hat[k] - plain.theta_hat[k]).abs() < 1e-9);
    }
}

#[test]
fn zero_model_risk_is_unit() {
    let mut rng = Rng::new(17);
    let theta = sample_theta(30, &mut rng).unwrap();
    let ds = gen_linreg(100_000, 30, 0.0, &theta, &mut rng).unwrap();
    let zero = pinv_solve(
        Array2::<f64>::zeros((1, 30)).view(),
        Array1::zeros(1).view(),
    )
    .unwrap();
    let risk = mse(&zero, &ds).unwrap();
    assert!((risk - 1.0).abs() < 0.05, "{risk}");
}

#[test]
fn overdetermined_regime_risk() {
    let spec = LinregSweepSpec {
        n_grid: vec![100],
        seeds: (0..20).collect(),
        ..LinregSweepSpec::default()
    };
    let points = linreg_sample_sweep(&spec, &[Variant::Standard]).unwrap();
    let median = points.iter().find(|p| p.status == Status::Median).unwrap();
    let v = median.test_loss.unwrap();
    assert!((0.010..=0.025).contains(&v), "{v}");
}

#[test]
fn small_grid_row_counts() {
    let spec = LinregSweepSpec {
        n_grid: vec![10, 30, 100],
        seeds: vec![0, 1, 2],
        n_test: 500,
        ..LinregSweepSpec::default()
    };
    let points = linreg_sample_sweep(&spec, &[Variant::Standard, Variant::Concat]).unwrap();
    let medians = points.iter().filter(|p| p.status == Status::Median).count();
    assert_eq!(medians, 6);
    assert_eq!(points.len() - medians, 3 * 3 * 2);
    // paired variants agree below the threshold
    for n in [10.0, 30.0] {
        let get = |v: Variant| {
            points
                .iter()
                .find(|p| p.status == Status::Median && p.variant == v && p.axis_value == n)
                .unwrap()
                .test_loss
                .unwrap()
        };
        assert!(
            (get(Variant::Standard) - get(Variant::Concat)).abs()
                < 1e-8 * (1.0 + get(Variant::Standard))
        );
    }
}

#[test]
fn budget_is_enforced() {
    let mut rng = Rng::new(18);
    let theta = sample_theta(3, &mut rng).unwrap();
    let base: RegressionDataset = gen_linreg(50, 3, 0.1, &theta, &mut rng).unwrap();
    assert!(ConcatView::regression(&base)
        .unwrap()
        .materialize(1000)
        .is_err());
}
