//! Minimum-norm least squares and the sample-size sweep.
//!
//! `pinv_solve` returns `V Σ⁺ Uᵀ y` from a thin SVD. Singular values at or
//! below `max(m, q) * f64::EPSILON * σ_max` are treated as zero. Tall
//! designs are first reduced with a Householder QR (`X = QR`, singular
//! values of `R` equal those of `X`), which keeps the `n^2 x 2d`
//! concatenated designs cheap.

use nalgebra::{DMatrix, DVector, SVD};
use ndarray::{Array1, ArrayView1, ArrayView2};
use rayon::prelude::*;

use crate::augment::{ConcatView, Materialize, SelfConcat, DEFAULT_MEMORY_BUDGET};
use crate::datagen::{gen_linreg, sample_theta, RegressionDataset};
use crate::error::{Error, Result};
use crate::rng::{mix, Rng};
use crate::sweep::{summarize, AxisName, CurvePoint, GroupField, Variant};

#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub theta_hat: Array1<f64>,
    pub effective_rank: usize,
    pub sv_cutoff: f64,
}

impl LinearModel {
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.theta_hat.len() {
            return Err(Error::DimensionMismatch {
                expected: self.theta_hat.len(),
                got: x.ncols(),
                context: "linear model input",
            });
        }
        Ok(x.dot(&self.theta_hat))
    }
}

fn to_nalgebra(x: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[[i, j]])
}

fn check_finite(x: ArrayView2<f64>, y: Option<ArrayView1<f64>>) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("design matrix"));
    }
    if let Some(y) = y {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("targets"));
        }
    }
    Ok(())
}

fn svd(m: DMatrix<f64>) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let (r, c) = m.shape();
    SVD::try_new(m, true, true, f64::EPSILON, 200 * r.max(c).max(1))
        .ok_or_else(|| Error::Numeric(format!("SVD of a {r}x{c} matrix did not converge")))
}

fn cutoff(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON * sigma_max
}

/// Singular values, in descending order, of `x` (QR-reduced when tall).
fn singular_values(x: DMatrix<f64>) -> Result<DVector<f64>> {
    let (m, q) = x.shape();
    let reduced = if m > q { x.qr().r() } else { x };
    let (r, c) = reduced.shape();
    SVD::try_new(reduced, false, false, f64::EPSILON, 200 * r.max(c).max(1))
        .map(|s| s.singular_values)
        .ok_or_else(|| Error::Numeric(format!("SVD of a {m}x{q} matrix did not converge")))
}

/// Minimum-norm least-squares solution `X⁺ y`.
pub fn pinv_solve(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<LinearModel> {
    let (m, q) = x.dim();
    if m == 0 || q == 0 {
        return Err(Error::InvalidDimension(format!("design is {m}x{q}")));
    }
    if y.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: y.len(),
            context: "targets vs design rows",
        });
    }
    check_finite(x, Some(y))?;

    let xm = to_nalgebra(x);
    let mut rhs = DVector::from_iterator(m, y.iter().copied());
    let decomposition = if m > q {
        let qr = xm.qr();
        qr.q_tr_mul(&mut rhs);
        rhs = rhs.rows(0, q).into_owned();
        svd(qr.r())?
    } else {
        svd(xm)?
    };
    let u = decomposition.u.as_ref().expect("u requested");
    let v_t = decomposition.v_t.as_ref().expect("v requested");
    let sv = &decomposition.singular_values;
    let sigma_max = sv.iter().copied().fold(0.0, f64::max);
    let tol = cutoff(m, q, sigma_max);

    let uty = u.tr_mul(&rhs);
    let mut theta = DVector::zeros(q);
    let mut rank = 0;
    for k in 0..sv.len() {
        if sv[k] > tol {
            rank += 1;
            theta.axpy(uty[k] / sv[k], &v_t.row(k).transpose(), 1.0);
        }
    }
    Ok(LinearModel {
        theta_hat: theta.iter().copied().collect(),
        effective_rank: rank,
        sv_cutoff: tol,
    })
}

/// Numerical rank with the cutoff rule of [`pinv_solve`].
pub fn design_rank(x: ArrayView2<f64>) -> Result<usize> {
    let (m, q) = x.dim();
    if m == 0 || q == 0 {
        return Ok(0);
    }
    check_finite(x, None)?;
    let sv = singular_values(to_nalgebra(x))?;
    let sigma_max = sv.iter().copied().fold(0.0, f64::max);
    let tol = cutoff(m, q, sigma_max);
    Ok(sv.iter().filter(|&&s| s > tol).count())
}

/// `(1/n) Σ (θ̂·x_i − y_i)²`.
pub fn mse(model: &LinearModel, ds: &RegressionDataset) -> Result<f64> {
    let pred = model.predict(ds.features.view())?;
    Ok((&pred - &ds.targets).mapv(|r| r * r).mean().unwrap_or(0.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinregSweepSpec {
    pub experiment_id: String,
    pub d: usize,
    pub sigma: f64,
    pub n_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    pub n_test: usize,
    pub memory_budget: u128,
}

impl Default for LinregSweepSpec {
    fn default() -> Self {
        LinregSweepSpec {
            experiment_id: "linreg-sample".into(),
            d: 30,
            sigma: 0.1,
            n_grid: (1..=50).map(|k| 2 * k).collect(),
            seeds: (0..20).collect(),
            n_test: 10_000,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }
}

/// One `(n, seed)` cell: a single draw of `θ`, train and test data, fitted
/// by every requested variant. Sharing the draw keeps variants paired.
///
/// Stream: `Rng::new(mix(seed, n))` yields `θ`, then the train set, then
/// the test set.
pub fn linreg_cell(
    spec: &LinregSweepSpec,
    n: usize,
    seed: u64,
    variants: &[Variant],
) -> Result<Vec<CurvePoint>> {
    let mut rng = Rng::new(mix(seed, n as u64));
    let theta = sample_theta(spec.d, &mut rng)?;
    let train = gen_linreg(n, spec.d, spec.sigma, &theta, &mut rng)?;
    let test = gen_linreg(spec.n_test, spec.d, spec.sigma, &theta, &mut rng)?;

    let mut out = Vec::with_capacity(variants.len());
    for &variant in variants {
        let (model, train_mse, test_mse) = match variant {
            Variant::Standard => {
                let model = pinv_solve(train.features.view(), train.targets.view())?;
                let tr = mse(&model, &train)?;
                let te = mse(&model, &test)?;
                (model, tr, te)
            }
            Variant::Concat => {
                let design = ConcatView::regression(&train)?.materialize(spec.memory_budget)?;
                let model = pinv_solve(design.features.view(), design.targets.view())?;
                let tr = mse(&model, &design)?;
                let te = mse(&model, &test.self_concat())?;
                (model, tr, te)
            }
        };
        let params = model.theta_hat.len();
        let mut p = CurvePoint::new(
            spec.experiment_id.clone(),
            variant,
            AxisName::Samples,
            n as f64,
        );
        p.train_loss = Some(train_mse);
        p.test_loss = Some(test_mse);
        p.seed = Some(seed);
        p.params = Some(params);
        p.param_sample_ratio = Some(params as f64 / n as f64);
        out.push(p);
    }
    Ok(out)
}

/// Per-seed points for every `(n, seed)` followed, for each `n`, by one
/// median point per variant. Ordering is by `n`, then seed, then variant,
/// independent of how cells are scheduled.
pub fn linreg_sample_sweep(
    spec: &LinregSweepSpec,
    variants: &[Variant],
) -> Result<Vec<CurvePoint>> {
    if spec.n_grid.is_empty() {
        return Err(Error::InvalidArgument("n_grid is empty".into()));
    }
    if spec.seeds.is_empty() || variants.is_empty() {
        return Err(Error::InvalidArgument(
            "need at least one seed and one variant".into(),
        ));
    }
    if spec.n_test == 0 {
        return Err(Error::InvalidArgument("n_test must be >= 1".into()));
    }
    if spec.n_grid.contains(&0) {
        return Err(Error::InvalidArgument("n_grid entries must be >= 1".into()));
    }
    let cells: Vec<(usize, u64)> = spec
        .n_grid
        .iter()
        .flat_map(|&n| spec.seeds.iter().map(move |&s| (n, s)))
        .collect();
    let per_cell: Vec<Vec<CurvePoint>> = cells
        .par_iter()
        .map(|&(n, seed)| linreg_cell(spec, n, seed, variants))
        .collect::<Result<_>>()?;

    let mut out = Vec::new();
    for (gi, &n) in spec.n_grid.iter().enumerate() {
        let group: Vec<CurvePoint> = per_cell[gi * spec.seeds.len()..(gi + 1) * spec.seeds.len()]
            .iter()
            .flatten()
            .cloned()
            .collect();
        let medians = summarize(&group, &[GroupField::Variant])?;
        out.extend(group);
        let mut med: Vec<CurvePoint> = medians.iter().map(|r| r.median_point()).collect();
        med.sort_by_key(|p| variants.iter().position(|&v| v == p.variant));
        debug_assert!(med.iter().all(|p| p.axis_value == n as f64));
        out.extend(med);
    }
    Ok(out)
}

/// The median rows of a sweep for one variant, in grid order.
pub fn median_curve(points: &[CurvePoint], variant: Variant) -> Vec<(f64, f64)> {
    points
        .iter()
        .filter(|p| p.variant == variant && p.status == crate::sweep::Status::Median)
        .filter_map(|p| p.test_loss.map(|l| (p.axis_value, l)))
        .collect()
}

/// Grid location of the largest value; first occurrence wins.
pub fn argmax_location(curve: &[(f64, f64)]) -> Option<f64> {
    curve
        .iter()
        .fold(None::<(f64, f64)>, |best, &(x, y)| match best {
            Some((_, by)) if by >= y => best,
            _ => Some((x, y)),
        })
        .map(|(x, _)| x)
}
