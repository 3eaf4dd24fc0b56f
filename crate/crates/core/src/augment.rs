//! Concatenated-inputs construction.
//!
//! From `n` base samples the training view holds all `n^2` ordered pairs
//! `([x_i | x_j], combine(y_i, y_j))`, diagonal included, enumerated
//! row-major over `(i, j)`. Test sets pair each input with itself and keep
//! the original target. Views are computed on demand; only
//! [`materialize`] allocates the full grid.

use std::collections::HashSet;

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, Axis};

use crate::datagen::{ClassificationDataset, RegressionDataset, TargetMode};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Default memory budget for [`materialize`]: 1 GiB.
pub const DEFAULT_MEMORY_BUDGET: u128 = 1 << 30;

/// How two targets are combined into a pair target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairMode {
    /// `(y1 + y2) / 2`; probability rows stay probability rows.
    Averaged,
    /// Element-wise maximum of two `{0,1}` rows, for binary cross-entropy.
    MultiHot,
}

impl PairMode {
    pub fn target_mode(self) -> TargetMode {
        match self {
            PairMode::Averaged => TargetMode::Distribution,
            PairMode::MultiHot => TargetMode::MultiHot,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Scalar(f64),
    Row(Array1<f64>),
}

/// Combines one pair of samples.
pub fn concat_pair(
    x1: ArrayView1<f64>,
    y1: &Target,
    x2: ArrayView1<f64>,
    y2: &Target,
    mode: PairMode,
) -> Result<(Array1<f64>, Target)> {
    if x1.len() != x2.len() {
        return Err(Error::DimensionMismatch {
            expected: x1.len(),
            got: x2.len(),
            context: "pair inputs",
        });
    }
    let features = concatenate![Axis(0), x1, x2];
    let target = match (y1, y2, mode) {
        (Target::Scalar(a), Target::Scalar(b), PairMode::Averaged) => Target::Scalar((a + b) / 2.0),
        (Target::Scalar(_), Target::Scalar(_), PairMode::MultiHot) => {
            return Err(Error::ModeMismatch(
                "multi-hot pairing needs class targets".into(),
            ))
        }
        (Target::Row(a), Target::Row(b), mode) => {
            if a.len() != b.len() {
                return Err(Error::DimensionMismatch {
                    expected: a.len(),
                    got: b.len(),
                    context: "pair targets",
                });
            }
            Target::Row(combine_rows(a.view(), b.view(), mode)?)
        }
        _ => {
            return Err(Error::ModeMismatch(
                "cannot pair a scalar with a class row".into(),
            ))
        }
    };
    Ok((features, target))
}

fn combine_rows(a: ArrayView1<f64>, b: ArrayView1<f64>, mode: PairMode) -> Result<Array1<f64>> {
    match mode {
        PairMode::Averaged => Ok((&a + &b) / 2.0),
        PairMode::MultiHot => {
            if a.iter().chain(b.iter()).any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::ModeMismatch(
                    "multi-hot pairing needs {0,1} targets".into(),
                ));
            }
            Ok(ndarray::Zip::from(&a)
                .and(&b)
                .map_collect(|&u, &v| u.max(v)))
        }
    }
}

/// A base dataset the pair view can draw from.
pub trait PairSource {
    /// Batched targets: a vector for regression, a matrix for classes.
    type Targets;

    fn n_samples(&self) -> usize;
    fn features(&self) -> ndarray::ArrayView2<'_, f64>;
    fn target(&self, i: usize) -> Target;
    fn pair_targets(&self, pairs: &[(usize, usize)], mode: PairMode) -> Self::Targets;
    fn self_concat_targets(&self) -> Self::Targets;
}

impl PairSource for RegressionDataset {
    type Targets = Array1<f64>;

    fn n_samples(&self) -> usize {
        self.len()
    }

    fn features(&self) -> ndarray::ArrayView2<'_, f64> {
        self.features.view()
    }

    fn target(&self, i: usize) -> Target {
        Target::Scalar(self.targets[i])
    }

    fn pair_targets(&self, pairs: &[(usize, usize)], _mode: PairMode) -> Array1<f64> {
        pairs
            .iter()
            .map(|&(i, j)| (self.targets[i] + self.targets[j]) / 2.0)
            .collect()
    }

    fn self_concat_targets(&self) -> Array1<f64> {
        self.targets.clone()
    }
}

impl PairSource for ClassificationDataset {
    type Targets = Array2<f64>;

    fn n_samples(&self) -> usize {
        self.len()
    }

    fn features(&self) -> ndarray::ArrayView2<'_, f64> {
        self.features.view()
    }

    fn target(&self, i: usize) -> Target {
        Target::Row(self.targets.row(i).to_owned())
    }

    fn pair_targets(&self, pairs: &[(usize, usize)], mode: PairMode) -> Array2<f64> {
        let c = self.class_count();
        let mut out = Array2::zeros((pairs.len(), c));
        for (k, &(i, j)) in pairs.iter().enumerate() {
            let (a, b) = (self.targets.row(i), self.targets.row(j));
            let mut row = out.row_mut(k);
            for m in 0..c {
                row[m] = match mode {
                    PairMode::Averaged => (a[m] + b[m]) / 2.0,
                    PairMode::MultiHot => a[m].max(b[m]),
                };
            }
        }
        out
    }

    fn self_concat_targets(&self) -> Array2<f64> {
        self.targets.clone()
    }
}

/// Virtual `n^2`-pair training view over a borrowed base dataset.
#[derive(Debug)]
pub struct ConcatView<'a, D> {
    base: &'a D,
    mode: PairMode,
}

impl<D> Clone for ConcatView<'_, D> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<D> Copy for ConcatView<'_, D> {}

impl<'a> ConcatView<'a, RegressionDataset> {
    pub fn regression(base: &'a RegressionDataset) -> Result<Self> {
        build_concat_train_view(base, PairMode::Averaged)
    }
}

impl<'a> ConcatView<'a, ClassificationDataset> {
    pub fn classification(base: &'a ClassificationDataset, mode: PairMode) -> Result<Self> {
        build_concat_train_view(base, mode)
    }

    pub fn target_mode(&self) -> TargetMode {
        self.mode.target_mode()
    }

    pub fn class_count(&self) -> usize {
        self.base.class_count()
    }
}

/// Builds the pair view. Multi-hot mode requires `{0,1}` base targets.
pub fn build_concat_train_view<D: PairSource + ValidateMode>(
    base: &D,
    mode: PairMode,
) -> Result<ConcatView<'_, D>> {
    if base.n_samples() == 0 {
        return Err(Error::InvalidArgument(
            "concat view over an empty dataset".into(),
        ));
    }
    base.validate_mode(mode)?;
    Ok(ConcatView { base, mode })
}

/// Checks that a base dataset's targets can be paired under a mode.
pub trait ValidateMode {
    fn validate_mode(&self, mode: PairMode) -> Result<()>;
}

impl ValidateMode for RegressionDataset {
    fn validate_mode(&self, mode: PairMode) -> Result<()> {
        match mode {
            PairMode::Averaged => Ok(()),
            PairMode::MultiHot => Err(Error::ModeMismatch(
                "multi-hot pairing needs class targets".into(),
            )),
        }
    }
}

impl ValidateMode for ClassificationDataset {
    fn validate_mode(&self, mode: PairMode) -> Result<()> {
        match mode {
            PairMode::Averaged => {
                crate::datagen::check_target_mode(self.targets.view(), TargetMode::Distribution)
            }
            PairMode::MultiHot => {
                crate::datagen::check_target_mode(self.targets.view(), TargetMode::MultiHot)
            }
        }
    }
}

/// A concrete batch of pairs drawn from a view.
#[derive(Clone, Debug, PartialEq)]
pub struct PairBatch<T> {
    pub indices: Vec<(usize, usize)>,
    pub features: Array2<f64>,
    pub targets: T,
}

impl<'a, D: PairSource> ConcatView<'a, D> {
    pub fn base(&self) -> &'a D {
        self.base
    }

    pub fn mode(&self) -> PairMode {
        self.mode
    }

    pub fn base_len(&self) -> usize {
        self.base.n_samples()
    }

    /// `n^2`, as `u64` so that `n = 50_000` fits.
    pub fn pair_count(&self) -> u64 {
        let n = self.base.n_samples() as u64;
        n * n
    }

    pub fn input_dim(&self) -> usize {
        2 * self.base.features().ncols()
    }

    /// Pair at row-major flat position `p = i * n + j`.
    pub fn pair_at(&self, p: u64) -> (usize, usize) {
        let n = self.base.n_samples() as u64;
        ((p / n) as usize, (p % n) as usize)
    }

    pub fn element(&self, i: usize, j: usize) -> (Array1<f64>, Target) {
        let x = self.base.features();
        concat_pair(
            x.row(i),
            &self.base.target(i),
            x.row(j),
            &self.base.target(j),
            self.mode,
        )
        .expect("view targets validated at construction")
    }

    /// Every element in row-major `(i, j)` order.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), Array1<f64>, Target)> + '_ {
        (0..self.pair_count()).map(move |p| {
            let (i, j) = self.pair_at(p);
            let (x, y) = self.element(i, j);
            ((i, j), x, y)
        })
    }

    /// Gathers the given pairs into a dense batch.
    pub fn batch(&self, indices: &[(usize, usize)]) -> PairBatch<D::Targets> {
        let x = self.base.features();
        let d = x.ncols();
        let mut features = Array2::zeros((indices.len(), 2 * d));
        for (k, &(i, j)) in indices.iter().enumerate() {
            let mut row = features.row_mut(k);
            row.slice_mut(s![..d]).assign(&x.row(i));
            row.slice_mut(s![d..]).assign(&x.row(j));
        }
        PairBatch {
            indices: indices.to_vec(),
            features,
            targets: self.base.pair_targets(indices, self.mode),
        }
    }
}

/// Draws `m` distinct pairs uniformly from the `n^2` grid, in random order.
///
/// When `m` is at least a quarter of the grid a partial Fisher-Yates over
/// all flat indices is used; otherwise flat indices are drawn with
/// `below(n^2)` and duplicates are rejected.
pub fn sample_pair_indices<D: PairSource>(
    view: &ConcatView<'_, D>,
    m: usize,
    rng: &mut Rng,
) -> Result<Vec<(usize, usize)>> {
    let total = view.pair_count();
    if m == 0 {
        return Err(Error::InvalidArgument(
            "pair sample size must be >= 1".into(),
        ));
    }
    if m as u64 > total {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {m} distinct pairs from a grid of {total}"
        )));
    }
    let flat: Vec<u64> = if (m as u64) * 4 >= total {
        rng.choose_distinct(total as usize, m)
            .into_iter()
            .map(|p| p as u64)
            .collect()
    } else {
        let mut seen = HashSet::with_capacity(m);
        let mut out = Vec::with_capacity(m);
        while out.len() < m {
            let p = rng.below(total);
            if seen.insert(p) {
                out.push(p);
            }
        }
        out
    };
    Ok(flat.into_iter().map(|p| view.pair_at(p)).collect())
}

pub fn sample_pairs<D: PairSource>(
    view: &ConcatView<'_, D>,
    m: usize,
    rng: &mut Rng,
) -> Result<PairBatch<D::Targets>> {
    let idx = sample_pair_indices(view, m, rng)?;
    Ok(view.batch(&idx))
}

/// Self-concatenated evaluation inputs `[x_i | x_i]` with original targets.
pub trait SelfConcat: Sized {
    fn self_concat(&self) -> Self;
}

impl SelfConcat for ClassificationDataset {
    fn self_concat(&self) -> Self {
        ClassificationDataset {
            features: concatenate![Axis(1), self.features, self.features],
            targets: self.targets.clone(),
            mode: self.mode,
        }
    }
}

impl SelfConcat for RegressionDataset {
    fn self_concat(&self) -> Self {
        RegressionDataset {
            features: concatenate![Axis(1), self.features, self.features],
            targets: self.targets.clone(),
            true_theta: None,
        }
    }
}

pub fn build_concat_test<D: SelfConcat>(base: &D) -> D {
    base.self_concat()
}

/// Bytes needed to materialize a view (features plus targets as `f64`).
pub fn materialized_bytes<D: PairSource>(view: &ConcatView<'_, D>, target_width: usize) -> u128 {
    view.pair_count() as u128 * (view.input_dim() + target_width) as u128 * 8
}

/// Dense copy of the whole view in row-major `(i, j)` order.
pub trait Materialize {
    type Output;
    fn materialize(&self, budget_bytes: u128) -> Result<Self::Output>;
}

impl Materialize for ConcatView<'_, RegressionDataset> {
    type Output = RegressionDataset;

    fn materialize(&self, budget_bytes: u128) -> Result<RegressionDataset> {
        let needed = materialized_bytes(self, 1);
        if needed > budget_bytes {
            return Err(Error::TooLarge {
                needed,
                budget: budget_bytes,
            });
        }
        let all: Vec<(usize, usize)> = (0..self.pair_count()).map(|p| self.pair_at(p)).collect();
        let b = self.batch(&all);
        RegressionDataset::new(b.features, b.targets)
    }
}

impl Materialize for ConcatView<'_, ClassificationDataset> {
    type Output = ClassificationDataset;

    fn materialize(&self, budget_bytes: u128) -> Result<ClassificationDataset> {
        let needed = materialized_bytes(self, self.base.class_count());
        if needed > budget_bytes {
            return Err(Error::TooLarge {
                needed,
                budget: budget_bytes,
            });
        }
        let all: Vec<(usize, usize)> = (0..self.pair_count()).map(|p| self.pair_at(p)).collect();
        let b = self.batch(&all);
        ClassificationDataset::new(b.features, b.targets, self.mode.target_mode())
    }
}

pub fn materialize<V: Materialize>(view: &V, budget_bytes: u128) -> Result<V::Output> {
    view.materialize(budget_bytes)
}
