//! Synthetic data, IDX loading, label noise and disjoint splits.
//!
//! All generators consume a [`Rng`] in a fixed order and never touch any
//! other source of randomness, so equal seeds give bit-identical datasets.

mod idx;

pub use idx::{
    inspect_idx, load_idx, read_idx_images, read_idx_labels, write_idx, write_idx_images,
    write_idx_labels, IdxHeader, IdxImages, IdxLabels, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Tolerance for "row sums to one".
pub const SUM_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionDataset {
    pub features: Array2<f64>,
    pub targets: Array1<f64>,
    pub true_theta: Option<Array1<f64>>,
}

impl RegressionDataset {
    pub fn new(features: Array2<f64>, targets: Array1<f64>) -> Result<Self> {
        if features.nrows() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                got: targets.len(),
                context: "regression targets",
            });
        }
        Ok(RegressionDataset {
            features,
            targets,
            true_theta: None,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }
}

/// How the soft-label rows of a [`ClassificationDataset`] are to be read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetMode {
    /// Every row is a probability vector (cross-entropy targets).
    Distribution,
    /// Every entry is 0 or 1 (binary cross-entropy targets).
    MultiHot,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassificationDataset {
    pub features: Array2<f64>,
    pub targets: Array2<f64>,
    pub mode: TargetMode,
}

impl ClassificationDataset {
    pub fn new(features: Array2<f64>, targets: Array2<f64>, mode: TargetMode) -> Result<Self> {
        if features.nrows() != targets.nrows() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                got: targets.nrows(),
                context: "classification targets",
            });
        }
        if targets.ncols() == 0 {
            return Err(Error::InvalidDimension("class count must be >= 1".into()));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        check_target_mode(targets.view(), mode)?;
        Ok(ClassificationDataset {
            features,
            targets,
            mode,
        })
    }

    /// One-hot dataset from integer labels.
    pub fn from_labels(
        features: Array2<f64>,
        labels: &[usize],
        class_count: usize,
    ) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {class_count} classes"
            )));
        }
        let mut targets = Array2::zeros((labels.len(), class_count));
        for (i, &l) in labels.iter().enumerate() {
            targets[[i, l]] = 1.0;
        }
        Self::new(features, targets, TargetMode::Distribution)
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_count(&self) -> usize {
        self.targets.ncols()
    }

    pub fn is_one_hot(&self) -> bool {
        self.targets
            .rows()
            .into_iter()
            .all(|r| one_hot_index(r).is_some())
    }

    /// Argmax labels, ties toward the lowest index.
    pub fn labels(&self) -> Vec<usize> {
        self.targets.rows().into_iter().map(argmax).collect()
    }

    pub fn select(&self, rows: &[usize]) -> ClassificationDataset {
        ClassificationDataset {
            features: self.features.select(Axis(0), rows),
            targets: self.targets.select(Axis(0), rows),
            mode: self.mode,
        }
    }

    /// SHA-256 over the shape, features and targets as little-endian bytes.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for dim in [self.len(), self.dim(), self.class_count()] {
            h.update((dim as u64).to_le_bytes());
        }
        for v in self.features.iter().chain(self.targets.iter()) {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

pub(crate) fn check_target_mode(targets: ndarray::ArrayView2<f64>, mode: TargetMode) -> Result<()> {
    for (i, row) in targets.rows().into_iter().enumerate() {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("targets"));
        }
        match mode {
            TargetMode::Distribution => {
                let s: f64 = row.sum();
                if (s - 1.0).abs() > SUM_TOL || row.iter().any(|&v| v < 0.0) {
                    return Err(Error::ModeMismatch(format!(
                        "row {i} is not a probability vector (sum {s})"
                    )));
                }
            }
            TargetMode::MultiHot => {
                if row.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::ModeMismatch(format!(
                        "row {i} has entries outside {{0,1}}"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Index of the single 1 in an exact one-hot row.
pub fn one_hot_index(row: ArrayView1<f64>) -> Option<usize> {
    let mut hot = None;
    for (k, &v) in row.iter().enumerate() {
        if v == 1.0 {
            if hot.is_some() {
                return None;
            }
            hot = Some(k);
        } else if v != 0.0 {
            return None;
        }
    }
    hot
}

/// Argmax with ties broken toward the lowest index.
pub fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub fraction: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::InvalidArgument(format!(
                "noise fraction {fraction} outside [0, 1]"
            )));
        }
        Ok(NoiseSpec { fraction, seed })
    }

    /// `floor(fraction * n)`. The product is nudged by 1e-9 so that values
    /// like 0.29 * 100 land on 29 instead of 28.999999999999996.
    pub fn count(&self, n: usize) -> usize {
        ((self.fraction * n as f64 + 1e-9).floor() as usize).min(n)
    }
}

/// Standard Gaussian direction rescaled to unit Euclidean norm.
pub fn sample_theta(d: usize, rng: &mut Rng) -> Result<Array1<f64>> {
    if d == 0 {
        return Err(Error::InvalidDimension("theta needs d >= 1".into()));
    }
    loop {
        let v: Array1<f64> = (0..d).map(|_| rng.normal()).collect();
        let norm = v.dot(&v).sqrt();
        if norm > 0.0 {
            return Ok(v / norm);
        }
    }
}

/// `y_i = theta . x_i + sigma * eps_i` with `x_i ~ N(0, I_d)`.
///
/// Stream order per row: the `d` feature draws, then the noise draw.
pub fn gen_linreg(
    n: usize,
    d: usize,
    sigma: f64,
    theta: &Array1<f64>,
    rng: &mut Rng,
) -> Result<RegressionDataset> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidDimension(format!("n={n}, d={d}")));
    }
    if theta.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: theta.len(),
            context: "theta",
        });
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma {sigma} must be >= 0"
        )));
    }
    let mut features = Array2::zeros((n, d));
    let mut targets = Array1::zeros(n);
    for i in 0..n {
        let mut row = features.row_mut(i);
        for v in row.iter_mut() {
            *v = rng.normal();
        }
        let noise = rng.normal();
        targets[i] = theta.dot(&row) + sigma * noise;
    }
    Ok(RegressionDataset {
        features,
        targets,
        true_theta: Some(theta.clone()),
    })
}

/// Class means of a Gaussian mixture: `c` standard Gaussian directions, each
/// rescaled to norm `separation`. Drawn row by row.
pub fn mixture_means(d: usize, c: usize, separation: f64, rng: &mut Rng) -> Result<Array2<f64>> {
    let mut means = Array2::zeros((c, d));
    for mut row in means.rows_mut() {
        let dir = sample_theta(d, rng)?;
        row.assign(&(dir * separation));
    }
    Ok(means)
}

/// Gaussian mixture with unit-variance classes around means on a sphere of
/// radius `separation`.
///
/// Row `i` belongs to class `i mod c`, so class sizes are as equal as
/// possible and any prefix of the rows is itself balanced. Stream order:
/// the class means (see [`mixture_means`]), then `d` draws per row.
pub fn gen_mixture_classification(
    n: usize,
    d: usize,
    c: usize,
    separation: f64,
    rng: &mut Rng,
) -> Result<ClassificationDataset> {
    if d == 0 {
        return Err(Error::InvalidDimension("mixture needs d >= 1".into()));
    }
    if c < 2 {
        return Err(Error::InvalidArgument(format!(
            "mixture needs c >= 2, got {c}"
        )));
    }
    if n < c {
        return Err(Error::InvalidArgument(format!(
            "mixture needs n >= c, got n={n}, c={c}"
        )));
    }
    if !(separation > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "separation {separation} must be > 0"
        )));
    }
    let means = mixture_means(d, c, separation, rng)?;
    let mut features = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % c;
        let mean = means.row(class);
        for (k, v) in features.row_mut(i).iter_mut().enumerate() {
            *v = mean[k] + rng.normal();
        }
        labels.push(class);
    }
    ClassificationDataset::from_labels(features, &labels, c)
}

/// Relabels exactly `floor(p n)` rows, chosen without replacement, with a
/// uniformly drawn wrong class.
///
/// Stream order: row selection by partial Fisher-Yates, then one
/// `below(c - 1)` draw per selected row in selection order.
pub fn apply_label_noise(
    ds: &ClassificationDataset,
    spec: NoiseSpec,
) -> Result<ClassificationDataset> {
    NoiseSpec::new(spec.fraction, spec.seed)?;
    let labels: Vec<usize> = ds
        .targets
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            one_hot_index(r).ok_or_else(|| {
                Error::ModeMismatch(format!(
                    "label noise needs one-hot targets; row {i} is soft (apply noise before concatenation)"
                ))
            })
        })
        .collect::<Result<_>>()?;
    let c = ds.class_count();
    let n = ds.len();
    let count = spec.count(n);
    if count == 0 {
        return Ok(ds.clone());
    }
    if c < 2 {
        return Err(Error::InvalidArgument(
            "label noise needs at least 2 classes".into(),
        ));
    }
    let mut rng = Rng::new(spec.seed);
    let chosen = rng.choose_distinct(n, count);
    let mut out = ds.clone();
    for i in chosen {
        let old = labels[i];
        let r = rng.below_usize(c - 1);
        let new = if r < old { r } else { r + 1 };
        let mut row = out.targets.row_mut(i);
        row.fill(0.0);
        row[new] = 1.0;
    }
    Ok(out)
}

/// `k` disjoint blocks of `split_size` rows taken from a seeded permutation.
pub fn split_k(
    ds: &ClassificationDataset,
    k: usize,
    split_size: usize,
    rng: &mut Rng,
) -> Result<Vec<ClassificationDataset>> {
    Ok(split_indices(ds.len(), k, split_size, rng)?
        .iter()
        .map(|block| ds.select(block))
        .collect())
}

/// The index blocks used by [`split_k`].
pub fn split_indices(
    n: usize,
    k: usize,
    split_size: usize,
    rng: &mut Rng,
) -> Result<Vec<Vec<usize>>> {
    if k == 0 || split_size == 0 {
        return Err(Error::InvalidArgument(
            "k and split_size must be >= 1".into(),
        ));
    }
    let needed = k.checked_mul(split_size).unwrap_or(usize::MAX);
    if needed > n {
        return Err(Error::InvalidArgument(format!(
            "{k} splits of {split_size} need {needed} rows, dataset has {n}"
        )));
    }
    let perm = rng.permutation(n);
    Ok(perm
        .chunks(split_size)
        .take(k)
        .map(|c| c.to_vec())
        .collect())
}

/// Per-feature standardization fitted on `train` and applied to both sets.
/// Constant features are centered only.
pub fn standardize(
    train: &ClassificationDataset,
    test: &ClassificationDataset,
) -> (ClassificationDataset, ClassificationDataset) {
    let mean = train
        .features
        .mean_axis(Axis(0))
        .expect("nonempty train set");
    let std = train
        .features
        .std_axis(Axis(0), 0.0)
        .mapv(|s| if s > 0.0 { s } else { 1.0 });
    let apply = |ds: &ClassificationDataset| ClassificationDataset {
        features: (&ds.features - &mean) / &std,
        targets: ds.targets.clone(),
        mode: ds.mode,
    };
    (apply(train), apply(test))
}
