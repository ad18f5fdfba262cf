//! Dense labelled datasets, the relaxed-bias augmentation, stratified
//! partitioning and a synthetic two-cloud generator.

mod io;

pub use io::{
    load_csv, load_dataset, load_svmlight, parse_csv, parse_svmlight, save_csv, save_dataset, save_svmlight, write_csv,
    write_svmlight, CsvOptions, DataFormat, LabelColumn,
};

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Binary class label. `Positive` is the active class (+1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}

/// Row-major dense sample matrix with one ±1 label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    n_features: usize,
    features: Vec<f64>,
    labels: Vec<Label>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, rows: Vec<Vec<f64>>, labels: Vec<Label>) -> Result<Self> {
        let n_features = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n_features) {
            return Err(Error::InvalidData(format!(
                "row {} has {} features, expected {}",
                i,
                r.len(),
                n_features
            )));
        }
        Self::from_flat(name, n_features, rows.concat(), labels)
    }

    pub fn from_flat(
        name: impl Into<String>,
        n_features: usize,
        features: Vec<f64>,
        labels: Vec<Label>,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidData("no samples".into()));
        }
        if n_features == 0 {
            return Err(Error::InvalidData("no features".into()));
        }
        if features.len() != n_features * labels.len() {
            return Err(Error::InvalidData(format!(
                "{} feature values do not fill {} rows of {} columns",
                features.len(),
                labels.len(),
                n_features
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite feature value in row {}, column {}",
                pos / n_features,
                pos % n_features
            )));
        }
        Ok(Self {
            name: name.into(),
            n_features,
            features,
            labels,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.n_features)
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    /// `(positives, negatives)`
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|l| l.is_positive()).count();
        (pos, self.labels.len() - pos)
    }

    pub fn has_both_classes(&self) -> bool {
        let (p, n) = self.class_counts();
        p > 0 && n > 0
    }

    /// Rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            name: name.into(),
            n_features: self.n_features,
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Applies `f(column, value)` to every feature value.
    pub fn map_features(&self, f: impl Fn(usize, f64) -> f64) -> Dataset {
        let n = self.n_features;
        let features = self.features.iter().enumerate().map(|(k, &v)| f(k % n, v)).collect();
        Dataset {
            name: self.name.clone(),
            n_features: n,
            features,
            labels: self.labels.clone(),
        }
    }

    fn class_indices(&self) -> [Vec<usize>; 2] {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for (i, l) in self.labels.iter().enumerate() {
            if l.is_positive() {
                pos.push(i);
            } else {
                neg.push(i);
            }
        }
        [pos, neg]
    }
}

/// A dataset seen through the relaxed-bias lens: every sample carries an
/// extra trailing coordinate equal to `gamma`, and the normal vector an
/// extra bias weight. The augmented matrix is never materialized.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedDataset {
    base: Dataset,
    gamma: f64,
}

pub fn augment(d: Dataset, gamma: f64) -> Result<AugmentedDataset> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "augmentation constant gamma must be positive, got {gamma}"
        )));
    }
    Ok(AugmentedDataset { base: d, gamma })
}

impl AugmentedDataset {
    pub fn base(&self) -> &Dataset {
        &self.base
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n_samples(&self) -> usize {
        self.base.n_samples()
    }

    /// Augmented dimension, `n + 1`.
    pub fn dim(&self) -> usize {
        self.base.n_features + 1
    }

    pub fn labels(&self) -> &[Label] {
        self.base.labels()
    }

    pub fn augmented_row(&self, i: usize) -> Vec<f64> {
        let mut r = self.base.row(i).to_vec();
        r.push(self.gamma);
        r
    }

    /// `<w_hat, x_hat_i>`
    pub fn dot_row(&self, i: usize, w_hat: &[f64]) -> f64 {
        debug_assert_eq!(w_hat.len(), self.dim());
        let n = self.base.n_features;
        dot(self.base.row(i), &w_hat[..n]) + self.gamma * w_hat[n]
    }

    /// `X_hat * coef`, i.e. the sum of augmented samples weighted by `coef`.
    pub fn combine_rows(&self, coef: &[f64], out: &mut [f64]) {
        debug_assert_eq!(coef.len(), self.n_samples());
        debug_assert_eq!(out.len(), self.dim());
        out.fill(0.0);
        let n = self.base.n_features;
        let mut last = 0.0;
        for (row, &c) in self.base.rows().zip(coef) {
            if c == 0.0 {
                continue;
            }
            for (o, &x) in out[..n].iter_mut().zip(row) {
                *o += c * x;
            }
            last += c;
        }
        out[n] = self.gamma * last;
    }

    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> AugmentedDataset {
        AugmentedDataset {
            base: self.base.subset(indices, name),
            gamma: self.gamma,
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Train / calibration / test fractions plus the shuffling seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub calibration_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, calibration: f64, test: f64, seed: u64) -> Result<Self> {
        let s = Self {
            train_fraction: train,
            calibration_fraction: calibration,
            test_fraction: test,
            seed,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.fractions();
        if f.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
            return Err(Error::InvalidParameter(format!(
                "split fractions must lie in (0, 1), got {f:?}"
            )));
        }
        if (f.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "split fractions must sum to 1, got {f:?}"
            )));
        }
        Ok(())
    }

    pub fn fractions(&self) -> [f64; 3] {
        [self.train_fraction, self.calibration_fraction, self.test_fraction]
    }
}

/// Largest-remainder allocation of `count` items over `fractions`; ties on
/// the remainder go to the earlier part.
fn allocate(count: usize, fractions: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = fractions.iter().map(|f| f * count as f64).collect();
    let mut alloc: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().take(count.saturating_sub(assigned)) {
        alloc[k] += 1;
    }
    alloc
}

/// Index sets (sorted ascending) of the train, calibration and test parts.
pub fn stratified_split_indices(d: &Dataset, spec: &SplitSpec) -> Result<[Vec<usize>; 3]> {
    spec.validate()?;
    let fractions = spec.fractions();
    let mut parts: [Vec<usize>; 3] = Default::default();
    let mut rng = rng_from_seed(spec.seed);
    for (class, mut idx) in d.class_indices().into_iter().enumerate() {
        if idx.len() < fractions.len() {
            return Err(Error::InvalidData(format!(
                "class {} has {} members, fewer than the {} split parts",
                if class == 0 { "+1" } else { "-1" },
                idx.len(),
                fractions.len()
            )));
        }
        idx.shuffle(&mut rng);
        let mut start = 0;
        for (part, take) in allocate(idx.len(), &fractions).into_iter().enumerate() {
            parts[part].extend_from_slice(&idx[start..start + take]);
            start += take;
        }
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    Ok(parts)
}

/// Splits into `(train, calibration, test)` keeping class ratios.
pub fn stratified_split(d: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    let [tr, ca, te] = stratified_split_indices(d, spec)?;
    Ok((
        d.subset(&tr, format!("{}.train", d.name())),
        d.subset(&ca, format!("{}.calibration", d.name())),
        d.subset(&te, format!("{}.test", d.name())),
    ))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Stratified k-fold partition. Each class is shuffled, then dealt
/// round-robin into folds; the dealer position carries over between classes
/// so fold sizes stay within one of each other.
pub fn stratified_kfold(d: &Dataset, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k must be at least 2, got {k}")));
    }
    let classes = d.class_indices();
    let min_count = classes.iter().map(Vec::len).min().unwrap_or(0);
    if k > min_count {
        return Err(Error::InvalidData(format!(
            "{k} folds requested but the smallest class has {min_count} members"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut buckets = vec![Vec::new(); k];
    let mut dealer = 0;
    for mut idx in classes {
        idx.shuffle(&mut rng);
        for i in idx {
            buckets[dealer].push(i);
            dealer = (dealer + 1) % k;
        }
    }
    let folds = buckets
        .iter()
        .enumerate()
        .map(|(f, val)| {
            let mut validation = val.clone();
            validation.sort_unstable();
            let mut train: Vec<usize> = buckets
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, b)| b.iter().copied())
                .collect();
            train.sort_unstable();
            Fold { train, validation }
        })
        .collect();
    Ok(folds)
}

/// Two isotropic unit-variance Gaussian clouds in `n` dimensions whose
/// means sit at `±separation/2` along the diagonal direction. Rows are
/// shuffled so classes are interleaved.
pub fn generate_synthetic(m: usize, n: usize, active_fraction: f64, separation: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    if !(active_fraction > 0.0 && active_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "active fraction must lie in (0, 1), got {active_fraction}"
        )));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "separation must be non-negative, got {separation}"
        )));
    }
    let n_pos = (m as f64 * active_fraction).round() as usize;
    if n_pos == 0 || n_pos >= m {
        return Err(Error::InvalidParameter(format!(
            "{m} samples at active fraction {active_fraction} leave a class empty"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let shift = 0.5 * separation / (n as f64).sqrt();
    let mut rows: Vec<(Vec<f64>, Label)> = (0..m)
        .map(|i| {
            let label = if i < n_pos { Label::Positive } else { Label::Negative };
            let mu = label.sign() * shift;
            let row = (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    mu + z
                })
                .collect();
            (row, label)
        })
        .collect();
    rows.shuffle(&mut rng);
    let (features, labels): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    Dataset::new("synthetic", features, labels)
}
