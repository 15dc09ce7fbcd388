//! Column normalization and distances between sets of feature vectors.

use std::cmp::Ordering;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureSet, Schema};
use crate::seeds;

/// All feature vectors of all actors stacked row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    actors: Vec<usize>,
    schema: Schema,
}

impl FeatureMatrix {
    pub fn new(cols: usize, data: Vec<f64>, actors: Vec<usize>, schema: Schema) -> Result<Self> {
        if cols == 0 || data.len() != cols * actors.len() {
            return Err(Error::DimensionMismatch {
                expected: cols * actors.len(),
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite feature".into()));
        }
        Ok(Self {
            rows: actors.len(),
            cols,
            data,
            actors,
            schema,
        })
    }

    pub fn from_sets(sets: &[FeatureSet]) -> Result<Self> {
        let first = sets
            .first()
            .ok_or_else(|| Error::InvalidArgument("no feature sets".into()))?;
        let cols = first.dim();
        let mut data = Vec::new();
        let mut actors = Vec::new();
        for s in sets {
            if s.dim() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: s.dim(),
                });
            }
            for v in &s.vectors {
                data.extend_from_slice(v);
                actors.push(s.actor);
            }
        }
        Self::new(cols, data, actors, first.schema)
    }

    /// Regroups rows by actor, in order of first appearance.
    pub fn to_sets(&self) -> Vec<FeatureSet> {
        let mut order: Vec<usize> = Vec::new();
        let mut groups: Vec<Vec<Vec<f64>>> = Vec::new();
        for (r, &a) in self.actors.iter().enumerate() {
            let slot = match order.iter().position(|&x| x == a) {
                Some(p) => p,
                None => {
                    order.push(a);
                    groups.push(Vec::new());
                    order.len() - 1
                }
            };
            groups[slot].push(self.row(r).to_vec());
        }
        order
            .into_iter()
            .zip(groups)
            .map(|(actor, vectors)| FeatureSet {
                actor,
                schema: self.schema,
                vectors,
            })
            .collect()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn schema(&self) -> Schema {
        self.schema
    }

    pub fn actors(&self) -> &[usize] {
        &self.actors
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.data[r * self.cols + c]).collect()
    }

    /// Keeps only the listed columns, in the listed order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.cols) {
            return Err(Error::InvalidArgument(format!("column {bad} out of range")));
        }
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for r in 0..self.rows {
            let row = self.row(r);
            data.extend(cols.iter().map(|&c| row[c]));
        }
        Self::new(cols.len(), data, self.actors.clone(), Schema::Custom(cols.len()))
    }
}

/// Per-column shift and scale learned by [`normalize_columns`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: Vec<f64>,
    /// Zero marks a constant column.
    pub scale: Vec<f64>,
}

impl ColumnStats {
    pub fn fit(m: &FeatureMatrix) -> Result<Self> {
        if m.rows < 2 {
            return Err(Error::InvalidArgument("normalization needs at least 2 rows".into()));
        }
        let n = m.rows as f64;
        let mut mean = vec![0.0; m.cols];
        let mut max_abs = vec![0.0f64; m.cols];
        for r in 0..m.rows {
            for (c, &v) in m.row(r).iter().enumerate() {
                mean[c] += v;
                max_abs[c] = max_abs[c].max(v.abs());
            }
        }
        for v in mean.iter_mut() {
            *v /= n;
        }
        let mut var = vec![0.0; m.cols];
        for r in 0..m.rows {
            for (c, &v) in m.row(r).iter().enumerate() {
                let d = v - mean[c];
                var[c] += d * d;
            }
        }
        let scale = var
            .iter()
            .zip(&max_abs)
            .map(|(&s, &mx)| {
                let sd = (s / n).sqrt();
                if sd <= 64.0 * f64::EPSILON * mx {
                    0.0
                } else {
                    1.0 / sd
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, m: &FeatureMatrix) -> Result<FeatureMatrix> {
        if m.cols != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                got: m.cols,
            });
        }
        let mut data = m.data.clone();
        for row in data.chunks_exact_mut(m.cols) {
            for ((v, &mu), &s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = if s == 0.0 { 0.0 } else { (*v - mu) * s };
            }
        }
        FeatureMatrix::new(m.cols, data, m.actors.clone(), m.schema)
    }
}

/// Zero mean and unit mean square per column over all rows; constant
/// columns become zero.
pub fn normalize_columns(m: &FeatureMatrix) -> Result<FeatureMatrix> {
    ColumnStats::fit(m)?.apply(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    Linear,
    Gaussian { gamma: f64 },
}

impl KernelSpec {
    pub fn gaussian(gamma: f64) -> Result<Self> {
        if gamma.is_finite() && gamma > 0.0 {
            Ok(KernelSpec::Gaussian { gamma })
        } else {
            Err(Error::InvalidArgument(format!("gaussian gamma must be > 0, got {gamma}")))
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => dot(x, y),
            KernelSpec::Gaussian { gamma } => (-gamma * sq_dist(x, y)).exp(),
        }
    }
}

#[inline]
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[inline]
pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[inline]
pub fn euclidean(x: &[f64], y: &[f64]) -> f64 {
    sq_dist(x, y).sqrt()
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Orders a set canonically so the paired estimator does not depend on the
/// order vectors were supplied in.
pub fn canonical_order<'a, V: AsRef<[f64]>>(set: &'a [V]) -> Vec<&'a [f64]> {
    let mut v: Vec<&[f64]> = set.iter().map(AsRef::as_ref).collect();
    v.sort_by(|a, b| lexicographic(a, b));
    v
}

fn signed_sqrt(s: f64) -> f64 {
    s.signum() * s.abs().sqrt()
}

/// Unbiased MMD over equal-size sets. Vectors are paired after sorting each
/// set lexicographically; the square root keeps the sign of the (possibly
/// negative) unbiased MMD² estimate.
pub fn mmd_unbiased<V: AsRef<[f64]>>(x: &[V], y: &[V], kernel: &KernelSpec) -> Result<f64> {
    Ok(signed_sqrt(mmd2_unbiased(x, y, kernel)?))
}

/// The unbiased MMD² estimate itself.
pub fn mmd2_unbiased<V: AsRef<[f64]>>(x: &[V], y: &[V], kernel: &KernelSpec) -> Result<f64> {
    let m = x.len();
    if m != y.len() {
        return Err(Error::InvalidArgument(format!(
            "set sizes differ ({} vs {}); use mmd_unbiased_balanced",
            m,
            y.len()
        )));
    }
    if m < 2 {
        return Err(Error::Degenerate("MMD needs at least 2 vectors per set".into()));
    }
    let xs = canonical_order(x);
    let ys = canonical_order(y);
    let norm = (m * m - m) as f64;
    match kernel {
        KernelSpec::Linear => {
            // h[i,j] = (x_i - y_i) . (x_j - y_j), so the off-diagonal sum is
            // |sum z|^2 - sum |z|^2.
            let d = xs[0].len();
            let mut total = vec![0.0; d];
            let mut diag = 0.0;
            for (a, b) in xs.iter().zip(&ys) {
                let mut zz = 0.0;
                for ((t, &p), &q) in total.iter_mut().zip(a.iter()).zip(b.iter()) {
                    let z = p - q;
                    *t += z;
                    zz += z * z;
                }
                diag += zz;
            }
            let s: f64 = total.iter().map(|t| t * t).sum();
            Ok((s - diag) / norm)
        }
        KernelSpec::Gaussian { .. } => {
            let mut s = 0.0;
            for i in 0..m {
                for j in 0..m {
                    if i != j {
                        s += kernel.eval(xs[i], xs[j]) + kernel.eval(ys[i], ys[j])
                            - kernel.eval(xs[i], ys[j])
                            - kernel.eval(xs[j], ys[i]);
                    }
                }
            }
            Ok(s / norm)
        }
    }
}

/// Like [`mmd_unbiased`], but first truncates the larger set to the size of
/// the smaller one by a seeded uniform draw.
pub fn mmd_unbiased_balanced<V: AsRef<[f64]>, R: Rng + ?Sized>(
    x: &[V],
    y: &[V],
    kernel: &KernelSpec,
    rng: &mut R,
) -> Result<f64> {
    let m = x.len().min(y.len());
    let pick = |s: &[V], rng: &mut R| -> Vec<Vec<f64>> {
        if s.len() == m {
            s.iter().map(|v| v.as_ref().to_vec()).collect()
        } else {
            let mut idx = sample(rng, s.len(), m).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| s[i].as_ref().to_vec()).collect()
        }
    };
    let xs = pick(x, rng);
    let ys = pick(y, rng);
    mmd_unbiased(&xs, &ys, kernel)
}

/// `gamma = 1 / eta^2` with `eta` the median pairwise Euclidean distance.
pub fn median_gamma<V: AsRef<[f64]> + Sync>(vectors: &[V]) -> Result<f64> {
    if vectors.len() < 2 {
        return Err(Error::InvalidArgument("median distance needs 2 vectors".into()));
    }
    let n = vectors.len();
    let mut d: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            (i + 1..n).map(move |j| euclidean(vectors[i].as_ref(), vectors[j].as_ref()))
        })
        .collect();
    d.sort_by(f64::total_cmp);
    let k = d.len();
    let eta = if k % 2 == 1 {
        d[k / 2]
    } else {
        0.5 * (d[k / 2 - 1] + d[k / 2])
    };
    if eta <= 0.0 {
        return Err(Error::Degenerate("median pairwise distance is zero".into()));
    }
    Ok(1.0 / (eta * eta))
}

pub fn mean_vector<V: AsRef<[f64]>>(set: &[V]) -> Vec<f64> {
    let d = set.first().map_or(0, |v| v.as_ref().len());
    let mut m = vec![0.0; d];
    for v in set {
        for (a, b) in m.iter_mut().zip(v.as_ref()) {
            *a += b;
        }
    }
    let n = set.len() as f64;
    m.iter_mut().for_each(|a| *a /= n);
    m
}

/// `|mean(X) - mean(Y)|`, defined for singleton sets as well.
pub fn mean_embedding_distance<V: AsRef<[f64]>>(x: &[V], y: &[V]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::InvalidArgument("empty set".into()));
    }
    Ok(euclidean(&mean_vector(x), &mean_vector(y)))
}

/// How two actors' feature sets are compared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SetMeasure {
    LinearMmd,
    /// `gamma: None` picks the median heuristic over all vectors.
    GaussianMmd { gamma: Option<f64> },
    MeanEmbedding,
    /// Mean of all cross-pair Euclidean distances.
    AverageEuclidean,
}

impl Default for SetMeasure {
    fn default() -> Self {
        SetMeasure::LinearMmd
    }
}

impl SetMeasure {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear" | "linear-mmd" => Ok(SetMeasure::LinearMmd),
            "gaussian" | "gaussian-mmd" => Ok(SetMeasure::GaussianMmd { gamma: None }),
            "mean-embedding" | "centroid" => Ok(SetMeasure::MeanEmbedding),
            "average-euclidean" => Ok(SetMeasure::AverageEuclidean),
            other => Err(Error::InvalidArgument(format!("unknown measure {other:?}"))),
        }
    }

    /// Fixes data-dependent parameters against the full pool of vectors.
    pub fn resolve(&self, sets: &[&[Vec<f64>]]) -> Result<ResolvedMeasure> {
        Ok(match *self {
            SetMeasure::LinearMmd => ResolvedMeasure::Mmd(KernelSpec::Linear),
            SetMeasure::GaussianMmd { gamma: Some(g) } => ResolvedMeasure::Mmd(KernelSpec::gaussian(g)?),
            SetMeasure::GaussianMmd { gamma: None } => {
                let pool: Vec<&[f64]> = sets.iter().flat_map(|s| s.iter().map(Vec::as_slice)).collect();
                ResolvedMeasure::Mmd(KernelSpec::gaussian(median_gamma(&pool)?)?)
            }
            SetMeasure::MeanEmbedding => ResolvedMeasure::MeanEmbedding,
            SetMeasure::AverageEuclidean => ResolvedMeasure::AverageEuclidean,
        })
    }
}

/// A [`SetMeasure`] with all parameters fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "measure", rename_all = "kebab-case")]
pub enum ResolvedMeasure {
    Mmd(KernelSpec),
    MeanEmbedding,
    AverageEuclidean,
}

impl ResolvedMeasure {
    /// Distance between two sets. MMD falls back to the Euclidean distance
    /// of the means when either set holds a single vector.
    pub fn distance<R: Rng + ?Sized>(&self, x: &[Vec<f64>], y: &[Vec<f64>], rng: &mut R) -> Result<f64> {
        match self {
            ResolvedMeasure::Mmd(k) => {
                if x.len().min(y.len()) < 2 {
                    mean_embedding_distance(x, y)
                } else {
                    mmd_unbiased_balanced(x, y, k, rng)
                }
            }
            ResolvedMeasure::MeanEmbedding => mean_embedding_distance(x, y),
            ResolvedMeasure::AverageEuclidean => crate::ensemble::set_distance_avg(x, y),
        }
    }

    pub fn tag(&self) -> String {
        serde_json::to_string(self).expect("plain enum serializes")
    }
}

/// Symmetric matrix of inter-actor distances with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
    labels: Vec<usize>,
    measure: String,
}

impl DistanceMatrix {
    pub fn new(n: usize, data: Vec<f64>, labels: Vec<usize>, measure: String) -> Result<Self> {
        if data.len() != n * n || labels.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: data.len(),
            });
        }
        for i in 0..n {
            if data[i * n + i] != 0.0 {
                return Err(Error::InvalidArgument("nonzero diagonal".into()));
            }
            for j in 0..i {
                let v = data[i * n + j];
                if !v.is_finite() || v != data[j * n + i] {
                    return Err(Error::InvalidArgument(format!(
                        "entry ({i},{j}) not finite or not symmetric"
                    )));
                }
            }
        }
        Ok(Self {
            n,
            data,
            labels,
            measure,
        })
    }

    /// Builds a matrix from `f(i, j)` evaluated once per unordered pair.
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = f(i, j);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Self::new(n, data, (0..n).collect(), "custom".into())
    }

    /// Euclidean distances between points.
    pub fn euclidean(points: &[Vec<f64>]) -> Result<Self> {
        let mut m = Self::from_fn(points.len(), |i, j| euclidean(&points[i], &points[j]))?;
        m.measure = r#"{"measure":"euclidean"}"#.into();
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Actor id of each row.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn measure(&self) -> &str {
        &self.measure
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: labels.len(),
            });
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|v| v * lambda).collect(),
            labels: self.labels.clone(),
            measure: self.measure.clone(),
        }
    }

    /// Negative entries (signed MMD estimates below zero) replaced by zero.
    pub fn clamped(&self) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|v| v.max(0.0)).collect(),
            labels: self.labels.clone(),
            measure: self.measure.clone(),
        }
    }

    /// Restriction to the given rows/columns, in that order.
    pub fn submatrix(&self, idx: &[usize]) -> Self {
        let k = idx.len();
        let mut data = vec![0.0; k * k];
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                data[a * k + b] = self.get(i, j);
            }
        }
        Self {
            n: k,
            data,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            measure: self.measure.clone(),
        }
    }
}

/// Distances between every pair of actors. Each unordered pair is evaluated
/// once, with its own random stream for any set truncation.
pub fn actor_distance_matrix(sets: &[FeatureSet], measure: &SetMeasure, seed: u64) -> Result<DistanceMatrix> {
    let n = sets.len();
    if let Some(s) = sets.iter().find(|s| s.dim() != sets[0].dim()) {
        return Err(Error::DimensionMismatch {
            expected: sets[0].dim(),
            got: s.dim(),
        });
    }
    let views: Vec<&[Vec<f64>]> = sets.iter().map(|s| s.vectors.as_slice()).collect();
    let resolved = measure.resolve(&views)?;
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let mut rng = seeds::child_rng(seed, "pair", &[i as u64, j as u64]);
            resolved.distance(&sets[i].vectors, &sets[j].vectors, &mut rng)
        })
        .collect::<Result<_>>()?;
    let mut data = vec![0.0; n * n];
    for (&(i, j), v) in pairs.iter().zip(values) {
        data[i * n + j] = v;
        data[j * n + i] = v;
    }
    DistanceMatrix::new(n, data, sets.iter().map(|s| s.actor).collect(), resolved.tag())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_set(rng: &mut ChaCha8Rng, m: usize, d: usize, shift: f64) -> Vec<Vec<f64>> {
        (0..m)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0) + shift).collect())
            .collect()
    }

    #[test]
    fn normalize_example_column() {
        let m = FeatureMatrix::new(2, vec![1.0, 5.0, 2.0, 5.0, 3.0, 5.0], vec![0, 0, 1], Schema::Custom(2)).unwrap();
        let z = normalize_columns(&m).unwrap();
        let c0 = z.column(0);
        let s = 1.5f64.sqrt();
        assert!((c0[0] + s).abs() < 1e-12 && c0[1].abs() < 1e-12 && (c0[2] - s).abs() < 1e-12);
        assert_eq!(z.column(1), vec![0.0; 3]);
        let again = normalize_columns(&z).unwrap();
        for (a, b) in again.data().iter().zip(z.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_needs_two_rows() {
        let m = FeatureMatrix::new(1, vec![1.0], vec![0], Schema::Custom(1)).unwrap();
        assert!(normalize_columns(&m).is_err());
    }

    #[test]
    fn mmd_of_identical_sets_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = rand_set(&mut rng, 10, 4, 0.0);
        assert_eq!(mmd_unbiased(&x, &x, &KernelSpec::Linear).unwrap(), 0.0);
        assert_eq!(mmd_unbiased(&x, &x, &KernelSpec::gaussian(0.7).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn mmd_small_example() {
        let x = vec![vec![0.0], vec![2.0]];
        let y = vec![vec![1.0], vec![3.0]];
        // h[1,2] = 0 + 3 - 0 - 2 = 1 and h[2,1] = 1, so MMD^2 = 2 / 2.
        let v = mmd2_unbiased(&x, &y, &KernelSpec::Linear).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mmd_rejects_tiny_sets() {
        let x = vec![vec![0.0]];
        assert!(matches!(mmd_unbiased(&x, &x, &KernelSpec::Linear), Err(Error::Degenerate(_))));
        let y = vec![vec![0.0], vec![1.0]];
        assert!(mmd_unbiased(&x, &y, &KernelSpec::Linear).is_err());
    }

    #[test]
    fn balanced_truncation_is_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = rand_set(&mut rng, 12, 3, 0.0);
        let y = rand_set(&mut rng, 7, 3, 0.5);
        let a = mmd_unbiased_balanced(&x, &y, &KernelSpec::Linear, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = mmd_unbiased_balanced(&x, &y, &KernelSpec::Linear, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn median_gamma_examples() {
        let g = median_gamma(&[vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
        assert_eq!(g, 0.25);
        assert_eq!(-g * 2.0 * 2.0, -1.0);
        assert!(median_gamma(&[vec![1.0], vec![1.0], vec![1.0]]).is_err());
    }

    #[test]
    fn mean_embedding_examples() {
        assert_eq!(mean_embedding_distance(&[vec![0.0, 0.0]], &[vec![3.0, 4.0]]).unwrap(), 5.0);
        let x = vec![vec![1.0, 2.0], vec![3.0, 1.0]];
        assert_eq!(mean_embedding_distance(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn identical_sets_give_zero_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = rand_set(&mut rng, 6, 5, 0.0);
        let sets: Vec<FeatureSet> = (0..4).map(|a| FeatureSet::new(a, Schema::Custom(5), v.clone()).unwrap()).collect();
        for measure in [SetMeasure::LinearMmd, SetMeasure::MeanEmbedding, SetMeasure::GaussianMmd { gamma: Some(0.3) }] {
            let d = actor_distance_matrix(&sets, &measure, 1).unwrap();
            assert!(d.data().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn singleton_sets_fall_back_to_euclidean() {
        let sets = vec![
            FeatureSet::new(0, Schema::Custom(2), vec![vec![0.0, 0.0]]).unwrap(),
            FeatureSet::new(1, Schema::Custom(2), vec![vec![3.0, 4.0]]).unwrap(),
        ];
        let d = actor_distance_matrix(&sets, &SetMeasure::LinearMmd, 0).unwrap();
        assert_eq!(d.get(0, 1), 5.0);
    }

    #[test]
    fn matrix_validation() {
        assert!(DistanceMatrix::new(2, vec![0.0, 1.0, 2.0, 0.0], vec![0, 1], String::new()).is_err());
        assert!(DistanceMatrix::new(2, vec![1.0, 1.0, 1.0, 0.0], vec![0, 1], String::new()).is_err());
    }

    #[test]
    fn linear_mmd_tracks_mean_shift() {
        // For large balanced sets the linear MMD approaches the distance
        // between the means.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = rand_set(&mut rng, 1000, 3, 0.0);
        let y = rand_set(&mut rng, 1000, 3, 1.0);
        let mmd = mmd_unbiased(&x, &y, &KernelSpec::Linear).unwrap();
        let me = mean_embedding_distance(&x, &y).unwrap();
        assert!((mmd - me).abs() / me < 0.05);
    }

    proptest::proptest! {
        #[test]
        fn gaussian_kernel_is_one_on_diagonal(v in proptest::collection::vec(-50.0f64..50.0, 1..20), g in 1e-3f64..10.0) {
            let k = KernelSpec::gaussian(g).unwrap();
            proptest::prop_assert_eq!(k.eval(&v, &v), 1.0);
        }

        #[test]
        fn normalized_columns_have_unit_moments(
            data in proptest::collection::vec(-1e3f64..1e3, 30),
        ) {
            let m = FeatureMatrix::new(3, data, (0..10).collect(), Schema::Custom(3)).unwrap();
            let z = normalize_columns(&m).unwrap();
            for c in 0..3 {
                let col = z.column(c);
                let mean: f64 = col.iter().sum::<f64>() / 10.0;
                let msq: f64 = col.iter().map(|v| v * v).sum::<f64>() / 10.0;
                proptest::prop_assert!(mean.abs() < 1e-9);
                proptest::prop_assert!(msq == 0.0 || (msq - 1.0).abs() < 1e-9);
            }
        }
    }
}
