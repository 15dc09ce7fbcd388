//! Linear feature projections: principal components (PCT), maximum
//! covariance (MCV), ridge least squares (OLS) and calibrated least
//! squares (CLS).

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Schema;
use crate::setdist::FeatureMatrix;

/// Condition number above which a CLS system is rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Directions shorter than this (relative to the data scale) end MCV early.
const NULL_DIRECTION: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pct,
    Mcv,
    Ols,
    Cls,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Pct, Method::Mcv, Method::Ols, Method::Cls];

    pub fn name(self) -> &'static str {
        match self {
            Method::Pct => "pct",
            Method::Mcv => "mcv",
            Method::Ols => "ols",
            Method::Cls => "cls",
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Method::Pct => 1,
            Method::Mcv => 2,
            Method::Ols => 3,
            Method::Cls => 4,
        }
    }

    pub fn from_tag(t: u8) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == t)
            .ok_or_else(|| Error::Format(format!("unknown projection tag {t}")))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown projection method {s:?}")))
    }
}

/// `d x k` matrix of projection directions.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionBasis {
    pub method: Method,
    pub lambda: f64,
    pub w: DMatrix<f64>,
}

impl ProjectionBasis {
    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn k(&self) -> usize {
        self.w.ncols()
    }

    pub fn direction(&self, i: usize) -> DVector<f64> {
        self.w.column(i).into_owned()
    }

    /// Largest |w_a . w_b| over distinct directions.
    pub fn max_cross_product(&self) -> f64 {
        let g = self.w.transpose() * &self.w;
        let mut worst = 0.0f64;
        for a in 0..g.nrows() {
            for b in a + 1..g.ncols() {
                worst = worst.max(g[(a, b)].abs());
            }
        }
        worst
    }
}

/// Supervision for the fitted projections: stego rows with their change
/// rates, and cover rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    pub xs: DMatrix<f64>,
    pub ys: DVector<f64>,
    pub xc: DMatrix<f64>,
}

impl TrainingData {
    pub fn new(xs: DMatrix<f64>, ys: DVector<f64>, xc: DMatrix<f64>) -> Result<Self> {
        if xs.ncols() != xc.ncols() {
            return Err(Error::DimensionMismatch {
                expected: xs.ncols(),
                got: xc.ncols(),
            });
        }
        if ys.len() != xs.nrows() {
            return Err(Error::DimensionMismatch {
                expected: xs.nrows(),
                got: ys.len(),
            });
        }
        Ok(Self { xs, ys, xc })
    }

    /// Cover rows stacked over stego rows.
    pub fn all_rows(&self) -> DMatrix<f64> {
        let d = self.xs.ncols();
        let mut m = DMatrix::zeros(self.xc.nrows() + self.xs.nrows(), d);
        m.rows_mut(0, self.xc.nrows()).copy_from(&self.xc);
        m.rows_mut(self.xc.nrows(), self.xs.nrows()).copy_from(&self.xs);
        m
    }
}

pub fn to_dmatrix(m: &FeatureMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.data())
}

/// `1e-3 * trace(X^T X) / d`.
pub fn default_lambda(x: &DMatrix<f64>) -> f64 {
    1e-3 * x.norm_squared() / x.ncols().max(1) as f64
}

/// `X (I - w w^T)` for a unit vector `w`.
pub fn deflate(x: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    x - (x * w) * w.transpose()
}

/// Eigenpairs of a symmetric matrix, eigenvalues non-increasing, each
/// eigenvector signed so that its largest-magnitude entry is positive.
pub fn sorted_eigen(g: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(g.clone());
    let mut order: Vec<usize> = (0..g.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(g.nrows(), g.ncols());
    for (c, &i) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        fix_sign(&mut v);
        vecs.set_column(c, &v);
    }
    (values, vecs)
}

fn fix_sign(v: &mut DVector<f64>) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.neg_mut();
    }
}

fn check_k(k: usize, d: usize) -> Result<()> {
    if k == 0 || k > d {
        Err(Error::InvalidArgument(format!("k must be in 1..={d}, got {k}")))
    } else {
        Ok(())
    }
}

/// Removes components along earlier directions to clear rounding drift.
fn reorthogonalize(w: &mut DVector<f64>, earlier: &[DVector<f64>]) {
    for e in earlier {
        let c = e.dot(w);
        w.axpy(-c, e, 1.0);
    }
}

/// Top-k eigenvectors of `X^T X`, with their eigenvalues.
pub fn pct(x: &DMatrix<f64>, k: usize) -> Result<(ProjectionBasis, Vec<f64>)> {
    check_k(k, x.ncols())?;
    let (values, vecs) = sorted_eigen(&(x.transpose() * x));
    Ok((
        ProjectionBasis {
            method: Method::Pct,
            lambda: 0.0,
            w: vecs.columns(0, k).into_owned(),
        },
        values[..k].to_vec(),
    ))
}

/// Maximum covariance directions with deflation. Stops early once the
/// deflated covariance vanishes, so the result may hold fewer than k
/// directions.
pub fn mcv(xs: &DMatrix<f64>, ys: &DVector<f64>, k: usize) -> Result<ProjectionBasis> {
    check_k(k, xs.ncols())?;
    if ys.len() != xs.nrows() {
        return Err(Error::DimensionMismatch {
            expected: xs.nrows(),
            got: ys.len(),
        });
    }
    let scale = xs.norm() * ys.norm();
    let mut x = xs.clone();
    let mut dirs: Vec<DVector<f64>> = Vec::with_capacity(k);
    for _ in 0..k {
        let mut w = x.transpose() * ys;
        reorthogonalize(&mut w, &dirs);
        let norm = w.norm();
        if norm <= NULL_DIRECTION * scale || norm == 0.0 {
            break;
        }
        w /= norm;
        x = deflate(&x, &w);
        dirs.push(w);
    }
    if dirs.is_empty() {
        return Err(Error::Degenerate("features and labels are uncorrelated".into()));
    }
    Ok(ProjectionBasis {
        method: Method::Mcv,
        lambda: 0.0,
        w: DMatrix::from_columns(&dirs),
    })
}

fn ridge_solve(g: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = g.cholesky().ok_or(Error::Singular)?;
    Ok(chol.solve(rhs))
}

/// Condition number of a symmetric positive semi-definite matrix.
pub fn condition_number(g: &DMatrix<f64>) -> f64 {
    let ev = g.symmetric_eigenvalues();
    let hi = ev.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let lo = ev.iter().fold(f64::INFINITY, |a, &v| a.min(v.abs()));
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// `w = (Xs^T Xs + lambda I)^{-1} Xs^T ys`.
pub fn ols(xs: &DMatrix<f64>, ys: &DVector<f64>, lambda: f64) -> Result<ProjectionBasis> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
    }
    if ys.len() != xs.nrows() {
        return Err(Error::DimensionMismatch {
            expected: xs.nrows(),
            got: ys.len(),
        });
    }
    let d = xs.ncols();
    let g = xs.transpose() * xs + DMatrix::identity(d, d) * lambda;
    if lambda == 0.0 && condition_number(&g) > MAX_CONDITION {
        return Err(Error::Singular);
    }
    let w = ridge_solve(g, &(xs.transpose() * ys))?;
    Ok(ProjectionBasis {
        method: Method::Ols,
        lambda,
        w: DMatrix::from_columns(&[w]),
    })
}

/// Calibrated least squares: ridge regression whose Gram matrix comes from
/// cover features while the target covariance comes from stego features.
/// Both matrices are deflated by every unit-normalized direction found.
pub fn cls(data: &TrainingData, lambda: f64, k: usize) -> Result<ProjectionBasis> {
    let d = data.xs.ncols();
    check_k(k, d)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be > 0, got {lambda}")));
    }
    let mut xs = data.xs.clone();
    let mut xc = data.xc.clone();
    let mut dirs: Vec<DVector<f64>> = Vec::with_capacity(k);
    for _ in 0..k {
        let g = xc.transpose() * &xc + DMatrix::identity(d, d) * lambda;
        let cond = condition_number(&g);
        if cond > MAX_CONDITION {
            return Err(Error::IllConditioned(cond));
        }
        let mut w = ridge_solve(g, &(xs.transpose() * &data.ys))?;
        reorthogonalize(&mut w, &dirs);
        let norm = w.norm();
        if norm == 0.0 {
            break;
        }
        w /= norm;
        xs = deflate(&xs, &w);
        xc = deflate(&xc, &w);
        dirs.push(w);
    }
    if dirs.is_empty() {
        return Err(Error::Degenerate("stego features carry no label covariance".into()));
    }
    Ok(ProjectionBasis {
        method: Method::Cls,
        lambda,
        w: DMatrix::from_columns(&dirs),
    })
}

/// How to fit a projection; `lambda: None` uses [`default_lambda`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSpec {
    pub method: Method,
    pub k: usize,
    pub lambda: Option<f64>,
}

/// PCT is fitted to all training rows, MCV and OLS to the stego rows, CLS
/// to both.
pub fn fit(spec: &ProjectionSpec, data: &TrainingData) -> Result<ProjectionBasis> {
    match spec.method {
        Method::Pct => Ok(pct(&data.all_rows(), spec.k)?.0),
        Method::Mcv => mcv(&data.xs, &data.ys, spec.k),
        Method::Ols => ols(&data.xs, &data.ys, spec.lambda.unwrap_or_else(|| default_lambda(&data.xs))),
        Method::Cls => cls(data, spec.lambda.unwrap_or_else(|| default_lambda(&data.xc)), spec.k),
    }
}

/// `F W`, one output column per direction.
pub fn apply_projection(f: &FeatureMatrix, basis: &ProjectionBasis) -> Result<FeatureMatrix> {
    if f.cols() != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            got: f.cols(),
        });
    }
    let p = to_dmatrix(f) * &basis.w;
    let k = basis.k();
    let mut data = Vec::with_capacity(f.rows() * k);
    for r in 0..p.nrows() {
        data.extend(p.row(r).iter());
    }
    FeatureMatrix::new(k, data, f.actors().to_vec(), Schema::Custom(k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn pct_two_points() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]);
        let (b, vals) = pct(&x, 1).unwrap();
        assert_eq!(b.direction(0), DVector::from_vec(vec![1.0, 0.0]));
        assert_eq!(vals, vec![2.0]);
        assert!(pct(&x, 3).is_err());
    }

    #[test]
    fn mcv_single_informative_column() {
        let mut x = random(20, 3, 1);
        let y = DVector::from_iterator(20, (0..20).map(|i| i as f64 - 9.5));
        // Column 0 equals y; the others are made orthogonal to y.
        for c in 1..3 {
            let col = x.column(c).into_owned();
            let proj = col.dot(&y) / y.dot(&y);
            x.set_column(c, &(col - &y * proj));
        }
        x.set_column(0, &y);
        let b = mcv(&x, &y, 1).unwrap();
        assert!((b.direction(0) - DVector::from_vec(vec![1.0, 0.0, 0.0])).norm() < 1e-12);
    }

    #[test]
    fn mcv_stops_when_covariance_vanishes() {
        let x = random(10, 4, 2);
        let y = DVector::from_element(10, 1.0);
        let b = mcv(&x, &y, 4).unwrap();
        assert_eq!(b.k(), 1);
    }

    #[test]
    fn ols_orthonormal_columns() {
        let q = random(6, 2, 3).qr().q();
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, -1.0, 0.5, 4.0]);
        let b = ols(&q, &y, 0.0).unwrap();
        assert!((b.direction(0) - q.transpose() * &y).norm() < 1e-12);
        let big = ols(&q, &y, 1e12).unwrap();
        assert!(big.direction(0).amax() < 1e-10);
    }

    #[test]
    fn ols_rejects_singular_without_ridge() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(matches!(ols(&x, &y, 0.0), Err(Error::Singular)));
        assert!(ols(&x, &y, 0.1).is_ok());
    }

    #[test]
    fn cls_with_equal_matrices_is_deflated_ridge() {
        let x = random(12, 4, 4);
        let y = DVector::from_iterator(12, (0..12).map(|i| (i % 3) as f64));
        let data = TrainingData::new(x.clone(), y.clone(), x.clone()).unwrap();
        let b = cls(&data, 0.2, 2).unwrap();
        let w1 = ols(&x, &y, 0.2).unwrap().direction(0);
        assert!((b.direction(0) - &w1 / w1.norm()).norm() < 1e-10);
        let xd = deflate(&x, &b.direction(0));
        let w2 = ols(&xd, &y, 0.2).unwrap().direction(0);
        assert!((b.direction(1) - &w2 / w2.norm()).norm() < 1e-8);
    }

    #[test]
    fn cls_ignores_cover_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200;
        // Covers vary strongly along axis 0; stego rows add a change-rate
        // signal along axis 1 on top of the same content.
        let xc = DMatrix::from_fn(n, 2, |_, c| if c == 0 { rng.random_range(-10.0..10.0) } else { rng.random_range(-0.1..0.1) });
        let ys = DVector::from_fn(n, |_, _| rng.random_range(0.0..1.0));
        let mut xs = xc.clone();
        for r in 0..n {
            xs[(r, 0)] += ys[r];
            xs[(r, 1)] += ys[r];
        }
        let data = TrainingData::new(xs, ys, xc).unwrap();
        let w = cls(&data, 1e-3, 1).unwrap().direction(0);
        assert!(w[1].abs() > w[0].abs());
    }

    #[test]
    fn projection_application() {
        let f = FeatureMatrix::new(3, (0..12).map(f64::from).collect(), vec![0, 0, 1, 1], Schema::Custom(3)).unwrap();
        let id = ProjectionBasis {
            method: Method::Pct,
            lambda: 0.0,
            w: DMatrix::identity(3, 3),
        };
        assert_eq!(apply_projection(&f, &id).unwrap().data(), f.data());
        let e2 = ProjectionBasis {
            method: Method::Pct,
            lambda: 0.0,
            w: DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0]),
        };
        assert_eq!(apply_projection(&f, &e2).unwrap().data(), &f.column(1)[..]);
    }

    #[test]
    fn deflation_is_idempotent() {
        let x = random(7, 4, 6);
        let mut w = DVector::from_vec(vec![0.3, -1.0, 0.2, 0.5]);
        w.normalize_mut();
        let once = deflate(&x, &w);
        let twice = deflate(&once, &w);
        assert!((once - twice).amax() < 1e-10);
    }

    #[test]
    fn method_tags_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::from_tag(m.tag()).unwrap(), m);
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
    }
}
