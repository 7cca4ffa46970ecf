//! Dense linear algebra kernels, order statistics, the standard normal CDF and
//! a seedable Gaussian sampler.
//!
//! Vectors are plain `Vec<f64>` / `&[f64]`; the helpers below cover the few
//! BLAS-1 style operations the optimizers need. [`Matrix`] is dense and
//! row-major.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    let n = dot(a, a).sqrt();
    if n.is_finite() && n > 1e-150 {
        return n;
    }
    // Rescale on overflow or underflow of the squared sum.
    let m = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if m == 0.0 || !m.is_finite() {
        return if m.is_nan() { f64::NAN } else { m };
    }
    m * a.iter().map(|v| (v / m) * (v / m)).sum::<f64>().sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        if !all_finite(&data) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                actual: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a != 0.0 {
                    axpy(a, other.row(k), out_row);
                }
            }
        }
        Ok(out)
    }

    /// `self * x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `selfᵀ * y`
    pub fn t_matvec(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            axpy(yi, self.row(i), &mut out);
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    /// Stacks `self` on top of `other`.
    pub fn vstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows > 0 && other.rows > 0 && self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                actual: other.cols,
            });
        }
        let cols = if self.rows > 0 { self.cols } else { other.cols };
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Matrix {
            rows: self.rows + other.rows,
            cols,
            data,
        })
    }

    /// Keeps the rows with the given indices, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }
}

/// Thin singular value decomposition `a = u · diag(s) · vᵀ`.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    /// rows × k, orthonormal columns.
    pub u: Matrix,
    /// k singular values, descending.
    pub s: Vec<f64>,
    /// cols × k, orthonormal columns.
    pub v: Matrix,
}

impl ThinSvd {
    pub fn reconstruct(&self) -> Matrix {
        let k = self.s.len();
        let us = Matrix::from_fn(self.u.rows(), k, |i, j| self.u.get(i, j) * self.s[j]);
        us.matmul(&self.v.transpose())
            .expect("svd factors have matching inner dimension")
    }
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// Thin SVD by one-sided (Hestenes) Jacobi rotations; k = min(rows, cols).
pub fn thin_svd(a: &Matrix) -> ThinSvd {
    if a.rows() >= a.cols() {
        jacobi_tall(a)
    } else {
        let t = jacobi_tall(&a.transpose());
        ThinSvd {
            u: t.v,
            s: t.s,
            v: t.u,
        }
    }
}

fn jacobi_tall(a: &Matrix) -> ThinSvd {
    let (m, n) = (a.rows(), a.cols());
    // Work on columns so rotations touch contiguous memory.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = cols.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s);
                let (lo, hi) = vcols.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<(usize, f64)> = cols.iter().map(|c| norm(c)).enumerate().collect();
    order.sort_by(|x, y| y.1.total_cmp(&x.1));
    let s_max = order.first().map_or(0.0, |o| o.1);
    let floor = s_max * 1e-13;

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut deficient = Vec::new();
    for (slot, &(j, sj)) in order.iter().enumerate() {
        if sj > floor && sj > 0.0 {
            u_cols.push(cols[j].iter().map(|x| x / sj).collect());
        } else {
            u_cols.push(vec![0.0; m]);
            deficient.push(slot);
        }
    }
    complete_orthonormal(&mut u_cols, &deficient);

    let s: Vec<f64> = order.iter().map(|o| o.1).collect();
    let u = Matrix::from_fn(m, n, |i, k| u_cols[k][i]);
    let v = Matrix::from_fn(n, n, |i, k| vcols[order[k].0][i]);
    ThinSvd { u, s, v }
}

fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
        let (a, b) = (*xi, *yi);
        *xi = c * a - s * b;
        *yi = s * a + c * b;
    }
}

/// Fills the `missing` slots with unit vectors orthogonal to every other column.
fn complete_orthonormal(cols: &mut [Vec<f64>], missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let m = cols[0].len();
    for &slot in missing {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for e in 0..m {
            let mut cand = vec![0.0; m];
            cand[e] = 1.0;
            // Two Gram-Schmidt passes.
            for _ in 0..2 {
                for (k, c) in cols.iter().enumerate() {
                    if k == slot || (missing.contains(&k) && norm(c) == 0.0) {
                        continue;
                    }
                    let proj = dot(&cand, c);
                    axpy(-proj, c, &mut cand);
                }
            }
            let r = norm(&cand);
            if best.as_ref().is_none_or(|b| r > b.0) {
                best = Some((r, cand));
            }
            if r > 0.5 {
                break;
            }
        }
        let (r, mut cand) = best.expect("at least one candidate basis vector");
        scale(1.0 / r, &mut cand);
        cols[slot] = cand;
    }
}

/// Number of singular values strictly above `tol * s_max`.
pub fn rank_epsilon(a: &Matrix, tol: f64) -> Result<usize> {
    if !(tol > 0.0) {
        return Err(invalid("rank tolerance must be positive"));
    }
    if a.rows() == 0 || a.cols() == 0 {
        return Ok(0);
    }
    let s = thin_svd(a).s;
    let s_max = s[0];
    if s_max == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&v| v > tol * s_max).count())
}

/// Nearest-rank quantile: the ⌈q·n⌉-th smallest element of `values`.
///
/// The rank is computed with a small downward guard so that products such as
/// `0.7 * 10` that land a hair above an integer do not skip a rank.
pub fn quantile_nearest_rank(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("quantile input"));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(invalid(format!("quantile level {q} not in (0, 1]")));
    }
    let n = values.len();
    let rank = ((q * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    let mut buf = values.to_vec();
    let (_, kth, _) = buf.select_nth_unstable_by(rank - 1, f64::total_cmp);
    Ok(*kth)
}

/// Standard normal CDF Φ(x), computed as `erfc(-x/√2)/2`.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Immutable descriptor of a reproducible random stream.
///
/// Identical `(seed, stream)` pairs always yield identical draws. Child streams
/// derived through [`RngStream::substream`] are independent ChaCha streams, so
/// per-iteration noise never shares generator state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Deterministic child stream keyed by `index` (an iteration counter, a
    /// phase tag, ...).
    pub fn substream(&self, index: u64) -> Self {
        let mixed = splitmix64(
            splitmix64(self.stream) ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)),
        );
        Self {
            seed: self.seed,
            stream: mixed,
        }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `dim` i.i.d. N(0, std²) draws from the start of `stream`.
pub fn gaussian_sample(stream: &RngStream, dim: usize, std: f64) -> Result<Vec<f64>> {
    if !(std >= 0.0) || !std.is_finite() {
        return Err(invalid(format!(
            "noise std must be finite and >= 0, got {std}"
        )));
    }
    if std == 0.0 {
        return Ok(vec![0.0; dim]);
    }
    let mut rng = stream.rng();
    Ok((0..dim)
        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let v = gaussian_sample(&RngStream::new(seed, 0), rows * cols, 1.0).unwrap();
        Matrix::new(rows, cols, v).unwrap()
    }

    fn orthonormality_error(m: &Matrix) -> f64 {
        let g = m.transpose().matmul(m).unwrap();
        let k = g.rows();
        let mut worst: f64 = 0.0;
        for i in 0..k {
            for j in 0..k {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g.get(i, j) - target).abs());
            }
        }
        worst
    }

    #[test]
    fn cdf_at_zero_is_half() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
    }

    #[test]
    fn zero_std_gives_zero_vector() {
        let s = RngStream::new(99, 3);
        assert_eq!(gaussian_sample(&s, 3, 0.0).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn negative_std_rejected() {
        assert!(gaussian_sample(&RngStream::new(1, 0), 3, -1.0).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let s = RngStream::new(5, 17);
        assert_eq!(
            gaussian_sample(&s, 64, 1.5).unwrap(),
            gaussian_sample(&s, 64, 1.5).unwrap()
        );
        assert_ne!(
            gaussian_sample(&s, 64, 1.5).unwrap(),
            gaussian_sample(&s.substream(1), 64, 1.5).unwrap()
        );
    }

    #[test]
    fn sample_moments() {
        let v = gaussian_sample(&RngStream::new(1, 0), 100_000, 2.0).unwrap();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var.sqrt() - 2.0).abs() < 0.02, "std {}", var.sqrt());
    }

    #[test]
    fn identity_svd() {
        let svd = thin_svd(&Matrix::identity(3));
        for s in &svd.s {
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn diagonal_svd() {
        let a = Matrix::new(2, 2, vec![2.0, 0.0, 0.0, 3.0]).unwrap();
        let svd = thin_svd(&a);
        assert!((svd.s[0] - 3.0).abs() < 1e-14);
        assert!((svd.s[1] - 2.0).abs() < 1e-14);
        // Signed permutations.
        for m in [&svd.u, &svd.v] {
            for x in m.data() {
                assert!(x.abs() < 1e-14 || (x.abs() - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn random_svd_reconstructs() {
        for (r, c) in [(50, 10), (10, 50), (7, 7), (1, 5), (5, 1)] {
            let a = random_matrix(r, c, (r * 100 + c) as u64);
            let svd = thin_svd(&a);
            assert_eq!(svd.s.len(), r.min(c));
            let diff = Matrix::new(r, c, sub(svd.reconstruct().data(), a.data())).unwrap();
            assert!(diff.frobenius_norm() / a.frobenius_norm() <= 1e-8);
            assert!(orthonormality_error(&svd.u) <= 1e-10);
            assert!(orthonormality_error(&svd.v) <= 1e-10);
            assert!(svd.s.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn rank_deficient_svd_completes_basis() {
        // rank-1 outer product
        let x: Vec<f64> = (0..10).map(|i| i as f64 + 1.0).collect();
        let a = Matrix::from_fn(10, 10, |i, j| x[i] * x[j]);
        let svd = thin_svd(&a);
        assert!(orthonormality_error(&svd.u) <= 1e-10);
        assert_eq!(rank_epsilon(&a, 1e-10).unwrap(), 1);
        assert_eq!(rank_epsilon(&Matrix::identity(4), 1e-10).unwrap(), 4);
        let zero = Matrix::zeros(3, 2);
        let svd = thin_svd(&zero);
        assert!(orthonormality_error(&svd.u) <= 1e-10);
        assert_eq!(rank_epsilon(&zero, 1e-10).unwrap(), 0);
    }

    #[test]
    fn quantile_examples() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(quantile_nearest_rank(&v, 0.9).unwrap(), 9.0);
        assert_eq!(quantile_nearest_rank(&v, 0.7).unwrap(), 7.0);
        assert_eq!(quantile_nearest_rank(&[5.0], 0.9).unwrap(), 5.0);
        assert_eq!(quantile_nearest_rank(&[3.0, 1.0, 2.0], 1.0).unwrap(), 3.0);
        assert!(quantile_nearest_rank(&[], 0.5).is_err());
        assert!(quantile_nearest_rank(&v, 0.0).is_err());
    }
}
