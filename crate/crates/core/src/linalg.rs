//! Dense symmetric matrices for small dimensions.
//!
//! Everything here is sized for d ≤ 8: storage is a full row-major `d × d`
//! buffer kept exactly symmetric, and the eigensolver is cyclic Jacobi.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_TOLERANCE: f64 = 1e-14;
/// Denominators of a Sherman-Morrison update at or below this are failures.
pub const RANK_ONE_MIN_DENOMINATOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymMat {
    dim: usize,
    data: Vec<f64>,
}

/// Eigendecomposition `M = P diag(values) ᵗP` with ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Column `k` of this row-major matrix is the eigenvector for `values[k]`.
    pub vectors: Vec<f64>,
    dim: usize,
}

impl SymEigen {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vector(&self, k: usize) -> Vec<f64> {
        (0..self.dim).map(|i| self.vectors[i * self.dim + k]).collect()
    }

    /// Rebuilds `P diag(f(λ)) ᵗP`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SymMat {
        let d = self.dim;
        let mapped: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = SymMat::zeros(d);
        for i in 0..d {
            for j in i..d {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += self.vectors[i * d + k] * mapped[k] * self.vectors[j * d + k];
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    pub fn min_value(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

impl SymMat {
    pub fn zeros(dim: usize) -> Self {
        SymMat {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = v;
        }
        m
    }

    pub fn scalar(dim: usize, value: f64) -> Self {
        let mut m = Self::identity(dim);
        m.scale_in_place(value);
        m
    }

    /// `v ᵗv`.
    pub fn outer(v: &[f64]) -> Self {
        let mut m = Self::zeros(v.len());
        m.add_outer(v, 1.0);
        m
    }

    /// Builds from rows; entries mirrored across the diagonal must agree to
    /// within `1e-12` relative and are then averaged so storage is exactly
    /// symmetric.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut m = Self::zeros(dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
        }
        for i in 0..dim {
            for j in i..dim {
                let a = rows[i][j];
                let b = rows[j][i];
                if !a.is_finite() || !b.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "non-finite matrix entry at ({i}, {j})"
                    )));
                }
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
                m.set(i, j, 0.5 * (a + b));
            }
        }
        Ok(m)
    }

    /// Builds from a full row-major buffer, symmetrizing by averaging.
    pub fn from_row_major_symmetrized(dim: usize, data: &[f64]) -> Self {
        debug_assert_eq!(data.len(), dim * dim);
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                m.set(i, j, 0.5 * (data[i * dim + j] + data[j * dim + i]));
            }
        }
        m
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| self.data[i * self.dim..(i + 1) * self.dim].to_vec())
            .collect()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.dim + j] = value;
        self.data[j * self.dim + i] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Upper-triangle entries in row order: `(1,1), (1,2), …, (d,d)`.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim * (self.dim + 1) / 2);
        for i in 0..self.dim {
            for j in i..self.dim {
                out.push(self.get(i, j));
            }
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// `tr(A B)`, the Frobenius inner product for symmetric matrices.
    pub fn frobenius_dot(&self, other: &SymMat) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn scale_in_place(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    pub fn scaled(&self, factor: f64) -> SymMat {
        let mut m = self.clone();
        m.scale_in_place(factor);
        m
    }

    pub fn add(&self, other: &SymMat) -> SymMat {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &SymMat) -> SymMat {
        self.axpy(-1.0, other)
    }

    /// `self + alpha · other`.
    pub fn axpy(&self, alpha: f64, other: &SymMat) -> SymMat {
        debug_assert_eq!(self.dim, other.dim);
        SymMat {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + alpha * b)
                .collect(),
        }
    }

    /// `self += scale · v ᵗv`.
    #[inline]
    pub fn add_outer(&mut self, v: &[f64], scale: f64) {
        let d = self.dim;
        debug_assert_eq!(v.len(), d);
        for i in 0..d {
            let si = scale * v[i];
            for j in 0..d {
                self.data[i * d + j] += si * v[j];
            }
        }
    }

    pub fn copy_from(&mut self, other: &SymMat) {
        self.data.copy_from_slice(&other.data);
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.mul_vec_into(x, &mut out);
        out
    }

    #[inline]
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for i in 0..d {
            let row = &self.data[i * d..(i + 1) * d];
            out[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    /// `⟨M x, x⟩`.
    #[inline]
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let mut acc = 0.0;
        for i in 0..d {
            let row = &self.data[i * d..(i + 1) * d];
            let ri: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            acc += ri * x[i];
        }
        acc
    }

    /// `A · self · A` for symmetric `A`, which is again symmetric.
    pub fn congruence(&self, a: &SymMat) -> SymMat {
        let prod = matmul(a, self);
        let d = self.dim;
        let mut full = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                full[i * d + j] = (0..d).map(|k| prod[i * d + k] * a.get(k, j)).sum();
            }
        }
        SymMat::from_row_major_symmetrized(d, &full)
    }

    pub fn eigen(&self) -> SymEigen {
        eigen_sym(self)
    }

    pub fn determinant(&self) -> f64 {
        self.eigen().values.iter().product()
    }

    fn definiteness_tolerance(eig: &SymEigen) -> f64 {
        let trace_norm: f64 = eig.values.iter().map(|v| v.abs()).sum();
        1e-10 * trace_norm.max(1.0)
    }

    pub fn is_pd(&self) -> bool {
        let eig = self.eigen();
        eig.min_value() > Self::definiteness_tolerance(&eig)
    }

    pub fn is_psd(&self) -> bool {
        let eig = self.eigen();
        eig.min_value() >= -Self::definiteness_tolerance(&eig)
    }

    fn require_pd(&self) -> Result<SymEigen> {
        let eig = self.eigen();
        if eig.min_value() > Self::definiteness_tolerance(&eig) {
            Ok(eig)
        } else {
            Err(Error::NotPositiveDefinite {
                min_eigenvalue: eig.min_value(),
            })
        }
    }

    pub fn inv_spd(&self) -> Result<SymMat> {
        Ok(self.require_pd()?.map(|l| 1.0 / l))
    }

    pub fn sqrt_spd(&self) -> Result<SymMat> {
        Ok(self.require_pd()?.map(f64::sqrt))
    }

    pub fn inv_sqrt_spd(&self) -> Result<SymMat> {
        Ok(self.require_pd()?.map(|l| 1.0 / l.sqrt()))
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymMat {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        SymMat::from_rows(&rows)
    }
}

impl From<SymMat> for Vec<Vec<f64>> {
    fn from(m: SymMat) -> Self {
        m.to_rows()
    }
}

/// Dense row-major product `A B` (not symmetric in general).
pub fn matmul(a: &SymMat, b: &SymMat) -> Vec<f64> {
    let d = a.dim();
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = (0..d).map(|k| a.get(i, k) * b.get(k, j)).sum();
        }
    }
    out
}

/// Cyclic Jacobi eigendecomposition; eigenvalues come back ascending.
pub fn eigen_sym(m: &SymMat) -> SymEigen {
    let d = m.dim();
    let mut a = m.data.clone();
    let mut v = SymMat::identity(d).data;
    let norm = m.frobenius_norm();

    if norm > 0.0 {
        for _ in 0..JACOBI_MAX_SWEEPS {
            let mut off = 0.0;
            for i in 0..d {
                for j in 0..d {
                    if i != j {
                        off += a[i * d + j] * a[i * d + j];
                    }
                }
            }
            if off.sqrt() < JACOBI_TOLERANCE * norm {
                break;
            }
            for p in 0..d {
                for q in (p + 1)..d {
                    let apq = a[p * d + q];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                    let t = if theta.abs() > 1e150 {
                        0.5 / theta
                    } else {
                        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                    };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..d {
                        let akp = a[k * d + p];
                        let akq = a[k * d + q];
                        a[k * d + p] = c * akp - s * akq;
                        a[k * d + q] = s * akp + c * akq;
                    }
                    for k in 0..d {
                        let apk = a[p * d + k];
                        let aqk = a[q * d + k];
                        a[p * d + k] = c * apk - s * aqk;
                        a[q * d + k] = s * apk + c * aqk;
                    }
                    for k in 0..d {
                        let vkp = v[k * d + p];
                        let vkq = v[k * d + q];
                        v[k * d + p] = c * vkp - s * vkq;
                        v[k * d + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[i * d + i].total_cmp(&a[j * d + j]));
    let values = order.iter().map(|&k| a[k * d + k]).collect();
    let mut vectors = vec![0.0; d * d];
    for (new_k, &old_k) in order.iter().enumerate() {
        for i in 0..d {
            vectors[i * d + new_k] = v[i * d + old_k];
        }
    }
    SymEigen {
        values,
        vectors,
        dim: d,
    }
}

/// Sherman-Morrison: given `M⁻¹`, returns `(M + sign · v ᵗv)⁻¹`.
///
/// Fails when `1 + sign · ᵗv M⁻¹ v ≤ 1e-10`; the updated matrix is then
/// singular or indefinite.
pub fn rank_one_inv_update(inv: &SymMat, v: &[f64], sign: f64) -> Result<SymMat> {
    let mut out = SymMat::zeros(inv.dim());
    let mut work = vec![0.0; inv.dim()];
    rank_one_inv_update_into(inv, v, sign, &mut out, &mut work)?;
    Ok(out)
}

/// Allocation-free form of [`rank_one_inv_update`]; `work` needs length `d`.
#[inline]
pub fn rank_one_inv_update_into(
    inv: &SymMat,
    v: &[f64],
    sign: f64,
    out: &mut SymMat,
    work: &mut [f64],
) -> Result<()> {
    let d = inv.dim();
    inv.mul_vec_into(v, work);
    let vtu: f64 = v.iter().zip(work.iter()).map(|(a, b)| a * b).sum();
    let denominator = 1.0 + sign * vtu;
    if denominator <= RANK_ONE_MIN_DENOMINATOR {
        return Err(Error::SingularUpdate { denominator });
    }
    let factor = sign / denominator;
    for i in 0..d {
        let fi = factor * work[i];
        for j in i..d {
            let value = inv.data[i * d + j] - fi * work[j];
            out.data[i * d + j] = value;
            out.data[j * d + i] = value;
        }
    }
    Ok(())
}
