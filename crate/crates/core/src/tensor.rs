//! Dense complex linear and multilinear algebra.
//!
//! All matrices are square and stored row-major. Multipartite indices follow
//! the Kronecker convention: for subsystem dimensions `(d_1, ..., d_m)` the
//! flat index of `(i_1, ..., i_m)` is `((i_1 d_2 + i_2) d_3 + ...) + i_m`, so
//! for a bipartition `delta(i_A, i_B) = i_A * d_B + i_B`.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type C64 = Complex64;

/// Maximum entrywise deviation `|M_ij - conj(M_ji)|` accepted as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Default cap on `d^l` for symmetric-subspace projectors.
pub const DEFAULT_SIZE_CAP: usize = 4096;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

// ---------------------------------------------------------------------------
// Dims and index maps
// ---------------------------------------------------------------------------

/// Subsystem dimension vector `d = (d_1, ..., d_m)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Dims(Vec<usize>);

impl Dims {
    pub fn new(d: Vec<usize>) -> Result<Self> {
        if d.is_empty() {
            return invalid("dims must contain at least one subsystem");
        }
        if d.iter().any(|&x| x == 0) {
            return invalid("subsystem dimensions must be positive");
        }
        Ok(Dims(d))
    }

    /// `m` qubits, `d = (2, ..., 2)`.
    pub fn qubits(m: usize) -> Self {
        Dims(vec![2; m.max(1)])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, k: usize) -> usize {
        self.0[k]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// `d̄`, the product of all subsystem dimensions.
    pub fn total(&self) -> usize {
        self.0.iter().product()
    }

    /// `d_[h]`, the product of the first `h` dimensions.
    pub fn prefix(&self, h: usize) -> usize {
        self.0[..h].iter().product()
    }

    /// Dimensions of the subsystems not in `set`, in order.
    pub fn complement(&self, set: &BTreeSet<usize>) -> Vec<usize> {
        (0..self.len())
            .filter(|k| !set.contains(k))
            .map(|k| self.0[k])
            .collect()
    }
}

impl TryFrom<Vec<usize>> for Dims {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Dims::new(v)
    }
}

impl From<Dims> for Vec<usize> {
    fn from(d: Dims) -> Self {
        d.0
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Bijection between multi-indices `(i_1, ..., i_m)` and flat indices.
#[derive(Clone, Debug)]
pub struct SubsystemIndexMap {
    dims: Vec<usize>,
    strides: Vec<usize>,
}

impl SubsystemIndexMap {
    pub fn new(dims: &[usize]) -> Self {
        let mut strides = vec![1; dims.len()];
        for k in (0..dims.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * dims[k + 1];
        }
        SubsystemIndexMap {
            dims: dims.to_vec(),
            strides,
        }
    }

    pub fn from_dims(dims: &Dims) -> Self {
        Self::new(dims.as_slice())
    }

    pub fn total(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn flat(&self, multi: &[usize]) -> usize {
        debug_assert_eq!(multi.len(), self.dims.len());
        multi.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn multi(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for k in 0..self.dims.len() {
            out[k] = flat / self.strides[k];
            flat %= self.strides[k];
        }
        out
    }

    /// Index of subsystem `k` inside the flat index.
    pub fn component(&self, flat: usize, k: usize) -> usize {
        (flat / self.strides[k]) % self.dims[k]
    }

    /// `delta(i_A, i_B) = i_A * d_B + i_B`.
    pub fn pair(i_a: usize, i_b: usize, d_b: usize) -> usize {
        i_a * d_b + i_b
    }
}

// ---------------------------------------------------------------------------
// General square complex matrix
// ---------------------------------------------------------------------------

/// Dense square complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    n: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        CMatrix {
            n,
            data: vec![ZERO; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = ONE;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        CMatrix { n, data }
    }

    pub fn from_vec(n: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: data.len(),
            });
        }
        Ok(CMatrix { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.data[i * self.n + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn adjoint(&self) -> CMatrix {
        CMatrix::from_fn(self.n, |i, j| self.get(j, i).conj())
    }

    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.n, other.n, "matmul dimension mismatch");
        let n = self.n;
        let mut out = vec![ZERO; n * n];
        for i in 0..n {
            let row = &self.data[i * n..(i + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for (k, &a) in row.iter().enumerate() {
                if a == ZERO {
                    continue;
                }
                let brow = &other.data[k * n..(k + 1) * n];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        CMatrix { n, data: out }
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| {
                self.data[i * self.n..(i + 1) * self.n]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    pub fn kron(&self, other: &CMatrix) -> CMatrix {
        let (na, nb) = (self.n, other.n);
        let n = na * nb;
        let mut out = vec![ZERO; n * n];
        for ia in 0..na {
            for ja in 0..na {
                let a = self.get(ia, ja);
                if a == ZERO {
                    continue;
                }
                for ib in 0..nb {
                    let r = ia * nb + ib;
                    for jb in 0..nb {
                        out[r * n + ja * nb + jb] = a * other.get(ib, jb);
                    }
                }
            }
        }
        CMatrix { n, data: out }
    }

    pub fn max_hermitian_deviation(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for i in 0..self.n {
            for j in i..self.n {
                dev = dev.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        dev
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }
}

// ---------------------------------------------------------------------------
// Hermitian matrices
// ---------------------------------------------------------------------------

/// Dense square complex Hermitian matrix.
///
/// Construction either checks Hermiticity against [`HERMITIAN_TOL`] or
/// explicitly symmetrizes via `(M + M†)/2`; every operation that produces a
/// `HermitianMatrix` symmetrizes its output.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix {
    m: CMatrix,
}

impl HermitianMatrix {
    pub fn zeros(n: usize) -> Self {
        HermitianMatrix {
            m: CMatrix::zeros(n),
        }
    }

    pub fn identity(n: usize) -> Self {
        HermitianMatrix {
            m: CMatrix::identity(n),
        }
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = CMatrix::zeros(n);
        for (i, &v) in values.iter().enumerate() {
            m.set(i, i, C64::new(v, 0.0));
        }
        HermitianMatrix { m }
    }

    /// Checked construction.
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.n == 0 {
            return invalid("matrix dimension must be at least 1");
        }
        let dev = m.max_hermitian_deviation();
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian(dev));
        }
        Ok(Self::symmetrize(m))
    }

    /// `(M + M†)/2`.
    pub fn symmetrize(m: CMatrix) -> Self {
        let n = m.n;
        let mut data = m.data;
        for i in 0..n {
            data[i * n + i] = C64::new(data[i * n + i].re, 0.0);
            for j in (i + 1)..n {
                let avg = (data[i * n + j] + data[j * n + i].conj()) * 0.5;
                data[i * n + j] = avg;
                data[j * n + i] = avg.conj();
            }
        }
        HermitianMatrix {
            m: CMatrix { n, data },
        }
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self::symmetrize(CMatrix::from_fn(n, f))
    }

    /// Real symmetric matrix from row-major entries.
    pub fn from_real(n: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: entries.len(),
            });
        }
        Self::new(CMatrix::from_fn(n, |i, j| C64::new(entries[i * n + j], 0.0)))
    }

    /// Rank-one `v v†`.
    pub fn outer(v: &[C64]) -> Self {
        Self::symmetrize(CMatrix::from_fn(v.len(), |i, j| v[i] * v[j].conj()))
    }

    pub fn dim(&self) -> usize {
        self.m.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.m.get(i, j)
    }

    pub fn as_cmatrix(&self) -> &CMatrix {
        &self.m
    }

    pub fn into_cmatrix(self) -> CMatrix {
        self.m
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.get(i, i).re).sum()
    }

    /// Real inner product `<A, B> = tr(A B)`.
    pub fn inner(&self, other: &HermitianMatrix) -> f64 {
        assert_eq!(self.dim(), other.dim(), "inner product dimension mismatch");
        self.m
            .data
            .iter()
            .zip(&other.m.data)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.frobenius_norm()
    }

    pub fn add(&self, other: &HermitianMatrix) -> HermitianMatrix {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &HermitianMatrix) -> HermitianMatrix {
        self.axpy(-1.0, other)
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &HermitianMatrix) -> HermitianMatrix {
        assert_eq!(self.dim(), other.dim(), "axpy dimension mismatch");
        let data = self
            .m
            .data
            .iter()
            .zip(&other.m.data)
            .map(|(a, b)| a + b * alpha)
            .collect();
        HermitianMatrix {
            m: CMatrix { n: self.m.n, data },
        }
    }

    pub fn scale(&self, alpha: f64) -> HermitianMatrix {
        HermitianMatrix {
            m: CMatrix {
                n: self.m.n,
                data: self.m.data.iter().map(|a| a * alpha).collect(),
            },
        }
    }

    /// Entrywise complex conjugate, which equals the transpose.
    pub fn transpose(&self) -> HermitianMatrix {
        HermitianMatrix {
            m: CMatrix {
                n: self.m.n,
                data: self.m.data.iter().map(|a| a.conj()).collect(),
            },
        }
    }

    /// `v† M v`.
    pub fn quad_form(&self, v: &[C64]) -> f64 {
        let mv = self.m.mul_vec(v);
        v.iter().zip(&mv).map(|(a, b)| (a.conj() * b).re).sum()
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        self.m.mul_vec(v)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        eigenvalues(self)[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *eigenvalues(self).last().expect("non-empty spectrum")
    }

    /// Length of the real coordinate vector, `n²`.
    pub fn hvec_len(n: usize) -> usize {
        n * n
    }

    /// Isometric real coordinates: diagonal entries, then `√2 Re` and
    /// `√2 Im` of each strictly upper entry, row by row. The Euclidean inner
    /// product of coordinate vectors equals `tr(A B)`.
    pub fn to_hvec(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in i..n {
                let z = self.get(i, j);
                if i == j {
                    out.push(z.re);
                } else {
                    out.push(std::f64::consts::SQRT_2 * z.re);
                    out.push(std::f64::consts::SQRT_2 * z.im);
                }
            }
        }
        out
    }

    pub fn from_hvec(n: usize, v: &[f64]) -> Result<Self> {
        if v.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: v.len(),
            });
        }
        let mut m = CMatrix::zeros(n);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut p = 0;
        for i in 0..n {
            for j in i..n {
                if i == j {
                    m.set(i, i, C64::new(v[p], 0.0));
                    p += 1;
                } else {
                    let z = C64::new(v[p] * s, v[p + 1] * s);
                    m.set(i, j, z);
                    m.set(j, i, z.conj());
                    p += 2;
                }
            }
        }
        Ok(HermitianMatrix { m })
    }

    /// Entry `(i, j)` as real/imaginary parts.
    pub fn parts(&self, i: usize, j: usize) -> (f64, f64) {
        let z = self.get(i, j);
        (z.re, z.im)
    }
}

/// Offset of entry `(i, j)` (with `i <= j`) inside [`HermitianMatrix::to_hvec`].
/// Off-diagonal entries occupy two slots (real, imaginary).
pub fn hvec_offset(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < n);
    // Row r contributes 1 + 2 (n - r - 1) slots.
    let before: usize = (0..i).map(|r| 1 + 2 * (n - r - 1)).sum();
    if i == j {
        before
    } else {
        before + 1 + 2 * (j - i - 1)
    }
}

// ---------------------------------------------------------------------------
// Multilinear operations
// ---------------------------------------------------------------------------

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &HermitianMatrix, b: &HermitianMatrix) -> HermitianMatrix {
    HermitianMatrix::symmetrize(a.m.kron(&b.m))
}

/// Kronecker product of a sequence (left to right).
pub fn kron_all<'a>(mats: impl IntoIterator<Item = &'a HermitianMatrix>) -> HermitianMatrix {
    let mut it = mats.into_iter();
    let first = it.next().expect("kron_all needs at least one factor").clone();
    it.fold(first, |acc, m| kron(&acc, m))
}

/// Kronecker product of vectors.
pub fn kron_vec(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in a {
        for &y in b {
            out.push(x * y);
        }
    }
    out
}

fn check_dims(m: &HermitianMatrix, dims: &Dims) -> Result<()> {
    if m.dim() != dims.total() {
        return Err(Error::DimensionMismatch {
            expected: dims.total(),
            got: m.dim(),
        });
    }
    Ok(())
}

fn check_set(dims: &Dims, set: &BTreeSet<usize>) -> Result<()> {
    if let Some(&k) = set.iter().find(|&&k| k >= dims.len()) {
        return invalid(format!(
            "subsystem index {k} out of range for {} subsystems",
            dims.len()
        ));
    }
    Ok(())
}

/// Partial trace over the subsystems in `set`. The remaining subsystems keep
/// their order; tracing out everything yields a 1×1 matrix holding `tr(M)`.
pub fn partial_trace(
    m: &HermitianMatrix,
    dims: &Dims,
    set: &BTreeSet<usize>,
) -> Result<HermitianMatrix> {
    check_dims(m, dims)?;
    check_set(dims, set)?;
    let map = SubsystemIndexMap::from_dims(dims);
    let kept_dims = dims.complement(set);
    let traced_dims: Vec<usize> = set.iter().map(|&k| dims.get(k)).collect();
    let kept_map = SubsystemIndexMap::new(&kept_dims);
    let traced_map = SubsystemIndexMap::new(&traced_dims);
    let n = dims.total();
    let mut kept = Vec::with_capacity(n);
    let mut traced = Vec::with_capacity(n);
    for f in 0..n {
        let multi = map.multi(f);
        let mut km = Vec::with_capacity(kept_dims.len());
        let mut tm = Vec::with_capacity(traced_dims.len());
        for (k, &i) in multi.iter().enumerate() {
            if set.contains(&k) {
                tm.push(i);
            } else {
                km.push(i);
            }
        }
        kept.push(kept_map.flat(&km));
        traced.push(traced_map.flat(&tm));
    }
    let out_n = kept_map.total();
    let mut out = CMatrix::zeros(out_n);
    for i in 0..n {
        for j in 0..n {
            if traced[i] == traced[j] {
                let idx = kept[i] * out_n + kept[j];
                out.data[idx] += m.get(i, j);
            }
        }
    }
    Ok(HermitianMatrix::symmetrize(out))
}

/// Partial transpose on the subsystems in `set`: row and column indices are
/// swapped on those subsystems.
pub fn partial_transpose(
    m: &HermitianMatrix,
    dims: &Dims,
    set: &BTreeSet<usize>,
) -> Result<HermitianMatrix> {
    check_dims(m, dims)?;
    check_set(dims, set)?;
    let map = SubsystemIndexMap::from_dims(dims);
    let n = dims.total();
    let multis: Vec<Vec<usize>> = (0..n).map(|f| map.multi(f)).collect();
    let mut out = CMatrix::zeros(n);
    let mut ib = vec![0; dims.len()];
    let mut jb = vec![0; dims.len()];
    for i in 0..n {
        for j in 0..n {
            for k in 0..dims.len() {
                if set.contains(&k) {
                    ib[k] = multis[j][k];
                    jb[k] = multis[i][k];
                } else {
                    ib[k] = multis[i][k];
                    jb[k] = multis[j][k];
                }
            }
            out.set(i, j, m.get(map.flat(&ib), map.flat(&jb)));
        }
    }
    Ok(HermitianMatrix::symmetrize(out))
}

// ---------------------------------------------------------------------------
// Spectral operations
// ---------------------------------------------------------------------------

/// Eigendecomposition of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct Eigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Unitary matrix whose columns are the eigenvectors.
    pub vectors: CMatrix,
}

impl Eigen {
    pub fn vector(&self, k: usize) -> Vec<C64> {
        self.vectors.column(k)
    }

    /// `V diag(f(λ)) V†`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> HermitianMatrix {
        let n = self.values.len();
        let w: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = CMatrix::zeros(n);
        for (k, &wk) in w.iter().enumerate() {
            if wk == 0.0 {
                continue;
            }
            let v = self.vectors.column(k);
            for i in 0..n {
                let vi = v[i] * wk;
                for j in 0..n {
                    out.data[i * n + j] += vi * v[j].conj();
                }
            }
        }
        HermitianMatrix::symmetrize(out)
    }
}

fn decompose(m: &CMatrix) -> Eigen {
    let n = m.n;
    let eig = nalgebra::linalg::SymmetricEigen::new(m.to_nalgebra());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMatrix::from_fn(n, |i, j| eig.eigenvectors[(i, order[j])]);
    Eigen { values, vectors }
}

/// Eigendecomposition with ascending eigenvalues. Rejects inputs whose
/// Hermiticity has drifted beyond [`HERMITIAN_TOL`].
pub fn eig_hermitian(m: &HermitianMatrix) -> Result<Eigen> {
    let dev = m.m.max_hermitian_deviation();
    if dev > HERMITIAN_TOL {
        return Err(Error::NotHermitian(dev));
    }
    Ok(decompose(&m.m))
}

/// Eigendecomposition of a general complex matrix checked for Hermiticity.
pub fn eig_cmatrix(m: &CMatrix) -> Result<Eigen> {
    let dev = m.max_hermitian_deviation();
    if dev > HERMITIAN_TOL {
        return Err(Error::NotHermitian(dev));
    }
    Ok(decompose(m))
}

/// Ascending eigenvalues.
pub fn eigenvalues(m: &HermitianMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = nalgebra::linalg::SymmetricEigen::new(m.m.to_nalgebra())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Nearest PSD matrix in Frobenius norm.
pub fn psd_project(m: &HermitianMatrix) -> HermitianMatrix {
    let eig = decompose(&m.m);
    if eig.values[0] >= 0.0 {
        return m.clone();
    }
    eig.reconstruct_with(|l| l.max(0.0))
}

/// Real symmetric embedding `U + iV ↦ [[U, -V], [V, U]]` (row-major, size 2n).
/// Every eigenvalue of the input appears twice in the embedding.
pub fn realify(m: &HermitianMatrix) -> Vec<f64> {
    let n = m.dim();
    let nn = 2 * n;
    let mut out = vec![0.0; nn * nn];
    for i in 0..n {
        for j in 0..n {
            let z = m.get(i, j);
            out[i * nn + j] = z.re;
            out[i * nn + n + j] = -z.im;
            out[(n + i) * nn + j] = z.im;
            out[(n + i) * nn + n + j] = z.re;
        }
    }
    out
}

fn for_each_permutation(l: usize, mut f: impl FnMut(&[usize])) {
    // Heap's algorithm.
    let mut perm: Vec<usize> = (0..l).collect();
    let mut c = vec![0; l];
    f(&perm);
    let mut i = 0;
    while i < l {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            f(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Orthogonal projector onto the symmetric subspace of `(C^d)^{⊗l}`.
pub fn symmetric_projector(d: usize, l: usize) -> Result<HermitianMatrix> {
    symmetric_projector_capped(d, l, DEFAULT_SIZE_CAP)
}

pub fn symmetric_projector_capped(d: usize, l: usize, cap: usize) -> Result<HermitianMatrix> {
    if d == 0 || l == 0 {
        return invalid("symmetric projector needs d >= 1 and l >= 1");
    }
    let size = d
        .checked_pow(l as u32)
        .filter(|&s| s <= cap)
        .ok_or(Error::SizeCap {
            size: d.saturating_pow(l as u32),
            cap,
        })?;
    let map = SubsystemIndexMap::new(&vec![d; l]);
    let mut out = vec![0.0; size * size];
    let mut count = 0usize;
    for_each_permutation(l, |perm| {
        count += 1;
        let mut permuted = vec![0; l];
        for col in 0..size {
            let multi = map.multi(col);
            for (slot, &p) in perm.iter().enumerate() {
                permuted[slot] = multi[p];
            }
            out[map.flat(&permuted) * size + col] += 1.0;
        }
    });
    let scale = 1.0 / count as f64;
    HermitianMatrix::from_real(size, &out.iter().map(|x| x * scale).collect::<Vec<_>>())
}

// ---------------------------------------------------------------------------
// JSON serialization: {"dim": n, "re": [[...]], "im": [[...]]}
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    dim: usize,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

impl Serialize for HermitianMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.dim();
        let re = (0..n)
            .map(|i| (0..n).map(|j| self.get(i, j).re).collect())
            .collect();
        let im = (0..n)
            .map(|i| (0..n).map(|j| self.get(i, j).im).collect())
            .collect();
        MatrixJson { dim: n, re, im }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for HermitianMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = MatrixJson::deserialize(d)?;
        let n = raw.dim;
        let rows_ok = |rows: &Vec<Vec<f64>>| rows.len() == n && rows.iter().all(|r| r.len() == n);
        if !rows_ok(&raw.re) || !rows_ok(&raw.im) {
            return Err(D::Error::custom(format!(
                "matrix rows do not match dim {n}"
            )));
        }
        let m = CMatrix::from_fn(n, |i, j| C64::new(raw.re[i][j], raw.im[i][j]));
        HermitianMatrix::new(m).map_err(D::Error::custom)
    }
}

impl HermitianMatrix {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("matrix serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn read_json(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
