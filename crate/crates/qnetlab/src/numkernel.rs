//! Dense complex linear algebra for small multi-subsystem operators.
//!
//! Matrices are square, row-major, and indexed by a [`SystemLayout`]: an
//! ordered list of subsystem dimensions whose product is the matrix
//! dimension, with the leftmost subsystem most significant. All partial
//! operations (trace, transpose, permutation) address subsystems by their
//! position in the layout.
//!
//! The eigensolver is a cyclic Jacobi iteration specialized to Hermitian
//! input; it is deterministic, needs no external BLAS/LAPACK, and is
//! accurate far beyond the 1e-10 reconstruction budget at the dimensions
//! this crate works at (<= 64).

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

pub use num_complex::Complex64 as C64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// Max-entry tolerance for treating a matrix as Hermitian.
pub const HERMITICITY_TOL: f64 = 1e-10;
/// Eigenvalues above this floor are clamped to zero instead of rejected.
pub const EIG_FLOOR: f64 = -1e-10;

/// Square complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl DenseMatrix {
    pub fn zeros(dim: usize) -> Self {
        DenseMatrix { dim, data: vec![C64::new(0.0, 0.0); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        DenseMatrix { dim, data }
    }

    /// Builds from a row-major entry list; length must be a perfect square.
    pub fn from_data(data: Vec<C64>) -> Result<Self> {
        let dim = (data.len() as f64).sqrt().round() as usize;
        if dim * dim != data.len() {
            return Err(Error::NotSquareData { len: data.len() });
        }
        Ok(DenseMatrix { dim, data })
    }

    pub fn diag_real(entries: &[f64]) -> Self {
        Self::from_fn(entries.len(), |i, j| {
            if i == j { C64::new(entries[i], 0.0) } else { C64::new(0.0, 0.0) }
        })
    }

    /// Rank-one |u><v|.
    pub fn outer(u: &[C64], v: &[C64]) -> Self {
        assert_eq!(u.len(), v.len(), "outer product needs equal lengths");
        Self::from_fn(u.len(), |i, j| u[i] * v[j].conj())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(i, j)].conj())
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        let data = self.data.iter().map(|z| z * s).collect();
        DenseMatrix { dim: self.dim, data }
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn matmul(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.dim, rhs.dim, "matmul dimension mismatch");
        let d = self.dim;
        let mut out = DenseMatrix::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let a = self.data[i * d + k];
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                let row = &rhs.data[k * d..(k + 1) * d];
                let dst = &mut out.data[i * d..(i + 1) * d];
                for j in 0..d {
                    dst[j] += a * row[j];
                }
            }
        }
        out
    }

    pub fn mat_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.dim, v.len(), "mat_vec dimension mismatch");
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.data[i * self.dim + j] * v[j]).sum())
            .collect()
    }

    /// Kronecker product; result[(i*db+k, j*db+l)] = a[i,j] * b[k,l].
    pub fn kron(&self, b: &DenseMatrix) -> DenseMatrix {
        let (da, db) = (self.dim, b.dim);
        let d = da * db;
        let mut out = DenseMatrix::zeros(d);
        for i in 0..da {
            for j in 0..da {
                let a = self.data[i * da + j];
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                for k in 0..db {
                    for l in 0..db {
                        out.data[(i * db + k) * d + (j * db + l)] = a * b.data[k * db + l];
                    }
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!(self.dim, other.dim, "max_abs_diff dimension mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Max-entry distance from Hermiticity.
    pub fn herm_residual(&self) -> f64 {
        let mut r = 0.0f64;
        for i in 0..self.dim {
            for j in i..self.dim {
                r = r.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        r
    }

    /// (M + M^dagger) / 2; used to scrub roundoff off operators that are
    /// Hermitian by construction.
    pub fn hermitize(&self) -> Self {
        Self::from_fn(self.dim, |i, j| (self[(i, j)] + self[(j, i)].conj()).scale(0.5))
    }

    /// Partial trace keeping `keep` (sorted, duplicate-free, non-empty);
    /// kept subsystems stay in their original order. Preserves the trace.
    pub fn partial_trace(&self, layout: &SystemLayout, keep: &[usize]) -> Result<DenseMatrix> {
        check_subsystems(layout, keep)?;
        if keep.is_empty() {
            return Err(Error::BadSubsystemSet);
        }
        self.partial_trace_impl(layout, keep)
    }

    pub(crate) fn partial_trace_impl(
        &self,
        layout: &SystemLayout,
        keep: &[usize],
    ) -> Result<DenseMatrix> {
        layout.check_matches(self)?;
        let strides = layout.strides();
        let traced: Vec<usize> =
            (0..layout.len()).filter(|k| !keep.contains(k)).collect();
        let kept_offsets = enumerate_offsets(layout, &strides, keep);
        let traced_offsets = enumerate_offsets(layout, &strides, &traced);
        let dk = kept_offsets.len();
        let mut out = DenseMatrix::zeros(dk);
        for (r, &ro) in kept_offsets.iter().enumerate() {
            for (c, &co) in kept_offsets.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for &to in &traced_offsets {
                    acc += self.data[(ro + to) * self.dim + (co + to)];
                }
                out.data[r * dk + c] = acc;
            }
        }
        Ok(out)
    }

    /// Transposes the listed subsystems in place of the identity on the rest.
    /// Applying the same set twice returns the original matrix.
    pub fn partial_transpose(
        &self,
        layout: &SystemLayout,
        which: &[usize],
    ) -> Result<DenseMatrix> {
        check_subsystems(layout, which)?;
        layout.check_matches(self)?;
        let strides = layout.strides();
        // part[i] = the portion of index i carried by the transposed subsystems.
        let dim = self.dim;
        let mut part = vec![0usize; dim];
        for (i, p) in part.iter_mut().enumerate() {
            *p = which
                .iter()
                .map(|&k| (i / strides[k] % layout.dim_at(k)) * strides[k])
                .sum();
        }
        let mut out = DenseMatrix::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                let ip = i - part[i] + part[j];
                let jp = j - part[j] + part[i];
                out.data[ip * dim + jp] = self.data[i * dim + j];
            }
        }
        Ok(out)
    }

    /// Reorders subsystems so that new position k holds old subsystem
    /// `perm[k]`. Returns the permuted matrix and its layout.
    pub fn permute_systems(
        &self,
        layout: &SystemLayout,
        perm: &[usize],
    ) -> Result<(DenseMatrix, SystemLayout)> {
        layout.check_matches(self)?;
        let n = layout.len();
        if perm.len() != n {
            return Err(Error::BadSubsystemSet);
        }
        let mut seen = vec![false; n];
        for &p in perm {
            if p >= n || seen[p] {
                return Err(Error::BadSubsystemSet);
            }
            seen[p] = true;
        }
        let new_dims: Vec<usize> = perm.iter().map(|&p| layout.dim_at(p)).collect();
        let new_layout = SystemLayout::new(new_dims)?;
        let old_strides = layout.strides();
        let new_strides = new_layout.strides();
        let dim = self.dim;
        let mut map = vec![0usize; dim];
        for (i, m) in map.iter_mut().enumerate() {
            *m = (0..n)
                .map(|k| (i / old_strides[perm[k]] % layout.dim_at(perm[k])) * new_strides[k])
                .sum();
        }
        let mut out = DenseMatrix::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                out.data[map[i] * dim + map[j]] = self.data[i * dim + j];
            }
        }
        Ok((out, new_layout))
    }

    /// Hermitian eigendecomposition, eigenvalues ascending.
    ///
    /// Rejects input whose max-entry distance from Hermiticity exceeds 1e-10;
    /// the returned pair satisfies m = V diag(values) V^dagger to 1e-10
    /// entrywise with V unitary to the same tolerance.
    pub fn eig_hermitian(&self) -> Result<EigenPairs> {
        let res = self.herm_residual();
        if res > HERMITICITY_TOL {
            return Err(Error::NotHermitian { residual: res });
        }
        let d = self.dim;
        let mut a = self.hermitize();
        let mut v = DenseMatrix::identity(d);
        let scale = a.max_abs().max(1.0);
        let stop = 1e-15 * scale;
        for _sweep in 0..64 {
            let mut off = 0.0f64;
            for p in 0..d {
                for q in (p + 1)..d {
                    off = off.max(a[(p, q)].norm());
                }
            }
            if off <= stop {
                break;
            }
            for p in 0..d {
                for q in (p + 1)..d {
                    jacobi_rotate(&mut a, &mut v, p, q);
                }
            }
        }
        let mut order: Vec<usize> = (0..d).collect();
        let diag: Vec<f64> = (0..d).map(|i| a[(i, i)].re).collect();
        order.sort_by(|&x, &y| diag[x].partial_cmp(&diag[y]).unwrap());
        let values: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
        let vectors = DenseMatrix::from_fn(d, |i, j| v[(i, order[j])]);
        Ok(EigenPairs { values, vectors })
    }

    /// Principal square root of a positive semidefinite matrix.
    ///
    /// Eigenvalues in [-1e-10, 0) are clamped to zero; anything lower is an
    /// error. The result squares back to the input within 1e-9.
    pub fn psd_sqrt(&self) -> Result<DenseMatrix> {
        let eig = self.eig_hermitian()?;
        let min = eig.values.first().copied().unwrap_or(0.0);
        if min < EIG_FLOOR {
            return Err(Error::NotPositive { min_eigenvalue: min });
        }
        let roots: Vec<f64> = eig.values.iter().map(|&l| l.max(0.0).sqrt()).collect();
        Ok(eig.rebuild(&roots).hermitize())
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix(dim={})", self.dim)?;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let z = self[(i, j)];
                write!(f, " {:+.4}{:+.4}i", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl Add for &DenseMatrix {
    type Output = DenseMatrix;
    fn add(self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.dim, rhs.dim, "add dimension mismatch");
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect();
        DenseMatrix { dim: self.dim, data }
    }
}

impl Sub for &DenseMatrix {
    type Output = DenseMatrix;
    fn sub(self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.dim, rhs.dim, "sub dimension mismatch");
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        DenseMatrix { dim: self.dim, data }
    }
}

impl Mul for &DenseMatrix {
    type Output = DenseMatrix;
    fn mul(self, rhs: &DenseMatrix) -> DenseMatrix {
        self.matmul(rhs)
    }
}

/// One cyclic-Jacobi rotation zeroing A[p,q], accumulated into V.
fn jacobi_rotate(a: &mut DenseMatrix, v: &mut DenseMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let r = apq.norm();
    if r <= 1e-300 {
        return;
    }
    let ph = apq / r;
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let tau = (aqq - app) / (2.0 * r);
    let sign = if tau >= 0.0 { 1.0 } else { -1.0 };
    let t = sign / (tau.abs() + (1.0 + tau * tau).sqrt());
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    let d = a.dim;
    // A <- A G, columns p and q.
    for k in 0..d {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp.scale(c) - akq * ph.conj().scale(s);
        a[(k, q)] = akp * ph.scale(s) + akq.scale(c);
    }
    // A <- G^dagger A, rows p and q.
    for k in 0..d {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = apk.scale(c) - aqk * ph.scale(s);
        a[(q, k)] = apk * ph.conj().scale(s) + aqk.scale(c);
    }
    a[(p, q)] = C64::new(0.0, 0.0);
    a[(q, p)] = C64::new(0.0, 0.0);
    for k in 0..d {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp.scale(c) - vkq * ph.conj().scale(s);
        v[(k, q)] = vkp * ph.scale(s) + vkq.scale(c);
    }
}

/// Eigendecomposition of a Hermitian matrix; columns of `vectors` pair with
/// `values`, which ascend.
#[derive(Clone, Debug)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

impl EigenPairs {
    /// V diag(new_values) V^dagger.
    pub fn rebuild(&self, new_values: &[f64]) -> DenseMatrix {
        let d = self.vectors.dim();
        assert_eq!(new_values.len(), d, "rebuild needs one value per column");
        DenseMatrix::from_fn(d, |i, j| {
            (0..d)
                .map(|k| {
                    self.vectors[(i, k)]
                        * self.vectors[(j, k)].conj()
                        * C64::new(new_values[k], 0.0)
                })
                .sum()
        })
    }
}

/// Ordered subsystem dimensions; leftmost is most significant in the
/// row-major index.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SystemLayout {
    dims: Vec<usize>,
}

impl SystemLayout {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims.iter().any(|&d| d == 0) {
            return Err(Error::BadSubsystemSet);
        }
        Ok(SystemLayout { dims })
    }

    pub fn qubits(n: usize) -> Self {
        SystemLayout { dims: vec![2; n.max(1)] }
    }

    pub fn single(d: usize) -> Self {
        SystemLayout { dims: vec![d] }
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim_at(&self, k: usize) -> usize {
        self.dims[k]
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1usize; self.dims.len()];
        for k in (0..self.dims.len().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.dims[k + 1];
        }
        s
    }

    pub fn check_matches(&self, m: &DenseMatrix) -> Result<()> {
        if self.total_dim() != m.dim() {
            return Err(Error::LayoutMismatch {
                layout_dim: self.total_dim(),
                matrix_dim: m.dim(),
            });
        }
        Ok(())
    }
}

fn check_subsystems(layout: &SystemLayout, subset: &[usize]) -> Result<()> {
    for (pos, &k) in subset.iter().enumerate() {
        if k >= layout.len() {
            return Err(Error::SubsystemOutOfRange { index: k, count: layout.len() });
        }
        if pos > 0 && subset[pos - 1] >= k {
            return Err(Error::BadSubsystemSet);
        }
    }
    Ok(())
}

/// All index offsets spanned by the given subsystems (other coords zero),
/// in row-major order over those subsystems.
fn enumerate_offsets(layout: &SystemLayout, strides: &[usize], subs: &[usize]) -> Vec<usize> {
    let count: usize = subs.iter().map(|&k| layout.dim_at(k)).product();
    let mut out = Vec::with_capacity(count.max(1));
    let mut coords = vec![0usize; subs.len()];
    loop {
        out.push(subs.iter().zip(&coords).map(|(&k, &c)| c * strides[k]).sum());
        let mut carry = true;
        for pos in (0..subs.len()).rev() {
            coords[pos] += 1;
            if coords[pos] < layout.dim_at(subs[pos]) {
                carry = false;
                break;
            }
            coords[pos] = 0;
        }
        if carry || subs.is_empty() {
            break;
        }
    }
    out
}

/// Master seed for a reproducible random stream. The same seed always
/// yields the same stream; children derived with different counters are
/// independent streams, so parallel consumers can each take one.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Counter-based split via the SplitMix64 finalizer.
    pub fn child(self, counter: u64) -> RngSeed {
        let mut z = self
            .0
            .wrapping_add(counter.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        RngSeed(z ^ (z >> 31))
    }
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im)
}

/// Haar-random unitary: Ginibre sample, then Gram-Schmidt with a second
/// orthogonalization pass. The triangular factor's diagonal comes out real
/// and positive here, which is exactly the canonical phase choice that makes
/// the orthonormal factor Haar distributed.
pub fn haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DenseMatrix {
    assert!(d >= 1, "haar_unitary needs d >= 1");
    let g = DenseMatrix::from_fn(d, |_, _| complex_normal(rng));
    let mut q: Vec<Vec<C64>> = Vec::with_capacity(d);
    for j in 0..d {
        let mut v: Vec<C64> = (0..d).map(|i| g[(i, j)]).collect();
        for _pass in 0..2 {
            for col in q.iter() {
                let r: C64 = col.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                for (vi, ci) in v.iter_mut().zip(col) {
                    *vi -= r * ci;
                }
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let phase = C64::new(1.0, 0.0); // r_jj = norm > 0, already canonical
        for vi in v.iter_mut() {
            *vi = *vi / (norm * phase);
        }
        q.push(v);
    }
    DenseMatrix::from_fn(d, |i, j| q[j][i])
}

/// Density matrix from the Hilbert-Schmidt ensemble: G G^dagger normalized.
pub fn random_density_matrix<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DenseMatrix {
    let g = DenseMatrix::from_fn(d, |_, _| complex_normal(rng));
    let rho = g.matmul(&g.dagger());
    let tr = rho.trace().re;
    rho.scale_re(1.0 / tr).hermitize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_matrix<R: Rng>(d: usize, rng: &mut R) -> DenseMatrix {
        DenseMatrix::from_fn(d, |_, _| complex_normal(rng))
    }

    fn random_hermitian<R: Rng>(d: usize, rng: &mut R) -> DenseMatrix {
        let g = random_matrix(d, rng);
        (&g + &g.dagger()).scale_re(0.5)
    }

    fn phi_plus(d: usize) -> DenseMatrix {
        let v: Vec<C64> = (0..d * d)
            .map(|k| {
                if k % d == k / d { c(1.0 / (d as f64).sqrt(), 0.0) } else { c(0.0, 0.0) }
            })
            .collect();
        DenseMatrix::outer(&v, &v)
    }

    #[test]
    fn kron_of_identities_is_identity() {
        let i2 = DenseMatrix::identity(2);
        let i3 = DenseMatrix::identity(3);
        assert_eq!(i2.kron(&i3), DenseMatrix::identity(6));
    }

    #[test]
    fn kron_entry_formula_holds() {
        let mut rng = RngSeed(11).rng();
        let a = random_matrix(2, &mut rng);
        let b = random_matrix(3, &mut rng);
        let k = a.kron(&b);
        for i in 0..2 {
            for j in 0..2 {
                for p in 0..3 {
                    for q in 0..3 {
                        assert_eq!(k[(i * 3 + p, j * 3 + q)], a[(i, j)] * b[(p, q)]);
                    }
                }
            }
        }
    }

    #[test]
    fn kron_is_associative_exactly() {
        let mut rng = RngSeed(12).rng();
        // Entries on a power-of-two lattice so both association orders hit
        // identical floating-point products.
        let lattice = |rng: &mut ChaCha8Rng, d: usize| {
            DenseMatrix::from_fn(d, |_, _| {
                let k: i32 = rng.gen_range(-4..5);
                let l: i32 = rng.gen_range(-4..5);
                c(f64::powi(2.0, k), f64::powi(2.0, l))
            })
        };
        let a = lattice(&mut rng, 2);
        let b = lattice(&mut rng, 3);
        let d = lattice(&mut rng, 2);
        assert_eq!(a.kron(&b).kron(&d), a.kron(&b.kron(&d)));
    }

    #[test]
    fn partial_trace_of_max_entangled_is_maximally_mixed() {
        let layout = SystemLayout::qubits(2);
        let reduced = phi_plus(2).partial_trace(&layout, &[0]).unwrap();
        assert!(reduced.max_abs_diff(&DenseMatrix::identity(2).scale_re(0.5)) < 1e-15);
        let reduced_b = phi_plus(2).partial_trace(&layout, &[1]).unwrap();
        assert!(reduced_b.max_abs_diff(&DenseMatrix::identity(2).scale_re(0.5)) < 1e-15);
    }

    #[test]
    fn partial_trace_splits_product_states() {
        let mut rng = RngSeed(13).rng();
        let a = random_density_matrix(2, &mut rng);
        let b = random_density_matrix(3, &mut rng);
        let layout = SystemLayout::new(vec![2, 3]).unwrap();
        let joint = a.kron(&b);
        assert!(joint.partial_trace(&layout, &[0]).unwrap().max_abs_diff(&a) < 1e-14);
        assert!(joint.partial_trace(&layout, &[1]).unwrap().max_abs_diff(&b) < 1e-14);
    }

    #[test]
    fn partial_trace_removes_middle_factor() {
        let mut rng = RngSeed(14).rng();
        let a = random_density_matrix(2, &mut rng);
        let b = random_density_matrix(2, &mut rng);
        let d = random_density_matrix(2, &mut rng);
        let layout = SystemLayout::qubits(3);
        let joint = a.kron(&b).kron(&d);
        let kept = joint.partial_trace(&layout, &[0, 2]).unwrap();
        assert!(kept.max_abs_diff(&a.kron(&d)) < 1e-14);
    }

    #[test]
    fn partial_trace_preserves_trace_and_checks_layout() {
        let mut rng = RngSeed(15).rng();
        let m = random_matrix(4, &mut rng);
        let layout = SystemLayout::qubits(2);
        let t = m.partial_trace(&layout, &[1]).unwrap();
        assert!((t.trace() - m.trace()).norm() < 1e-14);
        let bad = SystemLayout::new(vec![3, 2]).unwrap();
        assert!(matches!(
            m.partial_trace(&bad, &[0]),
            Err(Error::LayoutMismatch { .. })
        ));
    }

    #[test]
    fn partial_transpose_of_max_entangled_has_negative_eigenvalue() {
        let layout = SystemLayout::qubits(2);
        let pt = phi_plus(2).partial_transpose(&layout, &[1]).unwrap();
        let eig = pt.eig_hermitian().unwrap();
        let expect = [-0.5, 0.5, 0.5, 0.5];
        for (got, want) in eig.values.iter().zip(expect) {
            assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
        }
    }

    #[test]
    fn partial_transpose_keeps_trace_exactly() {
        let mut rng = RngSeed(16).rng();
        let m = random_matrix(6, &mut rng);
        let layout = SystemLayout::new(vec![2, 3]).unwrap();
        let pt = m.partial_transpose(&layout, &[1]).unwrap();
        assert_eq!(pt.trace(), m.trace());
    }

    #[test]
    fn partial_transpose_commutes_with_disjoint_partial_trace() {
        let mut rng = RngSeed(17).rng();
        let m = random_matrix(8, &mut rng);
        let layout = SystemLayout::qubits(3);
        // Transpose subsystem 2, trace out subsystem 0: disjoint supports.
        let a = m
            .partial_transpose(&layout, &[2])
            .unwrap()
            .partial_trace(&layout, &[1, 2])
            .unwrap();
        let reduced_layout = SystemLayout::qubits(2);
        let b = m
            .partial_trace(&layout, &[1, 2])
            .unwrap()
            .partial_transpose(&reduced_layout, &[1])
            .unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn permute_systems_swaps_factors() {
        let mut rng = RngSeed(18).rng();
        let a = random_matrix(2, &mut rng);
        let b = random_matrix(3, &mut rng);
        let layout = SystemLayout::new(vec![2, 3]).unwrap();
        let (swapped, new_layout) = a.kron(&b).permute_systems(&layout, &[1, 0]).unwrap();
        assert_eq!(new_layout.dims(), &[3, 2]);
        assert!(swapped.max_abs_diff(&b.kron(&a)) < 1e-15);
    }

    #[test]
    fn eig_diagonalizes_pauli_z_ascending() {
        let z = DenseMatrix::diag_real(&[1.0, -1.0]);
        let eig = z.eig_hermitian().unwrap();
        assert!((eig.values[0] + 1.0).abs() < 1e-14);
        assert!((eig.values[1] - 1.0).abs() < 1e-14);
        // Eigenvector of -1 is |1>.
        assert!(eig.vectors[(1, 0)].norm() > 0.999);
    }

    #[test]
    fn eig_reconstructs_random_hermitian_up_to_dim_16() {
        let mut rng = RngSeed(19).rng();
        for d in [2, 3, 5, 8, 16] {
            let m = random_hermitian(d, &mut rng);
            let eig = m.eig_hermitian().unwrap();
            let rebuilt = eig.rebuild(&eig.values);
            assert!(
                rebuilt.max_abs_diff(&m) < 1e-10,
                "reconstruction failed at dim {d}: {}",
                rebuilt.max_abs_diff(&m)
            );
            // V unitary to 1e-10.
            let vtv = eig.vectors.dagger().matmul(&eig.vectors);
            assert!(vtv.max_abs_diff(&DenseMatrix::identity(d)) < 1e-10);
            // Ascending order.
            for w in eig.values.windows(2) {
                assert!(w[0] <= w[1] + 1e-14);
            }
        }
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let m = DenseMatrix::from_fn(2, |i, j| {
            if i == 0 && j == 1 { c(1.0, 0.0) } else { c(0.0, 0.0) }
        });
        assert!(matches!(m.eig_hermitian(), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn psd_sqrt_of_projector_is_projector() {
        let p = phi_plus(2);
        let s = p.psd_sqrt().unwrap();
        assert!(s.max_abs_diff(&p) < 1e-12);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let mut rng = RngSeed(20).rng();
        for d in [2, 4, 8] {
            let m = random_density_matrix(d, &mut rng).scale_re(3.0);
            let s = m.psd_sqrt().unwrap();
            assert!(s.matmul(&s).max_abs_diff(&m) < 1e-9);
        }
    }

    #[test]
    fn psd_sqrt_rejects_indefinite() {
        let m = DenseMatrix::diag_real(&[1.0, -0.5]);
        assert!(matches!(m.psd_sqrt(), Err(Error::NotPositive { .. })));
    }

    #[test]
    fn psd_sqrt_clamps_tiny_negative_eigenvalues() {
        let m = DenseMatrix::diag_real(&[1.0, -5e-11]);
        let s = m.psd_sqrt().unwrap();
        assert!((s[(1, 1)].norm()) < 1e-5);
    }

    #[test]
    fn haar_unitary_is_unitary_and_deterministic() {
        for d in [2, 4, 8, 64] {
            let u = haar_unitary(d, &mut RngSeed(21).rng());
            let utu = u.dagger().matmul(&u);
            assert!(
                utu.max_abs_diff(&DenseMatrix::identity(d)) < 1e-10,
                "unitarity failed at d={d}"
            );
            let again = haar_unitary(d, &mut RngSeed(21).rng());
            assert_eq!(u, again);
        }
    }

    #[test]
    fn haar_first_entry_second_moment_matches_one_over_d() {
        // E|U_00|^2 = 1/d; single-sample variance is below 1/d^2, so the
        // 3-standard-error band over n samples is generous.
        let n = 10_000usize;
        for d in [2usize, 4] {
            let mut rng = RngSeed(22).rng();
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for _ in 0..n {
                let u = haar_unitary(d, &mut rng);
                let x = u[(0, 0)].norm_sqr();
                sum += x;
                sumsq += x * x;
            }
            let mean = sum / n as f64;
            let var = (sumsq / n as f64 - mean * mean).max(0.0);
            let se = (var / n as f64).sqrt();
            let expected = 1.0 / d as f64;
            assert!(
                (mean - expected).abs() <= 3.0 * se,
                "d={d}: mean {mean}, expected {expected}, se {se}"
            );
        }
    }

    #[test]
    fn rng_seed_children_are_distinct_and_stable() {
        let s = RngSeed(0);
        assert_eq!(s.child(0), s.child(0));
        assert_ne!(s.child(0), s.child(1));
        assert_ne!(s.child(0), RngSeed(1).child(0));
    }

    #[test]
    fn random_density_matrix_is_valid() {
        let mut rng = RngSeed(23).rng();
        let rho = random_density_matrix(4, &mut rng);
        assert!((rho.trace().re - 1.0).abs() < 1e-12);
        assert!(rho.eig_hermitian().unwrap().values[0] > -1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn partial_transpose_is_an_involution(
            entries in proptest::collection::vec(-1.0f64..1.0, 128),
            mask in 1u8..8,
        ) {
            let layout = SystemLayout::qubits(3);
            let m = DenseMatrix::from_fn(8, |i, j| {
                let k = 2 * (i * 8 + j);
                c(entries[k], entries[k + 1])
            });
            let which: Vec<usize> = (0..3).filter(|k| mask & (1 << k) != 0).collect();
            let twice = m
                .partial_transpose(&layout, &which).unwrap()
                .partial_transpose(&layout, &which).unwrap();
            prop_assert!(twice.max_abs_diff(&m) == 0.0);
        }
    }
}
