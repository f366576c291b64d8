//! Dense and sparse complex kernels over `ndarray` storage.
//!
//! Matrices live in row-major `Array2<C64>`; heavy products, eigenvalue problems
//! and LU solves are delegated to `faer` through zero-copy views.

use faer::linalg::matmul::matmul as faer_matmul;
use faer::prelude::*;
use std::ops::AddAssign;

use faer::sparse::{SparseColMat, Triplet};
use faer::traits::ComplexField;
use faer::{Accum, MatRef, Par, Side};
use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = Array2<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

fn as_faer(a: &CMat) -> MatRef<'_, C64> {
    let s = a
        .as_slice()
        .expect("matrices are kept in standard row-major layout");
    MatRef::from_row_major_slice(s, a.nrows(), a.ncols())
}

fn standard(a: &CMat) -> CMat {
    if a.is_standard_layout() {
        a.clone()
    } else {
        a.as_standard_layout().into_owned()
    }
}

/// `a · b`.
pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(a.ncols(), b.nrows(), "matmul shape mismatch");
    let (a, b) = (standard(a), standard(b));
    let mut out = Array2::<C64>::zeros((a.nrows(), b.ncols()));
    {
        let (r, c) = (out.nrows(), out.ncols());
        let dst = MatMut::from_row_major_slice_mut(out.as_slice_mut().unwrap(), r, c);
        faer_matmul(dst, Accum::Replace, as_faer(&a), as_faer(&b), ONE, Par::Seq);
    }
    out
}

/// `a · b · c`.
pub fn matmul3(a: &CMat, b: &CMat, c: &CMat) -> CMat {
    matmul(&matmul(a, b), c)
}

pub fn dagger(a: &CMat) -> CMat {
    a.t().mapv(|z| z.conj())
}

pub fn identity(n: usize) -> CMat {
    Array2::from_diag_elem(n, ONE)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::<C64>::zeros((ar * br, ac * bc));
    for ((i, j), &x) in a.indexed_iter() {
        if x == ZERO {
            continue;
        }
        for ((k, l), &y) in b.indexed_iter() {
            out[[i * br + k, j * bc + l]] = x * y;
        }
    }
    out
}

pub fn trace(a: &CMat) -> C64 {
    a.diag().sum()
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

/// Largest element of `|a − a†|`.
pub fn hermiticity_error(a: &CMat) -> f64 {
    let n = a.nrows();
    let mut m: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            m = m.max((a[[i, j]] - a[[j, i]].conj()).norm());
        }
    }
    m
}

/// Symmetrized copy `(a + a†)/2`; used before Hermitian eigensolves.
pub fn hermitian_part(a: &CMat) -> CMat {
    let d = dagger(a);
    (a + &d).mapv(|z| z * 0.5)
}

/// Ascending eigenvalues of a Hermitian matrix.
pub fn eigvalsh(a: &CMat) -> Result<Vec<f64>> {
    let h = hermitian_part(a);
    as_faer(&h)
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("Hermitian eigensolver failed: {e:?}")))
}

/// Ascending eigenvalues and column eigenvectors of a Hermitian matrix.
pub fn eigh(a: &CMat) -> Result<(Vec<f64>, CMat)> {
    let h = hermitian_part(a);
    let evd = as_faer(&h)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("Hermitian eigensolver failed: {e:?}")))?;
    let n = h.nrows();
    let s = evd.S();
    let u = evd.U();
    let vals = (0..n).map(|i| s[i].re).collect();
    let vecs = Array2::from_shape_fn((n, n), |(i, j)| u[(i, j)]);
    Ok((vals, vecs))
}

/// Solves `a x = b` by partial-pivoting LU.
pub fn solve(a: &CMat, b: &CMat) -> CMat {
    let (a, b) = (standard(a), standard(b));
    let lu = as_faer(&a).partial_piv_lu();
    let x = lu.solve(as_faer(&b));
    Array2::from_shape_fn((b.nrows(), b.ncols()), |(i, j)| x[(i, j)])
}

fn norm1(a: &CMat) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with the degree-13 Padé approximant.
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    let nrm = norm1(a);
    let s = if nrm > THETA13 {
        (nrm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a.mapv(|z| z / 2f64.powi(s));
    let b = PADE13.map(|x| C64::new(x, 0.0));
    let id = identity(n);
    let a2 = matmul(&a, &a);
    let a4 = matmul(&a2, &a2);
    let a6 = matmul(&a4, &a2);

    let inner_u = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u_poly = matmul(&a6, &inner_u) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1];
    let u = matmul(&a, &u_poly);
    let inner_v = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = matmul(&a6, &inner_v) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];

    let mut r = solve(&(&v - &u), &(&v + &u));
    for _ in 0..s {
        r = matmul(&r, &r);
    }
    r
}

/// Compressed sparse row matrix, used for jump operators inside integrators.
#[derive(Debug, Clone)]
pub struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<C64>,
}

impl Csr {
    pub fn from_dense(a: &CMat) -> Self {
        let (nrows, ncols) = a.dim();
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for i in 0..nrows {
            for j in 0..ncols {
                let v = a[[i, j]];
                if v != ZERO {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Csr {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn adjoint(&self) -> Csr {
        let mut t = Array2::<C64>::zeros((self.ncols, self.nrows));
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                t[[j, i]] += v.conj();
            }
        }
        Csr::from_dense(&t)
    }

    /// `out += scale · self · x`.
    pub fn mul_left_acc(&self, x: &CMat, scale: C64, out: &mut CMat) {
        let nc = x.ncols();
        for i in 0..self.nrows {
            let mut orow = out.row_mut(i);
            for (k, v) in self.row(i) {
                let f = scale * v;
                let xrow = x.row(k);
                for c in 0..nc {
                    orow[c] += f * xrow[c];
                }
            }
        }
    }

    /// `out += scale · x · self`.
    pub fn mul_right_acc(&self, x: &CMat, scale: C64, out: &mut CMat) {
        let nr = x.nrows();
        for k in 0..self.nrows {
            for (j, v) in self.row(k) {
                let f = scale * v;
                for r in 0..nr {
                    out[[r, j]] += f * x[[r, k]];
                }
            }
        }
    }

    pub fn mul_left(&self, x: &CMat) -> CMat {
        let mut out = Array2::zeros((self.nrows, x.ncols()));
        self.mul_left_acc(x, ONE, &mut out);
        out
    }

    pub fn mul_right(&self, x: &CMat) -> CMat {
        let mut out = Array2::zeros((x.nrows(), self.ncols));
        self.mul_right_acc(x, ONE, &mut out);
        out
    }
}

/// Square sparse system assembled from (row, col, value) entries; duplicates are summed.
pub struct SparseSystem<T = C64> {
    pub n: usize,
    pub entries: Vec<(usize, usize, T)>,
}

impl<T: ComplexField + Copy + PartialEq + Default + AddAssign> SparseSystem<T> {
    pub fn new(n: usize) -> Self {
        SparseSystem {
            n,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, val: T) {
        if val != T::default() {
            self.entries.push((row, col, val));
        }
    }

    fn merged(&self) -> Vec<Triplet<usize, usize, T>> {
        let mut e = self.entries.clone();
        e.sort_unstable_by_key(|&(r, c, _)| (c, r));
        let mut out: Vec<Triplet<usize, usize, T>> = Vec::with_capacity(e.len());
        for (r, c, v) in e {
            match out.last_mut() {
                Some(t) if t.row == r && t.col == c => t.val += v,
                _ => out.push(Triplet::new(r, c, v)),
            }
        }
        out
    }

    /// Solves `A x = b` by sparse LU.
    pub fn solve(&self, b: &Array1<T>) -> Result<Array1<T>> {
        let a = SparseColMat::<usize, T>::try_new_from_triplets(self.n, self.n, &self.merged())
            .map_err(|e| Error::Numerical(format!("sparse assembly failed: {e:?}")))?;
        let lu = a
            .sp_lu()
            .map_err(|e| Error::Numerical(format!("sparse LU failed: {e:?}")))?;
        let mut rhs = Mat::<T>::from_fn(self.n, 1, |i, _| b[i]);
        lu.solve_in_place(rhs.as_mut());
        let x = Array1::from_shape_fn(self.n, |i| rhs[(i, 0)]);
        if x.iter().any(|z| !T::is_finite_impl(z)) {
            return Err(Error::Numerical(
                "sparse LU produced non-finite solution".into(),
            ));
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sample(n: usize, seed: u64) -> CMat {
        let mut x = seed;
        Array2::from_shape_fn((n, n), |_| {
            x = x
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            let a = ((x >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
            x = x
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            let b = ((x >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
            C64::new(a, b)
        })
    }

    fn naive_matmul(a: &CMat, b: &CMat) -> CMat {
        Array2::from_shape_fn((a.nrows(), b.ncols()), |(i, j)| {
            (0..a.ncols()).map(|k| a[[i, k]] * b[[k, j]]).sum()
        })
    }

    #[test]
    fn matmul_matches_naive() {
        let a = sample(7, 1);
        let b = sample(7, 2);
        let d = matmul(&a, &b) - naive_matmul(&a, &b);
        assert!(max_abs(&d) < 1e-13);
    }

    #[test]
    fn matmul_of_transposed_view() {
        let a = sample(5, 3);
        let at = a.t().to_owned();
        let d = matmul(&at, &a) - naive_matmul(&at, &a);
        assert!(max_abs(&d) < 1e-13);
    }

    #[test]
    fn expm_of_hermitian_matches_eigen_route() {
        let a = sample(12, 4);
        let h = hermitian_part(&a).mapv(|z| z * 9.0);
        let u = expm(&h.mapv(|z| -I * z));
        let (vals, vecs) = eigh(&h).unwrap();
        let phases = Array2::from_diag(&Array1::from_iter(vals.iter().map(|&l| (-I * l).exp())));
        let oracle = matmul3(&vecs, &phases, &dagger(&vecs));
        assert!(max_abs(&(&u - &oracle)) < 1e-12);
        let unit = matmul(&dagger(&u), &u) - identity(12);
        assert!(max_abs(&unit) < 1e-12);
    }

    #[test]
    fn expm_of_nilpotent_is_truncated_series() {
        let mut a = Array2::<C64>::zeros((3, 3));
        a[[0, 1]] = C64::new(2.0, 0.0);
        a[[1, 2]] = C64::new(3.0, 0.0);
        let e = expm(&a);
        assert_abs_diff_eq!(e[[0, 2]].re, 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e[[0, 1]].re, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e[[2, 2]].re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn csr_products_match_dense() {
        let mut a = sample(6, 5);
        a.mapv_inplace(|z| if z.re > 0.1 { z } else { ZERO });
        let x = sample(6, 6);
        let s = Csr::from_dense(&a);
        assert!(max_abs(&(s.mul_left(&x) - naive_matmul(&a, &x))) < 1e-14);
        assert!(max_abs(&(s.mul_right(&x) - naive_matmul(&x, &a))) < 1e-14);
        assert!(
            max_abs(&(Csr::from_dense(&dagger(&a)).mul_left(&x) - s.adjoint().mul_left(&x)))
                < 1e-14
        );
    }

    #[test]
    fn sparse_solve_matches_dense() {
        let a = sample(9, 7) + identity(9).mapv(|z| z * 3.0);
        let b = Array1::from_iter((0..9).map(|i| C64::new(i as f64, 1.0)));
        let mut sys = SparseSystem::new(9);
        for ((i, j), &v) in a.indexed_iter() {
            // split entries to exercise duplicate summation
            sys.push(i, j, v * 0.5);
            sys.push(i, j, v * 0.5);
        }
        let x = sys.solve(&b).unwrap();
        let r = a.dot(&x) - &b;
        assert!(r.iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn real_sparse_solve() {
        let mut sys = SparseSystem::<f64>::new(3);
        for (r, c, v) in [
            (0, 0, 2.0),
            (0, 1, 1.0),
            (1, 1, 3.0),
            (2, 0, -1.0),
            (2, 2, 4.0),
        ] {
            sys.push(r, c, v);
        }
        let x = sys.solve(&Array1::from_vec(vec![3.0, 3.0, 3.0])).unwrap();
        assert_abs_diff_eq!(x[1], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(x[2], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn eigvalsh_sorted_and_correct() {
        let mut d = Array2::<C64>::zeros((3, 3));
        d[[0, 0]] = C64::new(2.0, 0.0);
        d[[1, 1]] = C64::new(-1.0, 0.0);
        d[[2, 2]] = C64::new(0.5, 0.0);
        let v = eigvalsh(&d).unwrap();
        assert_abs_diff_eq!(v[0], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(v[2], 2.0, epsilon = 1e-14);
    }
}
