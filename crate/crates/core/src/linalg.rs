//! Dense complex linear algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Spectral norm (largest singular value).
pub fn op_norm(a: &CMat) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Smallest singular value of a square matrix.
pub fn smallest_singular(a: &CMat) -> f64 {
    if a.nrows() == 0 {
        return f64::INFINITY;
    }
    if let Some(d) = as_diagonal(a) {
        return d.iter().map(|x| x.norm()).fold(f64::INFINITY, f64::min);
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Diagonal entries of a square matrix with no off-diagonal entries.
pub fn as_diagonal(a: &CMat) -> Option<Vec<C64>> {
    if a.nrows() != a.ncols() {
        return None;
    }
    let zero = C64::new(0.0, 0.0);
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if i != j && a[(i, j)] != zero {
                return None;
            }
        }
    }
    Some(a.diagonal().iter().copied().collect())
}

/// `a * b`, scaling rows or columns when a factor is diagonal.
pub fn mul(a: &CMat, b: &CMat) -> CMat {
    if let Some(d) = as_diagonal(a) {
        let mut out = b.clone();
        for (i, x) in d.iter().enumerate() {
            for v in out.row_mut(i).iter_mut() {
                *v *= x;
            }
        }
        return out;
    }
    if let Some(d) = as_diagonal(b) {
        let mut out = a.clone();
        for (j, x) in d.iter().enumerate() {
            for v in out.column_mut(j).iter_mut() {
                *v *= x;
            }
        }
        return out;
    }
    a * b
}

/// Product of a chain of factors, left to right.
pub fn mul_all(factors: &[&CMat]) -> CMat {
    let mut out = factors[0].clone();
    for f in &factors[1..] {
        out = mul(&out, f);
    }
    out
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigh(a: &CMat) -> (Vec<f64>, CMat) {
    let n = a.nrows();
    let sym = (a + a.adjoint()) * re(0.5);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Orthonormal basis (as columns) of the range of a Hermitian matrix.
pub fn range_basis(h: &CMat, tol: f64) -> CMat {
    if let Some(d) = as_diagonal(h) {
        let keep: Vec<usize> = (0..d.len()).filter(|&i| d[i].norm() > tol).collect();
        let mut basis = CMat::zeros(h.nrows(), keep.len());
        for (col, &i) in keep.iter().enumerate() {
            basis[(i, col)] = re(1.0);
        }
        return basis;
    }
    let (values, vectors) = hermitian_eigh(h);
    let keep: Vec<usize> = (0..values.len()).filter(|&i| values[i].abs() > tol).collect();
    let mut basis = CMat::zeros(h.nrows(), keep.len());
    for (col, &i) in keep.iter().enumerate() {
        basis.set_column(col, &vectors.column(i));
    }
    basis
}

pub fn hermiticity_residual(a: &CMat) -> f64 {
    max_abs(&(a - a.adjoint()))
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    mul(a, b) - mul(b, a)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMat::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s == C64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = s * b[(k, l)];
                }
            }
        }
    }
    out
}

pub fn diag(values: &[C64]) -> CMat {
    CMat::from_diagonal(&DVector::from_column_slice(values))
}

pub fn real_diag(values: &[f64]) -> CMat {
    CMat::from_fn(values.len(), values.len(), |i, j| {
        if i == j {
            re(values[i])
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Inverse of a square matrix, `None` when the smallest singular value falls below `tol`.
pub fn guarded_inverse(a: &CMat, tol: f64) -> Option<CMat> {
    if a.nrows() == 0 {
        return Some(CMat::zeros(0, 0));
    }
    if smallest_singular(a) <= tol {
        return None;
    }
    a.clone().try_inverse()
}

/// Right singular vectors with singular value below `threshold` (a numerical kernel).
pub fn kernel_vectors(a: &CMat, threshold: f64) -> CMat {
    let n = a.ncols();
    if n == 0 {
        return CMat::zeros(0, 0);
    }
    // pad to square so every right singular vector is returned
    let square = if a.nrows() >= n {
        a.clone()
    } else {
        let mut p = CMat::zeros(n, n);
        p.rows_mut(0, a.nrows()).copy_from(a);
        p
    };
    let svd = square.svd(false, true);
    let v_t = svd.v_t.expect("requested right vectors");
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] < threshold)
        .collect();
    let mut out = CMat::zeros(n, keep.len());
    for (col, &i) in keep.iter().enumerate() {
        out.set_column(col, &v_t.row(i).adjoint());
    }
    out
}
