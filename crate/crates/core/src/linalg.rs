//! Dense linear-algebra kernels used across the crate.
//!
//! Eigendecompositions go through LAPACK's divide-and-conquer drivers
//! (`dsyevd`/`zheevd`), which are several times faster than the QR-based
//! `?syev` for the matrix sizes exact diagonalization needs. Everything else
//! is small enough to do in plain Rust.

use lapack_sys::__BindgenComplex;
use ndarray::{Array2, ShapeBuilder};
use num_complex::Complex64;
use std::os::raw::c_char;
use thiserror::Error;

pub type C64 = Complex64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("LAPACK {routine} failed with info = {info}")]
    Lapack { routine: &'static str, info: i32 },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is singular to working precision")]
    Singular,
}

fn check_square<T>(a: &Array2<T>) -> Result<usize, LinalgError> {
    let (rows, cols) = a.dim();
    if rows != cols {
        return Err(LinalgError::NotSquare { rows, cols });
    }
    Ok(rows)
}

/// Eigendecomposition of a real symmetric matrix. Eigenvalues ascend;
/// column `k` of the returned matrix is the eigenvector for eigenvalue `k`.
/// Only the lower triangle of `a` is read.
pub fn eigh_real(a: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>), LinalgError> {
    let n = check_square(a)?;
    if n == 0 {
        return Ok((Vec::new(), Array2::zeros((0, 0))));
    }
    // Column-major copy.
    let mut buf = vec![0.0f64; n * n];
    for ((i, j), v) in a.indexed_iter() {
        buf[i + j * n] = *v;
    }
    let mut w = vec![0.0f64; n];
    let jobz = b'V' as c_char;
    let uplo = b'L' as c_char;
    let nn = n as i32;
    let mut info = 0i32;
    let mut work_q = 0.0f64;
    let mut iwork_q = 0i32;
    let query = -1i32;
    unsafe {
        lapack_sys::dsyevd_(
            &jobz, &uplo, &nn, buf.as_mut_ptr(), &nn, w.as_mut_ptr(), &mut work_q, &query,
            &mut iwork_q, &query, &mut info,
        );
    }
    if info != 0 {
        return Err(LinalgError::Lapack { routine: "dsyevd", info });
    }
    let lwork = work_q as i32;
    let liwork = iwork_q;
    let mut work = vec![0.0f64; lwork.max(1) as usize];
    let mut iwork = vec![0i32; liwork.max(1) as usize];
    unsafe {
        lapack_sys::dsyevd_(
            &jobz, &uplo, &nn, buf.as_mut_ptr(), &nn, w.as_mut_ptr(), work.as_mut_ptr(), &lwork,
            iwork.as_mut_ptr(), &liwork, &mut info,
        );
    }
    if info != 0 {
        return Err(LinalgError::Lapack { routine: "dsyevd", info });
    }
    let v = Array2::from_shape_vec((n, n).f(), buf).expect("shape matches buffer");
    Ok((w, v))
}

/// Eigendecomposition of a complex Hermitian matrix (lower triangle read).
pub fn eigh_complex(a: &Array2<C64>) -> Result<(Vec<f64>, Array2<C64>), LinalgError> {
    let (w, v) = zheevd(a, true)?;
    Ok((w, v.expect("vectors requested")))
}

/// Eigenvalues only of a complex Hermitian matrix.
pub fn eigvalsh_complex(a: &Array2<C64>) -> Result<Vec<f64>, LinalgError> {
    Ok(zheevd(a, false)?.0)
}

fn zheevd(a: &Array2<C64>, vectors: bool) -> Result<(Vec<f64>, Option<Array2<C64>>), LinalgError> {
    let n = check_square(a)?;
    if n == 0 {
        return Ok((Vec::new(), vectors.then(|| Array2::zeros((0, 0)))));
    }
    let mut buf = vec![C64::new(0.0, 0.0); n * n];
    for ((i, j), v) in a.indexed_iter() {
        buf[i + j * n] = *v;
    }
    let mut w = vec![0.0f64; n];
    let jobz = if vectors { b'V' } else { b'N' } as c_char;
    let uplo = b'L' as c_char;
    let nn = n as i32;
    let mut info = 0i32;
    let query = -1i32;
    let mut work_q = __BindgenComplex { re: 0.0f64, im: 0.0 };
    let mut rwork_q = 0.0f64;
    let mut iwork_q = 0i32;
    let ptr = buf.as_mut_ptr() as *mut __BindgenComplex<f64>;
    unsafe {
        lapack_sys::zheevd_(
            &jobz, &uplo, &nn, ptr, &nn, w.as_mut_ptr(), &mut work_q, &query, &mut rwork_q,
            &query, &mut iwork_q, &query, &mut info,
        );
    }
    if info != 0 {
        return Err(LinalgError::Lapack { routine: "zheevd", info });
    }
    let lwork = work_q.re as i32;
    let lrwork = rwork_q as i32;
    let liwork = iwork_q;
    let mut work = vec![__BindgenComplex { re: 0.0f64, im: 0.0 }; lwork.max(1) as usize];
    let mut rwork = vec![0.0f64; lrwork.max(1) as usize];
    let mut iwork = vec![0i32; liwork.max(1) as usize];
    unsafe {
        lapack_sys::zheevd_(
            &jobz, &uplo, &nn, ptr, &nn, w.as_mut_ptr(), work.as_mut_ptr(), &lwork,
            rwork.as_mut_ptr(), &lrwork, iwork.as_mut_ptr(), &liwork, &mut info,
        );
    }
    if info != 0 {
        return Err(LinalgError::Lapack { routine: "zheevd", info });
    }
    let v = vectors.then(|| Array2::from_shape_vec((n, n).f(), buf).expect("shape matches buffer"));
    Ok((w, v))
}

/// Solves `a x = b` for square `a` with LU and partial pivoting.
pub fn solve_complex(a: &Array2<C64>, b: &Array2<C64>) -> Result<Array2<C64>, LinalgError> {
    let n = check_square(a)?;
    let m = b.ncols();
    let mut lu = a.clone();
    let mut x = b.clone();
    for k in 0..n {
        let (p, pmax) = (k..n)
            .map(|i| (i, lu[[i, k]].norm()))
            .fold((k, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if pmax == 0.0 || !pmax.is_finite() {
            return Err(LinalgError::Singular);
        }
        if p != k {
            for j in 0..n {
                lu.swap([k, j], [p, j]);
            }
            for j in 0..m {
                x.swap([k, j], [p, j]);
            }
        }
        let pivot = lu[[k, k]];
        for i in (k + 1)..n {
            let f = lu[[i, k]] / pivot;
            if f == C64::new(0.0, 0.0) {
                continue;
            }
            lu[[i, k]] = f;
            for j in (k + 1)..n {
                let t = lu[[k, j]];
                lu[[i, j]] -= f * t;
            }
            for j in 0..m {
                let t = x[[k, j]];
                x[[i, j]] -= f * t;
            }
        }
    }
    for k in (0..n).rev() {
        let pivot = lu[[k, k]];
        for j in 0..m {
            let mut s = x[[k, j]];
            for i in (k + 1)..n {
                s -= lu[[k, i]] * x[[i, j]];
            }
            x[[k, j]] = s / pivot;
        }
    }
    Ok(x)
}

fn one_norm(a: &Array2<C64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a degree-13 Padé
/// approximant (Higham 2005).
pub fn expm(a: &Array2<C64>) -> Result<Array2<C64>, LinalgError> {
    const B: [f64; 14] = [
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
    let n = check_square(a)?;
    if n == 0 {
        return Ok(a.clone());
    }
    let norm = one_norm(a);
    if norm == 0.0 {
        return Ok(identity(n));
    }
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let scale = 0.5f64.powi(s);
    let a1 = a.mapv(|z| z * scale);
    let eye = identity(n);
    let a2 = a1.dot(&a1);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);
    let c = |k: usize| C64::new(B[k], 0.0);
    let u_inner = &a6 * c(13) + &a4 * c(11) + &a2 * c(9);
    let u_inner = a6.dot(&u_inner) + &a6 * c(7) + &a4 * c(5) + &a2 * c(3) + &eye * c(1);
    let u = a1.dot(&u_inner);
    let v_inner = &a6 * c(12) + &a4 * c(10) + &a2 * c(8);
    let v = a6.dot(&v_inner) + &a6 * c(6) + &a4 * c(4) + &a2 * c(2) + &eye * c(0);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = solve_complex(&q, &p)?;
    for _ in 0..s {
        r = r.dot(&r);
    }
    Ok(r)
}

pub fn identity(n: usize) -> Array2<C64> {
    Array2::from_diag_elem(n, C64::new(1.0, 0.0))
}

/// Conjugate transpose.
pub fn dagger(a: &Array2<C64>) -> Array2<C64> {
    a.t().mapv(|z| z.conj())
}

/// `V^T M V` for real orthogonal `v` and complex `m`.
pub fn to_basis(m: &Array2<C64>, v: &Array2<f64>) -> Array2<C64> {
    let vc = v.mapv(|x| C64::new(x, 0.0));
    vc.t().dot(m).dot(&vc)
}

/// `V M V^T`, the inverse of [`to_basis`].
pub fn from_basis(m: &Array2<C64>, v: &Array2<f64>) -> Array2<C64> {
    let vc = v.mapv(|x| C64::new(x, 0.0));
    vc.dot(m).dot(&vc.t())
}

/// Largest entry magnitude.
pub fn max_abs(a: &Array2<C64>) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Groups ascending values into clusters whose consecutive members differ by
/// at most `tol`. Returns the cluster id of every value and the cluster means.
pub fn cluster_sorted(values: &[f64], tol: f64) -> (Vec<usize>, Vec<f64>) {
    let mut ids = Vec::with_capacity(values.len());
    let mut sums: Vec<(f64, usize)> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        if i == 0 || v - values[i - 1] > tol {
            sums.push((0.0, 0));
        }
        let last = sums.len() - 1;
        sums[last].0 += v;
        sums[last].1 += 1;
        ids.push(last);
    }
    let means = sums.iter().map(|(s, c)| s / *c as f64).collect();
    (ids, means)
}
