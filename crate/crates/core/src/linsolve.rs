//! Sparse linear solves for the per-step systems: ILU(0)-preconditioned
//! conjugate gradients for the symmetric HJB systems and ILU(0)-preconditioned
//! BiCGStab for the nonsymmetric KFP systems.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math::{abs, axpy, vdot, vnorm};
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Trivial,
    ConjugateGradient,
    BiCgStab,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Trivial => "zero-rhs",
            Method::ConjugateGradient => "ilu0-cg",
            Method::BiCgStab => "ilu0-bicgstab",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub method: Method,
}

/// Incomplete LU factorisation with the sparsity pattern of the matrix.
/// For a symmetric matrix this is the incomplete Cholesky factor in `LDL^T`
/// form, so it is a valid preconditioner for CG.
#[derive(Debug, Clone)]
struct Ilu0 {
    lu: CsrMatrix,
    diag_pos: Vec<usize>,
    /// Set when a pivot vanished; the preconditioner is then the identity.
    broken: bool,
}

impl Ilu0 {
    fn new(a: &CsrMatrix) -> Self {
        let n = a.dim();
        let mut lu = a.clone();
        let row_ptr = lu.row_ptr().to_vec();
        let cols = lu.col_idx().to_vec();
        let diag_pos: Vec<usize> = (0..n)
            .map(|i| row_ptr[i] + cols[row_ptr[i]..row_ptr[i + 1]].binary_search(&i).unwrap())
            .collect();
        let mut marker = vec![usize::MAX; n];
        let vals = lu.values_mut();
        for i in 0..n {
            for k in row_ptr[i]..row_ptr[i + 1] {
                marker[cols[k]] = k;
            }
            for k in row_ptr[i]..diag_pos[i] {
                let col = cols[k];
                let pivot = vals[diag_pos[col]];
                let factor = vals[k] / pivot;
                vals[k] = factor;
                for kj in diag_pos[col] + 1..row_ptr[col + 1] {
                    let m = marker[cols[kj]];
                    if m != usize::MAX {
                        vals[m] -= factor * vals[kj];
                    }
                }
            }
            for k in row_ptr[i]..row_ptr[i + 1] {
                marker[cols[k]] = usize::MAX;
            }
        }
        let broken = diag_pos.iter().any(|&k| {
            let d = lu.values()[k];
            d == 0.0 || !d.is_finite()
        });
        Ilu0 { lu, diag_pos, broken }
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        if self.broken {
            z.copy_from_slice(r);
            return;
        }
        let n = r.len();
        let row_ptr = self.lu.row_ptr();
        let cols = self.lu.col_idx();
        let vals = self.lu.values();
        for i in 0..n {
            let mut s = r[i];
            for k in row_ptr[i]..self.diag_pos[i] {
                s -= vals[k] * z[cols[k]];
            }
            z[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in self.diag_pos[i] + 1..row_ptr[i + 1] {
                s -= vals[k] * z[cols[k]];
            }
            z[i] = s / vals[self.diag_pos[i]];
        }
    }
}

fn residual(a: &CsrMatrix, x: &[f64], rhs: &[f64], r: &mut [f64]) {
    a.mul_vec_into(x, r);
    for (ri, bi) in r.iter_mut().zip(rhs) {
        *ri = bi - *ri;
    }
}

fn check_dims(a: &CsrMatrix, rhs: &[f64]) -> Result<()> {
    if a.dim() != rhs.len() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: rhs.len() });
    }
    Ok(())
}

fn max_iterations(n: usize) -> usize {
    10 * n + 200
}

/// Reusable preconditioned CG solver for a fixed SPD matrix.
#[derive(Debug, Clone)]
pub struct SpdSolver {
    a: CsrMatrix,
    precond: Ilu0,
}

impl SpdSolver {
    pub fn new(a: CsrMatrix) -> Self {
        let precond = Ilu0::new(&a);
        SpdSolver { a, precond }
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.a
    }

    /// Solves `A x = rhs` starting from `guess` (zero when `None`).
    pub fn solve(&self, rhs: &[f64], guess: Option<&[f64]>, tol: f64) -> Result<(Vec<f64>, SolveReport)> {
        check_dims(&self.a, rhs)?;
        let n = rhs.len();
        let bnorm = vnorm(rhs);
        if bnorm == 0.0 {
            let report = SolveReport { iterations: 0, relative_residual: 0.0, method: Method::Trivial };
            return Ok((vec![0.0; n], report));
        }
        let mut x = guess.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
        let mut r = vec![0.0; n];
        residual(&self.a, &x, rhs, &mut r);
        let mut z = vec![0.0; n];
        self.precond.apply(&r, &mut z);
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz = vdot(&r, &z);
        let mut rel = vnorm(&r) / bnorm;
        let mut it = 0;
        while rel > tol && it < max_iterations(n) {
            self.a.mul_vec_into(&p, &mut ap);
            let alpha = rz / vdot(&p, &ap);
            axpy(alpha, &p, &mut x);
            axpy(-alpha, &ap, &mut r);
            it += 1;
            rel = vnorm(&r) / bnorm;
            if rel <= tol {
                // the recurrence can drift from the true residual
                residual(&self.a, &x, rhs, &mut r);
                rel = vnorm(&r) / bnorm;
                if rel <= tol {
                    break;
                }
            }
            self.precond.apply(&r, &mut z);
            let rz_new = vdot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for (pi, zi) in p.iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
        }
        let report = SolveReport { iterations: it, relative_residual: rel, method: Method::ConjugateGradient };
        if rel <= tol {
            Ok((x, report))
        } else {
            Err(Error::LinearSolve { report })
        }
    }
}

/// Reusable preconditioned BiCGStab solver for a fixed nonsymmetric matrix.
#[derive(Debug, Clone)]
pub struct GeneralSolver {
    a: CsrMatrix,
    precond: Ilu0,
}

impl GeneralSolver {
    pub fn new(a: CsrMatrix) -> Self {
        let precond = Ilu0::new(&a);
        GeneralSolver { a, precond }
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.a
    }

    pub fn solve(&self, rhs: &[f64], guess: Option<&[f64]>, tol: f64) -> Result<(Vec<f64>, SolveReport)> {
        check_dims(&self.a, rhs)?;
        let n = rhs.len();
        let bnorm = vnorm(rhs);
        if bnorm == 0.0 {
            let report = SolveReport { iterations: 0, relative_residual: 0.0, method: Method::Trivial };
            return Ok((vec![0.0; n], report));
        }
        let mut x = guess.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
        let mut r = vec![0.0; n];
        let (mut p, mut v, mut s, mut t) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let (mut phat, mut shat) = (vec![0.0; n], vec![0.0; n]);
        let mut total = 0;
        let budget = max_iterations(n);
        residual(&self.a, &x, rhs, &mut r);
        let mut rel = vnorm(&r) / bnorm;

        // Restart from the true residual whenever the recurrence breaks down
        // or drifts.
        'restart: while rel > tol && total < budget {
            let r0 = r.clone();
            let mut rho = 1.0;
            let mut alpha = 1.0;
            let mut omega = 1.0;
            p.iter_mut().for_each(|x| *x = 0.0);
            v.iter_mut().for_each(|x| *x = 0.0);
            while total < budget {
                let rho_new = vdot(&r0, &r);
                if abs(rho_new) < 1e-300 || omega == 0.0 {
                    residual(&self.a, &x, rhs, &mut r);
                    rel = vnorm(&r) / bnorm;
                    continue 'restart;
                }
                let beta = (rho_new / rho) * (alpha / omega);
                rho = rho_new;
                for i in 0..n {
                    p[i] = r[i] + beta * (p[i] - omega * v[i]);
                }
                self.precond.apply(&p, &mut phat);
                self.a.mul_vec_into(&phat, &mut v);
                let denom = vdot(&r0, &v);
                if denom == 0.0 {
                    residual(&self.a, &x, rhs, &mut r);
                    rel = vnorm(&r) / bnorm;
                    continue 'restart;
                }
                alpha = rho / denom;
                for i in 0..n {
                    s[i] = r[i] - alpha * v[i];
                }
                total += 1;
                if vnorm(&s) / bnorm <= tol {
                    axpy(alpha, &phat, &mut x);
                    residual(&self.a, &x, rhs, &mut r);
                    rel = vnorm(&r) / bnorm;
                    continue 'restart;
                }
                self.precond.apply(&s, &mut shat);
                self.a.mul_vec_into(&shat, &mut t);
                let tt = vdot(&t, &t);
                omega = if tt > 0.0 { vdot(&t, &s) / tt } else { 0.0 };
                axpy(alpha, &phat, &mut x);
                axpy(omega, &shat, &mut x);
                for i in 0..n {
                    r[i] = s[i] - omega * t[i];
                }
                if vnorm(&r) / bnorm <= tol {
                    residual(&self.a, &x, rhs, &mut r);
                    rel = vnorm(&r) / bnorm;
                    continue 'restart;
                }
            }
        }
        let report = SolveReport { iterations: total, relative_residual: rel, method: Method::BiCgStab };
        if rel <= tol {
            Ok((x, report))
        } else {
            Err(Error::LinearSolve { report })
        }
    }
}

/// Solves a symmetric positive definite system to relative residual `tol`.
pub fn solve_spd(a: &CsrMatrix, rhs: &[f64], tol: f64) -> Result<(Vec<f64>, SolveReport)> {
    SpdSolver::new(a.clone()).solve(rhs, None, tol)
}

/// Solves a general invertible system to relative residual `tol`.
pub fn solve_general(a: &CsrMatrix, rhs: &[f64], tol: f64) -> Result<(Vec<f64>, SolveReport)> {
    GeneralSolver::new(a.clone()).solve(rhs, None, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn identity() {
        let a = CsrMatrix::identity(3);
        let (x, _) = solve_spd(&a, &[1.0, -2.0, 3.0], DEFAULT_TOLERANCE).unwrap();
        assert!(close(&x, &[1.0, -2.0, 3.0], 1e-14));
    }

    #[test]
    fn two_by_two_spd() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0)], true);
        let (x, rep) = solve_spd(&a, &[1.0, 1.0], DEFAULT_TOLERANCE).unwrap();
        assert!(close(&x, &[1.0, 1.0], 1e-12));
        assert!(rep.relative_residual <= DEFAULT_TOLERANCE);
    }

    #[test]
    fn lumped_mass_diagonal() {
        let mu = [0.25, 0.5, 2.0];
        let a = CsrMatrix::diagonal(&mu);
        let (x, _) = solve_spd(&a, &[1.0, 1.0, 1.0], DEFAULT_TOLERANCE).unwrap();
        assert!(close(&x, &[4.0, 2.0, 0.5], 1e-14));
    }

    #[test]
    fn zero_rhs() {
        let a = CsrMatrix::identity(4);
        let (x, rep) = solve_general(&a, &[0.0; 4], DEFAULT_TOLERANCE).unwrap();
        assert_eq!(x, vec![0.0; 4]);
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn upper_triangular() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 1, 1.0)], false);
        let (x, _) = solve_general(&a, &[2.0, 1.0], DEFAULT_TOLERANCE).unwrap();
        assert!(close(&x, &[1.0, 1.0], 1e-12));
    }

    #[test]
    fn permuted_identity() {
        let a = CsrMatrix::from_triplets(3, &[(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)], false);
        let (x, _) = solve_general(&a, &[1.0, 2.0, 3.0], DEFAULT_TOLERANCE).unwrap();
        // x[1] = 1, x[2] = 2, x[0] = 3
        assert!(close(&x, &[3.0, 1.0, 2.0], 1e-12));
    }

    fn laplacian_1d(n: usize, shift: f64, skew: f64) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + shift));
            if i > 0 {
                t.push((i, i - 1, -1.0 - skew));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0 + skew));
            }
        }
        CsrMatrix::from_triplets(n, &t, skew == 0.0)
    }

    #[test]
    fn general_agrees_with_spd_on_symmetric_input() {
        let a = laplacian_1d(50, 0.1, 0.0);
        let rhs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let (x1, _) = solve_spd(&a, &rhs, DEFAULT_TOLERANCE).unwrap();
        let (x2, _) = solve_general(&a, &rhs, DEFAULT_TOLERANCE).unwrap();
        assert!(close(&x1, &x2, 1e-10));
    }

    #[test]
    fn nonsymmetric_residual_bound() {
        let a = laplacian_1d(200, 0.01, 0.4);
        let rhs: Vec<f64> = (0..200).map(|i| 1.0 + (i % 7) as f64).collect();
        let (x, rep) = solve_general(&a, &rhs, DEFAULT_TOLERANCE).unwrap();
        let r: Vec<f64> = a.mul_vec(&x).iter().zip(&rhs).map(|(a, b)| a - b).collect();
        assert!(vnorm(&r) / vnorm(&rhs) <= DEFAULT_TOLERANCE);
        assert!(rep.relative_residual <= DEFAULT_TOLERANCE);
    }

    #[test]
    fn deterministic() {
        let a = laplacian_1d(80, 0.05, 0.2);
        let rhs: Vec<f64> = (0..80).map(|i| (i as f64).cos()).collect();
        let (x1, _) = solve_general(&a, &rhs, DEFAULT_TOLERANCE).unwrap();
        let (x2, _) = solve_general(&a, &rhs, DEFAULT_TOLERANCE).unwrap();
        assert_eq!(x1, x2);
    }

    #[test]
    fn failure_carries_report() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)], true);
        let err = solve_spd(&a, &[1.0, 0.0], DEFAULT_TOLERANCE).unwrap_err();
        assert!(matches!(err, Error::LinearSolve { .. }));
    }
}
