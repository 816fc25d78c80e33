//! Sparse direct solution of the assembled saddle-point systems.
//!
//! The matrices are symmetric indefinite and change pattern whenever the
//! interface moves, so every step performs a fresh multifrontal LU with
//! partial pivoting (UMFPACK), which is robust on the indefinite block
//! structure at these 2D problem sizes. Solves carry iterative refinement
//! and are checked against a residual contract.

use crate::assembly::SystemMatrix;
use crate::error::{Error, Result};
use crate::spaces::DofMap;
use std::os::raw::{c_int, c_void};

#[allow(non_snake_case)]
extern "C" {
    fn umfpack_di_triplet_to_col(
        n_row: c_int,
        n_col: c_int,
        nz: c_int,
        Ti: *const c_int,
        Tj: *const c_int,
        Tx: *const f64,
        Ap: *mut c_int,
        Ai: *mut c_int,
        Ax: *mut f64,
        Map: *mut c_int,
    ) -> c_int;
    fn umfpack_di_symbolic(
        n_row: c_int,
        n_col: c_int,
        Ap: *const c_int,
        Ai: *const c_int,
        Ax: *const f64,
        Symbolic: *mut *mut c_void,
        Control: *const f64,
        Info: *mut f64,
    ) -> c_int;
    fn umfpack_di_numeric(
        Ap: *const c_int,
        Ai: *const c_int,
        Ax: *const f64,
        Symbolic: *mut c_void,
        Numeric: *mut *mut c_void,
        Control: *const f64,
        Info: *mut f64,
    ) -> c_int;
    fn umfpack_di_solve(
        sys: c_int,
        Ap: *const c_int,
        Ai: *const c_int,
        Ax: *const f64,
        X: *mut f64,
        B: *const f64,
        Numeric: *mut c_void,
        Control: *const f64,
        Info: *mut f64,
    ) -> c_int;
    fn umfpack_di_free_symbolic(Symbolic: *mut *mut c_void);
    fn umfpack_di_free_numeric(Numeric: *mut *mut c_void);
    fn umfpack_di_defaults(Control: *mut f64);
}

const UMFPACK_A: c_int = 0;
const UMFPACK_CONTROL: usize = 20;
const UMFPACK_INFO: usize = 90;
const UMFPACK_OK: c_int = 0;

pub struct Factorization {
    numeric: *mut c_void,
    control: [f64; UMFPACK_CONTROL],
    // Compressed-column copy kept for solves, refinement, and residuals.
    ap: Vec<c_int>,
    ai: Vec<c_int>,
    ax: Vec<f64>,
    amax: f64,
    dim: usize,
}

// The numeric object is only read by solves and freed on drop.
unsafe impl Send for Factorization {}

impl Drop for Factorization {
    fn drop(&mut self) {
        unsafe { umfpack_di_free_numeric(&mut self.numeric) };
    }
}

/// Factor the assembled matrix. `dofs`, when given, names the block of a
/// structurally or numerically singular pivot.
pub fn factor(mat: &SystemMatrix, dofs: Option<&DofMap>) -> Result<Factorization> {
    let n = mat.dim;
    let block_name = |index: usize| {
        dofs.map(|d| d.block_of(index))
            .unwrap_or("unknown")
            .to_string()
    };

    // Structural check: an empty row or column names its unknown directly.
    let mut row_seen = vec![false; n];
    let mut col_seen = vec![false; n];
    for &(r, c, _) in &mat.triplets {
        row_seen[r] = true;
        col_seen[c] = true;
    }
    for i in 0..n {
        if !row_seen[i] || !col_seen[i] {
            return Err(Error::Singular {
                index: i,
                block: block_name(i),
            });
        }
    }

    let nz = mat.triplets.len();
    let ti: Vec<c_int> = mat.triplets.iter().map(|t| t.0 as c_int).collect();
    let tj: Vec<c_int> = mat.triplets.iter().map(|t| t.1 as c_int).collect();
    let tx: Vec<f64> = mat.triplets.iter().map(|t| t.2).collect();
    let mut ap = vec![0 as c_int; n + 1];
    let mut ai = vec![0 as c_int; nz.max(1)];
    let mut ax = vec![0.0f64; nz.max(1)];
    let status = unsafe {
        umfpack_di_triplet_to_col(
            n as c_int,
            n as c_int,
            nz as c_int,
            ti.as_ptr(),
            tj.as_ptr(),
            tx.as_ptr(),
            ap.as_mut_ptr(),
            ai.as_mut_ptr(),
            ax.as_mut_ptr(),
            std::ptr::null_mut(),
        )
    };
    if status != UMFPACK_OK {
        return Err(Error::Dimension(format!(
            "triplet-to-column conversion failed with status {status}"
        )));
    }
    let nnz = ap[n] as usize;
    ai.truncate(nnz);
    ax.truncate(nnz);

    let mut control = [0.0f64; UMFPACK_CONTROL];
    let mut info = [0.0f64; UMFPACK_INFO];
    unsafe { umfpack_di_defaults(control.as_mut_ptr()) };

    let mut symbolic: *mut c_void = std::ptr::null_mut();
    let status = unsafe {
        umfpack_di_symbolic(
            n as c_int,
            n as c_int,
            ap.as_ptr(),
            ai.as_ptr(),
            ax.as_ptr(),
            &mut symbolic,
            control.as_ptr(),
            info.as_mut_ptr(),
        )
    };
    if status != UMFPACK_OK {
        unsafe { umfpack_di_free_symbolic(&mut symbolic) };
        return Err(Error::Singular {
            index: 0,
            block: format!("symbolic analysis failed with status {status}"),
        });
    }
    let mut numeric: *mut c_void = std::ptr::null_mut();
    let status = unsafe {
        umfpack_di_numeric(
            ap.as_ptr(),
            ai.as_ptr(),
            ax.as_ptr(),
            symbolic,
            &mut numeric,
            control.as_ptr(),
            info.as_mut_ptr(),
        )
    };
    unsafe { umfpack_di_free_symbolic(&mut symbolic) };
    if status != UMFPACK_OK {
        unsafe { umfpack_di_free_numeric(&mut numeric) };
        return Err(Error::Singular {
            index: 0,
            block: format!("numeric factorization status {status}"),
        });
    }

    let amax = ax.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    Ok(Factorization {
        numeric,
        control,
        ap,
        ai,
        ax,
        amax,
        dim: n,
    })
}

impl Factorization {
    pub fn dim(&self) -> usize {
        self.dim
    }

    fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for col in 0..self.dim {
            let xc = x[col];
            if xc == 0.0 {
                continue;
            }
            for p in self.ap[col] as usize..self.ap[col + 1] as usize {
                y[self.ai[p] as usize] += self.ax[p] * xc;
            }
        }
    }

    fn raw_solve(&self, rhs: &[f64], x: &mut [f64]) -> Result<()> {
        let status = unsafe {
            umfpack_di_solve(
                UMFPACK_A,
                self.ap.as_ptr(),
                self.ai.as_ptr(),
                self.ax.as_ptr(),
                x.as_mut_ptr(),
                rhs.as_ptr(),
                self.numeric,
                self.control.as_ptr(),
                std::ptr::null_mut(),
            )
        };
        if status != UMFPACK_OK {
            return Err(Error::Singular {
                index: 0,
                block: format!("solve failed with status {status}"),
            });
        }
        Ok(())
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.dim {
            return Err(Error::Dimension(format!(
                "rhs length {} does not match system dimension {}",
                rhs.len(),
                self.dim
            )));
        }
        let mut x = vec![0.0; self.dim];
        self.raw_solve(rhs, &mut x)?;
        // A couple of refinement rounds on top of the backend's own; cheap
        // insurance for the worst cut geometries.
        let bn = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut r = vec![0.0; self.dim];
        let mut dx = vec![0.0; self.dim];
        for _ in 0..4 {
            self.matvec(&x, &mut r);
            let mut rn = 0.0;
            for i in 0..self.dim {
                r[i] = rhs[i] - r[i];
                rn += r[i] * r[i];
            }
            let rn = rn.sqrt();
            let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rn <= 0.1e-9 * (self.amax * xn + bn) {
                break;
            }
            self.raw_solve(&r, &mut dx)?;
            for i in 0..self.dim {
                x[i] += dx[i];
            }
        }
        Ok(x)
    }

    /// Euclidean norm of `A x - b`.
    pub fn residual_norm(&self, x: &[f64], rhs: &[f64]) -> f64 {
        let mut y = vec![0.0; self.dim];
        self.matvec(x, &mut y);
        y.iter()
            .zip(rhs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Largest absolute matrix entry (after summing duplicates).
    pub fn matrix_max_abs(&self) -> f64 {
        self.amax
    }

    /// Check the solve against the residual contract
    /// `|A x - b| <= tol (|A|_max |x| + |b|)`.
    pub fn check_residual(&self, x: &[f64], rhs: &[f64], tol: f64) -> Result<()> {
        let res = self.residual_norm(x, rhs);
        let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let bn = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        let bound = tol * (self.amax * xn + bn);
        if res > bound {
            return Err(Error::Singular {
                index: 0,
                block: format!("residual {res:.3e} exceeds bound {bound:.3e}"),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn toy(dim: usize, entries: &[(usize, usize, f64)]) -> SystemMatrix {
        SystemMatrix {
            dim,
            triplets: entries.to_vec(),
        }
    }

    #[test]
    fn identity_round_trip() {
        let mat = toy(3, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)]);
        let f = factor(&mat, None).unwrap();
        let b = vec![3.0, -1.0, 0.5];
        let x = f.solve(&b).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn two_by_two_saddle() {
        let mat = toy(2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0)]);
        let f = factor(&mat, None).unwrap();
        let x = f.solve(&[3.0, 1.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14);
        assert!((x[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let mat = toy(2, &[(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)]);
        let f = factor(&mat, None).unwrap();
        let x = f.solve(&[0.0, 0.0]).unwrap();
        assert_eq!(x, vec![0.0, 0.0]);
    }

    #[test]
    fn duplicate_triplets_sum() {
        let mat = toy(
            2,
            &[(0, 0, 1.5), (0, 0, 0.5), (1, 1, 1.0), (0, 1, 0.25), (0, 1, -0.25)],
        );
        let f = factor(&mat, None).unwrap();
        let x = f.solve(&[4.0, 3.0]).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-14);
        assert!((x[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn random_round_trip_and_determinism() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let n = 60;
        let mut entries = Vec::new();
        for i in 0..n {
            entries.push((i, i, 4.0 + rng.random_range(0.0..1.0)));
            let j = rng.random_range(0..n);
            if j != i {
                let v = rng.random_range(-1.0..1.0);
                entries.push((i, j, v));
                entries.push((j, i, v));
            }
        }
        let mat = toy(n, &entries);
        let f = factor(&mat, None).unwrap();
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = mat.apply(&x0);
        let x = f.solve(&b).unwrap();
        let err: f64 = x
            .iter()
            .zip(&x0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = x0.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(err <= 1e-9 * norm, "round trip error {err:.3e}");
        f.check_residual(&x, &b, 1e-9).unwrap();

        let x2 = f.solve(&b).unwrap();
        assert_eq!(x, x2, "repeated solve must be bitwise identical");
    }

    #[test]
    fn structurally_singular_is_reported() {
        let mat = toy(2, &[(0, 0, 1.0)]);
        match factor(&mat, None) {
            Err(Error::Singular { index, .. }) => assert_eq!(index, 1),
            Err(e) => panic!("expected singular error, got {e}"),
            Ok(_) => panic!("expected singular error, got a factorization"),
        }
    }

    #[test]
    fn numerically_singular_is_reported() {
        // Structurally full but rank deficient.
        let mat = toy(
            2,
            &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 4.0)],
        );
        assert!(matches!(factor(&mat, None), Err(Error::Singular { .. })));
    }

    #[test]
    fn dimension_mismatch() {
        let mat = toy(2, &[(0, 0, 1.0), (1, 1, 1.0)]);
        let f = factor(&mat, None).unwrap();
        assert!(matches!(f.solve(&[1.0]), Err(Error::Dimension(_))));
    }
}
