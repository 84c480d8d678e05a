//! Symmetric eigenvalues by cyclic Jacobi rotations.
//!
//! Desk-scale matrices only (the reduction works with d <= 8); the sweep
//! converges quadratically and runs to machine precision.

use super::HilbertError;

/// Componentwise symmetry gate used before any eigen computation.
pub(crate) fn check_symmetric(m: &[Vec<f64>]) -> Result<usize, HilbertError> {
    let n = m.len();
    if n == 0 {
        return Err(HilbertError::EmptyMatrix);
    }
    let mut max_abs = 0.0f64;
    for row in m {
        if row.len() != n {
            return Err(HilbertError::NotSquare {
                rows: n,
                cols: row.len(),
            });
        }
        for v in row {
            max_abs = max_abs.max(v.abs());
        }
    }
    let tol = 1e-12 * (1.0 + max_abs);
    for i in 0..n {
        for j in (i + 1)..n {
            let delta = (m[i][j] - m[j][i]).abs();
            if delta > tol {
                return Err(HilbertError::Asymmetric { i, j, delta });
            }
        }
    }
    Ok(n)
}

/// All eigenvalues of a symmetric matrix, sorted ascending.
pub fn sym_eigenvalues(m: &[Vec<f64>]) -> Result<Vec<f64>, HilbertError> {
    let n = check_symmetric(m)?;
    let mut a: Vec<Vec<f64>> = m.to_vec();
    // symmetrize exactly so the sweep sees one off-diagonal value
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (a[i][j] + a[j][i]);
            a[i][j] = avg;
            a[j][i] = avg;
        }
    }

    let scale: f64 = a
        .iter()
        .flat_map(|row| row.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
        .max(1.0);
    let target = 1e-15 * scale;

    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i][j].abs();
            }
        }
        if off <= target {
            let mut eigs: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
            eigs.sort_by(|x, y| x.partial_cmp(y).expect("eigenvalues are finite"));
            return Ok(eigs);
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a[p][q];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    let sign = if theta > 0.0 { 1.0 } else { -1.0 };
                    sign / (theta.abs() + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                a[p][p] -= t * apq;
                a[q][q] += t * apq;
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[p][k] = a[k][p];
                    a[k][q] = s * akp + c * akq;
                    a[q][k] = a[k][q];
                }
            }
        }
    }
    Err(HilbertError::NoConvergence)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &[Vec<f64>]) -> Result<f64, HilbertError> {
    Ok(sym_eigenvalues(m)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| r.to_vec()).collect()
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let m = mat(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        assert_eq!(min_eigenvalue(&m).unwrap(), 1.0);
    }

    #[test]
    fn diagonal_min_is_smallest_entry() {
        let m = mat(&[&[2.0, 0.0], &[0.0, 5.0]]);
        assert_eq!(min_eigenvalue(&m).unwrap(), 2.0);
    }

    #[test]
    fn two_by_two_analytic() {
        // [[2,1],[1,2]] has spectrum {1, 3} from (2 - l)^2 - 1 = 0
        let m = mat(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let eigs = sym_eigenvalues(&m).unwrap();
        assert!((eigs[0] - 1.0).abs() < 1e-12);
        assert!((eigs[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn three_by_three_analytic() {
        // circulant-ish [[2,-1,0],[-1,2,-1],[0,-1,2]]:
        // eigenvalues 2 - sqrt(2), 2, 2 + sqrt(2)
        let m = mat(&[&[2.0, -1.0, 0.0], &[-1.0, 2.0, -1.0], &[0.0, -1.0, 2.0]]);
        let eigs = sym_eigenvalues(&m).unwrap();
        let sqrt2 = 2.0f64.sqrt();
        assert!((eigs[0] - (2.0 - sqrt2)).abs() < 1e-12);
        assert!((eigs[1] - 2.0).abs() < 1e-12);
        assert!((eigs[2] - (2.0 + sqrt2)).abs() < 1e-12);
    }

    #[test]
    fn trace_and_frobenius_are_preserved() {
        let m = mat(&[
            &[4.0, 1.0, -2.0, 0.5],
            &[1.0, 3.0, 0.0, 1.5],
            &[-2.0, 0.0, 1.0, -1.0],
            &[0.5, 1.5, -1.0, 2.0],
        ]);
        let eigs = sym_eigenvalues(&m).unwrap();
        let trace: f64 = (0..4).map(|i| m[i][i]).sum();
        assert!((eigs.iter().sum::<f64>() - trace).abs() < 1e-10);
        let frob2: f64 = m.iter().flatten().map(|v| v * v).sum();
        let eig2: f64 = eigs.iter().map(|v| v * v).sum();
        assert!((frob2 - eig2).abs() < 1e-9);
    }

    #[test]
    fn asymmetry_beyond_tolerance_errors() {
        let m = mat(&[&[1.0, 0.5], &[0.4, 1.0]]);
        assert!(matches!(
            min_eigenvalue(&m),
            Err(HilbertError::Asymmetric { .. })
        ));
    }

    #[test]
    fn zero_matrix_has_zero_spectrum() {
        let m = mat(&[&[0.0, 0.0], &[0.0, 0.0]]);
        assert_eq!(min_eigenvalue(&m).unwrap(), 0.0);
    }
}
