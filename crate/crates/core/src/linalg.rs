//! Small dense symmetric solves for the least-squares fits.

use crate::scalar::Scalar;

/// Solves `A x = b` for symmetric positive definite `A` (row-major, `n×n`)
/// by Cholesky factorization. Returns `None` if `A` is not positive definite.
pub(crate) fn solve_spd<T: Scalar>(a: &[T], b: &[T]) -> Option<Vec<T>> {
    let n = b.len();
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(sum > T::zero()) {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    Some(x)
}

/// Least squares with an unpenalized intercept:
/// minimizes `‖Z w + c·1 − y‖² + ridge·‖w‖²` over `(w, c)`.
/// `rows` are the rows of `Z`. Returns `(w, c)`.
pub(crate) fn ridge_with_intercept<T: Scalar>(rows: &[Vec<T>], y: &[T], ridge: T) -> Option<(Vec<T>, T)> {
    let d = rows.first().map_or(0, Vec::len);
    let n = d + 1;
    let mut gram = vec![T::zero(); n * n];
    let mut rhs = vec![T::zero(); n];
    for (row, &target) in rows.iter().zip(y) {
        // augmented row [z, 1]
        let aug = |k: usize| if k < d { row[k] } else { T::one() };
        for i in 0..n {
            let ai = aug(i);
            rhs[i] += ai * target;
            for j in 0..n {
                gram[i * n + j] += ai * aug(j);
            }
        }
    }
    for k in 0..d {
        gram[k * n + k] += ridge;
    }
    let sol = solve_spd(&gram, &rhs)?;
    Some((sol[..d].to_vec(), sol[d]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let a = [4.0f64, 2.0, 2.0, 3.0];
        let x = solve_spd(&a, &[2.0, 1.0]).unwrap();
        assert!((4.0 * x[0] + 2.0 * x[1] - 2.0).abs() < 1e-14);
        assert!((2.0 * x[0] + 3.0 * x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_indefinite() {
        assert!(solve_spd(&[1.0, 2.0, 2.0, 1.0], &[1.0, 1.0]).is_none());
    }

    #[test]
    fn exact_line() {
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..5).map(|i| 3.0 * i as f64 - 1.0).collect();
        let (w, c) = ridge_with_intercept(&rows, &y, 0.0).unwrap();
        assert!((w[0] - 3.0).abs() < 1e-12 && (c + 1.0).abs() < 1e-12);
    }
}
