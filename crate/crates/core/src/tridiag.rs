//! Thomas algorithm for the tridiagonal systems produced by the three-point stencils.

/// Solves `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]` in place of `rhs`.
///
/// `lower[0]` and `upper[n-1]` are ignored. Returns `false` when a zero pivot is met.
pub fn solve_in_place(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) -> bool {
    let n = diag.len();
    debug_assert!(lower.len() == n && upper.len() == n && rhs.len() == n);
    if n == 0 {
        return true;
    }
    let mut c_prime = vec![0.0; n];
    let mut denom = diag[0];
    if denom == 0.0 || !denom.is_finite() {
        return false;
    }
    c_prime[0] = upper[0] / denom;
    rhs[0] /= denom;
    for i in 1..n {
        denom = diag[i] - lower[i] * c_prime[i - 1];
        if denom == 0.0 || !denom.is_finite() {
            return false;
        }
        c_prime[i] = upper[i] / denom;
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c_prime[i] * rhs[i + 1];
    }
    true
}
