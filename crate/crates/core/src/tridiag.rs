//! Thomas algorithm for the tridiagonal systems of the implicit sub-steps.

use crate::error::SolverError;

/// `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]`.
///
/// `lower[0]` and `upper[n-1]` are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn new(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Every row must satisfy `|diag| > |lower| + |upper|`.
    pub fn check_dominance(&self) -> Result<(), SolverError> {
        let n = self.len();
        for i in 0..n {
            let off = if i > 0 { self.lower[i].abs() } else { 0.0 }
                + if i + 1 < n { self.upper[i].abs() } else { 0.0 };
            if !(self.diag[i].abs() > off) {
                return Err(SolverError::NotDiagonallyDominant { row: i });
            }
        }
        Ok(())
    }

    /// Solve after checking strict diagonal dominance, which makes the
    /// elimination stable without pivoting.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, SolverError> {
        self.check_dominance()?;
        let n = self.len();
        assert_eq!(rhs.len(), n, "rhs length must match the system");
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        c[0] = if n > 1 { self.upper[0] / self.diag[0] } else { 0.0 };
        d[0] = rhs[0] / self.diag[0];
        for i in 1..n {
            let m = self.diag[i] - self.lower[i] * c[i - 1];
            c[i] = if i + 1 < n { self.upper[i] / m } else { 0.0 };
            d[i] = (rhs[i] - self.lower[i] * d[i - 1]) / m;
        }
        let mut x = d;
        for i in (0..n - 1).rev() {
            x[i] -= c[i] * x[i + 1];
        }
        Ok(x)
    }
}
