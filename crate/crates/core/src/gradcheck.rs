//! Central finite-difference gradient checking.
//!
//! This is the numeric side of every gradient test in the workspace: it only
//! ever calls a black-box scalar function, so it stays independent of the
//! reverse-mode sweep it is used to validate.

use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy)]
pub struct FdCheck {
    /// Step for the central difference.
    pub h: f64,
    /// Maximum tolerated relative error.
    pub tol: f64,
    /// Floor for the relative-error denominator.
    pub guard: f64,
}

impl Default for FdCheck {
    fn default() -> Self {
        FdCheck {
            h: 1e-5,
            tol: 1e-4,
            guard: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FdReport {
    pub max_rel_err: f64,
    pub worst_entry: (usize, usize),
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub pass: bool,
}

impl FdCheck {
    /// Numeric gradient of `f` at `at`, one central difference per entry.
    pub fn numeric_gradient<F: FnMut(&Matrix) -> f64>(&self, mut f: F, at: &Matrix) -> Matrix {
        let mut grad = Matrix::zeros(at.rows(), at.cols());
        let mut probe = at.clone();
        for r in 0..at.rows() {
            for c in 0..at.cols() {
                let orig = probe.get(r, c);
                probe.set(r, c, orig + self.h);
                let up = f(&probe);
                probe.set(r, c, orig - self.h);
                let down = f(&probe);
                probe.set(r, c, orig);
                grad.set(r, c, (up - down) / (2.0 * self.h));
            }
        }
        grad
    }

    /// Compare an analytic gradient against the central difference of `f`.
    /// Relative error uses `max(|analytic|, |numeric|, guard)` as the
    /// denominator.
    pub fn run<F: FnMut(&Matrix) -> f64>(
        &self,
        f: F,
        at: &Matrix,
        analytic: &Matrix,
    ) -> FdReport {
        assert_eq!(
            analytic.shape(),
            at.shape(),
            "analytic gradient shape must match the point"
        );
        let numeric = self.numeric_gradient(f, at);
        let mut worst = FdReport {
            max_rel_err: 0.0,
            worst_entry: (0, 0),
            analytic_at_worst: analytic.get(0, 0),
            numeric_at_worst: numeric.get(0, 0),
            pass: true,
        };
        for r in 0..at.rows() {
            for c in 0..at.cols() {
                let a = analytic.get(r, c);
                let n = numeric.get(r, c);
                let denom = a.abs().max(n.abs()).max(self.guard);
                let rel = (a - n).abs() / denom;
                if rel > worst.max_rel_err {
                    worst.max_rel_err = rel;
                    worst.worst_entry = (r, c);
                    worst.analytic_at_worst = a;
                    worst.numeric_at_worst = n;
                }
            }
        }
        worst.pass = worst.max_rel_err <= self.tol;
        worst
    }
}
