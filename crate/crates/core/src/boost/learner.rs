//! Penalized least-squares base-learners with cached factorizations.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use super::BoostError;
use crate::basis::Design;

#[derive(Debug, Clone)]
enum Solver {
    Cholesky(Cholesky<f64, Dyn>),
    /// Pseudo-inverse of a singular but penalized system.
    Pseudo(DMatrix<f64>),
}

/// A base-learner ready for repeated fitting: `BᵀB` and the factorization
/// of `BᵀB + P` are computed once.
#[derive(Debug, Clone)]
pub struct Learner {
    pub design: Design,
    gram: DMatrix<f64>,
    solver: Solver,
}

/// Coefficients of one base-learner fit and its residual sum of squares.
#[derive(Debug, Clone)]
pub struct LearnerFit {
    pub theta: DVector<f64>,
    pub rss: f64,
}

impl Learner {
    pub fn new(design: Design, penalty: &DMatrix<f64>) -> Result<Self, BoostError> {
        let gram = design.gram();
        let system = &gram + penalty;
        let solver = match system.clone().cholesky() {
            Some(ch) => Solver::Cholesky(ch),
            None if penalty.iter().all(|v| *v == 0.0) => {
                return Err(BoostError::Singular(format!(
                    "unpenalized base-learner with {} coefficients has a singular Gram matrix",
                    gram.nrows()
                )))
            }
            None => Solver::Pseudo(pseudo_inverse(&system)),
        };
        Ok(Self { design, gram, solver })
    }

    pub fn n_coef(&self) -> usize {
        self.gram.nrows()
    }

    /// Solves `(BᵀB + P)θ = Bᵀu` for an N×G gradient matrix `u` whose
    /// squared norm is `u_sq`; the residual sum of squares is unpenalized.
    pub fn fit(&self, u: &DMatrix<f64>, u_sq: f64) -> LearnerFit {
        let btu = self.design.t_mul(u);
        let theta = match &self.solver {
            Solver::Cholesky(ch) => ch.solve(&btu),
            Solver::Pseudo(inv) => inv * &btu,
        };
        let ftheta = &self.gram * &theta;
        let rss = u_sq - 2.0 * theta.dot(&btu) + theta.dot(&ftheta);
        LearnerFit { theta, rss }
    }
}

fn pseudo_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let mut inv = DMatrix::zeros(m.nrows(), m.ncols());
    for (k, &v) in eig.eigenvalues.iter().enumerate() {
        if v > 1e-12 * top {
            let col = eig.eigenvectors.column(k);
            inv += col * col.transpose() / v;
        }
    }
    inv
}
