//! Cached direct sparse factorization of the discrete Dirichlet Laplacian.
//!
//! The 5-point stencil lives on masked cell centers; a face shared with an
//! unmasked cell carries the Dirichlet value zero at the face midpoint,
//! which contributes 2 u_i / h^2 to the diagonal. The assembled matrix is
//! symmetric positive definite and factored once per grid.

use std::sync::Once;

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};

use crate::domain::DomainGrid;

static FAER_SETUP: Once = Once::new();

/// faer's parallel supernodal Cholesky mis-factors large problems
/// (observed at ~8e5 unknowns) and parallel reductions are not bitwise
/// reproducible anyway, so all faer work runs sequentially.
fn force_sequential_faer() {
    FAER_SETUP.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

pub(crate) struct PoissonSolver {
    n: usize,
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
}

impl PoissonSolver {
    pub fn new(grid: &DomainGrid) -> Self {
        force_sequential_faer();
        let n = grid.n_cells();
        let h = grid.spacing();
        let inv_h2 = 1.0 / (h * h);
        let mut trips: Vec<Triplet<usize, usize, f64>> = Vec::with_capacity(5 * n);
        for k in 0..n {
            let mut diag = 0.0;
            for nb in grid.neighbors(k) {
                match nb {
                    Some(j) => {
                        trips.push(Triplet::new(k, j, -inv_h2));
                        diag += inv_h2;
                    }
                    None => diag += 2.0 * inv_h2,
                }
            }
            trips.push(Triplet::new(k, k, diag));
        }
        let mat = SparseColMat::try_new_from_triplets(n, n, &trips)
            .expect("valid Laplacian triplets");
        let llt = mat
            .sp_cholesky(faer::Side::Lower)
            .expect("discrete Dirichlet Laplacian is SPD");
        PoissonSolver { n, llt }
    }

    /// Solves -Laplace_h u = rhs on masked cells.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n);
        let b = Mat::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = self.llt.solve(&b);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_domain, Geometry};
    use crate::geom::Point;

    #[test]
    fn solve_is_deterministic_bitwise() {
        let grid =
            build_domain(Geometry::Disc { center: Point::ZERO, radius: 1.0 }, 24.0).unwrap();
        let solver = PoissonSolver::new(&grid);
        let rhs: Vec<f64> = (0..grid.n_cells()).map(|k| (k as f64 * 0.37).sin()).collect();
        let a = solver.solve(&rhs);
        let b = solver.solve(&rhs);
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn poisson_on_disc_matches_exact_solution() {
        // -Laplace u = 1 on unit disc -> u = (1 - |x|^2)/4
        let grid =
            build_domain(Geometry::Disc { center: Point::ZERO, radius: 1.0 }, 64.0).unwrap();
        let solver = PoissonSolver::new(&grid);
        let rhs = vec![1.0; grid.n_cells()];
        let u = solver.solve(&rhs);
        let mut max_err: f64 = 0.0;
        for k in 0..grid.n_cells() {
            let p = grid.cell_center(k);
            max_err = max_err.max((u[k] - (1.0 - p.norm_sq()) / 4.0).abs());
        }
        assert!(max_err < 5e-3, "max error {max_err}");
    }

    #[test]
    fn inverse_is_positive_for_interior_sources() {
        // maximum principle: the discrete Green matrix has positive entries
        let grid =
            build_domain(Geometry::Disc { center: Point::ZERO, radius: 1.0 }, 20.0).unwrap();
        let solver = PoissonSolver::new(&grid);
        let mut rhs = vec![0.0; grid.n_cells()];
        let k0 = grid.locate(Point::new(0.3, -0.2)).unwrap();
        rhs[k0] = 1.0;
        let u = solver.solve(&rhs);
        assert!(u.iter().all(|&v| v > 0.0));
    }
}
