#pragma once

#include <Eigen/Dense>

namespace ghfr {

struct SimplexQpResult {
  Eigen::VectorXd w;
  double kkt_residual = 0.0;
  int iterations = 0;
};

/// Minimizes w'Aw + g'w over the probability simplex (sum w = 1, 0 <= w <= 1)
/// with a primal active-set method. A must be symmetric PSD; a 1e-10 ridge
/// makes the minimizer unique and picks the minimum-norm optimum when A is
/// flat. Weights below 1e-6 are zeroed afterwards when that leaves the
/// unregularized objective unchanged up to round-off. `warm_start`, when
/// given and feasible, seeds the free set.
SimplexQpResult solve_simplex_qp(const Eigen::MatrixXd& A, const Eigen::VectorXd& g,
                                 const Eigen::VectorXd* warm_start = nullptr);

/// The same solver without input checks or the residual; A must already be
/// symmetric and finite.
Eigen::VectorXd solve_simplex_qp_trusted(const Eigen::MatrixXd& A, const Eigen::VectorXd& g,
                                         const Eigen::VectorXd* warm_start = nullptr, int* iterations = nullptr);

/// Convenience wrapper returning only the minimizer.
Eigen::VectorXd solve_patch_qp(const Eigen::MatrixXd& A, const Eigen::VectorXd& g);

/// Largest violation of the simplex KKT conditions for w'Aw + g'w at w.
double simplex_kkt_residual(const Eigen::MatrixXd& A, const Eigen::VectorXd& g, const Eigen::VectorXd& w);

}  // namespace ghfr
