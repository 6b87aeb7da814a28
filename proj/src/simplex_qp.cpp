#include "ghfr/simplex_qp.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "ghfr/error.hpp"

namespace ghfr {

namespace {

constexpr double kRidge = 1e-10;
constexpr double kDropBelow = 1e-6;

void validate(const Eigen::MatrixXd& A, const Eigen::VectorXd& g) {
  if (A.rows() != A.cols() || A.rows() != g.size() || g.size() == 0)
    throw Error("simplex QP: dimension mismatch");
  if (!A.allFinite() || !g.allFinite()) throw Error("simplex QP: non-finite input");
  const double scale = 1.0 + A.cwiseAbs().maxCoeff();
  if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) throw Error("simplex QP: matrix is not symmetric");
}

bool on_simplex(const Eigen::VectorXd& w) {
  return w.minCoeff() >= 0.0 && std::abs(w.sum() - 1.0) <= 1e-9;
}

}  // namespace

double simplex_kkt_residual(const Eigen::MatrixXd& A, const Eigen::VectorXd& g, const Eigen::VectorXd& w) {
  const Eigen::VectorXd grad = 2.0 * (A * w) + g;
  double lambda = 0.0;
  int nfree = 0;
  for (Eigen::Index k = 0; k < w.size(); ++k)
    if (w[k] > 0) {
      lambda += grad[k];
      ++nfree;
    }
  if (nfree == 0) return std::abs(w.sum() - 1.0);
  lambda /= nfree;
  double r = std::abs(w.sum() - 1.0);
  for (Eigen::Index k = 0; k < w.size(); ++k) {
    r = std::max(r, -w[k]);
    if (w[k] > 0)
      r = std::max(r, std::abs(grad[k] - lambda));
    else
      r = std::max(r, lambda - grad[k]);
  }
  return r;
}

namespace {

// Minimizer of w'(A + ridge I)w + g'w on {sum w = 1} restricted to the
// coordinates in idx. The last one is eliminated (w_last = 1 - sum of the
// others) so the constraint holds exactly even when A is nearly singular.
void solve_free_set(const Eigen::MatrixXd& A, const Eigen::VectorXd& g, const std::vector<Eigen::Index>& idx,
                    Eigen::VectorXd& target, Eigen::MatrixXd& H, Eigen::VectorXd& rhs, Eigen::VectorXd& u,
                    Eigen::VectorXd& r) {
  const Eigen::Index nf = static_cast<Eigen::Index>(idx.size());
  target.resize(nf);
  if (nf == 1) {
    target[0] = 1.0;
    return;
  }
  const Eigen::Index m = nf - 1;
  const Eigen::Index last = idx[m];
  H.resize(m, m);
  rhs.resize(m);
  for (Eigen::Index a = 0; a < m; ++a) {
    const Eigen::Index ia = idx[a];
    rhs[a] = 2.0 * kRidge - (g[ia] - g[last] + 2.0 * (A(ia, last) - A(last, last)));
    for (Eigen::Index b = 0; b < m; ++b) {
      const Eigen::Index ib = idx[b];
      H(a, b) = 2.0 * (A(ia, ib) - A(ia, last) - A(last, ib) + A(last, last) + kRidge);
    }
    H(a, a) += 2.0 * kRidge;
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
  u = ldlt.solve(rhs);
  r = rhs - H * u;
  u += ldlt.solve(r);
  target.head(m) = u;
  target[m] = 1.0 - u.sum();
}

double qp_value(const Eigen::MatrixXd& A, const Eigen::VectorXd& g, const Eigen::VectorXd& w) {
  return w.dot(A * w) + g.dot(w);
}

}  // namespace

Eigen::VectorXd solve_simplex_qp_trusted(const Eigen::MatrixXd& A, const Eigen::VectorXd& g,
                                         const Eigen::VectorXd* warm_start, int* iterations) {
  const Eigen::Index K = g.size();
  if (iterations) *iterations = 0;
  if (K == 1) return Eigen::VectorXd::Ones(1);

  Eigen::VectorXd w = Eigen::VectorXd::Zero(K);
  std::vector<char> is_free(K, 0);
  if (warm_start && warm_start->size() == K && on_simplex(*warm_start)) {
    w = *warm_start;
    for (Eigen::Index k = 0; k < K; ++k) is_free[k] = w[k] > 0;
  } else {
    // Start from the best vertex.
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < K; ++k)
      if (A(k, k) + g[k] < A(best, best) + g[best]) best = k;
    w[best] = 1.0;
    is_free[best] = 1;
  }

  const double scale = 1.0 + 2.0 * A.cwiseAbs().maxCoeff() + g.cwiseAbs().maxCoeff();
  const double tol = 1e-12 * scale;
  const int max_iter = static_cast<int>(10 * K + 50);
  std::vector<Eigen::Index> idx;
  Eigen::MatrixXd H;
  Eigen::VectorXd rhs, u, r, target, grad;

  int it = 0;
  for (; it < max_iter; ++it) {
    idx.clear();
    for (Eigen::Index k = 0; k < K; ++k)
      if (is_free[k]) idx.push_back(k);
    const Eigen::Index nf = static_cast<Eigen::Index>(idx.size());
    solve_free_set(A, g, idx, target, H, rhs, u, r);

    if (target.minCoeff() < 0.0) {
      double step = 1.0;
      Eigen::Index blocking = -1;
      for (Eigen::Index a = 0; a < nf; ++a) {
        if (target[a] >= 0.0) continue;
        const double wk = w[idx[a]];
        const double t = wk / (wk - target[a]);
        if (t < step) {
          step = t;
          blocking = idx[a];
        }
      }
      for (Eigen::Index a = 0; a < nf; ++a) w[idx[a]] += step * (target[a] - w[idx[a]]);
      if (blocking >= 0) w[blocking] = 0.0;
      for (Eigen::Index a = 0; a < nf; ++a)
        if (w[idx[a]] <= 0.0) {
          w[idx[a]] = 0.0;
          is_free[idx[a]] = 0;
        }
      continue;
    }

    w.setZero();
    for (Eigen::Index a = 0; a < nf; ++a) w[idx[a]] = target[a];

    // Multipliers of the bound constraints; release the most negative one.
    grad = g;
    for (Eigen::Index a = 0; a < nf; ++a) grad.noalias() += (2.0 * target[a]) * A.col(idx[a]);
    for (Eigen::Index a = 0; a < nf; ++a) grad[idx[a]] += 2.0 * kRidge * target[a];
    double lambda = 0.0;
    for (Eigen::Index a = 0; a < nf; ++a) lambda += grad[idx[a]];
    lambda /= static_cast<double>(nf);
    Eigen::Index enter = -1;
    double most_negative = -tol;
    for (Eigen::Index k = 0; k < K; ++k) {
      if (is_free[k]) continue;
      const double mu = grad[k] - lambda;
      if (mu < most_negative) {
        most_negative = mu;
        enter = k;
      }
    }
    if (enter < 0) break;
    is_free[enter] = 1;
  }
  if (iterations) *iterations = it;

  // The ridge moves a strictly convex optimum by about ridge / curvature.
  // Weights of that size are dropped when the unregularized objective does
  // not notice.
  idx.clear();
  bool tiny = false;
  for (Eigen::Index k = 0; k < K; ++k) {
    if (w[k] <= 0.0) continue;
    if (w[k] < kDropBelow)
      tiny = true;
    else
      idx.push_back(k);
  }
  if (tiny && !idx.empty()) {
    solve_free_set(A, g, idx, target, H, rhs, u, r);
    if (target.minCoeff() >= 0.0) {
      Eigen::VectorXd polished = Eigen::VectorXd::Zero(K);
      for (std::size_t a = 0; a < idx.size(); ++a) polished[idx[a]] = target[static_cast<Eigen::Index>(a)];
      if (qp_value(A, g, polished) <= qp_value(A, g, w) + 1e-14 * scale) w = std::move(polished);
    }
  }
  return w;
}

SimplexQpResult solve_simplex_qp(const Eigen::MatrixXd& A, const Eigen::VectorXd& g,
                                 const Eigen::VectorXd* warm_start) {
  validate(A, g);
  SimplexQpResult res;
  res.w = solve_simplex_qp_trusted(A, g, warm_start, &res.iterations);
  res.kkt_residual = simplex_kkt_residual(A, g, res.w);
  return res;
}

Eigen::VectorXd solve_patch_qp(const Eigen::MatrixXd& A, const Eigen::VectorXd& g) {
  return solve_simplex_qp(A, g).w;
}

}  // namespace ghfr
