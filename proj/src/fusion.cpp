#include "ghfr/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "ghfr/error.hpp"

namespace ghfr {

namespace {

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Euclidean projection onto {0 <= a <= cap, sum a = 1}.
Eigen::VectorXd project_capped_simplex(const Eigen::VectorXd& v, double cap) {
  double lo = v.minCoeff() - cap;
  double hi = v.maxCoeff();
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double s = (v.array() - mid).max(0.0).min(cap).sum();
    if (s > 1.0)
      lo = mid;
    else
      hi = mid;
  }
  const double tau = 0.5 * (lo + hi);
  return (v.array() - tau).max(0.0).min(cap).matrix();
}

struct SvmFit {
  Eigen::VectorXd w;
  double rho = 0.0;
};

SvmFit fit_one_class(const Eigen::MatrixXd& X, double nu, const FusionParams& params) {
  const Eigen::Index n = X.rows();
  const double cap = 1.0 / (nu * static_cast<double>(n));
  const Eigen::MatrixXd G = X * X.transpose();
  const double L = G.trace();
  Eigen::VectorXd a = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  for (int it = 0; it < params.max_iter; ++it) {
    const Eigen::VectorXd next = project_capped_simplex(a - (G * a) / L, cap);
    const double mapping = L * (next - a).cwiseAbs().maxCoeff();
    a = next;
    if (mapping < params.tol) break;
  }

  SvmFit fit;
  fit.w = X.transpose() * a;
  const Eigen::VectorXd margins = X * fit.w;
  const double eps = 1e-9 * cap;
  double free_sum = 0.0;
  int free_count = 0;
  double upper = std::numeric_limits<double>::infinity();   // from a_i == 0
  double lower = -std::numeric_limits<double>::infinity();  // from a_i == cap
  for (Eigen::Index i = 0; i < n; ++i) {
    if (a[i] <= eps) {
      upper = std::min(upper, margins[i]);
    } else if (a[i] >= cap - eps) {
      lower = std::max(lower, margins[i]);
    } else {
      free_sum += margins[i];
      ++free_count;
    }
  }
  if (free_count > 0)
    fit.rho = free_sum / free_count;
  else if (std::isfinite(upper) && std::isfinite(lower))
    fit.rho = 0.5 * (upper + lower);
  else
    fit.rho = std::isfinite(upper) ? upper : lower;
  return fit;
}

Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& rows, std::size_t dim) {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != dim) throw Error("fusion: score vectors differ in dimension");
    for (std::size_t d = 0; d < dim; ++d) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = rows[i][d];
  }
  return X;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

TrainingSet select_training_pairs(std::span<const LabeledScore> scores) {
  TrainingSet set;
  std::vector<const LabeledScore*> inter;
  std::size_t dim = scores.empty() ? 0 : scores.front().scores.size();
  for (const auto& s : scores) {
    if (s.scores.size() != dim) throw Error("select_training_pairs: score vectors differ in dimension");
    if (s.intrapersonal)
      set.positives.push_back(s.scores);
    else
      inter.push_back(&s);
  }
  if (set.positives.empty()) throw Error("select_training_pairs: no intrapersonal pairs");
  std::stable_sort(inter.begin(), inter.end(), [](const LabeledScore* a, const LabeledScore* b) {
    const double ma = mean_of(a->scores), mb = mean_of(b->scores);
    return ma != mb ? ma > mb : a->pair_id < b->pair_id;
  });
  set.negatives_short = inter.size() < set.positives.size();
  const std::size_t take = std::min(inter.size(), set.positives.size());
  for (std::size_t k = 0; k < take; ++k) set.negatives.push_back(inter[k]->scores);
  return set;
}

FusionModel mean_model(std::vector<std::string> ordering) {
  if (ordering.empty()) throw Error("fusion: empty metric ordering");
  FusionModel m;
  m.method = FusionMethod::Mean;
  m.weights.assign(ordering.size(), 1.0 / static_cast<double>(ordering.size()));
  m.ordering = std::move(ordering);
  m.rho = 0.0;
  m.nu = 0.0;
  return m;
}

FusionModel train(const FusionParams& params, const TrainingSet& set, std::vector<std::string> ordering) {
  if (set.positives.empty()) throw Error("fusion: no positive training vectors");
  const std::size_t dim = set.positives.front().size();
  if (dim == 0) throw Error("fusion: empty score vectors");
  if (ordering.empty())
    for (std::size_t d = 0; d < dim; ++d) ordering.push_back("s" + std::to_string(d + 1));
  if (ordering.size() != dim) throw Error("fusion: ordering does not match score dimension");
  if (params.method == FusionMethod::Mean) return mean_model(std::move(ordering));
  if (set.positives.size() < 2) throw Error("fusion: need at least two intrapersonal vectors");
  if (params.nu && (!(*params.nu > 0.0) || *params.nu > 1.0)) throw Error("fusion: nu must lie in (0,1]");

  const Eigen::MatrixXd X = to_matrix(set.positives, dim);
  bool identical = true;
  for (Eigen::Index i = 1; i < X.rows() && identical; ++i)
    identical = (X.row(i) - X.row(0)).cwiseAbs().maxCoeff() <= 1e-12;
  if (identical) throw Error("fusion: degenerate training set (all intrapersonal vectors identical)");
  if (X.squaredNorm() == 0.0) throw Error("fusion: degenerate training set (all-zero scores)");
  const Eigen::MatrixXd N = set.negatives.empty() ? Eigen::MatrixXd() : to_matrix(set.negatives, dim);

  std::vector<double> candidates;
  if (params.nu)
    candidates.push_back(*params.nu);
  else if (set.negatives.empty())
    candidates.push_back(0.5);
  else
    for (int k = 1; k <= 9; ++k) candidates.push_back(k / 10.0);

  FusionModel best;
  double best_sep = -1.0;
  for (double nu : candidates) {
    const SvmFit fit = fit_one_class(X, nu, params);
    double sep = 0.0;
    if (candidates.size() > 1) {
      std::vector<double> pos(static_cast<std::size_t>(X.rows()));
      for (Eigen::Index i = 0; i < X.rows(); ++i) pos[i] = X.row(i).dot(fit.w) - fit.rho;
      std::sort(pos.begin(), pos.end());
      const double decile = pos[static_cast<std::size_t>(std::floor(0.1 * static_cast<double>(pos.size() - 1)))];
      int below = 0;
      for (Eigen::Index i = 0; i < N.rows(); ++i)
        if (N.row(i).dot(fit.w) - fit.rho < decile) ++below;
      sep = static_cast<double>(below) / static_cast<double>(N.rows());
    }
    if (sep > best_sep) {
      best_sep = sep;
      best.weights.assign(fit.w.data(), fit.w.data() + fit.w.size());
      best.rho = fit.rho;
      best.nu = nu;
    }
  }
  best.method = FusionMethod::OneClassSvm;
  best.ordering = std::move(ordering);
  return best;
}

double fuse(const FusionModel& model, std::span<const double> scores) {
  if (scores.size() != model.weights.size())
    throw Error("fuse: score vector has " + std::to_string(scores.size()) + " entries, model expects " +
                std::to_string(model.weights.size()));
  double v = -model.rho;
  for (std::size_t d = 0; d < scores.size(); ++d) v += model.weights[d] * scores[d];
  return v;
}

void save_model(const std::filesystem::path& path, const FusionModel& model) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write fusion model '" + path.string() + "'");
  out << "method\t" << (model.method == FusionMethod::Mean ? "mean" : "svm") << '\n';
  out << "ordering";
  for (const auto& o : model.ordering) out << '\t' << o;
  out << "\nweights";
  for (double w : model.weights) out << '\t' << format_double(w);
  out << "\nrho\t" << format_double(model.rho) << "\nnu\t" << format_double(model.nu) << '\n';
  if (!out) throw Error("failed writing fusion model '" + path.string() + "'");
}

FusionModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open fusion model '" + path.string() + "'");
  FusionModel m;
  bool seen[5] = {};
  std::string line;
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream ss(line);
      std::string key, field;
      std::getline(ss, key, '\t');
      std::vector<std::string> fields;
      while (std::getline(ss, field, '\t')) fields.push_back(field);
      if (key == "method") {
        if (fields.size() != 1 || (fields[0] != "svm" && fields[0] != "mean")) throw Error("bad method");
        m.method = fields[0] == "mean" ? FusionMethod::Mean : FusionMethod::OneClassSvm;
        seen[0] = true;
      } else if (key == "ordering") {
        m.ordering = fields;
        seen[1] = true;
      } else if (key == "weights") {
        for (const auto& f : fields) m.weights.push_back(std::stod(f));
        seen[2] = true;
      } else if (key == "rho" && fields.size() == 1) {
        m.rho = std::stod(fields[0]);
        seen[3] = true;
      } else if (key == "nu" && fields.size() == 1) {
        m.nu = std::stod(fields[0]);
        seen[4] = true;
      } else {
        throw Error("unexpected line '" + line + "'");
      }
    }
  } catch (const std::invalid_argument&) {
    throw Error("fusion model '" + path.string() + "': bad number");
  } catch (const Error& e) {
    throw Error("fusion model '" + path.string() + "': " + e.what());
  }
  if (!(seen[0] && seen[1] && seen[2] && seen[3] && seen[4]))
    throw Error("fusion model '" + path.string() + "' is incomplete");
  if (m.ordering.size() != m.weights.size() || m.weights.empty())
    throw Error("fusion model '" + path.string() + "': ordering and weights differ in length");
  for (double w : m.weights)
    if (!std::isfinite(w)) throw Error("fusion model '" + path.string() + "': non-finite weight");
  return m;
}

}  // namespace ghfr
