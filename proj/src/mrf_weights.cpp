#include "ghfr/mrf_weights.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "ghfr/binary_io.hpp"
#include "ghfr/error.hpp"
#include "ghfr/simplex_qp.hpp"

namespace ghfr {

namespace {

constexpr std::uint16_t kRepresentationVersion = 1;

// ||f - F w||^2 over the first w.size() columns, skipping zero weights.
double evidence_term(const PatchProblem& p, const Eigen::VectorXd& w) {
  Eigen::VectorXd r = p.query;
  for (Eigen::Index k = 0; k < w.size(); ++k)
    if (w[k] != 0.0) r.noalias() -= w[k] * p.features.col(k);
  return r.squaredNorm();
}

Eigen::VectorXd sparse_product(const Eigen::MatrixXd& O, const Eigen::VectorXd& w) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(O.rows());
  for (Eigen::Index k = 0; k < w.size(); ++k)
    if (w[k] != 0.0) out.noalias() += w[k] * O.col(k);
  return out;
}

double evaluate(std::span<const Eigen::VectorXd> weights, std::span<const PatchProblem> problems,
                std::span<const AdjacencyPair> edges, double alpha, std::vector<double>* evidence,
                std::vector<double>* coupling) {
  const std::size_t N = problems.size();
  if (evidence) evidence->assign(N, 0.0);
  if (coupling) coupling->assign(N, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    const double e = evidence_term(problems[i], weights[i]);
    if (evidence) (*evidence)[i] = e;
    total += e;
  }
  if (alpha == 0.0) return total;
  for (const auto& edge : edges) {
    const Eigen::VectorXd a = sparse_product(problems[edge.i].overlap_with(edge.j), weights[edge.i]);
    const Eigen::VectorXd b = sparse_product(problems[edge.j].overlap_with(edge.i), weights[edge.j]);
    const double c = alpha * (a - b).squaredNorm();
    if (coupling) {
      (*coupling)[edge.i] += 0.5 * c;
      (*coupling)[edge.j] += 0.5 * c;
    }
    total += c;
  }
  return total;
}

void check_problem_shapes(std::span<const PatchProblem> problems, std::span<const AdjacencyPair> edges) {
  if (problems.empty()) throw Error("weight solver: no patch problems");
  const int K = problems.front().K();
  if (K < 1) throw Error("weight solver: problems have no candidates");
  for (const auto& p : problems) {
    if (p.K() != K || static_cast<int>(p.sources.size()) != K)
      throw Error("weight solver: candidate counts differ between patches");
    if (p.features.rows() != p.query.size()) throw Error("weight solver: feature dimension mismatch");
    if (!p.features.allFinite() || !p.query.allFinite()) throw Error("weight solver: non-finite input");
    for (const auto& o : p.overlaps) {
      if (o.overlap.cols() != K) throw Error("weight solver: overlap matrix column mismatch");
      if (!o.overlap.allFinite()) throw Error("weight solver: non-finite overlap");
    }
  }
  for (const auto& e : edges) {
    if (e.i < 0 || e.j < 0 || static_cast<std::size_t>(std::max(e.i, e.j)) >= problems.size())
      throw Error("weight solver: adjacency refers to a missing patch");
    if (problems[e.i].overlap_with(e.j).rows() != problems[e.j].overlap_with(e.i).rows())
      throw Error("weight solver: overlap dimension mismatch");
  }
}

}  // namespace

void SolverParams::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw Error("solver: alpha must be a finite non-negative number");
  if (K < 1) throw Error("solver: K must be at least 1");
  if (max_sweeps < 1) throw Error("solver: max_sweeps must be at least 1");
  if (!(tol > 0.0)) throw Error("solver: tol must be positive");
  search_offsets(search());
}

const Eigen::MatrixXd& PatchProblem::overlap_with(int neighbor) const {
  for (const auto& o : overlaps)
    if (o.neighbor == neighbor) return o.overlap;
  throw Error("patch problem has no overlap toward patch " + std::to_string(neighbor));
}

std::vector<PatchProblem> build_problems(const GrayImage& img, const RepresentationSet& rs, Modality modality,
                                         DescriptorKind kind, const SolverParams& params) {
  params.validate();
  const PatchGrid& grid = rs.grid();
  if (img.width != grid.image_width() || img.height != grid.image_height())
    throw Error("build_problems: image is not normalized to the grid geometry");
  if (!rs.has_kind(kind))
    throw Error("build_problems: representation set lacks '" + std::string(to_string(kind)) + "' features");
  const int ps = grid.patch_size();
  const auto K = static_cast<std::size_t>(params.K);

  std::vector<PatchProblem> problems(static_cast<std::size_t>(grid.size()));
  for (int i = 0; i < grid.size(); ++i) {
    const PatchRef ref = grid.ref(i);
    const auto query = quantize_feature(describe_patch(kind, extract_patch(img, ref, grid), ps));
    const auto hits = nearest_sources(rs, modality, kind, i, query, K, params.search());

    PatchProblem& p = problems[i];
    p.query = Eigen::Map<const Eigen::VectorXf>(query.data(), static_cast<Eigen::Index>(query.size())).cast<double>();
    p.features.resize(p.query.size(), static_cast<Eigen::Index>(K));
    for (std::size_t k = 0; k < K; ++k) {
      const auto& h = hits[k];
      p.sources.push_back(h.source);
      const auto f = rs.feature(modality, kind, h.source, ref.x0 + h.dx, ref.y0 + h.dy);
      for (std::size_t d = 0; d < f.size(); ++d) p.features(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(k)) = f[d];
    }
    for (const auto& nb : grid.neighbors(i)) {
      const Rect& r = grid.adjacency()[nb.pair].local(nb.side);
      NeighborOverlap o{nb.other, Eigen::MatrixXd(r.area(), static_cast<Eigen::Index>(K))};
      for (std::size_t k = 0; k < K; ++k) {
        const auto& h = hits[k];
        const GrayImage& src = rs.image(modality, h.source);
        const int bx = ref.x0 + h.dx + r.x;
        const int by = ref.y0 + h.dy + r.y;
        Eigen::Index row = 0;
        for (int y = 0; y < r.h; ++y)
          for (int x = 0; x < r.w; ++x) o.overlap(row++, static_cast<Eigen::Index>(k)) = src.at(bx + x, by + y);
      }
      p.overlaps.push_back(std::move(o));
    }
  }
  return problems;
}

double objective_value(std::span<const Eigen::VectorXd> weights, std::span<const PatchProblem> problems,
                       std::span<const AdjacencyPair> edges, double alpha) {
  if (weights.size() != problems.size()) throw Error("objective: weight count does not match patch count");
  if (alpha < 0) throw Error("objective: alpha must be non-negative");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const auto& w = weights[i];
    if (w.size() == 0 || w.size() > problems[i].K()) throw Error("objective: weight length out of range");
    if (w.minCoeff() < -1e-6 || std::abs(w.sum() - 1.0) > 1e-6) throw Error("objective: weights off the simplex");
  }
  return evaluate(weights, problems, edges, alpha, nullptr, nullptr);
}

WeightSolver::WeightSolver(std::vector<PatchProblem> problems, std::vector<AdjacencyPair> edges)
    : problems_(std::move(problems)), edges_(std::move(edges)) {
  check_problem_shapes(problems_, edges_);
  max_k_ = problems_.front().K();
  const std::size_t N = problems_.size();
  links_.resize(N);
  for (const auto& e : edges_) {
    const auto& oij = problems_[e.i].overlap_with(e.j);
    const auto& oji = problems_[e.j].overlap_with(e.i);
    Eigen::MatrixXd cross = oij.transpose() * oji;
    links_[e.j].push_back({e.i, cross.transpose()});
    links_[e.i].push_back({e.j, std::move(cross)});
  }
  feature_gram_.resize(N);
  overlap_gram_.resize(N);
  feature_dot_.resize(N);
  query_sq_.resize(N);
  for (std::size_t i = 0; i < N; ++i) {
    const auto& p = problems_[i];
    feature_gram_[i] = p.features.transpose() * p.features;
    feature_dot_[i] = p.features.transpose() * p.query;
    query_sq_[i] = p.query.squaredNorm();
    overlap_gram_[i] = Eigen::MatrixXd::Zero(max_k_, max_k_);
    for (const auto& l : links_[i]) {
      const auto& o = p.overlap_with(l.other);
      overlap_gram_[i].noalias() += o.transpose() * o;
    }
  }
}

double WeightSolver::quadratic_objective(std::span<const Eigen::VectorXd> w, std::span<const Eigen::MatrixXd> A,
                                         double alpha) const {
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const Eigen::Index K = w[i].size();
    total += query_sq_[i] - 2.0 * w[i].dot(feature_dot_[i].head(K)) + w[i].dot(A[i] * w[i]);
    if (alpha == 0.0) continue;
    for (const auto& l : links_[i]) {
      if (l.other < static_cast<int>(i)) continue;
      const Eigen::VectorXd& wj = w[l.other];
      for (Eigen::Index b = 0; b < K; ++b)
        if (wj[b] != 0.0) total -= 2.0 * alpha * wj[b] * w[i].dot(l.cross.col(b).head(K));
    }
  }
  return total;
}

WeightField WeightSolver::solve(const SolverParams& params) const {
  params.validate();
  const int K = params.K;
  if (K > max_k_)
    throw Error("weight solver: K = " + std::to_string(K) + " exceeds the " + std::to_string(max_k_) +
                " prepared candidates");
  const double alpha = params.alpha;
  const std::size_t N = problems_.size();

  std::vector<Eigen::MatrixXd> A(N);
  for (std::size_t i = 0; i < N; ++i) {
    A[i] = feature_gram_[i].topLeftCorner(K, K);
    if (alpha != 0.0) A[i] += alpha * overlap_gram_[i].topLeftCorner(K, K);
  }

  std::vector<Eigen::VectorXd> w(N, Eigen::VectorXd::Constant(K, 1.0 / K));
  WeightField wf;
  double prev = quadratic_objective(w, A, alpha);
  wf.sweep_objectives.push_back(prev);

  Eigen::VectorXd g(K);
  for (int sweep = 1; sweep <= params.max_sweeps; ++sweep) {
    for (std::size_t i = 0; i < N; ++i) {
      g = -2.0 * feature_dot_[i].head(K);
      if (alpha != 0.0) {
        for (const auto& l : links_[i]) {
          const Eigen::VectorXd& wj = w[l.other];
          for (int k = 0; k < K; ++k)
            if (wj[k] != 0.0) g.noalias() -= (2.0 * alpha * wj[k]) * l.cross.col(k).head(K);
        }
      }
      const double current = w[i].dot(A[i] * w[i]) + g.dot(w[i]);
      Eigen::VectorXd next = solve_simplex_qp_trusted(A[i], g, sweep > 1 ? &w[i] : nullptr);
      const double candidate = next.dot(A[i] * next) + g.dot(next);
      if (candidate < current) w[i] = std::move(next);
    }
    double obj = quadratic_objective(w, A, alpha);
    // Descent crawls toward vertex solutions; try rounding every patch to its heaviest candidate.
    std::vector<Eigen::VectorXd> snapped(N, Eigen::VectorXd::Zero(K));
    bool moved = false;
    for (std::size_t i = 0; i < N; ++i) {
      Eigen::Index top = 0;
      w[i].maxCoeff(&top);
      snapped[i][top] = 1.0;
      moved = moved || snapped[i] != w[i];
    }
    if (moved) {
      const double rounded = quadratic_objective(snapped, A, alpha);
      if (rounded <= obj) {
        obj = rounded;
        w = std::move(snapped);
      }
    }
    wf.sweep_objectives.push_back(obj);
    wf.sweeps = sweep;
    const bool done = prev <= 0.0 || (prev - obj) / prev < params.tol;
    prev = obj;
    if (done) break;
  }

  wf.objective = evaluate(w, problems_, edges_, alpha, &wf.evidence, &wf.coupling);

  wf.weights = std::move(w);
  wf.sources.resize(N);
  for (std::size_t i = 0; i < N; ++i)
    wf.sources[i].assign(problems_[i].sources.begin(), problems_[i].sources.begin() + K);
  return wf;
}

WeightField solve_weight_field(std::span<const PatchProblem> problems, std::span<const AdjacencyPair> edges,
                               const SolverParams& params) {
  WeightSolver solver({problems.begin(), problems.end()}, {edges.begin(), edges.end()});
  return solver.solve(params);
}

SparseRepresentation to_sparse(const WeightField& wf, std::uint32_t M) {
  SparseRepresentation rep;
  rep.M = M;
  rep.patches.resize(wf.weights.size());
  for (std::size_t i = 0; i < wf.weights.size(); ++i) {
    const auto& w = wf.weights[i];
    const auto& src = wf.sources.at(i);
    if (static_cast<std::size_t>(w.size()) != src.size()) throw Error("to_sparse: weights and sources differ in length");
    SparseVector& out = rep.patches[i];
    for (Eigen::Index k = 0; k < w.size(); ++k) {
      if (src[k] >= M) throw Error("to_sparse: source index " + std::to_string(src[k]) + " out of range");
      const float v = static_cast<float>(w[k]);
      if (v != 0.0f) out.push_back({src[k], v});
    }
    std::sort(out.begin(), out.end(), [](const SparseEntry& a, const SparseEntry& b) { return a.index < b.index; });
    for (std::size_t k = 1; k < out.size(); ++k)
      if (out[k].index == out[k - 1].index) throw Error("to_sparse: duplicate source index");
  }
  return rep;
}

void save_representation(const std::filesystem::path& path, const RepresentationFile& file) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write representation '" + path.string() + "'");
  io::write_bytes(out, "GHRW", 4);
  io::write_le<std::uint16_t>(out, kRepresentationVersion);
  io::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(file.kind));
  io::write_le<std::uint16_t>(out, static_cast<std::uint16_t>(file.K));
  io::write_le<std::uint32_t>(out, file.rep.M);
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(file.rep.patches.size()));
  for (const auto& patch : file.rep.patches) {
    io::write_varint(out, patch.size());
    for (const auto& e : patch) {
      io::write_le<std::uint32_t>(out, e.index);
      io::write_f32(out, e.weight);
    }
  }
  if (!out) throw Error("failed writing representation '" + path.string() + "'");
}

RepresentationFile load_representation(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open representation '" + path.string() + "'");
  try {
    io::expect_magic(in, "GHRW", "representation");
    const auto version = io::read_le<std::uint16_t>(in);
    if (version != kRepresentationVersion) throw Error("unsupported version " + std::to_string(version));
    RepresentationFile f;
    const auto code = io::read_le<std::uint8_t>(in);
    if (code > 2) throw Error("unknown descriptor code");
    f.kind = static_cast<DescriptorKind>(code);
    f.K = io::read_le<std::uint16_t>(in);
    f.rep.M = io::read_le<std::uint32_t>(in);
    const auto N = io::read_le<std::uint32_t>(in);
    f.rep.patches.resize(N);
    for (auto& patch : f.rep.patches) {
      const auto count = io::read_varint(in);
      if (count > f.rep.M) throw Error("patch entry count exceeds M");
      patch.resize(count);
      for (auto& e : patch) {
        e.index = io::read_le<std::uint32_t>(in);
        e.weight = io::read_f32(in);
        if (e.index >= f.rep.M) throw Error("index out of range");
      }
    }
    return f;
  } catch (const Error& e) {
    throw Error("representation '" + path.string() + "': " + e.what());
  }
}

}  // namespace ghfr
