#include <doctest.h>

#include <algorithm>
#include <set>

#include "ghfr/error.hpp"
#include "ghfr/evalkit.hpp"
#include "test_util.hpp"

using namespace ghfr;

namespace {

MatchMatrix random_matrix(Rng& rng, int probes, int gallery) {
  MatchMatrix mm;
  for (int g = 0; g < gallery; ++g) mm.gallery_labels.push_back("g" + std::to_string(g));
  for (int p = 0; p < probes; ++p) mm.probe_labels.push_back("g" + std::to_string(p % gallery));
  for (int k = 0; k < probes * gallery; ++k) mm.scores.push_back(rng.uniform());
  return mm;
}

// Rank by explicit sort, ties resolved against the mate.
int sorted_rank(std::span<const double> row, std::span<const std::string> labels, const std::string& mate) {
  double best = -1e300;
  for (std::size_t k = 0; k < row.size(); ++k)
    if (labels[k] == mate) best = std::max(best, row[k]);
  std::vector<std::pair<double, int>> order;
  for (std::size_t k = 0; k < row.size(); ++k)
    if (labels[k] != mate) order.emplace_back(row[k], 0);
  order.emplace_back(best, 1);
  std::sort(order.begin(), order.end(), [](auto a, auto b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
  for (std::size_t k = 0; k < order.size(); ++k)
    if (order[k].second == 1) return static_cast<int>(k) + 1;
  return -1;
}

}  // namespace

TEST_CASE("rank of mate") {
  const std::vector<std::string> labels{"a", "b", "c"};
  CHECK(rank_of_mate(std::vector<double>{0.9, 0.5, 0.1}, labels, "a") == 1);
  CHECK(rank_of_mate(std::vector<double>{0.5, 0.5, 0.1}, labels, "a") == 2);
  CHECK(rank_of_mate(std::vector<double>{0.2, 0.5, 0.1}, labels, "a") == 2);
  CHECK_THROWS_AS(rank_of_mate(std::vector<double>{0.2, 0.5, 0.1}, labels, "z"), Error);

  Rng rng(51);
  const auto mm = random_matrix(rng, 20, 15);
  const auto ranks = mate_ranks(mm, 2);
  for (std::size_t p = 0; p < mm.probes(); ++p) {
    CHECK(ranks[p] == sorted_rank(mm.row(p), mm.gallery_labels, mm.probe_labels[p]));
    // Strictly increasing transform of the row keeps the rank.
    std::vector<double> t(mm.row(p).begin(), mm.row(p).end());
    for (double& v : t) v = std::exp(3 * v) - 7;
    CHECK(rank_of_mate(t, mm.gallery_labels, mm.probe_labels[p]) == ranks[p]);
  }
}

TEST_CASE("cmc") {
  const std::vector<int> ones{1, 1, 1};
  for (double r : cmc_from_ranks(ones, 4).rates) CHECK(r == 1.0);
  const std::vector<int> r12{1, 2};
  CHECK(cmc_from_ranks(r12, 2).rates == std::vector<double>{0.5, 1.0});
  Rng rng(52);
  const auto curve = cmc(random_matrix(rng, 30, 10));
  CHECK(curve.rates.size() == 10);
  CHECK(std::is_sorted(curve.rates.begin(), curve.rates.end()));
  CHECK(curve.rates.back() == 1.0);
  CHECK(curve.at(50) == 1.0);
  CHECK_THROWS_AS(curve.at(0), Error);
}

TEST_CASE("verification rate at a false accept rate") {
  const std::vector<double> gen{0.8, 0.9, 0.95}, imp{0.1, 0.2, 0.3};
  for (double far : {0.001, 0.1, 0.5}) CHECK(vr_at_far(gen, imp, far) == 1.0);
  const std::vector<double> one{0.9};
  std::vector<double> ten;
  for (int k = 1; k <= 10; ++k) ten.push_back(k / 10.0);
  CHECK(vr_at_far(one, ten, 0.1) == 0.0);
  CHECK(vr_at_far(one, ten, 0.2) == 1.0);
  CHECK_THROWS_AS(vr_at_far(one, ten, 1.0), Error);
  CHECK_THROWS_AS(vr_at_far(one, ten, 0.0), Error);
  CHECK_THROWS_AS(vr_at_far({}, ten, 0.1), Error);
}

TEST_CASE("verification scores and evaluate") {
  MatchMatrix mm{{"a", "b"}, {"a", "b", "c"}, {0.9, 0.2, 0.1, 0.3, 0.8, 0.4}};
  const auto vs = verification_scores(mm);
  CHECK(vs.genuine == std::vector<double>{0.9, 0.8});
  CHECK(vs.impostor.size() == 4);
  const std::vector<int> ranks{1, 2};
  const auto m = evaluate(mm, ranks, 0.25);
  CHECK(m.rank_accuracy.at(1) == 1.0);
  CHECK(m.rank_accuracy.at(2) == 1.0);
  CHECK(m.vr == 1.0);
  const auto dir = test::scratch_dir("evalkit_io");
  write_metrics_tsv(dir / "m.tsv", m);
  write_metrics_json(dir / "m.json", m);
  write_cmc(dir / "c.tsv", m.curve);
  CHECK(test::slurp(dir / "m.tsv").find("rank1\t1") != std::string::npos);
  CHECK(test::slurp(dir / "m.json").find("vr_at_far") != std::string::npos);
}

TEST_CASE("populating the gallery") {
  Rng rng(53);
  const auto mm = random_matrix(rng, 12, 8);
  const auto same = populate_gallery(mm, {}, {});
  CHECK(same.scores == mm.scores);
  CHECK(same.gallery_labels == mm.gallery_labels);

  std::vector<std::string> dl;
  std::vector<double> ds;
  for (int d = 0; d < 25; ++d) dl.push_back("x" + std::to_string(d));
  for (std::size_t k = 0; k < mm.probes() * dl.size(); ++k) ds.push_back(rng.uniform());
  const auto big = populate_gallery(mm, dl, ds);
  REQUIRE(big.gallery() == 33);
  const auto before = mate_ranks(mm), after = mate_ranks(big);
  for (std::size_t p = 0; p < mm.probes(); ++p) {
    CHECK(after[p] >= before[p]);
    int above = 0;
    const double mate = big.row(p)[std::find(big.gallery_labels.begin(), big.gallery_labels.end(), big.probe_labels[p]) -
                                   big.gallery_labels.begin()];
    for (std::size_t g = 0; g < big.gallery(); ++g)
      if (big.gallery_labels[g] != big.probe_labels[p] && big.row(p)[g] >= mate) ++above;
    CHECK(after[p] == above + 1);
  }
  std::vector<std::string> clash{"g0"};
  CHECK_THROWS_AS(populate_gallery(mm, clash, std::vector<double>(12, 0.0)), Error);
  CHECK_THROWS_AS(populate_gallery(mm, dl, std::vector<double>(3, 0.0)), Error);
}

TEST_CASE("random partitions and the split protocol") {
  std::vector<std::string> ids;
  for (int k = 0; k < 100; ++k) ids.push_back("id" + std::to_string(k));
  const auto p = random_partition(ids, {30, 30, 40}, 7);
  CHECK(p.representation.size() == 30);
  CHECK(p.train.size() == 30);
  CHECK(p.test.size() == 40);
  std::set<std::string> all(p.representation.begin(), p.representation.end());
  all.insert(p.train.begin(), p.train.end());
  all.insert(p.test.begin(), p.test.end());
  CHECK(all.size() == 100);
  CHECK(random_partition(ids, {30, 30, 40}, 7).test == p.test);
  CHECK(random_partition(ids, {30, 30, 40}, 8).test != p.test);
  CHECK_THROWS_AS(random_partition(ids, {50, 30, 40}, 7), Error);

  auto evaluator = [](const Partition& part) {
    double h = 0;
    for (const auto& s : part.test) h += static_cast<double>(std::hash<std::string>{}(s) % 1000);
    return Metrics{{"score", h}, {"first", static_cast<double>(part.test.front().size())}};
  };
  const auto one = run_split_protocol(ids, 3, {30, 30, 40}, 1, evaluator);
  CHECK(one.repeats.size() == 1);
  CHECK(one.mean == one.repeats[0]);
  const auto ten = run_split_protocol(ids, 3, {30, 30, 40}, 10, evaluator);
  CHECK(ten.repeats.size() == 10);
  CHECK(ten.mean.size() == 2);
  const auto again = run_split_protocol(ids, 3, {30, 30, 40}, 10, evaluator);
  CHECK(again.mean == ten.mean);
  CHECK_THROWS_AS(run_split_protocol(ids, 3, {30, 30, 40}, 0, evaluator), Error);
}
