#include <doctest.h>

#include "ghfr/crsm.hpp"
#include "ghfr/error.hpp"
#include "test_util.hpp"

using namespace ghfr;

TEST_CASE("patch similarity fixtures") {
  const SparseVector a{{1, 0.6f}, {2, 0.4f}};
  CHECK(patch_similarity(a, a) == 1.0);
  CHECK(patch_similarity(a, SparseVector{{0, 0.5f}, {3, 0.5f}}) == 0.0);
  const SparseVector wy{{1, 0.6f}, {2, 0.4f}};
  const SparseVector wx{{1, 0.3f}, {3, 0.7f}};
  CHECK(patch_similarity(wy, wx) == 0.5 * (double(0.6f) + double(0.3f)));
  CHECK(patch_similarity(wy, wx) == doctest::Approx(0.45).epsilon(1e-7));
  CHECK(patch_similarity(wx, wy) == patch_similarity(wy, wx));
  CHECK(patch_similarity({}, a) == 0.0);
}

TEST_CASE("patch similarity is bounded and symmetric on random vectors") {
  Rng rng(31);
  for (int t = 0; t < 200; ++t) {
    SparseVector x, y;
    for (std::uint32_t z = 0; z < 12; ++z) {
      if (rng.uniform() < 0.4) x.push_back({z, static_cast<float>(rng.uniform())});
      if (rng.uniform() < 0.4) y.push_back({z, static_cast<float>(rng.uniform())});
    }
    auto normalize = [](SparseVector& v) {
      double s = 0;
      for (auto& e : v) s += e.weight;
      for (auto& e : v) e.weight = static_cast<float>(e.weight / s);
    };
    normalize(x);
    normalize(y);
    const double s = patch_similarity(x, y);
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
    CHECK(s == patch_similarity(y, x));
  }
}

TEST_CASE("similarity maps") {
  const PatchGrid g = build_grid(15, 10, 10, 5);  // 2 x 1 patches
  SparseRepresentation x{4, {{{0, 1.0f}}, {{1, 0.5f}, {2, 0.5f}}}};
  SparseRepresentation y{4, {{{0, 1.0f}}, {{1, 0.5f}, {3, 0.5f}}}};
  const auto self = similarity_map(x, x, g);
  CHECK(self.scores == std::vector<double>{1.0, 1.0});
  CHECK(self.score == 1.0);
  const auto mixed = similarity_map(x, y, g);
  CHECK(mixed.cols == 2);
  CHECK(mixed.rows == 1);
  CHECK(mixed.scores == std::vector<double>{1.0, 0.5});
  CHECK(mixed.score == 0.75);
  CHECK(image_similarity(x, y) == 0.75);
  SparseRepresentation d{4, {{{3, 1.0f}}, {{0, 1.0f}}}};
  CHECK(image_similarity(x, d) == 0.0);
  CHECK_THROWS_AS(image_similarity(x, SparseRepresentation{5, x.patches}), Error);
  CHECK_THROWS_AS(similarity_map(x, x, build_grid(20, 20, 10, 5)), Error);
}

TEST_CASE("binarized maps") {
  SimilarityMap m{2, 1, {0.4, 0.6}, 0.5};
  CHECK(binarize_map(m).bright == std::vector<std::uint8_t>{0, 1});
  SimilarityMap ones{2, 1, {1.0, 1.0}, 1.0};
  CHECK(binarize_map(ones).bright == std::vector<std::uint8_t>{1, 1});
  CHECK(binarize_map(ones, 1.0).bright == std::vector<std::uint8_t>{0, 0});
  CHECK_THROWS_AS(binarize_map(m, 1.5), Error);

  const PatchGrid g = build_grid(17, 10, 10, 5);  // 2 x 1 patches, 2-pixel remainder
  const GrayImage img = render_map(binarize_map(m), g);
  CHECK(img.width == 17);
  CHECK(img.height == 10);
  CHECK(img.at(4, 3) == 0.0f);
  CHECK(img.at(5, 3) == 1.0f);
  CHECK(img.at(16, 9) == 1.0f);
  CHECK(render_map(m, g).at(0, 0) == doctest::Approx(0.4));
}

TEST_CASE("metric keys and score vectors") {
  const std::vector<DescriptorKind> kinds{DescriptorKind::Hog, DescriptorKind::DenseGrad, DescriptorKind::Raw};
  const std::vector<int> Ks{15, 20, 25, 30, 35, 40};
  const auto keys = metric_keys(kinds, Ks);
  REQUIRE(keys.size() == 18);
  CHECK(metric_label(keys[0]) == "hog_K15");
  CHECK(metric_label(keys[7]) == "sift_K20");
  CHECK(parse_metric_label("raw_K40") == MetricKey{DescriptorKind::Raw, 40});
  CHECK_THROWS_AS(parse_metric_label("raw_40"), Error);
  CHECK_THROWS_AS(parse_metric_label("raw_K0"), Error);

  RepresentationBundle b;
  for (const auto& k : keys) b[k] = SparseRepresentation{3, {{{k.K % 3u, 1.0f}}}};
  const auto self = score_vector(b, b, keys);
  CHECK(self.size() == 18);
  for (double v : self) CHECK(v == 1.0);
  const std::vector<MetricKey> one{keys[3]};
  CHECK(score_vector(b, b, one).size() == 1);
  b.erase(keys[5]);
  CHECK_THROWS_AS(score_vector(b, b, keys), Error);
}

TEST_CASE("score tables round-trip") {
  const auto dir = test::scratch_dir("scores");
  ScoreTable t;
  t.keys = {{DescriptorKind::Hog, 15}, {DescriptorKind::Raw, 20}};
  t.rows.push_back({"p1", "g1", {0.1, 1.0 / 3.0}});
  t.rows.push_back({"p1", "g2", {0.0, 0.987654321012345678}});
  write_score_table(dir / "s.tsv", t);
  const auto back = read_score_table(dir / "s.tsv");
  CHECK(back.keys == t.keys);
  REQUIRE(back.rows.size() == 2);
  for (std::size_t r = 0; r < 2; ++r) {
    CHECK(back.rows[r].probe_id == t.rows[r].probe_id);
    CHECK(back.rows[r].gallery_id == t.rows[r].gallery_id);
    CHECK(back.rows[r].values == t.rows[r].values);
  }
  std::ofstream(dir / "bad.tsv") << "probe_id\tgallery_id\thog_K15\np\tg\tnope\n";
  CHECK_THROWS_AS(read_score_table(dir / "bad.tsv"), Error);
}
