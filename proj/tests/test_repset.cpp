#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "ghfr/error.hpp"
#include "ghfr/repset.hpp"
#include "test_util.hpp"

using namespace ghfr;

namespace {

GrayImage noise_image(Rng& rng, int w, int h) {
  GrayImage img(w, h);
  for (float& v : img.pixels) v = static_cast<float>(rng.uniform());
  return img;
}

std::vector<ImagePair> random_pairs(std::uint64_t seed, int M, int w, int h) {
  Rng rng(seed);
  std::vector<ImagePair> pairs;
  for (int z = 0; z < M; ++z) pairs.push_back({"p" + std::to_string(z), noise_image(rng, w, h), noise_image(rng, w, h)});
  return pairs;
}

const std::vector<DescriptorKind> kAllKinds{DescriptorKind::Hog, DescriptorKind::DenseGrad, DescriptorKind::Raw};

}  // namespace

TEST_CASE("search offsets") {
  CHECK(search_offsets({16, 2}) == std::vector<int>{-8, -6, -4, -2, 0, 2, 4, 6});
  CHECK(search_offsets({0, 2}) == std::vector<int>{0});
  CHECK(search_offsets({8, 4}) == std::vector<int>{-4, 0});
  CHECK(search_offsets({6, 4}) == std::vector<int>{0});
  CHECK_THROWS_AS(search_offsets({15, 2}), Error);
  CHECK_THROWS_AS(search_offsets({16, 0}), Error);
}

TEST_CASE("repset construction") {
  const PatchGrid g = build_grid(30, 30, 10, 5);
  const auto pairs = random_pairs(1, 3, 30, 30);
  const auto rs = build_repset(pairs, g, kAllKinds);
  CHECK(rs.size() == 3);
  CHECK(rs.id(2) == "p2");
  CHECK(rs.has_kind(DescriptorKind::Raw));
  CHECK(rs.image(Modality::B, 1) == pairs[1].b);
  CHECK(build_repset(pairs, g, kAllKinds) == rs);

  const auto one = build_repset(std::span(pairs).first(1), g, kAllKinds);
  CHECK(one.size() == 1);
  const auto q = describe_patch(DescriptorKind::Hog, extract_patch(pairs[0].a, g.ref(0), g), 10);
  CHECK(search_candidates(one, Modality::A, 0, q, 1).candidates.size() == 1);
  CHECK_THROWS_AS(search_candidates(one, Modality::A, 0, q, 2), Error);

  std::vector<ImagePair> many;
  Rng rng(2);
  for (int z = 0; z < 123; ++z) many.push_back({"m" + std::to_string(z), noise_image(rng, 10, 10), noise_image(rng, 10, 10)});
  CHECK(build_repset(many, build_grid(10, 10, 10, 5), {kAllKinds.begin(), 1}).size() == 123);
}

TEST_CASE("stored features equal direct descriptors") {
  const PatchGrid g = build_grid(30, 25, 10, 5);
  const auto pairs = random_pairs(3, 2, 30, 25);
  const auto rs = build_repset(pairs, g, kAllKinds);
  for (auto kind : kAllKinds)
    for (int y = 0; y <= 15; y += 3)
      for (int x = 0; x <= 20; x += 4) {
        const auto f = describe_patch(kind, extract_window(pairs[1].b, x, y, 10), 10);
        const auto stored = rs.feature(Modality::B, kind, 1, x, y);
        REQUIRE(stored.size() == f.values.size());
        for (std::size_t d = 0; d < stored.size(); ++d) CHECK(stored[d] == static_cast<float>(f.values[d]));
      }
}

TEST_CASE("degenerate region ranks aligned patches by distance") {
  const PatchGrid g = build_grid(30, 30, 10, 5);
  const auto pairs = random_pairs(4, 3, 30, 30);
  const auto rs = build_repset(pairs, g, kAllKinds);
  Rng rng(11);
  const GrayImage probe = noise_image(rng, 30, 30);
  for (int i = 0; i < g.size(); ++i) {
    const auto q = describe_patch(DescriptorKind::Hog, extract_patch(probe, g.ref(i), g), 10);
    const auto qf = quantize_feature(q);
    std::vector<std::pair<double, std::uint32_t>> oracle;
    for (std::uint32_t z = 0; z < 3; ++z) {
      const auto f = describe_patch(DescriptorKind::Hog, extract_patch(pairs[z].a, g.ref(i), g), 10);
      double d2 = 0;
      for (std::size_t d = 0; d < qf.size(); ++d) {
        const double diff = double(static_cast<float>(f.values[d])) - double(qf[d]);
        d2 += diff * diff;
      }
      oracle.emplace_back(std::sqrt(d2), z);
    }
    std::sort(oracle.begin(), oracle.end());
    const auto cs = search_candidates(rs, Modality::A, i, q, 3, {0, 2});
    REQUIRE(cs.candidates.size() == 3);
    for (int k = 0; k < 3; ++k) {
      CHECK(cs.candidates[k].source == oracle[k].second);
      CHECK(cs.candidates[k].distance == doctest::Approx(oracle[k].first).epsilon(1e-12));
      CHECK(cs.candidates[k].dx == 0);
      CHECK(cs.candidates[k].dy == 0);
    }
  }
}

TEST_CASE("full search matches a brute-force scan") {
  const PatchGrid g = build_grid(40, 35, 10, 5);
  const auto pairs = random_pairs(6, 4, 40, 35);
  const auto rs = build_repset(pairs, g, kAllKinds);
  Rng rng(12);
  const GrayImage probe = noise_image(rng, 40, 35);
  const SearchOptions opts{16, 2};
  for (int i : {0, 7, 13, g.size() - 1}) {
    const PatchRef ref = g.ref(i);
    const auto q = describe_patch(DescriptorKind::DenseGrad, extract_patch(probe, ref, g), 10);
    const auto qf = quantize_feature(q);
    std::vector<std::tuple<double, std::uint32_t, int, int>> oracle;
    for (std::uint32_t z = 0; z < 4; ++z) {
      double best = 1e300;
      int bx = 0, by = 0;
      for (int dy = -8; dy < 8; dy += 2)
        for (int dx = -8; dx < 8; dx += 2) {
          const int x = std::clamp(ref.x0 + dx, 0, 30), y = std::clamp(ref.y0 + dy, 0, 25);
          const auto f = describe_patch(DescriptorKind::DenseGrad, extract_window(pairs[z].a, x, y, 10), 10);
          double d2 = 0;
          for (std::size_t d = 0; d < qf.size(); ++d) {
            const double diff = double(static_cast<float>(f.values[d])) - double(qf[d]);
            d2 += diff * diff;
          }
          if (d2 < best) best = d2, bx = x - ref.x0, by = y - ref.y0;
        }
      oracle.emplace_back(std::sqrt(best), z, bx, by);
    }
    std::sort(oracle.begin(), oracle.end());
    const auto cs = search_candidates(rs, Modality::A, i, q, 4, opts);
    for (int k = 0; k < 4; ++k) {
      CHECK(cs.candidates[k].source == std::get<1>(oracle[k]));
      CHECK(cs.candidates[k].dx == std::get<2>(oracle[k]));
      CHECK(cs.candidates[k].dy == std::get<3>(oracle[k]));
      CHECK(cs.candidates[k].intensities ==
            extract_window(pairs[cs.candidates[k].source].a, ref.x0 + cs.candidates[k].dx, ref.y0 + cs.candidates[k].dy, 10));
    }
  }
}

TEST_CASE("self query, K = M and monotone K") {
  const PatchGrid g = build_grid(35, 30, 10, 5);
  const auto pairs = random_pairs(7, 5, 35, 30);
  const auto rs = build_repset(pairs, g, kAllKinds);
  for (int i = 0; i < g.size(); i += 3) {
    const auto q = describe_patch(DescriptorKind::Raw, extract_patch(pairs[2].b, g.ref(i), g), 10);
    const auto full = search_candidates(rs, Modality::B, i, q, 5);
    CHECK(full.candidates[0].source == 2);
    CHECK(full.candidates[0].distance == 0.0);
    std::set<std::uint32_t> seen;
    for (const auto& c : full.candidates) seen.insert(c.source);
    CHECK(seen.size() == 5);
    for (std::size_t K = 1; K < 5; ++K) {
      const auto part = search_candidates(rs, Modality::B, i, q, K);
      for (std::size_t k = 0; k < K; ++k) {
        CHECK(part.candidates[k].source == full.candidates[k].source);
        CHECK(part.candidates[k].dx == full.candidates[k].dx);
      }
    }
  }
}

TEST_CASE("candidate overlap") {
  const PatchGrid g = build_grid(30, 30, 10, 5);
  auto pairs = random_pairs(8, 2, 30, 30);
  pairs[1].a = GrayImage(30, 30, 0.6f);
  const auto rs = build_repset(pairs, g, kAllKinds);
  for (const auto& e : g.adjacency()) {
    const auto q = describe_patch(DescriptorKind::Hog, extract_patch(pairs[0].a, g.ref(e.i), g), 10);
    const auto cs = search_candidates(rs, Modality::A, e.i, q, 2, {0, 2});
    for (const auto& c : cs.candidates) {
      const auto o = candidate_overlap(c, e, OverlapSide::First, 10);
      CHECK(o.size() == 50);
      CHECK(o == overlap_vector(extract_patch(pairs[c.source].a, g.ref(e.i), g), e, OverlapSide::First, 10));
      if (c.source == 1)
        for (double v : o) CHECK(v == doctest::Approx(0.6));
    }
  }
}

TEST_CASE("repset save and load") {
  const auto dir = test::scratch_dir("repset_io");
  const PatchGrid g = build_grid(30, 20, 10, 5);
  const auto rs = build_repset(random_pairs(9, 3, 30, 20), g, kAllKinds);
  rs.save(dir / "rs.bin");
  CHECK(RepresentationSet::load(dir / "rs.bin") == rs);
  CHECK_THROWS_AS(RepresentationSet::load(dir / "missing.bin"), Error);
  std::ofstream(dir / "bad.bin") << "not a repset";
  CHECK_THROWS_AS(RepresentationSet::load(dir / "bad.bin"), Error);
}
