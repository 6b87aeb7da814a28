#include <doctest.h>
#include <png.h>

#include <cmath>
#include <fstream>

#include "ghfr/error.hpp"
#include "ghfr/image.hpp"
#include "test_util.hpp"

using namespace ghfr;

namespace {

void write_rgb_png(const std::filesystem::path& path, unsigned char r, unsigned char g, unsigned char b) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = 1;
  image.height = 1;
  image.format = PNG_FORMAT_RGB;
  const unsigned char px[3] = {r, g, b};
  REQUIRE(png_image_write_to_file(&image, path.c_str(), 0, px, 0, nullptr));
}

GrayImage ramp(int w, int h, double ax, double ay) {
  GrayImage img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(x, y) = static_cast<float>(ax * x + ay * y);
  return img;
}

}  // namespace

TEST_CASE("load_image reads PGM endpoints") {
  const auto dir = test::scratch_dir("image_pgm");
  {
    std::ofstream out(dir / "a.pgm", std::ios::binary);
    out << "P5\n2 1\n255\n";
    out.put(static_cast<char>(0));
    out.put(static_cast<char>(255));
  }
  const GrayImage img = load_image(dir / "a.pgm");
  REQUIRE(img.width == 2);
  REQUIRE(img.height == 1);
  CHECK(img.at(0, 0) == 0.0f);
  CHECK(img.at(1, 0) == 1.0f);
}

TEST_CASE("load_image reduces RGB PNG with luma weights") {
  const auto dir = test::scratch_dir("image_png");
  write_rgb_png(dir / "white.png", 255, 255, 255);
  write_rgb_png(dir / "red.png", 255, 0, 0);
  CHECK(load_image(dir / "white.png").at(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(load_image(dir / "red.png").at(0, 0) == doctest::Approx(0.299).epsilon(1e-6));
}

TEST_CASE("load_image rejects missing and unknown files") {
  const auto dir = test::scratch_dir("image_bad");
  CHECK_THROWS_AS(load_image(dir / "missing.pgm"), Error);
  std::ofstream(dir / "junk.pgm") << "hello";
  CHECK_THROWS_AS(load_image(dir / "junk.pgm"), Error);
}

TEST_CASE("save_pgm round-trips quantized images") {
  const auto dir = test::scratch_dir("image_save");
  GrayImage img = ramp(7, 5, 0.05, 0.1);
  quantize_8bit(img);
  save_pgm(img, dir / "r.pgm");
  CHECK(load_image(dir / "r.pgm") == img);
}

TEST_CASE("normalize_geometry") {
  SUBCASE("identity at target size") {
    const GrayImage img = ramp(100, 125, 0.003, 0.005);
    CHECK(normalize_geometry(img, 100, 125) == img);
  }
  SUBCASE("2x downsample of a ramp matches the bilinear oracle") {
    const GrayImage img = ramp(200, 250, 0.001, 0.002);
    const GrayImage out = normalize_geometry(img, 100, 125);
    REQUIRE(out.width == 100);
    REQUIRE(out.height == 125);
    // Output pixel centers land halfway between two source pixels.
    for (int y = 0; y < 125; ++y)
      for (int x = 0; x < 100; ++x)
        CHECK(out.at(x, y) == doctest::Approx(0.001 * (2 * x + 0.5) + 0.002 * (2 * y + 0.5)).epsilon(1e-5));
  }
  SUBCASE("constant input stays constant") {
    for (auto [w, h] : {std::pair{37, 91}, std::pair{300, 200}, std::pair{100, 125}}) {
      const GrayImage out = normalize_geometry(GrayImage(w, h, 0.5f), 100, 125);
      for (float v : out.pixels) CHECK(v == doctest::Approx(0.5));
    }
  }
  SUBCASE("idempotent") {
    const GrayImage once = normalize_geometry(ramp(180, 190, 0.002, 0.003), 100, 125);
    CHECK(normalize_geometry(once, 100, 125) == once);
  }
  CHECK_THROWS_AS(normalize_geometry(GrayImage(4, 4), 0, 5), Error);
}

TEST_CASE("build_grid counts") {
  const PatchGrid g = build_grid(100, 125, 10, 5);
  CHECK(g.cols() == 19);
  CHECK(g.rows() == 24);
  CHECK(g.size() == 456);
  CHECK(build_grid(10, 10, 10, 5).size() == 1);
  CHECK(build_grid(20, 20, 10, 5).size() == 9);
  CHECK(build_grid(23, 20, 10, 5).cols() == 3);  // border remainder excluded
  CHECK_THROWS_AS(build_grid(8, 20, 10, 5), Error);
  CHECK_THROWS_AS(build_grid(20, 20, 10, 11), Error);
  CHECK_THROWS_AS(build_grid(20, 20, 10, 0), Error);
}

TEST_CASE("grid index round-trip and adjacency") {
  const PatchGrid g = build_grid(100, 125, 10, 5);
  for (int i = 0; i < g.size(); ++i) {
    const PatchRef r = g.ref(i);
    CHECK(g.index(r.col, r.row) == i);
    CHECK(r.x0 == r.col * 5);
    CHECK(r.y0 == r.row * 5);
  }
  // 4-connected edges: horizontal + vertical.
  CHECK(g.adjacency().size() == static_cast<std::size_t>(18 * 24 + 19 * 23));
  for (const auto& e : g.adjacency()) {
    CHECK(e.i < e.j);
    CHECK(e.first_local.area() == 50);
    CHECK(e.second_local.area() == 50);
  }
  CHECK(g.neighbors(0).size() == 2);
  CHECK(g.neighbors(g.index(5, 5)).size() == 4);
}

TEST_CASE("extract_patch") {
  const PatchGrid g = build_grid(30, 20, 10, 5);
  const std::vector<double> c = extract_patch(GrayImage(30, 20, 0.3f), g.ref(3), g);
  REQUIRE(c.size() == 100);
  for (double v : c) CHECK(v == doctest::Approx(0.3));

  const GrayImage r = ramp(30, 20, 0.01, 0.0);
  const std::vector<double> p0 = extract_patch(r, g.ref(0), g);
  for (int x = 0; x < 10; ++x) CHECK(p0[x] == r.at(x, 0));

  // Horizontal neighbors share 5 columns x 10 rows.
  const std::vector<double> p1 = extract_patch(r, g.ref(1), g);
  int shared = 0;
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 5; ++x) shared += p0[y * 10 + x + 5] == p1[y * 10 + x];
  CHECK(shared == 50);
}

TEST_CASE("overlap vectors agree on shared pixels") {
  Rng rng(3);
  GrayImage img(100, 125);
  for (float& v : img.pixels) v = static_cast<float>(rng.uniform());
  const PatchGrid g = build_grid(100, 125, 10, 5);
  for (const auto& e : g.adjacency()) {
    const auto pi = extract_patch(img, g.ref(e.i), g);
    const auto pj = extract_patch(img, g.ref(e.j), g);
    const auto oi = overlap_vector(pi, e, OverlapSide::First, 10);
    const auto oj = overlap_vector(pj, e, OverlapSide::Second, 10);
    REQUIRE(oi.size() == 50);
    CHECK(oi == oj);
  }
  const std::vector<double> ones(100, 1.0);
  for (double v : overlap_vector(ones, g.adjacency().front(), OverlapSide::First, 10)) CHECK(v == 1.0);
  CHECK_THROWS_AS(overlap_vector(std::vector<double>(99), g.adjacency().front(), OverlapSide::First, 10), Error);
}
