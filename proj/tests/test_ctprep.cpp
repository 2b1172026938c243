#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "sdh/ctprep.hpp"
#include "sdh/rng.hpp"

using namespace sdh;
using namespace sdh::ctprep;
using dataio::Volume;

TEST_CASE("rescale_to_hu is the affine map") {
  Volume raw = Volume::make_f32(1, 1, 3);
  raw.f32 = {1000.0f, 0.0f, 500.0f};
  Volume hu = rescale_to_hu(raw, {1.0, -1024.0});
  CHECK(hu.f32[0] == doctest::Approx(-24.0));
  CHECK(hu.f32[1] == doctest::Approx(-1024.0));

  Volume id = rescale_to_hu(raw, {1.0, 0.0});
  CHECK(id.f32 == raw.f32);

  Volume two = rescale_to_hu(raw, {2.0, -1024.0});
  CHECK(two.f32[1] == doctest::Approx(-1024.0));

  CHECK_THROWS_AS(rescale_to_hu(raw, {0.0, 0.0}), std::runtime_error);
}

TEST_CASE("window_normalize midpoint, clamps, edge") {
  Volume hu = Volume::make_f32(1, 1, 4);
  hu.f32 = {65.0f, 200.0f, -10.0f, 130.0f};
  Volume v = window_normalize(hu, {});
  CHECK(v.f32[0] == doctest::Approx(0.5));
  CHECK(v.f32[1] == doctest::Approx(1.0));
  CHECK(v.f32[2] == doctest::Approx(0.0));
  CHECK(v.f32[3] == doctest::Approx(1.0));
  CHECK_THROWS_AS(window_normalize(hu, {100.0, 90.0, 95.0}), std::runtime_error);
}

TEST_CASE("window_normalize properties: range and idempotence") {
  Rng rng(5);
  Volume hu = Volume::make_f32(3, 8, 8);
  for (auto& x : hu.f32) x = static_cast<float>(rng.uniform(-2000, 3000));
  Volume v = window_normalize(hu, {});
  for (float x : v.f32) {
    CHECK(x >= 0.0f);
    CHECK(x <= 1.0f);
  }
  // windowing [0,1] output again with a [0,1] window changes nothing
  Volume v2 = window_normalize(v, {0.0, 1.0, 0.5});
  for (size_t i = 0; i < v.f32.size(); ++i)
    CHECK(v2.f32[i] == doctest::Approx(v.f32[i]).epsilon(1e-6));
}

TEST_CASE("connected_components 3d: cubes and full block") {
  Volume m = Volume::make_u8(3, 3, 3);
  m.u8[m.index(0, 0, 0)] = 1;
  m.u8[m.index(2, 2, 2)] = 1;
  auto cc = connected_components_3d(m, 26);
  CHECK(cc.count == 2);
  CHECK(cc.sizes == std::vector<int64_t>{1, 1});

  Volume full = Volume::make_u8(3, 3, 3, 1);
  auto cc2 = connected_components_3d(full, 26);
  CHECK(cc2.count == 1);
  CHECK(cc2.sizes[0] == 27);

  Volume empty = Volume::make_u8(2, 2, 2, 0);
  CHECK(connected_components_3d(empty).count == 0);
}

TEST_CASE("connected_components 2d: L-shape under 4-connectivity") {
  // flood-fill oracle agrees: one component
  std::vector<uint8_t> img(25, 0);
  for (int y = 0; y < 4; ++y) img[static_cast<size_t>(y * 5 + 1)] = 1;
  for (int x = 1; x < 4; ++x) img[static_cast<size_t>(3 * 5 + x)] = 1;
  auto cc = connected_components_2d(img.data(), 5, 5, 4);
  CHECK(cc.count == 1);
  CHECK(cc.sizes[0] == 6);
}

TEST_CASE("connected_components: sizes sum to foreground count") {
  Rng rng(9);
  Volume m = Volume::make_u8(4, 12, 12);
  int64_t fg = 0;
  for (auto& x : m.u8) {
    x = rng.bernoulli(0.3) ? 1 : 0;
    fg += x;
  }
  auto cc = connected_components_3d(m, 6);
  int64_t total = 0;
  for (int64_t s : cc.sizes) total += s;
  CHECK(total == fg);
  // sizes descending
  for (size_t i = 1; i < cc.sizes.size(); ++i) CHECK(cc.sizes[i - 1] >= cc.sizes[i]);
}

TEST_CASE("skull_mask keeps only the largest bone component") {
  Volume hu = Volume::make_f32(3, 16, 16, 0.0f);
  // ring-ish large blob on slice 1
  for (int y = 2; y < 14; ++y)
    for (int x = 2; x < 14; ++x)
      if (y <= 3 || y >= 12 || x <= 3 || x >= 12)
        hu.f32[hu.index(1, y, x)] = 800.0f;
  // small separate blob
  hu.f32[hu.index(0, 0, 0)] = 900.0f;
  Volume sk = skull_mask(hu, 300.0);
  CHECK(sk.u8[sk.index(0, 0, 0)] == 0);  // small blob dropped
  CHECK(sk.u8[sk.index(1, 2, 2)] == 1);

  Volume flat = Volume::make_f32(2, 4, 4, 0.0f);
  CHECK_THROWS_WITH_AS(skull_mask(flat, 300.0), doctest::Contains("threshold"),
                       std::runtime_error);
}

TEST_CASE("intracranial_mask keeps the interior component per slice") {
  // slice with a square ring: complement = exterior (largest) + interior
  Volume hu = Volume::make_f32(2, 16, 16, 0.0f);
  for (int y = 4; y < 12; ++y)
    for (int x = 4; x < 12; ++x)
      if (y == 4 || y == 11 || x == 4 || x == 11)
        hu.f32[hu.index(0, y, x)] = 800.0f;
  // slice 1 fully bone
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) hu.f32[hu.index(1, y, x)] = 800.0f;

  Volume sk = skull_mask(hu, 300.0);
  Volume brain = intracranial_mask(hu, sk);
  CHECK(brain.u8[brain.index(0, 7, 7)] == 1);   // interior kept
  CHECK(brain.u8[brain.index(0, 0, 0)] == 0);   // exterior dropped
  CHECK(brain.u8[brain.index(0, 4, 4)] == 0);   // bone dropped
  int64_t slice1 = 0;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) slice1 += brain.u8[brain.index(1, y, x)];
  CHECK(slice1 == 0);  // fully-bone slice has no interior
}

TEST_CASE("standardize_slices index selection") {
  // n == target: identity
  auto id = standardize_slice_indices(15, 15);
  for (int64_t i = 0; i < 15; ++i) CHECK(id[static_cast<size_t>(i)] == i);

  // n = 29: round(i*28/14) = 2i
  auto down = standardize_slice_indices(29, 15);
  for (int64_t i = 0; i < 15; ++i) CHECK(down[static_cast<size_t>(i)] == 2 * i);

  // n = 13: central duplication at c=6 then 5
  auto up = standardize_slice_indices(13, 15);
  std::vector<int64_t> expected = {0, 1, 2, 3, 4, 5, 5, 6, 6, 7, 8, 9, 10, 11, 12};
  CHECK(up == expected);
}

TEST_CASE("standardize_slices always yields 15 slices; ends preserved") {
  Rng rng(2);
  for (int64_t n = 1; n <= 200; ++n) {
    auto idx = standardize_slice_indices(n, 15);
    REQUIRE(idx.size() == 15);
    for (size_t i = 1; i < idx.size(); ++i) CHECK(idx[i] >= idx[i - 1]);
    if (n > 15) {
      CHECK(idx.front() == 0);
      CHECK(idx.back() == n - 1);
    }
  }
  Volume v = Volume::make_f32(29, 4, 4);
  for (size_t i = 0; i < v.f32.size(); ++i)
    v.f32[i] = static_cast<float>(i / 16);  // slice index as value
  Volume s = standardize_slices(v, 15);
  CHECK(s.depth() == 15);
  CHECK(s.f32[0] == 0.0f);
  CHECK(s.f32[static_cast<size_t>(s.index(14, 0, 0))] == 28.0f);
  CHECK_THROWS_AS(standardize_slice_indices(0, 15), std::runtime_error);
}

TEST_CASE("downsample_axial: constant, ramp, identity") {
  Volume c = Volume::make_f32(2, 8, 8, 3.5f);
  Volume cd = downsample_axial(c, 4);
  for (float x : cd.f32) CHECK(x == doctest::Approx(3.5f));

  // affine field is reproduced exactly by bilinear resampling
  Volume ramp = Volume::make_f32(1, 512, 512);
  for (int y = 0; y < 512; ++y)
    for (int x = 0; x < 512; ++x)
      ramp.f32[static_cast<size_t>(y * 512 + x)] =
          0.25f * static_cast<float>(y) - 0.5f * static_cast<float>(x) + 3.0f;
  Volume half = downsample_axial(ramp, 256);
  const double scale = 511.0 / 255.0;
  for (int y = 0; y < 256; y += 37)
    for (int x = 0; x < 256; x += 41) {
      double fy = y * scale, fx = x * scale;
      double expect = 0.25 * fy - 0.5 * fx + 3.0;
      CHECK(half.f32[static_cast<size_t>(y * 256 + x)] ==
            doctest::Approx(expect).epsilon(1e-6));
    }

  Volume same = downsample_axial(cd, 4);
  CHECK(same.f32 == cd.f32);

  Volume rect = Volume::make_f32(1, 8, 6);
  CHECK_THROWS_AS(downsample_axial(rect, 4), std::runtime_error);
}

TEST_CASE("downsample keeps values within slice min/max") {
  Rng rng(8);
  Volume v = Volume::make_f32(1, 64, 64);
  float lo = 1e9f, hi = -1e9f;
  for (auto& x : v.f32) {
    x = static_cast<float>(rng.uniform(-5, 5));
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  Volume d = downsample_axial(v, 32);
  for (float x : d.f32) {
    CHECK(x >= lo - 1e-5f);
    CHECK(x <= hi + 1e-5f);
  }
}
