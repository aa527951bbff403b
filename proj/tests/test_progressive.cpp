#include <doctest.h>

#include <cmath>
#include <vector>

#include "anybcq/progressive.hpp"
#include "oracles.hpp"

using namespace anybcq;

namespace {

QuantConfig sym(std::size_t cycles = 20) { return {128, QuantMode::kSymmetric, cycles}; }

std::vector<int> row_codes(const BitPlaneSet& b, std::size_t plane) {
  std::vector<int> out;
  for (std::size_t k = 0; k < b.cols(); ++k) out.push_back(b.code(plane, 0, k));
  return out;
}

std::vector<std::uint32_t> plane_copy(const BitPlaneSet& b, std::size_t plane) {
  const auto words = b.plane_words(plane);
  return {words.begin(), words.end()};
}

}  // namespace

TEST_CASE("progressive trace on a four-weight row") {
  const WeightMatrix w(1, 4, {3, 1, -1, -3});
  const auto model = build_multiprecision(w, 1, 2, sym(1));
  REQUIRE(model.min_precision() == 1);
  REQUIRE(model.max_precision() == 2);
  CHECK(model.scale_set(1).alpha(0, 0, 0) == 2.0f);
  CHECK(row_codes(model.bitplanes(), 0) == std::vector<int>{1, 1, -1, -1});
  CHECK(row_codes(model.bitplanes(), 1) == std::vector<int>{1, -1, 1, -1});
  CHECK(model.scale_set(2).alpha(0, 0, 0) == 2.0f);
  CHECK(model.scale_set(2).alpha(1, 0, 0) == 1.0f);
  CHECK(dequantize(model.view(2)) == w);
  CHECK(dequantize(model.view(1)) == WeightMatrix(1, 4, {2, 2, -2, -2}));
}

TEST_CASE("a one-precision range is alternate_fit wrapped in a model") {
  const auto w = random_gaussian(32, 256, 9);
  for (auto mode : {QuantMode::kSymmetric, QuantMode::kAsymmetric}) {
    const QuantConfig cfg{128, mode, 5};
    const auto model = build_multiprecision(w, 2, 2, cfg);
    const auto qm = alternate_fit(w, 2, cfg);
    CHECK(model.bitplanes() == qm.bitplanes);
    CHECK(model.scale_set(2) == qm.scales);
    CHECK(model.scale_sets().size() == 1);
  }
}

TEST_CASE("error is non-increasing in precision") {
  const auto w = random_gaussian(256, 256, 13);
  for (auto mode : {QuantMode::kSymmetric, QuantMode::kAsymmetric}) {
    const auto model = build_multiprecision(w, 2, 4, QuantConfig{128, mode, 20});
    const double e2 = relative_reconstruction_error(w, model.view(2));
    const double e3 = relative_reconstruction_error(w, model.view(3));
    const double e4 = relative_reconstruction_error(w, model.view(4));
    CHECK(e3 <= e2);
    CHECK(e4 <= e3);
    CHECK(e4 < e2);
  }
}

TEST_CASE("an expansion step never raises the error") {
  const auto w = random_gaussian(128, 128, 14);
  const auto base = build_multiprecision(w, 2, 2, sym());
  const auto grown = expand_step(w, base, 3);
  CHECK(reconstruction_error(w, grown.view(3)) <= reconstruction_error(w, base.view(2)));
  // Earlier scale sets are carried over untouched.
  CHECK(grown.scale_set(2) == base.scale_set(2));
}

TEST_CASE("zero residual gives an all-plus plane with a zero scale") {
  const WeightMatrix w(1, 4, {3, 1, -1, -3});
  const auto base = build_multiprecision(w, 2, 2, sym());
  REQUIRE(reconstruction_error(w, base.view(2)) == 0.0);
  const auto grown = expand_step(w, base, 3);
  CHECK(row_codes(grown.bitplanes(), 2) == std::vector<int>{1, 1, 1, 1});
  CHECK(std::abs(grown.scale_set(3).alpha(2, 0, 0)) < 1e-6f);
  CHECK(reconstruction_error(w, grown.view(3)) < 1e-10);
}

TEST_CASE("expansion leaves earlier planes byte-identical and frozen") {
  const auto w = random_gaussian(64, 200, 15);
  auto model = build_multiprecision(w, 2, 2, QuantConfig{64, QuantMode::kAsymmetric, 4});
  for (std::size_t p = 3; p <= 5; ++p) {
    std::vector<std::vector<std::uint32_t>> before;
    for (std::size_t i = 0; i + 1 < p; ++i) before.push_back(plane_copy(model.bitplanes(), i));
    model = expand_step(w, model, p);
    for (std::size_t i = 0; i + 1 < p; ++i) CHECK(plane_copy(model.bitplanes(), i) == before[i]);
  }
  CHECK(model.bitplanes().frozen_planes() == 5);
  BitPlaneSet planes = model.bitplanes();
  CHECK_THROWS_AS(planes.set_code(0, 0, 0, 1), std::logic_error);
  CHECK_THROWS_AS(planes.set_code(4, 0, 0, 1), std::logic_error);
}

TEST_CASE("precision views match the dense oracle") {
  const auto w = random_gaussian(16, 300, 16);
  const auto model = build_multiprecision(w, 1, 4, QuantConfig{128, QuantMode::kAsymmetric, 3});
  for (std::size_t p = 1; p <= 4; ++p) {
    const auto view = precision_view(model, p);
    const auto ref = oracle::dense_dequant(model.bitplanes(), model.scale_set(p), 128, p);
    const auto got = dequantize(view);
    for (std::size_t i = 0; i < ref.size(); ++i) REQUIRE(got.data()[i] == static_cast<float>(ref[i]));
  }
}

TEST_CASE("changing one scale set leaves every other precision alone") {
  const auto w = random_gaussian(32, 256, 17);
  auto model = build_multiprecision(w, 2, 4, QuantConfig{128, QuantMode::kSymmetric, 3});
  const auto d2 = dequantize(model.view(2));
  const auto d4 = dequantize(model.view(4));
  ScaleTensor changed = model.scale_set(3);
  for (auto& a : changed.alphas()) a *= 1.5f;
  model.set_scale_set(3, changed);
  CHECK(dequantize(model.view(2)) == d2);
  CHECK(dequantize(model.view(4)) == d4);
  CHECK(model.scale_set(3) == changed);
  CHECK_THROWS_AS(model.set_scale_set(3, ScaleTensor(2, 32, 2, false)), Error);
}

TEST_CASE("precision and range errors") {
  const auto w = random_gaussian(8, 64, 18);
  const auto model = build_multiprecision(w, 2, 3, sym(2));
  CHECK_THROWS_AS((void)model.view(1), Error);
  CHECK_THROWS_AS((void)model.view(4), Error);
  CHECK_THROWS_AS((void)model.scale_set(0), Error);
  CHECK_THROWS_AS(build_multiprecision(w, 4, 2, sym()), Error);
  CHECK_THROWS_AS(build_multiprecision(w, 0, 2, sym()), Error);
  CHECK_THROWS_AS(expand_step(w, model, 5), Error);
  CHECK_THROWS_AS(expand_step(random_gaussian(8, 32, 1), model, 4), Error);
}
