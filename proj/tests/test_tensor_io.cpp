#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

#include "anybcq/tensor_io.hpp"
#include "test_util.hpp"

using namespace anybcq;
using anybcq::testing::TempPath;

namespace {

std::vector<char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ErrorCode load_error(const std::filesystem::path& p) {
  try {
    (void)load_matrix(p);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("load_matrix accepted a bad file");
  return ErrorCode::kIo;
}

}  // namespace

TEST_CASE("FMAT round trip of a 2x2 matrix") {
  TempPath tmp(".fmat");
  const WeightMatrix m(2, 2, {1, 2, 3, 4});
  save_matrix(m, tmp.path());
  const auto loaded = load_matrix(tmp.path());
  CHECK(loaded.rows() == 2);
  CHECK(loaded.cols() == 2);
  CHECK(loaded == m);
}

TEST_CASE("FMAT layout is a 28-byte header followed by the payload") {
  TempPath tmp(".fmat");
  save_matrix(WeightMatrix(1, 1, {0.5f}), tmp.path());
  const auto bytes = read_bytes(tmp.path());
  REQUIRE(bytes.size() == kFmatHeaderBytes + 4);
  CHECK(std::memcmp(bytes.data(), "FMAT", 4) == 0);
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + 4, 4);
  CHECK(version == 1);
  CHECK(bytes[8] == 0);  // dtype real32
  CHECK(bytes[9] == 0);
  CHECK(bytes[10] == 0);
  CHECK(bytes[11] == 0);
  std::uint64_t rows, cols;
  std::memcpy(&rows, bytes.data() + 12, 8);
  std::memcpy(&cols, bytes.data() + 20, 8);
  CHECK(rows == 1);
  CHECK(cols == 1);
  float v;
  std::memcpy(&v, bytes.data() + 28, 4);
  CHECK(v == 0.5f);
  CHECK(load_matrix(tmp.path()) == WeightMatrix(1, 1, {0.5f}));
}

TEST_CASE("FMAT round trip preserves every bit for random shapes") {
  Xoshiro256 rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t rows = 1 + rng.next() % 17;
    const std::size_t cols = 1 + rng.next() % 33;
    std::vector<float> data(rows * cols);
    for (auto& v : data) v = std::bit_cast<float>(static_cast<std::uint32_t>(rng.next()) & 0xBF7FFFFFu);
    const WeightMatrix m(rows, cols, data);
    TempPath tmp(".fmat");
    save_matrix(m, tmp.path());
    const auto back = load_matrix(tmp.path());
    REQUIRE(back.size() == m.size());
    CHECK(std::memcmp(back.data().data(), m.data().data(), m.size() * 4) == 0);
  }
}

TEST_CASE("FMAT rejects malformed files with distinct errors") {
  TempPath tmp(".fmat");
  save_matrix(WeightMatrix(2, 2, {1, 2, 3, 4}), tmp.path());
  const auto good = read_bytes(tmp.path());

  SUBCASE("bad magic") {
    auto bytes = good;
    std::memcpy(bytes.data(), "XMAT", 4);
    write_bytes(tmp.path(), bytes);
    CHECK(load_error(tmp.path()) == ErrorCode::kBadMagic);
  }
  SUBCASE("truncated payload") {
    auto bytes = good;
    bytes.resize(bytes.size() - 4);
    write_bytes(tmp.path(), bytes);
    CHECK(load_error(tmp.path()) == ErrorCode::kTruncated);
  }
  SUBCASE("truncated header") {
    auto bytes = good;
    bytes.resize(10);
    write_bytes(tmp.path(), bytes);
    CHECK(load_error(tmp.path()) == ErrorCode::kTruncated);
  }
  SUBCASE("unsupported dtype") {
    auto bytes = good;
    bytes[8] = 1;
    write_bytes(tmp.path(), bytes);
    CHECK(load_error(tmp.path()) == ErrorCode::kUnsupportedDtype);
  }
  SUBCASE("non-finite value") {
    auto bytes = good;
    const float nan = std::nanf("");
    std::memcpy(bytes.data() + kFmatHeaderBytes + 4, &nan, 4);
    write_bytes(tmp.path(), bytes);
    CHECK(load_error(tmp.path()) == ErrorCode::kNonFinite);
  }
  SUBCASE("missing file") {
    CHECK(load_error(tmp.path().string() + ".missing") == ErrorCode::kIo);
  }
}

TEST_CASE("saving to an unwritable location is an I/O error") {
  try {
    save_matrix(WeightMatrix(1, 1, {1.0f}), "/nonexistent-dir/for/sure/m.fmat");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIo);
  }
}

TEST_CASE("xoshiro256** stream matches the reference algorithm") {
  // Reference values from an independent implementation of splitmix64
  // seeding and xoshiro256**.
  Xoshiro256 rng(7);
  CHECK(rng.next() == 0xb358faf74ef9765aULL);
  CHECK(rng.next() == 0x475c3d964f482cd2ULL);
  CHECK(rng.next() == 0xd6f1d349952c7996ULL);
  CHECK(rng.next() == 0xfb2938731e807240ULL);
}

TEST_CASE("random_gaussian is a pure function of shape and seed") {
  CHECK(random_gaussian(4, 4, 7) == random_gaussian(4, 4, 7));
  CHECK_FALSE(random_gaussian(4, 4, 7) == random_gaussian(4, 4, 8));
  CHECK_THROWS_AS(random_gaussian(0, 4, 1), Error);
  CHECK_THROWS_AS(random_gaussian(4, 0, 1), Error);
}

TEST_CASE("random_gaussian has standard-normal moments") {
  const auto w = random_gaussian(1024, 1024, 1);
  double sum = 0.0;
  for (float v : w.data()) sum += v;
  const double mean = sum / static_cast<double>(w.size());
  double sq = 0.0;
  for (float v : w.data()) sq += (v - mean) * (v - mean);
  const double var = sq / static_cast<double>(w.size() - 1);
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}
