#include "anybcq/tensor_io.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "byte_io.hpp"

namespace anybcq {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kTruncated: return "Truncated";
    case ErrorCode::kUnsupportedDtype: return "UnsupportedDtype";
    case ErrorCode::kVersionMismatch: return "VersionMismatch";
    case ErrorCode::kChecksum: return "Checksum";
    case ErrorCode::kCorrupt: return "Corrupt";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kNumeric: return "Numeric";
  }
  return "Unknown";
}

namespace detail {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  require(!in.bad(), ErrorCode::kIo, "read failed: " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot open for writing " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  out.flush();
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed: " + path.string());
}

}  // namespace detail

namespace {

constexpr char kFmatMagic[4] = {'F', 'M', 'A', 'T'};
constexpr std::uint8_t kDtypeReal32 = 0;

struct RawMatrix {
  std::size_t rows;
  std::size_t cols;
  std::vector<float> data;
};

RawMatrix read_fmat(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  detail::ByteReader in(bytes, ErrorCode::kTruncated);

  char magic[4];
  in.get_bytes(magic, 4);
  require(std::memcmp(magic, kFmatMagic, 4) == 0, ErrorCode::kBadMagic,
          path.string() + ": not an FMAT file");
  const auto version = in.get<std::uint32_t>();
  require(version == kFmatVersion, ErrorCode::kVersionMismatch,
          path.string() + ": unsupported FMAT version " + std::to_string(version));
  const auto dtype = in.get<std::uint8_t>();
  require(dtype == kDtypeReal32, ErrorCode::kUnsupportedDtype,
          path.string() + ": unsupported dtype " + std::to_string(dtype));
  std::uint8_t reserved[3];
  in.get_bytes(reserved, 3);
  const auto rows = in.get<std::uint64_t>();
  const auto cols = in.get<std::uint64_t>();
  require(rows >= 1 && cols >= 1, ErrorCode::kCorrupt, path.string() + ": zero dimension");
  require(cols <= (in.remaining() / sizeof(float)) / rows, ErrorCode::kTruncated,
          path.string() + ": payload shorter than rows*cols values");

  RawMatrix m{rows, cols, std::vector<float>(rows * cols)};
  in.get_span(std::span<float>(m.data));
  require(in.remaining() == 0, ErrorCode::kCorrupt, path.string() + ": trailing bytes");
  require(all_finite(m.data), ErrorCode::kNonFinite, path.string() + ": non-finite value");
  return m;
}

void write_fmat(std::size_t rows, std::size_t cols, std::span<const float> data,
                const std::filesystem::path& path) {
  detail::ByteWriter out;
  out.put_bytes(kFmatMagic, 4);
  out.put<std::uint32_t>(kFmatVersion);
  out.put<std::uint8_t>(kDtypeReal32);
  const std::uint8_t reserved[3] = {0, 0, 0};
  out.put_bytes(reserved, 3);
  out.put<std::uint64_t>(rows);
  out.put<std::uint64_t>(cols);
  out.put_span(data);
  detail::write_file(path, out.bytes());
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

template <class M>
M gaussian_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  require(rows >= 1 && cols >= 1, ErrorCode::kInvalidArgument,
          "random matrix dimensions must be >= 1");
  Xoshiro256 rng(seed);
  std::vector<float> data(rows * cols);
  for (auto& v : data) v = static_cast<float>(rng.normal());
  return M(rows, cols, std::move(data));
}

}  // namespace

bool all_finite(std::span<const float> values) {
  for (float v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

WeightMatrix load_matrix(const std::filesystem::path& path) {
  auto raw = read_fmat(path);
  return WeightMatrix(raw.rows, raw.cols, std::move(raw.data));
}

ActivationBatch load_activations(const std::filesystem::path& path) {
  auto raw = read_fmat(path);
  return ActivationBatch(raw.rows, raw.cols, std::move(raw.data));
}

void save_matrix(const WeightMatrix& m, const std::filesystem::path& path) {
  write_fmat(m.rows(), m.cols(), m.data(), path);
}

void save_activations(const ActivationBatch& x, const std::filesystem::path& path) {
  write_fmat(x.rows(), x.cols(), x.data(), path);
}

Xoshiro256::Xoshiro256(std::uint64_t seed) {
  std::uint64_t state = seed;
  for (auto& s : s_) s = splitmix64(state);
}

std::uint64_t Xoshiro256::next() {
  const std::uint64_t result = std::rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = std::rotl(s_[3], 45);
  return result;
}

double Xoshiro256::uniform() {
  return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

double Xoshiro256::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // 1 - u lies in (0, 1], keeping the logarithm finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(theta);
  has_spare_ = true;
  return radius * std::cos(theta);
}

WeightMatrix random_gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  return gaussian_matrix<WeightMatrix>(rows, cols, seed);
}

ActivationBatch random_activations(std::size_t samples, std::size_t cols, std::uint64_t seed) {
  return gaussian_matrix<ActivationBatch>(samples, cols, seed);
}

}  // namespace anybcq
