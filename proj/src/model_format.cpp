#include "anybcq/model_format.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "byte_io.hpp"

namespace anybcq {

namespace {

constexpr char kAbcqMagic[4] = {'A', 'B', 'C', 'Q'};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in slices.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
    crc = crc32(crc, bytes.data() + pos, static_cast<uInt>(n));
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

const char* mode_name(QuantMode mode) {
  return mode == QuantMode::kAsymmetric ? "asymmetric" : "symmetric";
}

struct Geometry {
  std::uint64_t rows;
  std::uint64_t cols;
  std::uint64_t groups;
  std::uint64_t words_per_row;
  std::size_t min_precision;
  std::size_t max_precision;
  bool asymmetric;
  std::size_t scale_width;

  std::uint64_t plane_bytes() const { return rows * words_per_row * 4 * max_precision; }
  std::uint64_t scale_bytes() const {
    std::uint64_t values = 0;
    for (std::size_t p = min_precision; p <= max_precision; ++p) {
      values += p * rows * groups;
      if (asymmetric) values += rows * groups;
    }
    return values * scale_width;
  }
};

void put_scales(detail::ByteWriter& out, std::span<const float> values, std::size_t width) {
  if (width == 4) {
    out.put_span(values);
    return;
  }
  for (float v : values) {
    require(std::isfinite(v) && std::abs(v) <= 65504.0f, ErrorCode::kNumeric,
            "scale value does not fit in a 16-bit container");
    out.put<std::uint16_t>(float_to_half(v));
  }
}

void get_scales(detail::ByteReader& in, std::span<float> values, std::size_t width) {
  if (width == 4) {
    in.get_span(values);
    return;
  }
  for (float& v : values) v = half_to_float(in.get<std::uint16_t>());
}

}  // namespace

std::uint16_t float_to_half(float value) {
  const std::uint32_t bits = std::bit_cast<std::uint32_t>(value);
  const std::uint32_t sign = (bits >> 16) & 0x8000u;
  const std::uint32_t abs = bits & 0x7FFFFFFFu;
  if (abs >= 0x7F800000u) {  // inf / nan
    return static_cast<std::uint16_t>(sign | 0x7C00u | (abs > 0x7F800000u ? 0x200u : 0u));
  }
  if (abs >= 0x477FF000u) return static_cast<std::uint16_t>(sign | 0x7C00u);  // rounds to inf
  if (abs < 0x38800000u) {
    // Half subnormal (or zero): value = mantissa * 2^-24.
    if (abs < 0x33000000u) return static_cast<std::uint16_t>(sign);
    const std::uint32_t exp = abs >> 23;
    const std::uint32_t mant = (abs & 0x7FFFFFu) | 0x800000u;
    const std::uint32_t shift = 126 - exp;  // 14..24
    std::uint32_t half = mant >> shift;
    const std::uint32_t rem = mant & ((1u << shift) - 1);
    const std::uint32_t halfway = 1u << (shift - 1);
    if (rem > halfway || (rem == halfway && (half & 1u))) ++half;
    return static_cast<std::uint16_t>(sign | half);
  }
  std::uint32_t half = ((abs >> 13) - (112u << 10));
  const std::uint32_t rem = abs & 0x1FFFu;
  if (rem > 0x1000u || (rem == 0x1000u && (half & 1u))) ++half;
  return static_cast<std::uint16_t>(sign | half);
}

float half_to_float(std::uint16_t h) {
  const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
  const std::uint32_t exp = (h >> 10) & 0x1Fu;
  const std::uint32_t mant = h & 0x3FFu;
  if (exp == 0) {
    const float v = std::ldexp(static_cast<float>(mant), -24);
    return sign ? -v : v;
  }
  if (exp == 31) return std::bit_cast<float>(sign | 0x7F800000u | (mant << 13));
  return std::bit_cast<float>(sign | ((exp + 112) << 23) | (mant << 13));
}

std::vector<std::uint8_t> encode_model(const MultiPrecisionModel& model,
                                       const SerializeOptions& opts) {
  require(opts.scale_width == 2 || opts.scale_width == 4, ErrorCode::kInvalidArgument,
          "scale width must be 2 or 4 bytes");
  const auto& cfg = model.config();
  nlohmann::ordered_json header = {
      {"rows", model.rows()},
      {"cols", model.cols()},
      {"group_size", cfg.group_size},
      {"mode", mode_name(cfg.mode)},
      {"min_precision", model.min_precision()},
      {"max_precision", model.max_precision()},
      {"scale_width", opts.scale_width},
      {"cycles", cfg.cycles},
      {"created_by", "anybcq"},
      {"metadata", opts.metadata},
  };
  const std::string header_text = header.dump();

  detail::ByteWriter out;
  out.put_bytes(kAbcqMagic, 4);
  out.put<std::uint32_t>(kAbcqVersion);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(header_text.size()));
  out.put_bytes(header_text.data(), header_text.size());
  out.put_span(model.bitplanes().words());
  for (const auto& scales : model.scale_sets()) put_scales(out, scales.alphas(), opts.scale_width);
  if (cfg.asymmetric()) {
    for (const auto& scales : model.scale_sets()) put_scales(out, scales.offsets(), opts.scale_width);
  }
  out.put<std::uint32_t>(crc32_of(out.bytes()));
  return std::move(out.bytes());
}

MultiPrecisionModel decode_model(std::span<const std::uint8_t> bytes, ContainerInfo* info) {
  require(bytes.size() >= 4, ErrorCode::kTruncated, "container shorter than its magic");
  require(std::memcmp(bytes.data(), kAbcqMagic, 4) == 0, ErrorCode::kBadMagic,
          "not an ABCQ container");
  require(bytes.size() >= 12, ErrorCode::kTruncated, "container header is truncated");

  detail::ByteReader in(bytes, ErrorCode::kTruncated);
  char magic[4];
  in.get_bytes(magic, 4);
  const auto version = in.get<std::uint32_t>();
  require(version == kAbcqVersion, ErrorCode::kVersionMismatch,
          "unsupported ABCQ version " + std::to_string(version));
  const auto header_len = in.get<std::uint32_t>();
  require(header_len <= in.remaining(), ErrorCode::kTruncated, "container header is truncated");

  const bool crc_ok =
      bytes.size() >= 16 &&
      [&] {
        std::uint32_t stored;
        std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
        return stored == crc32_of(bytes.first(bytes.size() - 4));
      }();

  std::string header_text(header_len, '\0');
  in.get_bytes(header_text.data(), header_len);
  Geometry geo{};
  QuantConfig cfg;
  std::map<std::string, std::string> metadata;
  try {
    const auto header = nlohmann::json::parse(header_text);
    geo.rows = header.at("rows").get<std::uint64_t>();
    geo.cols = header.at("cols").get<std::uint64_t>();
    cfg.group_size = header.at("group_size").get<std::size_t>();
    const auto mode = header.at("mode").get<std::string>();
    require(mode == "symmetric" || mode == "asymmetric", ErrorCode::kCorrupt,
            "unknown quantization mode " + mode);
    cfg.mode = mode == "asymmetric" ? QuantMode::kAsymmetric : QuantMode::kSymmetric;
    cfg.cycles = header.value("cycles", std::size_t{0});
    geo.min_precision = header.at("min_precision").get<std::size_t>();
    geo.max_precision = header.at("max_precision").get<std::size_t>();
    geo.scale_width = header.at("scale_width").get<std::size_t>();
    if (header.contains("metadata")) {
      metadata = header.at("metadata").get<std::map<std::string, std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    fail(crc_ok ? ErrorCode::kCorrupt : ErrorCode::kChecksum,
         std::string("malformed container header: ") + e.what());
  } catch (const Error& e) {
    fail(crc_ok ? e.code() : ErrorCode::kChecksum, e.what());
  }
  auto corrupt_unless_crc = [&](bool cond, const std::string& what) {
    if (!cond) fail(crc_ok ? ErrorCode::kCorrupt : ErrorCode::kChecksum, what);
  };
  corrupt_unless_crc(geo.rows >= 1 && geo.cols >= 1 && cfg.group_size >= 1,
                     "container dimensions must be >= 1");
  corrupt_unless_crc(geo.min_precision >= 1 && geo.min_precision <= geo.max_precision &&
                         geo.max_precision <= kMaxPlanes,
                     "container precision range is invalid");
  corrupt_unless_crc(geo.scale_width == 2 || geo.scale_width == 4,
                     "container scale width must be 2 or 4");
  // Reject dimension products that could not possibly fit in the file.
  corrupt_unless_crc(geo.rows <= bytes.size() && geo.cols <= bytes.size() * 8,
                     "container dimensions exceed the file size");
  geo.groups = cfg.groups(geo.cols);
  geo.words_per_row = (geo.cols + 31) / 32;
  geo.asymmetric = cfg.asymmetric();

  const std::uint64_t expected =
      12 + header_len + geo.plane_bytes() + geo.scale_bytes() + 4;
  require(bytes.size() >= expected, ErrorCode::kTruncated,
          "container truncated: " + std::to_string(bytes.size()) + " of " +
              std::to_string(expected) + " bytes");
  if (bytes.size() > expected) {
    // Intact container followed by junk: the CRC sits where the layout says.
    std::uint32_t stored;
    std::memcpy(&stored, bytes.data() + expected - 4, 4);
    const bool inner_ok = stored == crc32_of(bytes.first(expected - 4));
    fail(inner_ok ? ErrorCode::kCorrupt : ErrorCode::kChecksum,
         std::to_string(bytes.size() - expected) + " trailing bytes after container");
  }
  require(crc_ok, ErrorCode::kChecksum, "container checksum mismatch");

  BitPlaneSet planes(geo.max_precision, geo.rows, geo.cols);
  in.get_span(planes.mutable_words());
  for (std::size_t p = 0; p < geo.max_precision; ++p) {
    for (std::size_t n = 0; n < geo.rows; ++n) {
      const auto words = planes.row_words(p, n);
      if (geo.cols % 32 != 0) {
        require((words.back() >> (geo.cols % 32)) == 0, ErrorCode::kCorrupt,
                "nonzero padding bits in bit-plane");
      }
    }
  }
  std::vector<ScaleTensor> scale_sets;
  for (std::size_t p = geo.min_precision; p <= geo.max_precision; ++p) {
    scale_sets.emplace_back(p, geo.rows, geo.groups, geo.asymmetric);
    get_scales(in, scale_sets.back().alphas(), geo.scale_width);
  }
  if (geo.asymmetric) {
    for (auto& scales : scale_sets) get_scales(in, scales.offsets(), geo.scale_width);
  }
  for (const auto& scales : scale_sets) {
    require(all_finite(scales.alphas()) && all_finite(scales.offsets()), ErrorCode::kNonFinite,
            "container holds non-finite scales");
  }

  if (info != nullptr) {
    info->scale_width = geo.scale_width;
    info->header_bytes = header_len;
    info->file_bytes = bytes.size();
    info->metadata = std::move(metadata);
  }
  return MultiPrecisionModel(std::move(planes), std::move(scale_sets), geo.min_precision, cfg);
}

void serialize(const MultiPrecisionModel& model, const std::filesystem::path& path,
               const SerializeOptions& opts) {
  const auto bytes = encode_model(model, opts);
  detail::write_file(path, bytes);
}

MultiPrecisionModel deserialize(const std::filesystem::path& path, ContainerInfo* info) {
  const auto bytes = detail::read_file(path);
  return decode_model(bytes, info);
}

// ---------------------------------------------------------------------------
// Footprint

FootprintReport footprint(const FootprintQuery& q) {
  require(q.rows >= 1 && q.cols >= 1 && q.group_size >= 1, ErrorCode::kInvalidArgument,
          "footprint dimensions must be >= 1");
  require(q.min_precision >= 1 && q.min_precision <= q.max_precision,
          ErrorCode::kInvalidArgument, "footprint precision range is invalid");
  require(q.scale_width >= 1, ErrorCode::kInvalidArgument, "scale width must be >= 1");

  const std::uint64_t groups = (q.cols + q.group_size - 1) / q.group_size;
  const std::uint64_t plane_bytes = q.rows * ((q.cols + 31) / 32) * 4;
  const std::uint64_t scale_unit = q.rows * groups * q.scale_width;
  const bool asym = q.mode == QuantMode::kAsymmetric;

  FootprintReport report;
  report.multi_model.label = "Multi-model";
  report.shared.label = "Shared";
  for (std::size_t p = q.min_precision; p <= q.max_precision; ++p) {
    FootprintRow row;
    row.label = "BCQ" + std::to_string(p);
    row.scale_bytes = scale_unit * p + (asym ? scale_unit : 0);
    row.binary_bytes = plane_bytes * p;
    row.total_bytes = row.scale_bytes + row.binary_bytes;
    report.multi_model.scale_bytes += row.scale_bytes;
    report.multi_model.binary_bytes += row.binary_bytes;
    report.shared.scale_bytes += row.scale_bytes;
    report.per_precision.push_back(row);
  }
  report.multi_model.total_bytes = report.multi_model.scale_bytes + report.multi_model.binary_bytes;
  report.shared.binary_bytes = report.per_precision.back().binary_bytes;
  report.shared.total_bytes = report.shared.scale_bytes + report.shared.binary_bytes;
  return report;
}

FootprintQuery footprint_query(const MultiPrecisionModel& model, std::size_t scale_width) {
  FootprintQuery q;
  q.rows = model.rows();
  q.cols = model.cols();
  q.group_size = model.config().group_size;
  q.min_precision = model.min_precision();
  q.max_precision = model.max_precision();
  q.mode = model.config().mode;
  q.scale_width = scale_width;
  return q;
}

namespace {

std::vector<const FootprintRow*> all_rows(const FootprintReport& report) {
  std::vector<const FootprintRow*> rows;
  for (const auto& row : report.per_precision) rows.push_back(&row);
  rows.push_back(&report.multi_model);
  rows.push_back(&report.shared);
  return rows;
}

}  // namespace

std::string format_footprint_table(const FootprintReport& report) {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof line, "%-12s %14s %14s %14s\n", "Bit", "Scale (GB)", "Binary (GB)",
                "Total (GB)");
  out << line;
  for (const FootprintRow* row : all_rows(report)) {
    if (row == &report.multi_model) out << std::string(57, '-') << '\n';
    std::snprintf(line, sizeof line, "%-12s %14.6f %14.6f %14.6f\n", row->label.c_str(),
                  row->scale_bytes / 1e9, row->binary_bytes / 1e9, row->total_bytes / 1e9);
    out << line;
  }
  return out.str();
}

std::string format_footprint_kv(const FootprintReport& report) {
  std::ostringstream out;
  for (const FootprintRow* row : all_rows(report)) {
    out << row->label << ".scale_bytes=" << row->scale_bytes << '\n'
        << row->label << ".binary_bytes=" << row->binary_bytes << '\n'
        << row->label << ".total_bytes=" << row->total_bytes << '\n';
  }
  return out.str();
}

std::string format_footprint_csv(const FootprintReport& report) {
  std::ostringstream out;
  out << "label,scale_bytes,binary_bytes,total_bytes\n";
  for (const FootprintRow* row : all_rows(report)) {
    out << row->label << ',' << row->scale_bytes << ',' << row->binary_bytes << ','
        << row->total_bytes << '\n';
  }
  return out.str();
}

}  // namespace anybcq
