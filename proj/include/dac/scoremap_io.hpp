#pragma once

// Score-map interchange.
//
//   npy      NumPy .npy container. Written as version 1.0, '<f4', C order,
//            shape (height, width). Reading also accepts '<f8', integer
//            dtypes and versions 2.0/3.0.
//   raw_f32  uint32 height, uint32 width, then height*width float32 values,
//            all little-endian, row-major.
//   pgm16    binary PGM (P5) with maxval 65535 (big-endian samples, as the
//            PGM format requires). value = value_offset + value_scale * raw.
//
// Every map has a JSON sidecar next to it, named "<file>.json", with the
// fields {height, width, scale_k, detector_name, value_offset, value_scale}
// and an optional boolean "pre_softmax". A missing sidecar means scale_k = 1,
// offset 0 and scale 1.

#include "dac/scoremap.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dac {

enum class ScoreMapFormat { npy, pgm16, raw_f32 };

inline ScoreMapFormat parse_scoremap_format(std::string_view s) {
  if (s == "npy") return ScoreMapFormat::npy;
  if (s == "pgm16") return ScoreMapFormat::pgm16;
  if (s == "raw_f32") return ScoreMapFormat::raw_f32;
  throw std::invalid_argument("unknown score map format '" + std::string(s) +
                              "' (expected npy, pgm16 or raw_f32)");
}

inline std::string to_string(ScoreMapFormat f) {
  switch (f) {
    case ScoreMapFormat::npy: return "npy";
    case ScoreMapFormat::pgm16: return "pgm16";
    case ScoreMapFormat::raw_f32: return "raw_f32";
  }
  return "?";
}

/// Guess the format from a file extension (.npy, .pgm, anything else raw_f32).
inline ScoreMapFormat format_from_extension(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".npy") return ScoreMapFormat::npy;
  if (ext == ".pgm") return ScoreMapFormat::pgm16;
  return ScoreMapFormat::raw_f32;
}

struct ScoreMapMeta {
  std::optional<int> height;
  std::optional<int> width;
  double scale_k{1.0};
  std::string detector_name;
  double value_offset{0.0};
  double value_scale{1.0};
  std::optional<bool> pre_softmax;
};

inline std::filesystem::path sidecar_path(const std::filesystem::path& map_path) {
  return std::filesystem::path(map_path.string() + ".json");
}

inline ScoreMapMeta meta_from_json(const nlohmann::json& j) {
  ScoreMapMeta m;
  if (j.contains("height")) m.height = j.at("height").get<int>();
  if (j.contains("width")) m.width = j.at("width").get<int>();
  m.scale_k = j.value("scale_k", 1.0);
  m.detector_name = j.value("detector_name", std::string{});
  m.value_offset = j.value("value_offset", 0.0);
  m.value_scale = j.value("value_scale", 1.0);
  if (j.contains("pre_softmax")) m.pre_softmax = j.at("pre_softmax").get<bool>();
  return m;
}

inline nlohmann::json meta_to_json(const ScoreMapMeta& m) {
  nlohmann::json j;
  if (m.height) j["height"] = *m.height;
  if (m.width) j["width"] = *m.width;
  j["scale_k"] = m.scale_k;
  j["detector_name"] = m.detector_name;
  j["value_offset"] = m.value_offset;
  j["value_scale"] = m.value_scale;
  if (m.pre_softmax) j["pre_softmax"] = *m.pre_softmax;
  return j;
}

inline std::optional<ScoreMapMeta> read_sidecar(const std::filesystem::path& map_path) {
  const auto p = sidecar_path(map_path);
  if (!std::filesystem::exists(p)) return std::nullopt;
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open sidecar " + p.string());
  try {
    return meta_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed sidecar " + p.string() + ": " + e.what());
  }
}

inline void write_sidecar(const std::filesystem::path& map_path, const ScoreMapMeta& meta) {
  const auto p = sidecar_path(map_path);
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write sidecar " + p.string());
  out << meta_to_json(meta).dump(2) << '\n';
}

namespace detail {

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("I/O error while writing " + p.string());
}

template <typename U>
U load_le(const unsigned char* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
  return v;
}

template <typename U>
void store_le(std::vector<unsigned char>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

inline float load_f32(const unsigned char* p) { return std::bit_cast<float>(load_le<std::uint32_t>(p)); }
inline double load_f64(const unsigned char* p) { return std::bit_cast<double>(load_le<std::uint64_t>(p)); }

}  // namespace detail

/// A dense numeric array read from an .npy file, widened to double.
struct NpyArray {
  std::vector<std::size_t> shape;
  std::vector<double> data;  // C order
};

inline NpyArray parse_npy(const std::vector<unsigned char>& bytes, const std::string& what = "npy") {
  static constexpr std::array<unsigned char, 6> magic{0x93, 'N', 'U', 'M', 'P', 'Y'};
  if (bytes.size() < 10 || !std::equal(magic.begin(), magic.end(), bytes.begin())) {
    throw std::runtime_error(what + ": not an npy file");
  }
  const int major = bytes[6];
  std::size_t header_len = 0;
  std::size_t offset = 0;
  if (major == 1) {
    header_len = detail::load_le<std::uint16_t>(&bytes[8]);
    offset = 10;
  } else if (major == 2 || major == 3) {
    if (bytes.size() < 12) throw std::runtime_error(what + ": truncated header");
    header_len = detail::load_le<std::uint32_t>(&bytes[8]);
    offset = 12;
  } else {
    throw std::runtime_error(what + ": unsupported npy version " + std::to_string(major));
  }
  if (bytes.size() < offset + header_len) throw std::runtime_error(what + ": truncated header");
  const std::string header(bytes.begin() + static_cast<long>(offset),
                           bytes.begin() + static_cast<long>(offset + header_len));
  offset += header_len;

  auto field = [&](const std::string& key) -> std::string {
    const auto k = header.find("'" + key + "'");
    if (k == std::string::npos) throw std::runtime_error(what + ": header lacks '" + key + "'");
    const auto colon = header.find(':', k);
    return header.substr(colon + 1);
  };

  std::string descr = field("descr");
  const auto q1 = descr.find('\'');
  const auto q2 = descr.find('\'', q1 + 1);
  descr = descr.substr(q1 + 1, q2 - q1 - 1);
  const std::string order = field("fortran_order");
  if (order.substr(order.find_first_not_of(" \t"), 4) == "True") {
    throw std::runtime_error(what + ": Fortran-ordered arrays are not supported");
  }
  std::string shape_s = field("shape");
  shape_s = shape_s.substr(shape_s.find('(') + 1, shape_s.find(')') - shape_s.find('(') - 1);

  NpyArray arr;
  std::stringstream ss(shape_s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.find_first_not_of(" \t") == std::string::npos) continue;
    arr.shape.push_back(static_cast<std::size_t>(std::stoull(tok)));
  }
  std::size_t count = 1;
  for (auto d : arr.shape) count *= d;

  std::size_t item = 0;
  char kind = 0;
  if (descr.size() >= 3 && (descr[0] == '<' || descr[0] == '|' || descr[0] == '=')) {
    kind = descr[1];
    item = static_cast<std::size_t>(std::stoul(descr.substr(2)));
  } else {
    throw std::runtime_error(what + ": unsupported dtype '" + descr + "' (little-endian only)");
  }
  if (bytes.size() < offset + count * item) throw std::runtime_error(what + ": truncated payload");

  arr.data.resize(count);
  const unsigned char* p = bytes.data() + offset;
  for (std::size_t i = 0; i < count; ++i, p += item) {
    double v = 0.0;
    if (kind == 'f' && item == 4) v = detail::load_f32(p);
    else if (kind == 'f' && item == 8) v = detail::load_f64(p);
    else if (kind == 'i' && item == 4) v = static_cast<std::int32_t>(detail::load_le<std::uint32_t>(p));
    else if (kind == 'i' && item == 8) v = static_cast<double>(static_cast<std::int64_t>(detail::load_le<std::uint64_t>(p)));
    else if (kind == 'u' && item == 1) v = *p;
    else if (kind == 'u' && item == 2) v = detail::load_le<std::uint16_t>(p);
    else throw std::runtime_error(what + ": unsupported dtype '" + descr + "'");
    arr.data[i] = v;
  }
  return arr;
}

inline NpyArray read_npy(const std::filesystem::path& p) {
  return parse_npy(detail::read_file_bytes(p), p.string());
}

/// Writes a 2-D float32 array in npy version 1.0.
inline std::vector<unsigned char> encode_npy_f32(const Grid& g) {
  std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': (" +
                       std::to_string(g.rows()) + ", " + std::to_string(g.cols()) + "), }";
  // magic(6) + version(2) + len(2) + header + '\n' must be a multiple of 64.
  const std::size_t unpadded = 10 + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header.push_back('\n');

  std::vector<unsigned char> out{0x93, 'N', 'U', 'M', 'P', 'Y', 1, 0};
  detail::store_le<std::uint16_t>(out, static_cast<std::uint16_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  for (Eigen::Index r = 0; r < g.rows(); ++r)
    for (Eigen::Index c = 0; c < g.cols(); ++c)
      detail::store_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(g(r, c))));
  return out;
}

/// Loads an .npy array as a matrix. 1-D arrays become a single column.
inline Grid read_npy_matrix(const std::filesystem::path& p) {
  const NpyArray arr = read_npy(p);
  if (arr.shape.empty() || arr.shape.size() > 2) {
    throw std::runtime_error(p.string() + ": expected a 1-D or 2-D array");
  }
  const auto rows = static_cast<Eigen::Index>(arr.shape[0]);
  const auto cols = static_cast<Eigen::Index>(arr.shape.size() == 2 ? arr.shape[1] : 1);
  Grid g(rows, cols);
  std::copy(arr.data.begin(), arr.data.end(), g.data());
  return g;
}

inline void write_npy_matrix(const std::filesystem::path& p, const Grid& g) {
  detail::write_file_bytes(p, encode_npy_f32(g));
}

namespace detail {

inline Grid decode_raw_f32(const std::vector<unsigned char>& bytes, const std::string& what) {
  if (bytes.size() < 8) throw std::runtime_error(what + ": truncated raw_f32 header");
  const std::uint32_t h = load_le<std::uint32_t>(&bytes[0]);
  const std::uint32_t w = load_le<std::uint32_t>(&bytes[4]);
  const std::size_t n = static_cast<std::size_t>(h) * w;
  if (bytes.size() != 8 + 4 * n) {
    throw std::runtime_error(what + ": raw_f32 payload size does not match " + std::to_string(h) +
                             "x" + std::to_string(w));
  }
  Grid g(h, w);
  for (std::size_t i = 0; i < n; ++i) g.data()[i] = load_f32(&bytes[8 + 4 * i]);
  return g;
}

inline std::vector<unsigned char> encode_raw_f32(const Grid& g) {
  std::vector<unsigned char> out;
  out.reserve(8 + 4 * static_cast<std::size_t>(g.size()));
  store_le<std::uint32_t>(out, static_cast<std::uint32_t>(g.rows()));
  store_le<std::uint32_t>(out, static_cast<std::uint32_t>(g.cols()));
  for (Eigen::Index i = 0; i < g.size(); ++i)
    store_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(g.data()[i])));
  return out;
}

// Reads the next whitespace-delimited PGM header token, skipping comments.
inline std::string pgm_token(const std::vector<unsigned char>& b, std::size_t& pos) {
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(b[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < b.size() && !std::isspace(b[pos])) tok.push_back(static_cast<char>(b[pos++]));
  return tok;
}

inline Grid decode_pgm16(const std::vector<unsigned char>& b, const ScoreMapMeta& meta,
                         const std::string& what) {
  std::size_t pos = 0;
  if (pgm_token(b, pos) != "P5") throw std::runtime_error(what + ": not a binary PGM (P5)");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(pgm_token(b, pos));
    h = std::stoi(pgm_token(b, pos));
    maxval = std::stoi(pgm_token(b, pos));
  } catch (const std::exception&) {
    throw std::runtime_error(what + ": malformed PGM header");
  }
  ++pos;  // single whitespace before the raster
  if (maxval < 256 || maxval > 65535) throw std::runtime_error(what + ": expected a 16-bit PGM");
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (b.size() < pos + 2 * n) throw std::runtime_error(what + ": truncated PGM raster");
  Grid g(h, w);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned raw = (static_cast<unsigned>(b[pos + 2 * i]) << 8) | b[pos + 2 * i + 1];
    g.data()[i] = meta.value_offset + meta.value_scale * raw;
  }
  return g;
}

inline std::vector<unsigned char> encode_pgm16(const Grid& g, const ScoreMapMeta& meta) {
  if (!(meta.value_scale > 0.0)) throw std::invalid_argument("pgm16: value_scale must be positive");
  const std::string header =
      "P5\n" + std::to_string(g.cols()) + " " + std::to_string(g.rows()) + "\n65535\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    const double raw = std::round((g.data()[i] - meta.value_offset) / meta.value_scale);
    if (!(raw >= 0.0 && raw <= 65535.0)) {
      throw std::invalid_argument("pgm16: value at flat index " + std::to_string(i) +
                                  " maps to " + std::to_string(raw) +
                                  ", outside [0, 65535] after declared scaling");
    }
    const auto v = static_cast<unsigned>(raw);
    out.push_back(static_cast<unsigned char>(v >> 8));
    out.push_back(static_cast<unsigned char>(v & 0xFFu));
  }
  return out;
}

}  // namespace detail

/// Loads a score map and its sidecar. Non-finite values are rejected with
/// the offending flat index.
inline ScoreMap load_score_map(const std::filesystem::path& path, ScoreMapFormat format,
                               ScoreMapMeta* meta_out = nullptr) {
  const ScoreMapMeta meta = read_sidecar(path).value_or(ScoreMapMeta{});
  const auto bytes = detail::read_file_bytes(path);
  const std::string what = path.string();
  Grid g;
  switch (format) {
    case ScoreMapFormat::npy: {
      NpyArray arr = parse_npy(bytes, what);
      if (arr.shape.size() != 2) {
        throw std::runtime_error(what + ": expected a 2-D array, got " +
                                 std::to_string(arr.shape.size()) + "-D");
      }
      g.resize(static_cast<Eigen::Index>(arr.shape[0]), static_cast<Eigen::Index>(arr.shape[1]));
      std::copy(arr.data.begin(), arr.data.end(), g.data());
      break;
    }
    case ScoreMapFormat::raw_f32: g = detail::decode_raw_f32(bytes, what); break;
    case ScoreMapFormat::pgm16: g = detail::decode_pgm16(bytes, meta, what); break;
  }
  if ((meta.height && *meta.height != g.rows()) || (meta.width && *meta.width != g.cols())) {
    throw std::runtime_error(what + ": sidecar dimensions disagree with the payload");
  }
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    if (!std::isfinite(g.data()[i])) {
      throw std::runtime_error(what + ": non-finite value at flat index " + std::to_string(i));
    }
  }
  if (meta_out) *meta_out = meta;
  return ScoreMap(std::move(g), meta.scale_k);
}

/// Writes the map in `format` plus its sidecar. Values are stored as float32
/// for npy/raw_f32, so maps holding float-representable values round-trip
/// bit-exactly.
inline void save_score_map(const ScoreMap& map, const std::filesystem::path& path, ScoreMapFormat format,
                           ScoreMapMeta meta = {}) {
  meta.height = map.height();
  meta.width = map.width();
  meta.scale_k = map.scale_k();
  switch (format) {
    case ScoreMapFormat::npy: detail::write_file_bytes(path, encode_npy_f32(map.values())); break;
    case ScoreMapFormat::raw_f32: detail::write_file_bytes(path, detail::encode_raw_f32(map.values())); break;
    case ScoreMapFormat::pgm16: detail::write_file_bytes(path, detail::encode_pgm16(map.values(), meta)); break;
  }
  if (format != ScoreMapFormat::pgm16) {
    meta.value_offset = 0.0;
    meta.value_scale = 1.0;
  }
  write_sidecar(path, meta);
}

}  // namespace dac
