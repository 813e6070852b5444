#pragma once

// Per-keypoint covariance records, the exchange format between extraction
// and evaluation.
//
// Delimited text (.csv): a header line
//     id,x,y,score,s11,s12,s22,method
// followed by one line per keypoint. Numbers use round-trip precision.
//
// Structured text (.json):
//     {"records": [{"id": 0, "x": .., "y": .., "score": .., "s11": ..,
//                   "s12": .., "s22": .., "method": "full"}, ...]}

#include "dac/core.hpp"
#include "dac/covariance.hpp"

#include "json.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dac {

struct CovarianceRecord {
  Keypoint kp;
  Cov2 cov;
  CovMethod method{CovMethod::full};
};

inline std::vector<CovarianceRecord> make_records(std::span<const Keypoint> kps, std::span<const Cov2> covs,
                                                  CovMethod method) {
  if (kps.size() != covs.size()) throw std::invalid_argument("make_records: size mismatch");
  std::vector<CovarianceRecord> out;
  out.reserve(kps.size());
  for (std::size_t i = 0; i < kps.size(); ++i) out.push_back({kps[i], covs[i], method});
  return out;
}

namespace detail {

inline std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return {buf, res.ptr};
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(where + ": cannot parse number '" + s + "'");
  }
}

}  // namespace detail

inline std::string records_to_csv(std::span<const CovarianceRecord> recs) {
  std::ostringstream out;
  out << "id,x,y,score,s11,s12,s22,method\n";
  for (const auto& r : recs) {
    using detail::fmt_double;
    out << r.kp.id << ',' << fmt_double(r.kp.x) << ',' << fmt_double(r.kp.y) << ',' << fmt_double(r.kp.score)
        << ',' << fmt_double(r.cov.s11()) << ',' << fmt_double(r.cov.s12()) << ',' << fmt_double(r.cov.s22())
        << ',' << to_string(r.method) << '\n';
  }
  return out.str();
}

inline std::vector<CovarianceRecord> records_from_csv(std::istream& in, const std::string& what = "records") {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(what + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "id,x,y,score,s11,s12,s22,method") {
    throw std::runtime_error(what + ": unexpected header '" + line + "'");
  }
  std::vector<CovarianceRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    const std::string where = what + ":" + std::to_string(lineno);
    if (cells.size() != 8) throw std::runtime_error(where + ": expected 8 fields, got " + std::to_string(cells.size()));
    CovarianceRecord r;
    r.kp.id = static_cast<std::size_t>(detail::parse_double(cells[0], where));
    r.kp.x = detail::parse_double(cells[1], where);
    r.kp.y = detail::parse_double(cells[2], where);
    r.kp.score = detail::parse_double(cells[3], where);
    try {
      r.cov = Cov2(detail::parse_double(cells[4], where), detail::parse_double(cells[5], where),
                   detail::parse_double(cells[6], where));
      r.method = parse_cov_method(cells[7]);
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(where + ": " + e.what());
    }
    out.push_back(r);
  }
  return out;
}

inline nlohmann::json records_to_json(std::span<const CovarianceRecord> recs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : recs) {
    arr.push_back({{"id", r.kp.id},
                   {"x", r.kp.x},
                   {"y", r.kp.y},
                   {"score", r.kp.score},
                   {"s11", r.cov.s11()},
                   {"s12", r.cov.s12()},
                   {"s22", r.cov.s22()},
                   {"method", to_string(r.method)}});
  }
  return {{"records", arr}};
}

inline std::vector<CovarianceRecord> records_from_json(const nlohmann::json& j, const std::string& what = "records") {
  std::vector<CovarianceRecord> out;
  try {
    for (const auto& e : j.at("records")) {
      CovarianceRecord r;
      r.kp.id = e.at("id").get<std::size_t>();
      r.kp.x = e.at("x").get<double>();
      r.kp.y = e.at("y").get<double>();
      r.kp.score = e.at("score").get<double>();
      r.cov = Cov2(e.at("s11").get<double>(), e.at("s12").get<double>(), e.at("s22").get<double>());
      r.method = parse_cov_method(e.at("method").get<std::string>());
      out.push_back(r);
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(what + ": schema mismatch: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(what + ": " + e.what());
  }
  return out;
}

/// Chooses CSV or JSON by extension (.json is JSON, anything else CSV).
inline void write_records(const std::filesystem::path& p, std::span<const CovarianceRecord> recs) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  if (p.extension() == ".json") {
    out << records_to_json(recs).dump(2) << '\n';
  } else {
    out << records_to_csv(recs);
  }
  if (!out) throw std::runtime_error("I/O error while writing " + p.string());
}

inline std::vector<CovarianceRecord> read_records(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  if (p.extension() == ".json") {
    try {
      return records_from_json(nlohmann::json::parse(in), p.string());
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error(p.string() + ": " + e.what());
    }
  }
  return records_from_csv(in, p.string());
}

}  // namespace dac
