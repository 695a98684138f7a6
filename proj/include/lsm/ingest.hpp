#pragma once

// Trip-record ingestion: duration filter, hourly (bin_width) binning by start
// time, and symmetric accumulation into a count tensor.

#include "lsm/types.hpp"

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

namespace lsm {

struct TripRecord {
  std::string start_node;
  std::string end_node;
  std::int64_t start_time = 0;  // UTC seconds
  double duration = 0.0;        // seconds
};

struct IngestConfig {
  double min_duration = 60.0;
  double max_duration = 10800.0;
  std::int64_t bin_width = 3600;
  std::int64_t window_start = 0;
  std::int64_t window_end = 0;

  Eigen::Index bins() const { return static_cast<Eigen::Index>((window_end - window_start) / bin_width); }

  void validate() const {
    if (!(min_duration > 0.0 && min_duration < max_duration))
      throw InputError("ingest: need 0 < min_duration < max_duration");
    if (bin_width <= 0) throw InputError("ingest: bin_width must be positive");
    if (window_end <= window_start) throw InputError("ingest: empty window");
    if ((window_end - window_start) % bin_width != 0)
      throw InputError("ingest: bin_width must divide the window length");
  }
};

struct IngestResult {
  CountTensor counts;
  std::vector<std::string> node_ids;  // index -> id, sorted
  std::size_t kept = 0;
  std::size_t filtered = 0;   // parsed but outside the duration filter or window
  std::size_t malformed = 0;  // rows that could not be parsed
};

namespace detail {

// Days since 1970-01-01 for a proleptic Gregorian date.
inline std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace detail

/// Parses either integral/fractional UTC epoch seconds or
/// "YYYY-MM-DD[ T]HH:MM:SS[.fff][Z]" interpreted as UTC.
inline std::optional<std::int64_t> parse_timestamp(const std::string& raw) {
  const std::string s = detail::trim(raw);
  if (auto v = detail::parse_number(s)) return static_cast<std::int64_t>(std::floor(*v));
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  char sep = 0;
  if (std::sscanf(s.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d", &y, &mo, &d, &sep, &h, &mi, &sec) != 7) return std::nullopt;
  if (sep != ' ' && sep != 'T') return std::nullopt;
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || sec > 60 || h < 0 || mi < 0 || sec < 0)
    return std::nullopt;
  return detail::days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)) * 86400 + h * 3600 +
         mi * 60 + sec;
}

/// Parses one CSV row "start_id,end_id,start_time,duration_s".
inline std::optional<TripRecord> parse_trip_row(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(detail::trim(cell));
  if (cells.size() != 4) return std::nullopt;
  TripRecord rec;
  rec.start_node = cells[0];
  rec.end_node = cells[1];
  if (rec.start_node.empty() || rec.end_node.empty()) return std::nullopt;
  const auto ts = parse_timestamp(cells[2]);
  const auto dur = detail::parse_number(cells[3]);
  if (!ts || !dur || !(*dur > 0.0)) return std::nullopt;
  rec.start_time = *ts;
  rec.duration = *dur;
  return rec;
}

struct ParsedTrips {
  std::vector<TripRecord> records;
  std::size_t malformed = 0;
};

/// Reads a trip CSV with header start_id,end_id,start_time,duration_s.
/// Unparseable rows are skipped and counted.
inline ParsedTrips read_trips(std::istream& in) {
  ParsedTrips out;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    if (!header_seen) {
      header_seen = true;
      if (line.find("start_id") != std::string::npos) continue;
    }
    if (auto rec = parse_trip_row(line))
      out.records.push_back(std::move(*rec));
    else
      ++out.malformed;
  }
  return out;
}

inline IngestResult ingest_trips(const std::vector<TripRecord>& records, const IngestConfig& cfg) {
  cfg.validate();
  IngestResult res;
  std::vector<const TripRecord*> kept;
  std::map<std::string, Eigen::Index> index;
  for (const auto& r : records) {
    const bool duration_ok = r.duration >= cfg.min_duration && r.duration <= cfg.max_duration;
    const bool in_window = r.start_time >= cfg.window_start && r.start_time < cfg.window_end;
    if (!duration_ok || !in_window) {
      ++res.filtered;
      continue;
    }
    kept.push_back(&r);
    index.emplace(r.start_node, 0);
    index.emplace(r.end_node, 0);
  }
  if (kept.empty()) throw InputError("ingest: no records survive the filter");

  Eigen::Index next = 0;
  for (auto& [id, idx] : index) {
    idx = next++;
    res.node_ids.push_back(id);
  }
  const auto n = static_cast<Eigen::Index>(index.size());
  if (n < 2) throw InputError("ingest: fewer than two nodes survive the filter");
  res.counts = CountTensor(n, static_cast<std::size_t>(cfg.bins()));
  for (const auto* r : kept) {
    const auto t = static_cast<std::size_t>((r->start_time - cfg.window_start) / cfg.bin_width);
    const auto i = index.at(r->start_node), j = index.at(r->end_node);
    res.counts[t](i, j) += 1.0;
    if (i != j) res.counts[t](j, i) += 1.0;
  }
  res.kept = kept.size();
  return res;
}

/// Sum over slices of the upper triangle including the diagonal.
inline double upper_triangle_total(const CountTensor& a) {
  double total = 0.0;
  for (const auto& s : a.slices) total += s.triangularView<Eigen::Upper>().toDenseMatrix().sum();
  return total;
}

}  // namespace lsm
