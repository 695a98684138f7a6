#pragma once

// CSV matrices (row-major, %.17g, no header) and count-tensor manifests
// {"n": n, "T": T, "slice_paths": [...]} with slice paths relative to the
// manifest's directory.

#include "lsm/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace lsm::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_matrix_csv(const fs::path& path, const Matrix& m) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
  if (!out) throw InputError("failed writing " + path.string());
}

inline Matrix read_matrix_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw InputError("non-numeric cell '" + cell + "' in " + path.string());
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw ShapeError("ragged rows in " + path.string());
    rows.push_back(std::move(row));
  }
  const auto r = static_cast<Eigen::Index>(rows.size());
  const auto c = r ? static_cast<Eigen::Index>(rows.front().size()) : 0;
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return m;
}

inline void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

inline json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InputError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

/// Writes slice_000.csv ... and manifest.json into `dir`; returns the manifest path.
inline fs::path write_tensor(const fs::path& dir, const CountTensor& a) {
  fs::create_directories(dir);
  json manifest;
  manifest["n"] = a.n();
  manifest["T"] = a.T();
  json paths = json::array();
  for (std::size_t t = 0; t < a.slices.size(); ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "slice_%03zu.csv", t);
    write_matrix_csv(dir / name, a.slices[t]);
    paths.push_back(name);
  }
  manifest["slice_paths"] = paths;
  const auto path = dir / "manifest.json";
  write_json(path, manifest);
  return path;
}

inline CountTensor read_tensor(const fs::path& manifest_path) {
  const json manifest = read_json(manifest_path);
  if (!manifest.contains("n") || !manifest.contains("T") || !manifest.contains("slice_paths"))
    throw InputError("manifest " + manifest_path.string() + " needs n, T and slice_paths");
  const auto n = manifest["n"].get<Eigen::Index>();
  const auto T = manifest["T"].get<Eigen::Index>();
  const auto& paths = manifest["slice_paths"];
  if (!paths.is_array() || static_cast<Eigen::Index>(paths.size()) != T)
    throw InputError("manifest slice_paths must list T entries");
  const auto base = manifest_path.parent_path();
  CountTensor a;
  for (const auto& p : paths) {
    fs::path slice_path = p.get<std::string>();
    if (slice_path.is_relative()) slice_path = base / slice_path;
    Matrix m = read_matrix_csv(slice_path);
    if (m.rows() != n || m.cols() != n) throw ShapeError(slice_path.string() + " is not n x n");
    a.slices.push_back(std::move(m));
  }
  a.validate();
  return a;
}

}  // namespace lsm::io
