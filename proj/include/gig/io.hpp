#pragma once

// Artifact output: schema-versioned CSV and JSON, written atomically.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "gig/errors.hpp"
#include "gig/numkit.hpp"

namespace gig {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

class IoError : public Error {
 public:
  using Error::Error;
};

/// Writes to a sibling temp file, then renames over the target.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot rename into " + path.string());
  }
}

inline std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

inline void write_json(const std::filesystem::path& path, const Json& j) { atomic_write(path, dump_json(j)); }

/// Shortest text that reads back to the same double; nan/inf spelled out.
inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

/// CSV whose first column is schema_version.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> columns) : n_(columns.size()) {
    out_ << "schema_version";
    for (const auto& c : columns) out_ << ',' << c;
    out_ << '\n';
  }

  CsvTable& row() {
    if (open_) finish_row();
    out_ << kSchemaVersion;
    open_ = true;
    cells_ = 0;
    return *this;
  }
  CsvTable& operator<<(double x) { return cell(format_number(x)); }
  CsvTable& operator<<(int x) { return cell(std::to_string(x)); }
  CsvTable& operator<<(long x) { return cell(std::to_string(x)); }
  CsvTable& operator<<(std::size_t x) { return cell(std::to_string(x)); }
  CsvTable& operator<<(const std::string& s) { return cell(s); }
  CsvTable& operator<<(const char* s) { return cell(s); }

  std::string str() {
    if (open_) finish_row();
    return out_.str();
  }

 private:
  CsvTable& cell(const std::string& s) {
    if (!open_) throw InvalidArgument("CsvTable: cell outside a row");
    out_ << ',' << s;
    ++cells_;
    return *this;
  }
  void finish_row() {
    if (cells_ != n_) throw InvalidArgument("CsvTable: row has the wrong number of cells");
    out_ << '\n';
    open_ = false;
  }

  std::ostringstream out_;
  std::size_t n_;
  std::size_t cells_ = 0;
  bool open_ = false;
};

inline Json to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

inline Json to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

}  // namespace gig
