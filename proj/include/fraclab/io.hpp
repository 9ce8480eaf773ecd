#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fraclab/hardy.hpp"

namespace fraclab {

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);
/// "fnv1a64:" + 16 hex digits of the compact dump (object keys sorted).
std::string config_hash(const nlohmann::json& config);

/// Shortest round-trip decimal form; "nan", "inf", "-inf" otherwise.
std::string format_double(double x);

/// Metadata written ahead of every table.
struct RunHeader {
  std::string command;
  std::uint64_t seed = 0;
  nlohmann::json config;
  nlohmann::json tolerances = nlohmann::json::object();
  nlohmann::json truncation_boxes = nlohmann::json::array();
};

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> columns);

  CsvTable& row();
  CsvTable& add(double x);
  CsvTable& add(long long x);
  CsvTable& add(int x) { return add(static_cast<long long>(x)); }
  CsvTable& add(std::size_t x) { return add(static_cast<long long>(x)); }
  CsvTable& add(bool x);
  CsvTable& add(std::string x);
  CsvTable& add(const char* x) { return add(std::string(x)); }

  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

/// "# key: value" header lines, the column line, then the rows.
std::string render_csv(const RunHeader& header, const CsvTable& table);
/// {"header": {...}, "result": result}, pretty printed with sorted keys.
std::string render_json(const RunHeader& header, const nlohmann::json& result);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

/// Comma-separated t, f, f' rows; '#' lines and a non-numeric first line are skipped.
Profile1D parse_profile_csv(const std::string& text);
std::string profile_to_csv(const Profile1D& f);

}  // namespace fraclab
