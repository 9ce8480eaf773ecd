#include "fraclab/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fraclab/errors.hpp"

namespace fraclab {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string config_hash(const nlohmann::json& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(config.dump())));
  return std::string("fnv1a64:") + buf;
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

CsvTable::CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

CsvTable& CsvTable::row() {
  if (!rows_.empty() && rows_.back().size() != columns_.size()) throw std::logic_error("csv row is incomplete");
  rows_.emplace_back();
  return *this;
}

CsvTable& CsvTable::add(double x) { return add(format_double(x)); }

CsvTable& CsvTable::add(long long x) { return add(std::to_string(x)); }

CsvTable& CsvTable::add(bool x) { return add(std::string(x ? "1" : "0")); }

CsvTable& CsvTable::add(std::string x) {
  if (rows_.empty() || rows_.back().size() >= columns_.size()) throw std::logic_error("csv row overflow");
  if (x.find_first_of(",\n\"") != std::string::npos) {
    std::string q = "\"";
    for (char c : x) {
      if (c == '"') q += '"';
      q += c;
    }
    x = q + "\"";
  }
  rows_.back().push_back(std::move(x));
  return *this;
}

namespace {

nlohmann::json header_json(const RunHeader& h) {
  return {{"fraclab_version", FRACLAB_VERSION},
          {"command", h.command},
          {"config_hash", config_hash(h.config)},
          {"seed", h.seed},
          {"tolerances", h.tolerances},
          {"truncation_boxes", h.truncation_boxes},
          {"config", h.config}};
}

}  // namespace

std::string render_csv(const RunHeader& header, const CsvTable& table) {
  std::ostringstream out;
  out << "# fraclab " << FRACLAB_VERSION << "\n";
  out << "# command: " << header.command << "\n";
  out << "# config_hash: " << config_hash(header.config) << "\n";
  out << "# seed: " << header.seed << "\n";
  out << "# tolerances: " << header.tolerances.dump() << "\n";
  out << "# truncation_boxes: " << header.truncation_boxes.dump() << "\n";
  out << "# config: " << header.config.dump() << "\n";
  for (std::size_t i = 0; i < table.columns().size(); ++i) out << (i ? "," : "") << table.columns()[i];
  out << "\n";
  for (const auto& r : table.rows()) {
    if (r.size() != table.columns().size()) throw std::logic_error("csv row is incomplete");
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
    out << "\n";
  }
  return out.str();
}

std::string render_json(const RunHeader& header, const nlohmann::json& result) {
  return nlohmann::json{{"header", header_json(header)}, {"result", result}}.dump(2) + "\n";
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << content;
  if (!out) throw ConfigError("failed writing " + path);
}

Profile1D parse_profile_csv(const std::string& text) {
  Profile1D f;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    double v[3];
    const char* p = line.data();
    const char* end = line.data() + line.size();
    bool ok = true;
    for (int k = 0; k < 3 && ok; ++k) {
      while (p < end && (*p == ' ' || *p == '\t')) ++p;
      const auto r = std::from_chars(p, end, v[k]);
      ok = r.ec == std::errc();
      p = r.ptr;
      while (p < end && (*p == ' ' || *p == '\t')) ++p;
      if (k < 2) ok = ok && p < end && *p++ == ',';
    }
    if (!ok) {
      if (first) {
        first = false;
        continue;
      }
      throw ConfigError("profile csv: malformed line '" + line + "'");
    }
    first = false;
    f.t.push_back(v[0]);
    f.f.push_back(v[1]);
    f.fprime.push_back(v[2]);
  }
  return f;
}

std::string profile_to_csv(const Profile1D& f) {
  std::string out = "t,f,fprime\n";
  for (std::size_t i = 0; i < f.t.size(); ++i)
    out += format_double(f.t[i]) + "," + format_double(f.f[i]) + "," + format_double(f.fprime[i]) + "\n";
  return out;
}

}  // namespace fraclab
