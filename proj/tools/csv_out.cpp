#include "csv_out.hpp"

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>

#include "csma_mpr/errors.hpp"
#include "json.hpp"

namespace cli {

std::string fmt_double(double x) {
  if (x == (long long)x && std::abs(x) < 1e15)
    return std::to_string((long long)x);
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

std::string fmt_int(long long x) { return std::to_string(x); }

namespace {

std::string timestamp_utc() {
  std::time_t now = std::time(nullptr);
  char buf[32];
  std::tm tm_buf{};
  gmtime_r(&now, &tm_buf);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_buf);
  return buf;
}

}  // namespace

std::vector<std::string> write_outputs(const std::string& out_dir,
                                       const std::string& basename,
                                       const Manifest& m, const Table& t,
                                       const std::string& format) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec)
    csma_mpr::fail(csma_mpr::Err::config_invalid,
                   "cannot create output directory '" + out_dir + "'");
  std::vector<std::string> written;
  const std::string stamp = timestamp_utc();

  const std::string csv_path = (fs::path(out_dir) / (basename + ".csv")).string();
  {
    std::ofstream out(csv_path);
    if (!out)
      csma_mpr::fail(csma_mpr::Err::config_invalid,
                     "cannot write output file '" + csv_path + "'");
    out << "# tool: csma_mpr " << kToolVersion << "\n";
    for (const auto& [k, v] : m.kv) out << "# " << k << ": " << v << "\n";
    out << "# generated: " << stamp << "\n";
    for (std::size_t i = 0; i < t.columns.size(); ++i)
      out << (i ? "," : "") << t.columns[i];
    out << "\n";
    for (const auto& r : t.rows) {
      for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
      out << "\n";
    }
  }
  written.push_back(csv_path);

  if (format == "json") {
    nlohmann::json j;
    j["tool"] = std::string("csma_mpr ") + kToolVersion;
    for (const auto& [k, v] : m.kv) j["manifest"][k] = v;
    j["generated"] = stamp;
    j["columns"] = t.columns;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : t.rows) j["rows"].push_back(r);
    const std::string json_path =
        (fs::path(out_dir) / (basename + ".json")).string();
    std::ofstream out(json_path);
    if (!out)
      csma_mpr::fail(csma_mpr::Err::config_invalid,
                     "cannot write output file '" + json_path + "'");
    out << j.dump(2) << "\n";
    written.push_back(json_path);
  }
  return written;
}

}  // namespace cli
