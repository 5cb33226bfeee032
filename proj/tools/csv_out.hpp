#pragma once
#include <string>
#include <utility>
#include <vector>

namespace cli {

inline constexpr const char* kToolVersion = "1.0.0";

// Shortest decimal form that parses back to the same double.
std::string fmt_double(double x);
std::string fmt_int(long long x);

// Ordered key/value header embedded in every output file; holds everything
// needed to re-run the command (subcommand, config, flags, seeds) plus the
// tool version and a timestamp.
struct Manifest {
  std::vector<std::pair<std::string, std::string>> kv;
  void add(const std::string& key, const std::string& value) {
    kv.emplace_back(key, value);
  }
};

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  void row(std::vector<std::string> cells) { rows.push_back(std::move(cells)); }
};

// Writes <out_dir>/<basename>.csv (manifest as #-prefixed header lines), and
// with format "json" a <basename>.json mirror carrying the same manifest and
// rows. Returns the paths written.
std::vector<std::string> write_outputs(const std::string& out_dir,
                                       const std::string& basename,
                                       const Manifest& m, const Table& t,
                                       const std::string& format);

}  // namespace cli
