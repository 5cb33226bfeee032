#pragma once
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cli {

// Command-line overrides shared by reproduce and the direct subcommands.
struct RunFlags {
  std::string out = ".";
  std::string format = "csv";
  std::optional<long long> horizon;
  std::optional<long long> warmup;
  std::optional<long long> samples;
  std::optional<std::vector<std::uint64_t>> seeds;
};

const std::vector<std::string>& preset_names();

// Runs one reproduction preset (fig4..fig10, table1), writing paired
// analysis/simulation CSVs (qprob grid for table1) into flags.out. Throws
// csma_mpr::Error on failure; unknown names are a config error.
void run_reproduce(const std::string& preset, const RunFlags& flags);

}  // namespace cli
