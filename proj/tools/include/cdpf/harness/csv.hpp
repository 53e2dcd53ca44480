#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace cdpf::harness {

/// %.17g, '.' decimal separator regardless of locale.
std::string format_number(double v);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

using Provenance = std::vector<std::pair<std::string, std::string>>;

/// Writes `# key=value` lines, the header and the rows with LF endings.
void write_csv(const std::filesystem::path& path, const Table& table,
               const Provenance& provenance = {});

/// Reads a numeric CSV; lines starting with '#' are skipped.
Table read_csv(const std::filesystem::path& path);

}  // namespace cdpf::harness
