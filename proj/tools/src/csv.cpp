#include "cdpf/harness/csv.hpp"

#include "cdpf/harness/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace cdpf::harness {

std::string format_number(double v) {
  char buf[64];
  // std::to_chars is locale independent.
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

void write_csv(const std::filesystem::path& path, const Table& table,
               const Provenance& provenance) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& [k, v] : provenance) out << "# " << k << '=' << v << '\n';
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (i) out << ',';
    out << table.header[i];
  }
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << format_number(row[i]);
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Table read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  Table t;
  std::string line;
  bool have_header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    if (!have_header) {
      while (std::getline(ss, cell, ',')) t.header.push_back(cell);
      have_header = true;
      continue;
    }
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size()) {
        throw IoError(path.string() + ":" + std::to_string(line_no) + ": bad number '" + cell +
                      "'");
      }
      row.push_back(v);
    }
    if (row.size() != t.header.size()) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                    std::to_string(t.header.size()) + " columns");
    }
    t.rows.push_back(std::move(row));
  }
  if (!have_header) throw IoError(path.string() + ": missing header");
  return t;
}

}  // namespace cdpf::harness
