#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace sccv::cli {

// %.17g, with nan and inf spelled out for CSV.
std::string format_double(double x);

// Serializes j with every floating value at 17 significant digits; NaN and
// infinities become null. Object keys keep insertion order of ordered_json.
std::string dump_json(const nlohmann::ordered_json& j, int indent = 2);
void write_json(const std::string& path, const nlohmann::ordered_json& j);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const;  // -1 when absent
};

void write_csv(const std::string& path, const CsvTable& table);
// Throws Error(InvalidConfig) on unreadable files or malformed rows.
CsvTable read_csv(const std::string& path);

}  // namespace sccv::cli
