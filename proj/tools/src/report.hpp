#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "disco/cost_model.hpp"

namespace disco::cli {

inline constexpr const char* kCostCsvHeader =
    "method,B,N,L,D,backbone_elements,loss_elements,total_elements,loss_flops,bytes";

std::string to_csv_row(const CostReport& report);
nlohmann::ordered_json to_json(const CostReport& report);

void write_csv(std::ostream& out, const std::vector<CostReport>& reports);
void write_json(std::ostream& out, const std::vector<CostReport>& reports);

/// Left-aligned first column, right-aligned numbers, two-space gutters.
class TextTable {
 public:
  explicit TextTable(std::vector<std::string> header);
  void add_row(std::vector<std::string> row);
  void print(std::ostream& out) const;

 private:
  std::vector<std::vector<std::string>> rows_;
};

/// 17179869184 -> "17,179,869,184"
std::string group_thousands(unsigned long long value);

/// Shortest round-trip decimal form, for deterministic CSV.
std::string format_double(double value);

/// "%.3e"
std::string format_error(double value);

/// 17179869184 -> "16.00 GiB"
std::string human_bytes(unsigned long long bytes);

}  // namespace disco::cli
