#include "report.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <ostream>
#include <sstream>

namespace disco::cli {

std::string to_csv_row(const CostReport& r) {
  std::ostringstream os;
  os << to_string(r.method) << ',' << r.global_batch << ',' << r.world_size << ',' << r.layers
     << ',' << r.dim << ',' << r.backbone_elements << ',' << r.loss_elements << ','
     << r.total_elements << ',' << r.loss_flops << ',' << r.bytes;
  return os.str();
}

nlohmann::ordered_json to_json(const CostReport& r) {
  nlohmann::ordered_json j;
  j["method"] = to_string(r.method);
  j["B"] = r.global_batch;
  j["N"] = r.world_size;
  j["L"] = r.layers;
  j["D"] = r.dim;
  j["backbone_elements"] = r.backbone_elements;
  j["loss_elements"] = r.loss_elements;
  j["total_elements"] = r.total_elements;
  j["loss_flops"] = r.loss_flops;
  j["bytes"] = r.bytes;
  return j;
}

void write_csv(std::ostream& out, const std::vector<CostReport>& reports) {
  out << kCostCsvHeader << '\n';
  for (const auto& r : reports) out << to_csv_row(r) << '\n';
}

void write_json(std::ostream& out, const std::vector<CostReport>& reports) {
  auto array = nlohmann::ordered_json::array();
  for (const auto& r : reports) array.push_back(to_json(r));
  out << array.dump(2) << '\n';
}

TextTable::TextTable(std::vector<std::string> header) { rows_.push_back(std::move(header)); }

void TextTable::add_row(std::vector<std::string> row) {
  row.resize(rows_.front().size());
  rows_.push_back(std::move(row));
}

void TextTable::print(std::ostream& out) const {
  std::vector<std::size_t> widths(rows_.front().size(), 0);
  for (const auto& row : rows_)
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());

  auto emit = [&](const std::vector<std::string>& row) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c > 0) line += "  ";
      const std::string pad(widths[c] - row[c].size(), ' ');
      line += c == 0 ? row[c] + pad : pad + row[c];
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << '\n';
  };
  emit(rows_.front());
  std::vector<std::string> rule;
  for (auto w : widths) rule.emplace_back(w, '-');
  emit(rule);
  for (std::size_t r = 1; r < rows_.size(); ++r) emit(rows_[r]);
}

std::string group_thousands(unsigned long long value) {
  std::string digits = std::to_string(value);
  std::string out;
  const std::size_t lead = digits.size() % 3;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i != 0 && i >= lead && (i - lead) % 3 == 0) out += ',';
    out += digits[i];
  }
  return out;
}

std::string format_double(double value) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), res.ptr);
}

std::string format_error(double value) {
  std::array<char, 32> buf{};
  std::snprintf(buf.data(), buf.size(), "%.3e", value);
  return buf.data();
}

std::string human_bytes(unsigned long long bytes) {
  static constexpr const char* kUnits[] = {"B", "KiB", "MiB", "GiB", "TiB", "PiB"};
  double v = static_cast<double>(bytes);
  std::size_t unit = 0;
  while (v >= 1024.0 && unit + 1 < std::size(kUnits)) {
    v /= 1024.0;
    ++unit;
  }
  std::array<char, 32> buf{};
  std::snprintf(buf.data(), buf.size(), unit == 0 ? "%.0f %s" : "%.2f %s", v, kUnits[unit]);
  return buf.data();
}

}  // namespace disco::cli
