#pragma once

#include "sis/types.hpp"

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

namespace sis {

/// %.17g rendering: round-trips any double exactly and never varies across
/// runs, which keeps CSV outputs byte-stable.
inline std::string g17(double value) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

/// Minimal CSV emitter. Cells containing commas, quotes or newlines are
/// quoted per RFC 4180; doubles render with g17.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header)
      : out_(path) {
    if (!out_) throw DataError("cannot open " + path + " for writing");
    for (const auto& name : header) cell(name);
    end_row();
  }

  CsvWriter& cell(const std::string& text) {
    if (!first_) out_ << ',';
    first_ = false;
    if (text.find_first_of(",\"\n") != std::string::npos) {
      out_ << '"';
      for (const char c : text) {
        if (c == '"') out_ << '"';
        out_ << c;
      }
      out_ << '"';
    } else {
      out_ << text;
    }
    return *this;
  }

  CsvWriter& cell(const char* text) { return cell(std::string(text)); }
  CsvWriter& cell(double value) { return cell(g17(value)); }
  CsvWriter& cell(int value) { return cell(std::to_string(value)); }
  CsvWriter& cell(long long value) { return cell(std::to_string(value)); }
  CsvWriter& cell(std::uint64_t value) { return cell(std::to_string(value)); }

  void end_row() {
    out_ << '\n';
    first_ = true;
    if (!out_) throw DataError("CSV write failed");
  }

 private:
  std::ofstream out_;
  bool first_ = true;
};

}  // namespace sis
