#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace swlab {

// Shortest round-trip representation of a 64-bit float; identical input bits
// give identical text, which is what makes output files byte-reproducible.
inline std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw std::runtime_error("format_double: to_chars failed");
  return std::string(buf, end);
}

// CSV with a '#'-prefixed metadata header carrying the serialized config and
// seed, then a column-name row, then data rows.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::string& config_stamp,
            const std::vector<std::string>& columns)
      : out_(path) {
    if (!out_) throw std::runtime_error("csv: cannot open " + path);
    out_ << "# " << config_stamp << "\n";
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (i) out_ << ",";
      out_ << columns[i];
    }
    out_ << "\n";
  }

  void row(const std::vector<double>& values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) out_ << ",";
      out_ << format_double(values[i]);
    }
    out_ << "\n";
  }

  void comment(const std::string& text) { out_ << "# " << text << "\n"; }

 private:
  std::ofstream out_;
};

}  // namespace swlab
