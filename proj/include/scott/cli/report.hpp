#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace scott::cli {

/// CSV with a fixed header. Cells are preformatted strings; numbers should
/// go through format_double so output is locale-independent.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);

  /// ContractError if the row width differs from the header's.
  void add_row(std::vector<std::string> row);
  const std::vector<std::vector<std::string>>& rows() const noexcept { return rows_; }
  std::string to_string() const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Histogram of 1-D samples in `bins` equal bins over [lo, hi] as a
/// standalone SVG document. Values outside the range are dropped.
std::string svg_histogram(std::span<const double> samples, double lo, double hi,
                          std::size_t bins = 100, const std::string& title = "");

}  // namespace scott::cli
