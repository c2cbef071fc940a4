#include "scott/cli/report.hpp"

#include <algorithm>
#include <cmath>

#include "scott/cli/config.hpp"
#include "scott/error.hpp"

namespace scott::cli {

namespace {

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {
  if (header_.empty()) throw ContractError("csv: empty header");
}

void CsvTable::add_row(std::vector<std::string> row) {
  if (row.size() != header_.size())
    throw ContractError("csv: row has " + std::to_string(row.size()) + " cells, header has " +
                        std::to_string(header_.size()));
  rows_.push_back(std::move(row));
}

std::string CsvTable::to_string() const {
  std::string out;
  auto emit = [&out](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) out += ',';
      out += csv_cell(r[i]);
    }
    out += '\n';
  };
  emit(header_);
  for (const auto& r : rows_) emit(r);
  return out;
}

std::string svg_histogram(std::span<const double> samples, double lo, double hi, std::size_t bins,
                          const std::string& title) {
  if (bins == 0 || !(hi > lo)) throw ContractError("svg_histogram: need bins >= 1 and hi > lo");
  std::vector<std::size_t> counts(bins, 0);
  for (double x : samples) {
    if (!(x >= lo && x <= hi)) continue;
    auto b = static_cast<std::size_t>((x - lo) / (hi - lo) * static_cast<double>(bins));
    counts[std::min(b, bins - 1)]++;
  }
  const std::size_t peak = std::max<std::size_t>(1, *std::max_element(counts.begin(), counts.end()));
  const double width = 600.0, height = 300.0, margin = 30.0;
  const double bw = (width - 2 * margin) / static_cast<double>(bins);
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"300\" viewBox=\"0 0 600 300\">\n";
  s += "<rect width=\"600\" height=\"300\" fill=\"white\"/>\n";
  if (!title.empty())
    s += "<text x=\"300\" y=\"18\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">" +
         xml_escape(title) + "</text>\n";
  for (std::size_t b = 0; b < bins; ++b) {
    const double h = (height - 2 * margin) * static_cast<double>(counts[b]) / static_cast<double>(peak);
    s += "<rect x=\"" + format_double(margin + bw * static_cast<double>(b)) + "\" y=\"" +
         format_double(height - margin - h) + "\" width=\"" + format_double(bw) + "\" height=\"" +
         format_double(h) + "\" fill=\"steelblue\"/>\n";
  }
  s += "<line x1=\"30\" y1=\"270\" x2=\"570\" y2=\"270\" stroke=\"black\"/>\n";
  s += "<text x=\"30\" y=\"290\" font-size=\"11\" font-family=\"sans-serif\">" + format_double(lo) + "</text>\n";
  s += "<text x=\"570\" y=\"290\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" +
       format_double(hi) + "</text>\n";
  s += "</svg>\n";
  return s;
}

}  // namespace scott::cli
