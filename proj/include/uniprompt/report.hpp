#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "uniprompt/trainer.hpp"

namespace uniprompt {

// One raw measurement. The checksums travel with the row so a table can only
// be assembled from runs that shared the pretrained weights, the per-seed
// splits, and the training recipe.
struct RawRow {
  std::string method;
  int k = 0;
  std::string language;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  std::uint64_t theta_checksum = 0;
  std::uint64_t split_checksum = 0;
  std::uint64_t hp_checksum = 0;
};

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

inline std::string format_two_decimals(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

// "mean ± std" with two decimals, the cell format of the result tables.
inline std::string format_cell(double mean, double stddev) {
  return format_two_decimals(mean) + " ± " + format_two_decimals(stddev);
}

inline void write_results_csv(const std::string& path, const std::vector<RawRow>& rows) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot open " + path + " for writing");
  os << "method,k,language,seed,accuracy\n";
  for (const RawRow& r : rows) {
    os << r.method << "," << r.k << "," << r.language << "," << r.seed << ","
       << format_number(r.accuracy) << "\n";
  }
}

inline std::vector<RawRow> read_results_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path);
  std::vector<RawRow> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line_no == 1) {
      if (trim(line) != "method,k,language,seed,accuracy") {
        throw DataError(path + ": unexpected CSV header '" + line + "'");
      }
      continue;
    }
    if (trim(line).empty()) continue;
    const std::vector<std::string> parts = split(line, ',');
    if (parts.size() != 5) {
      throw DataError(path + " line " + std::to_string(line_no) + ": expected 5 columns");
    }
    RawRow r;
    r.method = parts[0];
    try {
      r.k = std::stoi(parts[1]);
      r.seed = std::stoull(parts[3]);
      r.accuracy = std::stod(parts[4]);
    } catch (const std::exception&) {
      throw DataError(path + " line " + std::to_string(line_no) + ": malformed numeric field");
    }
    r.language = parts[2];
    rows.push_back(std::move(r));
  }
  return rows;
}

struct ReportRow {
  int k = 0;
  std::string method;
  std::vector<LangStats> cells;  // aligned with the table's language order
  double average = 0.0;          // unweighted mean of the language means
};

struct ReportTable {
  std::vector<std::string> languages;
  std::vector<ReportRow> rows;

  std::string to_markdown() const {
    std::string out = "| k | Model |";
    for (const std::string& l : languages) out += " " + l + " |";
    out += " Average |\n|---|---|";
    for (std::size_t i = 0; i < languages.size(); ++i) out += "---|";
    out += "---|\n";
    for (const ReportRow& r : rows) {
      out += "| " + std::to_string(r.k) + " | " + r.method + " |";
      for (const LangStats& s : r.cells) out += " " + format_cell(s.mean, s.stddev) + " |";
      out += " " + format_two_decimals(r.average) + " |\n";
    }
    return out;
  }
};

// Groups raw rows into (k, method) report rows. Every row of one table must
// carry the same theta/hyperparameter checksums and, per (k, seed), the same
// split checksum; anything else is a hard parity error. Parity is skipped
// only when no row carries checksums (rows re-read from a bare CSV).
inline ReportTable build_report_table(const std::vector<RawRow>& rows,
                                      const std::vector<std::string>& languages) {
  if (rows.empty()) throw DataError("no rows to assemble into a table");

  bool any_checksums = false;
  for (const RawRow& r : rows) any_checksums |= r.theta_checksum != 0;
  if (any_checksums) {
    const std::uint64_t theta = rows.front().theta_checksum;
    const std::uint64_t hp = rows.front().hp_checksum;
    std::map<std::pair<int, std::uint64_t>, std::uint64_t> split_by_cell;
    for (const RawRow& r : rows) {
      if (r.theta_checksum != theta) {
        throw ParityError("rows mix different pretrained checkpoints (method " + r.method + ")");
      }
      if (r.hp_checksum != hp) {
        throw ParityError("rows mix different hyperparameter sets (method " + r.method + ")");
      }
      const auto key = std::make_pair(r.k, r.seed);
      auto it = split_by_cell.find(key);
      if (it == split_by_cell.end()) {
        split_by_cell[key] = r.split_checksum;
      } else if (it->second != r.split_checksum) {
        throw ParityError("rows mix different few-shot splits at k=" + std::to_string(r.k) +
                          ", seed=" + std::to_string(r.seed));
      }
    }
  }

  // (k, method) in first-appearance order; seeds sorted inside each cell
  std::vector<std::pair<int, std::string>> order;
  std::map<std::pair<int, std::string>, std::map<std::string, std::map<std::uint64_t, double>>> cells;
  for (const RawRow& r : rows) {
    const auto key = std::make_pair(r.k, r.method);
    if (!cells.count(key)) order.push_back(key);
    cells[key][r.language][r.seed] = r.accuracy;
  }
  std::stable_sort(order.begin(), order.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });

  ReportTable table;
  table.languages = languages;
  for (const auto& key : order) {
    ReportRow row;
    row.k = key.first;
    row.method = key.second;
    double mean_sum = 0.0;
    for (const std::string& lang : languages) {
      auto it = cells[key].find(lang);
      if (it == cells[key].end()) {
        throw DataError("no rows for language '" + lang + "' in method '" + row.method + "'");
      }
      std::vector<double> values;
      for (const auto& [seed, acc] : it->second) values.push_back(acc);
      row.cells.push_back(stats_of(values));
      mean_sum += row.cells.back().mean;
    }
    row.average = mean_sum / languages.size();
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace uniprompt
