#include "protofew/eval/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "protofew/errors.hpp"

namespace protofew::eval {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write " + path.string());
  return out;
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// (way, shot) parsed from "5w1s"; unparsable names sort last.
std::pair<unsigned long, unsigned long> protocol_key(const std::string& name) {
  unsigned long way = 0, shot = 0;
  char w = 0, s = 0;
  if (std::sscanf(name.c_str(), "%lu%c%lu%c", &way, &w, &shot, &s) == 4 && w == 'w' && s == 's') {
    return {way, shot};
  }
  return {~0UL, ~0UL};
}

}  // namespace

void write_episode_csv(const EvalReport& report, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "episode_index,accuracy\n";
  char buf[64];
  for (std::size_t i = 0; i < report.per_episode.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, report.per_episode[i]);
    out << buf;
  }
}

SummaryRow summary_row(const EvalReport& r) {
  return {r.dataset, r.protocol.name(), r.mean_accuracy, r.ci95_halfwidth,
          r.episodes, r.protocol.seed, r.checkpoint};
}

void write_summary_csv(const std::vector<EvalReport>& reports, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "dataset,protocol,mean,ci95,episodes,seed,checkpoint\n";
  char buf[128];
  for (const auto& r : reports) {
    const auto row = summary_row(r);
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%zu,%llu,", row.mean, row.ci95, row.episodes,
                  static_cast<unsigned long long>(row.seed));
    out << row.dataset << ',' << row.protocol << buf << row.checkpoint << '\n';
  }
}

std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open summary " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "dataset,protocol,mean,ci95,episodes,seed,checkpoint") {
    throw IngestionError(path.string() + ": not a summary CSV (bad header)");
  }
  std::vector<SummaryRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_commas(line);
    if (f.size() != 7) {
      throw IngestionError(path.string() + ":" + std::to_string(lineno) + ": expected 7 fields");
    }
    try {
      rows.push_back({f[0], f[1], std::stod(f[2]), std::stod(f[3]),
                      static_cast<std::size_t>(std::stoull(f[4])), std::stoull(f[5]), f[6]});
    } catch (const std::exception&) {
      throw IngestionError(path.string() + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  return rows;
}

std::string format_cell(double mean, double ci95) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f ± %.2f%%", 100 * mean, 100 * ci95);
  return buf;
}

std::string markdown_table(const std::vector<TableRow>& rows, bool average) {
  std::vector<std::pair<std::string, std::string>> cols;
  for (const auto& r : rows) {
    for (const auto& c : r.cells) cols.emplace_back(c.dataset, c.protocol);
  }
  std::sort(cols.begin(), cols.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    const auto ka = protocol_key(a.second), kb = protocol_key(b.second);
    return ka != kb ? ka < kb : a.second < b.second;
  });
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  std::vector<std::string> columns;
  for (const auto& [d, p] : cols) columns.push_back(d + " " + p);
  auto key = [](const SummaryRow& c) { return c.dataset + " " + c.protocol; };
  std::ostringstream out;
  out << "| Method |";
  for (const auto& c : columns) out << ' ' << c << " |";
  if (average) out << " Average |";
  out << "\n|---|";
  for (std::size_t i = 0; i < columns.size(); ++i) out << "---|";
  if (average) out << "---|";
  out << '\n';
  for (const auto& r : rows) {
    out << "| " << r.method << " |";
    double total = 0;
    std::size_t present = 0;
    for (const auto& col : columns) {
      auto it = std::find_if(r.cells.begin(), r.cells.end(),
                             [&](const SummaryRow& c) { return key(c) == col; });
      if (it == r.cells.end()) {
        out << " — |";
      } else {
        out << ' ' << format_cell(it->mean, it->ci95) << " |";
        total += it->mean;
        ++present;
      }
    }
    if (average) {
      if (present == 0) {
        out << " — |";
      } else {
        char buf[32];
        std::snprintf(buf, sizeof buf, " %.2f%% |", 100 * total / static_cast<double>(present));
        out << buf;
      }
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace protofew::eval
