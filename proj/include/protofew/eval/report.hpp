#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "protofew/eval/evaluate.hpp"

namespace protofew::eval {

/// `episode_index,accuracy`
void write_episode_csv(const EvalReport& report, const std::filesystem::path& path);
/// `dataset,protocol,mean,ci95,episodes,seed,checkpoint`
void write_summary_csv(const std::vector<EvalReport>& reports, const std::filesystem::path& path);

/// One parsed summary CSV line (per-episode accuracies are not stored).
struct SummaryRow {
  std::string dataset;
  std::string protocol;
  double mean = 0;
  double ci95 = 0;
  std::size_t episodes = 0;
  std::uint64_t seed = 0;
  std::string checkpoint;
};

std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& path);
SummaryRow summary_row(const EvalReport& report);

/// "64.03 ± 0.20%"
std::string format_cell(double mean, double ci95);

struct TableRow {
  std::string method;
  std::vector<SummaryRow> cells;
};

/// Methods as rows in the given order, "<dataset> <protocol>" as columns
/// sorted by dataset then (way, shot); absent cells render as "—". With `average`, a final column
/// holds each row's mean over its present cells.
std::string markdown_table(const std::vector<TableRow>& rows, bool average = false);

}  // namespace protofew::eval
