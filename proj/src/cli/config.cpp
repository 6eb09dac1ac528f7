#include "protofew/cli/config.hpp"

#include <fstream>
#include <sstream>

#include "protofew/errors.hpp"

namespace protofew::cli {

namespace {

using Schema = std::vector<std::pair<std::string, RunConfig::Entry>>;

const Schema& common_keys() {
  static const Schema s = {
      {"seed", {"0", "master seed for every random stream"}},
      {"data", {"synth", "dataset root directory, `synth` or `synth:<palette>`"}},
      {"split", {"", "split CSV (default: <root>/split.csv when present)"}},
      {"section", {"", "split section to use (train, val, test)"}},
      {"out", {"", "output run directory (default runs/<command>-<utc>-<seed>)"}},
      {"synth_seed", {"7", "seed of the synthetic generator"}},
      {"synth_palette", {"0", "palette of `synth` data (0, 1, 2)"}},
      {"synth_train_classes", {"20", "synthetic classes in the train section"}},
      {"synth_test_classes", {"20", "synthetic classes in the test section"}},
      {"synth_per_class", {"60", "synthetic images per class"}},
      {"synth_resolution", {"32", "synthetic image side in pixels"}},
      {"norm_mean", {"0.5", "normalization mean (all channels)"}},
      {"norm_std", {"0.5", "normalization std (all channels)"}},
  };
  return s;
}

const Schema& encoder_keys() {
  static const Schema s = {
      {"ndf", {"32", "encoder base width"}},
      {"ndepth", {"4", "residual blocks"}},
      {"nrkhs", {"64", "embedding / score-space dimension"}},
      {"resolution", {"32", "encoder input resolution"}},
      {"local_scales", {"5,7", "the two local grid sizes"}},
  };
  return s;
}

const Schema& protocol_keys() {
  static const Schema s = {
      {"checkpoint", {"", "encoder checkpoint"}},
      {"episodes", {"600", "evaluation episodes per protocol"}},
      {"way", {"5", "classes per episode"}},
      {"queries", {"15", "query images per class"}},
      {"eval_resolution", {"0", "evaluation resolution (0: the encoder's)"}},
      {"distance", {"squared", "squared or euclidean"}},
      {"threads", {"0", "evaluation workers (0: PROTOFEW_THREADS or all cores)"}},
      {"label", {"", "method name for the markdown table"}},
  };
  return s;
}

const Schema& command_keys(const std::string& command) {
  static const Schema pretrain = {
      {"epochs", {"20", "pretraining epochs"}},
      {"batch_size", {"32", "images per batch"}},
      {"lr", {"0.0002", "Adam learning rate"}},
      {"timing", {"false", "record wall_seconds in the loss CSV"}},
      {"supervised", {"false", "cross-entropy pretraining on labels instead of SSL"}},
  };
  static const Schema metatrain = {
      {"checkpoint", {"", "initial encoder checkpoint"}},
      {"from_scratch", {"false", "start from a random-init encoder"}},
      {"lr", {"0.0001", "Adam learning rate"}},
      {"episodes", {"500", "training episodes"}},
      {"way", {"5", "classes per episode"}},
      {"shot", {"1", "support images per class"}},
      {"queries", {"15", "query images per class"}},
      {"meta_resolution", {"0", "episode resolution (0: the encoder's)"}},
      {"distance", {"squared", "squared or euclidean"}},
  };
  static const Schema eval = {
      {"shot", {"1,5", "support images per class (list)"}},
      {"no_meta", {"false", "flag the report as the no-meta ablation"}},
  };
  static const Schema crosseval = {
      {"shot", {"5,20,50", "support images per class (list)"}},
      {"targets", {"synth:1,synth:2", "target datasets (list of data specs)"}},
  };
  static const Schema report = {
      {"runs", {"", "run directories (list)"}},
      {"average", {"false", "append a per-row average column"}},
  };
  if (command == "pretrain") return pretrain;
  if (command == "metatrain") return metatrain;
  if (command == "eval") return eval;
  if (command == "crosseval") return crosseval;
  if (command == "report") return report;
  throw ConfigError("unknown command '" + command + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig RunConfig::defaults(const std::string& command) {
  RunConfig c;
  c.command_ = command;
  const Schema& own = command_keys(command);
  auto add = [&c](const Schema& s) {
    for (const auto& [k, e] : s) c.entries_.insert_or_assign(k, e);
  };
  if (command == "report") {
    c.entries_["out"] = {"", "output markdown file (default report.md)"};
    add(own);
    return c;
  }
  add(common_keys());
  if (command == "pretrain" || command == "metatrain") add(encoder_keys());
  if (command == "eval" || command == "crosseval") add(protocol_keys());
  add(own);
  c.entries_["section"].value = (command == "pretrain" || command == "metatrain") ? "train" : "test";
  return c;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    throw ConfigError("unknown key '" + key + "' for command " + command_);
  }
  it->second.value = value;
}

void RunConfig::merge_text(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected `key = value`");
    }
    const std::string key = trim(line.substr(0, eq));
    try {
      set(key, trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  merge_text(buf.str(), path.string());
}

const std::string& RunConfig::str(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("unknown key '" + key + "'");
  return it->second.value;
}

std::uint64_t RunConfig::u64(const std::string& key) const {
  const auto& v = str(key);
  std::size_t used = 0;
  try {
    if (!v.empty() && v[0] != '-') {
      const auto out = std::stoull(v, &used, 0);
      if (used == v.size()) return out;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError(key + " = '" + v + "' is not a nonnegative integer");
}

std::size_t RunConfig::size(const std::string& key) const {
  return static_cast<std::size_t>(u64(key));
}

double RunConfig::real(const std::string& key) const {
  const auto& v = str(key);
  std::size_t used = 0;
  try {
    const double out = std::stod(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + " = '" + v + "' is not a number");
}

bool RunConfig::flag(const std::string& key) const {
  const auto& v = str(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no" || v.empty()) return false;
  throw ConfigError(key + " = '" + v + "' is not a boolean");
}

std::vector<std::string> RunConfig::list(const std::string& key) const {
  std::vector<std::string> out;
  std::istringstream in(str(key));
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::size_t> RunConfig::sizes(const std::string& key) const {
  std::vector<std::size_t> out;
  for (const auto& item : list(key)) {
    RunConfig tmp;
    tmp.entries_[key] = {item, ""};
    out.push_back(tmp.size(key));
  }
  if (out.empty()) throw ConfigError(key + " must list at least one value");
  return out;
}

std::string RunConfig::to_text() const {
  std::string out = "# " + command_ + "\n";
  for (const auto& [k, e] : entries_) out += k + " = " + e.value + "\n";
  return out;
}

}  // namespace protofew::cli
