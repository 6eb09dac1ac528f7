#include "protofew/cli/commands.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <ostream>
#include <sstream>

#include "protofew/data/split.hpp"
#include "protofew/data/synth.hpp"
#include "protofew/encoder.hpp"
#include "protofew/errors.hpp"
#include "protofew/eval/evaluate.hpp"
#include "protofew/eval/report.hpp"
#include "protofew/eval/supervised.hpp"
#include "protofew/meta/meta_train.hpp"
#include "protofew/seed.hpp"
#include "protofew/ssl/pretrain.hpp"

namespace protofew::cli {

namespace fs = std::filesystem;

int exit_code_for_current_exception() {
  try {
    throw;
  } catch (const ConfigError&) {
    return kExitConfig;
  } catch (const ProtocolError&) {
    return kExitConfig;
  } catch (const IngestionError&) {
    return kExitData;
  } catch (const ValidationError&) {
    return kExitData;
  } catch (const NumericDomainError&) {
    return kExitNumeric;
  } catch (...) {
    return kExitFailure;
  }
}

namespace {

data::Normalization normalization(const RunConfig& c) {
  const auto m = static_cast<float>(c.real("norm_mean"));
  const auto s = static_cast<float>(c.real("norm_std"));
  if (!(s > 0)) throw ConfigError("norm_std must be positive");
  return {{m, m, m}, {s, s, s}};
}

EncoderConfig encoder_config(const RunConfig& c) {
  EncoderConfig e;
  e.ndf = c.size("ndf");
  e.ndepth = c.size("ndepth");
  e.nrkhs = c.size("nrkhs");
  e.input_resolution = c.size("resolution");
  const auto scales = c.sizes("local_scales");
  if (scales.size() != 2) throw ConfigError("local_scales needs exactly two values");
  e.local_scales = {scales[0], scales[1]};
  if (e.ndf == 0 || e.ndepth == 0 || e.nrkhs == 0) {
    throw ConfigError("ndf, ndepth and nrkhs must be positive");
  }
  plan_encoder(e);
  return e;
}

meta::Distance distance(const RunConfig& c) {
  const auto& d = c.str("distance");
  if (d == "squared") return meta::Distance::SquaredEuclidean;
  if (d == "euclidean") return meta::Distance::Euclidean;
  throw ConfigError("distance must be squared or euclidean, got '" + d + "'");
}

std::string utc_stamp() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

fs::path prepare_run_dir(const RunConfig& c) {
  fs::path out = c.str("out");
  if (out.empty()) {
    out = fs::path("runs") / (c.command() + "-" + utc_stamp() + "-" + c.str("seed"));
  }
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IngestionError("cannot create run directory " + out.string() + ": " + ec.message());
  std::ofstream snap(out / "config.txt");
  if (!snap) throw IngestionError("cannot write " + (out / "config.txt").string());
  snap << c.to_text();
  return out;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  if (!in) return "";
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw IngestionError("cannot write " + p.string());
  out << text;
}

std::string encoder_id(const Encoder<float>& enc) { return num::checkpoint_id(enc.state()); }

Encoder<float> load_checkpoint(const RunConfig& c) {
  const fs::path path = c.str("checkpoint");
  if (path.empty()) throw ConfigError("--checkpoint is required");
  if (!fs::exists(path)) throw IngestionError("checkpoint not found: " + path.string());
  return load_encoder(path);
}

std::string lineage_block(const std::string& stage, const std::string& id, const std::string& parent,
                          const RunConfig& c) {
  std::string out = "[" + stage + "]\n";
  out += "checkpoint = " + id + "\n";
  out += "parent = " + (parent.empty() ? std::string("none") : parent) + "\n";
  out += "data = " + c.str("data") + "\n";
  out += "seed = " + c.str("seed") + "\n";
  if (c.has("from_scratch")) out += "from_scratch = " + std::string(c.flag("from_scratch") ? "true" : "false") + "\n";
  if (c.has("supervised")) out += "supervised = " + std::string(c.flag("supervised") ? "true" : "false") + "\n";
  return out;
}

std::string safe_name(std::string s) {
  for (auto& ch : s) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_' && ch != '+') ch = '_';
  }
  return s;
}

std::vector<eval::Protocol> protocols(const RunConfig& c) {
  std::vector<eval::Protocol> out;
  for (std::size_t shot : c.sizes("shot")) {
    eval::Protocol p;
    p.way = c.size("way");
    p.shot = shot;
    p.queries = c.size("queries");
    p.episodes = c.size("episodes");
    p.seed = c.u64("seed");
    p.resolution = c.size("eval_resolution");
    p.validate();
    out.push_back(p);
  }
  return out;
}

eval::EvalOptions eval_options(const RunConfig& c) {
  eval::EvalOptions o;
  o.threads = c.size("threads");
  o.normalization = normalization(c);
  o.distance = distance(c);
  return o;
}

void write_reports(const fs::path& dir, const std::vector<eval::EvalReport>& reports,
                   const std::string& label, bool average) {
  for (const auto& r : reports) {
    eval::write_episode_csv(r, dir / ("episodes_" + safe_name(r.dataset) + "_" + r.protocol.name() + ".csv"));
  }
  eval::write_summary_csv(reports, dir / "summary.csv");
  eval::TableRow row{label, {}};
  for (const auto& r : reports) row.cells.push_back(eval::summary_row(r));
  write_text(dir / "table.md", eval::markdown_table({row}, average));
}

}  // namespace

data::ImageDataset resolve_dataset(const std::string& spec, const RunConfig& c,
                                   const std::string& section_text) {
  const data::Section section = data::parse_section(section_text);
  if (spec == "synth" || spec.rfind("synth:", 0) == 0) {
    data::SynthStyle style;
    style.palette = static_cast<int>(c.size("synth_palette"));
    if (spec.size() > 6) {
      RunConfig tmp = RunConfig::defaults("pretrain");
      tmp.set("synth_palette", spec.substr(6));
      style.palette = static_cast<int>(tmp.size("synth_palette"));
    }
    if (style.palette > 2) throw ConfigError("synth palette must be 0, 1 or 2");
    const std::size_t train = c.size("synth_train_classes"), test = c.size("synth_test_classes");
    const std::size_t per = c.size("synth_per_class"), res = c.size("synth_resolution");
    if (per == 0 || res == 0) throw ConfigError("synth_per_class and synth_resolution must be positive");
    std::size_t first = 0, count = train;
    if (section == data::Section::Test) first = train, count = test;
    if (section == data::Section::Val) throw ConfigError("synthetic data has no val section");
    if (count == 0) throw ConfigError("synthetic " + section_text + " section is empty");
    return data::synth_dataset(count, per, res, c.u64("synth_seed"), style, first);
  }
  const fs::path root = spec;
  if (!fs::is_directory(root)) throw IngestionError("dataset root not found: " + root.string());
  fs::path split_path = c.str("split");
  if (split_path.empty() && fs::exists(root / "split.csv")) split_path = root / "split.csv";
  data::ClassSplit split;
  if (!split_path.empty()) {
    split = data::load_split(split_path);
  } else {
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(root)) {
      if (e.is_directory()) names.push_back(e.path().filename().string());
    }
    std::sort(names.begin(), names.end());
    split.classes(section) = names;
  }
  if (split.classes(section).empty()) {
    throw IngestionError("no " + section_text + " classes under " + root.string());
  }
  return data::load_dataset(root, split, section);
}

fs::path cmd_pretrain(const RunConfig& c, std::ostream& log) {
  const auto enc_cfg = encoder_config(c);
  const auto dataset = resolve_dataset(c.str("data"), c, c.str("section"));
  const fs::path dir = prepare_run_dir(c);
  const std::uint64_t seed = c.u64("seed");
  Encoder<float> encoder(enc_cfg, derive_seed(seed, {0x1417ULL}));
  log << "pretrain: " << dataset.size() << " images from " << dataset.id() << ", "
      << encoder.parameter_count() << " parameters\n";
  if (c.flag("supervised")) {
    eval::SupervisedConfig sc;
    sc.epochs = c.size("epochs");
    sc.batch_size = c.size("batch_size");
    sc.lr = c.real("lr");
    sc.seed = seed;
    sc.normalization = normalization(c);
    const auto curve = eval::supervised_train(encoder, dataset, sc);
    std::ofstream csv(dir / "loss.csv");
    csv << "epoch,mean_loss,train_accuracy\n";
    char buf[96];
    for (const auto& e : curve) {
      std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g\n", e.epoch, e.mean_loss, e.train_accuracy);
      csv << buf;
      log << "  epoch " << e.epoch << " loss " << e.mean_loss << " acc " << e.train_accuracy << "\n";
    }
  } else {
    ssl::PretrainConfig pc;
    pc.epochs = c.size("epochs");
    pc.batch_size = c.size("batch_size");
    pc.lr = c.real("lr");
    pc.seed = seed;
    pc.normalization = normalization(c);
    pc.record_wall_time = c.flag("timing");
    const auto curve = ssl::pretrain(dataset, encoder, pc, [&log](const ssl::EpochRecord& r) {
      log << "  epoch " << r.epoch << " loss " << r.mean_loss << "\n";
    });
    ssl::write_loss_csv(curve, dir / "loss.csv");
  }
  save_encoder(encoder, dir / "encoder.pft");
  const auto id = encoder_id(encoder);
  write_text(dir / "lineage.txt", lineage_block("pretrain", id, "", c));
  log << "checkpoint " << id << " -> " << (dir / "encoder.pft").string() << "\n";
  return dir;
}

fs::path cmd_metatrain(const RunConfig& c, std::ostream& log) {
  const bool scratch = c.flag("from_scratch");
  if (scratch && !c.str("checkpoint").empty()) {
    throw ConfigError("--from-scratch and --checkpoint are mutually exclusive");
  }
  const std::uint64_t seed = c.u64("seed");
  std::string parent, parent_lineage;
  Encoder<float> encoder = scratch ? Encoder<float>(encoder_config(c), derive_seed(seed, {0x1417ULL}))
                                   : load_checkpoint(c);
  if (!scratch) {
    parent = encoder_id(encoder);
    parent_lineage = read_text(fs::path(c.str("checkpoint")).parent_path() / "lineage.txt");
  }
  const auto dataset = resolve_dataset(c.str("data"), c, c.str("section"));
  const fs::path dir = prepare_run_dir(c);
  meta::MetaTrainConfig mc;
  mc.way = c.size("way");
  mc.shot = c.size("shot");
  mc.queries = c.size("queries");
  mc.episodes = c.size("episodes");
  mc.lr = c.real("lr");
  mc.seed = seed;
  mc.resolution = c.size("meta_resolution");
  mc.distance = distance(c);
  mc.normalization = normalization(c);
  log << "metatrain: " << mc.way << "-way " << mc.shot << "-shot, " << mc.episodes
      << " episodes on " << dataset.id() << (scratch ? " (from scratch)" : "") << "\n";
  double window = 0;
  const auto log_rows = meta::meta_train(encoder, dataset, mc, [&](const meta::EpisodeRecord& r) {
    window += r.accuracy;
    if ((r.episode + 1) % 100 == 0) {
      log << "  episode " << r.episode + 1 << " mean accuracy " << window / 100 << "\n";
      window = 0;
    }
  });
  meta::write_meta_log_csv(log_rows, dir / "episodes.csv");
  save_encoder(encoder, dir / "encoder.pft");
  const auto id = encoder_id(encoder);
  write_text(dir / "lineage.txt", parent_lineage + lineage_block("metatrain", id, parent, c));
  log << "checkpoint " << id << " -> " << (dir / "encoder.pft").string() << "\n";
  return dir;
}

fs::path cmd_eval(const RunConfig& c, std::ostream& log) {
  Encoder<float> encoder = load_checkpoint(c);
  const auto id = encoder_id(encoder);
  const auto dataset = resolve_dataset(c.str("data"), c, c.str("section"));
  const auto protos = protocols(c);
  const fs::path dir = prepare_run_dir(c);
  const auto options = eval_options(c);
  std::vector<eval::EvalReport> reports;
  for (const auto& p : protos) {
    auto r = c.flag("no_meta") ? eval::evaluate_frozen_nn(encoder, dataset, p, id, options)
                               : eval::evaluate(encoder, dataset, p, id, options);
    log << "  " << dataset.id() << " " << p.name() << ": "
        << eval::format_cell(r.mean_accuracy, r.ci95_halfwidth) << "\n";
    reports.push_back(std::move(r));
  }
  std::string label = c.str("label");
  if (label.empty()) label = id + (c.flag("no_meta") ? " (no-meta)" : "");
  write_reports(dir, reports, label, false);
  return dir;
}

fs::path cmd_crosseval(const RunConfig& c, std::ostream& log) {
  Encoder<float> encoder = load_checkpoint(c);
  const auto id = encoder_id(encoder);
  std::vector<data::ImageDataset> targets;
  for (const auto& spec : c.list("targets")) targets.push_back(resolve_dataset(spec, c, c.str("section")));
  if (targets.empty()) throw ConfigError("crosseval needs at least one target");
  const auto protos = protocols(c);
  for (const auto& t : targets) {
    for (const auto& p : protos) meta::check_feasible(t, p.way, p.shot, p.queries);
  }
  const fs::path dir = prepare_run_dir(c);
  const auto result = eval::cross_domain_evaluate(encoder, targets, protos, id, eval_options(c));
  for (const auto& r : result.cells) {
    log << "  " << r.dataset << " " << r.protocol.name() << ": "
        << eval::format_cell(r.mean_accuracy, r.ci95_halfwidth) << "\n";
  }
  char mean[32];
  std::snprintf(mean, sizeof mean, "%.2f%%", 100 * result.grand_mean);
  log << "  average: " << mean << "\n";
  std::string label = c.str("label");
  if (label.empty()) label = id;
  write_reports(dir, result.cells, label, true);
  return dir;
}

fs::path cmd_report(const RunConfig& c, std::ostream& log) {
  const auto runs = c.list("runs");
  if (runs.empty()) throw ConfigError("report needs at least one run directory");
  std::vector<eval::TableRow> rows;
  for (const auto& run : runs) {
    const fs::path dir = run;
    const fs::path summary = dir / "summary.csv";
    if (!fs::exists(summary)) throw IngestionError("no summary.csv in " + dir.string());
    eval::TableRow row;
    row.cells = eval::read_summary_csv(summary);
    const std::string snapshot = read_text(dir / "config.txt");
    std::istringstream in(snapshot);
    std::string line;
    while (std::getline(in, line)) {
      if (line.rfind("label = ", 0) == 0) row.method = line.substr(8);
    }
    if (row.method.empty()) row.method = dir.lexically_normal().filename().string();
    if (row.method.empty()) row.method = dir.string();
    rows.push_back(std::move(row));
  }
  fs::path out = c.str("out");
  if (out.empty()) out = "report.md";
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_text(out, eval::markdown_table(rows, c.flag("average")));
  log << "report: " << rows.size() << " runs -> " << out.string() << "\n";
  return out;
}

}  // namespace protofew::cli
