#include <iostream>
#include <map>
#include <memory>

#include "CLI11.hpp"
#include "protofew/cli/commands.hpp"
#include "protofew/errors.hpp"

namespace protofew::cli {

namespace {

const char* kDescriptions[][2] = {
    {"pretrain", "self-supervised (or --supervised) encoder pretraining"},
    {"metatrain", "episodic prototype meta-training"},
    {"eval", "few-shot evaluation with confidence intervals"},
    {"crosseval", "5-way evaluation on shifted target domains"},
    {"report", "combine run summaries into one markdown table"},
};

bool is_flag(const std::string& key) {
  return key == "timing" || key == "supervised" || key == "from_scratch" || key == "no_meta" ||
         key == "average";
}

std::string dashed(std::string key) {
  for (auto& ch : key) {
    if (ch == '_') ch = '-';
  }
  return "--" + key;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"protofew: self-supervised pretraining and prototype meta-learning for few-shot classification"};
  app.require_subcommand(1);
  struct Parsed {
    std::string config_file;
    std::map<std::string, std::string> overrides;
    std::vector<std::string> runs;
  };
  std::map<std::string, std::unique_ptr<Parsed>> parsed;
  for (const auto& [name, help] : kDescriptions) {
    auto* sub = app.add_subcommand(name, help);
    auto state = std::make_unique<Parsed>();
    Parsed* p = state.get();
    sub->add_option("--config", p->config_file, "`key = value` config file (flags win)");
    const RunConfig defaults = RunConfig::defaults(name);
    for (const auto& [key, entry] : defaults.entries()) {
      const std::string help_text = entry.help + (entry.value.empty() ? "" : " [" + entry.value + "]");
      if (key == "runs") {
        sub->add_option("runs", p->runs, "run directories");
      } else if (is_flag(key)) {
        sub->add_flag_callback(dashed(key), [p, key] { p->overrides[key] = "true"; }, help_text);
      } else {
        sub->add_option_function<std::string>(
            dashed(key), [p, key](const std::string& v) { p->overrides[key] = v; }, help_text);
      }
    }
    parsed[name] = std::move(state);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << e.what() << "\n";
      return kExitOk;
    }
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  auto* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  try {
    RunConfig config = RunConfig::defaults(command);
    const Parsed& p = *parsed.at(command);
    if (!p.config_file.empty()) config.merge_file(p.config_file);
    for (const auto& [k, v] : p.overrides) config.set(k, v);
    if (!p.runs.empty()) {
      std::string joined;
      for (const auto& r : p.runs) joined += (joined.empty() ? "" : ",") + r;
      config.set("runs", joined);
    }
    std::filesystem::path result;
    if (command == "pretrain") result = cmd_pretrain(config, out);
    else if (command == "metatrain") result = cmd_metatrain(config, out);
    else if (command == "eval") result = cmd_eval(config, out);
    else if (command == "crosseval") result = cmd_crosseval(config, out);
    else result = cmd_report(config, out);
    out << "done: " << result.string() << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    const int code = exit_code_for_current_exception();
    err << "error: " << e.what() << "\n";
    return code;
  }
}

}  // namespace protofew::cli
